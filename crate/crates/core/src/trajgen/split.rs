//! Train/test client splits for the repeated experiment runs.

use std::collections::BTreeSet;

use super::{ClientId, TrajError};

/// Held-out clients for runs 1 through 10, by client number.
const TEST_CLIENTS: [[u8; 4]; 10] = [
    [1, 9, 10, 11],
    [3, 4, 6, 9],
    [2, 8, 9, 12],
    [2, 6, 7, 8],
    [5, 10, 11, 12],
    [1, 2, 9, 11],
    [4, 6, 7, 9],
    [7, 9, 10, 12],
    [1, 2, 9, 11],
    [4, 7, 8, 9],
];

/// Number of scheduled runs.
pub const RUN_COUNT: usize = TEST_CLIENTS.len();

/// A disjoint partition of the twelve clients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: BTreeSet<ClientId>,
    pub test: BTreeSet<ClientId>,
}

impl Split {
    /// Builds a split from an explicit test set; every other client trains.
    pub fn from_test(test: impl IntoIterator<Item = ClientId>) -> Self {
        let test: BTreeSet<ClientId> = test.into_iter().collect();
        let train = ClientId::all().filter(|c| !test.contains(c)).collect();
        Self { train, test }
    }

    /// The proof-of-concept split: clients I, VI, VIII and XI held out.
    pub fn proof_of_concept() -> Self {
        Self::from_test([1, 6, 8, 11].map(|n| ClientId::new(n).unwrap()))
    }
}

/// Scheduled split for `run_index` in `1..=10`.
pub fn split_schedule(run_index: usize) -> Result<Split, TrajError> {
    if !(1..=RUN_COUNT).contains(&run_index) {
        return Err(TrajError::OutOfRange(run_index));
    }
    Ok(Split::from_test(
        TEST_CLIENTS[run_index - 1].map(|n| ClientId::new(n).unwrap()),
    ))
}
