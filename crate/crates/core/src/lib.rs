//! Federated learning of a neural feedforward steering controller for
//! kinematic-bicycle vehicles: reference tracks, plant, controller, network,
//! federated averaging and the experiment drivers built on them.

pub mod control;
pub mod experiments;
pub mod federation;
pub mod neuralff;
pub mod seed;
pub mod trajgen;
pub mod vehicle;

pub use control::{ControlGains, FeedforwardSource, LapLog};
pub use federation::{FederationConfig, ModelUpdate, RoundReport, Weighting, World};
pub use neuralff::{MlpModel, Sample, TrainConfig};
pub use trajgen::{ClientId, PathSpec, Trajectory};
pub use vehicle::{ControlInput, VehicleParams, VehicleState};
