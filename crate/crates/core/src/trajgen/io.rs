//! Path spec loading and the trajectory CSV format.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{ClientId, PathSpec, TrajError, Trajectory, TrajectorySample};

pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "x_d", "y_d", "psi_d", "psi_dot_d", "kappa_d", "v_d"];

const DEFAULT_SPECS: [&str; 12] = [
    include_str!("../../../../paths/I.json"),
    include_str!("../../../../paths/II.json"),
    include_str!("../../../../paths/III.json"),
    include_str!("../../../../paths/IV.json"),
    include_str!("../../../../paths/V.json"),
    include_str!("../../../../paths/VI.json"),
    include_str!("../../../../paths/VII.json"),
    include_str!("../../../../paths/VIII.json"),
    include_str!("../../../../paths/IX.json"),
    include_str!("../../../../paths/X.json"),
    include_str!("../../../../paths/XI.json"),
    include_str!("../../../../paths/XII.json"),
];

/// The twelve tuned client tracks, ordered I..XII.
pub fn default_specs() -> Vec<PathSpec> {
    DEFAULT_SPECS
        .iter()
        .map(|s| serde_json::from_str(s).expect("embedded path spec is valid"))
        .collect()
}

/// Loads every `*.json` spec in `dir`, ordered by client id.
pub fn load_specs(dir: &Path) -> Result<Vec<PathSpec>, TrajError> {
    let mut specs = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let spec: PathSpec = serde_json::from_slice(&fs::read(&path)?)?;
            spec.validate()?;
            specs.push(spec);
        }
    }
    specs.sort_by_key(|s| s.id);
    if let Some(w) = specs.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(TrajError::InvalidSpec(format!("duplicate spec for client {}", w[0].id)));
    }
    Ok(specs)
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<(), TrajError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for s in &traj.samples {
        w.write_record(
            [s.t, s.x_d, s.y_d, s.psi_d, s.psi_dot_d, s.kappa_d, s.v_d].map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory written by [`write_trajectory_csv`]. Length is
/// recomputed from the polyline, so it is only approximate.
pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Trajectory, TrajError> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(TRAJECTORY_HEADER) {
        return Err(TrajError::Malformed(format!("unexpected header {:?}", r.headers()?)));
    }
    let mut samples = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64, TrajError> {
            rec[i]
                .parse()
                .map_err(|_| TrajError::Malformed(format!("bad number {:?}", &rec[i])))
        };
        samples.push(TrajectorySample {
            t: f(0)?,
            x_d: f(1)?,
            y_d: f(2)?,
            psi_d: f(3)?,
            psi_dot_d: f(4)?,
            kappa_d: f(5)?,
            v_d: f(6)?,
        });
    }
    if samples.len() < 2 {
        return Err(TrajError::Malformed("need at least two samples".into()));
    }
    let dt = samples[1].t - samples[0].t;
    let total_length = samples
        .windows(2)
        .map(|w| (w[1].x_d - w[0].x_d).hypot(w[1].y_d - w[0].y_d))
        .sum();
    let duration = samples.last().unwrap().t - samples[0].t;
    Ok(Trajectory {
        samples,
        dt,
        total_length,
        duration,
    })
}

impl ClientId {
    /// File stem used for per-client outputs, e.g. `client_IV`.
    pub fn file_stem(self) -> String {
        format!("client_{}", self.roman())
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;

    #[test]
    fn csv_roundtrip_is_exact() {
        let traj = generate_path(&PathSpec::circle(ClientId::new(5).unwrap(), 1.0, 1.0), 0.05).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x_d,y_d,psi_d,psi_dot_d,kappa_d,v_d\n"));
        assert!(!text.contains('\r'));
        let back = read_trajectory_csv(buf.as_slice()).unwrap();
        assert_eq!(back.samples, traj.samples);
    }

    #[test]
    fn default_specs_cover_all_clients() {
        let specs = default_specs();
        let ids: Vec<_> = specs.iter().map(|s| s.id).collect();
        assert_eq!(ids, ClientId::all().collect::<Vec<_>>());
        assert!(specs.iter().all(|s| s.validate().is_ok() && s.targets.is_some()));
    }

    #[test]
    fn load_specs_reads_directory() {
        let dir = tempfile::tempdir().unwrap();
        for spec in default_specs().iter().take(3) {
            let path = dir.path().join(format!("{}.json", spec.id));
            std::fs::write(path, serde_json::to_string_pretty(spec).unwrap()).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let specs = load_specs(dir.path()).unwrap();
        assert_eq!(specs, default_specs()[..3].to_vec());
    }
}
