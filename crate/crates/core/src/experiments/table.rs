//! Result tables and their CSV and JSON files.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentError, ExperimentSpec, LocalVsFed, SweepResult};
use crate::federation::{RoundReport, Weighting};
use crate::trajgen::ClientId;

/// Controller configuration a row was measured with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "fb")]
    Fb,
    #[serde(rename = "fb+analytic")]
    FbAnalytic,
    #[serde(rename = "fb+centralized")]
    FbCentralized,
    #[serde(rename = "fb+federated")]
    FbFederated,
    #[serde(rename = "fb+local")]
    FbLocal,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Self::Fb => "fb",
            Self::FbAnalytic => "fb+analytic",
            Self::FbCentralized => "fb+centralized",
            Self::FbFederated => "fb+federated",
            Self::FbLocal => "fb+local",
        }
    }

    pub(crate) fn dir_name(self) -> &'static str {
        match self {
            Self::Fb => "fb",
            Self::FbAnalytic => "fb_analytic",
            Self::FbCentralized => "fb_centralized",
            Self::FbFederated => "fb_federated",
            Self::FbLocal => "fb_local",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MteRow {
    pub client: ClientId,
    pub variant: Variant,
    /// `None` marks a diverged lap.
    pub mte: Option<f64>,
}

/// Run metadata written next to every result set as `run_meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub command: String,
    pub seed: u64,
    pub rounds: Option<usize>,
    pub epochs: Option<usize>,
    pub split: Option<String>,
    pub weighting: Weighting,
    pub accumulate_data: bool,
    /// SHA-256 over the canonical JSON of the settings and path specs.
    pub config_hash: String,
    pub version: String,
    /// Set when at least one lap diverged and its cells are empty.
    pub partial: bool,
}

impl RunMeta {
    pub(crate) fn new(
        command: &str,
        spec: &ExperimentSpec,
        rounds: Option<usize>,
        epochs: Option<usize>,
        split: Option<String>,
    ) -> Self {
        let settings = serde_json::json!({
            "command": command,
            "seed": spec.seed,
            "rounds": rounds,
            "epochs": epochs,
            "split": split,
            "weighting": spec.weighting,
            "accumulate_data": spec.accumulate_data,
            "specs": spec.specs,
        });
        let hash = Sha256::digest(settings.to_string().as_bytes());
        Self {
            command: command.to_string(),
            seed: spec.seed,
            rounds,
            epochs,
            split,
            weighting: spec.weighting,
            accumulate_data: spec.accumulate_data,
            config_hash: hash.iter().map(|b| format!("{b:02x}")).collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            partial: false,
        }
    }
}

/// MTE rows keyed by `(client, variant)` plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<MteRow>,
    pub meta: RunMeta,
}

impl ResultTable {
    pub fn new(rows: Vec<MteRow>, mut meta: RunMeta) -> Self {
        meta.partial |= rows.iter().any(|r| r.mte.is_none());
        Self { rows, meta }
    }

    pub fn get(&self, client: ClientId, variant: Variant) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.client == client && r.variant == variant)
            .and_then(|r| r.mte)
    }

    pub fn is_partial(&self) -> bool {
        self.meta.partial
    }

    /// Long format: `client,variant,mte,status`.
    pub fn write_csv(&self, path: &Path) -> Result<(), ExperimentError> {
        let mut w = writer(path)?;
        w.write_record(["client", "variant", "mte", "status"])?;
        for r in &self.rows {
            let (mte, status) = cell(r.mte);
            w.write_record([r.client.roman(), r.variant.label(), &mte, status])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_meta(&self, dir: &Path) -> Result<(), ExperimentError> {
        let f = BufWriter::new(File::create(dir.join("run_meta.json"))?);
        serde_json::to_writer_pretty(f, &self.meta)?;
        Ok(())
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>, ExperimentError> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

fn cell(v: Option<f64>) -> (String, &'static str) {
    match v {
        Some(x) => (x.to_string(), "ok"),
        None => (String::new(), "diverged"),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per client per round: `round,client,role,sample_count,train_loss,mte,status`.
pub(crate) fn write_rounds_csv(path: &Path, reports: &[RoundReport]) -> Result<(), ExperimentError> {
    let mut w = writer(path)?;
    w.write_record(["round", "client", "role", "sample_count", "train_loss", "mte", "status"])?;
    for r in reports {
        let round = (r.round + 1).to_string();
        for c in &r.clients {
            let status = if c.diverged { "diverged" } else { "ok" };
            w.write_record([
                round.as_str(),
                c.client.roman(),
                "train",
                &c.sample_count.to_string(),
                &opt(c.train_loss),
                &opt(c.lap_mte),
                status,
            ])?;
        }
        for t in &r.test {
            let (mte, status) = cell(t.mte);
            w.write_record([round.as_str(), t.client.roman(), "test", "", "", &mte, status])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `epochs,round,mean_mte,std_mte,runs`.
pub(crate) fn write_sweep_csv(path: &Path, result: &SweepResult) -> Result<(), ExperimentError> {
    let mut w = writer(path)?;
    w.write_record(["epochs", "round", "mean_mte", "std_mte", "runs"])?;
    for (e, curve) in &result.curves {
        for (g, p) in curve.iter().enumerate() {
            w.write_record([
                e.to_string(),
                (g + 1).to_string(),
                p.mean.to_string(),
                p.std.to_string(),
                p.runs.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `epochs,run,round,mean_test_mte`.
pub(crate) fn write_sweep_runs_csv(path: &Path, result: &SweepResult) -> Result<(), ExperimentError> {
    let mut w = writer(path)?;
    w.write_record(["epochs", "run", "round", "mean_test_mte"])?;
    for ((e, run), curve) in &result.runs {
        for (g, m) in curve.iter().enumerate() {
            w.write_record([e.to_string(), run.to_string(), (g + 1).to_string(), opt(*m)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `local_client,test_client,mte_local,mte_fed,ratio`.
pub(crate) fn write_ratio_csv(path: &Path, result: &LocalVsFed) -> Result<(), ExperimentError> {
    let mut w = writer(path)?;
    w.write_record(["local_client", "test_client", "mte_local", "mte_fed", "ratio"])?;
    for (&(local, test), &mte) in &result.local {
        w.write_record([
            local.roman(),
            test.roman(),
            &opt(mte),
            &opt(result.federated.get(&test).copied().flatten()),
            &opt(result.ratio(local, test)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
