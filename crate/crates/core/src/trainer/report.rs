use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Statistics of one training epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean over mini-batches of the chart loss.
    pub loss: f64,
    /// Mean smallest chart error over the training set after the epoch.
    pub min_recon: f64,
    /// Mean over mini-batches of the Lipschitz regularizer.
    pub regularizer: f64,
    pub live_charts: usize,
    /// Winner counts per live chart; sums to the dataset size.
    pub usage: Vec<usize>,
    /// Original labels of charts pruned after this epoch.
    pub pruned: Vec<usize>,
}

/// Outcome of seed pretraining.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    /// Dataset index of each chart's seed.
    pub seeds: Vec<usize>,
    pub steps: usize,
    pub final_loss: f64,
    /// Per chart: `||x_α − D(D_α(E_α(E(x_α))))||`.
    pub seed_recon: Vec<f64>,
    /// Per chart: `||E_α(E(x_α)) − 0.5||_∞`.
    pub seed_center: Vec<f64>,
    /// Per chart: `p_α(x_α)`.
    pub seed_prob: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub pretrain: Option<PretrainReport>,
    pub epochs: Vec<EpochStats>,
    /// Postconditions that did not hold; training continues regardless.
    pub warnings: Vec<String>,
    pub wall_time_secs: f64,
}

impl TrainReport {
    pub fn final_min_recon(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.min_recon)
    }

    /// Everything except wall time, for reproducibility checks.
    pub fn same_run(&self, other: &TrainReport) -> bool {
        self.pretrain == other.pretrain
            && self.epochs == other.epochs
            && self.warnings == other.warnings
    }

    /// One row per epoch; usage and pruned labels are `;`-separated.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::invalid(format!("writing report CSV: {e}"));
        out.write_record([
            "epoch",
            "loss",
            "min_recon",
            "regularizer",
            "live_charts",
            "usage",
            "pruned",
        ])
        .map_err(csv_err)?;
        let join = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        for e in &self.epochs {
            out.write_record([
                e.epoch.to_string(),
                format!("{:e}", e.loss),
                format!("{:e}", e.min_recon),
                format!("{:e}", e.regularizer),
                e.live_charts.to_string(),
                join(&e.usage),
                join(&e.pruned),
            ])
            .map_err(csv_err)?;
        }
        out.flush()
            .map_err(|e| Error::invalid(format!("writing report CSV: {e}")))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
