use super::config::PredictorInput;
use super::model::CaeModel;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default relative magnitude below which a chart is removed.
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 1e-2;

/// Magnitudes of one chart relative to its reference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartHealth {
    /// Current / reference chart-decoder weight norm.
    pub decoder_ratio: f64,
    /// Current / reference chart-encoder Lipschitz product.
    pub lipschitz_ratio: f64,
}

impl ChartHealth {
    pub fn is_dead(&self, rel_threshold: f64) -> bool {
        self.decoder_ratio < rel_threshold || self.lipschitz_ratio < rel_threshold
    }
}

fn ratio(now: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        now / reference
    } else if now > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Drops column `col` from a `[rows, cols]` matrix.
fn drop_column(t: &Tensor, col: usize) -> Tensor {
    let (rows, cols) = (t.rows(), t.cols());
    let data = t
        .data()
        .iter()
        .enumerate()
        .filter(|(i, _)| i % cols != col)
        .map(|(_, &x)| x)
        .collect();
    Tensor::matrix(rows, cols - 1, data).expect("at least one column remains")
}

fn drop_row(t: &Tensor, row: usize) -> Tensor {
    let (rows, cols) = (t.rows(), t.cols());
    let data = t
        .data()
        .chunks(cols)
        .enumerate()
        .filter(|(i, _)| *i != row)
        .flat_map(|(_, r)| r.to_vec())
        .collect();
    Tensor::matrix(rows - 1, cols, data).expect("at least one row remains")
}

fn drop_entry(t: &Tensor, k: usize) -> Tensor {
    let data: Vec<f64> = t
        .data()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, &x)| x)
        .collect();
    Tensor::vector(data).expect("at least one entry remains")
}

impl CaeModel {
    pub fn chart_health(&self) -> Vec<ChartHealth> {
        self.chart_magnitudes()
            .iter()
            .zip(&self.reference)
            .map(|(now, r)| ChartHealth {
                decoder_ratio: ratio(now.decoder_norm, r.decoder_norm),
                lipschitz_ratio: ratio(now.encoder_lipschitz, r.encoder_lipschitz),
            })
            .collect()
    }

    /// Charts whose decoder weight norm or encoder Lipschitz product has
    /// fallen below `rel_threshold` times its reference.
    pub fn dead_charts(&self, rel_threshold: f64) -> Vec<usize> {
        self.chart_health()
            .iter()
            .enumerate()
            .filter(|(_, h)| h.is_dead(rel_threshold))
            .map(|(a, _)| a)
            .collect()
    }

    /// Returns the model without the dead charts and their indices. The
    /// predictor loses the matching output units; softmax renormalizes over
    /// the survivors.
    pub fn prune_charts(&self, rel_threshold: f64) -> Result<(CaeModel, Vec<usize>)> {
        let removed = self.dead_charts(rel_threshold);
        let model = self.remove_charts(&removed)?;
        Ok((model, removed))
    }

    /// Like [`CaeModel::prune_charts`] but only removes decayed charts that
    /// win none of the points counted in `usage`, so the output on every
    /// counted point is preserved.
    pub fn prune_unused_charts(
        &self,
        rel_threshold: f64,
        usage: &[usize],
    ) -> Result<(CaeModel, Vec<usize>)> {
        if usage.len() != self.n_charts() {
            return Err(Error::DimensionMismatch {
                expected: self.n_charts(),
                actual: usage.len(),
            });
        }
        let removed: Vec<usize> = self
            .dead_charts(rel_threshold)
            .into_iter()
            .filter(|&a| usage[a] == 0)
            .collect();
        let model = self.remove_charts(&removed)?;
        Ok((model, removed))
    }

    /// Removes the listed charts unconditionally.
    pub fn remove_charts(&self, removed: &[usize]) -> Result<CaeModel> {
        for &a in removed {
            self.check_alpha(a)?;
        }
        if removed.is_empty() {
            return Ok(self.clone());
        }
        let keep: Vec<usize> = (0..self.n_charts())
            .filter(|a| !removed.contains(a))
            .collect();
        if keep.is_empty() {
            return Err(Error::invalid(format!(
                "pruning would remove all {} charts; at least one must survive",
                self.n_charts()
            )));
        }
        let mut layers = self.layers();
        layers.chart_encoders = keep
            .iter()
            .map(|&a| layers.chart_encoders[a].clone())
            .collect();
        layers.chart_decoders = keep
            .iter()
            .map(|&a| layers.chart_decoders[a].clone())
            .collect();
        let mut dropped: Vec<usize> = (0..self.n_charts()).filter(|a| !keep.contains(a)).collect();
        dropped.sort_unstable_by(|a, b| b.cmp(a));
        let last = layers.predictor.len() - 1;
        for &a in &dropped {
            let (w, b) = &layers.predictor[last];
            layers.predictor[last] = (drop_column(w, a), drop_entry(b, a));
            if self.config.predictor_input == PredictorInput::ZAlphaDistances {
                let (w0, b0) = &layers.predictor[0];
                layers.predictor[0] = (drop_row(w0, a), b0.clone());
            }
        }
        let mut config = self.config.clone();
        config.n_charts = keep.len();
        let labels = keep.iter().map(|&a| self.chart_labels[a]).collect();
        let reference = keep.iter().map(|&a| self.reference[a]).collect();
        let mut model = CaeModel::rebuild(config, layers, labels, reference)?;
        model.power_u = keep.iter().map(|&a| self.power_u[a].clone()).collect();
        Ok(model)
    }
}
