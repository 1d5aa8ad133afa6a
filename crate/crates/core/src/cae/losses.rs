use nalgebra::DMatrix;

use super::config::OrientationReg;
use super::model::{CaeModel, ForwardVars};
use crate::error::{Error, Result};
use crate::manifolds::PointCloud;
use crate::tensor::{Graph, Tensor, Var};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Power-iteration steps per spectral norm during training.
pub const POWER_ITERS: usize = 5;

/// Batch mean of the smallest chart error plus the cross-entropy between
/// the detached chart scores `ell` and the predictor output `p`.
pub fn loss(g: &mut Graph, fv: &ForwardVars) -> Result<Var> {
    let min_e = g.min_axis(fv.e, 1)?;
    let recon = g.mean(min_e);
    let p = g.clamp_min(fv.p, PROB_FLOOR);
    let logp = g.log(p);
    let weighted = g.mul(fv.ell, logp)?;
    let total = g.sum(weighted);
    let ce = g.scale(total, -1.0 / fv.batch as f64);
    g.add(recon, ce)
}

impl CaeModel {
    /// Product of the spectral norms of chart α's encoder weights, recorded
    /// with the persistent power-iteration state.
    fn chart_lipschitz(&mut self, g: &mut Graph, alpha: usize, iters: usize) -> Result<Var> {
        let mut prod: Option<Var> = None;
        for (k, &w) in self.chart_encoders[alpha].weights.iter().enumerate() {
            let wv = g.param(&self.store, w);
            let s = g.spectral_norm(wv, &mut self.power_u[alpha][k], iters)?;
            prod = Some(match prod {
                None => s,
                Some(p) => g.mul(p, s)?,
            });
        }
        Ok(prod.expect("every network has a layer"))
    }

    /// Largest chart Lipschitz bound plus the mean bound over charts. Only
    /// chart encoders are penalized.
    pub fn lipschitz_regularizer(&mut self, g: &mut Graph) -> Result<Var> {
        self.lipschitz_regularizer_with(g, POWER_ITERS)
    }

    pub fn lipschitz_regularizer_with(&mut self, g: &mut Graph, iters: usize) -> Result<Var> {
        let mut per_chart = Vec::with_capacity(self.n_charts());
        for a in 0..self.n_charts() {
            let p = self.chart_lipschitz(g, a, iters)?;
            per_chart.push(g.reshape(p, &[1])?);
        }
        let stacked = if per_chart.len() == 1 {
            per_chart[0]
        } else {
            g.concat(&per_chart, 0)?
        };
        let mx = g.max_axis(stacked, 0)?;
        let mean = g.mean(stacked);
        g.add(mx, mean)
    }

    /// Seed loss for chart α at one point: reconstruction through α, the
    /// distance of the chart code from the box center, and the chart-α
    /// log-probability term. `literal_sign` keeps `+log p_α` instead of
    /// `-log p_α`.
    pub fn pretrain_loss(
        &self,
        g: &mut Graph,
        seed_point: &[f64],
        alpha: usize,
        literal_sign: bool,
    ) -> Result<Var> {
        self.check_alpha(alpha)?;
        let m = self.config.m;
        if seed_point.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: seed_point.len(),
            });
        }
        let s = &self.store;
        let x = g.constant(&Tensor::matrix(1, m, seed_point.to_vec())?);
        let z = self.encoder.forward(g, s, x)?;
        let za = self.chart_encoders[alpha].forward(g, s, z)?;
        let wa = self.chart_decoders[alpha].forward(g, s, za)?;
        let y = self.decoder.forward(g, s, wa)?;
        let diff = g.sub(y, x)?;
        let sq = g.square(diff);
        let recon = g.sum(sq);
        let off = g.add_scalar(za, -0.5);
        let off_sq = g.square(off);
        let center = g.sum(off_sq);
        let fv = self.forward(g, x)?;
        let pa = g.slice(fv.p, 1, alpha, 1)?;
        let pa = g.clamp_min(pa, PROB_FLOOR);
        let logp = g.log(pa);
        let logp = g.sum(logp);
        let pred = if literal_sign { logp } else { g.neg(logp) };
        let t = g.add(recon, center)?;
        g.add(t, pred)
    }

    /// Sum over charts of the inner products between chart codes and the
    /// PCA coordinates of each chart's seed neighborhood. `Off` yields 0;
    /// `NegAlignment` negates the sum.
    pub fn orientation_regularizer(
        &self,
        g: &mut Graph,
        neighborhoods: &[PointCloud],
        frames: &[PcaFrame],
        mode: OrientationReg,
    ) -> Result<Var> {
        if neighborhoods.len() != frames.len() || frames.len() != self.n_charts() {
            return Err(Error::invalid(format!(
                "{} neighborhoods and {} frames for {} charts",
                neighborhoods.len(),
                frames.len(),
                self.n_charts()
            )));
        }
        let mut total = g.constant(&Tensor::scalar(0.0));
        if mode == OrientationReg::Off {
            return Ok(total);
        }
        let s = &self.store;
        for (a, (nb, fr)) in neighborhoods.iter().zip(frames).enumerate() {
            let x = g.constant(&nb.to_tensor());
            let z = self.encoder.forward(g, s, x)?;
            let za = self.chart_encoders[a].forward(g, s, z)?;
            let target: Vec<f64> = nb.rows().flat_map(|r| fr.embed(r)).collect();
            let tv = g.constant(&Tensor::matrix(nb.n(), self.config.d, target)?);
            let prod = g.mul(za, tv)?;
            let sum = g.sum(prod);
            total = g.add(total, sum)?;
        }
        Ok(match mode {
            OrientationReg::NegAlignment => g.neg(total),
            _ => total,
        })
    }
}

/// Affine map `x ↦ (1/C) W x + b` from a neighborhood to PCA coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaFrame {
    /// `[d, m]` row-major; rows are orthonormal principal directions.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
    pub d: usize,
    pub m: usize,
}

impl PcaFrame {
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|i| {
                let row = &self.w[i * self.m..(i + 1) * self.m];
                row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / self.c + self.b[i]
            })
            .collect()
    }

    pub fn direction(&self, i: usize) -> &[f64] {
        &self.w[i * self.m..(i + 1) * self.m]
    }
}

/// PCA frame of a neighborhood: the top `d` principal directions of the
/// mean-centered points, `C` = largest singular value / 0.5, and `b` placing
/// `center` at `[0.5]^d`.
pub fn pca_frame(neighborhood: &PointCloud, d: usize, center: &[f64]) -> Result<PcaFrame> {
    let (n, m) = (neighborhood.n(), neighborhood.m());
    if d == 0 || d > m || n < d + 1 || center.len() != m {
        return Err(Error::invalid(format!(
            "PCA frame of dimension {d} needs at least {} points in R^{m} and a center of length {m}",
            d + 1
        )));
    }
    let mut mean = vec![0.0; m];
    for r in neighborhood.rows() {
        mean.iter_mut().zip(r).for_each(|(a, x)| *a += x / n as f64);
    }
    let centered = DMatrix::from_fn(n, m, |i, j| neighborhood.row(i)[j] - mean[j]);
    let svd = centered.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    if order.len() < d || svd.singular_values[order[d - 1]] <= 1e-12 {
        return Err(Error::RankDeficient(format!(
            "neighborhood of {n} points spans fewer than {d} directions"
        )));
    }
    let mut w = Vec::with_capacity(d * m);
    for &k in &order[..d] {
        let mut row: Vec<f64> = (0..m).map(|j| vt[(k, j)]).collect();
        // Make the largest-magnitude entry positive so the frame is unique.
        let pivot = (0..m).fold(0, |best, j| {
            if row[j].abs() > row[best].abs() {
                j
            } else {
                best
            }
        });
        if row[pivot] < 0.0 {
            row.iter_mut().for_each(|x| *x = -*x);
        }
        w.extend(row);
    }
    let c = svd.singular_values[order[0]] / 0.5;
    let b = (0..d)
        .map(|i| {
            0.5 - w[i * m..(i + 1) * m]
                .iter()
                .zip(center)
                .map(|(a, x)| a * x)
                .sum::<f64>()
                / c
        })
        .collect();
    Ok(PcaFrame { w, b, c, d, m })
}
