use super::PointCloud;
use crate::error::{Error, Result};

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy max-min selection result.
#[derive(Clone, Debug, PartialEq)]
pub struct FpsResult {
    pub indices: Vec<usize>,
    /// Largest distance from any point to its nearest selected point.
    pub min_dist: f64,
}

/// Farthest point sampling starting from `start`. Ties go to the lowest
/// index.
pub fn farthest_point_sampling(x: &PointCloud, n: usize, start: usize) -> Result<FpsResult> {
    if n > x.n() || n == 0 {
        return Err(Error::invalid(format!(
            "cannot select {n} seeds from {} points",
            x.n()
        )));
    }
    if start >= x.n() {
        return Err(Error::IndexOutOfRange {
            what: "points",
            index: start,
            len: x.n(),
        });
    }
    let mut nearest: Vec<f64> = (0..x.n()).map(|i| dist2(x.row(i), x.row(start))).collect();
    let mut indices = vec![start];
    while indices.len() < n {
        let mut best = 0;
        for i in 1..nearest.len() {
            if nearest[i] > nearest[best] {
                best = i;
            }
        }
        indices.push(best);
        let b = x.row(best);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist2(x.row(i), b));
        }
    }
    let min_dist = nearest.iter().cloned().fold(0.0, f64::max).sqrt();
    Ok(FpsResult { indices, min_dist })
}

/// Empirical density radius: the largest distance from a probe to its
/// nearest point of `x`.
pub fn delta_density(x: &PointCloud, probes: &PointCloud) -> Result<f64> {
    if x.m() != probes.m() {
        return Err(Error::DimensionMismatch {
            expected: x.m(),
            actual: probes.m(),
        });
    }
    let mut worst: f64 = 0.0;
    for p in probes.rows() {
        let near = x.rows().map(|q| dist2(p, q)).fold(f64::INFINITY, f64::min);
        worst = worst.max(near);
    }
    Ok(worst.sqrt())
}
