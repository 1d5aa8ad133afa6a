//! Constructive side of the chart picture: simplicial complexes, exact
//! compilation of piecewise-linear maps into ReLU networks, local charts
//! built from samples, and the sample-count bound for dense coverage.
//!
//! Hat functions on a vertex whose first ring is not convex cannot be
//! written as a single `max{min_i ℓ_i, 0}`; [`hat_terms`] splits them into
//! a max of mins over the cells cut out by the ring pieces.

mod bound;
mod chart;
mod compile;
mod complex;
mod delaunay;
mod network;

pub use bound::{sample_bound, SampleBound};
pub use chart::{build_local_chart, LocalChart, LogMap};
pub use compile::{
    compile_pl, depth_bound, hat_function, hat_function_literal, hat_terms, param_bound,
    CompileReport, CompiledPl,
};
pub use complex::{SimplicialComplex, BARY_SLACK, DET_TOL};
pub use delaunay::{delaunay_2d, in_circle};
pub use network::{relu_min2, relu_min_tree, LayerActivation, ReluNetwork, SparseLayer};

use crate::cae::CaeModel;
use crate::error::{Error, Result};
use crate::manifolds::PointCloud;

/// Piecewise-linear indicator: 1 on `[0, ε² + μ]`, linear down to 0 on
/// `[ε² + μ, ε² + 2μ]` and 0 beyond (and 1 for negative `t`).
pub fn chi_indicator(t: f64, epsilon: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::invalid(format!("mu must be positive, got {mu}")));
    }
    let e2 = epsilon * epsilon;
    Ok(if t <= e2 + mu {
        1.0
    } else if t >= e2 + 2.0 * mu {
        0.0
    } else {
        (e2 + 2.0 * mu - t) / mu
    })
}

/// The same bump as two ReLUs:
/// `(1/μ)ReLU(−t + ε² + 2μ) − (1/μ)ReLU(−t + ε² + μ)`.
pub fn chi_indicator_relu(t: f64, epsilon: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::invalid(format!("mu must be positive, got {mu}")));
    }
    let e2 = epsilon * epsilon;
    let relu = |x: f64| x.max(0.0);
    Ok(relu(-t + e2 + 2.0 * mu) / mu - relu(-t + e2 + mu) / mu)
}

/// Anything with an encoder/decoder pair.
pub trait RoundTrip {
    fn round_trip(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl RoundTrip for LocalChart {
    fn round_trip(&self, x: &[f64]) -> Result<Vec<f64>> {
        LocalChart::round_trip(self, x)
    }
}

impl RoundTrip for CaeModel {
    fn round_trip(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(x, 1)?.y)
    }
}

/// `(sup_x ‖x − D∘E(x)‖, sup ≤ ε)` over the probes.
pub fn verify_faithfulness<M: RoundTrip + ?Sized>(
    model: &M,
    probes: &PointCloud,
    epsilon: f64,
) -> Result<(f64, bool)> {
    verify_faithfulness_with(|x| model.round_trip(x), probes, epsilon)
}

/// As [`verify_faithfulness`] for a bare round-trip closure `x ↦ D(E(x))`.
pub fn verify_faithfulness_with<F>(
    round_trip: F,
    probes: &PointCloud,
    epsilon: f64,
) -> Result<(f64, bool)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut sup = 0.0f64;
    for x in probes.rows() {
        let y = round_trip(x)?;
        if y.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: y.len(),
            });
        }
        let e = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        sup = if e.is_nan() { f64::NAN } else { sup.max(e) };
    }
    Ok((sup, sup <= epsilon))
}
