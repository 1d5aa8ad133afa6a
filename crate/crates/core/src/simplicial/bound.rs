use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of uniform samples after which a `d`-manifold with reach `tau`
/// and volume `C · vol(B^d_1)` is `ε/2`-dense with probability `1 − ν`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBound {
    pub d: usize,
    pub tau: f64,
    pub volume_ratio: f64,
    pub epsilon: f64,
    pub nu: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// `β₁(ln β₂ + ln(1/ν))` before rounding up.
    pub n_real: f64,
    pub n_required: u64,
}

/// `C · (ε/a)^{−d} · (1 − (ε/(2a τ))²)^{−d/2}`, evaluated in log space.
fn beta(d: f64, tau: f64, c: f64, eps: f64, a: f64) -> f64 {
    let r = eps / (2.0 * a * tau);
    (c.ln() - d * (eps / a).ln() - 0.5 * d * (-r * r).ln_1p()).exp()
}

/// `β₁ = C(ε/4)^{−d}(1 − (ε/8τ)²)^{−d/2}`,
/// `β₂ = C(ε/8)^{−d}(1 − (ε/16τ)²)^{−d/2}` and
/// `n = ⌈β₁(ln β₂ + ln(1/ν))⌉`.
pub fn sample_bound(d: usize, tau: f64, c: f64, epsilon: f64, nu: f64) -> Result<SampleBound> {
    if d == 0 {
        return Err(Error::invalid("intrinsic dimension must be positive"));
    }
    if !(tau > 0.0 && tau.is_finite()) || !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("tau and C must be positive and finite"));
    }
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::invalid(format!("nu must lie in (0, 1), got {nu}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if epsilon >= tau / 2.0 {
        return Err(Error::invalid(format!(
            "the density bound requires epsilon < tau/2, got epsilon = {epsilon} and tau = {tau}"
        )));
    }
    let df = d as f64;
    let beta1 = beta(df, tau, c, epsilon, 4.0);
    let beta2 = beta(df, tau, c, epsilon, 8.0);
    let n_real = beta1 * (beta2.ln() - nu.ln());
    let n = n_real.ceil();
    if !(n.is_finite() && n < u64::MAX as f64) {
        return Err(Error::invalid(format!(
            "required sample count {n_real:e} does not fit in 64 bits"
        )));
    }
    Ok(SampleBound {
        d,
        tau,
        volume_ratio: c,
        epsilon,
        nu,
        beta1,
        beta2,
        n_real,
        n_required: (n as u64).max(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_in_epsilon() {
        let b: Vec<SampleBound> = [0.4, 0.2, 0.1]
            .iter()
            .map(|&e| sample_bound(2, 1.0, 4.0, e, 0.1).unwrap())
            .collect();
        for w in b.windows(2) {
            assert!(w[1].beta1 > w[0].beta1 && w[1].beta2 > w[0].beta2);
            assert!(w[1].n_required > w[0].n_required);
        }
    }

    #[test]
    fn hypotheses_are_enforced() {
        assert!(sample_bound(1, 1.0, 1.0, 0.5, 0.1).is_err());
        assert!(sample_bound(1, 1.0, 1.0, 0.6, 0.1).is_err());
        assert!(sample_bound(1, 1.0, 1.0, 0.1, 1.0).is_err());
        assert!(sample_bound(0, 1.0, 1.0, 0.1, 0.5).is_err());
        assert!(sample_bound(1, 1.0, -1.0, 0.1, 0.5).is_err());
    }
}
