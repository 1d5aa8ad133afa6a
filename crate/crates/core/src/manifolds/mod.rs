//! Synthetic manifold samplers, point-cloud utilities and dataset readers.

mod cloud;
mod idx;
mod sampling;
mod surfaces;

pub use cloud::PointCloud;
pub use idx::{load_idx_images, parse_idx_images, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC};
pub use sampling::{delta_density, farthest_point_sampling, FpsResult};
pub use surfaces::{
    cat_curve_control_points, double_torus_fn, genus3_fn, TORUS_MAJOR, TORUS_MINOR,
};

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Circle,
    Sphere,
    Torus,
    DoubleTorus,
    Genus3,
    CatCurve,
}

impl ManifoldKind {
    pub const ALL: [ManifoldKind; 6] = [
        ManifoldKind::Circle,
        ManifoldKind::Sphere,
        ManifoldKind::Torus,
        ManifoldKind::DoubleTorus,
        ManifoldKind::Genus3,
        ManifoldKind::CatCurve,
    ];

    /// Dimension of the space the sampler natively works in.
    pub fn native_dim(self) -> usize {
        match self {
            ManifoldKind::Circle | ManifoldKind::CatCurve => 2,
            _ => 3,
        }
    }

    pub fn intrinsic_dim(self) -> usize {
        match self {
            ManifoldKind::Circle | ManifoldKind::CatCurve => 1,
            _ => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ManifoldKind::Circle => "circle",
            ManifoldKind::Sphere => "sphere",
            ManifoldKind::Torus => "torus",
            ManifoldKind::DoubleTorus => "double_torus",
            ManifoldKind::Genus3 => "genus3",
            ManifoldKind::CatCurve => "cat_curve",
        }
    }
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ManifoldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        ManifoldKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown manifold kind `{s}` (expected one of circle, sphere, torus, double_torus, genus3, cat_curve)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    pub ambient_dim: usize,
    pub embed_seed: u64,
    pub noise_sigma: f64,
}

impl ManifoldSpec {
    /// Noise-free spec in the kind's native dimension.
    pub fn new(kind: ManifoldKind) -> Self {
        ManifoldSpec {
            kind,
            ambient_dim: kind.native_dim(),
            embed_seed: 0,
            noise_sigma: 0.0,
        }
    }

    pub fn with_ambient(mut self, ambient_dim: usize, embed_seed: u64) -> Self {
        self.ambient_dim = ambient_dim;
        self.embed_seed = embed_seed;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.ambient_dim < self.kind.native_dim() {
            return Err(Error::invalid(format!(
                "ambient dimension {} is below the native dimension {} of {}",
                self.ambient_dim,
                self.kind.native_dim(),
                self.kind
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    /// The `[ambient, native]` matrix with orthonormal columns used to place
    /// native samples into the ambient space; `None` when no rotation applies.
    pub fn embedding(&self) -> Option<DMatrix<f64>> {
        let k = self.kind.native_dim();
        if self.ambient_dim == k {
            return None;
        }
        let m = self.ambient_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(self.embed_seed);
        let g = DMatrix::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
        let qr = g.qr();
        let (q, r) = (qr.q(), qr.r());
        // Fix column signs so the factorization is unique.
        let mut q = q.columns(0, k).into_owned();
        for j in 0..k {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        Some(q)
    }
}

/// Draws `n` points from the manifold described by `spec`.
///
/// Ground-truth intrinsic parameters are attached for the circle (angle),
/// sphere (polar, azimuth), torus (two angles) and cat curve (normalized arc
/// length).
pub fn sample(spec: &ManifoldSpec, n: usize, rng_seed: u64) -> Result<PointCloud> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let k = spec.kind.native_dim();
    let mut native = Vec::with_capacity(n * k);
    let mut params: Option<Vec<f64>> = None;
    match spec.kind {
        ManifoldKind::Circle => {
            let mut p = Vec::with_capacity(n);
            for _ in 0..n {
                let t = rng.random::<f64>() * std::f64::consts::TAU;
                native.extend_from_slice(&[t.cos(), t.sin()]);
                p.push(t);
            }
            params = Some(p);
        }
        ManifoldKind::Sphere => {
            let mut p = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let v: [f64; 3] = loop {
                    let v = [0; 3].map(|_| StandardNormal.sample(&mut rng));
                    let r: f64 = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
                    if r > 1e-12 {
                        break v.map(|x| x / r);
                    }
                };
                native.extend_from_slice(&v);
                p.push(v[2].clamp(-1.0, 1.0).acos());
                p.push(v[1].atan2(v[0]).rem_euclid(std::f64::consts::TAU));
            }
            params = Some(p);
        }
        ManifoldKind::Torus => {
            let mut p = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let (u, v) = surfaces::torus_angles(&mut rng);
                native.extend_from_slice(&surfaces::torus_point(u, v));
                p.extend_from_slice(&[u, v]);
            }
            params = Some(p);
        }
        ManifoldKind::DoubleTorus => {
            for _ in 0..n {
                native.extend_from_slice(&surfaces::sample_double_torus(&mut rng));
            }
        }
        ManifoldKind::Genus3 => {
            for _ in 0..n {
                native.extend_from_slice(&surfaces::sample_genus3(&mut rng));
            }
        }
        ManifoldKind::CatCurve => {
            let curve = surfaces::CatCurve::new();
            let mut p = Vec::with_capacity(n);
            for _ in 0..n {
                let s = rng.random::<f64>();
                native.extend_from_slice(&curve.at_arclength(s));
                p.push(s);
            }
            params = Some(p);
        }
    }

    let m = spec.ambient_dim;
    let mut points = match spec.embedding() {
        None => native,
        Some(q) => {
            let mut out = Vec::with_capacity(n * m);
            for row in native.chunks(k) {
                for i in 0..m {
                    out.push((0..k).map(|j| q[(i, j)] * row[j]).sum());
                }
            }
            out
        }
    };
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
        points
            .iter_mut()
            .for_each(|x| *x += normal.sample(&mut rng));
    }
    let mut cloud = PointCloud::new(points, m)?.with_intrinsic_dim(spec.kind.intrinsic_dim());
    if let Some(p) = params {
        cloud = cloud.with_params(p)?;
    }
    Ok(cloud)
}
