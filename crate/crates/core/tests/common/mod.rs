#![allow(dead_code)]

use std::f64::consts::PI;

use cae_core::manifolds::PointCloud;
use cae_core::simplicial::{delaunay_2d, SimplicialComplex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Structured grid on `[0, 1]²` with `k × k` cells, each cut along a
/// diagonal; `alternate` flips the diagonal in a checkerboard pattern.
pub fn grid(k: usize, alternate: bool) -> SimplicialComplex {
    let idx = |i: usize, j: usize| i * (k + 1) + j;
    let mut vertices = Vec::new();
    for i in 0..=k {
        for j in 0..=k {
            vertices.push(vec![i as f64 / k as f64, j as f64 / k as f64]);
        }
    }
    let mut simplices = Vec::new();
    for i in 0..k {
        for j in 0..k {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            if alternate && (i + j) % 2 == 1 {
                simplices.push(vec![a, b, d]);
                simplices.push(vec![b, c, d]);
            } else {
                simplices.push(vec![a, b, c]);
                simplices.push(vec![a, c, d]);
            }
        }
    }
    SimplicialComplex::new(vertices, simplices).unwrap()
}

pub fn random_points(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| [r.random::<f64>(), r.random::<f64>()])
        .collect()
}

pub fn random_delaunay(n: usize, seed: u64) -> SimplicialComplex {
    delaunay_2d(&random_points(n, seed)).unwrap()
}

/// Named fixture complexes: 1-D paths, 2-D grids and random Delaunay
/// triangulations.
pub fn fixtures() -> Vec<(&'static str, SimplicialComplex)> {
    let mut r = rng(17);
    let uneven: Vec<f64> = (0..40).map(|_| r.random::<f64>() * 3.0 - 1.0).collect();
    vec![
        (
            "path-uniform-21",
            SimplicialComplex::path(&(0..21).map(|i| i as f64 * 0.05).collect::<Vec<_>>()).unwrap(),
        ),
        ("path-random-40", SimplicialComplex::path(&uneven).unwrap()),
        ("grid-8x8", grid(8, false)),
        ("grid-6x6-alternating", grid(6, true)),
        ("delaunay-20", random_delaunay(20, 1)),
        ("delaunay-200", random_delaunay(200, 2)),
    ]
}

/// Uniform point of a random simplex (flat Dirichlet weights).
pub fn probe<R: Rng>(c: &SimplicialComplex, r: &mut R) -> Vec<f64> {
    let s = r.random_range(0..c.n_simplices());
    let mut cuts: Vec<f64> = (0..c.dim()).map(|_| r.random::<f64>()).collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    let xi: Vec<f64> = cuts.windows(2).map(|w| w[1] - w[0]).collect();
    c.point(s, &xi)
}

pub fn random_values<R: Rng>(n: usize, q: usize, r: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..q).map(|_| r.random::<f64>() * 4.0 - 2.0).collect())
        .collect()
}

/// Evenly spaced points on the unit circle at most `spacing` apart.
pub fn circle_cloud(spacing: f64) -> PointCloud {
    let n = (2.0 * PI / spacing).ceil() as usize;
    let rows: Vec<[f64; 2]> = (0..n)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            [t.cos(), t.sin()]
        })
        .collect();
    PointCloud::from_rows(&rows).unwrap()
}

pub fn arc(lo: f64, hi: f64, n: usize) -> PointCloud {
    let rows: Vec<[f64; 2]> = (0..n)
        .map(|k| {
            let t = lo + (hi - lo) * k as f64 / (n - 1) as f64;
            [t.cos(), t.sin()]
        })
        .collect();
    PointCloud::from_rows(&rows).unwrap()
}

/// `(d, τ, C, ε, ν, β₁, β₂, β₁(ln β₂ − ln ν), ⌈·⌉)` from
/// `tests/oracles/sample_bound.py` at 50 digits.
#[rustfmt::skip]
pub const BOUND_ORACLE: [(usize, f64, f64, f64, f64, f64, f64, f64, u64); 28] = [
    (1, 1.0, 4.0, 0.05, 0.01, 320.00625018311143, 640.00312502288837, 3541.3950070037195, 3542),
    (1, 1.0, 4.0, 0.05, 0.1, 320.00625018311143, 640.00312502288837, 2804.553385667164, 2805),
    (1, 1.0, 4.0, 0.05, 0.5, 320.00625018311143, 640.00312502288837, 2289.5231944065927, 2290),
    (1, 1.0, 4.0, 0.1, 0.01, 160.01250146503451, 320.00625018311143, 1659.8913982276038, 1660),
    (1, 1.0, 4.0, 0.1, 0.1, 160.01250146503451, 320.00625018311143, 1291.4489976615274, 1292),
    (1, 1.0, 4.0, 0.1, 0.5, 160.01250146503451, 320.00625018311143, 1033.9188113402839, 1034),
    (1, 1.0, 4.0, 0.3, 0.01, 53.370872930520258, 106.68542161196316, 495.01776609859163, 496),
    (1, 1.0, 4.0, 0.3, 0.1, 53.370872930520258, 106.68542161196316, 372.12678968869624, 373),
    (1, 1.0, 4.0, 0.3, 0.5, 53.370872930520258, 106.68542161196316, 286.22968337461408, 287),
    (2, 1.0, 4.0, 0.05, 0.01, 25601.000039064026, 102401.00000976572, 413246.78419966479, 413247),
    (2, 1.0, 4.0, 0.05, 0.1, 25601.000039064026, 102401.00000976572, 354298.30314397598, 354299),
    (2, 1.0, 4.0, 0.05, 0.5, 25601.000039064026, 102401.00000976572, 313095.08308487945, 313096),
    (2, 1.0, 4.0, 0.1, 0.01, 6401.0001562744179, 25601.000039064026, 94450.32189299549, 94451),
    (2, 1.0, 4.0, 0.1, 0.1, 6401.0001562744179, 25601.000039064026, 79711.474352905458, 79712),
    (2, 1.0, 4.0, 0.1, 0.5, 6401.0001562744179, 25601.000039064026, 69409.462023900809, 69410),
    (2, 1.0, 4.0, 0.3, 0.01, 712.112519341435, 2845.4447961305841, 8943.1682332130113, 8944),
    (2, 1.0, 4.0, 0.3, 0.1, 712.112519341435, 2845.4447961305841, 7303.468561642989, 7304),
    (2, 1.0, 4.0, 0.3, 0.5, 712.112519341435, 2845.4447961305841, 6157.3676750959219, 6158),
    (3, 1.0, 4.0, 0.05, 0.01, 2048120.005859642, 16384240.002929721, 43454963.477821252, 43454964),
    (3, 1.0, 4.0, 0.05, 0.1, 2048120.005859642, 16384240.002929721, 38738992.883665963, 38738993),
    (3, 1.0, 4.0, 0.05, 0.5, 2048120.005859642, 16384240.002929721, 35442670.897020703, 35442671),
    (3, 1.0, 4.0, 0.1, 0.01, 256060.01172088661, 2048120.005859642, 4900374.8602745975, 4900375),
    (3, 1.0, 4.0, 0.1, 0.1, 256060.01172088661, 2048120.005859642, 4310774.8943742034, 4310775),
    (3, 1.0, 4.0, 0.1, 0.5, 256060.01172088661, 2048120.005859642, 3898662.2036522884, 3898663),
    (3, 1.0, 4.0, 0.3, 0.01, 9501.5166955010943, 75891.869437189482, 150525.26055172917, 150526),
    (3, 1.0, 4.0, 0.3, 0.1, 9501.5166955010943, 75891.869437189482, 128647.20984783431, 128648),
    (3, 1.0, 4.0, 0.3, 0.5, 9501.5166955010943, 75891.869437189482, 113355.10865246927, 113356),
    (1, 1.0, PI, 0.4, 0.1, 31.455270228880017, 62.851497234561841, 202.67762526663507, 203),
];

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
