use std::f64::consts::PI;

use crate::cae::pca_frame;
use crate::error::{Error, Result};
use crate::manifolds::{PointCloud, TORUS_MAJOR, TORUS_MINOR};

use super::compile::{compile_pl, CompileReport};
use super::complex::{SimplicialComplex, BARY_SLACK};
use super::delaunay::delaunay_2d;
use super::network::ReluNetwork;

/// Latent coordinates of the points of a chart around its center `p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogMap {
    /// Signed angle from `p` on the unit circle in ℝ².
    Circle,
    /// Riemannian log map of the unit sphere in ℝ³, in a fixed tangent basis.
    Sphere,
    /// Arc lengths along the two circle factors of the standard torus.
    Torus,
    /// Projection onto the top principal directions of the chart points.
    Pca { d: usize },
}

impl LogMap {
    pub fn dim(self) -> usize {
        match self {
            LogMap::Circle => 1,
            LogMap::Sphere | LogMap::Torus => 2,
            LogMap::Pca { d } => d,
        }
    }
}

fn wrap(a: f64) -> f64 {
    let t = (a + PI).rem_euclid(2.0 * PI) - PI;
    if t == -PI {
        PI
    } else {
        t
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sphere_basis(p: &[f64]) -> [[f64; 3]; 2] {
    // Gram–Schmidt on the coordinate axis least aligned with p.
    let k = (0..3)
        .min_by(|&i, &j| p[i].abs().total_cmp(&p[j].abs()))
        .expect("three");
    let mut e = [0.0; 3];
    e[k] = 1.0;
    let c = dot(&e, p);
    let mut u = [e[0] - c * p[0], e[1] - c * p[1], e[2] - c * p[2]];
    let nu = norm(&u);
    u.iter_mut().for_each(|x| *x /= nu);
    let w = [
        p[1] * u[2] - p[2] * u[1],
        p[2] * u[0] - p[0] * u[2],
        p[0] * u[1] - p[1] * u[0],
    ];
    [u, w]
}

fn torus_angles(x: &[f64]) -> (f64, f64) {
    let u = x[1].atan2(x[0]);
    let v = x[2].atan2(x[0].hypot(x[1]) - TORUS_MAJOR);
    (u, v)
}

/// Maps `x` to latent coordinates around `p`.
fn log_coords(log: LogMap, p: &[f64], x: &[f64], pca: Option<&[Vec<f64>]>) -> Vec<f64> {
    match log {
        LogMap::Circle => {
            vec![(p[0] * x[1] - p[1] * x[0]).atan2(dot(p, x))]
        }
        LogMap::Sphere => {
            let c = dot(p, x).clamp(-1.0, 1.0);
            let t: Vec<f64> = (0..3).map(|k| x[k] - c * p[k]).collect();
            let s = norm(&t);
            let theta = s.atan2(c);
            let scale = if s > 0.0 { theta / s } else { 1.0 };
            sphere_basis(p).iter().map(|e| scale * dot(e, &t)).collect()
        }
        LogMap::Torus => {
            let (pu, pv) = torus_angles(p);
            let (xu, xv) = torus_angles(x);
            let r = TORUS_MAJOR + TORUS_MINOR * pv.cos();
            vec![r * wrap(xu - pu), TORUS_MINOR * wrap(xv - pv)]
        }
        LogMap::Pca { .. } => {
            let dx = sub(x, p);
            pca.expect("PCA directions")
                .iter()
                .map(|e| dot(e, &dx))
                .collect()
        }
    }
}

/// A constructed chart: PL decoder from a triangulated latent patch onto
/// the data, with a projection-based encoder.
#[derive(Clone, Debug)]
pub struct LocalChart {
    pub center: usize,
    pub radius: f64,
    pub epsilon: f64,
    pub log: LogMap,
    /// Indices into the source cloud, in vertex order of `complex`.
    pub indices: Vec<usize>,
    pub latent: Vec<Vec<f64>>,
    pub points: Vec<Vec<f64>>,
    pub complex: SimplicialComplex,
    pub decoder: ReluNetwork,
    pub report: CompileReport,
    /// Per simplex, the Gram matrix of `X_α = (x_1 − x_0, …, x_d − x_0)`
    /// inverted, row-major `d × d`.
    gram_inv: Vec<Vec<f64>>,
}

fn edge_matrix(points: &[Vec<f64>], simplex: &[usize]) -> Vec<Vec<f64>> {
    let x0 = &points[simplex[0]];
    simplex[1..].iter().map(|&v| sub(&points[v], x0)).collect()
}

fn invert_gram(cols: &[Vec<f64>]) -> Option<Vec<f64>> {
    match cols.len() {
        1 => {
            let g = dot(&cols[0], &cols[0]);
            (g > 1e-24).then(|| vec![1.0 / g])
        }
        2 => {
            let (a, b, c) = (
                dot(&cols[0], &cols[0]),
                dot(&cols[0], &cols[1]),
                dot(&cols[1], &cols[1]),
            );
            let det = a * c - b * b;
            // Relative test: det / (a c) is the squared sine of the angle.
            (a > 1e-24 && c > 1e-24 && det > 1e-12 * a * c)
                .then(|| vec![c / det, -b / det, -b / det, a / det])
        }
        _ => None,
    }
}

impl LocalChart {
    pub fn d(&self) -> usize {
        self.complex.dim()
    }

    pub fn m(&self) -> usize {
        self.points[0].len()
    }

    /// Coefficients `c = X_α†(x − x_{α0})` of the projection onto the affine
    /// hull of simplex `s`.
    fn project(&self, s: usize, x: &[f64]) -> Vec<f64> {
        let simplex = self.complex.simplex(s);
        let cols = edge_matrix(&self.points, simplex);
        let dx = sub(x, &self.points[simplex[0]]);
        let rhs: Vec<f64> = cols.iter().map(|c| dot(c, &dx)).collect();
        let d = rhs.len();
        let gi = &self.gram_inv[s];
        (0..d)
            .map(|r| (0..d).map(|k| gi[r * d + k] * rhs[k]).sum())
            .collect()
    }

    fn ambient(&self, s: usize, xi: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.m()];
        for (&v, &w) in self.complex.simplex(s).iter().zip(xi) {
            y.iter_mut()
                .zip(&self.points[v])
                .for_each(|(a, b)| *a += w * b);
        }
        y
    }

    /// Closest point of simplex `s` to `x`, as barycentric weights.
    fn closest_in_simplex(&self, s: usize, x: &[f64]) -> Vec<f64> {
        let c = self.project(s, x);
        let mut xi = vec![1.0 - c.iter().sum::<f64>()];
        xi.extend(&c);
        if xi.iter().all(|&w| w >= 0.0) {
            return xi;
        }
        // Outside: the minimizer lies on a lower-dimensional face.
        let simplex = self.complex.simplex(s);
        let mut best = (f64::INFINITY, Vec::new());
        for i in 0..simplex.len() {
            for j in i..simplex.len() {
                let (a, b) = (&self.points[simplex[i]], &self.points[simplex[j]]);
                let ab = sub(b, a);
                let len = dot(&ab, &ab);
                let t = if len > 0.0 {
                    (dot(&sub(x, a), &ab) / len).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let mut w = vec![0.0; simplex.len()];
                w[i] += 1.0 - t;
                w[j] += t;
                let dist = norm(&sub(x, &self.ambient(s, &w)));
                if dist < best.0 {
                    best = (dist, w);
                }
            }
        }
        best.1
    }

    /// Encoder: picks the simplex whose projection `Proj_α(x)` is nearest to
    /// `x` among those where the projection lies in the simplex (lowest index
    /// on ties), falling back to the nearest simplex when `x` projects
    /// outside all of them, then maps the barycentric weights to latent space.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                actual: x.len(),
            });
        }
        let mut inside: Option<(f64, usize, Vec<f64>)> = None;
        let mut nearest: Option<(f64, usize, Vec<f64>)> = None;
        for s in 0..self.complex.n_simplices() {
            let c = self.project(s, x);
            let mut xi = vec![1.0 - c.iter().sum::<f64>()];
            xi.extend(&c);
            if xi.iter().all(|&w| w >= -BARY_SLACK) {
                let dist = norm(&sub(x, &self.ambient(s, &xi)));
                if inside.as_ref().is_none_or(|b| dist < b.0) {
                    inside = Some((dist, s, xi));
                }
            } else if inside.is_none() {
                let w = self.closest_in_simplex(s, x);
                let dist = norm(&sub(x, &self.ambient(s, &w)));
                if nearest.as_ref().is_none_or(|b| dist < b.0) {
                    nearest = Some((dist, s, w));
                }
            }
        }
        let (_, s, xi) = inside.or(nearest).expect("a chart has simplices");
        let mut z = vec![0.0; self.d()];
        for (&v, &w) in self.complex.simplex(s).iter().zip(&xi) {
            z.iter_mut()
                .zip(&self.latent[v])
                .for_each(|(a, b)| *a += w * b);
        }
        Ok(z)
    }

    /// Decoder: the compiled PL network.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.decoder.eval(z)
    }

    pub fn round_trip(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.encode(x)?)
    }
}

/// Builds the chart around `data[center]` from the points within ambient
/// distance `radius`: latent coordinates from `log`, a path (d = 1) or
/// Delaunay (d = 2) complex over them, and the PL decoder sending each
/// latent vertex to its data point.
pub fn build_local_chart(
    data: &PointCloud,
    center: usize,
    radius: f64,
    epsilon: f64,
    log: LogMap,
) -> Result<LocalChart> {
    if center >= data.n() {
        return Err(Error::IndexOutOfRange {
            what: "points",
            index: center,
            len: data.n(),
        });
    }
    if !(radius > 0.0 && epsilon > 0.0) {
        return Err(Error::invalid("radius and epsilon must be positive"));
    }
    let d = log.dim();
    if !(1..=2).contains(&d) {
        return Err(Error::invalid(format!(
            "local charts are triangulated in one or two dimensions, got {d}"
        )));
    }
    let native = match log {
        LogMap::Circle => Some(2),
        LogMap::Sphere | LogMap::Torus => Some(3),
        LogMap::Pca { .. } => None,
    };
    if let Some(m) = native.filter(|&m| m != data.m()) {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: data.m(),
        });
    }
    let p = data.row(center).to_vec();
    let indices: Vec<usize> = (0..data.n())
        .filter(|&i| norm(&sub(data.row(i), &p)) <= radius)
        .collect();
    if indices.len() < d + 2 {
        return Err(Error::invalid(format!(
            "{} points within radius {radius}, need at least {}",
            indices.len(),
            d + 2
        )));
    }
    let points: Vec<Vec<f64>> = indices.iter().map(|&i| data.row(i).to_vec()).collect();
    let pca = match log {
        LogMap::Pca { d } => {
            let frame = pca_frame(&data.subset(&indices)?, d, &p)?;
            Some(
                (0..d)
                    .map(|i| frame.direction(i).to_vec())
                    .collect::<Vec<_>>(),
            )
        }
        _ => None,
    };
    let latent: Vec<Vec<f64>> = points
        .iter()
        .map(|x| log_coords(log, &p, x, pca.as_deref()))
        .collect();
    let complex = if d == 1 {
        SimplicialComplex::path(&latent.iter().map(|z| z[0]).collect::<Vec<_>>())?
    } else {
        delaunay_2d(&latent.iter().map(|z| [z[0], z[1]]).collect::<Vec<_>>())?
    };
    let mut gram_inv = Vec::with_capacity(complex.n_simplices());
    for (s, simplex) in complex.simplices().iter().enumerate() {
        let cols = edge_matrix(&points, simplex);
        gram_inv.push(invert_gram(&cols).ok_or_else(|| {
            Error::RankDeficient(format!("simplex {s} is degenerate in the ambient space"))
        })?);
    }
    let compiled = compile_pl(&complex, &points)?;
    Ok(LocalChart {
        center,
        radius,
        epsilon,
        log,
        indices,
        latent,
        points,
        complex,
        decoder: compiled.network,
        report: compiled.report,
        gram_inv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_maps_at_known_points() {
        let p = [1.0, 0.0];
        assert!((log_coords(LogMap::Circle, &p, &[0.0, 1.0], None)[0] - PI / 2.0).abs() < 1e-15);
        assert!((log_coords(LogMap::Circle, &p, &[0.0, -1.0], None)[0] + PI / 2.0).abs() < 1e-15);
        let z = log_coords(LogMap::Sphere, &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], None);
        assert!((norm(&z) - PI / 2.0).abs() < 1e-15);
        let z = log_coords(LogMap::Torus, &[3.0, 0.0, 0.0], &[0.0, 3.0, 0.0], None);
        assert!((z[0] - 1.5 * PI).abs() < 1e-14 && z[1].abs() < 1e-15);
    }

    #[test]
    fn flat_patch_is_reproduced_exactly() {
        // A planar patch in ℝ³: PL interpolation of affine data is exact.
        let mut rows = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                let (u, v) = (i as f64 * 0.2 + 0.013 * j as f64, j as f64 * 0.2);
                rows.push([u, v, 0.5 * u - 0.25 * v]);
            }
        }
        let data = PointCloud::from_rows(&rows).unwrap();
        let chart = build_local_chart(&data, 14, 0.45, 0.1, LogMap::Pca { d: 2 }).unwrap();
        for x in &chart.points {
            let y = chart.round_trip(x).unwrap();
            assert!(norm(&sub(x, &y)) <= 1e-9);
        }
    }
}
