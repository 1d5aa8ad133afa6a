use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted `|det V|` of a simplex.
pub const DET_TOL: f64 = 1e-12;
/// Slack on barycentric coordinates when deciding membership.
pub const BARY_SLACK: f64 = 1e-9;

/// Geometric simplicial complex of `d`-simplices in ℝ^d.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplicialComplex {
    vertices: Vec<Vec<f64>>,
    simplices: Vec<Vec<usize>>,
    ring: Vec<Vec<usize>>,
    /// Row-major `V⁻¹` per simplex, `V = (v_1 − v_0, …, v_d − v_0)`.
    inverses: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ComplexJson {
    vertices: Vec<Vec<f64>>,
    simplices: Vec<Vec<usize>>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidComplex(msg.into())
}

impl SimplicialComplex {
    /// Validates and indexes a complex: equal vertex dimensions, distinct
    /// vertices, `d + 1` distinct indices per simplex, `|det V| > 1e-12`,
    /// every `(d−1)`-face shared by at most two simplices, and for `d ≤ 2`
    /// no two simplices overlapping except along a common face.
    pub fn new(vertices: Vec<Vec<f64>>, simplices: Vec<Vec<usize>>) -> Result<Self> {
        let d = vertices.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(bad("a complex needs vertices of dimension at least 1"));
        }
        if let Some(i) = vertices.iter().position(|v| v.len() != d) {
            return Err(bad(format!(
                "vertex {i} has dimension {}, expected {d}",
                vertices[i].len()
            )));
        }
        if vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(bad("non-finite vertex coordinate"));
        }
        if simplices.is_empty() {
            return Err(bad("a complex needs at least one simplex"));
        }
        let n = vertices.len();
        let mut ring = vec![Vec::new(); n];
        let mut inverses = Vec::with_capacity(simplices.len());
        let mut seen = HashMap::new();
        for (s, simplex) in simplices.iter().enumerate() {
            if simplex.len() != d + 1 {
                return Err(bad(format!(
                    "simplex {s} has {} vertices, expected {}",
                    simplex.len(),
                    d + 1
                )));
            }
            if let Some(&v) = simplex.iter().find(|&&v| v >= n) {
                return Err(bad(format!("simplex {s} refers to vertex {v} of {n}")));
            }
            let mut key = simplex.clone();
            key.sort_unstable();
            if key.windows(2).any(|w| w[0] == w[1]) {
                return Err(bad(format!("simplex {s} repeats a vertex")));
            }
            if let Some(first) = seen.insert(key, s) {
                return Err(bad(format!("simplices {first} and {s} coincide")));
            }
            let v0 = &vertices[simplex[0]];
            let v = DMatrix::from_fn(d, d, |r, c| vertices[simplex[c + 1]][r] - v0[r]);
            let det = v.determinant();
            if !(det.abs() > DET_TOL) {
                return Err(bad(format!(
                    "simplex {s} is degenerate (|det V| = {:.3e})",
                    det.abs()
                )));
            }
            let inv = v
                .try_inverse()
                .ok_or_else(|| bad(format!("simplex {s} is singular")))?;
            inverses.push((0..d * d).map(|k| inv[(k / d, k % d)]).collect());
            for &v in simplex {
                ring[v].push(s);
            }
        }
        let complex = SimplicialComplex {
            vertices,
            simplices,
            ring,
            inverses,
        };
        complex.check_distinct_vertices()?;
        complex.check_faces()?;
        if d <= 2 {
            complex.check_intersections()?;
        }
        Ok(complex)
    }

    /// Path complex on the real line through the given points, ordered by
    /// value; vertices keep their input order.
    pub fn path(points: &[f64]) -> Result<Self> {
        if points.len() < 2 {
            return Err(bad("a path needs at least two points"));
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].total_cmp(&points[b]).then(a.cmp(&b)));
        let simplices = order.windows(2).map(|w| vec![w[0], w[1]]).collect();
        SimplicialComplex::new(points.iter().map(|&x| vec![x]).collect(), simplices)
    }

    fn scale(&self) -> f64 {
        let d = self.dim();
        let mut s: f64 = 0.0;
        for j in 0..d {
            let (lo, hi) = self
                .vertices
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v[j]), hi.max(v[j]))
                });
            s = s.max(hi - lo);
        }
        s.max(1.0)
    }

    fn check_distinct_vertices(&self) -> Result<()> {
        let mut order: Vec<usize> = (0..self.n_vertices()).collect();
        order.sort_by(|&a, &b| self.vertices[a][0].total_cmp(&self.vertices[b][0]));
        for (k, &a) in order.iter().enumerate() {
            for &b in &order[k + 1..] {
                if self.vertices[b][0] - self.vertices[a][0] > 1e-12 {
                    break;
                }
                let far = self.vertices[a]
                    .iter()
                    .zip(&self.vertices[b])
                    .any(|(x, y)| (x - y).abs() > 1e-12);
                if !far {
                    return Err(bad(format!("vertices {a} and {b} coincide")));
                }
            }
        }
        Ok(())
    }

    fn check_faces(&self) -> Result<()> {
        let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
        for s in &self.simplices {
            for skip in 0..s.len() {
                let mut face: Vec<usize> =
                    (0..s.len()).filter(|&k| k != skip).map(|k| s[k]).collect();
                face.sort_unstable();
                let c = count.entry(face.clone()).or_insert(0);
                *c += 1;
                if *c > 2 {
                    return Err(bad(format!(
                        "face {face:?} is shared by more than two simplices"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Pairwise geometric check for `d ≤ 2`: interiors are disjoint and no
    /// vertex of one simplex lies on another simplex it does not belong to.
    fn check_intersections(&self) -> Result<()> {
        let d = self.dim();
        let tol = 1e-12 * self.scale();
        let boxes: Vec<(Vec<f64>, Vec<f64>)> = self
            .simplices
            .iter()
            .map(|s| {
                let lo = (0..d)
                    .map(|j| {
                        s.iter()
                            .map(|&v| self.vertices[v][j])
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect();
                let hi = (0..d)
                    .map(|j| {
                        s.iter()
                            .map(|&v| self.vertices[v][j])
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .collect();
                (lo, hi)
            })
            .collect();
        let mut order: Vec<usize> = (0..self.n_simplices()).collect();
        order.sort_by(|&a, &b| boxes[a].0[0].total_cmp(&boxes[b].0[0]));
        for (k, &a) in order.iter().enumerate() {
            for &b in &order[k + 1..] {
                if boxes[b].0[0] > boxes[a].1[0] + tol {
                    break;
                }
                if (1..d).any(|j| {
                    boxes[b].0[j] > boxes[a].1[j] + tol || boxes[a].0[j] > boxes[b].1[j] + tol
                }) {
                    continue;
                }
                let (a, b) = (a.min(b), a.max(b));
                if self.interiors_overlap(a, b, tol) {
                    return Err(bad(format!("simplices {a} and {b} overlap")));
                }
                for (p, q) in [(a, b), (b, a)] {
                    for &v in &self.simplices[p] {
                        if !self.simplices[q].contains(&v)
                            && self
                                .barycentric(q, &self.vertices[v])
                                .iter()
                                .all(|&x| x >= -1e-12)
                        {
                            return Err(bad(format!(
                                "vertex {v} of simplex {p} lies on simplex {q}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Separating-axis test on the edge normals (`d = 2`) or the line (`d = 1`).
    fn interiors_overlap(&self, a: usize, b: usize, tol: f64) -> bool {
        let pts = |s: usize| -> Vec<&[f64]> {
            self.simplices[s]
                .iter()
                .map(|&v| self.vertices[v].as_slice())
                .collect()
        };
        let (pa, pb) = (pts(a), pts(b));
        let axes: Vec<[f64; 2]> = if self.dim() == 1 {
            vec![[1.0, 0.0]]
        } else {
            [&pa, &pb]
                .iter()
                .flat_map(|p| {
                    (0..3).map(move |k| {
                        let (u, w) = (p[k], p[(k + 1) % 3]);
                        [w[1] - u[1], u[0] - w[0]]
                    })
                })
                .collect()
        };
        let proj = |p: &[f64], ax: &[f64; 2]| p[0] * ax[0] + p.get(1).map_or(0.0, |y| y * ax[1]);
        for ax in &axes {
            let norm = (ax[0] * ax[0] + ax[1] * ax[1]).sqrt();
            let range = |ps: &[&[f64]]| {
                ps.iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                        let x = proj(p, ax) / norm;
                        (lo.min(x), hi.max(x))
                    })
            };
            let (ra, rb) = (range(&pa), range(&pb));
            if ra.1 <= rb.0 + tol || rb.1 <= ra.0 + tol {
                return false;
            }
        }
        true
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_simplices(&self) -> usize {
        self.simplices.len()
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.vertices[v]
    }

    pub fn simplices(&self) -> &[Vec<usize>] {
        &self.simplices
    }

    pub fn simplex(&self, s: usize) -> &[usize] {
        &self.simplices[s]
    }

    /// Incident simplices of `v`, N¹(v), in increasing order.
    pub fn ring(&self, v: usize) -> &[usize] {
        &self.ring[v]
    }

    /// `K = max_v |N¹(v)|`.
    pub fn max_ring_size(&self) -> usize {
        self.ring.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `β = V⁻¹ (x − v_0)` for simplex `s`.
    pub fn local_coords(&self, s: usize, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let v0 = &self.vertices[self.simplices[s][0]];
        let inv = &self.inverses[s];
        (0..d)
            .map(|r| (0..d).map(|c| inv[r * d + c] * (x[c] - v0[c])).sum())
            .collect()
    }

    /// Barycentric coordinates of `x` in simplex `s`, ordered like the
    /// simplex's vertices.
    pub fn barycentric(&self, s: usize, x: &[f64]) -> Vec<f64> {
        let beta = self.local_coords(s, x);
        let mut xi = Vec::with_capacity(beta.len() + 1);
        xi.push(1.0 - beta.iter().sum::<f64>());
        xi.extend(beta);
        xi
    }

    /// Lowest-index simplex whose barycentric coordinates of `x` are all
    /// `≥ −BARY_SLACK`, with those coordinates.
    pub fn locate(&self, x: &[f64]) -> Option<(usize, Vec<f64>)> {
        (0..self.n_simplices()).find_map(|s| {
            let xi = self.barycentric(s, x);
            xi.iter().all(|&c| c >= -BARY_SLACK).then_some((s, xi))
        })
    }

    /// Piecewise-linear interpolation of per-vertex `values` at `x`; `None`
    /// outside the complex.
    pub fn interpolate(&self, values: &[Vec<f64>], x: &[f64]) -> Option<Vec<f64>> {
        let (s, xi) = self.locate(x)?;
        let q = values[0].len();
        let mut out = vec![0.0; q];
        for (&v, w) in self.simplices[s].iter().zip(&xi) {
            for (o, val) in out.iter_mut().zip(&values[v]) {
                *o += w * val;
            }
        }
        Some(out)
    }

    /// Point of simplex `s` with barycentric coordinates `xi`.
    pub fn point(&self, s: usize, xi: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        for (&v, w) in self.simplices[s].iter().zip(xi) {
            for (o, c) in p.iter_mut().zip(&self.vertices[v]) {
                *o += w * c;
            }
        }
        p
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ComplexJson {
            vertices: self.vertices.clone(),
            simplices: self.simplices.clone(),
        })
        .expect("plain data serializes")
    }

    /// Parses `{"vertices": [[...]], "simplices": [[i, j, k]]}` and validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ComplexJson = serde_json::from_str(text)?;
        SimplicialComplex::new(raw.vertices, raw.simplices)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SimplicialComplex::from_json(&text)
    }
}
