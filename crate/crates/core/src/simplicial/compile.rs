use serde::{Deserialize, Serialize};

use super::complex::SimplicialComplex;
use super::network::{reduce_level, Combo, LayerActivation, NetBuilder, Op, ReluNetwork};
use crate::error::{Error, Result};

/// Affine map `x ↦ g·x + c` equal to the barycentric coordinate of vertex
/// `v` in simplex `s`, i.e. `1 − 1ᵀ(W_s x + b_s)` with `W_s = V_s⁻¹` taken
/// with `v` as base vertex.
fn vertex_affine(c: &SimplicialComplex, s: usize, v: usize) -> (Vec<f64>, f64) {
    let d = c.dim();
    let simplex = c.simplex(s);
    let pos = simplex.iter().position(|&u| u == v).expect("v is in s");
    let x0 = c.vertex(simplex[0]);
    let probe_origin = c.barycentric(s, &vec![0.0; d])[pos];
    let g: Vec<f64> = (0..d)
        .map(|k| {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            c.barycentric(s, &e)[pos] - probe_origin
        })
        .collect();
    // Recenter the constant at the base vertex to limit cancellation.
    let at_base = if pos == 0 { 1.0 } else { 0.0 };
    let cst = at_base - g.iter().zip(x0).map(|(a, b)| a * b).sum::<f64>();
    (g, cst)
}

fn eval_affine(a: &(Vec<f64>, f64), x: &[f64]) -> f64 {
    a.0.iter().zip(x).map(|(g, x)| g * x).sum::<f64>() + a.1
}

fn polygon_area(p: &[[f64; 2]]) -> f64 {
    let n = p.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n)
        .map(|k| {
            let (a, b) = (p[k], p[(k + 1) % n]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
        .abs()
}

/// Part of a convex polygon where `sign · h ≥ 0`; values within `tol` of
/// zero count as on the line.
fn clip(poly: &[[f64; 2]], h: &(Vec<f64>, f64), sign: f64, tol: f64) -> Vec<[f64; 2]> {
    let val = |p: &[f64; 2]| {
        let v = sign * eval_affine(h, p);
        if v.abs() <= tol {
            0.0
        } else {
            v
        }
    };
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let (p, q) = (poly[k], poly[(k + 1) % poly.len()]);
        let (fp, fq) = (val(&p), val(&q));
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp > 0.0 && fq < 0.0) || (fp < 0.0 && fq > 0.0) {
            let t = fp / (fp - fq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Index sets `T ⊆ N¹(v)` with `η_v = max_T min_{j∈T} ReLU(ℓ_j)` exactly on
/// a complex with convex support, where `ℓ_j` is the affine extension of
/// `η_v` from simplex `j`.
///
/// When every `ℓ_j` dominates `ℓ_i` on each `S_i` the single set `N¹(v)`
/// suffices and the formula is `max{min_i ℓ_i, 0}`. Otherwise each ring
/// simplex is cut by the lines `ℓ_j = ℓ_i`, and every cell contributes the
/// set of pieces that dominate `ℓ_i` on it. Only minimal sets are kept.
pub fn hat_terms(c: &SimplicialComplex, v: usize) -> Result<Vec<Vec<usize>>> {
    if v >= c.n_vertices() {
        return Err(Error::IndexOutOfRange {
            what: "vertices",
            index: v,
            len: c.n_vertices(),
        });
    }
    let ring = c.ring(v);
    if ring.is_empty() {
        return Err(Error::invalid(format!("vertex {v} belongs to no simplex")));
    }
    let pieces: Vec<(Vec<f64>, f64)> = ring.iter().map(|&s| vertex_affine(c, s, v)).collect();
    let dominates_everywhere = (0..ring.len()).all(|i| {
        (0..ring.len()).all(|j| {
            c.simplex(ring[i]).iter().all(|&u| {
                let x = c.vertex(u);
                eval_affine(&pieces[j], x) - eval_affine(&pieces[i], x) >= -1e-12
            })
        })
    });
    if dominates_everywhere {
        return Ok(vec![ring.to_vec()]);
    }
    if c.dim() != 2 {
        return Err(Error::invalid(format!(
            "vertex {v} has a non-convex first ring; exact hats beyond two dimensions need convex rings"
        )));
    }
    let mut sets: Vec<Vec<usize>> = Vec::new();
    for i in 0..ring.len() {
        let tri: Vec<[f64; 2]> = c
            .simplex(ring[i])
            .iter()
            .map(|&u| [c.vertex(u)[0], c.vertex(u)[1]])
            .collect();
        let min_area = 1e-12 * polygon_area(&tri);
        let mut cells: Vec<(Vec<[f64; 2]>, Vec<bool>)> = vec![(tri, {
            let mut m = vec![false; ring.len()];
            m[i] = true;
            m
        })];
        for j in (0..ring.len()).filter(|&j| j != i) {
            let diff = (
                pieces[j]
                    .0
                    .iter()
                    .zip(&pieces[i].0)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
                pieces[j].1 - pieces[i].1,
            );
            let tol = 1e-12 * (1.0 + diff.0.iter().map(|g| g.abs()).sum::<f64>());
            let mut next = Vec::with_capacity(cells.len() * 2);
            for (poly, mask) in cells {
                let above = clip(&poly, &diff, 1.0, tol);
                if polygon_area(&above) > min_area {
                    let mut m = mask.clone();
                    m[j] = true;
                    next.push((above, m));
                }
                let below = clip(&poly, &diff, -1.0, tol);
                if polygon_area(&below) > min_area {
                    next.push((below, mask));
                }
            }
            cells = next;
        }
        for (_, mask) in cells {
            let set: Vec<usize> = (0..ring.len())
                .filter(|&k| mask[k])
                .map(|k| ring[k])
                .collect();
            if !sets.contains(&set) {
                sets.push(set);
            }
        }
    }
    let subset =
        |a: &Vec<usize>, b: &Vec<usize>| a.len() < b.len() && a.iter().all(|x| b.contains(x));
    let mut minimal: Vec<Vec<usize>> = sets
        .iter()
        .filter(|b| !sets.iter().any(|a| subset(a, b)))
        .cloned()
        .collect();
    minimal.sort();
    Ok(minimal)
}

/// Bookkeeping of a compiled piecewise-linear map against the bounds
/// `n(K(d+1) + 4(2K−1)) + n` parameters per output and `log₂K + 2` layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompileReport {
    pub n_vertices: usize,
    pub n_simplices: usize,
    pub d: usize,
    pub q: usize,
    /// `K = max_v |N¹(v)|`.
    pub k_max: usize,
    /// Vertices whose hat needed more than one min-term.
    pub nonconvex_vertices: usize,
    pub param_count: usize,
    pub declared_param_count: usize,
    pub param_bound: usize,
    pub depth: usize,
    pub declared_depth: usize,
    /// `⌈log₂K⌉ + 2`; the real-valued bound rounded up to whole layers.
    pub depth_bound: usize,
}

impl CompileReport {
    pub fn within_param_bound(&self) -> bool {
        self.declared_param_count <= self.param_bound
    }

    pub fn within_depth_bound(&self) -> bool {
        self.declared_depth <= self.depth_bound
    }
}

pub fn param_bound(n: usize, d: usize, k: usize, q: usize) -> usize {
    q * (n * (k * (d + 1) + 4 * (2 * k).saturating_sub(1)) + n)
}

pub fn depth_bound(k: usize) -> usize {
    (k.max(1) as f64).log2().ceil() as usize + 2
}

enum Phase {
    Min(Vec<Vec<Combo>>),
    Max(Vec<Combo>),
    Done(Combo),
}

/// Network evaluating `Σ_v weights[v] · η_v` for the listed vertices.
fn assemble(
    c: &SimplicialComplex,
    verts: &[usize],
    weights: &[Vec<f64>],
    literal: bool,
) -> Result<(ReluNetwork, usize)> {
    let d = c.dim();
    let mut b = NetBuilder::new(d);
    let mut units = Vec::new();
    let mut leaf_base = Vec::with_capacity(verts.len());
    let mut terms = Vec::with_capacity(verts.len());
    let mut nonconvex = 0;
    for &v in verts {
        let t = if literal {
            vec![c.ring(v).to_vec()]
        } else {
            hat_terms(c, v)?
        };
        nonconvex += (t.len() > 1) as usize;
        leaf_base.push(units.len());
        for &s in c.ring(v) {
            let (g, cst) = vertex_affine(c, s, v);
            units.push((g.into_iter().enumerate().collect::<Combo>(), Some(cst)));
        }
        terms.push(t);
    }
    let leaves = b.affine(units, LayerActivation::Relu);
    let mut phases: Vec<Phase> = verts
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let ring = c.ring(v);
            Phase::Min(
                terms[k]
                    .iter()
                    .map(|t| {
                        t.iter()
                            .map(|s| {
                                leaves[leaf_base[k]
                                    + ring.iter().position(|r| r == s).expect("in ring")]
                                .clone()
                            })
                            .collect()
                    })
                    .collect(),
            )
        })
        .collect();
    loop {
        for p in phases.iter_mut() {
            if let Phase::Min(ts) = p {
                if ts.iter().all(|t| t.len() == 1) {
                    *p = Phase::Max(ts.iter_mut().map(|t| t.pop().expect("one")).collect());
                }
            }
            if let Phase::Max(vals) = p {
                if vals.len() == 1 {
                    *p = Phase::Done(vals.pop().expect("one"));
                }
            }
        }
        if phases.iter().all(|p| matches!(p, Phase::Done(_))) {
            break;
        }
        // One ReLU level for every vertex: reduce, or carry when finished.
        let mut ops = Vec::new();
        let mut shape = Vec::with_capacity(phases.len());
        for p in &mut phases {
            match std::mem::replace(p, Phase::Done(Vec::new())) {
                Phase::Min(ts) => {
                    let mut sizes = Vec::with_capacity(ts.len());
                    for t in ts {
                        let level = reduce_level(t, Op::MinPos, Op::PassPos);
                        sizes.push(level.len());
                        ops.extend(level);
                    }
                    shape.push((0, sizes));
                }
                Phase::Max(vals) => {
                    let level = reduce_level(vals, Op::MaxPos, Op::PassPos);
                    shape.push((1, vec![level.len()]));
                    ops.extend(level);
                }
                Phase::Done(v) => {
                    ops.push(Op::PassPos(v));
                    shape.push((2, vec![1]));
                }
            }
        }
        let mut outs = b.stage(ops).into_iter();
        for (p, (kind, sizes)) in phases.iter_mut().zip(shape) {
            let mut take = |k: usize| (&mut outs).take(k).collect::<Vec<Combo>>();
            *p = match kind {
                0 => Phase::Min(sizes.into_iter().map(&mut take).collect()),
                1 => Phase::Max(take(sizes[0])),
                _ => Phase::Done(take(1).pop().expect("one")),
            };
        }
    }
    let hats: Vec<Combo> = phases
        .into_iter()
        .map(|p| match p {
            Phase::Done(h) => h,
            _ => unreachable!("all vertices finished"),
        })
        .collect();
    let q = weights[0].len();
    let outputs = (0..q)
        .map(|o| {
            let mut combo: Combo = Vec::new();
            for (h, w) in hats.iter().zip(weights) {
                combo.extend(h.iter().map(|&(i, a)| (i, a * w[o])));
            }
            combo.sort_by_key(|&(i, _)| i);
            (combo, None)
        })
        .collect();
    b.affine(outputs, LayerActivation::Identity);
    Ok((b.finish()?, nonconvex))
}

/// Network computing the hat function `η_v`: 1 at `v`, affine on each
/// simplex of N¹(v) and 0 elsewhere on the complex.
pub fn hat_function(c: &SimplicialComplex, v: usize) -> Result<ReluNetwork> {
    hat_terms(c, v)?;
    Ok(assemble(c, &[v], &[vec![1.0]], false)?.0)
}

/// The single-term form `max{min_{i∈N¹(v)} (1 − 1ᵀ(W_i x + b_i)), 0}`, which
/// equals `η_v` only when every ring piece dominates the others on its own
/// simplex (e.g. convex rings).
pub fn hat_function_literal(c: &SimplicialComplex, v: usize) -> Result<ReluNetwork> {
    if v >= c.n_vertices() || c.ring(v).is_empty() {
        return Err(Error::invalid(format!(
            "vertex {v} has an empty first ring"
        )));
    }
    Ok(assemble(c, &[v], &[vec![1.0]], true)?.0)
}

/// A compiled piecewise-linear map and its bound report.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledPl {
    pub network: ReluNetwork,
    pub report: CompileReport,
}

/// Compiles the piecewise-linear map with vertex images `values` (one row
/// of length `q` per vertex) into a ReLU network `ℝ^d → ℝ^q` computing
/// `Σ_ℓ values[ℓ] · η_{v_ℓ}`. Exact on complexes with convex support.
pub fn compile_pl(c: &SimplicialComplex, values: &[Vec<f64>]) -> Result<CompiledPl> {
    if values.len() != c.n_vertices() {
        return Err(Error::invalid(format!(
            "{} value rows for {} vertices",
            values.len(),
            c.n_vertices()
        )));
    }
    let q = values[0].len();
    if q == 0
        || values.iter().any(|r| r.len() != q)
        || values.iter().flatten().any(|x| !x.is_finite())
    {
        return Err(Error::invalid(
            "value rows must be finite and of equal positive length",
        ));
    }
    let verts: Vec<usize> = (0..c.n_vertices())
        .filter(|&v| !c.ring(v).is_empty())
        .collect();
    let weights: Vec<Vec<f64>> = verts.iter().map(|&v| values[v].clone()).collect();
    let (network, nonconvex) = assemble(c, &verts, &weights, false)?;
    let k = c.max_ring_size();
    let n = c.n_vertices();
    let report = CompileReport {
        n_vertices: n,
        n_simplices: c.n_simplices(),
        d: c.dim(),
        q,
        k_max: k,
        nonconvex_vertices: nonconvex,
        param_count: network.param_count(),
        declared_param_count: network.declared_param_count(),
        param_bound: param_bound(n, c.dim(), k, q),
        depth: network.depth(),
        declared_depth: network.declared_depth(),
        depth_bound: depth_bound(k),
    };
    Ok(CompiledPl { network, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fan() -> SimplicialComplex {
        // Convex hexagon around the origin.
        let mut v = vec![vec![0.0, 0.0]];
        for k in 0..6 {
            let t = k as f64 * std::f64::consts::PI / 3.0;
            v.push(vec![t.cos(), t.sin()]);
        }
        let s = (0..6).map(|k| vec![0, 1 + k, 1 + (k + 1) % 6]).collect();
        SimplicialComplex::new(v, s).unwrap()
    }

    #[test]
    fn convex_ring_uses_one_term() {
        let c = fan();
        assert_eq!(hat_terms(&c, 0).unwrap(), vec![(0..6).collect::<Vec<_>>()]);
        let h = hat_function(&c, 0).unwrap();
        assert_eq!(h.eval(&[0.0, 0.0]).unwrap(), vec![1.0]);
        assert!(h.eval(&[1.0, 0.0]).unwrap()[0].abs() < 1e-15);
        assert!((h.eval(&[0.25, 0.0]).unwrap()[0] - 0.75).abs() < 1e-12);
        assert_eq!(h, hat_function_literal(&c, 0).unwrap());
    }

    #[test]
    fn vertex_affine_is_the_barycentric_coordinate() {
        let c = fan();
        for s in 0..c.n_simplices() {
            for (pos, &v) in c.simplex(s).iter().enumerate() {
                let a = vertex_affine(&c, s, v);
                let x = [0.1, 0.2];
                assert!((eval_affine(&a, &x) - c.barycentric(s, &x)[pos]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn bounds() {
        assert_eq!(param_bound(3, 1, 2, 1), 3 * (2 * 2 + 4 * 3) + 3);
        assert_eq!(depth_bound(1), 2);
        assert_eq!(depth_bound(6), 5);
        assert_eq!(depth_bound(8), 5);
    }
}
