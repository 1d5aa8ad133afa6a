use super::complex::SimplicialComplex;
use crate::error::{Error, Result};

const GHOST: usize = usize::MAX;

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Positive when `d` is strictly inside the circumcircle of the
/// counter-clockwise triangle `abc`.
pub fn in_circle(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

struct Mesh {
    pts: Vec<[f64; 2]>,
    // Counter-clockwise; a ghost triangle stores GHOST last and its real
    // edge faces away from the hull.
    tris: Vec<[usize; 3]>,
}

impl Mesh {
    fn conflicts(&self, t: &[usize; 3], p: [f64; 2]) -> bool {
        let [a, b, c] = *t;
        if c == GHOST {
            let (pa, pb) = (self.pts[a], self.pts[b]);
            let o = orient(pa, pb, p);
            if o != 0.0 {
                return o > 0.0;
            }
            // On the hull line: conflict only inside the open edge.
            let dot = (p[0] - pa[0]) * (pb[0] - pa[0]) + (p[1] - pa[1]) * (pb[1] - pa[1]);
            let len = (pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2);
            return dot > 0.0 && dot < len;
        }
        in_circle(self.pts[a], self.pts[b], self.pts[c], p) > 0.0
    }

    fn contains(&self, t: &[usize; 3], p: [f64; 2]) -> bool {
        let [a, b, c] = *t;
        c != GHOST && {
            let (pa, pb, pc) = (self.pts[a], self.pts[b], self.pts[c]);
            orient(pa, pb, p) >= 0.0 && orient(pb, pc, p) >= 0.0 && orient(pc, pa, p) >= 0.0
        }
    }

    fn insert(&mut self, v: usize) {
        let p = self.pts[v];
        let bad: Vec<bool> = self.tris.iter().map(|t| self.conflicts(t, p)).collect();
        let start = self
            .tris
            .iter()
            .position(|t| self.contains(t, p))
            .filter(|&i| bad[i])
            .or_else(|| (0..self.tris.len()).find(|&i| bad[i] && self.tris[i][2] == GHOST))
            .expect("a new point conflicts with some triangle");
        // Grow the cavity through shared edges so it stays connected.
        let mut in_cavity = vec![false; self.tris.len()];
        in_cavity[start] = true;
        let mut stack = vec![start];
        let mut edges: std::collections::HashMap<(usize, usize), usize> = Default::default();
        for (i, t) in self.tris.iter().enumerate() {
            for k in 0..3 {
                edges.insert((t[k], t[(k + 1) % 3]), i);
            }
        }
        let mut boundary = Vec::new();
        while let Some(i) = stack.pop() {
            let t = self.tris[i];
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                match edges.get(&(b, a)) {
                    Some(&j) if bad[j] && !in_cavity[j] => {
                        in_cavity[j] = true;
                        stack.push(j);
                    }
                    Some(&j) if in_cavity[j] => {}
                    _ => boundary.push((a, b)),
                }
            }
        }
        // Boundary edges between two cavity triangles were recorded before
        // the neighbour joined; drop them.
        let cavity_edges: std::collections::HashSet<(usize, usize)> = self
            .tris
            .iter()
            .enumerate()
            .filter(|(i, _)| in_cavity[*i])
            .flat_map(|(_, t)| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
            .collect();
        boundary.retain(|&(a, b)| !cavity_edges.contains(&(b, a)));
        let mut kept: Vec<[usize; 3]> = self
            .tris
            .iter()
            .enumerate()
            .filter(|(i, _)| !in_cavity[*i])
            .map(|(_, t)| *t)
            .collect();
        for (a, b) in boundary {
            kept.push(if a == GHOST {
                [b, v, GHOST]
            } else if b == GHOST {
                [v, a, GHOST]
            } else {
                [a, b, v]
            });
        }
        self.tris = kept;
    }
}

/// Delaunay triangulation of planar points by Bowyer–Watson insertion with
/// ghost triangles for the hull. Triangles are counter-clockwise, listed
/// with their smallest index first and sorted.
pub fn delaunay_2d(points: &[[f64; 2]]) -> Result<SimplicialComplex> {
    let n = points.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "Delaunay triangulation needs at least 3 points, got {n}"
        )));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::invalid("points must be finite"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if points[j][0] - points[i][0] > 1e-12 {
                break;
            }
            let d = (points[j][0] - points[i][0]).hypot(points[j][1] - points[i][1]);
            if d <= 1e-12 {
                return Err(Error::invalid(format!(
                    "duplicate points {} and {}",
                    i.min(j),
                    i.max(j)
                )));
            }
        }
    }
    // Predicates run on coordinates scaled into the unit square.
    let lo = [0, 1].map(|c| points.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min));
    let span = [0, 1]
        .map(|c| points.iter().map(|p| p[c] - lo[c]).fold(0.0, f64::max))
        .into_iter()
        .fold(0.0, f64::max);
    let pts: Vec<[f64; 2]> = points
        .iter()
        .map(|p| [(p[0] - lo[0]) / span, (p[1] - lo[1]) / span])
        .collect();
    let (a, b) = (0, 1);
    let c = (2..n)
        .max_by(|&i, &j| {
            orient(pts[a], pts[b], pts[i])
                .abs()
                .total_cmp(&orient(pts[a], pts[b], pts[j]).abs())
        })
        .expect("n >= 3");
    if orient(pts[a], pts[b], pts[c]).abs() <= 1e-12 {
        return Err(Error::invalid("points are collinear"));
    }
    let first = if orient(pts[a], pts[b], pts[c]) > 0.0 {
        [a, b, c]
    } else {
        [a, c, b]
    };
    let mut mesh = Mesh {
        pts,
        tris: vec![
            first,
            [first[1], first[0], GHOST],
            [first[2], first[1], GHOST],
            [first[0], first[2], GHOST],
        ],
    };
    for v in (0..n).filter(|&v| v != a && v != b && v != c) {
        mesh.insert(v);
    }
    let mut tris: Vec<Vec<usize>> = mesh
        .tris
        .into_iter()
        .filter(|t| t[2] != GHOST)
        .map(|t| {
            let k = (0..3).min_by_key(|&k| t[k]).expect("three");
            vec![t[k], t[(k + 1) % 3], t[(k + 2) % 3]]
        })
        .collect();
    tris.sort();
    SimplicialComplex::new(points.iter().map(|p| p.to_vec()).collect(), tris)
}
