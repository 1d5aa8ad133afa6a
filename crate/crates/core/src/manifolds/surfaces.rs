//! Geometry of the synthetic shapes.

use std::f64::consts::TAU;

use rand::Rng;

pub const TORUS_MAJOR: f64 = 2.0;
pub const TORUS_MINOR: f64 = 1.0;

/// Area-uniform torus angles via rejection on the area element
/// `(R + r cos v)`.
pub(crate) fn torus_angles<R: Rng>(rng: &mut R) -> (f64, f64) {
    let u = rng.random::<f64>() * TAU;
    loop {
        let v = rng.random::<f64>() * TAU;
        let accept = (TORUS_MAJOR + TORUS_MINOR * v.cos()) / (TORUS_MAJOR + TORUS_MINOR);
        if rng.random::<f64>() < accept {
            return (u, v);
        }
    }
}

pub(crate) fn torus_point(u: f64, v: f64) -> [f64; 3] {
    let w = TORUS_MAJOR + TORUS_MINOR * v.cos();
    [w * u.cos(), w * u.sin(), TORUS_MINOR * v.sin()]
}

/// Genus-two level set: a thin tube around the figure-eight
/// `x²(1 − x²) = y²`.
pub fn double_torus_fn(p: [f64; 3]) -> f64 {
    let [x, y, z] = p;
    let g = x * x * (1.0 - x * x) - y * y;
    g * g + z * z / 4.0 - 0.01
}

const GENUS3_HOLE_RADIUS: f64 = 0.45;
const GENUS3_THICKNESS: f64 = 0.005;

/// Genus-three level set: a pillow over the disk of radius 2 with three
/// round holes centered on the unit circle at 90°, 210° and 330°.
pub fn genus3_fn(p: [f64; 3]) -> f64 {
    let [x, y, z] = p;
    let mut psi = x * x + y * y - 4.0;
    for deg in [90.0f64, 210.0, 330.0] {
        let (s, c) = deg.to_radians().sin_cos();
        let d2 = (x - c).powi(2) + (y - s).powi(2);
        psi *= d2 - GENUS3_HOLE_RADIUS * GENUS3_HOLE_RADIUS;
    }
    z * z + GENUS3_THICKNESS * psi
}

fn grad(f: fn([f64; 3]) -> f64, p: [f64; 3]) -> [f64; 3] {
    let h = 1e-6;
    let mut g = [0.0; 3];
    for i in 0..3 {
        let (mut a, mut b) = (p, p);
        a[i] += h;
        b[i] -= h;
        g[i] = (f(a) - f(b)) / (2.0 * h);
    }
    g
}

/// Approximately area-uniform samples of `f = 0`: uniform points of the box
/// are kept when their first-order distance to the surface is below a thin
/// shell width, then projected onto the surface by Newton steps.
fn sample_implicit<R: Rng>(
    rng: &mut R,
    f: fn([f64; 3]) -> f64,
    lo: [f64; 3],
    hi: [f64; 3],
) -> [f64; 3] {
    const SHELL: f64 = 0.02;
    loop {
        let mut p = [0.0; 3];
        for i in 0..3 {
            p[i] = lo[i] + (hi[i] - lo[i]) * rng.random::<f64>();
        }
        let g = grad(f, p);
        let gn2: f64 = g.iter().map(|x| x * x).sum();
        if gn2 < 1e-20 || f(p).abs() >= SHELL * gn2.sqrt() {
            continue;
        }
        for _ in 0..50 {
            let v = f(p);
            if v.abs() < 1e-14 {
                break;
            }
            let g = grad(f, p);
            let gn2: f64 = g.iter().map(|x| x * x).sum();
            if gn2 < 1e-20 {
                break;
            }
            for i in 0..3 {
                p[i] -= v * g[i] / gn2;
            }
        }
        if f(p).abs() < 1e-10 {
            return p;
        }
    }
}

pub(crate) fn sample_double_torus<R: Rng>(rng: &mut R) -> [f64; 3] {
    sample_implicit(rng, double_torus_fn, [-1.2, -0.7, -0.25], [1.2, 0.7, 0.25])
}

pub(crate) fn sample_genus3<R: Rng>(rng: &mut R) -> [f64; 3] {
    sample_implicit(rng, genus3_fn, [-2.05, -2.05, -0.45], [2.05, 2.05, 0.45])
}

/// Control polygon of the closed cat-head outline (two ears on top).
pub fn cat_curve_control_points() -> &'static [[f64; 2]] {
    &[
        [0.0, -1.0],
        [0.5, -0.95],
        [0.85, -0.7],
        [1.0, -0.3],
        [1.0, 0.15],
        [0.9, 0.5],
        [1.0, 1.1],
        [0.6, 0.75],
        [0.3, 0.7],
        [0.0, 0.72],
        [-0.3, 0.7],
        [-0.6, 0.75],
        [-1.0, 1.1],
        [-0.9, 0.5],
        [-1.0, 0.15],
        [-1.0, -0.3],
        [-0.85, -0.7],
        [-0.5, -0.95],
    ]
}

/// Periodic uniform Catmull-Rom spline through the control points with an
/// arc-length lookup table.
pub(crate) struct CatCurve {
    ctrl: &'static [[f64; 2]],
    /// Cumulative arc length at `TABLE_STEPS` equal parameter steps.
    cumulative: Vec<f64>,
}

const TABLE_STEPS: usize = 200;

impl CatCurve {
    pub(crate) fn new() -> Self {
        let ctrl = cat_curve_control_points();
        let total_steps = ctrl.len() * TABLE_STEPS;
        let mut cumulative = Vec::with_capacity(total_steps + 1);
        cumulative.push(0.0);
        let mut prev = Self::eval(ctrl, 0.0);
        for k in 1..=total_steps {
            let p = Self::eval(ctrl, k as f64 / TABLE_STEPS as f64);
            let step = ((p[0] - prev[0]).powi(2) + (p[1] - prev[1]).powi(2)).sqrt();
            cumulative.push(cumulative[k - 1] + step);
            prev = p;
        }
        CatCurve { ctrl, cumulative }
    }

    /// Point at spline parameter `t ∈ [0, n)` (segment index + fraction).
    fn eval(ctrl: &[[f64; 2]], t: f64) -> [f64; 2] {
        let n = ctrl.len();
        let seg = (t.floor() as usize) % n;
        let s = t - t.floor();
        let p = |k: isize| ctrl[(seg as isize + k).rem_euclid(n as isize) as usize];
        let (p0, p1, p2, p3) = (p(-1), p(0), p(1), p(2));
        let mut out = [0.0; 2];
        for i in 0..2 {
            out[i] = 0.5
                * (2.0 * p1[i]
                    + (-p0[i] + p2[i]) * s
                    + (2.0 * p0[i] - 5.0 * p1[i] + 4.0 * p2[i] - p3[i]) * s * s
                    + (-p0[i] + 3.0 * p1[i] - 3.0 * p2[i] + p3[i]) * s * s * s);
        }
        out
    }

    pub(crate) fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Point at normalized arc length `s ∈ [0, 1)`.
    pub(crate) fn at_arclength(&self, s: f64) -> [f64; 2] {
        let target = s.rem_euclid(1.0) * self.length();
        let k = self
            .cumulative
            .partition_point(|&c| c <= target)
            .clamp(1, self.cumulative.len() - 1);
        let (a, b) = (self.cumulative[k - 1], self.cumulative[k]);
        let frac = if b > a { (target - a) / (b - a) } else { 0.0 };
        Self::eval(
            self.ctrl,
            (k - 1) as f64 / TABLE_STEPS as f64 + frac / TABLE_STEPS as f64,
        )
    }
}
