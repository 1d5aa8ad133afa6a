//! Dense kernels shared by the graph ops: GEMM and power iteration.

/// `c (+)= op(a) * op(b)` where `op` optionally transposes.
///
/// `a` is stored row-major as `[m, k]` (or `[k, m]` when `trans_a`), `b` as
/// `[k, n]` (or `[n, k]` when `trans_b`), and `c` as `[m, n]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.iter_mut().for_each(|x| *x = 0.0);
        }
        return;
    }
    let (rsa, csa) = if trans_a {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above guarantee every strided access stays within
    // the slices: a is m*k, b is k*n and c is m*n with the strides chosen to
    // match their row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Deterministic non-degenerate start vector for power iteration.
pub(crate) fn default_start(len: usize) -> Vec<f64> {
    let mut u: Vec<f64> = (0..len)
        .map(|i| 1.0 + 0.5 * ((i as f64) * 0.754_877_666).sin())
        .collect();
    normalize(&mut u);
    u
}

/// Power iteration for the largest singular value of the row-major
/// `[rows, cols]` matrix `w`.
///
/// `u` is the persistent left singular vector estimate; it is replaced when
/// its length does not match or it is degenerate. Returns `(sigma, u, v)`
/// where `sigma = uᵀ W v`. A zero matrix yields `sigma = 0` with zero vectors.
pub fn power_iteration(
    w: &[f64],
    rows: usize,
    cols: usize,
    u: &mut Vec<f64>,
    iters: usize,
) -> (f64, Vec<f64>, Vec<f64>) {
    assert_eq!(w.len(), rows * cols);
    if w.iter().all(|&x| x == 0.0) {
        return (0.0, vec![0.0; rows], vec![0.0; cols]);
    }
    if u.len() != rows || !u.iter().all(|x| x.is_finite()) || normalize(u) == 0.0 {
        *u = default_start(rows);
    }
    let mut v = vec![0.0; cols];
    let mut sigma = 0.0;
    for _ in 0..iters.max(1) {
        // v = Wᵀ u
        gemm(1, rows, cols, u, false, w, false, &mut v, false);
        if normalize(&mut v) == 0.0 {
            // u landed in the left null space; restart from the fixed seed
            *u = default_start(rows);
            gemm(1, rows, cols, u, false, w, false, &mut v, false);
            if normalize(&mut v) == 0.0 {
                v = default_start(cols);
            }
        }
        // u = W v
        gemm(rows, cols, 1, w, false, &v, false, u, false);
        sigma = normalize(u);
        if sigma == 0.0 {
            *u = default_start(rows);
        }
    }
    (sigma, u.clone(), v)
}
