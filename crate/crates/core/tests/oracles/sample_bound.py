"""Arbitrary-precision reference values for the sample-count bound.

Prints Rust tuples (d, tau, C, eps, nu, beta1, beta2, n_real) for the grid
used in tests/simplicial.rs.
"""
from mpmath import mp, mpf, ceil, log, pi

mp.dps = 50


def bound(d, tau, c, eps, nu):
    d, tau, c, eps, nu = map(mpf, (d, tau, c, eps, nu))
    b1 = c * (eps / 4) ** (-d) * (1 - (eps / (8 * tau)) ** 2) ** (-d / 2)
    b2 = c * (eps / 8) ** (-d) * (1 - (eps / (16 * tau)) ** 2) ** (-d / 2)
    return b1, b2, b1 * (log(b2) + log(1 / nu))


cases = [(d, 1, 4, e, nu) for d in (1, 2, 3) for e in ("0.05", "0.1", "0.3") for nu in ("0.01", "0.1", "0.5")]
cases.append((1, 1, pi, "0.4", "0.1"))
for d, tau, c, e, nu in cases:
    b1, b2, n = bound(d, tau, c, e, nu)
    cs = "std::f64::consts::PI" if c is pi else f"{c}.0"
    print(f"    ({d}, {tau}.0, {cs}, {e}, {nu}, {mp.nstr(b1, 17)}, {mp.nstr(b2, 17)}, {mp.nstr(n, 17)}, {int(ceil(n))}),")
