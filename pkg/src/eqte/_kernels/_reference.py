"""Reference (pure NumPy) implementations of the tail kernels.

Mirrors ``_gpdcore.pyx`` step for step; any change here must be applied
there as well. The shape parameter is constrained to (XI_MIN, XI_MAX].
The fit reduces the two-parameter likelihood to a one-dimensional profile
in theta = xi/sigma: given theta, the optimal shape is
xi(theta) = mean(log1p(theta * y)), and the profiled negative
log-likelihood per observation is log(xi/theta) + xi + 1.
"""

from __future__ import annotations

import numpy as np

NAME = "reference"

XI_MIN = -0.5
XI_MAX = 2.0
XI_ZERO_TOL = 1e-8  # |xi| below this uses the exponential limit

_N_GRID = 48  # grid points on each side of theta = 0
_GOLDEN_ITERS = 80
_BISECT_ITERS = 100
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0
_Z_CLAMP = 1e-12


def _xi_of(theta: float, y: np.ndarray) -> float:
    return float(np.mean(np.log1p(theta * y)))


def _prof_nll(theta: float, y: np.ndarray, nll_exp: float) -> float:
    if theta == 0.0:
        return nll_exp
    xi = _xi_of(theta, y)
    ratio = xi / theta
    if not (ratio > 0.0 and np.isfinite(ratio)):
        return np.inf
    return float(np.log(ratio) + xi + 1.0)


def _bisect_xi(y: np.ndarray, target: float, lo: float, hi: float) -> float:
    # xi(theta) is increasing; keep xi(lo) < target <= xi(hi)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if _xi_of(mid, y) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fit_gpd(y: np.ndarray) -> tuple[float, float]:
    """Constrained ML fit (sigma, xi) to positive exceedance magnitudes.

    Caller guarantees: all values strictly positive and not all equal.
    """
    y = np.ascontiguousarray(y, dtype=float)
    ymax = float(y.max())
    ybar = float(y.mean())
    nll_exp = float(np.log(ybar) + 1.0)

    # increasing grid of candidate thetas on both sides of zero
    gaps = np.geomspace(1e-12, 0.999, _N_GRID)
    neg = -(1.0 - gaps) / ymax
    phi_hi = 64.0
    while _xi_of(phi_hi / ybar, y) < XI_MAX and phi_hi < 2.0**48:
        phi_hi *= 4.0
    pos = np.geomspace(1e-8, phi_hi, _N_GRID) / ybar
    thetas = np.concatenate([neg, pos])

    vals = np.log1p(thetas[:, None] * y[None, :]).mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = vals / thetas
        f = np.where(
            (ratios > 0.0) & np.isfinite(ratios),
            np.log(ratios) + vals + 1.0,
            np.inf,
        )
    k = int(np.argmin(f))
    if nll_exp < f[k]:
        a, b = neg[-1], pos[0]
    else:
        a = thetas[max(k - 1, 0)]
        b = thetas[min(k + 1, thetas.size - 1)]

    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = _prof_nll(c, y, nll_exp)
    fd = _prof_nll(d, y, nll_exp)
    for _ in range(_GOLDEN_ITERS):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = _prof_nll(c, y, nll_exp)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = _prof_nll(d, y, nll_exp)
    theta = 0.5 * (a + b)

    if theta == 0.0 or nll_exp <= _prof_nll(theta, y, nll_exp):
        return ybar, 0.0
    xi = _xi_of(theta, y)
    if xi > XI_MAX:
        theta = _bisect_xi(y, XI_MAX, 1e-300, theta)
        xi = _xi_of(theta, y)
    elif xi <= XI_MIN:
        theta = _bisect_xi(y, XI_MIN + 1e-9, theta, -1e-300)
        xi = _xi_of(theta, y)
    if xi == 0.0:
        return ybar, 0.0
    return xi / theta, xi


def _cdf0(x: np.ndarray, sigma: float, xi: float) -> np.ndarray:
    # GPD cdf above threshold 0; values beyond a finite endpoint map to 1
    if abs(xi) > XI_ZERO_TOL:
        t = 1.0 + xi * x / sigma
        z = np.where(t > 0.0, 1.0 - np.power(np.maximum(t, 1e-300), -1.0 / xi), 1.0)
    else:
        z = -np.expm1(-x / sigma)
    return z


def ad_statistic(x: np.ndarray, sigma: float, xi: float) -> float:
    """Anderson-Darling A^2 of exceedances against GPD(sigma, xi)."""
    xs = np.sort(np.asarray(x, dtype=float))
    n = xs.size
    z = np.clip(_cdf0(xs, sigma, xi), _Z_CLAMP, 1.0 - _Z_CLAMP)
    i = np.arange(1, n + 1)
    s = np.sum((2.0 * i - 1.0) * (np.log(z) + np.log1p(-z[::-1])))
    return float(-n - s / n)


def ad_bootstrap_count(
    uniforms: np.ndarray, sigma: float, xi: float, a2_obs: float
) -> tuple[int, int]:
    """Parametric-bootstrap tally: replicates with refit A^2 >= observed.

    Row j of ``uniforms`` drives replicate j (sample, refit, restatistic).
    Returns (count at or above observed, failed replicates).
    """
    n_ge = 0
    n_failed = 0
    for u in uniforms:
        if abs(xi) > XI_ZERO_TOL:
            x = sigma / xi * (np.power(1.0 - u, -xi) - 1.0)
        else:
            x = -sigma * np.log1p(-u)
        if not np.all(np.isfinite(x)) or np.any(x <= 0.0) or x.min() == x.max():
            n_failed += 1
            continue
        s_b, xi_b = fit_gpd(x)
        a2 = ad_statistic(x, s_b, xi_b)
        if not np.isfinite(a2):
            n_failed += 1
        elif a2 >= a2_obs:
            n_ge += 1
    return n_ge, n_failed
