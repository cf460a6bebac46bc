# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twin of ``_reference.py``; keep the two in lockstep.

Same profile-likelihood reduction, same grid/golden-section/bisection
schedule. Differences against the reference are limited to summation
order (sequential here, pairwise in NumPy), so results agree to
rounding noise.
"""

from libc.math cimport INFINITY, exp, expm1, fabs, isfinite, log, log1p, pow, sqrt
from libc.stdlib cimport qsort

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "compiled"

XI_MIN = -0.5
XI_MAX = 2.0
XI_ZERO_TOL = 1e-8

cdef double _XI_MIN = -0.5
cdef double _XI_MAX = 2.0
cdef double _XI_ZERO = 1e-8
cdef int _N_GRID = 48
cdef int _GOLDEN_ITERS = 80
cdef int _BISECT_ITERS = 100
cdef double _Z_CLAMP = 1e-12
cdef double _INVPHI = (sqrt(5.0) - 1.0) / 2.0


cdef double _xi_of(double theta, const double* y, Py_ssize_t n) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        s += log1p(theta * y[i])
    return s / n


cdef double _prof_nll(double theta, const double* y, Py_ssize_t n,
                      double nll_exp) noexcept nogil:
    cdef double xi, ratio
    if theta == 0.0:
        return nll_exp
    xi = _xi_of(theta, y, n)
    ratio = xi / theta
    if not (ratio > 0.0 and isfinite(ratio)):
        return INFINITY
    return log(ratio) + xi + 1.0


cdef double _bisect_xi(const double* y, Py_ssize_t n, double target,
                       double lo, double hi) noexcept nogil:
    cdef double mid
    cdef int it
    for it in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if _xi_of(mid, y, n) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


cdef void _fit(const double* y, Py_ssize_t n, double* out_sigma,
               double* out_xi) noexcept nogil:
    cdef double ymax = y[0]
    cdef double ssum = 0.0
    cdef Py_ssize_t i
    cdef int j, k
    for i in range(n):
        ssum += y[i]
        if y[i] > ymax:
            ymax = y[i]
    cdef double ybar = ssum / n
    cdef double nll_exp = log(ybar) + 1.0

    # increasing grid on both sides of zero (log-spaced, 48 points each)
    cdef double[96] thetas
    cdef double g_lo = log(1e-12)
    cdef double g_hi = log(0.999)
    cdef double step = (g_hi - g_lo) / (_N_GRID - 1)
    for j in range(_N_GRID):
        thetas[j] = -(1.0 - exp(g_lo + step * j)) / ymax
    cdef double phi_hi = 64.0
    while _xi_of(phi_hi / ybar, y, n) < _XI_MAX and phi_hi < 2.0 ** 48:
        phi_hi *= 4.0
    cdef double p_lo = log(1e-8)
    cdef double p_hi = log(phi_hi)
    step = (p_hi - p_lo) / (_N_GRID - 1)
    for j in range(_N_GRID):
        thetas[_N_GRID + j] = exp(p_lo + step * j) / ybar

    cdef double best = INFINITY
    cdef double f
    k = 0
    for j in range(2 * _N_GRID):
        f = _prof_nll(thetas[j], y, n, nll_exp)
        if f < best:
            best = f
            k = j

    cdef double a, b, c, d, fc, fd
    if nll_exp < best:
        a = thetas[_N_GRID - 1]
        b = thetas[_N_GRID]
    else:
        a = thetas[k - 1] if k > 0 else thetas[0]
        b = thetas[k + 1] if k < 2 * _N_GRID - 1 else thetas[2 * _N_GRID - 1]

    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = _prof_nll(c, y, n, nll_exp)
    fd = _prof_nll(d, y, n, nll_exp)
    for j in range(_GOLDEN_ITERS):
        if fc < fd:
            b = d
            d = c
            fd = fc
            c = b - _INVPHI * (b - a)
            fc = _prof_nll(c, y, n, nll_exp)
        else:
            a = c
            c = d
            fc = fd
            d = a + _INVPHI * (b - a)
            fd = _prof_nll(d, y, n, nll_exp)
    cdef double theta = 0.5 * (a + b)

    if theta == 0.0 or nll_exp <= _prof_nll(theta, y, n, nll_exp):
        out_sigma[0] = ybar
        out_xi[0] = 0.0
        return
    cdef double xi = _xi_of(theta, y, n)
    if xi > _XI_MAX:
        theta = _bisect_xi(y, n, _XI_MAX, 1e-300, theta)
        xi = _xi_of(theta, y, n)
    elif xi <= _XI_MIN:
        theta = _bisect_xi(y, n, _XI_MIN + 1e-9, theta, -1e-300)
        xi = _xi_of(theta, y, n)
    if xi == 0.0:
        out_sigma[0] = ybar
        out_xi[0] = 0.0
        return
    out_sigma[0] = xi / theta
    out_xi[0] = xi


cdef int _cmp_double(const void* pa, const void* pb) noexcept nogil:
    cdef double x = (<const double*> pa)[0]
    cdef double v = (<const double*> pb)[0]
    if x < v:
        return -1
    if x > v:
        return 1
    return 0


cdef double _ad_stat_sorted(const double* xs, Py_ssize_t n, double sigma,
                            double xi) noexcept nogil:
    # xs must be sorted ascending; threshold is 0
    cdef double s = 0.0
    cdef double zi, zr, t
    cdef Py_ssize_t i
    for i in range(n):
        if fabs(xi) > _XI_ZERO:
            t = 1.0 + xi * xs[i] / sigma
            zi = 1.0 - pow(t, -1.0 / xi) if t > 0.0 else 1.0
            t = 1.0 + xi * xs[n - 1 - i] / sigma
            zr = 1.0 - pow(t, -1.0 / xi) if t > 0.0 else 1.0
        else:
            zi = -expm1(-xs[i] / sigma)
            zr = -expm1(-xs[n - 1 - i] / sigma)
        if zi < _Z_CLAMP:
            zi = _Z_CLAMP
        elif zi > 1.0 - _Z_CLAMP:
            zi = 1.0 - _Z_CLAMP
        if zr < _Z_CLAMP:
            zr = _Z_CLAMP
        elif zr > 1.0 - _Z_CLAMP:
            zr = 1.0 - _Z_CLAMP
        s += (2.0 * (i + 1) - 1.0) * (log(zi) + log1p(-zr))
    return -<double> n - s / n


def fit_gpd(y):
    """Constrained ML fit (sigma, xi) to positive exceedance magnitudes."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] arr = np.ascontiguousarray(y, dtype=np.float64)
    cdef double sigma = 0.0
    cdef double xi = 0.0
    with nogil:
        _fit(<const double*> arr.data, arr.shape[0], &sigma, &xi)
    return sigma, xi


def ad_statistic(x, double sigma, double xi):
    """Anderson-Darling A^2 of exceedances against GPD(sigma, xi)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.sort(np.asarray(x, dtype=np.float64))
    cdef double out
    with nogil:
        out = _ad_stat_sorted(<const double*> xs.data, xs.shape[0], sigma, xi)
    return out


def ad_bootstrap_count(uniforms, double sigma, double xi, double a2_obs):
    """Parametric-bootstrap tally: replicates with refit A^2 >= observed."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] u = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t n_boot = u.shape[0]
    cdef Py_ssize_t n = u.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf = np.empty(n, dtype=np.float64)
    cdef double* x = <double*> buf.data
    cdef const double* urow
    cdef int n_ge = 0
    cdef int n_failed = 0
    cdef Py_ssize_t j, i
    cdef double s_b, xi_b, a2, xmin, xmax
    cdef bint bad
    with nogil:
        for j in range(n_boot):
            urow = (<const double*> u.data) + j * n
            bad = False
            if fabs(xi) > _XI_ZERO:
                for i in range(n):
                    x[i] = sigma / xi * (pow(1.0 - urow[i], -xi) - 1.0)
            else:
                for i in range(n):
                    x[i] = -sigma * log1p(-urow[i])
            xmin = x[0]
            xmax = x[0]
            for i in range(n):
                if not isfinite(x[i]) or x[i] <= 0.0:
                    bad = True
                    break
                if x[i] < xmin:
                    xmin = x[i]
                if x[i] > xmax:
                    xmax = x[i]
            if bad or xmin == xmax:
                n_failed += 1
                continue
            _fit(x, n, &s_b, &xi_b)
            qsort(x, n, sizeof(double), _cmp_double)
            a2 = _ad_stat_sorted(x, n, s_b, xi_b)
            if not isfinite(a2):
                n_failed += 1
            elif a2 >= a2_obs:
                n_ge += 1
    return n_ge, n_failed
