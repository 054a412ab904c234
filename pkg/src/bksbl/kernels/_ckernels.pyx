# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``bksbl.kernels.pykernels``.

Same algorithms, same operation order; see the Python module for the
commentary.  Scalar entry points are ``cpdef`` so both backends expose
an identical surface.
"""

from libc.math cimport (acos, cbrt, copysign, cos, cosh, exp, fabs, floor,
                        isfinite, log, log1p, pow, sin, sinh, sqrt, tgamma)

import numpy as np

BACKEND_NAME = "compiled"

cdef double _EPS = 2.2204460492503131e-16
cdef int _MAXIT = 20000
cdef double _PI = 3.14159265358979323846
cdef double _RESCALE = 1e250
cdef double _LOG_RESCALE = log(1e250)

cdef double _A1 = 0.57721566490153286061
cdef double _A3 = -0.04200263503409523553
cdef double _A5 = -0.04219773455554433675
cdef double _A7 = 0.00721894324666309954


cdef inline void _temme_gam12(double mu, double* gam1, double* gam2,
                              double* gampl, double* gammi) nogil:
    cdef double mu2
    gampl[0] = 1.0 / tgamma(1.0 + mu)
    gammi[0] = 1.0 / tgamma(1.0 - mu)
    gam2[0] = 0.5 * (gammi[0] + gampl[0])
    if fabs(mu) < 1e-2:
        mu2 = mu * mu
        gam1[0] = -(_A1 + mu2 * (_A3 + mu2 * (_A5 + mu2 * _A7)))
    else:
        gam1[0] = (gammi[0] - gampl[0]) / (2.0 * mu)


cdef int _kv_pair_small_x(double mu, double x, double* kmu, double* kmu1) nogil:
    cdef double x2 = 0.5 * x
    cdef double pimu = _PI * mu
    cdef double fact = 1.0 if fabs(pimu) < _EPS else pimu / sin(pimu)
    cdef double d = -log(x2)
    cdef double e = mu * d
    cdef double fact2 = 1.0 if fabs(e) < _EPS else sinh(e) / e
    cdef double gam1, gam2, gampl, gammi
    cdef double ff, ksum, p, q, c, dl, ksum1, mu2, scale
    cdef int i
    _temme_gam12(mu, &gam1, &gam2, &gampl, &gammi)
    ff = fact * (gam1 * cosh(e) + gam2 * fact2 * d)
    ksum = ff
    e = exp(e)
    p = 0.5 * e / gampl
    q = 0.5 / (e * gammi)
    c = 1.0
    d = x2 * x2
    ksum1 = p
    mu2 = mu * mu
    for i in range(1, _MAXIT + 1):
        ff = (i * ff + p + q) / (i * i - mu2)
        c *= d / i
        p /= i - mu
        q /= i + mu
        dl = c * ff
        ksum += dl
        ksum1 += c * (p - i * ff)
        if fabs(dl) < fabs(ksum) * _EPS:
            break
    scale = exp(x)
    kmu[0] = ksum * scale
    kmu1[0] = ksum1 * (2.0 / x) * scale
    return 0


cdef int _kv_pair_large_x(double mu, double x, double* kmu, double* kmu1) nogil:
    cdef double b = 2.0 * (1.0 + x)
    cdef double d = 1.0 / b
    cdef double h = d
    cdef double delh = d
    cdef double q1 = 0.0
    cdef double q2 = 1.0
    cdef double a1 = 0.25 - mu * mu
    cdef double q = a1
    cdef double c = a1
    cdef double a = -a1
    cdef double s = 1.0 + q * delh
    cdef double qnew, dels
    cdef int i
    for i in range(2, _MAXIT + 1):
        a -= 2.0 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if fabs(dels / s) <= _EPS:
            break
    h = a1 * h
    kmu[0] = sqrt(_PI / (2.0 * x)) / s
    kmu1[0] = kmu[0] * (mu + x + 0.5 - h) / x
    return 0


cdef double _log_kv(double nu, double x) nogil:
    cdef double half, kmu, kmu1, mu, offset, xi2, ktemp
    cdef int n, i
    nu = fabs(nu)
    half = nu + 0.5
    if half == floor(half) and nu <= 1e8:
        n = <int> (nu - 0.5 + 0.5)
        kmu = sqrt(_PI / (2.0 * x))
        kmu1 = kmu * (1.0 + 1.0 / x)
        mu = 0.5
    else:
        n = <int> (nu + 0.5)
        mu = nu - n
        if x <= 2.0:
            _kv_pair_small_x(mu, x, &kmu, &kmu1)
        else:
            _kv_pair_large_x(mu, x, &kmu, &kmu1)
    offset = 0.0
    xi2 = 2.0 / x
    for i in range(1, n + 1):
        ktemp = (mu + i) * xi2 * kmu1 + kmu
        kmu = kmu1
        kmu1 = ktemp
        if kmu1 > _RESCALE:
            kmu /= _RESCALE
            kmu1 /= _RESCALE
            offset += _LOG_RESCALE
    return log(kmu) + offset - x


cpdef double log_kv(double nu, double x) except? -1e308:
    if not (x > 0.0) or not isfinite(x) or not isfinite(nu):
        raise ValueError("log_kv requires finite nu and x > 0, got nu=%r x=%r" % (nu, x))
    return _log_kv(nu, x)


cpdef double kv_ratio(double nu, double shift, double x) except? -1e308:
    if not (x > 0.0) or not isfinite(x) or not isfinite(nu):
        raise ValueError("log_kv requires finite nu and x > 0, got nu=%r x=%r" % (nu, x))
    return exp(_log_kv(nu + shift, x) - _log_kv(nu, x))


cpdef tuple gig_moments(double p, double u, double v):
    if not (u > 0.0 and v > 0.0):
        raise ValueError("gig_moments requires u > 0 and v > 0")
    cdef double z = sqrt(u * v)
    cdef double lr = 0.5 * (log(v) - log(u))
    cdef double lkp = _log_kv(p, z)
    cdef double mean = exp(lr + _log_kv(p + 1.0, z) - lkp)
    cdef double inv_mean = exp(-lr + _log_kv(p - 1.0, z) - lkp)
    return mean, inv_mean


def gig_moments_batch(p, u, v):
    cdef double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = uv.shape[0]
    mean = np.empty(n)
    inv_mean = np.empty(n)
    cdef double[::1] mv = mean
    cdef double[::1] iv = inv_mean
    cdef double pp = p
    cdef double z, lr, lkp
    cdef Py_ssize_t i
    for i in range(n):
        if not (uv[i] > 0.0 and vv[i] > 0.0):
            raise ValueError("gig_moments requires u > 0 and v > 0")
        z = sqrt(uv[i] * vv[i])
        lr = 0.5 * (log(vv[i]) - log(uv[i]))
        lkp = _log_kv(pp, z)
        mv[i] = exp(lr + _log_kv(pp + 1.0, z) - lkp)
        iv[i] = exp(-lr + _log_kv(pp - 1.0, z) - lkp)
    return mean, inv_mean


cdef double _ell(double gamma, double s, double q2, double eta,
                 double eps, double rho) nogil:
    cdef double val
    val = -rho * log1p(gamma * s) + rho * q2 * gamma / (1.0 + gamma * s) - eta * gamma
    if eps != 1.0:
        val += (eps - 1.0) * log(gamma)
    return val


cpdef double ell(double gamma, double s, double q2, double eta,
                 double eps, double rho) except? -1e308:
    if gamma < 0.0:
        raise ValueError("ell requires gamma >= 0")
    if gamma == 0.0:
        if eps >= 1.0:
            return 0.0
        raise ValueError("l(0) diverges for eps < 1")
    return _ell(gamma, s, q2, eta, eps, rho)


cdef inline double _poly_val(double a3, double a2, double a1, double a0,
                             double x) nogil:
    return ((a3 * x + a2) * x + a1) * x + a0


cdef inline double _poly_deriv(double a3, double a2, double a1, double x) nogil:
    return (3.0 * a3 * x + 2.0 * a2) * x + a1


cdef double _refine_root(double a3, double a2, double a1, double a0,
                         double x, double lo, double hi) nogil:
    cdef double fp, x1, scale, flo, mid, fmid, m1
    cdef int it
    fp = _poly_deriv(a3, a2, a1, x)
    if fp != 0.0:
        x1 = x - _poly_val(a3, a2, a1, a0, x) / fp
        if lo < x1 < hi:
            x = x1
    m1 = fabs(a3) * x * x * x
    scale = 1.0 + m1
    m1 = fabs(a2) * x * x
    if m1 > scale - 1.0:
        scale = 1.0 + m1
    m1 = fabs(a1) * x
    if m1 > scale - 1.0:
        scale = 1.0 + m1
    m1 = fabs(a0)
    if m1 > scale - 1.0:
        scale = 1.0 + m1
    if fabs(_poly_val(a3, a2, a1, a0, x)) <= 1e-10 * scale:
        return x
    flo = _poly_val(a3, a2, a1, a0, lo)
    if flo == 0.0:
        return lo
    for it in range(200):
        mid = 0.5 * (lo + hi)
        fmid = _poly_val(a3, a2, a1, a0, mid)
        if fmid == 0.0 or (hi - lo) <= 1e-15 * max(1.0, fabs(mid)):
            return mid
        if (fmid > 0.0) == (flo > 0.0):
            lo = mid
            flo = fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


cdef int _quadratic_pos_roots(double a2, double a1, double a0,
                              double* r1, double* r2) nogil:
    cdef double disc = a1 * a1 - 4.0 * a2 * a0
    cdef double sq, qq, t
    if disc < 0.0:
        return 0
    sq = sqrt(disc)
    qq = -0.5 * (a1 + copysign(sq, a1))
    if qq != 0.0:
        r1[0] = qq / a2
        r2[0] = a0 / qq
    else:
        r1[0] = 0.0
        r2[0] = 0.0
    if r1[0] > r2[0]:
        t = r1[0]
        r1[0] = r2[0]
        r2[0] = t
    return 2


cdef int _cubic_real_roots(double a3, double a2, double a1, double a0,
                           double* out) nogil:
    cdef double p_ = a2 / a3
    cdef double q_ = a1 / a3
    cdef double r_ = a0 / a3
    cdef double pp = q_ - p_ * p_ / 3.0
    cdef double qq = 2.0 * p_ * p_ * p_ / 27.0 - p_ * q_ / 3.0 + r_
    cdef double shift = -p_ / 3.0
    cdef double disc = 0.25 * qq * qq + pp * pp * pp / 27.0
    cdef double sq, u, uc, t, m, arg, theta, ra, rb, rc
    if disc > 0.0:
        sq = sqrt(disc)
        u = -0.5 * qq + sq
        uc = copysign(cbrt(fabs(u)), u)
        if uc != 0.0:
            t = uc - pp / (3.0 * uc)
        else:
            t = 0.0
        out[0] = t + shift
        return 1
    if pp >= 0.0:
        out[0] = shift + copysign(cbrt(fabs(qq)), -qq)
        return 1
    m = 2.0 * sqrt(-pp / 3.0)
    arg = 3.0 * qq / (pp * m)
    if arg > 1.0:
        arg = 1.0
    elif arg < -1.0:
        arg = -1.0
    theta = acos(arg) / 3.0
    ra = m * cos(theta) + shift
    rb = m * cos(theta - 2.0 * _PI / 3.0) + shift
    rc = m * cos(theta - 4.0 * _PI / 3.0) + shift
    # sort ascending
    if ra > rb:
        t = ra; ra = rb; rb = t
    if rb > rc:
        t = rb; rb = rc; rc = t
    if ra > rb:
        t = ra; ra = rb; rb = t
    out[0] = ra
    out[1] = rb
    out[2] = rc
    return 3


cdef double _gamma_stationary(double s, double q2, double eta, double eps,
                              double rho) nogil except -1.0:
    cdef double srho, delta, g, a3, a2, a1, a0
    cdef double roots[3]
    cdef double r1, r2, vertex, d, hi
    cdef int nroots, i, npos

    if eps == 1.0:
        if eta == 0.0:
            if q2 > s:
                return (q2 - s) / (s * s)
            return 0.0
        if q2 - s > eta / rho:
            srho = s * rho
            delta = (srho + 2.0 * eta) * (srho + 2.0 * eta) \
                - 4.0 * eta * (eta + srho - rho * q2)
            if delta < 0.0:
                delta = 0.0
            g = (-(srho + 2.0 * eta) + sqrt(delta)) / (2.0 * s * eta)
            return g if g > 0.0 else 0.0
        return 0.0

    a3 = -eta * s * s
    a2 = -((1.0 - eps + rho) * s * s + 2.0 * eta * s)
    a1 = 2.0 * (eps - 1.0) * s - s * rho + rho * q2 - eta
    a0 = eps - 1.0

    if eps < 1.0:
        if eta == 0.0:
            nroots = _quadratic_pos_roots(a2, a1, a0, &r1, &r2)
            if nroots < 2 or r2 <= 0.0 or r1 <= 0.0:
                return 0.0
            vertex = -0.5 * a1 / a2
        else:
            nroots = _cubic_real_roots(a3, a2, a1, a0, roots)
            npos = 0
            for i in range(nroots):
                if roots[i] > 0.0:
                    npos += 1
            if npos < 2:
                return 0.0
            r2 = roots[nroots - 1]
            r1 = roots[nroots - 2]
            d = a2 * a2 - 3.0 * a3 * a1
            if d <= 0.0:
                return 0.0
            vertex = (-a2 - sqrt(d)) / (3.0 * a3)
        if r2 - r1 <= 1e-9 * max(1.0, r2):
            return 0.0
        hi = max(2.0 * r2, vertex + 2.0 * (r2 - vertex))
        g = _refine_root(a3, a2, a1, a0, r2, max(vertex, r1), hi)
        if g <= 0.0:
            return 0.0
        if _ell(g, s, q2, eta, eps, rho) <= 0.0:
            return 0.0
        return g

    if eta == 0.0:
        if a2 == 0.0:
            if a1 >= 0.0:
                with gil:
                    raise ValueError(
                        "no finite maximizer: eps == 1+rho with eta == 0"
                    )
            return -a0 / a1
        nroots = _quadratic_pos_roots(a2, a1, a0, &r1, &r2)
        if nroots == 2:
            roots[0] = r1
            roots[1] = r2
    else:
        nroots = _cubic_real_roots(a3, a2, a1, a0, roots)
    g = 0.0
    for i in range(nroots):
        if roots[i] > g:
            g = roots[i]
    if g <= 0.0:
        hi = 1.0
        while _poly_val(a3, a2, a1, a0, hi) > 0.0 and hi < 1e300:
            hi *= 2.0
        return _refine_root(a3, a2, a1, a0, 0.5 * hi, 0.0, hi)
    hi = 2.0 * g
    while _poly_val(a3, a2, a1, a0, hi) > 0.0 and hi < 1e300:
        hi *= 2.0
    return _refine_root(a3, a2, a1, a0, g, 0.0, hi)


cpdef double gamma_stationary(double s, double q2, double eta, double eps,
                              double rho) except? -1e308:
    if not (s > 0.0) or q2 < 0.0 or eta < 0.0:
        raise ValueError("gamma_stationary requires s > 0, q2 >= 0, eta >= 0")
    if eps < 0.0 or eps > 1.0 + rho:
        raise ValueError("epsilon outside the supported range [0, 1+rho]")
    return _gamma_stationary(s, q2, eta, eps, rho)


def gamma_stationary_batch(s, q2, eta, double eps, double rho):
    cdef double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
    cdef double[::1] qv = np.ascontiguousarray(q2, dtype=np.float64)
    cdef double[::1] ev = np.ascontiguousarray(eta, dtype=np.float64)
    cdef Py_ssize_t n = sv.shape[0]
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    if eps < 0.0 or eps > 1.0 + rho:
        raise ValueError("epsilon outside the supported range [0, 1+rho]")
    for i in range(n):
        if not (sv[i] > 0.0) or qv[i] < 0.0 or ev[i] < 0.0:
            raise ValueError("gamma_stationary requires s > 0, q2 >= 0, eta >= 0")
        ov[i] = _gamma_stationary(sv[i], qv[i], ev[i], eps, rho)
    return out


def ell_batch(gamma, s, q2, eta, double eps, double rho):
    cdef double[::1] gv = np.ascontiguousarray(gamma, dtype=np.float64)
    cdef double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
    cdef double[::1] qv = np.ascontiguousarray(q2, dtype=np.float64)
    cdef double[::1] ev = np.ascontiguousarray(eta, dtype=np.float64)
    cdef Py_ssize_t n = gv.shape[0]
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(n):
        if gv[i] < 0.0:
            raise ValueError("ell requires gamma >= 0")
        if gv[i] == 0.0:
            if eps >= 1.0:
                ov[i] = 0.0
            else:
                raise ValueError("l(0) diverges for eps < 1")
        else:
            ov[i] = _ell(gv[i], sv[i], qv[i], ev[i], eps, rho)
    return out
