"""Pure-Python reference implementation of the hot numerical kernels.

Mirrored one-to-one by the compiled module ``bksbl.kernels._ckernels``;
the package selects between the two at import time (see ``__init__``).
Scalar functions use plain ``math`` so that both backends execute the
same floating-point operation sequence.

Kernels:

* ``log_kv`` -- log of the modified Bessel function of the second kind
  K_nu(x), real order, x > 0.  Temme's series for x <= 2, Steed's
  continued fraction for x > 2, half-integer closed forms, upward
  recurrence in the order with overflow rescaling.
* ``gamma_stationary`` -- stationary-point solve of the per-basis
  marginal log-likelihood l(gamma) for the sequential scheme, with the
  regime dispatch eps < 1 / eps == 1 / 1 < eps <= 1+rho.
* ``ell`` -- evaluation of l(gamma).
* ``gig_moments`` -- first and inverse-first moments of a generalized
  inverse Gaussian posterior via Bessel-K ratios in log space.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "python"

_EPS = 2.2204460492503131e-16
_MAXIT = 20000
_PI = math.pi
_EULER = 0.57721566490153286061

# Taylor coefficients of 1/Gamma(1+z) = sum a_k z^k (Abramowitz & Stegun
# 6.1.34, shifted); only odd ones enter the small-mu branch of _temme_gam12.
_A1 = 0.57721566490153286061
_A3 = -0.04200263503409523553
_A5 = -0.04219773455554433675
_A7 = 0.00721894324666309954


def _temme_gam12(mu):
    """Gamma1(mu), Gamma2(mu), 1/Gamma(1+mu), 1/Gamma(1-mu) for |mu| <= 1/2."""
    gampl = 1.0 / math.gamma(1.0 + mu)
    gammi = 1.0 / math.gamma(1.0 - mu)
    gam2 = 0.5 * (gammi + gampl)
    if abs(mu) < 1e-2:
        mu2 = mu * mu
        gam1 = -(_A1 + mu2 * (_A3 + mu2 * (_A5 + mu2 * _A7)))
    else:
        gam1 = (gammi - gampl) / (2.0 * mu)
    return gam1, gam2, gampl, gammi


def _kv_pair_small_x(mu, x):
    """Scaled pair (K_mu(x)*e^x, K_{mu+1}(x)*e^x) by Temme's series, x <= 2."""
    x2 = 0.5 * x
    pimu = _PI * mu
    fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
    d = -math.log(x2)
    e = mu * d
    fact2 = 1.0 if abs(e) < _EPS else math.sinh(e) / e
    gam1, gam2, gampl, gammi = _temme_gam12(mu)
    ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
    ksum = ff
    e = math.exp(e)
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
        if abs(dl) < abs(ksum) * _EPS:
            break
    scale = math.exp(x)
    return ksum * scale, ksum1 * (2.0 / x) * scale


def _kv_pair_large_x(mu, x):
    """Scaled pair (K_mu(x)*e^x, K_{mu+1}(x)*e^x) by Steed's CF2, x > 2."""
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1 = 0.0
    q2 = 1.0
    a1 = 0.25 - mu * mu
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
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
        if abs(dels / s) <= _EPS:
            break
    h = a1 * h
    kmu = math.sqrt(_PI / (2.0 * x)) / s
    kmu1 = kmu * (mu + x + 0.5 - h) / x
    return kmu, kmu1


_RESCALE = 1e250
_LOG_RESCALE = math.log(_RESCALE)


def log_kv(nu, x):
    """log K_nu(x) for real nu and x > 0.

    Does not overflow for large x (internally exp(+x)-scaled) nor for
    moderate orders at tiny x (rescaled upward recurrence).
    """
    if not (x > 0.0) or math.isinf(x) or math.isnan(x) or math.isnan(nu) or math.isinf(nu):
        raise ValueError("log_kv requires finite nu and x > 0, got nu=%r x=%r" % (nu, x))
    nu = abs(nu)
    half = nu + 0.5
    if half == math.floor(half) and nu <= 1e8:
        # half-integer order: exact closed form K_{1/2} and recurrence
        n = int(round(nu - 0.5))
        kmu = math.sqrt(_PI / (2.0 * x))
        kmu1 = kmu * (1.0 + 1.0 / x)
        mu = 0.5
    else:
        n = int(nu + 0.5)
        mu = nu - n
        if x <= 2.0:
            kmu, kmu1 = _kv_pair_small_x(mu, x)
        else:
            kmu, kmu1 = _kv_pair_large_x(mu, x)
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
    return math.log(kmu) + offset - x


def kv_ratio(nu, shift, x):
    """K_{nu+shift}(x) / K_nu(x) in log space (no raw K overflow)."""
    return math.exp(log_kv(nu + shift, x) - log_kv(nu, x))


def gig_moments(p, u, v):
    """(<gamma>, <gamma^-1>) of GIG(p, u, v), u > 0, v > 0.

    <gamma^n> = (v/u)^(n/2) K_{p+n}(sqrt(uv)) / K_p(sqrt(uv)).
    """
    if not (u > 0.0 and v > 0.0):
        raise ValueError("gig_moments requires u > 0 and v > 0")
    z = math.sqrt(u * v)
    lr = 0.5 * (math.log(v) - math.log(u))
    lkp = log_kv(p, z)
    mean = math.exp(lr + log_kv(p + 1.0, z) - lkp)
    inv_mean = math.exp(-lr + log_kv(p - 1.0, z) - lkp)
    return mean, inv_mean


def gig_moments_batch(p, u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n = u.shape[0]
    mean = np.empty(n)
    inv_mean = np.empty(n)
    for i in range(n):
        mean[i], inv_mean[i] = gig_moments(p, u[i], v[i])
    return mean, inv_mean


def ell(gamma, s, q2, eta, eps, rho):
    """Per-basis marginal log-likelihood contribution l(gamma).

    l(gamma) = -rho*log(1+gamma*s) + rho*q2*gamma/(1+gamma*s)
               + (eps-1)*log(gamma) - eta*gamma

    gamma == 0 returns the pruned-state score 0 for eps >= 1 and raises
    for eps < 1 (pole).
    """
    if gamma < 0.0:
        raise ValueError("ell requires gamma >= 0")
    if gamma == 0.0:
        if eps >= 1.0:
            return 0.0
        raise ValueError("l(0) diverges for eps < 1")
    val = -rho * math.log1p(gamma * s) + rho * q2 * gamma / (1.0 + gamma * s) - eta * gamma
    if eps != 1.0:
        val += (eps - 1.0) * math.log(gamma)
    return val


def _cubic_coeffs(s, q2, eta, eps, rho):
    a3 = -eta * s * s
    a2 = -((1.0 - eps + rho) * s * s + 2.0 * eta * s)
    a1 = 2.0 * (eps - 1.0) * s - s * rho + rho * q2 - eta
    a0 = eps - 1.0
    return a3, a2, a1, a0


def _poly_val(a3, a2, a1, a0, x):
    return ((a3 * x + a2) * x + a1) * x + a0


def _poly_deriv(a3, a2, a1, x):
    return (3.0 * a3 * x + 2.0 * a2) * x + a1


def _refine_root(a3, a2, a1, a0, x, lo, hi):
    """One Newton step, then bisection fallback if the residual is large."""
    fp = _poly_deriv(a3, a2, a1, x)
    if fp != 0.0:
        x1 = x - _poly_val(a3, a2, a1, a0, x) / fp
        if lo < x1 < hi:
            x = x1
    scale = 1.0 + max(abs(a3) * x * x * x, abs(a2) * x * x, abs(a1) * x, abs(a0))
    if abs(_poly_val(a3, a2, a1, a0, x)) <= 1e-10 * scale:
        return x
    flo = _poly_val(a3, a2, a1, a0, lo)
    if flo == 0.0:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fmid = _poly_val(a3, a2, a1, a0, mid)
        if fmid == 0.0 or (hi - lo) <= 1e-15 * max(1.0, abs(mid)):
            return mid
        if (fmid > 0.0) == (flo > 0.0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _quadratic_pos_roots(a2, a1, a0):
    """Real roots of a2 x^2 + a1 x + a0 (a2 != 0), ascending, stable form."""
    disc = a1 * a1 - 4.0 * a2 * a0
    if disc < 0.0:
        return ()
    sq = math.sqrt(disc)
    qq = -0.5 * (a1 + math.copysign(sq, a1))
    if qq != 0.0:
        r1 = qq / a2
        r2 = a0 / qq
    else:
        r1 = 0.0
        r2 = 0.0
    if r1 > r2:
        r1, r2 = r2, r1
    return (r1, r2)


def _cubic_real_roots(a3, a2, a1, a0):
    """All real roots of the cubic, ascending (Cardano/trig by discriminant)."""
    p_ = a2 / a3
    q_ = a1 / a3
    r_ = a0 / a3
    # depressed cubic t^3 + P t + Q, x = t - p_/3
    pp = q_ - p_ * p_ / 3.0
    qq = 2.0 * p_ * p_ * p_ / 27.0 - p_ * q_ / 3.0 + r_
    shift = -p_ / 3.0
    disc = 0.25 * qq * qq + pp * pp * pp / 27.0
    if disc > 0.0:
        sq = math.sqrt(disc)
        u = -0.5 * qq + sq
        uc = math.copysign(abs(u) ** (1.0 / 3.0), u)
        if uc != 0.0:
            t = uc - pp / (3.0 * uc)
        else:
            t = 0.0
        return (t + shift,)
    if pp >= 0.0:
        # pp ~ 0 and disc <= 0: triple/degenerate root
        return (shift + math.copysign(abs(qq) ** (1.0 / 3.0), -qq),)
    m = 2.0 * math.sqrt(-pp / 3.0)
    arg = 3.0 * qq / (pp * m)
    arg = min(1.0, max(-1.0, arg))
    theta = math.acos(arg) / 3.0
    roots = sorted(
        (
            m * math.cos(theta) + shift,
            m * math.cos(theta - 2.0 * _PI / 3.0) + shift,
            m * math.cos(theta - 4.0 * _PI / 3.0) + shift,
        )
    )
    return tuple(roots)


def gamma_stationary(s, q2, eta, eps, rho):
    """Maximizing gamma of l(gamma) on (0, inf), or 0 for prune.

    Regimes: eps < 1 (0 or 2 positive cubic roots; the larger is the
    local max, accepted only if l > 0 there), eps == 1 (closed form),
    1 < eps <= 1+rho (unique positive root, always returned).
    """
    if not (s > 0.0) or q2 < 0.0 or eta < 0.0:
        raise ValueError("gamma_stationary requires s > 0, q2 >= 0, eta >= 0")
    if eps < 0.0 or eps > 1.0 + rho:
        raise ValueError("epsilon outside the supported range [0, 1+rho]")

    if eps == 1.0:
        if eta == 0.0:
            if q2 > s:
                return (q2 - s) / (s * s)
            return 0.0
        if q2 - s > eta / rho:
            srho = s * rho
            delta = (srho + 2.0 * eta) ** 2 - 4.0 * eta * (eta + srho - rho * q2)
            if delta < 0.0:
                delta = 0.0
            g = (-(srho + 2.0 * eta) + math.sqrt(delta)) / (2.0 * s * eta)
            return g if g > 0.0 else 0.0
        return 0.0

    a3, a2, a1, a0 = _cubic_coeffs(s, q2, eta, eps, rho)

    if eps < 1.0:
        # f(0) = eps-1 < 0; positive roots come in pairs (0 or 2); the
        # larger bracket end sits past the vertex gamma+ of f'.
        if eta == 0.0:
            roots = _quadratic_pos_roots(a2, a1, a0)
            pos = [r for r in roots if r > 0.0]
            if len(pos) < 2:
                return 0.0
            r1, r2 = pos[0], pos[1]
            vertex = -0.5 * a1 / a2
        else:
            roots = _cubic_real_roots(a3, a2, a1, a0)
            pos = [r for r in roots if r > 0.0]
            if len(pos) < 2:
                return 0.0
            r1, r2 = pos[-2], pos[-1]
            # concave parabola f': rightmost zero brackets the two roots
            d = a2 * a2 - 3.0 * a3 * a1
            if d <= 0.0:
                return 0.0
            vertex = (-a2 - math.sqrt(d)) / (3.0 * a3)
        if r2 - r1 <= 1e-9 * max(1.0, r2):
            return 0.0  # double root: saddle of l
        hi = max(2.0 * r2, vertex + 2.0 * (r2 - vertex))
        g = _refine_root(a3, a2, a1, a0, r2, max(vertex, r1), hi)
        if g <= 0.0:
            return 0.0
        if ell(g, s, q2, eta, eps, rho) <= 0.0:
            return 0.0  # pruned state (score 0) is at least as good
        return g

    # 1 < eps <= 1+rho: f(0) = eps-1 > 0, unique positive root
    if eta == 0.0:
        if a2 == 0.0:
            if a1 >= 0.0:
                raise ValueError(
                    "no finite maximizer: eps == 1+rho with eta == 0"
                )
            return -a0 / a1
        roots = _quadratic_pos_roots(a2, a1, a0)
    else:
        roots = _cubic_real_roots(a3, a2, a1, a0)
    pos = [r for r in roots if r > 0.0]
    if not pos:
        # roundoff near a triple root: fall back to bracketed bisection
        hi = 1.0
        while _poly_val(a3, a2, a1, a0, hi) > 0.0 and hi < 1e300:
            hi *= 2.0
        return _refine_root(a3, a2, a1, a0, 0.5 * hi, 0.0, hi)
    g = max(pos)
    hi = 2.0 * g
    while _poly_val(a3, a2, a1, a0, hi) > 0.0 and hi < 1e300:
        hi *= 2.0
    return _refine_root(a3, a2, a1, a0, g, 0.0, hi)


def gamma_stationary_batch(s, q2, eta, eps, rho):
    s = np.asarray(s, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    out = np.empty(s.shape[0])
    for i in range(s.shape[0]):
        out[i] = gamma_stationary(s[i], q2[i], eta[i], eps, rho)
    return out


def ell_batch(gamma, s, q2, eta, eps, rho):
    gamma = np.asarray(gamma, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    out = np.empty(gamma.shape[0])
    for i in range(gamma.shape[0]):
        out[i] = ell(gamma[i], s[i], q2[i], eta[i], eps, rho)
    return out
