"""Special functions used by the hierarchical priors and the VMP moments.

Modified Bessel function of the second kind K_nu (real order), its
logarithm, order-shift ratios, and Tricomi's confluent hypergeometric
function U(a; b; x).

K_nu is evaluated by the kernel backend (Temme series for x <= 2,
Steed's continued fraction for x > 2, half-integer closed forms,
rescaled upward recurrence in the order); see ``bksbl.kernels``.
U is evaluated from its Laplace integral representation

    U(a; b; x) = Gamma(a)^-1 * int_0^inf e^(-x t) t^(a-1) (1+t)^(b-a-1) dt

by adaptive quadrature, with the terminating-series fast path when a is
a non-positive integer.  All functions are pure and thread-safe.
"""

from __future__ import annotations

import math

from scipy.integrate import quad

from . import kernels
from .errors import DomainError

__all__ = ["bessel_k", "log_bessel_k", "bessel_k_ratio", "hyper_u"]


def _check_point(nu, x):
    if not (math.isfinite(nu) and math.isfinite(x)):
        raise DomainError(f"non-finite arguments: nu={nu!r}, x={x!r}")
    if not x > 0.0:
        raise DomainError(f"argument must be positive, got x={x!r}")


def bessel_k(nu: float, x: float) -> float:
    """K_nu(x) for real order nu and x > 0.

    Symmetric in the order (K_nu = K_-nu).  Underflows to exact 0 for
    very large x; use :func:`log_bessel_k` there.
    """
    _check_point(nu, x)
    logk = kernels.log_kv(nu, x)
    if logk > 709.0:
        return math.inf
    return math.exp(logk)


def log_bessel_k(nu: float, x: float) -> float:
    """ln K_nu(x); does not overflow for x up to at least 1e5."""
    _check_point(nu, x)
    return kernels.log_kv(nu, x)


def bessel_k_ratio(nu: float, shift: int, x: float) -> float:
    """K_{nu+shift}(x) / K_nu(x), evaluated in log space.

    Safe where the individual Bessel values under- or overflow.
    """
    _check_point(nu, x)
    return kernels.kv_ratio(nu, float(shift), x)


def _u_series_terminating(n: int, b: float, x: float) -> float:
    # U(-n; b; x) = sum_{k=0}^{n} C(n,k) (-1)^k (b+k)_{n-k} x^k  -- a
    # degree-n polynomial; evaluated via the standard Kummer connection
    # U(-n;b;x) = (-1)^n sum_k C(n,k) poch(b+k, n-k) (-x)^k.
    total = 0.0
    for k in range(n + 1):
        poch = 1.0
        for j in range(n - k):
            poch *= b + k + j
        total += math.comb(n, k) * poch * (-x) ** k
    return (-1.0) ** n * total


def hyper_u(a: float, b: float, x: float) -> float:
    """Tricomi's confluent hypergeometric U(a; b; x) for a >= 0, x > 0."""
    if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(x)):
        raise DomainError("non-finite arguments to hyper_u")
    if not x > 0.0:
        raise DomainError(f"argument must be positive, got x={x!r}")
    if a < 0.0:
        if a == math.floor(a):
            return _u_series_terminating(int(-a), b, x)
        raise DomainError("hyper_u requires a >= 0 (or a non-positive integer)")
    if a == 0.0:
        return 1.0

    # Laplace integral, split at t = 1 with t -> 1/t on the tail; the
    # t^{a-1} endpoint singularity (a < 1) is integrable and handled by
    # QUADPACK's extrapolation.
    c = b - a - 1.0

    def head(t):
        return t ** (a - 1.0) * (1.0 + t) ** c * math.exp(-x * t)

    def tail(u):
        # t = 1/u, dt = du/u^2
        return u ** (-a - 1.0) * (1.0 + 1.0 / u) ** c * math.exp(-x / u)

    i1, _ = quad(head, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    i2, _ = quad(tail, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    return (i1 + i2) / math.gamma(a)
