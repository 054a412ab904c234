"""Hierarchical prior densities, penalty terms and scalar threshold rules.

The weight prior is a Gaussian scale mixture: alpha_l = sqrt(gamma_l) u_l
with a gamma mixing density on gamma_l (two-layer model), optionally with
a further gamma hyperprior on the rate eta_l (three-layer model).  The
two-layer marginal is the Bessel-K density

    p(alpha; eps, eta) = 2 rho^((eps+rho)/2) eta^((eps+rho)/2)
        / (pi^rho Gamma(eps)) * |alpha|^(eps-rho)
        * K_(eps-rho)(2 sqrt(rho eta) |alpha|),

rho = 1/2 (real) or 1 (complex); eps = 1 (real) / eps = 3/2 (complex)
recover the Laplace density and hence the l1 penalty.  The three-layer
marginal involves the confluent hypergeometric U.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy.integrate import quad

from . import kernels
from .errors import (
    ConfigurationError,
    DomainError,
    ImproperDensityError,
    PoleError,
)
from .model import FieldKind
from .specfun import hyper_u

ArrayLike = Union[float, np.ndarray]


class PriorLayers(enum.Enum):
    TWO = 2
    THREE = 3


@dataclass(frozen=True)
class PriorConfig:
    """Shared shape ``epsilon`` plus per-component rate parameters.

    ``eta`` (two-layer) and ``a``, ``b`` (three-layer) may be scalars or
    length-L vectors; ``lambda_prior_c``/``d`` are the gamma-prior
    constants of the noise precision used by the VMP engine.
    """

    layers: PriorLayers
    epsilon: float
    eta: ArrayLike = 1.0
    a: ArrayLike = 1.0
    b: ArrayLike = 0.1
    lambda_prior_c: float = 0.0
    lambda_prior_d: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.epsilon) or self.epsilon < 0.0:
            raise ConfigurationError("epsilon must be finite and >= 0")
        if np.any(np.asarray(self.eta) < 0.0):
            raise ConfigurationError("eta entries must be >= 0")
        if self.layers is PriorLayers.THREE:
            if np.any(np.asarray(self.a) <= 0.0) or np.any(np.asarray(self.b) <= 0.0):
                raise ConfigurationError("three-layer prior needs a > 0 and b > 0")
        if self.lambda_prior_c < 0.0 or self.lambda_prior_d < 0.0:
            raise ConfigurationError("lambda prior constants must be >= 0")

    def eta_vec(self, L: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.eta, dtype=float), (L,)).copy()

    def a_vec(self, L: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.a, dtype=float), (L,)).copy()

    def b_vec(self, L: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.b, dtype=float), (L,)).copy()


def two_layer(epsilon: float, eta: ArrayLike = 1.0, **kw) -> PriorConfig:
    return PriorConfig(layers=PriorLayers.TWO, epsilon=epsilon, eta=eta, **kw)


def three_layer(epsilon: float, a: ArrayLike = 1.0, b: ArrayLike = 0.1, **kw) -> PriorConfig:
    return PriorConfig(layers=PriorLayers.THREE, epsilon=epsilon, a=a, b=b, **kw)


def _check_weight(alpha):
    if not np.isfinite(alpha):
        raise DomainError(f"weight must be finite, got {alpha!r}")


def pdf_2l(alpha, epsilon: float, eta_l: float, field: FieldKind) -> float:
    """Two-layer (Bessel-K) marginal density of a single weight."""
    _check_weight(alpha)
    if epsilon <= 0.0 or eta_l <= 0.0:
        raise ImproperDensityError(
            "two-layer marginal is improper for epsilon <= 0 or eta <= 0; "
            "use log_penalty for penalty differences"
        )
    rho = field.rho
    m = abs(alpha)
    if m == 0.0:
        if epsilon <= rho:
            raise PoleError("density has a pole at alpha = 0 for epsilon <= rho")
        return (
            math.gamma(epsilon - rho)
            * (rho * eta_l) ** rho
            / (math.pi**rho * math.gamma(epsilon))
        )
    logp = (
        math.log(2.0)
        + 0.5 * (epsilon + rho) * (math.log(rho) + math.log(eta_l))
        - rho * math.log(math.pi)
        - math.lgamma(epsilon)
        + (epsilon - rho) * math.log(m)
        + kernels.log_kv(epsilon - rho, 2.0 * math.sqrt(rho * eta_l) * m)
    )
    return math.exp(logp)


def pdf_3l(alpha, epsilon: float, a_l: float, b_l: float, field: FieldKind) -> float:
    """Three-layer marginal density of a single weight.

    Evaluated as the Kummer transform of the U form so the integral
    representation stays valid for all epsilon in [0, 1+rho].
    """
    _check_weight(alpha)
    if a_l <= 0.0 or b_l <= 0.0:
        raise DomainError("pdf_3l requires a_l > 0 and b_l > 0")
    if epsilon <= 0.0:
        raise ImproperDensityError("three-layer marginal is improper for epsilon <= 0")
    rho = field.rho
    m = abs(alpha)
    pref = (
        rho ** rho
        / (math.pi**rho * b_l**rho)
        * math.gamma(a_l + rho)
        / (math.gamma(epsilon) * math.gamma(a_l))
    )
    if m == 0.0:
        if epsilon <= rho:
            raise PoleError("density has a pole at alpha = 0 for epsilon <= rho")
        return pref * math.gamma(epsilon - rho)
    z = rho * m * m / b_l
    # |alpha|^(2(eps-rho)) * U(eps+a; eps-rho+1; z) * b^(eps-rho)-scaled
    # == U(a+rho; 1+rho-eps; z) by the Kummer transform
    return pref * math.gamma(epsilon + a_l) * hyper_u(a_l + rho, 1.0 + rho - epsilon, z)


def _penalty_term_2l(m: float, epsilon: float, eta_l: float, rho: float) -> float:
    """-log(|alpha|^(eps-rho) K_(eps-rho)(2 sqrt(rho eta)|alpha|)) for one weight."""
    if eta_l == 0.0:
        if epsilon >= rho:
            raise ImproperDensityError(
                "marginal penalty undefined for eta = 0 with epsilon >= rho"
            )
        # integrated improper prior: p(alpha) propto |alpha|^(2(eps-rho))
        if m == 0.0:
            raise PoleError("penalty pole at alpha = 0")
        return 2.0 * (rho - epsilon) * math.log(m)
    nu = epsilon - rho
    if m == 0.0:
        if epsilon <= rho:
            raise PoleError("penalty pole at alpha = 0 for epsilon <= rho")
        # finite limit: log((1/2) Gamma(nu) (rho eta)^(-nu/2))
        return -(math.lgamma(nu) - math.log(2.0) - 0.5 * nu * math.log(rho * eta_l))
    return -(nu * math.log(m) + kernels.log_kv(nu, 2.0 * math.sqrt(rho * eta_l) * m))


def _penalty_term_3l(m: float, epsilon: float, a_l: float, b_l: float, rho: float) -> float:
    if m == 0.0:
        if epsilon <= rho:
            raise PoleError("penalty pole at alpha = 0 for epsilon <= rho")
        return -(math.lgamma(epsilon - rho) - math.lgamma(epsilon + a_l))
    z = rho * m * m / b_l
    u = hyper_u(a_l + rho, 1.0 + rho - epsilon, z)
    return -(math.log(u) - math.lgamma(epsilon + a_l))


def log_penalty(alpha_vec: np.ndarray, cfg: PriorConfig, field: FieldKind) -> float:
    """Penalty Q(alpha) = -log p(alpha) up to an additive constant.

    Larger = more penalized.  The Jeffreys limit (eps = eta = 0) yields
    the log-sum penalty 2 rho sum log|alpha_l|.
    """
    alpha_vec = np.asarray(alpha_vec)
    rho = field.rho
    L = alpha_vec.shape[0]
    mags = np.abs(alpha_vec)
    if cfg.layers is PriorLayers.TWO and cfg.epsilon == 0.0 and np.all(cfg.eta_vec(L) == 0.0):
        if np.any(mags == 0.0):
            raise PoleError("log-sum penalty pole at alpha = 0")
        return float(2.0 * rho * np.sum(np.log(mags)))
    total = 0.0
    if cfg.layers is PriorLayers.TWO:
        eta = cfg.eta_vec(L)
        for m, e in zip(mags, eta):
            total += _penalty_term_2l(float(m), cfg.epsilon, float(e), rho)
    else:
        a = cfg.a_vec(L)
        b = cfg.b_vec(L)
        for m, al, bl in zip(mags, a, b):
            total += _penalty_term_3l(float(m), cfg.epsilon, float(al), float(bl), rho)
    return float(total)


def soft_threshold(z, eta_l: float, lam: float, field: FieldKind):
    """sign(z) * max(0, |z| - lambda^-1 sqrt(eta_l / rho))."""
    if not np.isfinite(z):
        raise DomainError("soft_threshold requires finite input")
    if lam <= 0.0:
        raise DomainError("soft_threshold requires lambda > 0")
    thr = math.sqrt(eta_l / field.rho) / lam
    m = abs(z)
    if m <= thr:
        return 0.0 if field is FieldKind.REAL else 0.0 + 0.0j
    return (z / m) * (m - thr)


class MapResult(NamedTuple):
    value: complex
    converged: bool
    iterations: int


def _curvature_weight_2l(m: float, epsilon: float, eta_l: float, rho: float) -> float:
    """w(alpha) = rho * E[gamma^-1 | alpha] under the two-layer prior."""
    if eta_l > 0.0:
        _, inv_mean = kernels.gig_moments(epsilon - rho, 2.0 * eta_l, 2.0 * rho * m * m)
        return rho * inv_mean
    # eta = 0: inverse-gamma posterior, needs epsilon < rho
    if epsilon >= rho:
        raise ConfigurationError(
            "curvature weight undefined for eta = 0 with epsilon >= rho"
        )
    return rho * (rho - epsilon) / (rho * m * m)


def _curvature_weight_3l(m: float, epsilon: float, a_l: float, b_l: float, rho: float) -> float:
    """w(alpha) = rho * E[gamma^-1 | alpha] under the three-layer prior.

    Posterior p(gamma | alpha) propto gamma^(eps-rho-1) (gamma+b)^-(eps+a)
    exp(-rho m^2 / gamma); moments by quadrature (not a hot path).
    """
    rm2 = rho * m * m

    def log_g(t):
        g = math.exp(t)
        return (epsilon - rho) * t - rm2 / g - (epsilon + a_l) * math.log(g + b_l)

    t0 = math.log(max(rm2, b_l, 1e-12))
    off = max(log_g(t0), log_g(t0 - 2.0), log_g(t0 + 2.0))

    def dens(t, n):
        return math.exp(log_g(t) - off - n * t)

    z0, _ = quad(lambda t: dens(t, 0), -60.0 + t0, 60.0 + t0, epsabs=0.0, epsrel=1e-10, limit=300)
    z1, _ = quad(lambda t: dens(t, 1), -60.0 + t0, 60.0 + t0, epsabs=0.0, epsrel=1e-10, limit=300)
    return rho * z1 / z0


def scalar_map_orthonormal(z, cfg: PriorConfig, lam: float) -> MapResult:
    """MAP weight for an orthonormal dictionary column, by fixed point.

    Approximates argmin_alpha rho*lam*|z - alpha|^2 + Q(alpha) by
    iterating alpha <- z / (1 + (lam*rho)^-1 * w(alpha)); coincides with
    :func:`soft_threshold` in the Laplace settings.
    """
    if lam <= 0.0:
        raise DomainError("scalar_map_orthonormal requires lambda > 0")
    # rho is determined by the type of z: complex input means complex field
    field = FieldKind.COMPLEX if isinstance(z, complex) else FieldKind.REAL
    return _scalar_map(z, cfg, lam, field)


def _scalar_map(z, cfg: PriorConfig, lam: float, field: FieldKind) -> MapResult:
    rho = field.rho
    m = abs(z)
    if m == 0.0:
        return MapResult(0.0 if field is FieldKind.REAL else 0.0 + 0.0j, True, 0)
    phase = z / m
    if cfg.layers is PriorLayers.TWO:
        eta0 = float(np.asarray(cfg.eta, dtype=float).flat[0])
        weight = lambda x: _curvature_weight_2l(x, cfg.epsilon, eta0, rho)
    else:
        a0 = float(np.asarray(cfg.a, dtype=float).flat[0])
        b0 = float(np.asarray(cfg.b, dtype=float).flat[0])
        weight = lambda x: _curvature_weight_3l(x, cfg.epsilon, a0, b0, rho)
    x = m
    for it in range(1, 501):
        w = weight(x)
        x_new = m / (1.0 + w / (lam * rho))
        if x_new < 1e-14 * m:
            return MapResult(phase * 0.0, True, it)
        if abs(x_new - x) <= 1e-10:
            return MapResult(phase * x_new, True, it)
        x = x_new
    return MapResult(phase * x, False, 500)
