"""Variational message passing estimators (mean-field factor updates).

The auxiliary posterior factorizes as q(alpha) q(gamma) q(eta) q(lambda)
and is updated in a round-robin schedule.  q(alpha) is Gaussian with

    Sigma = (<lambda> H^H H + V)^-1,   V = diag(<gamma_l^-1>),
    mu    = <lambda> Sigma H^H y;

each q(gamma_l) is generalized inverse Gaussian with order p = eps - rho
and parameters u = 2<eta_l>, v = 2 rho <|alpha_l|^2>, whose moments come
from Bessel-K ratios; q(eta_l) and q(lambda) are gamma densities.  The
two-layer variant fixes <eta_l> to the configured rates.  A basis is
pruned (irreversibly) when <gamma_l^-1> exceeds a large threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import kernels
from .errors import ConfigurationError, ContractViolationError, NumericalError
from .model import FieldKind, Metrics, ProblemInstance, evaluate
from .priors import PriorConfig, PriorLayers

LAMBDA_MAX = 1e12
V_UNDERFLOW = 1e-300


class GigPosterior(NamedTuple):
    """Generalized inverse Gaussian q(gamma_l): order p, parameters u, v."""

    p: float
    u: float
    v: float


@dataclass
class VmpConfig:
    prior: PriorConfig
    prune_invgamma: float = 1e8
    max_iters: int = 1000
    tol: float = 1e-6  # max relative change of <gamma^-1>
    lambda_known: Optional[float] = None

    def __post_init__(self):
        if self.prune_invgamma <= 1.0:
            raise ConfigurationError("prune_invgamma must exceed 1")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")


@dataclass
class VmpState:
    alpha_mean: np.ndarray
    alpha_cov: np.ndarray
    inv_gamma_mean: np.ndarray
    gamma_mean: np.ndarray
    eta_mean: np.ndarray
    lambda_mean: float
    active: np.ndarray


@dataclass
class VmpResult:
    estimate: np.ndarray
    metrics: Metrics
    converged: bool = False
    status: str = ""


def update_q_alpha(state: VmpState, p: ProblemInstance):
    """Gaussian q(alpha) over the active columns."""
    if len(state.active) == 0:
        raise ConfigurationError("update_q_alpha requires a nonempty active set")
    Ha = p.H[:, state.active]
    A = state.lambda_mean * (Ha.conj().T @ Ha)
    idx = np.diag_indices_from(A)
    A[idx] += state.inv_gamma_mean
    try:
        cho = cho_factor(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("q(alpha) factorization failed",
                             detail={"inv_gamma": state.inv_gamma_mean.copy()}) from exc
    cov = cho_solve(cho, np.eye(A.shape[0], dtype=A.dtype))
    cov = 0.5 * (cov + cov.conj().T)
    mean = state.lambda_mean * (cov @ (Ha.conj().T @ p.y))
    return cov, mean


def update_q_gamma(second_moment: float, eta_mean: float, epsilon: float,
                   field: FieldKind):
    """GIG q(gamma) and its first/inverse-first moments for one component."""
    if not second_moment > 0.0:
        raise ContractViolationError("second moment must be > 0")
    if not eta_mean > 0.0:
        raise ContractViolationError("eta mean must be > 0")
    rho = field.rho
    gig = GigPosterior(p=epsilon - rho, u=2.0 * eta_mean, v=2.0 * rho * second_moment)
    mean, inv_mean = kernels.gig_moments(gig.p, gig.u, gig.v)
    return gig, mean, inv_mean


def update_q_eta(gamma_mean: float, epsilon: float, a_l: float, b_l: float) -> float:
    """<eta> = (eps + a) / (<gamma> + b) (note: no -1, unlike the EM mode)."""
    return (epsilon + a_l) / (gamma_mean + b_l)


def update_q_lambda(residual_expect: float, M: int, c: float, d: float,
                    field: FieldKind) -> float:
    """<lambda> = (rho M + c) / (rho <||y - H alpha||^2> + d)."""
    rho = field.rho
    denom = rho * residual_expect + d
    if denom <= 0.0:
        return LAMBDA_MAX
    return min((rho * M + c) / denom, LAMBDA_MAX)


def run_vmp(p: ProblemInstance, cfg: VmpConfig) -> VmpResult:
    """Round-robin sweeps q(alpha) -> q(gamma) -> q(eta) -> q(lambda) with
    irreversible pruning at <gamma_l^-1> > prune_invgamma."""
    prior = cfg.prior
    three_layer = prior.layers is PriorLayers.THREE
    L = p.L
    a_full = prior.a_vec(L)
    b_full = prior.b_vec(L)
    if three_layer:
        eta_mean = a_full / b_full
    else:
        eta_mean = prior.eta_vec(L)
        if np.any(eta_mean <= 0.0):
            raise ConfigurationError("VMP-2L requires strictly positive eta")
    lam = cfg.lambda_known
    estimate_lambda = lam is None
    if estimate_lambda:
        lam = p.M / float(np.real(np.vdot(p.y, p.y)))

    state = VmpState(
        alpha_mean=np.zeros(0, dtype=p.field.dtype),
        alpha_cov=np.zeros((0, 0), dtype=p.field.dtype),
        inv_gamma_mean=np.ones(L),
        gamma_mean=np.ones(L),
        eta_mean=eta_mean,
        lambda_mean=lam,
        active=np.arange(L),
    )
    status = "max_iters"
    iterations = 0
    mean = np.zeros(0, dtype=p.field.dtype)
    for it in range(1, cfg.max_iters + 1):
        iterations = it
        act = state.active
        sub = VmpState(
            alpha_mean=state.alpha_mean, alpha_cov=state.alpha_cov,
            inv_gamma_mean=state.inv_gamma_mean[act],
            gamma_mean=state.gamma_mean[act], eta_mean=state.eta_mean[act],
            lambda_mean=state.lambda_mean, active=act,
        )
        cov, mean = update_q_alpha(sub, p)
        state.alpha_cov, state.alpha_mean = cov, mean
        m2 = np.real(np.diag(cov)) + np.abs(mean) ** 2
        underflow = m2 < V_UNDERFLOW
        pgig = prior.epsilon - p.field.rho
        safe = ~underflow
        gm = state.gamma_mean[act].copy()
        igm = state.inv_gamma_mean[act].copy()
        if np.any(safe):
            gm_s, igm_s = kernels.gig_moments_batch(
                pgig, 2.0 * state.eta_mean[act][safe], 2.0 * p.field.rho * m2[safe]
            )
            gm[safe] = gm_s
            igm[safe] = igm_s
        igm[underflow] = np.inf
        old_igm = state.inv_gamma_mean[act].copy()
        state.gamma_mean[act] = gm
        state.inv_gamma_mean[act] = igm
        if three_layer:
            state.eta_mean[act] = (prior.epsilon + a_full[act]) / (gm + b_full[act])
        if estimate_lambda:
            Ha = p.H[:, act]
            resid = p.y - Ha @ mean
            residual_expect = float(np.real(np.vdot(resid, resid)))
            residual_expect += float(np.real(np.sum(cov * (Ha.conj().T @ Ha).T)))
            state.lambda_mean = update_q_lambda(
                residual_expect, p.M, prior.lambda_prior_c, prior.lambda_prior_d,
                p.field,
            )
        keep = igm <= cfg.prune_invgamma
        if not np.all(keep):
            state.active = act[keep]
            mean = mean[keep]
            old_igm = old_igm[keep]
            igm = igm[keep]
            if len(state.active) == 0:
                status = "all_pruned"
                break
        rel = np.max(np.abs(igm - old_igm) / old_igm)
        if rel < cfg.tol:
            status = "converged"
            break

    estimate = np.zeros(L, dtype=p.field.dtype)
    if len(state.active) > 0 and len(mean) == len(state.active):
        estimate[state.active] = mean
    metrics = evaluate(estimate, p, iterations)
    return VmpResult(estimate=estimate, metrics=metrics,
                     converged=status == "converged", status=status)
