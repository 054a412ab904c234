"""GEM estimator: Gaussian E-step, sequential M-step updates of the
hyperparameters gamma, eta and the noise precision lambda, with
threshold pruning of small-gamma components.

Specializations: EM-RVM (eps = 1, eta = 0, constant hyperprior) and
EM-Laplace (eps = 1, fixed eta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import ConfigurationError, NumericalError
from .model import FieldKind, Metrics, ProblemInstance, evaluate
from .priors import PriorConfig, PriorLayers

LAMBDA_MAX = 1e12


@dataclass
class EmConfig:
    prior: PriorConfig
    prune_gamma: float = 1e-5
    max_iters: int = 1000
    tol: float = 1e-8
    lambda_known: Optional[float] = None  # None: estimate via m_step_lambda

    def __post_init__(self):
        if self.prune_gamma <= 0.0:
            raise ConfigurationError("prune_gamma must be > 0")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")


@dataclass
class EmState:
    """Posterior and hyperparameter state over the active column set."""

    mu: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    eta: np.ndarray
    lambda_: float
    active: np.ndarray


@dataclass
class EmResult:
    estimate: np.ndarray
    metrics: Metrics
    objective_trace: list = dfield(default_factory=list)
    converged: bool = False
    status: str = ""


class _Posterior:
    """One-factorization posterior summary for an active set.

    Uses the L'-side system (lam H^H H + Gamma^-1) when the active set is
    small, and the M-side Woodbury form C = lam^-1 I + H Gamma H^H when
    L' > M; either way a single positive-definite Cholesky yields mu,
    diag(Sigma), log|C| and y^H C^-1 y (and the full Sigma on request).
    """

    __slots__ = ("mu", "diag_sigma", "logdet_c", "quadform", "_full")

    def __init__(self, p, active, gamma, lam, need_full=False):
        Ha = p.H[:, active]
        k = Ha.shape[1]
        M = p.M
        dt = p.field.dtype
        self._full = None
        if need_full or k <= M:
            A = lam * (Ha.conj().T @ Ha)
            idx = np.diag_indices_from(A)
            A[idx] += 1.0 / gamma
            try:
                Lc = np.linalg.cholesky(A)
            except np.linalg.LinAlgError as exc:
                raise NumericalError("posterior factorization failed",
                                     detail={"gamma": np.asarray(gamma).copy()}) from exc
            Linv = np.linalg.inv(Lc)
            sigma = Linv.conj().T @ Linv
            sigma = 0.5 * (sigma + sigma.conj().T)
            Hty = Ha.conj().T @ p.y
            self.mu = lam * (sigma @ Hty)
            self.diag_sigma = np.real(np.diag(sigma))
            self._full = sigma
            # log|C| = -M log lam + sum log gamma + log|A|
            logdet_a = 2.0 * float(np.sum(np.log(np.real(np.diag(Lc)))))
            self.logdet_c = -M * math.log(lam) + float(np.sum(np.log(gamma))) + logdet_a
            ynorm2 = float(np.real(np.vdot(p.y, p.y)))
            self.quadform = lam * (ynorm2 - float(np.real(np.vdot(Hty, self.mu))))
        else:
            V = Ha * gamma  # H Gamma
            Cm = (V @ Ha.conj().T).astype(dt)
            idx = np.diag_indices_from(Cm)
            Cm[idx] += 1.0 / lam
            try:
                Lc = np.linalg.cholesky(Cm)
            except np.linalg.LinAlgError as exc:
                raise NumericalError("posterior factorization failed",
                                     detail={"gamma": np.asarray(gamma).copy()}) from exc
            self.logdet_c = 2.0 * float(np.sum(np.log(np.real(np.diag(Lc)))))
            ciy = _cho_solve_lower(Lc, p.y)
            self.quadform = float(np.real(np.vdot(p.y, ciy)))
            # mu = Gamma H^H C^-1 y; diag Sigma = gamma - diag(V^H C^-1 V)
            self.mu = gamma * (Ha.conj().T @ ciy)
            W = solve_triangular(Lc, V, lower=True, check_finite=False)
            self.diag_sigma = gamma - np.real(np.sum(W.conj() * W, axis=0))

    def full_sigma(self):
        return self._full


def _cho_solve_lower(Lc, b):
    z = solve_triangular(Lc, b, lower=True, check_finite=False)
    return solve_triangular(Lc.conj().T, z, lower=False, check_finite=False)


def e_step(state: EmState, p: ProblemInstance):
    """Gaussian posterior over the active columns.

    Sigma = (lambda H^H H + Gamma^-1)^-1, mu = lambda Sigma H^H y,
    computed by a positive-definite (Cholesky) factorization.
    """
    if len(state.active) == 0:
        raise ConfigurationError("e_step requires a nonempty active set")
    post = _Posterior(p, state.active, state.gamma, state.lambda_, need_full=True)
    return post.full_sigma(), post.mu


def m_step_gamma(second_moment: float, eta_l: float, epsilon: float,
                 field: FieldKind) -> float:
    """gamma maximizing <log p(alpha_l|gamma) p(gamma|eta_l)>.

    (eps-rho-1 + sqrt((eps-rho-1)^2 + 4 rho eta <|alpha|^2>)) / (2 eta);
    the eta -> 0 limit is rho <|alpha|^2> / (1 + rho - eps).
    """
    if second_moment < 0.0:
        raise ConfigurationError("second moment must be >= 0")
    rho = field.rho
    if eta_l == 0.0:
        denom = 1.0 + rho - epsilon
        if denom <= 0.0:
            raise ConfigurationError(
                "gamma update unbounded for eta = 0 with epsilon >= 1 + rho"
            )
        return rho * second_moment / denom
    d = epsilon - rho - 1.0
    c = 4.0 * rho * eta_l * second_moment
    root = math.sqrt(d * d + c)
    if d < 0.0:
        # rationalized form, stable when the discriminant is dominated by d^2
        g = (2.0 * rho * second_moment) / (root - d)
    else:
        g = (d + root) / (2.0 * eta_l)
    return g if g > 0.0 else 0.0


def m_step_eta(gamma_l: float, epsilon: float, a_l: float, b_l: float) -> float:
    """eta mode (eps + a - 1) / (gamma + b); 0 at the eps+a == 1 boundary."""
    num = epsilon + a_l - 1.0
    if num < 0.0:
        raise ConfigurationError("eta mode undefined for epsilon + a < 1")
    if num == 0.0:
        return 0.0
    return num / (gamma_l + b_l)


def m_step_lambda(residual_expect: float, M: int) -> float:
    """lambda = M / <||y - H alpha||^2>, capped at LAMBDA_MAX."""
    if residual_expect <= 0.0:
        return LAMBDA_MAX
    return min(M / residual_expect, LAMBDA_MAX)


def _prior_gamma_logpdf(gamma, eta, epsilon):
    """Sum over components of log p(gamma_l | eta_l); improper pieces keep
    only their gamma-dependent terms."""
    total = 0.0
    for g, e in zip(gamma, eta):
        if epsilon != 1.0:
            total += (epsilon - 1.0) * math.log(g)
        total -= e * g
        if e > 0.0 and epsilon > 0.0:
            total += epsilon * math.log(e) - math.lgamma(epsilon)
    return total


def _prior_eta_logpdf(eta, a, b):
    total = 0.0
    for e, al, bl in zip(eta, a, b):
        total += al * math.log(bl) - math.lgamma(al) - bl * e
        if al != 1.0:
            total += (al - 1.0) * math.log(e)
    return total


def sbl_objective(p: ProblemInstance, active, gamma, eta, lam, prior: PriorConfig) -> float:
    """log p(y, gamma, eta, lambda) restricted to the active columns.

    The marginal likelihood part uses C = lambda^-1 I + H Gamma H^H via
    the Cholesky factorization of Sigma^-1 (log-space evaluation).
    """
    rho = p.field.rho
    M = p.M
    const = -rho * M * math.log(math.pi / rho)
    if len(active) == 0:
        ynorm2 = float(np.real(np.vdot(p.y, p.y)))
        return const - rho * (-M * math.log(lam) + lam * ynorm2)
    Ha = p.H[:, active]
    A = lam * (Ha.conj().T @ Ha)
    idx = np.diag_indices_from(A)
    A[idx] += 1.0 / gamma
    try:
        cho = cho_factor(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("objective factorization failed",
                             detail={"gamma": np.asarray(gamma).copy()}) from exc
    logdet_A = 2.0 * float(np.sum(np.log(np.real(np.diag(cho[0])))))
    logdet_C = -M * math.log(lam) + float(np.sum(np.log(gamma))) + logdet_A
    Hty = Ha.conj().T @ p.y
    mu = lam * cho_solve(cho, Hty)
    ynorm2 = float(np.real(np.vdot(p.y, p.y)))
    quadform = lam * (ynorm2 - float(np.real(np.vdot(Hty, mu))))
    out = const - rho * (logdet_C + quadform)
    out += _prior_gamma_logpdf(gamma, eta, prior.epsilon)
    if prior.layers is PriorLayers.THREE:
        active = np.asarray(active)
        out += _prior_eta_logpdf(eta, prior.a_vec(p.L)[active],
                                 prior.b_vec(p.L)[active])
    return out


def run_em(p: ProblemInstance, cfg: EmConfig) -> EmResult:
    """Iterate e_step -> m_step_gamma -> m_step_eta (3-L) -> m_step_lambda
    with pruning at gamma < prune_gamma, until the relative change of the
    log objective falls below tol or max_iters is reached."""
    L = p.L
    prior = cfg.prior
    three_layer = prior.layers is PriorLayers.THREE
    active = np.arange(L)
    gamma = np.ones(L)
    a_full = prior.a_vec(L)
    b_full = prior.b_vec(L)
    eta = (a_full / b_full) if three_layer else prior.eta_vec(L)
    lam = cfg.lambda_known
    estimate_lambda = lam is None
    if estimate_lambda:
        lam = p.M / float(np.real(np.vdot(p.y, p.y)))

    state = EmState(mu=np.zeros(0), sigma=np.zeros((0, 0)), gamma=gamma,
                    eta=eta, lambda_=lam, active=active)
    rho = p.field.rho
    const = -rho * p.M * math.log(math.pi / rho)
    trace = []
    status = "max_iters"
    iterations = 0
    for it in range(1, cfg.max_iters + 1):
        iterations = it
        post = _Posterior(p, state.active, state.gamma, state.lambda_,
                          need_full=estimate_lambda)
        # objective at the current state, from the same factorization
        obj = const - rho * (post.logdet_c + post.quadform)
        obj += _prior_gamma_logpdf(state.gamma, state.eta, prior.epsilon)
        if three_layer:
            obj += _prior_eta_logpdf(state.eta, a_full[state.active],
                                     b_full[state.active])
        trace.append(obj)
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) <= cfg.tol * abs(trace[-2]):
            status = "converged"
            break
        m2 = post.diag_sigma + np.abs(post.mu) ** 2
        state.gamma = np.array([
            m_step_gamma(float(m2[i]), float(state.eta[i]), prior.epsilon, p.field)
            for i in range(len(state.active))
        ])
        if three_layer:
            state.eta = np.array([
                m_step_eta(float(state.gamma[i]), prior.epsilon,
                           float(a_full[state.active[i]]),
                           float(b_full[state.active[i]]))
                for i in range(len(state.active))
            ])
        if estimate_lambda:
            Ha = p.H[:, state.active]
            resid = p.y - Ha @ post.mu
            residual_expect = float(np.real(np.vdot(resid, resid)))
            residual_expect += float(
                np.real(np.sum(post.full_sigma() * (Ha.conj().T @ Ha).T))
            )
            state.lambda_ = m_step_lambda(residual_expect, p.M)
        keep = state.gamma >= cfg.prune_gamma
        if not np.all(keep):
            state.active = state.active[keep]
            state.gamma = state.gamma[keep]
            state.eta = state.eta[keep]
        if len(state.active) == 0:
            status = "all_pruned"
            break

    estimate = np.zeros(L, dtype=p.field.dtype)
    if len(state.active) > 0:
        sigma, mu = e_step(state, p)
        state.mu, state.sigma = mu, sigma
        estimate[state.active] = mu
    metrics = evaluate(estimate, p, iterations)
    return EmResult(estimate=estimate, metrics=metrics, objective_trace=trace,
                    converged=status == "converged", status=status)
