"""Fast sequential inference: per-basis stationary-point maximization of
the marginal likelihood, executed as an add / delete / re-estimate loop
over an incrementally maintained active set.

Per basis l, with the component excluded from the model covariance,

    s_l = h_l^H C_-l^-1 h_l,   q_l = y^H C_-l^-1 h_l,

the component's likelihood contribution is

    l(gamma) = -rho log(1 + gamma s) + rho |q|^2 gamma / (1 + gamma s)
               + (eps - 1) log gamma - eta gamma,

maximized in closed form (quadratic for eps = 1, guarded cubic
otherwise; see ``bksbl.kernels``).  Full statistics S_l = h_l^H C^-1 h_l
and Q_l = h_l^H C^-1 y are maintained for every l by rank-one updates
and refreshed from scratch every ``REBUILD_PERIOD`` structural changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .errors import ConfigurationError, NumericalError, UnsupportedRegimeError
from .model import FieldKind, Metrics, ProblemInstance, evaluate
from .priors import PriorConfig, PriorLayers

REBUILD_PERIOD = 50
DEGENERATE_S = 1e-14
LAMBDA_MAX = 1e12
ETA_SWEEP_PERIOD = 10


class SparsityFactors(NamedTuple):
    """Excluded-model statistics of one basis: s = h^H C_-l^-1 h, q2 = |q|^2."""

    s: float
    q2: float


class FullStats(NamedTuple):
    """Included-model statistics: S = h^H C^-1 h, Q = h^H C^-1 y."""

    S: float
    Q: complex


@dataclass
class CubicAnalysis:
    """Stationary-point equation data for one basis (diagnostics/tests)."""

    coeffs: tuple  # (a3, a2, a1, a0) of f(gamma), highest degree first
    parabola_roots: tuple  # zeros of f' (complex pair allowed)
    d: float  # quantity under the square root in the zeros of f'
    delta: float  # eps == 1 quadratic discriminant


def cubic_analysis(sf: SparsityFactors, eta_l: float, epsilon: float,
                   field: FieldKind) -> CubicAnalysis:
    rho = field.rho
    s, q2 = sf.s, sf.q2
    a3 = -eta_l * s * s
    a2 = -((1.0 - epsilon + rho) * s * s + 2.0 * eta_l * s)
    a1 = 2.0 * (epsilon - 1.0) * s - s * rho + rho * q2 - eta_l
    a0 = epsilon - 1.0
    d = (
        s * s * (1.0 - epsilon + rho) ** 2
        - 2.0 * s * eta_l
        + s * eta_l * (2.0 * epsilon + rho)
        + eta_l * (eta_l + 3.0 * q2 * rho)
    )
    if eta_l > 0.0 and s > 0.0:
        if d >= 0.0:
            rt = math.sqrt(d)
            gm = (-s * s * (1.0 - epsilon + rho) - 2.0 * s * eta_l - s * rt) / (
                3.0 * s * s * eta_l
            )
            gp = (-s * s * (1.0 - epsilon + rho) - 2.0 * s * eta_l + s * rt) / (
                3.0 * s * s * eta_l
            )
            parabola = (gm, gp)
        else:
            base = -s * s * (1.0 - epsilon + rho) - 2.0 * s * eta_l
            parabola = (
                complex(base, -s * math.sqrt(-d)) / (3.0 * s * s * eta_l),
                complex(base, s * math.sqrt(-d)) / (3.0 * s * s * eta_l),
            )
    else:
        parabola = ()
    delta = (s * rho + 2.0 * eta_l) ** 2 - 4.0 * eta_l * (eta_l + s * rho - rho * q2)
    return CubicAnalysis(coeffs=(a3, a2, a1, a0), parabola_roots=parabola,
                         d=d, delta=delta)


def gamma_stationary(sf: SparsityFactors, eta_l: float, epsilon: float,
                     field: FieldKind) -> float:
    """Maximizer of l(gamma) over (0, inf), or 0 when pruning wins."""
    rho = field.rho
    if epsilon > 1.0 + rho:
        raise UnsupportedRegimeError(
            f"epsilon={epsilon} > 1+rho={1.0 + rho} is out of scope"
        )
    if epsilon < 0.0:
        raise ConfigurationError("epsilon must be >= 0")
    return kernels.gamma_stationary(sf.s, sf.q2, eta_l, epsilon, rho)


def objective_l(gamma: float, sf: SparsityFactors, eta_l: float,
                epsilon: float, field: FieldKind) -> float:
    """l(gamma); gamma = 0 returns the pruned-state score 0 (eps >= 1)."""
    return kernels.ell(gamma, sf.s, sf.q2, eta_l, epsilon, field.rho)


def delta_objective(gamma_old: float, gamma_new: float, sf: SparsityFactors,
                    eta_l: float, epsilon: float, field: FieldKind) -> float:
    """l(gamma_new) - l(gamma_old) with pruned endpoints scored as 0."""
    rho = field.rho

    def score(g):
        if g == 0.0:
            return 0.0
        return kernels.ell(g, sf.s, sf.q2, eta_l, epsilon, rho)

    return score(gamma_new) - score(gamma_old)


@dataclass
class FastConfig:
    prior: PriorConfig
    max_iters: int = 1000
    tol: float = 1e-8
    lambda_known: Optional[float] = None  # None: estimate after burn-in
    lambda_burn_in: int = 10
    # three-layer eta handling: per-component mode updates, or one shared
    # rate pooled over all L components (the classical fast-Laplace rule
    # eta = (L eps + a - 1) / (sum gamma + b))
    shared_eta: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if self.lambda_burn_in < 1:
            raise ConfigurationError("lambda burn-in must be >= 1")


@dataclass
class FastState:
    """Active-set model with full statistics maintained for every basis."""

    p: ProblemInstance
    lam: float
    active: list
    gamma: np.ndarray  # length L, exact 0 off-model
    eta: np.ndarray  # length L
    Sigma: np.ndarray  # (k, k) posterior covariance over active
    mu: np.ndarray  # (k,) posterior mean over active
    S: np.ndarray  # (L,) real
    Q: np.ndarray  # (L,) field
    moves_since_rebuild: int = 0
    G: np.ndarray = None  # H^H H cache
    Hty: np.ndarray = None
    ynorm2: float = 0.0

    def stats(self, l: int) -> FullStats:
        return FullStats(S=float(self.S[l]), Q=self.Q[l])


def init_fast_state(p: ProblemInstance, lam: float, eta: np.ndarray) -> FastState:
    """Empty-model state: C^-1 = lambda I."""
    G = p.H.conj().T @ p.H
    Hty = p.H.conj().T @ p.y
    dt = p.field.dtype
    return FastState(
        p=p, lam=lam, active=[], gamma=np.zeros(p.L),
        eta=np.asarray(eta, dtype=float).copy(),
        Sigma=np.zeros((0, 0), dtype=dt), mu=np.zeros(0, dtype=dt),
        S=lam * np.real(np.diag(G)).copy(), Q=lam * Hty.copy(),
        G=G, Hty=Hty, ynorm2=float(np.real(np.vdot(p.y, p.y))),
    )


def rebuild_stats(state: FastState):
    """Recompute Sigma, mu, S, Q from scratch for the current model."""
    lam = state.lam
    a = state.active
    if not a:
        state.Sigma = np.zeros((0, 0), dtype=state.p.field.dtype)
        state.mu = np.zeros(0, dtype=state.p.field.dtype)
        state.S = lam * np.real(np.diag(state.G)).copy()
        state.Q = lam * state.Hty.copy()
        state.moves_since_rebuild = 0
        return
    Gaa = state.G[np.ix_(a, a)]
    A = lam * Gaa + np.diag(1.0 / state.gamma[a]).astype(state.p.field.dtype)
    try:
        Lc = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("active-set covariance lost positive definiteness",
                             detail={"gamma": state.gamma[a].copy()}) from exc
    Linv = np.linalg.inv(Lc)
    Sigma = Linv.conj().T @ Linv
    mu = lam * (Sigma @ state.Hty[a])
    T = state.G[:, a]
    W = T @ Sigma  # (L, k)
    state.S = lam * np.real(np.diag(state.G)) - lam * lam * np.real(
        np.sum(W * T.conj(), axis=1)
    )
    state.Q = lam * (state.Hty - T @ mu)
    state.Sigma = Sigma
    state.mu = mu
    state.moves_since_rebuild = 0


def excluded_stats(state: FastState):
    """(s, q) vectors for all l: out-of-model l keep (S, Q); in-model l
    convert by s = S/(1 - gamma S), q = Q/(1 - gamma S)."""
    s = state.S.copy()
    q = state.Q.copy()
    if state.active:
        a = np.asarray(state.active)
        denom = 1.0 - state.gamma[a] * state.S[a]
        if np.any(denom <= 0.0):
            rebuild_stats(state)
            s = state.S.copy()
            q = state.Q.copy()
            denom = 1.0 - state.gamma[a] * state.S[a]
            if np.any(denom <= 0.0):
                raise NumericalError(
                    "excluded-statistics conversion inconsistent after rebuild",
                    detail={"denom": denom},
                )
        s[a] = state.S[a] / denom
        q[a] = state.Q[a] / denom
    return s, q


def _g_column(state: FastState, idx: int):
    """(h_l^H C^-1 h_idx for all l, lam Sigma H_a^H h_idx)."""
    lam = state.lam
    if not state.active:
        return lam * state.G[:, idx], None
    a = np.asarray(state.active)
    w = lam * (state.Sigma @ state.G[a, idx])
    return lam * (state.G[:, idx] - state.G[:, a] @ w), w


def _refresh_sq(state: FastState):
    """S, Q for all l from the current (Sigma, mu).

    S_l = lam h_l^H h_l - lam^2 h_l^H H_a Sigma H_a^H h_l,
    Q_l = lam h_l^H (y - H_a mu).
    Stable: unlike rank-one S/Q downdates, no 1/(1 - gamma S)
    amplification of accumulated roundoff.
    """
    lam = state.lam
    if not state.active:
        state.S = lam * np.real(np.diag(state.G)).copy()
        state.Q = lam * state.Hty.copy()
        return
    a = np.asarray(state.active)
    T = state.G[:, a]
    W = T @ state.Sigma
    state.S = lam * np.real(np.diag(state.G)) - lam * lam * np.real(
        np.sum(W * T.conj(), axis=1)
    )
    state.Q = lam * (state.Hty - T @ state.mu)


def update_stats(state: FastState, p: ProblemInstance, changed_index: int,
                 change_kind: str, new_gamma: float = 0.0) -> None:
    """Apply one structural change and update (S, Q, Sigma, mu) for all l.

    ``change_kind`` is "add", "delete" or "reestimate"; ``new_gamma`` is
    required for add/reestimate.  Sigma and mu are updated by rank-one
    algebra, S and Q then follow from the updated posterior; a full
    recompute is triggered every REBUILD_PERIOD changes.
    """
    if state.moves_since_rebuild + 1 >= REBUILD_PERIOD:
        _apply_gamma_only(state, changed_index, change_kind, new_gamma)
        rebuild_stats(state)
        return
    dt = p.field.dtype
    if change_kind == "add":
        if changed_index in state.active or not new_gamma > 0.0:
            raise ConfigurationError("invalid add move")
        _, w = _g_column(state, changed_index)
        Si = float(state.S[changed_index])
        Qi = state.Q[changed_index]
        denom = 1.0 / new_gamma + Si
        k = len(state.active)
        sig_new = np.empty((k + 1, k + 1), dtype=dt)
        mu_new = np.empty(k + 1, dtype=dt)
        sigma_ii = 1.0 / denom
        mu_i = Qi / denom
        if k:
            sig_new[:k, :k] = state.Sigma + sigma_ii * np.outer(w, w.conj())
            sig_new[:k, k] = -sigma_ii * w
            sig_new[k, :k] = -sigma_ii * w.conj()
            mu_new[:k] = state.mu - mu_i * w
        sig_new[k, k] = sigma_ii
        mu_new[k] = mu_i
        state.Sigma = sig_new
        state.mu = mu_new
        state.active.append(changed_index)
        state.gamma[changed_index] = new_gamma
    elif change_kind == "delete":
        if changed_index not in state.active:
            raise ConfigurationError("invalid delete move")
        jj = state.active.index(changed_index)
        col = state.Sigma[:, jj].copy()
        sjj = float(np.real(state.Sigma[jj, jj]))
        if sjj <= 0.0:
            _apply_gamma_only(state, changed_index, change_kind, 0.0)
            rebuild_stats(state)
            return
        mu = state.mu - (state.mu[jj] / sjj) * col
        Sigma = state.Sigma - np.outer(col, col.conj()) / sjj
        keep = [i for i in range(len(state.active)) if i != jj]
        state.Sigma = Sigma[np.ix_(keep, keep)]
        state.mu = mu[keep]
        state.active.pop(jj)
        state.gamma[changed_index] = 0.0
    elif change_kind == "reestimate":
        if changed_index not in state.active or not new_gamma > 0.0:
            raise ConfigurationError("invalid reestimate move")
        jj = state.active.index(changed_index)
        g_old = state.gamma[changed_index]
        dinv = 1.0 / new_gamma - 1.0 / g_old
        sjj = float(np.real(state.Sigma[jj, jj]))
        if 1.0 + dinv * sjj <= 0.0:
            _apply_gamma_only(state, changed_index, change_kind, new_gamma)
            rebuild_stats(state)
            return
        kappa = dinv / (1.0 + dinv * sjj)
        col = state.Sigma[:, jj].copy()
        state.Sigma = state.Sigma - kappa * np.outer(col, col.conj())
        state.mu = state.mu - (kappa * state.mu[jj]) * col
        state.gamma[changed_index] = new_gamma
    else:
        raise ConfigurationError(f"unknown change kind {change_kind!r}")
    _refresh_sq(state)
    state.moves_since_rebuild += 1


def _apply_gamma_only(state: FastState, idx: int, kind: str, new_gamma: float):
    if kind == "add":
        state.active.append(idx)
        state.gamma[idx] = new_gamma
    elif kind == "delete":
        state.active.remove(idx)
        state.gamma[idx] = 0.0
    elif kind == "reestimate":
        state.gamma[idx] = new_gamma
    else:
        raise ConfigurationError(f"unknown change kind {kind!r}")


def global_objective(state: FastState, prior: PriorConfig) -> float:
    """Sequential-scheme objective L(gamma; eta, lambda), log space.

    -rho(log|C| + y^H C^-1 y) + sum_active[(eps-1) log gamma - eta gamma],
    up to the field constant; pruned components contribute 0.  Gains of
    accepted moves equal the candidate delta-l values under this
    accounting (eta-prior normalizers are constants at fixed eta and are
    deliberately not tied to the active set).
    """
    p = state.p
    rho = p.field.rho
    M = p.M
    lam = state.lam
    const = -rho * M * math.log(math.pi / rho)
    if not state.active:
        return const - rho * (-M * math.log(lam) + lam * state.ynorm2)
    a = np.asarray(state.active)
    sign, logdet_sigma = np.linalg.slogdet(state.Sigma)
    if np.real(sign) <= 0:
        rebuild_stats(state)
        sign, logdet_sigma = np.linalg.slogdet(state.Sigma)
    logdet_C = (
        -M * math.log(lam)
        + float(np.sum(np.log(state.gamma[a])))
        - float(logdet_sigma)
    )
    quadform = lam * (state.ynorm2 - float(np.real(np.vdot(state.Hty[a], state.mu))))
    out = const - rho * (logdet_C + quadform)
    if prior.epsilon != 1.0:
        out += (prior.epsilon - 1.0) * float(np.sum(np.log(state.gamma[a])))
    out -= float(np.sum(state.eta[a] * state.gamma[a]))
    return out


@dataclass
class FastResult:
    estimate: np.ndarray
    metrics: Metrics
    objective_trace: list = dfield(default_factory=list)
    move_gains: list = dfield(default_factory=list)
    converged: bool = False
    status: str = ""


def run_fast(p: ProblemInstance, cfg: FastConfig) -> FastResult:
    """Add / delete / re-estimate loop starting from the empty model.

    Each iteration scans all candidates, executes the single move with
    the largest increase of l (ties: lowest index), updates eta on the
    moved index (three-layer prior), and optionally re-estimates lambda
    after the burn-in.  Stops when the best available gain drops below
    tol * |L| or after max_iters moves.
    """
    prior = cfg.prior
    rho = p.field.rho
    if prior.epsilon > 1.0 + rho:
        raise UnsupportedRegimeError("epsilon > 1+rho is out of scope")
    three_layer = prior.layers is PriorLayers.THREE
    a_full = prior.a_vec(p.L)
    b_full = prior.b_vec(p.L)
    if three_layer:
        if cfg.shared_eta:
            eta0 = np.zeros(p.L)  # uninformative until the first move
        else:
            eta0 = np.array([
                _eta_mode(0.0, prior.epsilon, a_full[i], b_full[i])
                for i in range(p.L)
            ])
    else:
        eta0 = prior.eta_vec(p.L)
    lam = cfg.lambda_known
    estimate_lambda = lam is None
    if estimate_lambda:
        lam = p.M / float(np.real(np.vdot(p.y, p.y)))
    state = init_fast_state(p, lam, eta0)

    trace = []
    gains = []
    status = "max_iters"
    moves = 0
    for it in range(1, cfg.max_iters + 1):
        s, q = excluded_stats(state)
        q2 = np.abs(q) ** 2
        ok = s > DEGENERATE_S
        ghat = np.zeros(p.L)
        idx_ok = np.flatnonzero(ok)
        if idx_ok.size:
            ghat[idx_ok] = kernels.gamma_stationary_batch(
                s[idx_ok], q2[idx_ok], state.eta[idx_ok], prior.epsilon, rho
            )
        in_model = state.gamma > 0.0
        delta = np.full(p.L, -np.inf)
        cand_new = np.where(ok, ghat, 0.0)
        # score l(gamma) at candidate and current values (pruned state = 0)
        sel_new = ok & (cand_new > 0.0)
        score_new = np.zeros(p.L)
        if np.any(sel_new):
            score_new[sel_new] = kernels.ell_batch(
                cand_new[sel_new], s[sel_new], q2[sel_new], state.eta[sel_new],
                prior.epsilon, rho,
            )
        score_old = np.zeros(p.L)
        sel_old = ok & in_model
        if np.any(sel_old):
            score_old[sel_old] = kernels.ell_batch(
                state.gamma[sel_old], s[sel_old], q2[sel_old], state.eta[sel_old],
                prior.epsilon, rho,
            )
        movable = ok & (in_model | (cand_new > 0.0))
        delta[movable] = score_new[movable] - score_old[movable]
        best = int(np.argmax(delta))
        best_gain = delta[best]
        obj_now = global_objective(state, prior)
        if not np.isfinite(best_gain) or best_gain <= cfg.tol * abs(obj_now):
            if moves == 0:
                status = "no_improvement"
            else:
                status = "converged"
            break
        if in_model[best]:
            kind = "delete" if cand_new[best] == 0.0 else "reestimate"
        else:
            kind = "add"
        update_stats(state, p, best, kind, new_gamma=float(cand_new[best]))
        moves = it
        obj_after = global_objective(state, prior)
        gains.append(obj_after - obj_now)
        trace.append(obj_after)
        if three_layer:
            if cfg.shared_eta:
                # pooled GEM update over the active components
                num = len(state.active) * prior.epsilon + float(a_full[0]) - 1.0
                state.eta[:] = max(num, 0.0) / (float(np.sum(state.gamma)) + float(b_full[0]))
            else:
                state.eta[best] = _eta_mode(state.gamma[best], prior.epsilon,
                                            a_full[best], b_full[best])
                if it % ETA_SWEEP_PERIOD == 0:
                    state.eta = np.array([
                        _eta_mode(state.gamma[i], prior.epsilon, a_full[i], b_full[i])
                        for i in range(p.L)
                    ])
        if estimate_lambda and it >= cfg.lambda_burn_in and state.active:
            new_lam = _lambda_update(state)
            if abs(new_lam - state.lam) > 1e-12 * state.lam:
                state.lam = new_lam
                rebuild_stats(state)

    estimate = np.zeros(p.L, dtype=p.field.dtype)
    if state.active:
        rebuild_stats(state)
        estimate[np.asarray(state.active)] = state.mu
    metrics = evaluate(estimate, p, moves)
    return FastResult(estimate=estimate, metrics=metrics, objective_trace=trace,
                      move_gains=gains, converged=status == "converged",
                      status=status)


def _eta_mode(gamma_l, epsilon, a_l, b_l):
    from .em import m_step_eta

    return m_step_eta(float(gamma_l), float(epsilon), float(a_l), float(b_l))


def _lambda_update(state: FastState) -> float:
    a = np.asarray(state.active)
    Ha = state.p.H[:, a]
    resid = state.p.y - Ha @ state.mu
    residual_expect = float(np.real(np.vdot(resid, resid)))
    residual_expect += float(np.real(np.sum(state.Sigma * state.G[np.ix_(a, a)].T)))
    if residual_expect <= 0.0:
        return LAMBDA_MAX
    return min(state.p.M / residual_expect, LAMBDA_MAX)
