"""Problem synthesis, oracle estimator and evaluation metrics.

Synthetic instances follow the benchmark protocol: iid unit-variance
Gaussian dictionary (circular in the complex case), K-sparse weights
with uniformly drawn support, white Gaussian noise at a precision set
by the per-component SNR.

Adopted SNR definition (recorded in every output file):
SNR = E|(H alpha)_m|^2 / E|w_m|^2 = K * lambda, hence
lambda = 10^(snr_db/10) / K.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    ContractViolationError,
    SingularMatrixError,
)

SNR_DEFINITION = "snr_lin=K*lambda"

FORMAT_VERSION = "bksbl-problem-v1"


class FieldKind(enum.Enum):
    """Number field of the linear model; fixes the constant rho."""

    REAL = "real"
    COMPLEX = "complex"

    @property
    def rho(self) -> float:
        return 0.5 if self is FieldKind.REAL else 1.0

    @property
    def dtype(self):
        return np.float64 if self is FieldKind.REAL else np.complex128


@dataclass(frozen=True)
class GenConfig:
    """Synthesis configuration; fully determines a problem via ``seed``."""

    M: int
    L: int
    K: int
    snr_db: float
    field: FieldKind = FieldKind.REAL
    seed: int = 0

    def __post_init__(self):
        if self.M < 1 or self.L < 1 or self.K < 0:
            raise ConfigurationError("M, L must be >= 1 and K >= 0")
        if self.K > self.L:
            raise ConfigurationError(f"K={self.K} exceeds L={self.L}")


@dataclass
class ProblemInstance:
    """One realization y = H alpha + w with known ground truth."""

    H: np.ndarray
    y: np.ndarray
    alpha_true: np.ndarray
    lambda_true: float
    field: FieldKind
    support_true: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.support_true is None:
            self.support_true = np.flatnonzero(self.alpha_true)
        self.H.setflags(write=False)
        self.y.setflags(write=False)
        self.alpha_true.setflags(write=False)
        self.support_true.setflags(write=False)

    @property
    def M(self) -> int:
        return self.H.shape[0]

    @property
    def L(self) -> int:
        return self.H.shape[1]


@dataclass
class Metrics:
    mse: float
    k_hat: int
    iterations: int
    support_exact: bool


def snr_to_noise_precision(snr_db: float, K: int) -> float:
    """Noise precision lambda = 10^(snr_db/10) / K.

    Follows from SNR = E|(H alpha)_m|^2 / E|w_m|^2 = K*lambda for
    unit-variance dictionary entries and weights (both fields).
    """
    if K < 1:
        raise ConfigurationError("per-component SNR needs K >= 1")
    return 10.0 ** (snr_db / 10.0) / K


def _standard_entries(rng: np.random.Generator, shape, fld: FieldKind):
    if fld is FieldKind.REAL:
        return rng.standard_normal(shape)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def generate_problem(cfg: GenConfig) -> ProblemInstance:
    """Draw one instance; deterministic in ``cfg.seed``.

    Draw order (fixed for reproducibility): dictionary, support,
    nonzero weights, noise.
    """
    rng = np.random.default_rng(cfg.seed)
    H = _standard_entries(rng, (cfg.M, cfg.L), cfg.field)
    support = np.sort(rng.choice(cfg.L, size=cfg.K, replace=False))
    alpha = np.zeros(cfg.L, dtype=cfg.field.dtype)
    if cfg.K > 0:
        alpha[support] = _standard_entries(rng, cfg.K, cfg.field)
        lam = snr_to_noise_precision(cfg.snr_db, cfg.K)
    else:
        lam = snr_to_noise_precision(cfg.snr_db, 1)
    w = _standard_entries(rng, cfg.M, cfg.field) / np.sqrt(lam)
    y = H @ alpha + w
    return ProblemInstance(H=H, y=y, alpha_true=alpha, lambda_true=lam,
                           field=cfg.field, support_true=support)


def _oracle_columns(p: ProblemInstance):
    return p.H[:, p.support_true]


def oracle_estimate(p: ProblemInstance) -> np.ndarray:
    """Least squares on the true support, exact zeros elsewhere."""
    alpha = np.zeros(p.L, dtype=p.field.dtype)
    if len(p.support_true) == 0:
        return alpha
    Ho = _oracle_columns(p)
    G = Ho.conj().T @ Ho
    try:
        sol = np.linalg.solve(G, Ho.conj().T @ p.y)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("oracle support columns are rank deficient") from exc
    if not np.all(np.isfinite(sol)):
        raise SingularMatrixError("oracle solve produced non-finite values")
    alpha[p.support_true] = sol
    return alpha


def oracle_mse(p: ProblemInstance) -> float:
    """lambda^-1 * trace((H_o^H H_o)^-1), the oracle estimator's MSE."""
    if len(p.support_true) == 0:
        return 0.0
    Ho = _oracle_columns(p)
    G = Ho.conj().T @ Ho
    try:
        Ginv = np.linalg.inv(G)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("oracle support columns are rank deficient") from exc
    return float(np.trace(Ginv).real) / p.lambda_true


def evaluate(alpha_hat: np.ndarray, p: ProblemInstance, iterations: int) -> Metrics:
    """Squared error, nonzero count (exact zeros off support) and support match."""
    alpha_hat = np.asarray(alpha_hat)
    if alpha_hat.shape != (p.L,):
        raise ContractViolationError(
            f"estimate has shape {alpha_hat.shape}, expected ({p.L},)"
        )
    diff = alpha_hat - p.alpha_true
    mse = float(np.real(np.vdot(diff, diff)))
    nonzero = np.flatnonzero(alpha_hat)
    support_exact = nonzero.size == p.support_true.size and np.array_equal(
        nonzero, p.support_true
    )
    return Metrics(mse=mse, k_hat=int(nonzero.size), iterations=int(iterations),
                   support_exact=bool(support_exact))


# -- problem file format ------------------------------------------------
#
# Header line: "<format-version>, <field>, <M>, <L>", then H row-major
# (complex entries as paired columns re im), then y on one row, then an
# optional alpha_true row and an optional lambda row.  %.17g per value.


def _fmt_row(vec, fld: FieldKind) -> str:
    if fld is FieldKind.COMPLEX:
        parts = []
        for z in vec:
            parts.append("%.17g" % z.real)
            parts.append("%.17g" % z.imag)
        return " ".join(parts)
    return " ".join("%.17g" % v for v in np.asarray(vec, dtype=float))


def _parse_row(tokens, n, fld: FieldKind):
    vals = np.array([float(t) for t in tokens], dtype=float)
    if fld is FieldKind.COMPLEX:
        if vals.size != 2 * n:
            raise ContractViolationError(f"expected {2*n} values, got {vals.size}")
        return vals[0::2] + 1j * vals[1::2]
    if vals.size != n:
        raise ContractViolationError(f"expected {n} values, got {vals.size}")
    return vals


def save_problem(p: ProblemInstance, path_or_file, include_truth: bool = True):
    """Write the text container format; see module docs."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w") if own else path_or_file
    try:
        fh.write(f"{FORMAT_VERSION}, {p.field.value}, {p.M}, {p.L}\n")
        for row in p.H:
            fh.write(_fmt_row(row, p.field) + "\n")
        fh.write(_fmt_row(p.y, p.field) + "\n")
        if include_truth:
            fh.write(_fmt_row(p.alpha_true, p.field) + "\n")
            fh.write("%.17g\n" % p.lambda_true)
    finally:
        if own:
            fh.close()


def load_problem(path_or_file) -> ProblemInstance:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file) if own else path_or_file
    try:
        lines = [ln.strip() for ln in fh.read().splitlines() if ln.strip()]
    finally:
        if own:
            fh.close()
    if not lines:
        raise ContractViolationError("empty problem file")
    head = [tok.strip() for tok in lines[0].split(",")]
    if len(head) != 4 or head[0] != FORMAT_VERSION:
        raise ContractViolationError(f"unrecognized header: {lines[0]!r}")
    fld = FieldKind(head[1])
    M, L = int(head[2]), int(head[3])
    body = lines[1:]
    if len(body) < M + 1:
        raise ContractViolationError("truncated problem file")
    H = np.vstack([_parse_row(body[i].split(), L, fld) for i in range(M)])
    y = _parse_row(body[M].split(), M, fld)
    rest = body[M + 1 :]
    alpha = np.zeros(L, dtype=fld.dtype)
    lam = 1.0
    if rest:
        alpha = _parse_row(rest[0].split(), L, fld)
        if len(rest) > 1:
            lam = float(rest[1])
    return ProblemInstance(H=H, y=y, alpha_true=alpha, lambda_true=lam, field=fld)


def problem_to_string(p: ProblemInstance, include_truth: bool = True) -> str:
    buf = io.StringIO()
    save_problem(p, buf, include_truth=include_truth)
    return buf.getvalue()
