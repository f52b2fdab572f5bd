"""Random-feature interpolation: Gaussian hidden weights, a least-squares
output layer, and width certificates from the matrix Chernoff bound.

All routines expect the bias to be absorbed into the inputs
(``Dataset.with_bias()``), so the hidden layer is sigma(X W^T) with
W of shape h x (p + 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .activations import Activation, compose_chain
from .analysis import truncation_level
from .core import Dataset
from .errors import InfeasibleEstimate, InputError, PreconditionError
from .interpolation import required_depth
from .rng import stream

__all__ = [
    "FeatureMatrix",
    "sample_features",
    "numerical_rank",
    "SigmaTildeEstimate",
    "estimate_sigma_tilde",
    "chernoff_base",
    "log_chernoff_failure_bound",
    "chernoff_failure_bound",
    "WidthCertificate",
    "polynomial_truncation_level",
    "recommend_width",
    "FitResult",
    "fit_output_weights",
    "DeepPipelineResult",
    "deep_poly_pipeline",
    "composed_power",
]

_EPS = np.finfo(np.float64).eps
N_FOLDS = 10
_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    phi: np.ndarray  # d x h
    W: np.ndarray  # h x (p + 1)
    seed: int
    activation: Activation


def _require_bias(data):
    if not data.bias_absorbed:
        raise PreconditionError("random-feature routines need bias_absorbed data; call Dataset.with_bias()")


def sample_features(data: Dataset, a: Activation, h: int, seed=0) -> FeatureMatrix:
    """phi = sigma(X W^T) with W ~ N(0, 1)^(h x (p+1)).

    W is drawn row-major from the (seed, "W-init") stream, so the first h1
    rows for width h coincide with the whole matrix for width h1.
    """
    _require_bias(data)
    if h < 1:
        raise InputError("width must be positive")
    W = stream(seed, "W-init").standard_normal((int(h), data.p))
    phi = a(data.inputs @ W.T)
    phi.setflags(write=False)
    W.setflags(write=False)
    return FeatureMatrix(phi, W, seed, a)


def numerical_rank(phi, tol_factor: float = 1.0) -> int:
    """Count of singular values above tol_factor * d * eps * s_max (d = number of rows)."""
    phi = np.asarray(phi, dtype=np.float64)
    s = np.linalg.svd(phi, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol_factor * phi.shape[0] * _EPS * s[0]))


@dataclass(frozen=True, eq=False)
class SigmaTildeEstimate:
    matrix: np.ndarray
    lambda_min: float
    stderr: float
    mc_samples: int
    truncation: Optional[float]
    kept_fraction: float


def _fold_sizes(n):
    base, extra = divmod(n, N_FOLDS)
    return [base + (f < extra) for f in range(N_FOLDS)]


def estimate_sigma_tilde(
    data: Dataset, a: Activation, mc_samples: int = 100_000, seed=0, truncation: Optional[float] = None
) -> SigmaTildeEstimate:
    """Monte-Carlo estimate of E_w[sigma(Xw) sigma(Xw)^T], w ~ N(0, I).

    Uses the rows of ``data.inputs`` as given. With ``truncation`` T, draws
    with ||sigma(Xw)|| >= T contribute zero. The sample is split into 10
    folds, each from its own (seed, "sigma-tilde", fold) stream; the standard
    error of the smallest eigenvalue is the spread of the per-fold values
    over sqrt(10), floored at the eigensolver's round-off level d eps lambda_max.
    """
    if mc_samples < 1000:
        raise InputError("mc_samples must be at least 1000")
    X = data.inputs
    d, p = X.shape
    total = np.zeros((d, d))
    fold_lams = []
    kept = 0
    for fold, n in enumerate(_fold_sizes(int(mc_samples))):
        rng = stream(seed, "sigma-tilde", fold)
        S = np.zeros((d, d))
        left = n
        while left:
            m = min(left, _CHUNK)
            F = a(X @ rng.standard_normal((m, p)).T)  # d x m
            if truncation is not None:
                keep = np.linalg.norm(F, axis=0) < truncation
                kept += int(keep.sum())
                F = F[:, keep]
            else:
                kept += m
            S += F @ F.T
            left -= m
        fold_lams.append(np.linalg.eigvalsh(S / n)[0])
        total += S
    Sigma = total / mc_samples
    Sigma = 0.5 * (Sigma + Sigma.T)
    ev = np.linalg.eigvalsh(Sigma)
    floor = d * _EPS * max(abs(ev[-1]), abs(ev[0]))
    stderr = max(float(np.std(fold_lams, ddof=1)) / math.sqrt(N_FOLDS), floor)
    Sigma.setflags(write=False)
    return SigmaTildeEstimate(Sigma, float(ev[0]), stderr, int(mc_samples), truncation, kept / mc_samples)


def chernoff_base(delta: float) -> float:
    """e^(-delta) / (1 - delta)^(1 - delta)."""
    _check_delta(delta)
    return math.exp(_log_base(delta))


def _check_delta(delta):
    if not 0.0 <= delta < 1.0:
        raise InputError(f"delta must lie in [0, 1), got {delta}")


def _log_base(delta):
    return -delta - (1.0 - delta) * math.log1p(-delta)


def log_chernoff_failure_bound(d, h, lambda_min, T_d, delta=0.5) -> float:
    """Natural log of d * base(delta)^(h lambda_min / T_d^2)."""
    _check_delta(delta)
    if not lambda_min > 0:
        raise InputError("lambda_min must be positive")
    if not T_d > 0:
        raise InputError("T_d must be positive")
    return math.log(d) + _log_base(delta) * h * lambda_min / T_d**2


def chernoff_failure_bound(d, h, lambda_min, T_d, delta=0.5) -> float:
    """Bound on P(lambda_min(phi phi^T) <= (1 - delta) h lambda_min)."""
    return math.exp(log_chernoff_failure_bound(d, h, lambda_min, T_d, delta))


@dataclass(frozen=True)
class WidthCertificate:
    lambda_tilde_est: float
    lambda_tilde_stderr: float
    lambda_trunc: float
    lambda_trunc_stderr: float
    mc_samples: int
    T_d: float
    truncation_rule: str
    delta: float
    chernoff_base: float
    recommended_h: int
    target_failure_prob: float
    failure_bound: float

    @property
    def predicted_success(self) -> float:
        return max(0.0, 1.0 - self.failure_bound)


def polynomial_truncation_level(a: Activation, d: int) -> float:
    """|sigma(0)| sqrt(d) + 1, the truncation level used for polynomial activations."""
    return abs(float(a(0.0))) * math.sqrt(d) + 1.0


def recommend_width(
    data: Dataset,
    a: Activation,
    target_failure_prob: float = 1e-6,
    delta: float = 0.5,
    mc_samples: int = 100_000,
    seed=0,
    M: Optional[float] = None,
    b0: float = 0.0,
) -> WidthCertificate:
    """Smallest h whose Chernoff failure bound is at most ``target_failure_prob``.

    The truncation level is sqrt(d)(sup_[-M, M] |sigma| + 1) with
    M = 4 max_i ||x_i|| + |b0| by default, or |sigma(0)| sqrt(d) + 1 for
    polynomial activations. The exponent uses the smallest eigenvalue of the
    truncated second-moment estimate, which must exceed three standard errors.
    """
    if not 0.0 < target_failure_prob < 1.0:
        raise InputError("target failure probability must lie in (0, 1)")
    _check_delta(delta)
    if delta == 0.0:
        raise InputError("delta = 0 gives a vacuous bound")
    _require_bias(data)
    d = data.d
    if a.is_polynomial:
        T_d, rule = polynomial_truncation_level(a, d), "polynomial"
    else:
        if M is None:
            M = 4.0 * float(np.max(np.linalg.norm(data.inputs, axis=1))) + abs(b0)
        T_d, rule = truncation_level(a, d, M), "sup-norm"
    full = estimate_sigma_tilde(data, a, mc_samples, seed)
    trunc = estimate_sigma_tilde(data, a, mc_samples, seed, truncation=T_d)
    lam, se = trunc.lambda_min, trunc.stderr
    if not lam > 3.0 * se:
        raise InfeasibleEstimate(
            f"truncated lambda estimate {lam:.3g} is not 3 standard errors ({se:.3g}) above zero",
            lambda_est=lam,
            stderr=se,
        )
    log_target = math.log(target_failure_prob)
    rate = -_log_base(delta) * lam / T_d**2
    h = max(1, math.ceil((math.log(d) - log_target) / rate))
    # guard the closed-form inversion against rounding at the boundary
    while log_chernoff_failure_bound(d, h, lam, T_d, delta) > log_target:
        h += 1
    while h > 1 and log_chernoff_failure_bound(d, h - 1, lam, T_d, delta) <= log_target:
        h -= 1
    return WidthCertificate(
        lambda_tilde_est=full.lambda_min,
        lambda_tilde_stderr=full.stderr,
        lambda_trunc=lam,
        lambda_trunc_stderr=se,
        mc_samples=int(mc_samples),
        T_d=T_d,
        truncation_rule=rule,
        delta=delta,
        chernoff_base=chernoff_base(delta),
        recommended_h=int(h),
        target_failure_prob=target_failure_prob,
        failure_bound=chernoff_failure_bound(d, h, lam, T_d, delta),
    )


@dataclass(frozen=True, eq=False)
class FitResult:
    v: np.ndarray
    residual_norm: float
    rank: int
    full_rank: bool


def fit_output_weights(fm, y, tol_factor: float = 1.0) -> FitResult:
    """Minimum-norm least-squares output weights for features ``fm`` (FeatureMatrix or array).

    Singular values below tol_factor * d * eps * s_max are treated as zero. With full row
    rank this is phi^T (phi phi^T)^{-1} y.
    """
    phi = fm.phi if isinstance(fm, FeatureMatrix) else np.asarray(fm, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = phi.shape[0]
    if y.shape != (d,):
        raise InputError(f"targets of shape {y.shape} do not match {d} feature rows")
    U, s, Vt = np.linalg.svd(phi, full_matrices=False)
    r = int(np.sum(s > tol_factor * d * _EPS * s[0])) if s.size and s[0] > 0 else 0
    v = Vt[:r].T @ ((U[:, :r].T @ y) / s[:r])
    res = float(np.linalg.norm(phi @ v - y))
    return FitResult(v, res, r, r == d)


@dataclass(frozen=True, eq=False)
class DeepPipelineResult:
    depth: int
    activation: Activation
    features: FeatureMatrix
    fit: FitResult


def deep_poly_pipeline(data: Dataset, a: Activation, h: int, seed=0) -> DeepPipelineResult:
    """Random features through g = sigma composed (l - 1) times, l = required_depth(m, d)."""
    if not a.is_polynomial:
        raise InputError("deep_poly_pipeline needs a polynomial activation")
    l = required_depth(a.degree, data.d)
    g = composed_power(a, l)
    fm = sample_features(data, g, h, seed)
    return DeepPipelineResult(l, g, fm, fit_output_weights(fm, data.y))


def composed_power(a: Activation, l: int) -> Activation:
    """sigma composed with itself l - 1 times (unit chain weights)."""
    return compose_chain(a, (1.0,) * (l - 2))
