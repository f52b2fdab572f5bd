"""Constructive interpolation of finite datasets.

Shallow case: project the data on a direction with distinct projections
t_i, then choose scalar pairs (a_j, b_j) so the d x d matrix
sigma(a_j t_i - b_j) is well conditioned, and solve for the output weights.

Deep case (polynomial sigma of degree m >= 2): stack scalar layers so the
effective activation g has degree m^(l-1) > d - 2, then interpolate with g.

Low-degree polynomial sigma with d > m + 1 cannot be reduced to one
direction; there the hidden rows are drawn in general position instead,
which succeeds exactly when the moment features of the data are
independent (see :func:`poly_feasibility`).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import softmax

from .activations import Activation, compose_chain
from .analysis import DEFAULT_INTERVAL, poly_degree_test
from .core import ComposedNet, Dataset, ShallowNet
from .errors import ConditioningError, InputError, InternalError, InterplabError, PreconditionError
from .rng import stream

__all__ = [
    "COND_LIMIT",
    "INTERP_TOL",
    "SeparatingDirection",
    "find_separating_direction",
    "construct_shallow_interpolant",
    "required_depth",
    "construct_deep_interpolant",
    "monomial_features",
    "FeasibilityReport",
    "poly_feasibility",
    "interpolate_multi_output",
    "Classifier",
    "fit_classifier",
]

_EPS = np.finfo(np.float64).eps
COND_LIMIT = 1.0 / math.sqrt(_EPS)
INTERP_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class SeparatingDirection:
    w: np.ndarray
    t: np.ndarray
    min_gap: float


def _min_gap(t):
    if len(t) < 2:
        return math.inf
    return float(np.min(np.diff(np.sort(t))))


def find_separating_direction(data: Dataset, seed=0, attempts: int = 64) -> SeparatingDirection:
    """Unit vector w whose projections w . x_i are pairwise distinct.

    Draws ``attempts`` directions uniformly on the sphere and keeps the one
    with the largest minimum gap between projections.
    """
    rng = stream(seed, "separating-direction")
    X = data.inputs
    best = None
    for _ in range(attempts if data.d > 1 else 1):
        w = rng.standard_normal(data.p)
        w /= np.linalg.norm(w)
        t = X @ w
        gap = _min_gap(t)
        if best is None or gap > best.min_gap:
            best = SeparatingDirection(w, t, gap)
    if not best.min_gap > 0:
        raise InternalError("no separating direction found; are the inputs distinct?", min_gap=best.min_gap)
    return best


# --- (a_j, b_j) proposals -----------------------------------------------------


def _propose_global(t, rng):
    # slopes uniform on [-1, 1] * 2/max|t|; biases uniform on the span of a_j t_i widened by half
    d = len(t)
    tmax = float(np.max(np.abs(t))) or 1.0
    a = rng.uniform(-1.0, 1.0, d) * (2.0 / tmax)
    at = np.outer(t, a)
    lo, hi = at.min(axis=0), at.max(axis=0)
    mid, half = (lo + hi) / 2, 0.75 * (hi - lo)
    return a, rng.uniform(mid - half, mid + half)


def _propose_gap(t, rng):
    # one transition inside each gap of the sorted projections, one outside the data
    d = len(t)
    ts = np.sort(t)
    span = float(ts[-1] - ts[0]) or (float(np.max(np.abs(t))) or 1.0)
    gaps = np.diff(ts)
    centers = np.empty(d)
    centers[: d - 1] = ts[:-1] + rng.uniform(0.25, 0.75, d - 1) * gaps
    if rng.integers(2):
        centers[-1] = ts[-1] + rng.uniform(0.1, 1.0) * span
    else:
        centers[-1] = ts[0] - rng.uniform(0.1, 1.0) * span
    local = np.append(gaps, span)
    kappa = math.exp(rng.uniform(math.log(0.5), math.log(8.0)))
    mode = rng.integers(3)
    if mode == 2:
        signs = rng.choice([-1.0, 1.0], d)
    else:
        signs = np.full(d, 1.0 if mode == 0 else -1.0)
    a = signs * kappa / local
    return a, a * centers


def _propose_general(X, rng):
    # hidden rows in general position, for the multi-dimensional polynomial branch
    d, p = X.shape
    scale = float(np.max(np.linalg.norm(X, axis=1))) or 1.0
    W = rng.standard_normal((d, p)) / scale
    Z = X @ W.T
    lo, hi = Z.min(axis=0), Z.max(axis=0)
    mid, half = (lo + hi) / 2, 0.75 * (hi - lo) + 0.5
    return W, rng.uniform(mid - half, mid + half)


def _equilibrated_cond(A):
    norms = np.linalg.norm(A, axis=0)
    if not np.all(np.isfinite(A)) or np.any(norms == 0):
        return math.inf, norms
    s = np.linalg.svd(A / norms, compute_uv=False)
    return (s[0] / s[-1] if s[-1] > 0 else math.inf), norms


def _solve_refined(A, norms, y):
    B = A / norms
    u = np.linalg.solve(B, y)
    u += np.linalg.solve(B, y - B @ u)
    return u / norms


def _pad(rows, b, v, h):
    d, p = rows.shape
    W = np.zeros((h, p))
    W[:d] = rows
    bb = np.zeros(h)
    bb[:d] = b
    vv = np.zeros(h)
    vv[:d] = v
    return W, bb, vv


def construct_shallow_interpolant(
    data: Dataset,
    a: Activation,
    h: Optional[int] = None,
    seed=0,
    interp_tol: float = INTERP_TOL,
    rounds: int = 256,
    full_output: bool = False,
):
    """Shallow network of width h >= d with f(x_i) = y_i for every data point.

    Nodes beyond the first d are set to zero. All ``rounds`` candidate
    parameter sets are scored by the condition number of the column-scaled
    d x d system and the best one is solved with one step of iterative
    refinement. Raises ConditioningError when the best condition number
    exceeds ``COND_LIMIT`` or the re-evaluated residual exceeds
    ``interp_tol``.

    With ``full_output=True`` returns ``(net, info)``.
    """
    if data.q != 1:
        raise InputError("construct_shallow_interpolant handles one target column; use interpolate_multi_output")
    d = data.d
    h = d if h is None else int(h)
    if h < d:
        raise InputError(f"width {h} is below the number of data points {d}")
    y = data.y
    X = data.inputs

    general = a.is_polynomial and a.degree <= d - 2
    if general:
        report = poly_feasibility(data, a.degree)
        if not report.feasible:
            raise PreconditionError(
                f"degree-{a.degree} polynomial activation cannot interpolate this data "
                f"(moment-feature rank {report.feature_rank} < {d})",
                feature_rank=report.feature_rank,
            )
    elif d >= 2 and not a.is_polynomial and poly_degree_test(a, d - 2, DEFAULT_INTERVAL):
        raise PreconditionError(f"activation is numerically a polynomial of degree <= {d - 2} on {DEFAULT_INTERVAL}")

    rng = stream(seed, "ab-sampling")
    min_gap = None
    if general:
        propose = lambda r: _propose_general(X, rng)  # noqa: E731
    else:
        sd = find_separating_direction(data, seed)
        min_gap = sd.min_gap

        def propose(r):
            ab = _propose_global(sd.t, rng) if r % 2 == 0 else _propose_gap(sd.t, rng)
            return np.outer(ab[0], sd.w), ab[1]

    best = (math.inf, None, None, None, -1)
    with np.errstate(all="ignore"):
        for r in range(rounds):
            rows, b = propose(r)
            A = a(X @ rows.T - b)
            cond, norms = _equilibrated_cond(A)
            if cond < best[0]:
                best = (cond, rows, b, (A, norms), r)
    cond, rows, b, system, best_round = best
    if not cond <= COND_LIMIT:
        raise ConditioningError(
            f"best condition number {cond:.3g} after {rounds} rounds exceeds {COND_LIMIT:.3g}",
            best_condition=cond,
            rounds=rounds,
        )
    v = _solve_refined(*system, y)
    net = ShallowNet(*_pad(rows, b, v, h), 0.0, a)
    resid = net.predict(X) - y
    max_res = float(np.max(np.abs(resid)))
    if not max_res <= interp_tol:
        raise ConditioningError(
            f"residual {max_res:.3g} exceeds tolerance {interp_tol:g}",
            best_condition=cond,
            max_residual=max_res,
        )
    if not full_output:
        return net
    info = {
        "condition_number": cond,
        "rounds": rounds,
        "best_round": best_round,
        "scheme": "general-position" if general else ("global" if best_round % 2 == 0 else "gap"),
        "min_gap": min_gap,
        "residuals": resid.tolist(),
        "max_residual": max_res,
    }
    return net, info


def required_depth(m: int, d: int) -> int:
    """Smallest depth l with m^(l-1) > d - 2 (at least 2)."""
    if int(m) != m or m <= 1:
        raise InputError("degree m must be an integer >= 2; affine or constant activations cannot gain degree")
    m, d = int(m), int(d)
    l, power = 2, m
    while power <= d - 2:
        l += 1
        power *= m
    return l


def construct_deep_interpolant(
    data: Dataset,
    a: Activation,
    seed=0,
    h: Optional[int] = None,
    interp_tol: float = INTERP_TOL,
    rounds: int = 256,
    full_output: bool = False,
):
    """Deep interpolant for a polynomial activation of degree m >= 2.

    Chain scalars are drawn as s (1 + u), s = +-1, u ~ U[0, 0.25], giving an
    effective activation g of exact degree m^(l-1) with l = required_depth(m, d).
    The shallow construction with g fixes the first layer and output weights.
    """
    if not a.is_polynomial:
        raise InputError("construct_deep_interpolant needs a polynomial activation with exact coefficients")
    m = a.degree
    l = required_depth(m, data.d)
    rng = stream(seed, "chain-jitter")
    want = m ** (l - 1)
    for _ in range(16):
        chain = tuple(rng.choice([-1.0, 1.0]) * (1.0 + rng.uniform(0.0, 0.25)) for _ in range(l - 2))
        g = compose_chain(a, chain)
        coeffs = np.abs(np.asarray(g.poly_coeffs))
        if g.degree == want and coeffs[-1] > 1e-12 * coeffs.max():
            break
    else:
        raise InternalError(f"could not reach degree {want} without leading-coefficient cancellation")
    shallow, info = construct_shallow_interpolant(
        data, g, h=h, seed=seed, interp_tol=interp_tol, rounds=rounds, full_output=True
    )
    net = ComposedNet(shallow.W, shallow.b, chain, shallow.v, a, shallow.b_out)
    resid = net.predict(data.inputs) - data.y
    max_res = float(np.max(np.abs(resid)))
    if not max_res <= interp_tol:
        raise ConditioningError(
            f"composed residual {max_res:.3g} exceeds tolerance {interp_tol:g}",
            best_condition=info["condition_number"],
        )
    if not full_output:
        return net
    info.update(depth=l, effective_degree=want, residuals=resid.tolist(), max_residual=max_res)
    return net, info


# --- polynomial feasibility -------------------------------------------------


def monomial_features(X, m: int) -> np.ndarray:
    """All monomials of total degree 0..m in the columns of X (constant first)."""
    X = np.asarray(X, dtype=np.float64)
    d, p = X.shape
    cols = [np.ones(d)]
    for k in range(1, m + 1):
        for idx in itertools.combinations_with_replacement(range(p), k):
            cols.append(np.prod(X[:, idx], axis=1))
    return np.column_stack(cols)


@dataclass(frozen=True)
class FeasibilityReport:
    m: int
    d: int
    dim_bound: int
    dim_bound_with_constant: int
    feature_rank: int
    feasible: bool


def poly_feasibility(data: Dataset, m: int, tol_factor: float = 1.0) -> FeasibilityReport:
    """Whether a degree-m polynomial activation can interpolate the inputs.

    ``dim_bound`` is sum_{k=1..m} C(p+k-1, k); the decision uses the rank of
    the moment-feature matrix (constant column included).
    """
    if int(m) != m or m < 1:
        raise InputError("degree m must be a positive integer")
    m = int(m)
    p, d = data.p, data.d
    bound = sum(math.comb(p + k - 1, k) for k in range(1, m + 1))
    F = monomial_features(data.inputs, m)
    s = np.linalg.svd(F, compute_uv=False)
    rank = int(np.sum(s > tol_factor * d * _EPS * s[0])) if s[0] > 0 else 0
    return FeasibilityReport(m, d, bound, bound + 1, rank, rank == d)


# --- vector outputs and classification ---------------------------------------


def interpolate_multi_output(data: Dataset, a: Activation, seed=0, h: Optional[int] = None, **kwargs):
    """One shallow interpolant per target column, all built from the same seed."""
    nets = []
    for j in range(data.q):
        try:
            nets.append(construct_shallow_interpolant(data.column(j), a, h=h, seed=seed, **kwargs))
        except InterplabError as exc:
            exc.details["component"] = j
            raise
    return nets


@dataclass(frozen=True, eq=False)
class Classifier:
    nets: tuple
    n_classes: int

    def scores(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.column_stack([net.predict(X) for net in self.nets])

    def predict_proba(self, X, shift=0.0):
        return softmax(self.scores(X) + shift, axis=1)

    def predict(self, X, shift=0.0):
        """Class labels in 1..r."""
        return np.argmax(self.predict_proba(X, shift), axis=1) + 1


def fit_classifier(inputs, labels, a: Activation, seed=0, n_classes: Optional[int] = None, **kwargs) -> Classifier:
    """Interpolate one-hot encodings of the labels; predict by softmax argmax."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.all(np.equal(np.mod(labels, 1), 0)):
        raise InputError("labels must be a vector of integers")
    labels = labels.astype(int)
    r = int(labels.max()) if n_classes is None else int(n_classes)
    if labels.min() < 1 or labels.max() > r:
        raise InputError(f"labels must lie in 1..{r}")
    onehot = np.eye(r)[labels - 1]
    nets = interpolate_multi_output(Dataset(inputs, onehot), a, seed=seed, **kwargs)
    return Classifier(tuple(nets), r)
