"""Numerical probes of an activation: mollification, polynomial-degree
detection, points with non-vanishing derivatives, and the truncation level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import comb, factorial

from .activations import Activation
from .errors import InputError, NotFound, PreconditionError

__all__ = [
    "bump",
    "bump_quadrature",
    "MollifiedActivation",
    "mollify_eval",
    "poly_degree_test",
    "derivative_estimates",
    "DerivativeCertificate",
    "find_nonvanishing_point",
    "truncation_level",
    "DEFAULT_INTERVAL",
]

DEFAULT_INTERVAL = (-4.0, 4.0)
_EPS = np.finfo(np.float64).eps
# relative accuracy assumed for a mollified value; feeds the noise floor of
# finite-difference derivatives
_MOLLIFY_RTOL = 1e-13


def _bump_raw(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def _bump_constant():
    half, _ = integrate.quad(
        lambda s: math.exp(-1.0 / (1.0 - s * s)) if s < 1.0 else 0.0,
        0.0,
        1.0,
        epsabs=0.0,
        epsrel=1e-13,
        limit=200,
    )
    return 1.0 / (2.0 * half)


def bump(x):
    """The unit-mass C-infinity bump C exp(-1/(1-x^2)) supported on [-1, 1]."""
    return _bump_constant() * _bump_raw(x)


@lru_cache(maxsize=16)
def bump_quadrature(nodes: int = 257):
    """Nodes z and weights w with sum(w * f(z)) ~ integral of bump(z) f(z) over [-1, 1].

    Gauss-Legendre on the two halves [-1, 0] and [0, 1] with (nodes + 1) // 2
    points each. Splitting at the kernel centre keeps the rule symmetric and
    keeps a jump of f at the centre off the nodes.
    """
    if nodes < 2:
        raise InputError("need at least two quadrature nodes")
    m = (nodes + 1) // 2
    x, w = np.polynomial.legendre.leggauss(m)
    right = 0.5 * (x + 1.0)
    z = np.concatenate([-right[::-1], right])
    wz = np.concatenate([w[::-1], w]) * 0.5
    weights = wz * bump(z)
    z.setflags(write=False)
    weights.setflags(write=False)
    return z, weights


@dataclass(frozen=True, eq=False)
class MollifiedActivation:
    """sigma_eps(t) = integral of (1/eps) bump((t - x)/eps) sigma(x) dx."""

    base: Activation
    epsilon: float
    quadrature_nodes: int = 257

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InputError("epsilon must be positive")

    def __call__(self, t):
        return mollify_eval(self, t)


def mollify_eval(m: MollifiedActivation, t):
    """Quadrature value of the mollified activation at t (scalar or array)."""
    z, w = bump_quadrature(m.quadrature_nodes)
    t = np.asarray(t, dtype=np.float64)
    vals = m.base(t[..., None] - m.epsilon * z) @ w
    return float(vals) if vals.ndim == 0 else vals


def _divided_difference_weights(n):
    j = np.arange(n + 1)
    return (-1.0) ** (n - j) * comb(n, j)


def poly_degree_test(a: Activation, k: int, interval=DEFAULT_INTERVAL, grid: int = 129, tol_rel: float = 1e-8) -> bool:
    """True iff ``a`` behaves like a polynomial of degree <= k on ``interval``.

    Order-(k+1) divided differences are taken over sliding windows of the
    grid, in the rescaled variable s = (t - lo)/(hi - lo). Window points are
    spread by a stride so each window spans about half the interval, which
    keeps round-off amplification bounded for large k. The test passes when
    every divided difference is below ``tol_rel * max|sigma|`` plus its own
    round-off bound.
    """
    lo, hi = map(float, interval)
    if not lo < hi:
        raise InputError(f"degenerate interval [{lo}, {hi}]")
    if k < 0 or int(k) != k:
        raise InputError("k must be a non-negative integer")
    k = int(k)
    if grid < k + 2:
        raise InputError(f"grid of {grid} points cannot resolve degree {k}")
    t = np.linspace(lo, hi, grid)
    f = a(t)
    n = k + 1
    stride = max(1, (grid - 1) // (2 * n))
    span = n * stride
    H = stride / (grid - 1)
    coef = _divided_difference_weights(n) / (factorial(n) * H**n)
    windows = np.lib.stride_tricks.sliding_window_view(f, span + 1)[:, ::stride]
    dd = windows @ coef
    noise = 16 * _EPS * (np.abs(windows) @ np.abs(coef))
    scale = float(np.max(np.abs(f)))
    return bool(np.all(np.abs(dd) <= tol_rel * scale + noise))


def _central_weights(k):
    """Weights and half-step offsets of the (k+1)-point central difference of order k."""
    j = np.arange(k + 1)
    return (-1.0) ** j * comb(k, j), k - 2 * j  # offset in units of h/2


def derivative_estimates(a: Activation, x, max_order: int, epsilon: float, nodes: int = 257):
    """Central-difference estimates of sigma_eps^(k)(x) for k = 0..max_order.

    Uses step h = epsilon / 4 on the mollified activation. Returns
    ``(values, noise)``: arrays of shape (max_order + 1, *x.shape), where
    ``noise`` bounds the round-off and quadrature contamination of each
    estimate.
    """
    x = np.asarray(x, dtype=np.float64)
    h = epsilon / 4.0
    mol = MollifiedActivation(a, epsilon, nodes)
    offsets = np.arange(-max_order, max_order + 1)
    vals = mol(x[..., None] + offsets * (h / 2.0))  # (..., 2*max_order+1)
    scale = np.max(np.abs(vals), axis=-1)
    out = np.empty((max_order + 1,) + x.shape)
    noise = np.empty_like(out)
    for k in range(max_order + 1):
        w, off = _central_weights(k)
        out[k] = vals[..., off + max_order] @ w / h**k
        noise[k] = (2.0**k) * (_MOLLIFY_RTOL + 4 * _EPS) * np.maximum(scale, 1e-300) / h**k
    return out, noise


@dataclass(frozen=True)
class DerivativeCertificate:
    b0: float
    max_order: int
    derivative_values: tuple
    epsilon_used: float
    thresholds: tuple

    def __post_init__(self):
        if len(self.derivative_values) != self.max_order + 1:
            raise InputError("certificate needs one derivative per order")
        for k, (dv, thr) in enumerate(zip(self.derivative_values, self.thresholds)):
            if not abs(dv) > thr:
                raise InputError(f"derivative of order {k} ({dv:g}) does not exceed tolerance {thr:g}")


def _scores(a, bs, max_order, epsilon, tol, nodes, chunk=512):
    """log(|D_k| / threshold_k) for every candidate b (evaluated at -b)."""
    res = np.empty((max_order + 1, len(bs)))
    for s in range(0, len(bs), chunk):
        vals, noise = derivative_estimates(a, -bs[s : s + chunk], max_order, epsilon, nodes)
        thr = np.maximum(noise, tol)
        with np.errstate(divide="ignore"):
            res[:, s : s + chunk] = np.log(np.abs(vals)) - np.log(thr)
    return res


def _pick(scores):
    """Walk D_{d-1}, D_{d-1} n D_{d-2}, ... and return (index, complete) for the best survivor."""
    alive = np.ones(scores.shape[1], dtype=bool)
    for k in range(scores.shape[0] - 1, -1, -1):
        nxt = alive & (scores[k] > 0)
        if not nxt.any():
            # alive is never empty here: the walk stops at the first empty intersection
            return int(np.argmax(np.where(alive, scores[k:].min(axis=0), -np.inf))), False
        alive = nxt
    worst = scores.min(axis=0)
    return int(np.argmax(np.where(alive, worst, -np.inf))), True


def find_nonvanishing_point(
    a: Activation,
    d: int,
    epsilon: float = 0.05,
    search_interval=DEFAULT_INTERVAL,
    tol: float = 1e-8,
    grid: int = 4097,
    nodes: int = 257,
) -> DerivativeCertificate:
    """Find b0 with |sigma_eps^(k)(-b0)| above tolerance for every k = 0..d-1.

    The open sets D_k = {b : sigma_eps^(k)(-b) != 0} are intersected from the
    highest order down on a grid over ``search_interval``. If the intersection
    empties, the grid is refined four-fold once around the best candidate.
    The effective tolerance per order is max(tol, finite-difference noise).
    """
    lo, hi = map(float, search_interval)
    if not lo < hi:
        raise InputError(f"degenerate search interval [{lo}, {hi}]")
    if d < 1:
        raise InputError("d must be at least 1")
    if not epsilon > 0:
        raise InputError("epsilon must be positive")
    if d >= 2 and poly_degree_test(a, d - 2, (lo, hi)):
        raise PreconditionError(
            f"activation is numerically a polynomial of degree <= {d - 2} on [{lo}, {hi}]"
        )
    max_order = d - 1
    bs = np.linspace(lo, hi, grid)
    scores = _scores(a, bs, max_order, epsilon, tol, nodes)
    i, ok = _pick(scores)
    best_b = bs[i]
    if not ok:
        step = (hi - lo) / (grid - 1)
        fine = np.linspace(best_b - 4 * step, best_b + 4 * step, 33)
        fine = fine[(fine >= lo) & (fine <= hi)]
        fscores = _scores(a, fine, max_order, epsilon, tol, nodes)
        j, ok = _pick(fscores)
        best_b = fine[j]
    vals, noise = derivative_estimates(a, np.array([-best_b]), max_order, epsilon, nodes)
    vals, thr = vals[:, 0], np.maximum(noise[:, 0], tol)
    if not ok or np.any(np.abs(vals) <= thr):
        raise NotFound(
            "no point with all derivatives non-vanishing; enlarge the interval or change epsilon",
            best_candidate=float(best_b),
            smallest_derivative=float(np.min(np.abs(vals))),
        )
    return DerivativeCertificate(
        float(best_b), max_order, tuple(float(v) for v in vals), float(epsilon), tuple(float(t) for t in thr)
    )


def truncation_level(a: Activation, d: int, M: float) -> float:
    """sqrt(d) * (max |sigma| on a 1025-point grid of [-M, M] + 1)."""
    if not M > 0:
        raise InputError("M must be positive")
    sup = float(np.max(np.abs(a(np.linspace(-M, M, 1025)))))
    return math.sqrt(d) * (sup + 1.0)
