"""Loss Hessian at interpolation points.

At a zero-loss point the second-order term sum_i f_i Hess(f_i) vanishes, so
the Hessian of L = sum_i f_i^2 equals 2 J^T J with J the residual Jacobian.
Its rank is rank(J) <= d; when J has full row rank there are exactly d
positive and n - d zero eigenvalues.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import ComposedNet, Dataset, ShallowNet, loss_and_residuals
from .errors import InputError, InternalError, PreconditionError, UnsupportedError
from .interpolation import INTERP_TOL

__all__ = [
    "GenericityWarning",
    "residual_jacobian",
    "finite_difference_jacobian",
    "loss_hessian",
    "SpectrumReport",
    "spectrum_at_minimum",
]


class GenericityWarning(UserWarning):
    """The residual Jacobian is rank deficient at the minimum."""


def _check(net, data):
    if data.p != net.input_dim:
        raise InputError(f"dataset dimension {data.p} does not match network input dimension {net.input_dim}")
    if not net.activation.smooth:
        raise UnsupportedError(f"activation {net.activation.name!r} is not smooth")


def residual_jacobian(net, data: Dataset) -> np.ndarray:
    """d x n matrix of partial derivatives of f_i = f(x_i) - y_i.

    Analytic for ShallowNet (columns in flattening order W, b, v, b_out);
    central finite differences for ComposedNet.
    """
    _check(net, data)
    if isinstance(net, ComposedNet):
        return finite_difference_jacobian(net, data)
    X = data.inputs
    Z = net.hidden(X)
    S = net.activation(Z)
    G = net.activation.deriv(Z) * net.v  # d x h, d f_i / d z_ij
    d, h = G.shape
    JW = (G[:, :, None] * X[:, None, :]).reshape(d, -1)
    return np.hstack([JW, -G, S, -np.ones((d, 1))])


def finite_difference_jacobian(net, data: Dataset, step: float = 1e-5) -> np.ndarray:
    theta = net.params()
    J = np.empty((data.d, theta.size))
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = step
        up = net.with_params(theta + e).predict(data.inputs)
        dn = net.with_params(theta - e).predict(data.inputs)
        J[:, k] = (up - dn) / (2 * step)
    return J


def _batched_losses(net, data, thetas, chunk=4096):
    """Loss at every row of ``thetas`` (K x n)."""
    out = np.empty(len(thetas))
    if not isinstance(net, ShallowNet):
        for i, th in enumerate(thetas):
            out[i] = loss_and_residuals(net.with_params(th), data).loss
        return out
    h, p = net.W.shape
    X, y, sigma = data.inputs, data.y, net.activation
    for s in range(0, len(thetas), chunk):
        T = thetas[s : s + chunk]
        W = T[:, : h * p].reshape(-1, h, p)
        b = T[:, h * p : h * p + h]
        v = T[:, h * p + h : h * p + 2 * h]
        Z = np.einsum("khp,dp->kdh", W, X) - b[:, None, :]
        f = np.einsum("kdh,kh->kd", sigma(Z), v) - T[:, -1:] - y
        out[s : s + chunk] = np.sum(f * f, axis=1)
    return out


def _fd_hessian(net, data):
    theta = net.params()
    n = theta.size
    step = 1e-4 * (1.0 + np.abs(theta))
    E = np.diag(step)
    iu, ju = np.triu_indices(n, 1)
    pts = [
        theta + E[iu] + E[ju],
        theta + E[iu] - E[ju],
        theta - E[iu] + E[ju],
        theta - E[iu] - E[ju],
        theta + E,
        theta - E,
    ]
    sizes = [len(x) for x in pts]
    L = np.split(_batched_losses(net, data, np.vstack(pts)), np.cumsum(sizes)[:-1])
    L0 = loss_and_residuals(net, data).loss
    H = np.empty((n, n))
    H[iu, ju] = (L[0] - L[1] - L[2] + L[3]) / (4 * step[iu] * step[ju])
    H[ju, iu] = H[iu, ju]
    H[np.arange(n), np.arange(n)] = (L[4] - 2 * L0 + L[5]) / step**2
    return H


def loss_hessian(net, data: Dataset, method: str = "gauss-newton-at-zero", interp_tol: float = INTERP_TOL):
    """Hessian of the summed squared loss.

    ``gauss-newton-at-zero`` returns 2 J^T J and refuses to run unless the
    loss is at most interp_tol^2 d. ``finite-difference`` uses central second
    differences with step 1e-4 (1 + |theta_k|), then symmetrises.
    """
    _check(net, data)
    if method == "gauss-newton-at-zero":
        lp = loss_and_residuals(net, data)
        if not lp.loss <= interp_tol**2 * data.d:
            raise PreconditionError(f"loss {lp.loss:.3g} is not at a global minimum", loss=lp.loss)
        J = residual_jacobian(net, data)
        return 2.0 * J.T @ J
    if method == "finite-difference":
        H = _fd_hessian(net, data)
        return 0.5 * (H + H.T)
    raise InputError(f"unknown Hessian method {method!r}")


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    eigenvalues: np.ndarray
    n: int
    d: int
    positive_count: int
    zero_count: int
    negative_count: int
    zero_threshold: float
    gauss_newton_check: float
    jacobian_check: float
    jacobian_rank: int
    smallest_jacobian_singular_value: float

    @property
    def full_rank(self) -> bool:
        return self.positive_count == self.d


def spectrum_at_minimum(
    net, data: Dataset, interp_tol: float = INTERP_TOL, zero_factor: float = 1e-6, check_fd: bool = True
) -> SpectrumReport:
    """Eigenvalue counts of 2 J^T J at an interpolation point.

    Eigenvalues with magnitude below zero_factor * max(max|lambda|, 1) count
    as zero. A rank-deficient Jacobian triggers a GenericityWarning instead
    of an error. With ``check_fd`` the report also carries the max deviation
    between the finite-difference Hessian and 2 J^T J, and between the
    analytic and finite-difference Jacobians.
    """
    _check(net, data)
    n, d = net.n_params, data.d
    if not n > d:
        raise PreconditionError(f"network has {n} parameters for {d} data points; need n > d")
    H = loss_hessian(net, data, "gauss-newton-at-zero", interp_tol)
    ev = np.linalg.eigvalsh(H)
    thr = zero_factor * max(float(np.max(np.abs(ev))), 1.0)
    pos, neg = int(np.sum(ev > thr)), int(np.sum(ev < -thr))
    if neg:
        raise InternalError(f"{neg} negative eigenvalues in a Gauss-Newton Hessian")
    J = residual_jacobian(net, data)
    sv = np.linalg.svd(J, compute_uv=False)
    gn_check = jac_check = float("nan")
    if check_fd:
        gn_check = float(np.max(np.abs(loss_hessian(net, data, "finite-difference") - H)))
        jac_check = float(np.max(np.abs(finite_difference_jacobian(net, data) - J)))
    if pos < d:
        warnings.warn(
            f"residual Jacobian has rank {pos} < {d}; smallest singular value {sv[-1]:.3g}",
            GenericityWarning,
            stacklevel=2,
        )
    ev.setflags(write=False)
    return SpectrumReport(
        eigenvalues=ev,
        n=n,
        d=d,
        positive_count=pos,
        zero_count=n - pos - neg,
        negative_count=neg,
        zero_threshold=thr,
        gauss_newton_check=gn_check,
        jacobian_check=jac_check,
        jacobian_rank=pos,
        smallest_jacobian_singular_value=float(sv[-1]),
    )
