"""Activation functions.

An :class:`Activation` is a vectorised scalar map plus metadata: exact
polynomial coefficients when the map is a polynomial, an optional
derivative, and whether the map is claimed to be C-infinity.

Activations are built from a textual spec::

    tanh | relu | sigmoid | softplus | exp | poly:c0,c1,... | table:path

``poly:`` coefficients are in ascending degree. ``table:`` reads a two
column CSV ``t,value`` and interpolates linearly (clamped at the ends).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import expit

from .errors import InputError

__all__ = [
    "Activation",
    "BUILTINS",
    "parse_activation",
    "polynomial",
    "compose_chain",
    "chain_eval",
]


def _as_float(z):
    return np.asarray(z, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class Activation:
    name: str
    kind: str  # "builtin" | "polynomial" | "tabulated" | "composed"
    fn: Callable = field(repr=False)
    derivative: Optional[Callable] = field(default=None, repr=False)
    poly_coeffs: Optional[tuple] = None
    smooth: bool = False

    def __post_init__(self):
        if self.poly_coeffs is not None:
            coeffs = tuple(float(c) for c in np.trim_zeros(np.asarray(self.poly_coeffs, float), "b"))
            object.__setattr__(self, "poly_coeffs", coeffs or (0.0,))
            grid = np.linspace(-4.0, 4.0, 64)
            got = self.fn(grid)
            want = P.polyval(grid, np.asarray(self.poly_coeffs))
            scale = max(np.max(np.abs(want)), 1e-300)
            if np.max(np.abs(got - want)) > 1e-12 * scale:
                raise InputError(f"activation {self.name!r} disagrees with its polynomial coefficients")

    def __call__(self, z):
        return self.fn(_as_float(z))

    @property
    def degree(self) -> Optional[int]:
        """Polynomial degree, or None for non-polynomial activations."""
        if self.poly_coeffs is None:
            return None
        return len(self.poly_coeffs) - 1

    @property
    def is_polynomial(self) -> bool:
        return self.poly_coeffs is not None

    def deriv(self, z):
        if self.derivative is None:
            raise InputError(f"activation {self.name!r} has no derivative")
        return self.derivative(_as_float(z))


def _tanh_d(z):
    return 1.0 - np.tanh(z) ** 2


def _sigmoid_d(z):
    s = expit(z)
    return s * (1.0 - s)


BUILTINS = {
    "tanh": lambda: Activation("tanh", "builtin", np.tanh, _tanh_d, smooth=True),
    "sigmoid": lambda: Activation("sigmoid", "builtin", expit, _sigmoid_d, smooth=True),
    "softplus": lambda: Activation(
        "softplus", "builtin", lambda z: np.logaddexp(0.0, z), expit, smooth=True
    ),
    "exp": lambda: Activation("exp", "builtin", np.exp, np.exp, smooth=True),
    "relu": lambda: Activation(
        "relu", "builtin", lambda z: np.maximum(z, 0.0), lambda z: (z > 0).astype(float)
    ),
}


def polynomial(coeffs: Sequence[float], name: Optional[str] = None) -> Activation:
    """Polynomial activation from ascending-degree coefficients."""
    c = np.asarray(coeffs, dtype=np.float64)
    if c.ndim != 1 or c.size == 0 or not np.all(np.isfinite(c)):
        raise InputError("polynomial coefficients must be a non-empty finite list")
    dc = P.polyder(c) if c.size > 1 else np.zeros(1)
    if name is None:
        name = "poly:" + ",".join(repr(float(x)) for x in c)
    return Activation(
        name,
        "polynomial",
        lambda z: P.polyval(z, c),
        lambda z: P.polyval(z, dc),
        poly_coeffs=tuple(c),
        smooth=True,
    )


def _tabulated(path: str) -> Activation:
    try:
        table = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read activation table {path!r}: {exc}", code="ACTIVATION_SPEC")
    if table.shape[1] != 2 or table.shape[0] < 2:
        raise InputError("activation table needs two columns and at least two rows", code="ACTIVATION_SPEC")
    order = np.argsort(table[:, 0])
    ts, vs = table[order, 0].copy(), table[order, 1].copy()
    if np.any(np.diff(ts) <= 0):
        raise InputError("activation table abscissae must be distinct", code="ACTIVATION_SPEC")
    return Activation(f"table:{path}", "tabulated", lambda z: np.interp(z, ts, vs))


def parse_activation(spec: str) -> Activation:
    """Resolve an activation spec string. Raises InputError(code=ACTIVATION_SPEC)."""
    if not isinstance(spec, str):
        raise InputError("activation spec must be a string", code="ACTIVATION_SPEC")
    spec = spec.strip()
    if spec in BUILTINS:
        return BUILTINS[spec]()
    if spec.startswith("poly:"):
        try:
            coeffs = [float(x) for x in spec[5:].split(",") if x.strip()]
        except ValueError:
            raise InputError(f"bad polynomial coefficients in {spec!r}", code="ACTIVATION_SPEC")
        if not coeffs:
            raise InputError(f"no polynomial coefficients in {spec!r}", code="ACTIVATION_SPEC")
        return polynomial(coeffs, name=spec)
    if spec.startswith("table:"):
        return _tabulated(spec[6:])
    raise InputError(f"unknown activation {spec!r}", code="ACTIVATION_SPEC")


def chain_eval(sigma: Activation, chain, z):
    """g(z) = sigma(w_{l-1} sigma(... sigma(w_2 sigma(z)) ...)) for chain = (w_2, ..., w_{l-1})."""
    u = sigma(z)
    for w in chain:
        u = sigma(w * u)
    return u


def _chain_deriv(sigma, chain, z):
    u = sigma(z)
    du = sigma.deriv(z)
    for w in chain:
        du = sigma.deriv(w * u) * w * du
        u = sigma(w * u)
    return du


def compose_chain(sigma: Activation, chain) -> Activation:
    """The scalar activation g obtained by running ``sigma`` through the chain of scalar layers."""
    chain = tuple(float(w) for w in chain)
    coeffs = None
    if sigma.is_polynomial:
        base = np.asarray(sigma.poly_coeffs)
        g = base.copy()
        for w in chain:
            # sigma(w * g(t)) by Horner's scheme on coefficient arrays
            inner = w * g
            acc = np.array([base[-1]])
            for c in base[-2::-1]:
                acc = P.polyadd(P.polymul(acc, inner), [c])
            g = acc
        coeffs = tuple(g)
    deriv = None
    if sigma.derivative is not None:
        deriv = lambda z: _chain_deriv(sigma, chain, z)  # noqa: E731
    name = f"chain[{sigma.name}]({','.join(repr(w) for w in chain)})"
    return Activation(
        name,
        "composed",
        lambda z: chain_eval(sigma, chain, z),
        deriv,
        poly_coeffs=coeffs,
        smooth=sigma.smooth,
    )
