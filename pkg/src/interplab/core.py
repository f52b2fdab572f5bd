"""Datasets, network parameter containers, forward evaluation and the loss.

Parameter flattening order (``FLATTEN_VERSION``) is fixed so that Hessian
indices are stable:

* ShallowNet:  rows of W, b, v, b_out
* ComposedNet: rows of W1, b1, chain scalars, v, b_out
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from .activations import Activation, chain_eval, parse_activation
from .errors import DatasetError, InputError

__all__ = [
    "Dataset",
    "ShallowNet",
    "ComposedNet",
    "LossPoint",
    "forward",
    "loss_and_residuals",
    "read_csv",
    "parse_csv",
    "net_to_dict",
    "net_from_dict",
    "save_model",
    "load_model",
    "FLATTEN_VERSION",
]

FLATTEN_VERSION = "interplab-flatten/1"
MODEL_FORMAT = "interplab-model/1"


def _frozen(a, ndim, name):
    a = np.array(a, dtype=np.float64)
    if a.ndim != ndim:
        raise InputError(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """d input rows of dimension p and d target rows of dimension q.

    Rows must be pairwise distinct unless ``allow_duplicates`` is set, which
    exists only to build deliberately degenerate inputs for diagnostics.
    """

    inputs: np.ndarray
    targets: np.ndarray
    bias_absorbed: bool = False
    allow_duplicates: bool = False

    def __post_init__(self):
        X = _frozen(self.inputs, 2, "inputs") if np.ndim(self.inputs) == 2 else None
        if X is None:
            raise DatasetError(f"inputs must be a d x p matrix, got shape {np.shape(self.inputs)}")
        Y = np.array(self.targets, dtype=np.float64)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
            raise DatasetError(f"targets shape {Y.shape} does not match {X.shape[0]} inputs")
        Y.setflags(write=False)
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DatasetError("dataset needs d >= 1 rows and p >= 1 columns")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DatasetError("dataset contains non-finite values")
        if not self.allow_duplicates and len(np.unique(X, axis=0)) != len(X):
            raise DatasetError("input rows are not pairwise distinct", code="DATASET_DUPLICATE")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", Y)

    @property
    def d(self) -> int:
        return self.inputs.shape[0]

    @property
    def p(self) -> int:
        return self.inputs.shape[1]

    @property
    def q(self) -> int:
        return self.targets.shape[1]

    @property
    def y(self) -> np.ndarray:
        """Targets as a d-vector; only valid for q == 1."""
        if self.q != 1:
            raise InputError(f"dataset has {self.q} target columns, expected 1")
        return self.targets[:, 0]

    def with_bias(self) -> "Dataset":
        """Append the constant-1 coordinate so biases become ordinary weights."""
        if self.bias_absorbed:
            return self
        X = np.hstack([self.inputs, np.ones((self.d, 1))])
        return Dataset(X, self.targets, bias_absorbed=True, allow_duplicates=self.allow_duplicates)

    def column(self, j: int) -> "Dataset":
        return Dataset(self.inputs, self.targets[:, j], self.bias_absorbed, self.allow_duplicates)


@dataclass(frozen=True, eq=False)
class ShallowNet:
    """f(x) = v . sigma(W x - b) - b_out."""

    W: np.ndarray
    b: np.ndarray
    v: np.ndarray
    b_out: float
    activation: Activation

    def __post_init__(self):
        W = _frozen(self.W, 2, "W")
        h = W.shape[0]
        b = _frozen(self.b, 1, "b")
        v = _frozen(self.v, 1, "v")
        if b.shape != (h,) or v.shape != (h,):
            raise InputError(f"b and v must have length {h}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "b_out", float(self.b_out))

    @property
    def width(self) -> int:
        return self.W.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def n_params(self) -> int:
        h, p = self.W.shape
        return h * p + 2 * h + 1

    def hidden(self, X):
        """Pre-activations W x_i - b, shape (d, h)."""
        return X @ self.W.T - self.b

    def predict(self, X):
        return self.activation(self.hidden(X)) @ self.v - self.b_out

    def params(self) -> np.ndarray:
        return np.concatenate([self.W.ravel(), self.b, self.v, [self.b_out]])

    def with_params(self, theta) -> "ShallowNet":
        theta = np.asarray(theta, dtype=np.float64)
        h, p = self.W.shape
        if theta.shape != (self.n_params,):
            raise InputError(f"expected {self.n_params} parameters, got {theta.shape}")
        i = h * p
        return ShallowNet(
            theta[:i].reshape(h, p), theta[i : i + h], theta[i + h : i + 2 * h], theta[-1], self.activation
        )


@dataclass(frozen=True, eq=False)
class ComposedNet:
    """f(x) = v . g(W1 x - b1) - b_out, g = sigma run through the scalar chain (w_2, ..., w_{l-1}).

    g applies sigma l-1 times: once for the first hidden layer and once per
    chain scalar, so depth l = len(chain) + 2.
    """

    W1: np.ndarray
    b1: np.ndarray
    chain: tuple
    v: np.ndarray
    activation: Activation
    b_out: float = 0.0

    def __post_init__(self):
        W1 = _frozen(self.W1, 2, "W1")
        h = W1.shape[0]
        b1 = _frozen(self.b1, 1, "b1")
        v = _frozen(self.v, 1, "v")
        if b1.shape != (h,) or v.shape != (h,):
            raise InputError(f"b1 and v must have length {h}")
        object.__setattr__(self, "W1", W1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "chain", tuple(float(w) for w in self.chain))
        object.__setattr__(self, "b_out", float(self.b_out))

    @property
    def depth(self) -> int:
        return len(self.chain) + 2

    @property
    def width(self) -> int:
        return self.W1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def n_params(self) -> int:
        h, p = self.W1.shape
        return h * p + 2 * h + len(self.chain) + 1

    def hidden(self, X):
        return X @ self.W1.T - self.b1

    def predict(self, X):
        return chain_eval(self.activation, self.chain, self.hidden(X)) @ self.v - self.b_out

    def params(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.chain, self.v, [self.b_out]])

    def with_params(self, theta) -> "ComposedNet":
        theta = np.asarray(theta, dtype=np.float64)
        h, p = self.W1.shape
        if theta.shape != (self.n_params,):
            raise InputError(f"expected {self.n_params} parameters, got {theta.shape}")
        i, k = h * p, len(self.chain)
        return ComposedNet(
            theta[:i].reshape(h, p),
            theta[i : i + h],
            tuple(theta[i + h : i + h + k]),
            theta[i + h + k : -1],
            self.activation,
            theta[-1],
        )


Net = Union[ShallowNet, ComposedNet]


@dataclass(frozen=True, eq=False)
class LossPoint:
    params: np.ndarray
    residuals: np.ndarray
    loss: float


def forward(net: Net, x):
    """Evaluate the network on one p-vector (returns a float) or a d x p batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_dim:
        raise InputError(f"input of shape {x.shape} does not match network input dimension {net.input_dim}")
    if x.ndim == 1:
        return float(net.predict(x[None, :])[0])
    return net.predict(x)


def loss_and_residuals(net: Net, data: Dataset) -> LossPoint:
    """Residuals f_i = f(x_i) - y_i and the summed squared loss."""
    if data.p != net.input_dim:
        raise InputError(f"dataset dimension {data.p} does not match network input dimension {net.input_dim}")
    r = net.predict(data.inputs) - data.y
    r.setflags(write=False)
    return LossPoint(net.params(), r, float(np.dot(r, r)))


# --- CSV ingestion ----------------------------------------------------------


def parse_csv(text: str, targets: int = 1, allow_duplicates: bool = False) -> Dataset:
    """Parse CSV text; the last ``targets`` columns are targets. A header row is optional."""
    if targets < 1:
        raise DatasetError("need at least one target column")
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise DatasetError("empty dataset")

    def numeric(row):
        try:
            return [float(c) for c in row]
        except ValueError:
            return None

    if numeric(rows[0]) is None:
        rows = rows[1:]
    parsed = []
    for lineno, row in enumerate(rows, 1):
        vals = numeric(row)
        if vals is None:
            raise DatasetError(f"non-numeric value in data row {lineno}")
        parsed.append(vals)
    if not parsed:
        raise DatasetError("dataset has a header but no rows")
    widths = {len(r) for r in parsed}
    if len(widths) != 1:
        raise DatasetError("rows have differing column counts")
    width = widths.pop()
    if width <= targets:
        raise DatasetError(f"{width} columns cannot hold {targets} target column(s) plus inputs")
    A = np.array(parsed, dtype=np.float64)
    return Dataset(A[:, :-targets], A[:, -targets:], allow_duplicates=allow_duplicates)


def read_csv(path, targets: int = 1, allow_duplicates: bool = False) -> Dataset:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetError(f"cannot read {path}: {exc}")
    return parse_csv(text, targets=targets, allow_duplicates=allow_duplicates)


# --- model persistence ------------------------------------------------------


def net_to_dict(net: Net) -> dict:
    if isinstance(net, ShallowNet):
        return {
            "format": MODEL_FORMAT,
            "flatten_order": FLATTEN_VERSION + ":W,b,v,b_out",
            "kind": "shallow",
            "activation": net.activation.name,
            "shape": {"h": net.width, "p": net.input_dim},
            "W": net.W.tolist(),
            "b": net.b.tolist(),
            "v": net.v.tolist(),
            "b_out": net.b_out,
        }
    if isinstance(net, ComposedNet):
        return {
            "format": MODEL_FORMAT,
            "flatten_order": FLATTEN_VERSION + ":W1,b1,chain,v,b_out",
            "kind": "composed",
            "activation": net.activation.name,
            "shape": {"h": net.width, "p": net.input_dim, "chain": len(net.chain)},
            "W1": net.W1.tolist(),
            "b1": net.b1.tolist(),
            "chain": list(net.chain),
            "v": net.v.tolist(),
            "b_out": net.b_out,
        }
    raise InputError(f"cannot serialise {type(net).__name__}")


def net_from_dict(obj: dict) -> Net:
    try:
        if obj.get("format") != MODEL_FORMAT:
            raise InputError(f"unsupported model format {obj.get('format')!r}", code="MODEL_PARSE")
        act = parse_activation(obj["activation"])
        shape = obj["shape"]
        if obj["kind"] == "shallow":
            net = ShallowNet(obj["W"], obj["b"], obj["v"], obj["b_out"], act)
            if (net.width, net.input_dim) != (shape["h"], shape["p"]):
                raise InputError("model arrays disagree with declared shape", code="MODEL_PARSE")
            return net
        if obj["kind"] == "composed":
            net = ComposedNet(obj["W1"], obj["b1"], tuple(obj["chain"]), obj["v"], act, obj.get("b_out", 0.0))
            if (net.width, net.input_dim, len(net.chain)) != (shape["h"], shape["p"], shape["chain"]):
                raise InputError("model arrays disagree with declared shape", code="MODEL_PARSE")
            return net
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed model: {exc}", code="MODEL_PARSE")
    raise InputError(f"unknown model kind {obj.get('kind')!r}", code="MODEL_PARSE")


def save_model(net: Net, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(net_to_dict(net), fh, indent=2, sort_keys=True)


def load_model(path) -> Net:
    """Load a model file, or the model embedded in an ``interpolate`` report."""
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read model {path}: {exc}", code="MODEL_PARSE")
    if isinstance(obj, dict) and "format" not in obj and isinstance(obj.get("result"), dict):
        obj = obj["result"].get("model", obj)
    if not isinstance(obj, dict):
        raise InputError("model file must hold a JSON object", code="MODEL_PARSE")
    return net_from_dict(obj)
