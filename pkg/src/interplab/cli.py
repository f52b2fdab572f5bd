"""Command-line entry point.

    interplab interpolate      --data f.csv --activation tanh --width h --seed s --out r.json
    interplab deep-interpolate --data f.csv --activation poly:0,0,1 --seed s --out r.json
    interplab feasibility      --data f.csv --m 2 --out r.json
    interplab actprobe         --activation tanh --d 6 --epsilon 0.05 --M 4 --out r.json
    interplab randfeat         --data f.csv --activation tanh --target-fail 1e-6 --mc 100000 --trials 100
    interplab spectrum         --model r.json --data f.csv --out s.json
    interplab classify         --data f.csv --activation tanh --out r.json

Every run writes one JSON report (stdout when --out is omitted). Exit status
is 0 on success, 1 on invalid input or a violated precondition, 2 on a
numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .activations import parse_activation
from .analysis import find_nonvanishing_point, poly_degree_test, truncation_level
from .core import Dataset, load_model, net_to_dict, read_csv
from .errors import InputError, InterplabError, PreconditionError
from .hessian import spectrum_at_minimum
from .interpolation import (
    construct_deep_interpolant,
    construct_shallow_interpolant,
    fit_classifier,
    monomial_features,
    poly_feasibility,
)
from .random_features import fit_output_weights, recommend_width, sample_features
from .rng import derive_seed

REPORT_FORMAT = "interplab-report/1"
COMMANDS = ("interpolate", "deep-interpolate", "feasibility", "actprobe", "randfeat", "spectrum", "classify")
_NEEDS_DATA = {"interpolate", "deep-interpolate", "feasibility", "randfeat", "spectrum", "classify"}
_NEEDS_ACTIVATION = {"interpolate", "deep-interpolate", "actprobe", "randfeat", "classify"}


@dataclass
class RunConfig:
    command: str
    dataset_path: str | None = None
    activation_spec: str = "tanh"
    seed: int = 0
    tolerances: dict = field(
        default_factory=lambda: {"interp_tol": 1e-6, "rank_tol_factor": 1.0, "zero_threshold_factor": 1e-6}
    )
    output_path: str | None = None
    options: dict = field(default_factory=dict)


def _threads():
    try:
        cap = int(os.environ.get("INTERPLAB_THREADS", "0"))
    except ValueError:
        cap = 0
    ncpu = os.cpu_count() or 1
    return max(1, min(cap, ncpu) if cap > 0 else ncpu)


def _map(fn, items):
    """Ordered map; results never depend on the worker count."""
    items = list(items)
    workers = _threads()
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays become Python values, non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _dataset(config, targets=None):
    targets = config.options.get("targets", 1) if targets is None else targets
    return read_csv(config.dataset_path, targets=targets)


def _cmd_interpolate(config, act):
    data = _dataset(config)
    tol = config.tolerances["interp_tol"]
    width = config.options.get("width")
    comps = []
    for j in range(data.q):
        net, info = construct_shallow_interpolant(
            data.column(j), act, h=width, seed=config.seed, interp_tol=tol, full_output=True
        )
        comps.append(dict(info, model=net_to_dict(net)))
    if data.q == 1:
        return comps[0]
    return {"components": comps, "max_residual": max(c["max_residual"] for c in comps)}


def _cmd_deep_interpolate(config, act):
    data = _dataset(config, targets=1)
    net, info = construct_deep_interpolant(
        data,
        act,
        seed=config.seed,
        h=config.options.get("width"),
        interp_tol=config.tolerances["interp_tol"],
        full_output=True,
    )
    return dict(info, chain=list(net.chain), model=net_to_dict(net))


def _cmd_feasibility(config, act):
    data = _dataset(config)
    m = config.options.get("m")
    if m is None:
        raise InputError("feasibility needs --m")
    rep = poly_feasibility(data, m, tol_factor=config.tolerances["rank_tol_factor"])
    out = dataclasses.asdict(rep)
    if data.q == 1:
        # best a degree-m polynomial network can do: least squares over the moment features
        F = monomial_features(data.inputs, m)
        coef, *_ = np.linalg.lstsq(F, data.y, rcond=None)
        out["least_squares_residual"] = float(np.linalg.norm(F @ coef - data.y))
    return out


def _cmd_actprobe(config, act):
    d = config.options.get("d")
    if d is None or d < 1:
        raise InputError("actprobe needs --d >= 1")
    M = config.options.get("M", 4.0)
    eps = config.options.get("epsilon", 0.05)
    degrees = config.options.get("degrees") or list(range(d))
    result = {
        "is_poly_deg_le": {str(k): poly_degree_test(act, k, (-M, M)) for k in degrees},
        "T_d": truncation_level(act, d, M),
        "b0": None,
        "derivative_values": None,
    }
    try:
        cert = find_nonvanishing_point(act, d, eps, (-M, M))
    except InterplabError as exc:
        exc.details["partial_result"] = result
        raise
    result.update(b0=cert.b0, derivative_values=list(cert.derivative_values), thresholds=list(cert.thresholds))
    return result


def _cmd_randfeat(config, act):
    data = _dataset(config, targets=1).with_bias()
    o = config.options
    cert = recommend_width(
        data,
        act,
        target_failure_prob=o.get("target_fail", 1e-6),
        delta=o.get("delta", 0.5),
        mc_samples=o.get("mc", 100_000),
        seed=config.seed,
        b0=o.get("b0", 0.0),
    )
    h = o.get("width") or cert.recommended_h
    ynorm = float(np.linalg.norm(data.y))
    tol_factor = config.tolerances["rank_tol_factor"]

    def trial(t):
        fm = sample_features(data, act, h, derive_seed(config.seed, "trial", t))
        fit = fit_output_weights(fm, data.y, tol_factor=tol_factor)
        return {"trial": t, "rank": fit.rank, "residual_norm": fit.residual_norm}

    trials = _map(trial, range(o.get("trials", 100)))
    d = data.d
    return {
        "lambda_tilde": cert.lambda_tilde_est,
        "lambda_tilde_stderr": cert.lambda_tilde_stderr,
        "lambda_trunc": cert.lambda_trunc,
        "lambda_trunc_stderr": cert.lambda_trunc_stderr,
        "T_d": cert.T_d,
        "truncation_rule": cert.truncation_rule,
        "chernoff_base": cert.chernoff_base,
        "recommended_h": cert.recommended_h,
        "width_used": h,
        "failure_bound": cert.failure_bound,
        "trials": trials,
        "full_rank_count": sum(t["rank"] == d for t in trials),
        "interpolated_count": sum(t["rank"] == d and t["residual_norm"] <= 1e-8 * ynorm for t in trials),
    }


def _cmd_spectrum(config, act):
    model_path = config.options.get("model")
    if not model_path:
        raise InputError("spectrum needs --model")
    net = load_model(model_path)
    data = _dataset(config, targets=1)
    rep = spectrum_at_minimum(
        net,
        data,
        interp_tol=config.tolerances["interp_tol"],
        zero_factor=config.tolerances["zero_threshold_factor"],
    )
    out = {f.name: getattr(rep, f.name) for f in dataclasses.fields(rep)}
    out["full_rank"] = rep.full_rank
    out["smallest_10"] = rep.eigenvalues[:10]
    out["largest_10"] = rep.eigenvalues[-10:]
    return out


def _cmd_classify(config, act):
    data = _dataset(config, targets=1)
    labels = data.y
    clf = fit_classifier(
        data.inputs,
        labels,
        act,
        seed=config.seed,
        n_classes=config.options.get("classes"),
        interp_tol=config.tolerances["interp_tol"],
    )
    pred = clf.predict(data.inputs)
    return {
        "n_classes": clf.n_classes,
        "predictions": pred,
        "training_accuracy": float(np.mean(pred == labels.astype(int))),
        "models": [net_to_dict(n) for n in clf.nets],
    }


_HANDLERS = {
    "interpolate": _cmd_interpolate,
    "deep-interpolate": _cmd_deep_interpolate,
    "feasibility": _cmd_feasibility,
    "actprobe": _cmd_actprobe,
    "randfeat": _cmd_randfeat,
    "spectrum": _cmd_spectrum,
    "classify": _cmd_classify,
}


def run(config: RunConfig):
    """Execute one command. Returns ``(exit_code, report)`` and writes the report if an output path is set."""
    report = {
        "format_version": REPORT_FORMAT,
        "package_version": __version__,
        "command": config.command,
        "config": dataclasses.asdict(config),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "status": "ok",
        "error": None,
        "result": None,
    }
    code = 0
    try:
        if config.command not in _HANDLERS:
            raise InputError(f"unknown command {config.command!r}", code="UNKNOWN_COMMAND")
        act = None
        if config.command in _NEEDS_ACTIVATION:
            act = parse_activation(config.activation_spec)
        if config.command in _NEEDS_DATA and not config.dataset_path:
            raise InputError(f"{config.command} needs --data")
        report["result"] = _HANDLERS[config.command](config, act)
    except InterplabError as exc:
        code = exc.exit_code
        report["status"] = "error"
        report["error"] = exc.to_dict()
    report = _clean(report)
    report["exit_code"] = code
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=False)
    if config.output_path and config.output_path != "-":
        with open(config.output_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")
    return code, report


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", dest="dataset_path")
    common.add_argument("--targets", type=int, default=1, help="number of trailing target columns")
    common.add_argument("--activation", default="tanh", help="tanh|relu|sigmoid|softplus|exp|poly:c0,c1,...|table:file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", dest="output_path")
    common.add_argument("--interp-tol", type=float, default=1e-6)
    common.add_argument("--rank-tol-factor", type=float, default=1.0)
    common.add_argument("--zero-threshold-factor", type=float, default=1e-6)

    ap = argparse.ArgumentParser(prog="interplab", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("interpolate", parents=[common])
    p.add_argument("--width", type=int)
    p = sub.add_parser("deep-interpolate", parents=[common])
    p.add_argument("--width", type=int)
    p = sub.add_parser("feasibility", parents=[common])
    p.add_argument("--m", type=int, required=True)
    p = sub.add_parser("actprobe", parents=[common])
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--M", type=float, default=4.0)
    p.add_argument("--degrees", type=lambda s: [int(k) for k in s.split(",")])
    p = sub.add_parser("randfeat", parents=[common])
    p.add_argument("--target-fail", type=float, default=1e-6)
    p.add_argument("--mc", type=int, default=100_000)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--width", type=int)
    p.add_argument("--b0", type=float, default=0.0)
    p = sub.add_parser("spectrum", parents=[common])
    p.add_argument("--model", required=True)
    p = sub.add_parser("classify", parents=[common])
    p.add_argument("--classes", type=int)
    return ap


_OPTION_KEYS = ("targets", "width", "m", "d", "epsilon", "M", "degrees", "target_fail", "mc", "trials", "delta", "b0", "model", "classes")


def config_from_args(argv=None) -> RunConfig:
    ns = _parser().parse_args(argv)
    opts = {k: getattr(ns, k) for k in _OPTION_KEYS if getattr(ns, k, None) is not None}
    return RunConfig(
        command=ns.command,
        dataset_path=ns.dataset_path,
        activation_spec=ns.activation,
        seed=ns.seed,
        tolerances={
            "interp_tol": ns.interp_tol,
            "rank_tol_factor": ns.rank_tol_factor,
            "zero_threshold_factor": ns.zero_threshold_factor,
        },
        output_path=ns.output_path,
        options=opts,
    )


def main(argv=None):
    code, report = run(config_from_args(argv))
    if code:
        err = report["error"]
        print(f"interplab: {err['code']}: {err['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
