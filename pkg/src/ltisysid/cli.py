"""Command-line experiment harness.

Subcommands ``generate``, ``train``, ``bounds`` and ``reproduce`` read a JSON
run configuration (see ``RUN_CONFIG_SCHEMA``) and write CSV, JSON and SVG
artifacts to an output directory.

Exit codes: 0 success (including diverged training), 2 configuration error,
3 data or I/O error, 4 numerical failure.
"""

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import experiments
from .bounds import corollary1_bound, theorem1_bound, theorem2_bound
from .errors import ContractError, DataError, DimensionError, NumericError
from .initstate import Estimated, EstimatorParams, Fixed, Learned, learned_from_pinv, resolve_all
from .loss import LossSpec, loss_value
from .model import SystemParams, TimeKind, generate_system, make_dataset, read_dataset, write_dataset
from .numkernel import eigen
from .svgplot import eigen_plane_svg, loss_curve_svg, side_by_side_svg
from .train import FullBatch, PerTrajectory, TrainConfig, train

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}, "minItems": 1}
_seed = {"type": "integer", "minimum": 0}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "m": {"type": "integer", "minimum": 1},
                "seed": _seed,
                "A": _matrix,
                "C": _matrix,
            },
        },
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "K": {"type": "integer", "minimum": 1},
                "len": {"type": "integer", "minimum": 1},
                "time_kind": {"enum": ["discrete", "continuous"]},
                "init_scale": {"type": "number"},
                "seed": _seed,
                "path": {"type": "string"},
            },
        },
        "model_init": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["random", "true", "explicit"]},
                "seed": _seed,
                "A": _matrix,
                "C": _matrix,
            },
        },
        "init_state": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["fixed", "learned", "estimated"]},
                "source": {"enum": ["true", "pinv", "zeros", "explicit"]},
                "states": _matrix,
                "p": {"type": "integer", "minimum": 1},
                "reg_weight": {"type": "number", "minimum": 0},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "momentum": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "clip_threshold": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "batch": {"enum": ["full", "per_trajectory"]},
                "shuffle_seed": _seed,
                "loss": {"enum": ["squared", "time_weighted_log"]},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "divergence_factor": {"type": "number", "exclusiveMinimum": 1},
                "seed": _seed,
                "train_C": {"type": "boolean"},
                "tol": {"type": "number", "minimum": 0},
                "loss_scale": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "bounds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "protocol": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "deltas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "max_iters": {"type": "integer", "minimum": 1},
                "momentum": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "K": {"type": "integer", "minimum": 1},
                "len": {"type": "integer", "minimum": 1},
                "m": {"type": "integer", "minimum": 1},
            },
        },
        "output_dir": {"type": "string"},
    },
}

DEFAULTS = {
    "system": {"n": 3, "m": 1, "seed": 0},
    "dataset": {"K": 50, "len": 50, "time_kind": "discrete", "init_scale": 1.0},
    "model_init": {"kind": "random"},
    "init_state": {"mode": "learned", "source": "pinv", "p": 1, "reg_weight": 0.0},
    "train": {
        "learning_rate": 1e-4,
        "momentum": 0.99,
        "clip_threshold": 1.0,
        "max_iters": 20000,
        "batch": "full",
        "shuffle_seed": 0,
        "loss": "time_weighted_log",
        "epsilon": 1.0,
        "divergence_factor": 1e6,
        "seed": 0,
        "train_C": True,
        "tol": 1e-12,
        "loss_scale": 1.0,
    },
    "bounds": {},
    "protocol": {},
}


class ConfigError(Exception):
    """Invalid run configuration."""


# -- configuration -----------------------------------------------------------


def load_config(path=None, seed=None, out=None):
    """Read, validate and complete a run configuration.

    ``seed`` overrides the generator seed and re-derives the dataset and
    starting-model seeds from it.
    """
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(raw, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from exc
    cfg = {k: dict(v) if isinstance(v, dict) else v for k, v in DEFAULTS.items()}
    for key, val in raw.items():
        if isinstance(val, dict):
            cfg[key] = {**cfg.get(key, {}), **val}
        else:
            cfg[key] = val
    if seed is not None:
        cfg["system"]["seed"] = seed
        cfg["dataset"]["seed"] = seed + experiments.DATA_SEED_OFFSET
        cfg["model_init"]["seed"] = seed + experiments.INIT_SEED_OFFSET
    g = cfg["system"].get("seed", 0)
    cfg["dataset"].setdefault("seed", g + experiments.DATA_SEED_OFFSET)
    cfg["model_init"].setdefault("seed", g + experiments.INIT_SEED_OFFSET)
    if out is not None:
        cfg["output_dir"] = out
    cfg.setdefault("output_dir", "out")
    if ("A" in cfg["system"]) != ("C" in cfg["system"]):
        raise ConfigError("system: give both A and C, or neither")
    if cfg["model_init"]["kind"] == "explicit" and not {"A", "C"} <= set(cfg["model_init"]):
        raise ConfigError("model_init: explicit kind needs A and C")
    return cfg


def build_system(cfg):
    s = cfg["system"]
    if "A" in s:
        try:
            return SystemParams(np.array(s["A"], dtype=float), np.array(s["C"], dtype=float))
        except (ValueError, DimensionError) as exc:
            raise ConfigError(f"system: {exc}") from exc
    return generate_system(s["n"], s["m"], s["seed"])


def build_dataset(cfg, system=None):
    d = cfg["dataset"]
    if "path" in d:
        return read_dataset(d["path"])
    system = system if system is not None else build_system(cfg)
    return make_dataset(system, d["K"], d["len"], TimeKind(d["time_kind"]), d["init_scale"], d["seed"])


def build_start(cfg, dataset):
    mi = cfg["model_init"]
    if mi["kind"] == "true":
        if dataset.true_params is None:
            raise DataError("model_init kind 'true' needs a dataset with known parameters")
        return dataset.true_params
    if mi["kind"] == "explicit":
        try:
            return SystemParams(np.array(mi["A"], dtype=float), np.array(mi["C"], dtype=float))
        except (ValueError, DimensionError) as exc:
            raise ConfigError(f"model_init: {exc}") from exc
    return generate_system(dataset.n, dataset.m, mi["seed"])


def build_init_mode(cfg, dataset, start):
    st = cfg["init_state"]
    mode, source = st["mode"], st["source"]
    if mode == "estimated":
        return Estimated(EstimatorParams.zeros(dataset.n, dataset.m, st["p"]), st["reg_weight"])
    if source == "true":
        states = dataset.true_states()
    elif source == "explicit":
        if "states" not in st:
            raise ConfigError("init_state: explicit source needs states")
        states = np.array(st["states"], dtype=float)
    elif source == "zeros":
        states = np.zeros((dataset.K, dataset.n))
    else:
        states = learned_from_pinv(start.C, dataset).states
    if states.shape != (dataset.K, dataset.n):
        raise DimensionError(f"initial states have shape {states.shape}, expected {(dataset.K, dataset.n)}")
    return Fixed(states) if mode == "fixed" else Learned(states)


def build_loss(cfg):
    t = cfg["train"]
    return LossSpec.squared() if t["loss"] == "squared" else LossSpec.time_weighted_log(t["epsilon"])


def build_train_config(cfg, init_mode):
    t = cfg["train"]
    clip = t["clip_threshold"]
    batch = PerTrajectory(t["shuffle_seed"]) if t["batch"] == "per_trajectory" else FullBatch()
    try:
        return TrainConfig(
            learning_rate=t["learning_rate"],
            init_mode=init_mode,
            loss=build_loss(cfg),
            momentum=t["momentum"],
            clip_threshold=math.inf if clip is None else clip,
            max_iters=t["max_iters"],
            batch=batch,
            divergence_factor=t["divergence_factor"],
            seed=t["seed"],
            train_C=t["train_C"],
            tol=t["tol"],
            loss_scale=t["loss_scale"],
        )
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from exc


# -- serialization -----------------------------------------------------------


def _g(x):
    return f"{x:.17g}"


def _json_num(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "+inf" if x > 0 else "-inf"
    return x


def _dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _matrix_list(M):
    return [[_json_num(v) for v in row] for row in np.asarray(M)]


def init_mode_to_dict(mode):
    if isinstance(mode, Estimated):
        return {
            "mode": "estimated",
            "W": _matrix_list(mode.phi.W),
            "b": [_json_num(v) for v in mode.phi.b],
            "p": mode.phi.p,
            "reg_weight": mode.reg_weight,
        }
    name = "fixed" if isinstance(mode, Fixed) else "learned"
    return {"mode": name, "states": _matrix_list(mode.states)}


def init_mode_from_dict(d):
    if d["mode"] == "estimated":
        return Estimated(EstimatorParams(np.array(d["W"]), np.array(d["b"]), d["p"]), d["reg_weight"])
    cls = Fixed if d["mode"] == "fixed" else Learned
    return cls(np.array(d["states"], dtype=float))


def _spectrum_dict(A, kind):
    w = eigen(A).eigenvalues
    disc = TimeKind(kind) is TimeKind.DISCRETE
    unstable = [bool(abs(z) > 1) if disc else bool(z.real > 0) for z in w]
    return {
        "eigenvalues": [[float(z.real), float(z.imag)] for z in w],
        "unstable": unstable,
        "reference": "unit circle" if disc else "imaginary axis",
    }


def write_train_artifacts(out, result, dataset, plots=True):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "loss_curve.csv", ["iter", "loss"], [[i, _g(v)] for i, v in enumerate(result.loss_curve)])
    rows = []
    for i, eigs in enumerate(result.eigen_trace):
        for j, z in enumerate(eigs):
            rows.append([i, j, _g(z.real), _g(z.imag)])
    _write_csv(out / "eigen_trace.csv", ["iter", "eig_index", "re", "im"], rows)
    final = {
        "time_kind": dataset.time_kind.value,
        "A": _matrix_list(result.final_params.A),
        "C": _matrix_list(result.final_params.C),
        "init": init_mode_to_dict(result.final_init),
    }
    _dump_json(out / "final_model.json", final)
    status = {
        **result.status.to_dict(),
        "iterations": result.iterations,
        "initial_loss": _json_num(result.loss_curve[0]),
        "final_loss": _json_num(result.loss_curve[-1]),
    }
    _dump_json(out / "status.json", status)
    if plots:
        true_eigs = eigen(dataset.true_params.A).eigenvalues if dataset.true_params is not None else None
        (out / "loss_curve.svg").write_text(loss_curve_svg(result.loss_curve))
        (out / "eigen_plane.svg").write_text(eigen_plane_svg(result.eigen_trace, true_eigs))


# -- commands ----------------------------------------------------------------


def cmd_generate(cfg, plots=True):
    system = build_system(cfg)
    dataset = build_dataset(cfg, system)
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(dataset, out / "dataset.csv", out / "dataset.json")
    if dataset.true_params is not None:
        spec = _spectrum_dict(dataset.true_params.A, dataset.time_kind)
        verdict = "unstable" if any(spec["unstable"]) else "stable"
        print(f"true A eigenvalues (relative to the {spec['reference']}): {verdict}")
        for (re, im), un in zip(spec["eigenvalues"], spec["unstable"]):
            mod = math.hypot(re, im)
            print(f"  {re:+.6f} {im:+.6f}j  |lambda|={mod:.6f}  {'unstable' if un else 'stable'}")
    return EXIT_OK


def cmd_train(cfg, plots=True):
    dataset = build_dataset(cfg)
    start = build_start(cfg, dataset)
    mode = build_init_mode(cfg, dataset, start)
    result = train(dataset, start, build_train_config(cfg, mode))
    write_train_artifacts(cfg["output_dir"], result, dataset, plots)
    print(
        f"status={result.status.kind} iterations={result.iterations} "
        f"loss {result.loss_curve[0]:.6g} -> {result.loss_curve[-1]:.6g}"
    )
    return EXIT_OK


def bounds_report(dataset, params, mode, delta, epsilon, spec):
    """Dictionary with every calculator output at ``(params, mode)``."""
    states = resolve_all(mode, dataset)
    times = dataset.sample_times
    kind = dataset.time_kind
    loss = loss_value(dataset, params, mode, spec)
    t1 = theorem1_bound(params, states, times, kind)
    t2 = theorem2_bound(params, states, times, epsilon, kind)
    c_identity = params.C.shape == (params.n, params.n) and np.array_equal(params.C, np.eye(params.n))
    cor = corollary1_bound(params.A, delta, states, times, kind)
    d1, d2 = t1.theorem1_delta_max, t2.theorem2_delta_max
    return {
        "label": "theorem-conditioned" if loss <= 1e-12 else "advisory",
        "training_loss": _json_num(loss),
        "loss": spec.kind.value,
        "delta": delta,
        "epsilon": epsilon,
        "time_kind": kind.value,
        "theorem1": t1.to_dict(),
        "theorem2": t2.to_dict(),
        "theorem1_delta_max": _json_num(d1),
        "theorem2_delta_max": _json_num(d2),
        "delta_ok_theorem1": bool(delta <= d1),
        "delta_ok_theorem2": bool(delta <= d2),
        "delta_ok": bool(delta <= (d1 if spec.kind.value == "squared" else d2)),
        "corollary1": {**cor.to_dict(), "c_is_identity": bool(c_identity)},
    }


def cmd_bounds(cfg, model_path=None, plots=True):
    dataset = build_dataset(cfg)
    if model_path is not None:
        try:
            model = json.loads(Path(model_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read model {model_path}: {exc}") from exc
        params = SystemParams(np.array(model["A"], dtype=float), np.array(model["C"], dtype=float))
        mode = init_mode_from_dict(model["init"])
    else:
        params = build_start(cfg, dataset)
        mode = build_init_mode(cfg, dataset, params)
    spec = build_loss(cfg)
    delta = cfg["bounds"].get("delta", cfg["train"]["learning_rate"])
    epsilon = cfg["bounds"].get("epsilon", cfg["train"]["epsilon"])
    report = bounds_report(dataset, params, mode, delta, epsilon, spec)
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "bounds.json", report)
    print(
        f"[{report['label']}] theorem1_delta_max={report['theorem1_delta_max']} "
        f"theorem2_delta_max={report['theorem2_delta_max']} delta={delta} delta_ok={report['delta_ok']}"
    )
    return EXIT_OK


FIGURES = {"fig1": 3, "fig2": 3, "appendixF": 4}

SUMMARY_FIELDS = [
    "seed",
    "mse_best_delta",
    "mse_status",
    "mse_loss_reduction",
    "mse_max_eig_error",
    "mse_stable_eig_error",
    "log_best_delta",
    "log_status",
    "log_loss_reduction",
    "log_max_eig_error",
    "log_stable_eig_error",
]


def protocol_from_config(cfg, figure):
    p = cfg.get("protocol", {})
    base = experiments.ProtocolConfig(n=FIGURES[figure])
    kw = {}
    if "deltas" in p:
        kw["deltas"] = tuple(p["deltas"])
    for key, name in (("max_iters", "max_iters"), ("momentum", "momentum"), ("K", "K"), ("len", "length"), ("m", "m")):
        if key in p:
            kw[name] = p[key]
    return experiments.ProtocolConfig(**{**base.__dict__, **kw})


def cmd_reproduce(cfg, figure, seeds=None, plots=True):
    pc = protocol_from_config(cfg, figure)
    if seeds is None:
        seeds = experiments.unstable_seeds(pc.n, 10, pc.m)
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for seed in sorted(seeds):
        rep = experiments.run_seed(seed, pc)
        row = rep.summary_row(pc.time_kind)
        rows.append([_summary_cell(row[k]) for k in SUMMARY_FIELDS])
        sd = out / f"seed_{seed}"
        sd.mkdir(exist_ok=True)
        for name, runs in (("mse", rep.squared), ("log", rep.log)):
            best = runs.best
            _write_csv(sd / f"loss_{name}.csv", ["iter", "loss"], [[i, _g(v)] for i, v in enumerate(best.loss_curve)])
            _dump_json(
                sd / f"final_eigs_{name}.json",
                {
                    "delta": runs.best_delta,
                    "status": best.status.to_dict(),
                    "eigenvalues": [[float(z.real), float(z.imag)] for z in best.eigen_trace[-1]],
                },
            )
        if plots:
            if figure == "fig1":
                (sd / "loss_curves.svg").write_text(
                    side_by_side_svg(
                        [
                            ("loss", rep.squared.best.loss_curve, "Mean squared error"),
                            ("loss", rep.log.best.loss_curve, "Time-weighted log loss"),
                        ]
                    )
                )
            else:
                (sd / "eigen_plane_mse.svg").write_text(
                    eigen_plane_svg(rep.squared.best.eigen_trace, rep.true_eigs, "Mean squared error")
                )
                (sd / "eigen_plane_log.svg").write_text(
                    eigen_plane_svg(rep.log.best.eigen_trace, rep.true_eigs, "Time-weighted log loss")
                )
                (sd / "eigen_planes.svg").write_text(
                    side_by_side_svg(
                        [
                            ("eigen", rep.squared.best.eigen_trace, rep.true_eigs, "Mean squared error"),
                            ("eigen", rep.log.best.eigen_trace, rep.true_eigs, "Time-weighted log loss"),
                        ]
                    )
                )
        print(
            f"seed {seed}: log reduction {row['log_loss_reduction']:.3g} "
            f"(max eig err {row['log_max_eig_error']:.3g}); "
            f"mse reduction {row['mse_loss_reduction']:.3g} (max eig err {row['mse_max_eig_error']:.3g})"
        )
    _write_csv(out / "summary.csv", SUMMARY_FIELDS, rows)
    return EXIT_OK


def _summary_cell(v):
    if isinstance(v, float):
        return _g(v)
    return v


# -- entry point -------------------------------------------------------------


def _parse_seeds(text):
    text = text.strip()
    if not text:
        return []
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"--seeds must be a comma-separated list of integers: {text!r}") from exc


def build_parser():
    parser = argparse.ArgumentParser(prog="ltisysid", description="Learn LTI systems by gradient descent.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="generator seed; dataset and model seeds are derived from it")
        p.add_argument("--no-plots", action="store_true", help="skip SVG output")

    common(sub.add_parser("generate", help="write a synthetic dataset"))
    common(sub.add_parser("train", help="train a model and export its loss and eigenvalue traces"))
    pb = sub.add_parser("bounds", help="learning-rate caps and spectrum bound at a model")
    common(pb)
    pb.add_argument("--model", help="final_model.json from a training run")
    pr = sub.add_parser("reproduce", help="paired squared-error vs log-loss experiments")
    common(pr)
    pr.add_argument("--figure", choices=sorted(FIGURES), required=True)
    pr.add_argument("--seeds", help="comma-separated generator seeds (default: first 10 unstable)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    plots = not args.no_plots
    try:
        cfg = load_config(args.config, args.seed, args.out)
        if args.command == "generate":
            return cmd_generate(cfg, plots)
        if args.command == "train":
            return cmd_train(cfg, plots)
        if args.command == "bounds":
            return cmd_bounds(cfg, args.model, plots)
        seeds = _parse_seeds(args.seeds) if args.seeds is not None else None
        return cmd_reproduce(cfg, args.figure, seeds, plots)
    except (ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DimensionError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
