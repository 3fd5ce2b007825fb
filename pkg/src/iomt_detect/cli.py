"""Command-line front end.

Exit codes: 0 success, 1 domain error (the message names the module that
raised it), 2 usage error. Every artifact carries a provenance block with
the tool version, seed and a hash of the resolved config, and every output
location gets the resolved config echoed next to it.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import traceback

import numpy as np

from . import __version__
from . import flowdata as fd
from .ensemble import STACKING_BASES, BaseSpec, VoteStrategy, fit_stacking, fit_voting
from .evalkit import GridSpec, ModelResult, classification_metrics, confusion, grid_search, write_report
from .experiments import EXPERIMENT_SEGMENTS, ExperimentConfig, run_experiment
from .families import FAMILIES, get_family
from .modelio import dumps, load_model, write_atomic
from .pipeline import PipelineModel, fit_preprocessing, model_window, raw_windows
from .synthgen import PRESETS, Segment, SegmentSpec, generate, write_segment

PROG = "iomt-detect"
SEGMENT_CHOICES = {s.value.lower().replace("_", "-"): s for s in Segment}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def provenance(config: dict) -> dict:
    return {"tool_version": __version__, "seed": config.get("seed"),
            "config_hash": config_hash(config)}


def _echo(config: dict) -> None:
    print("config: " + json.dumps(config, sort_keys=True), file=sys.stderr)


def _write_config(path: str, config: dict) -> None:
    write_atomic(path, dumps({"config": config, "provenance": provenance(config)}))


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _params(args) -> dict:
    """Hyperparameters from --params, overridden by each --set key=value."""
    params = {}
    if getattr(args, "params", None):
        with open(args.params, encoding="utf-8") as fh:
            params = json.load(fh)
        if not isinstance(params, dict):
            raise ValueError(f"{args.params}: hyperparameter file must hold a JSON object")
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects key=value, got {item!r}")
        params[key] = _parse_value(value)
    return params


def _load_windows(path: str, window: int, need_labels: bool):
    m = fd.load_flow_csv(path)
    X, y = raw_windows(m, window)
    if need_labels and y is None:
        raise fd.DataError(f"{path}: every row needs a 0/1 label")
    return m, X, y


def _fit_pipeline(m: fd.FeatureMatrix, window: int, fit) -> PipelineModel:
    means, scaler = fit_preprocessing(m)
    X, y = raw_windows(scaler.apply(fd.impute_mean(m, means)), window)
    return PipelineModel(fit(X, y), means, scaler, window)


def _save(model, path: str, config: dict, **extra) -> None:
    doc = model.to_dict()
    doc["config"] = config
    doc["provenance"] = provenance(config)
    doc.update(extra)
    write_atomic(path, dumps(doc))


def _curve_path(out: str) -> str:
    root, _ = os.path.splitext(out)
    return root + ".training_curve.csv"


def _curve(model):
    inner = getattr(getattr(model, "model", None), "model", None)
    return inner.training_curve_csv() if hasattr(inner, "training_curve_csv") else None


# ------------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    difficulty = PRESETS[args.preset] if args.preset else args.difficulty
    spec = SegmentSpec(SEGMENT_CHOICES[args.segment], args.n, args.attack_ratio, args.seed, difficulty)
    config = {"command": "synth", **spec.to_dict(), "out": args.out}
    _echo(config)
    write_segment(generate(spec), spec, args.out, provenance(config))
    return 0


def cmd_preprocess(args) -> int:
    config = {"command": "preprocess", "in": args.inp, "out": args.out, "stats": args.stats,
              "train_stats": args.train_stats, "windows": args.windows, "seed": None}
    _echo(config)
    m = fd.load_flow_csv(args.inp)
    if args.train_stats:
        with open(args.train_stats, encoding="utf-8") as fh:
            doc = json.load(fh)
        means = np.array(doc["imputation_means"], dtype=np.float64)
        scaler = fd.Standardizer.from_dict(doc)
    else:
        means, scaler = fit_preprocessing(m)
    out = scaler.apply(fd.impute_mean(m, means))
    if args.windows:
        X, y, last = fd.windows_from_matrix(out, args.windows)
        cols = [f"{c}@t{t}" for t in range(args.windows) for c in out.column_names]
        flat = fd.FeatureMatrix(X.reshape(len(X), -1), tuple(cols),
                                y if out.labels is not None else None,
                                device_ids=None if out.device_ids is None else out.device_ids[last])
        fd.write_flow_csv(flat, args.out)
    else:
        fd.write_flow_csv(out, args.out)
    scaler.save(args.stats, imputation_means=[float(v) for v in means],
                provenance=provenance(config))
    _write_config(args.out + ".config.json", config)
    return 0


def _train_config(args) -> dict:
    return {"command": "train", "model": get_family(args.model).name, "in": args.inp,
            "params": _params(args), "seed": args.seed, "window": args.window, "out": args.out}


def cmd_train(args) -> int:
    config = _train_config(args)
    _echo(config)
    family = get_family(args.model)
    m = fd.load_flow_csv(args.inp)
    if family.supervised and (m.labels is None or np.any(m.labels < 0)):
        raise fd.DataError(f"{args.inp}: {family.name} is supervised; every row needs a label")
    model = _fit_pipeline(m, args.window, lambda X, y: family.fit(X, y, config["params"], args.seed))
    _save(model, args.out, config)
    curve = _curve(model)
    if curve is not None:
        write_atomic(_curve_path(args.out), curve)
    return 0


def cmd_tune(args) -> int:
    with open(args.grid, encoding="utf-8") as fh:
        grid = GridSpec.from_dict(json.load(fh))
    grid.folds = args.folds
    grid.seed = args.seed
    config = {"command": "tune", "model": get_family(args.model).name, "in": args.inp,
              "grid": {"values": grid.values, "folds": grid.folds, "metric": grid.metric},
              "seed": args.seed, "window": args.window, "out": args.out}
    _echo(config)
    m = fd.load_flow_csv(args.inp)
    means, scaler = fit_preprocessing(m)
    X, y, _ = fd.windows_from_matrix(scaler.apply(fd.impute_mean(m, means)), args.window)
    if m.labels is None or np.any(y < 0):
        raise fd.DataError(f"{args.inp}: tuning needs a label on every row")
    result = grid_search(args.model, grid, X, y, args.seed)
    doc = {**result.to_dict(), "config": config, "provenance": provenance(config)}
    write_atomic(args.out, dumps(doc))
    print(json.dumps(result.best_params, sort_keys=True))
    return 0


def cmd_stack(args) -> int:
    bases = [get_family(b.strip()).name for b in args.bases.split(",") if b.strip()]
    if not bases:
        raise UsageError("--bases must name at least one family")
    params = _params(args)
    config = {"command": "stack", "bases": bases, "folds": args.folds, "in": args.inp,
              "params": params, "seed": args.seed, "window": args.window, "out": args.out}
    _echo(config)
    m = fd.load_flow_csv(args.inp)
    if m.labels is None or np.any(m.labels < 0):
        raise fd.DataError(f"{args.inp}: stacking needs a label on every row")
    specs = [BaseSpec(b, dict(params.get(b, {}))) for b in bases]
    gbdt_params = params.get("meta", {})
    model = _fit_pipeline(
        m, args.window, lambda X, y: fit_stacking(specs, X, y, args.folds, gbdt_params, args.seed))
    _save(model, args.out, config)
    return 0


def cmd_vote(args) -> int:
    strategy = VoteStrategy.MAJORITY if args.strategy == "majority" else VoteStrategy.SCORE_AVERAGE
    paths = [p.strip() for p in args.members.split(",") if p.strip()]
    config = {"command": "vote", "members": paths, "strategy": strategy.value, "nu": args.nu,
              "in": args.inp, "seed": None, "out": args.out}
    _echo(config)
    members = [load_model(p) for p in paths]
    if not members:
        raise UsageError("--members must list at least one model file")
    windows = {model_window(m) for m in members}
    if len(windows) != 1:
        raise ValueError(f"members disagree on window length: {sorted(windows)}")
    window = windows.pop()
    if strategy is VoteStrategy.SCORE_AVERAGE:
        if not args.inp:
            raise UsageError("--strategy average needs --in to calibrate on")
        _, X, _ = _load_windows(args.inp, window, need_labels=False)
        model = fit_voting(members, X, strategy, args.nu)
    else:
        model = fit_voting(members, None, strategy, args.nu)
    _save(model, args.out, config)
    return 0


def cmd_eval(args) -> int:
    config = {"command": "eval", "model": args.model, "in": args.inp, "out": args.out, "seed": None}
    _echo(config)
    model = load_model(args.model)
    _, X, y = _load_windows(args.inp, model_window(model), need_labels=True)
    flags = model.flag(X)
    cm = confusion(y, flags)
    name = args.name or os.path.splitext(os.path.basename(args.model))[0]
    result = ModelResult(args.segment, name, classification_metrics(cm), cm)
    write_report([result], args.out, provenance=provenance(config))
    _write_config(os.path.join(args.out, "config.json"), config)
    with open(os.path.join(args.out, "report.txt"), encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return 0


def cmd_repro(args) -> int:
    overrides = {k: v for k, v in (("n", args.n), ("difficulty", args.difficulty)) if v is not None}
    cfg = ExperimentConfig(args.experiment, args.seed, **overrides)
    out = args.out or f"repro-{args.experiment}-seed{args.seed}"
    config = {"command": "repro", **cfg.to_dict(), "in": args.inp, "out": out}
    _echo(config)
    data = fd.load_flow_csv(args.inp) if args.inp else None
    run = run_experiment(cfg, data)
    header = [f"# {PROG} {__version__} repro --experiment {args.experiment} --seed {args.seed}"]
    write_report(run.results, out, header, provenance(config))
    for fam, curve in sorted(run.curves.items()):
        write_atomic(os.path.join(out, f"training_curve_{fam}.csv"), curve)
    _write_config(os.path.join(out, "config.json"), config)
    with open(os.path.join(out, "report.txt"), encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return 0


# --------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog=PROG, description="Anomaly detection for IoMT network flow records.")
    p.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    families = sorted(FAMILIES)

    s = sub.add_parser("synth", help="generate a synthetic segment as CSV")
    s.add_argument("--segment", required=True, choices=sorted(SEGMENT_CHOICES))
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--attack-ratio", type=float, default=0.1)
    s.add_argument("--difficulty", type=float, default=8.0)
    s.add_argument("--preset", choices=sorted(PRESETS), help="overrides --difficulty")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="impute and standardize a flow CSV")
    s.add_argument("--in", dest="inp", metavar="CSV", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--stats", required=True, help="where to write the fitted statistics")
    s.add_argument("--train-stats", help="apply statistics from an earlier run instead of fitting")
    s.add_argument("--windows", type=int, help="emit flattened windows of this length")
    s.set_defaults(func=cmd_preprocess)

    def model_args(s, seed=True):
        s.add_argument("--in", dest="inp", metavar="CSV", required=True)
        s.add_argument("--window", type=int, default=4)
        if seed:
            s.add_argument("--seed", type=int, default=0)
        s.add_argument("--out", required=True)

    s = sub.add_parser("train", help="fit one detector")
    s.add_argument("--model", required=True, choices=families)
    s.add_argument("--params", help="JSON file of hyperparameters")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one hyperparameter")
    model_args(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("tune", help="grid search with k-fold cross-validation")
    s.add_argument("--model", required=True, choices=families)
    s.add_argument("--grid", required=True, help="JSON grid file")
    s.add_argument("--folds", type=int, default=5)
    model_args(s)
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("stack", help="out-of-fold stacking with a boosted-tree meta-learner")
    s.add_argument("--bases", default=",".join(STACKING_BASES))
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--params", help="JSON file: {family: {...}, \"meta\": {...}}")
    model_args(s)
    s.set_defaults(func=cmd_stack)

    s = sub.add_parser("vote", help="combine trained models by voting")
    s.add_argument("--members", required=True, help="comma-separated model files")
    s.add_argument("--strategy", choices=["majority", "average"], default="average")
    s.add_argument("--nu", type=float, default=0.1)
    s.add_argument("--in", dest="inp", metavar="CSV", help="calibration CSV (required for average)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_vote)

    s = sub.add_parser("eval", help="evaluate a model on a labeled CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="inp", metavar="CSV", required=True)
    s.add_argument("--out", required=True, help="report directory")
    s.add_argument("--name", help="row label in the report")
    s.add_argument("--segment", default="Evaluation")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("repro", help="run a full segment experiment and print the summary table")
    s.add_argument("--experiment", required=True, choices=sorted(EXPERIMENT_SEGMENTS))
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--n", type=int)
    s.add_argument("--difficulty", type=float)
    s.add_argument("--in", dest="inp", metavar="CSV", help="labeled CSV in the canonical schema instead of synthetic data")
    s.add_argument("--out", help="report directory")
    s.set_defaults(func=cmd_repro)
    return p


def _origin(exc: BaseException) -> str:
    """Name of the innermost package module the exception passed through."""
    pkg = os.path.dirname(os.path.abspath(__file__))
    name = "cli"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        path = os.path.abspath(frame.f_code.co_filename)
        if path.startswith(pkg + os.sep):
            rel = os.path.relpath(path, pkg)
            name = os.path.splitext(rel)[0].replace(os.sep, ".")
    return name


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
