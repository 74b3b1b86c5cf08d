"""Command-line front end: simulate | train | eval | export.

Exit codes: 0 ok, 2 configuration error, 3 numeric failure.  Run
directories are keyed by the config fingerprint; re-running a completed
command is a no-op, so artifacts are never silently overwritten.
"""

from __future__ import annotations

import argparse
import os
import sys
import xml.etree.ElementTree as ET

import numpy as np

from . import evaluation as ev
from . import trainer as tr
from .physics import (Dataset, get_task, load_dataset, make_dataset,
                      save_dataset, trajectory_to_csv)
from .utils import read_json, write_json

_TRAIN_KEYS = {f.name for f in tr.TrainConfig.__dataclass_fields__.values()} | {
    "target", "target_path", "backend"}


class ConfigError(ValueError):
    pass


def _dgp_from_args(args):
    if args.dgp_kind is None:
        return None
    values = [float(v) for v in args.dgp_values.split(",")] if args.dgp_values else []
    if args.dgp_kind == "fixed":
        return {"kind": "fixed", "value": values[0] if values else None}
    if args.dgp_kind == "two_point":
        if len(values) != 2:
            raise ConfigError("two_point dgp needs --dgp-values v1,v2")
        w = ([float(v) for v in args.dgp_weights.split(",")]
             if args.dgp_weights else [0.5, 0.5])
        return {"kind": "two_point", "values": values, "weights": w}
    if args.dgp_kind == "uniform":
        if len(values) != 2:
            raise ConfigError("uniform dgp needs --dgp-values low,high")
        return {"kind": "uniform", "low": values[0], "high": values[1]}
    raise ConfigError(f"unknown dgp kind {args.dgp_kind!r}")


def cmd_simulate(args) -> int:
    dgp = _dgp_from_args(args)
    ds = make_dataset(args.task, args.role, args.n, dgp=dgp, seed=args.seed,
                      m_draws=args.m_draws, grid=args.grid)
    save_dataset(ds, args.out)
    print(f"wrote {args.role} dataset: task={args.task} n={ds.n} seed={ds.seed}")
    print(f"incomplete-simulator calls consumed: {ds.budget_used}")
    return 0


def _load_train_config(path):
    raw = read_json(path)
    unknown = set(raw) - _TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    target_spec = raw.pop("target", None)
    target_path = raw.pop("target_path", None)
    backend = raw.pop("backend", None)
    if (target_spec is None) == (target_path is None):
        raise ConfigError("config needs exactly one of 'target' or 'target_path'")
    try:
        cfg = tr.TrainConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from exc
    return cfg, target_spec, target_path, backend


def cmd_train(args) -> int:
    cfg, target_spec, target_path, backend = _load_train_config(args.config)
    if target_path:
        base = os.path.dirname(os.path.abspath(args.config))
        target = load_dataset(target_path if os.path.isabs(target_path)
                              else os.path.join(base, target_path))
    else:
        target = make_dataset(cfg.task, "target", int(target_spec["n"]),
                              dgp=target_spec.get("dgp"),
                              seed=int(target_spec.get("seed", 0)),
                              grid=cfg.grid)
    run_dir = os.path.join(args.out, f"run-{cfg.fingerprint()}")
    marker = os.path.join(run_dir, "run.json")
    if os.path.exists(marker) and not args.force:
        print(f"run already complete: {run_dir}")
        return 0
    os.makedirs(run_dir, exist_ok=True)
    resume = args.resume and os.path.isdir(os.path.join(run_dir, "checkpoint-latest"))
    res = tr.train(cfg, target, run_dir=run_dir, resume=resume, backend=backend)
    print(f"run dir: {run_dir}")
    print(f"stop: {res.stop_reason} iterations: {res.iterations} "
          f"epochs: {res.epochs} budget_used: {res.budget_used}")
    return 0


def cmd_eval(args) -> int:
    loaded = tr.load_checkpoint(args.checkpoint, weights=args.weights)
    test = load_dataset(args.testset)
    if test.task != loaded["config"].task:
        raise ConfigError(f"testset task {test.task!r} does not match "
                          f"checkpoint task {loaded['config'].task!r}")
    if test.role != "test":
        raise ConfigError(f"eval needs a test dataset, got role {test.role!r}")
    report = ev.evaluate_joint(loaded["generator"], test, seed=args.seed,
                               n_bootstrap=args.bootstrap,
                               model_fingerprint=loaded["config"].fingerprint())
    report.save(args.out)
    print(f"{'metric':<8} {'point':>12} {'ci low':>12} {'ci high':>12}")
    for name, m in report.metrics.items():
        print(f"{name:<8} {m['point']:>12.6f} {m['ci_low']:>12.6f} {m['ci_high']:>12.6f}")
    if args.records_csv and "per_record_nrmse" in report.extra:
        with open(args.records_csv, "w") as fh:
            fh.write("record,nrmse\n")
            for i, v in enumerate(report.extra["per_record_nrmse"]):
                fh.write(f"{i},{v:.17g}\n")
    if report.any_nan():
        print("error: NaN metric value", file=sys.stderr)
        return 3
    return 0


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _svg_line(ax, values, dt):
    w, h = 640, 360
    pad = 40
    t = np.arange(1, len(values) + 1) * dt
    lo, hi = float(np.min(values)), float(np.max(values))
    span = (hi - lo) or 1.0
    xs = pad + (w - 2 * pad) * (t - t[0]) / (t[-1] - t[0] if len(t) > 1 else 1.0)
    ys = h - pad - (h - 2 * pad) * (np.asarray(values) - lo) / span
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    ET.SubElement(ax, "polyline", points=pts, fill="none", stroke="black",
                  attrib={"stroke-width": "1.5"})
    ET.SubElement(ax, "rect", x=str(pad), y=str(pad), width=str(w - 2 * pad),
                  height=str(h - 2 * pad), fill="none", stroke="grey")


def _svg_heatmap(ax, grid, x0, y0, cell, vmin, vmax):
    span = (vmax - vmin) or 1.0
    rows, cols = grid.shape
    for i in range(rows):
        for j in range(cols):
            level = int(255 * (grid[i, j] - vmin) / span)
            color = f"#{level:02x}{level:02x}{255 - level:02x}"
            ET.SubElement(ax, "rect", x=f"{x0 + j * cell:.2f}", y=f"{y0 + i * cell:.2f}",
                          width=f"{cell:.2f}", height=f"{cell:.2f}", fill=color)


def export_svg(ds: Dataset, index, path, which=None):
    which = which or ("y" if ds.role == "target" else "x")
    arr = ds.arrays[which]
    traj = arr[index]
    if which == "y" and ds.role == "test":
        traj = traj[0]
    spec = ds.spec()
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                     width="640", height="360")
    if ds.task == "pendulum":
        _svg_line(svg, traj.reshape(-1), spec.dt_record)
    else:
        flat = traj.reshape(traj.shape[0], -1) if ds.task == "advdiff" else None
        vmin, vmax = float(traj.min()), float(traj.max())
        if ds.task == "advdiff":
            _svg_heatmap(svg, flat.T, 40, 40, min(560 / flat.shape[0], 280 / flat.shape[1]),
                         vmin, vmax)
        else:
            # frames left to right, u over v
            G = spec.extra["grid"]
            cell = min(600 / (spec.n_records * (G + 1)), 140 / G)
            for t in range(spec.n_records):
                for c in range(2):
                    _svg_heatmap(svg, traj[t, c], 20 + t * (G + 1) * cell,
                                 40 + c * (G + 2) * cell, cell, vmin, vmax)
    ET.ElementTree(svg).write(path, xml_declaration=True, encoding="unicode")


def cmd_export(args) -> int:
    ds = load_dataset(args.input)
    if args.format == "csv":
        trajectory_to_csv(ds, args.index, args.out, which=args.which)
    elif args.format == "svg":
        export_svg(ds, args.index, args.out, which=args.which)
    else:
        raise ConfigError(f"unknown export format {args.format!r}")
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="greybox-ot",
        description="Complete misspecified physics models from unpaired data "
                    "with conditional optimal-transport maps.")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="generate a dataset")
    ps.add_argument("--task", required=True, choices=sorted(("pendulum", "advdiff", "reactdiff")))
    ps.add_argument("--role", required=True, choices=("source", "target", "test"))
    ps.add_argument("--n", type=int, required=True)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", required=True)
    ps.add_argument("--dgp-kind", choices=("fixed", "two_point", "uniform"))
    ps.add_argument("--dgp-values")
    ps.add_argument("--dgp-weights")
    ps.add_argument("--m-draws", type=int)
    ps.add_argument("--grid", type=int)
    ps.set_defaults(func=cmd_simulate)

    pt = sub.add_parser("train", help="run the adversarial training loop")
    pt.add_argument("--config", required=True)
    pt.add_argument("--out", default="runs")
    pt.add_argument("--resume", action="store_true")
    pt.add_argument("--force", action="store_true")
    pt.set_defaults(func=cmd_train)

    pe = sub.add_parser("eval", help="joint-distribution evaluation")
    pe.add_argument("--checkpoint", required=True)
    pe.add_argument("--testset", required=True)
    pe.add_argument("--out", required=True)
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--bootstrap", type=int, default=200)
    pe.add_argument("--records-csv")
    pe.add_argument("--weights", choices=("auto", "raw", "ema"), default="auto")
    pe.set_defaults(func=cmd_eval)

    px = sub.add_parser("export", help="export trajectories as CSV or SVG")
    px.add_argument("--input", required=True)
    px.add_argument("--format", required=True, choices=("csv", "svg"))
    px.add_argument("--out", required=True)
    px.add_argument("--index", type=int, default=0)
    px.add_argument("--which", choices=("x", "y"))
    px.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (tr.NumericFailure, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
