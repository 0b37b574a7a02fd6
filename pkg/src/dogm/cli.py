"""Command line runner.

Settings are resolved in increasing precedence: built-in defaults, the
``--config`` JSON file, then explicit flags.  Tracker parameters follow the
same order: defaults, the config's ``params`` object, then the ``--params``
file.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import jsonschema

from . import evaluation as ev
from .cluster import write_clusters_csv
from .grid import GridSpec, Params
from .pipeline import MODES, Pipeline
from .render import SnapshotDecodeError, render_frame
from .scenarios import LIBRARY
from .sensor_sim import load_scenario, save_scenario
from .tracker import tracker_to_bytes

log = logging.getLogger("dogm")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
KEYFRAME_EVERY = 10
ROC_THRESHOLDS = [k / 20 for k in range(21)] + [1.05]

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scenario": {"type": "string"},
        "mode": {"enum": ["radar", "lidar", "both"]},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
        "render": {"enum": ["none", "keyframes", "all"]},
        "snapshots": {"enum": ["none", "keyframes", "all"]},
        "frames": {"type": "integer", "minimum": 1},
        "params": {"type": "object"},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "edge_length": {"type": "number", "exclusiveMinimum": 0},
                "resolution": {"type": "number", "exclusiveMinimum": 0},
                "k_max": {"type": "integer", "minimum": 1},
            },
        },
    },
}

DEFAULTS = dict(mode="radar", seed=None, out="runs/latest", threads=1, render="keyframes", snapshots="keyframes",
                frames=None, params={}, grid={})


class ConfigError(Exception):
    pass


def _read_json(path: str, what: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} file not found: {path}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{what} file {path} is not valid JSON: {exc}") from None


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        data = _read_json(args.config, "config")
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"config {args.config}: {exc.message}") from None
        cfg.update(data)
    for key in ("scenario", "mode", "seed", "out", "threads", "render", "snapshots", "frames"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    params = dict(cfg["params"])
    if args.params:
        params.update(_read_json(args.params, "params"))
    try:
        cfg["params"] = Params.from_dict(params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid params: {exc}") from None
    try:
        cfg["grid"] = GridSpec(**cfg["grid"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid grid: {exc}") from None
    if not cfg.get("scenario"):
        raise ConfigError("no scenario given (use --scenario or the config's 'scenario' key)")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    cfg["scenario_obj"] = _load_scenario(cfg["scenario"])
    return cfg


def _load_scenario(ref: str):
    if ref in LIBRARY and not Path(ref).exists():
        return LIBRARY[ref]()
    if not Path(ref).is_file():
        raise ConfigError(f"scenario file not found: {ref}")
    try:
        return load_scenario(ref)
    except (ValueError, KeyError, TypeError, json.JSONDecodeError, jsonschema.ValidationError) as exc:
        msg = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
        raise ConfigError(f"scenario {ref}: {msg}") from None


def _prepare_out(root: Path) -> None:
    try:
        for sub in ("snapshots", "renders", "metrics", "diagnostics"):
            (root / sub).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {root} is not writable: {exc}") from None
    if not os.access(root, os.W_OK):
        raise ConfigError(f"output directory {root} is not writable")


def _selected(policy: str, k: int, last: int) -> bool:
    if policy == "all":
        return True
    if policy == "keyframes":
        return k % KEYFRAME_EVERY == 0 or k == last
    return False


def _run_mode(cfg: dict, mode: str, root: Path) -> dict:
    sc = cfg["scenario_obj"]
    pipe = Pipeline(sc, mode, cfg["params"], cfg["grid"], cfg["seed"], cfg["threads"])
    n = sc.n_frames if cfg["frames"] is None else min(cfg["frames"], sc.n_frames)
    snap_dir, render_dir = root / "snapshots" / mode, root / "renders" / mode
    snap_dir.mkdir(exist_ok=True)
    render_dir.mkdir(exist_ok=True)
    diag_rows = []

    def on_frame(p: Pipeline, rec, truth, meas):
        k = rec.index
        if _selected(cfg["snapshots"], k, n - 1) or _selected(cfg["render"], k, n - 1):
            blob = p.dogm.to_bytes()
            if _selected(cfg["snapshots"], k, n - 1):
                (snap_dir / f"frame_{k:04d}.dogm").write_bytes(blob)
            if _selected(cfg["render"], k, n - 1):
                (render_dir / f"frame_{k:04d}.ppm").write_bytes(render_frame(blob))
        d = p.state.diagnostics
        diag_rows.append(dict(frame=k, detections=rec.n_detections, particles=rec.n_particles,
                              births=d.get("births", 0), dropped=d.get("dropped", 0),
                              zero_weight_resets=d.get("zero_weight_resets", 0), fov_dropped=meas.dropped,
                              total_conflicts=meas.total_conflicts, clusters=len(rec.clusters),
                              mass_error=max(rec.mass_error.values())))

    t0 = time.perf_counter()
    result = pipe.run(n, on_frame)
    elapsed = time.perf_counter() - t0
    if cfg["snapshots"] != "none":
        (snap_dir / "tracker_final.trk").write_bytes(tracker_to_bytes(result.state))
    metrics = root / "metrics"
    ev.write_metrics_csv(metrics / f"{mode}_metrics.csv", [f.metrics_row() for f in result.frames])
    ev.write_roc_csv(metrics / f"{mode}_roc.csv", result.roc(ROC_THRESHOLDS))
    write_clusters_csv(metrics / f"{mode}_clusters.csv", [(f.index, f.clusters) for f in result.frames])
    (root / "diagnostics" / f"{mode}_frames.json").write_text(json.dumps(diag_rows, indent=1), encoding="utf-8")
    summary = result.summary(ROC_THRESHOLDS)
    summary.pop("seconds", None)
    log.info("%s: %d frames in %.1f s", mode, len(result.frames), elapsed)
    return summary


def cmd_run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    root = Path(cfg["out"])
    _prepare_out(root)
    modes = MODES if cfg["mode"] == "both" else (cfg["mode"],)
    summaries = {m: _run_mode(cfg, m, root) for m in modes}
    sc = cfg["scenario_obj"]
    report = dict(scenario=sc.name, seed=sc.seed if cfg["seed"] is None else cfg["seed"], modes=summaries)
    if len(modes) == 2:
        report["comparison"] = dict(
            mse_ratio_lidar_over_radar=ev.error_ratio(summaries["lidar"]["mse"], summaries["radar"]["mse"]),
            rms_ratio_lidar_over_radar=ev.error_ratio(summaries["lidar"]["rms"], summaries["radar"]["rms"]),
            auc_radar=summaries["radar"]["auc"], auc_lidar=summaries["lidar"]["auc"])
    (root / "metrics" / "summary.json").write_text(json.dumps(_clean(report), indent=2, sort_keys=True),
                                                   encoding="utf-8")
    for m, s in summaries.items():
        print(f"{m:5s}  rms={_num(s['rms'])} m/s  mse={_num(s['mse'])}  auc={_num(s['auc'])}  "
              f"nees-consistent={_num(s['consistency_fraction'])}  defined={s['defined_frames']}/{s['frames']}")
    if "comparison" in report:
        print(f"lidar/radar rms ratio = {_num(report['comparison']['rms_ratio_lidar_over_radar'])}")
    return EXIT_OK


def _num(v) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.4f}"


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def cmd_render(args: argparse.Namespace) -> int:
    src = Path(args.snapshot)
    if not src.is_file():
        raise ConfigError(f"snapshot file not found: {src}")
    try:
        data = render_frame(src.read_bytes())
    except SnapshotDecodeError as exc:
        raise ConfigError(f"cannot decode {src}: {exc}") from None
    Path(args.output).write_bytes(data)
    return EXIT_OK


def cmd_scenario(args: argparse.Namespace) -> int:
    if args.name not in LIBRARY:
        raise ConfigError(f"unknown scenario {args.name!r}; choose from {sorted(LIBRARY)}")
    save_scenario(LIBRARY[args.name](), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dogm", description="Dynamic occupancy grid mapping on simulated scenarios.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the pipeline on a scenario")
    run.add_argument("--scenario", help="scenario JSON path or built-in name")
    run.add_argument("--mode", choices=["radar", "lidar", "both"])
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--threads", type=int)
    run.add_argument("--render", choices=["none", "keyframes", "all"])
    run.add_argument("--snapshots", choices=["none", "keyframes", "all"])
    run.add_argument("--frames", type=int, help="stop after this many frames")
    run.add_argument("--params", help="JSON file overriding tracker parameters")
    run.add_argument("--config", help="JSON run configuration; flags take precedence")
    run.set_defaults(func=cmd_run)

    ren = sub.add_parser("render", help="render a DOGM snapshot to PPM")
    ren.add_argument("snapshot")
    ren.add_argument("output")
    ren.set_defaults(func=cmd_render)

    exp = sub.add_parser("scenario", help="write a built-in scenario to JSON")
    exp.add_argument("name")
    exp.add_argument("output")
    exp.set_defaults(func=cmd_scenario)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"dogm: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"dogm: runtime error: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
