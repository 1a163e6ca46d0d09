"""Command-line interface.

Subcommands::

    trackbench validate <root>            audit dataset layout, print stats
    trackbench make-gt <root>             build per-sequence ground-truth files
    trackbench eval2d <root> --tracker T  2-D accuracy evaluation
    trackbench eval3d <root> --tracker T  3-D accuracy evaluation
    trackbench latency <root> --tracker T latency profiling (serialized)
    trackbench synth <config.json>        generate a synthetic dataset
    trackbench report <report.json>       re-render a machine report as a table

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 tracker contract violation.

Configuration precedence: built-in defaults < ``--config`` file < environment
variables (``TRACKBENCH_`` prefix, e.g. ``TRACKBENCH_TRACKER``) < flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import DatasetError, load_dataset
from .harness import run_dataset_eval
from .metrics import ThresholdSchedule
from .synth import SynthConfig, SynthConfigError, generate_dataset

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VIOLATION = 3

ENV_PREFIX = "TRACKBENCH_"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage by default; this interface promises 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


@dataclass
class RunConfig:
    """Fully resolved settings for one invocation."""

    command: str
    root: Path | None = None
    tracker: str = "control"
    tracker_params: dict = field(default_factory=dict)
    mode: str = "2d"
    thresholds: tuple[float, ...] | None = None
    latency: bool = False
    out: Path | None = None
    seed: int | None = None
    jobs: int = 1
    gt_dir: Path | None = None

    def schedule(self) -> ThresholdSchedule | None:
        if self.thresholds is None:
            return None
        unit = "px" if self.mode == "2d" else "mm"
        return ThresholdSchedule(self.thresholds, unit)


def _build_parser() -> _Parser:
    parser = _Parser(prog="trackbench",
                     description="Streaming evaluation for stereo surgical "
                                 "point tracking.")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def add_common(p, tracker=False):
        p.add_argument("--config", type=Path, default=None,
                       help="JSON config file (defaults < file < env < flags)")
        p.add_argument("--out", type=Path, default=None,
                       help="write the machine-readable report here")
        p.add_argument("--seed", type=int, default=None,
                       help="generator seed (synthetic data only)")
        if tracker:
            p.add_argument("--tracker", default=None,
                           help="tracker name: control, template, chain")
            p.add_argument("--tracker-param", action="append", default=[],
                           metavar="KEY=VALUE",
                           help="tracker configuration override (repeatable)")
            p.add_argument("--thresholds", default=None,
                           help="comma-separated ascending thresholds")
            p.add_argument("--jobs", type=int, default=None,
                           help="concurrent sequence evaluations (accuracy only)")
            p.add_argument("--gt-dir", type=Path, default=None,
                           help="directory of precomputed ground-truth files")

    p = sub.add_parser("validate", help="audit a dataset root")
    p.add_argument("root", type=Path)
    add_common(p)

    p = sub.add_parser("make-gt", help="build ground-truth files")
    p.add_argument("root", type=Path)
    add_common(p)

    for name, mode in (("eval2d", "2d"), ("eval3d", "3d")):
        p = sub.add_parser(name, help=f"{mode.upper()} accuracy evaluation")
        p.add_argument("root", type=Path)
        p.add_argument("--latency", action="store_true", default=None,
                       help="also measure per-frame latency (serializes the run)")
        p.set_defaults(mode=mode)
        add_common(p, tracker=True)

    p = sub.add_parser("latency", help="latency profiling run")
    p.add_argument("root", type=Path)
    p.add_argument("--mode", choices=("2d", "3d"), default=None)
    add_common(p, tracker=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("config_file", type=Path, metavar="config")
    add_common(p)

    p = sub.add_parser("report", help="render a machine report")
    p.add_argument("report_file", type=Path, metavar="report")
    add_common(p)

    return parser


# ---------------------------------------------------------------------------
# configuration resolution

def _env(name: str) -> str | None:
    return os.environ.get(ENV_PREFIX + name)


def _env_flag(name: str) -> bool | None:
    raw = _env(name)
    if raw is None:
        return None
    return raw.strip().lower() in ("1", "true", "yes", "on")


def _parse_thresholds(raw) -> tuple[float, ...]:
    if isinstance(raw, str):
        parts = [p for p in raw.replace(",", " ").split() if p]
        try:
            values = tuple(float(p) for p in parts)
        except ValueError as exc:
            raise UsageError(f"cannot parse thresholds {raw!r}") from exc
    else:
        values = tuple(float(v) for v in raw)
    if not values:
        raise UsageError("threshold list is empty")
    return values


def _parse_params(pairs: list[str]) -> dict:
    params = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"--tracker-param expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        params[key.strip()] = value.strip()
    return params


def _load_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path}: invalid JSON ({exc})")
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return data


def _resolve(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, config file, environment, and flags (in that order)."""
    file_cfg = _load_config_file(getattr(args, "config", None))
    run = RunConfig(command=args.command)
    run.root = getattr(args, "root", None)
    run.mode = getattr(args, "mode", None) or "2d"

    def pick(flag_value, env_name, file_key, default):
        if flag_value is not None:
            return flag_value
        env_value = _env(env_name)
        if env_value is not None:
            return env_value
        if file_key in file_cfg:
            return file_cfg[file_key]
        return default

    run.tracker = str(pick(getattr(args, "tracker", None), "TRACKER",
                           "tracker", "control"))
    run.seed = pick(getattr(args, "seed", None), "SEED", "seed", None)
    if run.seed is not None:
        run.seed = int(run.seed)
    run.jobs = int(pick(getattr(args, "jobs", None), "JOBS", "jobs", 1))
    out = pick(getattr(args, "out", None), "OUT", "out", None)
    run.out = Path(out) if out is not None else None
    gt_dir = pick(getattr(args, "gt_dir", None), "GT_DIR", "gt_dir", None)
    run.gt_dir = Path(gt_dir) if gt_dir is not None else None

    thresholds = pick(getattr(args, "thresholds", None), "THRESHOLDS",
                      "thresholds", None)
    if thresholds is not None:
        run.thresholds = _parse_thresholds(thresholds)

    latency_flag = getattr(args, "latency", None)
    if latency_flag is None:
        latency_flag = _env_flag("LATENCY")
    if latency_flag is None:
        latency_flag = bool(file_cfg.get("latency", False))
    run.latency = bool(latency_flag)

    params = dict(file_cfg.get("tracker_params", {}))
    params.update(_parse_params(getattr(args, "tracker_param", []) or []))
    run.tracker_params = params
    return run


# ---------------------------------------------------------------------------
# commands

def _emit(doc: dict, run: RunConfig) -> None:
    from .reports import render_report, write_report

    print(render_report(doc))
    if run.out is not None:
        write_report(run.out, doc)
        print(f"\nreport written to {run.out}")


def _check_manifest(dataset) -> list[str]:
    """Compare loaded sequences against a synthetic manifest, if present."""
    if dataset.manifest is None:
        return []
    mismatches = []
    loaded = {seq.key: seq for seq in dataset.sequences}
    for entry in dataset.manifest.get("sequences", []):
        key = f"{entry['session_id']}/{entry['sequence_id']}"
        seq = loaded.get(key)
        if seq is None:
            mismatches.append(f"{key}: in manifest but failed to load")
            continue
        if seq.frame_count != entry["frame_count"]:
            mismatches.append(f"{key}: frame count {seq.frame_count} != "
                              f"manifest {entry['frame_count']}")
        if list(seq.image_size) != list(entry["image_size"]):
            mismatches.append(f"{key}: image size {seq.image_size} != "
                              f"manifest {entry['image_size']}")
        if (seq.start_ms, seq.end_ms) != (entry["start_ms"], entry["end_ms"]):
            mismatches.append(f"{key}: capture times {seq.start_ms}-{seq.end_ms}"
                              f" != manifest {entry['start_ms']}-{entry['end_ms']}")
        if seq.n_points != len(entry["points"]):
            mismatches.append(f"{key}: {seq.n_points} points != "
                              f"manifest {len(entry['points'])}")
    extra = set(loaded) - {f"{e['session_id']}/{e['sequence_id']}"
                           for e in dataset.manifest.get("sequences", [])}
    mismatches.extend(f"{key}: not in manifest" for key in sorted(extra))
    return mismatches


def _cmd_validate(run: RunConfig) -> int:
    from .reports import build_validation_doc

    dataset = load_dataset(run.root)
    mismatches = _check_manifest(dataset)
    doc = build_validation_doc(dataset, mismatches)
    _emit(doc, run)
    if not dataset.sequences:
        print("error: no usable sequences", file=sys.stderr)
        return EXIT_DATA
    return EXIT_DATA if mismatches else EXIT_OK


def _cmd_make_gt(run: RunConfig) -> int:
    from .groundtruth import build_sequence_ground_truth, ground_truth_path, write_ground_truth

    dataset = load_dataset(run.root)
    if not dataset.sequences:
        raise DatasetError("no usable sequences in dataset")
    gt_dir = run.out if run.out is not None else run.gt_dir
    for sequence in dataset.sequences:
        gt = build_sequence_ground_truth(sequence)
        path = ground_truth_path(sequence, gt_dir)
        write_ground_truth(gt, path)
        lifted = sum(1 for r in gt.end_records if r.position_mm is not None)
        print(f"{sequence.key}: {len(gt.start_records)} start / "
              f"{len(gt.end_records)} end labels, {lifted} lifted to 3D -> {path}")
    for key, reason in dataset.skipped:
        print(f"skipped {key}: {reason}", file=sys.stderr)
    return EXIT_OK


def _run_eval(run: RunConfig, *, measure_latency: bool) -> int:
    from .reports import build_evaluation_doc, build_latency_doc
    from .trackers import build_tracker_factory

    try:
        factory = build_tracker_factory(run.tracker, run.mode, run.tracker_params)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    dataset = load_dataset(run.root)
    report = run_dataset_eval(
        dataset, factory, mode=run.mode, schedule=run.schedule(),
        measure_latency=measure_latency, jobs=run.jobs, gt_dir=run.gt_dir)
    doc = build_latency_doc(report) if run.command == "latency" \
        else build_evaluation_doc(report)
    _emit(doc, run)
    return EXIT_VIOLATION if report.any_violation else EXIT_OK


def _cmd_synth(run: RunConfig, config_file: Path) -> int:
    if not config_file.is_file():
        raise UsageError(f"synth config not found: {config_file}")
    try:
        raw = json.loads(config_file.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"synth config {config_file}: invalid JSON ({exc})")
    out_dir = raw.pop("out_dir", None)
    if run.out is not None:
        out_dir = run.out
    if out_dir is None:
        raise UsageError("synth needs an output directory: --out or "
                         "'out_dir' in the config")
    if run.seed is not None:
        raw["seed"] = run.seed
    config = SynthConfig.from_dict(raw)
    manifest = generate_dataset(config, Path(out_dir))
    total_points = sum(len(e["points"]) for e in manifest.sequences)
    print(f"wrote {len(manifest.sequences)} sequence(s), "
          f"{total_points} point(s) to {out_dir}")
    return EXIT_OK


def _cmd_report(run: RunConfig, report_file: Path) -> int:
    from .reports import load_report, render_report

    doc = load_report(report_file)
    print(render_report(doc))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        run = _resolve(args)
        if run.command == "validate":
            return _cmd_validate(run)
        if run.command == "make-gt":
            return _cmd_make_gt(run)
        if run.command in ("eval2d", "eval3d"):
            return _run_eval(run, measure_latency=run.latency)
        if run.command == "latency":
            return _run_eval(run, measure_latency=True)
        if run.command == "synth":
            return _cmd_synth(run, args.config_file)
        if run.command == "report":
            return _cmd_report(run, args.report_file)
        raise UsageError(f"unknown command {run.command!r}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SynthConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
