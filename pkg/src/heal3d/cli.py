"""Command-line front end: ``heal3d {score,select,simulate,validate}``.

Every configuration key can be given three ways, highest precedence first:
an explicit flag (``--voxel-size 0.2``), a ``--set voxel_size=0.2``
override, or a ``key = value`` line in the ``--config`` file.  Anything not
given falls back to the built-in default.

Exit status is 0 when no error was reported, 1 on errors and 2 on usage
errors.  ``HEAL_LOG_LEVEL`` (error, warn, info, debug) controls how much is
logged to stderr.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields

from .divergence import score_frame
from .probmap import VoxelGrid
from .scene_io import (
    ConfigError,
    FormatError,
    RunConfig,
    build_dataclass,
    cloud_path,
    parse_assignments,
    parse_detection_line,
    read_assignments,
    read_detections,
    read_frame_list,
    read_score_csv,
    read_velodyne_bin,
    write_frame_list,
    write_score_csv,
)
from .selection import select_top_k
from .simharness import (
    SimConfig,
    paired_comparison,
    run_experiment,
    write_curves_csv,
    write_diagnostics_csv,
    write_summary_csv,
)

log = logging.getLogger("heal3d")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
# config keys that already have a dedicated global flag
_RESERVED = {"seed"}


class UsageError(Exception):
    pass


class Reporter:
    """Counts diagnostics so the exit status can follow them."""

    def __init__(self):
        self.errors = 0
        self.warnings = 0

    def error(self, msg, *args):
        self.errors += 1
        log.error(msg, *args)

    def warning(self, msg, *args):
        self.warnings += 1
        log.warning(msg, *args)

    @property
    def status(self) -> int:
        return 1 if self.errors else 0


def setup_logging() -> None:
    name = os.environ.get("HEAL_LOG_LEVEL", "warn").strip().lower()
    level = LOG_LEVELS.get(name, logging.WARNING)
    log.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("heal3d: %(levelname)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(level)
    log.propagate = False
    logging.getLogger("heal3d.simharness").setLevel(level)
    if name not in LOG_LEVELS:
        log.warning("unknown HEAL_LOG_LEVEL %r, using 'warn'", name)


# ---------------------------------------------------------------- config


def _config_keys() -> dict[str, str]:
    """Config key -> owning section, for every key a flag is generated for."""
    keys = {f.name: "run" for f in fields(RunConfig)}
    keys.update({f.name: "sim" for f in fields(SimConfig) if f.name not in keys})
    return keys


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("configuration keys (override --config and --set)")
    for key in _config_keys():
        if key in _RESERVED:
            continue
        group.add_argument("--" + key.replace("_", "-"), dest="cfg_" + key, metavar="VALUE", default=None)


def resolve_config(args, reporter: Reporter) -> tuple[RunConfig, SimConfig]:
    """Merge defaults, config file, ``--set`` pairs and explicit flags."""
    known = _config_keys()
    merged = dict(read_assignments(args.config)) if args.config else {}
    source = str(args.config) if args.config else "<config>"
    for key, (_, lineno) in merged.items():
        if key not in known:
            reporter.warning("%s: line %d: unknown key '%s' ignored", source, lineno, key)
    for pair in args.set or ():
        parsed = parse_assignments([pair], "--set")
        if not parsed:
            raise UsageError(f"--set expects key=value, got {pair!r}")
        for key, (raw, _) in parsed.items():
            if key not in known:
                raise UsageError(f"--set: unknown configuration key '{key}'")
            merged[key] = (raw, 0)
    for key in known:
        value = getattr(args, "cfg_" + key, None)
        if value is not None:
            merged[key] = (value, 0)
    if getattr(args, "seed", None) is not None:
        merged["seed"] = (str(args.seed), 0)
    run = build_dataclass(RunConfig, merged, source)
    sim = build_dataclass(SimConfig, merged, source)
    # a lone seed selects a single simulation run
    if "seeds" not in merged and "seed" in merged:
        sim.seeds = (run.seed,)
    return run, sim


# ---------------------------------------------------------------- score


def _score_task(task):
    orig, aug, points, grid, run = task
    return score_frame(orig, aug, points, grid, run)


def cmd_score(args, run: RunConfig, sim: SimConfig, reporter: Reporter) -> int:
    if not args.out:
        raise UsageError("score needs --out for the score CSV")
    orig = {d.frame: d for d in read_detections(args.orig)}
    aug = {d.frame: d for d in read_detections(args.aug)}
    no_aug = sorted(set(orig) - set(aug))
    no_orig = sorted(set(aug) - set(orig))
    if no_aug:
        reporter.error("frames missing from %s: %s", args.aug, ", ".join(no_aug))
    if no_orig:
        reporter.error("frames missing from %s: %s", args.orig, ", ".join(no_orig))
    needs_points = run.correction_mode in ("points", "both")
    if needs_points and not args.clouds:
        reporter.error("correction_mode=%s needs --clouds", run.correction_mode)
    clouds = {}
    if args.clouds:
        for frame in sorted(orig):
            path = cloud_path(args.clouds, frame)
            if not os.path.exists(path):
                reporter.error("frame %s: no point cloud at %s", frame, path)
            elif needs_points:
                clouds[frame] = read_velodyne_bin(path)
    if reporter.errors:
        return reporter.status

    grid = VoxelGrid.from_config(run)
    tasks = [(orig[f], aug[f], clouds.get(f), grid, run) for f in sorted(orig)]
    if args.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as ex:
            records = list(ex.map(_score_task, tasks, chunksize=max(1, len(tasks) // (4 * args.workers))))
    else:
        records = [_score_task(t) for t in tasks]
    cats = sorted(set(run.categories) | {c for r in records for c in r.kl})
    write_score_csv(records, args.out, cats)
    mean = math.fsum(r.heal_score for r in records) / len(records) if records else 0.0
    print(f"scored {len(records)} frames, mean heal_score {mean:.6g} -> {args.out}")
    return reporter.status


# ---------------------------------------------------------------- select


def cmd_select(args, run: RunConfig, sim: SimConfig, reporter: Reporter) -> int:
    if not args.out:
        raise UsageError("select needs --out for the frame list")
    k = run.n_query if args.k is None else args.k
    if k <= 0:
        raise UsageError(f"k must be >= 1, got {k}")
    scores = read_score_csv(args.scores)
    labeled = set(read_frame_list(args.labeled)) if args.labeled else set()
    pool = [(f, s) for f, s in scores if f not in labeled]
    if not pool:
        reporter.warning("every scored frame is already labeled; nothing to select")
        picked = []
    else:
        picked = select_top_k(pool, k)
    write_frame_list(picked, args.out)
    print(f"selected {len(picked)} of {len(pool)} unlabeled frames -> {args.out}")
    return reporter.status


# ---------------------------------------------------------------- simulate


def cmd_simulate(args, run: RunConfig, sim: SimConfig, reporter: Reporter) -> int:
    out_dir = args.out or "."
    sim.validate(run)
    os.makedirs(out_dir, exist_ok=True)
    result = run_experiment(config=sim, run=run, workers=args.workers)
    write_curves_csv(result, os.path.join(out_dir, "curves.csv"))
    write_summary_csv(result, os.path.join(out_dir, "summary.csv"))
    write_diagnostics_csv(result, os.path.join(out_dir, "diagnostics.csv"))
    for strategy in sim.strategies:
        final = result.final_errors(strategy)
        mean = math.fsum(final.values()) / len(final)
        print(f"{strategy}: mean final proxy error {mean:.5f} over {len(final)} seeds")
    if "heal" in sim.strategies and "random" in sim.strategies and len(sim.seeds) > 1:
        _, _, p = paired_comparison(result, "heal", "random")
        print(f"heal vs random: one-sided paired t-test p = {p:.3g}")
    print(f"wrote curves.csv, summary.csv, diagnostics.csv to {out_dir}")
    return reporter.status


# ---------------------------------------------------------------- validate


def _validate_detections(path, grid: VoxelGrid, reporter: Reporter) -> list[str]:
    frames: list[str] = []
    seen: dict[str, int] = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        reporter.error("cannot read %s: %s", path, exc)
        return frames
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                det = parse_detection_line(line)
            except (TypeError, ValueError) as exc:
                reporter.error("%s: line %d: %s", path, lineno, exc)
                continue
            if det.frame in seen:
                reporter.error("%s: line %d: duplicate frame_id %r (first on line %d)",
                               path, lineno, det.frame, seen[det.frame])
                continue
            seen[det.frame] = lineno
            frames.append(det.frame)
            for i, box in enumerate(det.boxes):
                if not grid.contains(box.cx, box.cy, box.cz):
                    reporter.warning("frame %s box %d: centre (%.2f, %.2f, %.2f) lies outside the grid",
                                     det.frame, i, box.cx, box.cy, box.cz)
    return frames


def cmd_validate(args, run: RunConfig, sim: SimConfig, reporter: Reporter) -> int:
    if not args.detections and not args.clouds:
        raise UsageError("validate needs --detections and/or --clouds")
    grid = VoxelGrid.from_config(run)
    frames = _validate_detections(args.detections, grid, reporter) if args.detections else []
    n_clouds = 0
    if args.clouds:
        if frames:
            paths = [cloud_path(args.clouds, f) for f in frames]
        else:
            paths = sorted(os.path.join(args.clouds, n) for n in os.listdir(args.clouds) if n.endswith(".bin"))
        for path in paths:
            if not os.path.exists(path):
                reporter.error("missing point cloud %s", path)
                continue
            try:
                read_velodyne_bin(path)
                n_clouds += 1
            except FormatError as exc:
                reporter.error("%s", exc)
    print(f"checked {len(frames)} frames and {n_clouds} clouds: "
          f"{reporter.errors} errors, {reporter.warnings} warnings")
    return reporter.status


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")
    common.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("--seed", type=int, default=None, help="master seed (config key 'seed')")
    common.add_argument("--out", help="output file, or directory for simulate")
    _add_config_flags(common)

    parser = argparse.ArgumentParser(prog="heal3d", description="HeAL acquisition scores for 3D LiDAR detection.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", parents=[common], help="score frames from original and flipped-scene detections")
    p.add_argument("--orig", required=True, help="detections on the original clouds (JSON lines)")
    p.add_argument("--aug", required=True, help="detections on the pi-rotated clouds (JSON lines)")
    p.add_argument("--clouds", help="directory of <frame_id>.bin velodyne files")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("select", parents=[common], help="pick the top-k unlabeled frames from a score CSV")
    p.add_argument("--scores", required=True, help="score CSV written by 'score'")
    p.add_argument("--labeled", help="file with one already-labeled frame id per line")
    p.add_argument("-k", type=int, default=None, help="frames to select (default: n_query)")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", parents=[common], help="run the synthetic closed-loop experiment")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", parents=[common], help="check detection and cloud files")
    p.add_argument("--detections", help="detections file (JSON lines)")
    p.add_argument("--clouds", help="directory of <frame_id>.bin velodyne files")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    reporter = Reporter()
    try:
        run, sim = resolve_config(args, reporter)
        return args.func(args, run, sim, reporter)
    except UsageError as exc:
        parser.error(str(exc))
    except (ConfigError, FormatError, OSError) as exc:
        reporter.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
