"""Desk-scale closed-loop simulation of the acquisition loop.

A synthetic pool of LiDAR-like frames is labelled round by round under each
acquisition strategy.  Detections come from a simulated detector whose
centre noise grows with range and shrinks as more labelled frames cover the
object's (category, range bucket).  Quality is tracked with a proxy metric:
mean centre error of matched detections on a held-out split.

All randomness flows from ``numpy.random.SeedSequence`` keyed by
``(seed, stream, round, frame)``, so results do not depend on strategy
order, worker count, or scheduling.  Strategies evaluated under the same
seed share pools, held-out frames and noise draws.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .divergence import score_frame
from .geometry import Box3D, count_points_in_box, rotate_box_pi_z, rotate_points_pi_z
from .probmap import VoxelGrid
from .scene_io import ConfigError, DetectionSet, RunConfig
from .selection import ALState, advance_round, entropy_select, random_select, select_top_k

log = logging.getLogger(__name__)

STRATEGIES = ("heal", "random", "entropy")
KITTI_POOL = 3712
MATCH_RADIUS = 2.0

# seed-sequence stream tags
_POOL, _HELDOUT, _INIT, _DETECT, _EVAL, _RANDOM = range(6)

DEFAULT_SIZES = {
    "Car": (3.9, 1.6, 1.56),
    "Pedestrian": (0.8, 0.6, 1.73),
    "Cyclist": (1.76, 0.6, 1.73),
}


@dataclass
class SimConfig:
    pool_size: int = 600
    heldout_size: int = 150
    n_init: int = 100
    rounds: int = 8
    # 0 scales the scoring n_query from the 3712-frame KITTI pool to pool_size
    sim_n_query: int = 0
    budget_frames: int = 0
    strategies: tuple[str, ...] = STRATEGIES
    seeds: tuple[int, ...] = tuple(range(1, 21))
    sim_categories: tuple[str, ...] = ("Car", "Pedestrian", "Cyclist")
    class_ratio: tuple[str, ...] = ("8", "1", "1")
    mean_boxes: float = 3.0
    range_min: float = 4.0
    range_max: float = 68.0
    bucket_edges: tuple[str, ...] = ("20", "40")
    point_density: float = 2000.0
    clutter_points: int = 200
    # per-bucket values, then a per-category multiplier
    noise_near: float = 0.15
    noise_mid: float = 0.35
    noise_far: float = 0.7
    rare_noise_factor: float = 1.5
    miss_near: float = 0.01
    miss_mid: float = 0.02
    miss_far: float = 0.05
    rare_miss_factor: float = 3.0
    misclass_car: float = 0.01
    misclass_rare: float = 0.06
    # training also lowers miss and confusion rates, not just centre noise
    skill_scales_rates: bool = True
    skill_halfcount: float = 10.0
    skill_floor: float = 0.1
    zero_noise: bool = False

    def __post_init__(self):
        self.strategies = tuple(self.strategies)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.sim_categories = tuple(self.sim_categories)
        self.class_ratio = tuple(str(r) for r in self.class_ratio)
        self.bucket_edges = tuple(str(e) for e in self.bucket_edges)

    @property
    def ratio(self) -> tuple[float, ...]:
        return tuple(float(r) for r in self.class_ratio)

    @property
    def edges(self) -> tuple[float, ...]:
        return tuple(float(e) for e in self.bucket_edges)

    def query_size(self, run: RunConfig) -> int:
        if self.sim_n_query > 0:
            return self.sim_n_query
        return max(1, round(run.n_query * self.pool_size / KITTI_POOL))

    def validate(self, run: RunConfig) -> None:
        if self.pool_size < 1 or self.heldout_size < 1:
            raise ConfigError("pool_size and heldout_size must be >= 1")
        if not 1 <= self.n_init < self.pool_size:
            raise ConfigError("n_init must satisfy 1 <= n_init < pool_size")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        for spec in self.strategies:
            parse_schedule(spec)
        if len(self.sim_categories) != len(self.class_ratio):
            raise ConfigError("class_ratio needs one entry per sim category")
        if any(r < 0 for r in self.ratio) or sum(self.ratio) <= 0:
            raise ConfigError("class_ratio entries must be >= 0 with a positive sum")
        if not 0 < self.range_min < self.range_max:
            raise ConfigError("need 0 < range_min < range_max")
        if list(self.edges) != sorted(self.edges):
            raise ConfigError("bucket_edges must be increasing")
        for name in ("miss_near", "miss_mid", "miss_far", "misclass_car", "misclass_rare"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.skill_halfcount <= 0 or not 0 <= self.skill_floor <= 1:
            raise ConfigError("skill_halfcount must be > 0 and skill_floor in [0, 1]")
        b = run.bounds
        if self.range_max > b[1] or b[0] > 0.0:
            raise ConfigError("range_max must fit inside the grid's x extent")


def parse_schedule(spec: str) -> list[tuple[str, int | None]]:
    """Parse a strategy name or a piecewise schedule.

    ``entropy:3+heal`` runs entropy for three rounds, then HeAL.  The last
    piece runs for all remaining rounds.
    """
    pieces = []
    parts = spec.split("+")
    for i, part in enumerate(parts):
        name, _, n = part.partition(":")
        name = name.strip()
        if name not in STRATEGIES:
            raise ConfigError(f"unknown strategy {name!r} in {spec!r} (known: {', '.join(STRATEGIES)})")
        if i < len(parts) - 1:
            if not n.strip().isdigit():
                raise ConfigError(f"schedule piece {part!r} needs a round count, e.g. 'entropy:3'")
            pieces.append((name, int(n)))
        else:
            pieces.append((name, None))
    return pieces


def strategy_for_round(spec: str, round_index: int) -> str:
    """Strategy in force for 1-based ``round_index``."""
    start = 1
    for name, n in parse_schedule(spec):
        if n is None or round_index < start + n:
            return name
        start += n
    raise AssertionError("unreachable")


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


# ------------------------------------------------------------------ scenes


@dataclass(frozen=True)
class SyntheticScene:
    frame: str
    boxes: tuple[Box3D, ...]
    points: np.ndarray
    distances: np.ndarray
    point_counts: np.ndarray
    occluded: np.ndarray

    @property
    def rotated_points(self) -> np.ndarray:
        return rotate_points_pi_z(self.points)


def bucket_of(distance: float, edges: Sequence[float]) -> int:
    return int(np.searchsorted(edges, distance, side="right"))


def allocate_labels(n_boxes: int, categories: Sequence[str], ratio: Sequence[float], rng) -> list[str]:
    """Exact-quota category labels (largest remainder), randomly ordered."""
    weights = np.asarray(ratio, dtype=np.float64) / sum(ratio)
    raw = weights * n_boxes
    counts = np.floor(raw).astype(int)
    short = n_boxes - counts.sum()
    order = sorted(range(len(weights)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    labels = [c for c, n in zip(categories, counts) for _ in range(n)]
    rng.shuffle(labels)
    return labels


def _sample_box(category: str, rng, config: SimConfig, bounds, placed: list[Box3D]) -> Box3D:
    l, w, h = DEFAULT_SIZES.get(category, (1.0, 1.0, 1.5))
    jitter = rng.uniform(0.9, 1.1, size=3)
    l, w, h = l * jitter[0], w * jitter[1], h * jitter[2]
    y_lim = min(-bounds[2], bounds[3]) - 2.0
    for _ in range(50):
        r = rng.uniform(config.range_min, config.range_max)
        half_fov = min(math.pi / 4, math.asin(min(1.0, y_lim / r)))
        phi = rng.uniform(-half_fov, half_fov)
        cx, cy = r * math.cos(phi), r * math.sin(phi)
        if all(math.hypot(cx - b.cx, cy - b.cy) > 0.5 * (l + b.l) + 0.5 for b in placed):
            break
    yaw = rng.uniform(-math.pi, math.pi)
    ground = bounds[4] + 1.3
    return Box3D(cx, cy, ground + 0.5 * h, l, w, h, yaw, category, 1.0)


def _sample_points(box: Box3D, n: int, rng) -> np.ndarray:
    local = rng.uniform(-0.45, 0.45, size=(n, 3)) * np.array([box.l, box.w, box.h])
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    pts = np.empty((n, 4))
    pts[:, 0] = box.cx + c * local[:, 0] - s * local[:, 1]
    pts[:, 1] = box.cy + s * local[:, 0] + c * local[:, 1]
    pts[:, 2] = box.cz + local[:, 2]
    pts[:, 3] = rng.uniform(0.0, 1.0, size=n)
    return pts


def _build_scene(frame: str, labels: Sequence[str], rng, config: SimConfig, bounds) -> SyntheticScene:
    boxes: list[Box3D] = []
    for cat in labels:
        boxes.append(_sample_box(cat, rng, config, bounds, boxes))
    chunks = []
    for b in boxes:
        d = b.horizontal_distance
        face = (b.l + b.w) * b.h
        chunks.append(_sample_points(b, int(rng.poisson(config.point_density * face / d**2)), rng))
    clutter = np.empty((config.clutter_points, 4))
    clutter[:, 0] = rng.uniform(bounds[0], bounds[1], config.clutter_points)
    clutter[:, 1] = rng.uniform(bounds[2], bounds[3], config.clutter_points)
    clutter[:, 2] = bounds[4] + 1.3 + rng.normal(0.0, 0.03, config.clutter_points)
    clutter[:, 3] = rng.uniform(0.0, 1.0, config.clutter_points)
    chunks.append(clutter)
    points = np.vstack(chunks)
    counts = np.array([count_points_in_box(points, b) for b in boxes], dtype=int)
    return SyntheticScene(
        frame=frame,
        boxes=tuple(boxes),
        points=points,
        distances=np.array([b.horizontal_distance for b in boxes]),
        point_counts=counts,
        occluded=counts == 0,
    )


def generate_pool(n_frames: int, seed: int, config: SimConfig | None = None,
                  bounds=None, stream: int = _POOL, prefix: str = "") -> list[SyntheticScene]:
    """Deterministic synthetic frames.

    Box counts per frame are ``1 + Poisson(mean_boxes - 1)``; category labels
    over the whole pool follow ``class_ratio`` exactly and are shuffled
    across boxes.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    config = config or SimConfig()
    bounds = bounds or RunConfig().bounds
    rng = _rng(seed, stream)
    n_boxes = 1 + rng.poisson(max(config.mean_boxes - 1.0, 0.0), size=n_frames)
    labels = allocate_labels(int(n_boxes.sum()), config.sim_categories, config.ratio, rng)
    scenes, start = [], 0
    for i, n in enumerate(n_boxes):
        scenes.append(_build_scene(f"{prefix}{i:06d}", labels[start:start + n], rng, config, bounds))
        start += n
    return scenes


# ----------------------------------------------------------------- detector


@dataclass
class SimDetectorModel:
    """Per (category, range bucket) noise, miss and confusion rates."""

    categories: tuple[str, ...]
    edges: tuple[float, ...]
    noise: dict[str, tuple[float, ...]]
    miss: dict[str, tuple[float, ...]]
    misclass: dict[str, tuple[float, ...]]
    skill_halfcount: float = 10.0
    skill_floor: float = 0.1
    skill_scales_rates: bool = False
    labeled_counts: dict[tuple[str, int], int] = field(default_factory=dict)

    @classmethod
    def from_config(cls, config: SimConfig) -> "SimDetectorModel":
        cats = config.sim_categories
        n_buckets = len(config.edges) + 1
        if config.zero_noise:
            zeros = {c: (0.0,) * n_buckets for c in cats}
            return cls(cats, config.edges, zeros, dict(zeros), dict(zeros),
                       config.skill_halfcount, config.skill_floor)
        base = _per_bucket((config.noise_near, config.noise_mid, config.noise_far), n_buckets)
        miss = _per_bucket((config.miss_near, config.miss_mid, config.miss_far), n_buckets)
        noise, misses, confusion = {}, {}, {}
        for i, c in enumerate(cats):
            # the first category is the common one; the rest are harder
            common = i == 0
            factor = 1.0 if common else config.rare_noise_factor
            noise[c] = tuple(factor * v for v in base)
            factor = 1.0 if common else config.rare_miss_factor
            misses[c] = tuple(min(1.0, factor * v) for v in miss)
            p = config.misclass_car if common else config.misclass_rare
            # confusion grows with range: half the rate near, 1.5x far
            confusion[c] = tuple(min(1.0, p * f) for f in np.linspace(0.5, 1.5, n_buckets))
        return cls(cats, config.edges, noise, misses, confusion,
                   config.skill_halfcount, config.skill_floor, config.skill_scales_rates)

    def skill(self, category: str, bucket: int) -> float:
        n = self.labeled_counts.get((category, bucket), 0)
        return self.skill_floor + (1.0 - self.skill_floor) / math.sqrt(1.0 + n / self.skill_halfcount)

    def learn(self, scenes: Sequence[SyntheticScene]) -> None:
        """Count each newly labelled frame once per (category, bucket) it contains."""
        for scene in scenes:
            keys = {(b.category, bucket_of(d, self.edges)) for b, d in zip(scene.boxes, scene.distances)}
            for key in keys:
                self.labeled_counts[key] = self.labeled_counts.get(key, 0) + 1


def _per_bucket(values, n_buckets: int) -> tuple[float, ...]:
    if n_buckets == len(values):
        return tuple(values)
    return tuple(np.interp(np.linspace(0, 1, n_buckets), np.linspace(0, 1, len(values)), values))


@dataclass(frozen=True)
class SimDetections:
    detections: DetectionSet
    errors: np.ndarray  # centre error per emitted box
    distances: np.ndarray  # GT range per emitted box


def simulate_detections(scene: SyntheticScene, model: SimDetectorModel, rng, rotated: bool = False) -> SimDetections:
    """Noisy detections of ``scene``; with ``rotated`` the scene is flipped first.

    Every GT box is dropped with its miss probability; survivors get
    Gaussian centre noise (z at a quarter of the xy scale), a possibly
    wrong label, and confidence ``exp(-centre error)``.
    """
    out, errors, dists = [], [], []
    for gt, d in zip(scene.boxes, scene.distances):
        b = bucket_of(d, model.edges)
        cat = gt.category
        u_miss, u_conf, u_pick = rng.uniform(size=3)
        z = rng.standard_normal(3)
        skill = model.skill(cat, b)
        rate_scale = skill if model.skill_scales_rates else 1.0
        if u_miss < model.miss[cat][b] * rate_scale:
            continue
        sigma = model.noise[cat][b] * skill
        offset = sigma * z * np.array([1.0, 1.0, 0.25])
        err = float(np.linalg.norm(offset))
        label = cat
        if u_conf < model.misclass[cat][b] * rate_scale and len(model.categories) > 1:
            others = [c for c in model.categories if c != cat]
            label = others[min(int(u_pick * len(others)), len(others) - 1)]
        src = rotate_box_pi_z(gt) if rotated else gt
        box = Box3D(src.cx + offset[0], src.cy + offset[1], src.cz + offset[2],
                    src.l, src.w, src.h, src.yaw, label, math.exp(-err))
        out.append(box)
        errors.append(err)
        dists.append(d)
    return SimDetections(DetectionSet(scene.frame, tuple(out)), np.array(errors), np.array(dists))


# ------------------------------------------------------------------ metric


def match_errors(gt: Sequence[Box3D], det: Sequence[Box3D], radius: float = MATCH_RADIUS) -> list[float]:
    """Centre errors of greedy one-to-one nearest matches of the same category."""
    pairs = []
    for i, g in enumerate(gt):
        for j, d in enumerate(det):
            if g.category != d.category:
                continue
            dist = math.dist((g.cx, g.cy, g.cz), (d.cx, d.cy, d.cz))
            if dist <= radius:
                pairs.append((dist, i, j))
    pairs.sort()
    used_g, used_d, errs = set(), set(), []
    for dist, i, j in pairs:
        if i in used_g or j in used_d:
            continue
        used_g.add(i)
        used_d.add(j)
        errs.append(dist)
    return errs


def proxy_error(scenes: Sequence[SyntheticScene], model: SimDetectorModel, seed: int, round_index: int) -> float:
    errs: list[float] = []
    for k, scene in enumerate(scenes):
        det = simulate_detections(scene, model, _rng(seed, _EVAL, round_index, k))
        errs.extend(match_errors(scene.boxes, det.detections.boxes))
    return math.fsum(errs) / len(errs) if errs else 0.0


# --------------------------------------------------------------- experiment


@dataclass
class RunResult:
    strategy: str
    seed: int
    curve: list[tuple[int, int, float]]  # (round, labeled_count, proxy_error)
    spearman: list[tuple[int, float]] = field(default_factory=list)  # (round, rho)
    max_heal_score: float = 0.0


@dataclass
class ExperimentResult:
    runs: list[RunResult]

    def final_errors(self, strategy: str) -> dict[int, float]:
        return {r.seed: r.curve[-1][2] for r in self.runs if r.strategy == strategy}

    def curve_rows(self):
        for r in self.runs:
            for rnd, n_lab, err in r.curve:
                yield (r.strategy, r.seed, rnd, n_lab, err)

    def summary_rows(self):
        strategies = list(dict.fromkeys(r.strategy for r in self.runs))
        for s in strategies:
            runs = [r for r in self.runs if r.strategy == s]
            for i, (rnd, n_lab, _) in enumerate(runs[0].curve):
                vals = np.array([r.curve[i][2] for r in runs])
                std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
                yield (s, rnd, n_lab, float(vals.mean()), std, len(vals))


def _frame_error(dets: Sequence[SimDetections]) -> float | None:
    errs = np.concatenate([d.errors for d in dets])
    return float(errs.mean()) if errs.size else None


def run_single(strategy: str, seed: int, config: SimConfig, run: RunConfig) -> RunResult:
    """One closed-loop run for one strategy (or schedule) and one seed."""
    grid = VoxelGrid.from_config(run)
    pool = generate_pool(config.pool_size, seed, config, run.bounds, _POOL, "p")
    heldout = generate_pool(config.heldout_size, seed, config, run.bounds, _HELDOUT, "h")
    by_id = {s.frame: s for s in pool}
    index = {s.frame: k for k, s in enumerate(pool)}
    assert not set(by_id) & {s.frame for s in heldout}

    init = random_select(by_id, config.n_init, int(_rng(seed, _INIT).integers(2**63)))
    budget = config.budget_frames or None
    n_query = config.query_size(run)
    state = ALState.initial(init, set(by_id) - set(init), n_query, budget, seed)
    model = SimDetectorModel.from_config(config)
    model.learn([by_id[f] for f in init])

    result = RunResult(strategy, seed, [(0, len(state.labeled), proxy_error(heldout, model, seed, 0))])
    for rnd in range(1, config.rounds + 1):
        name = strategy_for_round(strategy, rnd)
        pool_ids = sorted(state.unlabeled)
        if name == "random":
            picked = random_select(pool_ids, n_query, int(_rng(seed, _RANDOM, rnd).integers(2**63)))
        else:
            dets = {}
            for f in pool_ids:
                k = index[f]
                dets[f] = (
                    simulate_detections(by_id[f], model, _rng(seed, _DETECT, rnd, k, 0)),
                    simulate_detections(by_id[f], model, _rng(seed, _DETECT, rnd, k, 1), rotated=True),
                )
            if name == "entropy":
                picked = entropy_select([dets[f][0].detections for f in pool_ids], n_query)
            else:
                records = [
                    score_frame(dets[f][0].detections, dets[f][1].detections, by_id[f].points, grid, run)
                    for f in pool_ids
                ]
                picked = select_top_k(records, n_query)
                result.max_heal_score = max([result.max_heal_score] + [r.heal_score for r in records])
                pairs = [(r.heal_score, _frame_error(dets[r.frame])) for r in records]
                pairs = [(h, e) for h, e in pairs if e is not None]
                # rank correlation is undefined when either side is constant
                if len(pairs) > 2 and len({p[0] for p in pairs}) > 1 and len({p[1] for p in pairs}) > 1:
                    rho = stats.spearmanr([p[0] for p in pairs], [p[1] for p in pairs]).statistic
                    result.spearman.append((rnd, float(rho)))
        before = state.labeled
        state = advance_round(state, picked)
        model.learn([by_id[f] for f in sorted(state.labeled - before)])
        assert not state.labeled & {s.frame for s in heldout}
        result.curve.append((rnd, len(state.labeled), proxy_error(heldout, model, seed, rnd)))
        log.debug("%s seed=%d round=%d labeled=%d err=%.4f", strategy, seed, rnd,
                  len(state.labeled), result.curve[-1][2])
    return result


def _run_task(args):
    return run_single(*args)


def run_experiment(strategies: Sequence[str] | None = None, rounds: int | None = None,
                   seeds: Sequence[int] | None = None, config: SimConfig | None = None,
                   run: RunConfig | None = None, workers: int = 1) -> ExperimentResult:
    """Run every (strategy, seed) pair; output order is strategy-major, then seed."""
    config = config or SimConfig()
    run = run or RunConfig()
    if strategies is not None:
        config.strategies = tuple(strategies)
    if rounds is not None:
        config.rounds = rounds
    if seeds is not None:
        config.seeds = tuple(seeds)
    config.validate(run)
    tasks = [(s, seed, config, run) for s in config.strategies for seed in config.seeds]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(_run_task, tasks))
    else:
        runs = [_run_task(t) for t in tasks]
    return ExperimentResult(runs)


def paired_comparison(result: ExperimentResult, better: str = "heal", baseline: str = "random"):
    """One-sided paired t-test that ``better`` ends with lower proxy error."""
    a, b = result.final_errors(better), result.final_errors(baseline)
    seeds = sorted(set(a) & set(b))
    x = np.array([a[s] for s in seeds])
    y = np.array([b[s] for s in seeds])
    test = stats.ttest_rel(x, y, alternative="less")
    return float(x.mean()), float(y.mean()), float(test.pvalue)


def distance_error_spearman(seed: int, config: SimConfig | None = None, run: RunConfig | None = None) -> float:
    """Rank correlation of GT range and simulated centre error over a fresh pool."""
    config = config or SimConfig()
    run = run or RunConfig()
    pool = generate_pool(config.pool_size, seed, config, run.bounds)
    model = SimDetectorModel.from_config(config)
    d, e = [], []
    for k, scene in enumerate(pool):
        det = simulate_detections(scene, model, _rng(seed, _DETECT, 0, k, 0))
        d.extend(det.distances)
        e.extend(det.errors)
    return float(stats.spearmanr(d, e).statistic)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_curves_csv(result: ExperimentResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "seed", "round", "labeled_count", "proxy_error"])
        for s, seed, rnd, n_lab, err in result.curve_rows():
            w.writerow([s, seed, rnd, n_lab, _fmt(err)])


def write_summary_csv(result: ExperimentResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "round", "labeled_count", "mean_proxy_error", "std_proxy_error", "n_seeds"])
        for s, rnd, n_lab, mean, std, n in result.summary_rows():
            w.writerow([s, rnd, n_lab, _fmt(mean), _fmt(std), n])


def write_diagnostics_csv(result: ExperimentResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "seed", "round", "spearman_heal_vs_error"])
        for r in result.runs:
            for rnd, rho in r.spearman:
                w.writerow([r.strategy, r.seed, rnd, _fmt(rho)])
