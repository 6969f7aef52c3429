"""KL inconsistency between original and flipped-scene detections.

The score of a frame is the mean, over categories, of ``KL(f_c || g_c)``
where ``f_c`` is the map built from the original detections and ``g_c`` the
map built from the detections on the pi-rotated cloud after rotating them
back.  All values are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import rotate_box_pi_z, rotate_points_pi_z
from .probmap import (
    ClassProbMap,
    VoxelGrid,
    build_class_maps,
    compute_corrections,
    merge_regions,
    uniform_map,
)
from .scene_io import DetectionSet

KL_TOLERANCE = 1e-12


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreRecord:
    frame: str
    kl: dict[str, float]
    heal_score: float
    n_boxes_orig: int
    n_boxes_aug: int
    correction_mode: str = "distance"


def _check_pair(f: ClassProbMap, g: ClassProbMap) -> None:
    if f.grid != g.grid:
        raise GridMismatchError(f"maps live on different grids ({f.grid} vs {g.grid})")


def kl_divergence_raw(f: ClassProbMap, g: ClassProbMap) -> float:
    """``sum f * ln(f / g)`` over every cell, without clamping."""
    _check_pair(f, g)
    inner = []
    n_inner = 0
    for lo, hi in merge_regions(f.regions + g.regions):
        fv, gv = f.on_region(lo, hi), g.on_region(lo, hi)
        ratio = np.divide(fv, gv, out=gv)
        np.log(ratio, out=ratio)
        ratio *= fv
        inner.append(float(ratio.sum()))
        n_inner += fv.size
    # every cell outside the blocks holds the two floors
    outer = (f.grid.n_cells - n_inner) * f.floor * math.log(f.floor / g.floor)
    return math.fsum(inner) + outer


def kl_divergence(f: ClassProbMap, g: ClassProbMap) -> float:
    """KL divergence of ``g`` from ``f`` in nats.

    Rounding can push the sum slightly below zero; anything above
    ``-1e-12`` is clamped to 0, anything lower raises.
    """
    value = kl_divergence_raw(f, g)
    if value < 0.0:
        if value < -KL_TOLERANCE:
            raise ArithmeticError(f"negative KL divergence {value!r}")
        return 0.0
    return value


def classwise_kl(orig_maps: dict[str, ClassProbMap], aug_maps: dict[str, ClassProbMap]) -> dict[str, float]:
    """KL per category over the union of both sides.

    A category seen on one side only is compared with the flat map, so an
    object that appears or vanishes under the flip counts as maximally
    inconsistent.
    """
    out = {}
    grids = {m.grid for m in (*orig_maps.values(), *aug_maps.values())}
    if len(grids) > 1:
        raise GridMismatchError("maps live on different grids")
    for c in sorted(set(orig_maps) | set(aug_maps)):
        f = orig_maps.get(c)
        g = aug_maps.get(c)
        if f is None:
            f = uniform_map(g.grid, c)
        if g is None:
            g = uniform_map(f.grid, c)
        out[c] = kl_divergence(f, g)
    return out


def heal_score(kl: dict[str, float], n_categories: int | None = None) -> float:
    """Average of the class-wise KL values.

    By default the mean runs over the categories present; pass
    ``n_categories`` to divide by a fixed class count instead.
    """
    if not kl:
        return 0.0
    total = math.fsum(kl[c] for c in sorted(kl))
    denom = len(kl) if n_categories is None else n_categories
    return total / denom


def align_augmented(aug: DetectionSet) -> DetectionSet:
    """Rotate flipped-scene detections back into the original frame."""
    return DetectionSet(aug.frame, tuple(rotate_box_pi_z(b) for b in aug.boxes))


def score_frame(orig: DetectionSet, aug: DetectionSet, orig_points, grid: VoxelGrid, config) -> ScoreRecord:
    """Score one frame.

    ``aug`` holds the raw detections on the rotated cloud.  Point counts for
    the augmented side come from the rotated cloud and its raw boxes.
    """
    needs_points = config.correction_mode in ("points", "both")
    orig_points = orig_points if needs_points else None
    aug_points = rotate_points_pi_z(orig_points) if orig_points is not None else None
    f_maps = build_class_maps(orig, orig_points, grid, config)
    aug_scales = compute_corrections(aug.boxes, aug_points, config).scales
    g_maps = build_class_maps(align_augmented(aug), None, grid, config, scales=aug_scales)
    kl = classwise_kl(f_maps, g_maps)
    n_cat = len(config.categories) if config.kl_denominator == "fixed" else None
    return ScoreRecord(
        frame=orig.frame,
        kl=kl,
        heal_score=heal_score(kl, n_cat),
        n_boxes_orig=len(orig.boxes),
        n_boxes_aug=len(aug.boxes),
        correction_mode=config.correction_mode,
    )
