"""Class-wise Gaussian-mixture probability maps on a voxel grid.

Every detected box contributes an axis-aligned Gaussian centred on the box,
with per-axis variance equal to the box dimension times a correction scale.
A category's map is the equally weighted sum of its boxes' Gaussians,
evaluated at cell centres, floored by ``epsilon_map`` and normalised.

Maps are stored as dense blocks covering the cells the Gaussians reach
plus a single floor value shared by every other cell.  ``densities`` gives
the full grid when needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .geometry import Box3D, as_points, points_in_box_mask

NORM_3D = (2.0 * math.pi) ** -1.5


@dataclass(frozen=True)
class VoxelGrid:
    """Regular grid over ``bounds = (x_min, x_max, y_min, y_max, z_min, z_max)``.

    The cell count per axis is ``ceil(extent / voxel_size)``; any overshoot
    is split evenly on both sides so that cell centres stay strictly inside
    the bounds and a grid with symmetric bounds has mirror-exact centres.
    """

    bounds: tuple[float, float, float, float, float, float]
    voxel_size: float

    def __post_init__(self):
        b = tuple(float(v) for v in self.bounds)
        if len(b) != 6 or not (b[0] < b[1] and b[2] < b[3] and b[4] < b[5]):
            raise ValueError(f"grid bounds must be ordered (min < max) per axis, got {self.bounds}")
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be > 0")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))

    @classmethod
    def from_config(cls, config) -> "VoxelGrid":
        return cls(config.bounds, config.voxel_size)

    @cached_property
    def dims(self) -> tuple[int, int, int]:
        b, v = self.bounds, self.voxel_size
        # tolerance keeps e.g. 70.4 / 0.4 from rounding up to 177
        return tuple(max(1, math.ceil((b[2 * i + 1] - b[2 * i]) / v - 1e-9)) for i in range(3))

    @property
    def n_cells(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @cached_property
    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cell-centre coordinates along x, y and z."""
        out = []
        for i, n in enumerate(self.dims):
            mid = 0.5 * (self.bounds[2 * i] + self.bounds[2 * i + 1])
            out.append(mid + (np.arange(n) - 0.5 * (n - 1)) * self.voxel_size)
        return tuple(out)

    def cell_center(self, ix: int, iy: int, iz: int) -> np.ndarray:
        xs, ys, zs = self.axes
        return np.array([xs[ix], ys[iy], zs[iz]])

    def cell_index(self, point) -> tuple[int, int, int]:
        """Index of the cell whose centre is nearest to ``point``."""
        return tuple(int(np.argmin(np.abs(ax - p))) for ax, p in zip(self.axes, point))

    def contains(self, x: float, y: float, z: float) -> bool:
        b = self.bounds
        return b[0] <= x <= b[1] and b[2] <= y <= b[3] and b[4] <= z <= b[5]

    @property
    def symmetric_xy(self) -> bool:
        b = self.bounds
        return b[0] == -b[1] and b[2] == -b[3]


def _overlaps(a, b) -> bool:
    return all(a[0][i] < b[1][i] and b[0][i] < a[1][i] for i in range(3))


def merge_regions(regions):
    """Merge index boxes ``(lo, hi)`` until no two of them overlap.

    Each input box ends up inside exactly one output box.
    """
    out = [(tuple(lo), tuple(hi)) for lo, hi in regions]
    merged = True
    while merged:
        merged = False
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                if _overlaps(out[i], out[j]):
                    a, b = out[i], out.pop(j)
                    out[i] = (
                        tuple(min(a[0][k], b[0][k]) for k in range(3)),
                        tuple(max(a[1][k], b[1][k]) for k in range(3)),
                    )
                    merged = True
                    break
            if merged:
                break
    return sorted(out)


def _paste(dest, dest_lo, origin, values):
    sl = tuple(slice(o - l, o - l + s) for o, l, s in zip(origin, dest_lo, values.shape))
    dest[sl] = values


@dataclass(frozen=True)
class ClassProbMap:
    """Normalised density of one category.

    ``blocks`` is a tuple of ``(origin, values)`` pairs covering disjoint
    index boxes; every cell outside them has value ``floor``.
    """

    grid: VoxelGrid
    category: str
    blocks: tuple
    floor: float

    @property
    def densities(self) -> np.ndarray:
        out = np.full(self.grid.dims, self.floor)
        for origin, values in self.blocks:
            _paste(out, (0, 0, 0), origin, values)
        return out

    @property
    def regions(self) -> list:
        return [(o, tuple(a + s for a, s in zip(o, v.shape))) for o, v in self.blocks]

    @property
    def n_block_cells(self) -> int:
        return sum(v.size for _, v in self.blocks)

    def total(self) -> float:
        return math.fsum(float(v.sum()) for _, v in self.blocks) + self.floor * (
            self.grid.n_cells - self.n_block_cells
        )

    def on_region(self, lo, hi) -> np.ndarray:
        """Values on the index box ``[lo, hi)``.

        Blocks must lie entirely inside or entirely outside the region.
        """
        out = np.full(tuple(h - l for l, h in zip(lo, hi)), self.floor)
        for origin, values in self.blocks:
            if all(lo[i] <= origin[i] and origin[i] + values.shape[i] <= hi[i] for i in range(3)):
                _paste(out, lo, origin, values)
        return out


def uniform_map(grid: VoxelGrid, category: str) -> ClassProbMap:
    """The flat map: what a category with no boxes reduces to after flooring."""
    return ClassProbMap(grid, category, (), 1.0 / grid.n_cells)


def rotate_map_pi_z(m: ClassProbMap) -> ClassProbMap:
    """Rotate a map by pi about z.  Only defined on grids symmetric in x and y."""
    if not m.grid.symmetric_xy:
        raise ValueError("map rotation needs a grid with x_min = -x_max and y_min = -y_max")
    nx, ny, _ = m.grid.dims
    blocks = []
    for origin, values in m.blocks:
        bx, by, _ = values.shape
        new_origin = (nx - origin[0] - bx, ny - origin[1] - by, origin[2])
        blocks.append((new_origin, values[::-1, ::-1, :].copy()))
    return ClassProbMap(m.grid, m.category, tuple(sorted(blocks, key=lambda b: b[0])), m.floor)


# ----------------------------------------------------------------- Gaussians


def box_sigmas(box: Box3D, sigma_scale: float) -> tuple[float, float, float]:
    """Per-axis standard deviations: variance = scale * dimension."""
    if not sigma_scale > 0:
        raise ValueError(f"sigma_scale must be > 0, got {sigma_scale!r}")
    return (
        math.sqrt(sigma_scale * box.l),
        math.sqrt(sigma_scale * box.w),
        math.sqrt(sigma_scale * box.h),
    )


def gaussian_pdf_at(box: Box3D, sigma_scale: float, query, rotated: bool = False) -> float:
    """Density of the box's Gaussian at ``query``.

    With ``rotated`` the covariance axes follow the box yaw; by default the
    covariance is diagonal in the sensor frame and yaw is ignored.
    """
    sx, sy, sz = box_sigmas(box, sigma_scale)
    dx, dy, dz = (float(query[0]) - box.cx, float(query[1]) - box.cy, float(query[2]) - box.cz)
    if rotated:
        c, s = math.cos(box.yaw), math.sin(box.yaw)
        dx, dy = c * dx + s * dy, -s * dx + c * dy
    maha = (dx / sx) ** 2 + (dy / sy) ** 2 + (dz / sz) ** 2
    return NORM_3D / (sx * sy * sz) * math.exp(-0.5 * maha)


def _axis_window(axis: np.ndarray, mu: float, radius: float):
    d = axis - mu
    idx = np.flatnonzero(np.abs(d) <= radius)
    if idx.size == 0:
        return None
    lo, hi = int(idx[0]), int(idx[-1]) + 1
    return lo, hi, d[lo:hi]


def box_footprint(box: Box3D, sigma_scale: float, grid: VoxelGrid, truncation: float, rotated: bool = False):
    """Evaluate one box's Gaussian on the cells it reaches.

    Returns ``(lo, values)`` with ``values`` covering cells ``lo`` to
    ``lo + values.shape``, or ``None`` if no cell centre lies within the
    truncation window.
    """
    sx, sy, sz = box_sigmas(box, sigma_scale)
    xs, ys, zs = grid.axes
    norm = NORM_3D / (sx * sy * sz)
    wz = _axis_window(zs, box.cz, truncation * sz)
    if wz is None:
        return None
    gz = np.exp(-0.5 * (wz[2] / sz) ** 2)
    if not rotated:
        wx = _axis_window(xs, box.cx, truncation * sx)
        wy = _axis_window(ys, box.cy, truncation * sy)
        if wx is None or wy is None:
            return None
        gx = np.exp(-0.5 * (wx[2] / sx) ** 2)
        gy = np.exp(-0.5 * (wy[2] / sy) ** 2)
        values = norm * gx[:, None, None] * gy[None, :, None] * gz[None, None, :]
        return (wx[0], wy[0], wz[0]), values

    c, s = math.cos(box.yaw), math.sin(box.yaw)
    # world-axis half extents of the truncation rectangle in the box frame
    rx = truncation * (abs(c) * sx + abs(s) * sy)
    ry = truncation * (abs(s) * sx + abs(c) * sy)
    wx = _axis_window(xs, box.cx, rx)
    wy = _axis_window(ys, box.cy, ry)
    if wx is None or wy is None:
        return None
    dx, dy = wx[2][:, None], wy[2][None, :]
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    inside = (np.abs(lx) <= truncation * sx) & (np.abs(ly) <= truncation * sy)
    gxy = np.where(inside, np.exp(-0.5 * ((lx / sx) ** 2 + (ly / sy) ** 2)), 0.0)
    values = norm * gxy[:, :, None] * gz[None, None, :]
    return (wx[0], wy[0], wz[0]), values


def mixture_blocks(boxes: Sequence[Box3D], scales, grid: VoxelGrid, truncation: float, rotated: bool = False):
    """Un-normalised sum of box Gaussians as a list of disjoint ``(origin, values)`` blocks.

    Footprints that overlap are summed into a shared block; the list is
    empty when no box reaches a cell centre.
    """
    feet = []
    for box, scale in zip(boxes, scales):
        fp = box_footprint(box, float(scale), grid, truncation, rotated)
        if fp is not None:
            feet.append(fp)
    regions = merge_regions(
        [(o, tuple(a + s for a, s in zip(o, v.shape))) for o, v in feet]
    )
    blocks = []
    for lo, hi in regions:
        values = np.zeros(tuple(h - l for l, h in zip(lo, hi)))
        for o, v in feet:
            if all(lo[i] <= o[i] < hi[i] for i in range(3)):
                sl = tuple(slice(o[i] - lo[i], o[i] - lo[i] + v.shape[i]) for i in range(3))
                values[sl] += v
        blocks.append((lo, values))
    return blocks


def mixture_density(boxes: Sequence[Box3D], scales, grid: VoxelGrid, truncation: float, rotated: bool = False) -> np.ndarray:
    """Un-normalised mixture on the full grid (zero outside every window)."""
    out = np.zeros(grid.dims)
    for origin, values in mixture_blocks(boxes, scales, grid, truncation, rotated):
        _paste(out, (0, 0, 0), origin, values)
    return out


def normalized_map(grid: VoxelGrid, category: str, blocks, epsilon_map: float) -> ClassProbMap:
    """Floor and normalise un-normalised blocks (modified in place)."""
    n_block = 0
    parts = []
    for _, values in blocks:
        values += epsilon_map
        parts.append(float(values.sum()))
        n_block += values.size
    total = math.fsum(parts) + epsilon_map * (grid.n_cells - n_block)
    for _, values in blocks:
        values /= total
    return ClassProbMap(grid, category, tuple((tuple(o), v) for o, v in blocks), epsilon_map / total)


# --------------------------------------------------------------- corrections


@dataclass(frozen=True)
class CorrectionFactors:
    distance: np.ndarray
    points: np.ndarray
    mode: str

    @property
    def scales(self) -> np.ndarray:
        if self.mode == "none":
            return np.ones_like(self.distance)
        if self.mode == "distance":
            return self.distance
        if self.mode == "points":
            return self.points
        if self.mode == "both":
            return self.distance * self.points
        raise ValueError(f"unknown correction mode {self.mode!r}")


def distance_corrections(boxes: Sequence[Box3D], u_min: float = 0.01) -> np.ndarray:
    """Horizontal range of each box over the largest range in the set.

    Values are clamped below by ``u_min`` so the covariance never collapses;
    if every box sits on the sensor axis all factors are 1.
    """
    if len(boxes) == 0:
        return np.zeros(0)
    dist = np.array([math.hypot(b.cx, b.cy) for b in boxes])
    far = dist.max()
    if far == 0.0:
        return np.ones(len(boxes))
    return np.maximum(dist / far, u_min)


def point_corrections_from_counts(counts, epsilon: float = 1e-9) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    return np.log((total + epsilon) / (counts + epsilon)) + 1.0


def point_corrections(boxes: Sequence[Box3D], points, epsilon: float = 1e-9) -> np.ndarray:
    """``ln((S + eps) / (N_k + eps)) + 1`` with ``N_k`` the points inside box k."""
    pts = as_points(points)
    counts = [int(np.count_nonzero(points_in_box_mask(pts, b))) for b in boxes]
    return point_corrections_from_counts(counts, epsilon)


def compute_corrections(boxes: Sequence[Box3D], points, config) -> CorrectionFactors:
    n = len(boxes)
    mode = config.correction_mode
    dist = distance_corrections(boxes, config.u_min) if mode in ("distance", "both") else np.ones(n)
    if mode in ("points", "both"):
        pts = np.zeros((0, 4)) if points is None else points
        pnt = point_corrections(boxes, pts, config.epsilon_points)
    else:
        pnt = np.ones(n)
    return CorrectionFactors(dist, pnt, mode)


def build_class_maps(detections, points, grid: VoxelGrid, config, scales=None) -> dict[str, ClassProbMap]:
    """One normalised map per category present in ``detections``.

    Corrections are computed over every box of the frame (unless ``scales``
    are supplied), then each category's boxes are summed into its own map.
    """
    boxes = list(getattr(detections, "boxes", detections))
    if not boxes:
        return {}
    if scales is None:
        scales = compute_corrections(boxes, points, config).scales
    scales = np.asarray(scales, dtype=np.float64)
    maps = {}
    for category in sorted({b.category for b in boxes}):
        idx = [i for i, b in enumerate(boxes) if b.category == category]
        blocks = mixture_blocks(
            [boxes[i] for i in idx], scales[idx], grid, config.sigma_truncation, config.rotated_covariance
        )
        maps[category] = normalized_map(grid, category, blocks, config.epsilon_map)
    return maps
