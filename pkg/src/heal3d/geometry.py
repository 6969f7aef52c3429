"""Rigid transforms for the 180 degree z-axis flip and oriented box containment.

Point clouds are plain ``(N, 3)`` or ``(N, 4)`` float arrays with columns
``x, y, z[, reflectance]`` in the sensor frame.  Boxes use the usual LiDAR
benchmark convention: ``l`` runs along the box-local x axis at yaw 0, ``w``
along local y, ``h`` along z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_to_pi(angle: float) -> float:
    """Map an angle onto the half-open interval (-pi, pi]."""
    if not math.isfinite(angle):
        raise ValueError(f"angle must be finite, got {angle!r}")
    wrapped = math.fmod(angle, TWO_PI)
    if wrapped > math.pi:
        wrapped -= TWO_PI
    elif wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


@dataclass(frozen=True)
class Box3D:
    cx: float
    cy: float
    cz: float
    l: float
    w: float
    h: float
    yaw: float = 0.0
    category: str = "Car"
    confidence: float = 1.0

    def __post_init__(self):
        for name in ("cx", "cy", "cz", "l", "w", "h", "yaw", "confidence"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"box field '{name}' must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        for name in ("l", "w", "h"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"box field '{name}' must be > 0, got {getattr(self, name)!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"box field 'confidence' must lie in [0, 1], got {self.confidence!r}")
        object.__setattr__(self, "yaw", wrap_to_pi(self.yaw))
        object.__setattr__(self, "category", str(self.category))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.cz])

    @property
    def dims(self) -> np.ndarray:
        return np.array([self.l, self.w, self.h])

    @property
    def horizontal_distance(self) -> float:
        return math.hypot(self.cx, self.cy)

    def with_category(self, category: str) -> "Box3D":
        return replace(self, category=category)

    def translated(self, dx: float = 0.0, dy: float = 0.0, dz: float = 0.0) -> "Box3D":
        return replace(self, cx=self.cx + dx, cy=self.cy + dy, cz=self.cz + dz)


def as_points(points) -> np.ndarray:
    """Validate a point array and return it as float64 with 3 or 4 columns."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, arr.shape[1] if arr.ndim == 2 and arr.shape[1] in (3, 4) else 4)
    if arr.ndim != 2 or arr.shape[1] not in (3, 4):
        raise ValueError(f"points must have shape (N, 3) or (N, 4), got {arr.shape}")
    bad = ~np.isfinite(arr[:, :3]).all(axis=1)
    if bad.any():
        raise ValueError(f"non-finite coordinate in point {int(np.flatnonzero(bad)[0])}")
    return arr


def rotate_points_pi_z(points) -> np.ndarray:
    """Rotate points by pi about the z axis: (x, y, z) -> (-x, -y, z).

    Extra columns (reflectance) and row order are preserved.  Returns a copy.
    """
    out = as_points(points).copy()
    out[:, 0] = -out[:, 0]
    out[:, 1] = -out[:, 1]
    return out


def rotate_box_pi_z(box: Box3D) -> Box3D:
    return replace(box, cx=-box.cx, cy=-box.cy, yaw=wrap_to_pi(box.yaw + math.pi))


def points_in_box_mask(points, box: Box3D) -> np.ndarray:
    """Boolean mask of points inside ``box`` (faces count as inside)."""
    pts = as_points(points)
    if len(pts) == 0:
        return np.zeros(0, dtype=bool)
    dx = pts[:, 0] - box.cx
    dy = pts[:, 1] - box.cy
    dz = pts[:, 2] - box.cz
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    # rotate by -yaw into the box frame
    local_x = c * dx + s * dy
    local_y = -s * dx + c * dy
    return (
        (np.abs(local_x) <= 0.5 * box.l)
        & (np.abs(local_y) <= 0.5 * box.w)
        & (np.abs(dz) <= 0.5 * box.h)
    )


def count_points_in_box(points, box: Box3D) -> int:
    return int(np.count_nonzero(points_in_box_mask(points, box)))


def transform_box(box: Box3D, yaw: float, tx: float = 0.0, ty: float = 0.0, tz: float = 0.0) -> Box3D:
    """Apply a rotation about z followed by a translation to a box."""
    c, s = math.cos(yaw), math.sin(yaw)
    return replace(
        box,
        cx=c * box.cx - s * box.cy + tx,
        cy=s * box.cx + c * box.cy + ty,
        cz=box.cz + tz,
        yaw=wrap_to_pi(box.yaw + yaw),
    )


def transform_points(points, yaw: float, tx: float = 0.0, ty: float = 0.0, tz: float = 0.0) -> np.ndarray:
    out = as_points(points).copy()
    c, s = math.cos(yaw), math.sin(yaw)
    x, y = out[:, 0].copy(), out[:, 1].copy()
    out[:, 0] = c * x - s * y + tx
    out[:, 1] = s * x + c * y + ty
    out[:, 2] += tz
    return out
