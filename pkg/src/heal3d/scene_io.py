"""File formats: velodyne clouds, detection JSON-lines, run config, score CSV.

Velodyne ``.bin`` files hold little-endian float32 quadruples
``(x, y, z, reflectance)`` with no header.  Detection files carry one JSON
object per line::

    {"frame_id": "000001", "boxes": [{"cx": 5, "cy": 0, "cz": -1, "l": 4,
     "w": 1.8, "h": 1.5, "yaw": 0, "class": "Car", "score": 0.9}]}
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry import Box3D

POINT_DTYPE = np.dtype("<f4")
BYTES_PER_POINT = 16
BOX_KEYS = ("cx", "cy", "cz", "l", "w", "h", "yaw", "class", "score")
CORRECTION_MODES = ("none", "distance", "points", "both")
KL_DENOMINATORS = ("union", "fixed")


class FormatError(ValueError):
    """Malformed input file.  ``location`` is a byte offset or line number."""

    def __init__(self, message: str, path=None, location=None):
        self.path = None if path is None else str(path)
        self.location = location
        prefix = f"{self.path}: " if self.path else ""
        super().__init__(prefix + message)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- point clouds


def read_velodyne_bin(path) -> np.ndarray:
    """Read a KITTI-style velodyne file into an ``(N, 4)`` float64 array."""
    raw = Path(path).read_bytes()
    n_full, rest = divmod(len(raw), BYTES_PER_POINT)
    if rest:
        offset = n_full * BYTES_PER_POINT
        raise FormatError(
            f"truncated point record at byte offset {offset} "
            f"(file length {len(raw)} is not a multiple of {BYTES_PER_POINT})",
            path,
            offset,
        )
    pts = np.frombuffer(raw, dtype=POINT_DTYPE).reshape(n_full, 4).astype(np.float64)
    bad = ~np.isfinite(pts).all(axis=1)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise FormatError(f"non-finite value in point {idx}", path, idx * BYTES_PER_POINT)
    return pts


def write_velodyne_bin(points, path) -> None:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] not in (3, 4):
        raise ValueError(f"points must have shape (N, 3) or (N, 4), got {arr.shape}")
    if arr.shape[1] == 3:
        arr = np.hstack([arr, np.zeros((len(arr), 1))])
    Path(path).write_bytes(arr.astype(POINT_DTYPE).tobytes())


# ------------------------------------------------------------------ detections


@dataclass(frozen=True)
class DetectionSet:
    frame: str
    boxes: tuple[Box3D, ...] = ()

    def __post_init__(self):
        if not self.frame:
            raise ValueError("frame id must be non-empty")
        object.__setattr__(self, "boxes", tuple(self.boxes))

    def __len__(self):
        return len(self.boxes)


def box_from_record(rec: dict) -> Box3D:
    missing = [k for k in BOX_KEYS if k not in rec]
    if missing:
        raise ValueError(f"box is missing field(s) {', '.join(missing)}")
    for key in ("l", "w", "h"):
        if not float(rec[key]) > 0:
            raise ValueError(f"box field '{key}' must be > 0, got {rec[key]!r}")
    return Box3D(
        cx=rec["cx"], cy=rec["cy"], cz=rec["cz"],
        l=rec["l"], w=rec["w"], h=rec["h"], yaw=rec["yaw"],
        category=rec["class"], confidence=rec["score"],
    )


def box_to_record(box: Box3D) -> dict:
    return {
        "cx": box.cx, "cy": box.cy, "cz": box.cz,
        "l": box.l, "w": box.w, "h": box.h, "yaw": box.yaw,
        "class": box.category, "score": box.confidence,
    }


def parse_detection_line(line: str) -> DetectionSet:
    rec = json.loads(line)
    if not isinstance(rec, dict):
        raise ValueError("record is not a JSON object")
    frame = rec.get("frame_id")
    if not isinstance(frame, str) or not frame:
        raise ValueError("'frame_id' must be a non-empty string")
    boxes = rec.get("boxes")
    if not isinstance(boxes, list):
        raise ValueError("'boxes' must be a list")
    parsed = []
    for i, b in enumerate(boxes):
        if not isinstance(b, dict):
            raise ValueError(f"box {i} is not a JSON object")
        try:
            parsed.append(box_from_record(b))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"frame {frame!r} box {i}: {exc}") from exc
    return DetectionSet(frame, tuple(parsed))


def read_detections(path) -> list[DetectionSet]:
    """Parse a detection JSON-lines file.  Blank lines are skipped."""
    sets: list[DetectionSet] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                det = parse_detection_line(line)
            except (json.JSONDecodeError, TypeError, ValueError) as exc:
                raise FormatError(f"line {lineno}: {exc}", path, lineno) from exc
            if det.frame in seen:
                raise FormatError(
                    f"line {lineno}: duplicate frame_id {det.frame!r} (first on line {seen[det.frame]})",
                    path,
                    lineno,
                )
            seen[det.frame] = lineno
            sets.append(det)
    return sets


def write_detections(sets: Iterable[DetectionSet], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for det in sets:
            rec = {"frame_id": det.frame, "boxes": [box_to_record(b) for b in det.boxes]}
            fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------- config


@dataclass
class RunConfig:
    """Scoring configuration.  Defaults cover the KITTI front-camera range."""

    x_min: float = 0.0
    x_max: float = 70.4
    y_min: float = -40.0
    y_max: float = 40.0
    z_min: float = -3.0
    z_max: float = 1.0
    voxel_size: float = 0.4
    correction_mode: str = "distance"
    epsilon_points: float = 1e-9
    epsilon_map: float = 1e-12
    u_min: float = 0.01
    sigma_truncation: float = 3.5
    n_query: int = 100
    categories: tuple[str, ...] = ("Car", "Pedestrian", "Cyclist")
    seed: int = 0
    rotated_covariance: bool = False
    kl_denominator: str = "union"

    def __post_init__(self):
        self.categories = tuple(self.categories)
        self.validate()

    @property
    def bounds(self) -> tuple[float, float, float, float, float, float]:
        return (self.x_min, self.x_max, self.y_min, self.y_max, self.z_min, self.z_max)

    def validate(self) -> None:
        for lo, hi in (("x_min", "x_max"), ("y_min", "y_max"), ("z_min", "z_max")):
            if not getattr(self, lo) < getattr(self, hi):
                raise ConfigError(f"{lo} must be < {hi}")
        if not self.voxel_size > 0:
            raise ConfigError("voxel_size must be > 0")
        if self.n_query < 1:
            raise ConfigError("n_query must be >= 1")
        if not 0.0 < self.u_min <= 1.0:
            raise ConfigError("u_min must lie in (0, 1]")
        if not self.epsilon_points > 0:
            raise ConfigError("epsilon_points must be > 0")
        if not self.epsilon_map > 0:
            raise ConfigError("epsilon_map must be > 0")
        if not self.sigma_truncation > 0:
            raise ConfigError("sigma_truncation must be > 0")
        if self.correction_mode not in CORRECTION_MODES:
            raise ConfigError(f"correction_mode must be one of {', '.join(CORRECTION_MODES)}")
        if self.kl_denominator not in KL_DENOMINATORS:
            raise ConfigError(f"kl_denominator must be one of {', '.join(KL_DENOMINATORS)}")
        if self.kl_denominator == "fixed" and not self.categories:
            raise ConfigError("kl_denominator = fixed needs a non-empty category list")


def parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_list(text: str) -> tuple[str, ...]:
    return tuple(item.strip() for item in text.split(",") if item.strip())


def parse_int_list(text: str) -> tuple[int, ...]:
    """Parse ``1,2,5`` or inclusive ranges like ``1-20`` (non-negative only)."""
    out: list[int] = []
    for item in parse_list(text):
        if "-" in item:
            lo, hi = item.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(item))
    return tuple(out)


def _converter(tp):
    if tp in (bool, "bool"):
        return parse_bool
    if tp in (int, "int"):
        return int
    if tp in (float, "float"):
        return float
    if tp in (str, "str"):
        return str
    if tp in ("tuple[int, ...]",):
        return parse_int_list
    return parse_list


def field_converters(cls) -> dict:
    return {f.name: _converter(f.type) for f in fields(cls) if f.init}


def parse_assignments(lines: Iterable[str], source: str = "<config>") -> dict[str, tuple[str, int]]:
    """Parse ``key = value`` lines into ``{key: (raw_value, lineno)}``."""
    out: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}: line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        if not key:
            raise ConfigError(f"{source}: line {lineno}: missing key")
        out[key] = (value, lineno)
    return out


def build_dataclass(cls, assignments: dict[str, tuple[str, int]], source: str = "<config>"):
    """Instantiate ``cls`` from parsed assignments, ignoring keys it lacks."""
    convs = field_converters(cls)
    kwargs = {}
    for key, (raw, lineno) in assignments.items():
        if key not in convs:
            continue
        try:
            kwargs[key] = convs[key](raw)
        except ValueError as exc:
            where = f"{source}: line {lineno}" if lineno else "command line"
            raise ConfigError(f"{where}: bad value for '{key}': {exc}") from exc
    return cls(**kwargs)


def read_assignments(path) -> dict[str, tuple[str, int]]:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        return parse_assignments(fh, str(path))


def read_config(path, extra_keys: Sequence[str] = ()) -> tuple[RunConfig, list[str]]:
    """Load a :class:`RunConfig`.  Returns the config and a list of warnings.

    Keys listed in ``extra_keys`` belong to another consumer of the same
    file and are not reported as unknown.
    """
    assignments = read_assignments(path)
    return config_from_assignments(assignments, str(path), extra_keys)


def config_from_assignments(assignments, source="<config>", extra_keys: Sequence[str] = ()):
    known = set(field_converters(RunConfig)) | set(extra_keys)
    warnings = [
        f"{source}: line {lineno}: unknown key '{key}' ignored"
        for key, (_, lineno) in assignments.items()
        if key not in known
    ]
    return build_dataclass(RunConfig, assignments, source), warnings


# ------------------------------------------------------------------- outputs


def score_csv_header(categories: Sequence[str]) -> list[str]:
    return ["frame_id", "heal_score", *[f"kl_{c}" for c in categories], "n_boxes_orig", "n_boxes_aug"]


def ranking_key(frame: str, score: float):
    return (-score, frame)


def write_score_csv(records, path, categories: Sequence[str] | None = None) -> None:
    """Write score records sorted by descending score, then ascending frame id.

    Category columns default to the sorted union of categories present in
    ``records``; a record without a category leaves the cell empty.
    """
    records = list(records)
    if categories is None:
        categories = sorted({c for r in records for c in r.kl})
    rows = sorted(records, key=lambda r: ranking_key(r.frame, r.heal_score))
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(score_csv_header(categories))
            for r in rows:
                writer.writerow(
                    [r.frame, repr(float(r.heal_score))]
                    + [repr(float(r.kl[c])) if c in r.kl else "" for c in categories]
                    + [r.n_boxes_orig, r.n_boxes_aug]
                )
    except OSError as exc:
        raise OSError(f"cannot write score CSV {path}: {exc}") from exc


def read_score_csv(path) -> list[tuple[str, float]]:
    """Read ``(frame_id, heal_score)`` pairs; duplicate frames are an error."""
    out: list[tuple[str, float]] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"frame_id", "heal_score"} <= set(reader.fieldnames):
            raise FormatError("missing frame_id/heal_score header", path, 1)
        for lineno, row in enumerate(reader, start=2):
            frame = row["frame_id"]
            if frame in seen:
                raise FormatError(f"line {lineno}: duplicate frame_id {frame!r}", path, lineno)
            try:
                score = float(row["heal_score"])
            except (TypeError, ValueError) as exc:
                raise FormatError(f"line {lineno}: bad heal_score {row['heal_score']!r}", path, lineno) from exc
            if not math.isfinite(score):
                raise FormatError(f"line {lineno}: non-finite heal_score", path, lineno)
            seen.add(frame)
            out.append((frame, score))
    return out


def write_frame_list(frames: Iterable[str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in frames:
            fh.write(f"{f}\n")


def read_frame_list(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def cloud_path(clouds_dir, frame: str) -> str:
    return os.path.join(clouds_dir, f"{frame}.bin")
