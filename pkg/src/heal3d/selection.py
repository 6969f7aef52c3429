"""Query-set selection and active-learning bookkeeping.

Rankings are always total orders: descending score, ties broken by
ascending frame id.  ``random_select`` draws from numpy's PCG64 generator
(``numpy.random.default_rng``), whose stream is fixed across platforms for a
given seed; the pool is sorted first so the result does not depend on the
iteration order of the input collection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .scene_io import DetectionSet


class StateError(ValueError):
    pass


def rank_frames(scores: Mapping[str, float] | Iterable[tuple[str, float]]) -> list[str]:
    items = scores.items() if isinstance(scores, Mapping) else scores
    return [f for f, _ in sorted(items, key=lambda kv: (-kv[1], kv[0]))]


def select_top_k(records, k: int) -> list[str]:
    """Frames of the ``k`` highest-scoring records, best first.

    ``records`` may be score records (anything with ``frame`` and
    ``heal_score``) or ``(frame, score)`` pairs.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pairs = [(r.frame, r.heal_score) if hasattr(r, "heal_score") else (r[0], r[1]) for r in records]
    return rank_frames(pairs)[:k]


def random_select(pool: Iterable[str], k: int, seed: int) -> list[str]:
    frames = sorted(pool)
    k = max(0, min(k, len(frames)))
    if k == 0:
        return []
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(frames), size=k, replace=False)
    return [frames[i] for i in picks]


def bernoulli_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log(p) - (1.0 - p) * math.log(1.0 - p)


def frame_entropy(det: DetectionSet) -> float:
    """Mean binary entropy of the box confidences (0 for an empty frame)."""
    if not det.boxes:
        return 0.0
    return math.fsum(bernoulli_entropy(b.confidence) for b in det.boxes) / len(det.boxes)


def entropy_select(detections: Iterable[DetectionSet], k: int) -> list[str]:
    if k <= 0:
        return []
    return rank_frames([(d.frame, frame_entropy(d)) for d in detections])[:k]


@dataclass(frozen=True)
class ALState:
    labeled: frozenset[str]
    unlabeled: frozenset[str]
    n_query: int = 100
    round: int = 0
    budget_frames: int | None = None
    history: tuple[tuple[str, ...], ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "labeled", frozenset(self.labeled))
        object.__setattr__(self, "unlabeled", frozenset(self.unlabeled))
        object.__setattr__(self, "history", tuple(tuple(h) for h in self.history))
        overlap = self.labeled & self.unlabeled
        if overlap:
            raise StateError(f"frames both labeled and unlabeled: {sorted(overlap)[:5]}")
        if self.n_query < 1:
            raise StateError("n_query must be >= 1")

    @classmethod
    def initial(cls, labeled: Iterable[str], unlabeled: Iterable[str], n_query: int = 100,
                budget_frames: int | None = None, seed: int = 0) -> "ALState":
        return cls(frozenset(labeled), frozenset(unlabeled), n_query, 0, budget_frames, (), seed)

    @property
    def n_selected(self) -> int:
        return sum(len(h) for h in self.history)

    @property
    def remaining_budget(self) -> int | None:
        if self.budget_frames is None:
            return None
        return max(0, self.budget_frames - self.n_selected)


def advance_round(state: ALState, selected: Sequence[str]) -> ALState:
    """Move ``selected`` from the pool into the labeled set.

    Once the frame budget is spent further selections are dropped (in the
    given order) rather than labeled.
    """
    selected = list(selected)
    if len(set(selected)) != len(selected):
        raise StateError("selection contains duplicate frames")
    if len(selected) > state.n_query:
        raise StateError(f"selected {len(selected)} frames, more than n_query = {state.n_query}")
    for f in selected:
        if f in state.labeled:
            raise StateError(f"frame {f!r} is already labeled")
        if f not in state.unlabeled:
            raise StateError(f"frame {f!r} is not in the unlabeled pool")
    remaining = state.remaining_budget
    if remaining is not None:
        selected = selected[:remaining]
    chosen = frozenset(selected)
    return replace(
        state,
        labeled=state.labeled | chosen,
        unlabeled=state.unlabeled - chosen,
        round=state.round + 1,
        history=state.history + (tuple(selected),),
    )


def round_summary(state: ALState) -> str:
    last = state.history[-1] if state.history else ()
    return (
        f"round={state.round} selected={len(last)} labeled={len(state.labeled)} "
        f"unlabeled={len(state.unlabeled)} frames={','.join(last)}"
    )


def append_round_log(state: ALState, path) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(round_summary(state) + "\n")
