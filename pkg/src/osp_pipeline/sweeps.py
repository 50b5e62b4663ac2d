"""Split a frame stream into the six protocol sweeps and resample each one.

Frames whose argmax class is Detached (transducer off the abdomen) separate
the sweeps. Each sweep is then resampled to a fixed number of positions with
nearest-neighbour index mapping, giving a 6 x 100 x 5 probability grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyRange, EvenWindow, InsufficientSweeps
from .frames import N_CLASSES, FrameClass, FrameProbabilitySequence

N_SWEEPS = 6
GRID_LENGTH = 100


@dataclass(frozen=True)
class SegmentationConfig:
    window: int = 5
    min_run: int = 20
    target: int = GRID_LENGTH

    def to_json(self) -> dict:
        return {"window": self.window, "min_run": self.min_run, "target": self.target}

    @classmethod
    def from_json(cls, obj: dict) -> "SegmentationConfig":
        return cls(int(obj.get("window", 5)), int(obj.get("min_run", 20)), int(obj.get("target", GRID_LENGTH)))


@dataclass(frozen=True, order=True)
class SweepRange:
    start: int  # inclusive
    end: int  # exclusive

    def __post_init__(self):
        if not self.start < self.end:
            raise EmptyRange(f"empty sweep range [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True, eq=False)
class SweepGrid:
    grid: np.ndarray  # (6, target, 5) probabilities
    source_ranges: tuple[SweepRange, ...]
    source_indices: np.ndarray  # (6, target) original frame indices

    def labels(self) -> np.ndarray:
        """Hard labels per grid cell (lowest class code on ties)."""
        return np.argmax(self.grid, axis=2)


def label_frames(probs: FrameProbabilitySequence) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class code on ties
    return np.argmax(probs.probabilities, axis=1).astype(np.int64)


def smooth_labels(labels, window: int) -> np.ndarray:
    """Centered mode filter with truncated windows at the edges.

    When several classes share the maximal count the center frame keeps its
    own label if it is among them, otherwise the lowest tied class wins.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if window < 1 or window % 2 == 0:
        raise EvenWindow(f"window must be odd and >= 1, got {window}")
    if window == 1 or labels.size == 0:
        return labels.copy()
    n = labels.size
    half = window // 2
    onehot = np.zeros((n + 1, N_CLASSES), dtype=np.int64)
    onehot[np.arange(1, n + 1), labels] = 1
    cum = np.cumsum(onehot, axis=0)
    lo = np.clip(np.arange(n) - half, 0, n)
    hi = np.clip(np.arange(n) + half + 1, 0, n)
    counts = cum[hi] - cum[lo]
    best = counts.max(axis=1)
    out = np.argmax(counts, axis=1)
    center_tied = counts[np.arange(n), labels] == best
    out[center_tied] = labels[center_tied]
    return out


def find_runs(labels) -> list[SweepRange]:
    """Maximal runs of consecutive non-Detached frames."""
    attached = np.asarray(labels) != FrameClass.DETACHED
    padded = np.concatenate([[False], attached, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [SweepRange(int(s), int(e)) for s, e in zip(edges[::2], edges[1::2])]


def segment_sweeps(labels, min_run: int) -> list[SweepRange]:
    if min_run < 1:
        raise ValueError("min_run must be >= 1")
    runs = [r for r in find_runs(labels) if len(r) >= min_run]
    if len(runs) < N_SWEEPS:
        raise InsufficientSweeps(len(runs))
    if len(runs) > N_SWEEPS:
        # longest first, earlier run wins a tie; then back to temporal order
        ranked = sorted(range(len(runs)), key=lambda i: (-len(runs[i]), i))
        runs = [runs[i] for i in sorted(ranked[:N_SWEEPS])]
    return runs


def resample_indices(n: int, target: int = GRID_LENGTH) -> np.ndarray:
    """Offsets ``round(j * (n - 1) / (target - 1))``, rounding half away from zero.

    Integer arithmetic keeps the .5 cases exact.
    """
    if n < 1:
        raise EmptyRange("cannot resample an empty range")
    if target < 2:
        raise ValueError("target must be >= 2")
    j = np.arange(target, dtype=np.int64)
    num = j * (n - 1)
    den = target - 1
    return (2 * num + den) // (2 * den)


def resample_sweep(probs: FrameProbabilitySequence, rng: SweepRange, target: int = GRID_LENGTH):
    """Nearest-neighbour resample of one sweep.

    Returns ``(rows, source_indices)`` with shapes ``(target, 5)`` and ``(target,)``.
    """
    if rng.end > len(probs):
        raise EmptyRange(f"range {rng} exceeds sequence of {len(probs)} frames")
    idx = rng.start + resample_indices(len(rng), target)
    return probs.probabilities[idx], idx


def build_sweep_grid(probs: FrameProbabilitySequence, config: SegmentationConfig = SegmentationConfig()) -> SweepGrid:
    labels = smooth_labels(label_frames(probs), config.window)
    ranges = segment_sweeps(labels, config.min_run)
    rows, indices = zip(*(resample_sweep(probs, r, config.target) for r in ranges))
    return SweepGrid(np.stack(rows), tuple(ranges), np.stack(indices))
