"""Head circumference from segmentation masks, and HC -> gestational age.

Per frame: boundary pixels of the head mask -> direct least-squares ellipse
fit -> Ramanujan perimeter in mm. Frames are aggregated with the 75th
percentile and converted to GA with a cubic growth curve (Hadlock 1984 by
default).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DegenerateInput,
    EmptyList,
    EmptyMask,
    MalformedFile,
    MissingFile,
    NonPositiveHC,
    NotAnEllipse,
    OutOfCurveRange,
)
from .frames import CaseRecord, HeadMask

HC_PERCENTILE = 75.0


@dataclass(frozen=True)
class Ellipse:
    center_x: float
    center_y: float
    a: float  # semi-major, pixels
    b: float  # semi-minor, pixels
    angle: float  # major-axis direction, radians in [0, pi)

    def __post_init__(self):
        if not (self.a >= self.b > 0):
            raise NotAnEllipse(f"invalid semi-axes a={self.a}, b={self.b}")


@dataclass(frozen=True)
class HeadCircumference:
    value: float  # mm
    frame_index: int


@dataclass(frozen=True)
class GaEstimate:
    ga_days: float
    hc_mm: float
    n_frames_used: int = 1


@dataclass(frozen=True)
class Excluded:
    """Aggregated HC fell outside the growth curve's validity limits."""

    hc_mm: float
    n_frames_used: int = 1
    reason: str = "excluded_out_of_curve"


@dataclass(frozen=True)
class NoHeadFrames:
    n_requested: int
    n_failed: int


# -- growth curve ------------------------------------------------------------

@dataclass(frozen=True)
class GrowthCurve:
    """GA_weeks = c0 + c1*HC + c2*HC^2 + c3*HC^3 with HC in cm."""

    name: str
    coefficients: tuple[float, float, float, float]
    hc_min_cm: float
    hc_max_cm: float

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if len(coeffs) != 4:
            raise ValueError("growth curve needs exactly 4 coefficients")
        object.__setattr__(self, "coefficients", coeffs)
        if not 0 < self.hc_min_cm < self.hc_max_cm:
            raise ValueError("need 0 < hc_min_cm < hc_max_cm")
        n = max(2, int(math.ceil((self.hc_max_cm - self.hc_min_cm) / 0.01)) + 1)
        ga = self.ga_weeks(np.linspace(self.hc_min_cm, self.hc_max_cm, n))
        if not np.all(np.diff(ga) > 0):
            raise ValueError(f"curve {self.name!r} is not strictly increasing on its limits")

    def ga_weeks(self, hc_cm):
        c0, c1, c2, c3 = self.coefficients
        return c0 + hc_cm * (c1 + hc_cm * (c2 + hc_cm * c3))

    @property
    def ga_days_range(self) -> tuple[float, float]:
        return 7.0 * self.ga_weeks(self.hc_min_cm), 7.0 * self.ga_weeks(self.hc_max_cm)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "coefficients": list(self.coefficients),
            "hc_min_cm": self.hc_min_cm,
            "hc_max_cm": self.hc_max_cm,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GrowthCurve":
        return cls(str(obj["name"]), tuple(obj["coefficients"]), float(obj["hc_min_cm"]), float(obj["hc_max_cm"]))


# Hadlock et al., Radiology 1984: MA = 8.96 + 0.540*HC + 0.0003*HC^3.
# Limits are the HCs at 12.0 and 40.0 menstrual weeks on that curve.
HADLOCK_1984 = GrowthCurve("hadlock1984-hc", (8.96, 0.540, 0.0, 0.0003), 5.54, 34.56)


def load_curve(path) -> GrowthCurve:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        return GrowthCurve.from_json(json.loads(path.read_text(encoding="utf-8")))
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedFile(f"{path}: {exc}") from None


def ga_from_hc(hc_mm: float, curve: GrowthCurve = HADLOCK_1984):
    if not (math.isfinite(hc_mm) and hc_mm > 0):
        raise NonPositiveHC(f"HC must be positive, got {hc_mm!r}")
    if not curve.hc_min_cm * 10.0 <= hc_mm <= curve.hc_max_cm * 10.0:
        return Excluded(hc_mm)
    return GaEstimate(7.0 * curve.ga_weeks(hc_mm / 10.0), hc_mm)


def hc_from_ga(ga_days: float, curve: GrowthCurve = HADLOCK_1984, tol_cm: float = 1e-9) -> float:
    """Invert the curve by bisection; returns HC in mm."""
    lo, hi = curve.hc_min_cm, curve.hc_max_cm
    ga_lo, ga_hi = curve.ga_days_range
    if not ga_lo <= ga_days <= ga_hi:
        raise OutOfCurveRange(f"GA {ga_days} days outside curve range [{ga_lo:.2f}, {ga_hi:.2f}]")
    while hi - lo > tol_cm:
        mid = 0.5 * (lo + hi)
        if 7.0 * curve.ga_weeks(mid) < ga_days:
            lo = mid
        else:
            hi = mid
    return 10.0 * 0.5 * (lo + hi)


# -- geometry ----------------------------------------------------------------

def extract_boundary(mask) -> np.ndarray:
    """Foreground pixels with a 4-neighbour in the background or off-image.

    Accepts a :class:`HeadMask` or a bare 2-D array. Returns an ``(n, 2)``
    array of ``(x, y)`` in row-major order.
    """
    fg = np.asarray(getattr(mask, "pixels", mask), dtype=bool)
    if not fg.any():
        raise EmptyMask("mask has no foreground pixels")
    p = np.pad(fg, 1, constant_values=False)
    interior = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    ys, xs = np.nonzero(fg & ~interior)
    return np.column_stack([xs, ys]).astype(np.float64)


def _conic_to_ellipse(conic) -> tuple[float, float, float, float, float]:
    A, B, C, D, E, F = conic
    quad = np.array([[A, B / 2.0], [B / 2.0, C]])
    try:
        center = np.linalg.solve(2.0 * quad, [-D, -E])
    except np.linalg.LinAlgError:
        raise NotAnEllipse("conic has no center") from None
    f0 = F + 0.5 * (D * center[0] + E * center[1])
    evals, evecs = np.linalg.eigh(quad)
    sq = -f0 / evals
    if not np.all(sq > 0):
        raise NotAnEllipse("conic is not a real ellipse")
    axes = np.sqrt(sq)
    major = int(np.argmax(axes))
    vx, vy = evecs[:, major]
    angle = math.atan2(vy, vx) % math.pi
    if angle >= math.pi:
        angle = 0.0
    return float(center[0]), float(center[1]), float(axes[major]), float(axes[1 - major]), angle


def fit_ellipse(points) -> Ellipse:
    """Direct least-squares ellipse fit (Fitzgibbon; Halir-Flusser partitioning).

    Points are centered and scaled before fitting for conditioning.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 6:
        raise DegenerateInput("need at least 6 points")
    mean = pts.mean(axis=0)
    centered = pts - mean
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[0] == 0 or sv[1] <= 1e-12 * sv[0]:
        raise DegenerateInput("points are collinear")
    scale = math.sqrt(np.mean(np.sum(centered**2, axis=1)))
    x, y = (centered / scale).T

    D1 = np.column_stack([x * x, x * y, y * y])
    D2 = np.column_stack([x, y, np.ones_like(x)])
    S1, S2, S3 = D1.T @ D1, D1.T @ D2, D2.T @ D2
    try:
        T = -np.linalg.solve(S3, S2.T)
    except np.linalg.LinAlgError:
        raise DegenerateInput("singular scatter matrix") from None
    M = S1 + S2 @ T
    # premultiply by the inverse of the constraint matrix [[0,0,2],[0,-1,0],[2,0,0]]
    M = np.array([M[2] / 2.0, -M[1], M[0] / 2.0])
    evals, evecs = np.linalg.eig(M)
    evals, evecs = evals.real, evecs.real
    cond = 4.0 * evecs[0] * evecs[2] - evecs[1] ** 2
    ok = np.flatnonzero(cond > 0)
    if ok.size == 0:
        raise NotAnEllipse("no eigenvector satisfies the ellipse constraint")
    pick = ok[np.argmin(np.abs(evals[ok]))]
    a1 = evecs[:, pick]
    conic = np.concatenate([a1, T @ a1])
    cx, cy, a, b, angle = _conic_to_ellipse(conic)
    return Ellipse(cx * scale + float(mean[0]), cy * scale + float(mean[1]), a * scale, b * scale, angle)


def ramanujan_perimeter(a: float, b: float) -> float:
    """Ramanujan's second approximation for the ellipse perimeter."""
    h = ((a - b) / (a + b)) ** 2
    return math.pi * (a + b) * (1.0 + 3.0 * h / (10.0 + math.sqrt(4.0 - 3.0 * h)))


def circumference_mm(e: Ellipse, pixel_spacing: float) -> float:
    return ramanujan_perimeter(e.a * pixel_spacing, e.b * pixel_spacing)


def aggregate_hc(hcs) -> float:
    """75th percentile, linear interpolation at rank 0.75 * (n - 1)."""
    values = [h.value if isinstance(h, HeadCircumference) else float(h) for h in hcs]
    if not values:
        raise EmptyList("no head circumferences to aggregate")
    return float(np.percentile(np.sort(values), HC_PERCENTILE, method="linear"))


def measure_mask(mask: HeadMask) -> float:
    """HC in mm for one mask; raises EmptyMask/DegenerateInput/NotAnEllipse."""
    return circumference_mm(fit_ellipse(extract_boundary(mask)), mask.pixel_spacing)


def measure_frames(case: CaseRecord, head_frames) -> tuple[list[HeadCircumference], int]:
    """Per-frame HCs for the requested frames, plus the number that failed."""
    hcs = []
    failed = 0
    for idx in sorted(head_frames):
        mask = case.masks.get(idx)
        if mask is None:
            failed += 1
            continue
        try:
            hcs.append(HeadCircumference(measure_mask(mask), idx))
        except DataError:
            failed += 1
    return hcs, failed


def measure_case(case: CaseRecord, head_frames, curve: GrowthCurve = HADLOCK_1984):
    """Fit every head frame, aggregate, and convert to GA.

    Returns a :class:`GaEstimate`, :class:`Excluded` or :class:`NoHeadFrames`.
    """
    head_frames = list(head_frames)
    hcs, failed = measure_frames(case, head_frames)
    if not hcs:
        return NoHeadFrames(len(head_frames), failed)
    outcome = ga_from_hc(aggregate_hc(hcs), curve)
    return replace(outcome, n_frames_used=len(hcs))
