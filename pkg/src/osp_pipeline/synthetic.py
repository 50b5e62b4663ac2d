"""Synthetic sweep-protocol recordings with known count, presentation and GA.

A recording is six sweeps separated by Detached runs. In "transverse" sweeps
(position 0 = caudal end) the fetus shows up as a Head interval next to a
TorsoTransverse interval; cephalic fetuses have the head on the caudal side,
breech fetuses on the cranial side. "Sagittal" sweeps show a FetusSagittal
interval. Frames in the middle of each head interval get elliptical head
masks whose perimeter matches the HC of the case's gestational age.

Same-presentation twins put their two (disjoint) head intervals right next to
each other on the same side of the torso, which makes them hard to tell
apart from a singleton with a long head interval; that is deliberate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import frames as fio
from .biometry import HADLOCK_1984, GrowthCurve, hc_from_ga, ramanujan_perimeter
from .errors import MalformedFile, MissingFile
from .frames import N_CLASSES, CaseRecord, FrameClass, FrameProbabilitySequence, GroundTruth, HeadMask

H, T, S, D, B = (int(c) for c in FrameClass)

SCENARIO_KINDS = ("singleton_cephalic", "singleton_breech", "twin_discordant", "twin_same_presentation")
DEFAULT_ROLES = ("transverse",) * 3 + ("sagittal",) * 3


@dataclass(frozen=True)
class Scenario:
    fetus_count: int
    presentations: tuple[str, ...]  # one entry per fetus
    ga_days: float
    label_noise: float = 0.0
    mask_noise_px: float = 0.0
    frames_per_sweep: tuple[int, int] = (150, 400)
    pixel_spacing: float = 0.2
    sweep_roles: tuple[str, ...] = DEFAULT_ROLES
    max_masks: int = 8
    detached_frames: tuple[int, int] = (10, 30)

    def __post_init__(self):
        if self.fetus_count not in (1, 2) or len(self.presentations) != self.fetus_count:
            raise ValueError("need one presentation per fetus, 1 or 2 fetuses")
        if any(p not in ("cephalic", "breech") for p in self.presentations):
            raise ValueError(f"bad presentations {self.presentations}")
        if not 0.0 <= self.label_noise < 0.5:
            raise ValueError("label_noise must lie in [0, 0.5)")
        if self.mask_noise_px < 0 or not self.pixel_spacing > 0:
            raise ValueError("mask_noise_px must be >= 0 and pixel_spacing > 0")
        if len(self.sweep_roles) != 6 or any(r not in ("transverse", "sagittal") for r in self.sweep_roles):
            raise ValueError("sweep_roles must name 6 sweeps, each 'transverse' or 'sagittal'")
        lo, hi = self.frames_per_sweep
        if not 50 <= lo <= hi:
            raise ValueError("frames_per_sweep must satisfy 50 <= lo <= hi")
        if self.detached_frames[0] < 10 or self.detached_frames[0] > self.detached_frames[1]:
            raise ValueError("detached runs must be at least 10 frames")

    @property
    def kind(self) -> str:
        if self.fetus_count == 1:
            return f"singleton_{self.presentations[0]}"
        same = self.presentations[0] == self.presentations[1]
        return "twin_same_presentation" if same else "twin_discordant"


@dataclass(frozen=True, eq=False)
class SyntheticCase:
    case: CaseRecord
    scenario: Scenario
    seed: tuple[int, ...]


# -- layout --------------------------------------------------------------------

def _span(lo: float, hi: float, n: int) -> tuple[int, int]:
    a = min(max(int(round(lo * n)), 0), n - 1)
    b = min(max(int(round(hi * n)), a + 1), n)
    return a, b


def _mirror(iv: tuple[float, float]) -> tuple[float, float]:
    return 1.0 - iv[1], 1.0 - iv[0]


def _transverse_layout(n: int, scenario: Scenario, rng: np.random.Generator):
    """Labels for one transverse sweep plus the head intervals (frame spans)."""
    labels = np.full(n, B, dtype=np.int64)
    heads, torsos = [], []
    kind = scenario.kind
    if kind.startswith("singleton") or kind == "twin_discordant":
        for pres in scenario.presentations:
            h0 = rng.uniform(0.08, 0.18)
            hl = rng.uniform(0.12, 0.20)
            t0 = h0 + hl + rng.uniform(0.0, 0.03)
            head, torso = (h0, h0 + hl), (t0, t0 + rng.uniform(0.25, 0.35))
            if pres == "breech":
                head, torso = _mirror(head), _mirror(torso)
            heads.append(head)
            torsos.append(torso)
    else:
        h0 = rng.uniform(0.06, 0.14)
        hl1, hl2 = rng.uniform(0.06, 0.10, size=2)
        gap = int(rng.integers(1, 5)) / n
        first = (h0, h0 + hl1)
        second = (first[1] + gap, first[1] + gap + hl2)
        t0 = second[1] + rng.uniform(0.0, 0.03)
        torso = (t0, t0 + rng.uniform(0.25, 0.35))
        heads, torsos = [first, second], [torso]
        if scenario.presentations[0] == "breech":
            heads = [_mirror(second), _mirror(first)]
            torsos = [_mirror(torso)]
    for iv in torsos:
        a, b = _span(*iv, n)
        labels[a:b] = T
    head_spans = []
    for iv in heads:
        a, b = _span(*iv, n)
        labels[a:b] = H
        head_spans.append((a, b))
    return labels, head_spans


def _sagittal_layout(n: int, rng: np.random.Generator):
    labels = np.full(n, B, dtype=np.int64)
    a, b = _span(rng.uniform(0.15, 0.30), rng.uniform(0.70, 0.85), n)
    labels[a:b] = S
    return labels


# -- masks -----------------------------------------------------------------------

def render_head_mask(a_px: float, b_px: float, angle: float, rng: np.random.Generator, noise_px: float = 0.0, margin: int = 8) -> np.ndarray:
    """Rasterise a filled ellipse (pixel centers inside -> 1).

    With ``noise_px > 0`` the boundary is displaced radially by a smooth random
    field (harmonics 2..6) whose RMS is ``noise_px``.
    """
    c, s = math.cos(angle), math.sin(angle)
    hx = math.sqrt((a_px * c) ** 2 + (b_px * s) ** 2)
    hy = math.sqrt((a_px * s) ** 2 + (b_px * c) ** 2)
    pad = margin + 4.0 * noise_px
    w = max(fio.MIN_MASK_SIDE, int(math.ceil(2 * (hx + pad))))
    h = max(fio.MIN_MASK_SIDE, int(math.ceil(2 * (hy + pad))))
    cx = (w - 1) / 2.0 + rng.uniform(-0.5, 0.5)
    cy = (h - 1) / 2.0 + rng.uniform(-0.5, 0.5)
    yy, xx = np.mgrid[0:h, 0:w]
    dx, dy = xx - cx, yy - cy
    u = dx * c + dy * s
    v = -dx * s + dy * c
    # normalised elliptical radius: a pixel at distance rho*R(phi) along its ray
    rho = np.sqrt((u / a_px) ** 2 + (v / b_px) ** 2)
    mask = rho <= 1.0
    if noise_px <= 0:
        return mask.astype(np.uint8)
    ks = np.arange(2, 7)
    alpha, beta = rng.normal(0.0, noise_px / math.sqrt(ks.size), size=(2, ks.size))
    band = np.abs(rho - 1.0) <= (4.0 * noise_px + 2.0) / b_px
    ub, vb, rb = u[band], v[band], rho[band]
    phi = np.arctan2(vb, ub)
    radius = a_px * b_px / np.sqrt((b_px * np.cos(phi)) ** 2 + (a_px * np.sin(phi)) ** 2)
    kphi = ks[:, None] * phi
    jitter = alpha @ np.cos(kphi) + beta @ np.sin(kphi)
    mask[band] = rb * radius <= radius + jitter
    return mask.astype(np.uint8)


def _emit_probabilities(labels: np.ndarray, noise: float, rng: np.random.Generator) -> np.ndarray:
    n = labels.size
    probs = np.full((n, N_CLASSES), noise / (N_CLASSES - 1))
    probs[np.arange(n), labels] = 1.0 - noise
    if noise > 0:
        flips = np.flatnonzero(rng.random(n) < noise)
        other = (labels[flips] + rng.integers(1, N_CLASSES, size=flips.size)) % N_CLASSES
        probs[flips] = 0.0
        probs[flips, other] = 1.0
    return probs


def generate_case(s: Scenario, seed, case_id: str = "synthetic", curve: GrowthCurve = HADLOCK_1984) -> SyntheticCase:
    """Build one recording for scenario ``s``; identical output for identical seed."""
    seed = (int(seed),) if np.isscalar(seed) else tuple(int(x) for x in seed)
    rng = np.random.default_rng(list(seed))
    hc_mm = hc_from_ga(s.ga_days, curve)

    parts = [np.full(int(rng.integers(s.detached_frames[0], s.detached_frames[1] + 1)), D)]
    head_spans = []
    offset = parts[0].size
    for role in s.sweep_roles:
        n = int(rng.integers(s.frames_per_sweep[0], s.frames_per_sweep[1] + 1))
        if role == "transverse":
            lab, spans = _transverse_layout(n, s, rng)
            head_spans += [(offset + a, offset + b) for a, b in spans]
        else:
            lab = _sagittal_layout(n, rng)
        gap = np.full(int(rng.integers(s.detached_frames[0], s.detached_frames[1] + 1)), D)
        parts += [lab, gap]
        offset += n + gap.size
    labels = np.concatenate(parts)
    probs = _emit_probabilities(labels, s.label_noise, rng)

    # middle half of each head interval: head completely in view
    eligible = []
    for a, b in head_spans:
        q = (b - a) // 4
        eligible.extend(range(a + q, b - q))
    if len(eligible) > s.max_masks:
        pick = np.unique(np.round(np.linspace(0, len(eligible) - 1, s.max_masks)).astype(int))
        eligible = [eligible[i] for i in pick]
    ecc = rng.uniform(0.6, 0.95)
    ratio = math.sqrt(1.0 - ecc * ecc)
    a_mm = hc_mm / ramanujan_perimeter(1.0, ratio)
    a_px, b_px = a_mm / s.pixel_spacing, a_mm * ratio / s.pixel_spacing
    masks = {
        idx: HeadMask(render_head_mask(a_px, b_px, rng.uniform(0.0, math.pi), rng, s.mask_noise_px), s.pixel_spacing)
        for idx in eligible
    }
    truth = GroundTruth(s.fetus_count, s.presentations[0] if s.fetus_count == 1 else None, float(s.ga_days))
    record = CaseRecord(case_id, FrameProbabilitySequence(probs), masks, s.pixel_spacing, truth, s.kind)
    return SyntheticCase(record, s, seed)


# -- corpora -------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusSpec:
    counts: dict = field(default_factory=dict)
    seed: int = 42
    label_noise: float = 0.0
    mask_noise_px: float = 0.0
    ga_days_range: tuple[float, float] = (98.0, 280.0)
    pixel_spacing: float = 0.2
    frames_per_sweep: tuple[int, int] = (150, 400)
    max_masks: int = 8
    # per-fetus P(cephalic) for the generic "twin" count
    twin_cephalic_prob: float = 0.6

    def __post_init__(self):
        for k, v in self.counts.items():
            if k not in SCENARIO_KINDS + ("twin",):
                raise ValueError(f"unknown scenario class {k!r}")
            if not isinstance(v, int) or v < 0:
                raise ValueError(f"count for {k!r} must be a non-negative integer")

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def load_corpus_spec(path) -> CorpusSpec:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(obj, dict) or not isinstance(obj.get("counts"), dict):
            raise ValueError("spec must be an object with a 'counts' object")
        extra = {}
        for key in ("ga_days_range", "frames_per_sweep"):
            if key in obj:
                extra[key] = tuple(obj[key])
        for key in ("pixel_spacing", "max_masks", "twin_cephalic_prob"):
            if key in obj:
                extra[key] = obj[key]
        return CorpusSpec(
            counts=dict(obj["counts"]),
            seed=int(obj.get("seed", 42)),
            label_noise=float(obj.get("label_noise", 0.0)),
            mask_noise_px=float(obj.get("mask_noise_px", 0.0)),
            **extra,
        )
    except (ValueError, TypeError, KeyError) as exc:
        raise MalformedFile(f"{path}: {exc}") from None


def _presentations_for(kind: str, rng: np.random.Generator, p_cephalic: float) -> tuple[str, ...]:
    if kind == "singleton_cephalic":
        return ("cephalic",)
    if kind == "singleton_breech":
        return ("breech",)
    if kind == "twin_discordant":
        return ("cephalic", "breech")
    if kind == "twin_same_presentation":
        pres = "cephalic" if rng.random() < 0.75 else "breech"
        return (pres, pres)
    return tuple("cephalic" if rng.random() < p_cephalic else "breech" for _ in range(2))


def corpus_plan(spec: CorpusSpec) -> list[tuple[str, Scenario, tuple[int, int]]]:
    """``(case_id, scenario, seed)`` for every case, without generating anything."""
    kinds = [k for k in SCENARIO_KINDS + ("twin",) for _ in range(spec.counts.get(k, 0))]
    kinds = [kinds[i] for i in np.random.default_rng(spec.seed).permutation(len(kinds))]
    lo, hi = spec.ga_days_range
    plan = []
    for i, kind in enumerate(kinds):
        draw = np.random.default_rng([spec.seed, i, 1])
        pres = _presentations_for(kind, draw, spec.twin_cephalic_prob)
        scenario = Scenario(
            fetus_count=len(pres),
            presentations=pres,
            ga_days=float(draw.uniform(lo, hi)),
            label_noise=spec.label_noise,
            mask_noise_px=spec.mask_noise_px,
            frames_per_sweep=tuple(spec.frames_per_sweep),
            pixel_spacing=spec.pixel_spacing,
            max_masks=spec.max_masks,
        )
        plan.append((f"case_{i:04d}", scenario, (spec.seed, i)))
    return plan


def generate_corpus(spec: CorpusSpec, curve: GrowthCurve = HADLOCK_1984) -> list[SyntheticCase]:
    return [generate_case(s, seed, case_id, curve) for case_id, s, seed in corpus_plan(spec)]


def write_case(case: SyntheticCase | CaseRecord, directory) -> Path:
    record = case.case if isinstance(case, SyntheticCase) else case
    return fio.write_case(record, directory)


# -- oracle ----------------------------------------------------------------------

def rule_based_presentation(grid) -> str | None:
    """Head-vs-torso mean position over sweeps that show both.

    Returns ``None`` when no sweep shows both a head and a torso.
    """
    labels = grid.labels()
    votes = 0
    for row in labels:
        head = np.flatnonzero(row == H)
        torso = np.flatnonzero(row == T)
        if head.size and torso.size:
            votes += 1 if head.mean() < torso.mean() else -1
    if votes == 0:
        return None
    return "cephalic" if votes > 0 else "breech"
