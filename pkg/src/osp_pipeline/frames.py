"""On-disk case data: per-frame class probabilities, head masks and metadata.

A case directory looks like::

    case_0007/
        frames.csv        frame,p_head,p_torso_t,p_fetus_sag,p_detached,p_background
        meta.json         {"case_id", "pixel_spacing_mm", "truth"}
        masks/000042.pgm  binary P5, one file per frame that has a head mask
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import (
    IoFailure,
    MalformedFile,
    MalformedRow,
    MissingFile,
    NonContiguousIndex,
    NotPGM,
    OrphanMask,
    TooSmall,
    UnnormalizedProbabilities,
)

CSV_HEADER = ("frame", "p_head", "p_torso_t", "p_fetus_sag", "p_detached", "p_background")
RENORMALIZE_TOL = 1e-3
# rows closer to 1 than this are taken as already normalized
EXACT_TOL = 1e-12
MIN_MASK_SIDE = 8
MASK_NAME = re.compile(r"^(\d{6})\.pgm$")


class FrameClass(IntEnum):
    HEAD = 0
    TORSO_TRANSVERSE = 1
    FETUS_SAGITTAL = 2
    DETACHED = 3
    BACKGROUND = 4


N_CLASSES = len(FrameClass)


@dataclass(frozen=True, eq=False)
class FrameProbabilitySequence:
    """Frame-ordered class probabilities, shape ``(n_frames, 5)``.

    Frame indices are implicit (row ``i`` is frame ``i``).
    """

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != N_CLASSES or p.shape[0] == 0:
            raise ValueError(f"expected non-empty (n, {N_CLASSES}) array, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-6:
            raise ValueError("probability rows must sum to 1 within 1e-6")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    def __len__(self) -> int:
        return self.probabilities.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FrameProbabilitySequence):
            return NotImplemented
        return np.array_equal(self.probabilities, other.probabilities)


@dataclass(frozen=True, eq=False)
class HeadMask:
    pixels: np.ndarray  # (height, width) uint8 in {0, 1}
    pixel_spacing: float

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError("mask must be 2-D")
        if px.shape[0] < MIN_MASK_SIDE or px.shape[1] < MIN_MASK_SIDE:
            raise TooSmall(f"mask {px.shape[1]}x{px.shape[0]} below {MIN_MASK_SIDE}x{MIN_MASK_SIDE}")
        if not np.all((px == 0) | (px == 1)):
            raise ValueError("mask pixels must be 0 or 1")
        if not self.pixel_spacing > 0:
            raise ValueError("pixel_spacing must be positive")
        px = px.astype(np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, HeadMask):
            return NotImplemented
        return self.pixel_spacing == other.pixel_spacing and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True)
class GroundTruth:
    fetus_count: int
    presentation: str | None = None  # "cephalic" | "breech" | None
    ga_days: float | None = None

    def to_json(self) -> dict:
        return {"fetus_count": self.fetus_count, "presentation": self.presentation, "ga_days": self.ga_days}

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        count = obj.get("fetus_count")
        pres = obj.get("presentation")
        ga = obj.get("ga_days")
        if count not in (1, 2):
            raise ValueError(f"truth.fetus_count must be 1 or 2, got {count!r}")
        if pres not in (None, "cephalic", "breech"):
            raise ValueError(f"truth.presentation invalid: {pres!r}")
        if ga is not None and not isinstance(ga, (int, float)):
            raise ValueError(f"truth.ga_days invalid: {ga!r}")
        return cls(count, pres, None if ga is None else float(ga))


@dataclass(frozen=True, eq=False)
class CaseRecord:
    case_id: str
    probabilities: FrameProbabilitySequence
    masks: dict[int, HeadMask]
    pixel_spacing: float
    truth: GroundTruth | None = None
    # synthetic scenario tag, e.g. "twin_same_presentation"; None for real data
    scenario: str | None = None

    def __post_init__(self):
        n = len(self.probabilities)
        for idx in self.masks:
            if not 0 <= idx < n:
                raise OrphanMask(idx)
        object.__setattr__(self, "masks", dict(sorted(self.masks.items())))

    def __eq__(self, other):
        if not isinstance(other, CaseRecord):
            return NotImplemented
        return (
            self.case_id == other.case_id
            and self.probabilities == other.probabilities
            and self.masks.keys() == other.masks.keys()
            and all(self.masks[k] == other.masks[k] for k in self.masks)
            and self.pixel_spacing == other.pixel_spacing
            and self.truth == other.truth
            and self.scenario == other.scenario
        )


def normalize_row(row: np.ndarray, line: int = 0) -> np.ndarray:
    total = float(row.sum())
    dev = abs(total - 1.0)
    if dev > RENORMALIZE_TOL or not math.isfinite(total):
        raise UnnormalizedProbabilities(line, total)
    if dev > EXACT_TOL:
        return row / total
    return row


# -- frames.csv --------------------------------------------------------------

def parse_frame_probabilities(text: str) -> FrameProbabilitySequence:
    rows = []
    reader = csv.reader(io.StringIO(text))
    header_seen = False
    for line_no, fields in enumerate(reader, start=1):
        if not fields or all(not f.strip() for f in fields):
            continue
        if not header_seen:
            if tuple(f.strip() for f in fields) != CSV_HEADER:
                raise MalformedRow(line_no, "unexpected header")
            header_seen = True
            continue
        if len(fields) != 1 + len(FrameClass):
            raise MalformedRow(line_no, f"expected 6 fields, got {len(fields)}")
        try:
            idx = int(fields[0])
            values = np.array([float(f) for f in fields[1:]])
        except ValueError as exc:
            raise MalformedRow(line_no, str(exc)) from None
        if not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0:
            raise MalformedRow(line_no, "probability outside [0, 1]")
        if idx != len(rows):
            raise NonContiguousIndex(line_no, len(rows), idx)
        rows.append(normalize_row(values, line_no))
    if not header_seen:
        raise MalformedRow(1, "missing header")
    if not rows:
        raise MalformedRow(2, "no frames")
    return FrameProbabilitySequence(np.vstack(rows))


def read_frame_probabilities(path) -> FrameProbabilitySequence:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    return parse_frame_probabilities(path.read_text(encoding="utf-8"))


def _fmt(x: float) -> str:
    # shortest round-trip representation, never in exponent form
    return np.format_float_positional(x, unique=True, trim="0")


def format_frame_probabilities(seq: FrameProbabilitySequence) -> str:
    lines = [",".join(CSV_HEADER)]
    for i, row in enumerate(seq.probabilities):
        lines.append(",".join([str(i)] + [_fmt(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


# -- masks -------------------------------------------------------------------

def _pgm_header_tokens(data: bytes):
    """Return (tokens, offset of raster) for a P5 header."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise NotPGM("truncated header")
        tokens.append(data[start:pos])
    if pos >= n or not data[pos:pos + 1].isspace():
        raise NotPGM("missing whitespace after maxval")
    return tokens, pos + 1


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode a binary P5 image with maxval 255 to a uint8 array."""
    if not data.startswith(b"P5"):
        raise NotPGM("missing P5 magic")
    tokens, offset = _pgm_header_tokens(data)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise NotPGM("non-numeric header field") from None
    if maxval != 255:
        raise NotPGM(f"maxval {maxval}, expected 255")
    if width < 1 or height < 1:
        raise NotPGM("non-positive dimensions")
    raster = data[offset:offset + width * height]
    if len(raster) != width * height:
        raise NotPGM("truncated raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width)


def encode_pgm(pixels: np.ndarray) -> bytes:
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + (np.asarray(pixels, dtype=np.uint8) * 255).tobytes()


def read_mask(path, pixel_spacing: float) -> HeadMask:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    img = decode_pgm(path.read_bytes())
    if img.shape[0] < MIN_MASK_SIDE or img.shape[1] < MIN_MASK_SIDE:
        raise TooSmall(f"{path.name}: {img.shape[1]}x{img.shape[0]}")
    return HeadMask((img >= 128).astype(np.uint8), pixel_spacing)


# -- meta.json / whole case ----------------------------------------------------

def case_meta(case: CaseRecord) -> dict:
    meta = {
        "case_id": case.case_id,
        "pixel_spacing_mm": case.pixel_spacing,
        "truth": None if case.truth is None else case.truth.to_json(),
    }
    if case.scenario is not None:
        meta["scenario"] = case.scenario
    return meta


def read_case(directory) -> CaseRecord:
    """Load and cross-validate a case directory."""
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.is_file():
        raise MissingFile(str(meta_path))
    probs = read_frame_probabilities(directory / "frames.csv")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        case_id = meta["case_id"]
        spacing = float(meta["pixel_spacing_mm"])
        truth = None if meta.get("truth") is None else GroundTruth.from_json(meta["truth"])
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedFile(f"{meta_path}: {exc}") from None
    if not isinstance(case_id, str) or not spacing > 0:
        raise MalformedFile(f"{meta_path}: bad case_id or pixel_spacing_mm")

    masks = {}
    mask_dir = directory / "masks"
    if mask_dir.is_dir():
        for p in sorted(mask_dir.iterdir()):
            m = MASK_NAME.match(p.name)
            if not m:
                continue
            idx = int(m.group(1))
            if idx >= len(probs):
                raise OrphanMask(idx)
            masks[idx] = read_mask(p, spacing)
    return CaseRecord(case_id, probs, masks, spacing, truth, meta.get("scenario"))


def write_case(case: CaseRecord, directory) -> Path:
    """Write ``case`` in the on-disk layout read by :func:`read_case`."""
    directory = Path(directory)
    try:
        (directory / "masks").mkdir(parents=True, exist_ok=True)
        (directory / "frames.csv").write_text(
            format_frame_probabilities(case.probabilities), encoding="utf-8", newline="\n"
        )
        (directory / "meta.json").write_text(
            json.dumps(case_meta(case), indent=2) + "\n", encoding="utf-8", newline="\n"
        )
        for idx, mask in case.masks.items():
            (directory / "masks" / f"{idx:06d}.pgm").write_bytes(encode_pgm(mask.pixels))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return directory
