import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from osp_pipeline.errors import (
    DataError,
    MalformedRow,
    MissingFile,
    NonContiguousIndex,
    NotPGM,
    OrphanMask,
    TooSmall,
    UnnormalizedProbabilities,
)
from osp_pipeline.frames import (
    CSV_HEADER,
    CaseRecord,
    FrameClass,
    FrameProbabilitySequence,
    GroundTruth,
    HeadMask,
    decode_pgm,
    encode_pgm,
    format_frame_probabilities,
    parse_frame_probabilities,
    read_case,
    read_frame_probabilities,
    read_mask,
    write_case,
)
from osp_pipeline.synthetic import Scenario, generate_case

HEADER = ",".join(CSV_HEADER)


def csv_text(*rows):
    return "\n".join([HEADER, *rows]) + "\n"


def pgm(w, h, value=0, comment=False):
    head = f"P5\n{'# made by a test' + chr(10) if comment else ''}{w} {h}\n255\n".encode()
    return head + bytes([value]) * (w * h)


def test_frame_class_codes():
    assert [c.value for c in FrameClass] == [0, 1, 2, 3, 4]
    assert [c.name for c in FrameClass] == ["HEAD", "TORSO_TRANSVERSE", "FETUS_SAGITTAL", "DETACHED", "BACKGROUND"]


def test_accepts_normalized_row():
    seq = parse_frame_probabilities(csv_text("0,0.7,0.1,0.1,0.05,0.05"))
    assert len(seq) == 1
    assert seq.probabilities[0, FrameClass.HEAD] == 0.7


def test_rejects_sum_105_with_line_number():
    with pytest.raises(UnnormalizedProbabilities) as err:
        parse_frame_probabilities(csv_text("0,0.7,0.1,0.1,0.05,0.10"))
    assert err.value.line == 2


def test_gap_in_indices():
    rows = ["0,1,0,0,0,0", "1,1,0,0,0,0", "3,1,0,0,0,0"]
    with pytest.raises(NonContiguousIndex) as err:
        parse_frame_probabilities(csv_text(*rows))
    # third data row; the header is line 1
    assert err.value.line == 4


def test_small_deviation_is_renormalized():
    seq = parse_frame_probabilities(csv_text("0,0.7005,0.1,0.1,0.05,0.05"))
    row = seq.probabilities[0]
    assert abs(row.sum() - 1.0) < 1e-12
    assert row[0] == pytest.approx(0.7005 / 1.0005, rel=1e-15)


@pytest.mark.parametrize(
    "text",
    [
        "frame,a,b,c,d,e\n0,1,0,0,0,0\n",
        csv_text("0,1,0,0,0"),
        csv_text("0,1,0,0,zero,0"),
        csv_text("0,1.5,-0.5,0,0,0"),
        HEADER + "\n",
        "",
    ],
)
def test_malformed(text):
    with pytest.raises(MalformedRow):
        parse_frame_probabilities(text)


def test_missing_file(tmp_path):
    with pytest.raises(MissingFile):
        read_frame_probabilities(tmp_path / "frames.csv")


def test_mask_all_255_and_all_0(tmp_path):
    (tmp_path / "a.pgm").write_bytes(pgm(128, 128, 255))
    (tmp_path / "b.pgm").write_bytes(pgm(128, 128, 0, comment=True))
    full = read_mask(tmp_path / "a.pgm", 0.2)
    empty = read_mask(tmp_path / "b.pgm", 0.2)
    assert full.pixels.shape == (128, 128) and full.pixels.min() == 1
    assert empty.pixels.max() == 0


def test_mask_threshold_is_128(tmp_path):
    data = b"P5\n8 8\n255\n" + bytes([127, 128] * 32)
    (tmp_path / "m.pgm").write_bytes(data)
    m = read_mask(tmp_path / "m.pgm", 1.0)
    assert m.pixels[0, :4].tolist() == [0, 1, 0, 1]


def test_mask_errors(tmp_path):
    (tmp_path / "small.pgm").write_bytes(pgm(4, 4, 255))
    (tmp_path / "p2.pgm").write_bytes(b"P2\n8 8\n255\n" + b"0 " * 64)
    with pytest.raises(TooSmall):
        read_mask(tmp_path / "small.pgm", 1.0)
    with pytest.raises(NotPGM):
        read_mask(tmp_path / "p2.pgm", 1.0)
    with pytest.raises(MissingFile):
        read_mask(tmp_path / "nope.pgm", 1.0)


def test_pgm_maxval_and_truncation():
    with pytest.raises(NotPGM):
        decode_pgm(b"P5\n8 8\n65535\n" + bytes(128))
    with pytest.raises(NotPGM):
        decode_pgm(b"P5\n8 8\n255\n" + bytes(10))


def test_pgm_encode_decode():
    px = (np.arange(80).reshape(8, 10) % 3 == 0).astype(np.uint8)
    assert np.array_equal(decode_pgm(encode_pgm(px)) >= 128, px.astype(bool))


def _write_plain_case(directory, n_frames, mask_frames, meta=True):
    probs = np.zeros((n_frames, 5))
    probs[:, 4] = 1.0
    (directory / "masks").mkdir(parents=True)
    (directory / "frames.csv").write_text(format_frame_probabilities(FrameProbabilitySequence(probs)))
    if meta:
        (directory / "meta.json").write_text(json.dumps({"case_id": "c", "pixel_spacing_mm": 0.2, "truth": None}))
    for idx in mask_frames:
        (directory / "masks" / f"{idx:06d}.pgm").write_bytes(pgm(16, 16, 255))


def test_read_case_single_mask(tmp_path):
    _write_plain_case(tmp_path / "c", 300, [42])
    case = read_case(tmp_path / "c")
    assert list(case.masks) == [42]
    assert len(case.probabilities) == 300
    assert case.truth is None


def test_read_case_orphan(tmp_path):
    _write_plain_case(tmp_path / "c", 300, [999])
    with pytest.raises(OrphanMask) as err:
        read_case(tmp_path / "c")
    assert err.value.frame_index == 999


def test_read_case_missing_meta(tmp_path):
    _write_plain_case(tmp_path / "c", 30, [], meta=False)
    with pytest.raises(MissingFile):
        read_case(tmp_path / "c")


def test_case_record_rejects_orphan_in_memory():
    seq = FrameProbabilitySequence(np.eye(5))
    with pytest.raises(OrphanMask):
        CaseRecord("x", seq, {7: HeadMask(np.ones((8, 8), np.uint8), 1.0)}, 1.0)


def test_round_trip_noisy_synthetic(tmp_path):
    s = Scenario(1, ("breech",), 150.0, label_noise=0.05, mask_noise_px=1.0, frames_per_sweep=(60, 80), max_masks=3)
    case = generate_case(s, 11, "rt").case
    write_case(case, tmp_path / "rt")
    back = read_case(tmp_path / "rt")
    assert back == case
    assert back.probabilities.probabilities.tobytes() == case.probabilities.probabilities.tobytes()


def test_ground_truth_json():
    t = GroundTruth(1, "cephalic", 140.5)
    assert GroundTruth.from_json(t.to_json()) == t
    with pytest.raises(ValueError):
        GroundTruth.from_json({"fetus_count": 3})


prob = st.floats(0.0, 1.0, allow_nan=False)
row = st.tuples(st.integers(0, 12), st.lists(prob, min_size=5, max_size=5))


@given(st.lists(row, min_size=0, max_size=12), st.booleans())
def test_fuzzed_files_either_fail_cleanly_or_satisfy_invariants(rows, force_normalize):
    lines = []
    for i, (idx, vals) in enumerate(rows):
        if force_normalize and sum(vals) > 0:
            vals = [v / sum(vals) for v in vals]
            idx = i
        lines.append(",".join([str(idx)] + [repr(v) for v in vals]))
    try:
        seq = parse_frame_probabilities(csv_text(*lines))
    except DataError:
        return
    p = seq.probabilities
    assert p.shape == (len(rows), 5) and p.shape[0] >= 1
    assert np.all((p >= 0) & (p <= 1))
    assert np.max(np.abs(p.sum(axis=1) - 1)) <= 1e-6


@given(st.lists(st.lists(prob, min_size=5, max_size=5).filter(lambda v: sum(v) > 0), min_size=1, max_size=10))
def test_format_parse_is_bitwise(rows):
    p = np.array(rows)
    p = p / p.sum(axis=1, keepdims=True)
    seq = FrameProbabilitySequence(np.clip(p, 0, 1))
    back = parse_frame_probabilities(format_frame_probabilities(seq))
    assert back.probabilities.tobytes() == seq.probabilities.tobytes()
