"""Per-case interpretation: sweeps -> fetus count -> GA -> presentation.

The two forests share one feature row, the flattened sweep grid. GA and
presentation are only reported for cases classified as singletons.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import jsonfmt
from .biometry import HADLOCK_1984, Excluded, GaEstimate, GrowthCurve, NoHeadFrames, load_curve, measure_case
from .errors import DataError, MalformedFile, MissingFile, MissingTruth
from .forest import Dataset, ForestModel, ForestParams, fit_forest, flatten_grid, load_model, predict, save_model
from .frames import CaseRecord, FrameClass, read_case
from .sweeps import SegmentationConfig, SweepGrid, SweepRange, build_sweep_grid, label_frames

REPORT_SCHEMA = "report-v1"
COUNT_CLASSES = ("single", "twin")
PRESENTATION_CLASSES = ("cephalic", "breech")
FEATURE_ENCODING = "sweep-grid-probabilities-6x100x5"


@dataclass(frozen=True)
class NotApplicable:
    reason: str = "twin"


@dataclass
class ModelBundle:
    count_model: ForestModel
    presentation_model: ForestModel
    curve: GrowthCurve = HADLOCK_1984
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)

    def __post_init__(self):
        if self.count_model.n_classes != 2 or self.presentation_model.n_classes != 2:
            raise ValueError("both forests must be binary")

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_model(self.count_model, directory / "count_model.json")
        save_model(self.presentation_model, directory / "presentation_model.json")
        (directory / "curve.json").write_text(json.dumps(self.curve.to_json(), indent=2) + "\n", encoding="utf-8")
        (directory / "segmentation.json").write_text(
            json.dumps(self.segmentation.to_json(), indent=2) + "\n", encoding="utf-8"
        )
        return directory

    @classmethod
    def load(cls, directory) -> "ModelBundle":
        directory = Path(directory)
        seg_path = directory / "segmentation.json"
        if not seg_path.is_file():
            raise MissingFile(str(seg_path))
        try:
            seg = SegmentationConfig.from_json(json.loads(seg_path.read_text(encoding="utf-8")))
        except (ValueError, TypeError) as exc:
            raise MalformedFile(f"{seg_path}: {exc}") from None
        try:
            return cls(
                load_model(directory / "count_model.json"),
                load_model(directory / "presentation_model.json"),
                load_curve(directory / "curve.json"),
                seg,
            )
        except ValueError as exc:
            raise MalformedFile(f"{directory}: {exc}") from None


@dataclass(frozen=True)
class InterpretationReport:
    case_id: str
    fetus_count: int | None = None
    count_votes: tuple[float, ...] | None = None
    ga: GaEstimate | Excluded | NoHeadFrames | NotApplicable | None = None
    presentation: str | NotApplicable | None = None
    presentation_votes: tuple[float, ...] | None = None
    sweep_ranges: tuple[SweepRange, ...] = ()
    n_head_frames: int = 0
    error_type: str | None = None
    error: str | None = None

    def __post_init__(self):
        if self.error is None and (self.fetus_count == 2) != isinstance(self.presentation, NotApplicable):
            raise ValueError("presentation must be NotApplicable exactly for twins")

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def aggregated_hc_mm(self) -> float | None:
        return getattr(self.ga, "hc_mm", None)

    @property
    def n_head_frames_measured(self) -> int:
        return getattr(self.ga, "n_frames_used", 0)


def head_frames(case: CaseRecord) -> list[int]:
    """Frames whose raw (unsmoothed) argmax is Head and that own a mask."""
    labels = label_frames(case.probabilities)
    return [i for i in case.masks if labels[i] == FrameClass.HEAD]


@dataclass(frozen=True, eq=False)
class PreparedCase:
    """Model-independent part of the interpretation of one case."""

    case: CaseRecord
    grid: SweepGrid | None
    features: np.ndarray | None
    head_frames: list[int]
    error: DataError | None = None


def prepare_case(case: CaseRecord, segmentation: SegmentationConfig = SegmentationConfig()) -> PreparedCase:
    heads = head_frames(case)
    try:
        grid = build_sweep_grid(case.probabilities, segmentation)
    except DataError as exc:
        return PreparedCase(case, None, None, heads, exc)
    return PreparedCase(case, grid, flatten_grid(grid), heads)


def _failed(case_id: str, exc: Exception, **extra) -> InterpretationReport:
    return InterpretationReport(case_id, error_type=type(exc).__name__, error=str(exc), **extra)


def interpret_prepared(prep: PreparedCase, count_model: ForestModel, presentation_model: ForestModel, curve: GrowthCurve) -> InterpretationReport:
    case = prep.case
    if prep.error is not None:
        return _failed(case.case_id, prep.error, n_head_frames=len(prep.head_frames))
    count_cls, count_votes = predict(count_model, prep.features)
    common = dict(
        count_votes=count_votes,
        sweep_ranges=prep.grid.source_ranges,
        n_head_frames=len(prep.head_frames),
    )
    if count_cls == 1:
        return InterpretationReport(case.case_id, 2, ga=NotApplicable(), presentation=NotApplicable(), **common)
    ga = measure_case(case, prep.head_frames, curve)
    pres_cls, pres_votes = predict(presentation_model, prep.features)
    return InterpretationReport(
        case.case_id, 1, ga=ga, presentation=PRESENTATION_CLASSES[pres_cls], presentation_votes=pres_votes, **common
    )


def interpret_case(case: CaseRecord, bundle: ModelBundle) -> InterpretationReport:
    prep = prepare_case(case, bundle.segmentation)
    return interpret_prepared(prep, bundle.count_model, bundle.presentation_model, bundle.curve)


def _as_record(item):
    return getattr(item, "case", item)


def _interpret_item(item, bundle: ModelBundle) -> InterpretationReport:
    if isinstance(item, (str, Path)):
        try:
            item = read_case(item)
        except DataError as exc:
            return _failed(Path(item).name, exc)
    record = _as_record(item)
    try:
        return interpret_case(record, bundle)
    except DataError as exc:
        return _failed(record.case_id, exc)


def interpret_batch(cases, bundle: ModelBundle, n_jobs: int = 1) -> list[InterpretationReport]:
    """One report per input, in input order; items may be records or case directories."""
    cases = list(cases)
    if n_jobs > 1 and len(cases) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(lambda c: _interpret_item(c, bundle), cases))
    return [_interpret_item(c, bundle) for c in cases]


# -- training ----------------------------------------------------------------

def count_label(case: CaseRecord) -> int:
    return case.truth.fetus_count - 1


def presentation_label(case: CaseRecord) -> int | None:
    if case.truth.fetus_count != 1 or case.truth.presentation is None:
        return None
    return PRESENTATION_CLASSES.index(case.truth.presentation)


def _model_metadata(task: str, classes, n_train: int) -> dict:
    return {"task": task, "classes": list(classes), "features": FEATURE_ENCODING, "n_train": n_train}


def train_models(prepared: list[PreparedCase], params: ForestParams, n_jobs: int = 1) -> tuple[ForestModel, ForestModel]:
    """Fit the count forest on all usable cases and the presentation forest on singletons."""
    usable = [p for p in prepared if p.grid is not None]
    for p in usable:
        if p.case.truth is None:
            raise MissingTruth(f"case {p.case.case_id} has no ground truth")
    if not usable:
        raise MissingTruth("no case with a usable sweep grid")
    X = np.vstack([p.features for p in usable])
    y = np.array([count_label(p.case) for p in usable])
    count_model = fit_forest(Dataset(X, y, 2), params, n_jobs, _model_metadata("fetus_count", COUNT_CLASSES, len(y)))

    singles = [(p, presentation_label(p.case)) for p in usable]
    singles = [(p, lab) for p, lab in singles if lab is not None]
    if not singles:
        raise MissingTruth("no singleton with a known presentation to train on")
    Xp = np.vstack([p.features for p, _ in singles])
    yp = np.array([lab for _, lab in singles])
    pres_model = fit_forest(Dataset(Xp, yp, 2), params, n_jobs, _model_metadata("presentation", PRESENTATION_CLASSES, len(yp)))
    return count_model, pres_model


def train_bundle(cases, params: ForestParams = ForestParams(), segmentation: SegmentationConfig = SegmentationConfig(), curve: GrowthCurve = HADLOCK_1984, n_jobs: int = 1) -> ModelBundle:
    prepared = [prepare_case(_as_record(c), segmentation) for c in cases]
    count_model, pres_model = train_models(prepared, params, n_jobs)
    return ModelBundle(count_model, pres_model, curve, segmentation)


# -- report JSON ---------------------------------------------------------------

def format_ga(ga_days: float) -> str:
    """``140.0 -> "20w0d"``; days are rounded to the nearest whole day."""
    total = int(round(ga_days))
    return f"{total // 7}w{total % 7}d"


def _ga_json(ga) -> dict | None:
    if ga is None:
        return None
    if isinstance(ga, GaEstimate):
        return {
            "status": "estimated",
            "ga_days": ga.ga_days,
            "ga_weeks_days": format_ga(ga.ga_days),
            "hc_mm": ga.hc_mm,
            "n_frames_used": ga.n_frames_used,
        }
    if isinstance(ga, Excluded):
        return {"status": ga.reason}
    if isinstance(ga, NoHeadFrames):
        return {"status": "no_head_frames"}
    return {"status": "not_applicable_twin"}


def report_to_json(report: InterpretationReport) -> dict:
    count = None
    if report.fetus_count is not None:
        count = {
            "value": report.fetus_count,
            "label": COUNT_CLASSES[report.fetus_count - 1],
            "vote_fractions": list(report.count_votes),
        }
    if isinstance(report.presentation, NotApplicable):
        pres = {"status": "not_applicable_twin"}
    elif report.presentation is None:
        pres = None
    else:
        pres = {"status": "estimated", "value": report.presentation, "vote_fractions": list(report.presentation_votes)}
    return {
        "schema": REPORT_SCHEMA,
        "case_id": report.case_id,
        "status": "ok" if report.ok else "error",
        "error": None if report.ok else {"type": report.error_type, "message": report.error},
        "fetus_count": count,
        "ga": _ga_json(report.ga),
        "presentation": pres,
        "intermediates": {
            "sweep_ranges": [[r.start, r.end] for r in report.sweep_ranges],
            "n_head_frames": report.n_head_frames,
            "n_head_frames_measured": report.n_head_frames_measured,
            "aggregated_hc_mm": report.aggregated_hc_mm,
        },
    }


def write_report(report: InterpretationReport) -> str:
    return jsonfmt.dumps(report_to_json(report)) + "\n"


def summarize(report: InterpretationReport) -> str:
    """One-line human readable summary."""
    if not report.ok:
        return f"{report.case_id}: not interpretable ({report.error_type}: {report.error})"
    parts = [f"{report.case_id}: fetuses={report.fetus_count}"]
    ga = report.ga
    if isinstance(ga, GaEstimate):
        parts.append(f"GA={format_ga(ga.ga_days)} (HC {ga.hc_mm:.1f} mm)")
    elif isinstance(ga, Excluded):
        parts.append(f"GA=excluded (HC {ga.hc_mm:.1f} mm outside curve)")
    elif isinstance(ga, NoHeadFrames):
        parts.append("GA=no head frames")
    else:
        parts.append("GA=n/a (twin)")
    pres = report.presentation
    parts.append("presentation=n/a (twin)" if isinstance(pres, NotApplicable) else f"presentation={pres}")
    return " ".join(parts)
