"""Stratified k-fold cross-validation and the study statistics.

GA is evaluated on ground-truth singletons and presentation on ground-truth
singletons, independently of what the count forest decides for them; the
fetus-count table covers every case whose sweeps could be segmented.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from . import jsonfmt
from .biometry import HADLOCK_1984, Excluded, GaEstimate, GrowthCurve, measure_case
from .errors import EmptyList, LengthMismatch, MissingTruth, TooFewSamples
from .forest import ForestParams, predict
from .pipeline import COUNT_CLASSES, PRESENTATION_CLASSES, _as_record, prepare_case, train_models
from .sweeps import SegmentationConfig

EVAL_SCHEMA = "eval-v1"
SECOND_TRIMESTER_DAYS = (98.0, 196.0)  # [14w, 28w)


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    k: int
    fold_of: np.ndarray

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)


def kfold_split(labels, k: int, seed: int) -> FoldAssignment:
    """Stratified folds: each class is shuffled and dealt round-robin.

    Dealing continues where the previous class stopped, so overall fold sizes
    stay balanced too.
    """
    labels = list(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(labels) < k:
        raise TooFewSamples(f"{len(labels)} samples cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.int64)
    arr = np.array([str(x) for x in labels])
    start = 0
    for cls in sorted(set(arr.tolist())):
        idx = rng.permutation(np.flatnonzero(arr == cls))
        fold_of[idx] = (start + np.arange(idx.size)) % k
        start = (start + idx.size) % k
    return FoldAssignment(k, fold_of)


def median_and_iqr(values) -> tuple[float, float]:
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise EmptyList("no values")
    q1, med, q3 = np.percentile(v, [25, 50, 75], method="linear")
    return float(med), float(q3 - q1)


@dataclass
class ConfusionTable:
    header: str
    classes: tuple[str, ...]
    correct: dict
    incorrect: dict

    def rows(self):
        return [(c, self.correct[c], self.incorrect[c]) for c in self.classes]

    def render(self) -> str:
        cols = (self.header, "Correct", "Incorrect")
        body = [(c.capitalize(), str(ok), str(bad)) for c, ok, bad in self.rows()]
        widths = [max(len(r[i]) for r in [cols] + body) for i in range(3)]
        lines = ["  ".join([cols[0].ljust(widths[0])] + [cols[i].rjust(widths[i]) for i in (1, 2)])]
        for r in body:
            lines.append("  ".join([r[0].ljust(widths[0])] + [r[i].rjust(widths[i]) for i in (1, 2)]))
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "header": self.header,
            "rows": [{"class": c, "correct": ok, "incorrect": bad} for c, ok, bad in self.rows()],
        }


def confusion_table(pred, truth, classes, header: str = "Class") -> ConfusionTable:
    pred, truth = list(pred), list(truth)
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(truth)} truths")
    correct = {c: 0 for c in classes}
    incorrect = {c: 0 for c in classes}
    for p, t in zip(pred, truth):
        if p == t:
            correct[t] += 1
        else:
            incorrect[t] += 1
    return ConfusionTable(header, tuple(classes), correct, incorrect)


@dataclass
class GaStats:
    median_days: float | None
    iqr_days: float | None
    n: int

    @classmethod
    def of(cls, errors) -> "GaStats":
        errors = list(errors)
        if not errors:
            return cls(None, None, 0)
        med, iqr = median_and_iqr(errors)
        return cls(med, iqr, len(errors))


@dataclass
class CaseResult:
    case_id: str
    scenario: str | None
    fold: int
    truth_count: int
    pred_count: int | None
    truth_presentation: str | None
    pred_presentation: str | None
    truth_ga_days: float | None
    ga_status: str  # included | excluded | no_head_frames | twin
    pred_ga_days: float | None
    ga_error_days: float | None
    error: str | None = None


@dataclass
class FoldInfo:
    fold: int
    n_train: int
    n_test: int
    train_checksum: str


@dataclass
class EvalReport:
    k: int
    seed: int
    n_cases: int
    count_confusion: ConfusionTable
    presentation_confusion: ConfusionTable
    ga_overall: GaStats
    ga_second_trimester: GaStats
    n_included: int
    n_excluded: int
    n_no_head_frames: int
    n_twins: int
    n_segmentation_failed: int
    count_by_scenario: dict
    folds: list[FoldInfo]
    cases: list[CaseResult] = field(repr=False)
    forest_params: ForestParams = field(default_factory=ForestParams)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    curve_name: str = HADLOCK_1984.name

    def accounting_ok(self) -> bool:
        return self.n_included + self.n_excluded + self.n_no_head_frames + self.n_twins == self.n_cases

    def to_json(self) -> dict:
        ga = lambda s: {"median_days": s.median_days, "iqr_days": s.iqr_days, "n": s.n}  # noqa: E731
        return {
            "schema": EVAL_SCHEMA,
            "k": self.k,
            "seed": self.seed,
            "n_cases": self.n_cases,
            "forest_params": asdict(self.forest_params),
            "segmentation": self.segmentation.to_json(),
            "curve": self.curve_name,
            "count_confusion": self.count_confusion.to_json(),
            "presentation_confusion": self.presentation_confusion.to_json(),
            "count_by_scenario": self.count_by_scenario,
            "ga": {
                "overall": ga(self.ga_overall),
                "second_trimester": ga(self.ga_second_trimester),
                "n_included": self.n_included,
                "n_excluded": self.n_excluded,
                "n_no_head_frames": self.n_no_head_frames,
                "n_twins": self.n_twins,
            },
            "n_segmentation_failed": self.n_segmentation_failed,
            "folds": [asdict(f) for f in self.folds],
        }

    def dumps(self) -> str:
        return jsonfmt.dumps(self.to_json()) + "\n"

    def render_text(self) -> str:
        out = [
            "Results for number of fetuses",
            self.count_confusion.render(),
            "",
            "Results for fetal presentation",
            self.presentation_confusion.render(),
            "",
        ]
        for name, s in (("GA error (all)", self.ga_overall), ("GA error (2nd trimester)", self.ga_second_trimester)):
            if s.n:
                out.append(f"{name}: median {s.median_days:.1f} days, IQR {s.iqr_days:.1f} days, n={s.n}")
            else:
                out.append(f"{name}: n=0")
        out.append(
            f"GA accounting: {self.n_included} included, {self.n_excluded} outside curve, "
            f"{self.n_no_head_frames} without head frames, {self.n_twins} twins (of {self.n_cases})"
        )
        return "\n".join(out)

    def cases_csv(self) -> str:
        buf = io.StringIO()
        names = list(CaseResult.__dataclass_fields__)
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        for c in self.cases:
            row = []
            for n in names:
                v = getattr(c, n)
                row.append("" if v is None else (f"{v:.4f}" if isinstance(v, float) else v))
            writer.writerow(row)
        return buf.getvalue()


def _checksum(indices) -> str:
    return hashlib.sha256(",".join(str(int(i)) for i in sorted(indices)).encode()).hexdigest()[:16]


def _stratum(record) -> str:
    if record.scenario is not None:
        return record.scenario
    return f"{record.truth.fetus_count}-{record.truth.presentation}"


def run_cross_validation(
    corpus,
    k: int = 5,
    forest_params: ForestParams = ForestParams(),
    curve: GrowthCurve = HADLOCK_1984,
    seed: int = 42,
    segmentation: SegmentationConfig = SegmentationConfig(),
    n_jobs: int = 1,
) -> EvalReport:
    records = [_as_record(c) for c in corpus]
    for r in records:
        if r.truth is None:
            raise MissingTruth(f"case {r.case_id} has no ground truth")
        if r.truth.fetus_count == 1 and (r.truth.ga_days is None or r.truth.presentation is None):
            raise MissingTruth(f"singleton case {r.case_id} lacks GA or presentation truth")
    folds = kfold_split([_stratum(r) for r in records], k, seed)
    prepared = [prepare_case(r, segmentation) for r in records]

    results: list[CaseResult | None] = [None] * len(records)
    fold_info = []
    for f in range(k):
        train, test = folds.train_indices(f), folds.test_indices(f)
        if np.intersect1d(train, test).size:
            raise AssertionError("train/test overlap")
        count_model, pres_model = train_models([prepared[i] for i in train], forest_params, n_jobs)
        fold_info.append(FoldInfo(f, int(train.size), int(test.size), _checksum(train)))
        for i in test:
            prep, rec = prepared[i], records[i]
            pred_count = pred_pres = None
            if prep.grid is not None:
                pred_count = predict(count_model, prep.features)[0] + 1
                if rec.truth.fetus_count == 1:
                    pred_pres = PRESENTATION_CLASSES[predict(pres_model, prep.features)[0]]
            pred_ga = ga_err = None
            if rec.truth.fetus_count == 2:
                status = "twin"
            else:
                outcome = measure_case(rec, prep.head_frames, curve)
                if isinstance(outcome, GaEstimate):
                    status = "included"
                    pred_ga = outcome.ga_days
                    ga_err = pred_ga - rec.truth.ga_days
                elif isinstance(outcome, Excluded):
                    status = "excluded"
                else:
                    status = "no_head_frames"
            results[i] = CaseResult(
                rec.case_id, rec.scenario, f, rec.truth.fetus_count, pred_count,
                rec.truth.presentation if rec.truth.fetus_count == 1 else None, pred_pres,
                rec.truth.ga_days, status, pred_ga, ga_err,
                None if prep.error is None else f"{type(prep.error).__name__}: {prep.error}",
            )

    evaluated = [c for c in results if c.pred_count is not None]
    count_tab = confusion_table(
        [COUNT_CLASSES[c.pred_count - 1] for c in evaluated],
        [COUNT_CLASSES[c.truth_count - 1] for c in evaluated],
        COUNT_CLASSES, "No. fetuses",
    )
    singles = [c for c in evaluated if c.truth_count == 1]
    pres_tab = confusion_table(
        [c.pred_presentation for c in singles], [c.truth_presentation for c in singles],
        PRESENTATION_CLASSES, "Presentation",
    )
    by_scenario = {}
    for name in sorted({c.scenario for c in evaluated if c.scenario is not None}):
        group = [c for c in evaluated if c.scenario == name]
        hits = sum(c.pred_count == c.truth_count for c in group)
        by_scenario[name] = {"n": len(group), "correct": hits, "recall": hits / len(group)}

    included = [c for c in results if c.ga_status == "included"]
    lo, hi = SECOND_TRIMESTER_DAYS
    return EvalReport(
        k=k,
        seed=seed,
        n_cases=len(records),
        count_confusion=count_tab,
        presentation_confusion=pres_tab,
        ga_overall=GaStats.of(c.ga_error_days for c in included),
        ga_second_trimester=GaStats.of(c.ga_error_days for c in included if lo <= c.truth_ga_days < hi),
        n_included=len(included),
        n_excluded=sum(c.ga_status == "excluded" for c in results),
        n_no_head_frames=sum(c.ga_status == "no_head_frames" for c in results),
        n_twins=sum(c.ga_status == "twin" for c in results),
        n_segmentation_failed=len(results) - len(evaluated),
        count_by_scenario=by_scenario,
        folds=fold_info,
        cases=results,
        forest_params=forest_params,
        segmentation=segmentation,
        curve_name=curve.name,
    )
