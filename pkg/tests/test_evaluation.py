import hashlib
import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from osp_pipeline.errors import EmptyList, LengthMismatch, MissingTruth, TooFewSamples
from osp_pipeline.evaluation import _stratum, confusion_table, kfold_split, median_and_iqr, run_cross_validation
from osp_pipeline.forest import ForestParams
from osp_pipeline.frames import CaseRecord, GroundTruth
from osp_pipeline.synthetic import CorpusSpec, generate_corpus

FAST = ForestParams(n_trees=15, seed=3)


def test_kfold_examples():
    f = kfold_split(["a"] * 10, 5, 0)
    assert sorted(Counter(f.fold_of.tolist()).values()) == [2] * 5
    assert sorted(np.concatenate([f.test_indices(i) for i in range(5)]).tolist()) == list(range(10))
    labels = ["A"] * 8 + ["B"] * 2
    g = kfold_split(labels, 5, 0)
    assert g.fold_of[8] != g.fold_of[9]
    assert np.array_equal(g.fold_of, kfold_split(labels, 5, 0).fold_of)
    with pytest.raises(TooFewSamples):
        kfold_split(["a"] * 3, 5, 0)


@given(st.lists(st.sampled_from("abcd"), min_size=5, max_size=80), st.integers(2, 5), st.integers(0, 1000))
def test_kfold_partition_and_balance(labels, k, seed):
    f = kfold_split(labels, k, seed)
    assert set(f.fold_of.tolist()) <= set(range(k))
    for i in range(k):
        assert np.intersect1d(f.train_indices(i), f.test_indices(i)).size == 0
        assert f.train_indices(i).size + f.test_indices(i).size == len(labels)
    for cls in set(labels):
        sizes = Counter(int(f.fold_of[i]) for i, l in enumerate(labels) if l == cls)
        per_fold = [sizes.get(i, 0) for i in range(k)]
        assert max(per_fold) - min(per_fold) <= 1
    overall = [int(np.sum(f.fold_of == i)) for i in range(k)]
    assert max(overall) - min(overall) <= 1


def test_median_and_iqr_examples():
    assert median_and_iqr(range(1, 9)) == (4.5, 3.5)
    assert median_and_iqr([5]) == (5.0, 0.0)
    with pytest.raises(EmptyList):
        median_and_iqr([])


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50), st.randoms())
def test_median_and_iqr_properties(values, rnd):
    med, iqr = median_and_iqr(values)
    shuffled = values[:]
    rnd.shuffle(shuffled)
    assert median_and_iqr(shuffled) == (med, iqr)
    assert iqr >= 0
    assert median_and_iqr([values[0]] * len(values)) == (values[0], 0.0)


def _table(ok_bad, classes, header):
    pred, truth = [], []
    for cls, (ok, bad) in zip(classes, ok_bad):
        other = [c for c in classes if c != cls][0]
        truth += [cls] * (ok + bad)
        pred += [cls] * ok + [other] * bad
    return confusion_table(pred, truth, classes, header)


def test_table_layouts():
    t1 = _table([(244, 3), (20, 13)], ("single", "twin"), "No. fetuses")
    assert t1.render().splitlines() == [
        "No. fetuses  Correct  Incorrect",
        "Single           244          3",
        "Twin              20         13",
    ]
    t2 = _table([(215, 1), (31, 0)], ("cephalic", "breech"), "Presentation")
    assert t2.render().splitlines() == [
        "Presentation  Correct  Incorrect",
        "Cephalic          215          1",
        "Breech             31          0",
    ]


def test_confusion_basics():
    t = confusion_table(["a", "b", "b"], ["a", "b", "b"], ("a", "b"))
    assert t.incorrect == {"a": 0, "b": 0} and t.correct == {"a": 1, "b": 2}
    with pytest.raises(LengthMismatch):
        confusion_table(["a"], [], ("a", "b"))


@pytest.fixture(scope="module")
def cv_report(small_corpus):
    return run_cross_validation(small_corpus, 5, FAST)


def test_cv_accounting_and_coverage(cv_report, small_corpus):
    r = cv_report
    assert r.accounting_ok()
    assert r.n_included + r.n_excluded + r.n_no_head_frames + r.n_twins == len(small_corpus)
    assert sorted(c.case_id for c in r.cases) == sorted(c.case.case_id for c in small_corpus)
    assert sum(f.n_test for f in r.folds) == len(small_corpus)
    rows = r.count_confusion.rows()
    assert sum(ok + bad for _, ok, bad in rows) == len(small_corpus) - r.n_segmentation_failed


def test_cv_no_leak(cv_report, small_corpus):
    folds = kfold_split([_stratum(c.case) for c in small_corpus], 5, 42)
    for info in cv_report.folds:
        train = folds.train_indices(info.fold)
        digest = hashlib.sha256(",".join(str(i) for i in sorted(train.tolist())).encode()).hexdigest()[:16]
        assert digest == info.train_checksum
        held = {small_corpus[i].case.case_id for i in folds.test_indices(info.fold)}
        assert {c.case_id for c in cv_report.cases if c.fold == info.fold} == held


def test_cv_noiseless_discordant_twins(cv_report):
    assert cv_report.count_by_scenario["twin_discordant"]["recall"] == 1.0
    assert cv_report.presentation_confusion.incorrect == {"cephalic": 0, "breech": 0}
    assert abs(cv_report.ga_overall.median_days) <= 1.0


def test_cv_determinism(cv_report, small_corpus):
    again = run_cross_validation(small_corpus, 5, FAST)
    assert again.dumps() == cv_report.dumps()
    assert again.cases_csv() == cv_report.cases_csv()
    obj = json.loads(cv_report.dumps())
    assert obj["schema"] == "eval-v1" and obj["k"] == 5


def test_cv_without_twins():
    corpus = generate_corpus(CorpusSpec({"singleton_cephalic": 6, "singleton_breech": 4}, seed=2,
                                        frames_per_sweep=(60, 100), max_masks=2))
    r = run_cross_validation(corpus, 2, ForestParams(n_trees=5))
    assert ("twin", 0, 0) in r.count_confusion.rows()
    assert r.n_twins == 0 and r.accounting_ok()
    assert "Twin" in r.render_text()


def test_cv_requires_truth(small_corpus):
    c = small_corpus[0].case
    bare = CaseRecord(c.case_id, c.probabilities, c.masks, c.pixel_spacing, None)
    with pytest.raises(MissingTruth):
        run_cross_validation([bare] + [x.case for x in small_corpus[1:]], 5, FAST)
    half = CaseRecord(c.case_id, c.probabilities, {}, c.pixel_spacing, GroundTruth(1, None, None))
    with pytest.raises(MissingTruth):
        run_cross_validation([half] * 5, 5, FAST)
