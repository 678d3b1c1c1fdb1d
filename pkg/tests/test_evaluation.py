import numpy as np
import pytest

from wellmon.evaluation import (
    ConfusionMatrix,
    MethodReport,
    accuracy,
    compare,
    confusion,
    format_table,
    precision_recall_f1,
    reports_to_csv,
    score_predictions,
)

from conftest import random_segments


# ---------------------------------------------------------------------------
# confusion matrix
# ---------------------------------------------------------------------------

def test_all_positive():
    cm = confusion([1, 1, 1], [1, 1, 1])
    assert (cm.tp, cm.fp, cm.fn, cm.tn) == (3, 0, 0, 0)


def test_complement_predictions():
    cm = confusion([1, 0, 1], [0, 1, 0])
    assert cm.tp == 0 and cm.tn == 0
    assert cm.fp == 2 and cm.fn == 1


def test_hand_enumeration():
    cm = confusion([1, 1, 0, 0], [1, 0, 0, 1])
    assert (cm.tp, cm.fp, cm.fn, cm.tn) == (1, 1, 1, 1)
    assert cm.total == 4


def test_confusion_errors():
    with pytest.raises(ValueError):
        confusion([1, 0], [1])
    with pytest.raises(ValueError):
        confusion([], [])
    with pytest.raises(ValueError):
        ConfusionMatrix(1, -1, 0, 0)


def test_swapping_positive_class(rng):
    pred = rng.integers(0, 2, 50)
    truth = rng.integers(0, 2, 50)
    cm = confusion(pred, truth)
    swapped = confusion(1 - pred, 1 - truth)
    assert (swapped.tp, swapped.fp, swapped.fn, swapped.tn) == (
        cm.tn, cm.fn, cm.fp, cm.tp,
    )
    p_swapped = precision_recall_f1(swapped).precision
    if cm.tn + cm.fn > 0:
        assert p_swapped == pytest.approx(cm.tn / (cm.tn + cm.fn))


# ---------------------------------------------------------------------------
# precision / recall / F1
# ---------------------------------------------------------------------------

def test_prf_hand_value():
    scores = precision_recall_f1(ConfusionMatrix(tp=1, fp=1, fn=1, tn=0))
    assert scores.precision == pytest.approx(0.5)
    assert scores.recall == pytest.approx(0.5)
    assert scores.f1 == pytest.approx(0.5)
    assert not scores.degenerate


def test_prf_perfect():
    scores = precision_recall_f1(ConfusionMatrix(tp=5, fp=0, fn=0, tn=5))
    assert scores == (1.0, 1.0, 1.0, False)


def test_prf_degenerate_flag():
    scores = precision_recall_f1(ConfusionMatrix(tp=0, fp=0, fn=3, tn=2))
    assert scores.precision == 0.0
    assert scores.recall == 0.0
    assert scores.f1 == 0.0
    assert scores.degenerate


def test_f1_harmonic_identity(rng):
    for _ in range(100):
        cm = ConfusionMatrix(*(int(v) for v in rng.integers(0, 20, 4)))
        if cm.total == 0:
            continue
        scores = precision_recall_f1(cm)
        assert 0.0 <= scores.precision <= 1.0
        assert 0.0 <= scores.recall <= 1.0
        if scores.precision + scores.recall > 0:
            expected = (
                2.0 * scores.precision * scores.recall
                / (scores.precision + scores.recall)
            )
            assert scores.f1 == pytest.approx(expected, abs=1e-12)
        else:
            assert scores.f1 == 0.0


# ---------------------------------------------------------------------------
# accuracy
# ---------------------------------------------------------------------------

def test_accuracy_values():
    assert accuracy([1, 0, 1], [1, 0, 1]) == 1.0
    assert accuracy([1, 0], [0, 0]) == 0.5
    # large-split arithmetic: 1232 of 1236 test segments correct
    pred = np.ones(1236, dtype=int)
    truth = np.ones(1236, dtype=int)
    truth[:4] = 0
    assert accuracy(pred, truth) == pytest.approx(0.99676, abs=5e-6)


def test_accuracy_consistent_with_confusion(rng):
    pred = rng.integers(0, 2, 80)
    truth = rng.integers(0, 2, 80)
    cm = confusion(pred, truth)
    assert accuracy(pred, truth) == pytest.approx((cm.tp + cm.tn) / cm.total)


# ---------------------------------------------------------------------------
# compare harness
# ---------------------------------------------------------------------------

class MajorityPipeline:
    """Degenerate pipeline predicting the majority training label."""

    def __init__(self, name):
        self.name = name

    def fit(self, segments):
        labels = [int(s.label) for s in segments]
        self.majority_ = int(sum(labels) * 2 >= len(labels))
        return self

    def predict(self, segments):
        return np.full(len(segments), self.majority_, dtype=int)

    def describe(self):
        return "majority vote"


class OraclePipeline(MajorityPipeline):
    def predict(self, segments):
        return np.array([int(s.label) for s in segments])


def test_compare_runs_and_times(rng):
    segments = random_segments(rng, 20)
    reports = compare(
        [MajorityPipeline("majority"), OraclePipeline("oracle")],
        segments[:14],
        segments[14:],
    )
    assert [r.method for r in reports] == ["majority", "oracle"]
    assert reports[1].accuracy == 1.0
    assert reports[1].precision == 1.0
    for r in reports:
        assert r.train_time_ms >= 0.0
        assert r.test_time_ms >= 0.0


def test_compare_identical_methods_equal_metrics(rng):
    segments = random_segments(rng, 16)
    reports = compare(
        [MajorityPipeline("a"), MajorityPipeline("b")], segments[:10], segments[10:]
    )
    assert reports[0].accuracy == reports[1].accuracy
    assert reports[0].f1 == reports[1].f1


def test_single_method_single_row(rng, tmp_path):
    segments = random_segments(rng, 12)
    reports = compare([OraclePipeline("only")], segments[:8], segments[8:])
    assert len(reports) == 1
    path = tmp_path / "report.csv"
    reports_to_csv(reports, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "method,precision,recall,f1,accuracy,train_ms,test_ms,config"
    assert len(lines) == 2
    assert lines[1].startswith("only,")


def test_format_table_alignment():
    reports = [
        MethodReport("logreg", 1.0, 0.5, 2.0 / 3.0, 0.75, 12.0, 0.5, "cov+pca(4)"),
        MethodReport("cnn", 1.0, 1.0, 1.0, 1.0, 30000.0, 30.5, "raw"),
    ]
    table = format_table(reports)
    lines = table.splitlines()
    assert lines[0].startswith("method")
    assert len(lines) == 4  # header, rule, two rows
    assert "logreg" in lines[2] and "cnn" in lines[3]


def test_score_predictions_carries_config():
    report = score_predictions("svm", [1, 0], [1, 1], 5.0, 1.0, config="C=1")
    assert report.method == "svm"
    assert report.config == "C=1"
    assert report.recall == pytest.approx(0.5)
