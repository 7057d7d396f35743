import pytest

from coordkit.errors import DataError
from coordkit.evaluation import (
    MatchCounts,
    evaluate_dataset,
    evaluate_runs,
    score_annotations,
    span_prf,
)
from coordkit.pipeline import AnnotatedSentence
from coordkit.schema import Coordination, CoordinatorSpan, SpanKind, TokenSpan, make_tokens


def contiguous(start, end):
    return CoordinatorSpan(TokenSpan(start, end), SpanKind.CONTIGUOUS)


def coordination(target, *spans):
    return Coordination(target, tuple(TokenSpan(s, e) for s, e in spans))


def annotated(texts, coordinations):
    coordinators = tuple(c.target for c in coordinations)
    return AnnotatedSentence(
        tokens=make_tokens(texts),
        coordinators=coordinators,
        coordinations=tuple(coordinations),
    )


class TestSpanPrf:
    def test_exact_match(self):
        target = contiguous(2, 3)
        gold = [coordination(target, (0, 2), (3, 4))]
        counts = span_prf(gold, gold)
        assert (counts.precision, counts.recall, counts.f1) == (100.0, 100.0, 100.0)

    def test_off_by_one_of_four(self):
        target = contiguous(4, 5)
        gold = [coordination(target, (0, 1), (1, 2), (2, 3), (5, 6))]
        pred = [coordination(target, (0, 1), (1, 2), (2, 4), (5, 6))]
        counts = span_prf(gold, pred)
        assert counts.precision == 75.0
        assert counts.recall == 75.0

    def test_zero_predictions(self):
        target = contiguous(2, 3)
        gold = [coordination(target, (0, 2), (3, 4))]
        counts = span_prf(gold, [])
        assert counts.precision == 0.0
        assert counts.recall == 0.0
        assert counts.f1 == 0.0

    def test_wrong_target_never_matches(self):
        gold = [coordination(contiguous(2, 3), (0, 2), (3, 4))]
        pred = [coordination(contiguous(5, 6), (0, 2), (3, 4))]
        counts = span_prf(gold, pred)
        assert counts.matched == 0
        assert counts.predicted == 2

    def test_conjunct_permutation_symmetry(self):
        target = contiguous(4, 5)
        gold = [coordination(target, (0, 1), (2, 3), (5, 6))]
        pred_sorted = [coordination(target, (0, 1), (2, 3), (5, 6))]
        counts = span_prf(gold, pred_sorted)
        assert counts.matched == 3


class TestScoreAnnotations:
    def sentence(self, simple=True, correct=True):
        if simple:
            texts = ["a", "and", "b"]
            target = contiguous(1, 2)
        else:
            texts = ["a", "as", "well", "as", "b"]
            target = CoordinatorSpan(TokenSpan(1, 4), SpanKind.CONTIGUOUS)
        gold = annotated(texts, [coordination(target, (0, 1), (len(texts) - 1, len(texts)))])
        if correct:
            return gold, gold
        pred = annotated(texts, [coordination(target, (0, 1))])
        return gold, pred

    def test_perfect_prediction(self):
        gold, pred = self.sentence()
        report = score_annotations([gold], [pred])
        assert report.overall.f1 == 100.0
        assert report.subsets["Simple"].f1 == 100.0
        assert report.subsets["Complex"].gold == 0

    def test_subset_partition_sums(self):
        pairs = [self.sentence(simple=True), self.sentence(simple=False, correct=False)]
        golds = [g for g, _ in pairs]
        preds = [p for _, p in pairs]
        report = score_annotations(golds, preds)
        for attr in ("gold", "predicted", "matched"):
            assert getattr(report.overall, attr) == sum(
                getattr(report.subsets[s], attr) for s in ("Simple", "Complex")
            )

    def test_count_mismatch(self):
        gold, pred = self.sentence()
        with pytest.raises(DataError):
            score_annotations([gold], [pred, pred])

    def test_duplicate_correct_sentence_never_hurts(self):
        gold, pred = self.sentence(correct=False)
        base = score_annotations([gold], [pred])
        correct_gold, correct_pred = self.sentence(correct=True)
        more = score_annotations([gold, correct_gold], [pred, correct_pred])
        assert more.overall.precision >= base.overall.precision
        assert more.overall.recall >= base.overall.recall
        assert more.overall.f1 >= base.overall.f1

    def test_subset_filter(self):
        pairs = [self.sentence(simple=True), self.sentence(simple=False)]
        golds = [g for g, _ in pairs]
        preds = [p for _, p in pairs]
        simple_only = score_annotations(golds, preds, subset="simple")
        assert simple_only.subsets["Complex"].gold == 0
        assert simple_only.overall.gold == simple_only.subsets["Simple"].gold


class TestEvaluateDataset:
    def test_identity_pipeline_scores_100(self):
        gold = annotated(["a", "and", "b"], [coordination(contiguous(1, 2), (0, 1), (2, 3))])
        report = evaluate_dataset(lambda g: g, [gold] * 4)
        assert report.overall.f1 == 100.0
        assert report.inference_seconds > 0

    def test_report_serialization(self):
        gold = annotated(["a", "and", "b"], [coordination(contiguous(1, 2), (0, 1), (2, 3))])
        report = evaluate_dataset(lambda g: g, [gold])
        obj = report.to_obj()
        assert obj["overall"]["f1"] == 100.0
        assert "inference_seconds" in obj
        assert "inference_seconds" not in report.to_obj(include_timing=False)
        table = report.format_table()
        assert "Overall" in table and "Simple" in table

    def test_evaluate_runs_aggregates(self):
        gold = annotated(["a", "and", "b"], [coordination(contiguous(1, 2), (0, 1), (2, 3))])

        def factory(seed):
            return lambda g: g

        report = evaluate_runs(factory, [gold], seeds=[0, 1, 2])
        assert report.runs[0]["f1_mean"] == 100.0
        assert report.runs[0]["f1_std"] == 0.0

    def test_evaluate_runs_needs_seeds(self):
        with pytest.raises(DataError):
            evaluate_runs(lambda s: (lambda g: g), [], seeds=[])


class TestMatchCounts:
    def test_f1_identity(self):
        counts = MatchCounts(gold=4, predicted=4, matched=3)
        p, r = counts.precision, counts.recall
        assert counts.f1 == pytest.approx(2 * p * r / (p + r))

    def test_zero_safe(self):
        counts = MatchCounts()
        assert counts.precision == counts.recall == counts.f1 == 0.0
