"""Span-level exact-match scoring with a Simple/Complex breakdown.

A predicted conjunct span counts as matched only when an identical
(start, end) span appears in the gold coordination under the same target
coordinator span. Precision is matched over all predicted conjunct spans,
recall over all gold conjunct spans; with zero predictions precision is
defined as 0 so F1 stays total. Micro-averaged; the Simple subset holds
targets that are single-token and/but/or, everything else is Complex.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Callable, Sequence

from coordkit.errors import DataError
from coordkit.pipeline import AnnotatedSentence
from coordkit.schema import Coordination
from coordkit.treebank import classify_complexity

SUBSETS = ("Simple", "Complex")


@dataclass
class MatchCounts:
    gold: int = 0
    predicted: int = 0
    matched: int = 0

    def add(self, other: "MatchCounts") -> None:
        self.gold += other.gold
        self.predicted += other.predicted
        self.matched += other.matched

    @property
    def precision(self) -> float:
        return 100.0 * self.matched / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return 100.0 * self.matched / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_obj(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "gold": self.gold,
            "predicted": self.predicted,
            "matched": self.matched,
        }


def span_prf(
    gold: Sequence[Coordination], pred: Sequence[Coordination]
) -> MatchCounts:
    """Exact-match conjunct counts for one sentence, aligned by target span."""
    counts = MatchCounts()
    gold_by_target = {
        (c.target.span.start, c.target.span.end): set(c.conjuncts) for c in gold
    }
    pred_by_target = {
        (c.target.span.start, c.target.span.end): set(c.conjuncts) for c in pred
    }
    counts.gold = sum(len(v) for v in gold_by_target.values())
    counts.predicted = sum(len(v) for v in pred_by_target.values())
    for key, pred_spans in pred_by_target.items():
        gold_spans = gold_by_target.get(key)
        if gold_spans:
            counts.matched += len(pred_spans & gold_spans)
    return counts


@dataclass
class EvalReport:
    overall: MatchCounts
    subsets: dict[str, MatchCounts]
    inference_seconds: float | None = None
    runs: list[dict] | None = None

    def to_obj(self, include_timing: bool = True) -> dict:
        obj = {
            "overall": self.overall.to_obj(),
            "subsets": {name: c.to_obj() for name, c in self.subsets.items()},
        }
        if include_timing and self.inference_seconds is not None:
            obj["inference_seconds"] = self.inference_seconds
        if self.runs is not None:
            obj["runs"] = self.runs
        return obj

    def format_table(self) -> str:
        rows = [("Overall", self.overall)] + [(n, self.subsets[n]) for n in SUBSETS]
        lines = [f"{'Subset':<10} {'P':>7} {'R':>7} {'F1':>7} {'Gold':>6} {'Pred':>6} {'Match':>6}"]
        for name, c in rows:
            lines.append(
                f"{name:<10} {c.precision:>7.1f} {c.recall:>7.1f} {c.f1:>7.1f}"
                f" {c.gold:>6d} {c.predicted:>6d} {c.matched:>6d}"
            )
        if self.inference_seconds is not None:
            lines.append(f"Time: {self.inference_seconds:.3f}s")
        return "\n".join(lines)


def _subset_of(target, texts) -> str:
    return classify_complexity(target, texts)


def score_annotations(
    golds: Sequence[AnnotatedSentence],
    preds: Sequence[AnnotatedSentence],
    subset: str = "all",
) -> EvalReport:
    """Micro-averaged scores over aligned gold/predicted annotations."""
    if len(golds) != len(preds):
        raise DataError(f"sentence count mismatch: {len(golds)} gold vs {len(preds)} predicted")
    overall = MatchCounts()
    subsets = {name: MatchCounts() for name in SUBSETS}
    for gold, pred in zip(golds, preds):
        if gold.texts != pred.texts:
            raise DataError(
                f"token mismatch between gold and prediction: {gold.texts} vs {pred.texts}"
            )
        by_subset: dict[str, tuple[list[Coordination], list[Coordination]]] = {
            name: ([], []) for name in SUBSETS
        }
        gold_targets = {}
        for c in gold.coordinations:
            name = _subset_of(c.target, gold.texts)
            by_subset[name][0].append(c)
            gold_targets[(c.target.span.start, c.target.span.end)] = name
        for c in pred.coordinations:
            key = (c.target.span.start, c.target.span.end)
            name = gold_targets.get(key) or _subset_of(c.target, pred.texts)
            by_subset[name][1].append(c)
        for name, (g, p) in by_subset.items():
            if subset != "all" and name.lower() != subset.lower():
                continue
            counts = span_prf(g, p)
            subsets[name].add(counts)
            overall.add(counts)
    return EvalReport(overall=overall, subsets=subsets)


def evaluate_dataset(
    recognize_fn: Callable[[AnnotatedSentence], AnnotatedSentence],
    golds: Sequence[AnnotatedSentence],
    subset: str = "all",
) -> EvalReport:
    """Run the pipeline over the gold sentences and score it.

    recognize_fn maps a gold AnnotatedSentence to a prediction (it may read
    the gold coordinators when evaluating with oracle spans). Only the
    recognize_fn calls are timed.
    """
    from time import perf_counter

    preds: list[AnnotatedSentence] = []
    start = perf_counter()
    for gold in golds:
        preds.append(recognize_fn(gold))
    elapsed = perf_counter() - start
    report = score_annotations(golds, preds, subset)
    report.inference_seconds = elapsed
    return report


def evaluate_runs(
    factory: Callable[[int], Callable[[AnnotatedSentence], AnnotatedSentence]],
    golds: Sequence[AnnotatedSentence],
    seeds: Sequence[int],
    subset: str = "all",
) -> EvalReport:
    """Retrain with each seed, evaluate, and aggregate mean/std of F1.

    The returned report carries the last run's counts plus a `runs` summary
    (per-seed P/R/F1 and mean/std of overall F1).
    """
    if not seeds:
        raise DataError("evaluate_runs requires at least one seed")
    reports = []
    for seed in seeds:
        recognize_fn = factory(seed)
        reports.append(evaluate_dataset(recognize_fn, golds, subset))
    f1s = [r.overall.f1 for r in reports]
    summary = {
        "seeds": list(seeds),
        "f1": f1s,
        "f1_mean": statistics.fmean(f1s),
        "f1_std": statistics.pstdev(f1s) if len(f1s) > 1 else 0.0,
    }
    final = reports[-1]
    final.runs = [summary]
    return final
