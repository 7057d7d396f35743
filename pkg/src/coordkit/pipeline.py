"""Two-stage inference: identify coordinator spans, then decode the
conjuncts of each effective target.

Target selection follows the labeling rules: paired-left spans are never
decoded on their own (the right half carries the conjuncts), and when a
respectively span is present the conjuncts decoded under the respectively
target are regrouped into the two inner coordinations, which become the
final result for those targets. Failures of the regrouping fall back to
decoding each inner coordinator independently.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from time import perf_counter
from typing import Sequence

from coordkit.encoder import build_detector_instance, project_labels_to_original
from coordkit.errors import CoordkitError, PairingError
from coordkit.models import DetectorModel, IdentifierModel
from coordkit.schema import (
    Coordination,
    CoordinatorSpan,
    SpanKind,
    Token,
    TokenSpan,
    decode_labels,
    make_tokens,
)
from coordkit.treebank import ConstTree, extract_coordinations, sentence_coordinators

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RespectivelyLink:
    """Indices of the two coordinations paired by a respectively span."""

    first: int
    second: int
    span: TokenSpan

    def to_obj(self) -> dict:
        return {"first": self.first, "second": self.second, "span": self.span.to_obj()}

    @classmethod
    def from_obj(cls, obj: dict) -> "RespectivelyLink":
        return cls(int(obj["first"]), int(obj["second"]), TokenSpan.from_obj(obj["span"]))


@dataclass(frozen=True)
class AnnotatedSentence:
    tokens: tuple[Token, ...]
    coordinators: tuple[CoordinatorSpan, ...]
    coordinations: tuple[Coordination, ...]
    respectively_links: tuple[RespectivelyLink, ...] = ()
    failures: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        spans = {(c.span.start, c.span.end) for c in self.coordinators}
        for coordination in self.coordinations:
            key = (coordination.target.span.start, coordination.target.span.end)
            if key not in spans:
                raise ValueError(f"coordination target {key} not among coordinators")
        starts = [c.target.span.start for c in self.coordinations]
        if starts != sorted(starts):
            raise ValueError("coordinations must be ordered by target start")

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]

    def to_obj(self) -> dict:
        return {
            "tokens": self.texts,
            "coordinators": [c.to_obj() for c in self.coordinators],
            "coordinations": [c.to_obj() for c in self.coordinations],
            "respectively_links": [l.to_obj() for l in self.respectively_links],
            "failures": list(self.failures),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "AnnotatedSentence":
        return cls(
            tokens=make_tokens(obj["tokens"]),
            coordinators=tuple(CoordinatorSpan.from_obj(c) for c in obj["coordinators"]),
            coordinations=tuple(Coordination.from_obj(c) for c in obj["coordinations"]),
            respectively_links=tuple(
                RespectivelyLink.from_obj(l) for l in obj.get("respectively_links", [])
            ),
            failures=tuple(obj.get("failures", [])),
        )


def respectively_pairing(
    conjuncts: Sequence[TokenSpan], coordinator_positions: Sequence[CoordinatorSpan]
) -> tuple[list[TokenSpan], list[TokenSpan]]:
    """Split respectively-target conjuncts into the two aligned groups.

    The split point is the widest gap between consecutive conjuncts lying
    strictly between the two inner coordinator spans (the verb region of
    the canonical pattern); ties take the first. Groups must have equal
    size; pairing is positional.
    """
    if len(coordinator_positions) != 2:
        raise PairingError(
            f"expected exactly two inner coordinators, got {len(coordinator_positions)}"
        )
    conjuncts = sorted(conjuncts)
    if len(conjuncts) < 2 or len(conjuncts) % 2 != 0:
        raise PairingError(f"cannot pair {len(conjuncts)} conjuncts into two equal groups")
    left, right = sorted(coordinator_positions, key=lambda c: c.span.start)
    lo, hi = left.span.end, right.span.start
    best_width = -1
    split_at = None
    for i in range(1, len(conjuncts)):
        gap_start = conjuncts[i - 1].end
        gap_end = conjuncts[i].start
        width = gap_end - gap_start
        if width <= 0 or gap_start < lo or gap_end > hi:
            continue
        if width > best_width:
            best_width = width
            split_at = i
    if split_at is None:
        raise PairingError("no conjunct gap between the two inner coordinators")
    group_a, group_b = conjuncts[:split_at], conjuncts[split_at:]
    if len(group_a) != len(group_b):
        raise PairingError(
            f"unequal groups: {len(group_a)} before the split vs {len(group_b)} after"
        )
    return list(group_a), list(group_b)


class Pipeline:
    """Holds the two trained models plus inference options."""

    def __init__(
        self,
        identifier: IdentifierModel,
        detector: DetectorModel,
    ):
        self.identifier = identifier
        self.detector = detector

    def recognize(
        self,
        tokens: Sequence[Token],
        gold_coordinators: Sequence[CoordinatorSpan] | None = None,
    ) -> AnnotatedSentence:
        return recognize(self.identifier, self.detector, tokens, gold_coordinators)


def _decode_target(
    detector: DetectorModel,
    tokens: Sequence[Token],
    target: CoordinatorSpan,
    coordinators: Sequence[CoordinatorSpan],
) -> Coordination:
    instance = build_detector_instance(
        tokens, target, coordinators, flag_mode=detector.flag_mode
    )
    marked_labels = detector.decode_instance(instance)
    labels = project_labels_to_original(instance.marked, marked_labels)
    return decode_labels(labels, target)


def recognize(
    identifier: IdentifierModel,
    detector: DetectorModel,
    tokens: Sequence[Token],
    gold_coordinators: Sequence[CoordinatorSpan] | None = None,
) -> AnnotatedSentence:
    """Full two-stage inference for one sentence."""
    tokens = tuple(tokens)
    if gold_coordinators is not None:
        coordinators = sorted(gold_coordinators, key=lambda c: (c.span.start, c.span.end))
    else:
        coordinators = identifier.identify(tokens)
    coordinations: list[Coordination] = []
    links: list[tuple[Coordination, Coordination, TokenSpan]] = []
    failures: list[str] = []

    respectively = next(
        (c for c in coordinators if c.kind is SpanKind.RESPECTIVELY), None
    )
    decode_targets = [c for c in coordinators if c.kind is not SpanKind.PAIRED_LEFT]

    handled: set[tuple[int, int]] = set()
    if respectively is not None:
        inner = [
            c
            for c in decode_targets
            if c.kind is not SpanKind.RESPECTIVELY and c.span.end <= respectively.span.start
        ][-2:]
        if len(inner) == 2:
            try:
                decoded = _decode_target(detector, tokens, respectively, coordinators)
                group_a, group_b = respectively_pairing(decoded.conjuncts, inner)
                coordinations.append(Coordination(inner[0], tuple(group_a)))
                coordinations.append(Coordination(inner[1], tuple(group_b)))
                links.append((coordinations[-2], coordinations[-1], respectively.span))
                handled.update(
                    {(s.span.start, s.span.end) for s in (inner[0], inner[1], respectively)}
                )
            except (PairingError, CoordkitError) as exc:
                log.warning(
                    "respectively regrouping failed (%s); falling back to per-target decodes",
                    exc,
                )
                failures.append(f"respectively@{respectively.span.start}: {exc}")
                handled.add((respectively.span.start, respectively.span.end))
        else:
            log.warning(
                "respectively span at %s without two inner coordinators; decoding others",
                respectively.span,
            )
            handled.add((respectively.span.start, respectively.span.end))

    for target in decode_targets:
        key = (target.span.start, target.span.end)
        if key in handled:
            continue
        try:
            coordinations.append(_decode_target(detector, tokens, target, coordinators))
        except CoordkitError as exc:
            failures.append(f"target@{target.span.start}: {exc}")

    coordinations.sort(key=lambda c: (c.target.span.start, c.target.span.end))
    link_objs = tuple(
        RespectivelyLink(coordinations.index(a), coordinations.index(b), span)
        for a, b, span in links
    )
    return AnnotatedSentence(
        tokens=tokens,
        coordinators=tuple(coordinators),
        coordinations=tuple(coordinations),
        respectively_links=link_objs,
        failures=tuple(failures),
    )


def recognize_batch(
    identifier: IdentifierModel,
    detector: DetectorModel,
    sentences: Sequence[Sequence[Token]],
    gold: Sequence[Sequence[CoordinatorSpan] | None] | None = None,
    threads: int = 1,
) -> list[AnnotatedSentence]:
    """Per-sentence recognition; order preserved regardless of thread count."""
    gold = gold if gold is not None else [None] * len(sentences)

    def work(pair):
        tokens, g = pair
        return recognize(identifier, detector, tokens, g)

    items = list(zip(sentences, gold))
    if threads <= 1:
        return [work(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, items))


@dataclass
class TimedResult:
    annotations: list[AnnotatedSentence]
    inference_seconds: float


def recognize_timed(
    identifier: IdentifierModel,
    detector: DetectorModel,
    sentences: Sequence[Sequence[Token]],
    gold: Sequence[Sequence[CoordinatorSpan] | None] | None = None,
    threads: int = 1,
) -> TimedResult:
    """Model time only; input preparation happens before the clock starts."""
    start = perf_counter()
    annotations = recognize_batch(identifier, detector, sentences, gold, threads)
    return TimedResult(annotations, perf_counter() - start)


def gold_annotation(tree: ConstTree) -> AnnotatedSentence:
    """Reference annotation in the same shape the pipeline produces.

    The respectively-target coordination exists only as a training
    instance; here its two inner coordinations stand with their own
    conjuncts, joined by a respectively link.
    """
    from coordkit.treebank import strip_empty_elements

    stripped = strip_empty_elements(tree)
    if stripped is None:
        return AnnotatedSentence(tokens=(), coordinators=(), coordinations=())
    tokens = make_tokens(stripped.leaf_texts())
    coordinations = extract_coordinations(stripped)
    coordinators = tuple(sentence_coordinators(coordinations))

    kept = [c for c in coordinations if c.target.kind is not SpanKind.RESPECTIVELY]
    kept.sort(key=lambda c: (c.target.span.start, c.target.span.end))
    links: list[RespectivelyLink] = []
    respectively = next(
        (c for c in coordinations if c.target.kind is SpanKind.RESPECTIVELY), None
    )
    if respectively is not None:
        conjunct_set = set(respectively.conjuncts)
        inner = [i for i, c in enumerate(kept) if set(c.conjuncts) <= conjunct_set]
        if len(inner) == 2:
            links.append(RespectivelyLink(inner[0], inner[1], respectively.target.span))
    return AnnotatedSentence(
        tokens=tokens,
        coordinators=coordinators,
        coordinations=tuple(kept),
        respectively_links=tuple(links),
    )
