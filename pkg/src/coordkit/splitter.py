"""Generate simple, non-conjunctive sub-sentences from recognized
coordinations.

Each coordination is expanded by replacing its full region (conjuncts,
separators, coordinator, and a paired left half when present) with one
conjunct at a time. Respectively-linked coordination pairs expand jointly:
the i-th conjunct of the first group is substituted together with the i-th
of the second, and the respectively token (plus an immediately preceding
comma) is removed, giving |A| sub-sentences rather than |A| x |B|. Nested
coordinations expand within the chosen conjunct of their parent only.
Substitution is purely token-level: no agreement or casing repair.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable, Iterator

from coordkit.errors import SchemaError
from coordkit.jsonio import canonical_dumps
from coordkit.pipeline import AnnotatedSentence
from coordkit.schema import Coordination, Token, TokenSpan, make_tokens

log = logging.getLogger(__name__)


@dataclass
class _Unit:
    """One expansion step: a coordination or a respectively-linked pair."""

    indices: tuple[int, ...]  # positions in AnnotatedSentence.coordinations
    coordinations: tuple[Coordination, ...]
    extra_deletions: frozenset[int] = frozenset()

    @property
    def hull(self) -> TokenSpan:
        spans = [self._region(c) for c in self.coordinations]
        return TokenSpan(min(s.start for s in spans), max(s.end for s in spans))

    @staticmethod
    def _region(coordination: Coordination) -> TokenSpan:
        spans = list(coordination.conjuncts) + [coordination.target.span]
        if coordination.target.partner is not None:
            spans.append(coordination.target.partner)
        return TokenSpan(min(s.start for s in spans), max(s.end for s in spans))

    def conjunct_options(self) -> list[tuple[int, frozenset[int], list[TokenSpan]]]:
        """(conjunct index, deletions, kept conjunct spans) per choice."""
        options = []
        n = len(self.coordinations[0].conjuncts)
        for k in range(n):
            deleted: set[int] = set(self.extra_deletions)
            kept: list[TokenSpan] = []
            for coordination in self.coordinations:
                region = self._region(coordination)
                chosen = coordination.conjuncts[k]
                deleted.update(i for i in region if not chosen.contains(i))
                kept.append(chosen)
            options.append((k, frozenset(deleted), kept))
        return options


def _build_units(annotated: AnnotatedSentence) -> list[_Unit]:
    paired = {}
    for link in annotated.respectively_links:
        paired[link.first] = link
    units: list[_Unit] = []
    consumed: set[int] = set()
    for i, coordination in enumerate(annotated.coordinations):
        if i in consumed:
            continue
        if not coordination.conjuncts:
            continue
        for span in coordination.conjuncts:
            if span.end > len(annotated.tokens):
                raise SchemaError(f"conjunct {span} outside sentence of length {len(annotated.tokens)}")
        link = paired.get(i)
        if link is not None and link.second < len(annotated.coordinations):
            second = annotated.coordinations[link.second]
            if len(second.conjuncts) == len(coordination.conjuncts) and second.conjuncts:
                extra = set(link.span)
                before = link.span.start - 1
                if 0 <= before < len(annotated.tokens) and annotated.tokens[before].text == ",":
                    extra.add(before)
                units.append(
                    _Unit(
                        indices=(i, link.second),
                        coordinations=(coordination, second),
                        extra_deletions=frozenset(extra),
                    )
                )
                consumed.add(link.second)
                continue
        units.append(_Unit(indices=(i,), coordinations=(coordination,)))
    return units


def _plan_forest(units: list[_Unit]) -> tuple[list[_Unit], dict[int, list[_Unit]], list[str]]:
    """Containment forest over units; conflicting units are dropped.

    A unit nests under another when its hull lies inside one conjunct of
    the other; hull overlap without such containment is a conflict
    (an artifact of model error) and drops the later unit with a warning.
    """
    ordered = sorted(units, key=lambda u: (u.hull.start, -len(u.hull)))
    kept: list[_Unit] = []
    children: dict[int, list[_Unit]] = {}
    warnings: list[str] = []
    for unit in ordered:
        hull = unit.hull
        parent: _Unit | None = None
        parent_conjunct: TokenSpan | None = None
        conflict = False
        for other in kept:
            if not hull.overlaps(other.hull):
                continue
            containing = None
            for coordination in other.coordinations:
                for conjunct in coordination.conjuncts:
                    if conjunct.covers(hull):
                        if containing is None or len(conjunct) < len(containing):
                            containing = conjunct
            if containing is None:
                warnings.append(
                    f"coordination at {hull} overlaps {other.hull} without nesting; dropped"
                )
                conflict = True
                break
            if parent_conjunct is None or len(containing) < len(parent_conjunct):
                parent = other
                parent_conjunct = containing
        if conflict:
            continue
        kept.append(unit)
        children.setdefault(id(parent), []).append(unit)
    top = children.get(id(None), [])
    return top, children, warnings


@dataclass(frozen=True)
class Expansion:
    path: tuple[tuple[int, int], ...]  # (coordination_index, conjunct_index)
    deletions: frozenset[int]


def _expand_unit(unit: _Unit, children: dict[int, list[_Unit]]) -> list[Expansion]:
    out: list[Expansion] = []
    nested = children.get(id(unit), [])
    for k, deletions, kept_spans in unit.conjunct_options():
        inside = [
            child
            for child in nested
            if any(span.covers(child.hull) for span in kept_spans)
        ]
        path = tuple((idx, k) for idx in unit.indices)
        for sub in _expand_level(inside, children):
            out.append(Expansion(path + sub.path, deletions | sub.deletions))
    return out


def _expand_level(units: list[_Unit], children: dict[int, list[_Unit]]) -> list[Expansion]:
    result = [Expansion((), frozenset())]
    for unit in sorted(units, key=lambda u: u.hull.start):
        expanded = _expand_unit(unit, children)
        result = [
            Expansion(prefix.path + choice.path, prefix.deletions | choice.deletions)
            for prefix in result
            for choice in expanded
        ]
    return result


@dataclass(frozen=True)
class SubSentence:
    tokens: tuple[Token, ...]
    path: tuple[tuple[int, int], ...]

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]


def split_annotated(annotated: AnnotatedSentence) -> list[SubSentence]:
    """All sub-sentences with their substitution paths, duplicates removed."""
    units = _build_units(annotated)
    if not units:
        return [SubSentence(tokens=annotated.tokens, path=())]
    top, children, warnings = _plan_forest(units)
    for message in warnings:
        log.warning("%s", message)
    if not top:
        return [SubSentence(tokens=annotated.tokens, path=())]
    texts = annotated.texts
    out: list[SubSentence] = []
    seen: set[tuple[str, ...]] = set()
    for expansion in _expand_level(top, children):
        kept = tuple(t for i, t in enumerate(texts) if i not in expansion.deletions)
        if kept in seen:
            continue
        seen.add(kept)
        out.append(SubSentence(tokens=make_tokens(kept), path=expansion.path))
    return out


def split_sentence(annotated: AnnotatedSentence) -> list[list[Token]]:
    """Plain token-list view of split_annotated."""
    return [list(s.tokens) for s in split_annotated(annotated)]


def split_corpus(lines: Iterable[str]) -> Iterator[tuple[str, int, list]]:
    """Stream JSONL annotated sentences into sub-sentence JSONL objects.

    Yields ("json", lineno, [objects]) for good lines and ("warning",
    lineno, [message]) for malformed ones; the caller decides where each
    stream goes. Constant memory per sentence.
    """
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            annotated = AnnotatedSentence.from_obj(obj)
        except Exception as exc:  # malformed line: count, keep streaming
            yield ("warning", lineno, [f"line {lineno}: {exc}"])
            continue
        source_id = obj.get("id", lineno)
        objects = []
        for sub in split_annotated(annotated):
            objects.append(
                {
                    "source_id": source_id,
                    "tokens": sub.texts,
                    "path": [
                        {"coordination_index": ci, "conjunct_index": ki}
                        for ci, ki in sub.path
                    ],
                }
            )
        yield ("json", lineno, objects)


def split_corpus_to_strings(lines: Iterable[str]) -> Iterator[tuple[str, str]]:
    """Convenience wrapper emitting ("out"|"warn", text) pairs."""
    for kind, _, payload in split_corpus(lines):
        if kind == "json":
            for obj in payload:
                yield "out", canonical_dumps(obj)
        else:
            yield "warn", payload[0]
