"""Bracketed-tree ingestion and gold-label generation.

Coordinator spans are constituents tagged CC or CONJP; their conjuncts are
the sibling constituents, minus punctuation-only siblings, other
coordinators, and adverb-only interjections. Paired coordinators
(either...or, not only...but also) are folded into a single coordination
targeting the right span; the pattern "...and...and...respectively" adds a
coordination targeting the respectively token whose conjuncts are those of
both inner coordinations.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Iterator, Sequence

from coordkit.errors import SchemaError, TreeParseError
from coordkit.schema import (
    Coordination,
    CoordinatorSpan,
    DetectorLabel,
    IdentifierLabel,
    SpanKind,
    Token,
    TokenSpan,
    decode_labels,
    detector_label_from_str,
    detector_label_str,
    encode_labels,
    identifier_labels_for,
    make_tokens,
    to_conll,
    validate_labels,
)

log = logging.getLogger(__name__)

COORDINATOR_TAGS = frozenset({"CC", "CONJP"})
# Punctuation POS tags excluded from conjunct candidates.
PUNCT_TAGS = frozenset({",", ".", ":", ";", "--", "''", "``", "-LRB-", "-RRB-", "#", "$", "SYM"})
ADVERB_TAGS = frozenset({"RB", "RBR", "RBS"})
EMPTY_TAG = "-NONE-"

_TOKEN_UNESCAPES = {
    "-LRB-": "(",
    "-RRB-": ")",
    "-LCB-": "{",
    "-RCB-": "}",
}

RESPECTIVELY = "respectively"


def load_paired_left_lexicon(path: str | None = None) -> frozenset[str]:
    """Left-half lexicon for paired coordinators; a config file, not code."""
    if path is None:
        text = resources.files("coordkit.data").joinpath("paired_left.txt").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    entries = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            entries.append(line.lower())
    return frozenset(entries)


PAIRED_LEFT_LEXICON = load_paired_left_lexicon()


@dataclass
class ConstTree:
    """Constituency tree node; terminals carry the token text."""

    label: str
    children: list["ConstTree"] = field(default_factory=list)
    token: str | None = None

    @property
    def is_terminal(self) -> bool:
        return not self.children

    def terminals(self) -> Iterator["ConstTree"]:
        if self.is_terminal:
            yield self
        else:
            for child in self.children:
                yield from child.terminals()

    def leaf_texts(self) -> list[str]:
        return [t.token or "" for t in self.terminals()]

    def leaf_count(self) -> int:
        return sum(1 for _ in self.terminals())

    def to_bracketed(self) -> str:
        if self.is_terminal:
            return f"({self.label} {self.token})"
        inner = " ".join(c.to_bracketed() for c in self.children)
        return f"({self.label} {inner})"


def parse_bracketed(text: str) -> ConstTree:
    """Parse one parenthesized tree; reports a byte offset on failure."""
    pos = 0
    n = len(text)

    def skip_ws() -> None:
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def read_atom() -> str:
        nonlocal pos
        start = pos
        while pos < n and not text[pos].isspace() and text[pos] not in "()":
            pos += 1
        return text[start:pos]

    def parse_node() -> ConstTree:
        nonlocal pos
        skip_ws()
        if pos >= n or text[pos] != "(":
            raise TreeParseError(pos, "expected '('")
        pos += 1
        skip_ws()
        label = read_atom()
        skip_ws()
        children: list[ConstTree] = []
        token: str | None = None
        while True:
            if pos >= n:
                raise TreeParseError(pos, "unexpected end of input")
            ch = text[pos]
            if ch == "(":
                if token is not None:
                    raise TreeParseError(pos, "constituent mixes token and children")
                children.append(parse_node())
                skip_ws()
            elif ch == ")":
                pos += 1
                break
            else:
                if children or token is not None:
                    raise TreeParseError(pos, "constituent mixes token and children")
                token = read_atom()
                skip_ws()
        if token is None and not children:
            raise TreeParseError(pos - 1, "empty constituent")
        if not label and not children:
            raise TreeParseError(pos - 1, "constituent without a label")
        if token is not None:
            token = _TOKEN_UNESCAPES.get(token, token)
        return ConstTree(label=label, children=children, token=token)

    root = parse_node()
    skip_ws()
    if pos != n:
        raise TreeParseError(pos, "trailing content after tree")
    # Treebank exports often wrap the sentence in an anonymous "( ... )".
    if not root.label and len(root.children) == 1:
        root = root.children[0]
    if not root.label:
        raise TreeParseError(0, "root constituent without a label")
    return root


def iter_tree_blocks(text: str) -> Iterator[tuple[int, str]]:
    """Yield (starting line number, block) for blank-line separated trees."""
    block: list[str] = []
    start_line = 1
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            if not block:
                start_line = lineno
            block.append(line)
        elif block:
            yield start_line, "\n".join(block)
            block = []
    if block:
        yield start_line, "\n".join(block)


def read_treebank(text: str) -> list[ConstTree]:
    return [parse_bracketed(block) for _, block in iter_tree_blocks(text)]


def strip_empty_elements(tree: ConstTree) -> ConstTree | None:
    """Drop -NONE- leaves (traces) and any constituent emptied by the drop."""
    if tree.is_terminal:
        return None if tree.label == EMPTY_TAG else tree
    kept = [c for c in (strip_empty_elements(ch) for ch in tree.children) if c is not None]
    if not kept:
        return None
    return ConstTree(label=tree.label, children=kept, token=None)


@dataclass(frozen=True)
class _Constituent:
    node: ConstTree
    span: TokenSpan


def _child_spans(tree: ConstTree) -> Iterator[tuple[ConstTree, list[_Constituent]]]:
    """Yield (node, children with token spans) for every internal node."""

    def walk(node: ConstTree, start: int) -> int:
        if node.is_terminal:
            return start + 1
        entries: list[_Constituent] = []
        cursor = start
        for child in node.children:
            end = walk(child, cursor)
            entries.append(_Constituent(child, TokenSpan(cursor, end)))
            cursor = end
        results.append((node, entries))
        return cursor

    results: list[tuple[ConstTree, list[_Constituent]]] = []
    walk(tree, 0)
    yield from results


def _is_punctuation_only(node: ConstTree) -> bool:
    return all(t.label in PUNCT_TAGS for t in node.terminals())


def _is_adverb_only(node: ConstTree) -> bool:
    tags = [t.label for t in node.terminals() if t.label not in PUNCT_TAGS]
    return bool(tags) and all(t in ADVERB_TAGS for t in tags)


def _node_text(node: ConstTree) -> str:
    return " ".join(node.leaf_texts())


def extract_coordinations(tree: ConstTree) -> list[Coordination]:
    """Gold coordinations of a tree, sorted by target span.

    Every CC/CONJP constituent yields one coordination unless it has no
    qualifying sibling on both sides (dropped with a warning) or it is the
    left half of a paired coordinator (folded into the right half's
    coordination). A detected respectively pattern appends one additional
    coordination targeting the respectively token.
    """
    stripped = strip_empty_elements(tree)
    if stripped is None:
        return []
    leaf_texts = stripped.leaf_texts()
    coordinations: list[Coordination] = []

    for parent, entries in _child_spans(stripped):
        coord_positions = [
            i for i, e in enumerate(entries) if e.node.label in COORDINATOR_TAGS
        ]
        if not coord_positions:
            continue
        qualifying = [
            e
            for i, e in enumerate(entries)
            if i not in coord_positions
            and not _is_punctuation_only(e.node)
            and not _is_adverb_only(e.node)
        ]
        consumed_as_left: dict[int, int] = {}
        for slot, i in enumerate(coord_positions):
            entry = entries[i]
            text = _node_text(entry.node).lower()
            before = [q for q in qualifying if q.span.end <= entry.span.start]
            if (
                text in PAIRED_LEFT_LEXICON
                and not before
                and slot + 1 < len(coord_positions)
            ):
                consumed_as_left[coord_positions[slot + 1]] = i

        for i in coord_positions:
            entry = entries[i]
            if any(left == i for left in consumed_as_left.values()):
                continue
            before = [q.span for q in qualifying if q.span.end <= entry.span.start]
            after = [q.span for q in qualifying if q.span.start >= entry.span.end]
            left_idx = consumed_as_left.get(i)
            if left_idx is not None:
                left_span = entries[left_idx].span
                before = [s for s in before if s.start >= left_span.end]
                target = CoordinatorSpan(entry.span, SpanKind.PAIRED_RIGHT, partner=left_span)
            else:
                target = CoordinatorSpan(entry.span, SpanKind.CONTIGUOUS)
            if not before or not after:
                log.warning(
                    "dropping coordinator %r at %s: no qualifying sibling on both sides",
                    _node_text(entry.node),
                    entry.span,
                )
                continue
            coordinations.append(
                Coordination(target=target, conjuncts=tuple(sorted(before + after)))
            )

    respectively = _respectively_coordination(leaf_texts, coordinations)
    if respectively is not None:
        coordinations.append(respectively)
    coordinations.sort(key=lambda c: (c.target.span.start, c.target.span.end))
    return coordinations


def _respectively_coordination(
    leaf_texts: Sequence[str], coordinations: Sequence[Coordination]
) -> Coordination | None:
    """Detect '...and...and...respectively' and build its extra coordination.

    Requires at least two coordinations of equal conjunct count lying
    entirely before the respectively token; otherwise the token is treated
    as a plain adverb.
    """
    try:
        r = next(i for i, t in enumerate(leaf_texts) if t.lower() == RESPECTIVELY)
    except StopIteration:
        return None
    eligible = sorted(
        (
            c
            for c in coordinations
            if c.target.kind is SpanKind.CONTIGUOUS
            and c.target.span.end <= r
            and all(s.end <= r for s in c.conjuncts)
        ),
        key=lambda c: (c.target.span.start, c.target.span.end),
    )
    if len(eligible) < 2:
        return None
    first, second = eligible[-2], eligible[-1]
    if len(first.conjuncts) != len(second.conjuncts):
        return None
    conjuncts = sorted(first.conjuncts + second.conjuncts)
    target = CoordinatorSpan(TokenSpan(r, r + 1), SpanKind.RESPECTIVELY)
    try:
        return Coordination(target=target, conjuncts=tuple(conjuncts))
    except ValueError:
        # Overlapping inner coordinations (nesting); not the canonical pattern.
        return None


@dataclass(frozen=True)
class TrainingInstance:
    """One detector training instance plus the shared identifier labels."""

    tokens: tuple[Token, ...]
    target: CoordinatorSpan
    all_coordinators: tuple[CoordinatorSpan, ...]
    detector_labels: tuple[DetectorLabel, ...]
    identifier_labels: tuple[IdentifierLabel, ...]

    def __post_init__(self) -> None:
        if len(self.detector_labels) != len(self.tokens):
            raise ValueError("detector label count must equal token count")
        if len(self.identifier_labels) != len(self.tokens):
            raise ValueError("identifier label count must equal token count")
        result = validate_labels(self.detector_labels, self.target)
        if not result.valid:
            first = result.violations[0]
            raise ValueError(f"invalid gold labels at {first.index}: {first.message}")
        expected = identifier_labels_for(len(self.tokens), self.all_coordinators)
        if list(self.identifier_labels) != expected:
            raise ValueError("identifier labels do not match coordinator spans")

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]

    def coordination(self) -> Coordination:
        return decode_labels(self.detector_labels, self.target)

    def to_obj(self) -> dict:
        return {
            "tokens": self.texts,
            "target": self.target.to_obj(),
            "coordinators": [c.to_obj() for c in self.all_coordinators],
            "labels": [detector_label_str(l) for l in self.detector_labels],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "TrainingInstance":
        tokens = make_tokens(obj["tokens"])
        coordinators = tuple(CoordinatorSpan.from_obj(c) for c in obj["coordinators"])
        return cls(
            tokens=tokens,
            target=CoordinatorSpan.from_obj(obj["target"]),
            all_coordinators=coordinators,
            detector_labels=tuple(detector_label_from_str(l) for l in obj["labels"]),
            identifier_labels=tuple(identifier_labels_for(len(tokens), coordinators)),
        )


def sentence_coordinators(coordinations: Sequence[Coordination]) -> list[CoordinatorSpan]:
    """Every coordinator span of a sentence: targets plus paired left halves."""
    spans: list[CoordinatorSpan] = []
    seen: set[tuple[int, int]] = set()
    for coord in coordinations:
        target = coord.target
        if target.kind is SpanKind.PAIRED_RIGHT and target.partner is not None:
            left = CoordinatorSpan(target.partner, SpanKind.PAIRED_LEFT, partner=target.span)
            if (left.span.start, left.span.end) not in seen:
                spans.append(left)
                seen.add((left.span.start, left.span.end))
        if (target.span.start, target.span.end) not in seen:
            spans.append(target)
            seen.add((target.span.start, target.span.end))
    spans.sort(key=lambda c: (c.span.start, c.span.end))
    return spans


def generate_instances(tree: ConstTree) -> list[TrainingInstance]:
    """Detector instances for one tree: one per contiguous coordinator, two
    per paired coordinator (the left-target instance carries no conjuncts),
    and one extra targeting respectively when the pattern applies."""
    stripped = strip_empty_elements(tree)
    if stripped is None:
        return []
    tokens = make_tokens(stripped.leaf_texts())
    coordinations = extract_coordinations(stripped)
    if not coordinations:
        return []
    coordinators = sentence_coordinators(coordinations)
    identifier = tuple(identifier_labels_for(len(tokens), coordinators))

    instances: list[TrainingInstance] = []

    def add(target: CoordinatorSpan, labels: Sequence[DetectorLabel]) -> None:
        instances.append(
            TrainingInstance(
                tokens=tokens,
                target=target,
                all_coordinators=tuple(coordinators),
                detector_labels=tuple(labels),
                identifier_labels=identifier,
            )
        )

    for coord in coordinations:
        target = coord.target
        if target.kind is SpanKind.PAIRED_RIGHT and target.partner is not None:
            left = CoordinatorSpan(target.partner, SpanKind.PAIRED_LEFT, partner=target.span)
            add(left, encode_labels(len(tokens), Coordination(target=left)))
        add(target, encode_labels(len(tokens), coord))

    instances.sort(key=lambda i: (i.target.span.start, i.target.span.end))
    return instances


def augment(instance: TrainingInstance) -> tuple[TrainingInstance, bool]:
    """Swap the first and last conjuncts of an instance.

    Returns (instance, swapped). Instances with fewer than two conjuncts
    are returned unchanged with swapped=False. The operation is an
    involution and preserves the token multiset.
    """
    coordination = instance.coordination()
    conjuncts = coordination.conjuncts
    if len(conjuncts) < 2:
        return instance, False
    first, last = conjuncts[0], conjuncts[-1]
    delta = len(last) - len(first)
    new_first = TokenSpan(first.start, first.start + len(last))
    new_last = TokenSpan(last.start + delta, last.end)

    def remap(span: TokenSpan) -> TokenSpan:
        if span.end <= first.start or span.start >= last.end:
            return span
        if first.covers(span):
            return span.shift(new_last.start - first.start)
        if last.covers(span):
            return span.shift(first.start - last.start)
        if span.start >= first.end and span.end <= last.start:
            return span.shift(delta)
        raise SchemaError(f"span {span} straddles a swapped conjunct boundary")

    def remap_coordinator(c: CoordinatorSpan) -> CoordinatorSpan:
        partner = remap(c.partner) if c.partner is not None else None
        return CoordinatorSpan(remap(c.span), c.kind, partner)

    texts = [t.text for t in instance.tokens]
    new_texts = (
        texts[: first.start]
        + texts[last.start : last.end]
        + texts[first.end : last.start]
        + texts[first.start : first.end]
        + texts[last.end :]
    )
    new_conjuncts = sorted(remap(c) for c in conjuncts)
    new_target = remap_coordinator(instance.target)
    new_coordinators = tuple(remap_coordinator(c) for c in instance.all_coordinators)
    new_coordination = Coordination(target=new_target, conjuncts=tuple(new_conjuncts))
    tokens = make_tokens(new_texts)
    return (
        TrainingInstance(
            tokens=tokens,
            target=new_target,
            all_coordinators=new_coordinators,
            detector_labels=tuple(encode_labels(len(tokens), new_coordination)),
            identifier_labels=tuple(identifier_labels_for(len(tokens), new_coordinators)),
        ),
        True,
    )


def classify_spans(
    texts: Sequence[str],
    runs: Sequence[TokenSpan],
    lexicon: frozenset[str] = PAIRED_LEFT_LEXICON,
) -> list[CoordinatorSpan]:
    """Assign kinds to bare coordinator spans (shared by conversion and
    inference): "respectively" tokens, paired lexicon left halves matched to
    the next plain span on their right, everything else contiguous."""
    runs = sorted(runs, key=lambda s: (s.start, s.end))
    joined = [" ".join(texts[s.start : s.end]).lower() for s in runs]
    is_resp = [j == RESPECTIVELY for j in joined]
    is_left_word = [j in lexicon for j in joined]
    partner: dict[int, int] = {}
    for i, span in enumerate(runs):
        if not is_left_word[i] or i in partner:
            continue
        for j in range(i + 1, len(runs)):
            if j in partner or is_resp[j] or is_left_word[j]:
                continue
            partner[i] = j
            partner[j] = i
            break
    out: list[CoordinatorSpan] = []
    for i, span in enumerate(runs):
        if is_resp[i]:
            out.append(CoordinatorSpan(span, SpanKind.RESPECTIVELY))
        elif i in partner:
            kind = SpanKind.PAIRED_LEFT if partner[i] > i else SpanKind.PAIRED_RIGHT
            out.append(CoordinatorSpan(span, kind, partner=runs[partner[i]]))
        else:
            out.append(CoordinatorSpan(span, SpanKind.CONTIGUOUS))
    return out


# Simple targets are single-token and/but/or contiguous spans; everything
# else (multi-token spans, paired spans, respectively) is Complex.
SIMPLE_COORDINATORS = frozenset({"and", "but", "or"})


def classify_complexity(
    target: CoordinatorSpan, tokens: Sequence[Token] | Sequence[str]
) -> str:
    texts = [t.text if isinstance(t, Token) else t for t in tokens]
    if (
        target.kind is SpanKind.CONTIGUOUS
        and len(target.span) == 1
        and texts[target.span.start].lower() in SIMPLE_COORDINATORS
    ):
        return "Simple"
    return "Complex"


def classify_instance(instance: TrainingInstance) -> str:
    return classify_complexity(instance.target, instance.tokens)


def apply_exceptions(
    instances: list[TrainingInstance], exceptions_path: str
) -> tuple[list[TrainingInstance], int]:
    """Apply a reviewable exception list after automatic conversion.

    Each JSONL entry carries {"sentence": <space-joined tokens>, "action":
    "drop"} or {"action": "replace", "instances": [...]}; sentences not
    mentioned pass through. Returns (instances, number of entries applied).
    """
    entries: dict[str, dict] = {}
    with open(exceptions_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj.get("action") not in ("drop", "replace"):
                raise SchemaError(f"{exceptions_path}:{lineno}: unknown action {obj.get('action')!r}")
            entries[obj["sentence"]] = obj

    out: list[TrainingInstance] = []
    applied: set[str] = set()
    replaced: set[str] = set()
    for inst in instances:
        sentence = " ".join(inst.texts)
        entry = entries.get(sentence)
        if entry is None:
            out.append(inst)
            continue
        applied.add(sentence)
        if entry["action"] == "drop":
            continue
        if sentence not in replaced:
            replaced.add(sentence)
            out.extend(TrainingInstance.from_obj(o) for o in entry["instances"])
    return out, len(applied)


def instances_to_jsonl(instances: Iterable[TrainingInstance]) -> str:
    return "\n".join(json.dumps(i.to_obj(), sort_keys=True) for i in instances)


def instances_from_jsonl(text: str) -> list[TrainingInstance]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line:
            out.append(TrainingInstance.from_obj(json.loads(line)))
    return out


def instances_to_conll(instances: Iterable[TrainingInstance]) -> str:
    blocks = [to_conll(i.texts, i.detector_labels) for i in instances]
    return "\n\n".join(blocks) + ("\n" if blocks else "")
