"""Label alphabets and the mapping between coordinations and label sequences.

Two alphabets are defined. The identifier alphabet is binary: C on tokens
inside coordinator spans, O elsewhere. The detector alphabet is a
position-aware BIO variant: conjuncts left of the target coordinator are
tagged B-before/I-before, conjuncts right of it B-after/I-after, the target
coordinator tokens C, and everything else O.

All spans are half-open token-index intervals, so adjacency and length
arithmetic stay unambiguous.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from coordkit.errors import DecodeError, SchemaError


class IdentifierLabel(enum.IntEnum):
    O = 0
    C = 1


class DetectorLabel(enum.IntEnum):
    # Enum order is load-bearing: Viterbi ties resolve to the lowest value.
    O = 0
    C = 1
    B_BEFORE = 2
    I_BEFORE = 3
    B_AFTER = 4
    I_AFTER = 5


NUM_DETECTOR_LABELS = len(DetectorLabel)

# Exact serialized strings, case-sensitive.
_DETECTOR_TO_STR = {
    DetectorLabel.O: "O",
    DetectorLabel.C: "C",
    DetectorLabel.B_BEFORE: "B-before",
    DetectorLabel.I_BEFORE: "I-before",
    DetectorLabel.B_AFTER: "B-after",
    DetectorLabel.I_AFTER: "I-after",
}
_STR_TO_DETECTOR = {s: l for l, s in _DETECTOR_TO_STR.items()}


def detector_label_str(label: DetectorLabel) -> str:
    return _DETECTOR_TO_STR[label]


def detector_label_from_str(text: str) -> DetectorLabel:
    try:
        return _STR_TO_DETECTOR[text]
    except KeyError:
        raise SchemaError(f"unknown detector label string {text!r}") from None


class SpanKind(str, enum.Enum):
    CONTIGUOUS = "contiguous"
    PAIRED_LEFT = "paired_left"
    PAIRED_RIGHT = "paired_right"
    RESPECTIVELY = "respectively"


@dataclass(frozen=True, slots=True)
class Token:
    text: str
    index: int

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("token text cannot be empty")
        if self.index < 0:
            raise ValueError(f"token index must be >= 0, got {self.index}")


def make_tokens(texts: Iterable[str]) -> tuple[Token, ...]:
    return tuple(Token(t, i) for i, t in enumerate(texts))


@dataclass(frozen=True, slots=True, order=True)
class TokenSpan:
    """Half-open [start, end) interval over token indices."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0:
            raise ValueError(f"span start must be >= 0, got {self.start}")
        if self.end <= self.start:
            raise ValueError(f"span end must be > start, got [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def __iter__(self) -> Iterator[int]:
        return iter(range(self.start, self.end))

    def overlaps(self, other: "TokenSpan") -> bool:
        return self.start < other.end and other.start < self.end

    def contains(self, index: int) -> bool:
        return self.start <= index < self.end

    def covers(self, other: "TokenSpan") -> bool:
        return self.start <= other.start and other.end <= self.end

    def shift(self, delta: int) -> "TokenSpan":
        return TokenSpan(self.start + delta, self.end + delta)

    def to_obj(self) -> dict:
        return {"start": self.start, "end": self.end}

    @classmethod
    def from_obj(cls, obj: dict) -> "TokenSpan":
        return cls(int(obj["start"]), int(obj["end"]))


@dataclass(frozen=True, slots=True)
class CoordinatorSpan:
    """A coordinator extent plus its kind.

    For paired coordinators, `partner` holds the other half's extent; the
    partner of a paired_left span is by construction the paired_right span
    and vice versa.
    """

    span: TokenSpan
    kind: SpanKind = SpanKind.CONTIGUOUS
    partner: TokenSpan | None = None

    def __post_init__(self) -> None:
        paired = self.kind in (SpanKind.PAIRED_LEFT, SpanKind.PAIRED_RIGHT)
        if paired and self.partner is None:
            raise ValueError(f"{self.kind.value} span requires a partner span")
        if not paired and self.partner is not None:
            raise ValueError(f"{self.kind.value} span cannot have a partner")
        if self.kind is SpanKind.RESPECTIVELY and len(self.span) != 1:
            raise ValueError("respectively coordinator must cover a single token")
        if paired and self.partner is not None and self.partner.overlaps(self.span):
            raise ValueError("paired coordinator halves cannot overlap")

    def to_obj(self) -> dict:
        obj = {"start": self.span.start, "end": self.span.end, "kind": self.kind.value}
        if self.partner is not None:
            obj["partner"] = self.partner.to_obj()
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "CoordinatorSpan":
        partner = TokenSpan.from_obj(obj["partner"]) if "partner" in obj else None
        return cls(
            span=TokenSpan(int(obj["start"]), int(obj["end"])),
            kind=SpanKind(obj.get("kind", "contiguous")),
            partner=partner,
        )


@dataclass(frozen=True, slots=True)
class Coordination:
    """One target coordinator span with its ordered conjunct spans.

    Constructor enforces the structural invariants that hold for any label
    sequence (sortedness, pairwise disjointness, disjointness from the
    target). The gold-data requirement that at least one conjunct precede
    the target (and one follow it, except for respectively targets) is
    checked by `is_complete`, since decoding model output may legitimately
    yield coordinations without it.
    """

    target: CoordinatorSpan
    conjuncts: tuple[TokenSpan, ...] = ()

    def __post_init__(self) -> None:
        prev: TokenSpan | None = None
        for c in self.conjuncts:
            if prev is not None:
                if c.start < prev.start:
                    raise ValueError("conjuncts must be sorted by start")
                if prev.overlaps(c):
                    raise ValueError(f"conjuncts overlap: {prev} and {c}")
            if c.overlaps(self.target.span):
                raise ValueError(f"conjunct {c} overlaps target {self.target.span}")
            prev = c

    def conjuncts_before(self) -> tuple[TokenSpan, ...]:
        return tuple(c for c in self.conjuncts if c.end <= self.target.span.start)

    def conjuncts_after(self) -> tuple[TokenSpan, ...]:
        return tuple(c for c in self.conjuncts if c.start >= self.target.span.end)

    def is_complete(self) -> bool:
        if not self.conjuncts_before():
            return False
        if self.target.kind is SpanKind.RESPECTIVELY:
            return True
        return bool(self.conjuncts_after())

    def to_obj(self) -> dict:
        return {
            "target": self.target.to_obj(),
            "conjuncts": [c.to_obj() for c in self.conjuncts],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "Coordination":
        return cls(
            target=CoordinatorSpan.from_obj(obj["target"]),
            conjuncts=tuple(TokenSpan.from_obj(c) for c in obj["conjuncts"]),
        )


@dataclass(frozen=True, slots=True)
class Violation:
    index: int
    message: str


@dataclass(frozen=True, slots=True)
class ValidationResult:
    valid: bool
    violations: tuple[Violation, ...] = ()
    warnings: tuple[str, ...] = ()


def encode_labels(sentence_length: int, coordination: Coordination) -> list[DetectorLabel]:
    """Encode a coordination as a detector label sequence of the given length.

    Target tokens get C; each conjunct before the target gets B-before then
    I-before; conjuncts after get B-after/I-after; all remaining tokens O.
    Separator tokens between conjuncts are therefore labeled O.
    """
    target = coordination.target.span
    if target.end > sentence_length:
        raise SchemaError(
            f"target span {target} out of range for sentence of length {sentence_length}"
        )
    labels = [DetectorLabel.O] * sentence_length
    for i in target:
        labels[i] = DetectorLabel.C
    for conjunct in coordination.conjuncts:
        if conjunct.end > sentence_length:
            raise SchemaError(
                f"conjunct {conjunct} out of range for sentence of length {sentence_length}"
            )
        if conjunct.overlaps(target):
            raise SchemaError(f"conjunct {conjunct} overlaps target {target}")
        if conjunct.end <= target.start:
            begin, inside = DetectorLabel.B_BEFORE, DetectorLabel.I_BEFORE
        else:
            begin, inside = DetectorLabel.B_AFTER, DetectorLabel.I_AFTER
        labels[conjunct.start] = begin
        for i in range(conjunct.start + 1, conjunct.end):
            labels[i] = inside
    return labels


def validate_labels(
    labels: Sequence[DetectorLabel], target: CoordinatorSpan
) -> ValidationResult:
    """Check a label sequence against the schema grammar for the given target.

    Hard violations: C anywhere off the target span or missing on it;
    I-tags without a matching B/I predecessor; after-tags before the target
    or before-tags after it. A missing after-part on a non-respectively
    target is only a structural warning (the model may predict it; scoring
    will count it wrong).
    """
    span = target.span
    violations: list[Violation] = []
    if span.end > len(labels):
        violations.append(
            Violation(min(span.start, max(len(labels) - 1, 0)), "target span out of range")
        )
        return ValidationResult(False, tuple(violations))

    for i, label in enumerate(labels):
        if span.contains(i):
            if label is not DetectorLabel.C:
                violations.append(Violation(i, f"target position labeled {label.name}, not C"))
            continue
        if label is DetectorLabel.C:
            violations.append(Violation(i, "C outside target span"))
        elif label is DetectorLabel.I_BEFORE:
            if i == 0 or labels[i - 1] not in (DetectorLabel.B_BEFORE, DetectorLabel.I_BEFORE):
                violations.append(Violation(i, "I-before without B-before/I-before predecessor"))
        elif label is DetectorLabel.I_AFTER:
            if i == 0 or labels[i - 1] not in (DetectorLabel.B_AFTER, DetectorLabel.I_AFTER):
                violations.append(Violation(i, "I-after without B-after/I-after predecessor"))
        if label in (DetectorLabel.B_AFTER, DetectorLabel.I_AFTER) and i < span.start:
            violations.append(Violation(i, "after-tag precedes target span"))
        if label in (DetectorLabel.B_BEFORE, DetectorLabel.I_BEFORE) and i >= span.end:
            violations.append(Violation(i, "before-tag follows target span"))

    warnings: list[str] = []
    if target.kind is not SpanKind.RESPECTIVELY:
        if not any(l is DetectorLabel.B_AFTER for l in labels):
            warnings.append("no conjunct after a non-respectively target")

    violations.sort(key=lambda v: v.index)
    return ValidationResult(not violations, tuple(violations), tuple(warnings))


def decode_labels(
    labels: Sequence[DetectorLabel], target: CoordinatorSpan
) -> Coordination:
    """Invert encode_labels: maximal B(I)* runs become conjunct spans."""
    result = validate_labels(labels, target)
    if not result.valid:
        first = result.violations[0]
        raise DecodeError(first.index, first.message)

    conjuncts: list[TokenSpan] = []
    run_start: int | None = None
    run_inside: DetectorLabel | None = None

    def close_run(end: int) -> None:
        nonlocal run_start, run_inside
        if run_start is not None:
            conjuncts.append(TokenSpan(run_start, end))
            run_start, run_inside = None, None

    for i, label in enumerate(labels):
        if label in (DetectorLabel.B_BEFORE, DetectorLabel.B_AFTER):
            close_run(i)
            run_start = i
            run_inside = (
                DetectorLabel.I_BEFORE
                if label is DetectorLabel.B_BEFORE
                else DetectorLabel.I_AFTER
            )
        elif label is run_inside and run_start is not None:
            continue
        else:
            close_run(i)
    close_run(len(labels))

    return Coordination(target=target, conjuncts=tuple(conjuncts))


def identifier_labels_for(
    sentence_length: int, coordinators: Sequence[CoordinatorSpan]
) -> list[IdentifierLabel]:
    """Binary labels with C exactly on the union of coordinator spans."""
    labels = [IdentifierLabel.O] * sentence_length
    for coord in coordinators:
        if coord.span.end > sentence_length:
            raise SchemaError(f"coordinator span {coord.span} out of range")
        for i in coord.span:
            labels[i] = IdentifierLabel.C
    return labels


def to_conll(tokens: Sequence[str], labels: Sequence[DetectorLabel | IdentifierLabel]) -> str:
    """One sentence as two-column CoNLL text (token TAB label), no trailing blank line."""
    if len(tokens) != len(labels):
        raise SchemaError(f"{len(tokens)} tokens vs {len(labels)} labels")
    lines = []
    for tok, label in zip(tokens, labels):
        name = detector_label_str(label) if isinstance(label, DetectorLabel) else label.name
        lines.append(f"{tok}\t{name}")
    return "\n".join(lines)


def parse_conll(text: str) -> list[tuple[list[str], list[DetectorLabel]]]:
    """Parse blank-line separated two-column blocks of detector labels."""
    sentences: list[tuple[list[str], list[DetectorLabel]]] = []
    tokens: list[str] = []
    labels: list[DetectorLabel] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            if tokens:
                sentences.append((tokens, labels))
                tokens, labels = [], []
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise SchemaError(f"line {lineno}: expected 'token<TAB>label', got {line!r}")
        tokens.append(parts[0])
        labels.append(detector_label_from_str(parts[1]))
    if tokens:
        sentences.append((tokens, labels))
    return sentences
