"""Per-token feature construction for the conjunct boundary detector.

The target coordinator is surrounded with literal "[C]" marker tokens, the
positions of every detected coordinator are turned into indicator flag
vectors, and a pluggable encoder maps the marked sequence to one vector
per token. The shipped encoder is a deterministic hashed-feature windowed
encoder so the whole system trains without any external model; an adapter
wraps a pretrained subword encoder behind the same contract.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from importlib import import_module
from typing import Callable, Protocol, Sequence

import numpy as np

from coordkit.errors import ConfigError, EncoderLengthError, SchemaError
from coordkit.schema import (
    CoordinatorSpan,
    DetectorLabel,
    SpanKind,
    Token,
    TokenSpan,
    make_tokens,
)

MARKER = "[C]"

# Flag layout when flag_mode="kind": one column per coordinator kind.
_KIND_COLUMNS = {
    SpanKind.CONTIGUOUS: 0,
    SpanKind.PAIRED_LEFT: 1,
    SpanKind.PAIRED_RIGHT: 2,
    SpanKind.RESPECTIVELY: 3,
}


@dataclass(frozen=True)
class MarkedSequence:
    """Token sequence with the two marker tokens inserted.

    origin_map[i] is the original index of marked token i, or None for the
    two markers. Exactly two None entries exist, immediately before and
    after target_marked.
    """

    tokens: tuple[Token, ...]
    target_marked: TokenSpan
    origin_map: tuple[int | None, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]

    def marker_positions(self) -> tuple[int, int]:
        return self.target_marked.start - 1, self.target_marked.end


def insert_markers(tokens: Sequence[Token], target: CoordinatorSpan) -> MarkedSequence:
    """Insert "[C]" before and after the target span."""
    span = target.span
    if span.end > len(tokens):
        raise SchemaError(f"target {span} out of range for {len(tokens)} tokens")
    texts = [t.text for t in tokens]
    marked_texts = (
        texts[: span.start] + [MARKER] + texts[span.start : span.end] + [MARKER] + texts[span.end :]
    )
    origin = (
        list(range(span.start))
        + [None]
        + list(range(span.start, span.end))
        + [None]
        + list(range(span.end, len(tokens)))
    )
    return MarkedSequence(
        tokens=make_tokens(marked_texts),
        target_marked=TokenSpan(span.start + 1, span.end + 1),
        origin_map=tuple(origin),
    )


def strip_markers(marked: MarkedSequence) -> tuple[Token, ...]:
    """Recover the original sentence tokens."""
    texts = [t.text for t, o in zip(marked.tokens, marked.origin_map) if o is not None]
    return make_tokens(texts)


def project_labels_to_original(
    marked: MarkedSequence, labels: Sequence[DetectorLabel]
) -> list[DetectorLabel]:
    """Drop the marker positions from a marked-coordinate label sequence."""
    if len(labels) != len(marked):
        raise SchemaError(f"{len(labels)} labels for marked length {len(marked)}")
    return [l for l, o in zip(labels, marked.origin_map) if o is not None]


def project_gold_to_marked(
    marked: MarkedSequence, labels: Sequence[DetectorLabel]
) -> list[DetectorLabel]:
    """Insert O at the marker positions of an original-coordinate sequence."""
    out: list[DetectorLabel] = []
    for o in marked.origin_map:
        out.append(DetectorLabel.O if o is None else labels[o])
    return out


def position_flags(
    marked: MarkedSequence,
    coordinators: Sequence[CoordinatorSpan],
    flag_mode: str = "binary",
) -> np.ndarray:
    """Indicator matrix (len(marked), flag_dim): 1 where the token's origin
    lies inside a coordinator span. Markers always get zero rows."""
    if flag_mode == "binary":
        dim = 1
    elif flag_mode == "kind":
        dim = len(_KIND_COLUMNS)
    else:
        raise ConfigError(f"unknown flag_mode {flag_mode!r}")
    flags = np.zeros((len(marked), dim), dtype=np.float64)
    for i, origin in enumerate(marked.origin_map):
        if origin is None:
            continue
        for coord in coordinators:
            if coord.span.contains(origin):
                col = 0 if flag_mode == "binary" else _KIND_COLUMNS[coord.kind]
                flags[i, col] = 1.0
    return flags


def flag_dim(flag_mode: str) -> int:
    return 1 if flag_mode == "binary" else len(_KIND_COLUMNS)


def _word_shape(text: str) -> str:
    shape = []
    last = ""
    for ch in text:
        if ch.isupper():
            cls = "X"
        elif ch.islower():
            cls = "x"
        elif ch.isdigit():
            cls = "d"
        else:
            cls = ch
        if cls != last:  # collapse runs
            shape.append(cls)
            last = cls
    return "".join(shape)


class HashedEncoder:
    """Deterministic hashed-feature windowed encoder.

    Features per token: identity, lowercase, collapsed shape, the
    lowercased neighbors in a +/-window, and (for marked sequences) the
    token crossed with the marked target text. The cross feature carries
    the target conditioning that a contextual encoder would pick up from
    the markers globally; without it, tokens outside the window of either
    marker are indistinguishable across targets. Each feature hashes
    (crc32) into the first dim-1 slots; the last slot is reserved for the
    "[C]" marker so it never collides with lexical features. Rows are
    L2-normalized. No trainable state: determinism is by construction.
    """

    kind = "hashed"

    def __init__(self, dim: int = 256, window: int = 2, max_len: int | None = None):
        if dim < 8:
            raise ConfigError(f"hashed encoder dim must be >= 8, got {dim}")
        if window < 0:
            raise ConfigError(f"window must be >= 0, got {window}")
        self.dim = dim
        self.window = window
        self.max_len = max_len

    def spec(self) -> dict:
        return {
            "type": self.kind,
            "dim": self.dim,
            "window": self.window,
            "max_len": self.max_len,
        }

    def _features(self, texts: list[str], i: int, target_text: str | None) -> list[str]:
        text = texts[i]
        feats = [f"t={text}", f"l={text.lower()}", f"s={_word_shape(text)}"]
        for off in range(-self.window, self.window + 1):
            if off == 0:
                continue
            j = i + off
            neighbor = texts[j].lower() if 0 <= j < len(texts) else ("<s>" if j < 0 else "</s>")
            feats.append(f"w{off:+d}={neighbor}")
        if target_text is not None:
            feats.append(f"l={text.lower()}|tgt={target_text}")
        return feats

    def encode(self, tokens: Sequence[Token] | MarkedSequence) -> np.ndarray:
        if isinstance(tokens, MarkedSequence):
            texts = tokens.texts
            span = tokens.target_marked
            target_text = " ".join(t.lower() for t in texts[span.start : span.end])
        else:
            texts = [t.text for t in tokens]
            target_text = None
        if not texts:
            raise SchemaError("cannot encode an empty sequence")
        if self.max_len is not None and len(texts) > self.max_len:
            raise EncoderLengthError(
                f"sequence of length {len(texts)} exceeds encoder maximum {self.max_len}"
            )
        lex = self.dim - 1
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            if text == MARKER:
                out[i, lex] = 1.0
                continue
            for feat in self._features(texts, i, target_text):
                out[i, zlib.crc32(feat.encode("utf-8")) % lex] += 1.0
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return out / norms


class SubwordSession(Protocol):
    """Serialized-graph execution contract for external encoders."""

    def run(self, subword_ids: list[int]) -> np.ndarray: ...


class SubwordTokenizer(Protocol):
    def tokenize(self, text: str) -> list[int]: ...

    def marker_id(self) -> int: ...


class ExternalEncoder:
    """Adapter for a pretrained subword encoder (opaque serialized graph).

    "[C]" is registered as a dedicated special token via the tokenizer's
    marker_id. Subword vectors are pooled back to word level so the output
    has exactly one vector per marked token, regardless of splits.
    """

    kind = "external"

    def __init__(
        self,
        session: SubwordSession,
        tokenizer: SubwordTokenizer,
        dim: int,
        max_len: int = 512,
        pooling: str = "first",
    ):
        if pooling not in ("first", "mean"):
            raise ConfigError(f"unknown pooling {pooling!r}")
        self.session = session
        self.tokenizer = tokenizer
        self.dim = dim
        self.max_len = max_len
        self.pooling = pooling

    def spec(self) -> dict:
        return {
            "type": self.kind,
            "dim": self.dim,
            "max_len": self.max_len,
            "pooling": self.pooling,
        }

    def encode(self, tokens: Sequence[Token] | MarkedSequence) -> np.ndarray:
        texts = tokens.texts if isinstance(tokens, MarkedSequence) else [t.text for t in tokens]
        if not texts:
            raise SchemaError("cannot encode an empty sequence")
        ids: list[int] = []
        word_starts: list[int] = []
        word_ends: list[int] = []
        for text in texts:
            pieces = [self.tokenizer.marker_id()] if text == MARKER else self.tokenizer.tokenize(text)
            if not pieces:
                raise SchemaError(f"tokenizer produced no subwords for {text!r}")
            word_starts.append(len(ids))
            ids.extend(pieces)
            word_ends.append(len(ids))
        if len(ids) > self.max_len:
            raise EncoderLengthError(
                f"{len(ids)} subwords exceed encoder maximum {self.max_len}"
            )
        matrix = np.asarray(self.session.run(ids), dtype=np.float64)
        if matrix.shape != (len(ids), self.dim):
            raise SchemaError(
                f"session returned shape {matrix.shape}, expected {(len(ids), self.dim)}"
            )
        out = np.empty((len(texts), self.dim), dtype=np.float64)
        for w, (s, e) in enumerate(zip(word_starts, word_ends)):
            out[w] = matrix[s] if self.pooling == "first" else matrix[s:e].mean(axis=0)
        return out


Encoder = HashedEncoder | ExternalEncoder


def concat_position(h: np.ndarray, b: np.ndarray) -> np.ndarray:
    """[h_i; b_i] per token; output dim = encoder dim + flag dim."""
    if h.ndim != 2 or b.ndim != 2:
        raise ValueError("expected 2-D arrays")
    if h.shape[0] != b.shape[0]:
        raise ValueError(f"length mismatch: {h.shape[0]} vectors vs {b.shape[0]} flags")
    return np.concatenate([h, b], axis=1)


@dataclass(frozen=True)
class DetectorInstance:
    """Marker-augmented input for one detector target."""

    marked: MarkedSequence
    flags: np.ndarray
    gold_marked: tuple[DetectorLabel, ...] | None = None


def build_detector_instance(
    tokens: Sequence[Token],
    target: CoordinatorSpan,
    coordinators: Sequence[CoordinatorSpan],
    gold_labels: Sequence[DetectorLabel] | None = None,
    flag_mode: str = "binary",
) -> DetectorInstance:
    marked = insert_markers(tokens, target)
    flags = position_flags(marked, coordinators, flag_mode)
    gold = None
    if gold_labels is not None:
        gold = tuple(project_gold_to_marked(marked, gold_labels))
    return DetectorInstance(marked=marked, flags=flags, gold_marked=gold)


def build_encoder(cfg: dict) -> Encoder:
    """Construct an encoder from its config block.

    hashed: {dim, window, max_len}. external: {loader: "module:attr",
    dim, max_len, pooling}; the loader returns (session, tokenizer).
    """
    kind = cfg.get("type", "hashed")
    if kind == "hashed":
        return HashedEncoder(
            dim=int(cfg.get("dim", 256)),
            window=int(cfg.get("window", 2)),
            max_len=cfg.get("max_len"),
        )
    if kind == "external":
        loader = cfg.get("loader")
        if not loader or ":" not in loader:
            raise ConfigError("external encoder requires loader of the form 'module:attr'")
        module_name, attr = loader.split(":", 1)
        try:
            factory: Callable = getattr(import_module(module_name), attr)
        except (ImportError, AttributeError) as exc:
            raise ConfigError(f"cannot resolve external encoder loader {loader!r}: {exc}")
        session, tokenizer = factory(cfg)
        return ExternalEncoder(
            session=session,
            tokenizer=tokenizer,
            dim=int(cfg["dim"]),
            max_len=int(cfg.get("max_len", 512)),
            pooling=cfg.get("pooling", "first"),
        )
    raise ConfigError(f"unknown encoder type {kind!r}")
