"""Constrained linear-chain CRF over the six detector labels.

Hard constraints come in two layers. Structural transition bans encode the
label grammar (no I without its B, no before-tags after the coordinator,
single C block) as -inf entries of the transition/start/end scores.
Position masks are built per instance from the marked target span: target
positions are forced to C, marker positions to O, positions left of the
first marker may only carry {O, B-before, I-before} and positions right of
the second marker {O, B-after, I-after}. Decoding under both layers always
yields a sequence that passes the schema validator.

The DP kernels run in the compiled extension when present; set
COORDKIT_PURE=1 to force the NumPy fallback.
"""

from __future__ import annotations

import os
from typing import Sequence

import numpy as np

from coordkit.errors import InfeasiblePathError, SchemaError
from coordkit.schema import DetectorLabel, NUM_DETECTOR_LABELS, TokenSpan

if os.environ.get("COORDKIT_PURE") == "1":
    from coordkit import _crf_numpy as _kernels

    BACKEND = "numpy"
else:
    try:
        from coordkit import _crfc as _kernels  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from coordkit import _crf_numpy as _kernels  # type: ignore[no-redef]

        BACKEND = "numpy"

NEG_INF = float("-inf")

_O = DetectorLabel.O
_C = DetectorLabel.C
_BB = DetectorLabel.B_BEFORE
_IB = DetectorLabel.I_BEFORE
_BA = DetectorLabel.B_AFTER
_IA = DetectorLabel.I_AFTER

_ALLOWED_TRANSITIONS: dict[DetectorLabel, tuple[DetectorLabel, ...]] = {
    _O: (_O, _C, _BB, _BA),
    _C: (_O, _C, _BA),
    _BB: (_O, _C, _BB, _IB),
    _IB: (_O, _C, _BB, _IB),
    _BA: (_O, _BA, _IA),
    _IA: (_O, _BA, _IA),
}
_START_ALLOWED = (_O, _C, _BB)
_END_ALLOWED = (_O, _C, _BA, _IA)


def transition_mask() -> np.ndarray:
    """Boolean (L, L) matrix of grammar-allowed transitions."""
    mask = np.zeros((NUM_DETECTOR_LABELS, NUM_DETECTOR_LABELS), dtype=bool)
    for src, dsts in _ALLOWED_TRANSITIONS.items():
        for dst in dsts:
            mask[src, dst] = True
    return mask


def start_mask() -> np.ndarray:
    mask = np.zeros(NUM_DETECTOR_LABELS, dtype=bool)
    mask[list(_START_ALLOWED)] = True
    return mask


def end_mask() -> np.ndarray:
    mask = np.zeros(NUM_DETECTOR_LABELS, dtype=bool)
    mask[list(_END_ALLOWED)] = True
    return mask


def position_mask(length: int, target_marked: TokenSpan) -> np.ndarray:
    """Boolean (length, L) per-position mask for a marked sequence.

    target_marked is the target span in marked coordinates; the markers sit
    at target_marked.start - 1 and target_marked.end.
    """
    first_marker = target_marked.start - 1
    second_marker = target_marked.end
    if first_marker < 0 or second_marker >= length:
        raise SchemaError(
            f"marked target {target_marked} inconsistent with sequence length {length}"
        )
    mask = np.zeros((length, NUM_DETECTOR_LABELS), dtype=bool)
    mask[:first_marker, [_O, _BB, _IB]] = True
    mask[first_marker, _O] = True
    mask[target_marked.start : target_marked.end, _C] = True
    mask[second_marker, _O] = True
    mask[second_marker + 1 :, [_O, _BA, _IA]] = True
    return mask


def masked_scores(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Apply -inf outside the mask, keeping the parameter values inside."""
    return np.where(mask, values, NEG_INF)


class ConstrainedCrf:
    """Transition parameters plus constrained decode / NLL / gradients.

    Banned entries of the transition, start, and end score tables are fixed
    at -inf; gradients there are identically zero, so any additive
    optimizer update preserves the bans.
    """

    def __init__(
        self,
        transitions: np.ndarray | None = None,
        start: np.ndarray | None = None,
        end: np.ndarray | None = None,
    ):
        L = NUM_DETECTOR_LABELS
        t_mask = transition_mask()
        self.transitions = masked_scores(
            np.zeros((L, L)) if transitions is None else np.asarray(transitions, dtype=np.float64),
            t_mask,
        )
        self.start = masked_scores(
            np.zeros(L) if start is None else np.asarray(start, dtype=np.float64), start_mask()
        )
        self.end = masked_scores(
            np.zeros(L) if end is None else np.asarray(end, dtype=np.float64), end_mask()
        )

    def decode(self, emissions: np.ndarray, target_marked: TokenSpan) -> list[DetectorLabel]:
        """Constrained Viterbi; the result always passes validate_labels."""
        emissions = np.ascontiguousarray(emissions, dtype=np.float64)
        if not np.isfinite(emissions).all():
            raise SchemaError("emissions must be finite")
        allowed = position_mask(emissions.shape[0], target_marked)
        try:
            path, _ = _kernels.viterbi(
                emissions, self.transitions, self.start, self.end,
                np.ascontiguousarray(allowed, dtype=np.uint8),
            )
        except ValueError as exc:
            raise InfeasiblePathError(str(exc)) from exc
        return [DetectorLabel(int(y)) for y in path]

    def decode_scored(
        self, emissions: np.ndarray, target_marked: TokenSpan
    ) -> tuple[list[DetectorLabel], float]:
        emissions = np.ascontiguousarray(emissions, dtype=np.float64)
        allowed = position_mask(emissions.shape[0], target_marked)
        path, score = _kernels.viterbi(
            emissions, self.transitions, self.start, self.end,
            np.ascontiguousarray(allowed, dtype=np.uint8),
        )
        return [DetectorLabel(int(y)) for y in path], score

    def log_partition(self, emissions: np.ndarray, target_marked: TokenSpan) -> float:
        emissions = np.ascontiguousarray(emissions, dtype=np.float64)
        allowed = position_mask(emissions.shape[0], target_marked)
        return _kernels.log_partition(
            emissions, self.transitions, self.start, self.end,
            np.ascontiguousarray(allowed, dtype=np.uint8),
        )

    def nll(
        self,
        emissions: np.ndarray,
        gold: Sequence[DetectorLabel],
        target_marked: TokenSpan,
    ) -> float:
        return self.nll_gradients(emissions, gold, target_marked)[0]

    def nll_gradients(
        self,
        emissions: np.ndarray,
        gold: Sequence[DetectorLabel],
        target_marked: TokenSpan,
    ) -> tuple[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(nll, d_emissions, d_transitions, d_start, d_end) for one sequence."""
        emissions = np.ascontiguousarray(emissions, dtype=np.float64)
        if emissions.shape[0] != len(gold):
            raise SchemaError(f"{emissions.shape[0]} emission rows for {len(gold)} gold labels")
        allowed = position_mask(emissions.shape[0], target_marked)
        gold_idx = np.asarray([int(g) for g in gold], dtype=np.int64)
        try:
            return _kernels.nll_gradients(
                emissions, self.transitions, self.start, self.end,
                np.ascontiguousarray(allowed, dtype=np.uint8), gold_idx,
            )
        except ValueError as exc:
            raise SchemaError(f"impossible gold path: {exc}") from exc

    def parameters(self) -> dict[str, np.ndarray]:
        return {"transitions": self.transitions, "start": self.start, "end": self.end}
