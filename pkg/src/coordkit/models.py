"""The two learned components and their training loops.

The coordinator identifier is a per-token binary classifier (encoder output
through a linear projection to O/C scores). The conjunct boundary detector
scores the six detector labels per marked token from the encoder output
concatenated with the coordinator position flags, then decodes with the
constrained CRF. Training is plain mini-batch gradient descent by default
(Adam via config); everything is seeded and deterministic.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from coordkit.crf import ConstrainedCrf, end_mask, start_mask, transition_mask
from coordkit.encoder import (
    DetectorInstance,
    Encoder,
    build_detector_instance,
    build_encoder,
    concat_position,
    flag_dim,
)
from coordkit.errors import (
    CheckpointError,
    ConfigError,
    DataError,
    SchemaError,
    TrainingDiverged,
)
from coordkit.schema import (
    CoordinatorSpan,
    DetectorLabel,
    IdentifierLabel,
    NUM_DETECTOR_LABELS,
    Token,
    TokenSpan,
)
from coordkit.treebank import TrainingInstance, classify_spans

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = "coordkit-checkpoint/1"
DEFAULT_ENCODER_CFG = {"type": "hashed", "dim": 256, "window": 2}


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.5
    batch_size: int = 8
    epochs: int = 30
    seed: int = 0
    detector_loss: str = "crf_nll"  # or "token_ce"
    optimizer: str = "sgd"  # or "adam"
    shuffle: bool = True

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size <= 0:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs <= 0:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if self.detector_loss not in ("crf_nll", "token_ce"):
            raise ConfigError(f"unknown detector_loss {self.detector_loss!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            p -= self.lr * g


class _Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1**self.t)
            v_hat = v / (1 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _make_optimizer(cfg: TrainConfig):
    return _Adam(cfg.lr) if cfg.optimizer == "adam" else _Sgd(cfg.lr)


def _softmax_ce(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over rows plus gradient wrt logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    n = len(y)
    loss = float(-logp[np.arange(n), y].mean())
    grad = np.exp(logp)
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return loss, grad


def _batches(order: np.ndarray, size: int):
    for i in range(0, len(order), size):
        yield order[i : i + size]


class IdentifierModel:
    """Binary O/C token classifier over the sentence encoder output."""

    def __init__(self, encoder: Encoder, encoder_cfg: dict, weights: np.ndarray, bias: np.ndarray):
        if weights.shape != (encoder.dim, 2):
            raise CheckpointError(
                f"identifier projection {weights.shape} does not match encoder dim {encoder.dim}"
            )
        self.encoder = encoder
        self.encoder_cfg = dict(encoder_cfg)
        self.weights = weights
        self.bias = bias
        self.final_loss: float | None = None
        self.config: TrainConfig | None = None
        self.epoch_losses: list[float] = []

    def scores(self, tokens: Sequence[Token]) -> np.ndarray:
        if not tokens:
            raise SchemaError("cannot identify coordinators in an empty sentence")
        return self.encoder.encode(tokens) @ self.weights + self.bias

    def predict_labels(self, tokens: Sequence[Token]) -> list[IdentifierLabel]:
        return [IdentifierLabel(int(y)) for y in self.scores(tokens).argmax(axis=1)]

    def identify(self, tokens: Sequence[Token]) -> list[CoordinatorSpan]:
        """Maximal C runs, kind-classified by the shared lexicon rules."""
        labels = self.predict_labels(tokens)
        runs: list[TokenSpan] = []
        start = None
        for i, label in enumerate(labels):
            if label is IdentifierLabel.C and start is None:
                start = i
            elif label is IdentifierLabel.O and start is not None:
                runs.append(TokenSpan(start, i))
                start = None
        if start is not None:
            runs.append(TokenSpan(start, len(labels)))
        return classify_spans([t.text for t in tokens], runs)


def train_identifier(
    data: Sequence[TrainingInstance],
    cfg: TrainConfig,
    encoder_cfg: dict | None = None,
) -> IdentifierModel:
    """Minimize per-token cross-entropy with mini-batch updates."""
    if not data:
        raise DataError("no training instances for the identifier")
    encoder_cfg = dict(encoder_cfg or DEFAULT_ENCODER_CFG)
    encoder = build_encoder(encoder_cfg)
    features = [encoder.encode(inst.tokens) for inst in data]
    targets = [np.asarray([int(l) for l in inst.identifier_labels]) for inst in data]

    rng = np.random.default_rng(cfg.seed)
    weights = rng.normal(0.0, 0.01, size=(encoder.dim, 2))
    bias = np.zeros(2)
    optimizer = _make_optimizer(cfg)
    epoch_losses: list[float] = []

    for epoch in range(cfg.epochs):
        order = np.arange(len(data))
        if cfg.shuffle:
            rng.shuffle(order)
        epoch_loss = 0.0
        token_count = 0
        for batch_no, batch in enumerate(_batches(order, cfg.batch_size)):
            x = np.concatenate([features[i] for i in batch])
            y = np.concatenate([targets[i] for i in batch])
            loss, d_logits = _softmax_ce(x @ weights + bias, y)
            if not np.isfinite(loss):
                raise TrainingDiverged("identifier loss diverged", epoch, batch_no, loss)
            optimizer.step([weights, bias], [x.T @ d_logits, d_logits.sum(axis=0)])
            epoch_loss += loss * len(y)
            token_count += len(y)
        epoch_losses.append(epoch_loss / token_count)
        log.debug("identifier epoch %d loss %.6f", epoch, epoch_losses[-1])

    model = IdentifierModel(encoder, encoder_cfg, weights, bias)
    model.epoch_losses = epoch_losses
    total_loss = 0.0
    total_tokens = 0
    for x, y in zip(features, targets):
        loss, _ = _softmax_ce(x @ weights + bias, y)
        total_loss += loss * len(y)
        total_tokens += len(y)
    model.final_loss = total_loss / total_tokens
    model.config = cfg
    return model


class DetectorModel:
    """Emission scorer plus constrained CRF over marked sequences."""

    def __init__(
        self,
        encoder: Encoder,
        encoder_cfg: dict,
        weights: np.ndarray,
        bias: np.ndarray,
        crf: ConstrainedCrf,
        flag_mode: str = "binary",
    ):
        expected = encoder.dim + flag_dim(flag_mode)
        if weights.shape != (expected, NUM_DETECTOR_LABELS):
            raise CheckpointError(
                f"detector projection {weights.shape} does not match input dim {expected}"
            )
        self.encoder = encoder
        self.encoder_cfg = dict(encoder_cfg)
        self.weights = weights
        self.bias = bias
        self.crf = crf
        self.flag_mode = flag_mode
        self.final_loss: float | None = None
        self.config: TrainConfig | None = None
        self.epoch_losses: list[float] = []

    def features(self, instance: DetectorInstance) -> np.ndarray:
        h = self.encoder.encode(instance.marked)
        return concat_position(h, instance.flags)

    def emissions(self, instance: DetectorInstance) -> np.ndarray:
        x = self.features(instance)
        if x.shape[1] != self.weights.shape[0]:
            raise SchemaError(
                f"feature dim {x.shape[1]} does not match detector projection "
                f"{self.weights.shape[0]}"
            )
        return x @ self.weights + self.bias

    def decode_instance(self, instance: DetectorInstance) -> list[DetectorLabel]:
        return self.crf.decode(self.emissions(instance), instance.marked.target_marked)

    def detect(
        self,
        tokens: Sequence[Token],
        target: CoordinatorSpan,
        coordinators: Sequence[CoordinatorSpan],
    ) -> list[DetectorLabel]:
        """Marked-coordinate label sequence for one target."""
        instance = build_detector_instance(tokens, target, coordinators, flag_mode=self.flag_mode)
        return self.decode_instance(instance)


def detector_emissions(model: DetectorModel, instance: DetectorInstance) -> np.ndarray:
    return model.emissions(instance)


def crf_decode(model: DetectorModel, emissions: np.ndarray, target_marked: TokenSpan):
    return model.crf.decode(emissions, target_marked)


def crf_nll(model: DetectorModel, emissions: np.ndarray, gold, target_marked: TokenSpan) -> float:
    return model.crf.nll(emissions, gold, target_marked)


def train_detector(
    data: Sequence[TrainingInstance],
    cfg: TrainConfig,
    encoder_cfg: dict | None = None,
    flag_mode: str = "binary",
) -> DetectorModel:
    """Train emissions and CRF scores; objective per cfg.detector_loss.

    Instances are built from gold coordinator positions; end-to-end
    evaluation swaps in predicted ones at inference time.
    """
    if not data:
        raise DataError("no training instances for the detector")
    encoder_cfg = dict(encoder_cfg or DEFAULT_ENCODER_CFG)
    encoder = build_encoder(encoder_cfg)

    built = [
        build_detector_instance(
            inst.tokens, inst.target, inst.all_coordinators, inst.detector_labels, flag_mode
        )
        for inst in data
    ]
    features = []
    golds = []
    spans = []
    for b in built:
        h = encoder.encode(b.marked)
        features.append(concat_position(h, b.flags))
        golds.append(np.asarray([int(l) for l in b.gold_marked], dtype=np.int64))
        spans.append(b.marked.target_marked)

    rng = np.random.default_rng(cfg.seed)
    dim = encoder.dim + flag_dim(flag_mode)
    weights = rng.normal(0.0, 0.01, size=(dim, NUM_DETECTOR_LABELS))
    bias = np.zeros(NUM_DETECTOR_LABELS)
    crf = ConstrainedCrf()
    optimizer = _make_optimizer(cfg)
    epoch_losses: list[float] = []

    def instance_loss_grad(i: int):
        emissions = features[i] @ weights + bias
        if cfg.detector_loss == "token_ce":
            loss, d_em = _softmax_ce(emissions, golds[i])
            return loss, d_em, None, None, None
        loss, d_em, d_trans, d_start, d_end = crf.nll_gradients(
            emissions, [DetectorLabel(int(y)) for y in golds[i]], spans[i]
        )
        return loss, d_em, d_trans, d_start, d_end

    for epoch in range(cfg.epochs):
        order = np.arange(len(data))
        if cfg.shuffle:
            rng.shuffle(order)
        epoch_loss = 0.0
        for batch_no, batch in enumerate(_batches(order, cfg.batch_size)):
            gw = np.zeros_like(weights)
            gb = np.zeros_like(bias)
            gt = np.zeros_like(crf.transitions)
            gs = np.zeros_like(crf.start)
            ge = np.zeros_like(crf.end)
            batch_loss = 0.0
            for i in batch:
                loss, d_em, d_trans, d_start, d_end = instance_loss_grad(int(i))
                batch_loss += loss
                gw += features[i].T @ d_em
                gb += d_em.sum(axis=0)
                if d_trans is not None:
                    gt += np.where(np.isfinite(crf.transitions), d_trans, 0.0)
                    gs += np.where(np.isfinite(crf.start), d_start, 0.0)
                    ge += np.where(np.isfinite(crf.end), d_end, 0.0)
            if not np.isfinite(batch_loss):
                raise TrainingDiverged("detector loss diverged", epoch, batch_no, batch_loss)
            k = len(batch)
            params = [weights, bias, crf.transitions, crf.start, crf.end]
            grads = [gw / k, gb / k, gt / k, gs / k, ge / k]
            optimizer.step(params, grads)
            epoch_loss += batch_loss
        epoch_losses.append(epoch_loss / len(data))
        log.debug("detector epoch %d loss %.6f", epoch, epoch_losses[-1])

    model = DetectorModel(encoder, encoder_cfg, weights, bias, crf, flag_mode)
    model.epoch_losses = epoch_losses
    total = 0.0
    for i in range(len(data)):
        total += instance_loss_grad(i)[0]
    model.final_loss = total / len(data)
    model.config = cfg
    return model


# ---------------------------------------------------------------------------
# Checkpoint container: versioned, deterministic bytes (no timestamps).
# ---------------------------------------------------------------------------

_MAGIC = b"CKPT"


def _serialize_checkpoint(meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    ordered = sorted(arrays)
    meta = dict(meta)
    meta["version"] = CHECKPOINT_VERSION
    meta["arrays"] = [
        {"name": n, "dtype": str(arrays[n].dtype), "shape": list(arrays[n].shape)}
        for n in ordered
    ]
    header = json.dumps(meta, sort_keys=True).encode("utf-8")
    blob = [_MAGIC, struct.pack(">I", len(header)), header]
    for n in ordered:
        blob.append(np.ascontiguousarray(arrays[n]).tobytes())
    return b"".join(blob)


def _deserialize_checkpoint(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if data[:4] != _MAGIC:
        raise CheckpointError("not a coordkit checkpoint")
    (hlen,) = struct.unpack(">I", data[4:8])
    meta = json.loads(data[8 : 8 + hlen].decode("utf-8"))
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {meta.get('version')!r} != {CHECKPOINT_VERSION!r}"
        )
    arrays: dict[str, np.ndarray] = {}
    offset = 8 + hlen
    for spec in meta["arrays"]:
        dtype = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = dtype.itemsize * count
        raw = data[offset : offset + nbytes]
        if len(raw) != nbytes:
            raise CheckpointError("truncated checkpoint payload")
        arrays[spec["name"]] = np.frombuffer(raw, dtype=dtype).reshape(spec["shape"]).copy()
        offset += nbytes
    if offset != len(data):
        raise CheckpointError("trailing bytes in checkpoint")
    return meta, arrays


def save_identifier(path: str, model: IdentifierModel) -> None:
    meta = {
        "kind": "identifier",
        "encoder": model.encoder_cfg,
        "config": asdict(model.config) if model.config else None,
        "final_loss": model.final_loss,
    }
    with open(path, "wb") as fh:
        fh.write(_serialize_checkpoint(meta, {"weights": model.weights, "bias": model.bias}))


def save_detector(path: str, model: DetectorModel) -> None:
    meta = {
        "kind": "detector",
        "encoder": model.encoder_cfg,
        "flag_mode": model.flag_mode,
        "config": asdict(model.config) if model.config else None,
        "final_loss": model.final_loss,
    }
    arrays = {
        "weights": model.weights,
        "bias": model.bias,
        "transitions": model.crf.transitions,
        "start": model.crf.start,
        "end": model.crf.end,
        "transition_mask": transition_mask().astype(np.uint8),
        "start_mask": start_mask().astype(np.uint8),
        "end_mask": end_mask().astype(np.uint8),
    }
    with open(path, "wb") as fh:
        fh.write(_serialize_checkpoint(meta, arrays))


def load_model(path: str) -> IdentifierModel | DetectorModel:
    with open(path, "rb") as fh:
        meta, arrays = _deserialize_checkpoint(fh.read())
    encoder_cfg = meta["encoder"]
    encoder = build_encoder(encoder_cfg)
    kind = meta.get("kind")
    if kind == "identifier":
        model: IdentifierModel | DetectorModel = IdentifierModel(
            encoder, encoder_cfg, arrays["weights"], arrays["bias"]
        )
    elif kind == "detector":
        for name, current in (
            ("transition_mask", transition_mask()),
            ("start_mask", start_mask()),
            ("end_mask", end_mask()),
        ):
            if not np.array_equal(arrays[name].astype(bool), current):
                raise CheckpointError(f"checkpoint {name} does not match the label grammar")
        crf = ConstrainedCrf(arrays["transitions"], arrays["start"], arrays["end"])
        model = DetectorModel(
            encoder,
            encoder_cfg,
            arrays["weights"],
            arrays["bias"],
            crf,
            meta.get("flag_mode", "binary"),
        )
    else:
        raise CheckpointError(f"unknown checkpoint kind {kind!r}")
    model.final_loss = meta.get("final_loss")
    if meta.get("config"):
        model.config = TrainConfig(**meta["config"])
    return model


def load_identifier(path: str) -> IdentifierModel:
    model = load_model(path)
    if not isinstance(model, IdentifierModel):
        raise CheckpointError(f"{path} is not an identifier checkpoint")
    return model


def load_detector(path: str) -> DetectorModel:
    model = load_model(path)
    if not isinstance(model, DetectorModel):
        raise CheckpointError(f"{path} is not a detector checkpoint")
    return model
