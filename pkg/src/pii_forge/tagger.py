"""Deterministic trainable sequence tagger.

A multinomial linear model over hashed lexical features, predicting one of
the 11 BIO labels per token. Training is plain minibatch gradient descent on
averaged softmax cross-entropy; for a fixed seed, configuration and corpus
the resulting weight bytes are identical across runs. Weights live in 32-bit
floats; gradients are computed in float64.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .corpus import LABEL_ORDER, AnnotatedSentence, BioLabel, Corpus, Token
from .errors import DataError

N_LABELS = len(LABEL_ORDER)  # 11
DEFAULT_FEATURE_DIM = 2**18
DEFAULT_HASH_SEED = 0x5EEDF00D
MODEL_VERSION = 1
_MAGIC = b"PIITAG"

_LABEL_INDEX = {label: i for i, label in enumerate(LABEL_ORDER)}


class EmptyCorpusError(DataError):
    """Training requires at least one non-empty sentence."""


class ModelVersionError(DataError):
    """Serialized model version is not supported."""


class CorruptModelError(DataError):
    """Model file is truncated or malformed."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.5
    batch_size: int = 128
    max_sentence_tokens: int = 50
    epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size <= 0 or self.max_sentence_tokens <= 0 or self.epochs <= 0:
            raise ValueError("batch_size, max_sentence_tokens and epochs must be positive")


@dataclass(frozen=True)
class TrainStep:
    step: int
    loss: float
    worker_id: int


TrainLog = list  # list[TrainStep]


@dataclass
class TaggerModel:
    weights: np.ndarray  # float32, [feature_dim, N_LABELS]
    feature_dim: int
    hash_seed: int
    version: int = MODEL_VERSION

    @classmethod
    def create(
        cls,
        feature_dim: int = DEFAULT_FEATURE_DIM,
        hash_seed: int = DEFAULT_HASH_SEED,
    ) -> "TaggerModel":
        if feature_dim <= 0 or feature_dim & (feature_dim - 1):
            raise ValueError(f"feature_dim must be a power of two, got {feature_dim}")
        if not 0 <= hash_seed < 2**64:
            raise ValueError("hash_seed must fit in 64 bits")
        weights = np.zeros((feature_dim, N_LABELS), dtype=np.float32)
        return cls(weights, feature_dim, hash_seed)

    def copy(self) -> "TaggerModel":
        return TaggerModel(self.weights.copy(), self.feature_dim, self.hash_seed, self.version)


# --------------------------------------------------------------------------
# features
# --------------------------------------------------------------------------

N_FEATURES_PER_TOKEN = 11


def _shape(text: str) -> str:
    mapped = []
    for ch in text:
        if ch.isupper():
            mapped.append("X")
        elif ch.islower():
            mapped.append("x")
        elif ch.isdigit():
            mapped.append("9")
        else:
            mapped.append(ch)
    collapsed = []
    for ch in mapped:
        if not collapsed or collapsed[-1] != ch:
            collapsed.append(ch)
    return "".join(collapsed)


def _hash_feature(feature: str, hash_seed: int) -> int:
    digest = hashlib.blake2b(
        feature.encode("utf-8"), digest_size=8, key=hash_seed.to_bytes(8, "little")
    ).digest()
    return int.from_bytes(digest, "little")


def featurize(
    tokens: Sequence[Token],
    position: int,
    feature_dim: int = DEFAULT_FEATURE_DIM,
    hash_seed: int = DEFAULT_HASH_SEED,
) -> np.ndarray:
    """Hashed feature indices for the token at ``position``.

    Features: bias, lowercased token, word shape, 2/3-char prefixes and
    suffixes, and lowercased neighbors at offsets -2..+2 (boundary sentinels
    outside the sentence). Indices land in [0, feature_dim).
    """
    text = tokens[position].text
    low = text.lower()
    feats = [
        "bias",
        "w0=" + low,
        "shape=" + _shape(text),
        "pre2=" + low[:2],
        "pre3=" + low[:3],
        "suf2=" + low[-2:],
        "suf3=" + low[-3:],
    ]
    for offset in (-2, -1, 1, 2):
        j = position + offset
        if 0 <= j < len(tokens):
            neighbor = tokens[j].text.lower()
        else:
            neighbor = "<s>" if j < 0 else "</s>"
        feats.append(f"w{offset:+d}={neighbor}")
    return np.array(
        [_hash_feature(f, hash_seed) % feature_dim for f in feats], dtype=np.int64
    )


@dataclass
class FeaturizedSentence:
    feats: np.ndarray  # int64, [n_tokens, N_FEATURES_PER_TOKEN]
    labels: np.ndarray  # int64, [n_tokens]


def featurize_sentence(
    model: TaggerModel, sentence: AnnotatedSentence, max_tokens: int
) -> FeaturizedSentence:
    tokens = sentence.tokens[:max_tokens]
    labels = sentence.labels[: len(tokens)]
    feats = np.stack(
        [featurize(tokens, i, model.feature_dim, model.hash_seed) for i in range(len(tokens))]
    )
    return FeaturizedSentence(feats, np.array([_LABEL_INDEX[l] for l in labels], dtype=np.int64))


def featurize_corpus(
    model: TaggerModel, sentences: Iterable[AnnotatedSentence], config: TrainConfig
) -> list[FeaturizedSentence]:
    """Featurize non-empty sentences, truncated to the configured length."""
    out = []
    for sentence in sentences:
        if sentence.tokens:
            out.append(featurize_sentence(model, sentence, config.max_sentence_tokens))
    return out


# --------------------------------------------------------------------------
# loss, gradient, updates
# --------------------------------------------------------------------------


def batch_loss_grad(
    weights: np.ndarray, batch: Sequence[FeaturizedSentence]
) -> tuple[float, np.ndarray, np.ndarray]:
    """Averaged softmax cross-entropy over a batch's tokens.

    Returns (loss, active_feature_indices, grad_rows) where grad_rows is the
    float64 gradient restricted to the active rows; all other rows are zero.
    """
    F = np.concatenate([fs.feats for fs in batch], axis=0)
    y = np.concatenate([fs.labels for fs in batch])
    n_tokens = F.shape[0]
    logits = weights[F].astype(np.float64).sum(axis=1)
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    total = exp.sum(axis=1, keepdims=True)
    log_probs = logits - np.log(total)
    loss = float(-log_probs[np.arange(n_tokens), y].mean())
    delta = exp / total
    delta[np.arange(n_tokens), y] -= 1.0
    delta /= n_tokens
    active, inverse = np.unique(F, return_inverse=True)
    grad_rows = np.zeros((active.size, weights.shape[1]), dtype=np.float64)
    np.add.at(grad_rows, inverse.reshape(-1), np.repeat(delta, F.shape[1], axis=0))
    return loss, active, grad_rows


def apply_batch(model: TaggerModel, batch: Sequence[FeaturizedSentence], learning_rate: float) -> float:
    """One gradient-descent step in place; returns the batch loss."""
    loss, active, grad_rows = batch_loss_grad(model.weights, batch)
    updated = model.weights[active].astype(np.float64) - learning_rate * grad_rows
    model.weights[active] = updated.astype(np.float32)
    return loss


def make_epoch_batches(
    fsents: Sequence[FeaturizedSentence], batch_size: int, rng: random.Random
) -> list[list[FeaturizedSentence]]:
    """Shuffle sentence order once, then chunk into batches."""
    order = list(range(len(fsents)))
    rng.shuffle(order)
    return [
        [fsents[i] for i in order[at : at + batch_size]]
        for at in range(0, len(order), batch_size)
    ]


def train_on_batches(
    model: TaggerModel,
    batches: Iterable[Sequence[FeaturizedSentence]],
    learning_rate: float,
    *,
    worker_id: int = 0,
    log: TrainLog | None = None,
    start_step: int = 0,
) -> tuple[TrainLog, int]:
    """Apply batches in order, mutating the model and extending the log."""
    if log is None:
        log = []
    step = start_step
    for batch in batches:
        if not batch:
            continue
        loss = apply_batch(model, batch, learning_rate)
        step += 1
        log.append(TrainStep(step, loss, worker_id))
    return log, step


def train(
    model: TaggerModel, corpus: Corpus, config: TrainConfig, *, worker_id: int = 0
) -> tuple[TaggerModel, TrainLog]:
    """Train a copy of the model on the corpus; deterministic per seed."""
    fsents = featurize_corpus(model, corpus.sentences, config)
    if not fsents:
        raise EmptyCorpusError(f"corpus {corpus.name!r} has no usable sentences")
    model = model.copy()
    rng = random.Random(config.seed)
    log: TrainLog = []
    step = 0
    for _ in range(config.epochs):
        batches = make_epoch_batches(fsents, config.batch_size, rng)
        log, step = train_on_batches(
            model, batches, config.learning_rate, worker_id=worker_id, log=log, start_step=step
        )
    return model, log


def predict(model: TaggerModel, tokens: Sequence[Token]) -> list[BioLabel]:
    """Argmax label per token; all-zero score ties resolve to O."""
    if not tokens:
        return []
    feats = np.stack(
        [featurize(tokens, i, model.feature_dim, model.hash_seed) for i in range(len(tokens))]
    )
    scores = model.weights[feats].astype(np.float64).sum(axis=1)
    return [LABEL_ORDER[i] for i in scores.argmax(axis=1)]


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


def model_bytes(model: TaggerModel) -> bytes:
    parts = [
        _MAGIC,
        struct.pack("<IQQI", model.version, model.feature_dim, model.hash_seed, N_LABELS),
    ]
    for label in LABEL_ORDER:
        encoded = label.value.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
    parts.append(np.ascontiguousarray(model.weights, dtype="<f4").tobytes())
    return b"".join(parts)


def save_model(model: TaggerModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_bytes(model))


def load_model(path) -> TaggerModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    at = 0

    def take(n: int) -> bytes:
        nonlocal at
        if at + n > len(blob):
            raise CorruptModelError(f"truncated model file (need {at + n} bytes, have {len(blob)})")
        piece = blob[at : at + n]
        at += n
        return piece

    if take(len(_MAGIC)) != _MAGIC:
        raise CorruptModelError("bad magic; not a tagger model file")
    version, feature_dim, hash_seed, n_labels = struct.unpack("<IQQI", take(24))
    if version != MODEL_VERSION:
        raise ModelVersionError(f"model version {version}, expected {MODEL_VERSION}")
    if n_labels != N_LABELS:
        raise CorruptModelError(f"model has {n_labels} labels, expected {N_LABELS}")
    for label in LABEL_ORDER:
        (length,) = struct.unpack("<H", take(2))
        if take(length).decode("utf-8") != label.value:
            raise CorruptModelError("label order mismatch")
    weights = np.frombuffer(take(feature_dim * N_LABELS * 4), dtype="<f4").reshape(
        feature_dim, N_LABELS
    )
    if at != len(blob):
        raise CorruptModelError(f"{len(blob) - at} trailing bytes")
    return TaggerModel(weights.copy(), int(feature_dim), int(hash_seed), version)


def model_digest(model: TaggerModel) -> str:
    return hashlib.sha256(model_bytes(model)).hexdigest()
