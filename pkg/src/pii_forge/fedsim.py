"""Federated training simulator.

Two protocols over page-sharded corpora, with an optional quantizing
model-transfer channel:

* fed-central: a trusted operator pulls data batches from workers round-robin
  and updates the model centrally; batches travel, the model does not.
* fed-remote: the model visits each worker in turn and trains on all of that
  worker's batches; every model transfer (center to worker and back) passes
  through the quantizer. An epoch completes when all workers have been
  visited.

The simulator is logically concurrent but steps workers in a fixed order, so
runs are fully deterministic for a given configuration and corpus.
"""

from __future__ import annotations

import csv
import random
import statistics
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import tagger
from .corpus import AnnotatedSentence, Corpus
from .errors import DataError
from .nereval import EvalReport, Scheme, full_report
from .tagger import TaggerModel, TrainConfig, TrainLog, TrainStep


class Scenario(str, Enum):
    CENTRAL = "central"
    FED_CENTRAL = "fed-central"
    FED_REMOTE = "fed-remote"


class ShardError(DataError):
    """Cannot partition the corpus into the requested number of shards."""


class FedConfigError(DataError):
    """Invalid federated run configuration."""


_ALLOWED_BITS = (None, 16, 8)


@dataclass
class FedRunConfig:
    scenario: Scenario
    n_workers: int = 1
    compression_bits: int | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0  # governs sharding; train.seed governs shuffles

    def __post_init__(self):
        if self.compression_bits not in _ALLOWED_BITS:
            raise FedConfigError(
                f"compression_bits must be one of {_ALLOWED_BITS}, got {self.compression_bits}"
            )
        if self.n_workers < 1:
            raise FedConfigError("n_workers must be >= 1")


@dataclass
class WorkerShard:
    worker_id: int
    corpus: Corpus


def worker_seed(base_seed: int, worker_id: int) -> int:
    """Shuffle seed of one worker's local batch stream.

    Worker 0 uses the base seed itself, so a single-worker federated run
    consumes randomness exactly like a central run.
    """
    return base_seed + worker_id


def shard(corpus: Corpus, n_workers: int, seed: int) -> list[WorkerShard]:
    """Random page-preserving partition into shards of near-equal page count.

    Page membership is drawn from the seed; within a shard, sentences keep
    their corpus order (so one shard of everything is the corpus itself).
    """
    pages = corpus.page_ids()
    if n_workers < 1 or n_workers > len(pages):
        raise ShardError(f"cannot cut {len(pages)} pages into {n_workers} shards")
    shuffled = list(pages)
    random.Random(seed).shuffle(shuffled)
    assignment = {page: i % n_workers for i, page in enumerate(shuffled)}
    shards = []
    for worker_id in range(n_workers):
        sentences = [s for s in corpus.sentences if assignment[s.page_id] == worker_id]
        shards.append(
            WorkerShard(worker_id, Corpus(f"{corpus.name}/shard{worker_id}", sentences))
        )
    return shards


def quantize_weights(model: TaggerModel, bits: int | None) -> TaggerModel:
    """Simulated lossy transfer channel: per-tensor affine quantization.

    ``bits=None`` is the identity (a copy). Otherwise each weight snaps onto
    a uniform grid of 2^bits levels spanning [min, max], rounding half away
    from zero; constant tensors pass through unchanged.
    """
    if bits not in _ALLOWED_BITS:
        raise FedConfigError(f"bits must be one of {_ALLOWED_BITS}, got {bits}")
    out = model.copy()
    if bits is None:
        return out
    w = out.weights
    lo = float(w.min())
    hi = float(w.max())
    if hi == lo:
        return out
    levels = 2**bits - 1
    scale = (hi - lo) / levels
    q = np.floor((w.astype(np.float64) - lo) / scale + 0.5)
    np.clip(q, 0, levels, out=q)
    out.weights = (lo + q * scale).astype(np.float32)
    return out


# --------------------------------------------------------------------------
# protocols
# --------------------------------------------------------------------------


def _fed_central(
    model: TaggerModel, shards: Sequence[WorkerShard], config: TrainConfig
) -> tuple[TaggerModel, TrainLog]:
    """Round-robin batch pull across workers, updates applied centrally."""
    model = model.copy()
    worker_fsents = [
        tagger.featurize_corpus(model, s.corpus.sentences, config) for s in shards
    ]
    rngs = [random.Random(worker_seed(config.seed, s.worker_id)) for s in shards]
    log: TrainLog = []
    step = 0
    for _ in range(config.epochs):
        queues = [
            deque(tagger.make_epoch_batches(fs, config.batch_size, rng))
            for fs, rng in zip(worker_fsents, rngs)
        ]
        while any(queues):
            for worker, queue in enumerate(queues):
                if not queue:
                    continue
                batch = queue.popleft()
                loss = tagger.apply_batch(model, batch, config.learning_rate)
                step += 1
                log.append(TrainStep(step, loss, worker))
    return model, log


def _fed_remote(
    model: TaggerModel,
    shards: Sequence[WorkerShard],
    config: TrainConfig,
    bits: int | None,
) -> tuple[TaggerModel, TrainLog]:
    """Model cycles the workers; every transfer passes the quantizer."""
    model = model.copy()
    worker_fsents = [
        tagger.featurize_corpus(model, s.corpus.sentences, config) for s in shards
    ]
    rngs = [random.Random(worker_seed(config.seed, s.worker_id)) for s in shards]
    log: TrainLog = []
    step = 0
    for _ in range(config.epochs):
        for worker, (fsents, rng) in enumerate(zip(worker_fsents, rngs)):
            model = quantize_weights(model, bits)  # center -> worker
            batches = tagger.make_epoch_batches(fsents, config.batch_size, rng)
            log, step = tagger.train_on_batches(
                model,
                batches,
                config.learning_rate,
                worker_id=worker,
                log=log,
                start_step=step,
            )
            model = quantize_weights(model, bits)  # worker -> center
    return model, log


def _predict_corpus(model: TaggerModel, corpus: Corpus) -> Corpus:
    sentences = [
        AnnotatedSentence(
            s.sentence_id, s.page_id, s.tokens, tagger.predict(model, s.tokens)
        )
        for s in corpus.sentences
    ]
    return Corpus(f"{corpus.name}/predicted", sentences)


def run(
    config: FedRunConfig,
    train_corpus: Corpus,
    test_corpus: Corpus,
    model: TaggerModel | None = None,
) -> tuple[TaggerModel, TrainLog, EvalReport]:
    """Execute one training scenario and evaluate on the test corpus."""
    if model is None:
        model = TaggerModel.create()
    if not train_corpus.sentences:
        raise FedConfigError("training corpus is empty")
    if config.scenario is not Scenario.CENTRAL:
        shards = shard(train_corpus, config.n_workers, config.seed)
    if config.scenario is Scenario.FED_CENTRAL and config.compression_bits is not None:
        raise FedConfigError(
            "fed-central transfers batches, not models; compression_bits must be none"
        )

    if config.scenario is Scenario.CENTRAL:
        trained, log = tagger.train(model, train_corpus, config.train)
    elif config.scenario is Scenario.FED_CENTRAL:
        trained, log = _fed_central(model, shards, config.train)
    else:
        trained, log = _fed_remote(model, shards, config.train, config.compression_bits)

    report = full_report(_predict_corpus(trained, test_corpus), test_corpus)
    return trained, log, report


# --------------------------------------------------------------------------
# worker sweep
# --------------------------------------------------------------------------


@dataclass
class SweepRow:
    n_workers: int
    scheme: Scheme
    mean_f1: float
    std_f1: float
    repetitions: int


@dataclass
class SweepResult:
    rows: list[SweepRow]

    def mean_f1(self, n_workers: int, scheme: Scheme) -> float:
        for row in self.rows:
            if row.n_workers == n_workers and row.scheme is scheme:
                return row.mean_f1
        raise KeyError((n_workers, scheme))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "scheme", "mean_f1", "std_f1", "reps"])
            for row in self.rows:
                writer.writerow(
                    [row.n_workers, row.scheme.value, f"{row.mean_f1:.6f}", f"{row.std_f1:.6f}", row.repetitions]
                )


def sweep_workers(
    train_corpus: Corpus,
    test_corpus: Corpus,
    base_config: FedRunConfig,
    total_shards: int = 10,
    k_values: Iterable[int] = range(2, 11),
    repetitions: int = 10,
    model: TaggerModel | None = None,
) -> SweepResult:
    """Effect of dataset size: fed-central training on k of S shards.

    Each repetition re-shards with a distinct seed and trains on the first k
    shards, so the sampled subset varies across repetitions; reported F1 is
    the mean and population standard deviation per scheme.
    """
    k_values = list(k_values)
    if any(k < 1 or k > total_shards for k in k_values):
        raise FedConfigError(f"k values {k_values} must lie in [1, {total_shards}]")
    if model is None:
        model = TaggerModel.create()

    f1_table: dict[tuple[int, Scheme], list[float]] = {
        (k, scheme): [] for k in k_values for scheme in Scheme
    }
    for rep in range(repetitions):
        shards = shard(train_corpus, total_shards, base_config.seed + rep)
        rep_train = replace(base_config.train, seed=base_config.train.seed + rep)
        for k in k_values:
            trained, _ = _fed_central(model, shards[:k], rep_train)
            report = full_report(_predict_corpus(trained, test_corpus), test_corpus)
            for scheme in Scheme:
                f1_table[(k, scheme)].append(report.micro_f1(scheme))

    rows = []
    for k in k_values:
        for scheme in Scheme:
            values = f1_table[(k, scheme)]
            rows.append(
                SweepRow(
                    k,
                    scheme,
                    statistics.mean(values),
                    statistics.pstdev(values) if len(values) > 1 else 0.0,
                    len(values),
                )
            )
    return SweepResult(rows)


def write_loss_csv(log: TrainLog, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "worker_id", "loss"])
        for entry in log:
            writer.writerow([entry.step, entry.worker_id, f"{entry.loss:.8f}"])
