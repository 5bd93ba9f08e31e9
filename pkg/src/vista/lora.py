"""Low-rank adapter training kernel, exercised on toy linear token models.

Embodies the adapter algebra W' = W + (alpha/r) * A @ B over a frozen base,
next-token cross-entropy with analytic gradients for A and B only, cosine
learning-rate annealing, global gradient clipping, and early stopping. The
single linear layer stands in for per-projection adapters; multiplicity is a
loop over independent adapters.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import DivergenceError, EmptyInputError, InvalidArgumentError, ShapeError

EARLY_STOP_TOLERANCE = 1e-6
ADAPTER_INIT_STD = 0.02

# Fine-tuning presets: (rank, alpha, lr, batch size, max epochs); patience 5
# throughout, from the validation-stall rule.
PRESETS = {
    "few-shot": {
        "rank": 64, "alpha": 32.0, "learning_rate": 1e-4, "batch_size": 4,
        "max_epochs": 50, "patience": 5, "dropout_rate": 0.1,
    },
    "one-shot": {
        "rank": 8, "alpha": 4.0, "learning_rate": 1e-3, "batch_size": 1,
        "max_epochs": 20, "patience": 5, "dropout_rate": 0.1,
    },
}


def _check_matrix(m, name):
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2D, got {arr.ndim}D")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    return arr


@dataclass
class LoraAdapter:
    """Rank-decomposition pair: A (d x r) Gaussian-initialized, B (r x k) zero."""

    A: np.ndarray
    B: np.ndarray
    rank: int
    alpha: float
    dropout_rate: float = 0.0

    def __post_init__(self):
        self.A = _check_matrix(self.A, "A")
        self.B = _check_matrix(self.B, "B")
        if self.rank < 1:
            raise InvalidArgumentError(f"rank must be positive, got {self.rank}")
        if self.A.shape[1] != self.rank or self.B.shape[0] != self.rank:
            raise ShapeError(
                f"A cols ({self.A.shape[1]}) and B rows ({self.B.shape[0]}) must equal rank {self.rank}"
            )
        if self.rank > min(self.A.shape[0], self.B.shape[1]):
            raise InvalidArgumentError(
                f"rank {self.rank} exceeds min(d={self.A.shape[0]}, k={self.B.shape[1]})"
            )
        if self.alpha <= 0:
            raise InvalidArgumentError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidArgumentError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    def delta(self) -> np.ndarray:
        return self.scale * (self.A @ self.B)


def init_adapter(d: int, k: int, rank: int, alpha: float, dropout_rate: float = 0.0,
                 rng: Optional[np.random.Generator] = None) -> LoraAdapter:
    """Gaussian A, zero B: the initial update is exactly zero, so training
    starts at the frozen base model."""
    rng = rng or np.random.default_rng()
    A = rng.normal(0.0, ADAPTER_INIT_STD, size=(d, rank))
    B = np.zeros((rank, k))
    return LoraAdapter(A=A, B=B, rank=rank, alpha=alpha, dropout_rate=dropout_rate)


def lora_apply(W, adapter: LoraAdapter) -> np.ndarray:
    """W + (alpha/r) * A @ B; the base W is never mutated."""
    W = _check_matrix(W, "W")
    d, k = W.shape
    if adapter.A.shape[0] != d or adapter.B.shape[1] != k:
        raise ShapeError(
            f"adapter ({adapter.A.shape[0]}x{adapter.B.shape[1]}) does not fit W ({d}x{k})"
        )
    return W + adapter.delta()


def lora_apply_many(W, adapters) -> np.ndarray:
    """Independent adapters accumulated onto one base (placement multiplicity)."""
    out = _check_matrix(W, "W").copy()
    for adapter in adapters:
        out = lora_apply(out, adapter)
    return out


def cross_entropy_loss(logits, targets) -> float:
    """Mean negative log softmax probability of the targets, via the
    log-sum-exp max shift."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim == 1:
        logits = logits[None, :]
    if logits.size == 0 or targets.size == 0:
        raise EmptyInputError("empty logits or targets")
    if logits.shape[0] != targets.shape[0]:
        raise ShapeError(f"{logits.shape[0]} logit rows vs {targets.shape[0]} targets")
    vocab = logits.shape[1]
    if np.any(targets < 0) or np.any(targets >= vocab):
        raise IndexError(f"target outside [0, {vocab})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(len(targets)), targets]
    return float(np.mean(log_z - picked))


def softmax(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cosine_lr(step: int, total_steps: int, lr_max: float) -> float:
    """lr_max * 0.5 * (1 + cos(pi * step / total_steps)); non-increasing in step."""
    if total_steps < 1:
        raise InvalidArgumentError(f"total_steps must be >= 1, got {total_steps}")
    if step < 0 or step > total_steps:
        raise InvalidArgumentError(f"step {step} outside [0, {total_steps}]")
    return lr_max * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class TrainConfig:
    learning_rate: float
    batch_size: int
    max_epochs: int
    patience: int
    clip_norm: float = 1.0
    lr_schedule: str = "cosine"
    seed: int = 0
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise InvalidArgumentError("learning_rate, batch_size, max_epochs must be positive")
        if not 1 <= self.patience <= self.max_epochs:
            raise InvalidArgumentError(
                f"patience {self.patience} must be in [1, max_epochs={self.max_epochs}]"
            )
        if self.clip_norm <= 0:
            raise InvalidArgumentError("clip_norm must be positive")
        if self.lr_schedule not in ("constant", "cosine"):
            raise InvalidArgumentError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.weight_decay < 0:
            raise InvalidArgumentError("weight_decay must be non-negative")

    def epoch_lr(self, epoch: int) -> float:
        """Learning rate for a 1-indexed epoch; cosine anneals to 0 at max_epochs."""
        if self.lr_schedule == "constant":
            return self.learning_rate
        if self.max_epochs == 1:
            return self.learning_rate
        return cosine_lr(epoch - 1, self.max_epochs - 1, self.learning_rate)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainTrace:
    epochs: list[EpochStats]
    stop_epoch: int
    stop_reason: str  # early_stop | max_epochs
    config: TrainConfig

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
            for e in self.epochs:
                writer.writerow([e.epoch, f"{e.train_loss:.10f}", f"{e.val_loss:.10f}", f"{e.lr:.10f}"])

    def summary(self) -> dict:
        return {
            "stop_epoch": self.stop_epoch,
            "stop_reason": self.stop_reason,
            "final_train_loss": self.epochs[-1].train_loss if self.epochs else None,
            "final_val_loss": self.epochs[-1].val_loss if self.epochs else None,
            "config": {
                "learning_rate": self.config.learning_rate,
                "batch_size": self.config.batch_size,
                "max_epochs": self.config.max_epochs,
                "patience": self.config.patience,
                "clip_norm": self.config.clip_norm,
                "lr_schedule": self.config.lr_schedule,
                "seed": self.config.seed,
                "weight_decay": self.config.weight_decay,
            },
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


class EarlyStopper:
    """Stops after `patience` consecutive epochs with no improvement over the best.

    Improvement means val_loss < best - 1e-6 (absolute tolerance).
    """

    def __init__(self, patience: int, tolerance: float = EARLY_STOP_TOLERANCE):
        self.patience = patience
        self.tolerance = tolerance
        self.best = math.inf
        self.stalled = 0

    def update(self, val_loss: float) -> bool:
        """Record one epoch's validation loss; True when training should stop."""
        if val_loss < self.best - self.tolerance:
            self.best = val_loss
            self.stalled = 0
        else:
            self.stalled += 1
        return self.stalled >= self.patience


def global_clip(grads: list[np.ndarray], clip_norm: float) -> tuple[list[np.ndarray], float]:
    """Scale the gradient group so its global L2 norm is at most clip_norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > clip_norm and total > 0:
        factor = clip_norm / total
        grads = [g * factor for g in grads]
        total = clip_norm
    return grads, total


def apply_dropout(x: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted dropout mask; rate 0 is the identity."""
    if rate == 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    return x * keep / (1.0 - rate)


@dataclass
class ToyModel:
    """Linear next-token model: logits = x @ (W + scale * A @ B).

    `embed` and `W` are frozen; only the adapter trains. Output dim k doubles
    as the vocabulary size.
    """

    embed: np.ndarray  # (V, d), frozen
    W: np.ndarray      # (d, k), frozen
    adapter: LoraAdapter

    @property
    def vocab(self) -> int:
        return self.W.shape[1]

    def inputs(self, tokens: np.ndarray) -> np.ndarray:
        return self.embed[np.asarray(tokens, dtype=np.int64)]

    def logits(self, tokens, adapter_inputs: Optional[np.ndarray] = None) -> np.ndarray:
        x = self.inputs(tokens)
        xa = adapter_inputs if adapter_inputs is not None else x
        return x @ self.W + self.adapter.scale * (xa @ self.adapter.A) @ self.adapter.B


def make_toy_model(d: int, k: int, vocab: int, rank: int, alpha: float,
                   dropout_rate: float = 0.0,
                   rng: Optional[np.random.Generator] = None,
                   embed_scale: float = 1.0) -> ToyModel:
    if k != vocab:
        raise InvalidArgumentError(f"output dim k ({k}) must equal vocab ({vocab})")
    rng = rng or np.random.default_rng()
    if d == vocab:
        embed = np.eye(vocab) * embed_scale
    else:
        embed = rng.normal(0.0, 1.0 / math.sqrt(d), size=(vocab, d)) * embed_scale
    W = rng.normal(0.0, 0.1 / math.sqrt(d), size=(d, k))
    adapter = init_adapter(d, k, rank, alpha, dropout_rate, rng)
    W.setflags(write=False)
    embed.setflags(write=False)
    return ToyModel(embed=embed, W=W, adapter=adapter)


def batch_positions(sequences) -> tuple[np.ndarray, np.ndarray]:
    """Flatten next-token positions: inputs seq[:-1], targets seq[1:]."""
    ins, outs = [], []
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.int64)
        if len(seq) < 2:
            continue
        ins.append(seq[:-1])
        outs.append(seq[1:])
    if not ins:
        raise EmptyInputError("no usable positions in batch")
    return np.concatenate(ins), np.concatenate(outs)


def batch_loss(model: ToyModel, sequences) -> float:
    tokens, targets = batch_positions(sequences)
    return cross_entropy_loss(model.logits(tokens), targets)


def analytic_gradients(model: ToyModel, sequences,
                       dropout_mask: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
    """dL/dA and dL/dB for the mean cross entropy over the batch.

    No gradient exists for the frozen W. A fixed dropout_mask (same shape as
    the input block) keeps the computation deterministic for checking.
    """
    tokens, targets = batch_positions(sequences)
    x = model.inputs(tokens)
    xa = x * dropout_mask if dropout_mask is not None else x
    logits = model.logits(tokens, adapter_inputs=xa)
    probs = softmax(logits)
    probs[np.arange(len(targets)), targets] -= 1.0
    g = probs / len(targets)
    scale = model.adapter.scale
    dB = scale * (xa @ model.adapter.A).T @ g
    dA = scale * xa.T @ (g @ model.adapter.B.T)
    return dA, dB


def train_toy(config: TrainConfig, dataset, dims: tuple[int, int, int],
              adapter_spec: tuple, step_hook: Optional[Callable[[int, float], None]] = None,
              embed_scale: float = 1.0) -> TrainTrace:
    """Adapter-only training with decoupled weight decay, global clipping,
    per-epoch cosine annealing, and validation early stopping.

    dataset is (train_sequences, val_sequences); adapter_spec is (rank, alpha)
    or (rank, alpha, dropout_rate). Bit-reproducible for a fixed (config,
    dataset): all randomness flows from config.seed.
    """
    train_seqs, val_seqs = dataset
    train_seqs = [np.asarray(s, dtype=np.int64) for s in train_seqs]
    val_seqs = [np.asarray(s, dtype=np.int64) for s in val_seqs]
    if not train_seqs or not val_seqs:
        raise EmptyInputError("train and val splits must both be non-empty")

    d, k, vocab = dims
    rank, alpha, *rest = adapter_spec
    dropout = rest[0] if rest else 0.0
    rng = np.random.default_rng(config.seed)
    model = make_toy_model(d, k, vocab, rank, float(alpha), dropout, rng,
                           embed_scale=embed_scale)

    stopper = EarlyStopper(config.patience)
    epochs: list[EpochStats] = []
    stop_reason = "max_epochs"
    stop_epoch = config.max_epochs

    for epoch in range(1, config.max_epochs + 1):
        lr = config.epoch_lr(epoch)
        order = rng.permutation(len(train_seqs))
        for start in range(0, len(order), config.batch_size):
            batch = [train_seqs[i] for i in order[start : start + config.batch_size]]
            mask = None
            if dropout > 0.0:
                tokens, _ = batch_positions(batch)
                mask = (rng.random((len(tokens), d)) >= dropout) / (1.0 - dropout)
            dA, dB = analytic_gradients(model, batch, dropout_mask=mask)
            (dA, dB), norm = global_clip([dA, dB], config.clip_norm)
            if step_hook is not None:
                step_hook(epoch, norm)
            adapter = model.adapter
            adapter.A = adapter.A - lr * dA - lr * config.weight_decay * adapter.A
            adapter.B = adapter.B - lr * dB - lr * config.weight_decay * adapter.B

        train_loss = batch_loss(model, train_seqs)
        val_loss = batch_loss(model, val_seqs)
        epochs.append(EpochStats(epoch=epoch, train_loss=train_loss, val_loss=val_loss, lr=lr))
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise DivergenceError(
                f"non-finite loss at epoch {epoch}",
                trace=TrainTrace(epochs=epochs, stop_epoch=epoch, stop_reason="diverged", config=config),
            )
        if stopper.update(val_loss):
            stop_reason = "early_stop"
            stop_epoch = epoch
            break
    else:
        stop_epoch = config.max_epochs

    return TrainTrace(epochs=epochs, stop_epoch=stop_epoch, stop_reason=stop_reason, config=config)


def make_synthetic_dataset(vocab: int, n_train: int, n_val: int, seq_len: int,
                           seed: int, step: int = 3) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Learnable token streams: next token = (token * step + 1) mod vocab,
    with random starts. `step` coprime to vocab keeps the map a permutation."""
    rng = np.random.default_rng(seed)

    def make(n):
        seqs = []
        for _ in range(n):
            t = int(rng.integers(0, vocab))
            seq = [t]
            for _ in range(seq_len - 1):
                t = (t * step + 1) % vocab
                seq.append(t)
            seqs.append(np.array(seq, dtype=np.int64))
        return seqs

    return make(n_train), make(n_val)
