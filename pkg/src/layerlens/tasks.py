"""Synthetic sequence tasks for the desk-scale transformers.

Token id 0 is reserved as the CLS marker, so data tokens are drawn from
1..vocab_size and a model needs vocab_size + 1 embedding rows. Labels are
class ids over the model's output vocabulary:

    CopyLastToken   label = the final data token (ids 1..vocab_size)
    ModularSum      label = sum(tokens) mod vocab_size (ids 0..vocab_size-1)
    Parity          label = sum(tokens) mod 2 (ids 0..1)

Train and validation sequences are deduplicated together, so the two
splits are disjoint by construction, and everything is reproducible from
the seed alone.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

CLS_TOKEN_ID = 0


class TaskKind(enum.Enum):
    COPY_LAST_TOKEN = "copy"
    MODULAR_SUM = "modsum"
    PARITY = "parity"


@dataclass(frozen=True)
class SyntheticTask:
    kind: TaskKind
    sequence_length: int = 32
    vocab_size: int = 16
    train_size: int = 1024
    val_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.sequence_length < 1:
            raise ValidationError(f"sequence_length must be >= 1, got {self.sequence_length}")
        if self.vocab_size < 2:
            raise ValidationError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.train_size < 1 or self.val_size < 1:
            raise ValidationError("train_size and val_size must be >= 1")
        # Disjoint splits need at least train+val distinct sequences.
        needed = self.train_size + self.val_size
        if self.sequence_length * math.log2(self.vocab_size) <= 48:
            capacity = self.vocab_size**self.sequence_length
            if needed > capacity:
                raise ValidationError(
                    f"task space holds {capacity} sequences, {needed} requested"
                )

    @property
    def min_model_vocab(self) -> int:
        return self.vocab_size + 1

    def labels_for(self, tokens: np.ndarray) -> np.ndarray:
        """Deterministic label rule applied to a (batch, T) token matrix."""
        tokens = np.asarray(tokens)
        if tokens.ndim != 2 or tokens.shape[1] != self.sequence_length:
            raise ValidationError(
                f"token matrix shape {tokens.shape} does not match "
                f"sequence_length {self.sequence_length}"
            )
        if tokens.min(initial=1) < 1 or tokens.max(initial=1) > self.vocab_size:
            raise ValidationError("data tokens must lie in 1..vocab_size")
        if self.kind is TaskKind.COPY_LAST_TOKEN:
            return tokens[:, -1].astype(np.int64)
        if self.kind is TaskKind.MODULAR_SUM:
            return (tokens.sum(axis=1) % self.vocab_size).astype(np.int64)
        return (tokens.sum(axis=1) % 2).astype(np.int64)

    def sample_tokens(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """I.i.d. sequences for representation extraction (no split needed)."""
        if count < 1:
            raise ValidationError(f"count must be >= 1, got {count}")
        return rng.integers(1, self.vocab_size + 1, size=(count, self.sequence_length))

    def generate(self) -> "TaskData":
        """Materialize the disjoint train/validation splits from the seed."""
        rng = np.random.default_rng(self.seed)
        needed = self.train_size + self.val_size
        rows = []
        seen = set()
        while len(rows) < needed:
            batch = rng.integers(
                1, self.vocab_size + 1, size=(max(needed - len(rows), 64), self.sequence_length)
            )
            for row in batch:
                key = row.tobytes()
                if key not in seen:
                    seen.add(key)
                    rows.append(row)
                    if len(rows) == needed:
                        break
        tokens = np.stack(rows)
        train = tokens[: self.train_size]
        val = tokens[self.train_size :]
        return TaskData(
            train_tokens=train,
            train_labels=self.labels_for(train),
            val_tokens=val,
            val_labels=self.labels_for(val),
        )


@dataclass(frozen=True)
class TaskData:
    train_tokens: np.ndarray
    train_labels: np.ndarray
    val_tokens: np.ndarray
    val_labels: np.ndarray
