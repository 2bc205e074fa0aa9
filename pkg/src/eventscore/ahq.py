"""Acoustic & harmonic quality predictor: a two-layer MLP over audio embeddings.

The network maps an embedding to logits over the quality classes 1..4 and
the reported score is the expected class value under the softmax, so it is
fractional and lies in [1, 4].
"""

from __future__ import annotations

import csv
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

N_CLASSES = 4
CLASS_VALUES = np.arange(1, N_CLASSES + 1, dtype=np.float64)
MAGIC = b"AHQ1"
DEFAULT_LR = 10 ** -2.5


class TrainingError(ValueError):
    pass


@dataclass
class AhqModel:
    W1: np.ndarray  # (d, h)
    b1: np.ndarray  # (h,)
    W2: np.ndarray  # (h, 4)
    b2: np.ndarray  # (4,)

    def __post_init__(self):
        d, h = self.W1.shape
        if self.b1.shape != (h,) or self.W2.shape != (h, N_CLASSES) or self.b2.shape != (N_CLASSES,):
            raise ValueError("inconsistent AHQ parameter shapes")
        for p in self.params():
            if not np.all(np.isfinite(p)):
                raise ValueError("AHQ parameters must be finite")

    @property
    def d(self) -> int:
        return self.W1.shape[0]

    @property
    def h(self) -> int:
        return self.W1.shape[1]

    def params(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2]

    @classmethod
    def zeros(cls, d: int, h: int = 64) -> AhqModel:
        return cls(np.zeros((d, h)), np.zeros(h), np.zeros((h, N_CLASSES)), np.zeros(N_CLASSES))

    @classmethod
    def init(cls, d: int, h: int = 64, rng_seed: int = 0) -> AhqModel:
        rng = np.random.default_rng(rng_seed)
        w1 = 1.0 / np.sqrt(d)
        w2 = 1.0 / np.sqrt(h)
        return cls(
            rng.uniform(-w1, w1, size=(d, h)),
            np.zeros(h),
            rng.uniform(-w2, w2, size=(h, N_CLASSES)),
            np.zeros(N_CLASSES),
        )

    def logits(self, X: np.ndarray) -> np.ndarray:
        hidden = np.maximum(X @ self.W1 + self.b1, 0.0)
        return hidden @ self.W2 + self.b2

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.logits(np.atleast_2d(X)))

    def predict_class(self, X: np.ndarray) -> np.ndarray:
        """Most likely label in 1..4."""
        return np.argmax(self.logits(np.atleast_2d(X)), axis=1) + 1


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def expected_class(p: np.ndarray) -> np.ndarray:
    return np.asarray(p) @ CLASS_VALUES


def ahq_predict(model: AhqModel, audio_embedding: np.ndarray) -> float:
    x = np.asarray(audio_embedding, dtype=np.float64)
    if x.shape != (model.d,):
        raise ValueError(f"embedding dimension {x.shape} does not match model input {model.d}")
    return float(np.clip(expected_class(model.predict_proba(x))[0], 1.0, 4.0))


def loss_and_grads(model: AhqModel, X: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean cross-entropy and its gradients w.r.t. (W1, b1, W2, b2).

    ``y`` holds class indices 0..3.
    """
    B = X.shape[0]
    pre = X @ model.W1 + model.b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ model.W2 + model.b2
    z = logits - logits.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -float(log_p[np.arange(B), y].mean())

    dlogits = np.exp(log_p)
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    dW2 = hidden.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dpre = (dlogits @ model.W2.T) * (pre > 0)
    dW1 = X.T @ dpre
    db1 = dpre.sum(axis=0)
    return loss, [dW1, db1, dW2, db2]


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def ahq_train(
    dataset: Sequence[tuple[np.ndarray, int]],
    epochs: int = 6,
    lr: float = DEFAULT_LR,
    batch: int = 32,
    rng_seed: int = 0,
    hidden: int = 64,
) -> tuple[AhqModel, list[float]]:
    """Fit the predictor with Adam on mean softmax cross-entropy.

    Returns the model and the full-dataset loss measured after each epoch.
    """
    if not dataset:
        raise TrainingError("empty training set")
    X = np.stack([np.asarray(x, dtype=np.float64) for x, _ in dataset])
    labels = np.array([int(label) for _, label in dataset])
    if X.ndim != 2:
        raise TrainingError("embeddings must share one dimension")
    if labels.min() < 1 or labels.max() > N_CLASSES:
        raise TrainingError(f"labels must lie in 1..{N_CLASSES}")
    if len(np.unique(labels)) < 2:
        raise TrainingError("training set needs at least two distinct labels")
    y = labels - 1

    rng = np.random.default_rng(rng_seed)
    model = AhqModel.init(X.shape[1], hidden, rng_seed=int(rng.integers(2**63)))
    opt = Adam(model.params(), lr)
    trace = []
    for epoch in range(epochs):
        order = rng.permutation(len(X))
        for b, start in enumerate(range(0, len(X), batch)):
            idx = order[start : start + batch]
            loss, grads = loss_and_grads(model, X[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            opt.step(grads)
        epoch_loss, _ = loss_and_grads(model, X, y)
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"non-finite loss at end of epoch {epoch}")
        trace.append(epoch_loss)
    return model, trace


def accuracy(model: AhqModel, dataset: Sequence[tuple[np.ndarray, int]]) -> float:
    X = np.stack([np.asarray(x, dtype=np.float64) for x, _ in dataset])
    labels = np.array([int(label) for _, label in dataset])
    return float(np.mean(model.predict_class(X) == labels))


def save_ahq_model(path: str | Path, model: AhqModel) -> None:
    """``AHQ1`` | u32 d | u32 h | float32 W1, b1, W2, b2 (row-major, little-endian)."""
    parts = [MAGIC, struct.pack("<II", model.d, model.h)]
    parts += [np.ascontiguousarray(p, dtype="<f4").tobytes() for p in model.params()]
    Path(path).write_bytes(b"".join(parts))


def load_ahq_model(path: str | Path) -> AhqModel:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path} is not an AHQ1 model file")
    d, h = struct.unpack_from("<II", data, 4)
    shapes = [(d, h), (h,), (h, N_CLASSES), (N_CLASSES,)]
    expected = 12 + 4 * sum(int(np.prod(s)) for s in shapes)
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    arrays, offset = [], 12
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float64))
        offset += 4 * count
    return AhqModel(*arrays)


def majority_label(votes: Sequence[int]) -> int | None:
    """Label chosen by a strict majority of annotators, else None."""
    label, count = Counter(votes).most_common(1)[0]
    return label if count * 2 > len(votes) else None


def read_ahq_labels(path: str | Path) -> tuple[dict[str, int], list[str]]:
    """Read ``audio_id,label`` or ``audio_id,a1,a2,a3`` CSV.

    Returns ``(labels, dropped_ids)``; rows without a strict-majority vote
    are dropped.
    """
    labels: dict[str, int] = {}
    dropped: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header == ["audio_id", "label"]:
            vote_cols = 1
        elif header == ["audio_id", "a1", "a2", "a3"]:
            vote_cols = 3
        else:
            raise ValueError(f"{path}: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) != vote_cols + 1:
                raise ValueError(f"{path}:{lineno}: expected {vote_cols + 1} columns")
            votes = [int(v) for v in row[1:]]
            if any(v < 1 or v > N_CLASSES for v in votes):
                raise ValueError(f"{path}:{lineno}: labels must lie in 1..{N_CLASSES}")
            label = majority_label(votes)
            if label is None:
                dropped.append(row[0].strip())
            else:
                labels[row[0].strip()] = label
    return labels, dropped
