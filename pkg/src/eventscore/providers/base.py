from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..audio_io import AudioClip
from ..event_text import EventList
from .cache import EmbeddingCache

REMOTE = "remote"
STUB = "stub"


class ProviderError(RuntimeError):
    """A provider call failed. ``retryable`` tells callers whether a retry may help."""

    retryable = False

    def __init__(self, message: str, retryable: bool | None = None):
        super().__init__(message)
        if retryable is not None:
            self.retryable = retryable


class ProviderUnreachableError(ProviderError):
    retryable = True


class ProviderTimeoutError(ProviderError):
    retryable = True


class RemoteStatusError(ProviderError):
    def __init__(self, status: int, message: str):
        self.status = status
        super().__init__(f"HTTP {status}: {message}", retryable=status == 429 or status >= 500)


class InvalidResponseError(ProviderError):
    """Response had the wrong count, dimension or failed EventList validation."""


@dataclass
class ProviderConfig:
    kind: str = STUB
    endpoint_url: str | None = None
    timeout_s: float = 30.0
    max_in_flight: int = 4
    cache_dir: Path | None = None
    dim: int = 512
    batch_size: int = 32
    token: str | None = None
    lexicon_path: Path | None = None

    def __post_init__(self):
        if self.kind not in (REMOTE, STUB):
            raise ValueError(f"provider kind must be {REMOTE!r} or {STUB!r}, got {self.kind!r}")
        if self.kind == REMOTE and not self.endpoint_url:
            raise ValueError("a remote provider needs endpoint_url")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.cache_dir is not None:
            self.cache_dir = Path(self.cache_dir)


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two unit-norm embeddings (their dot product)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"embedding dimension mismatch: {a.shape} vs {b.shape}")
    for v in (a, b):
        if abs(np.linalg.norm(v) - 1.0) > 1e-5:
            raise ValueError("similarity expects unit-normalized embeddings")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def unit(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    norm = np.linalg.norm(vec)
    if not np.isfinite(norm) or norm == 0:
        raise InvalidResponseError("embedding has zero or non-finite norm")
    return (vec / norm).astype(np.float32)


def clip_key(clip: AudioClip) -> bytes:
    return clip.sample_rate.to_bytes(4, "little") + clip.samples.astype("<f4").tobytes()


class Provider:
    """Embedder + separator + decomposer behind one handle.

    Subclasses implement the batch primitives; this class handles caching,
    batching, order preservation and the bound on concurrent calls.
    """

    def __init__(self, config: ProviderConfig):
        self.config = config
        self.dim: int | None = None
        self.cache = EmbeddingCache(config.cache_dir, namespace=self.cache_namespace()) if config.cache_dir else None
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._count_lock = threading.Lock()
        self.in_flight = 0
        self.max_in_flight_observed = 0
        self.calls = 0

    def cache_namespace(self) -> str:
        return self.config.kind

    @contextmanager
    def _slot(self):
        with self._slots:
            with self._count_lock:
                self.in_flight += 1
                self.calls += 1
                self.max_in_flight_observed = max(self.max_in_flight_observed, self.in_flight)
            try:
                yield
            finally:
                with self._count_lock:
                    self.in_flight -= 1

    # -- primitives for subclasses -------------------------------------------------

    def _embed_text_batch(self, texts: list[str]) -> list[np.ndarray]:
        raise NotImplementedError

    def _embed_audio_batch(self, clips: list[AudioClip]) -> list[np.ndarray]:
        raise NotImplementedError

    def _separate(self, clip: AudioClip, caption: str) -> np.ndarray:
        raise NotImplementedError

    def _decompose(self, caption: str) -> EventList:
        raise NotImplementedError

    # -- public contract ---------------------------------------------------------------

    def embed_text(self, texts: Sequence[str]) -> list[np.ndarray]:
        texts = list(texts)
        if not texts:
            raise ValueError("embed_text needs at least one text")
        if any(not isinstance(t, str) or not t.strip() for t in texts):
            raise ValueError("embed_text inputs must be non-empty strings")
        return self._embed(texts, lambda t: b"text\0" + t.encode("utf-8"), self._embed_text_batch)

    def embed_audio(self, clips: Sequence[AudioClip]) -> list[np.ndarray]:
        clips = list(clips)
        if not clips:
            raise ValueError("embed_audio needs at least one clip")
        if any(len(c) == 0 for c in clips):
            raise ValueError("embed_audio inputs must be non-empty clips")
        return self._embed(clips, lambda c: b"audio\0" + clip_key(c), self._embed_audio_batch)

    def separate(self, clip: AudioClip, event_caption: str) -> AudioClip:
        if len(clip) == 0:
            raise ValueError("cannot separate an empty clip")
        if not event_caption or not event_caption.strip():
            raise ValueError("separation caption must be non-empty")
        with self._slot():
            stem = np.asarray(self._separate(clip, event_caption), dtype=np.float64)
        if stem.shape != clip.samples.shape:
            raise InvalidResponseError(f"separated stem has {stem.size} samples, expected {len(clip)}")
        return AudioClip(id=f"{clip.id}:{event_caption}", samples=stem, sample_rate=clip.sample_rate)

    def decompose(self, caption: str) -> EventList:
        if not caption or not caption.strip():
            raise ValueError("caption must be non-empty")
        with self._slot():
            return self._decompose(caption)

    def close(self) -> None:
        pass

    # -- internals ---------------------------------------------------------------------

    def _check_dim(self, vectors: list[np.ndarray]) -> None:
        for v in vectors:
            if self.dim is None:
                self.dim = int(v.shape[0])
            elif v.shape != (self.dim,):
                raise InvalidResponseError(f"embedding dimension {v.shape[0]} differs from session dimension {self.dim}")

    def _embed(self, items: list, key_of: Callable[[object], bytes], batch_fn) -> list[np.ndarray]:
        keys = [key_of(item) for item in items]
        found: dict[bytes, np.ndarray] = {}
        todo: dict[bytes, object] = {}
        for key, item in zip(keys, items):
            if key in found or key in todo:
                continue
            cached = self.cache.get(key) if self.cache else None
            if cached is not None:
                found[key] = cached
            else:
                todo[key] = item

        if todo:
            todo_keys = list(todo)
            size = self.config.batch_size
            chunks = [todo_keys[k : k + size] for k in range(0, len(todo_keys), size)]

            def run(chunk):
                batch = [todo[k] for k in chunk]
                with self._slot():
                    vectors = batch_fn(batch)
                if len(vectors) != len(batch):
                    raise InvalidResponseError(f"expected {len(batch)} embeddings, got {len(vectors)}")
                return [unit(v) for v in vectors]

            if len(chunks) == 1:
                results = [run(chunks[0])]
            else:
                workers = min(len(chunks), self.config.max_in_flight)
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    results = list(pool.map(run, chunks))
            for chunk, vectors in zip(chunks, results):
                self._check_dim(vectors)
                for key, vec in zip(chunk, vectors):
                    found[key] = vec
                    if self.cache:
                        self.cache.put(key, vec)

        out = [found[k] for k in keys]
        self._check_dim(out)
        return out
