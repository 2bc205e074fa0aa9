"""HTTP/JSON client for a model server exposing ``/v1/{embed_text,embed_audio,separate,decompose}``."""

from __future__ import annotations

import base64
import logging
import time
from typing import Any, Callable

import httpx
import numpy as np

from ..audio_io import AudioClip
from ..event_text import CaptionError, EventList, Relation, TemporalRelation
from .base import (
    REMOTE,
    InvalidResponseError,
    Provider,
    ProviderConfig,
    ProviderTimeoutError,
    ProviderUnreachableError,
    RemoteStatusError,
)

log = logging.getLogger(__name__)

RETRY_BACKOFF_S = (0.5, 1.0)


def encode_pcm(samples: np.ndarray) -> str:
    return base64.b64encode(np.asarray(samples, dtype="<f4").tobytes()).decode("ascii")


def decode_pcm(text: str) -> np.ndarray:
    try:
        raw = base64.b64decode(text, validate=True)
    except (ValueError, TypeError) as exc:
        raise InvalidResponseError(f"bad pcm_b64 payload: {exc}") from exc
    if len(raw) % 4:
        raise InvalidResponseError("pcm_b64 payload is not a whole number of float32 samples")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def parse_event_list(payload: Any) -> EventList:
    """Validate a ``/v1/decompose`` response body into an EventList."""
    try:
        events = payload["events"]
        relations = payload["relations"]
        if not isinstance(events, list) or not all(isinstance(e, str) for e in events):
            raise InvalidResponseError("'events' must be a list of strings")
        rels = tuple(TemporalRelation(int(r["i"]), int(r["j"]), Relation(r["rel"])) for r in relations)
        return EventList(tuple(events), rels)
    except InvalidResponseError:
        raise
    except (KeyError, TypeError, ValueError, CaptionError) as exc:
        raise InvalidResponseError(f"invalid decompose response: {exc}") from exc


class RemoteProvider(Provider):
    def __init__(
        self,
        config: ProviderConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if config.kind != REMOTE:
            raise ValueError("RemoteProvider needs a remote ProviderConfig")
        super().__init__(config)
        headers = {"Authorization": f"Bearer {config.token}"} if config.token else {}
        self._client = httpx.Client(
            base_url=config.endpoint_url.rstrip("/"),
            timeout=config.timeout_s,
            headers=headers,
            transport=transport,
        )
        self._sleep = sleep

    def cache_namespace(self) -> str:
        return f"remote:{self.config.endpoint_url}"

    def close(self) -> None:
        self._client.close()

    def _post_once(self, path: str, body: dict) -> Any:
        try:
            response = self._client.post(path, json=body)
        except httpx.TimeoutException as exc:
            raise ProviderTimeoutError(f"{path} timed out after {self.config.timeout_s}s") from exc
        except httpx.TransportError as exc:
            raise ProviderUnreachableError(f"{path}: {exc}") from exc
        if response.status_code != 200:
            try:
                message = response.json().get("error", response.text)
            except ValueError:
                message = response.text
            raise RemoteStatusError(response.status_code, str(message))
        try:
            return response.json()
        except ValueError as exc:
            raise InvalidResponseError(f"{path} returned non-JSON body") from exc

    def post(self, path: str, body: dict) -> Any:
        """POST with up to two retries on retryable failures."""
        for attempt in range(len(RETRY_BACKOFF_S) + 1):
            try:
                return self._post_once(path, body)
            except (ProviderTimeoutError, ProviderUnreachableError, RemoteStatusError) as exc:
                if not exc.retryable or attempt == len(RETRY_BACKOFF_S):
                    raise
                delay = RETRY_BACKOFF_S[attempt]
                log.warning("%s failed (%s); retrying in %.1fs", path, exc, delay)
                self._sleep(delay)

    def _embeddings(self, payload: Any, expected: int) -> list[np.ndarray]:
        try:
            dim = int(payload["dim"])
            rows = payload["embeddings"]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidResponseError(f"malformed embedding response: {exc}") from exc
        if not isinstance(rows, list) or len(rows) != expected:
            got = len(rows) if isinstance(rows, list) else "no"
            raise InvalidResponseError(f"expected {expected} embeddings, got {got}")
        if self.dim is not None and dim != self.dim:
            raise InvalidResponseError(f"server dimension {dim} differs from session dimension {self.dim}")
        out = []
        for row in rows:
            vec = np.asarray(row, dtype=np.float64)
            if vec.shape != (dim,):
                raise InvalidResponseError(f"embedding has {vec.size} values, declared dim is {dim}")
            out.append(vec)
        return out

    def _embed_text_batch(self, texts):
        return self._embeddings(self.post("/v1/embed_text", {"texts": list(texts)}), len(texts))

    def _embed_audio_batch(self, clips):
        out: list[np.ndarray | None] = [None] * len(clips)
        by_rate: dict[int, list[int]] = {}
        for k, clip in enumerate(clips):
            by_rate.setdefault(clip.sample_rate, []).append(k)
        for rate, idx in by_rate.items():
            body = {
                "sample_rate": rate,
                "clips": [{"id": clips[k].id, "pcm_b64": encode_pcm(clips[k].samples)} for k in idx],
            }
            for k, vec in zip(idx, self._embeddings(self.post("/v1/embed_audio", body), len(idx))):
                out[k] = vec
        return out

    def _separate(self, clip: AudioClip, caption: str) -> np.ndarray:
        body = {"sample_rate": clip.sample_rate, "caption": caption, "pcm_b64": encode_pcm(clip.samples)}
        payload = self.post("/v1/separate", body)
        try:
            return decode_pcm(payload["pcm_b64"])
        except (KeyError, TypeError) as exc:
            raise InvalidResponseError("separate response lacks pcm_b64") from exc

    def _decompose(self, caption: str) -> EventList:
        return parse_event_list(self.post("/v1/decompose", {"caption": caption}))
