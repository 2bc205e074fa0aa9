"""Embedding, separation and caption-decomposition providers."""

from __future__ import annotations

import os

from .base import (
    REMOTE,
    STUB,
    InvalidResponseError,
    Provider,
    ProviderConfig,
    ProviderError,
    ProviderTimeoutError,
    ProviderUnreachableError,
    RemoteStatusError,
    similarity,
)
from .cache import EmbeddingCache
from .remote import RemoteProvider
from .stub import DEFAULT_LEXICON, StubProvider, synth_mixture

TOKEN_ENV = "T2A_PROVIDER_TOKEN"


def make_provider(config: ProviderConfig, **kwargs) -> Provider:
    if config.kind == STUB:
        return StubProvider(config, **kwargs)
    if config.token is None and os.environ.get(TOKEN_ENV):
        config.token = os.environ[TOKEN_ENV]
    return RemoteProvider(config, **kwargs)


__all__ = [
    "DEFAULT_LEXICON",
    "EmbeddingCache",
    "InvalidResponseError",
    "Provider",
    "ProviderConfig",
    "ProviderError",
    "ProviderTimeoutError",
    "ProviderUnreachableError",
    "REMOTE",
    "RemoteProvider",
    "RemoteStatusError",
    "STUB",
    "StubProvider",
    "TOKEN_ENV",
    "make_provider",
    "similarity",
    "synth_mixture",
]
