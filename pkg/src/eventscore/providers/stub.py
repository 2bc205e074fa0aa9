"""Deterministic in-process provider for tests and offline runs.

Text is embedded as the normalized sum of per-token Gaussian vectors seeded
from the token's SHA-256, so equal token bags give bitwise-equal vectors in
any process. A lexicon maps event phrases to frequency bands: separation is
a zero-phase band-pass around the phrase's band, and a clip's audio
embedding is the text embedding of the phrase whose band holds the clip's
dominant spectral peak. Text and audio therefore share one space exactly.

Filter skirts leak a little of every out-of-band tone into each stem. A stem
holding less than ``LEAK_ENERGY_RATIO`` of the input energy is treated as
leakage and returned silent, the way a real separator answers a query for an
absent sound.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import signal

from ..audio_io import AudioClip
from ..event_text import EventList, decompose_caption
from .base import STUB, Provider, ProviderConfig

DEFAULT_LEXICON: dict[str, float] = {
    "man speaking": 200.0,
    "dog barking": 440.0,
    "car horn honking": 1000.0,
    "bell ringing": 2200.0,
    "bird chirping": 3500.0,
    "glass shattering": 5000.0,
}

SILENCE_TOKEN = "<silence>"
UNKNOWN_TOKEN = "<unknown>"
BAND_RATIO = 1.25
LEAK_ENERGY_RATIO = 0.01
_ARTICLES = {"a", "an", "the"}
_TOKEN = re.compile(r"[a-z0-9]+")


def tokens(text: str) -> tuple[str, ...]:
    toks = tuple(t for t in _TOKEN.findall(text.lower()) if t not in _ARTICLES)
    return toks or (text.strip().lower(),)


def load_lexicon(path: str | Path) -> dict[str, float]:
    """Read a ``{"phrase": center_hz, ...}`` JSON file."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return {str(k): float(v) for k, v in raw.items()}


def _token_vector(token: str, dim: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng(seed).standard_normal(dim)


def hash_embedding(text: str, dim: int) -> np.ndarray:
    vec = np.zeros(dim)
    for tok in tokens(text):
        vec += _token_vector(tok, dim)
    return (vec / np.linalg.norm(vec)).astype(np.float32)


def dominant_frequency(clip: AudioClip) -> float | None:
    """Frequency (Hz) of the largest rfft magnitude, or None for a silent clip."""
    x = clip.samples
    if not np.any(x):
        return None
    spectrum = np.abs(np.fft.rfft(x * np.hanning(len(x)) if len(x) > 1 else x))
    spectrum[0] = 0.0
    if not np.any(spectrum):
        return None
    k = int(np.argmax(spectrum))
    return k * clip.sample_rate / len(x)


class StubProvider(Provider):
    def __init__(self, config: ProviderConfig | None = None, lexicon: Mapping[str, float] | None = None):
        config = config or ProviderConfig(kind=STUB)
        super().__init__(config)
        if lexicon is None:
            lexicon = load_lexicon(config.lexicon_path) if config.lexicon_path else DEFAULT_LEXICON
        self.lexicon = dict(lexicon)
        self._by_tokens = {tokens(phrase): phrase for phrase in self.lexicon}

    def lookup(self, caption: str) -> str | None:
        """Lexicon phrase matching ``caption`` up to case, punctuation and articles."""
        return self._by_tokens.get(tokens(caption))

    def band(self, phrase: str, sample_rate: int) -> tuple[float, float] | None:
        center = self.lexicon[phrase]
        low, high = center / BAND_RATIO, center * BAND_RATIO
        nyquist = sample_rate / 2
        high = min(high, 0.98 * nyquist)
        if low >= high:
            return None
        return low, high

    def phrase_for_frequency(self, freq: float) -> str | None:
        best, best_dist = None, np.inf
        for phrase, center in self.lexicon.items():
            if center / BAND_RATIO <= freq <= center * BAND_RATIO:
                dist = abs(np.log(freq / center))
                if dist < best_dist:
                    best, best_dist = phrase, dist
        return best

    def audio_token(self, clip: AudioClip) -> str:
        freq = dominant_frequency(clip)
        if freq is None:
            return SILENCE_TOKEN
        return self.phrase_for_frequency(freq) or UNKNOWN_TOKEN

    def _embed_text_batch(self, texts):
        return [hash_embedding(t, self.config.dim) for t in texts]

    def _embed_audio_batch(self, clips):
        return [hash_embedding(self.audio_token(c), self.config.dim) for c in clips]

    def _separate(self, clip: AudioClip, caption: str) -> np.ndarray:
        phrase = self.lookup(caption)
        band = self.band(phrase, clip.sample_rate) if phrase else None
        if band is None:
            return np.zeros_like(clip.samples)
        sos = signal.butter(4, band, btype="bandpass", fs=clip.sample_rate, output="sos")
        padlen = min(len(clip) - 1, 3 * (2 * len(sos) + 1))
        if padlen < 1:
            return np.zeros_like(clip.samples)
        stem = signal.sosfiltfilt(sos, clip.samples, padlen=padlen)
        if np.sum(stem**2) < LEAK_ENERGY_RATIO * np.sum(clip.samples**2):
            return np.zeros_like(clip.samples)
        return stem

    def _decompose(self, caption: str) -> EventList:
        return decompose_caption(caption)


def synth_mixture(
    events: list[tuple[float, float, float]],
    duration_s: float,
    sample_rate: int = 16000,
    amplitude: float = 0.3,
    clip_id: str = "mixture",
) -> AudioClip:
    """Sum of tone bursts; each event is ``(freq_hz, onset_s, offset_s)``."""
    n = int(round(duration_s * sample_rate))
    x = np.zeros(n)
    t = np.arange(n) / sample_rate
    for freq, onset, offset in events:
        lo, hi = int(round(onset * sample_rate)), int(round(offset * sample_rate))
        x[lo:hi] += amplitude * np.sin(2 * np.pi * freq * t[lo:hi])
    return AudioClip(id=clip_id, samples=x, sample_rate=sample_rate)
