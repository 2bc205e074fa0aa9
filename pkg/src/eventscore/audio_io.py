"""WAV decoding, RMS volume envelopes and threshold-based activity detection."""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class AudioFormatError(ValueError):
    """Base class for WAV files we refuse to decode."""


class UnreadableAudioError(AudioFormatError):
    pass


class UnsupportedCodecError(AudioFormatError):
    def __init__(self, format_tag: int):
        self.format_tag = format_tag
        super().__init__(f"unsupported WAV codec (format tag 0x{format_tag:04x})")


class UnsupportedBitDepthError(AudioFormatError):
    def __init__(self, bits: int, format_tag: int):
        self.bits = bits
        self.format_tag = format_tag
        super().__init__(f"unsupported bit depth {bits} for format tag 0x{format_tag:04x}")


class UnsupportedChannelCountError(AudioFormatError):
    def __init__(self, channels: int):
        self.channels = channels
        super().__init__(f"unsupported channel count {channels} (mono or stereo only)")


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono float samples in [-1, 1] at a native sample rate."""

    id: str
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", np.clip(samples, -1.0, 1.0))

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class Envelope:
    values: np.ndarray
    frame_len_s: float
    hop_s: float
    duration_s: float
    normalized: bool = False

    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.hop_s


@dataclass(frozen=True)
class EventSpan:
    """Detected activity of one event in its separated stem.

    ``detected`` is False exactly when no frame crossed the threshold, in
    which case onset and offset are both 0.
    """

    onset_s: float = 0.0
    offset_s: float = 0.0
    detected: bool = False
    event_index: int = 0

    def __post_init__(self):
        if self.onset_s > self.offset_s:
            raise ValueError("onset_s must not exceed offset_s")
        if not self.detected and (self.onset_s != 0.0 or self.offset_s != 0.0):
            raise ValueError("undetected span must have onset = offset = 0")

    def contains(self, other: EventSpan) -> bool:
        if not other.detected:
            return True
        return self.detected and self.onset_s <= other.onset_s and other.offset_s <= self.offset_s


def _chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        yield chunk_id, body
        pos += 8 + size + (size & 1)


def load_wav(path: str | Path, clip_id: str | None = None) -> AudioClip:
    """Decode a PCM16 or float32 RIFF/WAVE file into a mono clip.

    Stereo input is downmixed by the per-sample channel mean.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise UnreadableAudioError(f"cannot read {path}: {exc}") from exc
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnreadableAudioError(f"{path} is not a RIFF/WAVE file")

    fmt = None
    pcm = None
    for chunk_id, body in _chunks(data):
        if chunk_id == b"fmt " and len(body) >= 16:
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE and len(body) >= 26:
                sub_tag = struct.unpack_from("<H", body, 24)[0]
                fmt = (sub_tag,) + fmt[1:]
        elif chunk_id == b"data":
            pcm = body
    if fmt is None or pcm is None:
        raise UnreadableAudioError(f"{path} lacks a fmt or data chunk")

    format_tag, channels, sample_rate, _, block_align, bits = fmt
    if format_tag not in (WAVE_FORMAT_PCM, WAVE_FORMAT_IEEE_FLOAT):
        raise UnsupportedCodecError(format_tag)
    if format_tag == WAVE_FORMAT_PCM and bits != 16:
        raise UnsupportedBitDepthError(bits, format_tag)
    if format_tag == WAVE_FORMAT_IEEE_FLOAT and bits != 32:
        raise UnsupportedBitDepthError(bits, format_tag)
    if channels not in (1, 2):
        raise UnsupportedChannelCountError(channels)
    if sample_rate <= 0:
        raise UnreadableAudioError(f"{path} declares sample rate {sample_rate}")

    usable = len(pcm) - len(pcm) % block_align
    dtype = "<i2" if format_tag == WAVE_FORMAT_PCM else "<f4"
    frames = np.frombuffer(pcm[:usable], dtype=dtype).reshape(-1, channels)
    if format_tag == WAVE_FORMAT_PCM:
        frames = frames.astype(np.float64) / 32768.0
    else:
        frames = frames.astype(np.float64)
    samples = frames.mean(axis=1) if channels == 2 else frames[:, 0]
    return AudioClip(id=clip_id or path.stem, samples=samples, sample_rate=int(sample_rate))


def write_wav(path: str | Path, clip: AudioClip, sample_format: str = "float32") -> None:
    """Write a mono WAV file; ``sample_format`` is ``"float32"`` or ``"pcm16"``."""
    if sample_format == "float32":
        payload = clip.samples.astype("<f4").tobytes()
        format_tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    elif sample_format == "pcm16":
        ints = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
        payload = ints.tobytes()
        format_tag, bits = WAVE_FORMAT_PCM, 16
    else:
        raise ValueError(f"unknown sample_format {sample_format!r}")
    block_align = bits // 8
    fmt = struct.pack(
        "<HHIIHH", format_tag, 1, clip.sample_rate, clip.sample_rate * block_align, block_align, bits
    )
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


def compute_envelope(clip: AudioClip, frame_len_s: float = 0.02, hop_s: float = 0.01) -> Envelope:
    """Frame-wise RMS of the waveform.

    Frame ``k`` covers samples ``[k*hop, k*hop + frame)``; trailing frames that
    run past the end are averaged over the samples they actually hold.
    """
    if not frame_len_s >= hop_s > 0:
        raise ValueError("need frame_len_s >= hop_s > 0")
    n = len(clip.samples)
    if n == 0:
        raise ValueError("cannot compute the envelope of an empty clip")
    hop = max(1, int(round(hop_s * clip.sample_rate)))
    frame = max(hop, int(round(frame_len_s * clip.sample_rate)))
    n_frames = -(-n // hop)

    padded = np.zeros((n_frames - 1) * hop + frame)
    padded[:n] = clip.samples
    windows = sliding_window_view(padded, frame)[::hop]
    starts = np.arange(n_frames) * hop
    counts = np.minimum(frame, n - starts)
    values = np.sqrt(np.einsum("ij,ij->i", windows, windows) / counts)
    return Envelope(
        values=values,
        frame_len_s=frame / clip.sample_rate,
        hop_s=hop / clip.sample_rate,
        duration_s=clip.duration_s,
    )


def normalize_envelope(env: Envelope) -> Envelope:
    if env.normalized:
        raise ValueError("envelope is already normalized")
    peak = float(env.values.max()) if len(env.values) else 0.0
    values = env.values / peak if peak > 0 else env.values.copy()
    return replace(env, values=values, normalized=True)


def detect_active_span(env: Envelope, threshold: float = 0.3, event_index: int = 0) -> EventSpan:
    """Hull of all frames whose normalized volume strictly exceeds ``threshold``.

    Onset and offset are reported at the centres of the first and last active
    frames (offset clipped to the clip duration).
    """
    if not env.normalized:
        raise ValueError("detect_active_span needs a normalized envelope")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    active = np.flatnonzero(env.values > threshold)
    if active.size == 0:
        return EventSpan(event_index=event_index)
    half = env.frame_len_s / 2
    onset = min(active[0] * env.hop_s + half, env.duration_s)
    offset = min(active[-1] * env.hop_s + half, env.duration_s)
    return EventSpan(onset_s=float(onset), offset_s=float(offset), detected=True, event_index=event_index)


def activity_span(
    clip: AudioClip,
    threshold: float = 0.3,
    frame_len_s: float = 0.02,
    hop_s: float = 0.01,
    event_index: int = 0,
) -> EventSpan:
    """envelope -> normalize -> detect, in one call."""
    env = normalize_envelope(compute_envelope(clip, frame_len_s, hop_s))
    return detect_active_span(env, threshold, event_index=event_index)
