"""Event Occurrence Score, Event Sequence Score and whole-record scoring."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ahq import AhqModel, ahq_predict
from .audio_io import AudioClip, EventSpan, activity_span
from .event_text import EventList
from .providers import Provider, similarity

EOS_AGGREGATES = ("min", "mean")


class ScoringError(RuntimeError):
    """A scoring stage failed; ``stage`` and ``event_index`` locate the failure."""

    def __init__(self, stage: str, cause: BaseException, event_index: int | None = None):
        self.stage = stage
        self.event_index = event_index
        self.cause = cause
        where = stage if event_index is None else f"{stage} [event {event_index}]"
        super().__init__(f"{where}: {cause}")


@dataclass(frozen=True)
class ScoreConfig:
    threshold: float = 0.3
    simultaneity_tol_s: float = 0.5
    frame_len_s: float = 0.02
    hop_s: float = 0.01
    eos_aggregate: str = "min"

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"volume threshold must lie in (0, 1), got {self.threshold}")
        if self.eos_aggregate not in EOS_AGGREGATES:
            raise ValueError(f"eos_aggregate must be one of {EOS_AGGREGATES}")


@dataclass(frozen=True)
class SequenceResult:
    ess: float | None
    concordant: int
    discordant: int
    n: int
    spans: tuple[EventSpan, ...]


@dataclass
class ScoreRecord:
    audio_id: str
    eos: float
    eos_per_event: list[float]
    ess: float | None
    ess_counts: tuple[int, int, int]
    ahq: float | None
    events: list[str] = field(default_factory=list)
    spans: list[EventSpan] = field(default_factory=list)

    def to_json(self) -> dict:
        C, D, n = self.ess_counts
        return {
            "eos": self.eos,
            "eos_per_event": list(self.eos_per_event),
            "ess": self.ess,
            "ess_counts": {"C": C, "D": D, "n": n},
            "ahq": self.ahq,
        }

    @classmethod
    def from_json(cls, row: dict) -> ScoreRecord:
        counts = row["ess_counts"]
        return cls(
            audio_id=row["audio_id"],
            eos=float(row["eos"]),
            eos_per_event=[float(v) for v in row["eos_per_event"]],
            ess=None if row["ess"] is None else float(row["ess"]),
            ess_counts=(int(counts["C"]), int(counts["D"]), int(counts["n"])),
            ahq=None if row.get("ahq") is None else float(row["ahq"]),
        )


def count_pairs(events: EventList, spans: Sequence[EventSpan], simultaneity_tol_s: float = 0.5) -> tuple[int, int]:
    """Concordant / discordant counts over all ``n(n-1)`` ordered event pairs."""
    n = len(events)
    if len(spans) != n:
        raise ValueError(f"{len(spans)} spans for {n} events")
    simultaneous = events.relation_matrix()
    C = D = 0
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            lo, hi = min(a, b), max(a, b)
            s_lo, s_hi = spans[lo], spans[hi]
            if not (s_lo.detected and s_hi.detected):
                ok = False
            elif simultaneous[lo, hi]:
                ok = abs(s_lo.onset_s - s_hi.onset_s) <= simultaneity_tol_s
            else:
                ok = s_lo.onset_s < s_hi.onset_s
            if ok:
                C += 1
            else:
                D += 1
    return C, D


def sequence_from_spans(events: EventList, spans: Sequence[EventSpan], simultaneity_tol_s: float = 0.5) -> SequenceResult:
    n = len(events)
    if n < 2:
        return SequenceResult(None, 0, 0, n, tuple(spans))
    C, D = count_pairs(events, spans, simultaneity_tol_s)
    return SequenceResult((C - D) / (n * (n - 1)), C, D, n, tuple(spans))


def separate_events(clip: AudioClip, events: EventList, providers: Provider) -> list[AudioClip]:
    stems = []
    for i, caption in enumerate(events.events):
        try:
            stems.append(providers.separate(clip, caption))
        except Exception as exc:
            raise ScoringError("separate", exc, event_index=i) from exc
    return stems


def event_similarities(events: EventList, stems: Sequence[AudioClip], providers: Provider) -> list[float]:
    sims = []
    for i, (caption, stem) in enumerate(zip(events.events, stems)):
        try:
            (text_vec,) = providers.embed_text([caption])
        except Exception as exc:
            raise ScoringError("embed_text", exc, event_index=i) from exc
        try:
            (audio_vec,) = providers.embed_audio([stem])
        except Exception as exc:
            raise ScoringError("embed_audio", exc, event_index=i) from exc
        sims.append(similarity(text_vec, audio_vec))
    return sims


def aggregate_eos(per_event: Sequence[float], how: str = "min") -> float:
    if not per_event:
        raise ValueError("no per-event similarities to aggregate")
    if how == "min":
        return float(min(per_event))
    if how == "mean":
        return float(np.mean(per_event))
    raise ValueError(f"unknown EOS aggregate {how!r}")


def event_occurrence_score(
    clip: AudioClip,
    events: EventList,
    providers: Provider,
    aggregate: str = "min",
    stems: Sequence[AudioClip] | None = None,
) -> tuple[float, list[float]]:
    """Lowest audio-text similarity between each event caption and its separated stem.

    ``aggregate="mean"`` gives the averaged variant for comparison.
    """
    if stems is None:
        stems = separate_events(clip, events, providers)
    per_event = event_similarities(events, stems, providers)
    return aggregate_eos(per_event, aggregate), per_event


def event_spans(stems: Sequence[AudioClip], config: ScoreConfig) -> list[EventSpan]:
    return [
        activity_span(stem, config.threshold, config.frame_len_s, config.hop_s, event_index=i)
        for i, stem in enumerate(stems)
    ]


def event_sequence_score(
    clip: AudioClip,
    events: EventList,
    providers: Provider,
    threshold: float = 0.3,
    simultaneity_tol_s: float = 0.5,
    stems: Sequence[AudioClip] | None = None,
    config: ScoreConfig | None = None,
) -> SequenceResult:
    """Kendall-style agreement between described order and detected onsets.

    Each stem's normalized RMS envelope is thresholded to find the event's
    onset; ``ess = (C - D) / (n (n - 1))`` over ordered pairs, and ``None``
    for single-event captions.
    """
    if config is None:
        config = ScoreConfig(threshold=threshold, simultaneity_tol_s=simultaneity_tol_s)
    if stems is None:
        stems = separate_events(clip, events, providers)
    spans = event_spans(stems, config)
    return sequence_from_spans(events, spans, config.simultaneity_tol_s)


def score_events(
    clip: AudioClip,
    events: EventList,
    providers: Provider,
    ahq_model: AhqModel | None = None,
    config: ScoreConfig | None = None,
) -> ScoreRecord:
    return score_events_sweep(clip, events, providers, ahq_model, [config or ScoreConfig()])[0]


def score_events_sweep(
    clip: AudioClip,
    events: EventList,
    providers: Provider,
    ahq_model: AhqModel | None,
    configs: Sequence[ScoreConfig],
) -> list[ScoreRecord]:
    """One record per config; separation and embeddings are computed once."""
    stems = separate_events(clip, events, providers)
    per_event = event_similarities(events, stems, providers)
    ahq = None
    if ahq_model is not None:
        try:
            (clip_vec,) = providers.embed_audio([clip])
            ahq = ahq_predict(ahq_model, clip_vec)
        except Exception as exc:
            raise ScoringError("ahq", exc) from exc
    records = []
    for config in configs:
        seq = sequence_from_spans(events, event_spans(stems, config), config.simultaneity_tol_s)
        records.append(
            ScoreRecord(
                audio_id=clip.id,
                eos=aggregate_eos(per_event, config.eos_aggregate),
                eos_per_event=list(per_event),
                ess=seq.ess,
                ess_counts=(seq.concordant, seq.discordant, seq.n),
                ahq=ahq,
                events=list(events.events),
                spans=list(seq.spans),
            )
        )
    return records


def score_pair(
    clip: AudioClip,
    caption: str,
    providers: Provider,
    ahq_model: AhqModel | None = None,
    config: ScoreConfig | None = None,
) -> ScoreRecord:
    """Score one (audio, caption) pair on all three axes.

    The caption is decomposed once; stems are shared between EOS and ESS.
    ``ahq`` is None when no model is given.
    """
    try:
        events = providers.decompose(caption)
    except Exception as exc:
        raise ScoringError("decompose", exc) from exc
    return score_events(clip, events, providers, ahq_model, config)


def axis_scorer(
    providers: Provider,
    axis: str = "eos",
    config: ScoreConfig | None = None,
    ahq_model: AhqModel | None = None,
) -> Callable[[AudioClip, str], float | None]:
    """``scorer(clip, caption)`` returning one axis of :func:`score_pair`."""
    if axis not in ("eos", "ess", "ahq"):
        raise ValueError(f"unknown score axis {axis!r}")
    if axis == "ahq" and ahq_model is None:
        raise ValueError("the ahq axis needs a model")

    def scorer(clip: AudioClip, caption: str) -> float | None:
        return getattr(score_pair(clip, caption, providers, ahq_model, config), axis)

    return scorer
