"""Rule-based event decomposition of captions and caption perturbations.

Captions are split on a small connective lexicon into event clauses. Each
event belongs to a *group* of simultaneous events; groups are ordered in
time, so the relation between two events is SIMULTANEOUS when they share a
group and BEFORE otherwise.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class Relation(str, enum.Enum):
    BEFORE = "BEFORE"
    SIMULTANEOUS = "SIMULTANEOUS"


@dataclass(frozen=True, order=True)
class TemporalRelation:
    """``rel`` between events ``i < j``; BEFORE means ``i`` starts first."""

    i: int
    j: int
    rel: Relation


class CaptionError(ValueError):
    pass


@dataclass(frozen=True)
class EventList:
    events: tuple[str, ...]
    relations: tuple[TemporalRelation, ...]

    def __post_init__(self):
        events = tuple(self.events)
        if not events:
            raise CaptionError("an EventList needs at least one event")
        if any(not e.strip() for e in events):
            raise CaptionError("event captions must be non-empty")
        n = len(events)
        rels = tuple(sorted(self.relations))
        seen = set()
        for r in rels:
            if not 0 <= r.i < r.j < n:
                raise CaptionError(f"relation indices ({r.i}, {r.j}) invalid for {n} events")
            if (r.i, r.j) in seen:
                raise CaptionError(f"duplicate relation for pair ({r.i}, {r.j})")
            seen.add((r.i, r.j))
        if len(seen) != n * (n - 1) // 2:
            raise CaptionError(f"relations must cover all {n * (n - 1) // 2} event pairs, got {len(seen)}")
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "relations", tuple(TemporalRelation(r.i, r.j, Relation(r.rel)) for r in rels))

    @classmethod
    def from_groups(cls, groups: Sequence[Sequence[str]]) -> EventList:
        """Build from time-ordered groups of simultaneous events."""
        events: list[str] = []
        group_of: list[int] = []
        for g, group in enumerate(groups):
            for event in group:
                events.append(event)
                group_of.append(g)
        relations = [
            TemporalRelation(i, j, Relation.SIMULTANEOUS if group_of[i] == group_of[j] else Relation.BEFORE)
            for i in range(len(events))
            for j in range(i + 1, len(events))
        ]
        return cls(tuple(events), tuple(relations))

    @classmethod
    def sequential(cls, events: Iterable[str]) -> EventList:
        return cls.from_groups([[e] for e in events])

    def __len__(self) -> int:
        return len(self.events)

    def relation(self, i: int, j: int) -> Relation:
        """Relation of the unordered pair ``{i, j}``, stated for ``min -> max``."""
        a, b = min(i, j), max(i, j)
        for r in self.relations:
            if r.i == a and r.j == b:
                return r.rel
        raise KeyError((i, j))

    def relation_matrix(self) -> np.ndarray:
        """``M[i, j]`` is True when the pair is SIMULTANEOUS."""
        n = len(self.events)
        sim = np.zeros((n, n), dtype=bool)
        for r in self.relations:
            if r.rel is Relation.SIMULTANEOUS:
                sim[r.i, r.j] = sim[r.j, r.i] = True
        return sim


# Longest alternatives first so "and then" wins over "then".
_CONNECTIVE = re.compile(
    r"\s*,?\s*\b(followed by|and then|then|before|after|while|as)\b\s*,?\s*|\s*,\s*(and)\b\s*,?\s*",
    re.IGNORECASE,
)
_SENTENCE = re.compile(r"[.!?;]+(?:\s+|$)")
_EDGE_WORDS = {"and", "then"}
_SIMULTANEOUS = {"while", "as"}
_STRIP = " \t\n,.;:!?"


def _clean_clause(text: str) -> str:
    words = text.strip(_STRIP).split()
    while words and words[0].lower() in _EDGE_WORDS:
        words.pop(0)
    while words and words[-1].lower() in _EDGE_WORDS:
        words.pop()
    return " ".join(words).strip(_STRIP)


def _split_sentence(sentence: str) -> list[tuple[str | None, str]]:
    """Return ``(connective, clause)`` pairs; the first connective is None."""
    parts = _CONNECTIVE.split(sentence)
    # re.split with two groups yields [clause, g1, g2, clause, g1, g2, ...]
    out: list[tuple[str | None, str]] = [(None, parts[0])]
    for k in range(1, len(parts), 3):
        conn = (parts[k] or parts[k + 1] or "").lower()
        out.append((", and" if conn == "and" else conn, parts[k + 2]))
    return out


def decompose_caption(caption: str) -> EventList:
    """Split a caption into events in described order with pairwise relations.

    >>> decompose_caption("Thunder rumbles after a woman speaks").events
    ('a woman speaks', 'Thunder rumbles')
    """
    if not caption or not caption.strip():
        raise CaptionError("caption is empty")

    groups: list[list[str]] = []
    for sentence in _SENTENCE.split(caption):
        pending: str | None = None  # connective carried across empty clauses
        last_group: int | None = None
        for conn, raw in _split_sentence(sentence):
            if conn is not None:
                pending = conn
            clause = _clean_clause(raw)
            if not clause:
                continue
            if last_group is None or pending is None:
                groups.append([clause])
                last_group = len(groups) - 1
            elif pending in _SIMULTANEOUS:
                groups[last_group].append(clause)
            elif pending == "after":
                groups.insert(last_group, [clause])
            else:
                groups.append([clause])
                last_group = len(groups) - 1
            pending = None
    if not groups:
        raise CaptionError(f"caption {caption!r} contains no event clauses")
    return EventList.from_groups(groups)


def compose_caption(events: EventList) -> str:
    parts = [events.events[0]]
    for k in range(1, len(events)):
        if events.relation(k - 1, k) is Relation.SIMULTANEOUS:
            parts.append(f" while {events.events[k]}")
        else:
            parts.append(f", then {events.events[k]}")
    return "".join(parts)


def append_event(events: EventList, event: str) -> EventList:
    """Add ``event`` as a new final event that every existing event precedes."""
    n = len(events)
    extra = [TemporalRelation(i, n, Relation.BEFORE) for i in range(n)]
    return EventList(events.events + (event,), events.relations + tuple(extra))


def make_distractor_caption(events: EventList, candidate_events: Sequence[str], rng_seed: int) -> str:
    """Append one uniformly drawn, not-yet-present candidate as a final event."""
    if not candidate_events:
        raise CaptionError("candidate_events is empty")
    present = {e.strip().casefold() for e in events.events}
    pool = [c for c in candidate_events if c.strip() and c.strip().casefold() not in present]
    if not pool:
        raise CaptionError("every distractor candidate already occurs in the caption")
    rng = np.random.default_rng(rng_seed)
    pick = pool[int(rng.integers(len(pool)))]
    return compose_caption(append_event(events, pick.strip()))


def reverse_events(events: EventList) -> EventList:
    """Reverse the described order; each pair keeps its relation type."""
    n = len(events)
    if n < 2:
        raise CaptionError("cannot reverse a single-event caption")
    if all(r.rel is Relation.SIMULTANEOUS for r in events.relations):
        raise CaptionError("caption has no BEFORE relation to reverse")
    relations = [TemporalRelation(n - 1 - r.j, n - 1 - r.i, r.rel) for r in events.relations]
    return EventList(events.events[::-1], tuple(relations))


def reverse_caption(events: EventList) -> str:
    return compose_caption(reverse_events(events))
