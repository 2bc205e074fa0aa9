"""Preference data from pools of scored audios, and prompt augmentation."""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .event_text import EventList, compose_caption
from .providers import Provider, similarity
from .scoring import ScoreRecord

log = logging.getLogger(__name__)

MANIFEST_KEYS = ("caption_id", "caption", "audio_id", "audio_path", "source_model")
MEAN_RANK = "mean_rank"
MEAN_SCORE = "mean_score"


class PairPolicy(str, enum.Enum):
    BEST_WORST = "BEST_WORST"
    ALL_ORDERED = "ALL_ORDERED"


class PromptBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class PoolEntry:
    audio_id: str
    source_model: str
    record: ScoreRecord


@dataclass
class Pool:
    caption: str
    entries: list[PoolEntry]
    caption_id: str = ""

    def __post_init__(self):
        ids = [e.audio_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate audio ids in pool for {self.caption!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, audio_id: str) -> PoolEntry:
        for e in self.entries:
            if e.audio_id == audio_id:
                return e
        raise KeyError(audio_id)


@dataclass(frozen=True)
class PreferencePair:
    caption: str
    chosen_id: str
    rejected_id: str
    margin_eos: float
    margin_ess: float | None
    margin_ahq: float | None
    combined_rank_gap: int

    def to_json(self) -> dict:
        return {
            "caption": self.caption,
            "chosen": self.chosen_id,
            "rejected": self.rejected_id,
            "margins": {"eos": self.margin_eos, "ess": self.margin_ess, "ahq": self.margin_ahq},
            "rank_gap": self.combined_rank_gap,
        }


def _axes(pool: Pool) -> np.ndarray:
    """(m, 3) matrix of EOS, ESS, AHQ; missing ESS/AHQ count as 0."""
    rows = []
    for e in pool.entries:
        r = e.record
        rows.append([r.eos, 0.0 if r.ess is None else r.ess, 0.0 if r.ahq is None else r.ahq])
    return np.array(rows, dtype=np.float64)


def combined_scores(pool: Pool, method: str = MEAN_RANK) -> np.ndarray:
    """Lower is better. Mean of per-axis descending ranks, or negated mean of scaled scores."""
    axes = _axes(pool)
    if method == MEAN_RANK:
        ranks = np.column_stack([rankdata(-axes[:, k], method="average") for k in range(3)])
        return ranks.mean(axis=1)
    if method == MEAN_SCORE:
        # put AHQ's 1..4 scale onto EOS/ESS's [-1, 1] before averaging
        scaled = axes.copy()
        has_ahq = np.array([e.record.ahq is not None for e in pool.entries])
        scaled[has_ahq, 2] = (scaled[has_ahq, 2] - 2.5) / 1.5
        return -scaled.mean(axis=1)
    raise ValueError(f"unknown ranking method {method!r}")


def rank_pool(pool: Pool, method: str = MEAN_RANK) -> list[tuple[str, int]]:
    """Overall ranking ``[(audio_id, rank)]`` with rank 1 the best.

    Ties in the combined score go to higher EOS, then higher AHQ, then the
    lexicographically smaller audio id.
    """
    if len(pool) < 2:
        raise ValueError("a pool needs at least two entries")
    combined = combined_scores(pool, method)
    axes = _axes(pool)
    order = sorted(
        range(len(pool)),
        key=lambda k: (combined[k], -axes[k, 0], -axes[k, 2], pool.entries[k].audio_id),
    )
    return [(pool.entries[k].audio_id, rank) for rank, k in enumerate(order, start=1)]


def _margin(a: float | None, b: float | None) -> float | None:
    return None if a is None or b is None else a - b


def make_pair(pool: Pool, chosen: tuple[str, int], rejected: tuple[str, int]) -> PreferencePair:
    c, r = pool.entry(chosen[0]).record, pool.entry(rejected[0]).record
    return PreferencePair(
        caption=pool.caption,
        chosen_id=chosen[0],
        rejected_id=rejected[0],
        margin_eos=c.eos - r.eos,
        margin_ess=_margin(c.ess, r.ess),
        margin_ahq=_margin(c.ahq, r.ahq),
        combined_rank_gap=rejected[1] - chosen[1],
    )


def emit_pairs(
    pool: Pool,
    ranking: Sequence[tuple[str, int]] | None = None,
    policy: PairPolicy | str = PairPolicy.BEST_WORST,
) -> list[PreferencePair]:
    policy = PairPolicy(policy)
    ranking = sorted(ranking if ranking is not None else rank_pool(pool), key=lambda item: item[1])
    if policy is PairPolicy.BEST_WORST:
        return [make_pair(pool, ranking[0], ranking[-1])]
    return [
        make_pair(pool, ranking[a], ranking[b])
        for a in range(len(ranking))
        for b in range(a + 1, len(ranking))
    ]


def build_event_inventory(
    captions: Iterable[str],
    providers: Provider,
    overlap_threshold: float = 0.85,
) -> list[str]:
    """Greedy de-duplication of decomposed events in text-embedding space.

    An event is kept when its similarity to every already-kept event stays
    below ``overlap_threshold``. Empty captions are skipped and counted.
    """
    candidates: list[str] = []
    skipped = 0
    for caption in captions:
        if not caption or not caption.strip():
            skipped += 1
            continue
        candidates.extend(providers.decompose(caption).events)
    if skipped:
        log.warning("skipped %d empty caption(s) while building the event inventory", skipped)
    if not candidates:
        return []

    vectors = providers.embed_text(candidates)
    kept: list[str] = []
    kept_vecs: list[np.ndarray] = []
    for event, vec in zip(candidates, vectors):
        if all(similarity(vec, other) < overlap_threshold for other in kept_vecs):
            kept.append(event)
            kept_vecs.append(vec)
    return kept


def compose_prompts(inventory: Sequence[str], k_events: int, count: int, rng_seed: int, max_tries: int = 100) -> list[str]:
    """Seeded multi-event prompts, each naming ``k_events`` distinct inventory events in order."""
    if not 2 <= k_events <= len(inventory):
        raise ValueError(f"k_events must lie in [2, {len(inventory)}], got {k_events}")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    seen: set[tuple[int, ...]] = set()
    prompts = []
    for n in range(count):
        for _ in range(max_tries):
            pick = tuple(int(i) for i in rng.choice(len(inventory), size=k_events, replace=False))
            if pick not in seen:
                break
        else:
            raise PromptBudgetError(f"no new event combination for prompt {n} within {max_tries} tries")
        seen.add(pick)
        prompts.append(compose_caption(EventList.sequential(inventory[i] for i in pick)))
    return prompts


# -- JSONL -----------------------------------------------------------------------------


def read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return rows


def dumps_jsonl(rows: Iterable[dict]) -> str:
    return "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in rows)


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    Path(path).write_text(dumps_jsonl(rows), encoding="utf-8")


def read_manifest(path: str | Path) -> list[dict]:
    rows = read_jsonl(path)
    for k, row in enumerate(rows, start=1):
        missing = [key for key in MANIFEST_KEYS if key not in row]
        if missing:
            raise ValueError(f"{path}: manifest row {k} lacks {missing}")
    return rows


def score_row(manifest_row: dict, record: ScoreRecord) -> dict:
    row = {key: manifest_row[key] for key in MANIFEST_KEYS}
    row.update(record.to_json())
    return row


def pools_from_scores(rows: Iterable[dict]) -> list[Pool]:
    """Group score rows by caption_id, keeping first-seen order."""
    grouped: dict[str, Pool] = {}
    for row in rows:
        pool = grouped.setdefault(row["caption_id"], Pool(row["caption"], [], caption_id=row["caption_id"]))
        pool.entries.append(PoolEntry(row["audio_id"], row.get("source_model", ""), ScoreRecord.from_json(row)))
        pool.__post_init__()
    return list(grouped.values())
