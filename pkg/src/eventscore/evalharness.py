"""Evaluation protocols: caption-discrimination accuracy, Segment F1, correlation, win rate."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .audio_io import AudioClip
from .event_text import decompose_caption

log = logging.getLogger(__name__)

PEARSON = "PEARSON"
SPEARMAN = "SPEARMAN"

Scorer = Callable[[AudioClip, str], "float | None"]


@dataclass
class EvalReport:
    metric_name: str
    value: float
    count: int
    details: list[dict] = field(default_factory=list)
    excluded: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.count <= 0:
            raise ValueError(f"{self.metric_name}: report over zero items")
        if not math.isfinite(self.value):
            raise ValueError(f"{self.metric_name}: non-finite value")

    def to_json(self, details_path: str | None = None) -> dict:
        out = {"metric": self.metric_name, "value": self.value, "count": self.count, "details_path": details_path}
        if self.excluded:
            out["excluded"] = self.excluded
        out.update(self.extra)
        return out

    def table(self) -> str:
        lines = [f"{'metric':<28}{'value':>12}{'count':>8}", f"{self.metric_name:<28}{self.value:>12.4f}{self.count:>8}"]
        for key, val in self.extra.items():
            if isinstance(val, float):
                lines.append(f"  {key:<26}{val:>12.4f}")
            elif isinstance(val, (int, str)):
                lines.append(f"  {key:<26}{val!s:>12}")
        if self.excluded:
            lines.append(f"  {'excluded':<26}{self.excluded:>12}")
        return "\n".join(lines)


def _pair_credit(gt: float, other: float) -> float:
    if gt > other:
        return 1.0
    if gt == other:
        return 0.5
    return 0.0


def discrimination_accuracy(
    metric_name: str,
    items: Sequence[tuple[AudioClip, str, str]],
    scorer: Scorer,
) -> EvalReport:
    """Percent of items whose ground-truth caption outscores the interference caption.

    Ties earn half credit. Items whose scorer raises or returns None are
    excluded and counted.
    """
    if not items:
        raise ValueError("no evaluation items")
    details, credits, excluded = [], [], 0
    for k, (clip, gt, other) in enumerate(items):
        try:
            s_gt, s_other = scorer(clip, gt), scorer(clip, other)
        except Exception as exc:
            log.warning("item %d (%s) failed: %s", k, clip.id, exc)
            details.append({"index": k, "audio_id": clip.id, "error": str(exc)})
            excluded += 1
            continue
        if s_gt is None or s_other is None:
            details.append({"index": k, "audio_id": clip.id, "error": "score not applicable"})
            excluded += 1
            continue
        credit = _pair_credit(s_gt, s_other)
        credits.append(credit)
        details.append({"index": k, "audio_id": clip.id, "gt_score": s_gt, "other_score": s_other, "credit": credit})
    if not credits:
        raise ValueError(f"{metric_name}: every item failed")
    return EvalReport(metric_name, 100.0 * float(np.mean(credits)), len(credits), details, excluded)


def missing_event_accuracy(items: Sequence[tuple[AudioClip, str, str]], scorer: Scorer) -> EvalReport:
    """Items are ``(clip, ground_truth_caption, distractor_caption)``; pass an EOS scorer."""
    return discrimination_accuracy("missing_event_accuracy", items, scorer)


def sequence_accuracy(
    items: Sequence[tuple[AudioClip, str, str]],
    scorer: Scorer,
    decompose: Callable = decompose_caption,
) -> EvalReport:
    """Items are ``(clip, ground_truth_caption, reversed_caption)``; pass an ESS scorer.

    Items whose ground truth has fewer than two events are rejected up front.
    """
    bad = [k for k, (_, gt, _) in enumerate(items) if len(decompose(gt)) < 2]
    if bad:
        raise ValueError(f"sequence items need at least two events; offending item indices: {bad}")
    return discrimination_accuracy("sequence_accuracy", items, scorer)


@dataclass
class SegmentTimeline:
    event_label: str
    spans: list[tuple[float, float]]
    horizon_s: float
    item_id: str = ""

    def __post_init__(self):
        if self.horizon_s <= 0:
            raise ValueError("horizon_s must be positive")
        for on, off in self.spans:
            if not 0.0 <= on <= off <= self.horizon_s:
                raise ValueError(f"span ({on}, {off}) outside [0, {self.horizon_s}] or reversed")


def segment_activity(spans: Sequence[tuple[float, float]], n_segments: int, segment_len_s: float) -> np.ndarray:
    """Boolean per segment: does any span overlap it by a positive amount."""
    if not spans:
        return np.zeros(n_segments, dtype=bool)
    starts = np.arange(n_segments) * segment_len_s
    ends = starts + segment_len_s
    s = np.asarray(spans, dtype=np.float64)
    overlap = np.minimum(s[:, 1][None, :], ends[:, None]) - np.maximum(s[:, 0][None, :], starts[:, None])
    return (overlap > 0).any(axis=1)


def _by_item(timelines: Iterable[SegmentTimeline]) -> dict[str, dict[str, SegmentTimeline]]:
    out: dict[str, dict[str, SegmentTimeline]] = {}
    for tl in timelines:
        labels = out.setdefault(tl.item_id, {})
        if tl.event_label in labels:
            prev = labels[tl.event_label]
            if prev.horizon_s != tl.horizon_s:
                raise ValueError(f"item {tl.item_id!r}: horizon mismatch for label {tl.event_label!r}")
            labels[tl.event_label] = SegmentTimeline(tl.event_label, prev.spans + tl.spans, tl.horizon_s, tl.item_id)
        else:
            labels[tl.event_label] = tl
    return out


def segment_f1(
    reference: Sequence[SegmentTimeline],
    prediction: Sequence[SegmentTimeline],
    segment_len_s: float = 1.0,
) -> EvalReport:
    """Micro-averaged segment-based F1 over items and event labels.

    Timelines are grouped by ``item_id``; reference and prediction for one
    item must share a horizon. Both sides empty everywhere gives 1.0.
    """
    if segment_len_s <= 0:
        raise ValueError("segment_len_s must be positive")
    ref, pred = _by_item(reference), _by_item(prediction)
    tp = fp = fn = 0
    details = []
    for item_id in sorted(set(ref) | set(pred)):
        r_labels, p_labels = ref.get(item_id, {}), pred.get(item_id, {})
        horizons = {tl.horizon_s for tl in list(r_labels.values()) + list(p_labels.values())}
        if len(horizons) != 1:
            raise ValueError(f"item {item_id!r}: horizon mismatch {sorted(horizons)}")
        n_seg = math.ceil(horizons.pop() / segment_len_s)
        i_tp = i_fp = i_fn = 0
        for label in sorted(set(r_labels) | set(p_labels)):
            r = segment_activity(r_labels[label].spans if label in r_labels else [], n_seg, segment_len_s)
            p = segment_activity(p_labels[label].spans if label in p_labels else [], n_seg, segment_len_s)
            i_tp += int(np.sum(r & p))
            i_fp += int(np.sum(~r & p))
            i_fn += int(np.sum(r & ~p))
        details.append({"item_id": item_id, "TP": i_tp, "FP": i_fp, "FN": i_fn})
        tp, fp, fn = tp + i_tp, fp + i_fp, fn + i_fn
    if not details:
        raise ValueError("no timelines given")
    denom = 2 * tp + fp + fn
    f1 = 1.0 if denom == 0 else 2 * tp / denom
    return EvalReport("segment_f1", f1, len(details), details, extra={"TP": tp, "FP": fp, "FN": fn})


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc, yc = x - x.mean(), y - y.mean()
    return float(np.clip(np.dot(xc, yc) / math.sqrt(np.dot(xc, xc) * np.dot(yc, yc)), -1.0, 1.0))


def correlation(x: Sequence[float], y: Sequence[float], kind: str = SPEARMAN) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("correlation needs two equal-length sequences")
    if len(x) < 3:
        raise ValueError("correlation needs at least 3 points")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValueError("correlation is undefined for a constant input")
    kind = kind.upper()
    if kind == PEARSON:
        return _pearson(x, y)
    if kind == SPEARMAN:
        return _pearson(rankdata(x, method="average"), rankdata(y, method="average"))
    raise ValueError(f"unknown correlation kind {kind!r}")


def correlation_report(x: Sequence[float], y: Sequence[float], metric_name: str = "correlation") -> EvalReport:
    """Spearman headline with Pearson alongside."""
    spearman = correlation(x, y, SPEARMAN)
    pearson = correlation(x, y, PEARSON)
    return EvalReport(metric_name, spearman, len(x), extra={"kind": SPEARMAN, "pearson": pearson})


def win_rate(scores_a: Sequence[float], scores_b: Sequence[float], metric_name: str = "win_rate") -> EvalReport:
    """Percent of matched prompts where ``a`` beats ``b``; ties earn half credit."""
    if len(scores_a) != len(scores_b):
        raise ValueError(f"length mismatch: {len(scores_a)} vs {len(scores_b)}")
    if not scores_a:
        raise ValueError("win_rate needs at least one pair")
    credits = [_pair_credit(a, b) for a, b in zip(scores_a, scores_b)]
    return EvalReport(
        metric_name,
        100.0 * float(np.mean(credits)),
        len(credits),
        extra={"mean_a": float(np.mean(scores_a)), "mean_b": float(np.mean(scores_b))},
    )


# -- file formats ------------------------------------------------------------------------


def read_timelines(path: str | Path) -> list[SegmentTimeline]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            events = row.get("events", [])
            if not events:
                # keep the item visible so its horizon still counts
                out.append(SegmentTimeline("", [], float(row["horizon_s"]), str(row["item_id"])))
            for ev in events:
                spans = [(float(a), float(b)) for a, b in ev["spans"]]
                out.append(SegmentTimeline(ev["label"], spans, float(row["horizon_s"]), str(row["item_id"])))
    return out


def write_report(report: EvalReport, out_dir: str | Path, stem: str | None = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or report.metric_name
    details_path = out_dir / f"{stem}_details.jsonl"
    details_path.write_text("".join(json.dumps(d) + "\n" for d in report.details), encoding="utf-8")
    report_path = out_dir / f"{stem}.json"
    report_path.write_text(json.dumps(report.to_json(str(details_path)), indent=2) + "\n", encoding="utf-8")
    return report_path
