from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import pytest

from eventscore.audio_io import AudioClip, write_wav
from eventscore.providers import StubProvider, synth_mixture

SR = 16000

# lexicon phrase -> band centre of the default stub lexicon
DOG, HORN, BELL, BIRD = "dog barking", "car horn honking", "bell ringing", "bird chirping"
FREQ = {DOG: 440.0, HORN: 1000.0, BELL: 2200.0, BIRD: 3500.0, "man speaking": 200.0, "glass shattering": 5000.0}

ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}
SUITE_BUDGET_S = 60.0
# criterion whose line also carries the whole-suite runtime budget
SUITE_TIMED = "determinism"
_session_start = [0.0]


def pytest_sessionstart(session):
    _session_start[0] = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    elapsed = time.perf_counter() - _session_start[0]
    terminalreporter.section("acceptance criteria")
    for name, (ok, note) in ACCEPTANCE_RESULTS.items():
        if name == SUITE_TIMED:
            ok = ok and elapsed < SUITE_BUDGET_S
            note = f"{note}; suite {elapsed:.1f} s (< {SUITE_BUDGET_S:g} s)"
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {note}")


@pytest.fixture
def stub():
    return StubProvider()


def burst_clip(events, duration_s, clip_id="mix", amplitude=0.3):
    """``events``: list of (phrase, onset, offset) using stub lexicon bands."""
    return synth_mixture([(FREQ[p], on, off) for p, on, off in events], duration_s, SR, amplitude, clip_id)


def sine(freq, duration_s, amplitude=1.0, sr=SR, clip_id="sine"):
    t = np.arange(int(round(duration_s * sr))) / sr
    return AudioClip(clip_id, amplitude * np.sin(2 * np.pi * freq * t), sr)


def write_manifest(tmp_path: Path, items, name="manifest.jsonl") -> Path:
    """``items``: list of dicts with caption_id, caption, audio_id, clip, source_model."""
    audio_dir = tmp_path / "audio"
    audio_dir.mkdir(exist_ok=True)
    lines = []
    for it in items:
        wav = audio_dir / f"{it['audio_id']}.wav"
        write_wav(wav, it["clip"])
        lines.append(
            {
                "caption_id": it["caption_id"],
                "caption": it["caption"],
                "audio_id": it["audio_id"],
                "audio_path": f"audio/{wav.name}",
                "source_model": it.get("source_model", "synth"),
            }
        )
    path = tmp_path / name
    path.write_text("".join(json.dumps(ln) + "\n" for ln in lines), encoding="utf-8")
    return path


def fixture_items():
    """Three stub-scoreable audios for one caption: correct, swapped, one event missing."""
    caption = f"{DOG}, then {HORN}"
    return [
        {"caption_id": "c1", "caption": caption, "audio_id": "good",
         "clip": burst_clip([(DOG, 0.5, 1.5), (HORN, 2.0, 3.0)], 3.5, "good"), "source_model": "m1"},
        {"caption_id": "c1", "caption": caption, "audio_id": "swapped",
         "clip": burst_clip([(HORN, 0.5, 1.5), (DOG, 2.0, 3.0)], 3.5, "swapped"), "source_model": "m2"},
        {"caption_id": "c1", "caption": caption, "audio_id": "missing",
         "clip": burst_clip([(DOG, 0.5, 1.5)], 3.5, "missing"), "source_model": "m3"},
    ]


def cluster_set(n=1000, d=512, seed=0, spread=0.03):
    """Four Gaussian clusters around random unit centroids, labels 1..4.

    Returns ``(dataset, oracle_accuracy)`` where the oracle is the
    nearest-centroid classifier using the true centroids.
    """
    rng = np.random.default_rng(seed)
    centroids = rng.normal(size=(4, d))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    labels = rng.integers(0, 4, n)
    X = centroids[labels] + spread * rng.normal(size=(n, d))
    nearest = np.argmin(((X[:, None, :] - centroids[None]) ** 2).sum(-1), axis=1)
    oracle = float(np.mean(nearest == labels))
    return [(x, int(c) + 1) for x, c in zip(X, labels)], oracle


def fd_check(model, X, y, n_coords=10, step=1e-4, seed=0):
    """Max relative error between analytic and central-difference gradients.

    Coordinates whose +-step flips any hidden pre-activation are redrawn.
    """
    from eventscore.ahq import loss_and_grads

    rng = np.random.default_rng(seed)
    _, grads = loss_and_grads(model, X, y)
    params = model.params()
    sizes = np.array([p.size for p in params])
    signs = np.sign(X @ model.W1 + model.b1)
    worst = 0.0
    checked = 0
    while checked < n_coords:
        k = int(rng.choice(len(params), p=sizes / sizes.sum()))
        idx = np.unravel_index(int(rng.integers(params[k].size)), params[k].shape)
        saved = params[k][idx]
        params[k][idx] = saved + step
        up, _ = loss_and_grads(model, X, y)
        flipped = np.any(np.sign(X @ model.W1 + model.b1) != signs)
        params[k][idx] = saved - step
        down, _ = loss_and_grads(model, X, y)
        flipped |= np.any(np.sign(X @ model.W1 + model.b1) != signs)
        params[k][idx] = saved
        if flipped:
            # the step straddles a ReLU kink; differences are no oracle there
            continue
        checked += 1
        numeric = (up - down) / (2 * step)
        analytic = grads[k][idx]
        denom = max(abs(numeric), abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst


def brute_force_segment_f1(pairs, segment_len_s=1.0):
    """Per-segment boolean grids built with plain loops.

    ``pairs``: list of (horizon_s, {label: ref_spans}, {label: pred_spans}).
    """
    import math

    def active(spans, start, end):
        return any(min(off, end) - max(on, start) > 0 for on, off in spans)

    tp = fp = fn = 0
    for horizon, ref, pred in pairs:
        for label in set(ref) | set(pred):
            for s in range(math.ceil(horizon / segment_len_s)):
                start, end = s * segment_len_s, (s + 1) * segment_len_s
                r = active(ref.get(label, []), start, end)
                p = active(pred.get(label, []), start, end)
                tp += r and p
                fp += p and not r
                fn += r and not p
    return 1.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)


def random_timelines(n_items=200, seed=0, labels=("dog", "horn", "bell")):
    """Random reference/prediction timelines; endpoints often sit on segment edges."""
    rng = np.random.default_rng(seed)

    def spans(horizon):
        out = []
        for _ in range(int(rng.integers(0, 4))):
            a, b = sorted(rng.uniform(0, horizon, 2))
            if rng.random() < 0.4:
                a, b = float(np.floor(a)), float(min(np.ceil(b), horizon))
            out.append((float(a), float(b)))
        return out

    items = []
    for k in range(n_items):
        horizon = float(rng.choice([rng.uniform(0.5, 12.0), float(rng.integers(1, 12))]))
        ref = {lab: spans(horizon) for lab in labels if rng.random() < 0.7}
        pred = {lab: spans(horizon) for lab in labels if rng.random() < 0.7}
        items.append((f"item{k}", horizon, ref, pred))
    return items


def to_segment_timelines(items):
    from eventscore.evalharness import SegmentTimeline

    ref, pred = [], []
    for item_id, horizon, r, p in items:
        ref += [SegmentTimeline(lab, sp, horizon, item_id) for lab, sp in r.items()] or [SegmentTimeline("", [], horizon, item_id)]
        pred += [SegmentTimeline(lab, sp, horizon, item_id) for lab, sp in p.items()] or [SegmentTimeline("", [], horizon, item_id)]
    return ref, pred
