import json

import numpy as np
import pytest

from eventscore.audio_io import AudioClip
from eventscore.evalharness import (
    PEARSON,
    SPEARMAN,
    SegmentTimeline,
    correlation,
    correlation_report,
    missing_event_accuracy,
    read_timelines,
    segment_f1,
    sequence_accuracy,
    win_rate,
    write_report,
)
from eventscore.scoring import axis_scorer

from conftest import FREQ, brute_force_segment_f1, burst_clip, random_timelines, to_segment_timelines

CLIP = AudioClip("c", np.zeros(10), 16000)


def items(n, gt="a dog barking, then a car horn honking", other="a bell ringing"):
    return [(AudioClip(f"c{k}", np.zeros(10), 16000), gt, other) for k in range(n)]


def test_oracle_and_tie_scorers():
    oracle = lambda clip, cap: 1.0 if "dog" in cap else 0.0
    assert missing_event_accuracy(items(5), oracle).value == 100.0
    tie = lambda clip, cap: 0.3
    rep = missing_event_accuracy(items(7), tie)
    assert rep.value == 50.0 and rep.count == 7


def test_failures_excluded():
    def flaky(clip, cap):
        if clip.id == "c1":
            raise RuntimeError("provider down")
        return None if clip.id == "c2" else (1.0 if "dog" in cap else 0.0)

    rep = missing_event_accuracy(items(4), flaky)
    assert rep.value == 100.0 and rep.count == 2 and rep.excluded == 2
    assert rep.to_json()["excluded"] == 2
    with pytest.raises(ValueError):
        missing_event_accuracy(items(2), lambda c, t: None)


def test_coin_flip_converges():
    rng = np.random.default_rng(0)
    coin = lambda clip, cap: float(rng.random())
    assert abs(missing_event_accuracy(items(10_000), coin).value - 50.0) <= 3.0


PHRASES = list(FREQ)


def stub_items(kind, n=20, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        a, b, unused = rng.choice(len(PHRASES), 3, replace=False)
        first, second = PHRASES[a], PHRASES[b]
        clip = burst_clip([(first, 0.3, 1.3), (second, 1.8, 2.8)], 3.2, f"clip{k}")
        gt = f"{first}, then {second}"
        other = f"{gt}, then {PHRASES[unused]}" if kind == "missing" else f"{second}, then {first}"
        out.append((clip, gt, other))
    return out


def test_missing_event_stub_end_to_end(stub):
    rep = missing_event_accuracy(stub_items("missing"), axis_scorer(stub, "eos"))
    assert rep.value == 100.0 and rep.count == 20


def test_sequence_stub_end_to_end(stub):
    rep = sequence_accuracy(stub_items("sequence"), axis_scorer(stub, "ess"))
    assert rep.value == 100.0 and rep.count == 20
    assert all(d["gt_score"] == 1.0 and d["other_score"] == -1.0 for d in rep.details)


def test_sequence_rejects_single_event():
    with pytest.raises(ValueError, match=r"\[1\]"):
        sequence_accuracy([(CLIP, "a, then b", "b, then a"), (CLIP, "a dog barks", "x")], lambda c, t: 0.0)


def tl(label, spans, horizon=10.0, item="i"):
    return SegmentTimeline(label, spans, horizon, item)


def test_segment_examples():
    ref = [tl("dog", [(2.0, 5.0)])]
    rep = segment_f1(ref, [tl("dog", [(3.0, 7.0)])])
    assert (rep.extra["TP"], rep.extra["FP"], rep.extra["FN"]) == (2, 2, 1)
    # 2TP / (2TP + FP + FN) with these counts is 4/7; a quoted 4/9 does not follow from them
    assert rep.value == 4 / 7
    assert segment_f1(ref, ref).value == 1.0
    assert segment_f1(ref, [tl("dog", [])]).value == 0.0
    assert segment_f1([tl("dog", [])], [tl("dog", [])]).value == 1.0


def test_segment_touching_boundary_not_active():
    # [2, 3] covers segment 2 only; segments 1 and 3 merely touch it
    assert segment_f1([tl("x", [(2.0, 3.0)])], [tl("x", [(2.5, 2.6)])]).value == 1.0
    assert segment_f1([tl("x", [(2.0, 3.0)])], [tl("x", [(3.0, 3.5)])]).value == 0.0


def test_segment_horizon_mismatch_and_validation():
    with pytest.raises(ValueError):
        segment_f1([tl("a", [], 10.0)], [tl("a", [], 9.0)])
    with pytest.raises(ValueError):
        tl("a", [(4.0, 3.0)])
    with pytest.raises(ValueError):
        tl("a", [(4.0, 11.0)])


def test_segment_matches_brute_force():
    data = random_timelines(200, seed=1)
    for item_id, horizon, ref, pred in data:
        r, p = to_segment_timelines([(item_id, horizon, ref, pred)])
        assert segment_f1(r, p).value == brute_force_segment_f1([(horizon, ref, pred)])
    r, p = to_segment_timelines(data)
    corpus = [(h, ref, pred) for _, h, ref, pred in data]
    assert segment_f1(r, p).value == brute_force_segment_f1(corpus)
    for seg in (0.5, 2.0):
        assert segment_f1(r, p, seg).value == brute_force_segment_f1(corpus, seg)


def test_timeline_file(tmp_path):
    path = tmp_path / "ref.jsonl"
    rows = [{"item_id": "a", "horizon_s": 4.0, "events": [{"label": "dog", "spans": [[0.5, 1.5]]}]},
            {"item_id": "b", "horizon_s": 3.0, "events": []}]
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    tls = read_timelines(path)
    assert segment_f1(tls, tls).value == 1.0 and segment_f1(tls, tls).count == 2


def test_correlation_examples():
    x = [1.0, 2.0, 3.0, 4.0, 5.0]
    # d^2 = [1,1,1,1,0]: 1 - 6*4/120 = 0.8
    assert correlation(x, [2, 1, 4, 3, 5], SPEARMAN) == pytest.approx(0.8, abs=1e-12)
    for kind in (PEARSON, SPEARMAN):
        assert correlation(x, [2 * v + 3 for v in x], kind) == pytest.approx(1.0, abs=1e-12)
    assert correlation(x, x[::-1], SPEARMAN) == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(ValueError):
        correlation(x, [1.0] * 5)
    with pytest.raises(ValueError):
        correlation(x, x, "kendall")


def test_correlation_invariances():
    from scipy.stats import pearsonr, spearmanr

    rng = np.random.default_rng(2)
    for _ in range(100):
        n = int(rng.integers(3, 30))
        x, y = rng.normal(size=n), rng.normal(size=n)
        y[rng.random(n) < 0.2] = 0.0  # ties
        if np.all(y == y[0]):
            continue
        for kind in (PEARSON, SPEARMAN):
            assert correlation(x, y, kind) == pytest.approx(correlation(y, x, kind), abs=1e-12)
        p = correlation(x, y, PEARSON)
        assert correlation(3.0 * x + 1.0, 0.5 * y - 2.0, PEARSON) == pytest.approx(p, abs=1e-12)
        s = correlation(x, y, SPEARMAN)
        assert correlation(np.exp(x), y**3, SPEARMAN) == pytest.approx(s, abs=1e-12)
        assert p == pytest.approx(pearsonr(x, y).statistic, abs=1e-12)
        assert s == pytest.approx(spearmanr(x, y).statistic, abs=1e-12)


def test_correlation_report_headline():
    rep = correlation_report([1, 2, 3, 4, 5], [2, 1, 4, 3, 5])
    assert rep.extra["kind"] == SPEARMAN and rep.value == pytest.approx(0.8)
    assert "pearson" in rep.extra


def test_win_rate_examples():
    assert win_rate([1, 0, 1, 0], [0, 1, 0, 0]).value == 62.5
    assert win_rate([0.3, 0.4], [0.3, 0.4]).value == 50.0
    assert win_rate([2, 3], [1, 2]).value == 100.0
    rep = win_rate([1, 3], [0, 0])
    assert rep.extra == {"mean_a": 2.0, "mean_b": 0.0}
    with pytest.raises(ValueError):
        win_rate([1], [1, 2])


def test_win_rate_antisymmetry():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(1, 40))
        a = list(rng.integers(0, 4, n) / 3)
        b = list(rng.integers(0, 4, n) / 3)
        assert win_rate(a, b).value + win_rate(b, a).value == pytest.approx(100.0, abs=1e-9)


def test_write_report(tmp_path):
    rep = win_rate([1, 0], [0, 0])
    path = write_report(rep, tmp_path, "wr")
    out = json.loads(path.read_text())
    assert out["metric"] == "win_rate" and out["value"] == 75.0 and out["count"] == 2
    assert out["details_path"].endswith("wr_details.jsonl")
    assert "win_rate" in rep.table()
