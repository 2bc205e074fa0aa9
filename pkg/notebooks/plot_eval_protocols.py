"""
Evaluation protocols
====================

Caption discrimination with generated interference captions, Segment F1,
correlation with labels, and win rate.
"""

from eventscore import StubProvider, decompose_caption
from eventscore.evalharness import (
    SegmentTimeline,
    correlation_report,
    missing_event_accuracy,
    segment_f1,
    sequence_accuracy,
    win_rate,
)
from eventscore.event_text import make_distractor_caption, reverse_caption
from eventscore.providers import synth_mixture
from eventscore.scoring import axis_scorer

stub = StubProvider()
bands = {"man speaking": 200.0, "dog barking": 440.0, "car horn honking": 1000.0, "bell ringing": 2200.0}
names = list(bands)
pool = names + ["glass shattering"]

items = []
for k in range(len(names) - 1):
    a, b = names[k], names[k + 1]
    clip = synth_mixture([(bands[a], 0.3, 1.2), (bands[b], 1.7, 2.6)], 3.0, clip_id=f"clip{k}")
    items.append((clip, f"{a}, then {b}"))

# %%
# A distractor appends an event the clip lacks; a reversal swaps the order.
missing = [(c, gt, make_distractor_caption(decompose_caption(gt), pool, k)) for k, (c, gt) in enumerate(items)]
reversed_ = [(c, gt, reverse_caption(decompose_caption(gt))) for c, gt in items]
print(missing_event_accuracy(missing, axis_scorer(stub, "eos")).table())
print(sequence_accuracy(reversed_, axis_scorer(stub, "ess")).table())

# %%
ref = [SegmentTimeline("dog", [(2.0, 5.0)], 10.0)]
pred = [SegmentTimeline("dog", [(3.0, 7.0)], 10.0)]
print(segment_f1(ref, pred).table())

# %%
print(correlation_report([1, 2, 3, 4, 5], [2, 1, 4, 3, 5]).table())
print(win_rate([1, 0, 1, 0], [0, 1, 0, 0]).table())
