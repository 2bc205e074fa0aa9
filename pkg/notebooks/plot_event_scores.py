"""
Event occurrence and event sequence scores
==========================================

Score a synthetic three-event clip against captions that describe it
correctly, backwards, and with two events swapped.
"""

from eventscore import EventList, StubProvider
from eventscore.event_text import reverse_events
from eventscore.providers import synth_mixture
from eventscore.scoring import event_occurrence_score, event_sequence_score

# %%
# The stub provider maps each lexicon phrase to a frequency band, so a tone
# burst at 440 Hz "is" a dog barking.
stub = StubProvider()
clip = synth_mixture([(440.0, 0.5, 1.5), (1000.0, 2.0, 3.0), (2200.0, 3.5, 4.5)], 5.0, clip_id="demo")

described = EventList.sequential(["dog barking", "car horn honking", "bell ringing"])
swapped = EventList.sequential(["dog barking", "bell ringing", "car horn honking"])

# %%
# ESS counts ordered event pairs whose detected onsets agree with the text.
for name, events in [("correct", described), ("reversed", reverse_events(described)), ("swapped", swapped)]:
    res = event_sequence_score(clip, events, stub)
    onsets = [round(s.onset_s, 2) for s in res.spans]
    print(f"{name:>9}: ESS {res.ess:+.3f}  C={res.concordant} D={res.discordant}  onsets {onsets}")

# %%
# EOS is the weakest per-event match, so naming an absent event drags it down.
eos, per_event = event_occurrence_score(clip, described, stub)
print("EOS described:", round(eos, 4), [round(v, 3) for v in per_event])
extra = EventList.sequential(["dog barking", "car horn honking", "bell ringing", "glass shattering"])
eos, per_event = event_occurrence_score(clip, extra, stub)
print("EOS with an absent event:", round(eos, 4), [round(v, 3) for v in per_event])
