"""
Preference pairs from a scored pool
===================================

Rank several candidate audios for one caption and emit chosen/rejected pairs.
"""

from eventscore import StubProvider
from eventscore.dataset import PairPolicy, Pool, PoolEntry, build_event_inventory, compose_prompts, emit_pairs, rank_pool
from eventscore.providers import synth_mixture
from eventscore.scoring import score_pair

stub = StubProvider()
caption = "dog barking, then car horn honking"
candidates = {
    "faithful": synth_mixture([(440.0, 0.5, 1.5), (1000.0, 2.0, 3.0)], 3.5),
    "backwards": synth_mixture([(1000.0, 0.5, 1.5), (440.0, 2.0, 3.0)], 3.5),
    "no horn": synth_mixture([(440.0, 0.5, 1.5)], 3.5),
    "overlapped": synth_mixture([(440.0, 0.5, 2.5), (1000.0, 1.0, 3.0)], 3.5),
}

# %%
pool = Pool(caption, [PoolEntry(name, "demo", score_pair(clip, caption, stub)) for name, clip in candidates.items()])
for entry in pool.entries:
    r = entry.record
    print(f"{entry.audio_id:>10}: EOS {r.eos:.3f}  ESS {r.ess:+.3f}")
print("ranking:", rank_pool(pool))

# %%
for policy in PairPolicy:
    pairs = emit_pairs(pool, policy=policy)
    print(policy.value, [(p.chosen_id, p.rejected_id, p.combined_rank_gap) for p in pairs])

# %%
# New multi-event prompts from a de-duplicated event inventory.
inventory = build_event_inventory(["dog barking, then bell ringing", "bird chirping while man speaking", "dog barking"], stub)
print("inventory:", inventory)
for prompt in compose_prompts(inventory, 3, 3, rng_seed=1):
    print("prompt:", prompt)
