"""
Volume threshold sweep
======================

Onset detection keeps frames whose normalized RMS exceeds a threshold.
Raising the threshold can only shrink the detected span.
"""

import numpy as np

from eventscore.audio_io import AudioClip, compute_envelope, detect_active_span, normalize_envelope

sr = 16000
t = np.arange(int(1.5 * sr)) / sr
x = np.zeros(3 * sr)
x[sr // 2 : sr // 2 + len(t)] = np.exp(-3 * t) * np.sin(2 * np.pi * 700 * t)
env = normalize_envelope(compute_envelope(AudioClip("decay", x, sr)))

# %%
# A decaying tone starts at 0.5 s; its tail falls below higher thresholds sooner.
for threshold in (0.1, 0.3, 0.5, 0.8):
    span = detect_active_span(env, threshold)
    print(f"threshold {threshold:.1f}: {span.onset_s:.3f} s .. {span.offset_s:.3f} s")

# %%
# A crude text rendering of the envelope, one character per 50 ms.
bars = " .:-=+*#%@"
print("".join(bars[min(int(v * 9.999), 9)] for v in env.values[::5]))
