"""
Training the quality predictor
==============================

Fit the two-layer quality network on four separable clusters and read the
expected quality score of a few points.
"""

import numpy as np

from eventscore.ahq import accuracy, ahq_predict, ahq_train

rng = np.random.default_rng(0)
d = 512
centroids = rng.normal(size=(4, d))
centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
labels = rng.integers(0, 4, 1000)
X = centroids[labels] + 0.03 * rng.normal(size=(1000, d))
data = [(x, int(c) + 1) for x, c in zip(X, labels)]

# %%
model, trace = ahq_train(data, epochs=6, rng_seed=0)
print("loss per epoch:", [round(v, 5) for v in trace])
print(f"train accuracy: {100 * accuracy(model, data):.1f}%")

# %%
# The score is the expected class value, so it is fractional in [1, 4].
for k in range(4):
    print(f"centroid of class {k + 1}: AHQ {ahq_predict(model, centroids[k]):.3f}")
print(f"midpoint of classes 1 and 4: AHQ {ahq_predict(model, (centroids[0] + centroids[3]) / 2):.3f}")
