"""
Metric learning on measurement embeddings
=========================================

A linear projection head trained with the joint angular-prototypical and
GE2E loss pulls same-class embeddings together.
"""

import numpy as np

from qkl.encoding import EncodingSpec, measure_embeddings
from qkl.metric import MetricConfig, cluster_distance, train_head

rng = np.random.default_rng(0)
centers = rng.uniform(-0.6, 0.6, (4, 8))
X = np.vstack([c + 0.25 * rng.normal(size=(30, 8)) for c in centers]).clip(-1, 1)
y = np.repeat(np.arange(4), 30)

Y = measure_embeddings(EncodingSpec(), X)  # Z expectations of the encoded states
print(f"cluster distance of raw embeddings: {cluster_distance(Y, y):.3f}")

head, log = train_head(Y, y, MetricConfig(enabled=True, epochs=20, lr=0.05, classes_per_batch=4))
print(f"cluster distance after the head:    {cluster_distance(head.project(Y), y):.3f}")
for epoch, loss, grad_norm, dist in log.rows()[::5]:
    print(f"  epoch {epoch:>2}  loss {loss:.4f}  |grad| {grad_norm:.3f}")
