"""
Finite-shot estimates
=====================

Z expectations estimated from n shots approach the exact values like 1/sqrt(n).
"""

import numpy as np

from qkl.encoding import EncodingSpec, Shots, measure_embeddings

spec = EncodingSpec(num_qubits=4)
X = np.random.default_rng(0).uniform(-1, 1, (200, 4))
exact = measure_embeddings(spec, X)

for n in (10, 100, 1000, 10000):
    est = measure_embeddings(spec, X, Shots(n, seed=1))
    err = np.abs(est - exact)
    print(f"n={n:>5}  mean |error| {err.mean():.4f}  max {err.max():.4f}  1/sqrt(n) {1 / np.sqrt(n):.4f}")
