"""
SMO on precomputed Gram matrices
================================

XOR is the smallest problem a linear kernel cannot separate.
"""

import numpy as np

from qkl.svm import SvmConfig, decision_values, predict, train

X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
labels = ["even", "even", "odd", "odd"]

linear = X @ X.T
rbf = np.exp(-((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))

for name, K in (("linear", linear), ("rbf", rbf)):
    model = train(K, labels, SvmConfig(C=10.0))
    pred = predict(model, K)
    acc = np.mean([p == t for p, t in zip(pred, labels)])
    print(f"{name:<7} accuracy {acc:.2f}  predictions {pred}")
    print("        decision values per class:\n", np.round(decision_values(model, K), 3))
