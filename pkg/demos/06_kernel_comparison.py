"""
Comparing kernels on a radial corpus
====================================

Two classes that differ in distance from a shared center, not in direction.
All arms share encoding, folds and SVM settings; only the kernel varies.
"""

from dataclasses import replace

from qkl.metric import MetricConfig
from qkl.pipeline import ExperimentConfig, KernelConfig, compare_kernels
from qkl.synth import radial_corpus

manifest = radial_corpus(seed=0)
base = ExperimentConfig(seed=0)
arms = [
    replace(base, label="gaussian_qkl"),
    replace(base, label="linear_qkl", kernel=KernelConfig(kind="classical_linear", space="embedding")),
    replace(base, label="cosine_metric", kernel=KernelConfig(kind="classical_cosine", space="embedding"),
            metric=MetricConfig(enabled=True)),
    replace(base, label="fidelity_squared", kernel=KernelConfig(kind="quantum_fidelity", fidelity_power=2)),
]
for row in compare_kernels(arms, manifest).rows:
    print(f"{row.label:<18} accuracy {row.mean_accuracy:.3f}  cluster distance {row.cluster_distance:.3f}")
