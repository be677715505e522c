"""
Simulating a small register
===========================

Build a Bell pair gate by gate, then look at it qubit by qubit.
"""

import numpy as np

from qkl import statevec as sv

# qubit 0 is the least significant bit of the amplitude index
state = sv.zero_state(2)
state = sv.run_circuit(state, [sv.H(0), sv.CNOT(0, 1)])
print("amplitudes:", np.round(state.amplitudes, 4))

# each qubit alone is maximally mixed: its Bloch vector is the origin
for q in range(2):
    rho = sv.reduced_density_matrix(state, q)
    print(f"qubit {q} reduced density matrix:\n{np.round(rho.entries, 4)}")
print("Bloch vectors:\n", np.round(sv.bloch_vectors(state), 12))

# rotating one qubit first moves both Bloch vectors off the origin
tilted = sv.run_circuit(sv.zero_state(2), [sv.RY(0, 0.6), sv.CNOT(0, 1)])
print("Z expectations after RY(0.6):", np.round(sv.pauli_z_expectations(tilted), 4))

# sampling the register reproduces the exact Z expectations up to shot noise
rng = np.random.default_rng(0)
bits = sv.outcome_bits(sv.sample_outcomes(tilted, 5000, rng), 2)
print("estimated from 5000 shots:   ", np.round(1 - 2 * bits.mean(axis=0), 4))
