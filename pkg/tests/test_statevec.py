import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkl import statevec as sv
from qkl.errors import ConfigurationError, UsageError

import oracles


def _random_gates(rng, n, length):
    kinds = ["RY", "RZ", "H"] + (["CZ", "CNOT"] if n > 1 else [])
    gates = []
    for _ in range(length):
        kind = kinds[rng.integers(len(kinds))]
        if kind in ("CZ", "CNOT"):
            c, t = rng.choice(n, size=2, replace=False)
            gates.append((kind, int(t), int(c), 0.0))
        else:
            gates.append((kind, int(rng.integers(n)), None, float(rng.uniform(-2 * np.pi, 2 * np.pi))))
    return gates


def _to_lib(gates):
    return [sv.Gate(k, t, c, a) for k, t, c, a in gates]


def test_zero_state_amplitudes():
    assert np.array_equal(sv.zero_state(2).amplitudes, [1, 0, 0, 0])
    assert np.array_equal(sv.zero_state(1).amplitudes, [1, 0])


@pytest.mark.parametrize("q", [0, 21, -1])
def test_zero_state_rejects_out_of_range(q):
    with pytest.raises(ConfigurationError):
        sv.zero_state(q)


def test_state_is_immutable():
    s = sv.zero_state(2)
    with pytest.raises(ValueError):
        s.amplitudes[0] = 0


def test_unnormalized_state_rejected():
    with pytest.raises(UsageError):
        sv.StateVector(1, np.array([1.0, 1.0]))


def test_ry_pi_flips():
    s = sv.apply_gate(sv.zero_state(1), sv.RY(0, math.pi))
    assert np.allclose(s.amplitudes, [0, 1], atol=1e-12)


def test_cz_trivial_on_zero():
    s = sv.apply_gate(sv.zero_state(2), sv.CZ(0, 1))
    assert np.array_equal(s.amplitudes, [1, 0, 0, 0])


def test_cnot_matches_dense_oracle():
    # |01> in qubit-0-least-significant order is index 1
    s01 = sv.StateVector(2, np.array([0, 1, 0, 0], dtype=complex))
    out = sv.apply_gate(s01, sv.CNOT(0, 1))
    expected = oracles.dense_unitary("CNOT", 2, target=1, control=0) @ s01.amplitudes
    assert np.allclose(out.amplitudes, expected, atol=1e-12)
    assert np.allclose(out.amplitudes, [0, 0, 0, 1])


def test_invalid_qubit_index():
    with pytest.raises(UsageError):
        sv.apply_gate(sv.zero_state(2), sv.RY(2, 0.1))
    with pytest.raises(UsageError):
        sv.CZ(1, 1)


def test_apply_gate_leaves_input_untouched():
    s = sv.zero_state(1)
    sv.apply_gate(s, sv.H(0))
    assert np.array_equal(s.amplitudes, [1, 0])


def test_pauli_z_examples():
    assert np.array_equal(sv.pauli_z_expectations(sv.zero_state(3)), [1, 1, 1])
    assert np.allclose(sv.pauli_z_expectations(sv.apply_gate(sv.zero_state(1), sv.RY(0, math.pi))), [-1])
    assert abs(sv.pauli_z_expectations(sv.apply_gate(sv.zero_state(1), sv.RY(0, math.pi / 2)))[0]) < 1e-12


def test_overlap_examples():
    s = sv.apply_gate(sv.zero_state(2), sv.H(1))
    assert abs(sv.overlap_magnitude(s, s) - 1.0) < 1e-12
    one = sv.apply_gate(sv.zero_state(1), sv.RY(0, math.pi))
    assert sv.overlap_magnitude(sv.zero_state(1), one) < 1e-12
    a = sv.apply_gate(sv.zero_state(1), sv.RY(0, 0.0))
    b = sv.apply_gate(sv.zero_state(1), sv.RY(0, math.pi / 2))
    assert abs(sv.overlap_magnitude(a, b) - math.cos(math.pi / 4)) < 1e-12


def test_overlap_qubit_mismatch():
    with pytest.raises(UsageError):
        sv.overlap_magnitude(sv.zero_state(1), sv.zero_state(2))


def test_reduced_density_examples():
    rho = sv.reduced_density_matrix(sv.zero_state(2), 0).entries
    assert np.allclose(rho, [[1, 0], [0, 0]])
    bell = sv.run_circuit(sv.zero_state(2), [sv.H(0), sv.CNOT(0, 1)])
    expected = oracles.partial_trace_1q(bell.amplitudes, 2, 0)
    assert np.allclose(expected, [[0.5, 0], [0, 0.5]])
    assert np.allclose(sv.reduced_density_matrix(bell, 0).entries, expected, atol=1e-12)
    theta = 0.73
    prod = sv.apply_gate(sv.zero_state(2), sv.RY(0, theta))
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    assert np.allclose(sv.reduced_density_matrix(prod, 0).entries, [[c * c, c * s], [c * s, s * s]], atol=1e-12)


def test_reduced_density_index_error():
    with pytest.raises(UsageError):
        sv.reduced_density_matrix(sv.zero_state(2), 2)


def test_pauli_expectation_examples():
    assert sv.pauli_expectations_1q(sv.DensityMatrix1Q(np.array([[1, 0], [0, 0]], dtype=complex), 0)) == (0, 0, 1)
    assert sv.pauli_expectations_1q(sv.DensityMatrix1Q(np.eye(2, dtype=complex) / 2, 0)) == (0, 0, 0)
    s = sv.apply_gate(sv.zero_state(1), sv.RY(0, math.pi / 2))
    assert np.allclose(sv.pauli_expectations_1q(sv.reduced_density_matrix(s, 0)), (1, 0, 0), atol=1e-12)


def test_sampling_reproducible_and_bits():
    s = sv.run_circuit(sv.zero_state(3), [sv.H(0), sv.RY(2, 1.0)])
    a = sv.sample_outcomes(s, 50, np.random.default_rng(3))
    b = sv.sample_outcomes(s, 50, np.random.default_rng(3))
    assert np.array_equal(a, b)
    bits = sv.outcome_bits(np.array([0b101]), 3)
    assert bits.tolist() == [[1, 0, 1]]
    with pytest.raises(UsageError):
        sv.sample_outcomes(s, 0, np.random.default_rng(0))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 4), length=st.integers(0, 20), seed=st.integers(0, 2**32 - 1))
def test_oracle_equivalence(n, length, seed):
    gates = _random_gates(np.random.default_rng(seed), n, length)
    out = sv.run_circuit(sv.zero_state(n), _to_lib(gates))
    assert np.max(np.abs(out.amplitudes - oracles.dense_run(n, gates))) < 1e-10


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 6), length=st.integers(0, 50), seed=st.integers(0, 2**32 - 1))
def test_norm_preservation(n, length, seed):
    gates = _random_gates(np.random.default_rng(seed), n, length)
    out = sv.run_circuit(sv.zero_state(n), _to_lib(gates))
    assert abs(np.linalg.norm(out.amplitudes) - 1.0) < 1e-10


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 5), seed=st.integers(0, 2**32 - 1))
def test_partial_trace_consistency(n, seed):
    rng = np.random.default_rng(seed)
    s = sv.run_circuit(sv.zero_state(n), _to_lib(_random_gates(rng, n, 15)))
    z = sv.pauli_z_expectations(s)
    bloch = sv.bloch_vectors(s)
    for q in range(n):
        rho = sv.reduced_density_matrix(s, q)
        assert np.allclose(rho.entries, rho.entries.conj().T, atol=1e-12)
        assert abs(np.trace(rho.entries) - 1) < 1e-12
        ev = np.linalg.eigvalsh(rho.entries)
        assert ev.min() > -1e-10 and ev.max() < 1 + 1e-10
        px, py, pz = sv.pauli_expectations_1q(rho)
        assert abs(z[q] - pz) < 1e-10
        assert px * px + py * py + pz * pz <= 1 + 1e-9
        assert np.allclose(bloch[q], (px, py, pz), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
def test_overlap_unitary_invariance(n, seed):
    rng = np.random.default_rng(seed)
    a = sv.run_circuit(sv.zero_state(n), _to_lib(_random_gates(rng, n, 8)))
    b = sv.run_circuit(sv.zero_state(n), _to_lib(_random_gates(rng, n, 8)))
    u = _to_lib(_random_gates(rng, n, 12))
    before = sv.overlap_magnitude(a, b)
    after = sv.overlap_magnitude(sv.run_circuit(a, u), sv.run_circuit(b, u))
    assert abs(before - after) < 1e-10
