import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkl import statevec as sv
from qkl.encoding import (
    EXACT,
    EncodingSpec,
    Shots,
    circuit,
    encode,
    measure_embedding,
    measure_embeddings,
    resolve_mode,
)
from qkl.errors import ConfigurationError, UsageError

import oracles

ONE_QUBIT = EncodingSpec(num_qubits=1, depth=1, entangler="none", feature_scale=1.0)


def test_default_spec():
    spec = EncodingSpec()
    assert (spec.num_qubits, spec.depth, spec.rotation_axis, spec.entangler) == (8, 2, "RY", "cz_ring")
    assert spec.feature_scale == math.pi and spec.data_reuploading


@pytest.mark.parametrize("bad", [dict(depth=0), dict(feature_scale=0.0), dict(feature_scale=math.inf),
                                 dict(rotation_axis="RX"), dict(entangler="star"), dict(num_qubits=21)])
def test_spec_validation(bad):
    with pytest.raises(ConfigurationError):
        EncodingSpec(**bad)


def test_spec_round_trip_and_unknown_keys():
    spec = EncodingSpec(num_qubits=3, depth=4, rotation_axis="RY-RZ", entangler="cnot_chain")
    assert EncodingSpec.from_dict(spec.to_dict()) == spec
    assert set(spec.to_dict()) == {"num_qubits", "depth", "rotation_axis", "entangler", "feature_scale",
                                   "data_reuploading"}
    with pytest.raises(ConfigurationError):
        EncodingSpec.from_dict({"qubits": 3})


def test_zero_input_gives_zero_state():
    for q in (1, 2, 5):
        s = encode(EncodingSpec(num_qubits=q), np.zeros(q))
        assert np.allclose(s.amplitudes, sv.zero_state(q).amplitudes)


def test_single_qubit_pi_flip():
    assert np.allclose(encode(ONE_QUBIT, [math.pi]).amplitudes, [0, 1], atol=1e-12)


def test_cnot_chain_example():
    spec = EncodingSpec(num_qubits=2, depth=1, entangler="cnot_chain", feature_scale=1.0)
    s = encode(spec, [math.pi, 0.0])
    expected = oracles.dense_encode(2, [math.pi, 0.0], depth=1, scale=1.0, entangler="cnot_chain")
    assert np.allclose(s.amplitudes, expected, atol=1e-12)
    assert np.allclose(np.abs(s.amplitudes), [0, 0, 0, 1], atol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(UsageError):
        encode(EncodingSpec(num_qubits=3), [0.1, 0.2])
    with pytest.raises(UsageError):
        encode(EncodingSpec(num_qubits=1), [math.nan])


def test_two_qubit_ring_has_one_edge():
    gates = circuit(EncodingSpec(num_qubits=2, depth=1), [0.1, 0.2])
    assert sum(g.kind == "CZ" for g in gates) == 1
    gates = circuit(EncodingSpec(num_qubits=4, depth=1), [0.1] * 4)
    assert sum(g.kind == "CZ" for g in gates) == 4


@settings(max_examples=25, deadline=None)
@given(
    q=st.integers(1, 4),
    depth=st.integers(1, 3),
    axis=st.sampled_from(["RY", "RY-RZ"]),
    ent=st.sampled_from(["none", "cz_ring", "cnot_chain"]),
    reupload=st.booleans(),
    seed=st.integers(0, 2**32 - 1),
)
def test_encode_matches_dense_construction(q, depth, axis, ent, reupload, seed):
    x = np.random.default_rng(seed).uniform(-1, 1, q)
    spec = EncodingSpec(q, depth, axis, ent, math.pi, reupload)
    expected = oracles.dense_encode(q, x, depth, math.pi, axis, ent, reupload)
    assert np.allclose(encode(spec, x).amplitudes, expected, atol=1e-10)


def test_embedding_examples():
    assert np.array_equal(measure_embedding(EncodingSpec(num_qubits=3), np.zeros(3)).values, [1, 1, 1])
    assert abs(measure_embedding(ONE_QUBIT, [math.pi / 2]).values[0]) < 1e-12


def test_shot_embedding_bound_and_regression():
    value = measure_embedding(ONE_QUBIT, [math.pi / 2], Shots(10000, 7)).values[0]
    assert abs(value) <= 5 / math.sqrt(10000)
    # frozen from the first run: 5017 of 10000 shots read 1
    assert value == pytest.approx(-0.0034, abs=1e-12)


def test_shot_count_zero_rejected():
    with pytest.raises(UsageError):
        Shots(0)


def test_resolve_mode():
    assert resolve_mode(None, 3) == EXACT
    assert resolve_mode(100, 3) == Shots(100, 3)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), q=st.integers(1, 6))
def test_embedding_contract(seed, q):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (3, q))
    spec = EncodingSpec(num_qubits=q)
    exact = measure_embeddings(spec, X)
    assert exact.shape == (3, q)
    assert np.all(np.abs(exact) <= 1)
    assert np.array_equal(exact, measure_embeddings(spec, X))
    a = measure_embeddings(spec, X, Shots(64, seed), keys=[5, 6, 7])
    b = measure_embeddings(spec, X, Shots(64, seed), keys=[5, 6, 7])
    assert np.array_equal(a, b)
    assert np.all(np.abs(a) <= 1)


def test_shot_embeddings_keyed_per_row():
    spec = EncodingSpec(num_qubits=2)
    X = np.array([[0.3, -0.2], [0.3, -0.2]])
    a = measure_embeddings(spec, X, Shots(200, 1), keys=[11, 12])
    b = measure_embeddings(spec, X[::-1], Shots(200, 1), keys=[12, 11])
    assert np.array_equal(a, b[::-1])


def test_shot_convergence():
    spec = EncodingSpec(num_qubits=4)
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (20, 4))
    exact = measure_embeddings(spec, X)
    errors = {}
    for n in (100, 10000):
        est = measure_embeddings(spec, X, Shots(n, 5))
        err = np.abs(est - exact)
        assert np.all(err < 5 / math.sqrt(n))
        errors[n] = err.mean()
    assert errors[10000] < errors[100]
