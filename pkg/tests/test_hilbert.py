import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmeasure.hilbert import (
    EPS_NUM,
    PAULI,
    SIGMA_X,
    SIGMA_Z,
    CompositeSpace,
    DimensionError,
    Factor,
    Observable,
    StateVector,
    apply,
    embed,
    inner,
    is_unitary,
    ket,
    kron,
    projector_onto,
    qubit_space,
    random_hermitian,
    random_state,
    random_unitary,
    rotated_spin_basis,
    spin_basis,
    spin_observable,
    tensor,
)

R2 = 1 / math.sqrt(2)
seeds = st.integers(0, 2**32 - 1)


def test_factor_rejects_unknown_role_and_bad_dim():
    with pytest.raises(ValueError):
        Factor("Detector", 2)
    with pytest.raises(ValueError):
        Factor("System", 0)


def test_composite_space_dims_and_lookup():
    s = CompositeSpace((Factor("System", 2, "s"), Factor("Apparatus", 3, "a"), Factor("Environment", 4, "e")))
    assert s.dims == (2, 3, 4)
    assert s.dim == 24
    assert s.index("Apparatus", "a") == 1
    assert s.indices("Environment") == [2]
    assert s.subspace([2, 0]).dims == (2, 4)
    with pytest.raises(KeyError):
        s.index("Brain", "x")


def test_duplicate_factor_keys_rejected():
    with pytest.raises(ValueError):
        CompositeSpace((Factor("System", 2, "a"), Factor("System", 2, "a")))


def test_basis_ordering_first_factor_slowest():
    s = qubit_space(2)
    # |0>|1> is flat index 1, |1>|0> is flat index 2
    assert StateVector.basis(s, 0, 1).amplitudes[1] == 1
    assert StateVector.basis(s, 1, 0).amplitudes[2] == 1


def test_amplitude_count_must_match():
    with pytest.raises(DimensionError):
        StateVector(qubit_space(2), [1, 0, 0])


def test_state_vectors_are_immutable():
    s = ket("+z")
    with pytest.raises(ValueError):
        s.amplitudes[0] = 2


def test_rotated_bases_match_stated_amplitudes():
    plus_u, minus_u = spin_basis("u")
    assert np.allclose(plus_u.amplitudes, [0.5, math.sqrt(3) / 2], atol=EPS_NUM)
    assert np.allclose(minus_u.amplitudes, [math.sqrt(3) / 2, -0.5], atol=EPS_NUM)
    plus_v, minus_v = spin_basis("v")
    assert np.allclose(plus_v.amplitudes, [0.5, -math.sqrt(3) / 2], atol=EPS_NUM)
    assert np.allclose(minus_v.amplitudes, [math.sqrt(3) / 2, 0.5], atol=EPS_NUM)
    assert np.allclose(ket("+x").amplitudes, [R2, R2])
    assert np.allclose(ket("-x").amplitudes, [R2, -R2])


def test_superposition_is_plus_x():
    psi = R2 * ket("+z") + R2 * ket("-z")
    assert psi.allclose(ket("+x"))


@pytest.mark.parametrize("axis", ["z", "x", "y", "u", "v"])
def test_spin_observable_eigenvectors(axis):
    obs = spin_observable(axis)
    plus, minus = spin_basis(axis)
    assert apply(obs, plus).allclose(plus)
    assert apply(obs, minus).allclose(-minus)
    assert obs.labels == ("+", "-")
    assert abs(inner(plus, minus)) < EPS_NUM


def test_spin_x_matrix_is_pauli_x():
    assert np.allclose(spin_observable("x").matrix, SIGMA_X)
    assert np.allclose(spin_observable("z").matrix, SIGMA_Z)


@given(st.floats(-math.pi, math.pi))
def test_rotated_basis_is_orthonormal_and_leading_positive(angle):
    plus, minus = rotated_spin_basis(angle)
    B = np.column_stack([plus.amplitudes, minus.amplitudes])
    assert np.allclose(B.conj().T @ B, np.eye(2), atol=1e-12)
    lead = minus.amplitudes[np.flatnonzero(np.abs(minus.amplitudes) > EPS_NUM)[0]]
    assert lead.real > 0


def test_observable_from_matrix_groups_degenerate_eigenvalues():
    m = np.diag([1.0, 1.0, -2.0])
    obs = Observable.from_matrix(m)
    assert obs.eigenvalues == (1.0, -2.0)
    assert np.allclose(obs.projectors[0], np.diag([1, 1, 0]))


def test_observable_rejects_non_hermitian_and_bad_spectrum():
    with pytest.raises(ValueError):
        Observable.from_matrix(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        Observable(np.eye(2), ((1.0, np.diag([1, 0])),))  # projectors do not sum to I


def test_projector_onto_needs_normalized_state():
    with pytest.raises(ValueError):
        projector_onto(StateVector(qubit_space(1), [1, 1]))


def test_embed_acts_on_one_factor():
    space = qubit_space(2)
    op = embed(PAULI["x"], 1, space)
    assert np.allclose(op, kron(np.eye(2), SIGMA_X))
    with pytest.raises(DimensionError):
        embed(np.eye(3), 0, space)


@settings(max_examples=50)
@given(seeds, st.integers(1, 6), st.integers(1, 6))
def test_tensor_product_norm_is_multiplicative(seed, d1, d2):
    rng = np.random.default_rng(seed)
    a = random_state(d1, rng) * 2.0
    b = random_state(CompositeSpace((Factor("Apparatus", d2),)), rng) * 0.5
    assert math.isclose(tensor(a, b).norm(), a.norm() * b.norm(), rel_tol=1e-12)


@settings(max_examples=50)
@given(seeds, st.integers(1, 8))
def test_random_unitary_preserves_norm(seed, d):
    rng = np.random.default_rng(seed)
    U = random_unitary(d, rng)
    assert is_unitary(U)
    s = random_state(d, rng)
    assert math.isclose(apply(U, s).norm(), 1.0, rel_tol=1e-12)


@settings(max_examples=30)
@given(seeds, st.integers(2, 6))
def test_observable_from_random_hermitian_reconstructs(seed, d):
    m = random_hermitian(d, np.random.default_rng(seed))
    obs = Observable.from_matrix(m)
    assert np.allclose(sum(v * p for v, p in obs.spectrum), m, atol=1e-9)
    assert list(obs.eigenvalues) == sorted(obs.eigenvalues, reverse=True)
