import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmeasure import density as dm
from qmeasure.hilbert import (
    CompositeSpace,
    DimensionError,
    Factor,
    StateVector,
    ket,
    kron,
    qubit_space,
    random_state,
    random_unitary,
    spin_observable,
    tensor,
)
from qmeasure.scenarios import singlet

seeds = st.integers(0, 2**32 - 1)


def pair(a, b):
    return StateVector(qubit_space(2), np.kron(a.amplitudes, b.amplitudes))


def test_pure_state_has_purity_one():
    rho = dm.from_pure(ket("+x"))
    assert rho.provenance == dm.PURE
    assert math.isclose(dm.purity(rho), 1.0)
    assert dm.is_pure(rho)


def test_from_pure_rejects_unnormalized():
    with pytest.raises(ValueError):
        dm.from_pure(StateVector(qubit_space(1), [1, 1]))


def test_mixture_weights_validated():
    with pytest.raises(ValueError):
        dm.from_mixture([(0.7, ket("+z")), (0.7, ket("-z"))])
    with pytest.raises(ValueError):
        dm.from_mixture([(1.5, ket("+z")), (-0.5, ket("-z"))])


def test_density_matrix_validation():
    s = qubit_space(1)
    with pytest.raises(ValueError):
        dm.DensityMatrix(s, np.diag([0.6, 0.6]))
    with pytest.raises(ValueError):
        dm.DensityMatrix(s, np.diag([1.5, -0.5]))
    with pytest.raises(ValueError):
        dm.DensityMatrix(s, np.array([[0.5, 0.5], [0.1, 0.5]]))
    with pytest.raises(DimensionError):
        dm.DensityMatrix(s, np.eye(3) / 3)


def test_reduced_singlet_is_half_identity_but_tagged_reduced():
    rho = dm.partial_trace(dm.from_pure(singlet()), [0])
    proper = dm.from_mixture([(0.5, ket("+z")), (0.5, ket("-z"))])
    assert np.max(np.abs(rho.matrix - np.eye(2) / 2)) <= 1e-12
    assert np.allclose(rho.matrix, proper.matrix)
    assert rho.provenance == dm.REDUCED
    assert proper.provenance == dm.PROPER


def test_singlet_versus_mixture_joint_prediction():
    rho = dm.from_pure(singlet())
    mix = dm.MixtureSpec(((0.5, pair(ket("+z"), ket("-z"))), (0.5, pair(ket("-z"), ket("+z")))))
    P = kron(spin_observable("x").projector("+"), spin_observable("x").projector("+"))
    g, m = dm.joint_prediction_gap(rho, mix, P)
    assert abs(g - 0.0) <= 1e-10
    assert abs(m - 0.25) <= 1e-10


def test_partial_trace_of_product_state_returns_factor():
    a, b = ket("+x"), ket("-u")
    rho = dm.from_pure(pair(a, b))
    assert np.allclose(dm.partial_trace(rho, [1]).matrix, np.outer(b.amplitudes, b.amplitudes.conj()))
    assert np.allclose(dm.partial_trace(rho, [0]).matrix, np.outer(a.amplitudes, a.amplitudes.conj()))


def test_partial_trace_argument_errors():
    rho = dm.from_pure(singlet())
    with pytest.raises(ValueError):
        dm.partial_trace(rho, [])
    with pytest.raises(IndexError):
        dm.partial_trace(rho, [2])


def test_outcome_probability_requires_projector():
    rho = dm.from_pure(ket("+z"))
    with pytest.raises(ValueError):
        dm.outcome_probability(rho, np.array([[1, 1], [0, 0]]))
    assert dm.outcome_probability(rho, spin_observable("x").projector("+")) == pytest.approx(0.5)


def test_off_diagonal_weight_in_z_and_x_bases():
    rho = dm.from_pure(ket("+x"))
    assert dm.off_diagonal_weight(rho, [ket("+z"), ket("-z")]) == pytest.approx(1.0)
    assert dm.off_diagonal_weight(rho, [ket("+x"), ket("-x")]) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        dm.off_diagonal_weight(rho, [ket("+z"), ket("+x")])


def test_evolve_requires_unitary():
    rho = dm.from_pure(ket("+z"))
    with pytest.raises(ValueError):
        dm.evolve(rho, np.diag([1, 2]))
    out = dm.evolve(rho, spin_observable("x").matrix)
    assert np.allclose(out.matrix, np.diag([0, 1]))


def three_factor_space(d1, d2, d3):
    return CompositeSpace((Factor("System", d1), Factor("Apparatus", d2), Factor("Environment", d3)))


@settings(max_examples=40)
@given(seeds, st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.sets(st.integers(0, 2), min_size=1))
def test_partial_trace_agrees_with_vector_shortcut(seed, d1, d2, d3, keep):
    s = random_state(three_factor_space(d1, d2, d3), np.random.default_rng(seed))
    a = dm.partial_trace(dm.from_pure(s), keep)
    b = dm.reduced_from_vector(s, keep)
    assert np.allclose(a.matrix, b.matrix, atol=1e-12)
    assert abs(np.trace(a.matrix) - 1) <= 1e-10


@settings(max_examples=40)
@given(seeds, st.integers(2, 4), st.integers(2, 4))
def test_reduced_purity_between_bounds_and_equal_on_both_sides(seed, d1, d2):
    space = CompositeSpace((Factor("System", d1), Factor("Apparatus", d2)))
    s = random_state(space, np.random.default_rng(seed))
    ra = dm.reduced_from_vector(s, [0])
    rb = dm.reduced_from_vector(s, [1])
    assert 1 / d1 - 1e-12 <= dm.purity(ra) <= 1 + 1e-12
    # Schmidt decomposition: both reduced matrices share their nonzero spectrum
    assert math.isclose(dm.purity(ra), dm.purity(rb), rel_tol=1e-9)


@settings(max_examples=40)
@given(seeds, st.integers(2, 4))
def test_unitary_on_traced_factor_leaves_reduced_state(seed, d):
    rng = np.random.default_rng(seed)
    space = CompositeSpace((Factor("System", 2), Factor("Environment", d)))
    s = random_state(space, rng)
    U = kron(np.eye(2), random_unitary(d, rng))
    moved = StateVector(space, U @ s.amplitudes)
    assert np.allclose(dm.reduced_from_vector(s, [0]).matrix, dm.reduced_from_vector(moved, [0]).matrix, atol=1e-12)


@settings(max_examples=40)
@given(seeds)
def test_born_probabilities_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    rho = dm.from_pure(random_state(2, rng))
    obs = spin_observable("u")
    assert math.isclose(sum(dm.outcome_probability(rho, P) for P in obs.projectors), 1.0, rel_tol=1e-12)


def test_tensor_space_concatenates():
    s = tensor(ket("+z"), StateVector(CompositeSpace((Factor("Apparatus", 2),)), [1, 0]))
    assert [f.role for f in s.space.factors] == ["System", "Apparatus"]
