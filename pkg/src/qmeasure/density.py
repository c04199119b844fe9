"""Density matrices: pure states, proper mixtures and reduced (improper) states."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .hilbert import (
    EPS_NORM,
    EPS_NUM,
    CompositeSpace,
    DimensionError,
    Observable,
    StateVector,
    is_hermitian,
    is_projector,
    is_unitary,
    outer,
)

PSD_TOL = 1e-9

PURE = "pure"
PROPER = "proper-mixture"
REDUCED = "reduced"
PROVENANCES = (PURE, PROPER, REDUCED)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Trace-one positive hermitian matrix over a composite space.

    ``provenance`` records how the matrix was obtained. A reduced matrix can
    have exactly the same entries as a proper mixture; the tag is what keeps
    the two apart.
    """

    space: CompositeSpace
    matrix: np.ndarray
    provenance: str = PURE

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        n = self.space.dim
        if m.shape != (n, n):
            raise DimensionError(f"matrix of shape {m.shape} for a space of dimension {n}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if not is_hermitian(m):
            raise ValueError("density matrix is not hermitian")
        if abs(np.trace(m) - 1) > EPS_NUM:
            raise ValueError(f"density matrix trace is {np.trace(m).real:.12g}, expected 1")
        if np.linalg.eigvalsh(m)[0] < -PSD_TOL:
            raise ValueError("density matrix is not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.space.dim

    def __repr__(self):
        return f"DensityMatrix({self.space}, provenance={self.provenance!r})"


@dataclass(frozen=True)
class MixtureSpec:
    """Classical ensemble: ``components`` is a sequence of ``(weight, state)``."""

    components: tuple[tuple[float, StateVector], ...]

    def __post_init__(self):
        comps = tuple((float(p), s) for p, s in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("a mixture needs at least one component")
        if any(p < 0 for p, _ in comps):
            raise ValueError("mixture weights must be nonnegative")
        if abs(sum(p for p, _ in comps) - 1) > EPS_NUM:
            raise ValueError(f"mixture weights sum to {sum(p for p, _ in comps)!r}, expected 1")
        dims = {s.space.dims for _, s in comps}
        if len(dims) != 1:
            raise DimensionError("mixture components live on different spaces")

    @property
    def space(self) -> CompositeSpace:
        return self.components[0][1].space


def from_pure(s: StateVector) -> DensityMatrix:
    if not s.is_normalized():
        raise ValueError(f"from_pure expects a normalized state (norm {s.norm():.6g})")
    return DensityMatrix(s.space, outer(s, s), PURE)


def from_mixture(m: MixtureSpec | Iterable[tuple[float, StateVector]]) -> DensityMatrix:
    if not isinstance(m, MixtureSpec):
        m = MixtureSpec(tuple(m))
    rho = sum(p * outer(s, s) for p, s in m.components)
    return DensityMatrix(m.space, rho, PROPER)


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Trace out every factor not listed in ``keep``.

    Kept factors stay in their original order.
    """
    keep = sorted(set(keep))
    n = len(rho.space)
    if not keep:
        raise ValueError("partial_trace needs at least one factor to keep")
    if keep[0] < 0 or keep[-1] >= n:
        raise IndexError(f"factor index out of range for a {n}-factor space: {keep}")
    dims = rho.space.dims
    traced = [i for i in range(n) if i not in keep]
    t = rho.matrix.reshape(dims + dims)
    # einsum labels: row axes 0..n-1, column axes n..2n-1; traced column axes reuse row labels
    row = list(range(n))
    col = [i if i in traced else n + i for i in range(n)]
    out = [i for i in keep] + [n + i for i in keep]
    reduced = np.einsum(t, row + col, out)
    k = int(np.prod([dims[i] for i in keep]))
    sub = rho.space.subspace(keep)
    return DensityMatrix(sub, reduced.reshape(k, k), REDUCED)


def reduced_from_vector(s: StateVector, keep: Iterable[int]) -> DensityMatrix:
    """``partial_trace(from_pure(s), keep)`` without forming the full matrix."""
    keep = sorted(set(keep))
    n = len(s.space)
    if not keep:
        raise ValueError("need at least one factor to keep")
    if keep[0] < 0 or keep[-1] >= n:
        raise IndexError(f"factor index out of range for a {n}-factor space: {keep}")
    traced = [i for i in range(n) if i not in keep]
    dims = s.space.dims
    k = int(np.prod([dims[i] for i in keep]))
    m = np.transpose(s.tensor(), keep + traced).reshape(k, -1)
    return DensityMatrix(s.space.subspace(keep), m @ m.conj().T, REDUCED)


def _check_dim(rho: DensityMatrix, m: np.ndarray):
    if m.shape != (rho.dim, rho.dim):
        raise DimensionError(f"operator of shape {m.shape} on a dimension-{rho.dim} density matrix")


def expectation(rho: DensityMatrix, A: Observable | np.ndarray) -> float:
    m = A.matrix if isinstance(A, Observable) else np.asarray(A, dtype=complex)
    _check_dim(rho, m)
    value = np.trace(rho.matrix @ m)
    if abs(value.imag) > 1e-8:
        raise ValueError("expectation of a non-hermitian operator")
    return float(value.real)


def outcome_probability(rho: DensityMatrix, P: np.ndarray) -> float:
    """Born probability ``Tr(rho P)``, clamped into ``[0, 1]``."""
    P = np.asarray(P, dtype=complex)
    _check_dim(rho, P)
    if not is_projector(P, 1e-9):
        raise ValueError("outcome_probability expects an orthogonal projector")
    p = float(np.real(np.trace(rho.matrix @ P)))
    return min(1.0, max(0.0, p))


def purity(rho: DensityMatrix) -> float:
    # Tr(rho^2) = sum |rho_ij|^2 for hermitian rho
    return float(np.sum(np.abs(rho.matrix) ** 2))


def _basis_matrix(basis: Sequence[StateVector], dim: int) -> np.ndarray:
    if len(basis) != dim:
        raise ValueError(f"basis has {len(basis)} vectors, space has dimension {dim}")
    B = np.column_stack([b.amplitudes for b in basis])
    if not np.allclose(B.conj().T @ B, np.eye(dim), atol=EPS_NORM):
        raise ValueError("basis is not orthonormal")
    return B


def in_basis(rho: DensityMatrix, basis: Sequence[StateVector]) -> np.ndarray:
    """Matrix elements ``<b_i|rho|b_j>``."""
    B = _basis_matrix(basis, rho.dim)
    return B.conj().T @ rho.matrix @ B


def off_diagonal_weight(rho: DensityMatrix, basis: Sequence[StateVector]) -> float:
    """Sum of ``|<b_i|rho|b_j>|`` over ``i != j``."""
    m = in_basis(rho, basis)
    return float(np.sum(np.abs(m)) - np.sum(np.abs(np.diagonal(m))))


def joint_prediction_gap(global_rho: DensityMatrix, mixture: MixtureSpec, joint: np.ndarray) -> tuple[float, float]:
    """Probability of ``joint`` under the entangled state and under the mixture.

    Different values show that the mixture cannot stand in for the entangled
    state even when it reproduces the reduced statistics.
    """
    mixed = from_mixture(mixture)
    if mixed.dim != global_rho.dim:
        raise DimensionError("global state and mixture live on different spaces")
    return outcome_probability(global_rho, joint), outcome_probability(mixed, joint)


def evolve(rho: DensityMatrix, U: np.ndarray) -> DensityMatrix:
    """Unitary conjugation ``U rho U^dagger``."""
    U = np.asarray(U, dtype=complex)
    _check_dim(rho, U)
    if not is_unitary(U):
        raise ValueError("evolve expects a unitary matrix")
    return DensityMatrix(rho.space, U @ rho.matrix @ U.conj().T, rho.provenance)


def is_pure(rho: DensityMatrix, tol: float = EPS_NUM) -> bool:
    return abs(purity(rho) - 1) <= tol
