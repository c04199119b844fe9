"""Premeasurement, projective reduction, environment-induced decoherence and
pointer-basis selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .density import REDUCED, DensityMatrix
from .hilbert import (
    EPS_NORM,
    EPS_NUM,
    CompositeSpace,
    DimensionError,
    Factor,
    Observable,
    StateVector,
    is_hermitian,
    ket,
    kron,
    random_hermitian,
    tensor,
)


class NotReadyError(ValueError):
    """A record factor is not in its ready state before premeasurement."""


class ZeroProbabilityError(ValueError):
    """Projection onto an outcome that has zero Born weight."""


class NoPointerBasisError(LookupError):
    """No candidate observable commutes with the interaction Hamiltonian."""


def _amps(v) -> np.ndarray:
    a = v.amplitudes if isinstance(v, StateVector) else np.asarray(v, dtype=complex)
    return np.asarray(a, dtype=complex).reshape(-1)


@dataclass(frozen=True, eq=False)
class Record:
    """A factor that stores the outcome: pointer state ``k`` for outcome ``k``.

    Pointer states need only be normalized; orthogonality is what makes the
    record readable, and is checked by the caller where it matters.
    """

    factor: int
    pointers: tuple[np.ndarray, ...]
    ready: np.ndarray

    def __post_init__(self):
        pointers = tuple(_amps(p) for p in self.pointers)
        object.__setattr__(self, "pointers", pointers)
        object.__setattr__(self, "ready", _amps(self.ready))
        for p in pointers + (self.ready,):
            if abs(np.vdot(p, p).real - 1) > EPS_NORM:
                raise ValueError(f"record state on factor {self.factor} is not normalized")

    def gram(self) -> np.ndarray:
        P = np.column_stack(self.pointers)
        return P.conj().T @ P


def _orthonormal(vectors: Sequence[np.ndarray]) -> bool:
    P = np.column_stack(vectors)
    return np.allclose(P.conj().T @ P, np.eye(P.shape[1]), atol=EPS_NORM)


def computational_pointers(dim: int, n: int) -> tuple[np.ndarray, ...]:
    """``n`` computational basis vectors of a ``dim``-level factor."""
    if n > dim:
        raise ValueError(f"{n} pointer states do not fit in dimension {dim}")
    return tuple(np.eye(dim, dtype=complex)[k] for k in range(n))


@dataclass(frozen=True, eq=False)
class MeasurementSpec:
    """Which factor is measured, by which observable, and where outcomes are recorded.

    The apparatus pointer states must be orthonormal. Environment pointer
    states may overlap (that overlap is the decoherence factor). Any further
    records, such as observers' brain factors, go in ``extra_records`` and
    must be orthonormal too. Ready states default to basis vector 0.
    """

    target: int
    observable: Observable
    apparatus: int | None
    apparatus_pointers: tuple = ()
    environment: int | None = None
    environment_pointers: tuple = ()
    extra_records: tuple[Record, ...] = ()
    apparatus_ready: np.ndarray | None = None
    environment_ready: np.ndarray | None = None

    @property
    def n_outcomes(self) -> int:
        return len(self.observable.spectrum)

    @property
    def records(self) -> tuple[Record, ...]:
        out = []
        if self.apparatus is not None:
            ptrs = tuple(_amps(p) for p in self.apparatus_pointers)
            ready = self.apparatus_ready if self.apparatus_ready is not None else np.eye(len(ptrs[0]))[0]
            out.append(Record(self.apparatus, ptrs, ready))
        if self.environment is not None:
            ptrs = tuple(_amps(p) for p in self.environment_pointers)
            ready = self.environment_ready if self.environment_ready is not None else np.eye(len(ptrs[0]))[0]
            out.append(Record(self.environment, ptrs, ready))
        return tuple(out) + tuple(self.extra_records)

    def validate(self, space: CompositeSpace) -> tuple[Record, ...]:
        n = len(space)
        records = self.records
        if not records:
            raise ValueError("a measurement needs at least one record factor")
        if not 0 <= self.target < n:
            raise IndexError(f"target factor {self.target} out of range")
        if self.observable.dim != space.dims[self.target]:
            raise DimensionError(
                f"observable of dim {self.observable.dim} on factor of dim {space.dims[self.target]}"
            )
        seen = {self.target}
        for r in records:
            if not 0 <= r.factor < n:
                raise IndexError(f"record factor {r.factor} out of range")
            if r.factor in seen:
                raise ValueError(f"factor {r.factor} used twice in one measurement")
            seen.add(r.factor)
            if len(r.pointers) != self.n_outcomes:
                raise ValueError(
                    f"{len(r.pointers)} pointer states for {self.n_outcomes} eigenvalues on factor {r.factor}"
                )
            if any(p.shape[0] != space.dims[r.factor] for p in r.pointers + (r.ready,)):
                raise DimensionError(f"pointer state dimension mismatch on factor {r.factor}")
        if self.apparatus is not None and not _orthonormal(records[0].pointers):
            raise ValueError("apparatus pointer states must be orthonormal")
        for r in self.extra_records:
            if not _orthonormal(r.pointers):
                raise ValueError(f"record pointer states on factor {r.factor} must be orthonormal")
        return records


def _split_axes(space: CompositeSpace, records: Sequence[Record]):
    rec_axes = [r.factor for r in records]
    rest_axes = [i for i in range(len(space)) if i not in rec_axes]
    return rest_axes, rec_axes


def _ready_component(state: StateVector, spec: MeasurementSpec):
    records = spec.validate(state.space)
    rest_axes, rec_axes = _split_axes(state.space, records)
    dims = state.space.dims
    rest_dims = [dims[i] for i in rest_axes]
    M = np.transpose(state.tensor(), rest_axes + rec_axes).reshape(math.prod(rest_dims), -1)
    ready = kron(*[r.ready for r in records]).reshape(-1)
    chi = M @ ready.conj()
    residual = np.linalg.norm(M - np.outer(chi, ready))
    if residual > math.sqrt(EPS_NORM):
        raise NotReadyError(f"record factors {rec_axes} are not in their ready state (residual {residual:.3g})")
    return records, rest_axes, rec_axes, rest_dims, chi.reshape(rest_dims)


def premeasure_components(state: StateVector, spec: MeasurementSpec) -> list[StateVector]:
    """Per-outcome terms ``c_k |phi_k>|R_k>`` of the premeasured state, one per
    eigenvalue of the observable (in spectral order). Terms are unnormalized
    and sum to :func:`premeasure`."""
    records, rest_axes, rec_axes, rest_dims, chi = _ready_component(state, spec)
    t_pos = rest_axes.index(spec.target)
    inverse = np.argsort(rest_axes + rec_axes)
    rec_dims = [state.space.dims[i] for i in rec_axes]
    out = []
    for k, P in enumerate(spec.observable.projectors):
        part = np.moveaxis(np.tensordot(P, chi, axes=([1], [t_pos])), 0, t_pos).reshape(-1)
        rec = kron(*[r.pointers[k] for r in records]).reshape(-1)
        full = np.outer(part, rec).reshape(rest_dims + rec_dims)
        out.append(StateVector(state.space, np.transpose(full, inverse).reshape(-1)))
    return out


def premeasure(state: StateVector, spec: MeasurementSpec) -> StateVector:
    """``sum_i c_i |phi_i>|R_0> -> sum_i c_i |phi_i>|R_i>`` on every record factor."""
    terms = premeasure_components(state, spec)
    return StateVector(state.space, sum(t.amplitudes for t in terms))


def premeasurement_unitary(space: CompositeSpace, spec: MeasurementSpec) -> np.ndarray:
    """Full unitary whose action on the ready slice is :func:`premeasure`.

    Off the ready slice the map is the unitary between the two orthogonal
    complements that lies closest to the identity (polar factor).
    """
    records = spec.validate(space)
    rest_axes, rec_axes = _split_axes(space, records)
    dims = space.dims
    n_rest = math.prod(dims[i] for i in rest_axes)
    ready = kron(*[r.ready for r in records]).reshape(-1)
    inverse = np.argsort(rest_axes + rec_axes)
    shape = [dims[i] for i in rest_axes] + [dims[i] for i in rec_axes]
    cols = []
    for j in range(n_rest):
        e = np.zeros(n_rest, dtype=complex)
        e[j] = 1
        cols.append(np.transpose(np.outer(e, ready).reshape(shape), inverse).reshape(-1))
    R = np.column_stack(cols)
    image = np.column_stack([premeasure(StateVector(space, c), spec).amplitudes for c in cols])
    U = image @ R.conj().T
    if R.shape[1] < space.dim:
        r_perp = scipy.linalg.null_space(R.conj().T)
        i_perp = scipy.linalg.null_space(image.conj().T)
        w, _ = scipy.linalg.polar(i_perp.conj().T @ r_perp)
        U = U + i_perp @ w @ r_perp.conj().T
    return U


def reduce(state: StateVector, P) -> StateVector:
    """Projective update ``P|psi> / ||P|psi>||``."""
    m = P.matrix if isinstance(P, Observable) else np.asarray(P, dtype=complex)
    if m.shape != (state.dim, state.dim):
        raise DimensionError(f"projector of shape {m.shape} on a dimension-{state.dim} state")
    projected = m @ state.amplitudes
    weight = float(np.vdot(projected, projected).real)
    if weight <= 1e-15:
        raise ZeroProbabilityError("outcome has zero probability in this state")
    return StateVector(state.space, projected / math.sqrt(weight))


# --------------------------------------------------------------------------- environment


@dataclass(frozen=True)
class EnvironmentModel:
    """Source of environment pointer states ``|E_k(t)>`` and the overlap ``Z(t)``.

    ``parametric``: ``Z(t) = exp(-t / tau)``; pointer states are built with
    exactly that pairwise overlap.

    ``finite``: a ``dim``-level environment coupled to the pointer through
    ``H = S (x) B`` with a seeded random hermitian ``B``. The environment in
    branch ``k`` evolves under ``exp(-i g_k B t)`` where ``g_k`` is the
    pointer eigenvalue, starting from an unbiased superposition of ``B``'s
    eigenvectors. ``Z(t)`` is then an average of phases and recurs for
    small ``dim``.
    """

    mode: str = "parametric"
    tau: float = 1.0
    dim: int = 8
    seed: int = 0
    _bath: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in ("parametric", "finite"):
            raise ValueError(f"unknown environment mode {self.mode!r}")
        if self.mode == "parametric" and not self.tau > 0:
            raise ValueError("decay time must be positive")
        if self.mode == "finite":
            if self.dim < 2:
                raise ValueError("finite environment needs dimension >= 2")
            rng = np.random.default_rng(self.seed)
            B = random_hermitian(self.dim, rng)
            evals, evecs = np.linalg.eigh(B)
            phases = np.exp(2j * np.pi * rng.random(self.dim))
            e0 = evecs @ (phases / math.sqrt(self.dim))
            object.__setattr__(self, "_bath", (evals, evecs, e0))

    @classmethod
    def parametric(cls, tau: float = 1.0) -> "EnvironmentModel":
        return cls("parametric", tau=tau)

    @classmethod
    def finite(cls, dim: int = 8, seed: int = 0) -> "EnvironmentModel":
        return cls("finite", dim=dim, seed=seed)

    @staticmethod
    def couplings(n: int) -> np.ndarray:
        """Spin-like pointer eigenvalues ``n-1, n-3, ..., 1-n``."""
        return np.arange(n - 1, -n, -2, dtype=float)

    def ready_state(self, n_outcomes: int = 2) -> np.ndarray:
        if self.mode == "finite":
            return self._bath[2].copy()
        return np.eye(n_outcomes, dtype=complex)[0]

    def pointer_states(self, t: float, n_outcomes: int = 2) -> tuple[np.ndarray, ...]:
        if t < 0:
            raise ValueError("time must be nonnegative")
        if self.mode == "finite":
            evals, evecs, e0 = self._bath
            c = evecs.conj().T @ e0
            return tuple(evecs @ (np.exp(-1j * g * evals * t) * c) for g in self.couplings(n_outcomes))
        z = self.Z(t)
        n = n_outcomes
        if z >= 1.0:
            return tuple(np.eye(n, dtype=complex)[0] for _ in range(n))
        gram = (1 - z) * np.eye(n) + z * np.ones((n, n))
        L = np.linalg.cholesky(gram)
        return tuple(L[k].astype(complex) for k in range(n))

    def env_dim(self, n_outcomes: int = 2) -> int:
        return self.dim if self.mode == "finite" else n_outcomes

    def Z(self, t: float) -> complex | float:
        """``<E_2(t)|E_1(t)>`` for a two-outcome pointer."""
        if self.mode == "parametric":
            return math.exp(-t / self.tau) if math.isfinite(t) else 0.0
        e1, e2 = self.pointer_states(t, 2)
        return complex(np.vdot(e2, e1))


def decohered_reduced_matrix(amplitudes: tuple[complex, complex], env: EnvironmentModel, t: float) -> DensityMatrix:
    """System+apparatus matrix in the pointer basis after tracing the environment:
    ``[[|a|^2, Z a b*], [conj(Z) a* b, |b|^2]]``."""
    a, b = (complex(x) for x in amplitudes)
    if abs(abs(a) ** 2 + abs(b) ** 2 - 1) > EPS_NORM:
        raise ValueError("amplitudes must satisfy |a|^2 + |b|^2 = 1")
    z = complex(env.Z(t))
    m = np.array([[abs(a) ** 2, z * a * b.conjugate()], [(z * a * b.conjugate()).conjugate(), abs(b) ** 2]])
    space = CompositeSpace((Factor("System", 2, "pointer-branch"),))
    return DensityMatrix(space, m, REDUCED)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def pointer_basis(H_int: np.ndarray, candidates: Sequence[Observable], tol: float = EPS_NUM) -> Observable:
    """First candidate apparatus observable ``O`` with ``[O (x) 1_env, H_int] = 0``.

    Commutator size is the largest absolute entry.
    """
    H = np.asarray(H_int, dtype=complex)
    if not candidates:
        raise ValueError("no candidate observables given")
    if not is_hermitian(H):
        raise ValueError("interaction Hamiltonian must be hermitian")
    for O in candidates:
        if H.shape[0] % O.dim:
            raise DimensionError(f"apparatus dim {O.dim} does not divide {H.shape[0]}")
        lifted = np.kron(O.matrix, np.eye(H.shape[0] // O.dim))
        if np.max(np.abs(commutator(lifted, H)), initial=0.0) <= tol:
            return O
    raise NoPointerBasisError("no candidate commutes with the interaction Hamiltonian")


# --------------------------------------------------------------------------- basis ambiguity


def _sa_space() -> CompositeSpace:
    return CompositeSpace((Factor("System", 2), Factor("Apparatus", 2)))


def spin_apparatus_spec() -> MeasurementSpec:
    """Spin-z measured by a two-pointer apparatus (``|up>``, ``|down>``) on factor 1."""
    from .hilbert import spin_observable

    return MeasurementSpec(0, spin_observable("z"), 1, computational_pointers(2, 2))


UP = StateVector(CompositeSpace((Factor("Apparatus", 2),)), [1, 0])
DOWN = StateVector(CompositeSpace((Factor("Apparatus", 2),)), [0, 1])
UP_TILDE = (UP + DOWN) / math.sqrt(2)
DOWN_TILDE = (UP - DOWN) / math.sqrt(2)


@dataclass(frozen=True, eq=False)
class AmbiguityReport:
    """How a premeasured spin-apparatus state decomposes in the z and x system bases.

    ``x_terms`` lists ``(x_label, coefficient, apparatus_state)``, where each
    apparatus state is the normalized relative state for that x outcome,
    replaced by the matching superposed pointer when it is one.
    """

    alpha: complex
    beta: complex
    state: StateVector
    schmidt_coefficients: tuple[float, float]
    single_branch: bool
    unique_schmidt_basis: bool
    x_terms: tuple[tuple[str, complex, StateVector], ...]
    x_rewriting_biorthogonal: bool
    rewritten: StateVector
    deviation: float

    @property
    def ambiguous(self) -> bool:
        return not self.single_branch and self.x_rewriting_biorthogonal


def basis_ambiguity_check(alpha: complex, beta: complex) -> AmbiguityReport:
    """Premeasure ``alpha|+z> + beta|-z>`` and try to rewrite the result in the x basis.

    With ``|alpha| = |beta|`` the relative apparatus states for ``|+x>`` and
    ``|-x>`` are orthogonal, so the same vector reads as an x measurement
    with superposed pointers. Otherwise the Schmidt basis is unique and the
    x rewriting is not biorthogonal.
    """
    alpha, beta = complex(alpha), complex(beta)
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1) > EPS_NORM:
        raise ValueError("amplitudes must satisfy |alpha|^2 + |beta|^2 = 1")
    space = _sa_space()
    system = (alpha * ket("+z") + beta * ket("-z")).with_space(CompositeSpace((space.factors[0],)))
    ready = UP.with_space(CompositeSpace((space.factors[1],)))
    state = premeasure(tensor(system, ready), spin_apparatus_spec())

    coeffs = state.amplitudes.reshape(2, 2)
    s = np.linalg.svd(coeffs, compute_uv=False)
    single = min(abs(alpha), abs(beta)) <= EPS_NUM
    unique = abs(s[0] - s[1]) > math.sqrt(EPS_NUM)

    terms = []
    relative = []
    for label in ("+x", "-x"):
        rel = ket(label).amplitudes.conj() @ coeffs
        relative.append(rel)
        weight = float(np.linalg.norm(rel))
        if weight <= EPS_NUM:
            continue
        app = StateVector(UP.space, rel / weight)
        coeff: complex = weight
        for named in (UP_TILDE, DOWN_TILDE, UP, DOWN):
            overlap = np.vdot(named.amplitudes, app.amplitudes)
            if abs(abs(overlap) - 1) <= EPS_NUM:
                app, coeff = named, weight * overlap
                break
        terms.append((label, complex(coeff), app))
    biorth = abs(np.vdot(relative[0], relative[1])) <= EPS_NUM

    rewritten = np.zeros(4, dtype=complex)
    for label, coeff, app in terms:
        rewritten += coeff * np.kron(ket(label).amplitudes, app.amplitudes)
    rewritten_sv = StateVector(space, rewritten)
    deviation = float(np.max(np.abs(rewritten - state.amplitudes)))
    return AmbiguityReport(
        alpha, beta, state, (float(s[0]), float(s[1])), single, unique,
        tuple(terms), bool(biorth), rewritten_sv, deviation,
    )
