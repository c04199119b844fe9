"""Finite-dimensional state spaces, state vectors and observables.

Basis ordering is lexicographic over factor indices with factor 0 varying
slowest, which is what ``numpy.kron`` produces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

EPS_NUM = 1e-10
EPS_NORM = 1e-9

ROLES = ("System", "Apparatus", "Environment", "Brain")


class DimensionError(ValueError):
    """Raised when operands live on incompatible spaces."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Factor:
    role: str
    dim: int
    label: str = ""

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown factor role {self.role!r}; expected one of {ROLES}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"factor dimension must be a positive integer, got {self.dim!r}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.role, self.label)

    def __str__(self):
        return f"{self.role}[{self.label}]({self.dim})" if self.label else f"{self.role}({self.dim})"


@dataclass(frozen=True)
class CompositeSpace:
    """Ordered tensor product of labelled factors."""

    factors: tuple[Factor, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("a composite space needs at least one factor")
        keys = [f.key for f in self.factors]
        if len(set(keys)) != len(keys):
            raise ValueError(f"duplicate (role, label) factors in {keys}")

    @classmethod
    def of(cls, *dims: int, role: str = "System") -> "CompositeSpace":
        """Anonymous space ``role[0] x role[1] x ...`` with the given dimensions."""
        return cls(tuple(Factor(role, d, str(i)) for i, d in enumerate(dims)))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def __len__(self):
        return len(self.factors)

    def __add__(self, other: "CompositeSpace") -> "CompositeSpace":
        return CompositeSpace(self.factors + other.factors)

    def index(self, role: str, label: str = "") -> int:
        for i, f in enumerate(self.factors):
            if f.role == role and f.label == label:
                return i
        raise KeyError(f"no factor {role}[{label}] in {self}")

    def indices(self, role: str) -> list[int]:
        return [i for i, f in enumerate(self.factors) if f.role == role]

    def subspace(self, keep: Iterable[int]) -> "CompositeSpace":
        return CompositeSpace(tuple(self.factors[i] for i in sorted(keep)))

    def __str__(self):
        return " ⊗ ".join(str(f) for f in self.factors)


def qubit_space(n: int = 1) -> CompositeSpace:
    return CompositeSpace.of(*([2] * n))


@dataclass(frozen=True, eq=False)
class StateVector:
    """Complex amplitude vector over a :class:`CompositeSpace`.

    Instances are immutable; arithmetic returns new vectors. Normalization
    is not enforced here because intermediate sums (e.g. ``a - b`` before
    rescaling) are legitimately unnormalized.
    """

    space: CompositeSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.space.dim:
            raise DimensionError(
                f"{amps.shape[0]} amplitudes for a space of dimension {self.space.dim}"
            )
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def from_amplitudes(cls, amplitudes, space: CompositeSpace | None = None) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(space if space is not None else CompositeSpace.of(amps.shape[0]), amps)

    @classmethod
    def basis(cls, space: CompositeSpace, *index: int) -> "StateVector":
        """Computational basis vector; ``index`` gives one digit per factor."""
        if len(index) == 1 and len(space) > 1:
            flat = index[0]
        else:
            flat = int(np.ravel_multi_index(index, space.dims))
        amps = np.zeros(space.dim, dtype=complex)
        amps[flat] = 1.0
        return cls(space, amps)

    @property
    def dim(self) -> int:
        return self.space.dim

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def is_normalized(self, tol: float = EPS_NORM) -> bool:
        return abs(self.norm() ** 2 - 1.0) <= tol

    def normalized(self) -> "StateVector":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.space, self.amplitudes / n)

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per factor."""
        return self.amplitudes.reshape(self.space.dims)

    def with_space(self, space: CompositeSpace) -> "StateVector":
        return StateVector(space, self.amplitudes)

    def _check(self, other: "StateVector"):
        if self.space.dims != other.space.dims:
            raise DimensionError(f"space mismatch: {self.space} vs {other.space}")

    def __add__(self, other: "StateVector") -> "StateVector":
        self._check(other)
        return StateVector(self.space, self.amplitudes + other.amplitudes)

    def __sub__(self, other: "StateVector") -> "StateVector":
        self._check(other)
        return StateVector(self.space, self.amplitudes - other.amplitudes)

    def __mul__(self, scalar: complex) -> "StateVector":
        return StateVector(self.space, complex(scalar) * self.amplitudes)

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> "StateVector":
        return StateVector(self.space, self.amplitudes / complex(scalar))

    def __neg__(self) -> "StateVector":
        return StateVector(self.space, -self.amplitudes)

    def __matmul__(self, other: "StateVector") -> "StateVector":
        return tensor(self, other)

    def allclose(self, other: "StateVector", atol: float = EPS_NUM) -> bool:
        return self.space.dims == other.space.dims and bool(
            np.allclose(self.amplitudes, other.amplitudes, rtol=0, atol=atol)
        )

    def __repr__(self):
        return f"StateVector({self.space}, {np.array2string(self.amplitudes, precision=4)})"


def tensor(a: StateVector, b: StateVector, *more: StateVector) -> StateVector:
    """Tensor product; the result space concatenates the factor lists."""
    out = StateVector(a.space + b.space, np.kron(a.amplitudes, b.amplitudes))
    for c in more:
        out = tensor(out, c)
    return out


def inner(a: StateVector, b: StateVector) -> complex:
    """``<a|b>``, antilinear in ``a``."""
    if a.dim != b.dim:
        raise DimensionError(f"inner product of dimension {a.dim} and {b.dim} vectors")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def _matrix_of(op) -> np.ndarray:
    return op.matrix if isinstance(op, Observable) else np.asarray(op, dtype=complex)


def apply(op, s: StateVector) -> StateVector:
    """Matrix-vector action of an observable or plain (e.g. unitary) matrix."""
    m = _matrix_of(op)
    if m.shape != (s.dim, s.dim):
        raise DimensionError(f"operator of shape {m.shape} applied to a dimension-{s.dim} state")
    return StateVector(s.space, m @ s.amplitudes)


def outer(a: StateVector, b: StateVector) -> np.ndarray:
    """``|a><b|``."""
    return np.outer(a.amplitudes, b.amplitudes.conj())


def projector_onto(s: StateVector) -> np.ndarray:
    n = s.norm()
    if n == 0:
        raise ValueError("projector onto the zero vector")
    if abs(n**2 - 1) > EPS_NORM:
        raise ValueError(f"projector_onto expects a normalized state (norm {n:.3g})")
    return outer(s, s)


def kron(*mats) -> np.ndarray:
    return reduce(np.kron, [np.asarray(m, dtype=complex) for m in mats])


def embed(op, factor: int, space: CompositeSpace) -> np.ndarray:
    """Lift a single-factor operator to ``space`` (identity elsewhere)."""
    m = _matrix_of(op)
    if m.shape[0] != space.dims[factor]:
        raise DimensionError(f"operator of dim {m.shape[0]} on factor of dim {space.dims[factor]}")
    mats = [m if i == factor else np.eye(d) for i, d in enumerate(space.dims)]
    return kron(*mats)


def is_hermitian(m: np.ndarray, tol: float = EPS_NUM) -> bool:
    return m.shape[0] == m.shape[1] and float(np.max(np.abs(m - m.conj().T), initial=0.0)) <= tol


def is_unitary(m: np.ndarray, tol: float = EPS_NUM) -> bool:
    m = np.asarray(m, dtype=complex)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.allclose(
        m.conj().T @ m, np.eye(m.shape[0]), rtol=0, atol=tol
    )


def is_projector(p: np.ndarray, tol: float = EPS_NUM) -> bool:
    p = np.asarray(p, dtype=complex)
    return is_hermitian(p, tol) and np.allclose(p @ p, p, rtol=0, atol=tol)


def default_labels(eigenvalues: Sequence[float]) -> tuple[str, ...]:
    """``"+"``/``"-"`` for a two-outcome observable with eigenvalues of opposite sign,
    otherwise the eigenvalue printed with an explicit sign."""
    if len(eigenvalues) == 2 and eigenvalues[0] > 0 > eigenvalues[1]:
        return ("+", "-")
    if len(eigenvalues) == 2 and eigenvalues[1] > 0 > eigenvalues[0]:
        return ("-", "+")
    return tuple(f"{v:+g}" for v in eigenvalues)


@dataclass(frozen=True, eq=False)
class Observable:
    """Hermitian operator carried together with its spectral decomposition.

    ``spectrum`` is a tuple of ``(eigenvalue, projector)`` pairs, one per
    distinct eigenvalue, ordered by decreasing eigenvalue. ``labels`` names
    the outcomes in the same order.
    """

    matrix: np.ndarray
    spectrum: tuple[tuple[float, np.ndarray], ...]
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        m = _frozen(np.array(self.matrix, dtype=complex))
        object.__setattr__(self, "matrix", m)
        if not is_hermitian(m):
            raise ValueError("observable matrix is not hermitian")
        spectrum = tuple((float(v), _frozen(np.array(p, dtype=complex))) for v, p in self.spectrum)
        object.__setattr__(self, "spectrum", spectrum)
        total = np.zeros_like(m)
        recon = np.zeros_like(m)
        for i, (v, p) in enumerate(spectrum):
            if not is_projector(p, 1e-9):
                raise ValueError(f"spectral entry {i} is not an orthogonal projector")
            for _, q in spectrum[i + 1 :]:
                if not np.allclose(p @ q, 0, atol=1e-9):
                    raise ValueError("spectral projectors are not mutually orthogonal")
            total = total + p
            recon = recon + v * p
        if not np.allclose(total, np.eye(m.shape[0]), atol=1e-9):
            raise ValueError("spectral projectors do not sum to identity")
        if not np.allclose(recon, m, atol=1e-9):
            raise ValueError("spectral data does not reproduce the matrix")
        labels = tuple(self.labels) or default_labels([v for v, _ in spectrum])
        if len(labels) != len(spectrum) or len(set(labels)) != len(labels):
            raise ValueError(f"need {len(spectrum)} distinct outcome labels, got {labels}")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_spectrum(cls, pairs, labels: Sequence[str] = ()) -> "Observable":
        pairs = sorted(((float(v), np.asarray(p, dtype=complex)) for v, p in pairs), key=lambda vp: -vp[0])
        matrix = sum(v * p for v, p in pairs)
        return cls(matrix, tuple(pairs), tuple(labels))

    @classmethod
    def from_eigenbasis(cls, eigenvalues: Sequence[float], vectors: Sequence, labels: Sequence[str] = ()) -> "Observable":
        """Build from eigenvalues and an orthonormal list of eigenvectors.

        Equal eigenvalues are merged into one projector. Labels, if given,
        follow the order of the merged (descending) eigenvalues.
        """
        groups: dict[float, np.ndarray] = {}
        for v, vec in zip(eigenvalues, vectors):
            amps = vec.amplitudes if isinstance(vec, StateVector) else np.asarray(vec, dtype=complex)
            key = next((k for k in groups if abs(k - v) <= EPS_NUM), float(v))
            groups[key] = groups.get(key, 0) + np.outer(amps, amps.conj())
        return cls.from_spectrum(groups.items(), labels)

    @classmethod
    def from_matrix(cls, matrix, labels: Sequence[str] = (), tol: float = 1e-8) -> "Observable":
        """Diagonalize a hermitian matrix with ``numpy.linalg.eigh``."""
        m = np.asarray(matrix, dtype=complex)
        if not is_hermitian(m):
            raise ValueError("matrix is not hermitian")
        w, v = np.linalg.eigh(m)
        groups: list[tuple[float, np.ndarray]] = []
        for val, vec in zip(w, v.T):
            if groups and abs(groups[-1][0] - val) <= tol:
                v0, p = groups[-1]
                groups[-1] = (v0, p + np.outer(vec, vec.conj()))
            else:
                groups.append((float(val), np.outer(vec, vec.conj())))
        return cls(m, tuple(sorted(groups, key=lambda vp: -vp[0])), tuple(labels))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def eigenvalues(self) -> tuple[float, ...]:
        return tuple(v for v, _ in self.spectrum)

    @property
    def projectors(self) -> tuple[np.ndarray, ...]:
        return tuple(p for _, p in self.spectrum)

    def projector(self, label: str) -> np.ndarray:
        return self.spectrum[self.labels.index(label)][1]

    def __repr__(self):
        return f"Observable(dim={self.dim}, eigenvalues={self.eigenvalues}, labels={self.labels})"


SIGMA_X = _frozen(np.array([[0, 1], [1, 0]], dtype=complex))
SIGMA_Y = _frozen(np.array([[0, -1j], [1j, 0]], dtype=complex))
SIGMA_Z = _frozen(np.array([[1, 0], [0, -1]], dtype=complex))
IDENTITY_2 = _frozen(np.eye(2, dtype=complex))
PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


def _leading_positive(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > EPS_NUM)
    return v * (abs(v[nz[0]]) / v[nz[0]]) if nz.size else v


def rotated_spin_basis(angle: float, space: CompositeSpace | None = None) -> tuple[StateVector, StateVector]:
    """Spin-1/2 basis ``(|+>, |->)`` for an axis tilted by ``angle`` in the Oxz plane.

    The amplitude pattern is ``|+> = cos(a)|+z> + sin(a)|-z>`` with ``|->``
    its real orthogonal complement, phased so its first nonzero amplitude is
    positive. With this convention ``angle = pi/3`` gives the u axis
    ``(1/2, sqrt(3)/2)``, ``-pi/3`` the v axis and ``pi/4`` the x axis.
    The physical Bloch-sphere tilt is twice ``angle``.
    """
    space = space or qubit_space(1)
    c, s = math.cos(angle), math.sin(angle)
    plus = np.array([c, s], dtype=complex)
    minus = _leading_positive(np.array([-s, c], dtype=complex))
    return StateVector(space, plus), StateVector(space, minus)


AXIS_ANGLES = {"z": 0.0, "x": math.pi / 4, "u": math.pi / 3, "v": -math.pi / 3}


def spin_basis(axis: str | float) -> tuple[StateVector, StateVector]:
    """``(|+>, |->)`` along a named axis (``z``, ``x``, ``y``, ``u``, ``v``) or angle."""
    if axis == "y":
        r = 1 / math.sqrt(2)
        return (StateVector.from_amplitudes([r, 1j * r]), StateVector.from_amplitudes([r, -1j * r]))
    angle = AXIS_ANGLES[axis] if isinstance(axis, str) else float(axis)
    return rotated_spin_basis(angle)


def spin_observable(axis: str | float) -> Observable:
    """Pauli-normalized spin observable (eigenvalues +1/-1) along ``axis``."""
    plus, minus = spin_basis(axis)
    return Observable.from_eigenbasis([1.0, -1.0], [plus, minus], labels=("+", "-"))


def ket(label: str) -> StateVector:
    """Single-qubit shorthand: ``ket("+z")``, ``ket("-x")``, ``ket("+u")``..."""
    sign, axis = label[0], label[1:]
    plus, minus = spin_basis(axis)
    return plus if sign == "+" else minus


def random_state(dim_or_space, rng: np.random.Generator) -> StateVector:
    """Haar-random normalized state."""
    space = dim_or_space if isinstance(dim_or_space, CompositeSpace) else CompositeSpace.of(int(dim_or_space))
    z = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
    return StateVector(space, z / np.linalg.norm(z))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR with phase correction."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (z + z.conj().T) / 2
