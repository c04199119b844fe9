"""Observer-relative branch selection over a never-reduced universal state.

The universal state is a :class:`BranchedState`: a superposition of
orthogonal branches, each labelled by the outcomes of every measurement
event so far. Measurements only ever *add* branches (:func:`split`).
An :class:`Observer` owns an awareness record, the ordered list of
``(event, outcome)`` marks it has hung up to, and a private random stream.
Hanging up samples an outcome among the branches compatible with the
awareness record, with Born weights, and leaves the state untouched.

Looking at the branch list, or at another observer's awareness, is a view
from nowhere. Both are only available inside :func:`introspection`.
"""

from __future__ import annotations

import contextlib
import contextvars
import json
import math
import warnings
import zlib
from bisect import bisect_right
from dataclasses import dataclass, field
from itertools import accumulate
from typing import Iterable, Iterator, Sequence

import numpy as np

from .density import DensityMatrix, reduced_from_vector
from .hilbert import EPS_NORM, CompositeSpace, Factor, Observable, StateVector, kron
from .measurement import (
    EnvironmentModel,
    MeasurementSpec,
    Record,
    computational_pointers,
    premeasure,
    premeasure_components,
)

EPS_DIAG = 1e-8
PRUNE_WEIGHT = 1e-12

_INTROSPECTION = contextvars.ContextVar("qmeasure_introspection", default=False)


class IntrospectionDisabled(PermissionError):
    """God's-eye access attempted outside :func:`introspection`."""


class UnknownEventError(KeyError):
    pass


class AlreadyAwareError(ValueError):
    """The observer has already hung up on this event."""


class NotParticipantError(ValueError):
    """The queried observer did not take part in the event."""


class CorruptStateError(RuntimeError):
    """No branch is compatible with an observer's awareness."""


class InterferenceAccessible(UserWarning):
    """The reduced matrix keeps coherences between pointer outcomes."""


@contextlib.contextmanager
def introspection() -> Iterator[None]:
    """Enable god's-eye accessors (branch lists, awareness paths) for testing."""
    token = _INTROSPECTION.set(True)
    try:
        yield
    finally:
        _INTROSPECTION.reset(token)


def _require_introspection(what: str):
    if not _INTROSPECTION.get():
        raise IntrospectionDisabled(f"{what} is only available inside introspection()")


# --------------------------------------------------------------------------- events and branches


@dataclass(frozen=True, eq=False)
class Event:
    """A measurement to be added to the universal state by :func:`split`.

    ``target`` indexes a factor of the state being split. Fresh ancilla
    factors are appended: an apparatus (if ``apparatus``), an environment
    (if ``environment`` is given, with pointer states taken at
    ``env_time``) and one brain factor per observer id in ``observers``.
    ``source`` is set on readout events created by :func:`query`.
    """

    id: str
    target: int
    observable: Observable
    observers: tuple[str, ...] = ()
    apparatus: bool = True
    environment: EnvironmentModel | None = None
    env_time: float = math.inf
    source: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "observers", tuple(self.observers))
        if not self.apparatus and not self.observers:
            raise ValueError(f"event {self.id!r} records its outcome nowhere")
        if len(set(self.observers)) != len(self.observers):
            raise ValueError("duplicate observer ids in one event")

    @property
    def labels(self) -> tuple[str, ...]:
        return self.observable.labels


def brain_label(observer_id: str, event_id: str) -> str:
    return f"{observer_id}@{event_id}"


@dataclass(frozen=True, eq=False)
class Branch:
    path: tuple[tuple[str, str], ...]
    amplitude: complex
    component: StateVector

    @property
    def weight(self) -> float:
        return abs(self.amplitude) ** 2

    def label_at(self, event_id: str) -> str:
        for e, lab in self.path:
            if e == event_id:
                return lab
        raise UnknownEventError(event_id)


@dataclass(frozen=True, eq=False)
class BranchedState:
    """Immutable superposition of labelled branches.

    ``events`` and ``specs`` are the event log and the compiled measurement
    for each event, in order. Every branch path lists the events in that
    same order.
    """

    space: CompositeSpace
    _branches: tuple[Branch, ...]
    events: tuple[Event, ...] = ()
    specs: tuple[MeasurementSpec, ...] = ()
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        index = {e.id: i for i, e in enumerate(self.events)}
        if len(index) != len(self.events):
            raise ValueError("duplicate event ids")
        object.__setattr__(self, "_index", index)

    @classmethod
    def initial(cls, state: StateVector) -> "BranchedState":
        n = state.norm()
        if abs(n**2 - 1) > EPS_NORM:
            raise ValueError("the initial universal state must be normalized")
        return cls(state.space, (Branch((), complex(n), state / n),))

    @property
    def branches(self) -> tuple[Branch, ...]:
        _require_introspection("the branch list")
        return self._branches

    def event_index(self, event_id: str) -> int:
        try:
            return self._index[event_id]
        except KeyError:
            raise UnknownEventError(event_id) from None

    def has_event(self, event_id: str) -> bool:
        return event_id in self._index

    def event(self, event_id: str) -> Event:
        return self.events[self.event_index(event_id)]

    def spec(self, event_id: str) -> MeasurementSpec:
        return self.specs[self.event_index(event_id)]

    def global_vector(self) -> StateVector:
        amps = sum(b.amplitude * b.component.amplitudes for b in self._branches)
        return StateVector(self.space, amps)

    def total_weight(self) -> float:
        return float(sum(b.weight for b in self._branches))

    def serialize(self) -> str:
        """Canonical text form; branches sorted by path."""

        def cplx(z):
            return [float(np.real(z)), float(np.imag(z))]

        doc = {
            "space": [[f.role, f.dim, f.label] for f in self.space.factors],
            "events": [
                {
                    "id": e.id,
                    "target": e.target,
                    "labels": list(e.labels),
                    "observers": list(e.observers),
                    "source": e.source,
                }
                for e in self.events
            ],
            "branches": [
                {
                    "path": [list(p) for p in b.path],
                    "amplitude": cplx(b.amplitude),
                    "component": [cplx(z) for z in b.component.amplitudes],
                }
                for b in sorted(self._branches, key=lambda b: b.path)
            ],
        }
        return json.dumps(doc, separators=(",", ":"))


def _ancilla(event: Event, space: CompositeSpace):
    """Fresh factors, their records (indices in the extended space) and the joint ready vector."""
    n = len(event.observable.spectrum)
    base = len(space)
    factors, records = [], []
    if event.apparatus:
        factors.append(Factor("Apparatus", n, event.id))
        ptrs = computational_pointers(n, n)
        records.append(Record(base + len(records), ptrs, ptrs[0]))
    if event.environment is not None:
        env = event.environment
        factors.append(Factor("Environment", env.env_dim(n), event.id))
        records.append(Record(base + len(records), env.pointer_states(event.env_time, n), env.ready_state(n)))
    for obs in event.observers:
        factors.append(Factor("Brain", n, brain_label(obs, event.id)))
        ptrs = computational_pointers(n, n)
        records.append(Record(base + len(records), ptrs, ptrs[0]))
    return factors, records, kron(*[r.ready for r in records]).reshape(-1)


def _compile(event: Event, records: Sequence[Record]) -> MeasurementSpec:
    records = list(records)
    app = records.pop(0) if event.apparatus else None
    env = records.pop(0) if event.environment is not None else None
    return MeasurementSpec(
        event.target,
        event.observable,
        app.factor if app else None,
        app.pointers if app else (),
        env.factor if env else None,
        env.pointers if env else (),
        tuple(records),
        app.ready if app else None,
        env.ready if env else None,
    )


def split(state: BranchedState, event: Event) -> BranchedState:
    """Append ``event`` to the universal state; every leaf gets one child per outcome.

    Children whose Born weight is below ``PRUNE_WEIGHT`` are dropped. The
    unpruned sum of children is checked against premeasurement of the
    whole global vector.
    """
    if state.has_event(event.id):
        raise ValueError(f"event id {event.id!r} already used")
    if not 0 <= event.target < len(state.space):
        raise IndexError(f"event target {event.target} out of range")
    if state.space.factors[event.target].dim != event.observable.dim:
        raise ValueError("observable dimension does not match the target factor")
    factors, records, ready = _ancilla(event, state.space)
    new_space = state.space + CompositeSpace(tuple(factors))
    spec = _compile(event, records)

    children = []
    total = np.zeros(new_space.dim, dtype=complex)
    for b in state._branches:
        extended = StateVector(new_space, np.kron(b.component.amplitudes, ready))
        for label, term in zip(event.labels, premeasure_components(extended, spec)):
            total += b.amplitude * term.amplitudes
            norm = term.norm()
            if b.weight * norm**2 < PRUNE_WEIGHT:
                continue
            children.append(Branch(b.path + ((event.id, label),), b.amplitude * norm, term / norm))

    expected = premeasure(StateVector(new_space, np.kron(state.global_vector().amplitudes, ready)), spec)
    if not np.allclose(total, expected.amplitudes, atol=1e-9):
        raise RuntimeError("branch-wise split disagrees with premeasurement of the global vector")
    return BranchedState(new_space, tuple(children), state.events + (event,), state.specs + (spec,))


# --------------------------------------------------------------------------- observers


class _Stream:
    """Uniform draws from a precomputed row."""

    __slots__ = ("_u", "_i")

    def __init__(self, uniforms: list[float]):
        self._u = uniforms
        self._i = 0

    def random(self) -> float:
        v = self._u[self._i]
        self._i += 1
        return v


def _seed_sequence(seed: int, observer_id: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), zlib.crc32(observer_id.encode())])


class TrialStreams:
    """Per-trial substreams for one observer id.

    Row ``i`` of a block of uniforms drawn from ``(seed, observer_id)``
    serves trial ``i``. Rows do not depend on the number of trials, so a
    trial's draws are fixed by ``(seed, observer_id, i)``.
    """

    def __init__(self, seed: int, observer_id: str, trials: int, draws_per_trial: int = 4):
        rng = np.random.default_rng(_seed_sequence(seed, observer_id))
        self._rows = rng.random((trials, draws_per_trial)).tolist()

    def __len__(self):
        return len(self._rows)

    def __getitem__(self, i: int) -> _Stream:
        return _Stream(self._rows[i])


class Observer:
    """An observer: identity, awareness record and private random stream.

    ``rng`` is anything with a ``random()`` method returning floats in
    ``[0, 1)``; by default a numpy generator seeded from ``(seed, id)``.
    """

    __slots__ = ("id", "rng", "_awareness", "_sources")

    def __init__(self, id: str, seed: int = 0, rng=None):
        self.id = id
        self.rng = rng if rng is not None else np.random.default_rng(_seed_sequence(seed, id))
        self._awareness: list[tuple[str, str]] = []
        self._sources: dict[str, str] = {}

    def is_aware_of(self, event_id: str) -> bool:
        return any(e == event_id for e, _ in self._awareness)

    def _mark(self, event_id: str) -> str | None:
        for e, lab in self._awareness:
            if e == event_id:
                return lab
        return None

    def serialize(self) -> str:
        _require_introspection("an observer's awareness")
        doc = {
            "id": self.id,
            "awareness": [list(m) for m in self._awareness],
            "sources": dict(sorted(self._sources.items())),
        }
        return json.dumps(doc, separators=(",", ":"))

    def __repr__(self):
        return f"Observer({self.id!r})"


def awareness_path(obs: Observer) -> list[tuple[str, str]]:
    """Copy of the awareness record. Test-only introspection."""
    _require_introspection("awareness_path")
    return list(obs._awareness)


def _constraints(obs: Observer, state: BranchedState) -> tuple[tuple[int, str], ...]:
    """Awareness marks as ``(event position, label)`` in this state."""
    out = []
    for e, lab in obs._awareness:
        if state.has_event(e):
            out.append((state.event_index(e), lab))
        elif e in obs._sources and state.has_event(obs._sources[e]):
            out.append((state.event_index(obs._sources[e]), lab))
        else:
            raise UnknownEventError(f"awareness refers to event {e!r}, absent from this state")
    return tuple(out)


def _candidates(state: BranchedState, constraints) -> list[Branch]:
    return [b for b in state._branches if all(b.path[p][1] == lab for p, lab in constraints)]


def candidate_branches(obs: Observer, state: BranchedState) -> list[Branch]:
    """Branches extending the observer's awareness. Test-only introspection."""
    _require_introspection("candidate branches")
    return _candidates(state, _constraints(obs, state))


def _distribution(state: BranchedState, constraints, pos: int):
    key = ("dist", constraints, pos)
    hit = state._cache.get(key)
    if hit is None:
        labels = state.events[pos].labels
        weights = dict.fromkeys(labels, 0.0)
        for b in _candidates(state, constraints):
            weights[b.path[pos][1]] += b.weight
        total = sum(weights.values())
        if total <= 0:
            raise CorruptStateError("no branch extends the observer's awareness")
        probs = tuple(weights[lab] / total for lab in labels)
        cum = list(accumulate(probs))
        cum[-1] = 1.0
        hit = (labels, probs, cum)
        state._cache[key] = hit
    return hit


def _check_new_event(obs: Observer, state: BranchedState, event_id: str) -> int:
    pos = state.event_index(event_id)
    if obs.is_aware_of(event_id):
        raise AlreadyAwareError(f"{obs.id} already hung up on {event_id!r}")
    if obs._awareness:
        last = obs._awareness[-1][0]
        if state.has_event(last) and state.event_index(last) >= pos:
            raise ValueError(f"{obs.id} cannot hang up on {event_id!r}: older than {last!r}")
    return pos


def outcome_distribution(obs: Observer, state: BranchedState, event_id: str) -> dict[str, float]:
    """Born weights of ``event_id``'s outcomes renormalized over the observer's candidates.

    This is what the observer's own next hang-up would sample from, so it
    is a first-person quantity and needs no introspection.
    """
    labels, probs, _ = _distribution(state, _constraints(obs, state), state.event_index(event_id))
    return dict(zip(labels, probs))


def hang_up(obs: Observer, state: BranchedState, event_id: str) -> str:
    """Sample an outcome of ``event_id`` for ``obs`` and append it to its awareness.

    Only branches extending the current awareness are candidates. The
    state is not touched.
    """
    pos = _check_new_event(obs, state, event_id)
    labels, _, cum = _distribution(state, _constraints(obs, state), pos)
    label = labels[min(bisect_right(cum, obs.rng.random()), len(labels) - 1)]
    obs._awareness.append((event_id, label))
    return label


# --------------------------------------------------------------------------- refined mechanism


@dataclass(frozen=True, eq=False)
class RefinedAnalysis:
    """Reduced matrix seen by an observer who will never look at ``unobservable``.

    ``probabilities`` are the pointer-block traces. ``coherence`` is the
    largest entry of any off-diagonal pointer block; the matrix counts as
    diagonal in the pointer basis when it is at most ``EPS_DIAG``.
    """

    reduced: DensityMatrix
    labels: tuple[str, ...]
    probabilities: tuple[float, ...]
    coherence: float
    diagonal: bool
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    pointer_factor: int


def refined_analysis(obs: Observer, state: BranchedState, event_id: str, unobservable: Iterable[int]) -> RefinedAnalysis:
    pos = state.event_index(event_id)
    unobservable = frozenset(unobservable)
    constraints = _constraints(obs, state)
    key = ("refined", constraints, pos, unobservable)
    hit = state._cache.get(key)
    if hit is not None:
        return hit
    record = state.specs[pos].records[0]
    pointer = record.factor
    if pointer in unobservable:
        raise ValueError("the measured pointer record cannot be traced out")
    if any(not 0 <= i < len(state.space) for i in unobservable):
        raise IndexError("unobservable factor out of range")
    cands = _candidates(state, constraints)
    if not cands:
        raise CorruptStateError("no branch extends the observer's awareness")
    psi = sum(b.amplitude * b.component.amplitudes for b in cands)
    psi = StateVector(state.space, psi / np.linalg.norm(psi))
    keep = [i for i in range(len(state.space)) if i not in unobservable]
    rho = reduced_from_vector(psi, keep)

    kdims = [state.space.dims[i] for i in keep]
    p_axis = keep.index(pointer)
    d = kdims[p_axis]
    rest = rho.dim // d
    t = np.moveaxis(rho.matrix.reshape(kdims + kdims), [p_axis, len(keep) + p_axis], [0, 1])
    t = t.reshape(d, d, rest, rest)
    # <p_k| rho |p_l> on the pointer factor, left as an operator on the rest
    Pm = np.column_stack(record.pointers)
    blocks = np.einsum("ak,abxy,bl->klxy", Pm.conj(), t, Pm)
    n = Pm.shape[1]
    probs = [float(np.real(np.trace(blocks[k, k]))) for k in range(n)]
    off = max((float(np.max(np.abs(blocks[j, k]))) for j in range(n) for k in range(n) if j != k), default=0.0)
    total = sum(probs)
    probs = tuple(max(0.0, p / total) for p in probs)
    w, v = np.linalg.eigh(rho.matrix)
    order = np.argsort(w)[::-1]
    result = RefinedAnalysis(rho, state.events[pos].labels, probs, off, off <= EPS_DIAG, w[order], v[:, order], pointer)
    state._cache[key] = result
    return result


def refined_hang_up(obs: Observer, state: BranchedState, event_id: str, unobservable: Iterable[int]) -> str:
    """Hang up to a state of the basis in which the reduced matrix is diagonal.

    ``unobservable`` lists the factors the observer will never measure;
    they are traced out of the candidate-restricted universal state. When
    the result is block-diagonal in the event's pointer basis, an outcome is
    sampled from the diagonal and recorded as in :func:`hang_up`.

    Otherwise coherences between outcomes remain accessible: an
    :class:`InterferenceAccessible` warning is issued, the observer hangs up
    to an eigenvector of the reduced matrix (sampled by eigenvalue) and the
    returned label is ``"~k"`` for the k-th eigenvector by decreasing weight.
    No branch corresponds to such a state, so awareness is not extended.
    """
    _check_new_event(obs, state, event_id)
    a = refined_analysis(obs, state, event_id, unobservable)
    u = obs.rng.random()
    if a.diagonal:
        cum = list(accumulate(a.probabilities))
        cum[-1] = 1.0
        label = a.labels[min(bisect_right(cum, u), len(a.labels) - 1)]
        obs._awareness.append((event_id, label))
        return label
    warnings.warn(
        InterferenceAccessible(f"pointer coherence {a.coherence:.3g} survives on event {event_id!r}"),
        stacklevel=2,
    )
    weights = np.clip(a.eigenvalues, 0, None)
    cum = list(accumulate((weights / weights.sum()).tolist()))
    cum[-1] = 1.0
    return f"~{min(bisect_right(cum, u), len(cum) - 1)}"


# --------------------------------------------------------------------------- queries


def readout_event(state: BranchedState, asker_id: str, askee_id: str, event_id: str) -> Event:
    """The measurement ``asker`` performs on ``askee``'s brain record of ``event_id``."""
    source = state.event(event_id)
    if askee_id not in source.observers:
        raise NotParticipantError(f"{askee_id} did not take part in event {event_id!r}")
    if asker_id == askee_id:
        raise ValueError("an observer cannot query itself")
    brain = state.space.index("Brain", brain_label(askee_id, event_id))
    n = len(source.observable.spectrum)
    obs = Observable.from_eigenbasis(source.observable.eigenvalues, computational_pointers(n, n), labels=source.labels)
    return Event(f"{event_id}>{askee_id}>{asker_id}", brain, obs, observers=(asker_id,), apparatus=False, source=event_id)


def readout_state(state: BranchedState, asker_id: str, askee_id: str, event_id: str) -> BranchedState:
    """``state`` after ``asker`` has read ``askee``'s record of ``event_id``.

    Each branch gets exactly one child whose label matches its label at
    ``event_id``; that perfect correlation is verified.
    """
    key = ("readout", asker_id, askee_id, event_id)
    hit = state._cache.get(key)
    if hit is None:
        ev = readout_event(state, asker_id, askee_id, event_id)
        if state.has_event(ev.id):
            return state
        hit = split(state, ev)
        src, dst = state.event_index(event_id), hit.event_index(ev.id)
        if len(hit._branches) != len(state._branches) or any(b.path[src][1] != b.path[dst][1] for b in hit._branches):
            raise CorruptStateError("brain record is not perfectly correlated with its event")
        state._cache[key] = hit
    return hit


def query(asker: Observer, askee: Observer | str, event_id: str, state: BranchedState) -> str:
    """Ask ``askee`` which outcome of ``event_id`` it saw.

    The question is a measurement by ``asker`` on ``askee``'s brain factor:
    the answer is ``hang_up`` on the readout event, so it can never
    contradict what ``asker`` already knows. ``state`` is not modified; use
    :func:`readout_state` to continue from the post-query universal state.
    """
    askee_id = askee.id if isinstance(askee, Observer) else askee
    key = ("readout-event", asker.id, askee_id, event_id)
    ev = state._cache.get(key)
    if ev is None:
        ev = state._cache[key] = readout_event(state, asker.id, askee_id, event_id)
    known = asker._mark(ev.id)
    if known is not None:
        return known
    extended = readout_state(state, asker.id, askee_id, event_id)
    label = hang_up(asker, extended, ev.id)
    asker._sources[ev.id] = event_id
    return label
