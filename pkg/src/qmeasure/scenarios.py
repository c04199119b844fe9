"""Scripted thought experiments with analytic and sampled checks.

Every scenario returns a :class:`ScenarioReport`. Analytic values come from
the density-matrix code path; empirical values come from observers hanging
up on a :class:`~qmeasure.observer.BranchedState`. Each statistical check
uses a tolerance of five standard errors, ``5 * sqrt(p (1 - p) / N)``,
which collapses to exact equality when ``p`` is 0 or 1.
"""

from __future__ import annotations

import csv
import hashlib
import inspect
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import density as dm
from .hilbert import (
    EPS_NUM,
    IDENTITY_2,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    CompositeSpace,
    StateVector,
    is_unitary,
    ket,
    kron,
    projector_onto,
    qubit_space,
    spin_observable,
)
from .measurement import EnvironmentModel, MeasurementSpec, computational_pointers, decohered_reduced_matrix, premeasure
from .observer import (
    EPS_DIAG,
    BranchedState,
    Event,
    Observer,
    TrialStreams,
    awareness_path,
    hang_up,
    introspection,
    outcome_distribution,
    query,
    readout_state,
    refined_analysis,
    refined_hang_up,
    split,
)

DEFAULT_SEED = 0
FREQ_TRIALS = 100_000
CORR_TRIALS = 10_000
DECOHERED = EnvironmentModel.parametric(1.0)

CSV_HEADER = ("scenario", "desc", "analytic", "empirical", "tolerance", "pass")


@dataclass(frozen=True)
class Check:
    desc: str
    analytic: float
    empirical: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(abs(self.analytic - self.empirical) <= self.tolerance)


@dataclass(frozen=True)
class ScenarioReport:
    scenario: str
    params: dict
    checks: tuple[Check, ...] = field(default=())

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def check(self, desc: str) -> Check:
        for c in self.checks:
            if c.desc == desc:
                return c
        raise KeyError(desc)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "params": _canon(self.params),
            "checks": [
                {
                    "desc": c.desc,
                    "analytic": _num(c.analytic),
                    "empirical": _num(c.empirical),
                    "tolerance": _num(c.tolerance),
                    "pass": c.passed,
                }
                for c in self.checks
            ],
            "pass": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for c in self.to_dict()["checks"]:
            w.writerow([self.scenario, c["desc"], f"{c['analytic']!r}", f"{c['empirical']!r}",
                        f"{c['tolerance']!r}", "true" if c["pass"] else "false"])
        return buf.getvalue()


def _num(x: float) -> float:
    # 15 significant digits keeps reports byte-stable across platforms
    return float(f"{float(x):.15g}")


def _canon(v):
    if isinstance(v, dict):
        return {k: _canon(v[k]) for k in v}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_canon(x) for x in v]
    if isinstance(v, (complex, np.complexfloating)):
        return [_num(v.real), _num(v.imag)]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return _num(v)
    return v


def stat_tol(p: float, n: int) -> float:
    return 5.0 * math.sqrt(max(p * (1 - p), 0.0) / n)


def _freq(desc: str, p: float, count: int, n: int) -> Check:
    return Check(desc, p, count / n, stat_tol(p, n))


def _digest(*states: BranchedState) -> str:
    h = hashlib.sha256()
    for s in states:
        h.update(s.serialize().encode())
    return h.hexdigest()


def _unchanged(before: str, *states: BranchedState) -> Check:
    return Check("universal state unchanged by hang-ups and queries", 1.0, float(_digest(*states) == before), 0.0)


def _spin_state(alpha: complex, beta: complex) -> StateVector:
    alpha, beta = complex(alpha), complex(beta)
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1) > EPS_NUM:
        raise ValueError("amplitudes must satisfy |alpha|^2 + |beta|^2 = 1")
    return alpha * ket("+z") + beta * ket("-z")


def _check_trials(trials: int):
    if int(trials) < 1:
        raise ValueError("trials must be >= 1")


def _pair(a: StateVector, b: StateVector) -> StateVector:
    return StateVector(qubit_space(2), np.kron(a.amplitudes, b.amplitudes))


def _prob(state_or_rho, P: np.ndarray) -> float:
    rho = state_or_rho if isinstance(state_or_rho, dm.DensityMatrix) else dm.from_pure(state_or_rho)
    return dm.outcome_probability(rho, P)


def _measured(state: StateVector, *events: Event) -> BranchedState:
    s = BranchedState.initial(state)
    for e in events:
        s = split(s, e)
    return s


def singlet() -> StateVector:
    return (_pair(ket("+z"), ket("-z")) - _pair(ket("-z"), ket("+z"))) / math.sqrt(2)


def phi_plus(axis: str = "z") -> StateVector:
    """``(|+a>|+a> + |-a>|-a>) / sqrt(2)`` along ``axis``."""
    p, m = ket("+" + axis), ket("-" + axis)
    return (_pair(p, p) + _pair(m, m)) / math.sqrt(2)


def _proj(axis: str, sign: str) -> np.ndarray:
    return spin_observable(axis).projector(sign)


# --------------------------------------------------------------------------- scenarios


def mixture_vs_superposition(trials: int = CORR_TRIALS, seed: int = DEFAULT_SEED) -> ScenarioReport:
    """A superposition along x versus a 50/50 mixture of the z eigenstates."""
    _check_trials(trials)
    sup = ket("+x")
    rho_sup = dm.from_pure(sup)
    rho_mix = dm.from_mixture([(0.5, ket("+z")), (0.5, ket("-z"))])
    checks = [
        Check("purity of the superposition", 1.0, dm.purity(rho_sup), EPS_NUM),
        Check("purity of the mixture", 0.5, dm.purity(rho_mix), EPS_NUM),
    ]
    prepared = {lab: ket(lab) for lab in ("+x", "+z", "-z")}
    digests = []
    for axis in ("x", "z"):
        obs = spin_observable(axis)
        states = {lab: _measured(s, Event("m", 0, obs, ("obs",), environment=DECOHERED)) for lab, s in prepared.items()}
        before = _digest(*states.values())
        sampler = TrialStreams(seed, f"obs-{axis}", trials, 2)
        source = TrialStreams(seed, f"source-{axis}", trials, 1)
        n1 = n2 = 0
        for i in range(trials):
            rng = sampler[i]
            if hang_up(Observer("obs", rng=rng), states["+x"], "m") == "+":
                n1 += 1
            which = "+z" if source[i].random() < 0.5 else "-z"
            if hang_up(Observer("obs", rng=rng), states[which], "m") == "+":
                n2 += 1
        P = obs.projector("+")
        checks.append(_freq(f"set 1 (superposition) along O{axis}: '+' frequency", _prob(rho_sup, P), n1, trials))
        checks.append(_freq(f"set 2 (mixture) along O{axis}: '+' frequency", _prob(rho_mix, P), n2, trials))
        digests.append(before == _digest(*states.values()))
    checks.append(Check("universal state unchanged by hang-ups and queries", 1.0, float(all(digests)), 0.0))
    return ScenarioReport("mixture_vs_superposition", {"trials": trials, "seed": seed}, tuple(checks))


def _x_basis_matrix() -> np.ndarray:
    return np.column_stack([ket("+x").amplitudes, ket("-x").amplitudes])


def interference_terms(mu: Sequence[complex], nu: np.ndarray):
    """Per outcome ``i``: coherent ``|sum_j mu_j nu_ij|^2``, incoherent ``sum_j |mu_j|^2 |nu_ij|^2``
    and the cross-term sum ``sum_{j != j'} conj(mu_j nu_ij) mu_j' nu_ij'``."""
    mu = np.asarray(mu, dtype=complex)
    nu = np.asarray(nu, dtype=complex)
    coherent = np.abs(nu @ mu) ** 2
    incoherent = np.abs(nu) ** 2 @ np.abs(mu) ** 2
    cross = np.zeros(len(nu))
    for i in range(len(nu)):
        a = nu[i] * mu
        cross[i] = sum((a[j].conjugate() * a[k]).real for j in range(len(mu)) for k in range(len(mu)) if j != k)
    return coherent, incoherent, cross


def interference(mu: Sequence[complex] | None = None, nu: np.ndarray | None = None) -> ScenarioReport:
    """Probabilities for a superposition versus the mixture with the same weights.

    ``mu`` holds the amplitudes on an orthonormal basis ``|j>``; column
    ``j`` of ``nu`` expands ``|j>`` over the measured basis ``|i>``.
    """
    mu = np.asarray(mu if mu is not None else [1 / math.sqrt(2), 1 / math.sqrt(2)], dtype=complex)
    nu = np.asarray(nu if nu is not None else _x_basis_matrix(), dtype=complex)
    if nu.ndim != 2 or nu.shape[0] != nu.shape[1] or nu.shape[0] != mu.shape[0]:
        raise ValueError("nu must be a square matrix matching the length of mu")
    if not is_unitary(nu):
        raise ValueError("nu must be unitary")
    if abs(np.vdot(mu, mu).real - 1) > EPS_NUM:
        raise ValueError("mu must be normalized")
    coherent, incoherent, cross = interference_terms(mu, nu)
    d = len(mu)
    space = CompositeSpace.of(d)
    psi = StateVector(space, nu @ mu)
    rho_sup = dm.from_pure(psi)
    rho_mix = dm.from_mixture([(abs(m) ** 2, StateVector(space, nu[:, j])) for j, m in enumerate(mu) if abs(m) > 0])
    checks = []
    for i in range(d):
        P = projector_onto(StateVector.basis(space, i))
        checks.append(Check(f"outcome {i}: superposition probability", coherent[i], _prob(rho_sup, P), EPS_NUM))
        checks.append(Check(f"outcome {i}: mixture probability", incoherent[i], _prob(rho_mix, P), EPS_NUM))
        checks.append(Check(f"outcome {i}: difference equals cross terms", cross[i], coherent[i] - incoherent[i], EPS_NUM))
    params = {"mu": list(mu), "nu": [list(r) for r in nu]}
    return ScenarioReport("interference", params, tuple(checks))


def epr(trials: int = CORR_TRIALS, seed: int = DEFAULT_SEED) -> ScenarioReport:
    """Singlet correlations, the mixture it is not, and Alice asking Bob."""
    _check_trials(trials)
    psi = singlet()
    rho = dm.from_pure(psi)
    reduced = dm.partial_trace(rho, [0])
    mixture = dm.MixtureSpec(((0.5, _pair(ket("+z"), ket("-z"))), (0.5, _pair(ket("-z"), ket("+z")))))
    p_global, p_mix = dm.joint_prediction_gap(rho, mixture, kron(_proj("x", "+"), _proj("x", "+")))
    checks = [
        Check("reduced singlet equals I/2 (max entry deviation)", 0.0, float(np.max(np.abs(reduced.matrix - IDENTITY_2 / 2))), 1e-12),
        Check("singlet probability of (+x, +x)", 0.0, p_global, EPS_NUM),
        Check("mixture probability of (+x, +x)", 0.25, p_mix, EPS_NUM),
    ]
    states = {}
    for axis in ("z", "u", "v", "x"):
        obs = spin_observable(axis)
        states[axis] = _measured(
            psi,
            Event("alice", 0, obs, ("alice",), environment=DECOHERED),
            Event("bob", 1, obs, ("bob",), environment=DECOHERED),
        )
    before = _digest(*states.values())
    contradictions = 0
    for axis, state in states.items():
        p_opp = sum(_prob(rho, kron(_proj(axis, s), _proj(axis, t))) for s, t in (("+", "-"), ("-", "+")))
        streams = TrialStreams(seed, f"alice-{axis}", trials, 2)
        opposite = 0
        for i in range(trials):
            alice = Observer("alice", rng=streams[i])
            mine = hang_up(alice, state, "alice")
            heard = query(alice, "bob", "bob", state)
            opposite += mine != heard
        contradictions += trials - opposite
        checks.append(_freq(f"{axis} axis: Alice hears Bob report the opposite outcome", p_opp, opposite, trials))
    checks.append(Check("contradictions between Alice's record and Bob's answer", 0.0, float(contradictions), 0.0))
    checks.append(_unchanged(before, *states.values()))
    return ScenarioReport("epr", {"trials": trials, "seed": seed}, tuple(checks))


BELL_AXES = ("z", "u", "v")


def lhv_same_counts() -> dict[tuple[int, int, int], int]:
    """Per shared assignment ``(v(A), v(B), v(C))``: how many of the pairs AB, AC, BC agree."""
    return {
        values: sum(values[i] == values[j] for i, j in itertools.combinations(range(3), 2))
        for values in itertools.product((0, 1), repeat=3)
    }


def lhv_oracle() -> float:
    """Lower bound of ``P_same(A,B) + P_same(A,C) + P_same(B,C)`` over all local assignments.

    Every distribution over assignments averages the per-assignment counts,
    so the minimum count bounds the sum.
    """
    return float(min(lhv_same_counts().values()))


def bell_basis_deviation() -> float:
    """Largest amplitude difference between the z form of the state and its u and v forms."""
    ref = phi_plus("z").amplitudes
    return float(max(np.max(np.abs(phi_plus(a).amplitudes - ref)) for a in BELL_AXES[1:]))


def bell(trials: int = FREQ_TRIALS, seed: int = DEFAULT_SEED) -> ScenarioReport:
    """Same-outcome probabilities on pairs of the three axes against the local bound."""
    _check_trials(trials)
    psi = phi_plus("z")
    rho = dm.from_pure(psi)
    checks = [Check("state has the same form along z, u and v (max amplitude deviation)", 0.0, bell_basis_deviation(), 1e-12)]
    analytic, empirical = [], []
    states = {}
    for x, y in itertools.combinations(BELL_AXES, 2):
        states[x, y] = _measured(
            psi,
            Event("e1", 0, spin_observable(x), ("obs",), environment=DECOHERED),
            Event("e2", 1, spin_observable(y), ("obs",), environment=DECOHERED),
        )
    before = _digest(*states.values())
    for (x, y), state in states.items():
        p = sum(_prob(rho, kron(_proj(x, s), _proj(y, s))) for s in ("+", "-"))
        streams = TrialStreams(seed, f"obs-{x}{y}", trials, 2)
        same = 0
        for i in range(trials):
            o = Observer("obs", rng=streams[i])
            same += hang_up(o, state, "e1") == hang_up(o, state, "e2")
        analytic.append(p)
        empirical.append(same / trials)
        checks.append(Check(f"P_same({x},{y}) analytic", 0.25, p, EPS_NUM))
        checks.append(Check(f"P_same({x},{y}) sampled", p, same / trials, stat_tol(p, trials)))
    total = sum(analytic)
    tol_sum = 5.0 * math.sqrt(sum(p * (1 - p) for p in analytic) / trials)
    bound = lhv_oracle()
    checks += [
        Check("sum of P_same analytic", 0.75, total, EPS_NUM),
        Check("sum of P_same sampled", total, sum(empirical), tol_sum),
        Check("local hidden variable lower bound", 1.0, bound, 0.0),
        Check("gap between the local bound and the quantum sum", 0.25, bound - total, EPS_NUM),
        _unchanged(before, *states.values()),
    ]
    return ScenarioReport("bell", {"trials": trials, "seed": seed}, tuple(checks))


def mermin_observables() -> list[list[np.ndarray]]:
    """The 3x3 square of two-qubit observables, row by row."""
    I = IDENTITY_2
    x1, x2 = kron(SIGMA_X, I), kron(I, SIGMA_X)
    y1, y2 = kron(SIGMA_Y, I), kron(I, SIGMA_Y)
    z1z2 = kron(SIGMA_Z, SIGMA_Z)
    return [
        [x1, x2, x1 @ x2],
        [y2, y1, y1 @ y2],
        [kron(SIGMA_X, SIGMA_Y), kron(SIGMA_Y, SIGMA_X), z1z2],
    ]


MERMIN_ROW_SIGNS = (1, 1, 1)
MERMIN_COL_SIGNS = (1, 1, -1)


def mermin_assignments() -> list[tuple[int, ...]]:
    """All +-1 value assignments to the nine cells that satisfy every row and column product."""
    found = []
    for v in itertools.product((1, -1), repeat=9):
        rows = all(v[3 * r] * v[3 * r + 1] * v[3 * r + 2] == MERMIN_ROW_SIGNS[r] for r in range(3))
        cols = all(v[c] * v[c + 3] * v[c + 6] == MERMIN_COL_SIGNS[c] for c in range(3))
        if rows and cols:
            found.append(v)
    return found


def mermin_square() -> ScenarioReport:
    """Operator identities of the square and the absence of a consistent value assignment."""
    sq = mermin_observables()
    I4 = np.eye(4)
    lines = [("row", r, [sq[r][c] for c in range(3)], MERMIN_ROW_SIGNS[r]) for r in range(3)]
    lines += [("column", c, [sq[r][c] for r in range(3)], MERMIN_COL_SIGNS[c]) for c in range(3)]
    checks = [
        Check("every cell squares to the identity", 0.0, max(float(np.max(np.abs(m @ m - I4))) for row in sq for m in row), 1e-10)
    ]
    for kind, k, ops, sign in lines:
        comm = max(float(np.max(np.abs(a @ b - b @ a))) for a, b in itertools.combinations(ops, 2))
        checks.append(Check(f"{kind} {k + 1}: observables commute", 0.0, comm, 1e-10))
    for kind, k, ops, sign in lines:
        prod = ops[0] @ ops[1] @ ops[2]
        checks.append(Check(f"{kind} {k + 1}: product equals {sign:+d} I", 0.0, float(np.max(np.abs(prod - sign * I4))), 1e-10))
    checks.append(Check("consistent +-1 assignments among 512", 0.0, float(len(mermin_assignments())), 0.0))
    return ScenarioReport("mermin_square", {}, tuple(checks))


def wigners_friend(
    trials: int = CORR_TRIALS, seed: int = DEFAULT_SEED,
    alpha: complex = 1 / math.sqrt(2), beta: complex = 1 / math.sqrt(2),
) -> ScenarioReport:
    """A friend measures a spin; Wigner measures it too and asks the friend, in both orders."""
    _check_trials(trials)
    psi = _spin_state(alpha, beta)
    z = spin_observable("z")
    friend_event = Event("friend", 0, z, ("friend",), environment=DECOHERED)
    wigner_event = Event("wigner", 0, z, ("wigner",), environment=DECOHERED)
    p_plus = _prob(psi, z.projector("+"))

    # Wigner measures first, then asks
    after = _measured(psi, friend_event, wigner_event)
    # Wigner asks first, then measures
    asked = _measured(psi, friend_event)
    asked_then_measured = split(readout_state(asked, "wigner", "friend", "friend"), wigner_event)
    before = _digest(after, asked, asked_then_measured)

    friends = TrialStreams(seed, "friend", trials, 1)
    wigners = TrialStreams(seed, "wigner", trials, 2)
    agree_a = agree_b = friend_plus = reported_plus = 0
    for i in range(trials):
        friend = Observer("friend", rng=friends[i])
        friend_plus += hang_up(friend, after, "friend") == "+"
        w = Observer("wigner", rng=wigners[i])
        mine = hang_up(w, after, "wigner")
        agree_a += query(w, "friend", "friend", after) == mine

        w = Observer("wigner", rng=wigners[i])
        heard = query(w, "friend", "friend", asked)
        reported_plus += heard == "+"
        agree_b += hang_up(w, asked_then_measured, "wigner") == heard
    checks = [
        _freq("friend's own '+' frequency", p_plus, friend_plus, trials),
        Check("measure then ask: agreement rate", 1.0, agree_a / trials, 0.0),
        _freq("ask then measure: friend reports '+'", p_plus, reported_plus, trials),
        Check("ask then measure: agreement rate", 1.0, agree_b / trials, 0.0),
        Check("contradictions between Wigner and the friend", 0.0, float(2 * trials - agree_a - agree_b), 0.0),
        _unchanged(before, after, asked, asked_then_measured),
    ]
    params = {"trials": trials, "seed": seed, "alpha": complex(alpha), "beta": complex(beta)}
    return ScenarioReport("wigners_friend", params, tuple(checks))


def locality(trials: int = FREQ_TRIALS, seed: int = DEFAULT_SEED) -> ScenarioReport:
    """Bob's statistics do not depend on Alice's setting; Alice's later question to Bob does."""
    _check_trials(trials)
    psi = singlet()
    states = {
        axis: _measured(
            psi,
            Event("alice", 0, spin_observable(axis), ("alice",), environment=DECOHERED),
            Event("bob", 1, spin_observable("z"), ("bob",), environment=DECOHERED),
        )
        for axis in ("z", "x")
    }
    before = _digest(*states.values())
    checks = []
    freqs = {}
    for axis, state in states.items():
        bob_app = state.space.index("Apparatus", "bob")
        p = dm.outcome_probability(dm.reduced_from_vector(state.global_vector(), [bob_app]), np.diag([1.0, 0.0]))
        streams = TrialStreams(seed, f"bob-{axis}", trials, 1)
        n = sum(hang_up(Observer("bob", rng=streams[i]), state, "bob") == "+" for i in range(trials))
        freqs[axis] = n / trials
        checks.append(Check(f"Alice along {axis}: Bob's marginal from the partial trace", 0.5, p, EPS_NUM))
        checks.append(_freq(f"Alice along {axis}: Bob's sampled '+' frequency", p, n, trials))
    checks.append(Check("Bob's marginal shift between Alice's settings", 0.0, freqs["z"] - freqs["x"], 5.0 * math.sqrt(2 * 0.25 / trials)))

    state = states["z"]
    streams = TrialStreams(seed, "alice", trials, 2)
    alice_plus = opposite = ordered = 0
    for i in range(trials):
        alice = Observer("alice", rng=streams[i])
        mine = hang_up(alice, state, "alice")
        heard = query(alice, "bob", "bob", state)
        alice_plus += mine == "+"
        opposite += mine != heard
        if i < CORR_TRIALS:
            with introspection():
                path = [e for e, _ in awareness_path(alice)]
            ordered += path == ["alice", "bob>bob>alice"]
    checks += [
        _freq("Alice's own '+' frequency", 0.5, alice_plus, trials),
        Check("Alice hears the opposite of her outcome", 1.0, opposite / trials, 0.0),
        Check("query recorded after Alice's own hang-up", 1.0, ordered / min(trials, CORR_TRIALS), 0.0),
        Check("contradictions between Alice and Bob", 0.0, float(trials - opposite), 0.0),
        _unchanged(before, *states.values()),
    ]
    return ScenarioReport("locality", {"trials": trials, "seed": seed}, tuple(checks))


def sequential(
    alpha: complex = 0.6, beta: complex = 0.8, trials: int = FREQ_TRIALS, seed: int = DEFAULT_SEED
) -> ScenarioReport:
    """Spin along z, then along x, then z again, by one observer."""
    _check_trials(trials)
    psi = _spin_state(alpha, beta)
    z, x = spin_observable("z"), spin_observable("x")
    first = Event("z1", 0, z, ("obs",), environment=DECOHERED)
    seq = _measured(psi, first, Event("x2", 0, x, ("obs",), environment=DECOHERED))
    rep = _measured(psi, first, Event("z2", 0, z, ("obs",), environment=DECOHERED))
    before = _digest(seq, rep)

    p_plus = _prob(psi, z.projector("+"))
    pa, pb = abs(complex(alpha)) ** 2, abs(complex(beta)) ** 2
    with introspection():
        weights = {tuple(l for _, l in b.path): b.weight for b in seq.branches}
    expected = {(s, t): w / 2 for s, w in (("+", pa), ("-", pb)) if w > 0 for t in ("+", "-")}
    structure = max(abs(weights.get(k, 0.0) - expected.get(k, 0.0)) for k in set(weights) | set(expected))

    streams = TrialStreams(seed, "obs", trials, 2)
    first_plus = 0
    cond = {"+": [0, 0], "-": [0, 0]}
    for i in range(trials):
        o = Observer("obs", rng=streams[i])
        a = hang_up(o, seq, "z1")
        first_plus += a == "+"
        cond[a][0] += 1
        cond[a][1] += hang_up(o, seq, "x2") == "+"
    rstreams = TrialStreams(seed, "obs-repeat", trials, 2)
    repeat_plus = repeat_agree = 0
    plus_first = 0
    for i in range(trials):
        o = Observer("obs", rng=rstreams[i])
        a = hang_up(o, rep, "z1")
        b = hang_up(o, rep, "z2")
        repeat_agree += a == b
        if a == "+":
            plus_first += 1
            repeat_plus += b == "+"

    checks = [
        Check("branch count", float(len(expected)), float(len(weights)), 0.0),
        Check("branch weights match |alpha|^2/2 and |beta|^2/2 (max deviation)", 0.0, structure, EPS_NUM),
        _freq("first z outcome '+' frequency", p_plus, first_plus, trials),
    ]
    for lab, (n, nplus) in cond.items():
        if n:
            checks.append(_freq(f"x outcome '+' given first z '{lab}'", 0.5, nplus, n))
    checks.append(Check("z repetition agrees with the first z outcome", 1.0, repeat_agree / trials, 0.0))
    if plus_first:
        checks.append(Check("z repetition after '+' gives '+'", 1.0, repeat_plus / plus_first, 0.0))
    checks.append(_unchanged(before, seq, rep))
    params = {"alpha": complex(alpha), "beta": complex(beta), "trials": trials, "seed": seed}
    return ScenarioReport("sequential", params, tuple(checks))


DEFAULT_TIMES = tuple(round(0.1 * k, 10) for k in range(251))


def _sae_reduced(alpha: complex, beta: complex, env: EnvironmentModel, t: float) -> dm.DensityMatrix:
    """System+apparatus matrix after premeasurement with an environment recording the pointer."""
    n = 2
    space = CompositeSpace.of(2, 2, env.env_dim(n))
    ready = np.kron(np.kron(_spin_state(alpha, beta).amplitudes, [1, 0]), env.ready_state(n))
    spec = MeasurementSpec(
        0, spin_observable("z"), 1, computational_pointers(2, 2),
        2, env.pointer_states(t, n), environment_ready=env.ready_state(n),
    )
    return dm.reduced_from_vector(premeasure(StateVector(space, ready), spec), [0, 1])


def decoherence(
    alpha: complex = 0.6, beta: complex = 0.8, tau: float = 1.0, times: Sequence[float] | None = None,
    env_dim: int = 2, env_seed: int = 0,
) -> ScenarioReport:
    """Decay of pointer coherence after tracing out the environment.

    The parametric model must decay monotonically. The finite model with
    ``env_dim`` levels is checked against the same closed form and its
    recurrences are reported.
    """
    times = sorted(float(t) for t in (times if times is not None else [tau * t for t in DEFAULT_TIMES]))
    if not times:
        raise ValueError("times must be nonempty")
    if times[0] < 0:
        raise ValueError("times must be nonnegative")
    _spin_state(alpha, beta)
    a, b = abs(complex(alpha)), abs(complex(beta))
    limit = a**4 + b**4
    sa = qubit_space(2)
    product_basis = [StateVector.basis(sa, k) for k in range(4)]
    checks = []
    for name, env in (("parametric", EnvironmentModel.parametric(tau)), ("finite", EnvironmentModel.finite(env_dim, env_seed))):
        offdiag, purity, zs = [], [], []
        dev_formula = dev_closed = 0.0
        for t in times:
            rho = _sae_reduced(alpha, beta, env, t)
            zt = abs(complex(env.Z(t)))
            w = dm.off_diagonal_weight(rho, product_basis)
            offdiag.append(w)
            purity.append(dm.purity(rho))
            zs.append(zt)
            dev_formula = max(dev_formula, abs(w - 2 * zt * a * b))
            closed = decohered_reduced_matrix((alpha, beta), env, t).matrix
            dev_closed = max(dev_closed, float(np.max(np.abs(dm.in_basis(rho, product_basis)[np.ix_([0, 3], [0, 3])] - closed))))
        checks.append(Check(f"{name}: off-diagonal weight equals 2|Z||alpha||beta| (max deviation)", 0.0, dev_formula, 1e-10))
        checks.append(Check(f"{name}: partial trace matches the closed-form matrix (max deviation)", 0.0, dev_closed, 1e-10))
        if times[0] == 0.0:
            checks.append(Check(f"{name}: purity at t=0", 1.0, purity[0], EPS_NUM))
        if name == "parametric":
            rises = max((offdiag[k + 1] - offdiag[k] for k in range(len(times) - 1)), default=0.0)
            checks.append(Check("parametric: largest increase of the off-diagonal weight", 0.0, max(rises, 0.0), 1e-12))
            late = [p for t, p in zip(times, purity) if t >= 20 * tau]
            if late:
                checks.append(Check("parametric: purity for t >= 20 tau vs |alpha|^4+|beta|^4 (max deviation)",
                                    0.0, max(abs(p - limit) for p in late), 1e-6))
        else:
            low = next((k for k, zt in enumerate(zs) if zt < 0.5), None)
            revival = max(zs[low:], default=0.0) if low is not None else 0.0
            checks.append(Check(f"finite (dim {env_dim}): |Z| drops below 1/2", 1.0, float(low is not None), 0.0))
            checks.append(Check(f"finite (dim {env_dim}): |Z| later rises above 1/2", 1.0, float(revival > 0.5), 0.0))
    params = {"alpha": complex(alpha), "beta": complex(beta), "tau": tau, "times": times,
              "env_dim": env_dim, "env_seed": env_seed}
    return ScenarioReport("decoherence", params, tuple(checks))


def refined(
    trials: int = FREQ_TRIALS, seed: int = DEFAULT_SEED, alpha: complex = 0.6, beta: complex = 0.8
) -> ScenarioReport:
    """Refined hang-up with the environment traced out, against plain hang-up."""
    _check_trials(trials)
    psi = _spin_state(alpha, beta)
    z = spin_observable("z")
    state = _measured(psi, Event("m", 0, z, ("obs",), environment=DECOHERED))
    coherent = _measured(psi, Event("m", 0, z, ("obs",), environment=DECOHERED, env_time=0.0))
    before = _digest(state, coherent)
    unobs = state.space.indices("Environment")

    p_born = _prob(psi, z.projector("+"))
    plain = outcome_distribution(Observer("obs"), state, "m")["+"]
    analysis = refined_analysis(Observer("obs"), state, "m", unobs)
    p_ref = analysis.probabilities[analysis.labels.index("+")]

    s_plain = TrialStreams(seed, "obs-plain", trials, 1)
    s_ref = TrialStreams(seed, "obs-refined", trials, 1)
    n_plain = sum(hang_up(Observer("obs", rng=s_plain[i]), state, "m") == "+" for i in range(trials))
    n_ref = sum(refined_hang_up(Observer("obs", rng=s_ref[i]), state, "m", unobs) == "+" for i in range(trials))

    coh = refined_analysis(Observer("obs"), coherent, "m", coherent.space.indices("Environment"))
    superposed = abs(complex(alpha)) * abs(complex(beta)) > EPS_DIAG
    checks = [
        Check("plain hang-up '+' probability vs Born rule", p_born, plain, EPS_NUM),
        Check("refined hang-up '+' probability vs plain", plain, p_ref, EPS_NUM),
        Check("reduced matrix diagonal in the pointer basis", 1.0, float(analysis.diagonal), 0.0),
        _freq("plain hang-up '+' frequency", plain, n_plain, trials),
        _freq("refined hang-up '+' frequency", p_ref, n_ref, trials),
        Check("plain vs refined '+' frequency", 0.0, (n_plain - n_ref) / trials, 5.0 * math.sqrt(2 * p_ref * (1 - p_ref) / trials)),
        Check("undecohered environment: pointer coherence flagged", float(superposed), float(not coh.diagonal), 0.0),
        _unchanged(before, state, coherent),
    ]
    params = {"trials": trials, "seed": seed, "alpha": complex(alpha), "beta": complex(beta)}
    return ScenarioReport("refined", params, tuple(checks))


SCENARIOS: dict[str, Callable[..., ScenarioReport]] = {
    "mixture_vs_superposition": mixture_vs_superposition,
    "interference": interference,
    "epr": epr,
    "bell": bell,
    "mermin_square": mermin_square,
    "wigners_friend": wigners_friend,
    "locality": locality,
    "sequential": sequential,
    "decoherence": decoherence,
    "refined": refined,
}


def list_scenarios() -> list[str]:
    return list(SCENARIOS)


def scenario_params(name: str) -> tuple[str, ...]:
    return tuple(inspect.signature(SCENARIOS[name]).parameters)


def run(name: str, **params) -> ScenarioReport:
    """Run a scenario by name. Unknown names or parameters raise ``ValueError``."""
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    allowed = scenario_params(name)
    bad = sorted(set(params) - set(allowed))
    if bad:
        raise ValueError(f"scenario {name!r} does not take {', '.join(bad)} (accepts: {', '.join(allowed) or 'nothing'})")
    return SCENARIOS[name](**params)
