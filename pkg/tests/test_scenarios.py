import json
import math

import numpy as np
import pytest

from qmeasure import scenarios as sc
from qmeasure.hilbert import random_state, random_unitary

R2 = 1 / math.sqrt(2)
SMALL = 2000


def test_list_contains_every_scenario():
    names = sc.list_scenarios()
    for expected in ("mixture_vs_superposition", "interference", "epr", "bell", "mermin_square",
                     "wigners_friend", "locality", "sequential", "decoherence"):
        assert expected in names
    assert "refined" in names


@pytest.mark.parametrize("name", sc.list_scenarios())
def test_every_scenario_passes_with_small_budget(name):
    params = {"trials": SMALL} if "trials" in sc.scenario_params(name) else {}
    report = sc.run(name, **params)
    assert report.passed, report.failures()
    assert all(c.tolerance >= 0 for c in report.checks)


def test_run_rejects_unknown_scenario_and_parameters():
    with pytest.raises(ValueError):
        sc.run("nope")
    with pytest.raises(ValueError):
        sc.run("mermin_square", trials=3)
    with pytest.raises(ValueError):
        sc.run("bell", trials=0)
    with pytest.raises(ValueError):
        sc.run("sequential", alpha=1, beta=1, trials=10)


def test_reports_are_byte_identical_for_a_seed():
    a = sc.run("bell", trials=SMALL, seed=17).to_json()
    b = sc.run("bell", trials=SMALL, seed=17).to_json()
    c = sc.run("bell", trials=SMALL, seed=18).to_json()
    assert a == b
    assert a != c


def test_report_schema():
    doc = json.loads(sc.run("mermin_square").to_json())
    assert list(doc) == ["scenario", "params", "checks", "pass"]
    assert list(doc["checks"][0]) == ["desc", "analytic", "empirical", "tolerance", "pass"]
    assert doc["pass"] is True


def test_csv_has_fixed_header_and_one_row_per_check():
    r = sc.run("mermin_square")
    lines = r.to_csv().splitlines()
    assert lines[0] == ",".join(sc.CSV_HEADER)
    assert len(lines) == len(r.checks) + 1


def test_statistical_tolerance_rule():
    assert sc.stat_tol(0.5, 10_000) == pytest.approx(0.025)
    assert sc.stat_tol(1.0, 10_000) == 0.0
    assert sc.stat_tol(0.0, 5) == 0.0


# --------------------------------------------------------------------------- interference


def test_interference_single_term_has_no_difference():
    r = sc.interference([1, 0])
    for i in range(2):
        assert r.check(f"outcome {i}: difference equals cross terms").empirical == pytest.approx(0.0)


def test_interference_default_difference_is_plus_minus_half():
    coh, inc, cross = sc.interference_terms([R2, R2], sc._x_basis_matrix())
    assert coh - inc == pytest.approx([0.5, -0.5])
    assert cross == pytest.approx([0.5, -0.5])


def test_interference_random_three_level_cross_terms():
    rng = np.random.default_rng(3)
    mu = random_state(3, rng).amplitudes
    nu = random_unitary(3, rng)
    coh, inc, cross = sc.interference_terms(mu, nu)
    # independent oracle: expand |sum_j a_j|^2 - sum_j |a_j|^2 by hand
    for i in range(3):
        a = nu[i] * mu
        explicit = abs(a.sum()) ** 2 - np.sum(np.abs(a) ** 2)
        assert cross[i] == pytest.approx(explicit, abs=1e-10)
        assert coh[i] - inc[i] == pytest.approx(explicit, abs=1e-10)
    assert sc.interference(mu, nu).passed


def test_interference_rejects_non_unitary():
    with pytest.raises(ValueError):
        sc.interference([R2, R2], np.array([[1, 1], [0, 1]]))


# --------------------------------------------------------------------------- bell, lhv, mermin


def test_lhv_counts():
    counts = sc.lhv_same_counts()
    assert counts[0, 0, 0] == 3
    assert counts[1, 0, 0] == 1
    assert set(counts.values()) == {1, 3}
    assert sc.lhv_oracle() == 1.0


def test_bell_basis_invariance():
    assert sc.bell_basis_deviation() < 1e-12


def test_bell_analytic_values():
    r = sc.bell(trials=SMALL)
    for pair in ("z,u", "z,v", "u,v"):
        assert r.check(f"P_same({pair}) analytic").empirical == pytest.approx(0.25, abs=1e-10)
    assert r.check("sum of P_same analytic").empirical == pytest.approx(0.75, abs=1e-10)


def test_mermin_products_and_assignments():
    sq = sc.mermin_observables()
    assert np.allclose(sq[1][0] @ sq[1][1] @ sq[1][2], np.eye(4))
    assert np.allclose(sq[0][2] @ sq[1][2] @ sq[2][2], -np.eye(4))
    assert sc.mermin_assignments() == []


def test_mermin_without_sign_flip_would_be_satisfiable(monkeypatch):
    monkeypatch.setattr(sc, "MERMIN_COL_SIGNS", (1, 1, 1))
    assert len(sc.mermin_assignments()) > 0


# --------------------------------------------------------------------------- observer scenarios


def test_wigner_eigenstate_is_deterministic():
    r = sc.wigners_friend(trials=500, alpha=1, beta=0)
    assert r.passed
    assert r.check("ask then measure: friend reports '+'").empirical == 1.0


def test_wigner_query_first_follows_born_weight():
    r = sc.wigners_friend(trials=10_000, alpha=0.6, beta=0.8)
    c = r.check("ask then measure: friend reports '+'")
    assert c.analytic == pytest.approx(0.36)
    assert c.passed


def test_sequential_complex_amplitudes():
    r = sc.sequential(alpha=0.6j, beta=-0.8, trials=SMALL)
    assert r.passed, r.failures()


def test_decoherence_custom_grid_and_errors():
    r = sc.decoherence(times=[0.5, 1.0, 2.0, 25.0], tau=1.0)
    assert r.check("parametric: largest increase of the off-diagonal weight").passed
    with pytest.raises(ValueError):
        sc.decoherence(times=[])
    with pytest.raises(ValueError):
        sc.decoherence(alpha=1, beta=1)


def test_decoherence_finite_recurrence_reported():
    r = sc.decoherence()
    assert r.check("finite (dim 2): |Z| later rises above 1/2").empirical == 1.0
