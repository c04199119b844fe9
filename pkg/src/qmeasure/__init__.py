"""Finite-dimensional quantum measurement toolkit.

``hilbert`` builds state vectors and observables on labelled tensor-product
spaces, ``density`` handles pure states, proper mixtures and reduced states,
``measurement`` premeasures and decoheres, ``observer`` tracks a
never-reduced branched state and per-observer hang-ups, and ``scenarios``
replays the thought experiments with analytic and sampled checks.
"""

from .density import DensityMatrix, from_mixture, from_pure, outcome_probability, partial_trace, purity
from .hilbert import CompositeSpace, Factor, Observable, StateVector, ket, spin_observable
from .measurement import EnvironmentModel, MeasurementSpec, premeasure
from .observer import BranchedState, Event, Observer, hang_up, query, refined_hang_up, split
from .scenarios import ScenarioReport, list_scenarios, run

__version__ = "0.1.0"

__all__ = [
    "BranchedState",
    "CompositeSpace",
    "DensityMatrix",
    "EnvironmentModel",
    "Event",
    "Factor",
    "MeasurementSpec",
    "Observable",
    "Observer",
    "ScenarioReport",
    "StateVector",
    "from_mixture",
    "from_pure",
    "hang_up",
    "ket",
    "list_scenarios",
    "outcome_probability",
    "partial_trace",
    "premeasure",
    "purity",
    "query",
    "refined_hang_up",
    "run",
    "spin_observable",
    "split",
]
