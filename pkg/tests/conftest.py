"""Shared fixtures: the two hand-checkable datasets used throughout.

D1: three states {1, 2, 3} with 1->2, 1->3, 2->3 allowed; subject A moves
1->2 at sojourn 1 then 2->3 at sojourn 2, subject B moves 1->3 at sojourn 2,
subject C is censored in state 1 at duration 3. No covariates.

C1: two states, one transition 1->2, scalar covariate; events at sojourns
1 (z=1) and 2 (z=0), one censored record at 3 (z=1). The partial-likelihood
root is beta = -log(2)/2.
"""

import numpy as np
import pytest

from semimarkov import (
    Clock,
    CovariateProfile,
    SimConfig,
    SojournRecord,
    StateSpace,
    TransitionCovariates,
    build_counting_system,
    simulate_cohort,
    validate_records,
)


@pytest.fixture
def d1_space():
    return StateSpace.from_transitions(("1", "2", "3"), [("1", "2"), ("1", "3"), ("2", "3")])


@pytest.fixture
def d1_records():
    return [
        SojournRecord("A", 1, 0, 1, 0.0, 1.0, 1),
        SojournRecord("A", 2, 1, 2, 1.0, 2.0, 1),
        SojournRecord("B", 1, 0, 2, 0.0, 2.0, 1),
        SojournRecord("C", 1, 0, None, 0.0, 3.0, 0),
    ]


@pytest.fixture
def d1_history(d1_space, d1_records):
    return validate_records(d1_records, None, d1_space)


@pytest.fixture
def d1_sojourn(d1_history):
    return build_counting_system(d1_history, Clock.SOJOURN)


@pytest.fixture
def d1_calendar(d1_history):
    return build_counting_system(d1_history, Clock.CALENDAR)


@pytest.fixture
def c1_space():
    return StateSpace.from_transitions(("1", "2"), [("1", "2")])


@pytest.fixture
def c1_history(c1_space):
    records = [
        SojournRecord("1", 1, 0, 1, 0.0, 1.0, 1),
        SojournRecord("2", 1, 0, 1, 0.0, 2.0, 1),
        SojournRecord("3", 1, 0, None, 0.0, 3.0, 0),
    ]
    profiles = [
        CovariateProfile("1", {(0, 1): np.array([1.0])}),
        CovariateProfile("2", {(0, 1): np.array([0.0])}),
        CovariateProfile("3", {(0, 1): np.array([1.0])}),
    ]
    return validate_records(records, profiles, c1_space)


@pytest.fixture
def c1_sojourn(c1_history):
    return build_counting_system(c1_history, Clock.SOJOURN)


@pytest.fixture
def c1_covariates(c1_history):
    return TransitionCovariates.from_history(c1_history, names=("z",))


def illness_death_space():
    return StateSpace.from_transitions(
        ("healthy", "ill", "dead"),
        [("healthy", "ill"), ("healthy", "dead"), ("ill", "dead")],
    )


def illness_death_rates(h_ill=0.08, h_dead=0.04, ill_dead=0.10):
    return np.array([[0.0, h_ill, h_dead], [0.0, 0.0, ill_dead], [0.0, 0.0, 0.0]])


def simulated_history(seed, n=40, d=0, beta=(), power=1.0, horizon=12.0,
                      shared=False, covariate_law="normal"):
    """Small random-but-valid dataset from the illness-death generator."""
    space = illness_death_space()
    config = SimConfig(
        space=space,
        rate_coeffs=illness_death_rates(),
        n_subjects=n,
        horizon=horizon,
        seed=seed,
        power=power,
        beta=np.asarray(beta, dtype=float),
        shared_covariates=shared,
        covariate_law=covariate_law,
    )
    return simulate_cohort(config).history()
