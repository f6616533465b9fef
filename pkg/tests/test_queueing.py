import math

import numpy as np
import pytest

from rcsim.errors import InvalidParameterError, UnstableInputError
from rcsim.queueing import (
    ArrivalDistribution,
    admissible_rate,
    average_delay,
    balance_residual,
    delay_bound,
    lee_vacation_wait,
    poisson_delay,
    simulate_chain,
    steady_state,
)


def two_point_half():
    """P0 = P1 = 0.5, so 2*theta*T1 = 0.5."""
    return ArrivalDistribution.from_probs([0.5, 0.5], t1=1.0)


def random_admissible(rng, t1=1.0):
    """Random finitely supported distribution with mean arrivals < 1."""
    size = rng.integers(2, 7)
    raw = rng.random(size) + 1e-3
    raw /= raw.sum()
    mean = float(np.dot(np.arange(size), raw))
    target = rng.uniform(0.05, 0.95)
    if mean > target:  # mix toward an empty interval to hit the target mean
        beta = target / mean
        raw = raw * beta
        raw[0] += 1.0 - raw.sum()
    return ArrivalDistribution.from_probs(raw, t1=t1)


# ---------------------------------------------------------------------------
# the chain oracle itself
# ---------------------------------------------------------------------------

def test_chain_matches_hand_solved_state():
    stats = simulate_chain(two_point_half(), steps=200_000, seed=7)
    assert stats.p0_hat == pytest.approx(0.5, abs=4 * stats.p0_se)
    # queue is 0 or 1 right before a slot; half-step average is q1/2
    assert stats.mean_queue == pytest.approx(0.25, abs=0.01)


# ---------------------------------------------------------------------------
# steady state
# ---------------------------------------------------------------------------

def test_steady_state_hand_example():
    state = steady_state(two_point_half())
    assert state.probs[0] == pytest.approx(0.5)
    assert state.probs[1] == pytest.approx(0.5)
    assert np.all(np.abs(state.probs[2:]) < 1e-15)
    assert state.residual < 1e-12


def test_steady_state_empty_limit():
    arr = ArrivalDistribution.from_probs([0.999, 0.001], t1=1.0)
    state = steady_state(arr)
    assert state.probs[0] == pytest.approx(0.999, abs=1e-12)
    assert state.probs[1:].sum() == pytest.approx(0.001, abs=1e-9)


def test_steady_state_rejects_unstable():
    with pytest.raises(UnstableInputError):
        steady_state(ArrivalDistribution.from_probs([0.4, 0.2, 0.4], t1=1.0))


def test_p0_identity_random_distributions():
    rng = np.random.default_rng(42)
    for _ in range(20):
        arr = random_admissible(rng)
        state = steady_state(arr)
        assert state.probs[0] == pytest.approx(1.0 - arr.mean_per_interval, abs=1e-12)
        # normalization route: the recurrence tail must account for the rest
        assert state.residual < 1e-8


def test_balance_equations_hold():
    rng = np.random.default_rng(3)
    for _ in range(10):
        arr = random_admissible(rng)
        state = steady_state(arr)
        assert balance_residual(arr, state) < 1e-10


def test_chain_certifies_recurrence():
    rng = np.random.default_rng(11)
    arr = random_admissible(rng)
    state = steady_state(arr)
    stats = simulate_chain(arr, steps=400_000, seed=5)
    assert stats.p0_hat == pytest.approx(float(state.probs[0]), abs=4 * stats.p0_se)


# ---------------------------------------------------------------------------
# delay formulas
# ---------------------------------------------------------------------------

def test_average_delay_two_point_is_t1():
    state = steady_state(two_point_half())
    est = average_delay(state, theta=0.25, t1=1.0)
    assert est.mean_delay == pytest.approx(1.0, abs=1e-12)
    assert est.mean_delay == pytest.approx(est.mean_queue / 0.25, abs=1e-9)


def test_average_delay_empty_limit():
    arr = ArrivalDistribution.poisson(theta=1e-4, t1=1.0)
    state = steady_state(arr)
    est = average_delay(state, theta=1e-4, t1=1.0)
    assert est.mean_delay == pytest.approx(1.0, rel=1e-3)


@pytest.mark.parametrize("rho", [0.3, 0.5, 0.7, 0.9])
def test_recurrence_matches_poisson_closed_form(rho):
    theta = rho / 2.0
    arr = ArrivalDistribution.poisson(theta, t1=1.0)
    state = steady_state(arr)
    est = average_delay(state, theta, t1=1.0)
    closed = poisson_delay(theta, t1=1.0)
    assert abs(est.mean_delay - closed) < 1e-4 * closed


def test_poisson_delay_values():
    assert poisson_delay(0.25, 1.0) == pytest.approx(2.0)
    assert poisson_delay(0.45, 1.0) == pytest.approx(10.0)
    assert poisson_delay(0.3, 0.7914) == pytest.approx(0.7914 / (1 - 2 * 0.3 * 0.7914))
    with pytest.raises(UnstableInputError):
        poisson_delay(0.5, 1.0)


def test_delay_bound_values():
    assert delay_bound(0.35, 1.0) == pytest.approx(1.0 + 1.0 / 0.3)
    for theta in np.linspace(0.05, 0.45, 9):
        assert delay_bound(theta, 1.0) >= poisson_delay(theta, 1.0)
    with pytest.raises(UnstableInputError):
        delay_bound(0.6, 1.0)


def test_bound_holds_for_bunched_arrivals():
    # up to two arrivals per interval, bursty: P0=0.65, P2=0.35
    arr = ArrivalDistribution.from_probs([0.65, 0.0, 0.35], t1=1.0)
    assert arr.mean_per_interval == pytest.approx(0.7)
    stats = simulate_chain(arr, steps=1_000_000, seed=9)
    bound = delay_bound(arr.theta, 1.0)
    assert stats.mean_delay <= bound + 3 * stats.delay_se


def test_delay_monotone_in_theta():
    t1 = 1.0
    delays = []
    for theta in np.linspace(0.05, 0.45, 9):
        arr = ArrivalDistribution.poisson(theta, t1)
        delays.append(average_delay(steady_state(arr), theta, t1).mean_delay)
    assert all(b >= a - 1e-9 for a, b in zip(delays, delays[1:]))


# ---------------------------------------------------------------------------
# admissible rate and the vacation-wait formula
# ---------------------------------------------------------------------------

def test_admissible_rate_default(default_vehicle):
    rate = admissible_rate(default_vehicle)
    assert rate == pytest.approx(0.6318, abs=5e-5)
    assert rate * 3600 == pytest.approx(2274, abs=1.0)


def test_admissible_rate_linear_in_speed(default_vehicle):
    from dataclasses import replace
    doubled = replace(default_vehicle, v_max=2 * default_vehicle.v_max)
    assert admissible_rate(doubled) == pytest.approx(2 * admissible_rate(default_vehicle))


def test_admissible_rate_toy():
    # T1 = 0.625 gives 0.8 veh/s
    v_toy = dict(length=4.5, width=2.0, min_gap=1.0 / math.sqrt(2.0), v_max=12.0)
    from rcsim.geometry import VehicleParams
    assert admissible_rate(VehicleParams(**v_toy)) == pytest.approx(0.8, abs=1e-9)


def test_lee_vacation_wait_values():
    assert lee_vacation_wait(0.3, 1.0, 1.0) == pytest.approx(0.3 / 1.4 + 0.5)
    # vanishing load leaves only the residual half-vacation
    assert lee_vacation_wait(1e-9, 1.0, 1.0) == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(UnstableInputError):
        lee_vacation_wait(1.2, 1.0, 0.5)
    with pytest.raises(UnstableInputError):
        lee_vacation_wait(0.9, 10.0, 1.2)  # lam*vacation >= 1
    with pytest.raises(InvalidParameterError):
        lee_vacation_wait(0.3, -1.0, 1.0)


def test_lee_formula_reduces_to_closed_form():
    """Deterministic service 2*T1 and vacation 2*T1 recover T1/(1-2 theta T1)."""
    t1 = 0.7914
    for theta in (0.1, 0.3, 0.5 / (2 * t1) * 0.9):
        w = lee_vacation_wait(theta, 1.0 / (2 * t1), 2 * t1)
        assert w == pytest.approx(poisson_delay(theta, t1), rel=1e-12)


# ---------------------------------------------------------------------------
# input validation
# ---------------------------------------------------------------------------

def test_truncation_warning_when_tail_remains():
    from rcsim.errors import TruncationWarning
    arr = ArrivalDistribution.poisson(0.45, 1.0)  # rho = 0.9, slow tail decay
    with pytest.warns(TruncationWarning):
        state = steady_state(arr, n_max=16, tol=1e-10)
    assert state.residual > 1e-10


def test_arrival_distribution_validation():
    with pytest.raises(InvalidParameterError):
        ArrivalDistribution(theta=0.25, t1=1.0, probs=(0.5, 0.4))  # sums to 0.9
    with pytest.raises(InvalidParameterError):
        ArrivalDistribution(theta=0.40, t1=1.0, probs=(0.5, 0.5))  # mean mismatch
    poisson = ArrivalDistribution.poisson(0.3, 1.0)
    assert sum(poisson.probs) == pytest.approx(1.0, abs=1e-12)
    assert np.dot(np.arange(len(poisson.probs)), poisson.probs) == pytest.approx(0.6, abs=1e-12)
