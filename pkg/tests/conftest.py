import math

import pytest

from rcsim.geometry import IntersectionSpec, VehicleParams
from rcsim.rhythm import RhythmTiming, SegmentLengths, entry_schedule, solve_travel_times


@pytest.fixture
def default_vehicle():
    """Baseline parameters: L=4.5 m, w=2 m, delta=1 m, v_max=10 m/s."""
    return VehicleParams(length=4.5, width=2.0, min_gap=1.0, v_max=10.0, a_max=3.0)


@pytest.fixture
def t1_default(default_vehicle):
    return (4.5 + 2.0 + math.sqrt(2.0)) / 10.0


def make_spec(n_s, n_l, vehicle, **kw):
    return IntersectionSpec(n_s=n_s, n_l=n_l, vehicle=vehicle, **kw)


def default_lengths(n_s, n_l):
    """Segment lengths that are solvable in the band [4, v_max] for n_l <= 3."""
    return SegmentLengths(
        cat2=12.0,
        cat3=8.0,
        cat4=10.0,
        cat5={n_s + 1 + j: 24.0 - 4.0 * j for j in range(n_l)},
    )


def solved_timing(spec):
    return solve_travel_times(spec, default_lengths(spec.n_s, spec.n_l),
                              (4.0, spec.vehicle.v_max))


@pytest.fixture
def big_spec(default_vehicle):
    """The symmetric test intersection with 3 through and 2 left lanes."""
    return make_spec(3, 2, default_vehicle)


@pytest.fixture
def big_timing(big_spec):
    return solved_timing(big_spec)


@pytest.fixture
def big_schedule(big_spec, big_timing):
    return entry_schedule(big_spec, big_timing)


@pytest.fixture
def toy_timing():
    """Three-lane toy rhythm with T1 = 0.625 s and all conditions holding."""
    return RhythmTiming(t1=0.625, t2=0.625, t3=0.625, t4=0.625,
                        t5={3: 0.625}, k0=0, k0p=1, k0pp={3: 1}, k0ppp={})
