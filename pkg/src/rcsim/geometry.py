"""Intersection model: lanes, conflict points, and segment categories.

The conflict zone is represented as a timing topology rather than full 2-D
geometry: every lane path is an ordered sequence of conflict points separated
by segments whose travel times are preset by the rhythm solver.  Legs are
numbered 1..4 counterclockwise; lanes on each leg are numbered 1..n_s+n_l
from the border line to the center line, through lanes first, then left-turn
lanes.  Right-turn lanes and shared through/left lanes are not modeled.

Every path crosses the lanes of its near leg (the leg reached first) in
ascending lane order and then the lanes of its far leg in descending order,
2*(n_s+n_l) crossings in total.  Conflict point types:

    A  through x through
    B  through x left, on the through lane's near half
    C  through x left, on the through lane's far half
    D  left x left (the central zone)
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

from .errors import InvalidParameterError

LEGS = (1, 2, 3, 4)

#: segment category codes (travel time of a category-c segment is T_c; the
#: category-5 time depends on the left lane the segment belongs to)
CAT_UNIT, CAT_THROUGH_EDGE, CAT_MIDDLE, CAT_BETWEEN_LEFTS, CAT_LEFT_EDGE = 1, 2, 3, 4, 5


def near_leg(leg: int) -> int:
    """Leg whose lanes a path entering from `leg` crosses first."""
    return 4 if leg == 1 else leg - 1


def far_leg(leg: int) -> int:
    """Leg whose lanes a path entering from `leg` crosses last."""
    return 1 if leg == 4 else leg + 1


@dataclass(frozen=True)
class VehicleParams:
    """Common vehicle geometry and dynamics limits."""

    length: float        # L, m
    width: float         # w, m
    min_gap: float       # delta, m; minimum allowable inter-vehicle distance
    v_max: float         # m/s; fixed crossing speed inside the conflict zone
    a_max: float = 3.0   # m/s^2; acceleration/deceleration magnitude limit

    def __post_init__(self) -> None:
        for name in ("length", "width", "min_gap", "v_max", "a_max"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise InvalidParameterError(
                    f"VehicleParams.{name} must be positive and finite, got {value!r}"
                )


def min_gap_T(vehicle: VehicleParams) -> float:
    """Minimum safe time gap between two conflicting crossings of one point.

    This is the tightest admissible value; the toolkit always runs the rhythm
    at exactly this gap.
    """
    return (vehicle.length + vehicle.width + math.sqrt(2.0) * vehicle.min_gap) / vehicle.v_max


@dataclass(frozen=True)
class IntersectionSpec:
    """Symmetric four-leg intersection, possibly with virtual/disabled lanes.

    `virtual` marks placeholder lanes introduced when an asymmetric layout is
    made formally symmetric; `disabled` marks lanes turned off operationally.
    Both kinds keep their schedule slots but carry no traffic, and conflict
    points touching them are reported inactive.
    """

    n_s: int
    n_l: int
    vehicle: VehicleParams
    virtual: frozenset[tuple[int, int]] = frozenset()
    disabled: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self) -> None:
        if self.n_s < 1:
            raise InvalidParameterError(f"need at least one through lane per leg, got n_s={self.n_s}")
        if self.n_l < 0:
            raise InvalidParameterError(f"n_l must be non-negative, got {self.n_l}")
        for name in ("virtual", "disabled"):
            for leg, lane in getattr(self, name):
                if leg not in LEGS or not 1 <= lane <= self.lanes_per_leg:
                    raise InvalidParameterError(f"{name} entry ({leg},{lane}) out of range")

    @property
    def lanes_per_leg(self) -> int:
        return self.n_s + self.n_l

    def is_through(self, lane: int) -> bool:
        return lane <= self.n_s

    def is_virtual(self, leg: int, lane: int) -> bool:
        return (leg, lane) in self.virtual

    def is_active(self, leg: int, lane: int) -> bool:
        return (leg, lane) not in self.virtual and (leg, lane) not in self.disabled

    def lanes(self) -> Iterator[tuple[int, int]]:
        for leg in LEGS:
            for lane in range(1, self.lanes_per_leg + 1):
                yield leg, lane

    def active_lanes(self) -> Iterator[tuple[int, int]]:
        return ((leg, lane) for leg, lane in self.lanes() if self.is_active(leg, lane))


def virtualize(
    legs: tuple[tuple[int, int], ...] | list[tuple[int, int]],
    vehicle: VehicleParams,
    disabled: tuple[tuple[int, int], ...] = (),
) -> IntersectionSpec:
    """Make a possibly-asymmetric intersection formally symmetric.

    `legs` lists (through count, left count) for legs 1..4.  The symmetric
    intersection takes the maximum counts; lanes a leg lacks become virtual.
    Real lane numbering is preserved: a leg's k-th real through lane stays
    lane k and its k-th real left lane becomes lane n_s + k.
    """
    if len(legs) != 4:
        raise InvalidParameterError(f"expected 4 legs, got {len(legs)}")
    for idx, (raw_s, raw_l) in enumerate(legs, start=1):
        if raw_s < 1 or raw_l < 0:
            raise InvalidParameterError(f"leg {idx} has invalid lane counts ({raw_s},{raw_l})")
    n_s = max(s for s, _ in legs)
    n_l = max(l for _, l in legs)
    virtual = set()
    for leg, (raw_s, raw_l) in zip(LEGS, legs):
        virtual.update((leg, lane) for lane in range(raw_s + 1, n_s + 1))
        virtual.update((leg, n_s + k) for k in range(raw_l + 1, n_l + 1))
    return IntersectionSpec(
        n_s=n_s,
        n_l=n_l,
        vehicle=vehicle,
        virtual=frozenset(virtual),
        disabled=frozenset(disabled),
    )


@dataclass(frozen=True)
class ConflictPoint:
    """A location where two lane paths cross.

    `ordinal_a`/`ordinal_b` give the 0-based position of the point along each
    lane's crossing sequence.  The (lane_a, lane_b) pair is stored in
    canonical (sorted) order so that swapping the lanes yields the same point.
    """

    point_id: str
    lane_a: tuple[int, int]
    lane_b: tuple[int, int]
    ctype: str
    ordinal_a: int
    ordinal_b: int
    active: bool

    def ordinal_for(self, lane: tuple[int, int]) -> int:
        if lane == self.lane_a:
            return self.ordinal_a
        if lane == self.lane_b:
            return self.ordinal_b
        raise KeyError(f"{lane} is not part of conflict point {self.point_id}")


def conflict_points(spec: IntersectionSpec) -> list[ConflictPoint]:
    """Enumerate every conflict point of the symmetric intersection.

    Each point pairs the m-th crossing of a path from leg `i` (partner: lane
    m of the near leg) with the corresponding far-half crossing of that
    partner, so every point is generated exactly once.
    """
    n = spec.lanes_per_leg
    points = []
    for leg in LEGS:
        other = near_leg(leg)
        for lane in range(1, n + 1):
            for m in range(1, n + 1):
                side_a = ((leg, lane), m - 1)        # near-half crossing
                side_b = ((other, m), 2 * n - lane)  # same point, far half
                if side_b[0] < side_a[0]:
                    side_a, side_b = side_b, side_a
                (lane_a, ord_a), (lane_b, ord_b) = side_a, side_b
                a_through = spec.is_through(lane)
                b_through = spec.is_through(m)
                if a_through and b_through:
                    ctype = "A"
                elif not a_through and not b_through:
                    ctype = "D"
                elif a_through:
                    ctype = "B"   # through lane meets the left path on the through near half
                else:
                    ctype = "C"   # through lane meets the left path on the through far half
                active = spec.is_active(*lane_a) and spec.is_active(*lane_b)
                pid = f"{ctype}:{lane_a[0]}.{lane_a[1]}x{lane_b[0]}.{lane_b[1]}"
                points.append(
                    ConflictPoint(pid, lane_a, lane_b, ctype, ord_a, ord_b, active)
                )
    return points


def segment_categories(spec: IntersectionSpec, lane: int) -> tuple[int, ...]:
    """Segment categories along one lane's path, in travel order.

    A path with 2n crossings has 2n-1 inter-point segments.  Through paths
    run border gaps (1), a through/left edge (2), gaps between same-leg left
    crossings (4), the middle gap (3), and back out symmetrically.  Left
    paths see unit gaps everywhere except the two lane-specific edges (5);
    their central crossings sit in the left-conflict zone whose gaps are
    category 1.  With no left lanes the middle gap joins two through lanes
    and is category 1 as well.
    """
    n_s, n_l = spec.n_s, spec.n_l
    if not 1 <= lane <= spec.lanes_per_leg:
        raise InvalidParameterError(f"lane {lane} out of range")
    border = [CAT_UNIT] * (n_s - 1)
    if spec.is_through(lane):
        if n_l == 0:
            middle = [CAT_UNIT]
        else:
            middle = (
                [CAT_THROUGH_EDGE]
                + [CAT_BETWEEN_LEFTS] * (n_l - 1)
                + [CAT_MIDDLE]
                + [CAT_BETWEEN_LEFTS] * (n_l - 1)
                + [CAT_THROUGH_EDGE]
            )
    else:
        middle = [CAT_LEFT_EDGE] + [CAT_UNIT] * (2 * n_l - 1) + [CAT_LEFT_EDGE]
    return tuple(border + middle + border)
