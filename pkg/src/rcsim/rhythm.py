"""Rhythm synthesis, the periodic entry schedule, and the collision audit.

The rhythm is a set of preset segment travel times (T1..T4 plus a per-left-
lane T5) satisfying parity conditions that make every pairwise arrival-time
difference at every conflict point an odd multiple of T1, hence at least T1.
The audit verifies this by brute-force enumeration of scheduled entries
propagated through the segment travel times; a closed-form route over the
same topology exists for cross-checking.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InfeasibleBandError, InvalidParameterError
from .geometry import (
    CAT_BETWEEN_LEFTS,
    CAT_MIDDLE,
    CAT_THROUGH_EDGE,
    CAT_UNIT,
    ConflictPoint,
    IntersectionSpec,
    conflict_points,
    min_gap_T,
    segment_categories,
)

#: absolute tolerances for timing and distance comparisons; all audited
#: quantities are exact rationals of T1 in theory, tolerance only absorbs
#: floating-point error
EPS_TIME = 1e-9
EPS_DIST = 1e-6

_MAX_MULTIPLE = 500  # search bound for odd-multiple selection


@dataclass(frozen=True)
class SegmentLengths:
    """Physical lengths (m) of the category 2..5 segments.

    Category-1 segments are pinned to v_max * T1 by the lane-spacing rule, so
    their length is not an input.  `cat5` maps each left lane number
    (n_s+1 .. n_s+n_l) to its edge-segment length.
    """

    cat2: float | None = None
    cat3: float | None = None
    cat4: float | None = None
    cat5: Mapping[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class RhythmTiming:
    """Preset segment travel times and their odd/even multiple witnesses.

    t4 is None when fewer than two left lanes exist (no category-4 segment);
    t2/t3 are None when there are no left lanes at all.  The witness fields
    record the integers that certify each parity condition.
    """

    t1: float
    t2: float | None = None
    t3: float | None = None
    t4: float | None = None
    t5: Mapping[int, float] = field(default_factory=dict)
    k0: int | None = None                    # t4 = (2*k0+1) * t1
    k0p: int | None = None                   # 2*t2 + t3 = (2*k0p+1) * t1
    k0pp: Mapping[int, int] = field(default_factory=dict)    # per left lane
    k0ppp: Mapping[tuple[int, int], int] = field(default_factory=dict)  # per lane pair

    @property
    def period(self) -> float:
        return 2.0 * self.t1


@dataclass(frozen=True)
class ConditionReport:
    """Result of checking the five collision-freedom conditions."""

    unit_gap: bool | None   # t1 equals the vehicle minimum gap (None if not checked)
    t4_odd: bool
    edge_sum_odd: bool      # 2*t2 + t3 odd multiple of t1
    left_edge_sums_odd: bool  # 2*t5[l] + t3 odd multiple, every left lane
    t5_differences_even: bool

    def all_hold(self) -> bool:
        checks = [self.t4_odd, self.edge_sum_odd, self.left_edge_sums_odd,
                  self.t5_differences_even]
        if self.unit_gap is not None:
            checks.append(self.unit_gap)
        return all(checks)


def _multiple_of(x: float, t1: float, eps: float = EPS_TIME) -> int | None:
    """Integer m with |x - m*t1| < eps, or None."""
    m = round(x / t1)
    return m if abs(x - m * t1) < eps else None


def check_conditions(
    timing: RhythmTiming,
    expected_t1: float | None = None,
    eps: float = EPS_TIME,
) -> ConditionReport:
    """Verify the five collision-freedom conditions by direct substitution."""
    t1 = timing.t1
    unit_gap = None if expected_t1 is None else abs(t1 - expected_t1) < eps

    if timing.t4 is None:
        t4_odd = True
    else:
        m = _multiple_of(timing.t4, t1, eps)
        t4_odd = m is not None and m % 2 == 1

    if timing.t2 is None or timing.t3 is None:
        edge_sum_odd = True
    else:
        m = _multiple_of(2 * timing.t2 + timing.t3, t1, eps)
        edge_sum_odd = m is not None and m % 2 == 1

    left_ok = True
    for t5 in timing.t5.values():
        if timing.t3 is None:
            left_ok = False
            break
        m = _multiple_of(2 * t5 + timing.t3, t1, eps)
        left_ok = left_ok and m is not None and m % 2 == 1
    diffs_ok = True
    lanes = sorted(timing.t5)
    for i, li in enumerate(lanes):
        for lj in lanes[i + 1:]:
            m = _multiple_of(timing.t5[li] - timing.t5[lj], t1, eps)
            diffs_ok = diffs_ok and m is not None and m % 2 == 0
    return ConditionReport(unit_gap, t4_odd, edge_sum_odd, left_ok, diffs_ok)


def _pick_odd_multiple(length: float, t1: float, band: tuple[float, float],
                       minus: float = 0.0, halve: bool = False,
                       parity: int | None = None) -> tuple[float, int]:
    """Smallest k such that t = ((2k+1)*t1 - minus)/(2 if halve else 1)
    is positive and length/t lies in the band.

    Returns (t, k).  Raises InfeasibleBandError reporting the nearest
    achievable speeds when no k works.
    """
    lo, hi = band
    nearest_below, nearest_above = None, None
    ks = range(parity if parity is not None else 0, _MAX_MULTIPLE,
               2 if parity is not None else 1)
    for k in ks:
        t = (2 * k + 1) * t1 - minus
        if halve:
            t /= 2.0
        if t <= 0:
            continue
        speed = length / t
        if lo - 1e-12 <= speed <= hi + 1e-12:
            return t, k
        if speed > hi:
            nearest_above = speed if nearest_above is None else min(nearest_above, speed)
        else:
            nearest_below = speed if nearest_below is None else max(nearest_below, speed)
    raise InfeasibleBandError(
        f"no odd multiple of T1={t1:.6g} puts speed for length {length:.6g} m in "
        f"[{lo:.6g}, {hi:.6g}] m/s; nearest achievable speeds: "
        f"{nearest_below!r} below, {nearest_above!r} above"
    )


def solve_travel_times(
    spec: IntersectionSpec,
    lengths: SegmentLengths,
    speed_band: tuple[float, float],
) -> RhythmTiming:
    """Choose the smallest admissible travel times satisfying the conditions.

    T1 is fixed by the vehicle minimum gap.  T3 is chosen first (fastest
    admissible, it carries no parity constraint of its own), then T2, T4, and
    the T5 values in ascending lane order.  All T5 choices share one parity
    class so that their pairwise differences are even multiples of T1.
    """
    v_lo, v_hi = speed_band
    if not (0 < v_lo <= v_hi):
        raise InvalidParameterError(f"invalid speed band [{v_lo}, {v_hi}]")
    if v_hi > spec.vehicle.v_max + 1e-12:
        raise InvalidParameterError(
            f"band upper speed {v_hi} exceeds vehicle v_max {spec.vehicle.v_max}"
        )
    t1 = min_gap_T(spec.vehicle)
    if spec.n_l == 0:
        return RhythmTiming(t1=t1)

    for name in ("cat2", "cat3"):
        if getattr(lengths, name) is None:
            raise InvalidParameterError(f"segment length {name} required when n_l >= 1")
    t3 = lengths.cat3 / v_hi
    t2, k0p = _pick_odd_multiple(lengths.cat2, t1, speed_band, minus=t3, halve=True)

    t4, k0 = (None, None)
    if spec.n_l >= 2:
        if lengths.cat4 is None:
            raise InvalidParameterError("segment length cat4 required when n_l >= 2")
        t4, k0 = _pick_odd_multiple(lengths.cat4, t1, speed_band)

    left_lanes = list(range(spec.n_s + 1, spec.n_s + spec.n_l + 1))
    for lane in left_lanes:
        if lane not in lengths.cat5:
            raise InvalidParameterError(f"cat5 length missing for left lane {lane}")

    def solve_t5(parity: int | None) -> tuple[dict[int, float], dict[int, int]]:
        t5, k0pp = {}, {}
        for lane in left_lanes:
            t5[lane], k0pp[lane] = _pick_odd_multiple(
                lengths.cat5[lane], t1, speed_band, minus=t3, halve=True, parity=parity
            )
        return t5, k0pp

    # first lane picks its minimum; the shared parity class follows from it,
    # falling back to the other class if some later lane cannot fit
    _, k_first = _pick_odd_multiple(lengths.cat5[left_lanes[0]], t1, speed_band,
                                    minus=t3, halve=True)
    try:
        t5, k0pp = solve_t5(k_first % 2)
    except InfeasibleBandError:
        t5, k0pp = solve_t5((k_first + 1) % 2)

    k0ppp = {}
    for i, li in enumerate(left_lanes):
        for lj in left_lanes[i + 1:]:
            k0ppp[(li, lj)] = round((t5[li] - t5[lj]) / (2 * t1))
    return RhythmTiming(t1=t1, t2=t2, t3=t3, t4=t4, t5=t5,
                        k0=k0, k0p=k0p, k0pp=k0pp, k0ppp=k0ppp)


# ---------------------------------------------------------------------------
# entry schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntrySchedule:
    """Per-lane periodic entry times: offset + k * period, k integer.

    Offsets depend only on the lane number (all legs share them); virtual and
    disabled lanes keep their slots but are flagged unschedulable.
    """

    period: float
    offsets: Mapping[int, float]
    unschedulable: frozenset[tuple[int, int]] = frozenset()

    def slot_times(self, lane: int, t_lo: float, t_hi: float) -> np.ndarray:
        """All slots of `lane` in [t_lo, t_hi]."""
        off = self.offsets[lane]
        k_lo = math.ceil((t_lo - off) / self.period - 1e-12)
        k_hi = math.floor((t_hi - off) / self.period + 1e-12)
        if k_hi < k_lo:
            return np.empty(0)
        return off + self.period * np.arange(k_lo, k_hi + 1)

    def next_slot(self, lane: int, t: float) -> float:
        """Earliest slot of `lane` at or after time t."""
        off = self.offsets[lane]
        k = math.ceil((t - off) / self.period - 1e-12)
        return off + self.period * k


def _t4_term(timing: RhythmTiming, coeff: int) -> float:
    """coeff * T4 reduced via the parity identity when T4 does not exist.

    When no category-4 segment exists the schedule formulas still carry a
    formal coeff*T4 term; any admissible T4 is an odd multiple of T1, so the
    term contributes (coeff mod 2) * T1 modulo the period.
    """
    if timing.t4 is not None:
        return coeff * timing.t4
    return (coeff % 2) * timing.t1


def entry_schedule(spec: IntersectionSpec, timing: RhythmTiming) -> EntrySchedule:
    """Periodic entry times for every lane, reduced modulo the period.

    Through lane l enters at (2k+1)T1 for odd l and (2k)T1 for even l.  Left
    lane l enters at (2k+n_s-1)T1 + c*T4 + T2 + T3 with c = 2*n_l for odd
    l - n_s and c = 2*n_l - 1 otherwise.
    """
    period = timing.period
    offsets: dict[int, float] = {}
    for lane in range(1, spec.lanes_per_leg + 1):
        if spec.is_through(lane):
            base = timing.t1 if lane % 2 == 1 else 0.0
        else:
            if timing.t2 is None or timing.t3 is None:
                raise InvalidParameterError("timing lacks t2/t3 for left lanes")
            j = lane - spec.n_s
            coeff = 2 * spec.n_l if j % 2 == 1 else 2 * spec.n_l - 1
            base = (spec.n_s - 1) * timing.t1 + _t4_term(timing, coeff) + timing.t2 + timing.t3
        offsets[lane] = base % period
    unsched = frozenset(
        (leg, lane) for leg, lane in spec.lanes() if not spec.is_active(leg, lane)
    )
    return EntrySchedule(period=period, offsets=offsets, unschedulable=unsched)


# ---------------------------------------------------------------------------
# travel times along a path
# ---------------------------------------------------------------------------

def segment_times(spec: IntersectionSpec, timing: RhythmTiming, lane: int) -> np.ndarray:
    """Travel time of each inter-point segment along one lane's path."""
    times = []
    for cat in segment_categories(spec, lane):
        if cat == CAT_UNIT:
            times.append(timing.t1)
        elif cat == CAT_THROUGH_EDGE:
            times.append(timing.t2)
        elif cat == CAT_MIDDLE:
            times.append(timing.t3)
        elif cat == CAT_BETWEEN_LEFTS:
            times.append(timing.t4)
        else:
            times.append(timing.t5[lane])
    if any(t is None for t in times):
        raise InvalidParameterError("timing is missing a travel time its topology needs")
    return np.asarray(times, dtype=float)


def cumulative_travel(spec: IntersectionSpec, timing: RhythmTiming, lane: int) -> np.ndarray:
    """Cumulative travel time from entry to each conflict point (enumeration route)."""
    segs = segment_times(spec, timing, lane)
    out = np.empty(len(segs) + 1)
    out[0] = 0.0
    np.cumsum(segs, out=out[1:])
    return out


def closed_form_travel(spec: IntersectionSpec, timing: RhythmTiming,
                       lane: int, ordinal: int) -> float:
    """Closed-form cumulative travel time to the crossing at `ordinal`.

    Mirrors the per-type arrival-time expressions used in the audit theory;
    kept separate from `cumulative_travel` so the two routes can be checked
    against each other.
    """
    n_s, n_l = spec.n_s, spec.n_l
    n = spec.lanes_per_leg
    t1 = timing.t1
    q = ordinal
    if not 0 <= q <= 2 * n - 1:
        raise InvalidParameterError(f"ordinal {q} out of range")
    if spec.is_through(lane):
        if n_l == 0:
            return q * t1
        t2, t3, t4c = timing.t2, timing.t3, timing.t4 if timing.t4 is not None else 0.0
        if q <= n_s - 1:
            return q * t1
        if q <= n - 1:
            return (n_s - 1) * t1 + t2 + (q - n_s) * t4c
        if q <= n + n_l - 1:
            return (n_s - 1) * t1 + t2 + (n_l - 1) * t4c + t3 + (q - n) * t4c
        return (n_s - 1) * t1 + 2 * t2 + t3 + 2 * (n_l - 1) * t4c + (q - n - n_l) * t1
    t5 = timing.t5[lane]
    if q <= n_s - 1:
        return q * t1
    if q <= 2 * n - n_s - 1:
        return (q - 1) * t1 + t5
    return (q - 2) * t1 + 2 * t5


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointAudit:
    """Audit record for one conflict point."""

    point: ConflictPoint
    min_headway: float
    is_odd_multiple: bool
    worst_pair: tuple[float, float]


@dataclass(frozen=True)
class AuditReport:
    """Collision-freedom audit over every conflict point."""

    entries: tuple[PointAudit, ...]
    t1: float
    k_window: int
    passed: bool

    def failures(self) -> list[PointAudit]:
        thr = self.t1 - EPS_TIME
        return [e for e in self.entries if e.point.active and e.min_headway < thr]

    def to_csv_rows(self) -> list[tuple]:
        thr = self.t1 - EPS_TIME
        rows = []
        for e in self.entries:
            ok = (not e.point.active) or e.min_headway >= thr
            rows.append((e.point.point_id, e.point.ctype, e.min_headway,
                         e.is_odd_multiple, e.point.active, ok))
        return rows

    def to_text(self) -> str:
        lines = [
            f"collision audit: {'PASS' if self.passed else 'FAIL'} "
            f"(T1={self.t1:.9f} s, window +/-{self.k_window} slots, "
            f"{sum(1 for e in self.entries if e.point.active)} active points)"
        ]
        thr = self.t1 - EPS_TIME
        for e in self.entries:
            if e.point.active and e.min_headway < thr:
                lines.append(
                    f"  FAIL {e.point.point_id}: min gap {e.min_headway:.6f} s "
                    f"< T1, worst pair {e.worst_pair[0]:.6f}/{e.worst_pair[1]:.6f}"
                )
        return "\n".join(lines)


def audit(spec: IntersectionSpec, timing: RhythmTiming,
          k_window: int = 200, eps: float = EPS_TIME) -> AuditReport:
    """Enumerate all scheduled crossings at every conflict point.

    For each active point, both lanes' arrival times over k in
    [-k_window, k_window] are generated from the entry schedule plus the
    cumulative segment travel times; the minimum pairwise gap is recorded and
    every pairwise gap is checked to be an odd multiple of T1 within `eps`.
    Failures become report entries, never exceptions.
    """
    if k_window < 2:
        raise InvalidParameterError("k_window must cover at least two periods")
    schedule = entry_schedule(spec, timing)
    period = timing.period
    t1 = timing.t1
    ks = np.arange(-k_window, k_window + 1) * period
    cum = {lane: cumulative_travel(spec, timing, lane)
           for lane in range(1, spec.lanes_per_leg + 1)}

    entries = []
    all_pass = True
    for point in conflict_points(spec):
        (leg_a, lane_a), (leg_b, lane_b) = point.lane_a, point.lane_b
        base_a = schedule.offsets[lane_a] + cum[lane_a][point.ordinal_a]
        base_b = schedule.offsets[lane_b] + cum[lane_b][point.ordinal_b]
        times_a = base_a + ks
        times_b = base_b + ks
        diffs = np.abs(times_a[:, None] - times_b[None, :])
        idx = np.unravel_index(np.argmin(diffs), diffs.shape)
        min_gap = float(diffs[idx])
        mult = np.rint(diffs / t1)
        odd = bool(np.all(np.abs(diffs - mult * t1) < eps) and np.all(mult % 2 == 1))
        entries.append(PointAudit(
            point=point,
            min_headway=min_gap,
            is_odd_multiple=odd,
            worst_pair=(float(times_a[idx[0]]), float(times_b[idx[1]])),
        ))
        if point.active and min_gap < t1 - eps:
            all_pass = False
    return AuditReport(entries=tuple(entries), t1=t1, k_window=k_window, passed=all_pass)


# ---------------------------------------------------------------------------
# right-of-way profile and the minimum-gap geometry oracle
# ---------------------------------------------------------------------------

def row_profile(
    spec: IntersectionSpec,
    schedule: EntrySchedule,
    horizon: float,
    resolution: float,
    occupancy: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Number of lanes owning right-of-way over time.

    A lane owns ROW for `occupancy` seconds from each scheduled entry; the
    default occupancy is the protected crossing window T1 (half the period),
    which makes consecutive ROW bars on one lane alternate T1 on / T1 off.
    """
    t1 = schedule.period / 2.0
    if resolution > t1 / 4 + 1e-12:
        raise InvalidParameterError("resolution must be at most T1/4")
    occ = t1 if occupancy is None else occupancy
    times = np.arange(0.0, horizon, resolution)
    counts = np.zeros_like(times)
    for leg, lane in spec.lanes():
        if (leg, lane) in schedule.unschedulable:
            continue
        phase = np.mod(times - schedule.offsets[lane], schedule.period)
        counts += (phase < occ - 1e-12)
    return times, counts.astype(int)


def geometric_oracle(vehicle, gap: float, samples: int = 10_000) -> float:
    """Minimum clearance between two perpendicular crossing vehicles.

    Vehicle 1 moves along +x and vehicle 2 along +y at v_max, their center
    passages through the conflict point offset by `gap` seconds.  Returns the
    minimum over dense time samples of the distance between the two (axis-
    aligned) vehicle rectangles, zero if they ever overlap.  For separated
    passages this converges to |v_max * gap - L - w| / sqrt(2); at
    gap == min_gap_T the minimum equals the safety distance delta.
    """
    if gap < 0:
        raise InvalidParameterError("gap must be non-negative")
    if samples < 1000:
        raise InvalidParameterError("need at least 1000 samples")
    v = vehicle.v_max
    half_l, half_w = vehicle.length / 2.0, vehicle.width / 2.0
    span = gap / 2.0 + (vehicle.length + vehicle.width) / v
    t = np.linspace(-gap / 2.0 - span, -gap / 2.0 + span, samples)
    x1 = v * t           # center of vehicle 1 (moving along x, at y=0)
    y2 = v * (t + gap)   # center of vehicle 2 (moving along y, at x=0)
    # axis-aligned boxes: 1 spans x in [x1-hl, x1+hl], y in [-hw, hw];
    #                     2 spans x in [-hw, hw],      y in [y2-hl, y2+hl]
    gap_x = np.maximum(np.maximum(x1 - half_l - half_w, -half_w - (x1 + half_l)), 0.0)
    gap_y = np.maximum(np.maximum(y2 - half_l - half_w, -half_w - (y2 + half_l)), 0.0)
    return float(np.min(np.hypot(gap_x, gap_y)))
