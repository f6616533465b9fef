"""Adjustment-zone speed curves.

Each vehicle enters the zone at full speed and must reach its far end
exactly at an assigned entry slot, again at full speed.  The curve holds
v_max, decelerates at the limit rate, optionally cruises at the slow speed
v_q, accelerates back, and holds v_max to the slot time.  Same-lane spacing
is guaranteed either numerically or by the end-time shift rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InfeasibleTargetError,
    InvalidParameterError,
    ZoneOverflowError,
    ZoneTooShortError,
)
from .geometry import VehicleParams, min_gap_T

SHAPE_PLATEAU = "plateau"
SHAPE_TRIANGULAR = "triangular"

_SPACING_STEP = 0.01  # s, dense sampling step for pairwise spacing checks


def cruise_speed_vq(vehicle: VehicleParams) -> float:
    """Slow cruise speed (L + delta) / (2*T1).

    At v_q, vehicles following at the minimum same-lane headway 2*T1 are
    spaced exactly L + delta apart.
    """
    return (vehicle.length + vehicle.min_gap) / (2.0 * min_gap_T(vehicle))


@dataclass(frozen=True)
class AdjustmentZone:
    """Road section of length `length` ahead of the conflict zone."""

    length: float
    vehicle: VehicleParams

    def __post_init__(self) -> None:
        if self.length <= 0:
            raise InvalidParameterError("zone length must be positive")
        v_m, a_m = self.vehicle.v_max, self.vehicle.a_max
        v_q = cruise_speed_vq(self.vehicle)
        needed = (v_m**2 - v_q**2) / a_m  # full decel + accel excursion
        if self.length < needed:
            raise InvalidParameterError(
                f"zone length {self.length} m cannot fit the maximal-deceleration "
                f"curve ({needed:.2f} m needed)"
            )


def solve_delta_t(t0: float, target: float, zone: AdjustmentZone,
                  vehicle: VehicleParams) -> tuple[float, str]:
    """Width of the slow-down interval realizing arrival at `target`.

    The required delay beyond free flow decides the curve shape: small delays
    use the triangular dip (quadratic equation), larger ones the plateau at
    v_q (linear equation).  Raises when the target precedes free-flow arrival
    or when even a dip spanning the whole traversal cannot realize the delay.
    """
    v_m, a_m = vehicle.v_max, vehicle.a_max
    v_q = cruise_speed_vq(vehicle)
    free_flow = t0 + zone.length / v_m
    delay = target - free_flow
    if delay < -1e-9:
        raise InfeasibleTargetError(
            f"target {target:.6f} earlier than free-flow arrival {free_flow:.6f}"
        )
    delay = max(delay, 0.0)
    tri_cap = (v_m - v_q) ** 2 / (a_m * v_m)  # delay when the dip just reaches v_q
    if delay <= tri_cap:
        dt = 2.0 * math.sqrt(v_m * delay / a_m)
        shape = SHAPE_TRIANGULAR
    else:
        dt = v_m * delay / (v_m - v_q) + (v_m - v_q) / a_m
        shape = SHAPE_PLATEAU
    if dt > target - t0 + 1e-9:
        raise ZoneTooShortError(
            f"delay {delay:.3f} s needs a {dt:.3f} s slow-down, longer than the "
            f"{target - t0:.3f} s traversal window"
        )
    return dt, shape


@dataclass(frozen=True)
class SpeedCurve:
    """A single vehicle's speed profile across the adjustment zone.

    Piecewise constant acceleration: v_max until ts, ramp down, optional v_q
    plateau, ramp up ending at te, v_max until the assigned arrival time.
    """

    t0: float
    ts: float
    te: float
    target: float
    shape: str
    v_q: float
    v_m: float
    a_m: float
    zone_length: float

    def __post_init__(self) -> None:
        if not (self.t0 - 1e-9 <= self.ts <= self.te <= self.target + 1e-9):
            raise InvalidParameterError(
                f"curve times out of order: {self.t0}, {self.ts}, {self.te}, {self.target}"
            )

    @property
    def dip_width(self) -> float:
        return self.te - self.ts

    @property
    def dip_speed(self) -> float:
        """Lowest speed reached."""
        if self.shape == SHAPE_PLATEAU:
            return self.v_q
        return self.v_m - self.a_m * self.dip_width / 2.0

    def _breaks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Breakpoint times, speeds, and positions of the piecewise profile."""
        ramp = (self.v_m - self.dip_speed) / self.a_m
        ts, te = self.ts, self.te
        t_pts = [self.t0, ts, ts + ramp, te - ramp, te, self.target]
        v_pts = [self.v_m, self.v_m, self.dip_speed, self.dip_speed, self.v_m, self.v_m]
        t = np.asarray(t_pts)
        v = np.asarray(v_pts)
        x = np.zeros(len(t))
        # speed is linear between breakpoints: trapezoid areas are exact
        np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t), out=x[1:])
        return t, v, x

    def speed(self, t) -> np.ndarray:
        t_pts, v_pts, _ = self._breaks()
        tt = np.clip(np.asarray(t, dtype=float), self.t0, self.target)
        return np.interp(tt, t_pts, v_pts)

    def position(self, t) -> np.ndarray:
        """Distance into the zone, extrapolated at v_max outside the pass."""
        t_pts, v_pts, x_pts = self._breaks()
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty(tt.shape)
        inside = (tt >= self.t0) & (tt <= self.target)
        idx = np.clip(np.searchsorted(t_pts, tt[inside], side="right") - 1, 0, len(t_pts) - 2)
        dt = tt[inside] - t_pts[idx]
        v0 = v_pts[idx]
        slope = np.zeros(len(t_pts) - 1)
        seg_dt = np.diff(t_pts)
        nz = seg_dt > 0
        slope[nz] = np.diff(v_pts)[nz] / seg_dt[nz]
        out[inside] = x_pts[idx] + v0 * dt + 0.5 * slope[idx] * dt**2
        out[tt < self.t0] = self.v_m * (tt[tt < self.t0] - self.t0)  # extrapolate upstream
        out[tt > self.target] = self.zone_length + self.v_m * (tt[tt > self.target] - self.target)
        return out[0] if np.isscalar(t) or np.ndim(t) == 0 else out


def build_curve(t0: float, target: float, te: float, zone: AdjustmentZone,
                vehicle: VehicleParams) -> SpeedCurve:
    """Curve with a given end-of-acceleration time; dip width from the target."""
    dt, shape = solve_delta_t(t0, target, zone, vehicle)
    ts = te - dt
    if ts < t0 - 1e-9:
        raise ZoneTooShortError("slow-down would have to start before zone entry")
    return SpeedCurve(
        t0=t0, ts=max(ts, t0), te=te, target=target, shape=shape,
        v_q=cruise_speed_vq(vehicle), v_m=vehicle.v_max, a_m=vehicle.a_max,
        zone_length=zone.length,
    )


def spacing_check(leader: SpeedCurve, follower: SpeedCurve,
                  vehicle: VehicleParams, step: float = _SPACING_STEP) -> float:
    """Minimum bumper-to-bumper gap while both vehicles share the zone.

    Samples position(leader) - position(follower) - L on a dense grid over
    [follower.t0, leader.target].
    """
    lo, hi = follower.t0, leader.target
    if hi <= lo:
        return math.inf
    n = max(int(math.ceil((hi - lo) / step)) + 1, 8)
    t = np.linspace(lo, hi, n)
    gap = leader.position(t) - follower.position(t) - vehicle.length
    return float(gap.min())


def _end_shift(vehicle: VehicleParams) -> float:
    """End-time shift that restores spacing when the follower dips less."""
    v_q = cruise_speed_vq(vehicle)
    return (vehicle.length + math.sqrt(2.0) * vehicle.min_gap + 2.0 * vehicle.width) / (
        vehicle.v_max - v_q
    )


def assign_curve(
    t0: float,
    predecessor: SpeedCurve | None,
    slot_offset: float,
    slot_period: float,
    zone: AdjustmentZone,
    vehicle: VehicleParams,
    max_slot_advances: int = 10_000,
) -> SpeedCurve:
    """Assign the earliest feasible schedule slot and a safe curve for it.

    Step 0 picks the earliest slot at or after free-flow arrival that the
    same-lane predecessor has not taken.  Step 1 solves the dip width.
    Step 2 sets te to the slot; if the numeric spacing check against the
    predecessor fails, te moves per the end-time rule (shared te when the
    follower dips at least as long, shifted te otherwise); when the shifted
    te overruns the slot, the target advances to the next slot and the dip
    is re-solved.
    """
    v_m = vehicle.v_max
    free_flow = t0 + zone.length / v_m

    def slot_at_or_after(t: float) -> float:
        k = math.ceil((t - slot_offset) / slot_period - 1e-12)
        return slot_offset + k * slot_period

    target = slot_at_or_after(free_flow)
    if predecessor is not None and target <= predecessor.target + slot_period / 2:
        target = slot_at_or_after(predecessor.target + slot_period / 2)

    delta_min = vehicle.min_gap - 1e-9
    for _ in range(max_slot_advances):
        dt, _shape = solve_delta_t(t0, target, zone, vehicle)
        candidates = [target]
        if predecessor is not None:
            if dt >= predecessor.dip_width:
                te_rule = predecessor.te
            else:
                te_rule = predecessor.te + _end_shift(vehicle)
            if te_rule > target + 1e-9:
                target = slot_at_or_after(target + slot_period / 2)
                continue
            candidates.append(min(max(te_rule, t0 + dt), target))
        feasible = None
        for te in candidates:
            if te < t0 + dt - 1e-9:
                continue
            curve = build_curve(t0, target, te, zone, vehicle)
            if predecessor is None or spacing_check(predecessor, curve, vehicle) >= delta_min:
                feasible = curve
                break
        if feasible is not None:
            return feasible
        target = slot_at_or_after(target + slot_period / 2)
    raise ZoneOverflowError(
        f"no feasible curve for entry at t0={t0:.3f}: queue spills out of the zone"
    )
