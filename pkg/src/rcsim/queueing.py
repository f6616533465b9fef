"""Analytical performance of one rhythmically served lane.

A lane releases at most one vehicle per period 2*T1, so the queue right
before each entry slot is a discrete Markov chain w[k+1] = max(w[k]-1, 0) +
arrivals(k).  This module solves its steady state by recurrence, evaluates
the mean-delay formula, the Poisson closed form, the bunched-arrival upper
bound, and the admissible per-lane demand rate.  A direct Monte-Carlo chain
simulator is included as the independent check for all of them.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, TruncationWarning, UnstableInputError
from .geometry import VehicleParams, min_gap_T


@dataclass(frozen=True)
class ArrivalDistribution:
    """Distribution of the number of arrivals in one 2*T1 entry interval.

    `probs[i]` is the probability of i arrivals; the mean must equal
    2 * theta * t1 (theta in vehicles/second).
    """

    theta: float
    t1: float
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.theta <= 0 or self.t1 <= 0:
            raise InvalidParameterError("theta and t1 must be positive")
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < -1e-15):
            raise InvalidParameterError("negative probability")
        if abs(p.sum() - 1.0) > 1e-9:
            raise InvalidParameterError(f"probabilities sum to {p.sum()}, not 1")
        mean = float(np.dot(np.arange(len(p)), p))
        if abs(mean - self.mean_per_interval) > 1e-9:
            raise InvalidParameterError(
                f"mean arrivals {mean} inconsistent with 2*theta*t1 = {self.mean_per_interval}"
            )

    @property
    def mean_per_interval(self) -> float:
        return 2.0 * self.theta * self.t1

    @classmethod
    def poisson(cls, theta: float, t1: float, tail: float = 1e-16) -> "ArrivalDistribution":
        """Poisson counts with mean 2*theta*t1, tail truncated below `tail`."""
        lam = 2.0 * theta * t1
        probs = [math.exp(-lam)]
        k = 0
        while probs[-1] >= tail or k < lam + 2:
            k += 1
            probs.append(probs[-1] * lam / k)
            if k > 400:
                break
        # rescale the negligible truncation so the invariants hold exactly
        arr = np.asarray(probs)
        arr /= arr.sum()
        arr *= lam / np.dot(np.arange(len(arr)), arr)
        arr[0] += 1.0 - arr.sum()
        return cls(theta=theta, t1=t1, probs=tuple(arr))

    @classmethod
    def from_probs(cls, probs, t1: float) -> "ArrivalDistribution":
        """Build from raw probabilities, deriving theta from the mean."""
        p = np.asarray(probs, dtype=float)
        mean = float(np.dot(np.arange(len(p)), p))
        return cls(theta=mean / (2.0 * t1), t1=t1, probs=tuple(p))


@dataclass(frozen=True)
class SteadyState:
    """Steady-state queue-length probabilities right before an entry slot."""

    probs: np.ndarray
    truncation: int
    residual: float     # |1 - sum(probs)|, the truncated tail mass


@dataclass(frozen=True)
class DelayEstimate:
    mean_delay: float   # seconds
    mean_queue: float   # vehicles, averaged across the before/after jump
    method: str


def steady_state(arrival: ArrivalDistribution, n_max: int = 100_000,
                 tol: float = 1e-10) -> SteadyState:
    """Solve the steady-state recurrences, truncating adaptively.

    p0 = 1 - 2*theta*t1 is exact; p1, p2 follow in closed form and the rest
    from the balance recurrence.  Truncation doubles until the residual tail
    mass drops below `tol` or n_max is reached (warning in the latter case).
    """
    rho = arrival.mean_per_interval
    if rho >= 1.0:
        raise UnstableInputError(f"2*theta*T1 = {rho} >= 1: queue is unstable")
    if n_max < 10:
        raise InvalidParameterError("truncation bound must be at least 10")
    p = np.asarray(arrival.probs)
    if p[0] <= 0:
        raise InvalidParameterError("P0 must be positive")

    n = 256
    while True:
        n = min(n, n_max)
        probs = _recurrence(p, rho, n)
        residual = abs(1.0 - probs.sum())
        if residual < tol or n >= n_max:
            break
        n *= 2
    if residual > tol:
        warnings.warn(
            f"truncation at N={n} leaves residual {residual:.3e} > tol {tol:.3e}",
            TruncationWarning,
        )
    return SteadyState(probs=probs, truncation=n, residual=residual)


def _recurrence(p: np.ndarray, rho: float, n: int) -> np.ndarray:
    """p[0..n] from the balance recurrences; support of p may be short."""
    def P(i: int) -> float:
        return float(p[i]) if i < len(p) else 0.0

    out = np.zeros(n + 1)
    out[0] = 1.0 - rho
    if n >= 1:
        out[1] = (1.0 - P(0)) / P(0) * out[0]
    tiny_run = 0
    for i in range(1, n):
        acc = (1.0 - P(1)) * out[i] - P(i) * out[0]
        for j in range(max(1, i + 1 - len(p)), i):
            acc -= P(i + 1 - j) * out[j]
        nxt = acc / P(0)
        out[i + 1] = nxt
        # the tail is identically zero once a full support window has decayed
        tiny_run = tiny_run + 1 if abs(nxt) < 1e-18 else 0
        if tiny_run > len(p):
            break
    np.clip(out, 0.0, None, out=out)
    return out


def balance_residual(arrival: ArrivalDistribution, state: SteadyState) -> float:
    """Max violation of the raw balance equations over the truncated range."""
    p = np.asarray(arrival.probs)
    q = state.probs
    n = len(q) - 1
    worst = 0.0
    for i in range(n):  # q_i = q0*P_i + sum_{j=1..i+1} q_j * P_{i-j+1}
        rhs = q[0] * (p[i] if i < len(p) else 0.0)
        for j in range(max(1, i + 1 - len(p)), min(i + 1, n) + 1):
            k = i - j + 1
            if 0 <= k < len(p):
                rhs += q[j] * p[k]
        worst = max(worst, abs(q[i] - rhs))
    return worst


def average_delay(state: SteadyState, theta: float, t1: float) -> DelayEstimate:
    """Mean delay T1 + (1/theta) * sum_{n>=1} (n-1) p_n, with the queue
    averaged across its before/after-slot values."""
    q = state.probs
    idx = np.arange(len(q))
    extra = float(np.dot(np.maximum(idx - 1, 0), q))
    delay = t1 + extra / theta
    queue = float(np.dot(idx, q) - 0.5 * q[1:].sum())
    return DelayEstimate(mean_delay=delay, mean_queue=queue, method="recurrence")


def poisson_delay(theta: float, t1: float) -> float:
    """Closed-form mean delay T1 / (1 - 2*theta*T1) under Poisson arrivals."""
    rho = 2.0 * theta * t1
    if rho >= 1.0:
        raise UnstableInputError(f"2*theta*T1 = {rho} >= 1: delay diverges")
    return t1 / (1.0 - rho)


def delay_bound(theta: float, t1: float) -> float:
    """Upper bound T1 + T1/(1-2*theta*T1), valid when at most two vehicles
    can arrive per interval."""
    rho = 2.0 * theta * t1
    if rho >= 1.0:
        raise UnstableInputError(f"2*theta*T1 = {rho} >= 1: no finite bound")
    return t1 + t1 / (1.0 - rho)


def admissible_rate(vehicle: VehicleParams) -> float:
    """Largest per-lane demand rate with bounded queues, 1/(2*T1) veh/s."""
    return 1.0 / (2.0 * min_gap_T(vehicle))


def lee_vacation_wait(lam: float, mu: float, vacation: float) -> float:
    """Mean wait of an M/D/1 queue with vacations, limited service.

    W = (lam/mu^2) / (2*(1 - lam/mu)) + vacation/2.  Requires lam/mu < 1 and
    lam*vacation < 1 (the latter is the utilization condition in the form
    that is dimensionally consistent; see the module docs).
    """
    if lam < 0 or mu <= 0 or vacation < 0:
        raise InvalidParameterError("rates and vacation must be non-negative, mu positive")
    if lam / mu >= 1.0 or lam * vacation >= 1.0:
        raise UnstableInputError("vacation queue unstable: need lam/mu < 1 and lam*vacation < 1")
    return (lam / mu**2) / (2.0 * (1.0 - lam / mu)) + vacation / 2.0


# ---------------------------------------------------------------------------
# Monte-Carlo chain (independent oracle for the analytics above)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainStats:
    """Empirical statistics of the simulated slot-queue chain."""

    steps: int
    p0_hat: float
    p0_se: float
    mean_delay: float
    delay_se: float
    mean_queue: float


def simulate_chain(arrival: ArrivalDistribution, steps: int, seed: int,
                   burn_in: int = 1000, batches: int = 50) -> ChainStats:
    """Simulate w[k+1] = max(w[k]-1, 0) + arrivals directly.

    Delay is the half-step-averaged queue divided by theta; standard errors
    come from batch means, which absorbs the serial correlation of the chain.
    """
    if steps <= batches:
        raise InvalidParameterError("steps must exceed batch count")
    rng = np.random.default_rng(seed)
    p = np.asarray(arrival.probs)
    draws = rng.choice(len(p), size=steps + burn_in, p=p)
    w = 0
    empty = np.empty(steps)
    queue_half = np.empty(steps)
    for k, lam in enumerate(draws):
        if k >= burn_in:
            i = k - burn_in
            empty[i] = 1.0 if w == 0 else 0.0
            queue_half[i] = 0.5 * (w + max(w - 1, 0))
        w = max(w - 1, 0) + int(lam)

    def batch_stats(x: np.ndarray) -> tuple[float, float]:
        usable = (len(x) // batches) * batches
        means = x[:usable].reshape(batches, -1).mean(axis=1)
        return float(means.mean()), float(means.std(ddof=1) / math.sqrt(batches))

    p0_hat, p0_se = batch_stats(empty)
    q_hat, q_se = batch_stats(queue_half)
    theta = arrival.theta
    return ChainStats(
        steps=steps,
        p0_hat=p0_hat,
        p0_se=p0_se,
        mean_delay=q_hat / theta,
        delay_se=q_se / theta,
        mean_queue=q_hat,
    )
