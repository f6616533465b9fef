"""Rhythmic intersection control toolkit."""

from .geometry import (
    ConflictPoint,
    IntersectionSpec,
    VehicleParams,
    conflict_points,
    min_gap_T,
    virtualize,
)
from .queueing import (
    ArrivalDistribution,
    admissible_rate,
    average_delay,
    delay_bound,
    lee_vacation_wait,
    poisson_delay,
    steady_state,
)
from .rhythm import (
    AuditReport,
    EntrySchedule,
    RhythmTiming,
    SegmentLengths,
    audit,
    check_conditions,
    entry_schedule,
    geometric_oracle,
    row_profile,
    solve_travel_times,
)
from .simulator import (
    DemandScenario,
    FCFSScheme,
    RCScheme,
    RunResult,
    TSCScheme,
    run_fcfs,
    run_rc,
    run_tsc,
    sweep,
)
from .trajectory import (
    AdjustmentZone,
    SpeedCurve,
    assign_curve,
    cruise_speed_vq,
    solve_delta_t,
    spacing_check,
)

__version__ = "0.1.0"
