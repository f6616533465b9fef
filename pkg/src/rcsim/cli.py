"""Command-line front end.

Subcommands: rhythm, audit, analyze, traj, simulate, sweep.  One TOML config
file drives everything; omitted sections fall back to the documented
defaults.  Exit codes: 0 success (audit pass), 1 audit failure, 2 config
error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import queueing, simulator, trajectory
from .errors import ConfigSemanticError, ConfigSyntaxError, ToolkitError
from .geometry import IntersectionSpec, VehicleParams, min_gap_T, virtualize
from .rhythm import (
    RhythmTiming,
    SegmentLengths,
    audit,
    entry_schedule,
    row_profile,
    solve_travel_times,
)
from .simulator import (
    DemandScenario,
    FCFSScheme,
    RCScheme,
    TSCScheme,
    run_scheme,
    sweep,
)

EXIT_OK = 0
EXIT_AUDIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

DEFAULT_DEMAND = (1300.0, 1300.0, 1300.0, 1300.0, 1100.0, 1100.0, 1100.0, 1100.0)


@dataclass(frozen=True)
class Config:
    """Validated configuration for all subcommands."""

    legs: tuple[tuple[int, int], ...]
    disabled: tuple[tuple[int, int], ...]
    vehicle: VehicleParams
    cat2: float
    cat3: float
    cat4: float
    cat5: tuple[float, ...]
    speed_band: tuple[float, float]
    zone_length: float
    demand: tuple[float, ...]
    alpha: float
    alpha_grid: tuple[float, ...]
    arrival: str
    duration: float
    seed: int
    replications: int
    rc: RCScheme
    tsc: TSCScheme
    fcfs: FCFSScheme
    times_override: tuple | None = None  # (t2, t3, t4, t5 list) explicit timing


def _get(table: dict, key: str, default, kind, path: str):
    value = table.get(key, default)
    try:
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return int(value)
        if kind is str:
            if not isinstance(value, str):
                raise TypeError
            return value
    except TypeError:
        raise ConfigSemanticError(f"{path}.{key}: expected {kind.__name__}, got {value!r}")
    raise AssertionError(kind)


def parse_config(text: str) -> Config:
    """Parse and validate a TOML configuration."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigSyntaxError(f"config is not valid TOML: {exc}") from exc

    inter = raw.get("intersection", {})
    legs_raw = inter.get("legs", [[3, 2], [3, 2], [3, 2], [3, 2]])
    if len(legs_raw) != 4 or any(len(pair) != 2 for pair in legs_raw):
        raise ConfigSemanticError("intersection.legs: expected 4 pairs [through, left]")
    legs = tuple((int(s), int(l)) for s, l in legs_raw)
    disabled_raw = inter.get("disabled", [])
    disabled = tuple((int(a), int(b)) for a, b in disabled_raw)

    veh = raw.get("vehicle", {})
    vehicle = VehicleParams(
        length=_get(veh, "length", 4.5, float, "vehicle"),
        width=_get(veh, "width", 2.0, float, "vehicle"),
        min_gap=_get(veh, "min_gap", 1.0, float, "vehicle"),
        v_max=_get(veh, "v_max", 10.0, float, "vehicle"),
        a_max=_get(veh, "a_max", 3.0, float, "vehicle"),
    )

    n_l = max(l for _, l in legs)
    rhy = raw.get("rhythm", {})
    cat5_default = [24.0 - 4.0 * j for j in range(n_l)]
    cat5_raw = rhy.get("cat5", cat5_default)
    if len(cat5_raw) < n_l:
        raise ConfigSemanticError(f"rhythm.cat5: need {n_l} lengths, got {len(cat5_raw)}")
    band_raw = rhy.get("speed_band", [4.0, vehicle.v_max])
    if len(band_raw) != 2:
        raise ConfigSemanticError("rhythm.speed_band: expected [v_lo, v_hi]")
    times_override = None
    times = rhy.get("times")
    if times is not None:
        t5_raw = times.get("t5", [])
        times_override = (
            times.get("t2"), times.get("t3"), times.get("t4"),
            tuple(float(x) for x in t5_raw),
        )

    scen = raw.get("scenario", {})
    demand_raw = scen.get("demand", list(DEFAULT_DEMAND))
    if len(demand_raw) != 8:
        raise ConfigSemanticError(
            f"scenario.demand: expected 8 entries (4 through + 4 left approaches), "
            f"got {len(demand_raw)}"
        )
    if any(d < 0 for d in demand_raw):
        raise ConfigSemanticError("scenario.demand: demands must be non-negative")
    arrival = _get(scen, "arrival", simulator.STATIONARY, str, "scenario")
    if arrival not in (simulator.STATIONARY, simulator.NONSTATIONARY):
        raise ConfigSemanticError(f"scenario.arrival: unknown model {arrival!r}")
    alpha_grid = tuple(float(a) for a in scen.get("alpha_grid", []))

    schemes = raw.get("schemes", {})
    rc_tbl, tsc_tbl, fcfs_tbl = (schemes.get(k, {}) for k in ("rc", "tsc", "fcfs"))
    return Config(
        legs=legs,
        disabled=disabled,
        vehicle=vehicle,
        cat2=_get(rhy, "cat2", 12.0, float, "rhythm"),
        cat3=_get(rhy, "cat3", 8.0, float, "rhythm"),
        cat4=_get(rhy, "cat4", 10.0, float, "rhythm"),
        cat5=tuple(float(x) for x in cat5_raw),
        speed_band=(float(band_raw[0]), float(band_raw[1])),
        zone_length=_get(raw.get("zone", {}), "length", 100.0, float, "zone"),
        demand=tuple(float(d) for d in demand_raw),
        alpha=_get(scen, "alpha", 1.0, float, "scenario"),
        alpha_grid=alpha_grid,
        arrival=arrival,
        duration=_get(scen, "duration", 3600.0, float, "scenario"),
        seed=_get(scen, "seed", 0, int, "scenario"),
        replications=_get(scen, "replications", 1, int, "scenario"),
        rc=RCScheme(systematic_delay=_get(rc_tbl, "systematic_delay", 1.0, float, "schemes.rc")),
        tsc=TSCScheme(
            phase_loss=_get(tsc_tbl, "phase_loss", 2.0, float, "schemes.tsc"),
            g_min=_get(tsc_tbl, "g_min", 4.0, float, "schemes.tsc"),
            max_cycle=_get(tsc_tbl, "max_cycle", 180.0, float, "schemes.tsc"),
        ),
        fcfs=FCFSScheme(tick=_get(fcfs_tbl, "tick", 0.1, float, "schemes.fcfs")),
        times_override=times_override,
    )


def load_config(path: str | Path) -> Config:
    return parse_config(Path(path).read_text())


def emit_canonical(cfg: Config) -> str:
    """Canonical TOML form; parse(emit(cfg)) == cfg."""
    def flist(xs):
        return "[" + ", ".join(f"{x!r}" for x in xs) + "]"

    lines = [
        "[intersection]",
        "legs = [" + ", ".join(f"[{s}, {l}]" for s, l in cfg.legs) + "]",
        "disabled = [" + ", ".join(f"[{a}, {b}]" for a, b in cfg.disabled) + "]",
        "",
        "[vehicle]",
        f"length = {cfg.vehicle.length!r}",
        f"width = {cfg.vehicle.width!r}",
        f"min_gap = {cfg.vehicle.min_gap!r}",
        f"v_max = {cfg.vehicle.v_max!r}",
        f"a_max = {cfg.vehicle.a_max!r}",
        "",
        "[rhythm]",
        f"cat2 = {cfg.cat2!r}",
        f"cat3 = {cfg.cat3!r}",
        f"cat4 = {cfg.cat4!r}",
        f"cat5 = {flist(cfg.cat5)}",
        f"speed_band = {flist(cfg.speed_band)}",
        "",
        "[zone]",
        f"length = {cfg.zone_length!r}",
        "",
        "[scenario]",
        f"demand = {flist(cfg.demand)}",
        f"alpha = {cfg.alpha!r}",
        f"alpha_grid = {flist(cfg.alpha_grid)}",
        f'arrival = "{cfg.arrival}"',
        f"duration = {cfg.duration!r}",
        f"seed = {cfg.seed}",
        f"replications = {cfg.replications}",
        "",
        "[schemes.rc]",
        f"systematic_delay = {cfg.rc.systematic_delay!r}",
        "",
        "[schemes.tsc]",
        f"phase_loss = {cfg.tsc.phase_loss!r}",
        f"g_min = {cfg.tsc.g_min!r}",
        f"max_cycle = {cfg.tsc.max_cycle!r}",
        "",
        "[schemes.fcfs]",
        f"tick = {cfg.fcfs.tick!r}",
    ]
    if cfg.times_override is not None:
        t2, t3, t4, t5 = cfg.times_override
        lines += ["", "[rhythm.times]"]
        for name, val in (("t2", t2), ("t3", t3), ("t4", t4)):
            if val is not None:
                lines.append(f"{name} = {val!r}")
        lines.append(f"t5 = {flist(t5)}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: Config) -> str:
    return hashlib.sha256(emit_canonical(cfg).encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# artifact construction from a config
# ---------------------------------------------------------------------------

def build_spec(cfg: Config) -> IntersectionSpec:
    return virtualize(cfg.legs, cfg.vehicle, disabled=cfg.disabled)


def build_timing(cfg: Config, spec: IntersectionSpec) -> RhythmTiming:
    if cfg.times_override is not None:
        t2, t3, t4, t5_list = cfg.times_override
        t5 = {spec.n_s + 1 + i: float(v) for i, v in enumerate(t5_list)}
        return RhythmTiming(t1=min_gap_T(cfg.vehicle), t2=t2, t3=t3, t4=t4, t5=t5)
    left_lanes = range(spec.n_s + 1, spec.lanes_per_leg + 1)
    lengths = SegmentLengths(
        cat2=cfg.cat2, cat3=cfg.cat3, cat4=cfg.cat4,
        cat5={lane: cfg.cat5[i] for i, lane in enumerate(left_lanes)},
    )
    return solve_travel_times(spec, lengths, cfg.speed_band)


def build_scenario(cfg: Config, seed: int | None = None) -> DemandScenario:
    return DemandScenario(
        demand=cfg.demand,
        alpha=cfg.alpha,
        arrival_model=cfg.arrival,
        duration=cfg.duration,
        seed=cfg.seed if seed is None else seed,
    )


def _write_csv(path: Path, cfg: Config, seed: int, header: list[str],
               rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(f"# rcsim config_sha256={config_hash(cfg)} seed={seed}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_rhythm(cfg: Config, out: Path) -> int:
    spec = build_spec(cfg)
    timing = build_timing(cfg, spec)
    schedule = entry_schedule(spec, timing)
    rows = []
    for leg, lane in spec.lanes():
        kind = "through" if spec.is_through(lane) else "left"
        rows.append((leg, lane, kind, schedule.offsets[lane], schedule.period,
                     (leg, lane) not in schedule.unschedulable))
    _write_csv(out / "schedule.csv", cfg, cfg.seed,
               ["leg", "lane", "kind", "offset_s", "period_s", "schedulable"], rows)
    times, counts = row_profile(spec, schedule, horizon=20 * schedule.period,
                                resolution=schedule.period / 16)
    _write_csv(out / "row_profile.csv", cfg, cfg.seed,
               ["t_s", "lanes_owning_row"], zip(times, counts))
    t5 = " ".join(f"{lane}:{t:.6f}" for lane, t in sorted(timing.t5.items()))
    print(f"T1={timing.t1:.9f} s  T2={timing.t2}  T3={timing.t3}  T4={timing.t4}  T5={{{t5}}}")
    print(f"wrote {out/'schedule.csv'} and {out/'row_profile.csv'}")
    return EXIT_OK


def cmd_audit(cfg: Config, out: Path) -> int:
    spec = build_spec(cfg)
    timing = build_timing(cfg, spec)
    report = audit(spec, timing)
    _write_csv(out / "audit.csv", cfg, cfg.seed,
               ["point_id", "type", "min_gap_s", "odd_multiple", "active", "pass"],
               report.to_csv_rows())
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_AUDIT_FAIL


def cmd_analyze(cfg: Config, out: Path) -> int:
    t1 = min_gap_T(cfg.vehicle)
    cap = queueing.admissible_rate(cfg.vehicle)
    rows = []
    for frac in np.linspace(0.05, 0.95, 19):
        theta = frac * cap
        arr = queueing.ArrivalDistribution.poisson(theta, t1)
        state = queueing.steady_state(arr)
        est = queueing.average_delay(state, theta, t1)
        rows.append((theta, 2 * theta * t1, float(state.probs[0]), est.mean_queue,
                     est.mean_delay, queueing.poisson_delay(theta, t1),
                     queueing.delay_bound(theta, t1), state.residual))
    _write_csv(out / "queueing.csv", cfg, cfg.seed,
               ["theta_vps", "rho", "p0", "mean_queue_veh", "mean_delay_s",
                "poisson_delay_s", "bound_s", "residual"], rows)
    print(f"admissible rate {cap:.4f} veh/s ({cap*3600:.0f} veh/h); wrote {out/'queueing.csv'}")
    return EXIT_OK


def cmd_traj(cfg: Config, out: Path, leg: int = 1, lane: int = 1,
             max_vehicles: int = 40) -> int:
    spec = build_spec(cfg)
    if leg not in (1, 2, 3, 4) or not 1 <= lane <= spec.lanes_per_leg:
        raise ConfigSemanticError(f"no lane {leg}.{lane} on this intersection")
    timing = build_timing(cfg, spec)
    schedule = entry_schedule(spec, timing)
    scenario = build_scenario(cfg)
    zone = trajectory.AdjustmentZone(cfg.zone_length, cfg.vehicle)
    arrivals = simulator.lane_arrivals(scenario, spec, leg, lane)[:max_vehicles]
    rows = []
    prev = None
    for vid, t0 in enumerate(arrivals):
        curve = trajectory.assign_curve(float(t0), prev, schedule.offsets[lane],
                                        schedule.period, zone, cfg.vehicle)
        ts = np.arange(curve.t0, curve.target + 1e-9, 0.05)
        xs = curve.position(ts)
        vs = curve.speed(ts)
        rows.extend((vid, t, x, v) for t, x, v in zip(ts, xs, vs))
        prev = curve
    _write_csv(out / "trajectories.csv", cfg, cfg.seed,
               ["vehicle", "t_s", "x_m", "v_mps"], rows)
    print(f"wrote {out/'trajectories.csv'} ({len(arrivals)} vehicles, lane {leg}.{lane})")
    return EXIT_OK


def cmd_simulate(cfg: Config, out: Path, scheme_name: str) -> int:
    spec = build_spec(cfg)
    timing = build_timing(cfg, spec)
    schedule = entry_schedule(spec, timing)
    scenario = build_scenario(cfg)
    scheme = {"rc": cfg.rc, "tsc": cfg.tsc, "fcfs": cfg.fcfs}[scheme_name]
    result = run_scheme(scheme, scenario, spec, timing, schedule)
    rows = [
        (r.vehicle_id, r.lane[0], r.lane[1], r.arrival, r.entry, r.delay)
        for r in result.records()
    ]
    _write_csv(out / f"run_{scheme_name}.csv", cfg, scenario.seed,
               ["vehicle", "leg", "lane", "arrival_s", "entry_s", "delay_s"], rows)
    residual = sum(result.residual_queue().values())
    print(f"{scheme_name}: {result.throughput} served of {result.total_arrivals}, "
          f"avg delay {result.avg_delay:.3f} s, residual queue {residual}")
    return EXIT_OK


def cmd_sweep(cfg: Config, out: Path, schemes: list[str], jobs: int = 1) -> int:
    known = {"rc": cfg.rc, "tsc": cfg.tsc, "fcfs": cfg.fcfs}
    bad = [s for s in schemes if s not in known]
    if bad:
        raise ConfigSemanticError(f"unknown scheme(s) {bad}; choose from rc,tsc,fcfs")
    spec = build_spec(cfg)
    timing = build_timing(cfg, spec)
    schedule = entry_schedule(spec, timing)
    scenario = build_scenario(cfg)
    grid = cfg.alpha_grid or (cfg.alpha,)
    scheme_objs = [known[s] for s in schemes]
    rows = sweep(scenario, spec, timing, schedule, grid, scheme_objs,
                 replications=cfg.replications, jobs=jobs)
    _write_csv(out / "sweep.csv", cfg, cfg.seed,
               ["scheme", "scenario", "alpha", "replication", "avg_delay_s",
                "throughput_veh", "residual_queue"],
               [tuple(r.values()) for r in rows])
    print(f"wrote {out/'sweep.csv'} ({len(rows)} rows)")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rcsim",
                                description="Rhythmic intersection control toolkit")
    p.add_argument("--config", required=True, help="TOML configuration file")
    p.add_argument("--out", default="out", help="output directory for CSV artifacts")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs for sweep")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("rhythm", help="entry schedule and right-of-way profile")
    sub.add_parser("audit", help="collision-freedom audit (exit 1 on failure)")
    sub.add_parser("analyze", help="queueing metrics over a demand grid")
    traj = sub.add_parser("traj", help="adjustment-zone speed curves for one lane")
    traj.add_argument("--leg", type=int, default=1)
    traj.add_argument("--lane", type=int, default=1)
    sim = sub.add_parser("simulate", help="single run of one control scheme")
    sim.add_argument("--scheme", choices=["rc", "tsc", "fcfs"], default="rc")
    sw = sub.add_parser("sweep", help="demand sweep over schemes and replications")
    sw.add_argument("--schemes", default="rc,tsc,fcfs",
                    help="comma-separated subset of rc,tsc,fcfs")
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigSyntaxError, ConfigSemanticError, ToolkitError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = Path(args.out)
    try:
        if args.command == "rhythm":
            return cmd_rhythm(cfg, out)
        if args.command == "audit":
            return cmd_audit(cfg, out)
        if args.command == "analyze":
            return cmd_analyze(cfg, out)
        if args.command == "traj":
            return cmd_traj(cfg, out, leg=args.leg, lane=args.lane)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, args.scheme)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, args.schemes.split(","), jobs=args.jobs)
        raise AssertionError(args.command)
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
