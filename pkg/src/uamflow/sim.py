"""Discrete-time terminal-airspace simulation.

UAM aircraft depart on a fixed cadence along straight lanes at one of four
altitudes while conventional traffic (synthetic or replayed) crosses the
area. Each 1 s tick the world records separations, detects encounters, and
in speed-adjusted mode lets the controller pick an acceleration rate per UAM
from sampled intruder futures. Everything is deterministic given the
scenario and run seeds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import controller as ctl
from .controller import SeparationStandard
from .errors import ConfigError, InsufficientHistoryError
from .geo import (FOOT_M, NAUTICAL_MILE_M, EnuPoint, GeoPoint, bearing_deg,
                  enu_to_lonlat, haversine_m, lonlat_to_enu, relative_bearing)
from .predictor import FlowPredictor, TruthPredictor
from .trajdata import Trajectory, read_trajectory_csv

LANE_ALTITUDES_FT = (1500.0, 2000.0, 2500.0, 3000.0)
UAM_DEPARTURE_INTERVAL_S = 10.0
DEFAULT_DURATION_S = 2 * 24 * 3600.0


@dataclass(frozen=True)
class EncounterCriteria:
    horizontal_m: float = 2.0 * NAUTICAL_MILE_M   # 3704.0
    vertical_m: float = 1200.0 * FOOT_M           # 365.76


@dataclass
class Lane:
    """Straight UAM route flown at a constant lane altitude."""

    id: str
    origin: GeoPoint
    dest: GeoPoint
    altitude_ft: float

    def __post_init__(self):
        if self.altitude_ft not in LANE_ALTITUDES_FT:
            raise ConfigError(f"lane altitude {self.altitude_ft} ft not in {LANE_ALTITUDES_FT}")

    @property
    def altitude_m(self) -> float:
        return self.altitude_ft * FOOT_M


@dataclass
class ProcedureConfig:
    """Conventional-traffic procedure: a centerline with a speed profile."""

    name: str
    kind: str                      # arrival or departure
    waypoints: list                # [(lon, lat, alt_m), ...] along the centerline
    speed_start: float = 80.0      # m/s at the first waypoint
    speed_cruise: float = 110.0
    speed_end: float = 70.0
    accel: float = 1.0             # m/s^2 for the trapezoidal profile
    rate_per_hour: float = 12.0    # exponential inter-arrival rate


@dataclass
class SyntheticTrafficConfig:
    procedures: list
    lateral_sigma_m: float = 300.0
    vertical_sigma_m: float = 50.0
    speed_jitter: float = 0.05


@dataclass
class TrafficScenario:
    """World configuration: frame origin, duration, cadence, traffic source."""

    origin: GeoPoint
    duration_s: float = DEFAULT_DURATION_S
    uam_interval_s: float = UAM_DEPARTURE_INTERVAL_S
    source: str = "synthetic"              # synthetic | replay
    synthetic: SyntheticTrafficConfig | None = None
    replay_path: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.duration_s <= 0 or self.uam_interval_s <= 0:
            raise ConfigError("duration and departure interval must be positive")
        if self.source not in ("synthetic", "replay"):
            raise ConfigError(f"unknown traffic source: {self.source!r}")
        if self.source == "synthetic" and self.synthetic is None:
            raise ConfigError("synthetic traffic requires generator parameters")
        if self.source == "replay" and not self.replay_path:
            raise ConfigError("replay traffic requires a CSV path")


# ---------------------------------------------------------------------------
# Synthetic conventional traffic
# ---------------------------------------------------------------------------

def _polyline_arclength(points: np.ndarray):
    seg = np.diff(points, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    return lengths, np.concatenate([[0.0], np.cumsum(lengths)])


def _point_along(points: np.ndarray, cum: np.ndarray, s: float) -> np.ndarray:
    s = min(max(s, 0.0), cum[-1])
    i = int(np.searchsorted(cum, s, side="right") - 1)
    i = min(i, len(points) - 2)
    seg_len = cum[i + 1] - cum[i]
    frac = 0.0 if seg_len == 0.0 else (s - cum[i]) / seg_len
    return points[i] + frac * (points[i + 1] - points[i])


def _fly_procedure(proc: ProcedureConfig, centerline_enu: np.ndarray, jitter: float,
                   rng: np.random.Generator) -> np.ndarray:
    """1 Hz ENU track along the centerline with a trapezoidal speed profile."""
    _, cum = _polyline_arclength(centerline_enu)
    total = float(cum[-1])
    v = proc.speed_start * (1.0 + jitter)
    v_cruise = proc.speed_cruise * (1.0 + jitter)
    v_end = proc.speed_end * (1.0 + jitter)
    a = proc.accel
    s = 0.0
    track = [_point_along(centerline_enu, cum, 0.0)]
    while s < total:
        brake_distance = max(v * v - v_end * v_end, 0.0) / (2.0 * a)
        if total - s <= brake_distance:
            v = max(v - a, v_end)
        elif v < v_cruise:
            v = min(v + a, v_cruise)
        s += v
        track.append(_point_along(centerline_enu, cum, s))
    return np.asarray(track)


def generate_synthetic_traffic(cfg: SyntheticTrafficConfig, duration_s: float,
                               origin: GeoPoint, rng: np.random.Generator) -> list[Trajectory]:
    """Spawn flights per procedure with exponential inter-arrival times.

    Each flight gets one lateral and one vertical Gaussian offset of the
    whole centerline plus a small speed factor, so the per-procedure traffic
    forms a dispersed but smooth bundle of 1 Hz trajectories.
    """
    trajs = []
    for proc in cfg.procedures:
        if proc.kind not in ("arrival", "departure"):
            raise ConfigError(f"procedure kind must be arrival or departure, got {proc.kind!r}")
        waypoints = np.asarray(proc.waypoints, dtype=np.float64)
        east, north, up = lonlat_to_enu(waypoints[:, 0], waypoints[:, 1], waypoints[:, 2], origin)
        centerline = np.stack([east, north, up], axis=1)
        heading = centerline[1, :2] - centerline[0, :2]
        normal = np.array([-heading[1], heading[0], 0.0])
        normal /= np.linalg.norm(normal[:2])
        mean_interval = 3600.0 / proc.rate_per_hour
        t = rng.exponential(mean_interval)
        count = 0
        while t < duration_s:
            offset = normal * rng.normal(0.0, cfg.lateral_sigma_m)
            offset[2] = rng.normal(0.0, cfg.vertical_sigma_m)
            jitter = rng.normal(0.0, cfg.speed_jitter)
            track = _fly_procedure(proc, centerline + offset, jitter, rng)
            lon, lat, alt = enu_to_lonlat(track[:, 0], track[:, 1], track[:, 2], origin)
            trajs.append(Trajectory(
                id=f"{proc.name}-{count:05d}",
                kind=proc.kind,
                t0=float(int(t)),
                lla=np.stack([lon, lat, alt], axis=1),
            ))
            count += 1
            t += rng.exponential(mean_interval)
    return trajs


# ---------------------------------------------------------------------------
# World state
# ---------------------------------------------------------------------------

class ConventionalFlight:
    """Scripted conventional aircraft positioned by table lookup."""

    def __init__(self, traj: Trajectory, origin: GeoPoint):
        self.id = traj.id
        self.kind = traj.kind
        self.t0 = int(traj.t0)
        self.lla = traj.lla
        east, north, up = lonlat_to_enu(traj.lla[:, 0], traj.lla[:, 1], traj.lla[:, 2], origin)
        self.enu = np.stack([east, north, up], axis=1)

    def active(self, t: int) -> bool:
        return self.t0 <= t < self.t0 + len(self.enu)

    def pos(self, t: int) -> np.ndarray:
        return self.enu[t - self.t0]

    def history_lla(self, t: int) -> np.ndarray:
        return self.lla[: t - self.t0 + 1]


class _Motion:
    """Closed-form constant-rate motion segment with speed clamped to
    [0, v_max]; keeps along-lane distance exact over long unchanged runs."""

    def __init__(self, t0: float, s0: float, v0: float, a: float):
        self.t0 = t0
        self.s0 = s0
        self.v0 = v0
        self.a = a
        if a > 0.0:
            self.t_clamp = (ctl.V_MAX_MPS - v0) / a
            self.v_clamp = ctl.V_MAX_MPS
        elif a < 0.0:
            self.t_clamp = -v0 / a
            self.v_clamp = 0.0
        else:
            self.t_clamp = math.inf
            self.v_clamp = v0

    def distance(self, dt: float) -> float:
        if dt <= self.t_clamp:
            return self.v0 * dt + 0.5 * self.a * dt * dt
        d0 = self.v0 * self.t_clamp + 0.5 * self.a * self.t_clamp * self.t_clamp
        return d0 + (dt - self.t_clamp) * self.v_clamp

    def speed(self, dt: float) -> float:
        if dt <= self.t_clamp:
            return self.v0 + self.a * dt
        return self.v_clamp

    def time_to(self, need: float) -> float | None:
        """Time after segment start at which distance-from-s0 reaches need."""
        if need <= 0.0:
            return 0.0
        if self.a == 0.0:
            return need / self.v0 if self.v0 > 0.0 else None
        d_clamp = self.distance(self.t_clamp) if math.isfinite(self.t_clamp) else math.inf
        if need <= d_clamp:
            # smallest positive root of 0.5 a t^2 + v0 t - need = 0
            disc = self.v0 * self.v0 + 2.0 * self.a * need
            if disc < 0.0:
                return None
            root = math.sqrt(disc)
            candidates = [(-self.v0 + root) / self.a, (-self.v0 - root) / self.a]
            valid = [c for c in candidates if c >= 0.0]
            return min(valid) if valid else None
        if self.v_clamp <= 0.0:
            return None
        return self.t_clamp + (need - d_clamp) / self.v_clamp


class UamFlight:
    def __init__(self, uam_id: str, lane: Lane, spawn_t: int, start_enu: np.ndarray,
                 direction: np.ndarray, length_m: float):
        self.id = uam_id
        self.lane = lane
        self.spawn_t = spawn_t
        self.start_enu = start_enu
        self.direction = direction
        self.length_m = length_m
        self.motion = _Motion(float(spawn_t), 0.0, ctl.V_MAX_MPS, 0.0)
        self.rate = 0.0
        self.planned_s = length_m / ctl.V_MAX_MPS
        self.actual_s: float | None = None
        self.done = False
        self.min_sep_m = math.inf
        self.violation = False
        self.cpa_trackers: dict = {}

    def along(self, t: float) -> float:
        return min(self.motion.s0 + self.motion.distance(t - self.motion.t0), self.length_m)

    def speed(self, t: float) -> float:
        return self.motion.speed(t - self.motion.t0)

    def pos(self, t: float) -> np.ndarray:
        return self.start_enu + self.along(t) * self.direction

    def set_rate(self, t: float, a: float):
        if a != self.motion.a:
            self.motion = _Motion(t, self.along(t), self.speed(t), a)
        self.rate = a

    def advance(self, t: float):
        """Check for lane-end crossing during [t, t+1)."""
        remaining = self.length_m - self.motion.s0
        dt = self.motion.time_to(remaining)
        if dt is not None and self.motion.t0 + dt <= t + 1.0:
            self.done = True
            # spawn-relative so an unperturbed cruise completes in exactly
            # planned_s = length / v_max
            self.actual_s = (self.motion.t0 - self.spawn_t) + dt


@dataclass
class FlightRecord:
    id: str
    lane_id: str
    altitude_ft: float
    spawn_t: float
    planned_s: float
    actual_s: float | None
    delay_proportion: float | None
    min_sep_m: float | None
    violation: bool
    completed: bool
    cpa: list

    def to_dict(self) -> dict:
        return {
            "id": self.id, "lane_id": self.lane_id, "altitude_ft": self.altitude_ft,
            "spawn_t": self.spawn_t, "planned_s": self.planned_s, "actual_s": self.actual_s,
            "delay_proportion": self.delay_proportion, "min_sep_m": self.min_sep_m,
            "violation": self.violation, "completed": self.completed, "cpa": self.cpa,
        }


@dataclass
class SimResult:
    mode: str
    lane_id: str
    altitude_ft: float
    scenario_seed: int
    run_seed: int
    spawned: int
    completed: int
    active_at_end: int
    flights: list

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "lane_id": self.lane_id, "altitude_ft": self.altitude_ft,
            "scenario_seed": self.scenario_seed, "run_seed": self.run_seed,
            "spawned": self.spawned, "completed": self.completed,
            "active_at_end": self.active_at_end,
            "flights": [f.to_dict() for f in self.flights],
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True), encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "SimResult":
        flights = [FlightRecord(**f) for f in d["flights"]]
        return cls(mode=d["mode"], lane_id=d["lane_id"], altitude_ft=d["altitude_ft"],
                   scenario_seed=d["scenario_seed"], run_seed=d["run_seed"],
                   spawned=d["spawned"], completed=d["completed"],
                   active_at_end=d["active_at_end"], flights=flights)

    @classmethod
    def load(cls, path) -> "SimResult":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def encounter_pairs(uam_positions: Sequence[tuple], conv_positions: Sequence[tuple],
                    criteria: EncounterCriteria = EncounterCriteria()) -> list[tuple]:
    """All (uam_id, conventional_id) pairs strictly inside both thresholds."""
    pairs = []
    for uam_id, upos in uam_positions:
        for conv_id, cpos in conv_positions:
            horz = math.hypot(cpos[0] - upos[0], cpos[1] - upos[1])
            vert = abs(cpos[2] - upos[2])
            if horz < criteria.horizontal_m and vert < criteria.vertical_m:
                pairs.append((uam_id, conv_id))
    return pairs


def _load_traffic(scenario: TrafficScenario, origin: GeoPoint) -> list[Trajectory]:
    if scenario.source == "replay":
        trajs = read_trajectory_csv(scenario.replay_path)
        return [t for t in trajs if t.kind != "uam"]
    rng = np.random.Generator(np.random.PCG64(scenario.seed))
    return generate_synthetic_traffic(scenario.synthetic, scenario.duration_s, origin, rng)


def run(scenario: TrafficScenario, lane: Lane, mode: str, checkpoint=None,
        seed: int = 0, predictor=None, horizon: int = ctl.PLAN_HORIZON_S,
        std: SeparationStandard | None = None) -> SimResult:
    """Simulate one lane x altitude x mode combination.

    ``mode`` is "baseline" (no speed adjustments; the risk reference) or
    "adjusted". Adjusted mode needs either a trained checkpoint, a predictor
    instance, or the string "truth" to use the scripted-future oracle stub.
    """
    if mode not in ("baseline", "adjusted"):
        raise ConfigError(f"unknown mode: {mode!r}")
    std = std if std is not None else ctl.SeparationStandard()
    criteria = EncounterCriteria()
    origin = scenario.origin

    traffic = _load_traffic(scenario, origin)
    conv = [ConventionalFlight(tr, origin) for tr in traffic]

    if mode == "adjusted":
        if predictor == "truth":
            predictor = TruthPredictor(
                {c.id: (c.t0, c.enu) for c in conv}, horizon=horizon)
        elif predictor is None:
            if checkpoint is None:
                raise ConfigError("adjusted mode needs a checkpoint or a predictor")
            model = checkpoint.to_model() if hasattr(checkpoint, "to_model") else checkpoint
            predictor = FlowPredictor(model, origin, master_seed=seed)

    se, sn, _ = lonlat_to_enu(lane.origin.lon, lane.origin.lat, lane.origin.alt, origin)
    de, dn, _ = lonlat_to_enu(lane.dest.lon, lane.dest.lat, lane.dest.alt, origin)
    up = lane.altitude_m - origin.alt
    start = np.array([float(se), float(sn), up])
    end = np.array([float(de), float(dn), up])
    length = float(np.linalg.norm(end - start))
    if length <= 0.0:
        raise ConfigError(f"lane {lane.id} has zero length")
    direction = (end - start) / length
    lane_course = bearing_deg(direction[0], direction[1])

    interval = int(round(scenario.uam_interval_s))
    duration = int(round(scenario.duration_s))
    hard_stop = duration + 20 * int(math.ceil(length / ctl.V_MAX_MPS)) + 3600

    active: list[UamFlight] = []
    finished: list[UamFlight] = []
    spawned = 0
    t = 0
    while t <= hard_stop and (t < duration or active):
        if t < duration and t % interval == 0:
            uam = UamFlight(f"uam-{spawned:06d}", lane, t, start, direction, length)
            active.append(uam)
            spawned += 1

        conv_active = [c for c in conv if c.active(t)]
        conv_pos = {c.id: c.pos(t) for c in conv_active}

        for uam in active:
            upos = uam.pos(t)
            u_lon, u_lat, _ = enu_to_lonlat(upos[0], upos[1], upos[2], origin)
            # separation bookkeeping against every airborne conventional
            # aircraft; horizontal distances are geodetic, matching the
            # controller's LoS evaluation, so boundary cases agree
            separations = {}
            for c in conv_active:
                cpos = conv_pos[c.id]
                c_lon, c_lat, _ = enu_to_lonlat(cpos[0], cpos[1], cpos[2], origin)
                horz = float(haversine_m(u_lon, u_lat, c_lon, c_lat))
                vert = abs(cpos[2] - upos[2])
                separations[c.id] = (horz, vert)
                if vert < std.vertical_m and horz < uam.min_sep_m:
                    uam.min_sep_m = horz
                if horz <= std.horizontal_m and vert <= std.vertical_m:
                    uam.violation = True
                in_encounter = horz < criteria.horizontal_m and vert < criteria.vertical_m
                tracker = uam.cpa_trackers.get(c.id)
                if tracker is None and in_encounter:
                    tracker = {"kind": c.kind, "best_horz": math.inf, "best_vert": math.inf,
                               "tick": t, "bearing": float("nan"), "vert_clear": True}
                    uam.cpa_trackers[c.id] = tracker
                if tracker is not None:
                    below = vert < std.vertical_m
                    better = (below and (tracker["vert_clear"] or horz < tracker["best_horz"])) or \
                             (not below and tracker["vert_clear"] and horz < tracker["best_horz"])
                    if better:
                        try:
                            bearing = relative_bearing(
                                EnuPoint(*upos), lane_course, EnuPoint(*cpos))
                        except Exception:
                            bearing = float("nan")
                        tracker.update(best_horz=horz, best_vert=vert, tick=t,
                                       bearing=bearing, vert_clear=not below)

            if mode == "adjusted":
                intruders = [c for c in conv_active
                             if separations[c.id][0] < criteria.horizontal_m
                             and separations[c.id][1] < criteria.vertical_m]
                predsets = []
                for c in intruders:
                    try:
                        predsets.append(predictor.predict(c.id, t, c.history_lla(t)))
                    except InsufficientHistoryError:
                        predsets.append(None)
                state = ctl.UamState(
                    position=upos, speed=min(uam.speed(t), ctl.V_MAX_MPS), rate=uam.rate,
                    direction=direction, lane_id=lane.id,
                    elapsed_s=t - uam.spawn_t, planned_s=uam.planned_s)
                a = ctl.select_rate(state, predsets, std, origin, horizon=horizon)
                uam.set_rate(float(t), a)

            uam.advance(float(t))

        still_active = []
        for uam in active:
            (finished if uam.done else still_active).append(uam)
        active = still_active
        t += 1

    records = []
    for uam in sorted(finished + active, key=lambda u: u.spawn_t):
        delay = None
        if uam.actual_s is not None and uam.planned_s > 0:
            delay = (uam.actual_s - uam.planned_s) / uam.planned_s
        cpa_records = [
            {"intruder_id": cid, "intruder_kind": trk["kind"],
             "tick": trk["tick"], "horizontal_m": trk["best_horz"],
             "vertical_m": trk["best_vert"], "bearing_deg": trk["bearing"],
             "vertical_clear": trk["vert_clear"]}
            for cid, trk in sorted(uam.cpa_trackers.items())
        ]
        records.append(FlightRecord(
            id=uam.id, lane_id=lane.id, altitude_ft=lane.altitude_ft,
            spawn_t=float(uam.spawn_t), planned_s=uam.planned_s, actual_s=uam.actual_s,
            delay_proportion=delay,
            min_sep_m=None if math.isinf(uam.min_sep_m) else uam.min_sep_m,
            violation=uam.violation, completed=uam.done, cpa=cpa_records,
        ))
    return SimResult(
        mode=mode, lane_id=lane.id, altitude_ft=lane.altitude_ft,
        scenario_seed=scenario.seed, run_seed=seed,
        spawned=spawned, completed=sum(1 for r in records if r.completed),
        active_at_end=sum(1 for r in records if not r.completed),
        flights=records,
    )


# ---------------------------------------------------------------------------
# Report bundle
# ---------------------------------------------------------------------------

SEPARATION_BIN_M = 250.0
SEPARATION_MAX_M = 10_000.0
BEARING_BIN_DEG = 30.0
RANGE_BIN_M = 500.0
RANGE_MAX_M = 4_000.0


def _quartiles(values):
    q = np.percentile(values, [0, 25, 50, 75, 100])
    return [float(x) for x in q]


def report(results: Sequence[SimResult], out_dir) -> dict[str, str]:
    """Emit the analysis bundle as CSV tables plus a JSON manifest.

    cdf.csv: histogram and cumulative fractions of per-flight minimum
    horizontal separations per lane x altitude x mode. delays.csv: delay
    proportion quartiles. cpa_polar.csv: counts over bearing x range bins at
    the closest point of approach.
    """
    if not results:
        raise ConfigError("report needs at least one result")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    cdf_lines = ["lane_id,altitude_ft,mode,bin_left_m,bin_right_m,count,cum_count,cum_fraction"]
    delay_lines = ["lane_id,altitude_ft,mode,n,min,q1,median,q3,max,mean"]
    polar_lines = ["lane_id,altitude_ft,mode,bearing_left_deg,range_left_m,count"]

    edges = np.arange(0.0, SEPARATION_MAX_M + SEPARATION_BIN_M, SEPARATION_BIN_M)
    for res in results:
        key = f"{res.lane_id},{res.altitude_ft:g},{res.mode}"
        seps = [f.min_sep_m for f in res.flights if f.min_sep_m is not None]
        if seps:
            clipped = np.minimum(seps, SEPARATION_MAX_M - 1e-9)
            counts, _ = np.histogram(clipped, bins=edges)
            cum = np.cumsum(counts)
            for i, c in enumerate(counts):
                cdf_lines.append(
                    f"{key},{edges[i]:g},{edges[i + 1]:g},{int(c)},{int(cum[i])},"
                    f"{cum[i] / len(seps):.6f}")
        delays = [f.delay_proportion for f in res.flights if f.delay_proportion is not None]
        if delays:
            lo, q1, med, q3, hi = _quartiles(delays)
            delay_lines.append(
                f"{key},{len(delays)},{lo:.6f},{q1:.6f},{med:.6f},{q3:.6f},{hi:.6f},"
                f"{float(np.mean(delays)):.6f}")
        bins: dict = {}
        for f in res.flights:
            for rec in f.cpa:
                if not math.isfinite(rec["bearing_deg"]):
                    continue
                b = min(int(rec["bearing_deg"] // BEARING_BIN_DEG) * BEARING_BIN_DEG, 330.0)
                r = min(int(rec["horizontal_m"] // RANGE_BIN_M) * RANGE_BIN_M, RANGE_MAX_M)
                bins[(b, r)] = bins.get((b, r), 0) + 1
        for (b, r), count in sorted(bins.items()):
            polar_lines.append(f"{key},{b:g},{r:g},{count}")

    paths = {}
    for name, lines in (("cdf", cdf_lines), ("delays", delay_lines), ("cpa_polar", polar_lines)):
        path = out_dir / f"{name}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths[name] = str(path)

    manifest = {
        "files": sorted(Path(p).name for p in paths.values()),
        "results": [
            {"lane_id": r.lane_id, "altitude_ft": r.altitude_ft, "mode": r.mode,
             "scenario_seed": r.scenario_seed, "run_seed": r.run_seed,
             "spawned": r.spawned, "completed": r.completed,
             "flights_without_interaction": sum(1 for f in r.flights if f.min_sep_m is None)}
            for r in results
        ],
    }
    manifest_path = out_dir / "report_manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")
    paths["manifest"] = str(manifest_path)
    return paths


def min_separation_quantiles(result: SimResult, quantiles: Sequence[float]) -> np.ndarray:
    """Empirical quantiles of per-flight min separations (finite values)."""
    seps = [f.min_sep_m for f in result.flights if f.min_sep_m is not None]
    if not seps:
        return np.full(len(quantiles), np.nan)
    return np.quantile(np.asarray(seps), np.asarray(quantiles))
