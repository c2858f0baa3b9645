"""UAM speed adjustment: kinematic planning, LoS scoring, CPA, rate selection.

Per decision tick the controller plans the UAM's straight-lane path for every
admissible acceleration rate, scores each plan's probability of losing
separation against the sampled intruder futures, and picks the rate with the
smallest probability (ties broken toward the largest rate so the aircraft
recovers schedule). The candidate set is {+0.2g, 0}, a 31-point deceleration
grid over (0, -0.3g], and an analytically computed stop-short rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolationError, ShapeError
from .geo import FOOT_M, G0, GeoPoint, enu_to_lonlat, haversine_m, bearing_deg
from .predictor import PredictionSet, WEIGHT_TOL

V_MAX_MPS = 210.0 / 3.6            # 210 km/h cruise ceiling
ACCEL_RATE = 0.2 * G0              # fixed acceleration option
MAX_DECEL = 0.3 * G0               # deceleration magnitude ceiling
DECEL_GRID_POINTS = 31
PLAN_HORIZON_S = 60


@dataclass(frozen=True)
class SeparationStandard:
    horizontal_m: float = 2500.0 * FOOT_M   # 762.0
    vertical_m: float = 1000.0 * FOOT_M     # 304.8


@dataclass
class UamState:
    """Along-lane kinematic state at one tick; direction is a unit vector."""

    position: np.ndarray
    speed: float
    rate: float
    direction: np.ndarray
    lane_id: str = ""
    elapsed_s: float = 0.0
    planned_s: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        if not -1e-9 <= self.speed <= V_MAX_MPS + 1e-9:
            raise InvariantViolationError(f"speed {self.speed} outside [0, v_max]")
        norm = float(np.linalg.norm(self.direction))
        if not math.isclose(norm, 1.0, rel_tol=1e-9):
            raise InvariantViolationError("direction must be a unit vector")


@dataclass
class LoSAssessment:
    """Per-rate LoS probabilities plus the current rate's sample diagnostics."""

    probabilities: dict
    current_rate: float
    current_probability: float
    stop_short: float | None = None
    current_hits: list = field(default_factory=list)
    current_taus: list = field(default_factory=list)


def build_rate_set(stop_short: float | None = None) -> np.ndarray:
    """Admissible rates, descending. The deceleration grid spans (0, -0.3g]
    in 31 even steps; an optional stop-short rate is merged in."""
    rates = [ACCEL_RATE, 0.0]
    rates.extend(-MAX_DECEL * i / DECEL_GRID_POINTS for i in range(1, DECEL_GRID_POINTS + 1))
    if stop_short is not None:
        if not -MAX_DECEL - 1e-12 <= stop_short < 0.0:
            raise InvariantViolationError(f"stop-short rate {stop_short} outside (0, -0.3g]")
        rates.append(max(stop_short, -MAX_DECEL))
    return np.unique(np.asarray(rates, dtype=np.float64))[::-1]


def step_speed_distance(v: float, a: float, dt: float = 1.0,
                        v_max: float = V_MAX_MPS) -> tuple[float, float]:
    """Advance speed by one step with clamping to [0, v_max]; returns
    (distance covered, new speed). Exact piecewise integration."""
    if a == 0.0:
        return v * dt, v
    v_un = v + a * dt
    if a > 0.0 and v_un > v_max:
        t_hit = (v_max - v) / a
        return v * t_hit + 0.5 * a * t_hit * t_hit + (dt - t_hit) * v_max, v_max
    if a < 0.0 and v_un < 0.0:
        t_hit = -v / a
        return v * t_hit + 0.5 * a * t_hit * t_hit, 0.0
    return v * dt + 0.5 * a * dt * dt, v_un


def plan_distances(v: float, a: float, horizon: int = PLAN_HORIZON_S) -> np.ndarray:
    """Cumulative along-lane distance at 1..horizon seconds ahead."""
    out = np.empty(horizon)
    s = 0.0
    for i in range(horizon):
        ds, v = step_speed_distance(v, a)
        s += ds
        out[i] = s
    return out


def plan_uam_trajectory(state: UamState, a: float, horizon: int = PLAN_HORIZON_S) -> np.ndarray:
    """Straight-line ENU plan under rate ``a``: speed ramps within
    [0, v_max], position integrates the clamped speed, and a stopped aircraft
    holds position."""
    if not -MAX_DECEL - 1e-12 <= a <= ACCEL_RATE + 1e-12:
        raise InvariantViolationError(f"rate {a} outside [-0.3g, +0.2g]")
    dists = plan_distances(state.speed, a, horizon)
    return state.position + dists[:, None] * state.direction


@dataclass
class CpaRecord:
    tau_s: int
    horizontal_m: float
    vertical_m: float
    bearing_deg: float
    vertical_clear: bool


def _course_from_path(path: np.ndarray, idx: int) -> float | None:
    """Horizontal course at step idx from the nearest non-zero displacement."""
    deltas = np.diff(path[:, :2], axis=0)
    lengths = np.hypot(deltas[:, 0], deltas[:, 1])
    order = sorted(range(len(deltas)), key=lambda j: (abs(j - (idx - 1)), j))
    for j in order:
        if lengths[j] > 0.0:
            return bearing_deg(deltas[j, 0], deltas[j, 1])
    return None


def cpa(uam_path: np.ndarray, intruder_path: np.ndarray,
        std: SeparationStandard = SeparationStandard(),
        own_course_deg: float | None = None) -> CpaRecord:
    """Closest point of approach over two aligned 1 Hz paths.

    The CPA step minimizes horizontal distance among steps with vertical
    separation below the standard; when no step qualifies the overall
    horizontal minimum is used and flagged vertical-clear. Bearing is
    NaN when underivable (stationary ownship or coincident positions).
    """
    uam_path = np.asarray(uam_path, dtype=np.float64)
    intruder_path = np.asarray(intruder_path, dtype=np.float64)
    if uam_path.ndim != 2 or uam_path.shape != intruder_path.shape or len(uam_path) == 0:
        raise ShapeError(f"paths must be equal-length (n, 3), got {uam_path.shape} vs {intruder_path.shape}")
    diff = intruder_path - uam_path
    horz = np.hypot(diff[:, 0], diff[:, 1])
    vert = np.abs(diff[:, 2])
    below = vert < std.vertical_m
    if below.any():
        candidates = np.where(below)[0]
        idx = int(candidates[np.argmin(horz[candidates])])
        vert_clear = False
    else:
        idx = int(np.argmin(horz))
        vert_clear = True
    course = own_course_deg if own_course_deg is not None else _course_from_path(uam_path, idx)
    if course is None or horz[idx] == 0.0:
        bearing = float("nan")
    else:
        bearing = (bearing_deg(diff[idx, 0], diff[idx, 1]) - course) % 360.0
    return CpaRecord(
        tau_s=idx + 1,
        horizontal_m=float(horz[idx]),
        vertical_m=float(vert[idx]),
        bearing_deg=bearing,
        vertical_clear=vert_clear,
    )


def _sample_hits(uam_path: np.ndarray, preds: PredictionSet,
                 std: SeparationStandard, origin: GeoPoint):
    """Per-sample LoS flags and first violating step (-1 when none).

    Horizontal distance follows the geodetic definition: planned ENU points
    are mapped back to lon/lat before the great-circle evaluation.
    """
    if preds.trajectories.shape[1] != uam_path.shape[0]:
        raise ShapeError(
            f"horizon mismatch: plan {uam_path.shape[0]} steps, prediction {preds.trajectories.shape[1]}")
    u_lon, u_lat, u_up = enu_to_lonlat(uam_path[:, 0], uam_path[:, 1], uam_path[:, 2], origin)
    p = preds.trajectories
    p_lon, p_lat, p_up = enu_to_lonlat(p[:, :, 0], p[:, :, 1], p[:, :, 2], origin)
    d_horz = haversine_m(u_lon, u_lat, p_lon, p_lat)
    d_vert = np.abs(p_up - u_up)
    los = (d_horz <= std.horizontal_m) & (d_vert <= std.vertical_m)
    hits = los.any(axis=1)
    first = np.where(hits, los.argmax(axis=1), -1)
    return hits, first


def los_probability(uam_path: np.ndarray, preds: PredictionSet,
                    std: SeparationStandard, origin: GeoPoint) -> float:
    """Probability of losing separation: total weight of violating samples."""
    if abs(float(preds.weights.sum()) - 1.0) > WEIGHT_TOL:
        raise InvariantViolationError("prediction weights must sum to 1")
    hits, _ = _sample_hits(uam_path, preds, std, origin)
    return float(np.minimum(preds.weights[hits].sum(), 1.0))


def _aggregate(uam_path, predsets, std, origin):
    """Max-over-intruders LoS probability plus per-intruder diagnostics."""
    prob = 0.0
    hits_list, taus_list = [], []
    for preds in predsets:
        hits, first = _sample_hits(uam_path, preds, std, origin)
        hits_list.append(hits)
        taus_list.append(first)
        prob = max(prob, float(np.minimum(preds.weights[hits].sum(), 1.0)))
    return prob, hits_list, taus_list


def stop_short_rate(speed: float, distance_allowed: float) -> float | None:
    """Smallest deceleration magnitude that stops inside the allowance.

    Returns None when no deceleration is needed or possible; clamps to the
    -0.3g limit when the allowance is too tight to stop short.
    """
    if speed <= 0.0:
        return None
    if distance_allowed <= 0.0:
        return -MAX_DECEL
    mag = speed * speed / (2.0 * distance_allowed)
    if mag <= 0.0:
        return None
    return -min(mag, MAX_DECEL)


def assess_rates(state: UamState, predsets: list, std: SeparationStandard,
                 origin: GeoPoint, horizon: int = PLAN_HORIZON_S) -> LoSAssessment:
    """Exhaustively score every admissible rate against the predictions."""
    current_path = plan_uam_trajectory(state, state.rate, horizon)
    cur_prob, cur_hits, cur_taus = _aggregate(current_path, predsets, std, origin)

    stop = None
    if cur_prob > 0.0:
        dists = plan_distances(state.speed, state.rate, horizon)
        first_steps = [int(t[t >= 0].min()) for t in cur_taus if np.any(t >= 0)]
        if first_steps:
            violation_distance = float(dists[min(first_steps)])
            stop = stop_short_rate(state.speed, violation_distance - std.horizontal_m)

    probabilities = {}
    for a in build_rate_set(stop):
        path = plan_uam_trajectory(state, float(a), horizon)
        prob, _, _ = _aggregate(path, predsets, std, origin)
        probabilities[float(a)] = prob
    return LoSAssessment(
        probabilities=probabilities,
        current_rate=state.rate,
        current_probability=cur_prob,
        stop_short=stop,
        current_hits=cur_hits,
        current_taus=cur_taus,
    )


def _argmin_largest(probabilities: dict, candidates) -> float:
    """Rate with minimal probability; ties resolved toward the largest rate."""
    best_rate = None
    best_prob = None
    for a in sorted(candidates, reverse=True):
        p = probabilities[a]
        if best_prob is None or p < best_prob:
            best_prob = p
            best_rate = a
    return best_rate


def select_rate(state: UamState, predsets: list, std: SeparationStandard,
                origin: GeoPoint, horizon: int = PLAN_HORIZON_S) -> float:
    """One speed-adjustment decision.

    Intruders inside the encounter envelope but without a prediction set
    (None entries) force maximum deceleration for this tick. Otherwise: with
    LoS risk under the current rate, take the probability-minimizing rate
    over the whole set; with zero risk, a non-positive current rate relaxes
    toward the best rate above it, keeping the current rate when every
    faster one is riskier; a positive rate is kept, with the speed clamp
    capping it at cruise.
    """
    if any(ps is None for ps in predsets):
        return -MAX_DECEL
    if not predsets:
        # every rate scores zero, so the branches reduce to: keep a positive
        # rate, otherwise recover with the largest rate above the current one
        if state.rate > 0.0:
            return float(state.rate)
        rates = build_rate_set(None)
        return float(rates[rates > state.rate].max())
    assessment = assess_rates(state, predsets, std, origin)
    probs = assessment.probabilities
    if assessment.current_probability > 0.0:
        return float(_argmin_largest(probs, probs.keys()))
    if state.rate <= 0.0:
        # recovery: move to the best rate above the current one, but never
        # trade a risk-free rate for a risky one (the current rate competes,
        # scoring zero; the largest-rate tie-break still prefers recovery)
        candidates = {a: probs[a] for a in probs if a > state.rate}
        candidates[float(state.rate)] = assessment.current_probability
        return float(_argmin_largest(candidates, candidates.keys()))
    return float(state.rate)
