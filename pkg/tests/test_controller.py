import math

import numpy as np
import pytest

from uamflow import controller as ctl
from uamflow.errors import InvariantViolationError, ShapeError
from uamflow.geo import G0, GeoPoint
from uamflow.predictor import PredictionSet

ORIGIN = GeoPoint(126.7, 37.5, 0.0)


def state_at(pos=(0.0, 0.0, 457.2), speed=ctl.V_MAX_MPS, rate=0.0, direction=(1.0, 0.0, 0.0)):
    return ctl.UamState(position=np.asarray(pos, dtype=float), speed=speed, rate=rate,
                        direction=np.asarray(direction, dtype=float))


def prediction_from_path(path, weights=None):
    path = np.asarray(path, dtype=float)
    k = 1 if path.ndim == 2 else path.shape[0]
    trajs = path[None] if path.ndim == 2 else path
    w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=float)
    return PredictionSet("intruder", 0.0, trajs, w, log_densities=np.zeros(k))


def straight_path(start, velocity, steps=60):
    start = np.asarray(start, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    taus = np.arange(1, steps + 1, dtype=float)
    return start + taus[:, None] * velocity


def numeric_plan_distance(v0, a, horizon=60, substeps=1000):
    """Independent kinematics oracle: integrate clamped speed numerically."""
    dt = 1.0 / substeps
    v = v0
    s = 0.0
    out = []
    for step in range(horizon * substeps):
        v_next = min(max(v + a * dt, 0.0), ctl.V_MAX_MPS)
        s += 0.5 * (v + v_next) * dt
        v = v_next
        if (step + 1) % substeps == 0:
            out.append(s)
    return np.asarray(out)


class TestPlanning:
    def test_cruise_covers_3500m_in_60s(self):
        plan = ctl.plan_uam_trajectory(state_at(speed=ctl.V_MAX_MPS), 0.0)
        assert plan.shape == (60, 3)
        assert plan[-1, 0] == pytest.approx(3500.0, abs=1e-9)

    def test_max_deceleration_stops_short(self):
        # closed form: v^2 / (2 * 0.3g) = 578.3 m, stopped by ~19.8 s
        plan = ctl.plan_uam_trajectory(state_at(), -0.3 * G0)
        stop_distance = ctl.V_MAX_MPS ** 2 / (2 * 0.3 * G0)
        assert plan[-1, 0] == pytest.approx(stop_distance, abs=1e-9)
        assert plan[-1, 0] == pytest.approx(578.31, abs=0.01)
        assert plan[20, 0] == plan[59, 0]  # holds position once stopped
        assert plan[18, 0] < plan[19, 0]

    def test_acceleration_clamped_at_cruise(self):
        plan = ctl.plan_uam_trajectory(state_at(speed=ctl.V_MAX_MPS), ctl.ACCEL_RATE)
        np.testing.assert_allclose(np.diff(plan[:, 0]), ctl.V_MAX_MPS, atol=1e-9)

    @pytest.mark.parametrize("v0,a", [
        (ctl.V_MAX_MPS, -0.3 * G0),
        (30.0, ctl.ACCEL_RATE),
        (10.0, -0.05 * G0),
        (0.0, -0.1 * G0),
        (58.0, 0.0),
    ])
    def test_plan_matches_numeric_integration(self, v0, a):
        dists = ctl.plan_distances(v0, a)
        oracle = numeric_plan_distance(v0, a)
        np.testing.assert_allclose(dists, oracle, atol=0.05)

    def test_rate_out_of_range_rejected(self):
        with pytest.raises(InvariantViolationError):
            ctl.plan_uam_trajectory(state_at(), -0.5 * G0)
        with pytest.raises(InvariantViolationError):
            ctl.plan_uam_trajectory(state_at(), 0.3 * G0)


class TestRateSet:
    def test_pinned_contents(self):
        rates = ctl.build_rate_set()
        expected = np.array([0.2 * G0, 0.0] + [-0.3 * G0 * i / 31 for i in range(1, 32)])
        np.testing.assert_allclose(np.sort(rates)[::-1], np.sort(expected)[::-1], atol=0.0)
        assert len(rates) == 33
        assert rates[0] == pytest.approx(0.2 * G0)
        assert rates.min() == pytest.approx(-0.3 * G0)

    def test_descending_and_bounded(self):
        rates = ctl.build_rate_set(-1.23)
        assert np.all(np.diff(rates) < 0)
        assert rates.max() <= 0.2 * G0 + 1e-12
        assert rates.min() >= -0.3 * G0 - 1e-12
        assert -1.23 in rates

    def test_stop_short_out_of_range_rejected(self):
        with pytest.raises(InvariantViolationError):
            ctl.build_rate_set(0.5)

    def test_stop_short_rate_formula(self):
        # need v^2 / (2 |a|) <= allowed, so |a| = v^2 / (2 * allowed)
        a = ctl.stop_short_rate(50.0, 1000.0)
        assert a == pytest.approx(-(50.0 ** 2) / 2000.0)
        assert ctl.stop_short_rate(0.0, 100.0) is None
        assert ctl.stop_short_rate(50.0, -5.0) == pytest.approx(-0.3 * G0)
        # tighter than max deceleration allows: clamp to the limit
        assert ctl.stop_short_rate(58.0, 10.0) == pytest.approx(-0.3 * G0)


class TestCpa:
    def test_head_on_meets_at_ten_seconds(self):
        uam = straight_path((0.0, 0.0, 457.2), (50.0, 0.0, 0.0))
        intruder = straight_path((1000.0, 0.0, 457.2), (-50.0, 0.0, 0.0))
        rec = ctl.cpa(uam, intruder)
        assert rec.tau_s == 10
        assert rec.horizontal_m == pytest.approx(0.0, abs=1e-9)
        assert not rec.vertical_clear

    def test_parallel_tracks_tie_breaks_to_first_step(self):
        uam = straight_path((0.0, 0.0, 100.0), (50.0, 0.0, 0.0))
        intruder = straight_path((0.0, 5000.0, 100.0), (50.0, 0.0, 0.0))
        rec = ctl.cpa(uam, intruder)
        assert rec.tau_s == 1
        assert rec.horizontal_m == pytest.approx(5000.0)
        assert rec.bearing_deg == pytest.approx(270.0)  # due north of an east-bound ownship

    def test_vertical_clear_flag(self):
        uam = straight_path((0.0, 0.0, 0.0), (50.0, 0.0, 0.0))
        intruder = straight_path((1000.0, 200.0, 400.0), (-50.0, 0.0, 0.0))
        rec = ctl.cpa(uam, intruder)
        assert rec.vertical_clear
        assert rec.vertical_m == pytest.approx(400.0)

    def test_empty_paths_rejected(self):
        with pytest.raises(ShapeError):
            ctl.cpa(np.zeros((0, 3)), np.zeros((0, 3)))
        with pytest.raises(ShapeError):
            ctl.cpa(np.zeros((5, 3)), np.zeros((6, 3)))

    def test_stationary_ownship_uses_given_course(self):
        uam = np.tile([0.0, 0.0, 100.0], (30, 1))
        intruder = straight_path((2000.0, 0.0, 100.0), (-30.0, 0.0, 0.0), steps=30)
        rec = ctl.cpa(uam, intruder, own_course_deg=0.0)
        assert rec.bearing_deg == pytest.approx(90.0)


class TestLosProbability:
    def _uam_plan(self):
        return ctl.plan_uam_trajectory(state_at(), 0.0)

    def test_no_violation_zero(self):
        plan = self._uam_plan()
        far = straight_path((0.0, 50_000.0, 457.2), (0.0, 10.0, 0.0))
        assert ctl.los_probability(plan, prediction_from_path(far), ctl.SeparationStandard(), ORIGIN) == 0.0

    def test_all_violating_one(self):
        plan = self._uam_plan()
        shadow = plan + np.array([100.0, 0.0, 0.0])
        preds = prediction_from_path(np.stack([shadow, shadow + 50.0 * np.array([0, 1e-3, 0])]))
        assert ctl.los_probability(plan, preds, ctl.SeparationStandard(), ORIGIN) == pytest.approx(1.0)

    def test_fraction_of_uniform_samples(self):
        plan = self._uam_plan()
        k = 100
        trajs = np.tile(straight_path((0.0, 50_000.0, 457.2), (0.0, 10.0, 0.0)), (k, 1, 1))
        trajs[:37] = plan + np.array([200.0, 0.0, 0.0])  # 37 violating copies
        preds = prediction_from_path(trajs)
        p = ctl.los_probability(plan, preds, ctl.SeparationStandard(), ORIGIN)
        assert p == pytest.approx(0.37, rel=1e-12)

    def test_weight_sum_enforced(self):
        plan = self._uam_plan()
        preds = prediction_from_path(plan[None])
        preds.weights = np.array([0.5])
        with pytest.raises(InvariantViolationError):
            ctl.los_probability(plan, preds, ctl.SeparationStandard(), ORIGIN)

    def test_horizon_mismatch_rejected(self):
        plan = self._uam_plan()
        preds = prediction_from_path(straight_path((0.0, 1000.0, 457.2), (0.0, 1.0, 0.0), steps=30))
        with pytest.raises(ShapeError):
            ctl.los_probability(plan, preds, ctl.SeparationStandard(), ORIGIN)

    def test_threshold_boundary_inclusive(self):
        # a sample pinned exactly at the separation threshold counts as LoS
        plan = np.tile([0.0, 0.0, 457.2], (60, 1))
        offset = np.tile([0.0, 0.0, ctl.SeparationStandard().vertical_m], (60, 1))
        preds = prediction_from_path(plan + offset)
        state = state_at(speed=0.0)
        p = ctl.los_probability(plan, preds, ctl.SeparationStandard(), ORIGIN)
        assert p == pytest.approx(1.0)


def brute_force_select(state, predsets, std, origin):
    """Independent Algorithm-1 oracle: explicit grid, branches, tie-break."""
    if any(ps is None for ps in predsets):
        return -0.3 * G0

    def prob(a):
        plan = ctl.plan_uam_trajectory(state, a)
        best = 0.0
        for ps in predsets:
            best = max(best, ctl.los_probability(plan, ps, std, origin))
        return best

    p_cur = prob(state.rate)
    stop = None
    if p_cur > 0.0:
        # earliest violating step of the current plan, scanned explicitly
        plan = ctl.plan_uam_trajectory(state, state.rate)
        dists = ctl.plan_distances(state.speed, state.rate)
        first = None
        for ps in predsets:
            for traj in ps.trajectories:
                from uamflow.geo import enu_to_lonlat, haversine_m
                ulon, ulat, uup = enu_to_lonlat(plan[:, 0], plan[:, 1], plan[:, 2], origin)
                ilon, ilat, iup = enu_to_lonlat(traj[:, 0], traj[:, 1], traj[:, 2], origin)
                dh = haversine_m(ulon, ulat, ilon, ilat)
                dv = np.abs(iup - uup)
                where = np.where((dh <= std.horizontal_m) & (dv <= std.vertical_m))[0]
                if where.size:
                    first = int(where[0]) if first is None else min(first, int(where[0]))
        if first is not None:
            stop = ctl.stop_short_rate(state.speed, float(dists[first]) - std.horizontal_m)
    rates = ctl.build_rate_set(stop)
    probs = {float(a): prob(float(a)) for a in rates}

    def argmin_largest(cands):
        best_a, best_p = None, None
        for a in sorted(cands, reverse=True):
            if best_p is None or probs[a] < best_p:
                best_a, best_p = a, probs[a]
        return best_a

    if p_cur > 0.0:
        return argmin_largest(list(probs))
    if state.rate <= 0.0:
        # the current (risk-free) rate competes against everything above it
        probs = dict(probs)
        probs[float(state.rate)] = p_cur
        return argmin_largest([a for a in probs if a > state.rate] + [float(state.rate)])
    return float(state.rate)


class TestSelectRate:
    STD = ctl.SeparationStandard()

    def test_no_intruders_accelerates_from_zero(self):
        a = ctl.select_rate(state_at(speed=30.0, rate=0.0), [], self.STD, ORIGIN)
        assert a == pytest.approx(ctl.ACCEL_RATE)

    def test_no_intruders_keeps_positive_rate(self):
        a = ctl.select_rate(state_at(speed=ctl.V_MAX_MPS, rate=ctl.ACCEL_RATE), [], self.STD, ORIGIN)
        assert a == pytest.approx(ctl.ACCEL_RATE)

    def test_empty_fast_path_matches_full_evaluation(self):
        for rate in (0.0, -0.5, ctl.ACCEL_RATE):
            state = state_at(speed=40.0, rate=rate)
            fast = ctl.select_rate(state, [], self.STD, ORIGIN)
            assert fast == pytest.approx(brute_force_select(state, [], self.STD, ORIGIN))

    def test_missing_prediction_forces_max_deceleration(self):
        head_on = prediction_from_path(straight_path((3500.0, 0.0, 457.2), (-80.0, 0.0, 0.0)))
        a = ctl.select_rate(state_at(), [head_on, None], self.STD, ORIGIN)
        assert a == pytest.approx(-0.3 * G0)

    def test_head_on_intruder_matches_brute_force(self):
        # violating under every non-negative rate, avoidable by braking
        crossing = straight_path((3500.0, -4800.0, 457.2), (0.0, 80.0, 0.0))
        preds = prediction_from_path(crossing)
        state = state_at(speed=ctl.V_MAX_MPS, rate=0.0)
        chosen = ctl.select_rate(state, [preds], self.STD, ORIGIN)
        assert chosen == pytest.approx(brute_force_select(state, [preds], self.STD, ORIGIN))
        assert chosen < 0.0

    def test_output_always_in_range(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            state = state_at(speed=float(rng.uniform(0, ctl.V_MAX_MPS)),
                             rate=float(rng.uniform(-0.3 * G0, 0.2 * G0)))
            preds = prediction_from_path(straight_path(
                (float(rng.uniform(500, 4000)), float(rng.uniform(-4000, 4000)), 457.2),
                (float(rng.uniform(-100, 100)), float(rng.uniform(-100, 100)), 0.0)))
            a = ctl.select_rate(state, [preds], self.STD, ORIGIN)
            assert -0.3 * G0 - 1e-12 <= a <= 0.2 * G0 + 1e-12

    def test_random_snapshots_match_brute_force(self):
        rng = np.random.default_rng(1)
        agree = 0
        for trial in range(40):
            state = state_at(
                pos=(float(rng.uniform(-500, 500)), float(rng.uniform(-200, 200)), 457.2),
                speed=float(rng.uniform(0, ctl.V_MAX_MPS)),
                rate=float(rng.choice([0.0, ctl.ACCEL_RATE, -0.1 * G0, -0.3 * G0])))
            n_intruders = int(rng.integers(1, 4))
            predsets = []
            for _ in range(n_intruders):
                k = int(rng.integers(1, 4))
                trajs = np.stack([
                    straight_path(
                        (float(rng.uniform(-2000, 6000)), float(rng.uniform(-5000, 5000)),
                         457.2 + float(rng.uniform(-200, 200))),
                        (float(rng.uniform(-120, 120)), float(rng.uniform(-120, 120)),
                         float(rng.uniform(-3, 3))))
                    for _ in range(k)
                ])
                predsets.append(prediction_from_path(trajs))
            chosen = ctl.select_rate(state, predsets, self.STD, ORIGIN)
            expected = brute_force_select(state, predsets, self.STD, ORIGIN)
            assert chosen == pytest.approx(expected), f"trial {trial}"
            agree += 1
        assert agree == 40

    def test_safety_oracle_truth_in_samples(self):
        # if stopping clears all thresholds and the truth is among the
        # samples, the chosen rate's plan never violates against the truth
        crossing = straight_path((3500.0, -3200.0, 457.2), (0.0, 80.0, 0.0))
        preds = prediction_from_path(crossing)
        state = state_at(speed=ctl.V_MAX_MPS, rate=0.0)
        stop_plan = ctl.plan_uam_trajectory(state, -0.3 * G0)
        assert ctl.los_probability(stop_plan, preds, self.STD, ORIGIN) == 0.0
        chosen = ctl.select_rate(state, [preds], self.STD, ORIGIN)
        chosen_plan = ctl.plan_uam_trajectory(state, chosen)
        assert ctl.los_probability(chosen_plan, preds, self.STD, ORIGIN) == 0.0
