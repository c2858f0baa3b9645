import math

import numpy as np
import pytest

from uamflow import trajdata as td
from uamflow import train as tr
from uamflow.errors import ConfigError, DivergedTrainingError
from uamflow.geo import GeoPoint

from gradcheck import assert_grads_match
from synthdata import bimodal_pairs, identity_stats, linear_pairs


def constant_pairs(n, value, h=4, t=2):
    """Pairs whose every position equals ``value`` (lon/lat/alt units)."""
    lla = np.tile(np.asarray(value, dtype=np.float64), (h + t, 1))
    return [td.WindowPair(traj_id=f"C{i}", t0=float(i * 100), x=lla[:h].copy(), y=lla[h:].copy())
            for i in range(n)]


def stats_centered_at(value):
    return td.NormStats(pos_mean=np.asarray(value, dtype=np.float64), pos_std=np.ones(3),
                        disp_mean=np.zeros(3), disp_std=np.ones(3))


class TestNllLoss:
    def test_identity_flow_gaussian_at_origin(self):
        # fresh flow is the identity map; targets at the normalized origin
        # score exactly the standard-normal log-density over D = 3 * T dims
        value = [126.7, 37.5, 500.0]
        pairs = constant_pairs(3, value, h=4, t=2)
        model = tr.FlowModel("abs", stats_centered_at(value), h_horizon=4, t_horizon=2,
                             hidden=6, enc_layers=1, flow_layers=2, coupling_hidden=4)
        expected = 0.5 * (3 * 2) * math.log(2 * math.pi)
        assert tr.nll_loss(pairs, model) == pytest.approx(expected, rel=1e-12)

    def test_two_dim_gaussian_origin_value(self):
        # D=2 pin of the same quantity straight on the flow stack
        from uamflow.cnf import FlowStack
        flow = FlowStack(2, 3, layers=2, hidden=4, rng=np.random.default_rng(0))
        nll = -float(flow.log_density(np.zeros(2), np.zeros(3)))
        assert nll == pytest.approx(math.log(2 * math.pi), rel=1e-12)

    def test_duplicated_batch_unchanged(self):
        pairs = linear_pairs(6, h=5, t=3, seed=1)
        stats = td.NormStats.from_pairs(pairs)
        model = tr.FlowModel("abs_dev", stats, h_horizon=5, t_horizon=3,
                             hidden=6, enc_layers=2, flow_layers=2, coupling_hidden=8, seed=2)
        single = tr.nll_loss(pairs, model)
        doubled = tr.nll_loss(pairs + pairs, model)
        assert doubled == pytest.approx(single, rel=1e-12)

    def test_wrong_model_kind_rejected(self):
        pairs = linear_pairs(2, h=5, t=3)
        stats = td.NormStats.from_pairs(pairs)
        model = tr.GruDecoderModel("abs", stats, h_horizon=5, t_horizon=3, hidden=4, enc_layers=1)
        with pytest.raises(ConfigError):
            tr.nll_loss(pairs, model)


class TestMseLoss:
    def _zero_output_mlp(self, h=4, t=2):
        model = tr.MlpDecoderModel("abs", identity_stats(), h_horizon=h, t_horizon=t,
                                   hidden=6, enc_layers=1, mlp_hidden=8, seed=3)
        model.params["dec.fc2.W"].value[:] = 0.0
        model.params["dec.fc2.b"].value[:] = 0.0
        return model

    def test_prediction_equals_target_zero(self):
        model = self._zero_output_mlp()
        pairs = constant_pairs(4, [0.0, 0.0, 0.0])
        assert tr.mse_loss(pairs, model) == 0.0

    def test_unit_offset_gives_one(self):
        model = self._zero_output_mlp()
        pairs = constant_pairs(4, [1.0, 1.0, 1.0])
        assert tr.mse_loss(pairs, model) == pytest.approx(1.0, rel=1e-12)

    def test_hand_computed_two_point_toy(self):
        model = self._zero_output_mlp(h=4, t=2)
        lla = np.zeros((6, 3))
        lla[4] = [1.0, 2.0, 3.0]
        lla[5] = [0.0, -2.0, 1.0]
        pair = td.WindowPair(traj_id="X", t0=0.0, x=lla[:4], y=lla[4:])
        expected = (1 + 4 + 9 + 0 + 4 + 1) / 6.0
        assert tr.mse_loss([pair], model) == pytest.approx(expected, rel=1e-12)


class TestGradients:
    def _tiny_models(self):
        pairs = linear_pairs(4, h=5, t=3, seed=4)
        stats = td.NormStats.from_pairs(pairs)
        flow = tr.FlowModel("abs_dev", stats, h_horizon=5, t_horizon=3, hidden=8,
                            enc_layers=3, flow_layers=2, coupling_hidden=8, seed=5)
        gru = tr.GruDecoderModel("abs_dev", stats, h_horizon=5, t_horizon=3, hidden=8,
                                 enc_layers=2, seed=6)
        mlp = tr.MlpDecoderModel("abs_dev", stats, h_horizon=5, t_horizon=3, hidden=8,
                                 enc_layers=2, mlp_hidden=8, seed=7)
        return pairs, (flow, gru, mlp)

    @pytest.mark.parametrize("index", [0, 1, 2], ids=["flow", "gru", "mlp"])
    def test_gradients_match_finite_differences(self, index):
        pairs, models = self._tiny_models()
        model = models[index]
        # randomize the zero-initialized layers so gradients flow everywhere
        rng = np.random.default_rng(8)
        for name, var in model.params.items():
            if np.all(var.value == 0.0):
                var.value = rng.normal(scale=0.1, size=var.value.shape)
        feats, targets = td.batch_features(pairs, model.input_mode, model.stats)

        def loss_fn(params):
            return model.loss(feats, targets, params=params)

        # the recursive gru rollout has enough curvature that 1e-3 steps are
        # truncation-limited; 3e-4 keeps the oracle honest and tight
        step = 3e-4 if model.kind == "gru" else 1e-3
        assert_grads_match(loss_fn, model.params, step=step, tol=1e-4)

    def test_duplicated_batch_same_gradient(self):
        pairs, models = self._tiny_models()
        model = models[2]
        g1 = tr.compute_gradients(model, pairs)
        g2 = tr.compute_gradients(model, pairs + pairs)
        for name in g1:
            np.testing.assert_allclose(g1[name], g2[name], atol=1e-12)

    def test_every_tensor_has_gradient_entry(self):
        pairs, models = self._tiny_models()
        grads = tr.compute_gradients(models[0], pairs)
        assert set(grads) == set(models[0].params)


class TestFit:
    def _setup(self, seed=0):
        pairs = linear_pairs(120, h=5, t=3, seed=seed)
        train, val = pairs[:100], pairs[100:]
        stats = td.NormStats.from_pairs(train)
        model = tr.FlowModel("abs_dev", stats, h_horizon=5, t_horizon=3, hidden=12,
                             enc_layers=2, flow_layers=3, coupling_hidden=16, seed=seed)
        return model, train, val

    def test_smoke_loss_decreases(self):
        model, train, val = self._setup(seed=9)
        cfg = tr.TrainConfig(batch_size=25, learning_rate=0.02, epochs=12, seed=9, objective="nll")
        ckpt = tr.fit(model, train, val, cfg)
        assert ckpt.val_score < ckpt.val_history[0]
        assert ckpt.val_score == min(ckpt.val_history)
        assert ckpt.config["best_epoch"] == int(np.argmin(ckpt.val_history))

    def test_deterministic_given_seed(self):
        cfg = tr.TrainConfig(batch_size=25, learning_rate=0.01, epochs=3, seed=11, objective="nll")
        model1, train, val = self._setup(seed=10)
        ckpt1 = tr.fit(model1, train, val, cfg)
        model2, train, val = self._setup(seed=10)
        ckpt2 = tr.fit(model2, train, val, cfg)
        assert ckpt1.val_history == ckpt2.val_history
        for name in ckpt1.tensors:
            np.testing.assert_array_equal(ckpt1.tensors[name], ckpt2.tensors[name])

    def test_disjointness_enforced(self):
        model, train, val = self._setup()
        cfg = tr.TrainConfig(epochs=1, objective="nll")
        with pytest.raises(ConfigError):
            tr.fit(model, train, train[:5], cfg)

    def test_divergence_raises_with_last_epoch(self):
        model, train, val = self._setup(seed=12)
        # poison one weight so the first loss evaluation is non-finite
        next(iter(model.params.values())).value[0] = np.nan
        cfg = tr.TrainConfig(batch_size=16, learning_rate=0.01, epochs=5, seed=12, objective="nll")
        with pytest.raises(DivergedTrainingError) as err:
            tr.fit(model, train, val, cfg)
        assert err.value.last_finite_epoch is not None

    def test_objective_mismatch_rejected(self):
        model, train, val = self._setup()
        cfg = tr.TrainConfig(epochs=1, objective="mse")
        with pytest.raises(ConfigError):
            tr.fit(model, train, val, cfg)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        model, train, val = TestFit()._setup(seed=13)
        cfg = tr.TrainConfig(batch_size=30, learning_rate=0.01, epochs=2, seed=13, objective="nll")
        ckpt = tr.fit(model, train, val, cfg)
        path = tmp_path / "model.ckpt.json"
        ckpt.save(path)
        loaded = tr.Checkpoint.load(path)
        assert loaded.kind == ckpt.kind
        assert loaded.dims == ckpt.dims
        assert loaded.val_score == ckpt.val_score
        for name in ckpt.tensors:
            np.testing.assert_array_equal(loaded.tensors[name], ckpt.tensors[name])
        rebuilt = loaded.to_model()
        x = train[0].x
        rng1 = np.random.default_rng(1)
        rng2 = np.random.default_rng(1)
        s1, lp1 = model.sample_futures(x, 4, rng1)
        s2, lp2 = rebuilt.sample_futures(x, 4, rng2)
        np.testing.assert_array_equal(s1, s2)
        np.testing.assert_array_equal(lp1, lp2)

    def test_unknown_version_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"version": 99}', encoding="utf-8")
        with pytest.raises(ConfigError):
            tr.Checkpoint.load(path)


def test_config_validation():
    with pytest.raises(ConfigError):
        tr.TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        tr.TrainConfig(learning_rate=-1.0)
    with pytest.raises(ConfigError):
        tr.TrainConfig(objective="huber")
