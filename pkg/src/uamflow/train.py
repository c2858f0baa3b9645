"""Model assembly, losses, gradients, the training loop, and checkpoints.

Three trainable models share one encoder architecture: the flow decoder
(exact negative log-likelihood objective) and the two deterministic baselines
(mean squared error). Optimization is plain momentum SGD with global-norm
gradient clipping, float64 throughout, fully reproducible from the config
seed. Checkpoints round-trip every tensor bit-exactly through a JSON
container with base64-encoded float64 payloads.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import trajdata as td
from .cnf import DEFAULT_CLAMP, DEFAULT_HIDDEN, DEFAULT_LAYERS, FlowStack
from .errors import ConfigError, DivergedTrainingError, NumericOverflowError, ShapeError
from .evalkit import GruDecoder, MlpDecoder
from .seqenc import ConditionEncoder

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 1e-3
    epochs: int = 100
    seed: int = 0
    clip_norm: float = 5.0
    momentum: float = 0.9
    objective: str = "nll"

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ConfigError("learning_rate and clip_norm must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.objective not in ("nll", "mse"):
            raise ConfigError(f"unknown objective: {self.objective!r}")


def _norm_feats(model, pairs):
    return td.batch_features(pairs, model.input_mode, model.stats)


class _ModelBase:
    """Shared plumbing: parameter access and lon/lat/alt featurization."""

    def features_of(self, x_lla: np.ndarray) -> np.ndarray:
        x_lla = np.asarray(x_lla, dtype=np.float64)
        if x_lla.shape != (self.h_horizon, 3):
            raise ShapeError(f"expected ({self.h_horizon}, 3) observation, got {x_lla.shape}")
        return td.build_inputs(x_lla, self.input_mode, self.stats)

    def param_values(self) -> dict[str, np.ndarray]:
        return {k: v.value.copy() for k, v in self.params.items()}

    def load_param_values(self, tensors: dict[str, np.ndarray]):
        if set(tensors) != set(self.params):
            missing = set(self.params) ^ set(tensors)
            raise ShapeError(f"checkpoint tensors do not match model: {sorted(missing)}")
        for name, value in tensors.items():
            if value.shape != self.params[name].value.shape:
                raise ShapeError(f"tensor {name}: shape {value.shape} != {self.params[name].value.shape}")
            self.params[name].value = value.astype(np.float64).copy()


class FlowModel(_ModelBase):
    """Condition encoder + conditional coupling-flow decoder (NLL objective)."""

    kind = "flow"
    objective = "nll"

    def __init__(self, input_mode: str, stats: td.NormStats, h_horizon: int = td.OBS_HORIZON,
                 t_horizon: int = td.PRED_HORIZON, hidden: int = 64, enc_layers: int = 3,
                 flow_layers: int = DEFAULT_LAYERS, coupling_hidden: int = DEFAULT_HIDDEN,
                 clamp: float = DEFAULT_CLAMP, seed: int = 0):
        self.input_mode = input_mode
        self.stats = stats
        self.h_horizon = h_horizon
        self.t_horizon = t_horizon
        self.dims = {
            "input_mode": input_mode, "h_horizon": h_horizon, "t_horizon": t_horizon,
            "hidden": hidden, "enc_layers": enc_layers, "flow_layers": flow_layers,
            "coupling_hidden": coupling_hidden, "clamp": clamp, "seed": seed,
        }
        rng = np.random.Generator(np.random.PCG64(seed))
        self.encoder = ConditionEncoder(td.feature_width(input_mode), hidden, enc_layers, rng=rng)
        self.flow = FlowStack(3 * t_horizon, hidden, layers=flow_layers,
                              hidden=coupling_hidden, clamp=clamp, rng=rng)
        self.params = {**self.encoder.params, **self.flow.params}

    def log_prob(self, feats, targets_norm, params=None):
        """Per-pair conditional log-density of normalized futures, shape (B,)."""
        batch = ad.value_of(feats).shape[0]
        h = self.encoder.encode(feats, params=params)
        y_flat = ad.reshape(targets_norm, (batch, 3 * self.t_horizon))
        return self.flow.log_density(y_flat, h, params=params)

    def loss(self, feats, targets_norm, params=None):
        return -ad.amean(self.log_prob(feats, targets_norm, params))

    def sample_futures(self, x_lla: np.ndarray, k: int, rng: np.random.Generator):
        """Draw k futures as (k, T, 3) lon/lat/alt plus exact log-densities."""
        feats = self.features_of(x_lla)
        h = self.encoder.encode(feats[None])
        flat, logp = self.flow.sample(h, k, rng)
        futures = td.denormalize_positions(flat.reshape(k, self.t_horizon, 3), self.stats)
        return futures, logp


class _DeterministicModel(_ModelBase):
    objective = "mse"

    def loss(self, feats, targets_norm, params=None):
        pred = self.rollout(feats, params)
        err = pred - targets_norm
        return ad.amean(err * err)

    def rollout(self, feats, params=None):
        raise NotImplementedError

    def predict_future(self, x_lla: np.ndarray) -> np.ndarray:
        feats = self.features_of(x_lla)
        pred_norm = ad.value_of(self.rollout(feats[None]))[0]
        return td.denormalize_positions(pred_norm, self.stats)


class GruDecoderModel(_DeterministicModel):
    """Encoder + recursive recurrent decoder baseline."""

    kind = "gru"

    def __init__(self, input_mode: str, stats: td.NormStats, h_horizon: int = td.OBS_HORIZON,
                 t_horizon: int = td.PRED_HORIZON, hidden: int = 64, enc_layers: int = 3,
                 seed: int = 0):
        self.input_mode = input_mode
        self.stats = stats
        self.h_horizon = h_horizon
        self.t_horizon = t_horizon
        self.dims = {
            "input_mode": input_mode, "h_horizon": h_horizon, "t_horizon": t_horizon,
            "hidden": hidden, "enc_layers": enc_layers, "seed": seed,
        }
        rng = np.random.Generator(np.random.PCG64(seed))
        self.encoder = ConditionEncoder(td.feature_width(input_mode), hidden, enc_layers, rng=rng)
        self.decoder = GruDecoder(hidden, t_horizon, rng)
        self.params = {**self.encoder.params, **self.decoder.params}

    def rollout(self, feats, params=None):
        h = self.encoder.encode(feats, params=params)
        # seed the recursion with the last observed position, z-scored
        last_norm = self._last_position_norm(feats)
        return self.decoder.rollout(h, last_norm, params=params)

    def _last_position_norm(self, feats):
        value = ad.value_of(feats)
        if self.input_mode == "dev":
            # displacement-only features carry no absolute position; start
            # the recursion from the normalized-origin point instead
            return np.zeros((value.shape[0], 3))
        return value[:, -1, :3]


class MlpDecoderModel(_DeterministicModel):
    """Encoder + 3-layer fully connected decoder baseline."""

    kind = "mlp"

    def __init__(self, input_mode: str, stats: td.NormStats, h_horizon: int = td.OBS_HORIZON,
                 t_horizon: int = td.PRED_HORIZON, hidden: int = 64, enc_layers: int = 3,
                 mlp_hidden: int = 128, seed: int = 0):
        self.input_mode = input_mode
        self.stats = stats
        self.h_horizon = h_horizon
        self.t_horizon = t_horizon
        self.dims = {
            "input_mode": input_mode, "h_horizon": h_horizon, "t_horizon": t_horizon,
            "hidden": hidden, "enc_layers": enc_layers, "mlp_hidden": mlp_hidden, "seed": seed,
        }
        rng = np.random.Generator(np.random.PCG64(seed))
        self.encoder = ConditionEncoder(td.feature_width(input_mode), hidden, enc_layers, rng=rng)
        self.decoder = MlpDecoder(hidden, t_horizon, mlp_hidden, rng)
        self.params = {**self.encoder.params, **self.decoder.params}

    def rollout(self, feats, params=None):
        h = self.encoder.encode(feats, params=params)
        return self.decoder.rollout(h, None, params=params)


MODEL_KINDS = {"flow": FlowModel, "gru": GruDecoderModel, "mlp": MlpDecoderModel}


def build_model(kind: str, stats: td.NormStats, dims: dict):
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind: {kind!r}")
    return MODEL_KINDS[kind](stats=stats, **dims)


# ---------------------------------------------------------------------------
# Losses and gradients
# ---------------------------------------------------------------------------

def _batch_loss_value(model, pairs) -> float:
    feats, targets = _norm_feats(model, pairs)
    value = float(ad.value_of(model.loss(feats, targets)))
    if not math.isfinite(value):
        raise DivergedTrainingError(f"{model.objective} loss is non-finite")
    return value


def nll_loss(pairs: Sequence[td.WindowPair], model) -> float:
    """Mean negative conditional log-likelihood over the pairs."""
    if model.objective != "nll":
        raise ConfigError(f"model kind {model.kind!r} has no likelihood")
    if not pairs:
        raise ConfigError("nll_loss needs a non-empty batch")
    return _batch_loss_value(model, pairs)


def mse_loss(pairs: Sequence[td.WindowPair], model) -> float:
    """Mean squared error over all normalized future coordinates."""
    if model.objective != "mse":
        raise ConfigError(f"model kind {model.kind!r} is not trained on MSE")
    if not pairs:
        raise ConfigError("mse_loss needs a non-empty batch")
    return _batch_loss_value(model, pairs)


def compute_gradients(model, pairs: Sequence[td.WindowPair]) -> dict[str, np.ndarray]:
    """Gradient of the model's objective w.r.t. every parameter tensor."""
    feats, targets = _norm_feats(model, pairs)
    for var in model.params.values():
        var.grad = None
    loss = model.loss(feats, targets, params=model.params)
    if not math.isfinite(float(loss.value)):
        raise DivergedTrainingError("loss is non-finite")
    loss.backward()
    return {
        name: (var.grad if var.grad is not None else np.zeros_like(var.value))
        for name, var in model.params.items()
    }


def _clip_global_norm(grads: dict[str, np.ndarray], max_norm: float):
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return grads


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    kind: str
    dims: dict
    tensors: dict[str, np.ndarray]
    norm_stats: td.NormStats
    config: dict
    val_score: float
    val_history: list[float] = field(default_factory=list)

    def save(self, path):
        payload = {
            "version": CHECKPOINT_VERSION,
            "kind": self.kind,
            "dims": self.dims,
            "tensors": {
                name: {
                    "shape": list(t.shape),
                    "data": base64.b64encode(np.ascontiguousarray(t, dtype="<f8").tobytes()).decode("ascii"),
                }
                for name, t in sorted(self.tensors.items())
            },
            "norm_stats": self.norm_stats.to_dict(),
            "config": self.config,
            "val_score": self.val_score,
            "val_history": self.val_history,
        }
        Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Checkpoint":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version: {payload.get('version')}")
        tensors = {
            name: np.frombuffer(base64.b64decode(entry["data"]), dtype="<f8").reshape(entry["shape"]).copy()
            for name, entry in payload["tensors"].items()
        }
        return cls(
            kind=payload["kind"],
            dims=payload["dims"],
            tensors=tensors,
            norm_stats=td.NormStats.from_dict(payload["norm_stats"]),
            config=payload["config"],
            val_score=payload["val_score"],
            val_history=payload.get("val_history", []),
        )

    def to_model(self):
        model = build_model(self.kind, self.norm_stats, self.dims)
        model.load_param_values(self.tensors)
        return model


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def fit(model, train_pairs: Sequence[td.WindowPair], val_pairs: Sequence[td.WindowPair],
        config: TrainConfig) -> Checkpoint:
    """Momentum-SGD training with best-validation model selection.

    The validation score is recorded before any update (epoch 0) and after
    every epoch; the returned checkpoint holds the parameters of the best
    epoch. Fully deterministic for a fixed config seed.
    """
    if not train_pairs or not val_pairs:
        raise ConfigError("fit needs non-empty train and validation sets")
    train_ids = {(p.traj_id, p.t0) for p in train_pairs}
    if any((p.traj_id, p.t0) in train_ids for p in val_pairs):
        raise ConfigError("train and validation sets must be disjoint")
    if config.objective != model.objective:
        raise ConfigError(
            f"objective {config.objective!r} does not match model kind {model.kind!r}")

    feats, targets = _norm_feats(model, train_pairs)
    feats_val, targets_val = _norm_feats(model, val_pairs)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    velocity = {name: np.zeros_like(var.value) for name, var in model.params.items()}
    last_finite_epoch = 0

    def val_score() -> float:
        try:
            value = float(ad.value_of(model.loss(feats_val, targets_val)))
        except NumericOverflowError as exc:
            raise DivergedTrainingError(
                f"validation loss overflowed: {exc}", last_finite_epoch=last_finite_epoch) from exc
        if not math.isfinite(value):
            raise DivergedTrainingError(
                "validation loss is non-finite", last_finite_epoch=last_finite_epoch)
        return value

    history = [val_score()]
    best_epoch = 0
    best_score = history[0]
    best_tensors = model.param_values()
    n = len(train_pairs)

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            for var in model.params.values():
                var.grad = None
            try:
                loss = model.loss(feats[idx], targets[idx], params=model.params)
            except NumericOverflowError as exc:
                raise DivergedTrainingError(
                    f"training overflowed in epoch {epoch}: {exc}",
                    last_finite_epoch=last_finite_epoch) from exc
            if not math.isfinite(float(loss.value)):
                raise DivergedTrainingError(
                    f"training loss diverged in epoch {epoch}", last_finite_epoch=last_finite_epoch)
            loss.backward()
            grads = {name: (var.grad if var.grad is not None else np.zeros_like(var.value))
                     for name, var in model.params.items()}
            _clip_global_norm(grads, config.clip_norm)
            for name, var in model.params.items():
                velocity[name] = config.momentum * velocity[name] + grads[name]
                var.value = var.value - config.learning_rate * velocity[name]
        score = val_score()
        history.append(score)
        last_finite_epoch = epoch
        if score < best_score:
            best_score = score
            best_epoch = epoch
            best_tensors = model.param_values()

    model.load_param_values(best_tensors)
    return Checkpoint(
        kind=model.kind,
        dims=model.dims,
        tensors=best_tensors,
        norm_stats=model.stats,
        config={**asdict(config), "best_epoch": best_epoch},
        val_score=best_score,
        val_history=history,
    )
