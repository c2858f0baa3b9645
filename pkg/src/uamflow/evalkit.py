"""Deterministic baseline decoders and the displacement-error harness.

Both baselines share the condition encoder with the flow model and are
trained on mean squared error over normalized positions. Displacement errors
are measured in metres in a local ENU frame anchored at the final observed
point of each evaluation pair.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import trajdata as td
from .errors import ShapeError
from .geo import GeoPoint, lonlat_to_enu
from .seqenc import ConditionEncoder, gru_cell, init_gru_params


class GruDecoder:
    """Recurrent decoder: the condition vector seeds the hidden state and the
    previous predicted point feeds the next step."""

    def __init__(self, hidden_dim: int, steps: int, rng: np.random.Generator,
                 prefix: str = "dec"):
        self.hidden_dim = hidden_dim
        self.steps = steps
        self.prefix = prefix
        self.params = init_gru_params(3, hidden_dim, 1, rng, prefix=prefix)
        bound = 1.0 / np.sqrt(hidden_dim)
        self.params[f"{prefix}.out.W"] = ad.Var(rng.uniform(-bound, bound, (hidden_dim, 3)))
        self.params[f"{prefix}.out.b"] = ad.Var(np.zeros(3))

    def rollout(self, h0, first_input, params=None):
        """Recursively generate (B, steps, 3) normalized positions."""
        p = params if params is not None else ad.plain(self.params)
        h = h0
        x = first_input
        outputs = []
        batch = ad.value_of(h0).shape[0]
        for _ in range(self.steps):
            h = gru_cell(x, h, p, f"{self.prefix}.l0")
            x = h @ p[f"{self.prefix}.out.W"] + p[f"{self.prefix}.out.b"]
            outputs.append(ad.reshape(x, (batch, 1, 3)))
        return ad.concat(outputs, axis=1)


class MlpDecoder:
    """Three fully connected layers mapping the condition vector to all
    future positions at once."""

    def __init__(self, cond_dim: int, steps: int, hidden: int, rng: np.random.Generator,
                 prefix: str = "dec"):
        self.steps = steps
        self.prefix = prefix
        self.params = {}
        dims = [(cond_dim, hidden), (hidden, hidden), (hidden, steps * 3)]
        for i, (fan_in, fan_out) in enumerate(dims):
            bound = 1.0 / np.sqrt(fan_in)
            self.params[f"{prefix}.fc{i}.W"] = ad.Var(rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.params[f"{prefix}.fc{i}.b"] = ad.Var(np.zeros(fan_out))

    def rollout(self, h0, first_input, params=None):
        p = params if params is not None else ad.plain(self.params)
        a = ad.tanh(h0 @ p[f"{self.prefix}.fc0.W"] + p[f"{self.prefix}.fc0.b"])
        a = ad.tanh(a @ p[f"{self.prefix}.fc1.W"] + p[f"{self.prefix}.fc1.b"])
        out = a @ p[f"{self.prefix}.fc2.W"] + p[f"{self.prefix}.fc2.b"]
        batch = ad.value_of(h0).shape[0]
        return ad.reshape(out, (batch, self.steps, 3))


def predict_deterministic(x_lla: np.ndarray, model) -> np.ndarray:
    """Single (T, 3) lon/lat/alt prediction from a deterministic model."""
    x_lla = np.asarray(x_lla, dtype=np.float64)
    if x_lla.shape != (model.h_horizon, 3):
        raise ShapeError(f"expected ({model.h_horizon}, 3) observation, got {x_lla.shape}")
    return model.predict_future(x_lla)


# ---------------------------------------------------------------------------
# Displacement metrics (metres, ENU frame)
# ---------------------------------------------------------------------------

def _check_lengths(samples: np.ndarray, truth: np.ndarray):
    samples = np.asarray(samples, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if samples.ndim == 2:
        samples = samples[None]
    if samples.ndim != 3 or truth.ndim != 2 or samples.shape[1:] != truth.shape:
        raise ShapeError(f"incompatible shapes: samples {samples.shape}, truth {truth.shape}")
    if samples.shape[0] < 1:
        raise ShapeError("need at least one sample")
    return samples, truth


def min_ade(samples: np.ndarray, truth: np.ndarray) -> float:
    """Minimum over samples of the mean per-step Euclidean distance."""
    samples, truth = _check_lengths(samples, truth)
    dists = np.linalg.norm(samples - truth, axis=2)
    return float(dists.mean(axis=1).min())


def min_fde(samples: np.ndarray, truth: np.ndarray) -> float:
    """Minimum over samples of the endpoint Euclidean distance."""
    samples, truth = _check_lengths(samples, truth)
    return float(np.linalg.norm(samples[:, -1] - truth[-1], axis=1).min())


def _to_local_enu(lla: np.ndarray, origin: GeoPoint) -> np.ndarray:
    east, north, up = lonlat_to_enu(lla[..., 0], lla[..., 1], lla[..., 2], origin)
    return np.stack([east, north, up], axis=-1)


def evaluate(pairs: Sequence[td.WindowPair], model, k: int, seed: int = 0) -> dict:
    """Mean minADE/minFDE of a model over evaluation pairs.

    The flow draws k samples per pair; deterministic models are evaluated
    with their single output (k is forced to 1). Each pair is measured in
    the ENU frame anchored at its last observed point.
    """
    if not pairs:
        raise ShapeError("evaluate needs at least one pair")
    sampling = hasattr(model, "sample_futures")
    effective_k = k if sampling else 1
    rng = np.random.Generator(np.random.PCG64(seed))
    ades, fdes = [], []
    for pair in pairs:
        anchor = pair.x[-1]
        origin = GeoPoint(float(anchor[0]), float(anchor[1]), float(anchor[2]))
        truth = _to_local_enu(pair.y, origin)
        if sampling:
            preds_lla, _ = model.sample_futures(pair.x, effective_k, rng)
        else:
            preds_lla = model.predict_future(pair.x)[None]
        preds = _to_local_enu(preds_lla, origin)
        ades.append(min_ade(preds, truth))
        fdes.append(min_fde(preds, truth))
    return {
        "model": model.kind,
        "input_config": model.input_mode,
        "minADE_m": float(np.mean(ades)),
        "minFDE_m": float(np.mean(fdes)),
        "k": effective_k,
        "n_pairs": len(pairs),
    }


def write_metrics_csv(path, rows: Sequence[dict]):
    """Emit the comparison table as `model,input_config,minADE_m,minFDE_m`."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["model", "input_config", "minADE_m", "minFDE_m"])
        for row in rows:
            writer.writerow([row["model"], row["input_config"],
                             repr(row["minADE_m"]), repr(row["minFDE_m"])])
