"""Online prediction service feeding the simulator.

For each conventional aircraft with enough 1 Hz history, produce k sampled
futures over the prediction horizon together with normalized likelihood
weights. Two implementations share the interface: the flow-backed predictor
and a truth-in-samples stub used to validate the controller independently of
model quality.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientHistoryError, InvariantViolationError
from .geo import GeoPoint, lonlat_to_enu

WEIGHT_TOL = 1e-9


@dataclass
class SanityBox:
    """ENU clamp box (metres relative to the scenario origin) for samples."""

    east: tuple = (-150_000.0, 150_000.0)
    north: tuple = (-150_000.0, 150_000.0)
    up: tuple = (-500.0, 12_000.0)

    def clamp(self, enu: np.ndarray):
        """Clip (k, T, 3) paths into the box; returns (clipped, n_touched)."""
        lo = np.array([self.east[0], self.north[0], self.up[0]])
        hi = np.array([self.east[1], self.north[1], self.up[1]])
        clipped = np.clip(enu, lo, hi)
        touched = int(np.sum(np.any(clipped != enu, axis=(1, 2))))
        return clipped, touched


@dataclass
class PredictionSet:
    """k sampled futures for one aircraft at one issue time.

    ``trajectories`` is (k, T, 3) in ENU metres; ``weights`` are the
    per-sample likelihood weights normalized to sum to one.
    """

    aircraft_id: str
    t: float
    trajectories: np.ndarray
    weights: np.ndarray
    log_densities: np.ndarray = field(default=None)
    clamped: int = 0

    def __post_init__(self):
        self.trajectories = np.asarray(self.trajectories, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.trajectories.ndim != 3 or self.trajectories.shape[2] != 3:
            raise InvariantViolationError(f"trajectories must be (k, T, 3), got {self.trajectories.shape}")
        if self.weights.shape != (self.trajectories.shape[0],):
            raise InvariantViolationError("one weight per sampled trajectory required")
        if abs(float(self.weights.sum()) - 1.0) > WEIGHT_TOL:
            raise InvariantViolationError(f"weights sum to {self.weights.sum()}, expected 1")

    @property
    def k(self) -> int:
        return self.trajectories.shape[0]


def weights_from_log_densities(logp: np.ndarray) -> np.ndarray:
    """Shifted-exponential normalization: invariant to constant offsets."""
    logp = np.asarray(logp, dtype=np.float64)
    w = np.exp(logp - logp.max())
    return w / w.sum()


def _stream_seed(master_seed: int, aircraft_id: str, t: float) -> np.random.Generator:
    digest = hashlib.sha256(aircraft_id.encode("utf-8")).digest()
    id_word = int.from_bytes(digest[:8], "big")
    seq = np.random.SeedSequence([int(master_seed), id_word, int(round(t))])
    return np.random.Generator(np.random.PCG64(seq))


class FlowPredictor:
    """Samples futures from a trained flow model, in the scenario ENU frame."""

    def __init__(self, model, origin: GeoPoint, master_seed: int = 0, k: int = 100,
                 box: SanityBox | None = None):
        self.model = model
        self.origin = origin
        self.master_seed = master_seed
        self.k = k
        self.box = box if box is not None else SanityBox()
        self.clamped_total = 0

    def predict(self, aircraft_id: str, t: float, history_lla: np.ndarray) -> PredictionSet:
        """k sampled futures conditioned on the last H seconds of history.

        Raises InsufficientHistoryError when fewer than H contiguous points
        exist; fresh departures near the airport hit this path.
        """
        history_lla = np.asarray(history_lla, dtype=np.float64)
        h = self.model.h_horizon
        if history_lla.ndim != 2 or history_lla.shape[0] < h:
            have = 0 if history_lla.ndim != 2 else history_lla.shape[0]
            raise InsufficientHistoryError(
                f"aircraft {aircraft_id}: {have} points of history, need {h}")
        rng = _stream_seed(self.master_seed, aircraft_id, t)
        futures_lla, logp = self.model.sample_futures(history_lla[-h:], self.k, rng)
        east, north, up = lonlat_to_enu(
            futures_lla[:, :, 0], futures_lla[:, :, 1], futures_lla[:, :, 2], self.origin)
        enu = np.stack([east, north, up], axis=-1)
        enu, touched = self.box.clamp(enu)
        self.clamped_total += touched
        return PredictionSet(
            aircraft_id=aircraft_id,
            t=t,
            trajectories=enu,
            weights=weights_from_log_densities(logp),
            log_densities=logp,
            clamped=touched,
        )


class TruthPredictor:
    """Oracle stub: the scripted future of each aircraft is among the samples.

    ``scripted`` maps aircraft id to (t0, enu_path) where enu_path is the
    full (n, 3) scripted trajectory starting at integer second t0. The
    scripted future is replicated k times with uniform weights; paths past
    their end hold the final position.
    """

    def __init__(self, scripted: dict, horizon: int = 60, k: int = 1):
        self.scripted = scripted
        self.horizon = horizon
        self.k = k

    def predict(self, aircraft_id: str, t: float, history_lla=None) -> PredictionSet:
        t0, path = self.scripted[aircraft_id]
        start = int(round(t)) - int(round(t0)) + 1
        idx = np.clip(np.arange(start, start + self.horizon), 0, len(path) - 1)
        future = path[idx]
        trajs = np.repeat(future[None], self.k, axis=0)
        weights = np.full(self.k, 1.0 / self.k)
        return PredictionSet(
            aircraft_id=aircraft_id, t=t, trajectories=trajs,
            weights=weights, log_densities=np.zeros(self.k),
        )
