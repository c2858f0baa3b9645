"""Trajectory ingestion, resampling, windowing, filtering, and normalization.

Positions flow through this module as (lon, lat, alt) rows in degrees/metres.
Windows pair H observed points with T future points; feature building and
z-score normalization happen here so every model sees identical inputs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateNormalizationError, MalformedInputError
from .geo import GeoPoint

OBS_HORIZON = 60      # observed points per window (1 Hz seconds)
PRED_HORIZON = 60     # future points per window
GROUND_ALT_M = 150.0  # altitude filter threshold
GROUND_FRACTION = 0.9 # minimum fraction of window points above the threshold

TRAJECTORY_KINDS = ("arrival", "departure", "uam")
INPUT_MODES = ("abs", "dev", "abs_dev")

CSV_HEADER = ["id", "kind", "t", "lon", "lat", "alt_m"]


@dataclass(frozen=True)
class TrackPoint:
    """One time-stamped position sample."""

    t: float
    pos: GeoPoint


@dataclass
class Trajectory:
    """A single flight resampled to a uniform 1 s grid.

    ``lla`` is an (n, 3) array of (lon, lat, alt) rows; ``t0`` is the epoch
    second of the first row.
    """

    id: str
    kind: str
    t0: float
    lla: np.ndarray

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise MalformedInputError(f"unknown trajectory kind: {self.kind!r}")
        self.lla = np.asarray(self.lla, dtype=np.float64)
        if self.lla.ndim != 2 or self.lla.shape[1] != 3 or len(self.lla) < 2:
            raise MalformedInputError(f"trajectory {self.id!r} needs >= 2 (lon, lat, alt) rows")

    def __len__(self):
        return len(self.lla)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.lla), dtype=np.float64)

    def points(self) -> list[TrackPoint]:
        return [
            TrackPoint(t=float(self.t0 + i), pos=GeoPoint(float(r[0]), float(r[1]), float(r[2])))
            for i, r in enumerate(self.lla)
        ]


@dataclass
class WindowPair:
    """One (observation, future) training pair.

    ``x`` holds the H observed (lon, lat, alt) rows, ``y`` the T future rows;
    the future starts exactly one second after the observation ends.
    """

    traj_id: str
    t0: float
    x: np.ndarray
    y: np.ndarray


@dataclass
class DatasetSplit:
    train: list[Trajectory]
    val: list[Trajectory]
    test: list[Trajectory]

    def ids(self) -> dict[str, list[str]]:
        return {
            "train": [t.id for t in self.train],
            "val": [t.id for t in self.val],
            "test": [t.id for t in self.test],
        }


@dataclass
class NormStats:
    """Per-axis z-score statistics for position and displacement channels."""

    pos_mean: np.ndarray
    pos_std: np.ndarray
    disp_mean: np.ndarray
    disp_std: np.ndarray

    @classmethod
    def from_pairs(cls, pairs: Sequence[WindowPair]) -> "NormStats":
        """Compute stats over the training pairs only."""
        if not pairs:
            raise MalformedInputError("cannot compute normalization stats from zero pairs")
        windows = np.stack([np.concatenate([p.x, p.y], axis=0) for p in pairs])
        positions = windows.reshape(-1, 3)
        disps = np.diff(windows, axis=1).reshape(-1, 3)
        return cls(
            pos_mean=positions.mean(axis=0),
            pos_std=positions.std(axis=0),
            disp_mean=disps.mean(axis=0),
            disp_std=disps.std(axis=0),
        )

    def to_dict(self) -> dict:
        return {
            "pos_mean": self.pos_mean.tolist(),
            "pos_std": self.pos_std.tolist(),
            "disp_mean": self.disp_mean.tolist(),
            "disp_std": self.disp_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(
            pos_mean=np.asarray(d["pos_mean"], dtype=np.float64),
            pos_std=np.asarray(d["pos_std"], dtype=np.float64),
            disp_mean=np.asarray(d["disp_mean"], dtype=np.float64),
            disp_std=np.asarray(d["disp_std"], dtype=np.float64),
        )


def _check_std(std: np.ndarray, channel: str):
    if np.any(std <= 0.0) or not np.all(np.isfinite(std)):
        raise DegenerateNormalizationError(f"{channel} std must be positive, got {std}")


def resample_1hz(raw: Sequence[TrackPoint], traj_id: str, kind: str) -> Trajectory:
    """Linearly interpolate raw samples onto the integer-second grid.

    The grid spans ceil(first time) .. floor(last time); input times must be
    strictly increasing and the span must cover at least two grid seconds.
    """
    if len(raw) < 2:
        raise MalformedInputError(f"trajectory {traj_id!r}: need >= 2 raw points")
    t = np.array([p.t for p in raw], dtype=np.float64)
    dt = np.diff(t)
    if np.any(dt == 0.0):
        raise MalformedInputError(f"trajectory {traj_id!r}: duplicate timestamps")
    if np.any(dt < 0.0):
        raise MalformedInputError(f"trajectory {traj_id!r}: timestamps not increasing")
    t_start = math.ceil(t[0])
    t_end = math.floor(t[-1])
    if t_end - t_start < 1:
        raise MalformedInputError(f"trajectory {traj_id!r}: spans less than 2 grid seconds")
    grid = np.arange(t_start, t_end + 1, dtype=np.float64)
    cols = []
    for getter in (lambda p: p.pos.lon, lambda p: p.pos.lat, lambda p: p.pos.alt):
        vals = np.array([getter(p) for p in raw], dtype=np.float64)
        cols.append(np.interp(grid, t, vals))
    return Trajectory(id=traj_id, kind=kind, t0=float(t_start), lla=np.stack(cols, axis=1))


def split_dataset(trajs: Sequence[Trajectory], seed: int) -> DatasetSplit:
    """Shuffle trajectories with a seeded PRNG and partition 7:1:2.

    Trajectories are sorted by id before shuffling so the split depends only
    on (ids, seed), not the caller's ordering.
    """
    if len(trajs) < 10:
        raise MalformedInputError(f"need >= 10 trajectories to split, got {len(trajs)}")
    ordered = sorted(trajs, key=lambda tr: tr.id)
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(len(ordered))
    shuffled = [ordered[i] for i in perm]
    n = len(shuffled)
    n_train = int(n * 0.7)
    n_val = int(n * 0.1)
    return DatasetSplit(
        train=shuffled[:n_train],
        val=shuffled[n_train:n_train + n_val],
        test=shuffled[n_train + n_val:],
    )


def make_windows(traj: Trajectory, h: int = OBS_HORIZON, t: int = PRED_HORIZON) -> list[WindowPair]:
    """Stride-1 sliding windows of h observed + t future points."""
    window = h + t
    n = len(traj)
    if n < window:
        return []
    pairs = []
    for start in range(n - window + 1):
        pairs.append(
            WindowPair(
                traj_id=traj.id,
                t0=float(traj.t0 + start),
                x=traj.lla[start:start + h].copy(),
                y=traj.lla[start + h:start + window].copy(),
            )
        )
    return pairs


def altitude_filter(
    pairs: Iterable[WindowPair],
    min_alt_m: float = GROUND_ALT_M,
    min_fraction: float = GROUND_FRACTION,
) -> list[WindowPair]:
    """Keep pairs whose window points are mostly above the ground threshold.

    A pair survives iff the fraction of its points with altitude strictly
    above ``min_alt_m`` is at least ``min_fraction`` (boundary inclusive).
    """
    kept = []
    for p in pairs:
        alts = np.concatenate([p.x[:, 2], p.y[:, 2]])
        if np.count_nonzero(alts > min_alt_m) >= min_fraction * alts.size:
            kept.append(p)
    return kept


def displacements(lla: np.ndarray) -> np.ndarray:
    """Per-step displacement rows with the first row zero-padded."""
    d = np.zeros_like(lla)
    d[1:] = np.diff(lla, axis=0)
    return d


def build_inputs(x: np.ndarray, mode: str, stats: NormStats) -> np.ndarray:
    """Build the normalized encoder feature sequence for one observation.

    ``abs`` yields z-scored positions (H, 3); ``dev`` z-scored displacements
    (H, 3) with the first displacement zero-padded before normalization;
    ``abs_dev`` concatenates both to (H, 6).
    """
    if mode not in INPUT_MODES:
        raise MalformedInputError(f"unknown input mode: {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    feats = []
    if mode in ("abs", "abs_dev"):
        _check_std(stats.pos_std, "position")
        feats.append((x - stats.pos_mean) / stats.pos_std)
    if mode in ("dev", "abs_dev"):
        _check_std(stats.disp_std, "displacement")
        feats.append((displacements(x) - stats.disp_mean) / stats.disp_std)
    return feats[0] if len(feats) == 1 else np.concatenate(feats, axis=1)


def feature_width(mode: str) -> int:
    if mode not in INPUT_MODES:
        raise MalformedInputError(f"unknown input mode: {mode!r}")
    return 6 if mode == "abs_dev" else 3


def normalize_positions(lla: np.ndarray, stats: NormStats) -> np.ndarray:
    """Z-score (.., 3) position rows with the training statistics."""
    _check_std(stats.pos_std, "position")
    return (np.asarray(lla, dtype=np.float64) - stats.pos_mean) / stats.pos_std


def denormalize_positions(z: np.ndarray, stats: NormStats) -> np.ndarray:
    """Inverse of :func:`normalize_positions`."""
    _check_std(stats.pos_std, "position")
    return np.asarray(z, dtype=np.float64) * stats.pos_std + stats.pos_mean


def batch_features(pairs: Sequence[WindowPair], mode: str, stats: NormStats):
    """Vectorize pairs into model arrays: features (N, H, F), targets (N, T, 3)."""
    feats = np.stack([build_inputs(p.x, mode, stats) for p in pairs])
    targets = np.stack([normalize_positions(p.y, stats) for p in pairs])
    return feats, targets


# ---------------------------------------------------------------------------
# CSV / JSON persistence
# ---------------------------------------------------------------------------

def read_trajectory_csv(path) -> list[Trajectory]:
    """Read `id,kind,t,lon,lat,alt_m` rows, group by id, resample to 1 Hz.

    Rows for one id must already be in time order; groups keep first-seen
    order of ids for determinism.
    """
    groups: dict[str, dict] = {}
    order: list[str] = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != CSV_HEADER:
            raise MalformedInputError(
                f"{path}: expected header {','.join(CSV_HEADER)}, got {reader.fieldnames}"
            )
        for i, row in enumerate(reader, start=2):
            try:
                tid = row["id"]
                kind = row["kind"]
                point = TrackPoint(
                    t=float(row["t"]),
                    pos=GeoPoint(float(row["lon"]), float(row["lat"]), float(row["alt_m"])),
                )
            except (TypeError, ValueError) as exc:
                raise MalformedInputError(f"{path}:{i}: bad row: {exc}") from exc
            if tid not in groups:
                groups[tid] = {"kind": kind, "points": []}
                order.append(tid)
            groups[tid]["points"].append(point)
    return [resample_1hz(groups[tid]["points"], tid, groups[tid]["kind"]) for tid in order]


def write_trajectory_csv(path, trajs: Sequence[Trajectory]):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for tr in trajs:
            for i, row in enumerate(tr.lla):
                writer.writerow(
                    [tr.id, tr.kind, f"{tr.t0 + i:.1f}", repr(float(row[0])), repr(float(row[1])), repr(float(row[2]))]
                )


@dataclass
class WindowedDataset:
    """Ingestion artifact: per-split window arrays plus normalization stats."""

    mode_defaults: dict = field(default_factory=dict)
    train: list[WindowPair] = field(default_factory=list)
    val: list[WindowPair] = field(default_factory=list)
    test: list[WindowPair] = field(default_factory=list)
    stats: NormStats | None = None
    split_ids: dict | None = None
    seed: int = 0

    def counts(self) -> dict[str, int]:
        return {"train": len(self.train), "val": len(self.val), "test": len(self.test)}


def build_dataset(
    trajs: Sequence[Trajectory],
    seed: int,
    h: int = OBS_HORIZON,
    t: int = PRED_HORIZON,
    min_alt_m: float = GROUND_ALT_M,
) -> WindowedDataset:
    """Split trajectories, window each split, filter, and fit stats on train."""
    split = split_dataset(trajs, seed)
    out = {}
    for name, members in (("train", split.train), ("val", split.val), ("test", split.test)):
        pairs = []
        for tr in members:
            pairs.extend(make_windows(tr, h=h, t=t))
        out[name] = altitude_filter(pairs, min_alt_m=min_alt_m)
    if not out["train"]:
        raise MalformedInputError("no training windows survive filtering")
    stats = NormStats.from_pairs(out["train"])
    return WindowedDataset(
        train=out["train"], val=out["val"], test=out["test"],
        stats=stats, split_ids=split.ids(), seed=seed,
    )


def save_dataset(ds: WindowedDataset, out_dir) -> dict[str, str]:
    """Persist windows as npz plus JSON sidecars for the split and stats."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for name in ("train", "val", "test"):
        pairs = getattr(ds, name)
        n = len(pairs)
        h = pairs[0].x.shape[0] if n else 0
        t = pairs[0].y.shape[0] if n else 0
        arrays[f"{name}_x"] = np.stack([p.x for p in pairs]) if n else np.zeros((0, h, 3))
        arrays[f"{name}_y"] = np.stack([p.y for p in pairs]) if n else np.zeros((0, t, 3))
        arrays[f"{name}_t0"] = np.array([p.t0 for p in pairs], dtype=np.float64)
        arrays[f"{name}_ids"] = np.array([p.traj_id for p in pairs], dtype=np.str_)
    npz_path = out_dir / "dataset.npz"
    np.savez(npz_path, **arrays)
    split_path = out_dir / "split.json"
    split_path.write_text(json.dumps({"seed": ds.seed, "ids": ds.split_ids}, indent=2), encoding="utf-8")
    stats_path = out_dir / "norm_stats.json"
    stats_path.write_text(json.dumps(ds.stats.to_dict(), indent=2), encoding="utf-8")
    return {"dataset": str(npz_path), "split": str(split_path), "norm_stats": str(stats_path)}


def load_dataset(dir_path) -> WindowedDataset:
    dir_path = Path(dir_path)
    data = np.load(dir_path / "dataset.npz", allow_pickle=False)
    split_info = json.loads((dir_path / "split.json").read_text(encoding="utf-8"))
    stats = NormStats.from_dict(json.loads((dir_path / "norm_stats.json").read_text(encoding="utf-8")))
    ds = WindowedDataset(stats=stats, split_ids=split_info["ids"], seed=split_info["seed"])
    for name in ("train", "val", "test"):
        xs, ys = data[f"{name}_x"], data[f"{name}_y"]
        t0s, ids = data[f"{name}_t0"], data[f"{name}_ids"]
        pairs = [
            WindowPair(traj_id=str(ids[i]), t0=float(t0s[i]), x=xs[i], y=ys[i])
            for i in range(len(xs))
        ]
        setattr(ds, name, pairs)
    return ds
