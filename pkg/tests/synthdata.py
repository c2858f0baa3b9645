"""Synthetic window-pair generators used across the training/eval tests."""

import numpy as np

from uamflow.geo import GeoPoint, enu_to_lonlat
from uamflow.trajdata import NormStats, WindowPair

ANCHOR = GeoPoint(126.7, 37.5, 0.0)


def _pairs_from_enu(tracks_enu, h):
    """Convert (n, h+t, 3) ENU tracks into WindowPairs in lon/lat/alt."""
    pairs = []
    for i, track in enumerate(tracks_enu):
        lon, lat, alt = enu_to_lonlat(track[:, 0], track[:, 1], track[:, 2], ANCHOR)
        lla = np.stack([lon, lat, alt], axis=1)
        pairs.append(WindowPair(traj_id=f"S{i:05d}", t0=float(i * 1000), x=lla[:h], y=lla[h:]))
    return pairs


def linear_pairs(n, h=10, t=8, seed=0, spread=300.0):
    """Constant-velocity tracks with varied headings, speeds, and climb rates."""
    rng = np.random.default_rng(seed)
    steps = np.arange(h + t, dtype=np.float64)
    tracks = np.zeros((n, h + t, 3))
    for i in range(n):
        heading = rng.uniform(0, 2 * np.pi)
        speed = rng.uniform(40.0, 70.0)
        climb = rng.uniform(-3.0, 3.0)
        start = np.array([rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(400, 900)])
        vel = np.array([speed * np.sin(heading), speed * np.cos(heading), climb])
        tracks[i] = start + steps[:, None] * vel
    return _pairs_from_enu(tracks, h)


def bimodal_pairs(n, h=10, t=8, seed=0, turn_deg=55.0, speed=60.0):
    """Straight approach followed by an equally likely left or right turn.

    All observations look alike (up to small jitter), so deterministic
    decoders regress to the mode average while a sampler can cover both
    branches.
    """
    rng = np.random.default_rng(seed)
    tracks = np.zeros((n, h + t, 3))
    for i in range(n):
        start = np.array([rng.uniform(-300, 300), rng.uniform(-300, 300), rng.uniform(500, 700)])
        jitter_speed = speed * rng.uniform(0.95, 1.05)
        climb = rng.uniform(-1.0, 1.0)
        pos = start.copy()
        heading = 0.0  # due north
        turn = np.radians(turn_deg) * (1.0 if rng.uniform() < 0.5 else -1.0)
        for step in range(h + t):
            tracks[i, step] = pos
            if step >= h - 1:
                heading += turn / t
            pos = pos + np.array([jitter_speed * np.sin(heading),
                                  jitter_speed * np.cos(heading), climb])
    return _pairs_from_enu(tracks, h)


def identity_stats():
    return NormStats(pos_mean=np.zeros(3), pos_std=np.ones(3),
                     disp_mean=np.zeros(3), disp_std=np.ones(3))
