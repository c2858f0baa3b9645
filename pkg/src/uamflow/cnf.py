"""Conditional normalizing flow over the flattened future trajectory.

A stack of conditional affine coupling layers maps a standard-normal base of
dimension D to the (normalized, time-major flattened) future trajectory,
conditioned on the encoder's latent vector. Each layer passes a block of
coordinates through unchanged and affinely transforms the rest with scale and
translation networks fed by (pass-through block, condition); the Jacobian is
triangular, so the log-determinant is the sum of the (clamped) scale outputs
over the transformed block. A fixed block-rotation permutation between layers
ensures every coordinate is transformed in half the layers.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .errors import NumericOverflowError, ShapeError

LOG_2PI = math.log(2.0 * math.pi)

DEFAULT_LAYERS = 8
DEFAULT_HIDDEN = 128
DEFAULT_CLAMP = 3.0


def _mlp_params(name: str, in_dim: int, hidden: int, out_dim: int,
                rng: np.random.Generator) -> dict[str, ad.Var]:
    """3 fully connected layers; final layer zero-initialized so the flow
    starts as the identity map."""
    dims = [(in_dim, hidden), (hidden, hidden), (hidden, out_dim)]
    params = {}
    for i, (fan_in, fan_out) in enumerate(dims):
        if i == len(dims) - 1:
            w = np.zeros((fan_in, fan_out))
        else:
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, (fan_in, fan_out))
        params[f"{name}{i}.W"] = ad.Var(w)
        params[f"{name}{i}.b"] = ad.Var(np.zeros(fan_out))
    return params


def _mlp_forward(x, p, name: str):
    a = ad.tanh(x @ p[f"{name}0.W"] + p[f"{name}0.b"])
    a = ad.tanh(a @ p[f"{name}1.W"] + p[f"{name}1.b"])
    return a @ p[f"{name}2.W"] + p[f"{name}2.b"]


def _as_batch(x, dim: int, what: str):
    value = ad.value_of(x)
    if value.ndim == 1:
        if value.shape[0] != dim:
            raise ShapeError(f"{what}: expected length {dim}, got {value.shape[0]}")
        return ad.reshape(x, (1, dim)), True
    if value.ndim != 2 or value.shape[1] != dim:
        raise ShapeError(f"{what}: expected (B, {dim}), got {value.shape}")
    return x, False


def _ensure_finite(x, context: str):
    if not np.all(np.isfinite(ad.value_of(x))):
        raise NumericOverflowError(f"non-finite values in {context}")


class CouplingLayer:
    """One conditional affine coupling transform.

    Coordinates [0, split) pass through unchanged; coordinates [split, dim)
    are scaled by exp(s) and shifted by t, where s and t are small MLPs of the
    pass-through block concatenated with the condition vector. ``split`` may
    be zero, in which case the whole vector is transformed conditioned on the
    condition alone (used by 1-D toy flows). The scale output is soft-clamped
    to [-clamp, clamp].
    """

    def __init__(self, dim: int, split: int, cond_dim: int, hidden: int = DEFAULT_HIDDEN,
                 clamp: float = DEFAULT_CLAMP, rng: np.random.Generator | None = None,
                 prefix: str = "flow.k0"):
        if not 0 <= split < dim:
            raise ShapeError(f"split must satisfy 0 <= split < dim, got split={split}, dim={dim}")
        self.dim = dim
        self.split = split
        self.cond_dim = cond_dim
        self.clamp = clamp
        self.prefix = prefix
        rng = rng if rng is not None else np.random.Generator(np.random.PCG64(0))
        in_dim = split + cond_dim
        out_dim = dim - split
        self.params = {}
        self.params.update(_mlp_params(f"{prefix}.s", in_dim, hidden, out_dim, rng))
        self.params.update(_mlp_params(f"{prefix}.t", in_dim, hidden, out_dim, rng))

    def _nets(self, passthrough, h, p):
        net_in = ad.concat([passthrough, h], axis=-1) if self.split > 0 else h
        s_raw = _mlp_forward(net_in, p, f"{self.prefix}.s")
        s = self.clamp * ad.tanh(s_raw * (1.0 / self.clamp))
        t = _mlp_forward(net_in, p, f"{self.prefix}.t")
        return s, t

    def forward(self, x, h, params=None):
        """Apply the transform; returns (y, logdet) with logdet shaped (B,)."""
        p = params if params is not None else ad.plain(self.params)
        x, squeeze = _as_batch(x, self.dim, "coupling input")
        h, _ = _as_batch(h, self.cond_dim, "condition")
        x1 = x[:, :self.split]
        x2 = x[:, self.split:]
        s, t = self._nets(x1, h, p)
        y2 = x2 * ad.exp(s) + t
        y = ad.concat([x1, y2], axis=-1) if self.split > 0 else y2
        logdet = ad.asum(s, axis=-1)
        _ensure_finite(y, "coupling forward")
        if squeeze:
            return ad.reshape(y, (self.dim,)), ad.reshape(logdet, ())
        return y, logdet

    def inverse(self, y, h, params=None):
        """Invert the transform; returns (x, logdet-of-forward-at-x)."""
        p = params if params is not None else ad.plain(self.params)
        y, squeeze = _as_batch(y, self.dim, "coupling input")
        h, _ = _as_batch(h, self.cond_dim, "condition")
        y1 = y[:, :self.split]
        y2 = y[:, self.split:]
        s, t = self._nets(y1, h, p)
        x2 = (y2 - t) * ad.exp(-s)
        x = ad.concat([y1, x2], axis=-1) if self.split > 0 else x2
        logdet = ad.asum(s, axis=-1)
        _ensure_finite(x, "coupling inverse")
        if squeeze:
            return ad.reshape(x, (self.dim,)), ad.reshape(logdet, ())
        return x, logdet


class FlowStack:
    """K coupling layers with block-rotation permutations in between."""

    def __init__(self, dim: int, cond_dim: int, layers: int = DEFAULT_LAYERS,
                 hidden: int = DEFAULT_HIDDEN, clamp: float = DEFAULT_CLAMP,
                 rng: np.random.Generator | None = None, prefix: str = "flow"):
        if dim < 1:
            raise ShapeError("flow dimension must be >= 1")
        self.dim = dim
        self.cond_dim = cond_dim
        self.n_layers = layers
        self.split = dim // 2
        rng = rng if rng is not None else np.random.Generator(np.random.PCG64(0))
        self.layers = [
            CouplingLayer(dim, self.split, cond_dim, hidden=hidden, clamp=clamp,
                          rng=rng, prefix=f"{prefix}.k{i}")
            for i in range(layers)
        ]
        # Rotate the transformed block to the front between layers so every
        # coordinate is passed through and transformed alternately.
        self.perm = np.concatenate([np.arange(self.split, dim), np.arange(self.split)])
        self.inv_perm = np.argsort(self.perm)
        self.params: dict[str, ad.Var] = {}
        for layer in self.layers:
            self.params.update(layer.params)

    def base_log_prob(self, z, axis=-1):
        return -0.5 * ad.asum(z * z, axis=axis) - 0.5 * self.dim * LOG_2PI

    def forward(self, z, h, params=None):
        """Base-to-data pass; returns (x, total_logdet)."""
        z, squeeze = _as_batch(z, self.dim, "flow input")
        h, _ = _as_batch(h, self.cond_dim, "condition")
        total = None
        for i, layer in enumerate(self.layers):
            if i > 0 and self.split > 0:
                z = z[:, self.perm]
            z, ld = layer.forward(z, h, params)
            total = ld if total is None else total + ld
        if squeeze:
            return ad.reshape(z, (self.dim,)), ad.reshape(total, ())
        return z, total

    def inverse(self, x, h, params=None):
        """Data-to-base pass; returns (z0, total_logdet_of_forward)."""
        x, squeeze = _as_batch(x, self.dim, "flow input")
        h, _ = _as_batch(h, self.cond_dim, "condition")
        total = None
        for i in reversed(range(len(self.layers))):
            x, ld = self.layers[i].inverse(x, h, params)
            total = ld if total is None else total + ld
            if i > 0 and self.split > 0:
                x = x[:, self.inv_perm]
        if squeeze:
            return ad.reshape(x, (self.dim,)), ad.reshape(total, ())
        return x, total

    def log_density(self, y, h, params=None):
        """Exact conditional log-density of data vectors under the flow.

        Telescopes the change of variables: the data is pulled back to the
        base through every inverse layer and the per-layer log-determinants
        are subtracted from the base log-density.
        """
        z0, total = self.inverse(y, h, params)
        axis = None if ad.value_of(z0).ndim == 1 else -1
        return self.base_log_prob(z0, axis=axis) - total

    def sample(self, h, n: int, rng: np.random.Generator, params=None):
        """Draw n conditioned samples; each carries its exact log-density."""
        if n < 1:
            raise ShapeError("sample count must be >= 1")
        hv = ad.value_of(h)
        if hv.ndim == 1:
            hv = np.broadcast_to(hv, (n, self.cond_dim))
        elif hv.shape[0] == 1:
            hv = np.broadcast_to(hv, (n, self.cond_dim))
        elif hv.shape[0] != n:
            raise ShapeError(f"condition batch {hv.shape[0]} != sample count {n}")
        z0 = rng.standard_normal((n, self.dim))
        base = self.base_log_prob(z0)
        x, total = self.forward(z0, np.ascontiguousarray(hv), params)
        return ad.value_of(x), ad.value_of(base - total)
