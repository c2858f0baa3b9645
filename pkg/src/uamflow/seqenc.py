"""Condition encoder: a 3-layer gated recurrent network over the observation.

The encoder consumes the (H, F) feature sequence produced by
``trajdata.build_inputs`` and emits the final top-layer hidden state, which
conditions every decoder in this package. Written against the autodiff
helpers so the same code serves training (Var inputs) and inference
(ndarray inputs).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ShapeError

GATE_NAMES = ("z", "r", "h")  # update gate, reset gate, candidate


def init_gru_params(input_dim: int, hidden_dim: int, layers: int, rng: np.random.Generator,
                    prefix: str = "enc") -> dict[str, ad.Var]:
    """Uniform +/- 1/sqrt(hidden) init for every gate matrix; zero biases."""
    bound = 1.0 / np.sqrt(hidden_dim)
    params: dict[str, ad.Var] = {}
    for layer in range(layers):
        in_dim = input_dim if layer == 0 else hidden_dim
        for gate in GATE_NAMES:
            params[f"{prefix}.l{layer}.W{gate}"] = ad.Var(rng.uniform(-bound, bound, (in_dim, hidden_dim)))
            params[f"{prefix}.l{layer}.U{gate}"] = ad.Var(rng.uniform(-bound, bound, (hidden_dim, hidden_dim)))
            params[f"{prefix}.l{layer}.b{gate}"] = ad.Var(np.zeros(hidden_dim))
    return params


def gru_cell(x, h_prev, p, key: str):
    """One gated-recurrence step.

    z and r gates are logistic sigmoids of affine maps of (input, previous
    hidden); the candidate is a tanh of the input and the reset-gated hidden;
    the new hidden is the convex blend h = (1 - z) * h_prev + z * candidate.
    """
    z = ad.sigmoid(x @ p[f"{key}.Wz"] + h_prev @ p[f"{key}.Uz"] + p[f"{key}.bz"])
    r = ad.sigmoid(x @ p[f"{key}.Wr"] + h_prev @ p[f"{key}.Ur"] + p[f"{key}.br"])
    cand = ad.tanh(x @ p[f"{key}.Wh"] + (r * h_prev) @ p[f"{key}.Uh"] + p[f"{key}.bh"])
    return (1.0 - z) * h_prev + z * cand


class ConditionEncoder:
    """Stacked GRU encoder mapping (B, H, F) features to (B, hidden)."""

    def __init__(self, input_dim: int, hidden_dim: int = 64, layers: int = 3,
                 rng: np.random.Generator | None = None, prefix: str = "enc"):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.layers = layers
        self.prefix = prefix
        rng = rng if rng is not None else np.random.Generator(np.random.PCG64(0))
        self.params = init_gru_params(input_dim, hidden_dim, layers, rng, prefix)

    def encode(self, feats, params=None):
        """Run the recurrence; returns the final step's top-layer hidden state.

        ``feats`` is (B, H, F) or (H, F). With the default parameters the
        computation is tape-free numpy; pass the Var parameter dict to build
        a gradient graph.
        """
        p = params if params is not None else ad.plain(self.params)
        value = ad.value_of(feats)
        squeeze = value.ndim == 2
        if squeeze:
            feats = ad.reshape(feats, (1,) + value.shape)
            value = ad.value_of(feats)
        if value.ndim != 3 or value.shape[2] != self.input_dim:
            raise ShapeError(f"expected (B, H, {self.input_dim}) features, got {value.shape}")
        batch, horizon = value.shape[0], value.shape[1]
        if horizon < 1:
            raise ShapeError("observation horizon must be >= 1")
        inputs = [feats[:, t, :] for t in range(horizon)]
        h_final = None
        for layer in range(self.layers):
            key = f"{self.prefix}.l{layer}"
            h = ad.zeros((batch, self.hidden_dim), like=feats)
            outputs = []
            for x_t in inputs:
                h = gru_cell(x_t, h, p, key)
                outputs.append(h)
            inputs = outputs
            h_final = h
        if squeeze:
            h_final = ad.reshape(h_final, (self.hidden_dim,))
        return h_final
