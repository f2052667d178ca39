"""Deterministic toy base models: seeded MLPs with tanh between layers.

A model is fully reproducible from (seed, layer_dims); weights come from the
documented xoshiro256** stream, unit normal scaled by 1/sqrt(d_in) per layer.
"Tokens" are abstracted away: one metered inference unit is one input vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidShapeError
from .lora import apply_stack
from .rng import Xoshiro256StarStar


@dataclass(frozen=True)
class BaseModel:
    model_id: str
    seed: int
    layer_dims: tuple[int, ...]
    layers: tuple[np.ndarray, ...]

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]


def generate_base_model(model_id: str, seed: int, layer_dims) -> BaseModel:
    """Generate layer weights from the seeded stream, layer by layer, row-major."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise InvalidShapeError(f"need >= 2 positive layer dims, got {dims}")
    rng = Xoshiro256StarStar(seed)
    layers = []
    for d_in, d_out in zip(dims, dims[1:]):
        w = rng.normals(d_out * d_in).reshape(d_out, d_in) / math.sqrt(d_in)
        w.setflags(write=False)
        layers.append(w)
    return BaseModel(model_id=model_id, seed=seed, layer_dims=dims,
                     layers=tuple(layers))


def forward(model: BaseModel, stacks, x: np.ndarray) -> np.ndarray:
    """Run one input vector through the model with per-layer adapter stacks.

    stacks maps layer index -> list of adapters; missing layers run bare.
    tanh between layers, no activation after the last.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != model.input_dim:
        raise InvalidShapeError(
            f"input length {x.shape} does not match model width {model.input_dim}"
        )
    stacks = stacks or {}
    h = x
    last = model.num_layers - 1
    for layer, w in enumerate(model.layers):
        z = apply_stack(w, stacks.get(layer, ()), h)
        h = np.tanh(z) if layer < last else z
    return h
