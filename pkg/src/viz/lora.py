"""Low-rank adapters: deltas, stack application, merging, and fitting.

An adapter holds a down-projection (rank x d_in) and an up-projection
(d_out x rank); its weight delta is (alpha/rank) * up @ down.  Stacks are
applied additively without ever materializing merged weights, in a canonical
adapter_id order with sequential left-to-right float64 summation so outputs
are bit-reproducible regardless of how the caller ordered the stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FitDivergedError, InvalidShapeError
from .nf4 import QuantizedTensor, check_matrix
from .rng import Xoshiro256StarStar


@dataclass(frozen=True)
class LoraAdapter:
    """Rank-r factor pair targeting one layer of a base model."""

    adapter_id: str
    target_layer: int
    rank: int
    alpha: float
    down: np.ndarray  # (rank, d_in)
    up: np.ndarray  # (d_out, rank)
    quantized_down: QuantizedTensor | None = None
    quantized_up: QuantizedTensor | None = None

    def __post_init__(self):
        if self.rank < 1:
            raise InvalidShapeError(f"rank must be >= 1, got {self.rank}")
        if self.alpha <= 0:
            raise InvalidShapeError(f"alpha must be > 0, got {self.alpha}")
        object.__setattr__(self, "down", check_matrix(self.down))
        object.__setattr__(self, "up", check_matrix(self.up))
        if self.down.shape[0] != self.rank or self.up.shape[1] != self.rank:
            raise InvalidShapeError(
                f"adapter {self.adapter_id}: down {self.down.shape} / up "
                f"{self.up.shape} inconsistent with rank {self.rank}"
            )

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    @property
    def d_in(self) -> int:
        return self.down.shape[1]

    @property
    def d_out(self) -> int:
        return self.up.shape[0]


def lora_delta(adapter: LoraAdapter) -> np.ndarray:
    """Dense weight delta (alpha/rank) * up @ down, shape (d_out, d_in)."""
    return adapter.scaling * (adapter.up @ adapter.down)


def _check_stack(base: np.ndarray, adapters) -> np.ndarray:
    base = check_matrix(base)
    d_out, d_in = base.shape
    for a in adapters:
        if a.d_in != d_in or a.d_out != d_out:
            raise InvalidShapeError(
                f"adapter {a.adapter_id} maps {a.d_in}->{a.d_out}, "
                f"layer needs {d_in}->{d_out}"
            )
    return base


def apply_stack(base: np.ndarray, adapters, x: np.ndarray) -> np.ndarray:
    """base @ x plus each adapter's low-rank path, never merging weights.

    Adapters are summed in adapter_id order so any permutation of the same
    stack produces bit-identical output.
    """
    base = _check_stack(base, adapters)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != base.shape[1] and x.shape[0] != base.shape[1]:
        raise InvalidShapeError(
            f"input of length {x.shape} incompatible with layer width {base.shape[1]}"
        )
    y = base @ x
    for a in sorted(adapters, key=lambda a: a.adapter_id):
        y = y + a.scaling * (a.up @ (a.down @ x))
    return y


def merge_adapters(base: np.ndarray, adapters) -> np.ndarray:
    """base plus the sum of all adapter deltas, in canonical order."""
    base = _check_stack(base, adapters)
    merged = base.copy()
    for a in sorted(adapters, key=lambda a: a.adapter_id):
        merged = merged + lora_delta(a)
    return merged


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float
    epochs: int
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidShapeError("learning_rate must be > 0")
        if self.epochs < 1:
            raise InvalidShapeError("epochs must be >= 1")


@dataclass(frozen=True)
class FitResult:
    adapter: LoraAdapter
    loss_trace: tuple[float, ...] = field(default_factory=tuple)


def mse_loss_and_grads(
    base: np.ndarray,
    down: np.ndarray,
    up: np.ndarray,
    scaling: float,
    inputs: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean-squared error over all output elements and its analytic gradients.

    inputs is (d_in, n), targets (d_out, n).  Residual R = base@X +
    scaling*up@down@X - Y; loss = ||R||^2 / (n * d_out);
    dL/d_up = (2*scaling/(n*d_out)) * R @ (down@X).T and symmetrically for down.
    """
    n = inputs.shape[1]
    d_out = targets.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is detected, not warned
        z = down @ inputs  # (rank, n)
        residual = base @ inputs + scaling * (up @ z) - targets
        loss = float(np.sum(residual * residual)) / (n * d_out)
        coeff = 2.0 * scaling / (n * d_out)
        grad_up = coeff * (residual @ z.T)
        grad_down = coeff * (up.T @ residual @ inputs.T)
    return loss, grad_down, grad_up


def fit_adapter(
    model,
    layer: int,
    dataset,
    rank: int,
    alpha: float,
    config: FitConfig,
) -> FitResult:
    """Fit a fresh adapter to (input, target) pairs on one layer of a model.

    The down projection initializes from a seeded unit normal scaled by 0.01,
    the up projection from zero (so the initial adapter is an exact no-op);
    training is full-batch plain gradient descent on the layer's linear
    output.  Returns the adapter and the loss measured after each epoch.
    """
    pairs = list(dataset)
    if not pairs:
        raise InvalidShapeError("dataset must be non-empty")
    base = model.layers[layer]
    d_out, d_in = base.shape
    if rank > min(d_in, d_out):
        raise InvalidShapeError(f"rank {rank} exceeds min(d_in, d_out)={min(d_in, d_out)}")

    inputs = np.stack([np.asarray(x, dtype=np.float64) for x, _ in pairs], axis=1)
    targets = np.stack([np.asarray(y, dtype=np.float64) for _, y in pairs], axis=1)
    if inputs.shape[0] != d_in or targets.shape[0] != d_out:
        raise InvalidShapeError(
            f"dataset vectors {inputs.shape[0]}->{targets.shape[0]} do not match "
            f"layer {d_in}->{d_out}"
        )

    rng = Xoshiro256StarStar(config.seed)
    down = rng.normals(rank * d_in).reshape(rank, d_in) * 0.01
    up = np.zeros((d_out, rank))
    scaling = alpha / rank

    trace = []
    _, grad_down, grad_up = mse_loss_and_grads(base, down, up, scaling, inputs, targets)
    for _ in range(config.epochs):
        down = down - config.learning_rate * grad_down
        up = up - config.learning_rate * grad_up
        loss, grad_down, grad_up = mse_loss_and_grads(
            base, down, up, scaling, inputs, targets
        )
        if not np.isfinite(loss):
            raise FitDivergedError(f"loss became non-finite after epoch {len(trace) + 1}")
        trace.append(loss)

    adapter = LoraAdapter(
        adapter_id="unpublished",
        target_layer=layer,
        rank=rank,
        alpha=alpha,
        down=down,
        up=up,
    )
    return FitResult(adapter=adapter, loss_trace=tuple(trace))
