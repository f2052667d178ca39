"""Blockwise 4-bit NormalFloat quantization with optional double quantization.

Weight matrices are flattened row-major, cut into fixed-size blocks, and each
block is scaled by its absolute maximum so values land in [-1, 1] before being
coded against a normal-quantile codebook.  Scales can themselves be quantized
to signed 8-bit codes ("double quantization") to shave the per-block overhead.

All in-memory numerics are float64; the packed 4-bit / 8-bit forms exist at
the serialization boundary (see viz.bundles).
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import CorruptTensorError, InvalidBitWidthError, InvalidShapeError

DEFAULT_BLOCK_SIZE = 64
DEFAULT_CHUNK_SIZE = 256

# 4-bit NormalFloat table, frozen from a one-time run of the quantile-midpoint
# construction below (scripts/gen_nf4_table.py).  Quantization consults this
# table, never the formula, so every platform codes identically.
NF4_VALUES: tuple[float, ...] = (
    -1.0,
    -0.7442388932087964,
    -0.5804190571937756,
    -0.4502690193056761,
    -0.3376657543068184,
    -0.235309147321941,
    -0.139027688080372,
    -0.04600004213555508,
    0.0,
    0.05346308171762629,
    0.161966383967634,
    0.2755554221017746,
    0.3990388483243826,
    0.5405576100537578,
    0.7180758030548845,
    1.0,
)


@dataclass(frozen=True)
class Codebook:
    """Sorted reconstruction levels for k-bit coding, spanning [-1, 1]."""

    bits: int
    values: tuple[float, ...]

    def __post_init__(self):
        if self.bits < 2:
            raise InvalidBitWidthError(f"need at least 2 bits, got {self.bits}")
        if len(self.values) != 1 << self.bits:
            raise CorruptTensorError(
                f"codebook has {len(self.values)} values, expected {1 << self.bits}"
            )
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise CorruptTensorError("codebook values must be strictly increasing")
        if self.values[0] != -1.0 or self.values[-1] != 1.0:
            raise CorruptTensorError("codebook endpoints must be exactly -1 and +1")
        if 0.0 not in self.values:
            raise CorruptTensorError("codebook must contain exact zero")

    @property
    def zero_code(self) -> int:
        return self.values.index(0.0)

    @property
    def max_gap(self) -> float:
        return max(b - a for a, b in zip(self.values, self.values[1:]))


def normal_float_values(k: int) -> list[float]:
    """Quantile-midpoint construction of the k-bit NormalFloat levels.

    Probability levels are evenly spaced with an offset delta = 1/(2*2^k) so
    the extreme quantiles stay finite.  The negative half takes 2^(k-1)
    midpoints of standard-normal quantiles over [delta, 1/2]; the positive
    half takes 2^(k-1)-1 midpoints over [1/2, 1-delta]; an exact zero sits
    between them.  Each half is normalized by its own largest magnitude so the
    endpoints land exactly on -1 and +1.
    """
    if k < 2:
        raise InvalidBitWidthError(f"need at least 2 bits, got {k}")
    inv_cdf = NormalDist().inv_cdf
    half = 1 << (k - 1)
    delta = 1.0 / (2 * (1 << k))

    neg_step = (0.5 - delta) / half
    neg_q = [inv_cdf(delta + i * neg_step) for i in range(half)] + [0.0]
    neg_mid = [(neg_q[i] + neg_q[i + 1]) / 2.0 for i in range(half)]

    pos_step = (0.5 - delta) / (half - 1)
    pos_q = [0.0] + [inv_cdf(0.5 + i * pos_step) for i in range(1, half)]
    pos_mid = [(pos_q[i] + pos_q[i + 1]) / 2.0 for i in range(half - 1)]

    neg_scale = abs(neg_mid[0])
    pos_scale = pos_mid[-1]
    return (
        [v / neg_scale for v in neg_mid] + [0.0] + [v / pos_scale for v in pos_mid]
    )


def build_nf4_codebook(k: int = 4) -> Codebook:
    """Return the k-bit NormalFloat codebook (the frozen table for k=4)."""
    if k == 4:
        return Codebook(bits=4, values=NF4_VALUES)
    return Codebook(bits=k, values=tuple(normal_float_values(k)))


@dataclass(frozen=True)
class DQScales:
    """First-level block scales re-coded as signed bytes around their mean.

    Reconstruction is global_mean + chunk_absmax * code / 127, chunk by chunk.
    """

    chunk_size: int
    codes: np.ndarray  # int8, one per first-level scale
    chunk_absmax: np.ndarray  # float64, one per chunk
    global_mean: float

    def __post_init__(self):
        if self.chunk_size < 1:
            raise CorruptTensorError("chunk_size must be >= 1")
        if self.codes.dtype != np.int8:
            raise CorruptTensorError("DQ codes must be int8")
        if np.any(self.chunk_absmax < 0):
            raise CorruptTensorError("chunk absmax must be non-negative")

    @property
    def count(self) -> int:
        return int(self.codes.size)


@dataclass(frozen=True)
class QuantizedTensor:
    """Blockwise-coded matrix: one codebook index per element, one scale per block."""

    shape: tuple[int, int]
    block_size: int
    codes: np.ndarray  # uint8, one index per element, row-major
    scales: "np.ndarray | DQScales"  # plain absmax per block, or double-quantized
    codebook_bits: int

    def __post_init__(self):
        rows, cols = self.shape
        n = rows * cols
        if self.codes.size != n:
            raise CorruptTensorError(f"expected {n} codes, got {self.codes.size}")
        nblocks = -(-n // self.block_size)
        count = self.scales.count if isinstance(self.scales, DQScales) else self.scales.size
        if count != nblocks:
            raise CorruptTensorError(f"expected {nblocks} scales, got {count}")
        if not isinstance(self.scales, DQScales) and np.any(self.scales < 0):
            raise CorruptTensorError("block scales must be non-negative")

    @property
    def num_blocks(self) -> int:
        return -(-self.shape[0] * self.shape[1] // self.block_size)

    @property
    def use_dq(self) -> bool:
        return isinstance(self.scales, DQScales)


def check_matrix(m: np.ndarray) -> np.ndarray:
    """Validate a 2-D finite float matrix and return it as float64."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise InvalidShapeError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidShapeError("matrix contains non-finite values")
    return m


def quantize_blockwise(
    m: np.ndarray,
    block_size: int = DEFAULT_BLOCK_SIZE,
    codebook: Codebook | None = None,
    use_dq: bool = False,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> QuantizedTensor:
    """Code a matrix blockwise against the codebook.

    Per block the scale is the absolute maximum; each element is mapped to the
    nearest codebook value of x/scale, ties resolving to the lower index.
    All-zero blocks store scale 0 and the exact-zero code.
    """
    if block_size < 1:
        raise InvalidShapeError("block_size must be >= 1")
    m = check_matrix(m)
    cb = codebook or build_nf4_codebook()
    values = np.asarray(cb.values)

    flat = m.reshape(-1)
    n = flat.size
    nblocks = -(-n // block_size)
    padded = np.zeros(nblocks * block_size)
    padded[:n] = flat
    blocks = padded.reshape(nblocks, block_size)

    scales = np.max(np.abs(blocks), axis=1)
    safe = np.where(scales == 0.0, 1.0, scales)
    normalized = blocks / safe[:, None]

    # Nearest code; argmin takes the first (lower) index on exact ties.
    dist = np.abs(normalized[:, :, None] - values[None, None, :])
    codes = np.argmin(dist, axis=2).astype(np.uint8)
    codes[scales == 0.0, :] = cb.zero_code

    codes = codes.reshape(-1)[:n]
    if use_dq:
        return QuantizedTensor(
            shape=m.shape,
            block_size=block_size,
            codes=codes,
            scales=double_quantize_scales(scales, chunk_size),
            codebook_bits=cb.bits,
        )
    return QuantizedTensor(
        shape=m.shape, block_size=block_size, codes=codes, scales=scales,
        codebook_bits=cb.bits,
    )


def dequantize(q: QuantizedTensor, codebook: Codebook | None = None) -> np.ndarray:
    """Reconstruct the matrix: element = block_scale * codebook[code]."""
    cb = codebook or build_nf4_codebook(q.codebook_bits)
    if cb.bits != q.codebook_bits:
        raise CorruptTensorError(
            f"tensor coded with {q.codebook_bits} bits, codebook has {cb.bits}"
        )
    if q.codes.size and int(q.codes.max()) >= (1 << cb.bits):
        raise CorruptTensorError("code index out of codebook range")

    scales = dequantize_scales(q.scales) if q.use_dq else np.asarray(q.scales)
    values = np.asarray(cb.values)
    per_element = np.repeat(scales, q.block_size)[: q.codes.size]
    return (values[q.codes] * per_element).reshape(q.shape)


def double_quantize_scales(
    scales: np.ndarray, chunk_size: int = DEFAULT_CHUNK_SIZE
) -> DQScales:
    """Second-level quantization of block scales to int8 around their mean.

    Per chunk the deviation absmax a is stored alongside codes
    round-half-even(127 * (s - mean)/a); a == 0 degenerates to all-zero codes.
    """
    if chunk_size < 1:
        raise InvalidShapeError("chunk_size must be >= 1")
    scales = np.asarray(scales, dtype=np.float64)
    if np.any(scales < 0):
        raise InvalidShapeError("scales must be non-negative")
    mean = float(np.mean(scales))
    centered = scales - mean

    nchunks = -(-scales.size // chunk_size)
    codes = np.zeros(scales.size, dtype=np.int8)
    absmax = np.zeros(nchunks)
    for c in range(nchunks):
        seg = centered[c * chunk_size : (c + 1) * chunk_size]
        a = float(np.max(np.abs(seg)))
        absmax[c] = a
        if a > 0.0:
            # np.rint rounds half to even
            codes[c * chunk_size : c * chunk_size + seg.size] = np.rint(
                127.0 * seg / a
            ).astype(np.int8)
    return DQScales(chunk_size=chunk_size, codes=codes, chunk_absmax=absmax,
                    global_mean=mean)


def dequantize_scales(dq: DQScales) -> np.ndarray:
    """Invert double quantization: mean + chunk_absmax * code / 127."""
    per_scale_absmax = np.repeat(dq.chunk_absmax, dq.chunk_size)[: dq.codes.size]
    return dq.global_mean + per_scale_absmax * dq.codes.astype(np.float64) / 127.0


def memory_footprint_bits_per_param(
    k: int,
    block_size: int,
    use_dq: bool,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> float:
    """Accounting of stored bits per weight; the global mean amortizes to 0.

    Plain scales cost 32 bits per block; double quantization replaces them
    with 8-bit codes plus a 32-bit absmax per chunk of scales.
    """
    if k < 2:
        raise InvalidBitWidthError(f"need at least 2 bits, got {k}")
    if block_size < 1 or chunk_size < 1:
        raise InvalidShapeError("block_size and chunk_size must be >= 1")
    if use_dq:
        return k + 8.0 / block_size + 32.0 / (block_size * chunk_size)
    return k + 32.0 / block_size
