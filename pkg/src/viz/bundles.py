"""Bundle files: the bit-exact interchange format for adapters and models.

Both bundle kinds are a single file:

    magic (8 bytes) | u64 LE manifest length | manifest JSON (UTF-8) | payload

Adapter payload (little-endian throughout): for the down projection then the
up projection, packed codebook indices followed by that tensor's scales --
float32 per block when plain, or int8 codes + float32 chunk absmax + float64
global mean when double-quantized.  4-bit codes pack two per byte, low nibble
first.  Model payload: float64 row-major weights, layer-major.

docs/formats.md spells the layout out field by field.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptBundleError
from .lora import LoraAdapter
from .models import BaseModel
from .nf4 import DQScales, QuantizedTensor, dequantize, quantize_blockwise

ADAPTER_MAGIC = b"VIZADPT1"
MODEL_MAGIC = b"VIZMODL1"


def pack_codes(codes: np.ndarray, bits: int) -> bytes:
    """Pack codebook indices: two per byte for 4-bit, one per byte otherwise."""
    if bits != 4:
        return codes.astype(np.uint8).tobytes()
    padded = codes
    if codes.size % 2:
        padded = np.append(codes, np.uint8(0))
    pairs = padded.reshape(-1, 2)
    return (pairs[:, 0] | (pairs[:, 1] << 4)).astype(np.uint8).tobytes()


def unpack_codes(data: bytes, count: int, bits: int) -> np.ndarray:
    if bits != 4:
        return np.frombuffer(data, dtype=np.uint8, count=count).copy()
    packed = np.frombuffer(data, dtype=np.uint8)
    out = np.empty(packed.size * 2, dtype=np.uint8)
    out[0::2] = packed & 0x0F
    out[1::2] = packed >> 4
    return out[:count].copy()


def _packed_code_bytes(n: int, bits: int) -> int:
    return -(-n // 2) if bits == 4 else n


def quantized_payload(q: QuantizedTensor) -> bytes:
    """Serialize one quantized tensor: packed codes then scales."""
    parts = [pack_codes(q.codes, q.codebook_bits)]
    if isinstance(q.scales, DQScales):
        parts.append(q.scales.codes.tobytes())
        parts.append(q.scales.chunk_absmax.astype("<f4").tobytes())
        parts.append(struct.pack("<d", q.scales.global_mean))
    else:
        parts.append(np.asarray(q.scales).astype("<f4").tobytes())
    return b"".join(parts)


def read_quantized_payload(
    data: bytes,
    offset: int,
    shape: tuple[int, int],
    block_size: int,
    bits: int,
    use_dq: bool,
    chunk_size: int | None,
) -> tuple[QuantizedTensor, int]:
    """Parse one tensor's section of a payload; returns (tensor, next offset)."""
    n = shape[0] * shape[1]
    nblocks = -(-n // block_size)
    code_bytes = _packed_code_bytes(n, bits)
    codes = unpack_codes(data[offset : offset + code_bytes], n, bits)
    offset += code_bytes
    if use_dq:
        if chunk_size is None:
            raise CorruptBundleError("double-quantized payload without chunk_size")
        nchunks = -(-nblocks // chunk_size)
        dq_codes = np.frombuffer(data, dtype=np.int8, count=nblocks, offset=offset).copy()
        offset += nblocks
        absmax = np.frombuffer(data, dtype="<f4", count=nchunks, offset=offset)
        offset += 4 * nchunks
        mean = float(np.frombuffer(data, dtype="<f8", count=1, offset=offset)[0])
        offset += 8
        scales = DQScales(
            chunk_size=chunk_size,
            codes=dq_codes,
            chunk_absmax=absmax.astype(np.float64),
            global_mean=mean,
        )
    else:
        raw = np.frombuffer(data, dtype="<f4", count=nblocks, offset=offset)
        offset += 4 * nblocks
        scales = raw.astype(np.float64)
    tensor = QuantizedTensor(
        shape=shape, block_size=block_size, codes=codes, scales=scales,
        codebook_bits=bits,
    )
    return tensor, offset


def payload_core_bits(q: QuantizedTensor) -> int:
    """Serialized payload bits excluding the 64-bit global mean (and headers)."""
    bits = _packed_code_bytes(q.codes.size, q.codebook_bits) * 8
    if isinstance(q.scales, DQScales):
        nchunks = -(-q.scales.count // q.scales.chunk_size)
        return bits + q.scales.count * 8 + nchunks * 32
    return bits + q.num_blocks * 32


def _frame(magic: bytes, manifest: dict, payload: bytes) -> bytes:
    doc = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    return magic + len(doc).to_bytes(8, "little") + doc + payload


def _unframe(magic: bytes, data: bytes) -> tuple[dict, bytes]:
    if data[: len(magic)] != magic:
        raise CorruptBundleError(f"bad magic, expected {magic!r}")
    n = int.from_bytes(data[8:16], "little")
    try:
        manifest = json.loads(data[16 : 16 + n].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptBundleError(f"unreadable manifest: {exc}") from exc
    return manifest, data[16 + n :]


@dataclass(frozen=True)
class AdapterBundle:
    manifest: dict
    down: QuantizedTensor
    up: QuantizedTensor

    def to_adapter(self) -> LoraAdapter:
        """Dense adapter reconstructed from the quantized payload."""
        m = self.manifest
        return LoraAdapter(
            adapter_id=m["adapter_id"],
            target_layer=m["target_layer"],
            rank=m["rank"],
            alpha=m["alpha"],
            down=dequantize(self.down),
            up=dequantize(self.up),
            quantized_down=self.down,
            quantized_up=self.up,
        )


def build_adapter_bundle(
    adapter: LoraAdapter,
    base_model_id: str,
    block_size: int = 64,
    use_dq: bool = True,
    chunk_size: int = 256,
) -> bytes:
    """Quantize an adapter's factors and frame them as a publishable bundle."""
    down_q = quantize_blockwise(adapter.down, block_size, use_dq=use_dq,
                                chunk_size=chunk_size)
    up_q = quantize_blockwise(adapter.up, block_size, use_dq=use_dq,
                              chunk_size=chunk_size)
    payload = quantized_payload(down_q) + quantized_payload(up_q)
    manifest = {
        "adapter_id": adapter.adapter_id,
        "base_model_id": base_model_id,
        "target_layer": adapter.target_layer,
        "rank": adapter.rank,
        "alpha": adapter.alpha,
        "down_shape": list(adapter.down.shape),
        "up_shape": list(adapter.up.shape),
        "codebook_bits": down_q.codebook_bits,
        "block_size": block_size,
        "use_dq": use_dq,
        "chunk_size": chunk_size if use_dq else None,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    return _frame(ADAPTER_MAGIC, manifest, payload)


def read_adapter_bundle(data: bytes) -> AdapterBundle:
    """Parse and hash-verify an adapter bundle."""
    manifest, payload = _unframe(ADAPTER_MAGIC, data)
    digest = hashlib.sha256(payload).hexdigest()
    if digest != manifest.get("payload_sha256"):
        raise CorruptBundleError(
            f"payload hash {digest} != declared {manifest.get('payload_sha256')}"
        )
    bits = manifest["codebook_bits"]
    block_size = manifest["block_size"]
    use_dq = manifest["use_dq"]
    chunk_size = manifest["chunk_size"]
    down, offset = read_quantized_payload(
        payload, 0, tuple(manifest["down_shape"]), block_size, bits, use_dq, chunk_size
    )
    up, offset = read_quantized_payload(
        payload, offset, tuple(manifest["up_shape"]), block_size, bits, use_dq,
        chunk_size,
    )
    if offset != len(payload):
        raise CorruptBundleError(
            f"payload has {len(payload) - offset} trailing bytes"
        )
    return AdapterBundle(manifest=manifest, down=down, up=up)


def build_model_bundle(model: BaseModel) -> bytes:
    """Frame a base model: float64 little-endian weights, layer-major."""
    payload = b"".join(w.astype("<f8").tobytes() for w in model.layers)
    manifest = {
        "model_id": model.model_id,
        "seed": model.seed,
        "layer_dims": list(model.layer_dims),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    return _frame(MODEL_MAGIC, manifest, payload)


def read_model_bundle(data: bytes) -> BaseModel:
    """Parse, hash-verify and rebuild a base model from its payload."""
    manifest, payload = _unframe(MODEL_MAGIC, data)
    digest = hashlib.sha256(payload).hexdigest()
    if digest != manifest.get("payload_sha256"):
        raise CorruptBundleError(
            f"payload hash {digest} != declared {manifest.get('payload_sha256')}"
        )
    dims = tuple(manifest["layer_dims"])
    layers = []
    offset = 0
    for d_in, d_out in zip(dims, dims[1:]):
        n = d_in * d_out
        w = np.frombuffer(payload, dtype="<f8", count=n, offset=offset)
        offset += 8 * n
        w = w.reshape(d_out, d_in).copy()
        w.setflags(write=False)
        layers.append(w)
    if offset != len(payload):
        raise CorruptBundleError(f"payload has {len(payload) - offset} trailing bytes")
    return BaseModel(
        model_id=manifest["model_id"], seed=manifest["seed"], layer_dims=dims,
        layers=tuple(layers),
    )
