import hashlib

import numpy as np
import pytest

from viz.bundles import (
    build_adapter_bundle,
    pack_codes,
    payload_core_bits,
    quantized_payload,
    read_adapter_bundle,
    unpack_codes,
)
from viz.errors import CorruptBundleError
from viz.lora import LoraAdapter
from viz.nf4 import dequantize, quantize_blockwise


def make_adapter(rng, d_in=16, d_out=8, rank=2):
    return LoraAdapter(
        adapter_id="adp-test",
        target_layer=0,
        rank=rank,
        alpha=4.0,
        down=rng.normal(size=(rank, d_in)),
        up=rng.normal(size=(d_out, rank)),
    )


class TestCodePacking:
    def test_round_trip_even(self):
        codes = np.array([0, 15, 7, 8], dtype=np.uint8)
        assert np.array_equal(unpack_codes(pack_codes(codes, 4), 4, 4), codes)

    def test_round_trip_odd(self):
        codes = np.array([3, 12, 9], dtype=np.uint8)
        packed = pack_codes(codes, 4)
        assert len(packed) == 2
        assert np.array_equal(unpack_codes(packed, 3, 4), codes)

    def test_low_nibble_first(self):
        packed = pack_codes(np.array([0x1, 0x2], dtype=np.uint8), 4)
        assert packed == b"\x21"

    def test_wider_codebooks_one_byte_per_code(self):
        codes = np.array([0, 31, 17], dtype=np.uint8)
        assert pack_codes(codes, 5) == bytes([0, 31, 17])
        assert np.array_equal(unpack_codes(bytes([0, 31, 17]), 3, 5), codes)


class TestQuantizedPayload:
    @pytest.mark.parametrize("use_dq", [False, True])
    def test_reader_recovers_codes_and_scales(self, use_dq):
        from viz.bundles import read_quantized_payload

        rng = np.random.default_rng(0)
        m = rng.normal(size=(12, 10))
        q = quantize_blockwise(m, block_size=16, use_dq=use_dq, chunk_size=4)
        payload = quantized_payload(q)
        got, offset = read_quantized_payload(
            payload, 0, (12, 10), 16, 4, use_dq, 4 if use_dq else None
        )
        assert offset == len(payload)
        assert np.array_equal(got.codes, q.codes)
        if use_dq:
            assert np.array_equal(got.scales.codes, q.scales.codes)
            assert got.scales.global_mean == q.scales.global_mean
            # chunk absmax survives the float32 narrowing within f32 precision
            assert np.allclose(got.scales.chunk_absmax, q.scales.chunk_absmax,
                               rtol=1e-6)
        else:
            assert np.allclose(np.asarray(got.scales), np.asarray(q.scales),
                               rtol=1e-6)

    def test_core_bits_excludes_global_mean(self):
        rng = np.random.default_rng(1)
        q = quantize_blockwise(rng.normal(size=(16, 16)), block_size=16,
                               use_dq=True, chunk_size=4)
        payload = quantized_payload(q)
        assert payload_core_bits(q) == (len(payload) - 8) * 8

    def test_core_bits_plain_counts_everything(self):
        rng = np.random.default_rng(2)
        q = quantize_blockwise(rng.normal(size=(16, 16)), block_size=16)
        assert payload_core_bits(q) == len(quantized_payload(q)) * 8


class TestAdapterBundle:
    def test_round_trip(self):
        rng = np.random.default_rng(3)
        a = make_adapter(rng)
        data = build_adapter_bundle(a, "base-x", block_size=16, use_dq=True,
                                    chunk_size=4)
        bundle = read_adapter_bundle(data)
        assert bundle.manifest["adapter_id"] == "adp-test"
        assert bundle.manifest["base_model_id"] == "base-x"
        restored = bundle.to_adapter()
        assert restored.rank == a.rank and restored.alpha == a.alpha
        # the dense factors round-trip through quantization, so only approximately
        assert np.max(np.abs(restored.down - a.down)) < 0.5
        assert restored.down.shape == a.down.shape
        assert restored.up.shape == a.up.shape

    def test_payload_hash_must_match(self):
        rng = np.random.default_rng(4)
        data = bytearray(build_adapter_bundle(make_adapter(rng), "base-x"))
        data[-1] ^= 0x01
        with pytest.raises(CorruptBundleError):
            read_adapter_bundle(bytes(data))

    def test_bad_magic_rejected(self):
        with pytest.raises(CorruptBundleError):
            read_adapter_bundle(b"NOTMAGIC" + b"\x00" * 32)

    def test_declared_hash_matches_payload_bytes(self):
        rng = np.random.default_rng(5)
        data = build_adapter_bundle(make_adapter(rng), "base-x")
        bundle = read_adapter_bundle(data)
        manifest_len = int.from_bytes(data[8:16], "little")
        payload = data[16 + manifest_len :]
        assert hashlib.sha256(payload).hexdigest() == bundle.manifest["payload_sha256"]

    def test_quantized_tensor_dequantizes_close_to_original(self):
        rng = np.random.default_rng(6)
        a = make_adapter(rng, d_in=64, d_out=32, rank=4)
        bundle = read_adapter_bundle(build_adapter_bundle(a, "base-x", use_dq=False))
        # loaded: scales narrowed to f32; reconstruction error stays near the
        # quantization bound
        down = dequantize(bundle.down)
        direct = dequantize(quantize_blockwise(a.down, 64))
        assert np.allclose(down, direct, rtol=1e-6, atol=1e-7)
