import struct
import warnings

import numpy as np
import pytest

from saliency_hash.attention import SpatialAttention
from saliency_hash.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from saliency_hash.errors import (BadMagicError, ContractError, ShapeError, ShapeMismatchError,
                                  TruncatedFileError, VersionMismatchError)
from saliency_hash.layers import ResidualBlock
from saliency_hash.model import (AshConfig, HashCode, binarize, build_model, default_thresholds,
                                 encode_batch, pack_bits, unpack_bits)
from saliency_hash.tensor import make_rng


def u_param_count(k, c, h, w, w0, w1, hidden=4096):
    """Per-layer arithmetic for conv-bn-maxpool-conv-bn-avgpool-fc-fc."""
    conv = lambda cin, cout: cout * cin * 9 + cout
    bn = lambda ch: 2 * ch
    pooled = lambda s: (s - 1) // 2 + 1  # 3x3, stride 2, pad 1
    flat = w1 * pooled(pooled(h)) * pooled(pooled(w))
    return (conv(c, w0) + bn(w0) + conv(w0, w1) + bn(w1)
            + flat * hidden + hidden + hidden * k + k)


class TestBuild:
    def test_u_code_length(self):
        m = build_model(AshConfig("U", 12, (3, 32, 32), (16, 32), seed=0))
        assert encode_batch(m, np.zeros((2, 3, 32, 32), np.float32)).shape == (2, 12)

    def test_u_parameter_count(self):
        m = build_model(AshConfig("U", 12, (3, 32, 32), (16, 32)))
        assert m.num_parameters() == u_param_count(12, 3, 32, 32, 16, 32) == 8_447_052

    @pytest.mark.parametrize("k,h", [(4, 8), (24, 20), (48, 33)])
    def test_u_parameter_count_other_shapes(self, k, h):
        cfg = AshConfig("U", k, (3, h, h), (8, 12), hidden=64)
        assert build_model(cfg).num_parameters() == u_param_count(k, 3, h, h, 8, 12, hidden=64)

    def test_l_has_three_residual_blocks_and_one_gate(self):
        m = build_model(AshConfig("L", 12, (3, 32, 32)))
        kinds = [type(layer) for _, layer in m.layers]
        assert kinds.count(ResidualBlock) == 3
        assert kinds.count(SpatialAttention) == 1
        # the gate comes right after the residual blocks
        assert kinds.index(SpatialAttention) == max(i for i, t in enumerate(kinds) if t is ResidualBlock) + 1

    @pytest.mark.parametrize("arch", ["U", "L"])
    def test_ablation_removes_only_the_gate(self, arch):
        with_gate = build_model(AshConfig(arch, 8, (3, 16, 16), hidden=32))
        without = build_model(AshConfig(arch, 8, (3, 16, 16), hidden=32, attention=False))
        assert [n for n, _ in with_gate.layers if n != "attention"] == [n for n, _ in without.layers]
        assert list(with_gate.params) == list(without.params)
        assert with_gate.num_parameters() == without.num_parameters()
        for name in with_gate.params:
            assert np.array_equal(with_gate.params[name].data, without.params[name].data)

    def test_large_k_warns(self):
        with pytest.warns(UserWarning):
            AshConfig("U", 48, (1, 4, 4)).validate()
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            AshConfig("U", 12, (3, 32, 32)).validate()

    @pytest.mark.parametrize("kwargs", [dict(arch="X"), dict(k=0), dict(widths=(8,)),
                                        dict(head_activation="tanh")])
    def test_invalid_configs(self, kwargs):
        with pytest.raises(ContractError):
            build_model(AshConfig(**{"input_shape": (3, 8, 8), **kwargs}))

    def test_wrong_input_shape(self):
        m = build_model(AshConfig(k=4, input_shape=(3, 8, 8), hidden=8))
        with pytest.raises(ShapeError):
            m(np.zeros((1, 3, 9, 9), np.float32))


@pytest.fixture(scope="module")
def model():
    return build_model(AshConfig(k=6, input_shape=(3, 16, 16), seed=1))


class TestEncode:
    def test_sigmoid_range_and_shape(self, model):
        e = encode_batch(model, make_rng(9).random((5, 3, 16, 16)))
        assert e.shape == (5, 6)
        assert np.all((e > 0) & (e < 1))

    def test_deterministic(self, model):
        x = make_rng(9).random((5, 3, 16, 16))
        assert np.array_equal(encode_batch(model, x), encode_batch(model, x))

    def test_eval_does_not_touch_running_stats(self, model):
        before = {k: v.copy() for k, v in model.buffers.items()}
        encode_batch(model, make_rng(1).random((4, 3, 16, 16)))
        assert all(np.array_equal(before[k], v) for k, v in model.buffers.items())

    def test_chunking_only_changes_roundoff_in_eval(self, model):
        x = make_rng(2).random((7, 3, 16, 16))
        a, b = encode_batch(model, x, batch_size=3), encode_batch(model, x, batch_size=100)
        assert np.allclose(a, b, atol=1e-6)

    def test_bad_mode(self, model):
        with pytest.raises(ContractError):
            encode_batch(model, np.zeros((1, 3, 16, 16)), mode="test")


class TestBinaryCodes:
    def test_tie_goes_to_zero(self):
        assert binarize(np.array([0.9, 0.2, 0.5]), 0.5).tolist() == [1, 0, 0]

    def test_zero_embedding(self):
        assert HashCode.from_bits(binarize(np.zeros(12), 0.5)).popcount() == 0

    def test_per_dimension_thresholds(self):
        assert binarize(np.array([[1.0, 1.0]]), np.array([0.5, 2.0])).tolist() == [[1, 0]]

    def test_threshold_length_checked(self):
        with pytest.raises(ShapeError):
            binarize(np.zeros((2, 3)), np.zeros(4))

    def test_median_thresholds_split_evenly(self):
        e = make_rng(4).standard_normal((1000, 16)) * 3 + 1
        tau = default_thresholds("relu", 16, e)
        ones = binarize(e, tau).mean(axis=0)
        assert np.all(np.abs(ones - 0.5) <= 0.01)

    def test_sigmoid_thresholds_are_half(self):
        assert np.all(default_thresholds("sigmoid", 5) == 0.5)

    def test_median_needs_embeddings(self):
        with pytest.raises(ContractError):
            default_thresholds("linear", 4)

    @pytest.mark.parametrize("k", [1, 12, 63, 64, 65, 130])
    def test_pack_roundtrip(self, k):
        bits = make_rng(k).integers(0, 2, size=(3, k))
        words = pack_bits(bits)
        assert words.shape == (3, (k + 63) // 64) and words.dtype == np.uint64
        assert np.array_equal(unpack_bits(words, k), bits)

    def test_bit_order_lsb_first(self):
        assert int(pack_bits(np.array([1, 0, 1]))[0]) == 0b101

    def test_hashcode_equality_and_hash(self):
        a = HashCode.from_bits([1, 0, 1, 1])
        b = HashCode.from_bits(np.array([1, 0, 1, 1]))
        assert a == b and hash(a) == hash(b)
        assert a != HashCode.from_bits([1, 0, 1, 0])
        assert a != HashCode.from_bits([1, 0, 1, 1, 0])


class TestCheckpoint:
    @pytest.fixture
    def setup(self, tmp_path):
        cfg = AshConfig(k=12, input_shape=(3, 8, 8), hidden=16, seed=2)
        model = build_model(cfg)
        model.buffers["bn1.running_mean"][:] = np.arange(16)
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path)
        return cfg, model, path

    def test_roundtrip_bit_equal(self, setup):
        cfg, model, path = setup
        loaded = load_checkpoint(path, cfg)
        for name, value in model.state().items():
            assert np.array_equal(value, loaded.state()[name])
        x = make_rng(1).random((2, 3, 8, 8))
        assert np.array_equal(encode_batch(model, x), encode_batch(loaded, x))

    def test_l_roundtrip(self, tmp_path):
        cfg = AshConfig("L", 5, (3, 8, 8), hidden=8, seed=4)
        model = build_model(cfg)
        save_checkpoint(model, tmp_path / "l.ckpt")
        loaded = load_checkpoint(tmp_path / "l.ckpt", cfg)
        assert all(np.array_equal(v, loaded.state()[k]) for k, v in model.state().items())

    def test_header_fields(self, setup):
        _, _, path = setup
        header, tensors = read_checkpoint(path)
        assert header == {"version": 1, "arch": "U", "k": 12, "input_shape": (3, 8, 8)}
        raw = path.read_bytes()
        assert raw[:4] == b"ASH1"
        assert struct.unpack("<IBI3I", raw[4:25]) == (1, 0, 12, 3, 8, 8)
        assert "conv1.weight" in tensors

    def test_bad_magic(self, setup, tmp_path):
        cfg, _, path = setup
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"XXXX" + path.read_bytes()[4:])
        with pytest.raises(BadMagicError):
            load_checkpoint(bad, cfg)

    def test_version_mismatch(self, setup, tmp_path):
        cfg, _, path = setup
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 9)
        (tmp_path / "v.ckpt").write_bytes(bytes(raw))
        with pytest.raises(VersionMismatchError):
            load_checkpoint(tmp_path / "v.ckpt", cfg)

    def test_truncated(self, setup, tmp_path):
        cfg, _, path = setup
        (tmp_path / "t.ckpt").write_bytes(path.read_bytes()[:-10])
        with pytest.raises(TruncatedFileError):
            load_checkpoint(tmp_path / "t.ckpt", cfg)

    def test_k_mismatch(self, setup):
        _, _, path = setup
        with pytest.raises(ShapeMismatchError):
            load_checkpoint(path, AshConfig(k=24, input_shape=(3, 8, 8), hidden=16))

    def test_hidden_width_mismatch(self, setup):
        _, _, path = setup
        with pytest.raises(ShapeMismatchError):
            load_checkpoint(path, AshConfig(k=12, input_shape=(3, 8, 8), hidden=32))
