import numpy as np
import pytest

from saliency_hash.errors import ContractError
from saliency_hash.gradcheck import EXTENDED, check_params
from saliency_hash.layers import (Activation, BatchNorm2d, Conv2d, ConvBN, Dense, Flatten,
                                  GlobalAvgPool, Pool2d, ResidualBlock, he_init)
from saliency_hash.tensor import Tensor, make_rng

from conftest import f64

F64 = np.float64


class TestHeInit:
    def test_same_seed_identical(self):
        a, b = he_init(Conv2d(3, 8), 9), he_init(Conv2d(3, 8), 9)
        assert np.array_equal(a.weight.data, b.weight.data)

    def test_different_seed_differs(self):
        assert not np.array_equal(he_init(Conv2d(3, 8), 1).weight.data, he_init(Conv2d(3, 8), 2).weight.data)

    def test_variance_for_576_fan_in(self):
        conv = he_init(Conv2d(64, 20, dtype=F64), 0)  # 20*64*9 = 11520 samples
        assert abs(conv.weight.data.var() / (2 / 576) - 1) < 0.10

    def test_biases_zero_and_bn_identity(self):
        block = he_init(ResidualBlock(4, 8, 2), 3)
        params = dict(block.named_parameters())
        for name, p in params.items():
            if name.endswith("bias") or name.endswith("beta"):
                assert not p.data.any()
            if name.endswith("gamma"):
                assert np.all(p.data == 1)

    def test_parameters_get_distinct_streams(self):
        block = he_init(ResidualBlock(4, 4, 1), 0)
        w1, w2 = block.branch1.conv.weight.data, block.branch2.conv.weight.data
        assert not np.array_equal(w1, w2)

    def test_batchnorm_after_init_passes_standardized_input(self):
        x = make_rng(2).standard_normal((8, 3, 4, 4))
        x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
        bn = he_init(BatchNorm2d(3, dtype=F64), 0)
        assert np.allclose(bn(f64(x), True).data, x, atol=1e-4)


class TestConvLayer:
    def test_zero_weights_give_bias(self):
        conv = Conv2d(2, 3, dtype=F64)
        conv.bias.data[:] = [1.5, -2.0, 0.25]
        out = conv(f64(make_rng(3).random((2, 2, 4, 4)))).data
        assert np.array_equal(out, np.broadcast_to(np.array([1.5, -2.0, 0.25])[None, :, None, None], out.shape))

    def test_delta_kernel_identity(self):
        conv = Conv2d(2, 2, dtype=F64)
        conv.weight.data[0, 0, 1, 1] = conv.weight.data[1, 1, 1, 1] = 1.0
        x = make_rng(4).standard_normal((1, 2, 5, 5))
        assert np.array_equal(conv(f64(x)).data, x)

    def test_default_padding_keeps_size(self):
        assert Conv2d(3, 4)(Tensor(np.zeros((1, 3, 7, 7), np.float32))).shape == (1, 4, 7, 7)

    def test_gradcheck(self):
        conv = he_init(Conv2d(2, 3, stride=2, dtype=F64), 5)
        conv.bias.data[:] = [0.1, -0.2, 0.3]
        x = f64(make_rng(5).standard_normal((2, 2, 6, 6)), grad=True)
        p = f64(make_rng(6).standard_normal((2, 3, 3, 3)))
        r = check_params(lambda: (conv(x) * p).sum(), {"x": x, **dict(conv.named_parameters())})
        assert r.max_rel_error < 1e-4


class TestDense:
    def test_identity_weights(self):
        d = Dense(3, 3, dtype=F64)
        d.weight.data[:] = np.eye(3)
        x = make_rng(5).standard_normal((4, 3))
        assert np.array_equal(d(f64(x)).data, x)

    def test_zero_input_gives_bias(self):
        d = he_init(Dense(3, 2, dtype=F64), 1)
        d.bias.data[:] = [0.5, -1.0]
        assert np.array_equal(d(f64(np.zeros((4, 3)))).data, np.tile([0.5, -1.0], (4, 1)))

    def test_gradcheck(self):
        d = he_init(Dense(5, 3, dtype=F64), 2)
        x = f64(make_rng(7).standard_normal((4, 5)), grad=True)
        p = f64(make_rng(8).standard_normal((4, 3)))
        assert check_params(lambda: (d(x) * p).sum(), {"x": x, **dict(d.named_parameters())}).max_rel_error < 1e-4


class TestResidualBlock:
    def test_zero_branch_is_relu_of_input(self):
        block = ResidualBlock(3, 3, 1, dtype=F64)
        x = make_rng(4).standard_normal((2, 3, 5, 5))
        assert np.array_equal(block(f64(x), True).data, np.maximum(x, 0))

    def test_stride_two_shape(self):
        block = ResidualBlock(16, 32, 2)
        assert block(Tensor(np.zeros((2, 16, 32, 32), np.float32)), False).shape == (2, 32, 16, 16)

    def test_projection_only_when_shape_changes(self):
        assert ResidualBlock(8, 8, 1).projection is None
        assert ResidualBlock(8, 16, 1).projection is not None
        assert ResidualBlock(8, 8, 2).projection is not None

    @pytest.mark.parametrize("out_ch,stride", [(4, 1), (6, 2)])
    def test_gradcheck_toy_block(self, out_ch, stride):
        block = he_init(ResidualBlock(4, out_ch, stride, dtype=F64), 3)
        x = f64(make_rng(9).standard_normal((1, 4, 6, 6)), grad=True)
        size = 6 if stride == 1 else 3
        p = f64(make_rng(10).standard_normal((1, out_ch, size, size)))
        r = check_params(lambda: (block(x, True) * p).sum(), {"x": x, **dict(block.named_parameters())},
                         oracle_dtype=EXTENDED)
        assert r.max_rel_error < 1e-4


class TestSmallLayers:
    def test_activation_pool_flatten_gap(self):
        x = f64(make_rng(0).standard_normal((2, 3, 4, 4)))
        assert np.array_equal(Activation("relu")(x).data, np.maximum(x.data, 0))
        assert Pool2d("max")(x).shape == (2, 3, 2, 2)
        assert np.array_equal(Flatten()(x).data, x.data.reshape(2, -1))
        assert np.allclose(GlobalAvgPool()(x).data, x.data.mean(axis=(2, 3)))

    def test_convbn_registry_names(self):
        names = [n for n, _ in ConvBN(2, 3).named_parameters()]
        assert names == ["conv.weight", "conv.bias", "bn.gamma", "bn.beta"]

    def test_unknown_activation(self):
        with pytest.raises(ContractError):
            Activation("gelu")(f64([1.0]))
