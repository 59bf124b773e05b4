import numpy as np
import pytest

from crowdcast import convops
from crowdcast.autodiff import Tensor
from crowdcast.errors import ShapeMismatchError

from oracles import naive_conv2d, naive_deconv2d, naive_per_location_linear


def _t(rng, shape, dtype=np.float32):
    return Tensor(rng.standard_normal(shape).astype(dtype))


class TestConv2d:
    def test_paper_geometry_80_to_40(self):
        rng = np.random.default_rng(0)
        out = convops.conv2d(_t(rng, (1, 1, 80, 80)), _t(rng, (32, 1, 4, 4)),
                             _t(rng, (32,)), (2, 2), (1, 1))
        assert out.shape == (1, 32, 40, 40)

    def test_zero_input_gives_bias(self):
        rng = np.random.default_rng(1)
        bias = _t(rng, (5,))
        out = convops.conv2d(Tensor(np.zeros((1, 1, 3, 3))), _t(rng, (5, 1, 3, 3)),
                             bias, (1, 1), (1, 1))
        for c in range(5):
            assert np.allclose(out.data[0, c], bias.data[c])

    def test_ramp_against_averaging_kernel_oracle(self):
        x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
        w = np.full((1, 1, 2, 2), 0.25)
        b = np.zeros(1)
        out = convops.conv2d(Tensor(x, np.float64), Tensor(w, np.float64),
                             Tensor(b, np.float64), (2, 2), (0, 0))
        expected = naive_conv2d(x, w, b, (2, 2), (0, 0))
        assert out.shape == (1, 1, 2, 2)
        assert np.allclose(out.data, expected)

    @pytest.mark.parametrize("seed", range(5))
    def test_random_against_naive_oracle(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 3, 7, 6))
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        out = convops.conv2d(Tensor(x, np.float64), Tensor(w, np.float64),
                             Tensor(b, np.float64), (2, 2), (1, 1))
        assert np.allclose(out.data, naive_conv2d(x, w, b, (2, 2), (1, 1)), atol=1e-12)

    def test_channel_mismatch_names_axis(self):
        rng = np.random.default_rng(2)
        with pytest.raises(ShapeMismatchError, match="input channels"):
            convops.conv2d(_t(rng, (1, 3, 8, 8)), _t(rng, (4, 2, 4, 4)),
                           _t(rng, (4,)), (2, 2), (1, 1))

    def test_too_small_input_rejected(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ShapeMismatchError, match="spatial extent"):
            convops.conv2d(_t(rng, (1, 1, 2, 2)), _t(rng, (1, 1, 4, 4)),
                           _t(rng, (1,)), (2, 2), (0, 0))


class TestDeconv2d:
    def test_paper_geometry_10_to_20(self):
        rng = np.random.default_rng(0)
        out = convops.deconv2d(_t(rng, (1, 16, 10, 10)), _t(rng, (16, 32, 4, 4)),
                               _t(rng, (32,)), (2, 2), (1, 1))
        assert out.shape == (1, 32, 20, 20)

    def test_zero_input_gives_bias(self):
        rng = np.random.default_rng(1)
        bias = _t(rng, (3,))
        out = convops.deconv2d(Tensor(np.zeros((1, 2, 4, 4))), _t(rng, (2, 3, 4, 4)),
                               bias, (2, 2), (1, 1))
        for c in range(3):
            assert np.allclose(out.data[0, c], bias.data[c])

    @pytest.mark.parametrize("seed", range(5))
    def test_random_against_naive_oracle(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 3, 4, 5))
        w = rng.standard_normal((3, 2, 4, 4))
        b = rng.standard_normal(2)
        out = convops.deconv2d(Tensor(x, np.float64), Tensor(w, np.float64),
                               Tensor(b, np.float64), (2, 2), (1, 1))
        assert np.allclose(out.data, naive_deconv2d(x, w, b, (2, 2), (1, 1)), atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_adjoint_inner_product_identity(self, seed):
        # <deconv(x), y> must equal <x, conv(y)> with shared zero-bias kernel
        rng = np.random.default_rng(seed)
        w = Tensor(rng.standard_normal((3, 2, 4, 4)), np.float64)
        x = Tensor(rng.standard_normal((1, 3, 5, 5)), np.float64)
        y = Tensor(rng.standard_normal((1, 2, 10, 10)), np.float64)
        zb_out = Tensor(np.zeros(2), np.float64)
        zb_in = Tensor(np.zeros(3), np.float64)
        lhs = float(np.sum(convops.deconv2d(x, w, zb_out, (2, 2), (1, 1)).data * y.data))
        rhs = float(np.sum(x.data * convops.conv2d(y, w, zb_in, (2, 2), (1, 1)).data))
        assert abs(lhs - rhs) / max(abs(lhs), abs(rhs)) < 1e-4


class TestTemporalOps:
    def test_paper_temporal_lengths(self):
        rng = np.random.default_rng(0)
        out = convops.temporal_conv(_t(rng, (1, 16, 8, 10, 10)), _t(rng, (64, 16, 4)),
                                    _t(rng, (64,)), 2, 1)
        assert out.shape == (1, 64, 4, 10, 10)
        out = convops.temporal_deconv(_t(rng, (1, 256, 1, 10, 10)), _t(rng, (256, 128, 3)),
                                      _t(rng, (128,)), 1, 0)
        assert out.shape == (1, 128, 3, 10, 10)

    def test_constant_in_time_with_averaging_kernel(self):
        x = np.ones((1, 1, 8, 2, 2)) * 0.7
        w = np.full((1, 1, 4), 0.25)
        out = convops.temporal_conv(Tensor(x, np.float64), Tensor(w, np.float64),
                                    Tensor(np.zeros(1), np.float64), 1, 0)
        assert out.shape == (1, 1, 5, 2, 2)
        assert np.allclose(out.data, 0.7)

    @pytest.mark.parametrize("spot", [(0, 0), (1, 2), (3, 1)])
    def test_spatial_independence_exact(self, spot):
        rng = np.random.default_rng(4)
        w = _t(rng, (2, 3, 4))
        b = _t(rng, (2,))
        x = np.zeros((1, 3, 8, 4, 3), dtype=np.float32)
        x[:, :, :, spot[0], spot[1]] = rng.standard_normal((1, 3, 8)).astype(np.float32)
        out = convops.temporal_conv(Tensor(x), w, b, 2, 1).data
        baseline = convops.temporal_conv(Tensor(np.zeros_like(x)), w, b, 2, 1).data
        mask = np.zeros(out.shape, dtype=bool)
        mask[:, :, :, spot[0], spot[1]] = True
        assert np.array_equal(out[~mask], baseline[~mask])

    def test_temporal_adjointness(self):
        rng = np.random.default_rng(9)
        w = Tensor(rng.standard_normal((3, 2, 4)), np.float64)
        x = Tensor(rng.standard_normal((1, 3, 4, 2, 2)), np.float64)
        y = Tensor(rng.standard_normal((1, 2, 8, 2, 2)), np.float64)
        zb2 = Tensor(np.zeros(2), np.float64)
        zb3 = Tensor(np.zeros(3), np.float64)
        lhs = float(np.sum(convops.temporal_deconv(x, w, zb2, 2, 1).data * y.data))
        rhs = float(np.sum(x.data * convops.temporal_conv(y, w, zb3, 2, 1).data))
        assert abs(lhs - rhs) / max(abs(lhs), abs(rhs)) < 1e-12


class TestPerLocationLinear:
    def test_preserves_spatial_extents(self):
        rng = np.random.default_rng(0)
        out = convops.per_location_linear(_t(rng, (2, 64, 10, 10)), _t(rng, (16, 64)),
                                          _t(rng, (16,)))
        assert out.shape == (2, 16, 10, 10)

    def test_identity_map(self):
        rng = np.random.default_rng(1)
        x = _t(rng, (1, 3, 4, 4))
        out = convops.per_location_linear(x, Tensor(np.eye(3)), Tensor(np.zeros(3)))
        assert np.allclose(out.data, x.data, atol=1e-6)

    def test_random_grid_against_per_cell_oracle(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((1, 3, 2, 2))
        w = rng.standard_normal((4, 3))
        b = rng.standard_normal(4)
        out = convops.per_location_linear(Tensor(x, np.float64), Tensor(w, np.float64),
                                          Tensor(b, np.float64))
        assert np.allclose(out.data, naive_per_location_linear(x, w, b), atol=1e-12)
