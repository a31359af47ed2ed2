import numpy as np

from saliency_hash.gradcheck import EXTENDED, check_params, finite_diff_check, relative_error
from saliency_hash.tensor import Tensor, make_rng

from conftest import f64


def test_linear_function_is_exact():
    c = f64([3.0, -1.0, 2.0])
    assert finite_diff_check(lambda x: (x * c).sum(), f64([0.3, 0.1, -0.4])) < 1e-10


def test_sigmoid_sum_at_random_point():
    x = f64(make_rng(0).standard_normal(10))
    assert finite_diff_check(lambda t: t.sigmoid().sum(), x) < 1e-6


def test_sigmoid_derivative_matches_hand_value():
    x = f64([0.0], grad=True)
    x.sigmoid().sum().backward()
    h = 1e-5
    numeric = (1 / (1 + np.exp(-h)) - 1 / (1 + np.exp(h))) / (2 * h)
    assert abs(x.grad[0] - 0.25) < 1e-15 and abs(numeric - 0.25) < 1e-10


def test_relu_kink_coordinate_is_excluded():
    x = f64([0.0, 1.0, -2.0], grad=True)
    r = check_params(lambda: x.relu().sum(), {"x": x})
    assert r.skipped == [("x", 0)]
    assert r.checked == 2 and r.max_rel_error < 1e-10


def test_wrong_gradient_is_detected():
    x = f64([1.0, 2.0], grad=True)

    def bad_square(t):
        return Tensor.from_op(t.data ** 2, (t,), lambda g: (g * t.data,))  # missing factor 2

    assert check_params(lambda: bad_square(x).sum(), {"x": x}).max_rel_error > 0.4


def test_relative_error_floor():
    assert relative_error(np.float64(0.0), np.float64(1e-9)) == 1e-9 / 1e-8
    assert relative_error(np.float64(2.0), np.float64(1.0)) == 0.5


def test_extended_oracle_restores_parameters():
    x = f64([0.5, -0.25], grad=True)
    before = x.data.copy()
    check_params(lambda: (x * x).sum(), {"x": x}, oracle_dtype=EXTENDED)
    assert x.data.dtype == np.float64 and np.array_equal(x.data, before)


def test_coordinate_subsampling():
    x = f64(make_rng(1).standard_normal(50), grad=True)
    r = check_params(lambda: (x * x).sum(), {"x": x}, max_coords=7)
    assert r.checked == 7
