import warnings

import numpy as np
import pytest

from conftest import random_dataset
from interplab.activations import parse_activation, polynomial
from interplab.core import ComposedNet, Dataset, ShallowNet
from interplab.errors import InputError, PreconditionError, UnsupportedError
from interplab.hessian import (
    GenericityWarning,
    finite_difference_jacobian,
    loss_hessian,
    residual_jacobian,
    spectrum_at_minimum,
)
from interplab.interpolation import construct_deep_interpolant, construct_shallow_interpolant

TANH = parse_activation("tanh")


def random_net(seed, h, p):
    rng = np.random.default_rng(seed)
    return ShallowNet(rng.standard_normal((h, p)), rng.standard_normal(h), rng.standard_normal(h), 0.2, TANH)


def test_jacobian_output_bias_and_v_columns():
    net = random_net(0, 3, 2)
    data = random_dataset(1, 4, 2)
    J = residual_jacobian(net, data)
    assert J.shape == (4, net.n_params)
    assert np.all(J[:, -1] == -1.0)
    assert np.allclose(J[:, 9:12], np.tanh(data.inputs @ net.W.T - net.b))


def test_jacobian_against_finite_differences():
    net = random_net(2, 3, 2)  # n = 6 + 3 + 3 + 1 = 13
    data = random_dataset(3, 4, 2)
    assert net.n_params == 13
    assert np.max(np.abs(residual_jacobian(net, data) - finite_difference_jacobian(net, data))) <= 1e-6


def test_jacobian_rejects_relu():
    net = ShallowNet([[1.0]], [0.0], [1.0], 0.0, parse_activation("relu"))
    with pytest.raises(UnsupportedError):
        residual_jacobian(net, Dataset([[0.5]], [0.0]))


def test_gauss_newton_needs_minimum():
    net = random_net(4, 3, 2)
    data = random_dataset(5, 4, 2)
    with pytest.raises(PreconditionError):
        loss_hessian(net, data)
    with pytest.raises(InputError):
        loss_hessian(net, data, method="exact")


def test_finite_difference_hessian_is_symmetric_and_matches_away_from_minimum_shape():
    net = random_net(6, 2, 1)
    H = loss_hessian(net, random_dataset(7, 3, 1), method="finite-difference")
    assert H.shape == (net.n_params, net.n_params)
    assert np.array_equal(H, H.T)


def test_trivial_interpolation_v_zero():
    rng = np.random.default_rng(8)
    net = ShallowNet(rng.standard_normal((3, 2)), rng.standard_normal(3), np.zeros(3), 0.0, TANH)
    data = Dataset(rng.standard_normal((4, 2)), np.zeros(4))
    gn = loss_hessian(net, data)
    fd = loss_hessian(net, data, method="finite-difference")
    assert np.max(np.abs(fd - gn)) <= 1e-3 * (1 + np.max(np.abs(fd)))


def test_single_point_rank_one():
    data = Dataset([[0.7]], [0.4])
    net = construct_shallow_interpolant(data, TANH, h=1, seed=0)
    rep = spectrum_at_minimum(net, data)
    assert (rep.n, rep.positive_count, rep.zero_count, rep.negative_count) == (4, 1, 3, 0)


def test_spectrum_d5_p2():
    data = random_dataset(9, 5, 2)
    net = construct_shallow_interpolant(data, TANH, h=5, seed=0)
    rep = spectrum_at_minimum(net, data)
    assert rep.n == 21
    assert (rep.positive_count, rep.zero_count, rep.negative_count) == (5, 16, 0)
    assert rep.full_rank
    assert rep.gauss_newton_check <= 1e-3 * (1 + np.max(np.abs(rep.eigenvalues)))
    assert rep.zero_threshold == pytest.approx(1e-6 * max(np.max(np.abs(rep.eigenvalues)), 1))
    assert np.all(np.diff(rep.eigenvalues) >= 0)


def test_spectrum_flags_duplicate_point():
    base = random_dataset(10, 4, 2)
    X = np.vstack([base.inputs, base.inputs[:1]])
    y = np.append(base.y, base.y[0])
    data = Dataset(X, y, allow_duplicates=True)
    net = construct_shallow_interpolant(base, TANH, h=5, seed=0)
    with pytest.warns(GenericityWarning):
        rep = spectrum_at_minimum(net, data)
    assert rep.positive_count < data.d and not rep.full_rank


def test_spectrum_scaling_invariance():
    data = random_dataset(11, 4, 2)
    net = construct_shallow_interpolant(data, TANH, seed=0)
    scaled = ShallowNet(net.W, net.b, 10 * net.v, 10 * net.b_out, TANH)
    a = spectrum_at_minimum(net, data, check_fd=False)
    b = spectrum_at_minimum(scaled, Dataset(data.inputs, 10 * data.y), check_fd=False)
    assert (a.positive_count, a.zero_count) == (b.positive_count, b.zero_count)


def test_spectrum_requires_overparametrisation():
    data = random_dataset(12, 3, 1)
    net = construct_shallow_interpolant(data, TANH, seed=0)
    with pytest.raises(PreconditionError):
        spectrum_at_minimum(net, Dataset(np.linspace(0, 1, 11)[:, None], np.zeros(11)))


def test_spectrum_composed_net():
    data = random_dataset(13, 4, 2)
    net = construct_deep_interpolant(data, polynomial([0, 0, 1]), seed=0)
    assert isinstance(net, ComposedNet)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GenericityWarning)
        rep = spectrum_at_minimum(net, data)
    assert rep.negative_count == 0
    assert rep.positive_count + rep.zero_count == net.n_params
