import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dataset
from interplab.activations import parse_activation, polynomial
from interplab.core import Dataset
from interplab.errors import InfeasibleEstimate, InputError, PreconditionError
from interplab.random_features import (
    chernoff_base,
    chernoff_failure_bound,
    composed_power,
    deep_poly_pipeline,
    estimate_sigma_tilde,
    fit_output_weights,
    log_chernoff_failure_bound,
    numerical_rank,
    recommend_width,
    sample_features,
)

TANH = parse_activation("tanh")
IDENTITY = polynomial([0, 1])


def uniform_data(seed, d, p):
    rng = np.random.default_rng(seed)
    return Dataset(rng.uniform(-1, 1, (d, p)), rng.uniform(-1, 1, d)).with_bias()


# features -------------------------------------------------------------------


def test_features_need_bias():
    with pytest.raises(PreconditionError):
        sample_features(random_dataset(0, 3, 2), TANH, 5)


def test_constant_activation_rank_one():
    fm = sample_features(uniform_data(0, 4, 2), polynomial([2.0]), 10, seed=1)
    assert np.all(fm.phi == 2.0)
    assert numerical_rank(fm.phi) == 1


def test_one_by_one():
    fm = sample_features(Dataset([[0.5]], [1.0]).with_bias(), TANH, 1, seed=0)
    assert fm.phi.shape == (1, 1)
    assert (numerical_rank(fm.phi) == 1) == (fm.phi[0, 0] != 0)


def test_features_deterministic_and_prefix():
    data = uniform_data(1, 5, 3)
    a = sample_features(data, TANH, 40, seed=3)
    b = sample_features(data, TANH, 40, seed=3)
    assert np.array_equal(a.phi, b.phi)
    small = sample_features(data, TANH, 7, seed=3)
    assert np.array_equal(small.W, a.W[:7])
    assert not np.array_equal(sample_features(data, TANH, 40, seed=4).W, a.W)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31))
def test_rank_monotone_in_width(d, seed):
    data = uniform_data(seed, d, 2)
    ranks = [numerical_rank(sample_features(data, TANH, h, seed).phi) for h in (1, d // 2 + 1, d, 2 * d, 4 * d)]
    assert ranks == sorted(ranks)


# second-moment estimator --------------------------------------------------


def test_sigma_tilde_gaussian_second_moment():
    est = estimate_sigma_tilde(Dataset([[1.0, 0.0, 0.0]], [0.0]), IDENTITY, 100_000, seed=2)
    assert abs(est.lambda_min - 1.0) <= 3 * est.stderr


def test_sigma_tilde_duplicate_rows_singular():
    data = Dataset([[0.3, -0.2], [0.3, -0.2]], [0.0, 1.0], allow_duplicates=True).with_bias()
    est = estimate_sigma_tilde(data, TANH, 20_000, seed=0)
    assert abs(est.lambda_min) <= 3 * est.stderr


def test_sigma_tilde_distinct_positive_and_matches_independent_sampler():
    data = uniform_data(5, 3, 2)
    est = estimate_sigma_tilde(data, TANH, 100_000, seed=0)
    assert est.lambda_min > 3 * est.stderr
    # independent plain-numpy Monte-Carlo with an unrelated generator
    rng = np.random.default_rng(987654321)
    F = np.tanh(data.inputs @ rng.standard_normal((data.p, 100_000)))
    oracle = np.linalg.eigvalsh(F @ F.T / 100_000)[0]
    assert abs(est.lambda_min - oracle) <= 4 * math.sqrt(2) * est.stderr
    assert est.matrix.shape == (3, 3) and np.allclose(est.matrix, est.matrix.T)


def test_sigma_tilde_consistency():
    data = uniform_data(6, 4, 2)
    a = estimate_sigma_tilde(data, TANH, 20_000, seed=1)
    b = estimate_sigma_tilde(data, TANH, 80_000, seed=2)
    assert abs(a.lambda_min - b.lambda_min) <= 3 * math.hypot(a.stderr, b.stderr)


def test_truncated_not_above_untruncated():
    data = uniform_data(7, 4, 2)
    full = estimate_sigma_tilde(data, TANH, 20_000, seed=1)
    for T in (1.0, 1.5, 2.5):
        trunc = estimate_sigma_tilde(data, TANH, 20_000, seed=1, truncation=T)
        assert trunc.lambda_min <= full.lambda_min + 3 * full.stderr
        assert 0.0 <= trunc.kept_fraction <= 1.0


def test_sigma_tilde_min_samples():
    with pytest.raises(InputError):
        estimate_sigma_tilde(uniform_data(0, 2, 1), TANH, 999)


# Chernoff bound ----------------------------------------------------------------


def test_chernoff_base_values():
    assert chernoff_base(0.0) == 1.0
    assert chernoff_failure_bound(7, 100, 0.3, 2.0, 0.0) == pytest.approx(7.0)
    independent = math.e**-0.5 / 0.5**0.5
    assert chernoff_base(0.5) == pytest.approx(independent, abs=1e-15)
    assert abs(chernoff_base(0.5) - 0.8578) <= 1e-4


@pytest.mark.parametrize("delta", [-0.1, 1.0, 2.0])
def test_chernoff_rejects_delta(delta):
    with pytest.raises(InputError):
        chernoff_failure_bound(3, 10, 0.1, 1.0, delta)


@given(
    st.integers(1, 1000),
    st.integers(1, 10**7),
    st.floats(1e-6, 10),
    st.floats(0.1, 100),
    st.floats(0.01, 0.99),
)
def test_chernoff_squaring_law(d, h, lam, T, delta):
    one = log_chernoff_failure_bound(d, h, lam, T, delta) - math.log(d)
    two = log_chernoff_failure_bound(d, 2 * h, lam, T, delta) - math.log(d)
    assert abs(two - 2 * one) <= 1e-12 * max(1.0, abs(two))


def test_chernoff_no_underflow():
    assert log_chernoff_failure_bound(10, 10**12, 1.0, 1.0) < -1e10


# width certificate -----------------------------------------------------------


def test_recommend_width_closed_form():
    data = uniform_data(8, 5, 5)
    cert = recommend_width(data, TANH, 1e-6, mc_samples=20_000, seed=0)
    want = math.ceil(
        (math.log(5) + 6 * math.log(10)) * cert.T_d**2 / (cert.lambda_trunc * math.log(1 / chernoff_base(0.5)))
    )
    assert abs(cert.recommended_h - want) <= 1
    assert cert.failure_bound <= 1e-6
    assert chernoff_failure_bound(5, cert.recommended_h - 1, cert.lambda_trunc, cert.T_d) > 1e-6
    assert cert.predicted_success >= 1 - 1e-6


def test_recommend_width_monotone_in_target():
    data = uniform_data(9, 4, 3)
    hs = [recommend_width(data, TANH, t, mc_samples=10_000).recommended_h for t in (1e-9, 1e-6, 1e-3)]
    assert hs == sorted(hs, reverse=True)


def test_recommend_width_single_point():
    cert = recommend_width(Dataset([[0.4]], [1.0]).with_bias(), TANH, 1e-6, mc_samples=10_000)
    assert cert.recommended_h >= 1


def test_recommend_width_infeasible_for_duplicates():
    data = Dataset([[0.1], [0.1], [0.5]], [0.0, 1.0, 0.0], allow_duplicates=True).with_bias()
    with pytest.raises(InfeasibleEstimate):
        recommend_width(data, TANH, mc_samples=10_000)


def test_polynomial_truncation_rule():
    cert = recommend_width(uniform_data(1, 3, 1), polynomial([0.5, 0, 1]), mc_samples=10_000)
    assert cert.truncation_rule == "polynomial"
    assert cert.T_d == pytest.approx(0.5 * math.sqrt(3) + 1)


# output weights --------------------------------------------------------------


def test_fit_identity():
    y = np.array([1.0, -2.0, 3.0])
    fit = fit_output_weights(np.eye(3), y)
    assert np.array_equal(fit.v, y) and fit.full_rank and fit.residual_norm == 0


def test_fit_zero_targets():
    fit = fit_output_weights(np.random.default_rng(0).standard_normal((4, 9)), np.zeros(4))
    assert np.all(fit.v == 0) and fit.residual_norm == 0


def test_fit_random_full_rank_matches_closed_form():
    rng = np.random.default_rng(1)
    phi, y = rng.standard_normal((8, 32)), rng.standard_normal(8)
    fit = fit_output_weights(phi, y)
    assert fit.residual_norm <= 1e-8 * np.linalg.norm(y)
    closed = phi.T @ np.linalg.solve(phi @ phi.T, y)
    assert np.allclose(fit.v, closed, rtol=1e-10, atol=1e-12)


def test_fit_rank_deficient():
    rng = np.random.default_rng(2)
    phi = np.vstack([rng.standard_normal((2, 6))] * 2)
    fit = fit_output_weights(phi, rng.standard_normal(4))
    assert fit.rank == 2 and not fit.full_rank and fit.residual_norm > 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 8), st.integers(0, 2**31))
def test_fit_minimum_norm(d, extra, seed):
    rng = np.random.default_rng(seed)
    phi, y = rng.standard_normal((d, d + extra)), rng.standard_normal(d)
    fit = fit_output_weights(phi, y)
    _, _, Vt = np.linalg.svd(phi)
    kernel = Vt[d:].T
    for _ in range(5):
        other = fit.v + kernel @ rng.standard_normal(kernel.shape[1])
        assert np.linalg.norm(phi @ other - y) == pytest.approx(fit.residual_norm, abs=1e-9)
        assert np.linalg.norm(other) >= np.linalg.norm(fit.v) - 1e-10


# deep polynomial pipeline ---------------------------------------------------------


def test_composed_power_square_d6():
    g = composed_power(polynomial([0, 0, 1]), 4)
    assert g.degree == 8 and np.allclose(g.poly_coeffs, np.eye(9)[8])


def test_pipeline_minimal_depth():
    # degree 5 already exceeds d - 2 = 3, so no extra composition is needed
    data = uniform_data(2, 5, 2)
    res = deep_poly_pipeline(data, polynomial([0, 0, 0, 0, 0, 1]), 50, seed=0)
    assert res.depth == 2 and res.activation.degree == 5
    assert res.fit.full_rank


@pytest.mark.slow
def test_pipeline_square_d5_repeated():
    data = uniform_data(3, 5, 2)
    sq = polynomial([0, 0, 1])
    g = composed_power(sq, 3)
    h = recommend_width(data, g, 1e-6, mc_samples=20_000, seed=0).recommended_h
    ok = 0
    for s in range(100):
        res = deep_poly_pipeline(data, sq, h, seed=s)
        ok += res.fit.residual_norm <= 1e-6 * np.linalg.norm(data.y)
    assert ok >= 95
