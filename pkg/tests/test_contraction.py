import math

import numpy as np
import pytest

from cyclicscm import Intervention, apply_shift_scale, expr_model, linear_model
from cyclicscm.contraction import (INTERVAL_BOUND, LINEAR_OPERATOR_NORM, SAMPLED_ESTIMATE,
                                   ContractionCertificate, bound_expr_lipschitz,
                                   certify_linear, estimate_kappa_sampled,
                                   kappa_after_intervention, spectral_norm_power)
from cyclicscm.errors import NonLinearModel, Uncertifiable

from _models import random_linear, toy, toy_expr, toy_policy
from _oracles import sym2_eigen_max


def test_toy_spectral_norm_against_closed_form():
    A = np.array([[0.0, 0.5], [0.4, 0.0]])
    oracle = math.sqrt(sym2_eigen_max(A.T @ A))
    assert oracle == 0.5
    cert = certify_linear(toy(), 2)
    assert cert.kappa == pytest.approx(oracle, abs=1e-9)
    assert cert.method == LINEAR_OPERATOR_NORM and cert.is_certified


def test_toy_frobenius_bound():
    assert certify_linear(toy(), 2).frobenius_bound == pytest.approx(0.6403, abs=1e-4)


def test_intervened_toy_frobenius_bound():
    cert = certify_linear(apply_shift_scale(toy(), toy_policy()), 2)
    assert cert.frobenius_bound == pytest.approx(0.5936, abs=1e-4)


def test_row_and_column_sums():
    assert certify_linear(toy(), 1).kappa == 0.5     # max column sum
    assert certify_linear(toy(), "inf").kappa == 0.5  # max row sum
    m = linear_model(["a", "b"], [[0.1, -0.3], [0.2, 0.0]], [0, 0], [1, 1])
    assert certify_linear(m, 1).kappa == pytest.approx(0.3)
    assert certify_linear(m, math.inf).kappa == pytest.approx(0.4)


@pytest.mark.parametrize("p", [1, 2, math.inf])
def test_zero_matrix(p):
    m = linear_model(["a", "b", "c"], np.zeros((3, 3)), [1, 2, 3], [1, 1, 1])
    assert certify_linear(m, p).kappa == 0


def test_certify_linear_rejects_expressions():
    with pytest.raises(NonLinearModel):
        certify_linear(toy_expr(), 2)


def test_power_iteration_matches_svd():
    rng = np.random.default_rng(5)
    for n in range(1, 8):
        M = rng.standard_normal((n, n))
        sigma, converged = spectral_norm_power(M)
        assert converged
        assert sigma == pytest.approx(np.linalg.norm(M, 2), rel=1e-8)


def test_tanh_bound():
    m = expr_model(["x1", "x2"], ["0.9*tanh(x2) + e_x1", "e_x2"], [1, 1])
    cert = bound_expr_lipschitz(m, "inf")
    assert cert.kappa == pytest.approx(0.9)
    assert cert.is_certified and cert.method == INTERVAL_BOUND


@pytest.mark.parametrize("p", [1, 2, math.inf])
def test_expr_and_linear_toy_agree(p):
    assert bound_expr_lipschitz(toy_expr(), p).kappa == pytest.approx(
        certify_linear(toy(), p).kappa, abs=1e-12)


@pytest.mark.parametrize("formula", ["x1*x2 + e_x1", "x1 / 2", "e_x1 * x2", "sin(x1) * cos(x2)"])
def test_uncertifiable(formula):
    m = expr_model(["x1", "x2"], [formula, "e_x2"], [1, 1])
    with pytest.raises(Uncertifiable):
        bound_expr_lipschitz(m, 2)


def test_bounded_noise_factor_is_certifiable():
    m = expr_model(["x1", "x2"], ["0.5*tanh(e_x1)*x2 - sin(x1)*0.25", "cos(e_x2)"], [1, 1])
    cert = bound_expr_lipschitz(m, "inf")
    assert cert.kappa == pytest.approx(0.75)


def test_sampled_estimate_toy_row_sum():
    est = estimate_kappa_sampled(toy(), "inf", 10_000, seed=1)
    assert 0.5 - 0.01 <= est.kappa <= 0.5 + 1e-9
    assert est.method == SAMPLED_ESTIMATE and not est.is_certified
    assert not est.simple_guaranteed


def test_sampled_estimate_constant_model():
    m = linear_model(["a", "b"], np.zeros((2, 2)), [1, 2], [1, 1])
    assert estimate_kappa_sampled(m, 2, 100, seed=0).kappa == 0


def test_sampled_estimate_expanding_model():
    m = expr_model(["x1"], ["2*x1 + e_x1"], [1])
    assert estimate_kappa_sampled(m, 2, 10_000, seed=0).kappa >= 1.9


def test_sampled_estimate_is_deterministic():
    a = estimate_kappa_sampled(toy_expr(), 2, 500, seed=9)
    b = estimate_kappa_sampled(toy_expr(), 2, 500, seed=9)
    assert a == b


def test_sampled_never_exceeds_certificate():
    rng = np.random.default_rng(11)
    for _ in range(20):
        m = random_linear(rng, int(rng.integers(2, 6)))
        for p in (1, 2, math.inf):
            est = estimate_kappa_sampled(m, p, 2000, seed=int(rng.integers(1 << 30)))
            assert est.kappa <= certify_linear(m, p).kappa + 1e-9


def test_spectral_below_frobenius():
    rng = np.random.default_rng(12)
    for _ in range(50):
        cert = certify_linear(random_linear(rng, int(rng.integers(1, 7))), 2)
        assert cert.kappa <= cert.frobenius_bound + 1e-9


def test_scaling_coefficients_scales_kappa():
    rng = np.random.default_rng(13)
    for _ in range(20):
        m = random_linear(rng, 4)
        A, b, _ = m.linear_form()
        c = rng.uniform(0.05, 1.0)
        scaled = linear_model(m.endogenous_names, c * A, b, m.noise.variances)
        for p in (1, 2, math.inf):
            assert certify_linear(scaled, p).kappa == pytest.approx(
                c * certify_linear(m, p).kappa, rel=1e-9)


def _cert(kappa):
    return ContractionCertificate(2, kappa, LINEAR_OPERATOR_NORM, True)


def test_kappa_after_small_scale_is_identity():
    cert = _cert(0.6403)
    after = kappa_after_intervention(cert, Intervention(((1, 0.8, 1.0),)))
    assert after is cert and after.simple_guaranteed


@pytest.mark.parametrize("a, kappa_max, simple", [(1.5, 0.96045, True), (1.6, 1.02448, False)])
def test_kappa_after_large_scale(a, kappa_max, simple):
    after = kappa_after_intervention(_cert(0.6403), Intervention(((1, a, 0.0),)))
    assert after.kappa == pytest.approx(kappa_max, abs=1e-12)
    assert after.simple_guaranteed is simple
    assert after.scale_factor == a


def test_sampled_certificate_cannot_claim_certified():
    with pytest.raises(ValueError):
        ContractionCertificate(2, 0.1, SAMPLED_ESTIMATE, True)
