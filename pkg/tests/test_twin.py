import numpy as np
import pytest

from cyclicscm import apply_shift_scale, linear_model
from cyclicscm.errors import DegenerateNoise
from cyclicscm.interventions import Intervention
from cyclicscm.solver import abduct_noise_linear, linear_moments, linear_solve, picard_solve
from cyclicscm.twin import (build_twin, certify_twin, counterfactual_aap,
                            counterfactual_map_linear, counterfactual_sample,
                            counterfactual_twin, intervene_twin, solve_twin,
                            verify_twin_aap_equivalence)

from _models import random_intervention, random_linear, random_tanh, toy, toy_expr, toy_policy


def test_twin_names_and_shared_noise():
    twin = build_twin(toy())
    assert twin.names == ("C", "I", "C'", "I'")
    flat = twin.flatten()
    assert flat.n == 4 and flat.n_noise == 2
    _, _, D = flat.linear_form()
    np.testing.assert_array_equal(D, [[1, 0], [0, 1], [1, 0], [0, 1]])


def test_unintervened_twin_copies_agree():
    rng = np.random.default_rng(0)
    for m in (toy(), toy_expr(), random_tanh(rng, 3)):
        states = solve_twin(build_twin(m), rng.standard_normal((50, m.n)))
        np.testing.assert_allclose(states[:, :m.n], states[:, m.n:], atol=1e-12)


def test_intervened_twin_structure():
    twin = counterfactual_twin(toy(), toy_policy())
    A, b, D = twin.flatten().linear_form()
    np.testing.assert_allclose(A[:2, :2], [[0, 0.5], [0.4, 0]])
    np.testing.assert_allclose(A[2:, 2:], [[0, 0.5], [0.32, 0]])
    assert not A[:2, 2:].any() and not A[2:, :2].any()
    np.testing.assert_allclose(b, [1, 0.5, 1, 1.4])
    np.testing.assert_allclose(D, [[1, 0], [0, 1], [1, 0], [0, 0.8]])


def test_twin_certificate_is_max_of_copies():
    twin = counterfactual_twin(toy(), toy_policy())
    cert = certify_twin(twin, 2)
    assert cert.kappa == pytest.approx(0.5, abs=1e-9)
    assert cert.frobenius_bound == pytest.approx(np.hypot(0.6403, 0.5936), abs=1e-3)


def test_toy_counterfactual_map():
    cf = counterfactual_map_linear(toy(), toy_policy())
    # C' = c + 25/42 - 5/42 i,  I' = 25/21 + 16/21 i
    np.testing.assert_allclose(cf.matrix, [[1, -5 / 42], [0, 16 / 21]], atol=1e-12)
    np.testing.assert_allclose(cf.offset, [25 / 42, 25 / 21], atol=1e-12)
    x = np.array([1.5625, 1.125])
    np.testing.assert_allclose(cf(x), linear_solve(apply_shift_scale(toy(), toy_policy()),
                                                   np.zeros(2)), atol=1e-12)


def test_map_matches_aap_pointwise():
    rng = np.random.default_rng(1)
    m = toy()
    cf = counterfactual_map_linear(m, toy_policy())
    x_obs = rng.uniform(-5, 5, (200, 2))
    np.testing.assert_allclose(cf(x_obs), counterfactual_aap(m, toy_policy(), x_obs), atol=1e-12)


def test_map_transports_moments():
    rng = np.random.default_rng(2)
    for _ in range(20):
        m = random_linear(rng, 4)
        iv = random_intervention(rng, 4, max_scale=1.0)
        cf = counterfactual_map_linear(m, iv)
        obs = linear_moments(m)
        want = linear_moments(apply_shift_scale(m, iv))
        np.testing.assert_allclose(cf(obs.mean), want.mean, atol=1e-10)
        np.testing.assert_allclose(cf.matrix @ obs.covariance @ cf.matrix.T, want.covariance,
                                   atol=1e-10)


def test_map_is_affine_in_each_row():
    rng = np.random.default_rng(3)
    m = random_linear(rng, 3)
    cf = counterfactual_map_linear(m, random_intervention(rng, 3))
    x, y = rng.standard_normal((2, 3))
    for lam in (-1.0, 0.3, 2.5):
        np.testing.assert_allclose(cf(lam * x + (1 - lam) * y),
                                   lam * cf(x) + (1 - lam) * cf(y), atol=1e-10)


def test_hard_do_counterfactual():
    m = toy()
    iv = Intervention(((1, 0.0, 2.0),))
    x_obs = np.array([[1.0, 1.0], [3.0, -1.0]])
    got = counterfactual_aap(m, iv, x_obs)
    e = abduct_noise_linear(m, x_obs)
    np.testing.assert_allclose(got[:, 1], 2.0)
    np.testing.assert_allclose(got[:, 0], 0.5 * 2.0 + 1.0 + e[:, 0], atol=1e-14)


def test_aap_nonlinear_uses_picard():
    rng = np.random.default_rng(4)
    m = random_tanh(rng, 3)
    iv = random_intervention(rng, 3)
    e = rng.standard_normal(3)
    twin = counterfactual_twin(m, iv)
    np.testing.assert_allclose(counterfactual_aap(m, iv, e=e), solve_twin(twin, e)[3:],
                               atol=1e-9)


def test_aap_needs_input():
    with pytest.raises(ValueError):
        counterfactual_aap(toy(), toy_policy())


def test_degenerate_noise():
    m = linear_model(["a", "b"], [[0, 0.5], [0, 0]], [0, 0], [1, 1], noise_coefficients=[1, 0])
    with pytest.raises(DegenerateNoise):
        counterfactual_map_linear(m, Intervention(((0, 0.5, 0.0),)))


def test_equivalence_toy():
    report = verify_twin_aap_equivalence(toy(), toy_policy(), n_obs=1000, seed=0)
    assert report.passed and report.max_discrepancy < 1e-12


def test_equivalence_random_including_hard_do():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(2, 6))
        m = random_linear(rng, n)
        iv = random_intervention(rng, n, max_scale=1.0, hard_prob=0.5)
        assert verify_twin_aap_equivalence(m, iv, n_obs=200, seed=1).passed


def test_both_copies_intervened():
    twin = intervene_twin(build_twin(toy()), Intervention(((0, 0.0, 1.0),)), toy_policy())
    s = solve_twin(twin, [0.0, 0.0])
    assert s[0] == 1.0
    np.testing.assert_allclose(s[2:], [2.0238, 2.0476], atol=1e-4)


def test_counterfactual_sample_seeded_and_consistent():
    twin = counterfactual_twin(toy(), toy_policy())
    a = counterfactual_sample(twin, 1000, seed=7)
    np.testing.assert_array_equal(a, counterfactual_sample(twin, 1000, seed=7))
    assert a.shape == (1000, 4)
    cf = counterfactual_map_linear(toy(), toy_policy())
    np.testing.assert_allclose(cf(a[:, :2]), a[:, 2:], atol=1e-9)
    assert counterfactual_sample(twin, 0).shape == (0, 4)


def test_factual_copy_unchanged_by_primed_policy():
    rng = np.random.default_rng(6)
    m = random_tanh(rng, 3)
    twin = counterfactual_twin(m, random_intervention(rng, 3))
    e = rng.standard_normal(3)
    np.testing.assert_allclose(solve_twin(twin, e)[:3], picard_solve(m, e).x_star, atol=1e-12)


def test_expression_twin_flattens_with_shared_noise():
    twin = counterfactual_twin(toy_expr(), toy_policy(toy_expr()))
    flat = twin.flatten()
    assert flat.n == 4 and flat.n_noise == 2
    e = np.array([0.3, -0.1])
    np.testing.assert_allclose(picard_solve(flat, e).x_star, solve_twin(twin, e), atol=1e-9)
    lin = counterfactual_twin(toy(), toy_policy())
    np.testing.assert_allclose(solve_twin(twin, e), solve_twin(lin, e), atol=1e-9)
