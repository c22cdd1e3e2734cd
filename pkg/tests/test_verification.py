import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_panel, random_portfolio, random_tangent
from mvsk.bench import stress_profiles
from mvsk.exceptions import DimensionError, DomainError
from mvsk.instance import center_panel, crra_coefficients
from mvsk.oracle import MVSKObjective, hessian_diag_weights, hvp
from mvsk.simplex import TangentBasis
from mvsk.verification import (
    RegularityReport,
    build_explicit_tensors,
    convexity_certificate,
    curvature_range,
    fd_hessian,
    operator_norm,
    projected_gradient_baseline,
    reduced_hessian_spectrum,
    regularity_constants,
    tensor_value_grad,
)


def test_single_asset_tensors(rng):
    r = rng.normal(size=30)
    t = build_explicit_tensors(center_panel(r[:, None]))
    a = r - r.mean()
    assert t.Sigma[0, 0] == pytest.approx(np.mean(a ** 2))
    assert t.K[0, 0, 0, 0] == pytest.approx(np.mean(a ** 4))


def test_tensors_vanish_for_repeated_row():
    t = build_explicit_tensors(center_panel(np.tile([0.1, 0.2, 0.3], (8, 1))))
    assert not t.Sigma.any() and not t.S.any() and not t.K.any()


def test_tensor_symmetry(rng):
    t = build_explicit_tensors(random_panel(rng, 5, 30))
    assert np.abs(t.Sigma - t.Sigma.T).max() <= 1e-15
    assert np.linalg.eigvalsh(t.Sigma).min() >= -1e-10
    for _ in range(20):
        idx = tuple(rng.integers(0, 5, size=4))
        perm = tuple(rng.permutation(4))
        assert t.K[idx] == pytest.approx(t.K[tuple(idx[p] for p in perm)], rel=1e-13)
        assert t.S[idx[:3]] == pytest.approx(t.S[tuple(idx[p] for p in perm if p < 3)],
                                             rel=1e-13)


def test_tensor_cap():
    with pytest.raises(DimensionError):
        build_explicit_tensors(center_panel(np.zeros((3, 33)) + np.arange(3)[:, None]))


def test_tensor_special_cases(rng):
    panel = random_panel(rng, 4, 20)
    t = build_explicit_tensors(panel)
    x = random_portfolio(rng, 4)
    f, g = tensor_value_grad(t, panel.mu, (1, 0, 0, 0), x)
    assert f == pytest.approx(-panel.mu @ x) and np.allclose(g, -panel.mu)
    f, _ = tensor_value_grad(t, panel.mu, (0, 1, 0, 0), np.eye(4)[2])
    assert f == pytest.approx(t.Sigma[2, 2])


@pytest.mark.parametrize("gamma", [0.5, 1, 2, 4, 6, 8, 10])
def test_crra_certified(gamma):
    ok, margin = convexity_certificate(crra_coefficients(gamma))
    _, c2, c3, c4 = crra_coefficients(gamma)
    disc = 8 * c2 * c4 - 3 * c3 ** 2
    expected = gamma ** 2 * (gamma + 1) * (gamma + 3) / 12
    assert ok and margin > 0
    assert abs(disc - expected) <= 1e-12 * expected


def test_crra6_discriminant():
    _, c2, c3, c4 = crra_coefficients(6)
    assert 8 * c2 * c4 - 3 * c3 ** 2 == pytest.approx(189, rel=1e-15)


def test_stress_profile_classification():
    verdicts = [convexity_certificate(p)[0] for p in stress_profiles()]
    assert verdicts == [False, True, True]
    assert convexity_certificate((1, 1, 1, 0)) == (False, None)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 20), st.floats(0, 20), st.floats(0.01, 20))
def test_margin_is_a_lower_bound(c2, c3, c4):
    ok, margin = convexity_certificate((1, c2, c3, c4))
    s = np.linspace(-50, 50, 100001)
    psi2 = 2 * c2 - 6 * c3 * s + 12 * c4 * s * s
    assert psi2.min() >= margin - 1e-10 * (1 + abs(margin))
    assert ok == (margin > 0)


def test_operator_norm(rng):
    A = rng.normal(size=(40, 12))
    assert operator_norm(A) == pytest.approx(np.linalg.norm(A, 2), rel=1e-7)
    assert operator_norm(np.zeros((3, 3))) == 0.0


def test_curvature_range_closed_form():
    lo, hi = curvature_range((0, 1, 0, 0), 3.0)
    assert lo == hi == 2.0
    c = crra_coefficients(6)
    B = 0.7
    s = np.linspace(-B, B, 200001)
    psi2 = 2 * c.c2 - 6 * c.c3 * s + 12 * c.c4 * s * s
    lo, hi = curvature_range(c, B)
    assert lo == pytest.approx(psi2.min(), rel=1e-8) and hi == pytest.approx(psi2.max(), rel=1e-12)


def test_regularity_pure_variance(rng):
    panel = random_panel(rng, 5, 40)
    rep = regularity_constants(panel, (0, 1, 0, 0), 1e-8)
    nrm = np.linalg.norm(panel.A, 2)
    assert rep.gamma_lo == rep.gamma_hi == 2.0
    assert rep.L_tau == pytest.approx(2 * nrm ** 2 / panel.T, rel=1e-7)
    assert rep.M_tau == 0.0
    assert isinstance(RegularityReport(**rep.to_dict()), RegularityReport)
    assert '"pl_available": true' in rep.to_json()


def test_regularity_bounds_dense_spectra(rng):
    panel = random_panel(rng, 6, 60)
    coeffs = crra_coefficients(6)
    rep = regularity_constants(panel, coeffs, 1e-8)
    obj = MVSKObjective.from_panel(panel, coeffs)
    assert rep.pl_available and rep.mu_tau <= rep.L_tau_phi
    for _ in range(20):
        x = random_portfolio(rng, 6, 1e-8)
        H = panel.A.T @ (hessian_diag_weights(obj.cache(x))[:, None] * panel.A) / panel.T
        assert np.linalg.eigvalsh(H).max() <= rep.L_tau + 1e-8
        eig, _, _ = reduced_hessian_spectrum(panel, coeffs, x)
        assert rep.mu_tau <= eig.min() + 1e-12


def test_regularity_errors_and_flags(rng):
    panel = random_panel(rng, 6, 4)
    with pytest.raises(DomainError):
        regularity_constants(panel, (1, 1, 1, 1), 0.0)
    with pytest.raises(DomainError):
        regularity_constants(panel, (1, 1, 1, 1), 0.5)
    rep = regularity_constants(panel, crra_coefficients(2), 1e-8)
    assert not rep.pl_available and "n > T" in rep.pl_note


def test_spectrum_pure_variance(rng):
    panel = random_panel(rng, 7, 30)
    eig, kappa, neg = reduced_hessian_spectrum(panel, (0, 1, 0, 0), np.full(7, 1 / 7))
    AU = panel.A @ TangentBasis(7).matrix
    s = np.linalg.svd(AU, compute_uv=False)
    np.testing.assert_allclose(np.sort(eig), np.sort(2 / 30 * s ** 2), rtol=1e-10)
    assert neg == 0 and kappa == pytest.approx(s.max() ** 2 / s.min() ** 2, rel=1e-8)


def test_spectrum_zero_panel():
    panel = center_panel(np.ones((5, 4)))
    eig, kappa, neg = reduced_hessian_spectrum(panel, (1, 1, 1, 1), np.full(4, 0.25))
    assert not eig.any() and np.isnan(kappa) and neg == 0


def test_hessian_factorisation(rng):
    for _ in range(10):
        n = int(rng.integers(2, 9))
        panel = random_panel(rng, n, 30)
        obj = MVSKObjective.from_panel(panel, crra_coefficients(6))
        x = random_portfolio(rng, n)
        H = panel.A.T @ (hessian_diag_weights(obj.cache(x))[:, None] * panel.A) / panel.T
        Hfd = fd_hessian(obj, x)
        assert np.abs(Hfd - H).max() <= 1e-6 * max(1.0, np.abs(H).max())


def test_tangential_sandwich(rng):
    panel = random_panel(rng, 6, 60)
    coeffs = crra_coefficients(4)
    rep = regularity_constants(panel, coeffs, 1e-8)
    obj = MVSKObjective.from_panel(panel, coeffs)
    c = obj.cache(random_portfolio(rng, 6))
    for _ in range(100):
        d = random_tangent(rng, 6)
        q = d @ hvp(c, d)
        Ad2 = np.sum((panel.A @ d) ** 2)
        assert rep.gamma_lo / panel.T * Ad2 - 1e-12 <= q <= rep.gamma_hi / panel.T * Ad2 + 1e-12


def test_rank_of_centered_panel(rng):
    panel = random_panel(rng, 10, 6)
    assert np.linalg.matrix_rank(panel.A) <= panel.T - 1


def test_baseline_linear_objective_reaches_vertex():
    mu = np.array([0.1, 0.4, 0.2])
    panel = center_panel(np.tile(mu, (4, 1)))
    r = projected_gradient_baseline(panel, (1, 0, 0, 0))
    assert r.x_star.argmax() == 1 and r.x_star[1] == pytest.approx(1 - 2e-8)


def test_baseline_two_asset_closed_form(rng):
    panel = random_panel(rng, 2, 80)
    S = panel.A.T @ panel.A / panel.T
    w = (S[1, 1] - S[0, 1]) / (S[0, 0] + S[1, 1] - 2 * S[0, 1])
    r = projected_gradient_baseline(panel, (0, 1, 0, 0))
    assert r.x_star[0] == pytest.approx(np.clip(w, 1e-8, 1 - 1e-8), abs=1e-7)
    f = np.array(r.history)
    assert np.all(np.diff(f) <= 1e-15)
