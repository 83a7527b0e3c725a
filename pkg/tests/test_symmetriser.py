import math
import itertools

import numpy as np
import pytest
from numpy.polynomial import Polynomial

from src.symmetriser import (
    SymmetriserField, bezout_matrix, build_symmetriser, compute_symmetriser, delta_tilde,
    differentiate_symmetriser, generic_det, hamilton_cayley,
)


def test_m2_closed_form(roots_frame):
    rng = np.random.default_rng(7)
    for _ in range(20):
        l1, l2 = rng.uniform(-3.0, 3.0, size=2)
        sym = build_symmetriser(roots_frame([l1, l2]))
        expected = np.array([[l1 ** 2 + l2 ** 2, -l1 - l2], [-l1 - l2, 2.0]])
        np.testing.assert_allclose(sym.Q, expected, rtol=0.0, atol=1e-12)
        assert sym.minors[0] == pytest.approx(2.0)
        assert sym.delta == pytest.approx((l1 - l2) ** 2, abs=1e-11)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_symmetriser_identities_on_random_roots(roots_frame, m):
    rng = np.random.default_rng(100 + m)
    for _ in range(34):
        roots = rng.uniform(-1.0, 1.0, size=m)
        frame = roots_frame(roots)
        sym = build_symmetriser(frame)
        A = frame.A
        assert np.max(np.abs(sym.Q @ A - A.T @ sym.Q)) <= 1e-10
        np.testing.assert_allclose(sym.Q, sym.Q.T, atol=1e-14)
        product = np.prod([(roots[j] - roots[k]) ** 2 for k, j in itertools.combinations(range(m), 2)])
        assert abs(sym.delta - product) <= 1e-8 * max(product, 1e-3)
        assert sym.minors[0] == pytest.approx(m)


def test_symmetriser_is_positive_semidefinite_for_real_roots(roots_frame):
    sym = build_symmetriser(roots_frame([0.5, 0.5, -1.0]))
    eigenvalues = np.linalg.eigvalsh(sym.Q)
    assert eigenvalues[0] >= -1e-12
    assert abs(sym.delta) <= 1e-12


def test_complex_roots_give_negative_discriminant(roots_frame):
    sym = build_symmetriser(roots_frame([1j, -1j]))
    assert sym.delta < 0.0


def test_bezout_matrix_accepts_polynomial_entries():
    t = Polynomial([0.0, 1.0])
    # p(λ) = λ² - t²
    Q = bezout_matrix([-(t * t), Polynomial([0.0]), Polynomial([1.0])])
    assert Q[0][0] == Polynomial([0.0, 0.0, 2.0])
    assert Q[1][1] == Polynomial([2.0])


def test_generic_det_matches_numpy():
    rng = np.random.default_rng(3)
    for n in range(1, 5):
        M = rng.standard_normal((n, n))
        assert generic_det(M.tolist()) == pytest.approx(np.linalg.det(M), rel=1e-12, abs=1e-12)


def test_psi_vanishes_for_constant_coefficients_and_first_order(load_fixture):
    wave = SymmetriserField(load_fixture("wave"), [3.0])
    ts = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(wave.psi(ts), 0.0, atol=1e-14)
    np.testing.assert_allclose(wave.dQ(ts), 0.0, atol=1e-14)
    transport = SymmetriserField(load_fixture("transport"), [3.0])
    np.testing.assert_allclose(transport.psi(ts), 0.0, atol=0.0)
    np.testing.assert_allclose(transport.Q(ts), 1.0)


@pytest.mark.parametrize("name, xi, ts", [
    ("roots_t_2t", [2.0], [0.2, 0.5, 0.9]),
    ("roots_t_t3", [1.5], [0.1, 0.3, 0.45]),
    ("m3_triple_root", [2.0], [-0.7, 0.3, 0.8]),
    ("shifted_zeros", [4.0], [0.1, 0.5, 0.9]),
])
def test_check_function_identities(load_fixture, name, xi, ts):
    spec = load_fixture(name)
    field_ = SymmetriserField(spec, xi)
    for t in ts:
        sym = field_.at(t)
        if sym.delta <= 1e-6:
            continue
        d = sym.hc
        scale = max(1.0, abs(sym.psi))
        # d₂ 由插值求得，ψ 由迹公式求得
        assert abs(sym.psi - float(field_.psi(t))) <= 1e-8 * scale
        mu = np.linalg.eigvals(np.linalg.solve(sym.Q, sym.dQ))
        newton = (d[1] / d[0]) ** 2 - 2.0 * d[2] / d[0]
        assert abs(np.sum(mu ** 2).real - newton) <= 1e-8 * max(1.0, abs(newton))


def test_hamilton_cayley_for_m2_is_det_of_derivative(load_fixture):
    spec = load_fixture("roots_t_2t")
    sym = compute_symmetriser(spec, 0.5, [1.0])
    d, psi = hamilton_cayley(sym.Q, sym.dQ)
    assert d[0] == pytest.approx(np.linalg.det(sym.Q), rel=1e-10)
    assert psi == pytest.approx(np.linalg.det(sym.dQ), rel=1e-10)
    # 根为 t·r 与 2t·r，∂ₜQ 的行列式为 -9r²，ξ = 1 时 r² = 1/2
    assert psi == pytest.approx(-4.5, rel=1e-10)


def test_derivative_matches_finite_differences(load_fixture):
    spec = load_fixture("roots_t_t3")
    xi = [2.0]
    field_ = SymmetriserField(spec, xi)
    t, h = 0.3, 1e-5
    fd = (field_.Q(t + h) - field_.Q(t - h)) / (2.0 * h)
    np.testing.assert_allclose(differentiate_symmetriser(spec, t, xi), fd, atol=1e-6)


def test_delta_tilde_is_infinite_at_zero(load_fixture):
    spec = load_fixture("t2")
    assert math.isinf(delta_tilde(spec, 0.0, [1.0]))
    field_ = SymmetriserField(spec, [1.0])
    t = 0.4
    delta, d_delta = float(field_.delta(t)), float(field_.d_delta(t))
    assert delta_tilde(spec, t, [1.0]) == pytest.approx(delta + d_delta ** 2 / delta, rel=1e-12)


def test_minor_polynomials_have_expected_vanishing_order(load_fixture):
    # Δ ∝ t² 与 Δ ∝ t⁴ 的夹具
    for name, order in (("t2", 2), ("t4", 4)):
        field_ = SymmetriserField(load_fixture(name), [1.0])
        coef = field_.delta_poly.coef
        assert np.all(np.abs(coef[:order]) == 0.0)
        assert abs(coef[order]) > 0.0
        assert not field_.is_degenerate


@pytest.mark.parametrize("name, xi", [
    ("roots_t_2t", [0.5]),
    ("m3_triple_root", [-2.0]),
    ("shifted_zeros", [1.0]),
])
def test_discriminant_scales_with_frequency(load_fixture, name, xi):
    spec = load_fixture(name)
    m = spec.m
    x = abs(xi[0])
    # |ξ|/⟨ξ⟩ 之比的 m(m-1) 次幂
    factor = (100.0 * math.sqrt(1.0 + x * x) / math.sqrt(1.0 + 1e4 * x * x)) ** (m * (m - 1))
    small = SymmetriserField(spec, xi)
    large = SymmetriserField(spec, [100.0 * xi[0]])
    ts = np.linspace(spec.a, spec.b, 9)
    expected = factor * small.delta(ts)
    np.testing.assert_allclose(large.delta(ts), expected, rtol=1e-10, atol=1e-14 * np.max(np.abs(expected)))


def test_delta_tilde_sandwich_on_log_grid(load_fixture):
    # Δ = 4t²r²：Δ̃ = 4t²r² + 16r²，t²Δ̃/Δ = t² + 4
    field_ = SymmetriserField(load_fixture("t2"), [1.0])
    ts = np.logspace(-4.0, 0.0, 81)
    quotient = np.array([t ** 2 * field_.delta_tilde(t) / float(field_.delta(t)) for t in ts])
    assert np.min(quotient) >= 4.0 - 1e-9
    assert np.max(quotient) <= 5.0 + 1e-9
    np.testing.assert_allclose(quotient, ts ** 2 + 4.0, rtol=1e-10)
