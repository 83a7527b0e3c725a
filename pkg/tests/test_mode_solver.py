import math

import numpy as np
import pytest

from src.errors import SpecValidationError
from src.mode_solver import (
    CONSTANT_MARGIN, classify_growth, energy_trace, estimate_energy_constants, growth_scan,
    integrate_mode, qb_commutator_bound, regularity_tag,
)
from src.operator_model import ModeGenerator, build_frame, japanese_bracket
from src.partition_builder import build_partition
from src.symmetriser import SymmetriserField, build_symmetriser


def test_transport_mode_is_a_pure_phase(load_fixture):
    spec = load_fixture("transport")
    xi = 8.0
    trace = integrate_mode(spec, [xi], [1.0])
    expected = np.exp(0.5j * xi * trace.t_nodes)
    np.testing.assert_allclose(trace.V[:, 0], expected, atol=1e-7)
    np.testing.assert_allclose(trace.E_kov, 1.0, atol=1e-7)
    assert trace.regularity == "C^1([a,b]; C^inf)"


def test_wave_mode_matches_closed_form(load_fixture):
    spec = load_fixture("wave")
    xi = 5.0
    bracket = math.sqrt(1.0 + xi ** 2)
    trace = integrate_mode(spec, [xi], [1.0, 0.0])
    t = trace.t_nodes
    np.testing.assert_allclose(trace.V[:, 0], np.cos(xi * t), atol=1e-7)
    np.testing.assert_allclose(trace.V[:, 1], 1j * xi * np.sin(xi * t) / bracket, atol=1e-7)
    assert len(t) >= 512
    assert trace.steps > 0


def test_zero_frequency_mode(load_fixture):
    trace = integrate_mode(load_fixture("wave"), [0.0], [1.0, 1.0])
    # ξ = 0 时 A 的末行为零：V₂ 不变，V₁ = 1 + i t
    np.testing.assert_allclose(trace.V[:, 1], 1.0, atol=1e-12)
    np.testing.assert_allclose(trace.V[:, 0], 1.0 + 1j * trace.t_nodes, atol=1e-10)


def test_backward_integration_recovers_initial_value(load_fixture):
    spec = load_fixture("t2_levi_ok")
    V0 = np.array([1.0, -0.5j])
    forward = integrate_mode(spec, [6.0], V0, n_out=2)
    backward = integrate_mode(spec, [6.0], forward.V[-1], t_span=(1.0, 0.0), n_out=2)
    assert backward.t_nodes[0] == 1.0
    assert backward.t_nodes[-1] == 0.0
    np.testing.assert_allclose(backward.V[-1], V0, atol=1e-7)


def test_piecewise_breakpoint_is_an_output_node(load_fixture):
    spec = load_fixture("piecewise_lower")
    trace = integrate_mode(spec, [4.0], [1.0, 1.0])
    assert 0.5 in trace.t_nodes
    assert trace.breakpoints == (0.5,)
    assert "W^{inf,2}" in trace.regularity
    assert regularity_tag(spec) == trace.regularity


def test_fixed_step_self_convergence(load_fixture):
    spec = load_fixture("t2_levi_ok")
    V0 = [1.0, 1.0]
    finals = [integrate_mode(spec, [8.0], V0, fixed_step=h).V[-1] for h in (0.01, 0.005, 0.0025)]
    e1 = np.linalg.norm(finals[0] - finals[1])
    e2 = np.linalg.norm(finals[1] - finals[2])
    assert math.log2(e1 / e2) >= 3.7


def test_fixed_step_grid_contains_breakpoints(load_fixture):
    trace = integrate_mode(load_fixture("piecewise_lower"), [2.0], [1.0, 0.0], fixed_step=0.03)
    assert 0.5 in trace.t_nodes
    assert trace.t_nodes[-1] == 1.0
    assert np.all(np.diff(trace.t_nodes) <= 0.03 + 1e-12)


def test_integrate_mode_validates_input(load_fixture):
    spec = load_fixture("wave")
    with pytest.raises(SpecValidationError, match="V0"):
        integrate_mode(spec, [1.0], [1.0, 0.0, 0.0])
    with pytest.raises(SpecValidationError, match="V0"):
        integrate_mode(spec, [1.0], [math.nan, 0.0])
    with pytest.raises(SpecValidationError):
        integrate_mode(spec, [1.0], [1.0, 0.0], t_span=(0.0, 3.0))


def test_trace_frame_and_summary(load_fixture):
    trace = integrate_mode(load_fixture("wave"), [2.0], [1.0, 0.0], n_out=16)
    frame = trace.to_frame()
    assert list(frame.columns) == ["t", "V1_re", "V1_im", "V2_re", "V2_im", "E_kov",
                                   "E_hyp", "energy", "envelope", "bound_slack"]
    assert len(frame) == 16
    summary = trace.summary()
    assert summary["nodes"] == 16
    assert summary["max_slack"] is None
    assert summary["sup_ratio"] >= 1.0


def test_energy_constants_for_constant_coefficients(load_fixture):
    spec = load_fixture("wave")
    partition = build_partition(spec, [1.0], 0.1)
    constants = estimate_energy_constants(spec, [3.0], partition)
    assert constants.c_A == pytest.approx(CONSTANT_MARGIN)
    assert constants.c_B == 0.0
    assert constants.c_hyp == pytest.approx(0.0, abs=1e-12)


def test_hyperbolic_energy_is_conserved_for_wave(load_fixture):
    spec = load_fixture("wave")
    xi = [6.0]
    partition = build_partition(spec, [1.0], 0.1)
    constants = estimate_energy_constants(spec, xi, partition)
    trace = energy_trace(spec, integrate_mode(spec, xi, [1.0, 1.0]), partition, constants)
    assert np.all(np.isfinite(trace.E_hyp))
    np.testing.assert_allclose(trace.bound_slack, 1.0, atol=1e-7)


@pytest.mark.parametrize("xi_mag", [16.0, 64.0, 256.0, pytest.param(1024.0, marks=pytest.mark.slow)])
def test_gronwall_bound_holds_under_levi_condition(load_fixture, xi_mag):
    spec = load_fixture("t2_levi_ok")
    xi = [xi_mag]
    partition = build_partition(spec, [1.0], math.exp(-1.0))
    constants = estimate_energy_constants(spec, xi, partition)
    edges = [t for iv in partition.kept for t in iv]
    trace = integrate_mode(spec, xi, [1.0, 1.0], extra_nodes=edges)
    trace = energy_trace(spec, trace, partition, constants)

    excluded = np.array([partition.is_excluded(t) for t in trace.t_nodes])
    assert excluded[0] and not excluded[-1]
    assert np.all(np.isnan(trace.E_hyp[excluded]))
    np.testing.assert_allclose(trace.energy[excluded], trace.E_kov[excluded])
    assert np.all(np.isfinite(trace.bound_slack))
    assert np.max(trace.bound_slack) <= 1.0 + 1e-6
    assert trace.summary()["max_slack"] <= 1.0 + 1e-6


def test_energy_trace_without_constants_only_adds_energies(load_fixture):
    spec = load_fixture("t2")
    partition = build_partition(spec, [1.0], 0.2)
    trace = energy_trace(spec, integrate_mode(spec, [3.0], [1.0, 0.0], n_out=33), partition)
    assert trace.envelope is None
    assert trace.bound_slack is None
    assert np.isnan(trace.E_hyp[16])
    assert trace.energy[16] == trace.E_kov[16]


def test_energy_trace_checks_direction_and_frequency(load_fixture):
    spec = load_fixture("wave")
    partition = build_partition(spec, [1.0], 0.1)
    with pytest.raises(SpecValidationError, match="方向"):
        energy_trace(spec, integrate_mode(spec, [-2.0], [1.0, 0.0], n_out=4), partition)
    with pytest.raises(SpecValidationError, match="非零"):
        energy_trace(spec, integrate_mode(spec, [0.0], [1.0, 0.0], n_out=4), partition)


def test_qb_commutator_bound(load_fixture):
    spec = load_fixture("t2_levi_ok")
    frame = build_frame(spec, 0.5, [2.0])
    bound = qb_commutator_bound(frame, build_symmetriser(frame))
    # b = t²r，Q 末列为 (0, 2)
    assert bound == pytest.approx(2.0 * 0.25 * 2.0 / math.sqrt(5.0), rel=1e-12)


def test_classify_growth_verdicts():
    s = 2.0 ** np.arange(1, 11)
    log_x = np.log(np.sqrt(1.0 + s ** 2))
    polynomial = classify_growth(log_x, 2.0 * log_x)
    assert polynomial["verdict"] == "polynomial"
    assert polynomial["slope"] == pytest.approx(2.0)

    assert classify_growth(log_x, np.sqrt(s))["verdict"] == "superpolynomial"

    bent = np.where(np.arange(10) < 5, 0.0, 0.75 * (log_x - log_x[4]))
    fit = classify_growth(log_x, bent)
    assert fit["slope_drift"] == pytest.approx(0.75)
    assert fit["verdict"] == "inconclusive"


@pytest.mark.parametrize("mags, fragment", [
    ([2, 4, 8, 16, 32], "6"),
    ([1, 2, 4, 8, 16, 32], "2"),
    ([2, 4, 8, 16, 32, 48], "二进"),
])
def test_growth_scan_validates_magnitudes(load_fixture, mags, fragment):
    with pytest.raises(SpecValidationError, match=fragment):
        growth_scan(load_fixture("wave"), [1.0], mags)


def test_growth_scan_rejects_unknown_policy(load_fixture):
    with pytest.raises(SpecValidationError, match="V0"):
        growth_scan(load_fixture("wave"), [1.0], [2, 4, 8, 16, 32, 64], v0_policy="zeros")


def test_growth_scan_on_wave_is_polynomial(load_fixture):
    fit = growth_scan(load_fixture("wave"), [1.0], [2, 4, 8, 16, 32, 64])
    assert fit.verdict == "polynomial"
    assert abs(fit.slope) < 0.5
    assert fit.witness is None
    frame = fit.to_frame()
    assert list(frame.columns) == ["xi_mag", "bracket", "ratio", "log_bracket", "log_ratio"]
    assert fit.to_dict()["v0_policy"] == "ones"


def test_growth_scan_random_policy_is_seeded(load_fixture):
    spec = load_fixture("t2_levi_ok")
    mags = [2, 4, 8, 16, 32, 64]
    first = growth_scan(spec, [1.0], mags, v0_policy="random", seed=3)
    second = growth_scan(spec, [1.0], mags, v0_policy="random", seed=3)
    np.testing.assert_array_equal(first.ratios, second.ratios)


@pytest.mark.slow
@pytest.mark.parametrize("name", ["wave", "t2_levi_ok", "piecewise_lower"])
def test_full_scan_is_polynomial(load_fixture, name):
    fit = growth_scan(load_fixture(name), [1.0], 2.0 ** np.arange(4, 11))
    assert fit.verdict == "polynomial"


@pytest.mark.slow
def test_full_scan_detects_superpolynomial_growth(load_fixture):
    fit = growth_scan(load_fixture("t4_levi_fail"), [1.0], 2.0 ** np.arange(4, 11))
    assert fit.verdict == "superpolynomial"
    assert fit.witness is not None


def kept_energy_trace(spec, xi, eps=math.exp(-1.0)):
    partition = build_partition(spec, [1.0], eps)
    constants = estimate_energy_constants(spec, xi, partition)
    edges = [t for iv in partition.kept for t in iv]
    trace = integrate_mode(spec, xi, [1.0, 1.0], extra_nodes=edges)
    return partition, constants, energy_trace(spec, trace, partition, constants)


@pytest.mark.parametrize("name", ["t2_levi_ok", "shifted_zeros", "piecewise_lower"])
def test_hyperbolic_energy_is_sandwiched_along_trajectory(load_fixture, name):
    spec = load_fixture(name)
    xi = [64.0]
    partition, _, trace = kept_energy_trace(spec, xi, eps=0.05)
    field_ = SymmetriserField(spec, xi)
    kept = ~np.isnan(trace.E_hyp)
    ts = trace.t_nodes[kept]
    eigs = np.linalg.eigvalsh(field_.Q(ts))
    c0 = float(np.max(eigs[:, -1]))
    delta = field_.delta(ts)
    m = spec.m
    # λ_min(Q) ≥ det Q / c₀^{m-1}
    assert np.all(eigs[:, 0] >= delta / c0 ** (m - 1) * (1.0 - 1e-9))
    E_hyp, E_kov = trace.E_hyp[kept], trace.E_kov[kept]
    assert np.all(E_hyp >= delta / c0 ** (m - 1) * E_kov * (1.0 - 1e-9))
    assert np.all(E_hyp <= c0 * E_kov * (1.0 + 1e-9))


def test_principal_generator_is_skew_in_q_norm(load_fixture):
    for name in ("wave", "t2_levi_ok", "m3_triple_root"):
        spec = load_fixture(name)
        for s in 2.0 ** np.arange(0, 11):
            for t in np.linspace(spec.a, spec.b, 9):
                frame = build_frame(spec, t, [s])
                Q = build_symmetriser(frame).Q
                M = 1j * frame.bracket * frame.A
                gap = Q @ M + M.conj().T @ Q
                assert np.max(np.abs(gap)) <= 1e-10 * max(1.0, np.max(np.abs(Q))) * frame.bracket


@pytest.mark.parametrize("xi_mag", [16.0, 256.0, pytest.param(1024.0, marks=pytest.mark.slow)])
def test_hyperbolic_energy_is_constant_without_lower_terms(load_fixture, xi_mag):
    spec = load_fixture("wave")
    xi = [xi_mag]
    partition = build_partition(spec, [1.0], 0.1)
    trace = energy_trace(spec, integrate_mode(spec, xi, [1.0, 1.0], rtol=1e-12), partition)
    drift = np.max(np.abs(trace.E_hyp - trace.E_hyp[0])) / trace.E_hyp[0]
    assert drift <= 1e-8


def test_energy_derivatives_obey_the_estimates(load_fixture):
    spec = load_fixture("t2_levi_ok")
    xi = [32.0]
    partition, constants, _ = kept_energy_trace(spec, xi)
    field_ = SymmetriserField(spec, xi)
    generator = ModeGenerator(spec, xi)
    rate = 2.0 * (constants.c_A * japanese_bracket(xi) + constants.c_B)
    h = 1e-5
    for t0 in (0.45, 0.7, 0.95):
        V = integrate_mode(spec, xi, [1.0, 1.0], t_span=(spec.a, t0), n_out=2).V[-1]
        M = generator.matrix(t0)
        Q, dQ = field_.Q(t0), field_.dQ(t0)
        dE_hyp = np.real(V.conj() @ (dQ + Q @ M + M.conj().T @ Q) @ V)
        dE_kov = np.real(V.conj() @ (M + M.conj().T) @ V)

        ends = [integrate_mode(spec, xi, V, t_span=(t0, t0 + sign * h), n_out=2).V[-1] for sign in (1.0, -1.0)]
        E_ends = [np.real(W.conj() @ field_.Q(t0 + sign * h) @ W) for W, sign in zip(ends, (1.0, -1.0))]
        E_hyp = np.real(V.conj() @ Q @ V)
        assert (E_ends[0] - E_ends[1]) / (2.0 * h) == pytest.approx(dE_hyp, abs=1e-4 * E_hyp * japanese_bracket(xi))

        assert not partition.is_excluded(t0)
        weight = 1.0 + abs(float(field_.d_delta(t0))) / float(field_.delta(t0))
        assert dE_hyp <= constants.c_hyp * weight * E_hyp
        assert dE_kov <= rate * np.vdot(V, V).real


def test_growth_scan_carries_downgraded_regularity(load_fixture):
    fit = growth_scan(load_fixture("piecewise_lower"), [1.0], [2, 4, 8, 16, 32, 64])
    assert "W^{inf,2}" in fit.regularity
    assert fit.to_dict()["regularity"] == fit.regularity
    assert growth_scan(load_fixture("t2_levi_ok"), [1.0], [2, 4, 8, 16, 32, 64]).regularity == "C^2([a,b]; C^inf)"
