import math
import itertools

import numpy as np
import pytest

from src.errors import SpecValidationError
from src.hyperbolicity_analyzer import (
    GridConfig, HyperbolicityAnalyzer, check_gr1m, check_levi, classify_from_minors,
    classify_hyperbolicity, m2_equivalences, sample_directions,
)
from src.operator_model import operator_spec_from_dict
from src.symmetriser import build_symmetriser


@pytest.mark.parametrize("name, t, label", [
    ("wave", 0.5, "strict"),
    ("t2", 0.0, "weak(1)"),
    ("t2", 0.5, "strict"),
    ("m3_triple_root", 0.0, "weak(1)"),
    ("m3_triple_root", 0.5, "strict"),
    ("elliptic", 0.5, "not_hyperbolic"),
])
def test_pointwise_classification(load_fixture, name, t, label):
    cls = classify_hyperbolicity(load_fixture(name), t, [1.0])
    assert cls.label == label
    assert cls.oracle_agrees


def test_classification_counts_distinct_roots(roots_frame):
    values = (-1.0, -0.5, 0.0, 0.5, 1.0)
    checked = 0
    for m in (2, 3, 4):
        for roots in itertools.combinations_with_replacement(values, m):
            if max(roots.count(v) for v in values) > 3:
                continue
            frame = roots_frame(list(roots))
            sym = build_symmetriser(frame)
            cls = classify_from_minors(sym.minors, np.linalg.eigvals(frame.A), log_mismatch=False)
            distinct = len(set(roots))
            assert cls.r == distinct, roots
            assert cls.kind == ("strict" if distinct == m else "weak")
            assert cls.oracle_agrees
            checked += 1
    assert checked >= 100


def test_complex_roots_are_not_hyperbolic(roots_frame):
    frame = roots_frame([1.0 + 0.5j, 1.0 - 0.5j])
    sym = build_symmetriser(frame)
    cls = classify_from_minors(sym.minors, np.linalg.eigvals(frame.A))
    assert cls.kind == "not_hyperbolic"
    assert cls.r is None


def test_sample_directions_are_unit_vectors():
    one = sample_directions(1)
    assert [d.tolist() for d in one] == [[1.0], [-1.0]]
    for n in (2, 3, 5):
        dirs = sample_directions(n, 16)
        assert len(dirs) == 16
        np.testing.assert_allclose([np.linalg.norm(d) for d in dirs], 1.0, atol=1e-12)
        assert all(d.shape == (n,) for d in dirs)


def test_grid_config_validation():
    with pytest.raises(SpecValidationError, match="t_nodes"):
        GridConfig(t_nodes=1)
    with pytest.raises(SpecValidationError):
        GridConfig(zero_radius=0.0)
    grid = GridConfig(t_nodes=10, xi_decades=3, zero_radius=1e-3)
    np.testing.assert_allclose(grid.magnitudes(), [1.0, 2.0, 4.0, 8.0])
    refined = grid.refined()
    assert refined.t_nodes == 20
    assert refined.zero_radius == pytest.approx(5e-4)


def test_gr1m_holds_trivially_for_constant_coefficients(load_fixture, small_grid):
    result = check_gr1m(load_fixture("wave"), small_grid)
    assert result.verdict
    assert result.C1_estimate == 0.0
    assert result.jt2_sup == 0.0


def test_gr1m_for_linearly_separating_roots(load_fixture, small_grid):
    # 根为 t·r 与 2t·r：Z²|ψ|/Δ ≡ 9
    result = check_gr1m(load_fixture("roots_t_2t"), small_grid)
    assert result.verdict
    assert result.jt2_sup == pytest.approx(9.0, rel=1e-6)


def test_gr1m_fails_for_cubic_separation(load_fixture, small_grid):
    result = check_gr1m(load_fixture("roots_t_t3"), small_grid)
    assert not result.verdict
    assert result.jt2_sup > 1e10
    t, xi = result.witness
    assert t < 1e-3


def test_levi_condition_holds(load_fixture, small_grid):
    result = check_levi(load_fixture("t2_levi_ok"), small_grid)
    assert result.verdict
    # 商恒为 1/(2|r|)，在 |ξ| = 1 处最大
    assert result.sup == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-6)
    assert result.constants.shape == (2, 2)


def test_levi_condition_fails(load_fixture, small_grid):
    result = check_levi(load_fixture("t2_levi_fail"), small_grid)
    assert not result.verdict
    assert result.sup > 1e3


def test_levi_real_mode_only_checks_upper_pairs(load_fixture, small_grid):
    result = check_levi(load_fixture("t2_levi_ok"), small_grid, mode="real")
    assert result.verdict
    assert math.isnan(result.constants[1, 0])
    assert not math.isnan(result.constants[0, 1])


def test_levi_real_mode_rejects_complex_lower_terms(load_fixture, small_grid):
    with pytest.raises(SpecValidationError, match="real"):
        check_levi(load_fixture("complex_lower"), small_grid, mode="real")


def test_levi_graded_mode(load_fixture, small_grid):
    result = check_levi(load_fixture("t2_levi_ok"), small_grid, mode="graded")
    assert result.verdict
    assert set(result.grades) == {"0", "1"}
    assert result.grades["1"]["sup"] == 0.0

    partial = check_levi(load_fixture("t2_levi_ok"), small_grid, mode="graded", l_max=0)
    assert set(partial.grades) == {"0"}
    assert set(partial.residuals) == {"1"}


@pytest.mark.parametrize("mode, l_max", [("imaginary", None), ("graded", 5)])
def test_levi_rejects_bad_modes(load_fixture, small_grid, mode, l_max):
    with pytest.raises(SpecValidationError):
        check_levi(load_fixture("t2_levi_ok"), small_grid, mode=mode, l_max=l_max)


@pytest.mark.parametrize("name, holds", [
    ("wave", True),
    ("t2", True),
    ("roots_t_2t", True),
    ("shifted_zeros", True),
    ("roots_t_t3", False),
])
def test_m2_equivalences_agree(load_fixture, small_grid, name, holds):
    report = m2_equivalences(load_fixture(name), small_grid)
    assert report.agreement["gr1m_i_ii"] is True
    assert report.verdicts["gr1m"] is holds
    if holds:
        assert report.agreement["lc2_lcb2"] is True
        assert report.sups["lc2"] == 0.0
    else:
        assert report.agreement["lc2_lcb2"] is None


def test_m2_equivalences_require_second_order(load_fixture, small_grid):
    with pytest.raises(SpecValidationError, match="m=2"):
        m2_equivalences(load_fixture("m3_triple_root"), small_grid)


def test_analyzer_report_for_wave(load_fixture, small_grid):
    analyzer = HyperbolicityAnalyzer(load_fixture("wave"), small_grid)
    results = analyzer.get_analysis_results()
    assert results["hyperbolicity"] == "strict"
    assert results["C1_estimate"] == 0.0
    assert results["verdicts"] == {"gr1m_holds": True, "levi_holds": True, "degenerate_direction_found": False}
    assert results["eigenvalue_bound"]["holds"]
    assert results["grid"]["t_nodes"] == small_grid.t_nodes


def test_analyzer_reports_weak_hyperbolicity(load_fixture):
    grid = GridConfig(t_nodes=65, xi_decades=1, refine=False, threads=1)
    report = HyperbolicityAnalyzer(load_fixture("t2"), grid).analyze()
    assert report.hyperbolicity == "weak(1)"
    assert report.witnesses["hyperbolicity"][0] == 0.0


def test_analyzer_stops_on_elliptic_operator(load_fixture, small_grid):
    report = HyperbolicityAnalyzer(load_fixture("elliptic"), small_grid).analyze()
    assert report.hyperbolicity == "not_hyperbolic"
    assert report.gr1m is None
    assert report.verdicts["gr1m_holds"] is False
    assert report.witnesses["hyperbolicity"] is not None


def test_analyzer_samples_zeros_between_grid_nodes():
    # a_{(2),2} = (t - 1/3)²：Δ 的唯一零点不在 64 点网格上
    coeffs = np.polynomial.Polynomial.fromroots([1.0 / 3.0, 1.0 / 3.0]).coef
    spec = operator_spec_from_dict({
        "m": 2,
        "n": 1,
        "interval": [-0.5, 1.5],
        "work": [0.0, 1.0],
        "principal": [{"nu": [2], "j": 2, "poly": coeffs.tolist()}],
    })
    grid = GridConfig(t_nodes=64, xi_decades=1, refine=False, threads=1)
    report = HyperbolicityAnalyzer(spec, grid).analyze()
    assert report.hyperbolicity == "weak(1)"
    assert report.witnesses["hyperbolicity"][0] == pytest.approx(1.0 / 3.0, abs=1e-8)


def test_analyzer_finds_triple_root_off_grid(load_fixture):
    grid = GridConfig(t_nodes=64, xi_decades=1, refine=False, threads=1)
    analyzer = HyperbolicityAnalyzer(load_fixture("m3_triple_root"), grid)
    classification, bound = analyzer.classify_grid()
    assert 0.0 not in np.linspace(-1.0, 1.0, 64)
    assert classification["label"] == "weak(1)"
    assert classification["witness"][0] == pytest.approx(0.0, abs=1e-8)
    assert bound["holds"]


@pytest.mark.parametrize("name, levi", [
    ("t2_levi_ok", True),
    ("t2_levi_fail", False),
    ("complex_lower", True),
    ("piecewise_lower", True),
])
def test_m2_levi_forms_agree_with_lower_terms(load_fixture, small_grid, name, levi):
    report = m2_equivalences(load_fixture(name), small_grid)
    assert report.verdicts["cond_ii"]
    assert report.sups["cond_ii"] == pytest.approx(0.5, rel=1e-9)
    assert report.agreement["lc2_lcb2"] is True
    assert report.verdicts["lc2"] is levi
    assert report.verdicts["lcb2"] is levi
    # a₂ = 0 时 q₁₁ = Δ/2，两个商逐点相差因子 2
    assert report.sups["lcb2"] == pytest.approx(2.0 * report.sups["lc2"], rel=1e-9)
    if name == "complex_lower":
        assert report.sups["lcb2"] == pytest.approx(0.25, rel=1e-9)


def test_delta2_sandwich_for_quadratic_zero(load_fixture, small_grid):
    # Δ = 4t²r²：Z²Δ̃/Δ = t² + 4，在 [-1, 1] 上介于 4 与 5 之间
    sandwich = check_gr1m(load_fixture("t2"), small_grid).delta2_sandwich
    assert sandwich["inf"] >= 4.0 - 1e-9
    assert sandwich["inf"] == pytest.approx(4.0, abs=1e-3)
    assert sandwich["sup"] <= 5.0 + 1e-9
    assert sandwich["sup"] >= 4.9


@pytest.mark.parametrize("name", ["t2_levi_ok", "t2_levi_fail", "complex_lower", "piecewise_lower", "wave"])
def test_graded_levi_is_monotone_in_grade(load_fixture, small_grid, name):
    spec = load_fixture(name)
    verdicts = [check_levi(spec, small_grid, mode="graded", l_max=l).verdict for l in range(spec.m)]
    for lower, higher in zip(verdicts[:-1], verdicts[1:]):
        assert lower or not higher


@pytest.mark.parametrize("name", ["t2_levi_ok", "t2_levi_fail", "complex_lower", "piecewise_lower", "wave"])
def test_complex_levi_implies_lc2(load_fixture, small_grid, name):
    spec = load_fixture(name)
    levi = check_levi(spec, small_grid)
    report = m2_equivalences(spec, small_grid)
    if levi.verdict:
        assert report.verdicts["lc2"]
        assert math.isfinite(report.sups["lc2"])
    else:
        assert name == "t2_levi_fail"
