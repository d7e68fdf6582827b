import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hbpolar.theory import (
    DSBSConfig,
    GaussianHBConfig,
    InfeasibleParameterError,
    RegionError,
    bconv,
    binary_entropy,
    cascade_joint,
    classify_region_binary,
    classify_region_gaussian,
    critical_distortion,
    distortion_constraint,
    feasible_params,
    gamma_of,
    hbrdf_binary,
    hbrdf_binary_ib,
    hbrdf_gaussian,
    inner_crossover,
    make_params,
    minimize_S,
    mutual_information,
    s_d1,
    table1_joint,
    wz_gap,
    wz_gap_derivative,
)

from oracles import g_mp, h_mp, scan_root, slsqp_minimum


# ---------------------------------------------------------------------------
# entropy machinery


def test_binary_entropy_trivial():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0) == 0.0
    assert binary_entropy(1) == 0.0


def test_binary_entropy_high_precision():
    assert binary_entropy(0.11) == pytest.approx(h_mp("0.11"), abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1))
def test_binary_entropy_matches_oracle(u):
    assert binary_entropy(u) == pytest.approx(h_mp(u), abs=1e-12)


@pytest.mark.parametrize("bad", [-0.1, 1.1, float("nan")])
def test_binary_entropy_range(bad):
    with pytest.raises(ValueError):
        binary_entropy(bad)


def test_bconv_examples():
    assert bconv(0.3, 0.5) == pytest.approx(0.5)
    assert bconv(0.3, 0.0) == pytest.approx(0.3)
    # 0.35 * 0.6 + 0.4 * 0.65
    assert bconv(0.35, 0.4) == pytest.approx(0.47, abs=1e-15)
    with pytest.raises(ValueError):
        bconv(1.2, 0.1)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_bconv_symmetric(p, u):
    assert bconv(p, u) == pytest.approx(bconv(u, p), abs=1e-15)


def test_wz_gap_examples():
    assert wz_gap(0.5, 0.3) == pytest.approx(0.0, abs=1e-15)
    assert wz_gap(0.0, 0.3) == pytest.approx(h_mp(0.3), abs=1e-14)
    assert wz_gap(0.1, 0.4) == pytest.approx(h_mp(0.42) - h_mp(0.1), abs=1e-13)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.49), st.floats(0, 0.4999))
def test_wz_gap_positive_below_half(p, u):
    assert wz_gap(u, p) > 0


def test_wz_gap_derivative_matches_finite_difference():
    for p in (0.1, 0.25, 0.4):
        for u in (0.05, 0.2, 0.45):
            fd = (g_mp(u + 1e-7, p) - g_mp(u - 1e-7, p)) / 2e-7
            assert wz_gap_derivative(u, p) == pytest.approx(fd, rel=1e-6)


# ---------------------------------------------------------------------------
# critical distortion


@pytest.mark.parametrize("p", [0.1, 0.25, 0.4])
def test_critical_distortion_residual_and_bracket(p):
    dc = critical_distortion(p)
    assert 0 < dc < p
    assert wz_gap(dc, p) / (dc - p) - wz_gap_derivative(dc, p) == pytest.approx(0, abs=1e-9)


def test_critical_distortion_scan_oracle():
    p = 0.4
    t = lambda d: wz_gap(d, p) - (d - p) * wz_gap_derivative(d, p)  # noqa: E731
    assert critical_distortion(p) == pytest.approx(scan_root(t, 1e-4, p - 1e-4, 1e-6), abs=1e-9)


def test_critical_distortion_rejects_bad_p():
    with pytest.raises(ValueError):
        critical_distortion(0.5)


# ---------------------------------------------------------------------------
# Region I-B closed form and the optimizer


def test_ib_closed_form_value():
    ref = 1 - h_mp(0.47) + h_mp(0.42) - h_mp(0.1)
    assert hbrdf_binary_ib(DSBSConfig(0.4, 0.35, 0.1)) == pytest.approx(ref, abs=1e-12)
    assert ref == pytest.approx(0.515, abs=5e-4)


def test_ib_diagonal_substitution():
    p = 0.3
    d = 0.5 * critical_distortion(p)
    expected = 1 - binary_entropy(bconv(d, p)) + wz_gap(d, p)
    assert hbrdf_binary_ib(DSBSConfig(p, d, d)) == pytest.approx(expected)


def test_ib_rejects_outside_region():
    with pytest.raises(RegionError):
        hbrdf_binary_ib(DSBSConfig(0.4, 0.35, 0.34))


def test_optimizer_matches_ib_closed_form():
    cfg = DSBSConfig(0.4, 0.35, 0.1)
    prm, rate = minimize_S(cfg)
    assert rate == pytest.approx(hbrdf_binary_ib(cfg), abs=1e-4)
    assert distortion_constraint(prm, cfg) == pytest.approx(cfg.D2, abs=1e-9)


def test_optimizer_matches_general_solver_in_region_ia():
    # multi-start SLSQP is an independent solver for the same program
    for cfg in (DSBSConfig(0.224, 0.478, 0.201), DSBSConfig(0.1, 0.04, 0.0173)):
        assert classify_region_binary(cfg) == "I-A"
        ref = slsqp_minimum(cfg, feasible_params, binary_entropy, bconv, starts=30)
        assert minimize_S(cfg)[1] == pytest.approx(ref, rel=1e-5)


def test_optimizer_at_critical_distortion():
    p, D1 = 0.3, 0.3
    cfg = DSBSConfig(p, D1, critical_distortion(p))
    assert minimize_S(cfg)[1] == pytest.approx(hbrdf_binary_ib(cfg), abs=1e-3)


def test_optimizer_below_random_feasible_points():
    rng = np.random.default_rng(2)
    for cfg in (DSBSConfig(0.25, 0.3, 0.12), DSBSConfig(0.4, 0.2, 0.15)):
        best = minimize_S(cfg)[1]
        vals = [s_d1(feasible_params(cfg, rng), cfg) for _ in range(500)]
        assert best <= min(vals) + 1e-9


def test_optimizer_params_are_feasible():
    rng = np.random.default_rng(4)
    for _ in range(5):
        p = rng.uniform(0.05, 0.45)
        D1 = rng.uniform(0.02, 0.45)
        cfg = DSBSConfig(p, D1, rng.uniform(0.2, 0.9) * min(D1, p))
        prm, rate = minimize_S(cfg)
        assert 0 <= prm.theta1 <= prm.theta <= 1
        assert 0 <= prm.alpha <= p and 0 <= prm.mu <= p
        assert p - 1e-12 <= prm.gamma <= 1 - p + 1e-12
        assert distortion_constraint(prm, cfg) == pytest.approx(cfg.D2, abs=1e-9)
        assert rate == pytest.approx(s_d1(prm, cfg), abs=1e-12)


@pytest.mark.parametrize("p, D1", [(0.4, 0.2), (0.1, 0.3)])
def test_optimizer_continuous_at_region_iii_boundary(p, D1):
    edge = min(D1, p)
    degenerate = hbrdf_binary(DSBSConfig(p, D1, edge))[0]
    vals = [minimize_S(DSBSConfig(p, D1, edge - e))[1] for e in (1e-2, 1e-3, 1e-4)]
    gaps = [abs(v - degenerate) for v in vals]
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 2e-3


def test_optimizer_rejects_outside_region():
    with pytest.raises(RegionError):
        minimize_S(DSBSConfig(0.3, 0.6, 0.1))


# ---------------------------------------------------------------------------
# S_{D1} and gamma


def test_gamma_theta_one():
    cfg = DSBSConfig(0.3, 0.2, 0.1)
    assert gamma_of(0.1, 0.1, 1.0, 0.5, cfg) == 0.5


def test_s_collapsed_chain_equals_ib_structure():
    cfg = DSBSConfig(0.3, 0.2, 0.1)
    prm = make_params(0.0, cfg.D2, 1.0, 1.0, cfg)
    expected = 1 - h_mp(bconv(cfg.D1, cfg.p)) + g_mp(cfg.D2, cfg.p)
    assert s_d1(prm, cfg) == pytest.approx(expected, abs=1e-12)


def test_make_params_rejects_gamma_out_of_range():
    cfg = DSBSConfig(0.3, 0.05, 0.04)
    with pytest.raises(InfeasibleParameterError):
        make_params(0.1, 0.1, 0.2, 0.1, cfg)


# ---------------------------------------------------------------------------
# Table I


def _random_params(rng, n):
    out = []
    while len(out) < n:
        p = rng.uniform(0.05, 0.45)
        D1 = rng.uniform(0.02, 0.48)
        cfg = DSBSConfig(p, D1, rng.uniform(0.3, 0.95) * min(D1, p))
        try:
            out.append((cfg, feasible_params(cfg, rng)))
        except RegionError:
            continue
    return out


def test_table1_marginals_and_distortions():
    for cfg, prm in _random_params(np.random.default_rng(5), 20):
        ch = table1_joint(prm, cfg)
        j = ch.joint
        assert j.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(j.sum(axis=(0, 1)), 0.5, atol=1e-12)
        assert j[2].sum() == pytest.approx(1 - prm.theta, abs=1e-12)
        d1, d2 = ch.expected_distortions()
        assert d1 == pytest.approx(cfg.D1, abs=1e-9)
        assert d2 == pytest.approx(cfg.D2, abs=1e-9)


def test_table1_theta_one_has_binary_u2():
    cfg = DSBSConfig(0.3, 0.2, 0.1)
    ch = table1_joint(make_params(0.05, 0.15, 1.0, 0.5, cfg), cfg)
    assert ch.joint[2].sum() == 0.0


def test_cascade_matches_inner_crossover():
    D1, D2, p = 0.35, 0.1, 0.4
    eta = inner_crossover(D1, D2)
    assert bconv(D2, eta) == pytest.approx(D1, abs=1e-12)
    ch = cascade_joint(D2, eta, p)
    d1, d2 = ch.expected_distortions()
    assert d1 == pytest.approx(D1) and d2 == pytest.approx(D2)
    # rate identity: I(X; U2 | U1, Y) = G(D2) - G(D1)
    j = ch.with_y()
    assert mutual_information(j, (2,), (0,), (1, 3)) == pytest.approx(
        wz_gap(D2, p) - wz_gap(D1, p), abs=1e-12)


# ---------------------------------------------------------------------------
# regions


def test_binary_region_examples():
    assert classify_region_binary(DSBSConfig(0.4, 0.6, 0.3)) == "II"
    assert classify_region_binary(DSBSConfig(0.4, 0.3, 0.35)) == "III"
    assert classify_region_binary(DSBSConfig(0.4, 0.35, 0.1)) == "I-B"
    assert classify_region_binary(DSBSConfig(0.1, 0.04, 0.02)) == "I-A"
    assert classify_region_binary(DSBSConfig(0.4, 0.6, 0.45)) == "IV"
    # D1 = 0.5 is inclusive for Region II
    assert classify_region_binary(DSBSConfig(0.3, 0.5, 0.1)) == "II"


@settings(max_examples=300, deadline=None)
@given(st.floats(0.01, 0.49), st.floats(0, 1), st.floats(0, 1))
def test_binary_regions_cover_plane(p, D1, D2):
    assert classify_region_binary(DSBSConfig(p, D1, D2)) in {"I-A", "I-B", "II", "III", "IV"}


def test_gaussian_region_examples():
    assert classify_region_gaussian(GaussianHBConfig(1, 1, 0.5, 0.2)) == "nondegenerate"
    assert 0.2 < 0.5 / 1.5
    assert classify_region_gaussian(GaussianHBConfig(1, 1, 0.5, 0.4)) == "lossy-only"
    assert classify_region_gaussian(GaussianHBConfig(1, 1, 1.5, 0.2)) == "wyner-ziv"
    assert classify_region_gaussian(GaussianHBConfig(1, 1, 1.5, 0.9)) == "no-coding"


def test_gaussian_rate_value():
    ref = 0.5 * math.log2(1 / (0.2 * 1.5))
    assert hbrdf_gaussian(GaussianHBConfig(1, 1, 0.5, 0.2)) == pytest.approx(ref, abs=1e-14)
    assert ref == pytest.approx(0.8685, abs=1e-4)


def test_gaussian_rate_boundary_matches_wyner_ziv():
    sx, sz, D2 = 1.3, 0.8, 0.2
    at = hbrdf_gaussian(GaussianHBConfig(sx, sz, sx, D2))
    wz = 0.5 * math.log2(sx * sz / (D2 * (sx + sz)))
    assert at == pytest.approx(wz, abs=1e-14)


def test_gaussian_rate_continuous_at_boundaries():
    sx, sz = 1.0, 1.0
    # D2 crossing D1 sz / (D1 + sz) at D1 = 0.5
    d = 0.5 / 1.5
    left = hbrdf_gaussian(GaussianHBConfig(sx, sz, 0.5, d - 1e-9))
    right = hbrdf_gaussian(GaussianHBConfig(sx, sz, 0.5, d + 1e-9))
    assert left == pytest.approx(right, abs=1e-6)
    # D1 crossing sigma_x2 at D2 = 0.2
    left = hbrdf_gaussian(GaussianHBConfig(sx, sz, sx - 1e-9, 0.2))
    right = hbrdf_gaussian(GaussianHBConfig(sx, sz, sx + 1e-9, 0.2))
    assert left == pytest.approx(right, abs=1e-6)
    # lossy-only to no-coding at D1 = sigma_x2 with large D2
    left = hbrdf_gaussian(GaussianHBConfig(sx, sz, sx - 1e-9, 0.9))
    right = hbrdf_gaussian(GaussianHBConfig(sx, sz, sx + 1e-9, 0.9))
    assert left == pytest.approx(right, abs=1e-6)


def test_gaussian_rate_monotone():
    D1s = np.linspace(0.3, 0.9, 25)
    vals = [hbrdf_gaussian(GaussianHBConfig(1, 1, d, 0.1)) for d in D1s]
    assert np.all(np.diff(vals) <= 1e-15)
    D2s = np.linspace(0.05, 0.3, 25)
    vals = [hbrdf_gaussian(GaussianHBConfig(1, 1, 0.5, d)) for d in D2s]
    assert np.all(np.diff(vals) < 0)


def test_gaussian_region_assertion():
    with pytest.raises(RegionError):
        hbrdf_gaussian(GaussianHBConfig(1, 1, 0.5, 0.2), region="wyner-ziv")


def test_hbrdf_binary_labels():
    assert hbrdf_binary(DSBSConfig(0.4, 0.6, 0.3))[1] == "II"
    assert hbrdf_binary(DSBSConfig(0.4, 0.3, 0.35)) == (pytest.approx(1 - h_mp(0.3)), "III")
    assert hbrdf_binary(DSBSConfig(0.4, 0.6, 0.45)) == (0.0, "IV")
