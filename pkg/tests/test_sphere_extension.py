import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from superint.errors import ConditionsFailed
from superint.principal_ode import PrincipalParams, solve_profile, UniquePositive
from superint.sphere_extension import (SphereParams, c0_of, cartesian_expansion, check_global_conditions,
                                       comparison_bounds, conformal_factor, even_series_fit,
                                       integral_cartesian, normalize, solve_sphere_profile,
                                       sphere_curvature_report, sphere_report, to_json, zoll_check)


@pytest.fixture(scope="module")
def round_model():
    return solve_sphere_profile(SphereParams(1.0, 0.0, 0.0))


@pytest.fixture(scope="module")
def bumpy_model():
    return solve_sphere_profile(SphereParams(1.0, 0.0, 0.3))


def test_conditions_examples():
    assert check_global_conditions(PrincipalParams("ii", 1, 0, 0, 0, 1, mu=1)) == (True, [])
    ok, why = check_global_conditions(PrincipalParams("i", 1, 0, 0, 0, 1, mu=1))
    assert not ok and why == ["case must be (ii)"]
    ok, why = check_global_conditions(PrincipalParams("ii", 1, 0, 0, 2, 1, mu=1))
    assert not ok and why == ["μ·A4 ≤ |A3|"]


def test_normalize_examples():
    sp = normalize(PrincipalParams("ii", 1, 0, 0, 0, 2, mu=1))
    assert (sp.Ae, sp.A2) == pytest.approx((1.0, 0.0), abs=1e-14)
    sp = normalize(PrincipalParams("ii", 2, 0, 2, 0, 2, mu=1))
    assert (sp.Ae, sp.A2) == pytest.approx((0.5, 1.0), abs=1e-14)
    assert len(sp.transcript) >= 4


def test_normalize_generic_mu2_maps_solutions():
    p = PrincipalParams("ii", 1.3, 0.4, -0.2, 0.5, 1.1, mu=2.0)
    sp = normalize(p, h0=0.1)
    nm = sp.normalization
    # independent check: solve the original equation and push it through the map
    x0 = nm.delta / nm.mu
    prof = solve_profile(p, x0, 0.1, UniquePositive(), (x0 - 0.3, x0 + 0.3), n=61)
    xt, H = nm.forward(prof.grid, prof.h)
    lam = prof.hx
    lhs = lam * (lam**2 - H**2 + sp.A2)
    rhs = sp.Ae * (np.exp(xt) + np.exp(-xt))
    assert np.max(np.abs(lhs - rhs) / (1 + np.abs(rhs))) <= 1e-10
    assert nm.forward(x0, 0.1)[1] == pytest.approx(sp.h0, abs=1e-14)
    back = nm.backward(*nm.forward(prof.grid, prof.h))
    assert np.allclose(back[0], prof.grid) and np.allclose(back[1], prof.h)


def test_normalize_rejects():
    with pytest.raises(ConditionsFailed):
        normalize(PrincipalParams("ii", 1, 0, 0, 2, 1, mu=1))


def test_sphere_params_validation():
    with pytest.raises(ValueError):
        SphereParams(0.0, 1.0)


def test_c0_examples():
    assert c0_of(4, 0) == pytest.approx(1, abs=1e-14)
    assert c0_of(5, 1) == pytest.approx(1, abs=1e-14)
    assert c0_of(1, 0) == pytest.approx(4 ** (-1 / 3), abs=1e-14)
    assert c0_of(1, 0) == pytest.approx(0.629961, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 100), st.floats(-5, 5))
def test_c0_is_positive_root(Ae, A2):
    c = c0_of(Ae, A2)
    assert c > 0
    assert c * (4 * c * c + A2) == pytest.approx(Ae, rel=1e-12, abs=1e-14)


def test_round_profile_start_and_monotone():
    m = solve_sphere_profile(SphereParams(1.0, 0.0, 0.0), (1e-3, 1e3), n=1201)
    assert m.profile.at(0.0)[1] == pytest.approx(2 ** (1 / 3), abs=1e-13)
    assert np.all(m.profile.hx > 0) and np.all(np.diff(m.profile.h) > 0)
    i = np.argmin(np.abs(m.t - 1e-3))
    assert m.t[i] * m.profile.h[i] == pytest.approx(-m.c0, rel=0.01)


def test_round_profile_closed_form(round_model):
    # h = c0(t − 1/t) solves the normalized equation when h0 = 0
    c0 = round_model.c0
    t = round_model.t
    assert np.max(np.abs(round_model.profile.h - c0 * (t - 1 / t)) / (c0 * (t + 1 / t))) <= 1e-9
    assert round_model.c_pole == pytest.approx(c0, rel=1e-10)


def test_bumpy_profile_bounded(bumpy_model):
    b = comparison_bounds(bumpy_model)
    assert b["ordered"]
    assert b["lower_min_gap"] >= 0 and b["upper_right_min_gap"] >= -1e-9 and b["upper_left_min_gap"] >= -1e-9


def test_negative_h0_bounds_by_mirroring():
    b = comparison_bounds(solve_sphere_profile(SphereParams(1.0, 0.0, -0.3)))
    assert b["mirrored"] and b["ordered"]


def test_inversion_symmetry(bumpy_model):
    mirror = solve_sphere_profile(SphereParams(1.0, 0.0, -0.3))
    xs = np.linspace(-4, 4, 33)
    assert np.allclose(mirror.profile.evaluate(xs)[1], bumpy_model.profile.evaluate(-xs)[1], rtol=1e-9)
    for t in (0.2, 0.7, 3.0):
        f_plus = conformal_factor(bumpy_model, t, 0.0)
        f_minus = conformal_factor(mirror, 1 / t, 0.0)
        # (t·h_x(log t))⁻² at t versus at 1/t on the mirrored model
        assert f_plus == pytest.approx(f_minus * t**-4, rel=1e-8)


def test_round_inversion(round_model):
    for t in (0.01, 0.5, 2.0):
        assert conformal_factor(round_model, t, 0) == pytest.approx(
            conformal_factor(round_model, 1 / t, 0) * t**-4, rel=1e-8)


def test_conformal_factor_examples(round_model, bumpy_model):
    m4 = solve_sphere_profile(SphereParams(4.0, 0.0, 0.0))
    assert conformal_factor(m4, 0.0, 0.0) == pytest.approx(1.0, rel=1e-8)
    assert conformal_factor(round_model, 0.0, 0.0) == pytest.approx(1 / round_model.c0**2, rel=1e-8)
    for m in (round_model, bumpy_model):
        assert conformal_factor(m, 1.0, 0.0) == pytest.approx(1 / m.profile.at(0.0)[1] ** 2, rel=1e-12)
    for r in (1e-5, 0.03, 0.4, 2.5, 50.0, 1e5):
        vals = [conformal_factor(bumpy_model, r * math.cos(a), r * math.sin(a)) for a in (0.0, 1.0, 2.5, 4.0)]
        assert np.ptp(vals) <= 1e-9 * max(vals)


def test_pole_chart_continuity(bumpy_model):
    lo, hi = bumpy_model.t_range
    inside = conformal_factor(bumpy_model, lo * 1.001, 0)
    outside = conformal_factor(bumpy_model, lo * 0.999, 0)
    assert inside == pytest.approx(outside, rel=1e-6)
    assert conformal_factor(bumpy_model, 0.0, 0.0) == pytest.approx(1 / bumpy_model.c_pole**2, rel=1e-6)


def test_even_series(round_model, bumpy_model):
    for m in (round_model, bumpy_model):
        assert m.series["south_relative_residual"] <= 1e-6
        assert m.series["north_relative_residual"] <= 1e-6
    t = np.linspace(0.01, 0.1, 50)
    coef, res = even_series_fit(t, 1 - 2 * t**2 + 0.5 * t**6)
    assert res <= 1e-12 and coef == pytest.approx([1, -2, 0, 0.5], abs=1e-8)


def test_integral_at_origin(round_model):
    c0 = round_model.c0
    assert integral_cartesian(round_model, 0, 0, 1, 0) == pytest.approx(c0**3, abs=1e-12)
    assert integral_cartesian(round_model, 0, 0, 0, 1) == 0.0


def test_integral_matches_expansion_near_pole(round_model):
    c0 = round_model.c0
    rng = np.random.default_rng(0)
    for _ in range(5):
        a = rng.uniform(0, 2 * math.pi)
        pxi, peta = rng.normal(size=2)
        t = 1e-3
        xi, eta = t * math.cos(a), t * math.sin(a)
        F = integral_cartesian(round_model, xi, eta, pxi, peta)
        E = cartesian_expansion(c0, 0.0, xi, eta, pxi, peta)
        lead = cartesian_expansion(c0, 0.0, 0, 0, pxi, peta)
        scale = abs(pxi) ** 3 + abs(peta) ** 3
        assert abs(F - E) <= 50 * t**4 * scale
        assert abs(F - lead) > 10 * abs(F - E)


def test_zoll_round(round_model):
    rep = zoll_check(round_model, 5)
    assert rep.passed and max(rep.return_distances) <= 1e-8
    R = sphere_curvature_report(round_model).R_value
    for per in rep.periods:
        assert per == pytest.approx(2 * math.pi / math.sqrt(R), rel=1e-6)


def test_zoll_bumpy(bumpy_model):
    rep = zoll_check(bumpy_model, 5)
    assert rep.passed and max(rep.return_distances) <= 1e-4
    assert np.ptp(rep.periods) <= 1e-6 * rep.periods[0]
    assert max(rep.max_H_drift) <= 1e-8


def test_zoll_equator(round_model):
    hx0 = round_model.profile.at(0.0)[1]
    rep = zoll_check(round_model, initial=[(0.0, 0.0, 0.0, 1.0 / hx0)])
    assert rep.passed
    assert rep.periods[0] == pytest.approx(2 * math.pi / hx0, rel=1e-8)


def test_curvature_report_threshold():
    assert sphere_curvature_report(solve_sphere_profile(SphereParams(1, 0, 0.0))).classification == "Constant"
    assert sphere_curvature_report(solve_sphere_profile(SphereParams(1, 0, 0.5))).classification == "Generic"
    assert sphere_curvature_report(solve_sphere_profile(SphereParams(1, 0, 1e-12))).classification == "Constant"


def test_outputs(bumpy_model):
    rep = sphere_report(bumpy_model, zoll_check(bumpy_model, 2))
    assert rep["curvature_class"] == "Generic" and rep["zoll"]["passed"]
    d = json.loads(to_json(bumpy_model))
    assert d["c0"] == pytest.approx(c0_of(1, 0))
    lines = bumpy_model.to_csv().splitlines()
    assert lines[0] == "t,h,t_h_t,conformal_factor" and len(lines) == bumpy_model.t.size + 1
