import json

import numpy as np
import pytest

from helpers import random_profiles
from superint.errors import OutOfRange
from superint.geodesic_flow import hamiltonian
from superint.integral_builder import PhasePoint, build_basis
from superint.bracket_verifier import (coefficient_residuals, ladder_check, poisson_bracket_fd,
                                       random_phase_points, verify_profile)
from superint.principal_ode import HProfile, NearestTo, PrincipalParams, solve_profile


def test_sinh_lines_vanish(sinh_profile):
    assert max(abs(c) for c in coefficient_residuals(sinh_profile, 0.7)) <= 1e-10


def test_flat_lines_zero(flat_profile):
    for x in (-1.5, 0.0, 0.9):
        assert max(abs(c) for c in coefficient_residuals(flat_profile, x)) <= 1e-14


def test_perturbed_constants_detected(generic_iii_profile):
    p = generic_iii_profile.params
    bad = PrincipalParams(p.case, p.A0, p.A1, p.A2 + 0.1, p.A3, p.A4, mu=p.mu)
    worst = max(max(abs(c) for c in coefficient_residuals(generic_iii_profile, x, bad))
                for x in np.linspace(-0.9, 0.9, 7))
    assert worst > 1e-3
    rep = verify_profile(generic_iii_profile, params=bad, n_points=10, ladder=False)
    assert not rep.passed["coefficients"] and not rep.passed["fd"]
    assert rep.consistent


def test_out_of_range(flat_profile):
    with pytest.raises(OutOfRange):
        coefficient_residuals(flat_profile, 2.5)


def test_fd_canonical_pair():
    P = PhasePoint(0.3, -0.1, 0.4, 1.2)
    assert poisson_bracket_fd(lambda Q: Q[2], lambda Q: Q[0], P) == pytest.approx(-1, abs=1e-10)


def test_fd_H_F1_sinh(sinh_profile):
    b = build_basis(sinh_profile)
    H = lambda Q: hamiltonian(sinh_profile, Q)
    for row in random_phase_points(sinh_profile, 10, np.random.default_rng(0)):
        val, scale = poisson_bracket_fd(H, b.F1, PhasePoint(*row), with_scale=True)
        assert abs(val) / scale <= 1e-6


def test_fd_trivial_integrals(sinh_profile):
    b = build_basis(sinh_profile)
    H = lambda Q: hamiltonian(sinh_profile, Q)
    for row in random_phase_points(sinh_profile, 5, np.random.default_rng(1)):
        for e in (b.Lcubed, b.LH):
            val, scale = poisson_bracket_fd(H, e, PhasePoint(*row), with_scale=True)
            assert abs(val) / scale <= 1e-6


def test_fd_antisymmetric(sin_profile):
    b = build_basis(sin_profile)
    H = lambda Q: hamiltonian(sin_profile, Q)
    for row in random_phase_points(sin_profile, 5, np.random.default_rng(2)):
        P = PhasePoint(*row)
        assert abs(poisson_bracket_fd(H, b.F2, P) + poisson_bracket_fd(b.F2, H, P)) <= 1e-10


def test_ladder_sin_profile(sin_profile):
    b = build_basis(sin_profile)
    mu = sin_profile.params.mu
    for row in random_phase_points(sin_profile, 5, np.random.default_rng(3)):
        P = PhasePoint(*row)
        # {F, L} = ∂F/∂y in the canonical order used throughout
        val = poisson_bracket_fd(b.F1, lambda Q: Q[3], P)
        assert val == pytest.approx(mu * b.F1(P), abs=1e-6)
    rep = ladder_check(sin_profile)
    assert rep.passed and max(rep.relations.values()) <= 1e-8


def test_ladder_rotation_case():
    prof = random_profiles("ii", 1, seed=7)[0]
    rep = ladder_check(prof)
    assert rep.passed and rep.case == prof.params.case.value


def test_ladder_flat_and_generic_iii(flat_profile, generic_iii_profile):
    b = build_basis(flat_profile)
    pts = random_phase_points(flat_profile, 10, np.random.default_rng(4))
    assert np.all(b.F1.d_dy().evaluate(*pts.T) == 0)
    rep = ladder_check(generic_iii_profile)
    assert rep.passed
    assert rep.relations["dy^3 F2 = 0"] <= 1e-12


def test_ladder_detects_wrong_mu(sin_profile):
    p = sin_profile.params
    bad = PrincipalParams(p.case, p.A0, p.A1, p.A2, p.A3, p.A4, mu=1.3)
    assert not ladder_check(sin_profile, build_basis(sin_profile, bad)).passed


def test_verify_profile_report(sinh_profile):
    rep = verify_profile(sinh_profile, n_points=20)
    assert rep.ok and rep.consistent
    assert set(rep.passed) == {"coefficients", "algebraic", "fd", "ladder"}
    assert rep.max_abs["coefficients"] <= 1e-9
    assert '"ok": true' in rep.to_json()


def test_verify_detects_perturbed_profile():
    p = PrincipalParams("ii", 1, 0, 0, 0, 1, mu=1)
    good = solve_profile(p, 0.0, 0.0, NearestTo(1.0), (-1, 1), n=201)
    d = json.loads(good.to_json())
    d["hx"] = [v * 1.01 for v in d["hx"]]
    rep = verify_profile(HProfile.from_json(json.dumps(d)), n_points=10)
    assert not rep.ok
    assert not rep.passed["algebraic"]
