import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_profiles
from superint.bracket_verifier import poisson_bracket_fd, random_phase_points
from superint.errors import OutOfRange
from superint.geodesic_flow import hamiltonian
from superint.integral_builder import (PhasePoint, build_basis, coeffs, darboux_factorization, decompose,
                                       eval as eval_element)


def test_coeffs_examples(sin_profile, sinh_profile, flat_profile):
    assert coeffs(sin_profile, 0.0) == pytest.approx((1, 0, 1.5, 0), abs=1e-12)
    assert coeffs(sinh_profile, 0.0) == pytest.approx((1, 0, 1.5, 0), abs=1e-12)
    assert coeffs(flat_profile, 2.0) == pytest.approx((1, -2, 1.5, -3), abs=1e-12)


def test_coeffs_out_of_range(flat_profile):
    with pytest.raises(OutOfRange):
        coeffs(flat_profile, 3.0)


def test_basis_examples(sinh_profile, flat_profile, sin_profile):
    b = build_basis(sinh_profile)
    assert b.names == ("Lcubed", "LH", "F1", "F2")
    assert b.Lcubed(PhasePoint(0, 0, 3, 2)) == 8
    assert build_basis(flat_profile).LH(PhasePoint(0.3, 0, 1, 1)) == pytest.approx(1.0, abs=1e-14)
    assert b.F1(PhasePoint(0, 0, 1, 0)) == pytest.approx(1.0, abs=1e-12)
    assert eval_element(build_basis(sin_profile).F1, PhasePoint(0, 0, 0, 1)) == pytest.approx(0, abs=1e-12)
    assert eval_element(build_basis(flat_profile).F2, PhasePoint(2, 0, 0, 1)) == pytest.approx(-3, abs=1e-12)


def test_case_iii_old_form_differs_by_trivial_integrals(generic_iii_profile):
    # F built from the y-linear ansatz with its own coefficient set
    prof = generic_iii_profile
    p = prof.params
    At1, At3 = 0.7, -0.4
    b = build_basis(prof)

    def F_old(P):
        x, y, px, py = P
        h, hx, _, _ = prof.state(x)
        a0 = p.A0 * hx**3
        a1 = 0.5 * At1 * hx**2
        a2 = 0.5 * (3 * hx**2 * p.A0 - p.A1 * h + p.A2) * hx
        a3 = 0.5 * hx**2 * At1 + At3
        lam = 1.0 / hx**2
        return (a0 * px**3 + a1 * px**2 * py + a2 * px * py**2 + a3 * py**3
                + 0.5 * y * (p.A3 * py**3 + p.A1 * py * (px**2 + py**2) / lam))

    rng = np.random.default_rng(3)
    pts = random_phase_points(prof, 30, rng)
    for row in pts:
        P = PhasePoint(*row)
        expected = b.F1(P) + At1 * b.LH(P) + At3 * b.Lcubed(P)
        assert F_old(P) == pytest.approx(expected, abs=1e-11 * (1 + abs(expected)))
    for row in pts[:5]:
        val, scale = poisson_bracket_fd(lambda Q: hamiltonian(prof, Q), F_old, PhasePoint(*row),
                                        with_scale=True)
        assert abs(val) / scale <= 1e-6


def test_darboux_factorization():
    prof = random_profiles("ii", 1, seed=4, A0=0.0)[0]
    b = build_basis(prof)
    Q = darboux_factorization(b)
    assert Q is not None and Q.degree == 2
    rng = np.random.default_rng(0)
    for row in random_phase_points(prof, 10, rng):
        P = PhasePoint(*row)
        assert Q(P) == pytest.approx(b.F1(P) / P.py, rel=1e-10, abs=1e-12)
    assert math.isfinite(Q(PhasePoint(0.1, 0.2, 1.0, 0.0)))


def test_darboux_absent_for_A0_nonzero(sinh_profile):
    assert darboux_factorization(build_basis(sinh_profile)) is None


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([-1.0, 2.0, 0.5, 1.7, -0.3]), st.floats(-1.5, 1.5), st.floats(-2, 2),
       st.floats(-2, 2), st.floats(-2, 2))
def test_homogeneous_degree_three(sinh_profile, s, x, y, px, py):
    for e in build_basis(sinh_profile):
        base = e.evaluate(x, y, px, py)
        assert e.evaluate(x, y, s * px, s * py) == pytest.approx(s**3 * base, rel=1e-12, abs=1e-12)


def test_gradient_matches_fd(generic_iii_profile, sin_profile):
    for prof in (generic_iii_profile, sin_profile):
        b = build_basis(prof)
        P = np.array([0.2, 0.4, 0.7, -0.5])
        for e in b:
            g = np.array(e.gradient(*P), dtype=float)
            fd = []
            for j in range(4):
                d = np.zeros(4)
                d[j] = 1e-6
                fd.append((e(P + d) - e(P - d)) / 2e-6)
            assert np.allclose(g, fd, atol=1e-7)


def test_linear_independence(generic_iii_profile):
    for prof in [generic_iii_profile, *random_profiles("i", 1, 11), *random_profiles("ii", 1, 11)]:
        b = build_basis(prof)
        pts = random_phase_points(prof, 40, np.random.default_rng(1))
        sv = np.linalg.svd(b.evaluate_all(*pts.T), compute_uv=False)
        assert sv[-1] / sv[0] > 1e-8


def test_decompose_recovers_combination(generic_iii_profile):
    b = build_basis(generic_iii_profile)
    pts = random_phase_points(generic_iii_profile, 40, np.random.default_rng(2))
    dec = decompose(b, lambda P: 2 * b.F1(P) - 0.5 * b.LH(P) + 3 * b.Lcubed(P), pts)
    assert dec.rank == 4
    assert dec.coefficients["F1"] == pytest.approx(2)
    assert dec.coefficients["LH"] == pytest.approx(-0.5)
    assert dec.coefficients["Lcubed"] == pytest.approx(3)
    assert dec.relative_residual < 1e-10


def test_metadata_and_table(sin_profile):
    b = build_basis(sin_profile)
    meta = b.metadata()
    assert meta["case"] == "i" and meta["constants"]["F1"] == {"C_plus": 1.0, "C_minus": 0.0}
    lines = b.coefficient_table([0.0, 0.5]).splitlines()
    assert lines[0] == "x,a0,a1,a2,a3" and len(lines) == 3
