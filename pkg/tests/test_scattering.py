import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import coefficients as mp_coefficients
from steplike.potential import BumpPerturbation, PiecewiseConstantPotential, SmoothPerturbationPotential
from steplike.riemann import PHYSICAL, SHEETS, SheetPoints, SheetSignature, StepLevels, SurfacePoint
from steplike.scattering import (
    IDENTITY_NAMES,
    BranchPoint,
    PoleAtPoint,
    branch_limit,
    check_identities,
    coefficient_arrays,
    identity_residuals,
    log_coefficients,
    log_wronskian,
    scattering_coefficients,
    step_coefficient_arrays,
    step_reference,
    wronskian_drift,
)

LV = StepLevels(0.0, 1.0)
LV4 = StepLevels(0.0, 4.0)
BARRIER = PiecewiseConstantPotential(LV4, (0.0, 1.0), (8.0,))
THREE = PiecewiseConstantPotential(LV4, (-0.5, 0.2, 0.7, 1.5), (6.0, -3.0, 2.5))
BUMP = SmoothPerturbationPotential(LV4, 0.3, BumpPerturbation(4.0, 1.0))


def _sample_points(levels, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.uniform(-20, 40, 24) + 1j * rng.uniform(-15, 15, 24)
    return [SheetPoints.on_sheet(z, s, levels) for s in SHEETS]


def test_step_values_above_both_levels():
    c = step_reference(0.0, SurfacePoint(2.0, PHYSICAL, 1), LV)
    assert c.t_minus == pytest.approx(1.171573, abs=1e-6)
    assert c.t_plus == pytest.approx(0.828427, abs=1e-6)
    assert c.r_minus_coeff == pytest.approx(0.171573, abs=1e-6)
    assert c.r_plus_coeff == pytest.approx(-0.171573, abs=1e-6)


def test_step_total_reflection_between_levels():
    c = step_reference(0.0, SurfacePoint(0.5, PHYSICAL, 1), LV)
    assert c.r_minus_coeff == pytest.approx(-1j, abs=1e-15)
    assert abs(c.r_minus_coeff) == pytest.approx(1.0)


def test_step_engine_matches_closed_form():
    V = PiecewiseConstantPotential.step(LV4, 0.4)
    for pts in _sample_points(LV4):
        got = coefficient_arrays(V, pts)
        ref = step_coefficient_arrays(0.4, pts)
        for name in ("t_minus", "t_plus", "r_minus_coeff", "r_plus_coeff"):
            np.testing.assert_allclose(getattr(got, name), getattr(ref, name), rtol=1e-12)


@pytest.mark.parametrize("V", [BARRIER, THREE], ids=["barrier", "three-layer"])
def test_transfer_engine_matches_high_precision_oracle(V):
    for pts in _sample_points(V.levels, seed=1):
        got = coefficient_arrays(V, pts)
        for i in range(0, len(pts), 3):
            ref = mp_coefficients(V.breakpoints, V.values, pts.z[i], pts.r_plus[i], pts.r_minus[i])
            vals = (got.t_minus[i], got.t_plus[i], got.r_minus_coeff[i], got.r_plus_coeff[i], got.wronskian_d[i])
            for a, b in zip(vals, ref):
                assert abs(a - b) <= 1e-10 * max(1.0, abs(b))


def test_ode_engine_agrees_with_transfer_engine():
    for pts in _sample_points(LV4, seed=2)[:2]:
        a = coefficient_arrays(THREE, pts, "transfer")
        b = coefficient_arrays(THREE, pts, "ode", rtol=1e-12)
        np.testing.assert_allclose(b.r_minus_coeff, a.r_minus_coeff, rtol=1e-7, atol=1e-9)
        np.testing.assert_allclose(b.t_minus, a.t_minus, rtol=1e-7, atol=1e-9)


def test_large_modulus_stays_finite():
    z = np.array([1e6 + 0j, 1e6 + 1e3j, -1e6 + 10j])
    for s in SHEETS:
        logs = log_coefficients(BARRIER, SheetPoints.on_sheet(z, s, LV4, side=1))
        for v in logs.values():
            assert np.all(np.isfinite(v))
    arr = coefficient_arrays(BARRIER, SheetPoints.on_sheet(np.array([1e6]), PHYSICAL, LV4, side=1))
    assert abs(arr.r_minus_coeff[0]) < 1e-5
    assert abs(abs(arr.t_minus[0]) - 1) < 1e-5


@pytest.mark.parametrize("V", [BARRIER, THREE], ids=["barrier", "three-layer"])
def test_identities_on_all_sheets(V):
    for pts in _sample_points(V.levels, seed=4):
        res = identity_residuals(V, pts)
        assert set(res) == set(IDENTITY_NAMES)
        for k, v in res.items():
            assert np.nanmax(v) < 1e-9, k


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(-3, 3), min_size=2, max_size=5, unique=True),
    st.lists(st.floats(-10, 10), min_size=4, max_size=4),
    st.floats(-30, 30),
    st.floats(-10, 10),
    st.sampled_from(SHEETS),
)
def test_identities_property(xs, vals, x, y, sheet):
    xs = sorted(xs)
    V = PiecewiseConstantPotential(LV4, tuple(xs), tuple(vals[: len(xs) - 1]))
    if y == 0 or x in (0.0, 4.0):
        y = 0.5
    rep = check_identities(V, SurfacePoint(complex(x, y), sheet))
    assert rep.max_residual < 1e-8


def test_identities_smooth_perturbation():
    rep = check_identities(BUMP, SurfacePoint(complex(7, 2), SheetSignature(-1, 1)), rtol=1e-12)
    assert rep.max_residual < 1e-7


def test_conjugation_symmetry():
    for pts in _sample_points(LV4, seed=5):
        a = coefficient_arrays(THREE, pts)
        b = coefficient_arrays(THREE, pts.conjugate())
        np.testing.assert_allclose(b.t_minus, np.conj(a.t_minus), rtol=1e-11)
        np.testing.assert_allclose(b.r_plus_coeff, np.conj(a.r_plus_coeff), rtol=1e-11, atol=1e-13)


def test_wronskian_is_analytic_on_a_sheet():
    # mean value property of D on a circle avoiding the cut
    c, rad = 2.0 + 5.0j, 1.5
    th = np.linspace(0, 2 * np.pi, 256, endpoint=False)
    for s in SHEETS:
        ring = SheetPoints.on_sheet(c + rad * np.exp(1j * th), s, LV4)
        mean = np.mean(np.exp(log_wronskian(THREE, ring)))
        centre = np.exp(log_wronskian(THREE, SheetPoints.on_sheet(np.array([c]), s, LV4)))[0]
        assert abs(mean - centre) <= 1e-11 * max(1, abs(centre))


def test_pole_raises_with_multiplicity():
    from oracles import brute_force_resonances

    roots = brute_force_resonances(BARRIER.breakpoints, BARRIER.values, 0.0, 4.0, 200, kx=15, ky=5, nx=601, ny=201)
    z = roots["mm"][0]
    with pytest.raises(PoleAtPoint) as e:
        scattering_coefficients(BARRIER, SurfacePoint(z, SheetSignature(-1, -1)), multiplicity=True)
    assert e.value.multiplicity == 1


def test_branch_point_rejected_and_limit_finite():
    V = PiecewiseConstantPotential.step(LV, 0.0)
    with pytest.raises(BranchPoint):
        scattering_coefficients(V, SurfacePoint(0.0, PHYSICAL, 1))
    lim = branch_limit(V, "plus")
    # r_+ = 0: T_- = 0 and R_- = -1 for any potential of this class
    assert abs(lim.t_minus[0]) < 1e-8
    assert lim.r_minus_coeff[0] == pytest.approx(-1, abs=1e-8)
    assert branch_limit(BARRIER, "plus").r_minus_coeff[0] == pytest.approx(-1, abs=1e-7)


def test_ode_wronskian_drift_small():
    pts = SheetPoints.on_sheet(np.array([3.0 + 1j, 20.0 - 2j]), PHYSICAL, LV4)
    assert np.max(wronskian_drift(BUMP, pts, rtol=1e-12)) < 1e-8


def test_pure_step_identities_at_reference_point():
    V = PiecewiseConstantPotential.step(LV, 0.0)
    assert check_identities(V, SurfacePoint(2.0, PHYSICAL, 1)).max_residual <= 1e-12


def test_barrier_unitarity_on_boundary():
    rep = check_identities(BARRIER, SurfacePoint(20.0, PHYSICAL, 1))
    assert rep.residuals["unitarity_minus"] <= 1e-12


def test_ode_engine_zero_perturbation_is_step():
    V = SmoothPerturbationPotential(LV4, 0.3, BumpPerturbation(0.0, 1.0))
    pts = SheetPoints.on_sheet(np.array([2.0 + 1j, 9.0 - 3j, 30.0 + 0.5j]), SheetSignature(-1, 1), LV4)
    got = coefficient_arrays(V, pts, "ode", rtol=1e-10)
    ref = step_coefficient_arrays(0.3, pts)
    np.testing.assert_allclose(got.r_minus_coeff, ref.r_minus_coeff, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(got.t_plus, ref.t_plus, rtol=1e-9, atol=1e-9)


def test_regular_point_has_zero_winding():
    from steplike._argument import circle_winding

    p = SurfacePoint(3.0 - 2.0j, SheetSignature(-1, -1))
    assert circle_winding(lambda pts: log_wronskian(THREE, pts), p, LV4, radius=1e-3) == 0


def test_bound_state_is_a_pole():
    from steplike.resonances import eigenvalues

    V = PiecewiseConstantPotential(StepLevels(0.0, 1.0), (0.0, 1.0), (-5.0,))
    ev = eigenvalues(V)
    assert ev
    with pytest.raises(PoleAtPoint):
        scattering_coefficients(V, SurfacePoint(ev[0], PHYSICAL))
