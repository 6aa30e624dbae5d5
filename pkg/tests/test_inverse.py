import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from steplike.inverse import (
    UNDETERMINED,
    BoundaryTrace,
    FactorCollision,
    FactorizationParams,
    PhaseAmbiguity,
    f_from_forward,
    fit_factorization,
    modulus_from_f,
    normalization_case_analysis,
    product_error_vs_truncation,
    recover_R_minus_on_boundary,
    report_to_json,
    resonance_only_params,
    truncated_product_R2,
)
from steplike.potential import BumpPerturbation, PiecewiseConstantPotential, SmoothPerturbationPotential
from steplike.resonances import locate_in_disk
from steplike.riemann import SheetPoints, SheetSignature, StepLevels, PHYSICAL

LV1 = StepLevels(0.0, 1.0)
LV4 = StepLevels(0.0, 4.0)
STEP = PiecewiseConstantPotential.step(LV1, 0.0)
BARRIER = PiecewiseConstantPotential(LV4, (0.0, 1.0), (8.0,))


def random_three_layer(seed):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-2, 2, 4))
    return PiecewiseConstantPotential(LV4, tuple(x), tuple(rng.uniform(-5, 10, 3)))


@pytest.fixture(scope="module")
def barrier_resonances():
    out = []
    for s in ("mm", "mp", "pm"):
        out += locate_in_disk(BARRIER, SheetSignature.from_name(s), 20.0**2 + 4).resonances
    return out


def test_modulus_examples():
    assert modulus_from_f(0.0) == 1.0
    assert modulus_from_f(1.5) == pytest.approx(0.5, abs=1e-15)
    assert modulus_from_f(np.inf) == 0.0
    with pytest.raises(ValueError):
        modulus_from_f(-0.1)


def test_modulus_inverse_relation():
    f = np.random.default_rng(0).uniform(0, 1e3, 100)
    rho = modulus_from_f(f)
    assert np.all((rho > 0) & (rho <= 1))
    np.testing.assert_allclose(1 / rho - rho, f, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(rho * (rho + f), 1.0, rtol=1e-12)


@given(st.floats(0, 1e6), st.floats(1e-6, 1e3))
def test_modulus_strictly_decreasing(f, df):
    assert modulus_from_f(f + df) < modulus_from_f(f)


def test_f_on_pure_step():
    tr = BoundaryTrace.from_forward(STEP, [2.0])
    f, poles = f_from_forward(tr)
    assert not poles.any()
    assert f[0] == pytest.approx(5.656854, abs=1e-6)
    assert modulus_from_f(f[0]) == pytest.approx(0.171573, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_modulus_round_trip_random_layers(seed):
    V = random_three_layer(seed)
    tr = BoundaryTrace.from_forward(V, np.linspace(4.1, 80, 200))
    assert tr.conjugation_residual() <= 1e-10
    f, _ = f_from_forward(tr)
    np.testing.assert_allclose(modulus_from_f(f), np.abs(tr.r_minus_coeff), atol=1e-10)


def test_f_pole_at_reflection_zero():
    tr = BoundaryTrace.from_forward(BARRIER, [5.0, 6.0])
    f, poles = f_from_forward(tr, zero_tol=np.inf)
    assert poles.all() and np.all(modulus_from_f(f) == 0)


def test_recovery_round_trip():
    z = np.linspace(1.5, 100, 300)
    rep = recover_R_minus_on_boundary(STEP, z)
    assert rep.max_abs_error <= 1e-12
    rep = recover_R_minus_on_boundary(BARRIER, np.linspace(5, 104, 600))
    assert rep.max_abs_error <= 1e-10 and rep.conjugation_residual <= 1e-10


def test_recovered_modulus_translation_invariant():
    z = np.linspace(5, 60, 200)
    a = recover_R_minus_on_boundary(BARRIER, z)
    b = recover_R_minus_on_boundary(BARRIER.translated(1.7), z)
    ma = np.abs(np.array(a.recovered) @ [1, 1j])
    mb = np.abs(np.array(b.recovered) @ [1, 1j])
    np.testing.assert_allclose(ma, mb, atol=1e-12)


def test_phase_ambiguity_on_coarse_grid():
    z = np.array([5.0, 6.0, 7.0])
    with pytest.raises(PhaseAmbiguity):
        recover_R_minus_on_boundary(BARRIER, z, t_product=lambda pts: 0.5 * np.exp(3j * pts.z.real))


def test_step_product_constants():
    p = fit_factorization(STEP, [])
    assert p.gamma_1 == pytest.approx(1, abs=1e-12) and p.delta_1 == pytest.approx(0, abs=1e-12)


def test_product_invariant_under_reordering(barrier_resonances):
    p = FactorizationParams(1.0, -4j)
    pts = SheetPoints.on_sheet(np.linspace(5, 20, 7) + 0j, PHYSICAL, LV4, side=1)
    a = truncated_product_R2(barrier_resonances, p, pts)
    shuffled = list(barrier_resonances)
    np.random.default_rng(1).shuffle(shuffled)
    np.testing.assert_allclose(truncated_product_R2(shuffled, p, pts), a, rtol=1e-12)


def test_product_collision(barrier_resonances):
    r = barrier_resonances[0]
    with pytest.raises(FactorCollision):
        truncated_product_R2(barrier_resonances, FactorizationParams(), np.array([r.r_plus]))


def test_product_error_decreases_with_truncation(barrier_resonances):
    rep = product_error_vs_truncation(BARRIER, barrier_resonances, [5, 10, 20])
    assert rep.decreasing
    assert complex(*rep.params[-1]["gamma_1"]) == pytest.approx(1, abs=0.05)
    # the truncated tail is absorbed into delta_1, which tends to -4i L as K grows
    d = [abs(complex(*p["delta_1"]) + 4j) for p in rep.params]
    assert d == sorted(d, reverse=True) and d[-1] < 0.5


def test_resonance_only_constants():
    p = resonance_only_params(1.0, False)
    assert (p.gamma_1, p.delta_1, p.alpha_plus) == (1.0, -4j, 1)
    assert resonance_only_params(2.0, True).gamma_1 == -1.0
    with pytest.raises(ValueError):
        FactorizationParams(alpha_plus=2)


def test_case_branch_resonance():
    V = PiecewiseConstantPotential(LV1, (0.0, math.pi / (6 * math.sqrt(3))), (-3.0,))
    rep = normalization_case_analysis(V)
    assert rep.case == "a"
    assert complex(*rep.constants["branch_limit"]) == pytest.approx(2, abs=1e-5)
    assert rep.details["branch_limit_partner"][0] == pytest.approx(-2, abs=1e-5)


def test_case_undetermined_barrier():
    rep = normalization_case_analysis(BARRIER)
    assert rep.case is None and rep.message == UNDETERMINED
    assert rep.details["threshold_transmission_ratio"][0] < 0
    assert json.loads(report_to_json(rep))["message"] == UNDETERMINED


def test_case_three_values():
    bad = normalization_case_analysis(PiecewiseConstantPotential(LV4, (0.0, 1.0), (5.0,)))
    assert "criterion_c" in bad.details and "c" not in bad.applicable
    good = normalization_case_analysis(PiecewiseConstantPotential(LV4, (0.0, 1.0), (2.0,)))
    assert good.case == "c" and good.constants["threshold_transmission_ratio"] > 0


def test_case_continuous_perturbation():
    V = SmoothPerturbationPotential(LV4, 0.0, BumpPerturbation(4.0, 1.0))
    rep = normalization_case_analysis(V)
    assert "b" in rep.applicable
    assert rep.constants["large_k_multiple"] == pytest.approx(1.0, rel=0.01)
