"""The eleven acceptance criteria, each at its stated tolerance.

Every test prints one ``AC<n> PASS|FAIL`` line (visible with ``pytest -s`` or
``-v``) before asserting.
"""
import math
import time

import numpy as np
import pytest

from oracles import brute_force_resonances
from steplike.asymptotics import (
    carleman_sum,
    counting_function,
    indicator_estimate,
    predicted_slope,
    step_reflection_asymptotics_check,
    t_decay_check,
)
from steplike.inverse import BoundaryTrace, f_from_forward, modulus_from_f, product_error_vs_truncation
from steplike.potential import BumpPerturbation, PiecewiseConstantPotential, SmoothPerturbationPotential
from steplike.resonances import coefficient_pole_check, locate_in_disk
from steplike.riemann import SHEETS, SheetPoints, SheetSignature, StepLevels
from steplike.scattering import identity_residuals

LV = StepLevels(0.0, 4.0)
BARRIER = PiecewiseConstantPotential(LV, (0.0, 1.0), (8.0,))
TWO_LAYER = PiecewiseConstantPotential(LV, (0.0, 1.0, 2.0), (6.0, -2.0))
UNPHYSICAL = ("mm", "mp", "pm")
K_MAX = 80.0


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nAC{n} {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture(scope="module")
def barrier_resonances():
    radius = K_MAX**2 * 1.01
    out = {}
    for s in UNPHYSICAL:
        res = locate_in_disk(BARRIER, SheetSignature.from_name(s), radius)
        assert res.is_complete and not res.unresolved
        out[s] = res.resonances
    return out


@pytest.fixture(scope="module")
def two_layer_resonances():
    R = 1200.0
    return R, {s: [r for r in locate_in_disk(TWO_LAYER, SheetSignature.from_name(s), R).resonances
                   if abs(r.z) <= R] for s in UNPHYSICAL}


def test_ac1_identity_suite(capsys):
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 6))
        x = np.sort(rng.uniform(-2, 2, n))
        V = PiecewiseConstantPotential(LV, tuple(x), tuple(rng.uniform(-10, 15, n - 1)))
        for s in SHEETS:
            z = rng.uniform(-100, 100, 50) + 1j * rng.uniform(-100, 100, 50)
            res = identity_residuals(V, SheetPoints.on_sheet(z, s, LV), engine="transfer")
            worst = max(worst, max(float(np.nanmax(v)) for v in res.values()))
    dt = time.time() - t0
    ok = worst <= 1e-9 and dt < 60
    report(capsys, 1, ok, f"max identity residual {worst:.2e} (<= 1e-9), {dt:.1f}s (< 60s)")
    assert ok


def test_ac2_pure_step_null(capsys):
    t0 = time.time()
    V = PiecewiseConstantPotential.step(LV, 0.0)
    totals = {s.name: locate_in_disk(V, s, 1e4).total for s in SHEETS}
    dt = time.time() - t0
    ok = all(v == 0 for v in totals.values()) and dt < 60
    report(capsys, 2, ok, f"winding counts {totals} for |z| <= 1e4, {dt:.1f}s (< 60s)")
    assert ok


def test_ac3_barrier_slope(capsys, barrier_resonances):
    pred = predicted_slope("hull", BARRIER)
    rep = counting_function(barrier_resonances["mm"], "mm", certified_radius=60.0, predicted=pred)
    ok = rep.relative_error <= 0.10
    report(capsys, 3, ok, f"(-,-) slope {rep.fitted_slope:.4f} vs 2/pi {pred:.4f}, rel err {rep.relative_error:.3f}")
    assert ok


@pytest.fixture(scope="module")
def beta_slopes():
    out = {}
    for beta in (-0.5, 0.0, 0.5):
        V = SmoothPerturbationPotential(LV, beta, BumpPerturbation(4.0, 1.0))
        for s in ("mp", "pm"):
            res = locate_in_disk(V, SheetSignature.from_name(s), 60.0**2, engine="ode")
            assert res.is_complete and not res.unresolved
            out[beta, s] = counting_function(res.resonances, s, certified_radius=60.0).fitted_slope
    return out


def test_ac4_beta_dependence(capsys, beta_slopes):
    errs = []
    for (beta, s), slope in beta_slopes.items():
        pred = predicted_slope(s, b_1=1.0, beta=beta)
        errs.append(abs(slope - pred) / pred)
    diffs = []
    betas = (-0.5, 0.0, 0.5)
    for b0, b1 in zip(betas, betas[1:]):
        d = b1 - b0
        for s, sign in (("mp", -1), ("pm", 1)):
            pred = sign * 2 * d / math.pi
            diffs.append(abs((beta_slopes[b1, s] - beta_slopes[b0, s]) - pred) / abs(pred))
    ok = max(errs) <= 0.15 and max(diffs) <= 0.15
    table = ", ".join(f"{s}@{b:+.1f}={v:.3f}" for (b, s), v in beta_slopes.items())
    report(capsys, 4, ok, f"{table}; max slope err {max(errs):.3f}, max difference err {max(diffs):.3f} (<= 0.15)")
    assert ok


def test_ac5_two_sheet_sum(capsys, barrier_resonances):
    pred = predicted_slope("hull", BARRIER)
    both = barrier_resonances["mp"] + barrier_resonances["pm"]
    rep = counting_function(both, ["mp", "pm"], certified_radius=60.0, predicted=pred)
    ok = rep.relative_error <= 0.10
    report(capsys, 5, ok, f"(-,+)+(+,-) slope {rep.fitted_slope:.4f} vs {pred:.4f}, rel err {rep.relative_error:.3f}")
    assert ok


def test_ac6_decay_and_indicator(capsys):
    decay = [t_decay_check(BARRIER, which=w) for w in ("T_minus", "T_plus")]
    centred = BARRIER.translated(-0.5)
    phis = (math.pi / 6, math.pi / 3, math.pi / 2, 2 * math.pi / 3)
    h = {phi: indicator_estimate(centred, phi).h for phi in phis}
    ratio = [h[phi] / math.sin(phi) for phi in phis]
    spread = max(ratio) / min(ratio) - 1
    h_err = abs(h[math.pi / 2] - 1.0)
    ok = all(d.slope <= -0.9 for d in decay) and h_err <= 0.10 and spread <= 0.15
    report(capsys, 6, ok, f"decay slopes {[round(d.slope, 3) for d in decay]} (<= -0.9); "
                          f"h(pi/2) {h[math.pi / 2]:.3f} vs 1 ({h_err:.3f} <= 0.1); h/sin spread {spread:.3f} (<= 0.15)")
    assert ok


def test_ac7_zeros_are_poles(capsys, two_layer_resonances):
    _, res = two_layer_resonances
    counts = {s: len(v) for s, v in res.items()}
    matches = coefficient_pole_check(TWO_LAYER, [r for v in res.values() for r in v])
    dist = max(m.distance for m in matches)
    ok = min(counts.values()) >= 20 and all(m.matched for m in matches) and dist <= 1e-8 and all(
        m.multiplicity_wronskian == m.multiplicity_coefficient for m in matches)
    report(capsys, 7, ok, f"counts {counts}; {len(matches)} zeros matched to poles, max distance {dist:.1e} (<= 1e-8)")
    assert ok


def test_ac8_reflection_asymptotics(capsys):
    V = SmoothPerturbationPotential(LV, 0.0, BumpPerturbation(4.0, 1.0))
    rep = step_reflection_asymptotics_check(V)
    zero = step_reflection_asymptotics_check(SmoothPerturbationPotential(LV, 0.0, BumpPerturbation(0.0, 1.0)))
    ok = rep.passed and zero.exact_zero and max(zero.scaled_difference) == 0.0
    report(capsys, 8, ok, f"block maxima of k^2|R_- - step| {[round(e, 4) for e in rep.envelope]}; p = 0 exact zero")
    assert ok


def test_ac9_modulus_round_trip(capsys):
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(5):
        x = np.sort(rng.uniform(-2, 2, 4))
        V = PiecewiseConstantPotential(LV, tuple(x), tuple(rng.uniform(-5, 10, 3)))
        tr = BoundaryTrace.from_forward(V, np.linspace(4.05, 104, 500))
        f, _ = f_from_forward(tr)
        worst = max(worst, float(np.max(np.abs(modulus_from_f(f) - np.abs(tr.r_minus_coeff)))))
    fs = rng.uniform(0, 1e3, 100)
    rho = modulus_from_f(fs)
    alg = float(max(np.max(np.abs(1 / rho - rho - fs) / np.maximum(1, fs)), np.max(np.abs(rho * (rho + fs) - 1))))
    ok = worst <= 1e-10 and alg <= 1e-12
    report(capsys, 9, ok, f"|R_-| recovery error {worst:.1e} (<= 1e-10); rho identities {alg:.1e} (<= 1e-12)")
    assert ok


def test_ac10_truncated_product(capsys, barrier_resonances):
    allres = [r for v in barrier_resonances.values() for r in v]
    Ks = [10.0, 20.0, 40.0, 80.0]
    prod = product_error_vs_truncation(BARRIER, allres, Ks)
    carl = carleman_sum(allres, Ks)
    ok = prod.decreasing and carl.increments_decrease
    report(capsys, 10, ok, f"product errors {[f'{e:.1e}' for e in prod.errors]} for K={Ks}; "
                           f"Carleman sums {[round(s, 3) for s in carl.partial_sums]}")
    assert ok


def test_ac11_independent_oracle(capsys, two_layer_resonances):
    R, res = two_layer_resonances
    oracle = brute_force_resonances(TWO_LAYER.breakpoints, TWO_LAYER.values, LV.v_plus, LV.v_minus, R)
    worst, counts_ok = 0.0, True
    for s in UNPHYSICAL:
        got, ref = [r.z for r in res[s]], oracle[s]
        counts_ok &= len(got) == len(ref)
        if got and ref:
            worst = max(worst, max(min(abs(z - w) for w in ref) for z in got),
                        max(min(abs(z - w) for w in got) for z in ref))
    ok = counts_ok and worst <= 1e-8
    counts = {s: (len(res[s]), len(oracle[s])) for s in UNPHYSICAL}
    report(capsys, 11, ok, f"(located, oracle) counts {counts}; max distance {worst:.1e} (<= 1e-8)")
    assert ok
