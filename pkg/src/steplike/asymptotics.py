"""Asymptotic checks: resonance counting functions, indicators and decay laws.

All fits are least squares on explicit sample tables, which the reports carry
so that they can be re-plotted or re-fitted elsewhere.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ._serial import dumps
from .potential import SmoothPerturbationPotential, support_hull
from .riemann import SheetPoints, SheetSignature, StepLevels
from .scattering import DEFAULT_RTOL, coefficient_arrays, log_coefficients

__all__ = [
    "CountingReport",
    "IndicatorEstimate",
    "DecayReport",
    "ReflectionAsymptoticsReport",
    "CarlemanReport",
    "geometric_r_grid",
    "fit_slope",
    "sheet_predicate",
    "predicted_slope",
    "counting_function",
    "indicator_estimate",
    "t_decay_check",
    "step_reflection_asymptotics_check",
    "carleman_sum",
    "report_to_json",
]

log = logging.getLogger(__name__)


# ----------------------------------------------------------------------------
# Counting
# ----------------------------------------------------------------------------


@dataclass
class CountingReport:
    """Counting function samples ``(r, N(r))`` with a linear fit on the upper half of the r-range."""

    predicate: str
    samples: list
    fitted_slope: float
    intercept: float
    predicted_slope: Optional[float]
    relative_error: Optional[float]
    fit_range: tuple
    certified_radius: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def geometric_r_grid(r_max: float, r_min: Optional[float] = None, ratio: float = 1.15) -> np.ndarray:
    """``r_max / ratio**j`` down to ``r_min`` (default ``r_max / 20``), ascending."""
    r_min = r_max / 20 if r_min is None else r_min
    rs = [float(r_max)]
    while rs[-1] / ratio >= r_min:
        rs.append(rs[-1] / ratio)
    return np.array(rs[::-1])


def fit_slope(r, n, lower_fraction: float = 0.5):
    """Least-squares line ``N = slope r + c`` over ``r >= lower_fraction * max(r)``."""
    r = np.asarray(r, dtype=float)
    n = np.asarray(n, dtype=float)
    m = r >= lower_fraction * r.max()
    if m.sum() < 2:
        raise ValueError("need at least two samples in the fit range")
    A = np.vstack([r[m], np.ones(m.sum())]).T
    (slope, c), *_ = np.linalg.lstsq(A, n[m], rcond=None)
    return float(slope), float(c), (float(r[m].min()), float(r[m].max()))


def sheet_predicate(spec: Union[str, Sequence[str], Callable]) -> tuple:
    """Turn ``"mm"``, ``["mp", "pm"]`` or a callable into ``(description, callable)``.

    Sheet predicates compare with the resonance's sheet signature; resonances
    flagged ``boundary`` (real-axis zeros) are included when the sheet matches.
    """
    if callable(spec):
        return getattr(spec, "__name__", "custom"), spec
    names = [spec] if isinstance(spec, str) else list(spec)
    sheets = {SheetSignature.from_name(n) for n in names}
    desc = "+".join(s.name for s in sorted(sheets, key=lambda s: s.name))
    return desc, (lambda r: r.sheet in sheets)


def predicted_slope(kind: str, V=None, hull=None, b_1: Optional[float] = None, beta: Optional[float] = None) -> float:
    """Leading constant of the counting function.

    ``kind``:

    * ``"hull"`` -- ``2 (b - a) / pi`` for sheet ``(-,-)`` and for the two-sheet sum;
    * ``"mp"`` -- ``2 (b_1 - beta) / pi`` for sheet ``(-,+)``;
    * ``"pm"`` -- ``2 (b_1 + beta) / pi`` for sheet ``(+,-)``.
    """
    if kind == "hull":
        h = hull if hull is not None else support_hull(V)
        return 2.0 * h.length / math.pi
    if V is not None and isinstance(V, SmoothPerturbationPotential):
        b_1 = V.b_1 if b_1 is None else b_1
        beta = V.beta if beta is None else beta
    if b_1 is None or beta is None:
        raise ValueError("b_1 and beta are required for the per-sheet predictions")
    if kind == "mp":
        return 2.0 * (b_1 - beta) / math.pi
    if kind == "pm":
        return 2.0 * (b_1 + beta) / math.pi
    raise ValueError(f"unknown prediction kind {kind!r}")


def counting_function(
    resonances,
    predicate,
    r_grid=None,
    certified_radius: Optional[float] = None,
    predicted: Optional[float] = None,
    r_max: Optional[float] = None,
) -> CountingReport:
    """``N(r) = #{z_j : |z_j| <= r^2, predicate(z_j)}`` counted with multiplicity.

    Parameters
    ----------
    resonances : iterable of Resonance
    predicate : str, list of str or callable
        Sheet selection, see :func:`sheet_predicate`.
    r_grid : array, optional
        Radii; defaults to :func:`geometric_r_grid` of ``r_max``.
    certified_radius : float, optional
        Largest ``r`` for which the list is known to be complete; larger radii
        are refused.
    predicted : float, optional
        Slope to compare against.
    """
    desc, pred = sheet_predicate(predicate)
    if r_grid is None:
        if r_max is None:
            r_max = certified_radius
        if r_max is None:
            raise ValueError("give r_grid, r_max or certified_radius")
        r_grid = geometric_r_grid(r_max)
    r_grid = np.asarray(r_grid, dtype=float)
    if certified_radius is not None and r_grid.max() > certified_radius * (1 + 1e-12):
        raise ValueError(
            f"r={r_grid.max():g} exceeds the certified search radius {certified_radius:g}"
        )
    absz = np.array([abs(r.z) for r in resonances if pred(r)], dtype=float)
    mult = np.array([r.multiplicity for r in resonances if pred(r)], dtype=float)
    counts = np.array([float(mult[absz <= r * r].sum()) if absz.size else 0.0 for r in r_grid])
    slope, c, rng = fit_slope(r_grid, counts)
    rel = None
    if predicted is not None:
        rel = abs(slope - predicted) / abs(predicted) if predicted != 0 else abs(slope)
    samples = [[float(r), int(n)] for r, n in zip(r_grid, counts)]
    return CountingReport(desc, samples, slope, c, predicted, rel, rng, certified_radius)


# ----------------------------------------------------------------------------
# Indicator
# ----------------------------------------------------------------------------


@dataclass
class IndicatorEstimate:
    """Samples of ``log|F(r e^{i phi})| / r`` and their top-decade median ``h``."""

    phi: float
    target: str
    radii: list
    samples: list
    h: float
    nudged: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


_TARGET_KEYS = {
    "R_minus": "log_r_minus",
    "R_plus": "log_r_plus",
    "T_minus": "log_t_minus",
    "T_plus": "log_t_plus",
}


def indicator_estimate(V, phi: float, radii=None, target: str = "R_minus", engine: str = "auto",
                       rtol: float = DEFAULT_RTOL) -> IndicatorEstimate:
    """Directional growth of a coefficient along ``k = r e^{i phi}``, ``k = r_+``.

    ``target`` is one of ``R_minus``, ``R_plus``, ``T_minus``, ``T_plus`` or
    ``"R_minus*R_plus"`` (sum of logs).  Points where the coefficient has a pole
    are nudged to a slightly larger radius.
    """
    if not 0 < phi < math.pi:
        raise ValueError("phi must lie in (0, pi)")
    radii = np.geomspace(10, 1000, 41) if radii is None else np.asarray(radii, dtype=float)
    if radii.min() < 10 or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be increasing and >= 10")
    keys = [_TARGET_KEYS[t] for t in target.split("*")]
    r = radii.copy()
    nudged = 0
    for _ in range(5):
        pts = SheetPoints.from_k(r * np.exp(1j * phi), V.levels)
        lc = log_coefficients(V, pts, engine, rtol)
        vals = sum(lc[k] for k in keys).real
        bad = ~np.isfinite(vals)
        if not bad.any():
            break
        r = np.where(bad, r * (1 + 1e-6), r)
        nudged += int(bad.sum())
    samples = vals / r
    top = r >= r.max() / 10
    h = float(np.median(samples[top]))
    return IndicatorEstimate(float(phi), target, r.tolist(), samples.tolist(), h, nudged)


# ----------------------------------------------------------------------------
# Decay laws on the boundary of the physical sheet
# ----------------------------------------------------------------------------


@dataclass
class DecayReport:
    """Fitted exponent of ``|T - 1|`` against ``|k|`` on the real k axis."""

    which: str
    k: list
    values: list
    slope: float
    threshold: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def t_decay_check(V, k_grid=None, which: str = "T_minus", threshold: float = -0.9, engine: str = "auto",
                  rtol: float = DEFAULT_RTOL, via_identity: bool = False) -> DecayReport:
    """Log-log slope of ``|T(z(k)) - 1|`` for real ``k``; passes iff slope <= threshold.

    With ``via_identity`` ``T_+`` is obtained as ``r_- T_- / r_+``.
    """
    k = np.geomspace(10, 1000, 60) if k_grid is None else np.asarray(k_grid, dtype=float)
    pts = SheetPoints.from_k(k + 0j, V.levels)
    arr = coefficient_arrays(V, pts, engine, rtol)
    if which == "T_minus":
        t = arr.t_minus
    elif which == "T_plus":
        t = pts.r_minus * arr.t_minus / pts.r_plus if via_identity else arr.t_plus
    else:
        raise ValueError("which must be T_minus or T_plus")
    y = np.abs(t - 1)
    slope = float(np.polyfit(np.log(np.abs(k)), np.log(y), 1)[0])
    return DecayReport(which, k.tolist(), y.tolist(), slope, threshold, slope <= threshold)


@dataclass
class ReflectionAsymptoticsReport:
    """``k^2 |R - R_step|`` samples and a block-maximum envelope test."""

    which: str
    with_phase: bool
    k: list
    scaled_difference: list
    envelope: list
    passed: bool
    exact_zero: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _envelope_decreasing(k, y, n_blocks: int, ratio: float):
    edges = np.geomspace(k.min(), k.max(), n_blocks + 1)
    env = []
    for a, b in zip(edges[:-1], edges[1:]):
        m = (k >= a) & (k <= b)
        env.append(float(np.max(y[m])))
    ok = all(b < a for a, b in zip(env, env[1:])) and env[-1] <= ratio * env[0]
    return env, ok


def step_reflection_asymptotics_check(
    V: SmoothPerturbationPotential,
    k_grid=None,
    which: str = "R_minus",
    with_phase: bool = True,
    n_blocks: int = 4,
    ratio: float = 0.5,
    engine: str = "auto",
    rtol: float = 1e-12,
) -> ReflectionAsymptoticsReport:
    """Compare ``R_-`` (or ``R_+``) on the real k axis with the step formula.

    ``k^2 |R_-(z(k)) - ((k - r_-)/(k + r_-)) e^{-2ik beta}|`` should tend to 0.
    The test passes when the maxima over ``n_blocks`` geometric blocks of the
    k-range decrease strictly and the last is at most ``ratio`` times the
    first.  ``with_phase=False`` drops the ``e^{-2ik beta}`` factor (ablation).
    """
    k = np.linspace(20, 200, 721) if k_grid is None else np.asarray(k_grid, dtype=float)
    pts = SheetPoints.from_k(k + 0j, V.levels)
    rm = pts.r_minus
    beta = V.beta
    if isinstance(V, SmoothPerturbationPotential) and V.p.is_zero:
        return ReflectionAsymptoticsReport(which, with_phase, k.tolist(), [0.0] * k.size, [0.0] * n_blocks,
                                           True, True)
    arr = coefficient_arrays(V, pts, engine, rtol)
    if which == "R_minus":
        ref = (k - rm) / (k + rm) * (np.exp(-2j * k * beta) if with_phase else 1.0)
        got = arr.r_minus_coeff
    elif which == "R_plus":
        ref = (rm - k) / (rm + k) * (np.exp(2j * rm * beta) if with_phase else 1.0)
        got = arr.r_plus_coeff
    else:
        raise ValueError("which must be R_minus or R_plus")
    y = k**2 * np.abs(got - ref)
    env, ok = _envelope_decreasing(k, y, n_blocks, ratio)
    return ReflectionAsymptoticsReport(which, with_phase, k.tolist(), y.tolist(), env, ok)


# ----------------------------------------------------------------------------
# Carleman sums
# ----------------------------------------------------------------------------


@dataclass
class CarlemanReport:
    """Partial sums ``S(R) = sum |Im r_+(z_j)| / |r_+(z_j)|^2`` over ``|z_j| <= R^2``."""

    radii: list
    partial_sums: list
    increments: list
    excluded: int = 0

    @property
    def increments_decrease(self) -> bool:
        inc = self.increments[1:]
        return all(b < a for a, b in zip(inc, inc[1:]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["increments_decrease"] = self.increments_decrease
        return d


def carleman_sum(resonances, radii, levels: Optional[StepLevels] = None, eps: float = 0.0) -> CarlemanReport:
    """Partial Carleman sums; terms with ``|r_+(z_j)| <= eps`` are excluded (reported)."""
    radii = np.asarray(radii, dtype=float)
    terms, absz = [], []
    excluded = 0
    for r in resonances:
        rp = r.r_plus
        if abs(rp) <= eps or rp == 0:
            excluded += 1
            continue
        terms.append(r.multiplicity * abs(rp.imag) / abs(rp) ** 2)
        absz.append(abs(r.z))
    terms, absz = np.array(terms), np.array(absz)
    sums = [float(terms[absz <= R * R].sum()) if terms.size else 0.0 for R in radii]
    inc = [sums[0]] + [b - a for a, b in zip(sums, sums[1:])]
    return CarlemanReport(radii.tolist(), sums, inc, excluded)


def report_to_json(report, path=None) -> str:
    """Serialise any report dataclass (``to_dict``) as JSON."""
    doc = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    text = dumps(doc)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text

