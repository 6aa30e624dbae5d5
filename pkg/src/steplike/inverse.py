"""Inverse-side formulas validated by round trips against forward data.

On the boundary of the physical sheet above ``V_-`` the modulus of ``R_-`` is
recovered from ``f = |r_-/r_+| |T_- T_-(w-)|`` and its argument from the phase
of ``T_- T_-(w-)``.  Coefficient products are rebuilt from the resonance set as
truncated, conjugate-paired Weierstrass products.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._serial import dumps
from .potential import PiecewiseConstantPotential, SmoothPerturbationPotential
from .riemann import PHYSICAL, SheetPoints, StepLevels, SurfacePoint
from .scattering import DEFAULT_RTOL, branch_limit, coefficient_arrays

__all__ = [
    "FactorizationParams",
    "BoundaryTrace",
    "FactorCollision",
    "PhaseAmbiguity",
    "RecoveryReport",
    "ProductReport",
    "NormalizationReport",
    "modulus_from_f",
    "f_from_forward",
    "factor_roots",
    "truncated_product_R2",
    "truncated_product_T2",
    "fit_factorization",
    "resonance_only_params",
    "forward_R2",
    "forward_T2",
    "recover_R_minus_on_boundary",
    "product_error_vs_truncation",
    "branch_point_limit",
    "transmission_ratio_at_threshold",
    "normalization_case_analysis",
    "report_to_json",
]

log = logging.getLogger(__name__)

UNDETERMINED = "normalization undetermined: none of the three uniqueness criteria applies"


class FactorCollision(ArithmeticError):
    """The evaluation point coincides with a factor's zero or pole."""


class PhaseAmbiguity(ValueError):
    """Adjacent phase samples differ by more than the unwrapping limit."""

    def __init__(self, index: int, jump: float):
        super().__init__(f"phase jump {jump:.3g} rad between grid points {index} and {index + 1}; refine the grid")
        self.index = index
        self.jump = jump


@dataclass(frozen=True)
class FactorizationParams:
    """Constants of the product representations.

    ``R_- R_-(w-) = gamma_1 exp(delta_1 r_+) prod (r_j + r_+)/(r_j - r_+)`` and
    ``T_- T_-(w-) = gamma_2 exp(delta_2 r_+) r_+**(alpha_plus + 1) prod 1/(1 - r_+/r_j)``
    with ``r_j = r_+(z_j)``.  ``alpha_plus`` is 1 when no resonance lies over
    ``V_+`` and 0 otherwise; the extra power of ``r_+`` is there because both
    factors ``T_-`` and ``T_-(w-)`` vanish at a non-resonant threshold.
    """

    gamma_1: complex = 1.0
    delta_1: complex = 0.0
    gamma_2: Optional[complex] = None
    delta_2: Optional[complex] = None
    alpha_plus: int = 1

    def __post_init__(self):
        if self.alpha_plus not in (0, 1):
            raise ValueError("alpha_plus must be 0 or 1")


# ----------------------------------------------------------------------------
# Boundary traces and the modulus formula
# ----------------------------------------------------------------------------


@dataclass
class BoundaryTrace:
    """Forward values on the physical-sheet boundary with ``z > V_-``.

    ``*_pm`` are values at the image under ``w+-``, ``*_om`` under ``w-``.
    """

    z: np.ndarray
    r_plus: np.ndarray
    r_minus: np.ndarray
    t_minus: np.ndarray
    t_minus_pm: np.ndarray
    r_minus_coeff: np.ndarray
    r_minus_pm: np.ndarray
    t_minus_om: np.ndarray

    @classmethod
    def from_forward(cls, V, z, engine: str = "auto", rtol: float = DEFAULT_RTOL) -> "BoundaryTrace":
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if np.any(z <= V.levels.v_minus):
            raise ValueError("boundary trace needs z > V_-")
        pts = SheetPoints.on_sheet(z + 0j, PHYSICAL, V.levels, side=1)
        a = coefficient_arrays(V, pts, engine, rtol)
        b = coefficient_arrays(V, pts.omega_pm(), engine, rtol)
        c = coefficient_arrays(V, pts.omega_minus(), engine, rtol)
        return cls(z, pts.r_plus, pts.r_minus, a.t_minus, b.t_minus, a.r_minus_coeff, b.r_minus_coeff, c.t_minus)

    def conjugation_residual(self) -> float:
        """``max |T_-(w+-) - conj T_-|, |R_-(w+-) - conj R_-|`` over the grid."""
        return float(
            max(
                np.max(np.abs(self.t_minus_pm - np.conj(self.t_minus))),
                np.max(np.abs(self.r_minus_pm - np.conj(self.r_minus_coeff))),
            )
        )

    @property
    def t_product(self) -> np.ndarray:
        """``T_- T_-(w-)`` on the grid."""
        return self.t_minus * self.t_minus_om


def modulus_from_f(f):
    """Root ``rho = (-f + sqrt(f^2 + 4)) / 2`` of ``1/rho - rho = f``.

    Evaluated as ``2 / (f + sqrt(f^2 + 4))`` to avoid cancellation; ``f = inf``
    gives 0.

    >>> float(modulus_from_f(1.5))
    0.5
    """
    f = np.asarray(f, dtype=float)
    if np.any(f < 0) or np.any(np.isnan(f)):
        raise ValueError("f must be nonnegative")
    with np.errstate(over="ignore"):
        out = np.where(np.isinf(f), 0.0, 2.0 / (f + np.sqrt(f * f + 4.0)))
    return out if out.ndim else out[()]


def f_from_forward(trace: BoundaryTrace, zero_tol: float = 0.0):
    """``f = |r_-/r_+ T_- T_-(w+-) / R_-(w+-)|``.

    Returns ``(f, poles)``; where ``|R_-(w+-)| <= zero_tol`` the value is
    ``inf`` and the point is flagged as a pole of ``f``.
    """
    denom = np.abs(trace.r_minus_pm)
    poles = denom <= zero_tol
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.abs(trace.r_minus / trace.r_plus) * np.abs(trace.t_minus * trace.t_minus_pm) / denom
    f = np.where(poles, np.inf, f)
    return f, poles


# ----------------------------------------------------------------------------
# Truncated products
# ----------------------------------------------------------------------------


def factor_roots(resonances, K: Optional[float] = None, branch_tol: float = 1e-8):
    """``(r_+(z_j), multiplicity)`` for resonances with ``|r_+(z_j)| <= K``.

    Resonances projecting to ``V_+`` (``|r_+| <= branch_tol``) are excluded.
    """
    roots, mult = [], []
    for r in resonances:
        a = complex(r.r_plus)
        if abs(a) <= branch_tol:
            continue
        if K is not None and abs(a) > K:
            continue
        roots.append(a)
        mult.append(int(r.multiplicity))
    return np.array(roots, dtype=complex), np.array(mult, dtype=int)


def _pairs(roots: np.ndarray, mult: np.ndarray, tol: float = 1e-8):
    """Group roots with their partners ``-conj(r)``; returns list of index tuples."""
    order = np.lexsort((roots.imag, np.abs(roots)))
    used = np.zeros(roots.size, bool)
    groups = []
    for i in order:
        if used[i]:
            continue
        used[i] = True
        partner = -np.conj(roots[i])
        if abs(partner - roots[i]) > tol * max(1.0, abs(roots[i])):
            d = np.abs(roots - partner)
            d[used] = np.inf
            j = int(np.argmin(d)) if d.size else -1
            if j >= 0 and d[j] <= tol * max(1.0, abs(roots[i])) and mult[j] == mult[i]:
                used[j] = True
                groups.append((i, j))
                continue
        groups.append((i,))
    return groups


def _as_r_plus(points, levels: Optional[StepLevels]):
    if isinstance(points, SheetPoints):
        return points.r_plus
    if isinstance(points, SurfacePoint):
        return np.array([SheetPoints.from_points([points], levels).r_plus[0]])
    return np.atleast_1d(np.asarray(points, dtype=complex))


def _product(roots, mult, r, factor, collision_tol):
    out = np.ones(r.shape, dtype=complex)
    for g in _pairs(roots, mult):
        term = np.ones(r.shape, dtype=complex)
        for i in g:
            a = roots[i]
            if np.any(np.abs(r - a) <= collision_tol * max(1.0, abs(a))) or np.any(
                np.abs(r + a) <= collision_tol * max(1.0, abs(a))
            ):
                raise FactorCollision(f"evaluation point collides with factor root r_+ = {a}")
            term = term * factor(a, r) ** mult[i]
        out *= term
    return out


def truncated_product_R2(resonances, params: FactorizationParams, points, K: Optional[float] = None,
                         levels: Optional[StepLevels] = None, collision_tol: float = 1e-12):
    """``gamma_1 e^{delta_1 r_+} prod_{|r_j| <= K} ((r_j + r_+)/(r_j - r_+))^{m_j}``.

    ``points`` may be :class:`SheetPoints`, a :class:`SurfacePoint` (with
    ``levels``) or raw ``r_+`` values.  Factors are multiplied in conjugate
    pairs ``r_j, -conj(r_j)``.
    """
    roots, mult = factor_roots(resonances, K)
    r = _as_r_plus(points, levels)
    return params.gamma_1 * np.exp(params.delta_1 * r) * _product(
        roots, mult, r, lambda a, x: (a + x) / (a - x), collision_tol
    )


def truncated_product_T2(resonances, params: FactorizationParams, points, K: Optional[float] = None,
                         levels: Optional[StepLevels] = None, collision_tol: float = 1e-12):
    """``gamma_2 e^{delta_2 r_+} r_+^{alpha_+ + 1} prod_{|r_j| <= K} (1 - r_+/r_j)^{-m_j}``."""
    if params.gamma_2 is None or params.delta_2 is None:
        raise ValueError("gamma_2 and delta_2 are required")
    roots, mult = factor_roots(resonances, K)
    r = _as_r_plus(points, levels)
    pref = params.gamma_2 * np.exp(params.delta_2 * r) * r ** (params.alpha_plus + 1)
    return pref * _product(roots, mult, r, lambda a, x: a / (a - x), collision_tol)


def forward_R2(V, points, engine: str = "auto", rtol: float = DEFAULT_RTOL):
    """``R_-(z) R_-(w- z)`` from the forward engine."""
    return coefficient_arrays(V, points, engine, rtol).r_minus_coeff * coefficient_arrays(
        V, points.omega_minus(), engine, rtol
    ).r_minus_coeff


def forward_T2(V, points, engine: str = "auto", rtol: float = DEFAULT_RTOL):
    """``T_-(z) T_-(w- z)`` from the forward engine."""
    return coefficient_arrays(V, points, engine, rtol).t_minus * coefficient_arrays(
        V, points.omega_minus(), engine, rtol
    ).t_minus


def _boundary_points(z, levels):
    return SheetPoints.on_sheet(np.asarray(z, dtype=float) + 0j, PHYSICAL, levels, side=1)


def fit_factorization(V, resonances, K: Optional[float] = None, z_fit=(None, None), n_path: int = 400,
                      engine: str = "auto", rtol: float = DEFAULT_RTOL, alpha_plus: int = 1) -> FactorizationParams:
    """Round-trip constants from forward data at two boundary points.

    The ratio ``forward / product`` is sampled on the boundary segment between
    the two fit points, its phase unwrapped, and ``log gamma + delta r_+`` is
    solved from the two end values.  Default fit points are ``V_- + 1`` and
    ``V_- + 5``.
    """
    lv = V.levels
    za = lv.v_minus + 1.0 if z_fit[0] is None else z_fit[0]
    zb = lv.v_minus + 5.0 if z_fit[1] is None else z_fit[1]
    pts = _boundary_points(np.linspace(za, zb, n_path), lv)
    one = FactorizationParams(1.0, 0.0, 1.0, 0.0, alpha_plus)

    def solve(q):
        g = np.log(np.abs(q)) + 1j * np.unwrap(np.angle(q))
        delta = (g[-1] - g[0]) / (pts.r_plus[-1] - pts.r_plus[0])
        return complex(np.exp(g[0] - delta * pts.r_plus[0])), complex(delta)

    g1, d1 = solve(forward_R2(V, pts, engine, rtol) / truncated_product_R2(resonances, one, pts, K))
    g2, d2 = solve(forward_T2(V, pts, engine, rtol) / truncated_product_T2(resonances, one, pts, K))
    return FactorizationParams(g1, d1, g2, d2, alpha_plus)


def resonance_only_params(hull_length: float, branch_resonance: bool) -> FactorizationParams:
    """Constants of the ``R_-`` product fixed by the resonance set alone.

    ``delta_1 = -4 i L`` with ``L`` the hull length (obtained from the counting
    slope, ``L = pi * slope / 2``), in the translation frame where the hull is
    ``[0, L]``; ``gamma_1`` is the value at ``r_+ = 0``, ``+1`` without and
    ``-1`` with a resonance over ``V_+``.
    """
    return FactorizationParams(
        gamma_1=-1.0 if branch_resonance else 1.0,
        delta_1=-4j * hull_length,
        alpha_plus=0 if branch_resonance else 1,
    )


@dataclass
class ProductReport:
    """Relative errors of a truncated product against forward data for several K."""

    kind: str
    K: list
    errors: list
    z_test: list
    params: list

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decreasing"] = self.decreasing
        return d


def product_error_vs_truncation(V, resonances, Ks: Sequence[float], z_test=None, kind: str = "R",
                                engine: str = "auto", rtol: float = DEFAULT_RTOL, **fit_kw) -> ProductReport:
    """Max relative error of the round-trip truncated product at test points, per ``K``."""
    lv = V.levels
    z_test = np.linspace(lv.v_minus + 0.5, lv.v_minus + 10, 10) if z_test is None else np.asarray(z_test, float)
    pts = _boundary_points(z_test, lv)
    truth = forward_R2(V, pts, engine, rtol) if kind == "R" else forward_T2(V, pts, engine, rtol)
    errs, params = [], []
    for K in Ks:
        p = fit_factorization(V, resonances, K, engine=engine, rtol=rtol, **fit_kw)
        approx = (truncated_product_R2 if kind == "R" else truncated_product_T2)(resonances, p, pts, K)
        errs.append(float(np.max(np.abs(approx - truth) / np.abs(truth))))
        params.append({k: [complex(v).real, complex(v).imag] if v is not None else None
                       for k, v in asdict(p).items() if k != "alpha_plus"})
    return ProductReport(kind, [float(k) for k in Ks], errs, z_test.tolist(), params)


# ----------------------------------------------------------------------------
# Recovery of R_- on the boundary
# ----------------------------------------------------------------------------


@dataclass
class RecoveryReport:
    """Recovered ``R_-`` against forward truth on a boundary grid."""

    mode: str
    z: list
    max_abs_error: float
    max_modulus_error: float
    max_relative_error: float
    conjugation_residual: float
    recovered: list = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _unwrap_from_top(phase: np.ndarray, z: np.ndarray, max_jump: float) -> np.ndarray:
    order = np.argsort(-z)
    ph = phase[order]
    d = np.angle(np.exp(1j * np.diff(ph)))
    bad = np.nonzero(np.abs(d) > max_jump)[0]
    if bad.size:
        raise PhaseAmbiguity(int(order[bad[0]]), float(abs(d[bad[0]])))
    out = np.empty_like(ph)
    out[0] = np.angle(np.exp(1j * ph[0]))
    out[1:] = out[0] + np.cumsum(d)
    res = np.empty_like(out)
    res[order] = out
    return res


def recover_R_minus_on_boundary(V, z, t_product: Optional[Callable] = None, engine: str = "auto",
                                rtol: float = DEFAULT_RTOL, max_jump: float = math.pi / 2) -> RecoveryReport:
    """Rebuild ``R_-`` on ``z > V_-`` from ``P = T_- T_-(w-)`` and compare with the forward value.

    ``|R_-| = rho(f)`` with ``f = |r_-/r_+| |P|`` and ``arg R_- = arg P``.  In
    round-trip mode (``t_product=None``) ``P`` is the forward product; otherwise
    ``t_product(points)`` supplies it, e.g. a fitted truncated product.  The
    phase is continued from the largest ``z`` downwards and a jump above
    ``max_jump`` raises :class:`PhaseAmbiguity`.
    """
    z = np.sort(np.atleast_1d(np.asarray(z, dtype=float)))
    trace = BoundaryTrace.from_forward(V, z, engine, rtol)
    pts = _boundary_points(z, V.levels)
    P = trace.t_product if t_product is None else np.asarray(t_product(pts), dtype=complex)
    f = np.abs(trace.r_minus / trace.r_plus) * np.abs(P)
    rho = modulus_from_f(f)
    phase = _unwrap_from_top(np.angle(P), z, max_jump)
    rec = rho * np.exp(1j * phase)
    truth = trace.r_minus_coeff
    err = np.abs(rec - truth)
    return RecoveryReport(
        "round_trip" if t_product is None else "product",
        z.tolist(),
        float(err.max()),
        float(np.max(np.abs(rho - np.abs(truth)))),
        float(np.max(err / np.maximum(np.abs(truth), 1e-300))),
        trace.conjugation_residual(),
        [[c.real, c.imag] for c in rec],
    )


# ----------------------------------------------------------------------------
# Normalisation criteria
# ----------------------------------------------------------------------------


def branch_point_limit(V, s_minus: int, t: float = 1e-4, engine: str = "auto", rtol: float = DEFAULT_RTOL) -> complex:
    """``lim -r_- T_- T_-(w-) / r_+`` at the point over ``V_+`` with ``Im r_-`` of sign ``s_minus``.

    Richardson extrapolation from ``r_+ = i t, i t/2, i t/4``.  The limit is
    ``2`` at a resonance, ``-2`` at the partner of a resonance and ``0`` when
    neither point over ``V_+`` is a resonance.
    """
    lv = V.levels
    ts = t / np.array([1.0, 2.0, 4.0])
    pts = SheetPoints(lv.v_plus - ts**2 + 0j, 1j * ts, s_minus * 1j * np.sqrt(lv.gap + ts**2))
    g = -pts.r_minus * forward_T2(V, pts, engine, rtol) / pts.r_plus
    a1 = 2 * g[1] - g[0]
    a2 = 2 * g[2] - g[1]
    return complex((4 * a2 - a1) / 3)


def transmission_ratio_at_threshold(V, engine: str = "auto", rtol: float = DEFAULT_RTOL) -> complex:
    """``T_+(z_0) / T_+(w- z_0)`` at ``z_0`` over ``V_+`` with ``Im r_- > 0``."""
    a = branch_limit(V, "plus", 1, 1, engine=engine, rtol=rtol)
    b = branch_limit(V, "plus", 1, -1, engine=engine, rtol=rtol)
    return complex(a.t_plus[0] / b.t_plus[0])


@dataclass
class NormalizationReport:
    """Which uniqueness criteria apply and the constants they fix.

    ``case`` is ``"a"`` (resonance over ``V_+``), ``"b"`` (a-priori step plus
    continuous perturbation), ``"c"`` (positive threshold transmission ratio)
    or ``None`` when none applies; ``applicable`` lists all that do.
    """

    case: Optional[str]
    applicable: list
    message: str
    constants: dict
    details: dict

    def to_dict(self) -> dict:
        return asdict(self)


def normalization_case_analysis(V, resonances=None, a_priori_continuous: Optional[bool] = None,
                                k_large: float = 1e3, t_tol: float = 1e-6, engine: str = "auto",
                                rtol: float = DEFAULT_RTOL) -> NormalizationReport:
    """Decide which normalisation of ``T_- T_-(w+)`` is available.

    Parameters
    ----------
    V : potential
        Used for the forward checks at the thresholds and at large ``k``.
    resonances : list of Resonance, optional
        A resonance over ``V_+`` in the list also triggers case (a).
    a_priori_continuous : bool, optional
        Whether ``V`` is known to be a step plus a continuous perturbation;
        defaults to ``isinstance(V, SmoothPerturbationPotential)``.
    """
    lv = V.levels
    applicable, constants, details = [], {}, {}

    t_at = {}
    for s in (1, -1):
        t_at[s] = complex(branch_limit(V, "plus", 1, s, engine=engine, rtol=rtol).t_minus[0])
    details["t_minus_at_threshold"] = {str(s): [v.real, v.imag] for s, v in t_at.items()}
    listed = [r for r in (resonances or []) if abs(r.r_plus) <= 1e-8 * max(1.0, math.sqrt(lv.gap))]
    branch = [s for s in (1, -1) if abs(t_at[s]) > t_tol]
    if branch or listed:
        applicable.append("a")
        s = branch[0] if branch else (1 if listed[0].r_minus.imag > 0 else -1)
        lim = branch_point_limit(V, s, engine=engine, rtol=rtol)
        constants["branch_limit"] = [lim.real, lim.imag]
        constants["resonant_point_sign_im_r_minus"] = s
        details["branch_limit_partner"] = [
            branch_point_limit(V, -s, engine=engine, rtol=rtol).real, 0.0
        ]

    if a_priori_continuous is None:
        a_priori_continuous = isinstance(V, SmoothPerturbationPotential)
    if a_priori_continuous:
        applicable.append("b")
        k = np.array([k_large + 0j])
        pts = SheetPoints.from_k(k, lv)
        prod = coefficient_arrays(V, pts, engine, rtol).t_minus * coefficient_arrays(
            V, pts.omega_plus(), engine, rtol
        ).t_minus
        predicted = 4 * abs(pts.r_plus[0]) ** 2 / lv.gap
        constants["large_k_multiple"] = float(predicted / abs(prod[0]))
        details["large_k"] = k_large

    if not branch and not listed:
        ratio = transmission_ratio_at_threshold(V, engine, rtol)
        details["threshold_transmission_ratio"] = [ratio.real, ratio.imag]
        if ratio.real > 0:
            applicable.append("c")
            constants["threshold_transmission_ratio"] = ratio.real
        else:
            details["criterion_c"] = "fails: threshold transmission ratio is not positive"

    case = applicable[0] if applicable else None
    msg = f"criterion ({case}) applies" if case else UNDETERMINED
    if case is None:
        log.warning(UNDETERMINED)
    return NormalizationReport(case, applicable, msg, constants, details)


def report_to_json(report, path=None) -> str:
    """Serialise a report (``to_dict``) as JSON."""
    text = dumps(report.to_dict())
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
