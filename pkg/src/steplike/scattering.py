"""Jost solutions, the Jost Wronskian ``D`` and the scattering coefficients.

Conventions
-----------
``f_-`` equals ``exp(-i r_- x)`` left of the potential's structure and
``f_+`` equals ``exp(i r_+ x)`` right of it.  ``D = W[f_-, f_+] = f_- f_+' - f_-' f_+``.
With ``x_0``/``x_n`` the left/right tail edges, matching there gives::

    T_- = 2 i r_+ / D                        R_- from f_- at x_n
    T_+ = 2 i r_- / D                        R_+ from f_+ at x_0

``D`` is computed twice, once from each side, so that ``r_- T_- = r_+ T_+``
is a genuine consistency check rather than an algebraic tautology.

All engines work on batches of surface points (:class:`~steplike.riemann.SheetPoints`)
and carry the magnitude of the propagated solutions as a separate complex log,
so that ``|z|`` up to ``1e6`` neither overflows nor underflows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .potential import PiecewiseConstantPotential, SmoothPerturbationPotential
from .riemann import (
    SheetPoints,
    StepLevels,
    SurfacePoint,
    omega_minus,
    omega_plus,
    omega_pm,
)

__all__ = [
    "EngineError",
    "PoleAtPoint",
    "BranchPoint",
    "JostPair",
    "ScatteringCoefficients",
    "CoefficientArrays",
    "IdentityReport",
    "step_reference",
    "step_coefficient_arrays",
    "transfer_matrix_jost",
    "ode_jost",
    "jost",
    "log_wronskian",
    "coefficient_arrays",
    "log_coefficients",
    "scattering_coefficients",
    "branch_limit",
    "identity_residuals",
    "check_identities",
    "wronskian_drift",
    "IDENTITY_NAMES",
]

DEFAULT_RTOL = 1e-11
POLE_THRESHOLD = 1e-10


class EngineError(RuntimeError):
    """Numerical failure inside a propagation engine."""


class PoleAtPoint(ArithmeticError):
    """The coefficients have a pole (``D = 0``) at the requested point."""

    def __init__(self, point, relative_d: float, multiplicity: Optional[int] = None):
        msg = f"D vanishes at {point} (relative size {relative_d:.3e})"
        if multiplicity is not None:
            msg += f", multiplicity {multiplicity}"
        super().__init__(msg)
        self.point = point
        self.relative_d = relative_d
        self.multiplicity = multiplicity


class BranchPoint(ArithmeticError):
    """The point projects to a threshold ``V_+`` or ``V_-`` where a root vanishes."""


# ----------------------------------------------------------------------------
# Data containers
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class JostPair:
    """Jost solutions at the matching points for a batch of surface points.

    ``f_-(x_right) = exp(log_minus) * (u_minus, du_minus)`` and
    ``f_+(x_left) = exp(log_plus) * (u_plus, du_plus)``.  ``u_plus`` etc. are
    ``None`` when only ``f_-`` was requested.
    """

    points: SheetPoints
    x_left: float
    x_right: float
    u_minus: np.ndarray
    du_minus: np.ndarray
    log_minus: np.ndarray
    u_plus: Optional[np.ndarray] = None
    du_plus: Optional[np.ndarray] = None
    log_plus: Optional[np.ndarray] = None

    @property
    def r_plus(self) -> np.ndarray:
        return self.points.r_plus

    @property
    def r_minus(self) -> np.ndarray:
        return self.points.r_minus

    def f_minus_right(self):
        """Value and derivative of ``f_-`` at ``x_right`` (may overflow for huge ``|z|``)."""
        s = np.exp(self.log_minus)
        return s * self.u_minus, s * self.du_minus

    def f_plus_left(self):
        s = np.exp(self.log_plus)
        return s * self.u_plus, s * self.du_plus


@dataclass(frozen=True)
class ScatteringCoefficients:
    """Coefficients at a single surface point.

    ``normalized_d`` is ``D / (i (r_+ + r_-))``, i.e. ``D`` divided by the pure
    step Wronskian with the step at the origin; it has the same zeros as ``D``
    and tends to 1 for large ``|z|`` when the structure is centred at 0.
    """

    t_minus: complex
    t_plus: complex
    r_minus_coeff: complex
    r_plus_coeff: complex
    wronskian_d: complex
    point: SurfacePoint
    log_d: complex = 0j
    normalized_d: complex = 0j
    r_plus: complex = 0j
    r_minus: complex = 0j


@dataclass(frozen=True)
class CoefficientArrays:
    """Coefficients for a batch of points (see :func:`coefficient_arrays`).

    ``pole_measure`` is ``|i r_+ u - u'| / (|r_+ u| + |u'|)`` for the right
    matching and ``pole_measure_left`` the analogue on the left; values near
    round-off mean ``D`` vanishes to working precision.
    """

    points: SheetPoints
    t_minus: np.ndarray
    t_plus: np.ndarray
    r_minus_coeff: np.ndarray
    r_plus_coeff: np.ndarray
    log_d: np.ndarray
    log_d_left: np.ndarray
    pole_measure: np.ndarray
    pole_measure_left: np.ndarray

    @property
    def wronskian_d(self) -> np.ndarray:
        return np.exp(self.log_d)

    @property
    def normalized_d(self) -> np.ndarray:
        return np.exp(self.log_d - np.log(1j * (self.points.r_plus + self.points.r_minus)))

    def is_pole(self, threshold: float = POLE_THRESHOLD) -> np.ndarray:
        return (self.pole_measure < threshold) | (self.pole_measure_left < threshold)

    def at(self, i: int, point: Optional[SurfacePoint] = None) -> ScatteringCoefficients:
        p = point if point is not None else SurfacePoint(self.points.z[i])
        rp, rm = self.points.r_plus[i], self.points.r_minus[i]
        return ScatteringCoefficients(
            t_minus=complex(self.t_minus[i]),
            t_plus=complex(self.t_plus[i]),
            r_minus_coeff=complex(self.r_minus_coeff[i]),
            r_plus_coeff=complex(self.r_plus_coeff[i]),
            wronskian_d=complex(np.exp(self.log_d[i])),
            point=p,
            log_d=complex(self.log_d[i]),
            normalized_d=complex(np.exp(self.log_d[i] - np.log(1j * (rp + rm)))),
            r_plus=complex(rp),
            r_minus=complex(rm),
        )


# ----------------------------------------------------------------------------
# Pure step
# ----------------------------------------------------------------------------


def step_coefficient_arrays(beta: float, points: SheetPoints) -> CoefficientArrays:
    """Closed-form coefficients of the step ``V_+ H(x - beta) + V_- H(beta - x)``."""
    rp, rm = points.r_plus, points.r_minus
    s = rp + rm
    if np.any(s == 0):
        raise AssertionError("r_+ + r_- vanished; impossible for distinct levels")
    ph = np.exp(1j * beta * (rm - rp))
    with np.errstate(all="ignore"):
        t_minus = 2 * rp / s * ph
        t_plus = 2 * rm / s * ph
        r_minus = (rp - rm) / s * np.exp(-2j * rp * beta)
        r_plus = (rm - rp) / s * np.exp(2j * rm * beta)
    log_d = np.log(1j * s) + 1j * (rp - rm) * beta
    one = np.ones(len(points))
    return CoefficientArrays(points, t_minus, t_plus, r_minus, r_plus, log_d, log_d, one, one)


def step_reference(beta: float, p: SurfacePoint, levels: StepLevels) -> ScatteringCoefficients:
    """Closed-form coefficients of the pure step at a single point.

    Examples
    --------
    >>> from steplike.riemann import StepLevels, SurfacePoint
    >>> c = step_reference(0.0, SurfacePoint(2.0, boundary_side=1), StepLevels(0.0, 1.0))
    >>> round(c.t_minus.real, 6), round(c.r_plus_coeff.real, 6)
    (1.171573, -0.171573)
    """
    _reject_branch_point(p, levels)
    arr = step_coefficient_arrays(beta, SheetPoints.from_points([p], levels))
    return arr.at(0, p)


# ----------------------------------------------------------------------------
# Transfer-matrix engine
# ----------------------------------------------------------------------------


def _layer(q, h):
    """Scaled fundamental matrix entries of ``-u'' = q u`` over a layer of width h.

    Returns ``c, s, ms, t`` with ``[[c, s], [-ms, c]] * exp(t)`` the exact
    propagator; the entries are even in ``sqrt(q)`` so the branch is irrelevant.
    """
    kap = np.sqrt(q)
    w = kap * h
    t = np.abs(w.imag)
    ep = np.exp(1j * w - t)
    em = np.exp(-1j * w - t)
    c = 0.5 * (ep + em)
    small = np.abs(w) < 1e-3
    with np.errstate(all="ignore"):
        s = (ep - em) / (2j * kap)
    if np.any(small):
        w2 = w * w
        series = h * (1 - w2 / 6 + w2 * w2 / 120) * np.exp(-t)
        s = np.where(small, series, s)
    ms = kap * (ep - em) / 2j
    return c, s, ms, t


def _renormalize(u, du, sigma):
    m = np.maximum(np.abs(u), np.abs(du))
    m = np.where(m > 0, m, 1.0)
    return u / m, du / m, sigma + np.log(m)


def _seed_minus(points, x0):
    n = len(points)
    return np.ones(n, complex), -1j * points.r_minus, -1j * points.r_minus * x0


def _seed_plus(points, xn):
    n = len(points)
    return np.ones(n, complex), 1j * points.r_plus, 1j * points.r_plus * xn


def transfer_matrix_jost(V: PiecewiseConstantPotential, points, need_plus: bool = True) -> JostPair:
    """Exact layer-by-layer propagation of the Jost solutions of a staircase."""
    points = _as_points(points, V.levels)
    bps, vals = V.breakpoints, V.values
    z = points.z
    x0, xn = bps[0], bps[-1]
    u, du, sig = _seed_minus(points, x0)
    for i, v in enumerate(vals):
        c, s, ms, t = _layer(z - v, bps[i + 1] - bps[i])
        u, du = c * u + s * du, -ms * u + c * du
        u, du, sig = _renormalize(u, du, sig + t)
    if not need_plus:
        return JostPair(points, x0, xn, u, du, sig)
    g, dg, sg = _seed_plus(points, xn)
    for i in reversed(range(len(vals))):
        c, s, ms, t = _layer(z - vals[i], bps[i + 1] - bps[i])
        g, dg = c * g - s * dg, ms * g + c * dg
        g, dg, sg = _renormalize(g, dg, sg + t)
    return JostPair(points, x0, xn, u, du, sig, g, dg, sg)


# ----------------------------------------------------------------------------
# ODE engine
# ----------------------------------------------------------------------------


def _pieces(V):
    """Intervals on which ``V`` is smooth, each with a scalar evaluator."""
    if isinstance(V, PiecewiseConstantPotential):
        out = []
        for i, v in enumerate(V.values):
            out.append((V.breakpoints[i], V.breakpoints[i + 1], (lambda x, v=v: v), (v, v)))
        return out
    if isinstance(V, SmoothPerturbationPotential):
        nodes = V.nodes()
        p = V.p
        out = []
        for a, b in zip(nodes[:-1], nodes[1:]):
            mid = 0.5 * (a + b)
            base = V.levels.v_minus if mid < V.beta else V.levels.v_plus
            xs = np.linspace(a, b, 33)
            pv = p(xs)
            out.append(
                (float(a), float(b), (lambda x, base=base: base + float(p(x))), (base + pv.min(), base + pv.max()))
            )
        return out
    raise TypeError(f"unsupported potential type {type(V).__name__}")


def _split_points(a, b, z, vrange, max_growth=12.0):
    """Subdivide ``[a, b]`` so that solution growth per sub-piece stays moderate."""
    lo, hi = vrange
    g = max(np.max(np.abs(np.sqrt(z - lo + 0j).imag)), np.max(np.abs(np.sqrt(z - hi + 0j).imag)))
    g = max(g, 1e-12)
    n = max(1, int(math.ceil(g * abs(b - a) / max_growth)))
    return np.linspace(a, b, n + 1)


def _ode_sweep(pieces, z, u, du, sig, forward, rtol, stops=()):
    """Integrate ``u'' = (V - z) u`` through ``pieces``; returns final state and states at ``stops``."""
    n = z.size
    atol = rtol * 1e-3
    recorded = {}
    order = pieces if forward else list(reversed(pieces))
    stops = set(float(s) for s in stops)
    for a, b, vfun, vrange in order:
        xs = _split_points(a, b, z, vrange)
        extra = [s for s in stops if a < s < b]
        if extra:
            xs = np.unique(np.concatenate([xs, extra]))
        if not forward:
            xs = xs[::-1]

        def rhs(x, y, vfun=vfun):
            return np.concatenate([y[n:], (vfun(x) - z) * y[:n]])

        for s0, s1 in zip(xs[:-1], xs[1:]):
            sol = solve_ivp(
                rhs, (s0, s1), np.concatenate([u, du]), method="DOP853", rtol=rtol, atol=atol
            )
            if sol.status != 0:
                raise EngineError(
                    f"ODE integration failed near x={sol.t[-1]:.6g} on [{s0:.6g}, {s1:.6g}]: {sol.message}"
                )
            u, du = sol.y[:n, -1], sol.y[n:, -1]
            u, du, sig = _renormalize(u, du, sig)
            if float(s1) in stops:
                recorded[float(s1)] = (u.copy(), du.copy(), sig.copy())
    return u, du, sig, recorded


def ode_jost(V, points, rtol: float = DEFAULT_RTOL, need_plus: bool = True) -> JostPair:
    """Jost solutions by adaptive complex integration (DOP853) from each tail.

    Works for smooth perturbations of a step and for staircases alike.  ``rtol``
    is the relative local error tolerance of the integrator.
    """
    if not rtol > 0:
        raise ValueError("rtol must be positive")
    points = _as_points(points, V.levels)
    pieces = _pieces(V)
    x0, xn = V.x_left, V.x_right
    u, du, sig = _seed_minus(points, x0)
    u, du, sig, _ = _ode_sweep(pieces, points.z, u, du, sig, True, rtol)
    if not need_plus:
        return JostPair(points, x0, xn, u, du, sig)
    g, dg, sg = _seed_plus(points, xn)
    g, dg, sg, _ = _ode_sweep(pieces, points.z, g, dg, sg, False, rtol)
    return JostPair(points, x0, xn, u, du, sig, g, dg, sg)


def wronskian_drift(V, points, rtol: float = DEFAULT_RTOL, n_check: int = 3) -> np.ndarray:
    """Relative deviation of ``W[f_-, f_+](x)`` from ``D`` at interior points.

    Returns an array of shape ``(n_check, len(points))``; each entry is
    ``|W(x) - D| / (|f_- f_+'| + |f_-' f_+|)``.
    """
    points = _as_points(points, V.levels)
    pieces = _pieces(V)
    x0, xn = V.x_left, V.x_right
    if xn <= x0:
        return np.zeros((n_check, len(points)))
    checks = [x0 + (xn - x0) * (j + 1) / (n_check + 1) for j in range(n_check)]
    u, du, sig = _seed_minus(points, x0)
    *_, rec_m = _ode_sweep(pieces, points.z, u, du, sig, True, rtol, checks)
    g, dg, sg = _seed_plus(points, xn)
    *_, rec_p = _ode_sweep(pieces, points.z, g, dg, sg, False, rtol, checks)
    log_d = log_wronskian(V, points, engine="ode", rtol=rtol)
    out = []
    for x in checks:
        um, dum, sm = rec_m[float(x)]
        up, dup, sp = rec_p[float(x)]
        w = um * dup - dum * up
        scale = np.abs(um * dup) + np.abs(dum * up)
        d_scaled = np.exp(log_d - sm - sp)
        out.append(np.abs(w - d_scaled) / scale)
    return np.array(out)


# ----------------------------------------------------------------------------
# Dispatch and coefficient extraction
# ----------------------------------------------------------------------------


def _as_points(points, levels) -> SheetPoints:
    if isinstance(points, SheetPoints):
        return points
    if isinstance(points, SurfacePoint):
        return SheetPoints.from_points([points], levels)
    return SheetPoints.from_points(points, levels)


def jost(V, points, engine: str = "auto", rtol: float = DEFAULT_RTOL, need_plus: bool = True) -> JostPair:
    """Dispatch to the transfer-matrix engine (staircases) or the ODE engine."""
    if engine == "auto":
        engine = "transfer" if isinstance(V, PiecewiseConstantPotential) else "ode"
    if engine == "transfer":
        if not isinstance(V, PiecewiseConstantPotential):
            raise TypeError("the transfer-matrix engine needs a PiecewiseConstantPotential")
        return transfer_matrix_jost(V, points, need_plus)
    if engine == "ode":
        return ode_jost(V, points, rtol, need_plus)
    raise ValueError(f"unknown engine {engine!r}")


def _log_d_right(jp: JostPair):
    rp = jp.r_plus
    comb = 1j * rp * jp.u_minus - jp.du_minus
    with np.errstate(divide="ignore"):
        log_d = 1j * rp * jp.x_right + jp.log_minus + np.log(comb)
    measure = np.abs(comb) / (np.abs(rp * jp.u_minus) + np.abs(jp.du_minus))
    return log_d, measure


def _log_d_left(jp: JostPair):
    rm = jp.r_minus
    comb = 1j * rm * jp.u_plus + jp.du_plus
    with np.errstate(divide="ignore"):
        log_d = -1j * rm * jp.x_left + jp.log_plus + np.log(comb)
    measure = np.abs(comb) / (np.abs(rm * jp.u_plus) + np.abs(jp.du_plus))
    return log_d, measure


def log_wronskian(V, points, engine: str = "auto", rtol: float = DEFAULT_RTOL) -> np.ndarray:
    """Complex logarithm of ``D`` (branch of the imaginary part unspecified)."""
    jp = jost(V, points, engine, rtol, need_plus=False)
    return _log_d_right(jp)[0]


def coefficient_arrays(V, points, engine: str = "auto", rtol: float = DEFAULT_RTOL) -> CoefficientArrays:
    """``T_-, T_+, R_-, R_+`` and ``log D`` for a batch of points.

    At poles the coefficients are ``inf``/``nan``; use
    :meth:`CoefficientArrays.is_pole` to detect them.
    """
    jp = jost(V, points, engine, rtol, need_plus=True)
    rp, rm = jp.r_plus, jp.r_minus
    log_d, meas = _log_d_right(jp)
    log_d2, meas2 = _log_d_left(jp)
    u, du, g, dg = jp.u_minus, jp.du_minus, jp.u_plus, jp.du_plus
    with np.errstate(all="ignore"):
        r_minus = np.exp(-2j * rp * jp.x_right) * (rp * u - 1j * du) / (rp * u + 1j * du)
        r_plus = np.exp(2j * rm * jp.x_left) * (rm * g + 1j * dg) / (rm * g - 1j * dg)
        t_minus = 2j * rp * np.exp(-log_d)
        t_plus = 2j * rm * np.exp(-log_d2)
    return CoefficientArrays(jp.points, t_minus, t_plus, r_minus, r_plus, log_d, log_d2, meas, meas2)


def log_coefficients(V, points, engine: str = "auto", rtol: float = DEFAULT_RTOL) -> dict:
    """Complex logarithms of ``R_-, R_+, T_-, T_+`` and ``D`` (keys ``log_r_minus`` ...).

    Unlike :func:`coefficient_arrays` nothing is exponentiated, so the values
    stay finite where the coefficients themselves overflow (e.g. along complex
    rays of large modulus).
    """
    jp = jost(V, points, engine, rtol, need_plus=True)
    rp, rm = jp.r_plus, jp.r_minus
    log_d, _ = _log_d_right(jp)
    log_d2, _ = _log_d_left(jp)
    u, du, g, dg = jp.u_minus, jp.du_minus, jp.u_plus, jp.du_plus
    with np.errstate(divide="ignore"):
        return {
            "log_r_minus": -2j * rp * jp.x_right + np.log(rp * u - 1j * du) - np.log(rp * u + 1j * du),
            "log_r_plus": 2j * rm * jp.x_left + np.log(rm * g + 1j * dg) - np.log(rm * g - 1j * dg),
            "log_t_minus": np.log(2j * rp) - log_d,
            "log_t_plus": np.log(2j * rm) - log_d2,
            "log_d": log_d,
        }


def _reject_branch_point(p: SurfacePoint, levels: StepLevels):
    if p.z == levels.v_plus or p.z == levels.v_minus:
        raise BranchPoint(
            f"z={p.z} is a threshold; the tail exponentials degenerate there (use branch_limit)"
        )


def scattering_coefficients(
    V,
    p: SurfacePoint,
    engine: str = "auto",
    rtol: float = DEFAULT_RTOL,
    pole_threshold: float = POLE_THRESHOLD,
    multiplicity: bool = False,
) -> ScatteringCoefficients:
    """Coefficients at one surface point.

    Raises
    ------
    PoleAtPoint
        If ``D`` vanishes at ``p`` to working precision.  With
        ``multiplicity=True`` the order of the zero is determined from the
        winding number of ``D`` around a small circle.
    BranchPoint
        If ``p`` projects to ``V_+`` or ``V_-``.
    """
    _reject_branch_point(p, V.levels)
    arr = coefficient_arrays(V, p, engine, rtol)
    if arr.is_pole(pole_threshold)[0]:
        mult = None
        if multiplicity:
            from ._argument import circle_winding

            mult = circle_winding(lambda pts: log_wronskian(V, pts, engine, rtol), p, V.levels)
        raise PoleAtPoint(p, float(min(arr.pole_measure[0], arr.pole_measure_left[0])), mult)
    return arr.at(0, p)


def branch_limit(
    V,
    level: str,
    s_plus: int = 1,
    s_minus: int = 1,
    t: float = 1e-4,
    engine: str = "auto",
    rtol: float = DEFAULT_RTOL,
) -> CoefficientArrays:
    """Coefficients at a threshold by Richardson extrapolation in the vanishing root.

    Near ``V_+`` the coefficients are analytic in ``r_+`` (and near ``V_-`` in
    ``r_-``), so they are sampled at ``r = i s t, i s t/2, i s t/4`` and
    extrapolated to ``r = 0``.  ``level`` is ``"plus"`` or ``"minus"``.
    """
    gap = V.levels.gap
    ts = t / np.array([1.0, 2.0, 4.0])
    if level == "plus":
        rp = 1j * s_plus * ts
        rm = s_minus * 1j * np.sqrt(gap + ts**2)
        z = V.levels.v_plus - ts**2
    elif level == "minus":
        rm = 1j * s_minus * ts
        rp = s_plus * np.sqrt(gap - ts**2) + 0j
        z = V.levels.v_minus - ts**2
    else:
        raise ValueError("level must be 'plus' or 'minus'")
    arr = coefficient_arrays(V, SheetPoints(z + 0j, rp, rm), engine, rtol)

    def extrap(a):
        a1 = 2 * a[1] - a[0]
        a2 = 2 * a[2] - a[1]
        return np.array([(4 * a2 - a1) / 3])

    if level == "plus":
        pts = SheetPoints(V.levels.v_plus, 0j, s_minus * 1j * math.sqrt(gap))
    else:
        pts = SheetPoints(V.levels.v_minus, s_plus * math.sqrt(gap), 0j)
    return CoefficientArrays(
        pts,
        extrap(arr.t_minus),
        extrap(arr.t_plus),
        extrap(arr.r_minus_coeff),
        extrap(arr.r_plus_coeff),
        np.log(extrap(np.exp(arr.log_d))),
        np.log(extrap(np.exp(arr.log_d_left))),
        arr.pole_measure[-1:],
        arr.pole_measure_left[-1:],
    )


# ----------------------------------------------------------------------------
# Identities
# ----------------------------------------------------------------------------

IDENTITY_NAMES = (
    "flux",
    "reflection_minus_inverse",
    "transmission_reflection",
    "cross_reflection",
    "unitarity_minus",
    "unitarity_plus",
    "reflection_plus_inverse",
    "reflection_difference_minus",
    "reflection_difference_plus",
)


def _res(lhs, rhs, *terms):
    """``|lhs - rhs|`` relative to the largest of 1, both sides and any summands."""
    with np.errstate(all="ignore"):
        scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
        for t in terms:
            scale = np.maximum(scale, np.abs(t))
        return np.abs(lhs - rhs) / scale


def identity_residuals(V, points, engine: str = "auto", rtol: float = DEFAULT_RTOL,
                       pole_threshold: float = POLE_THRESHOLD) -> dict:
    """Normalised residuals of the nine deck-transformation identities.

    The identities relate the coefficients at ``p`` to those at ``w+ p``,
    ``w- p`` and ``w+- p``::

        r_- T_- = r_+ T_+                        T_+ R_+(w-) = T_+(w-),  T_- R_-(w+) = T_-(w+)
        R_-(w+) R_- = 1                          -r_- T_- R_+(w+-) = r_+ R_- T_+(w+-)
        T_-(w+-) T_+ + R_-(w+-) R_- = 1          T_-(w+-) T_+ + R_+(w+-) R_+ = 1
        R_+(w-) R_+ = 1                          -r_- T_- T_-(w-) = r_+ (R_- - R_-(w-))
        r_+ T_+ T_+(w+) = r_- (R_+(w+) - R_+)

    Residual is ``|lhs - rhs| / max(1, |lhs|, |rhs|, |summands|)``, the
    round-off scale of the evaluated expressions.  Entries are ``nan``
    where an involved evaluation point is a pole.  Returns a dict keyed by
    :data:`IDENTITY_NAMES`.
    """
    points = _as_points(points, V.levels)
    n = len(points)
    allp = SheetPoints(
        np.concatenate([points.z] * 4),
        np.concatenate([points.r_plus, -points.r_plus, points.r_plus, -points.r_plus]),
        np.concatenate([points.r_minus, points.r_minus, -points.r_minus, -points.r_minus]),
    )
    arr = coefficient_arrays(V, allp, engine, rtol)
    pole = arr.is_pole(pole_threshold).reshape(4, n)

    def part(a, j):
        return a[j * n:(j + 1) * n]

    C, Cp, Cm, Cb = [
        {
            "Tm": part(arr.t_minus, j),
            "Tp": part(arr.t_plus, j),
            "Rm": part(arr.r_minus_coeff, j),
            "Rp": part(arr.r_plus_coeff, j),
        }
        for j in range(4)
    ]
    rp, rm = points.r_plus, points.r_minus
    out = {
        "flux": (_res(rm * C["Tm"], rp * C["Tp"]), pole[0]),
        "reflection_minus_inverse": (_res(Cp["Rm"] * C["Rm"], 1.0), pole[0] | pole[1]),
        "transmission_reflection": (
            np.maximum(_res(C["Tp"] * Cm["Rp"], Cm["Tp"]), _res(C["Tm"] * Cp["Rm"], Cp["Tm"])),
            pole[0] | pole[1] | pole[2],
        ),
        "cross_reflection": (_res(-rm * C["Tm"] * Cb["Rp"], rp * C["Rm"] * Cb["Tp"]), pole[0] | pole[3]),
        "unitarity_minus": (_res(Cb["Tm"] * C["Tp"] + Cb["Rm"] * C["Rm"], 1.0, Cb["Tm"] * C["Tp"], Cb["Rm"] * C["Rm"]), pole[0] | pole[3]),
        "unitarity_plus": (_res(Cb["Tm"] * C["Tp"] + Cb["Rp"] * C["Rp"], 1.0, Cb["Tm"] * C["Tp"], Cb["Rp"] * C["Rp"]), pole[0] | pole[3]),
        "reflection_plus_inverse": (_res(Cm["Rp"] * C["Rp"], 1.0), pole[0] | pole[2]),
        "reflection_difference_minus": (_res(-rm * C["Tm"] * Cm["Tm"], -rp * Cm["Rm"] + rp * C["Rm"], rp * Cm["Rm"], rp * C["Rm"]), pole[0] | pole[2]),
        "reflection_difference_plus": (_res(rp * C["Tp"] * Cp["Tp"], rm * Cp["Rp"] - rm * C["Rp"], rm * Cp["Rp"], rm * C["Rp"]), pole[0] | pole[1]),
    }
    return {k: np.where(skip, np.nan, r) for k, (r, skip) in out.items()}


@dataclass(frozen=True)
class IdentityReport:
    """Residuals at one point; ``skipped`` lists identities touching a pole."""

    point: SurfacePoint
    residuals: dict
    skipped: tuple = field(default_factory=tuple)

    @property
    def max_residual(self) -> float:
        vals = [v for v in self.residuals.values() if v is not None]
        return max(vals) if vals else 0.0


def check_identities(V, p: SurfacePoint, engine: str = "auto", rtol: float = DEFAULT_RTOL) -> IdentityReport:
    """Evaluate the nine identities at ``p`` and its three deck images."""
    for q in (p, omega_plus(p), omega_minus(p), omega_pm(p)):
        _reject_branch_point(q, V.levels)
    res = identity_residuals(V, p, engine, rtol)
    residuals, skipped = {}, []
    for k in IDENTITY_NAMES:
        v = float(res[k][0])
        if np.isnan(v):
            residuals[k] = None
            skipped.append(k)
        else:
            residuals[k] = v
    return IdentityReport(p, residuals, tuple(skipped))
