"""Resonances: zeros of the Jost Wronskian ``D`` on a chosen sheet.

A search region is a rectangle of the energy plane on one sheet.  Rectangles
that meet the cut ``[V_+, inf)`` are cut into an upper and a lower half; in
each half the square roots are continued analytically across the real axis,
so ``D`` is holomorphic on a neighbourhood of the half-rectangle and the real
axis edge carries the boundary values from the corresponding side.

Zeros are counted by the argument principle, isolated by quadtree subdivision
and polished by Newton's method (see :mod:`steplike._argument`).
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ._serial import dumps
from ._argument import Box, CachedLog, ContourTooClose, NonIntegerWinding, find_zeros, winding_numbers
from .potential import PiecewiseConstantPotential, SmoothPerturbationPotential
from .riemann import PHYSICAL, SheetPoints, SheetSignature, StepLevels, SurfacePoint
from .scattering import DEFAULT_RTOL, log_wronskian

__all__ = [
    "Resonance",
    "SearchRegion",
    "LocateResult",
    "ContourTooClose",
    "NonIntegerWinding",
    "UnresolvedZeros",
    "sheet_log_d",
    "winding_count",
    "locate",
    "locate_in_disk",
    "eigenvalues",
    "boundary_scan",
    "PoleMatch",
    "coefficient_pole_check",
    "resonances_to_csv",
    "resonances_from_csv",
    "resonances_to_json",
    "resonances_from_json",
    "CSV_COLUMNS",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "re_z",
    "im_z",
    "s_plus",
    "s_minus",
    "multiplicity",
    "re_rplus",
    "im_rplus",
    "re_rminus",
    "im_rminus",
    "residual",
)


class UnresolvedZeros(RuntimeError):
    """Positive-count boxes remained after subdivision."""


@dataclass(frozen=True)
class Resonance:
    """A located zero of ``D``.

    ``residual`` is the size of the final Newton correction ``|m D/D'|``, an
    estimate of the position error in ``z``.  ``box`` is the certifying
    rectangle ``(re0, re1, im0, im1)`` around which ``D`` winds
    ``multiplicity`` times.
    """

    point: SurfacePoint
    multiplicity: int
    r_plus: complex
    r_minus: complex
    residual: float = 0.0
    box: Optional[tuple] = None
    flags: tuple = ()

    @property
    def z(self) -> complex:
        return self.point.z

    @property
    def refined_z(self) -> complex:
        return self.point.z

    @property
    def sheet(self) -> SheetSignature:
        return self.point.sheet

    def sort_key(self):
        return (self.z.real, self.z.imag, self.sheet.name)


@dataclass(frozen=True)
class SearchRegion:
    """Rectangle ``[re_min, re_max] x [im_min, im_max]`` on one sheet.

    ``eps`` is the exclusion radius around the thresholds; zeros closer than
    ``eps`` to ``V_+`` or ``V_-`` are reported as branch-point candidates.  The
    default is ``1e-3 * (V_- - V_+)``.
    """

    sheet: SheetSignature
    re_min: float
    re_max: float
    im_min: float
    im_max: float
    eps: Optional[float] = None

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError("search region must have positive width and height")

    @property
    def box(self) -> Box:
        return Box(self.re_min, self.re_max, self.im_min, self.im_max)

    def exclusion(self, levels: StepLevels) -> float:
        return self.eps if self.eps is not None else 1e-3 * levels.gap


@dataclass
class LocateResult:
    """Outcome of :func:`locate`.

    Completeness holds exactly::

        total == sum(r.multiplicity for r in resonances)
                 + sum(c for _, c in unresolved) + sum(c for _, c in branch_candidates)
    """

    region: SearchRegion
    total: int
    resonances: list = field(default_factory=list)
    unresolved: list = field(default_factory=list)
    branch_candidates: list = field(default_factory=list)
    excluded_strips: list = field(default_factory=list)
    n_evals: int = 0

    def __iter__(self):
        return iter(self.resonances)

    def __len__(self):
        return len(self.resonances)

    @property
    def located_count(self) -> int:
        return sum(r.multiplicity for r in self.resonances)

    @property
    def is_complete(self) -> bool:
        return self.total == self.located_count + sum(c for _, c in self.unresolved) + sum(
            c for _, c in self.branch_candidates
        )


# ----------------------------------------------------------------------------
# Evaluation of D on a sheet
# ----------------------------------------------------------------------------


def _root_mode(w, mode: int):
    """Square root continued from the upper (mode +1) or lower (mode -1) half plane.

    Mode 0 is the standard root onto the upper half plane with its cut on
    ``[0, inf)``.  Mode +1 moves the cut to the negative imaginary axis, mode -1
    to the positive imaginary axis; in each case the values agree with the
    standard root on the corresponding open half plane and equal the boundary
    values from that side on ``(0, inf)``.
    """
    w = np.asarray(w, dtype=complex)
    if mode == 0:
        out = 1j * np.sqrt(-w)
        on = (w.imag == 0) & (w.real > 0)
        return np.where(on, np.sqrt(np.abs(w.real)) + 0j, out)
    if mode == 1:
        return np.exp(0.25j * np.pi) * np.sqrt(-1j * w)
    if mode == -1:
        return np.exp(0.75j * np.pi) * np.sqrt(1j * w)
    raise ValueError("mode must be -1, 0 or 1")


def _points(z, sheet: SheetSignature, levels: StepLevels, mode: int) -> SheetPoints:
    z = np.asarray(z, dtype=complex)
    rp = sheet.s_plus * _root_mode(z - levels.v_plus, mode)
    rm = sheet.s_minus * _root_mode(z - levels.v_minus, mode)
    return SheetPoints(z, rp, rm)


def sheet_log_d(V, sheet: SheetSignature, mode: int = 0, engine: str = "auto", rtol: float = DEFAULT_RTOL,
                chunk: int = 256):
    """Vectorised ``z -> log D`` on ``sheet`` with the root continuation ``mode``.

    For the ODE engine points are evaluated in chunks sorted by ``|z|`` so the
    step size of a chunk is set by similar energies.
    """
    levels = V.levels
    use_ode = engine == "ode" or (engine == "auto" and not isinstance(V, PiecewiseConstantPotential))

    def fn(z):
        z = np.asarray(z, dtype=complex).ravel()
        if not use_ode or z.size <= chunk:
            return log_wronskian(V, _points(z, sheet, levels, mode), engine, rtol)
        order = np.argsort(np.abs(z))
        out = np.empty(z.size, dtype=complex)
        for s in range(0, z.size, chunk):
            idx = order[s:s + chunk]
            out[idx] = log_wronskian(V, _points(z[idx], sheet, levels, mode), engine, rtol)
        return out

    return fn


def _branch_gap(a, b):
    """``min |sqrt(a) +- sqrt(b)|``: root increment with the branches matched."""
    sa, sb = np.sqrt(a), np.sqrt(b)
    return np.minimum(np.abs(sa - sb), np.abs(sa + sb))


def phase_variation(V, sheet: SheetSignature, mode: int = 0):
    """A priori bound for the phase change of ``D`` along segments ``[za, zb]``.

    ``log D`` is built from exponentials ``exp(i r x)`` with ``|x|`` at most
    the extent of the potential and from interior oscillations
    ``exp(i kappa h)``; the bound adds up the corresponding increments.
    """
    levels = V.levels
    x_ext = max(abs(V.x_left), abs(V.x_right)) + 1.0
    if isinstance(V, PiecewiseConstantPotential):
        layers = [(V.breakpoints[i + 1] - V.breakpoints[i], v) for i, v in enumerate(V.values)]
    else:
        xs = np.linspace(V.x_left, V.x_right, 257)
        vals = V(xs)
        width = V.x_right - V.x_left
        layers = [(width, float(vals.min())), (width, float(vals.max()))]

    def var(za, zb):
        za = np.asarray(za, dtype=complex)
        zb = np.asarray(zb, dtype=complex)
        pa, pb = _points(za, sheet, levels, mode), _points(zb, sheet, levels, mode)
        out = x_ext * 2 * (np.abs(pb.r_plus - pa.r_plus) + np.abs(pb.r_minus - pa.r_minus))
        for h, v in layers:
            out = out + 2 * h * _branch_gap(za - v, zb - v)
        return out

    return var


def _pieces(region: SearchRegion, levels: StepLevels, split_x: Optional[float] = None):
    """Split a region into pieces with a fixed root continuation mode each."""
    b = region.box
    vp = levels.v_plus if split_x is None else split_x
    if b.re1 <= levels.v_plus or b.im0 >= 0 or b.im1 <= 0:
        mode = 1 if b.im0 >= 0 and b.re1 > levels.v_plus else (-1 if b.im1 <= 0 and b.re1 > levels.v_plus else 0)
        return [(b, mode)]
    out = []
    xs = max(b.re0, vp)
    if b.re0 < xs:
        out.append((Box(b.re0, xs, b.im0, b.im1), 0))
    out.append((Box(xs, b.re1, 0.0, b.im1), 1))
    out.append((Box(xs, b.re1, b.im0, 0.0), -1))
    return out


def _on_real_edge(box: Box, loc) -> bool:
    if loc is None:
        return False
    return (box.im0 == 0 and abs(loc.imag) <= 1e-9 * box.size) or (box.im1 == 0 and abs(loc.imag) <= 1e-9 * box.size)


def _make_point(z: complex, sheet: SheetSignature, levels: StepLevels, mode: int):
    pts = _points(np.array([z]), sheet, levels, mode)
    side = None
    if z.imag == 0 and z.real > levels.v_plus:
        side = mode if mode != 0 else 1
    return SurfacePoint(z, sheet, side), complex(pts.r_plus[0]), complex(pts.r_minus[0])


# ----------------------------------------------------------------------------
# Counting and locating
# ----------------------------------------------------------------------------


def winding_count(V, region: SearchRegion, engine: str = "auto", rtol: float = DEFAULT_RTOL) -> int:
    """Number of zeros of ``D`` (with multiplicity) inside ``region``.

    Raises
    ------
    ContourTooClose
        If ``D`` vanishes numerically on the region's boundary.
    """
    total = 0
    for box, mode in _pieces(region, V.levels):
        f = CachedLog(sheet_log_d(V, region.sheet, mode, engine, rtol), phase_variation(V, region.sheet, mode))
        counts, fails = winding_numbers(f, [box])
        if counts[0] < 0:
            raise ContourTooClose(fails[0] if fails[0] is not None else box.center)
        total += int(counts[0])
    return total


def locate(
    V,
    region: SearchRegion,
    tol: float = 1e-13,
    engine: str = "auto",
    rtol: float = DEFAULT_RTOL,
    max_nudges: int = 4,
) -> LocateResult:
    """All zeros of ``D`` on ``region.sheet`` inside ``region``.

    The outer contour is nudged outward when it passes too close to a zero;
    the real-axis edge of a half-rectangle is instead moved into the piece and
    the excluded strip is recorded (real-axis zeros are the business of
    :func:`boundary_scan`).
    """
    levels = V.levels
    eps = region.exclusion(levels)
    result = LocateResult(region, 0)
    for box, mode in _pieces(region, levels):
        f = CachedLog(sheet_log_d(V, region.sheet, mode, engine, rtol), phase_variation(V, region.sheet, mode))
        cur = box
        search = None
        for attempt in range(max_nudges + 1):
            counts, fails = winding_numbers(f, [cur])
            if counts[0] >= 0:
                search = find_zeros(f, cur, total=int(counts[0]), tol=tol)
                break
            loc = fails[0]
            d = 1e-6 * cur.size * 10**attempt
            if _on_real_edge(cur, loc):
                if cur.im0 == 0:
                    strip = (cur.re0, cur.re1, 0.0, d)
                    cur = Box(cur.re0, cur.re1, d, cur.im1)
                else:
                    strip = (cur.re0, cur.re1, -d, 0.0)
                    cur = Box(cur.re0, cur.re1, cur.im0, -d)
                result.excluded_strips.append(strip)
                log.warning("real-axis edge hits a zero near %s; excluding strip %s", loc, strip)
            else:
                cur = cur.expanded(d)
                log.info("contour nudged outward by %g near %s", d, loc)
        if search is None:
            raise ContourTooClose(box.center, f"could not place a contour around {box} after {max_nudges} nudges")
        result.total += search.total
        result.n_evals += search.n_evals
        for z, m, b, res in search.zeros:
            point, rp, rm = _make_point(z, region.sheet, levels, mode)
            flags = []
            if min(abs(z - levels.v_plus), abs(z - levels.v_minus)) < eps:
                result.branch_candidates.append((b.as_tuple(), m))
                log.warning("zero at %s lies within %g of a threshold: branch-point candidate", z, eps)
                continue
            if levels.v_plus < z.real <= levels.v_minus and abs(z.imag) <= 1e-8 * max(1.0, abs(z)):
                flags.append("forbidden_interval")
                log.error("zero found at %s inside (V+, V-]; this should not happen", z)
            result.resonances.append(Resonance(point, m, rp, rm, res, b.as_tuple(), tuple(flags)))
        for b, c in search.unresolved:
            near = min(abs(b.center - levels.v_plus), abs(b.center - levels.v_minus)) < eps + b.size
            if near:
                result.branch_candidates.append((b.as_tuple(), c))
            else:
                result.unresolved.append((b.as_tuple(), c))
    result.resonances = _dedup(sorted(result.resonances, key=Resonance.sort_key))
    return result


def _dedup(res):
    out = []
    for r in res:
        if out and abs(out[-1].z - r.z) < 1e-10 * max(1.0, abs(r.z)) and out[-1].sheet == r.sheet:
            log.warning("duplicate zero %s suppressed", r.z)
            continue
        out.append(r)
    return out


def locate_in_disk(V, sheet: SheetSignature, radius: float, **kw) -> LocateResult:
    """Zeros with ``|z| <= radius`` (the covering square is searched; all zeros in it are returned)."""
    region = SearchRegion(sheet, -radius, radius, -radius, radius)
    return locate(V, region, **kw)


def _min_potential(V) -> float:
    if isinstance(V, PiecewiseConstantPotential):
        return min(V.extended_values)
    if isinstance(V, SmoothPerturbationPotential):
        x = np.linspace(V.x_left, V.x_right, 4001)
        return float(min(np.min(V(x)), V.levels.v_plus))
    raise TypeError(f"unsupported potential type {type(V).__name__}")


def eigenvalues(V, engine: str = "auto", rtol: float = DEFAULT_RTOL, n_grid: int = 400, eps: Optional[float] = None,
                max_refine: int = 5) -> list:
    """Physical-sheet zeros of ``D``: real eigenvalues below ``V_+``.

    ``D`` is real on ``(-inf, V_+)`` of the physical sheet, so sign changes on a
    grid bracket the eigenvalues, which are then solved with ``brentq``.  The
    number found is confirmed against the winding number of a box around the
    interval; the grid is refined on mismatch.
    """
    levels = V.levels
    eps = 1e-3 * levels.gap if eps is None else eps
    lo = _min_potential(V) - 1e-9 * max(1.0, abs(_min_potential(V)))
    hi = levels.v_plus - eps
    if lo >= hi:
        return []
    f = sheet_log_d(V, PHYSICAL, 0, engine, rtol)

    def value(x, c):
        L = f(np.array([x + 0j]))[0]
        return float(np.real(np.exp(L - c)))

    region = SearchRegion(PHYSICAL, lo - 1.0, hi, -1.0, 1.0)
    expected = winding_count(V, region, engine, rtol)
    n = n_grid
    roots = []
    for _ in range(max_refine + 1):
        x = np.linspace(lo, hi, n)
        L = f(x + 0j)
        sgn = np.sign(np.cos(L.imag))
        roots = []
        for i in np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]:
            c = L[i].real
            roots.append(brentq(value, x[i], x[i + 1], args=(c,), xtol=1e-14, rtol=1e-15))
        if len(roots) == expected:
            break
        n *= 4
    else:
        log.warning("eigenvalue bracketing found %d roots, winding count says %d", len(roots), expected)
    for r in roots:
        assert r < levels.v_plus, "eigenvalue above V_+"
    return roots


def boundary_scan(V, sheet: SheetSignature, z_max: float, n_grid: int = 4000, engine: str = "auto",
                  rtol: float = DEFAULT_RTOL, threshold: float = 1e-9) -> list:
    """Real-axis zeros of the boundary values of ``D`` on ``(V_+, z_max]`` from both sides.

    Candidates are local minima of ``|D| / |r_+ + r_-|`` refined by bounded
    scalar minimisation; those below ``threshold`` are returned as flagged
    resonances.  Zeros found in ``(V_+, V_-]`` are logged as errors.
    """
    levels = V.levels
    out = []
    x = np.linspace(levels.v_plus, z_max, n_grid)[1:]
    for side in (1, -1):
        f = sheet_log_d(V, sheet, side, engine, rtol)

        def logmod(t):
            pts = _points(np.array([t + 0j]), sheet, levels, side)
            L = f(np.array([t + 0j]))[0]
            return float(L.real - np.log(np.abs(pts.r_plus[0] + pts.r_minus[0])))

        pts = _points(x + 0j, sheet, levels, side)
        m = f(x + 0j).real - np.log(np.abs(pts.r_plus + pts.r_minus))
        for i in range(1, len(x) - 1):
            if m[i] <= m[i - 1] and m[i] <= m[i + 1]:
                opt = minimize_scalar(logmod, bounds=(x[i - 1], x[i + 1]), method="bounded",
                                      options={"xatol": 1e-13 * max(1.0, x[i])})
                if opt.fun < math.log(threshold):
                    z = complex(opt.x, 0.0)
                    point, rp, rm = _make_point(z, sheet, levels, side)
                    flags = ["boundary"]
                    if z.real <= levels.v_minus:
                        flags.append("forbidden_interval")
                        log.error("boundary zero at %s inside (V+, V-]", z)
                    out.append(Resonance(point, 1, rp, rm, float(math.exp(opt.fun)), None, tuple(flags)))
    return sorted(out, key=Resonance.sort_key)


# ----------------------------------------------------------------------------
# Zeros of D versus poles of the coefficients
# ----------------------------------------------------------------------------


def _reciprocal_coefficient(V, sheet: SheetSignature, engine: str, rtol: float):
    """Batch ``log`` of a function whose zeros on ``sheet`` are the poles of a coefficient.

    On ``(-,+)`` the poles of ``R_-`` are the zeros of ``1/R_- = R_-(w+ z)``,
    on ``(+,-)`` the poles of ``R_+`` are the zeros of ``1/R_+ = R_+(w- z)``,
    and on ``(-,-)`` the poles of ``Q = R_- R_+ - T_- T_+`` are the zeros of
    ``1/Q = Q(w+- z)``.  The images lie on the physical sheet.
    """
    from .scattering import coefficient_arrays

    name = sheet.name
    if name == "pp":
        raise ValueError("the physical sheet has no deck image pairing of this kind")

    def fn(pts: SheetPoints):
        if name == "mp":
            a = coefficient_arrays(V, pts.omega_plus(), engine, rtol)
            g = a.r_minus_coeff
        elif name == "pm":
            a = coefficient_arrays(V, pts.omega_minus(), engine, rtol)
            g = a.r_plus_coeff
        else:
            a = coefficient_arrays(V, pts.omega_pm(), engine, rtol)
            g = a.r_minus_coeff * a.r_plus_coeff - a.t_minus * a.t_plus
        with np.errstate(divide="ignore"):
            return np.log(g.astype(complex))

    return fn


@dataclass
class PoleMatch:
    """A zero of ``D`` paired with the nearby pole of the corresponding coefficient."""

    z_wronskian: complex
    z_coefficient: complex
    distance: float
    multiplicity_wronskian: int
    multiplicity_coefficient: int
    converged: bool

    @property
    def matched(self) -> bool:
        return self.converged and self.multiplicity_wronskian == self.multiplicity_coefficient


def coefficient_pole_check(V, resonances, engine: str = "auto", rtol: float = DEFAULT_RTOL,
                           radius: float = 1e-6) -> list:
    """Independently locate the coefficient pole next to each located zero of ``D``.

    Newton's method is run on the reciprocal coefficient (see
    :func:`_reciprocal_coefficient`) from each zero, and the pole order is the
    winding number of the reciprocal around a circle of relative radius
    ``radius``.  Resonances on the real axis are skipped.
    """
    from ._argument import _near_root, circle_winding, newton_refine

    levels = V.levels
    out = []
    for r in resonances:
        if r.sheet.is_physical or r.z.imag == 0:
            continue
        g = _reciprocal_coefficient(V, r.sheet, engine, rtol)

        def logf(z, r=r, g=g):
            z = np.asarray(z, dtype=complex).ravel()
            pts = SheetPoints(z, _near_root(z - levels.v_plus, r.r_plus), _near_root(z - levels.v_minus, r.r_minus))
            return g(pts)

        size = radius * max(1.0, abs(r.z))
        zc, conv, _ = newton_refine(logf, np.array([r.z]), r.multiplicity, np.array([size]))
        m = circle_winding(g, r.point, levels, radius=radius)
        out.append(PoleMatch(r.z, complex(zc[0]), float(abs(zc[0] - r.z)), r.multiplicity, m, bool(conv[0])))
    return out


# ----------------------------------------------------------------------------
# Export / import
# ----------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _row(r: Resonance) -> dict:
    return {
        "re_z": r.z.real,
        "im_z": r.z.imag,
        "s_plus": r.sheet.s_plus,
        "s_minus": r.sheet.s_minus,
        "multiplicity": r.multiplicity,
        "re_rplus": r.r_plus.real,
        "im_rplus": r.r_plus.imag,
        "re_rminus": r.r_minus.real,
        "im_rminus": r.r_minus.imag,
        "residual": r.residual,
    }


def resonances_to_csv(resonances, path=None) -> str:
    """Write resonances as CSV (17 significant digits); returns the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in resonances:
        row = _row(r)
        w.writerow([str(row[c]) if c in ("s_plus", "s_minus", "multiplicity") else _fmt(row[c]) for c in CSV_COLUMNS])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def _from_row(row: dict) -> Resonance:
    z = complex(float(row["re_z"]), float(row["im_z"]))
    sheet = SheetSignature(int(row["s_plus"]), int(row["s_minus"]))
    rp = complex(float(row["re_rplus"]), float(row["im_rplus"]))
    rm = complex(float(row["re_rminus"]), float(row["im_rminus"]))
    side = None
    if z.imag == 0 and rp.imag == 0 and rp != 0:
        side = 1 if rp.real * sheet.s_plus > 0 else -1
    return Resonance(SurfacePoint(z, sheet, side), int(row["multiplicity"]), rp, rm, float(row["residual"]))


def resonances_from_csv(source) -> list:
    """Read the CSV produced by :func:`resonances_to_csv` (path or text)."""
    text = Path(source).read_text() if not str(source).lstrip().startswith("re_z") else str(source)
    reader = csv.DictReader(io.StringIO(text))
    missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"resonance CSV lacks columns {sorted(missing)}")
    return [_from_row(row) for row in reader]


def resonances_to_json(resonances, path=None, extra: Optional[dict] = None) -> str:
    doc = {"resonances": [_row(r) for r in resonances]}
    if extra:
        doc.update(extra)
    text = dumps(doc)
    if path is not None:
        Path(path).write_text(text)
    return text


def resonances_from_json(source) -> list:
    text = Path(source).read_text() if not str(source).lstrip().startswith("{") else str(source)
    return [_from_row(row) for row in json.loads(text)["resonances"]]
