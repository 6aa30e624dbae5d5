"""Argument-principle zero finding for functions given through their logarithm.

The functions handled here (Jost Wronskians) grow exponentially, so every
routine works with a vectorised callable ``logf(z) -> log f(z)``.  Winding
numbers are obtained by tracking ``Im log f`` along rectangle edges with
adaptive bisection: a segment is accepted once the phase increments of both
halves are small and consistent with the whole, which rules out aliasing of a
full turn.  The summed increments around a closed contour telescope, so the
winding number is an exact integer whenever tracking succeeds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ContourTooClose",
    "NonIntegerWinding",
    "Box",
    "CachedLog",
    "winding_numbers",
    "newton_refine",
    "find_zeros",
    "ZeroSearchResult",
    "circle_winding",
]

SPLIT_FRACTIONS = (0.5, 0.4731, 0.5269, 0.4417, 0.5583, 0.3907)


class ContourTooClose(ArithmeticError):
    """A zero lies on (or numerically too close to) a contour."""

    def __init__(self, location, message: str = ""):
        super().__init__(message or f"function vanishes (numerically) near {location} on the contour")
        self.location = location


class NonIntegerWinding(ArithmeticError):
    """Phase tracking did not converge to an integer winding number."""


@dataclass(frozen=True)
class Box:
    """Closed rectangle ``[re0, re1] x [im0, im1]``."""

    re0: float
    re1: float
    im0: float
    im1: float

    def __post_init__(self):
        if not (self.re0 < self.re1 and self.im0 < self.im1):
            raise ValueError(f"degenerate box {self}")

    @property
    def size(self) -> float:
        return max(self.re1 - self.re0, self.im1 - self.im0)

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re0 + self.re1), 0.5 * (self.im0 + self.im1))

    def corners(self):
        return (
            complex(self.re0, self.im0),
            complex(self.re1, self.im0),
            complex(self.re1, self.im1),
            complex(self.re0, self.im1),
        )

    def edges(self):
        """Counter-clockwise edges as ``(start, end)`` pairs."""
        c = self.corners()
        return [(c[i], c[(i + 1) % 4]) for i in range(4)]

    def contains(self, z, pad: float = 0.0) -> bool:
        return (self.re0 - pad <= z.real <= self.re1 + pad) and (self.im0 - pad <= z.imag <= self.im1 + pad)

    def split(self, fx: float = 0.5, fy: float = 0.5):
        xm = self.re0 + fx * (self.re1 - self.re0)
        ym = self.im0 + fy * (self.im1 - self.im0)
        return [
            Box(self.re0, xm, self.im0, ym),
            Box(xm, self.re1, self.im0, ym),
            Box(self.re0, xm, ym, self.im1),
            Box(xm, self.re1, ym, self.im1),
        ]

    def expanded(self, d: float) -> "Box":
        return Box(self.re0 - d, self.re1 + d, self.im0 - d, self.im1 + d)

    def as_tuple(self):
        return (self.re0, self.re1, self.im0, self.im1)


class CachedLog:
    """Memoising wrapper around a vectorised ``logf``; evaluates misses in one batch.

    ``variation(za, zb)``, if given, bounds the phase change of ``f`` along the
    segments ``[za, zb]`` from a priori knowledge (e.g. exponential factors).
    Phase tracking refines until this bound is small, which prevents a
    steadily rotating phase from aliasing by whole turns.
    """

    def __init__(self, logf, variation=None):
        self.logf = logf
        self.variation = variation
        self.cache: dict = {}
        self.n_evals = 0

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex).ravel()
        missing = [w for w in dict.fromkeys(z.tolist()) if w not in self.cache]
        if missing:
            vals = np.asarray(self.logf(np.array(missing, dtype=complex)), dtype=complex)
            self.n_evals += len(missing)
            self.cache.update(zip(missing, vals.tolist()))
        return np.array([self.cache[w] for w in z.tolist()], dtype=complex)


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def _canonical(a: complex, b: complex):
    if (a.real, a.imag) <= (b.real, b.imag):
        return (a, b), 1
    return (b, a), -1


def _edge_increments(logf, edges, n0=8, max_phase=0.8, max_mod=3.0, min_rel=1e-9, max_segments=1 << 15):
    """Total ``Im log f`` increment along each edge ``a -> b``.

    Returns ``(increments, failed)`` where ``failed[i]`` is ``None`` or the
    location near which edge ``i`` could not be resolved.
    """
    ne = len(edges)
    inc = np.zeros(ne)
    failed = [None] * ne
    counts = np.zeros(ne, dtype=int)
    t = np.linspace(0.0, 1.0, n0 + 1)
    ea, za, zb = [], [], []
    for i, (a, b) in enumerate(edges):
        pts = a + (b - a) * t
        ea.extend([i] * n0)
        za.extend(pts[:-1])
        zb.extend(pts[1:])
    ea, za, zb = np.array(ea, dtype=int), np.array(za, dtype=complex), np.array(zb, dtype=complex)
    min_len = np.array([min_rel * max(1.0, abs(a), abs(b)) for a, b in edges])
    while ea.size:
        zm = 0.5 * (za + zb)
        L = logf(np.concatenate([za, zm, zb]))
        n = ea.size
        La, Lm, Lb = L[:n], L[n:2 * n], L[2 * n:]
        d = _wrap((Lb - La).imag)
        d1 = _wrap((Lm - La).imag)
        d2 = _wrap((Lb - Lm).imag)
        finite = np.isfinite(La) & np.isfinite(Lm) & np.isfinite(Lb)
        variation = getattr(logf, "variation", None)
        budget = variation(za, zb) <= max_phase if variation is not None else True
        ok = (
            finite
            & budget
            & (np.abs(d1) <= max_phase)
            & (np.abs(d2) <= max_phase)
            & (np.abs(d1 + d2 - d) < 1e-6)
            & (np.abs((Lm - La).real) <= max_mod)
            & (np.abs((Lb - Lm).real) <= max_mod)
        )
        np.add.at(inc, ea[ok], (d1 + d2)[ok])
        bad = ~ok
        short = bad & (np.abs(zb - za) * 0.5 < min_len[ea])
        for i in np.unique(ea[short]):
            if failed[i] is None:
                j = np.nonzero(short & (ea == i))[0][0]
                failed[i] = complex(zm[j])
        keep = bad & ~short & np.array([failed[i] is None for i in ea], dtype=bool)
        np.add.at(counts, ea[keep], 2)
        over = counts > max_segments
        for i in np.nonzero(over)[0]:
            if failed[i] is None:
                failed[i] = complex(0.5 * (edges[i][0] + edges[i][1]))
        keep &= ~over[ea]
        ea = np.repeat(ea[keep], 2)
        za_k, zm_k, zb_k = za[keep], zm[keep], zb[keep]
        za = np.column_stack([za_k, zm_k]).ravel()
        zb = np.column_stack([zm_k, zb_k]).ravel()
    return inc, failed


def winding_numbers(logf, boxes, **kw):
    """Winding numbers of ``f`` around each box; ``-1`` where tracking failed.

    Returns ``(counts, failures)`` with ``failures`` a list of locations (or
    ``None``) per box.
    """
    index, edges = {}, []
    plan = []
    for box in boxes:
        entry = []
        for a, b in box.edges():
            key, sgn = _canonical(a, b)
            if key not in index:
                index[key] = len(edges)
                edges.append(key)
            entry.append((index[key], sgn))
        plan.append(entry)
    inc, failed = _edge_increments(logf, edges, **kw) if edges else (np.zeros(0), [])
    counts, failures = [], []
    for entry in plan:
        bad = [failed[i] for i, _ in entry if failed[i] is not None]
        if bad:
            counts.append(-1)
            failures.append(bad[0])
            continue
        total = sum(s * inc[i] for i, s in entry) / (2 * np.pi)
        w = int(round(total))
        if abs(total - w) > 0.2:
            counts.append(-1)
            failures.append(None)
            continue
        counts.append(w)
        failures.append(None)
    return np.array(counts, dtype=int), failures


def newton_refine(logf, z0, mult, sizes, tol=1e-13, maxit=60):
    """Batched Newton iteration ``z <- z - m f/f'`` with a 4-point complex stencil.

    ``f'/f`` is estimated as ``sum_j exp(log f(z + h i^j) - log f(z)) i^-j / (4h)``,
    accurate to ``O(h^4)``.  Iterates drifting farther than ``4 * sizes`` from
    their start are abandoned.  Returns ``(z, converged, residual)`` where the
    residual is the last Newton step ``|m f/f'|``.
    """
    start = np.atleast_1d(np.asarray(z0, dtype=complex))
    z = start.copy()
    n = z.size
    m = np.broadcast_to(np.asarray(mult, dtype=float), (n,))
    sizes = np.broadcast_to(np.asarray(sizes, dtype=float), (n,))
    conv = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    resid = np.full(n, np.inf)
    step_prev = sizes.copy()
    rot = np.array([1, 1j, -1, -1j])
    for _ in range(maxit):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        zi = z[idx]
        scale = np.maximum(1.0, np.abs(zi))
        h = np.maximum(np.minimum(0.25 * step_prev[idx], 0.05 * sizes[idx]), 1e-7 * scale)
        pts = np.concatenate([zi[:, None], zi[:, None] + h[:, None] * rot[None, :]], axis=1)
        L = logf(pts.ravel()).reshape(idx.size, 5)
        with np.errstate(all="ignore"):
            ratio = np.sum(np.exp(L[:, 1:] - L[:, :1]) * rot.conj()[None, :], axis=1) / (4 * h)
            dz = -m[idx] / ratio
        exact = np.isneginf(L[:, 0].real)  # landed on an exact zero
        dz = np.where(exact, 0.0, dz)
        good = np.isfinite(dz)
        dz = np.where(good, dz, 0.0)
        z[idx] = zi + dz
        ad = np.abs(dz)
        resid[idx] = np.where(good, ad, np.inf)
        done = good & (ad < tol * scale)
        conv[idx[done]] = True
        far = np.abs(z[idx] - start[idx]) > 4 * sizes[idx]
        active[idx[done | ~good | far]] = False
        step_prev[idx] = np.where(good, np.maximum(ad, 1e-16 * scale), step_prev[idx])
    # iterates that stagnated at round-off level count as converged
    conv |= np.isfinite(resid) & (resid < 1e-10 * np.maximum(1.0, np.abs(z)))
    return z, conv, resid


@dataclass
class ZeroSearchResult:
    """Outcome of :func:`find_zeros`.

    ``zeros`` holds ``(z, multiplicity, box, residual)`` tuples; ``unresolved``
    holds ``(box, count)`` pairs for positive-count boxes that could not be
    reduced.  ``total`` is the winding number of the outer contour.
    """

    total: int
    zeros: list = field(default_factory=list)
    unresolved: list = field(default_factory=list)
    n_evals: int = 0


def find_zeros(logf, box: Box, total=None, min_rel=1e-7, tol=1e-13, newton_maxit=40, max_rounds=200,
               phase_kw=None):
    """Locate all zeros of ``f`` inside ``box`` by quadtree subdivision plus Newton.

    ``logf`` should be a :class:`CachedLog` (or any vectorised callable).  The
    sum of multiplicities of returned zeros plus unresolved counts equals the
    outer winding number exactly.

    Raises
    ------
    ContourTooClose
        If the outer contour itself passes too close to a zero.
    """
    phase_kw = phase_kw or {}
    if total is None:
        counts, fails = winding_numbers(logf, [box], **phase_kw)
        if counts[0] < 0:
            raise ContourTooClose(fails[0] if fails[0] is not None else box.center)
        total = int(counts[0])
    result = ZeroSearchResult(total)
    active = [(box, total)] if total > 0 else []
    rounds = 0
    while active and rounds < max_rounds:
        rounds += 1
        # Newton on single-zero boxes and on boxes that cannot shrink further
        cand = [(b, c) for b, c in active if c == 1 or b.size < min_rel * max(1.0, abs(b.center))]
        splitting = [(b, c) for b, c in active if not (c == 1 or b.size < min_rel * max(1.0, abs(b.center)))]
        if cand:
            zc = np.array([b.center for b, _ in cand])
            mult = np.array([c for _, c in cand])
            sizes = np.array([b.size for b, _ in cand])
            zr, conv, res = newton_refine(logf, zc, mult, sizes, tol=tol, maxit=newton_maxit)
            for (b, c), zz, ok, rr in zip(cand, zr, conv, res):
                if ok and b.contains(zz):
                    result.zeros.append((complex(zz), int(c), b, float(rr)))
                elif b.size < min_rel * max(1.0, abs(b.center)):
                    result.unresolved.append((b, int(c)))
                else:
                    splitting.append((b, c))
        active = []
        pending = [(b, c, 0) for b, c in splitting]
        while pending:
            children, owners = [], []
            for j, (b, c, attempt) in enumerate(pending):
                f = SPLIT_FRACTIONS[attempt]
                g = SPLIT_FRACTIONS[(attempt + 1) % len(SPLIT_FRACTIONS)] if attempt else f
                kids = b.split(f, g)
                children.extend(kids)
                owners.append(kids)
            counts, _ = winding_numbers(logf, children, **phase_kw)
            retry = []
            k = 0
            for (b, c, attempt), kids in zip(pending, owners):
                kc = counts[k:k + 4]
                k += 4
                if np.all(kc >= 0) and int(kc.sum()) == c:
                    active.extend((kb, int(n)) for kb, n in zip(kids, kc) if n > 0)
                elif attempt + 1 < len(SPLIT_FRACTIONS):
                    retry.append((b, c, attempt + 1))
                else:
                    result.unresolved.append((b, int(c)))
            pending = retry
    for b, c in active:
        result.unresolved.append((b, int(c)))
    if hasattr(logf, "n_evals"):
        result.n_evals = logf.n_evals
    return result


def circle_winding(logf_points, p, levels, radius: float = 1e-6, n: int = 64) -> int:
    """Winding number of ``D`` around a small circle centred at surface point ``p``.

    ``logf_points`` takes a :class:`~steplike.riemann.SheetPoints` batch.  The
    circle is sampled densely enough for a simple phase sum.
    """
    from .riemann import SheetPoints

    z0 = complex(p.z)
    r = radius * max(1.0, abs(z0))
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    z = z0 + r * np.exp(1j * th)
    # continue the roots from the centre value to keep the circle on one sheet
    rp0 = _continue_root(z0, levels.v_plus, p.sheet.s_plus, p.boundary_side)
    rm0 = _continue_root(z0, levels.v_minus, p.sheet.s_minus, p.boundary_side)
    rp = _near_root(z - levels.v_plus, rp0)
    rm = _near_root(z - levels.v_minus, rm0)
    L = logf_points(SheetPoints(z, rp, rm))
    d = _wrap(np.diff(np.concatenate([L.imag, L.imag[:1]])))
    return int(round(d.sum() / (2 * np.pi)))


def _continue_root(z0, level, sign, side):
    from .riemann import _root

    return complex(_root(np.array([z0]), level, sign, side)[0])


def _near_root(w, r0):
    s = np.sqrt(w + 0j)
    return np.where(np.abs(s - r0) <= np.abs(s + r0), s, -s)
