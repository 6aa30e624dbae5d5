"""The four-sheeted surface on which both square roots ``(z - V_+)^(1/2)`` and
``(z - V_-)^(1/2)`` are single valued.

A point of the surface is a complex energy ``z`` together with a pair of signs
fixing which square root is taken for each threshold.  Sheet ``(+1, +1)`` is the
physical sheet.  On the cuts ``[V_+, inf)`` and ``[V_-, inf)`` a point also
carries the side (upper or lower half plane) from which the boundary value is
taken.

Two representations are provided:

* :class:`SurfacePoint` -- a single immutable point, convenient for the scalar API;
* :class:`SheetPoints` -- a batch of points stored directly as the triples
  ``(z, r_+, r_-)``.  All engines operate on batches.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "StepLevels",
    "SheetSignature",
    "PHYSICAL",
    "SHEETS",
    "SurfacePoint",
    "SheetPoints",
    "sqrt_upper",
    "r_plus",
    "r_minus",
    "omega_plus",
    "omega_minus",
    "omega_pm",
    "from_k",
    "on_cut",
    "is_branch_point",
]


@dataclass(frozen=True)
class StepLevels:
    """Tail values of a steplike potential: ``V_+`` on the right, ``V_-`` on the left.

    Only ``v_plus < v_minus`` is accepted.
    """

    v_plus: float
    v_minus: float

    def __post_init__(self):
        vp, vm = float(self.v_plus), float(self.v_minus)
        if not (np.isfinite(vp) and np.isfinite(vm)):
            raise ValueError("step levels must be finite")
        if not vp < vm:
            raise ValueError(
                f"expected v_plus < v_minus, got v_plus={vp!r}, v_minus={vm!r}"
            )
        object.__setattr__(self, "v_plus", vp)
        object.__setattr__(self, "v_minus", vm)

    @property
    def gap(self) -> float:
        return self.v_minus - self.v_plus


@dataclass(frozen=True)
class SheetSignature:
    """Signs of ``Im r_+`` and ``Im r_-`` selecting one of the four sheets."""

    s_plus: int
    s_minus: int

    def __post_init__(self):
        if self.s_plus not in (1, -1) or self.s_minus not in (1, -1):
            raise ValueError(f"sheet signs must be +1 or -1, got {self!r}")

    @property
    def name(self) -> str:
        """Two-letter name: first letter for ``Im r_+``, second for ``Im r_-``."""
        return ("p" if self.s_plus > 0 else "m") + ("p" if self.s_minus > 0 else "m")

    @property
    def is_physical(self) -> bool:
        return self.s_plus == 1 and self.s_minus == 1

    @classmethod
    def from_name(cls, name: str) -> "SheetSignature":
        table = {"p": 1, "m": -1, "+": 1, "-": -1}
        if len(name) != 2 or any(c not in table for c in name):
            raise ValueError(f"unknown sheet name {name!r}; use one of pp, pm, mp, mm")
        return cls(table[name[0]], table[name[1]])

    def __str__(self) -> str:
        return self.name


PHYSICAL = SheetSignature(1, 1)
SHEETS = (
    SheetSignature(1, 1),
    SheetSignature(1, -1),
    SheetSignature(-1, 1),
    SheetSignature(-1, -1),
)


def sqrt_upper(w):
    """Square root mapping ``C \\ [0, inf)`` onto the open upper half plane.

    Values on ``[0, inf)`` itself are the limits from the upper half plane
    (i.e. the nonnegative root).
    """
    w = np.asarray(w, dtype=complex)
    out = 1j * np.sqrt(-w)
    # np.sqrt(-x - 0j) for x > 0 returns -i sqrt(x) (signed zero); force the upper limit
    on = (w.imag == 0) & (w.real > 0)
    if np.any(on):
        out = np.where(on, np.sqrt(np.abs(w.real)) + 0j, out)
    return out


@dataclass(frozen=True)
class SurfacePoint:
    """A point of the surface.

    Parameters
    ----------
    z : complex
        Projection of the point to the energy plane.
    sheet : SheetSignature
        Signs of ``Im r_+`` and ``Im r_-`` (off the cuts).
    boundary_side : {+1, -1, None}
        For ``z`` on a cut, the half plane from which the boundary value is
        taken.  Must be given iff ``z`` lies on a cut; this is checked when the
        roots are evaluated since the cut positions depend on the levels.
    """

    z: complex
    sheet: SheetSignature = PHYSICAL
    boundary_side: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "z", complex(self.z))
        if self.boundary_side not in (None, 1, -1):
            raise ValueError("boundary_side must be +1, -1 or None")

    def conjugate(self) -> "SurfacePoint":
        """Mirror image under ``z -> conj(z)``; for real potentials coefficients conjugate."""
        side = None if self.boundary_side is None else -self.boundary_side
        return SurfacePoint(self.z.conjugate(), self.sheet, side)


def on_cut(z, level) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return (z.imag == 0) & (z.real > level)


def is_branch_point(p: SurfacePoint, levels: StepLevels, atol: float = 0.0) -> bool:
    return abs(p.z - levels.v_plus) <= atol or abs(p.z - levels.v_minus) <= atol


def _root(z, level, sign, side):
    z = np.asarray(z, dtype=complex)
    w = z - level
    val = sqrt_upper(w)
    cut = on_cut(z, level)
    if np.any(cut):
        if side is None:
            raise ValueError(
                f"point on the cut [{level}, inf) needs boundary_side (+1 upper, -1 lower)"
            )
        val = np.where(cut, np.sign(side) * np.sqrt(np.abs(w.real)) + 0j, val)
    return sign * val


def r_plus(p: SurfacePoint, levels: StepLevels) -> complex:
    """``r_+ = s_+ sqrt(z - V_+)`` with the sheet's sign (boundary value on the cut)."""
    return complex(_root(p.z, levels.v_plus, p.sheet.s_plus, p.boundary_side))


def r_minus(p: SurfacePoint, levels: StepLevels) -> complex:
    """``r_- = s_- sqrt(z - V_-)`` with the sheet's sign (boundary value on the cut)."""
    return complex(_root(p.z, levels.v_minus, p.sheet.s_minus, p.boundary_side))


def omega_plus(p: SurfacePoint) -> SurfacePoint:
    """Deck transformation negating ``r_+``."""
    return SurfacePoint(p.z, SheetSignature(-p.sheet.s_plus, p.sheet.s_minus), p.boundary_side)


def omega_minus(p: SurfacePoint) -> SurfacePoint:
    """Deck transformation negating ``r_-``."""
    return SurfacePoint(p.z, SheetSignature(p.sheet.s_plus, -p.sheet.s_minus), p.boundary_side)


def omega_pm(p: SurfacePoint) -> SurfacePoint:
    """Deck transformation negating both roots."""
    return SurfacePoint(p.z, SheetSignature(-p.sheet.s_plus, -p.sheet.s_minus), p.boundary_side)


def from_k(k: complex, levels: StepLevels) -> SurfacePoint:
    """Point on the closure of the physical sheet with ``r_+ = k``.

    The projection is ``k**2 + V_+``.  For real ``k`` the point is the boundary
    value reached from ``Im k > 0``; then ``r_-`` has the sign of ``k`` once
    ``k**2 > V_- - V_+``.
    """
    k = complex(k)
    if k.imag < 0:
        raise ValueError(f"from_k needs Im k >= 0, got {k!r}")
    z = k * k + levels.v_plus
    if k.imag > 0:
        return SurfacePoint(z, PHYSICAL)
    z = complex(z.real, 0.0)
    if k.real == 0:
        return SurfacePoint(z, PHYSICAL)
    return SurfacePoint(z, PHYSICAL, 1 if k.real > 0 else -1)


@dataclass(frozen=True)
class SheetPoints:
    """A batch of surface points stored as ``(z, r_+, r_-)`` arrays.

    The roots are the primary data; deck transformations simply negate them.
    """

    z: np.ndarray
    r_plus: np.ndarray
    r_minus: np.ndarray

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=complex))
        rp = np.broadcast_to(np.asarray(self.r_plus, dtype=complex), z.shape)
        rm = np.broadcast_to(np.asarray(self.r_minus, dtype=complex), z.shape)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "r_plus", np.array(rp))
        object.__setattr__(self, "r_minus", np.array(rm))

    def __len__(self) -> int:
        return self.z.size

    @classmethod
    def on_sheet(cls, z, sheet: SheetSignature, levels: StepLevels, side=None) -> "SheetPoints":
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        rp = _root(z, levels.v_plus, sheet.s_plus, side)
        rm = _root(z, levels.v_minus, sheet.s_minus, side)
        return cls(z, rp, rm)

    @classmethod
    def from_points(cls, points, levels: StepLevels) -> "SheetPoints":
        points = list(points)
        z = [p.z for p in points]
        rp = [r_plus(p, levels) for p in points]
        rm = [r_minus(p, levels) for p in points]
        return cls(np.array(z), np.array(rp), np.array(rm))

    @classmethod
    def from_k(cls, k, levels: StepLevels) -> "SheetPoints":
        """Closure of the physical sheet parametrised by ``k = r_+`` (``Im k >= 0``)."""
        k = np.atleast_1d(np.asarray(k, dtype=complex))
        if np.any(k.imag < 0):
            raise ValueError("from_k needs Im k >= 0")
        w = k * k + (levels.v_plus - levels.v_minus)
        rm = sqrt_upper(w)
        real = (k.imag == 0) & (w.real > 0)
        rm = np.where(real, np.sign(k.real) * np.sqrt(np.abs(w.real)) + 0j, rm)
        return cls(k * k + levels.v_plus, k, rm)

    def omega_plus(self) -> "SheetPoints":
        return SheetPoints(self.z, -self.r_plus, self.r_minus)

    def omega_minus(self) -> "SheetPoints":
        return SheetPoints(self.z, self.r_plus, -self.r_minus)

    def omega_pm(self) -> "SheetPoints":
        return SheetPoints(self.z, -self.r_plus, -self.r_minus)

    def conjugate(self) -> "SheetPoints":
        return SheetPoints(self.z.conj(), -self.r_plus.conj(), -self.r_minus.conj())

    def take(self, idx) -> "SheetPoints":
        return SheetPoints(self.z[idx], self.r_plus[idx], self.r_minus[idx])
