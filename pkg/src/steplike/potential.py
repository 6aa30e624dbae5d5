"""Steplike potentials.

Two families share one interface (``levels``, ``x_left``, ``x_right``, call
evaluation):

* :class:`PiecewiseConstantPotential` -- a staircase, handled exactly by
  transfer matrices;
* :class:`SmoothPerturbationPotential` -- a reference step at ``beta`` plus a
  continuous compactly supported perturbation, handled by the ODE engine or by
  :func:`discretize`.

Potentials can be read from JSON documents, see :func:`load_potential`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import jsonschema
import numpy as np

from .riemann import StepLevels

__all__ = [
    "PotentialError",
    "SupportHull",
    "PiecewiseConstantPotential",
    "BumpPerturbation",
    "TablePerturbation",
    "SmoothPerturbationPotential",
    "support_hull",
    "discretize",
    "discretization_error_bound",
    "load_potential",
    "potential_to_dict",
    "POTENTIAL_SCHEMA",
]


class PotentialError(ValueError):
    """Invalid potential description; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class SupportHull:
    """Convex hull ``[a, b]`` of the support of ``V'``."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a <= self.b:
            raise ValueError(f"hull needs a <= b, got [{self.a}, {self.b}]")

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def center(self) -> float:
        return 0.5 * (self.a + self.b)


@dataclass(frozen=True)
class PiecewiseConstantPotential:
    """Staircase potential.

    ``values[i]`` is the value on ``(breakpoints[i], breakpoints[i+1])``; the
    potential equals ``levels.v_minus`` left of ``breakpoints[0]`` and
    ``levels.v_plus`` right of ``breakpoints[-1]``.  Coincident breakpoints are
    merged on construction (the zero-width layer is dropped).
    """

    levels: StepLevels
    breakpoints: tuple
    values: tuple = ()

    def __post_init__(self):
        bps = [float(x) for x in np.atleast_1d(np.asarray(self.breakpoints, dtype=float))]
        vals = [float(v) for v in np.atleast_1d(np.asarray(self.values, dtype=float))]
        if len(bps) == 0:
            raise PotentialError("breakpoints", "at least one breakpoint is required")
        if len(vals) != len(bps) - 1:
            raise PotentialError(
                "values",
                f"expected {len(bps) - 1} interior values for {len(bps)} breakpoints, got {len(vals)}",
            )
        if not all(np.isfinite(bps)) or not all(np.isfinite(vals)):
            raise PotentialError("breakpoints", "breakpoints and values must be finite")
        if any(b < a for a, b in zip(bps, bps[1:])):
            raise PotentialError("breakpoints", "breakpoints must be increasing")
        merged_b, merged_v = [bps[0]], []
        for x, v in zip(bps[1:], vals):
            if x == merged_b[-1]:
                continue
            merged_b.append(x)
            merged_v.append(v)
        object.__setattr__(self, "breakpoints", tuple(merged_b))
        object.__setattr__(self, "values", tuple(merged_v))

    @classmethod
    def step(cls, levels: StepLevels, beta: float = 0.0) -> "PiecewiseConstantPotential":
        """The pure step ``V_beta``."""
        return cls(levels, (beta,), ())

    @property
    def x_left(self) -> float:
        return self.breakpoints[0]

    @property
    def x_right(self) -> float:
        return self.breakpoints[-1]

    @property
    def n_layers(self) -> int:
        return len(self.values)

    @property
    def extended_values(self) -> tuple:
        """``(V_-, v_1, ..., v_n, V_+)``."""
        return (self.levels.v_minus, *self.values, self.levels.v_plus)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(np.asarray(self.breakpoints), x, side="right")
        return np.asarray(self.extended_values)[idx]

    def simplified(self) -> "PiecewiseConstantPotential":
        """Same function with breakpoints that carry no jump removed."""
        ext = self.extended_values
        keep = [i for i in range(len(self.breakpoints)) if ext[i] != ext[i + 1]]
        bps = [self.breakpoints[i] for i in keep]
        vals = [ext[i + 1] for i in keep[:-1]]
        return PiecewiseConstantPotential(self.levels, tuple(bps), tuple(vals))

    def translated(self, shift: float) -> "PiecewiseConstantPotential":
        return PiecewiseConstantPotential(
            self.levels, tuple(b + shift for b in self.breakpoints), self.values
        )


@dataclass(frozen=True)
class BumpPerturbation:
    """``amplitude * (1 - (x/b_1)**2)**power`` on ``[-b_1, b_1]``, zero outside.

    ``power=1`` gives a continuous profile with kinks at ``+-b_1``; larger
    powers are smoother.
    """

    amplitude: float
    b_1: float
    power: int = 1

    def __post_init__(self):
        if not self.b_1 > 0:
            raise PotentialError("perturbation.b_1", "half-width must be positive")
        if int(self.power) != self.power or self.power < 1:
            raise PotentialError("perturbation.power", "power must be an integer >= 1")

    @property
    def support(self) -> tuple:
        return (-self.b_1, self.b_1)

    @property
    def kinks(self) -> tuple:
        return (-self.b_1, self.b_1)

    @property
    def is_zero(self) -> bool:
        return self.amplitude == 0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        u = 1.0 - (x / self.b_1) ** 2
        return np.where(np.abs(x) < self.b_1, self.amplitude * np.maximum(u, 0.0) ** self.power, 0.0)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        u = np.maximum(1.0 - (x / self.b_1) ** 2, 0.0)
        d = self.amplitude * self.power * u ** (self.power - 1) * (-2.0 * x / self.b_1**2)
        return np.where(np.abs(x) < self.b_1, d, 0.0)

    def max_abs_derivative(self) -> float:
        x = np.linspace(-self.b_1, self.b_1, 2001)
        return float(np.max(np.abs(self.derivative(x))))


@dataclass(frozen=True)
class TablePerturbation:
    """Piecewise-linear interpolant of ``(x, values)``; zero outside ``[x[0], x[-1]]``.

    The end values must vanish so that the perturbation is continuous.
    """

    x: tuple
    values: tuple

    def __post_init__(self):
        x = tuple(float(t) for t in self.x)
        v = tuple(float(t) for t in self.values)
        if len(x) < 2 or len(x) != len(v):
            raise PotentialError("perturbation.values", "need matching x/values tables with >= 2 nodes")
        if any(b <= a for a, b in zip(x, x[1:])):
            raise PotentialError("perturbation.x", "nodes must be strictly increasing")
        if v[0] != 0 or v[-1] != 0:
            raise PotentialError("perturbation.values", "end values must be 0 (continuity)")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v)

    @property
    def support(self) -> tuple:
        nz = [i for i, v in enumerate(self.values) if v != 0]
        if not nz:
            return (self.x[0], self.x[0])
        return (self.x[nz[0] - 1], self.x[nz[-1] + 1])

    @property
    def kinks(self) -> tuple:
        return self.x

    @property
    def b_1(self) -> float:
        return max(abs(self.x[0]), abs(self.x[-1]))

    @property
    def is_zero(self) -> bool:
        return not any(self.values)

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.x, self.values, left=0.0, right=0.0)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        slopes = np.diff(self.values) / np.diff(self.x)
        idx = np.searchsorted(np.asarray(self.x), x, side="right") - 1
        inside = (idx >= 0) & (idx < len(slopes))
        return np.where(inside, slopes[np.clip(idx, 0, len(slopes) - 1)], 0.0)

    def max_abs_derivative(self) -> float:
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.x))))


Perturbation = Union[BumpPerturbation, TablePerturbation]


@dataclass(frozen=True)
class SmoothPerturbationPotential:
    """``V = V_+ H(x - beta) + V_- H(beta - x) + p(x)`` with continuous ``p``."""

    levels: StepLevels
    beta: float
    p: Perturbation

    def __post_init__(self):
        if not np.isfinite(self.beta):
            raise PotentialError("beta", "must be finite")
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def b_1(self) -> float:
        return self.p.b_1

    @property
    def x_left(self) -> float:
        lo, _ = self.p.support
        return min(self.beta, lo) if not self.p.is_zero else self.beta

    @property
    def x_right(self) -> float:
        _, hi = self.p.support
        return max(self.beta, hi) if not self.p.is_zero else self.beta

    def step_part(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.beta, self.levels.v_minus, self.levels.v_plus)

    def __call__(self, x):
        return self.step_part(x) + self.p(x)

    def nodes(self) -> np.ndarray:
        """Points splitting ``[x_left, x_right]`` into pieces on which V is smooth."""
        pts = {self.x_left, self.x_right, self.beta}
        pts.update(k for k in self.p.kinks if self.x_left < k < self.x_right)
        return np.array(sorted(pts))


def support_hull(V) -> SupportHull:
    """Smallest ``[a, b]`` outside of which ``V`` equals its tail values."""
    if isinstance(V, PiecewiseConstantPotential):
        ext = V.extended_values
        jumps = [x for i, x in enumerate(V.breakpoints) if ext[i] != ext[i + 1]]
        return SupportHull(min(jumps), max(jumps))
    if isinstance(V, SmoothPerturbationPotential):
        if V.p.is_zero:
            return SupportHull(V.beta, V.beta)
        lo, hi = V.p.support
        return SupportHull(min(lo, V.beta), max(hi, V.beta))
    raise TypeError(f"unsupported potential type {type(V).__name__}")


def discretize(V: SmoothPerturbationPotential, n_layers: int) -> PiecewiseConstantPotential:
    """Midpoint staircase of ``V`` with ``n_layers`` cells on ``[-b_1, b_1]``.

    The step at ``beta`` is kept exactly (it splits the cell containing it).
    Adjacent equal layers are merged, so ``p == 0`` gives the pure step.
    """
    if n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    lo, hi = -V.b_1, V.b_1
    edges = set(np.linspace(lo, hi, n_layers + 1).tolist())
    edges.add(V.beta)
    edges = np.array(sorted(edges))
    mids = 0.5 * (edges[:-1] + edges[1:])
    vals = V(mids)
    out = PiecewiseConstantPotential(V.levels, tuple(edges), tuple(vals))
    return out.simplified()


def discretization_error_bound(V: SmoothPerturbationPotential, n_layers: int) -> float:
    """Sup-norm bound ``max|p'| * width / 2`` for :func:`discretize`."""
    width = 2.0 * V.b_1 / n_layers
    return V.p.max_abs_derivative() * width / 2.0


_number = {"type": "number"}
POTENTIAL_SCHEMA = {
    "type": "object",
    "required": ["v_minus", "v_plus"],
    "properties": {
        "v_minus": _number,
        "v_plus": _number,
        "breakpoints": {"type": "array", "items": _number, "minItems": 1},
        "values": {"type": "array", "items": _number},
        "beta": _number,
        "perturbation": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["bump", "table"]},
                "amplitude": _number,
                "b_1": _number,
                "power": {"type": "integer", "minimum": 1},
                "x": {"type": "array", "items": _number},
                "values": {"type": "array", "items": _number},
            },
        },
    },
    "oneOf": [
        {"required": ["breakpoints", "values"], "not": {"required": ["perturbation"]}},
        {"required": ["beta", "perturbation"], "not": {"required": ["breakpoints"]}},
    ],
}


def load_potential(source) -> Union[PiecewiseConstantPotential, SmoothPerturbationPotential]:
    """Build a potential from a JSON file path, JSON text, or an already parsed dict.

    Raises :class:`PotentialError` naming the offending field.
    """
    if isinstance(source, dict):
        doc = source
    else:
        path = Path(source)
        text = path.read_text() if path.exists() else str(source)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PotentialError("<document>", f"not valid JSON ({exc})") from exc
    validator = jsonschema.Draft7Validator(POTENTIAL_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        field = ".".join(str(p) for p in err.path) or "<document>"
        raise PotentialError(field, err.message)
    try:
        levels = StepLevels(doc["v_plus"], doc["v_minus"])
    except ValueError as exc:
        raise PotentialError("v_plus", str(exc)) from exc
    if "breakpoints" in doc:
        return PiecewiseConstantPotential(levels, tuple(doc["breakpoints"]), tuple(doc["values"]))
    pert = doc["perturbation"]
    if pert["kind"] == "bump":
        for key in ("amplitude", "b_1"):
            if key not in pert:
                raise PotentialError(f"perturbation.{key}", "required for kind 'bump'")
        p = BumpPerturbation(pert["amplitude"], pert["b_1"], pert.get("power", 1))
    else:
        for key in ("x", "values"):
            if key not in pert:
                raise PotentialError(f"perturbation.{key}", "required for kind 'table'")
        p = TablePerturbation(tuple(pert["x"]), tuple(pert["values"]))
    return SmoothPerturbationPotential(levels, doc["beta"], p)


def potential_to_dict(V) -> dict:
    """Inverse of :func:`load_potential`."""
    doc = {"v_minus": V.levels.v_minus, "v_plus": V.levels.v_plus}
    if isinstance(V, PiecewiseConstantPotential):
        doc.update(breakpoints=list(V.breakpoints), values=list(V.values))
    elif isinstance(V.p, BumpPerturbation):
        doc.update(
            beta=V.beta,
            perturbation={"kind": "bump", "amplitude": V.p.amplitude, "b_1": V.p.b_1, "power": V.p.power},
        )
    else:
        doc.update(beta=V.beta, perturbation={"kind": "table", "x": list(V.p.x), "values": list(V.p.values)})
    return doc
