"""Numerical laboratory for resonances of one-dimensional Schrodinger operators
with steplike potentials.

The package evaluates scattering data on the four-sheeted energy surface,
locates and counts resonances sheet by sheet, checks asymptotic laws for their
distribution, and runs round-trips of the inverse-side formulas.
"""
from .riemann import (
    PHYSICAL,
    SHEETS,
    SheetPoints,
    SheetSignature,
    StepLevels,
    SurfacePoint,
    from_k,
    omega_minus,
    omega_plus,
    omega_pm,
    r_minus,
    r_plus,
)
from .potential import (
    BumpPerturbation,
    PiecewiseConstantPotential,
    SmoothPerturbationPotential,
    TablePerturbation,
    discretize,
    load_potential,
    support_hull,
)
from .scattering import (
    check_identities,
    coefficient_arrays,
    scattering_coefficients,
    step_reference,
)

__version__ = "0.1.0"
