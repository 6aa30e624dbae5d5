"""Command-line front end: ``steplike <command> [options]``.

Commands
--------
scatter        coefficient table at given energies
resonances     located resonances in a region (CSV or JSON)
count          counting function report with slope fit
identities     residual table of the coefficient identities at random points
indicator      directional growth estimates
inverse-check  round-trip report for the boundary recovery and normalisation

Options may also come from a JSON ``--config`` file (validated before any
computation); flags given on the command line win.  Exit codes: 0 success,
2 invalid input, 3 unresolved zeros, 4 numerical failure or failed check.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from ._serial import dumps
from .asymptotics import counting_function, indicator_estimate, predicted_slope
from .inverse import (
    normalization_case_analysis,
    product_error_vs_truncation,
    recover_R_minus_on_boundary,
)
from .potential import PotentialError, SmoothPerturbationPotential, load_potential, potential_to_dict, support_hull
from .resonances import (
    ContourTooClose,
    SearchRegion,
    boundary_scan,
    locate,
    resonances_from_csv,
    resonances_from_json,
    resonances_to_csv,
    resonances_to_json,
)
from .riemann import SHEETS, SheetPoints, SheetSignature
from .scattering import EngineError, coefficient_arrays, identity_residuals

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_UNRESOLVED, EXIT_FAILED = 0, 2, 3, 4
SHEET_NAMES = [s.name for s in SHEETS]

_num = {"type": "number"}
CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "potential": {"type": "string"},
        "sheet": {"type": "array", "items": {"enum": SHEET_NAMES}, "minItems": 1},
        "rect": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "rmax": {"type": "number", "exclusiveMinimum": 0},
        "out": {"type": "string"},
        "format": {"enum": ["csv", "json"]},
        "seed": {"type": "integer"},
        "truncation_K": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "allow_unresolved": {"type": "boolean"},
        "threads": {"type": "integer", "minimum": 1},
        "engine": {"enum": ["auto", "transfer", "ode"]},
        "rtol": {"type": "number", "exclusiveMinimum": 0},
        "n": {"type": "integer", "minimum": 1},
        "z": {"type": "array", "items": {"type": "string"}},
        "zrange": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
        "phi": {"type": "array", "items": _num},
        "radii": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
        "target": {"type": "string"},
        "predict": {"enum": ["auto", "hull", "mp", "pm", "none"]},
        "max_residual": {"type": "number", "exclusiveMinimum": 0},
        "resonances": {"type": "string"},
        "boundary_scan": {"type": "boolean"},
    },
}

DEFAULTS = {
    "sheet": None,
    "tol": 1e-13,
    "format": "csv",
    "seed": 0,
    "allow_unresolved": False,
    "threads": 1,
    "engine": "auto",
    "rtol": 1e-11,
    "n": 50,
    "max_residual": 1e-9,
    "predict": "auto",
    "target": "R_minus",
    "boundary_scan": False,
}


class CliError(Exception):
    """Input error reported as a structured message with exit code 2."""

    def __init__(self, field: str, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.field = field
        self.code = code


# ----------------------------------------------------------------------------
# Helpers
# ----------------------------------------------------------------------------


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _sheets(args, default):
    names = args.sheet or default
    return [SheetSignature.from_name(n) for n in names]


def _potential(args):
    if not args.potential:
        raise CliError("potential", "--potential is required")
    if not Path(args.potential).exists():
        raise CliError("potential", f"file not found: {args.potential}")
    return load_potential(args.potential)


def _parse_complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise CliError("z", f"not a complex number: {text!r}") from exc


def _fmt(x) -> str:
    return format(float(x), ".17g")


# ----------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------


def cmd_scatter(args) -> int:
    """Coefficients ``T_-, T_+, R_-, R_+`` at the requested energies on one sheet."""
    V = _potential(args)
    sheet = _sheets(args, ["pp"])[0]
    if args.z:
        z = np.array([_parse_complex(s) for s in args.z])
    elif args.zrange:
        a, b, n = args.zrange
        z = np.linspace(a, b, int(n)) + 0j
    else:
        raise CliError("z", "give --z or --zrange")
    pts = SheetPoints.on_sheet(z, sheet, V.levels, side=1)
    arr = coefficient_arrays(V, pts, args.engine, args.rtol)
    poles = arr.is_pole()
    rows = []
    for i in range(len(pts)):
        row = {"re_z": pts.z[i].real, "im_z": pts.z[i].imag, "sheet": sheet.name}
        for name, val in (("rplus", pts.r_plus[i]), ("rminus", pts.r_minus[i]), ("T_minus", arr.t_minus[i]),
                          ("T_plus", arr.t_plus[i]), ("R_minus", arr.r_minus_coeff[i]),
                          ("R_plus", arr.r_plus_coeff[i])):
            row["re_" + name] = val.real
            row["im_" + name] = val.imag
        row["pole"] = bool(poles[i])
        rows.append(row)
    if args.format == "json":
        _emit(dumps({"rows": rows}), args.out)
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()) if rows else ["re_z"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in r.items()})
        _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _regions(args, sheets):
    if args.rect:
        re0, re1, im0, im1 = args.rect
        return [SearchRegion(s, re0, re1, im0, im1) for s in sheets]
    if args.rmax:
        R = args.rmax**2
        return [SearchRegion(s, -R, R, -R, R) for s in sheets]
    raise CliError("rect", "give --rect or --rmax")


def _collect(V, regions, args):
    found, unresolved, candidates = [], [], []
    for reg in regions:
        res = locate(V, reg, tol=args.tol, engine=args.engine, rtol=args.rtol)
        found += res.resonances
        unresolved += [(reg.sheet.name, b, c) for b, c in res.unresolved]
        candidates += [(reg.sheet.name, b, c) for b, c in res.branch_candidates]
    return found, unresolved, candidates


def cmd_resonances(args) -> int:
    """Resonances in ``--rect`` (or ``|z| <= rmax^2``) on the selected sheets."""
    V = _potential(args)
    sheets = _sheets(args, ["mm", "mp", "pm"])
    found, unresolved, candidates = _collect(V, _regions(args, sheets), args)
    if args.format == "json":
        extra = {
            "unresolved": [{"sheet": s, "box": list(b), "count": c} for s, b, c in unresolved],
            "branch_candidates": [{"sheet": s, "box": list(b), "count": c} for s, b, c in candidates],
        }
        _emit(resonances_to_json(found, extra=extra), args.out)
    else:
        _emit(resonances_to_csv(found), args.out)
    for s, b, c in candidates:
        log.warning("branch-point candidate on %s: box %s, count %d", s, b, c)
    if unresolved and not args.allow_unresolved:
        for s, b, c in unresolved:
            sys.stderr.write(dumps({"error": "unresolved", "sheet": s, "box": list(b), "count": c}))
        return EXIT_UNRESOLVED
    return EXIT_OK


def cmd_count(args) -> int:
    """Counting function over the selected sheets with a slope fit."""
    V = _potential(args)
    sheets = _sheets(args, ["mm"])
    if not args.rmax:
        raise CliError("rmax", "--rmax is required")
    found, unresolved, _ = _collect(V, _regions(args, sheets), args)
    if unresolved and not args.allow_unresolved:
        raise CliError("rmax", f"{len(unresolved)} unresolved boxes; counts not certified", EXIT_UNRESOLVED)
    if args.boundary_scan:
        for s in sheets:
            found += boundary_scan(V, s, args.rmax**2, engine=args.engine, rtol=args.rtol)
    names = {s.name for s in sheets}
    kind = args.predict
    if kind == "auto":
        kind = "hull" if names in ({"mm"}, {"mp", "pm"}) else (names.pop() if len(names) == 1 and
                                                             names <= {"mp", "pm"} else "none")
    pred = None
    if kind == "hull":
        pred = predicted_slope("hull", V)
    elif kind in ("mp", "pm"):
        if not isinstance(V, SmoothPerturbationPotential):
            raise CliError("predict", "per-sheet predictions need a step plus perturbation potential")
        pred = predicted_slope(kind, V)
    rep = counting_function(found, [s.name for s in sheets], certified_radius=args.rmax, predicted=pred,
                            r_max=args.rmax)
    _emit(dumps(rep), args.out)
    return EXIT_OK


def cmd_identities(args) -> int:
    """Identity residuals at ``--n`` random points per sheet (``--seed``)."""
    V = _potential(args)
    sheets = _sheets(args, SHEET_NAMES)
    rng = np.random.default_rng(args.seed)
    scale = 50.0 if args.rmax is None else args.rmax**2
    table, worst = {}, 0.0
    for s in sheets:
        z = rng.uniform(-scale, scale, args.n) + 1j * rng.uniform(-scale, scale, args.n)
        pts = SheetPoints.on_sheet(z, s, V.levels)
        res = identity_residuals(V, pts, args.engine, args.rtol)
        row = {}
        for k, v in res.items():
            m = float(np.nanmax(v)) if np.any(np.isfinite(v)) else None
            row[k] = m
            if m is not None:
                worst = max(worst, m)
        table[s.name] = row
    rep = {"seed": args.seed, "points_per_sheet": args.n, "max_residual": worst, "residuals": table,
           "threshold": args.max_residual, "passed": worst <= args.max_residual}
    _emit(dumps(rep), args.out)
    return EXIT_OK if rep["passed"] else EXIT_FAILED


def cmd_indicator(args) -> int:
    """Indicator estimates along rays ``k = r e^{i phi}``."""
    V = _potential(args)
    phis = args.phi or [math.pi / 2]
    radii = np.geomspace(args.radii[0], args.radii[1], int(args.radii[2])) if args.radii else None
    reps = [indicator_estimate(V, p, radii, args.target, args.engine, args.rtol) for p in phis]
    hull = support_hull(V)
    _emit(dumps({"hull_length": hull.length, "estimates": [r.to_dict() for r in reps]}), args.out)
    return EXIT_OK


def cmd_inverse_check(args) -> int:
    """Round-trip recovery of ``R_-`` on the boundary and the normalisation analysis."""
    V = _potential(args)
    lv = V.levels
    a, b, n = args.zrange if args.zrange else (lv.v_minus + 1.0, lv.v_minus + 100.0, 400)
    z = np.linspace(a, b, int(n))
    rec = recover_R_minus_on_boundary(V, z, engine=args.engine, rtol=args.rtol).to_dict()
    rec.pop("recovered", None)
    doc = {"potential": potential_to_dict(V), "recovery": rec}
    res = None
    if args.resonances:
        src = args.resonances
        res = resonances_from_json(src) if src.endswith(".json") else resonances_from_csv(src)
    doc["normalization"] = normalization_case_analysis(V, res, engine=args.engine, rtol=args.rtol).to_dict()
    if args.truncation_K:
        if res is None:
            raise CliError("resonances", "--truncation-K needs --resonances")
        doc["product_R"] = product_error_vs_truncation(V, res, args.truncation_K, engine=args.engine,
                                                       rtol=args.rtol).to_dict()
    _emit(dumps(doc), args.out)
    return EXIT_OK


COMMANDS = {
    "scatter": cmd_scatter,
    "resonances": cmd_resonances,
    "count": cmd_count,
    "identities": cmd_identities,
    "indicator": cmd_indicator,
    "inverse-check": cmd_inverse_check,
}


# ----------------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="steplike", description="Resonances of steplike Schrodinger operators.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__.splitlines()[0], description=fn.__doc__)
        sp.add_argument("--config", help="JSON file with option values")
        sp.add_argument("--potential", help="potential JSON file")
        sp.add_argument("--sheet", nargs="+", choices=SHEET_NAMES, default=None,
                        help="sheet signature(s): first letter sign of Im r+, second of Im r-")
        sp.add_argument("--rect", nargs=4, type=float, metavar=("RE0", "RE1", "IM0", "IM1"))
        sp.add_argument("--tol", type=float)
        sp.add_argument("--rmax", type=float, help="radius in r = sqrt|z|; the search covers |z| <= rmax^2")
        sp.add_argument("--out", help="output file (default stdout)")
        sp.add_argument("--format", choices=["csv", "json"])
        sp.add_argument("--seed", type=int)
        sp.add_argument("--truncation-K", dest="truncation_K", nargs="+", type=float)
        sp.add_argument("--allow-unresolved", dest="allow_unresolved", action="store_true", default=None)
        sp.add_argument("--threads", type=int, help="worker cap (the pipelines currently run serially)")
        sp.add_argument("--engine", choices=["auto", "transfer", "ode"])
        sp.add_argument("--rtol", type=float, help="ODE engine relative tolerance")
        sp.add_argument("--n", type=int, help="random points per sheet (identities)")
        sp.add_argument("--z", nargs="+", help="complex energies, e.g. 2 or 3-0.5j")
        sp.add_argument("--zrange", nargs=3, type=float, metavar=("A", "B", "N"))
        sp.add_argument("--phi", nargs="+", type=float, help="ray angles in radians")
        sp.add_argument("--radii", nargs=3, type=float, metavar=("RMIN", "RMAX", "N"))
        sp.add_argument("--target", help="R_minus, R_plus, T_minus, T_plus or a '*' product")
        sp.add_argument("--predict", choices=["auto", "hull", "mp", "pm", "none"])
        sp.add_argument("--max-residual", dest="max_residual", type=float)
        sp.add_argument("--resonances", help="resonance list (CSV or JSON) for inverse-check")
        sp.add_argument("--boundary-scan", dest="boundary_scan", action="store_true", default=None)
        sp.set_defaults(func=fn)
    return p


def _merge_config(args):
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError("config", str(exc)) from exc
        errors = sorted(jsonschema.Draft7Validator(CONFIG_SCHEMA).iter_errors(doc), key=lambda e: list(e.path))
        if errors:
            e = errors[0]
            raise CliError("config." + ".".join(str(p) for p in e.path) if e.path else "config", e.message)
        base = Path(args.config).parent
        for key, val in doc.items():
            if key in ("potential", "resonances") and not Path(val).is_absolute():
                val = str(base / val)
            if getattr(args, key, None) is None:
                setattr(args, key, val)
    for key, val in DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, val)
    if args.threads < 1:
        raise CliError("threads", "must be >= 1")
    return args


def main(argv=None) -> int:
    """Entry point; returns the exit code."""
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args)
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(dumps({"error": "invalid_input", "field": exc.field, "message": str(exc)}))
        return exc.code
    except PotentialError as exc:
        sys.stderr.write(dumps({"error": "invalid_potential", "field": exc.field, "message": str(exc)}))
        return EXIT_INVALID
    except (ContourTooClose, EngineError, ArithmeticError, ValueError) as exc:
        sys.stderr.write(dumps({"error": type(exc).__name__, "message": str(exc)}))
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
