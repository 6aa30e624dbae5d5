"""Independent high-precision references for staircase potentials.

Everything here uses mpmath with plain (unscaled) propagation by the exact
layer solutions, so it shares no code with the package engines.
"""
import mpmath as mp
import numpy as np


def _propagate(z, bps, vals, u, du, forward=True):
    layers = list(zip(zip(bps[:-1], bps[1:]), vals))
    if not forward:
        layers = layers[::-1]
    for (a, b), v in layers:
        q = mp.sqrt(mp.mpc(z) - v)
        h = (b - a) if forward else (a - b)
        c = mp.cos(q * h)
        s = mp.sin(q * h) / q if q != 0 else mp.mpf(h)
        u, du = u * c + du * s, -u * q * q * s + du * c
    return u, du


def coefficients(bps, vals, z, rp, rm, dps=40):
    """``(T_-, T_+, R_-, R_+, D)`` at the surface point with roots ``rp, rm``."""
    with mp.workdps(dps):
        z, rp, rm = mp.mpc(z), mp.mpc(rp), mp.mpc(rm)
        x0, xn = mp.mpf(bps[0]), mp.mpf(bps[-1])
        em = mp.exp(-1j * rm * x0)
        u, du = _propagate(z, bps, vals, em, -1j * rm * em)
        ep = mp.exp(1j * rp * xn)
        g, dg = _propagate(z, bps, vals, ep, 1j * rp * ep, forward=False)
        D = u * (1j * rp * ep) - du * ep
        t_minus = 2j * rp / D
        t_plus = 2j * rm / D
        r_minus = mp.exp(-2j * rp * xn) * (1j * rp * u + du) / (1j * rp * u - du)
        r_plus = mp.exp(2j * rm * x0) * (1j * rm * g - dg) / (1j * rm * g + dg)
        return tuple(complex(w) for w in (t_minus, t_plus, r_minus, r_plus, D))


def _sheet_root(z, level, sign):
    return sign * 1j * mp.sqrt(-(mp.mpc(z) - level))


def brute_force_resonances(bps, vals, v_plus, v_minus, radius, kx=40.0, ky=10.0, nx=4001, ny=1001):
    """All zeros of ``D`` with ``|z| <= radius`` on the three unphysical sheets.

    Local minima of ``log|F|`` on a grid in ``k = r_+`` seed ``mp.findroot``
    at 30 digits; roots are kept on the sheet matching the signs of their
    roots.  Returns a dict keyed by sheet name.
    """
    bps = tuple(float(b) for b in bps)
    a, b = bps[0], bps[-1]

    def F_np(k, sm):
        z = k * k + v_plus
        rm = sm * 1j * np.sqrt(-(z - v_minus) + 0j)
        u, du = np.ones_like(z), -1j * rm
        for (l, r), v in zip(zip(bps[:-1], bps[1:]), vals):
            q = np.sqrt(z - v + 0j)
            h = r - l
            qs = np.where(q == 0, 1, q)
            c, s = np.cos(q * h), np.where(q == 0, h, np.sin(q * h) / qs)
            u, du = u * c + du * s, -u * q * q * s + du * c
        return du - 1j * k * u

    def F_mp(z, sm, sp):
        rp, rm = _sheet_root(z, v_plus, sp), _sheet_root(z, v_minus, sm)
        u, du = _propagate(z, bps, vals, mp.mpf(1), -1j * rm)
        return du - 1j * rp * u

    x = np.linspace(-kx, kx, nx)
    y = np.linspace(-ky, ky, ny)
    K = x[None, :] + 1j * y[:, None]
    found = {"mm": [], "mp": [], "pm": [], "pp": []}
    with mp.workdps(30):
        for sm in (1, -1):
            with np.errstate(all="ignore"):
                A = np.log(np.abs(F_np(K, sm)))
            c = A[1:-1, 1:-1]
            lm = (c < A[:-2, 1:-1]) & (c < A[2:, 1:-1]) & (c < A[1:-1, :-2]) & (c < A[1:-1, 2:])
            for i, j in zip(*np.nonzero(lm)):
                k = K[i + 1, j + 1]
                sp = 1 if k.imag > 0 else -1
                try:
                    z = complex(mp.findroot(lambda w: F_mp(w, sm, sp), mp.mpc(k * k + v_plus), tol=1e-40, maxsteps=50))
                except (ValueError, ZeroDivisionError):
                    continue
                rp = complex(_sheet_root(z, v_plus, sp))
                rm = complex(_sheet_root(z, v_minus, sm))
                if np.sign(rp.imag) != sp or np.sign(rm.imag) != sm or abs(z) > radius:
                    continue
                name = ("p" if sp > 0 else "m") + ("p" if sm > 0 else "m")
                if all(abs(z - w) > 1e-9 * max(1, abs(z)) for w in found[name]):
                    found[name].append(z)
    return found
