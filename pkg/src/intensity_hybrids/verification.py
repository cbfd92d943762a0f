"""Numerical checks of the projection-built fields against the wave-function reference.

Used by the ``verify`` subcommand and by the test suite.  Every check returns
a plain dict holding the measured worst case, the tolerance and ``passed``.
"""
from __future__ import annotations

import numpy as np

from . import oracle
from .fields import CoherenceMode, two_slit
from .packets import TAU, PacketParams, sigma_t
from .attenuation import apply_stochastic


def standard_grid(packets: tuple[PacketParams, PacketParams], t: float, n: int,
                  half_widths: float = 10.0) -> np.ndarray:
    """``n`` points from 10 widths left of slit 1 to 10 widths right of slit 2."""
    lo = packets[0].center_x - half_widths * float(sigma_t(packets[0], t))
    hi = packets[1].center_x + half_widths * float(sigma_t(packets[1], t))
    return np.linspace(lo, hi, n)


def attenuated(packets, a):
    return packets[0], apply_stochastic(packets[1], a)


def oracle_equivalence(packets, a: float, t: float, n: int = 10_000,
                       density_rtol: float = 1e-10, velocity_rtol: float = 1e-8) -> dict:
    """Worst density and velocity deviations from ``|psi1 + psi2|^2`` and ``Im(psi'/psi)``."""
    pk = attenuated(packets, a)
    x = standard_grid(pk, t, n)
    f = two_slit(pk, x, t, CoherenceMode.COHERENT)
    psi1, psi2 = oracle.psi(pk[0], x, t), oracle.psi(pk[1], x, t)
    born = oracle.born_density(psi1, psi2)
    vb, node_b = oracle.bohm_velocity(psi1, psi2)
    both = ~(f.node | node_b)
    dens = float(np.max(np.abs(f.Ptot - born)) / np.max(f.Ptot))
    vscale = float(np.max(np.abs(vb[both])))
    vel = float(np.max(np.abs(f.vtot[both] - vb[both])) / vscale)
    node_mismatch = int(np.count_nonzero(f.node != node_b))
    return {
        "a": a, "t": t,
        "density_deviation": dens, "density_rtol": density_rtol,
        "velocity_deviation": vel, "velocity_rtol": velocity_rtol,
        "node_mismatch": node_mismatch,
        "passed": bool(dens <= density_rtol and vel <= velocity_rtol and node_mismatch == 0),
    }


def _local_max(values: np.ndarray, half_window: int) -> np.ndarray:
    from scipy.ndimage import maximum_filter1d
    return maximum_filter1d(values, size=2 * half_window + 1, mode="nearest")


def continuity_residual(density, current, x: np.ndarray, t: float,
                        dt: float = 1e-5 * TAU, dx: float = 1e-5,
                        window: float = 0.5) -> np.ndarray:
    """``|dP/dt + dJ/dx|`` relative to the local max of ``|dJ/dx|``.

    ``density(x, t)`` and ``current(x, t)`` are callables.  Derivatives are
    central differences; the local scale is the largest ``|dJ/dx|`` within
    ``window`` widths of each point.
    """
    dPdt = (density(x, t + dt) - density(x, t - dt)) / (2 * dt)
    dJdx = (current(x + dx, t) - current(x - dx, t)) / (2 * dx)
    spacing = float(np.mean(np.diff(x)))
    width = float(np.sqrt(1.0 + (t / TAU) ** 2))
    half = max(1, int(round(window * width / spacing)))
    scale = _local_max(np.abs(dJdx), half)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.abs(dPdt + dJdx) / scale
    return np.where(scale > 0, ratio, 0.0)


def fields_continuity(packets, a: float, t: float, mode: CoherenceMode,
                      n: int = 10_000, rtol: float = 1e-4) -> dict:
    pk = attenuated(packets, a)
    x = standard_grid(pk, t, n)
    r = continuity_residual(lambda xx, tt: two_slit(pk, xx, tt, mode).Ptot,
                            lambda xx, tt: two_slit(pk, xx, tt, mode).Jtot, x, t)
    worst = float(np.max(r))
    return {"a": a, "t": t, "mode": mode.value, "residual": worst, "rtol": rtol,
            "passed": bool(worst < rtol)}


def oracle_continuity(packets, a: float, t: float, n: int = 10_000, rtol: float = 1e-4) -> dict:
    pk = attenuated(packets, a)
    x = standard_grid(pk, t, n)

    def dens(xx, tt):
        return oracle.born_density(oracle.psi(pk[0], xx, tt), oracle.psi(pk[1], xx, tt))

    def cur(xx, tt):
        return oracle.current(oracle.psi(pk[0], xx, tt), oracle.psi(pk[1], xx, tt))

    worst = float(np.max(continuity_residual(dens, cur, x, t)))
    return {"a": a, "t": t, "residual": worst, "rtol": rtol, "passed": bool(worst < rtol)}


def verify_all(packets, *, a_values, continuity_a_values, times, modes,
               n: int = 10_000, density_rtol=1e-10, velocity_rtol=1e-8,
               continuity_rtol=1e-4) -> dict:
    """Run every check; ``passed`` is true only if all of them pass."""
    equivalence = [oracle_equivalence(packets, a, t, n, density_rtol, velocity_rtol)
                   for a in a_values for t in times]
    continuity = [fields_continuity(packets, a, t, m, n, continuity_rtol)
                  for m in modes for a in continuity_a_values for t in times]
    reference = [oracle_continuity(packets, a, t, n, continuity_rtol)
                 for a in continuity_a_values for t in times]
    checks = equivalence + continuity + reference
    return {
        "oracle_equivalence": equivalence,
        "continuity": continuity,
        "oracle_continuity": reference,
        "max_density_deviation": max(c["density_deviation"] for c in equivalence),
        "max_velocity_deviation": max(c["velocity_deviation"] for c in equivalence),
        "max_continuity_residual": {m.value: max(c["residual"] for c in continuity
                                                 if c["mode"] == m.value) for m in modes},
        "passed": all(c["passed"] for c in checks),
    }
