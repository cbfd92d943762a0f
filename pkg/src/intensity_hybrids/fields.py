"""Two-channel densities, currents and velocities built from projections.

Each channel contributes an amplitude ``R_i``, a convective velocity ``v_i``
and a diffusive velocity ``u_i``.  The relative phase ``phi`` couples them:

    P_i   = R_i^2 + R1 R2 cos(phi)
    J_tot = R1^2 v1 + R2^2 v2 + R1 R2 (v1 + v2) cos(phi) + R1 R2 (u1 - u2) sin(phi)
    v_tot = J_tot / P_tot

Products of amplitudes are formed as ``exp(logR1 + logR2 - 2M)`` with
``M = max(logR1, logR2)``; every quantity is kept relative to the common
scale ``exp(2M)`` so that transmission factors down to 1e-10 and far
Gaussian tails never underflow.  The velocity is a ratio of two scaled
numbers and is therefore exact wherever the density is above the floor.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .packets import PacketParams, PacketSample, packet_eval

#: default density floor (internal units) below which a point counts as a node
DENSITY_FLOOR = 1e-300
_LOG_TINY = np.log(np.finfo(float).tiny)


class CoherenceMode(enum.Enum):
    COHERENT = "coherent"
    INCOHERENT = "incoherent"


@dataclass(frozen=True)
class Projections:
    Pv1: np.ndarray
    Pu1R: np.ndarray
    Pu1L: np.ndarray
    Pv2: np.ndarray
    Pu2R: np.ndarray
    Pu2L: np.ndarray


@dataclass(frozen=True)
class FieldSample:
    """Assembled two-channel quantities at a set of points.

    ``log_scale`` is ``2 max(logR1, logR2)``; the ``*_scaled`` arrays are the
    physical ones divided by ``exp(log_scale)``.  ``underflow`` marks points
    where ``Ptot`` itself is not representable (it is then exactly 0), and
    ``node`` marks points below the density floor, where ``vtot`` is NaN.
    """

    P1: np.ndarray
    P2: np.ndarray
    Ptot: np.ndarray
    Jtot: np.ndarray
    vtot: np.ndarray
    phi: np.ndarray
    projections: Projections
    log_scale: np.ndarray
    Ptot_scaled: np.ndarray
    Jtot_scaled: np.ndarray
    log_Ptot: np.ndarray
    underflow: np.ndarray
    node: np.ndarray


class Velocity(NamedTuple):
    v: np.ndarray
    node: np.ndarray


def phase_difference(s1: PacketSample, s2: PacketSample, mode: CoherenceMode):
    """Relative phase ``S2 - S1`` (hbar = 1); pi/2 everywhere when incoherent."""
    if mode is CoherenceMode.INCOHERENT:
        return np.full(np.broadcast(s1.S, s2.S).shape, np.pi / 2)
    return np.asarray(s2.S - s1.S)


def _trig(s1, s2, mode):
    # exact zeros/ones in incoherent mode; cos(pi/2) is 6e-17, not 0
    if mode is CoherenceMode.INCOHERENT:
        shape = np.broadcast(s1.S, s2.S).shape
        return np.zeros(shape), np.ones(shape)
    phi = phase_difference(s1, s2, mode)
    return np.cos(phi), np.sin(phi)


def _scaled_amplitudes(s1, s2):
    logR1 = np.asarray(s1.logR, dtype=float)
    logR2 = np.asarray(s2.logR, dtype=float)
    M = np.maximum(logR1, logR2)
    finite = np.isfinite(M)
    Msafe = np.where(finite, M, 0.0)
    with np.errstate(invalid="ignore"):
        r1 = np.where(finite, np.exp(logR1 - Msafe), 0.0)
        r2 = np.where(finite, np.exp(logR2 - Msafe), 0.0)
    return r1, r2, 2.0 * M


def _unscale(scaled, log_scale):
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        out = scaled * np.exp(np.where(np.isfinite(log_scale), log_scale, -np.inf))
    return np.where(scaled == 0, 0.0, out)


def _assemble(s1, s2, mode):
    r1, r2, log_scale = _scaled_amplitudes(s1, s2)
    c, s = _trig(s1, s2, mode)
    cross = r1 * r2
    p1 = r1 * r1 + cross * c
    p2 = r2 * r2 + cross * c
    jtot = (r1 * r1 * s1.v + r2 * r2 * s2.v
            + cross * (s1.v + s2.v) * c
            + cross * (s1.u - s2.u) * s)
    return log_scale, cross * s, p1, p2, jtot


def _ratio(ptot, jtot, log_scale, density_floor):
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ptot = np.where(ptot > 0, np.log(np.where(ptot > 0, ptot, 1.0)) + log_scale,
                            -np.inf)
        node = ~(log_ptot >= np.log(density_floor))
        v = np.where(node, np.nan, jtot / np.where(node, 1.0, ptot))
    return v, node, log_ptot


def channel_projections(s1: PacketSample, s2: PacketSample,
                        mode: CoherenceMode) -> Projections:
    """The six pairwise projections; the R1 R2 weight multiplies the sin terms."""
    return evaluate(s1, s2, mode).projections


def channel_densities(s1: PacketSample, s2: PacketSample, mode: CoherenceMode):
    """``(P1, P2, Ptot, underflow)``; underflowed ``Ptot`` is exactly 0."""
    f = evaluate(s1, s2, mode)
    return f.P1, f.P2, f.Ptot, f.underflow


def total_current(s1: PacketSample, s2: PacketSample, mode: CoherenceMode):
    return evaluate(s1, s2, mode).Jtot


def total_velocity(s1: PacketSample, s2: PacketSample, mode: CoherenceMode,
                   density_floor: float = DENSITY_FLOOR) -> Velocity:
    """``J_tot / P_tot``; NaN and ``node=True`` where ``P_tot`` is below the floor."""
    log_scale, _, p1, p2, jtot = _assemble(s1, s2, mode)
    v, node, _ = _ratio(p1 + p2, jtot, log_scale, density_floor)
    return Velocity(v, node)


def evaluate(s1: PacketSample, s2: PacketSample, mode: CoherenceMode,
             density_floor: float = DENSITY_FLOOR) -> FieldSample:
    """All two-channel quantities for samples taken at the same points."""
    log_scale, cross_sin, p1, p2, jtot = _assemble(s1, s2, mode)
    ptot = p1 + p2
    vtot, node, log_ptot = _ratio(ptot, jtot, log_scale, density_floor)

    P1 = _unscale(p1, log_scale)
    P2 = _unscale(p2, log_scale)
    underflow = (ptot > 0) & (log_ptot < _LOG_TINY)
    Ptot = np.where(underflow, 0.0, P1 + P2)

    pu = _unscale(cross_sin, log_scale)
    projections = Projections(Pv1=P1, Pu1R=pu, Pu1L=-pu, Pv2=P2, Pu2R=-pu, Pu2L=pu)
    return FieldSample(
        P1=P1, P2=P2, Ptot=Ptot, Jtot=_unscale(jtot, log_scale), vtot=vtot,
        phi=phase_difference(s1, s2, mode), projections=projections,
        log_scale=log_scale, Ptot_scaled=ptot, Jtot_scaled=jtot, log_Ptot=log_ptot,
        underflow=underflow, node=node,
    )


def two_slit(packets: tuple[PacketParams, PacketParams], x, t,
             mode: CoherenceMode = CoherenceMode.COHERENT,
             density_floor: float = DENSITY_FLOOR) -> FieldSample:
    """Evaluate both packets at ``(x, t)`` and assemble the fields."""
    s1 = packet_eval(packets[0], x, t)
    s2 = packet_eval(packets[1], x, t)
    return evaluate(s1, s2, mode, density_floor=density_floor)


def velocity(packets: tuple[PacketParams, PacketParams], x, t,
             mode: CoherenceMode = CoherenceMode.COHERENT,
             density_floor: float = DENSITY_FLOOR) -> Velocity:
    """``v_tot`` at ``(x, t)``; the hot path of the trajectory integrator."""
    s1 = packet_eval(packets[0], x, t)
    s2 = packet_eval(packets[1], x, t)
    return total_velocity(s1, s2, mode, density_floor)
