"""Beam attenuation in the right-hand slit: foil (stochastic) and chopper (deterministic).

A foil scales the slit-2 amplitude by ``sqrt(a)``.  A chopper leaves the
amplitude alone but blocks slit 2 for a fraction ``1 - a`` of the time, so the
screen sees the mixture ``(1 - a) P1' + a (P1 + P2)`` with ``P1' = R1^2``.
:class:`AttenuatedField` provides density, current and velocity for every
mode so that the integrator and the screens do not care which one is active.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import fields
from .fields import DENSITY_FLOOR, CoherenceMode
from .packets import ExperimentSetup, PacketParams, SetupError, packet_eval


class AttenuationKind(enum.Enum):
    NONE = "none"
    STOCHASTIC = "stochastic"
    DETERMINISTIC = "deterministic"


def _check_a(a) -> float:
    a = float(a)
    if not 0.0 <= a <= 1.0:
        raise SetupError("a", f"transmission factor must lie in [0, 1], got {a!r}")
    return a


@dataclass(frozen=True)
class AttenuationMode:
    """Attenuation kind plus transmission factor ``a`` of slit 2.

    ``NONE`` is stored with ``a = 1`` and behaves exactly like ``STOCHASTIC(1)``.
    """

    kind: AttenuationKind
    a: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "a", _check_a(self.a))
        if self.kind is AttenuationKind.NONE and self.a != 1.0:
            raise SetupError("a", "attenuation 'none' requires a = 1")

    @classmethod
    def none(cls) -> "AttenuationMode":
        return cls(AttenuationKind.NONE, 1.0)

    @classmethod
    def stochastic(cls, a: float) -> "AttenuationMode":
        return cls(AttenuationKind.STOCHASTIC, a)

    @classmethod
    def deterministic(cls, a: float) -> "AttenuationMode":
        return cls(AttenuationKind.DETERMINISTIC, a)

    @property
    def is_mixture(self) -> bool:
        return self.kind is AttenuationKind.DETERMINISTIC


def apply_stochastic(packet: PacketParams, a: float) -> PacketParams:
    """Foil rule: multiply the packet weight by ``sqrt(a)``."""
    a = _check_a(a)
    return packet.with_weight(packet.weight * math.sqrt(a))


def deterministic_intensity(P1_single, P1, P2, a: float):
    """Chopper mixture ``(1 - a) P1_single + a (P1 + P2)``."""
    a = _check_a(a)
    return (1.0 - a) * np.asarray(P1_single) + a * (np.asarray(P1) + np.asarray(P2))


class Visibility(NamedTuple):
    V: float
    degenerate: bool


def theoretical_visibility(a: float, mode: AttenuationMode | AttenuationKind) -> Visibility:
    """Fringe contrast predicted for equal envelopes.

    Deterministic: ``2a / (1 + a)``.  Stochastic (and none): ``2 sqrt(a) / (1 + a)``.
    ``a = 0`` gives ``V = 0`` flagged as degenerate.
    """
    a = _check_a(a)
    kind = mode.kind if isinstance(mode, AttenuationMode) else mode
    if a == 0.0:
        return Visibility(0.0, True)
    if kind is AttenuationKind.DETERMINISTIC:
        return Visibility(2.0 * a / (1.0 + a), False)
    return Visibility(2.0 * math.sqrt(a) / (1.0 + a), False)


def slit_packets(setup: ExperimentSetup, phase_offset: float = 0.0
                 ) -> tuple[PacketParams, PacketParams]:
    """Unattenuated packets of unit weight at the two slits (internal units).

    ``phase_offset`` is applied to slit 2, as a phase shifter in that arm would.
    """
    x1, x2 = setup.slit_centers()
    return (PacketParams(center_x=x1),
            PacketParams(center_x=x2, phase_offset=phase_offset))


def overlap(p1: PacketParams, p2: PacketParams) -> complex:
    """``<psi1|psi2>``, constant in time for free packets; evaluated at ``t = 0``."""
    a1, a2 = 0.25 / p1.sigma0 ** 2, 0.25 / p2.sigma0 ** 2
    alpha = a1 + a2
    beta = (2 * a1 * p1.center_x + 2 * a2 * p2.center_x
            + 1j * (p2.transverse_group_velocity - p1.transverse_group_velocity))
    gamma = a1 * p1.center_x ** 2 + a2 * p2.center_x ** 2
    pref = (2 * np.pi * p1.sigma0 ** 2) ** -0.25 * (2 * np.pi * p2.sigma0 ** 2) ** -0.25
    phase = np.exp(1j * (p2.phase_offset - p1.phase_offset))
    value = pref * np.sqrt(np.pi / alpha) * np.exp(beta ** 2 / (4 * alpha) - gamma) * phase
    return complex(p1.weight * p2.weight * value)


class MixtureSample(NamedTuple):
    """Density and current, both relative to ``exp(log_scale)``."""

    P_scaled: np.ndarray
    J_scaled: np.ndarray
    log_scale: np.ndarray


class AttenuatedField:
    """Density, current and velocity of the two-slit field under attenuation.

    For the stochastic and none modes the fields are those of the two-slit
    superposition with slit 2 weighted by ``sqrt(a)``.  For the chopper they
    are the time-averaged mixture of the one-slit and full two-slit fields; the
    velocity is then the mixture current over the mixture density.
    """

    def __init__(self, packets: tuple[PacketParams, PacketParams],
                 attenuation: AttenuationMode,
                 coherence: CoherenceMode = CoherenceMode.COHERENT,
                 density_floor: float = DENSITY_FLOOR):
        self.attenuation = attenuation
        self.coherence = coherence
        self.density_floor = density_floor
        self.base_packets = packets
        p1, p2 = packets
        if attenuation.is_mixture:
            self.packets = (p1, p2)
        else:
            self.packets = (p1, apply_stochastic(p2, attenuation.a))

    @classmethod
    def from_setup(cls, setup: ExperimentSetup, attenuation: AttenuationMode,
                   coherence: CoherenceMode = CoherenceMode.COHERENT,
                   density_floor: float = DENSITY_FLOOR, phase_offset: float = 0.0):
        return cls(slit_packets(setup, phase_offset), attenuation, coherence, density_floor)

    def with_phase_offset(self, phase_offset: float) -> "AttenuatedField":
        p1, p2 = self.base_packets
        return AttenuatedField((p1, replace(p2, phase_offset=phase_offset)),
                               self.attenuation, self.coherence, self.density_floor)

    def with_density_floor(self, density_floor: float) -> "AttenuatedField":
        if density_floor == self.density_floor:
            return self
        return AttenuatedField(self.base_packets, self.attenuation, self.coherence,
                               density_floor)

    def _scaled(self, x, t) -> MixtureSample:
        s1 = packet_eval(self.packets[0], x, t)
        s2 = packet_eval(self.packets[1], x, t)
        f = fields.evaluate(s1, s2, self.coherence, self.density_floor)
        if not self.attenuation.is_mixture:
            return MixtureSample(f.Ptot_scaled, f.Jtot_scaled, f.log_scale)
        a = self.attenuation.a
        # one-slit term R1^2 (v1) on its own scale 2 logR1
        log1 = 2.0 * np.asarray(s1.logR, dtype=float)
        ref = np.maximum(log1, f.log_scale)
        ref = np.where(np.isfinite(ref), ref, 0.0)
        with np.errstate(under="ignore"):
            e1 = (1.0 - a) * np.exp(log1 - ref)
            e2 = a * np.exp(f.log_scale - ref)
        P = e1 + e2 * f.Ptot_scaled
        J = e1 * s1.v + e2 * f.Jtot_scaled
        return MixtureSample(P, J, ref)

    def total_norm(self) -> float:
        """Integral of :meth:`density` over the whole line, in closed form."""
        p1, p2 = self.packets
        cross = 0.0 if self.coherence is CoherenceMode.INCOHERENT else 2.0 * overlap(p1, p2).real
        two_slit = p1.weight ** 2 + p2.weight ** 2 + cross
        if not self.attenuation.is_mixture:
            return two_slit
        a = self.attenuation.a
        return (1.0 - a) * p1.weight ** 2 + a * two_slit

    def density(self, x, t):
        """Screen intensity: ``P_tot`` or the chopper mixture."""
        m = self._scaled(x, t)
        with np.errstate(under="ignore", over="ignore"):
            return np.where(m.P_scaled > 0, m.P_scaled * np.exp(m.log_scale), 0.0)

    def current(self, x, t):
        m = self._scaled(x, t)
        with np.errstate(under="ignore", over="ignore"):
            return m.J_scaled * np.exp(m.log_scale)

    def velocity(self, x, t) -> fields.Velocity:
        """``J / P`` with NaN and ``node=True`` below the density floor."""
        m = self._scaled(x, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            logP = np.where(m.P_scaled > 0,
                            np.log(np.where(m.P_scaled > 0, m.P_scaled, 1.0)) + m.log_scale,
                            -np.inf)
            node = ~(logP >= np.log(self.density_floor))
            v = np.where(node, np.nan, m.J_scaled / np.where(node, 1.0, m.P_scaled))
        return fields.Velocity(v, node)

    def single_slit_density(self, x, t):
        """``P1' = R1^2``: the density with slit 2 closed."""
        s1 = packet_eval(self.packets[0], x, t)
        with np.errstate(under="ignore"):
            return np.exp(2.0 * s1.logR)
