"""Closed-form analytics for a single freely dispersing Gaussian channel.

Internally everything runs in units where hbar = m = 1 and lengths are
measured in the initial packet width sigma0.  The spreading time is then
``tau = 2 m sigma0**2 / hbar = 2``.  SI values only enter through
:func:`build_setup` and the conversion helpers on :class:`ExperimentSetup`.

All functions broadcast over numpy arrays in ``x`` and ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants

#: spreading time in internal units (2 m sigma0^2 / hbar with hbar = m = sigma0 = 1)
TAU = 2.0

NEUTRON_MASS = constants.m_n


class SetupError(ValueError):
    """Raised for a physically invalid parameter; ``.param`` names it."""

    def __init__(self, param: str, message: str):
        super().__init__(f"{param}: {message}")
        self.param = param


@dataclass(frozen=True)
class ExperimentSetup:
    """Geometry, particle constants and the derived unit system of one run.

    Lengths are stored in SI.  ``length_unit`` (sigma0 in m) and
    ``time_unit`` (m sigma0^2 / hbar in s) convert to internal units.
    """

    particle_mass: float
    wavelength: float
    slit_separation: float
    slit_width_sigma: float
    forward_screen_distance: float
    sideways_screen_x: float
    length_unit: float = field(init=False)
    time_unit: float = field(init=False)
    forward_speed: float = field(init=False)
    time_to_screen: float = field(init=False)

    def __post_init__(self):
        for name in ("particle_mass", "wavelength", "slit_width_sigma",
                     "forward_screen_distance"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise SetupError(name, f"must be positive and finite, got {value!r}")
        if not (np.isfinite(self.slit_separation) and self.slit_separation >= 0):
            raise SetupError("slit_separation",
                             f"must be non-negative, got {self.slit_separation!r}")
        if not np.isfinite(self.sideways_screen_x):
            raise SetupError("sideways_screen_x", "must be finite")
        sigma0 = self.slit_width_sigma
        vy = constants.h / (self.particle_mass * self.wavelength)
        set_ = object.__setattr__
        set_(self, "length_unit", sigma0)
        set_(self, "time_unit", self.particle_mass * sigma0 ** 2 / constants.hbar)
        set_(self, "forward_speed", vy)
        set_(self, "time_to_screen", self.forward_screen_distance / vy)

    # internal <-> SI
    def to_internal_length(self, x):
        return np.asarray(x) / self.length_unit

    def to_si_length(self, x):
        return np.asarray(x) * self.length_unit

    def to_internal_time(self, t):
        return np.asarray(t) / self.time_unit

    def to_si_time(self, t):
        return np.asarray(t) * self.time_unit

    @property
    def tau_si(self) -> float:
        """Spreading time 2 m sigma0^2 / hbar in seconds."""
        return TAU * self.time_unit

    @property
    def d(self) -> float:
        """Slit separation in internal units."""
        return self.slit_separation / self.length_unit

    @property
    def t_screen(self) -> float:
        """Time of flight to the forward screen in internal units."""
        return self.time_to_screen / self.time_unit

    @property
    def x_sideways(self) -> float:
        return self.sideways_screen_x / self.length_unit

    @property
    def vy(self) -> float:
        """Forward speed in internal velocity units (sigma0 per internal time)."""
        return self.forward_speed * self.time_unit / self.length_unit

    def slit_centers(self) -> tuple[float, float]:
        """Internal x of slit 1 (left, strong) and slit 2 (right, attenuated)."""
        return -0.5 * self.d, 0.5 * self.d


def build_setup(particle_mass: float = NEUTRON_MASS,
                wavelength: float = 1.8e-9,
                slit_separation: float = 200e-6,
                slit_width_sigma: float = 22e-6,
                forward_screen_distance: float = 5.0,
                sideways_screen_x: float | None = None) -> ExperimentSetup:
    """Build an :class:`ExperimentSetup` from SI parameters.

    Defaults are the neutron double slit: 1.8 nm, 22 um Gaussian slits
    200 um apart and a forward screen 5 m away.  The sideways screen sits at
    ``+3 d`` unless given.
    """
    if sideways_screen_x is None:
        sideways_screen_x = 3.0 * slit_separation
    return ExperimentSetup(
        particle_mass=float(particle_mass),
        wavelength=float(wavelength),
        slit_separation=float(slit_separation),
        slit_width_sigma=float(slit_width_sigma),
        forward_screen_distance=float(forward_screen_distance),
        sideways_screen_x=float(sideways_screen_x),
    )


@dataclass(frozen=True)
class PacketParams:
    """One Gaussian channel, in internal units.

    ``phase_offset`` is a constant added to the phase, the equivalent of a
    phase shifter placed in this arm.
    """

    center_x: float
    sigma0: float = 1.0
    transverse_group_velocity: float = 0.0
    weight: float = 1.0
    phase_offset: float = 0.0

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise SetupError("sigma0", f"must be positive, got {self.sigma0!r}")
        if not 0.0 <= self.weight <= 1.0:
            raise SetupError("weight", f"must lie in [0, 1], got {self.weight!r}")

    def with_weight(self, weight: float) -> "PacketParams":
        return replace(self, weight=weight)

    @property
    def tau(self) -> float:
        return 2.0 * self.sigma0 ** 2


@dataclass(frozen=True)
class PacketSample:
    R: np.ndarray
    logR: np.ndarray
    S: np.ndarray
    v: np.ndarray
    u: np.ndarray
    center_now: np.ndarray
    sigma_now: np.ndarray


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0 (forward evolution only)")
    return t


def sigma_t(packet: PacketParams, t):
    """Width sigma0 * sqrt(1 + (t/tau)^2) of the packet at time ``t``."""
    t = _check_time(t)
    return packet.sigma0 * np.sqrt(1.0 + (t / packet.tau) ** 2)


def packet_eval(packet: PacketParams, x, t) -> PacketSample:
    """Amplitude, phase, convective and diffusive velocity at ``(x, t)``.

    ``u = -grad(R)/R`` points away from the packet center and ``v = grad(S)``.
    Neither depends on the weight; a zero weight only sends ``logR`` to -inf.
    """
    t = _check_time(t)
    x = np.asarray(x, dtype=float)
    s0 = packet.sigma0
    theta = t / packet.tau
    var = s0 ** 2 * (1.0 + theta ** 2)
    vg = packet.transverse_group_velocity
    center = packet.center_x + vg * t
    delta = x - center

    log_w = math.log(packet.weight) if packet.weight > 0 else -np.inf
    logR = log_w - 0.25 * np.log(2.0 * np.pi * var) - delta ** 2 / (4.0 * var)
    u = delta / (2.0 * var)
    v = vg + delta * theta / (2.0 * var)
    S = (vg * x - 0.5 * vg ** 2 * t + delta ** 2 * theta / (4.0 * var)
         - 0.5 * np.arctan(theta) + packet.phase_offset)
    return PacketSample(R=np.exp(logR), logR=logR, S=S, v=v, u=u,
                        center_now=center, sigma_now=np.sqrt(var))
