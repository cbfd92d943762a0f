"""Reference wave mechanics for two free Gaussian packets.

Nothing here reuses the formulas of :mod:`packets` or :mod:`fields`.  The
packets are written as complex Gaussians with complex width
``s_t = sigma0 (1 + i t / (2 sigma0^2))`` (hbar = m = 1) and everything,
including derivatives, follows from ``log psi`` by complex arithmetic.
Amplitudes are kept as ``(log psi)`` so that the superposition can be formed
relative to the larger term without underflow.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .packets import PacketParams


@dataclass(frozen=True)
class ComplexAmplitude:
    """``psi = exp(log_psi)`` together with ``d log(psi) / dx``."""

    log_psi: np.ndarray
    dlog_dx: np.ndarray

    @property
    def log_modulus(self):
        return self.log_psi.real

    @property
    def phase(self):
        return self.log_psi.imag

    @property
    def value(self):
        return np.exp(self.log_psi)


def psi(packet: PacketParams, x, t) -> ComplexAmplitude:
    """Freely dispersing Gaussian including the packet weight and phase offset."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    x = np.asarray(x, dtype=float)
    s0 = packet.sigma0
    k = packet.transverse_group_velocity
    st = s0 * (1.0 + 1j * t / (2.0 * s0 ** 2))
    shift = x - packet.center_x - k * t
    with np.errstate(divide="ignore"):
        log_w = np.log(packet.weight)
    log_psi = (log_w - 0.25 * np.log(2.0 * np.pi * st * st)
               - shift ** 2 / (4.0 * s0 * st)
               + 1j * (k * (x - 0.5 * k * t) + packet.phase_offset))
    dlog = -shift / (2.0 * s0 * st) + 1j * k
    log_psi, dlog = np.broadcast_arrays(log_psi, dlog)
    return ComplexAmplitude(log_psi=log_psi, dlog_dx=dlog)


def _superpose(psi1: ComplexAmplitude, psi2: ComplexAmplitude):
    """Return ``(log_scale, total, dtotal)`` with ``psi1+psi2 = exp(log_scale) total``."""
    l1, l2 = psi1.log_psi, psi2.log_psi
    ref = np.maximum(l1.real, l2.real)
    ref = np.where(np.isfinite(ref), ref, 0.0)
    a1 = np.exp(l1 - ref)
    a2 = np.exp(l2 - ref)
    total = a1 + a2
    dtotal = a1 * psi1.dlog_dx + a2 * psi2.dlog_dx
    return ref, total, dtotal


def born_density(psi1: ComplexAmplitude, psi2: ComplexAmplitude):
    """``|psi1 + psi2|^2``."""
    ref, total, _ = _superpose(psi1, psi2)
    with np.errstate(under="ignore"):
        return (total.real ** 2 + total.imag ** 2) * np.exp(2.0 * ref)


def log_born_density(psi1: ComplexAmplitude, psi2: ComplexAmplitude):
    ref, total, _ = _superpose(psi1, psi2)
    with np.errstate(divide="ignore"):
        return np.log(total.real ** 2 + total.imag ** 2) + 2.0 * ref


def _log_derivative(psi1, psi2, density_floor):
    ref, total, dtotal = _superpose(psi1, psi2)
    mod2 = total.real ** 2 + total.imag ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        node = ~(np.log(mod2) + 2.0 * ref >= np.log(density_floor))
        ratio = dtotal / np.where(node, 1.0, total)
    return ratio, node


def bohm_velocity(psi1: ComplexAmplitude, psi2: ComplexAmplitude,
                  density_floor: float = 1e-300):
    """Guidance velocity ``Im(psi'/psi)``; returns ``(v, node)`` with NaN at nodes."""
    ratio, node = _log_derivative(psi1, psi2, density_floor)
    return np.where(node, np.nan, ratio.imag), node


def osmotic_velocity(psi1: ComplexAmplitude, psi2: ComplexAmplitude,
                     density_floor: float = 1e-300):
    """``-d log|psi| / dx``, i.e. ``-Re(psi'/psi)``; returns ``(u, node)``."""
    ratio, node = _log_derivative(psi1, psi2, density_floor)
    return np.where(node, np.nan, -ratio.real), node


def current(psi1: ComplexAmplitude, psi2: ComplexAmplitude):
    """Probability current ``Im(conj(psi) psi')``."""
    ref, total, dtotal = _superpose(psi1, psi2)
    with np.errstate(under="ignore"):
        return (np.conj(total) * dtotal).imag * np.exp(2.0 * ref)
