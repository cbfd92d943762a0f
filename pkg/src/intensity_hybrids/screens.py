"""Screens: arrival histograms, analytic intensity profiles and derived metrics.

The forward screen sits at ``y = L`` (``t = t_L``) and is binned in ``x``.
The sideways screen is the line ``x = x_s`` and is binned in ``y = v_y t``.
Coordinates are internal (sigma0) units throughout; the CLI converts to SI.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, signal

from .attenuation import AttenuatedField
from .packets import ExperimentSetup
from .trajectories import Slit, Termination, Trajectory


class Orientation(enum.Enum):
    FORWARD = "forward"
    SIDEWAYS = "sideways"


_TERMINATION_FOR = {
    Orientation.FORWARD: Termination.FORWARD_SCREEN,
    Orientation.SIDEWAYS: Termination.SIDEWAYS_SCREEN,
}


@dataclass(frozen=True)
class ScreenSpec:
    """Uniform binning of one screen.

    ``lo``/``hi`` of ``None`` take the range of the recorded arrivals.
    """

    orientation: Orientation
    bin_width: float
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.bin_width) and self.bin_width > 0):
            raise ValueError(f"bin_width must be positive, got {self.bin_width!r}")
        if self.lo is not None and self.hi is not None and not self.hi > self.lo:
            raise ValueError("hi must exceed lo")

    def edges(self, coords: np.ndarray) -> np.ndarray:
        lo = self.lo if self.lo is not None else (coords.min() if coords.size else 0.0)
        hi = self.hi if self.hi is not None else (coords.max() if coords.size else lo)
        n = max(1, math.ceil((hi - lo) / self.bin_width - 1e-9))
        if lo + n * self.bin_width <= hi:
            n += 1  # keep the maximum inside the last bin
        return lo + self.bin_width * np.arange(n + 1)


class Arrival(NamedTuple):
    coord: float
    slit: Slit
    x0: float
    t: float


@dataclass
class ScreenRecord:
    """Binned arrivals with per-slit provenance.

    ``launched`` and ``registered_elsewhere`` count per slit, so that
    ``launched = registered here + registered_elsewhere`` holds exactly.
    """

    orientation: Orientation
    edges: np.ndarray
    counts_total: np.ndarray
    counts_slit1: np.ndarray
    counts_slit2: np.ndarray
    arrivals: list[Arrival]
    launched: dict[Slit, int]
    registered_elsewhere: dict[Slit, dict[Termination, int]]
    launch_x0: dict[Slit, np.ndarray] = field(default_factory=dict)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def coords(self, slit: Slit | None = None) -> np.ndarray:
        return np.array([a.coord for a in self.arrivals if slit is None or a.slit == slit])

    def n_registered(self, slit: Slit) -> int:
        return sum(1 for a in self.arrivals if a.slit == slit)


def record(trajectories: Iterable[Trajectory], spec: ScreenSpec,
           slit_weights: dict[Slit, float] | None = None) -> ScreenRecord:
    """Bin the arrivals of terminated trajectories on one screen.

    Counts are raw trajectory counts.  With ``slit_weights`` each arrival
    counts with its slit's weight instead (density-weighted histograms).
    Arrivals outside ``[lo, hi]`` stay in ``arrivals`` but are not binned.
    """
    trajectories = list(trajectories)
    target = _TERMINATION_FOR[spec.orientation]
    arrivals, launched = [], {Slit.SLIT1: 0, Slit.SLIT2: 0}
    elsewhere = {s: {term: 0 for term in Termination if term is not target} for s in Slit}
    x0s = {s: [] for s in Slit}
    for tr in trajectories:
        launched[tr.slit] += 1
        x0s[tr.slit].append(tr.x0)
        if tr.termination is target:
            coord = tr.x_final if spec.orientation is Orientation.FORWARD else tr.y[-1]
            arrivals.append(Arrival(float(coord), tr.slit, tr.x0, tr.t_final))
        else:
            elsewhere[tr.slit][tr.termination] += 1
    arrivals.sort(key=lambda a: (a.slit, a.x0))

    coords = np.array([a.coord for a in arrivals])
    edges = spec.edges(coords)
    dtype = float if slit_weights else np.int64
    counts = {}
    for s in Slit:
        c = np.array([a.coord for a in arrivals if a.slit == s])
        w = None if not slit_weights else np.full(c.size, slit_weights.get(s, 1.0))
        h, _ = np.histogram(c, bins=edges, weights=w)
        counts[s] = h.astype(dtype)
    return ScreenRecord(
        orientation=spec.orientation, edges=edges,
        counts_total=counts[Slit.SLIT1] + counts[Slit.SLIT2],
        counts_slit1=counts[Slit.SLIT1], counts_slit2=counts[Slit.SLIT2],
        arrivals=arrivals, launched=launched, registered_elsewhere=elsewhere,
        launch_x0={s: np.sort(np.array(v)) for s, v in x0s.items()},
    )


def termination_counts(trajectories: Iterable[Trajectory]) -> dict[Slit, dict[Termination, int]]:
    out = {s: {term: 0 for term in Termination} for s in Slit}
    for tr in trajectories:
        out[tr.slit][tr.termination] += 1
    return out


# analytic profiles ---------------------------------------------------------

class Profile(NamedTuple):
    """Screen intensity on ``x``; ``intensity`` has unit area over the grid."""

    x: np.ndarray
    intensity: np.ndarray
    raw: np.ndarray
    raw_area: float
    captured_mass: float
    warning: str | None


MIN_CAPTURED_MASS = 0.999


def analytic_profile(field_model: AttenuatedField, t: float, grid) -> Profile:
    """Intensity of ``field_model`` on ``grid`` at time ``t``, normalized to unit area.

    The captured fraction compares the grid area with the closed-form total
    norm; below 99.9% the profile carries a warning and one is emitted.
    """
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
        raise ValueError("grid must be a strictly increasing 1-D array")
    raw = field_model.density(x, t)
    area = float(integrate.simpson(raw, x=x))
    captured = area / field_model.total_norm()
    warning = None
    if captured < MIN_CAPTURED_MASS:
        warning = f"grid captures only {captured:.6f} of the intensity"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    return Profile(x, raw / area, raw, area, captured, warning)


def default_grid(setup: ExperimentSetup, t: float, n: int = 4001, half_widths: float = 10.0):
    """Grid covering both packets to ``half_widths`` widths at time ``t``."""
    sigma = math.sqrt(1.0 + (t / 2.0) ** 2)
    x1, x2 = setup.slit_centers()
    return np.linspace(x1 - half_widths * sigma, x2 + half_widths * sigma, n)


class VisibilityMeasurement(NamedTuple):
    V: float
    mean_intensity: float
    modulation: float
    window: tuple[float, float]


def measure_visibility(field_model: AttenuatedField, t: float, x_center: float,
                       bin_width: float = 0.05, steps: int = 8,
                       grid_points: int = 65) -> VisibilityMeasurement:
    """Fringe contrast by phase stepping in one screen bin.

    A phase ``chi_k = 2 pi k / steps`` is applied to slit 2 and the screen
    intensity is integrated over ``[x_center -+ bin_width / 2]`` for every
    step.  With ``I_k`` the bin intensities, ``V = 2 |sum I_k e^(-i chi_k)| /
    sum I_k``.  At the point where the two envelopes are equal this is the
    contrast the equal-envelope laws refer to, without needing whole fringes
    inside a region where the envelopes agree.
    """
    if steps < 3:
        raise ValueError("phase stepping needs at least 3 steps")
    lo, hi = x_center - 0.5 * bin_width, x_center + 0.5 * bin_width
    xb = np.linspace(lo, hi, grid_points)
    chi = 2.0 * np.pi * np.arange(steps) / steps
    I = np.array([integrate.simpson(field_model.with_phase_offset(c).density(xb, t), x=xb)
                  for c in chi])
    A = I.mean()
    B = 2.0 * abs(np.sum(I * np.exp(-1j * chi))) / steps
    return VisibilityMeasurement(float(B / A), float(A), float(B), (lo, hi))


# duality -------------------------------------------------------------------

class DualityMetrics(NamedTuple):
    V: float
    D: float
    duality_residual: float


def duality_from_intensities(I1, I2) -> DualityMetrics:
    """``D = |I1 - I2| / (I1 + I2)`` and ``V = 2 sqrt(I1 I2) / (I1 + I2)``."""
    lo, hi = sorted((float(I1), float(I2)))
    r = lo / hi  # ratio form avoids overflow of I1 + I2
    D = (1.0 - r) / (1.0 + r)
    V = 2.0 * math.sqrt(r) / (1.0 + r)
    return DualityMetrics(V, D, abs(D * D + V * V - 1.0))


def duality_metrics(a: float) -> DualityMetrics:
    """Which-path distinguishability and visibility where ``R2^2 = a R1^2``."""
    if not 0.0 <= a <= 1.0:
        raise ValueError("a must lie in [0, 1]")
    return duality_from_intensities(1.0, a)


# sweeper -------------------------------------------------------------------

@dataclass(frozen=True)
class SweeperMetrics:
    """Slit-2 statistics on the sideways screen.

    ``bunching_ratio`` compares the interquartile width of arrival ``y`` with
    that of the same launches under free single-slit spreading (see
    :func:`free_arrival_y`).  ``empty`` is set when nothing from slit 2 arrived.
    """

    n_a: int
    launched: int
    sideways_fraction: float
    median_angle_rad: float
    bunching_iqr: float
    reference_iqr: float
    bunching_ratio: float
    empty: bool


def _iqr(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return math.nan
    q75, q25 = np.percentile(values, [75, 25])
    return float(q75 - q25)


def free_arrival_y(setup: ExperimentSetup, x0) -> np.ndarray:
    """Where slit-2 launches would meet the sideways screen with slit 1 closed.

    A lone Gaussian maps ``x0`` to ``xi + (x0 - xi) sigma_t / sigma0``, so a
    launch reaches ``x_s`` at ``t = tau sqrt(r^2 - 1)`` with
    ``r = (x_s - xi) / (x0 - xi)``.  Launches that never get there are dropped.
    No forward-screen cutoff is applied.
    """
    xi = setup.slit_centers()[1]
    off = np.asarray(x0, dtype=float) - xi
    target = setup.x_sideways - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        r = target / off
    ok = (off != 0) & (r >= 1.0)
    t = 2.0 * np.sqrt(r[ok] ** 2 - 1.0)
    return setup.vy * t


def sweeper_metrics(rec: ScreenRecord, setup: ExperimentSetup) -> SweeperMetrics:
    if rec.orientation is not Orientation.SIDEWAYS:
        raise ValueError("sweeper metrics need the sideways screen")
    y = rec.coords(Slit.SLIT2)
    launched = rec.launched[Slit.SLIT2]
    ref = _iqr(free_arrival_y(setup, rec.launch_x0.get(Slit.SLIT2, np.array([]))))
    if y.size == 0:
        return SweeperMetrics(0, launched, 0.0, math.nan, math.nan, ref, math.nan, True)
    angle = float(np.median(np.arctan2(np.full(y.size, setup.x_sideways), y)))
    iqr = _iqr(y)
    return SweeperMetrics(
        n_a=int(y.size), launched=launched,
        sideways_fraction=y.size / launched if launched else math.nan,
        median_angle_rad=angle, bunching_iqr=iqr, reference_iqr=ref,
        bunching_ratio=iqr / ref if ref and np.isfinite(ref) else math.nan, empty=False,
    )


# peaks ---------------------------------------------------------------------

def histogram_bins(values: Sequence[float]) -> np.ndarray:
    """Freedman-Diaconis bin edges."""
    return np.histogram_bin_edges(np.asarray(values, dtype=float), bins="fd")


def count_local_maxima(counts, noise_sigmas: float = 2.0) -> int:
    """Histogram maxima that stand out from Poisson noise.

    The histogram is zero-padded so edge bins can be maxima.  A maximum must
    exceed ``noise_sigmas * sqrt(count)``, and two neighbouring maxima are
    merged unless the dip between them is deeper than that noise level
    measured on the lower of the two.
    """
    c = np.concatenate([[0.0], np.asarray(counts, dtype=float), [0.0]])
    peaks, _ = signal.find_peaks(c)
    noise = lambda v: noise_sigmas * np.sqrt(v)  # noqa: E731
    kept: list[int] = []
    for p in peaks:
        if c[p] <= noise(c[p]):
            continue
        if kept:
            q = kept[-1]
            low = min(c[q], c[p])
            if low - c[q:p + 1].min() <= noise(low):
                if c[p] > c[q]:
                    kept[-1] = p
                continue
        kept.append(p)
    return len(kept)
