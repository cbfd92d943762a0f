"""Averaged trajectories ``dx/dt = v_tot(x, t)`` through the two-slit field.

Integration uses an embedded Runge-Kutta-Fehlberg 4(5) pair, propagating the
4th-order solution and using the 5th-order one only for the error estimate.
A batch of trajectories is advanced together for speed, but every trajectory
keeps its own time and step size, so results do not depend on which other
trajectories share the batch.

Forward motion is ``y = v_y t``.  A trajectory ends on the forward screen at
``t = t_L``, on the sideways screen when ``x`` reaches ``x_s`` (located by
Hermite interpolation of the accepted step), in a node when the density stays
below the floor, or when the step budget runs out.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import optimize, stats
from scipy.interpolate import CubicHermiteSpline

from .attenuation import AttenuatedField
from .packets import ExperimentSetup, PacketParams, sigma_t


class Slit(enum.IntEnum):
    SLIT1 = 1
    SLIT2 = 2


class Termination(enum.Enum):
    FORWARD_SCREEN = "forward_screen"
    SIDEWAYS_SCREEN = "sideways_screen"
    MAX_TIME = "max_time"
    NODE_STALL = "node_stall"


@dataclass
class Trajectory:
    """Accepted integration points of one trajectory (internal units)."""

    slit: Slit
    x0: float
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    vy: float
    termination: Termination

    @property
    def y(self) -> np.ndarray:
        return self.vy * self.t

    @property
    def points(self) -> np.ndarray:
        """``(n, 3)`` array of ``(t, x, y)``."""
        return np.column_stack([self.t, self.x, self.y])

    @property
    def t_final(self) -> float:
        return float(self.t[-1])

    @property
    def x_final(self) -> float:
        return float(self.x[-1])

    def position_at(self, t):
        """Hermite dense output; NaN outside ``[t[0], t[-1]]``."""
        t = np.asarray(t, dtype=float)
        if len(self.t) == 1:
            return np.where(t == self.t[0], self.x[0], np.nan)
        spline = CubicHermiteSpline(self.t, self.x, self.v, extrapolate=False)
        return spline(t)


@dataclass(frozen=True)
class IntegratorConfig:
    """Step control for the RKF4(5) integrator.

    ``max_time`` of ``None`` means the forward-screen time of the setup.
    ``node_strikes`` is the number of consecutive rejected attempts with a
    stage below the density floor before the trajectory is declared stalled.
    """

    rel_tol: float = 1e-8
    abs_tol: float = 1e-9
    max_step: float = 0.25
    initial_step: float = 1e-3
    density_floor: float = 1e-300
    max_time: float | None = None
    node_strikes: int = 40
    max_steps: int = 200_000

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "initial_step", "density_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.node_strikes < 1 or self.max_steps < 1:
            raise ValueError("node_strikes and max_steps must be >= 1")

    def horizon(self, setup: ExperimentSetup) -> float:
        if self.max_time is None:
            return setup.t_screen
        if self.max_time < setup.t_screen:
            raise ValueError("max_time must not be shorter than the time to the forward screen")
        return self.max_time


@dataclass(frozen=True)
class Launch:
    x0: float
    slit: Slit


def launch_positions(setup: ExperimentSetup, n_per_slit: int, seed: int | None = None,
                     sampler: str = "quantile") -> list[Launch]:
    """Starting points at ``t = 0`` for each slit.

    ``quantile`` places points at ``Phi^-1(i / (n + 1))`` of each slit's
    initial density (deterministic).  ``random`` draws them from it with
    ``numpy.random.default_rng(seed)``; output is sorted within each slit.
    """
    if n_per_slit < 1:
        raise ValueError("n_per_slit must be >= 1")
    centers = setup.slit_centers()
    if sampler == "quantile":
        z = stats.norm.ppf(np.arange(1, n_per_slit + 1) / (n_per_slit + 1))
        offsets = [z, z]
    elif sampler == "random":
        rng = np.random.default_rng(seed)
        offsets = [np.sort(rng.standard_normal(n_per_slit)) for _ in centers]
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    return [Launch(float(c + dz), slit)
            for c, slit, zs in zip(centers, (Slit.SLIT1, Slit.SLIT2), offsets)
            for dz in zs]


# Fehlberg coefficients
_C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])
_A = [
    [],
    [1 / 4],
    [3 / 32, 9 / 32],
    [1932 / 2197, -7200 / 2197, 7296 / 2197],
    [439 / 216, -8.0, 3680 / 513, -845 / 4104],
    [-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40],
]
_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])
_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])


def _combine(coeffs, k):
    # elementwise on purpose: BLAS reductions may round differently with batch size
    acc = np.zeros(k.shape[1])
    for c, row in zip(coeffs, k):
        if c:
            acc = acc + c * row
    return acc


@dataclass
class _State:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    h: np.ndarray
    strikes: np.ndarray
    steps: np.ndarray
    alive: np.ndarray
    ts: list = field(default_factory=list)
    xs: list = field(default_factory=list)
    vs: list = field(default_factory=list)
    ends: list = field(default_factory=list)


def _hermite_crossing(t0, x0, v0, t1, x1, v1, target):
    """Time in ``[t0, t1]`` at which the Hermite cubic of the step hits ``target``."""
    spline = CubicHermiteSpline([t0, t1], [x0 - target, x1 - target], [v0, v1])
    f0, f1 = x0 - target, x1 - target
    if f0 == 0.0:
        return t0
    if f1 == 0.0 or f0 * f1 > 0:
        return t1
    return optimize.brentq(spline, t0, t1, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def integrate_batch(launches: Sequence[Launch], setup: ExperimentSetup,
                    field_model: AttenuatedField,
                    config: IntegratorConfig = IntegratorConfig()) -> list[Trajectory]:
    """Integrate every launch until it terminates; output order matches input."""
    n = len(launches)
    if n == 0:
        return []
    horizon = config.horizon(setup)
    field_model = field_model.with_density_floor(config.density_floor)
    t_screen = setup.t_screen
    xs_screen = setup.x_sideways
    x0 = np.array([l.x0 for l in launches], dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("launch positions must be finite")

    v0, node0 = field_model.velocity(x0, np.zeros(n))
    st = _State(t=np.zeros(n), x=x0.copy(), v=np.where(node0, 0.0, v0),
                h=np.full(n, min(config.initial_step, config.max_step)),
                strikes=np.zeros(n, dtype=int), steps=np.zeros(n, dtype=int),
                alive=np.ones(n, dtype=bool))
    st.ts = [[0.0] for _ in range(n)]
    st.xs = [[float(x)] for x in x0]
    st.vs = [[float(v)] for v in st.v]
    st.ends = [None] * n
    for i in np.flatnonzero(node0):
        st.ends[i] = Termination.NODE_STALL
        st.alive[i] = False

    while st.alive.any():
        idx = np.flatnonzero(st.alive)
        _attempt(idx, st, field_model, config, horizon, t_screen, xs_screen)

    return [Trajectory(slit=l.slit, x0=l.x0, t=np.array(st.ts[i]), x=np.array(st.xs[i]),
                       v=np.array(st.vs[i]), vy=setup.vy, termination=st.ends[i])
            for i, l in enumerate(launches)]


def _attempt(idx, st: _State, field_model, config, horizon, t_screen, xs_screen):
    t, x, h = st.t[idx], st.x[idx], st.h[idx]
    h = np.minimum(h, horizon - t)
    k = np.empty((6, idx.size))
    k[0] = st.v[idx]
    bad = np.zeros(idx.size, dtype=bool)
    for s in range(1, 6):
        xs = x + h * _combine(_A[s], k)
        vs, node = field_model.velocity(xs, t + _C[s] * h)
        bad |= node | ~np.isfinite(vs)
        k[s] = np.where(np.isfinite(vs), vs, 0.0)
    x4 = x + h * _combine(_B4, k)
    x5 = x + h * _combine(_B5, k)
    scale = config.abs_tol + config.rel_tol * np.maximum(np.abs(x), np.abs(x4))
    err = np.abs(x5 - x4) / scale
    accept = (err <= 1.0) & ~bad & np.isfinite(x4)

    v_new = np.full(idx.size, np.nan)
    t_new = np.where(h == horizon - t, horizon, t + h)
    if accept.any():
        vv, node = field_model.velocity(x4[accept], t_new[accept])
        ok = ~node & np.isfinite(vv)
        v_new[np.flatnonzero(accept)[ok]] = vv[ok]
        bad[np.flatnonzero(accept)[~ok]] = True
        accept &= np.isfinite(v_new)

    with np.errstate(divide="ignore"):
        factor = np.clip(0.9 * err ** -0.2, 0.2, 5.0)
    factor = np.where(np.isfinite(factor), factor, 5.0)
    h_next = np.minimum(h * factor, config.max_step)
    h_next = np.where(bad, h * 0.25, h_next)

    for j, i in enumerate(idx):
        st.steps[i] += 1
        if accept[j]:
            st.strikes[i] = 0
            _accept(i, t[j], x[j], st.v[i], t_new[j], x4[j], v_new[j], st,
                    field_model, t_screen, horizon, xs_screen)
        elif bad[j]:
            st.strikes[i] += 1
            if st.strikes[i] >= config.node_strikes:
                st.ends[i] = Termination.NODE_STALL
                st.alive[i] = False
        if st.alive[i] and st.steps[i] >= config.max_steps:
            st.ends[i] = Termination.MAX_TIME
            st.alive[i] = False
        st.h[i] = h_next[j]


def _accept(i, t0, x0, v0, t1, x1, v1, st, field_model, t_screen, horizon, xs_screen):
    f0, f1 = x0 - xs_screen, x1 - xs_screen
    if f0 * f1 <= 0 and f0 != 0.0:
        tc = _hermite_crossing(t0, x0, v0, t1, x1, v1, xs_screen)
        if tc > t0:
            vc, _ = field_model.velocity(np.array([xs_screen]), np.array([tc]))
            _record(i, tc, xs_screen, float(vc[0]), st)
            st.ends[i] = Termination.SIDEWAYS_SCREEN
            st.alive[i] = False
            return
    _record(i, t1, x1, v1, st)
    if t1 >= horizon:
        st.ends[i] = (Termination.FORWARD_SCREEN if t1 >= t_screen else Termination.MAX_TIME)
        st.alive[i] = False


def _record(i, t, x, v, st):
    st.t[i], st.x[i], st.v[i] = t, x, v
    st.ts[i].append(float(t))
    st.xs[i].append(float(x))
    st.vs[i].append(float(v))


def integrate(x0: float, slit: Slit, setup: ExperimentSetup, field_model: AttenuatedField,
              config: IntegratorConfig = IntegratorConfig()) -> Trajectory:
    """Integrate a single trajectory launched at ``x0`` from ``slit`` at ``t = 0``."""
    return integrate_batch([Launch(float(x0), Slit(slit))], setup, field_model, config)[0]


def no_crossing_locus(packets: tuple[PacketParams, PacketParams], t) -> np.ndarray:
    """The ``x`` where ``u1 + u2 = 0``.

    With ``u_i = (x - xi_i) / (2 sigma_i^2)`` this is the width-weighted mean
    of the two centers, the plain midpoint when the widths agree.  Weights
    play no role.
    """
    p1, p2 = packets
    t = np.asarray(t, dtype=float)
    c1 = p1.center_x + p1.transverse_group_velocity * t
    c2 = p2.center_x + p2.transverse_group_velocity * t
    w1 = 1.0 / sigma_t(p1, t) ** 2
    w2 = 1.0 / sigma_t(p2, t) ** 2
    return (c1 * w1 + c2 * w2) / (w1 + w2)


def count_midline_crossings(trajectories: Iterable[Trajectory],
                            locus: float | Callable[[np.ndarray], np.ndarray]) -> int:
    """Total number of sign changes of ``x(t) - locus(t)`` over all trajectories.

    Points sitting exactly on the locus are skipped, so touching it is not a crossing.
    """
    total = 0
    for tr in trajectories:
        ref = locus(tr.t) if callable(locus) else locus
        sign = np.sign(tr.x - ref)
        sign = sign[sign != 0]
        total += int(np.count_nonzero(sign[1:] != sign[:-1]))
    return total


def ordering_inversions(trajectories: Sequence[Trajectory], times) -> int:
    """Adjacent out-of-order pairs in ``x`` at ``times``, ranking by ``x0``.

    Only trajectories still in flight at a given time take part.
    """
    trs = sorted(trajectories, key=lambda tr: tr.x0)
    inversions = 0
    for t in np.atleast_1d(times):
        pos = np.array([tr.position_at(t) for tr in trs], dtype=float)
        pos = pos[np.isfinite(pos)]
        inversions += int(np.count_nonzero(np.diff(pos) < 0))
    return inversions


def deflection_angle(tr: Trajectory) -> float:
    """``atan(x / y)`` at the final point, measured from the forward direction."""
    return math.atan2(tr.x_final, tr.vy * tr.t_final)
