import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from intensity_hybrids.attenuation import AttenuatedField, AttenuationMode, theoretical_visibility
from intensity_hybrids.fields import CoherenceMode
from intensity_hybrids.screens import (Orientation, ScreenSpec, analytic_profile,
                                       count_local_maxima, default_grid, duality_from_intensities,
                                       duality_metrics, free_arrival_y, measure_visibility,
                                       record, sweeper_metrics)
from intensity_hybrids.trajectories import Slit, Termination, Trajectory, integrate_batch, launch_positions


def toy(slit, x0, t_end, x_end, term, vy=2.0):
    t = np.array([0.0, t_end])
    return Trajectory(slit, x0, t, np.array([x0, x_end]), np.zeros(2), vy, term)


FWD, SIDE = Termination.FORWARD_SCREEN, Termination.SIDEWAYS_SCREEN


def test_empty_record():
    rec = record([], ScreenSpec(Orientation.FORWARD, 0.5, -1, 1))
    assert rec.counts_total.sum() == 0 and rec.arrivals == []


def test_bin_width_validated():
    with pytest.raises(ValueError):
        ScreenSpec(Orientation.FORWARD, 0.0)
    with pytest.raises(ValueError):
        ScreenSpec(Orientation.FORWARD, -1.0)


def test_record_provenance_and_bookkeeping():
    trs = [toy(Slit.SLIT1, -1, 5, -2.2, FWD), toy(Slit.SLIT1, -0.5, 5, -1.1, FWD),
           toy(Slit.SLIT2, 1, 3, 9.0, SIDE), toy(Slit.SLIT2, 1.5, 4, 9.0, SIDE),
           toy(Slit.SLIT2, 2, 1, 3.0, Termination.NODE_STALL)]
    fwd = record(trs, ScreenSpec(Orientation.FORWARD, 0.5))
    side = record(trs, ScreenSpec(Orientation.SIDEWAYS, 1.0))
    np.testing.assert_array_equal(fwd.counts_total, fwd.counts_slit1 + fwd.counts_slit2)
    assert fwd.counts_slit2.sum() == 0 and fwd.counts_slit1.sum() == 2
    assert sorted(side.coords(Slit.SLIT2)) == [6.0, 8.0]
    for s in Slit:
        here = side.n_registered(s)
        assert side.launched[s] == here + sum(side.registered_elsewhere[s].values())
    assert side.registered_elsewhere[Slit.SLIT2][Termination.NODE_STALL] == 1


def test_density_weighted_counts():
    trs = [toy(Slit.SLIT1, -1, 5, -2.0, FWD), toy(Slit.SLIT2, 1, 5, 2.0, FWD)]
    rec = record(trs, ScreenSpec(Orientation.FORWARD, 1.0, -3, 3),
                 slit_weights={Slit.SLIT1: 1.0, Slit.SLIT2: 1e-8})
    assert rec.counts_slit2.sum() == pytest.approx(1e-8)


@pytest.mark.parametrize("a", [1.0, 0.25, 0.0])
def test_profiles_normalized(setup, a):
    t = setup.t_screen
    for mode in (AttenuationMode.stochastic(a), AttenuationMode.deterministic(a)):
        prof = analytic_profile(AttenuatedField.from_setup(setup, mode), t,
                                default_grid(setup, t))
        assert np.trapezoid(prof.intensity, prof.x) == pytest.approx(1.0, abs=1e-8)
        assert prof.warning is None


def test_modes_coincide_at_full_transmission(setup):
    t = setup.t_screen
    g = default_grid(setup, t)
    p1 = analytic_profile(AttenuatedField.from_setup(setup, AttenuationMode.stochastic(1.0)), t, g)
    p2 = analytic_profile(AttenuatedField.from_setup(setup, AttenuationMode.deterministic(1.0)), t, g)
    np.testing.assert_allclose(p1.intensity, p2.intensity, rtol=1e-13)


def test_zero_transmission_profile_is_single_gaussian(setup):
    t = setup.t_screen
    g = default_grid(setup, t)
    f = AttenuatedField.from_setup(setup, AttenuationMode.deterministic(0.0))
    prof = analytic_profile(f, t, g)
    sig2 = 1 + (t / 2) ** 2
    gauss = np.exp(-(g - setup.slit_centers()[0]) ** 2 / (2 * sig2)) / np.sqrt(2 * np.pi * sig2)
    np.testing.assert_allclose(prof.intensity, gauss, rtol=1e-7)


def test_narrow_grid_warns(setup):
    f = AttenuatedField.from_setup(setup, AttenuationMode.stochastic(0.25))
    with pytest.warns(RuntimeWarning):
        prof = analytic_profile(f, 1.0, np.linspace(-3, 3, 101))
    assert prof.warning and prof.captured_mass < 0.999


def test_bad_grid_rejected(setup):
    f = AttenuatedField.from_setup(setup, AttenuationMode.stochastic(0.25))
    with pytest.raises(ValueError):
        analytic_profile(f, 1.0, np.array([1.0, 0.0, 2.0]))


def test_stochastic_profile_has_deeper_fringes(setup):
    t = setup.t_screen
    vs = measure_visibility(AttenuatedField.from_setup(setup, AttenuationMode.stochastic(0.25)), t, 0.0)
    vd = measure_visibility(AttenuatedField.from_setup(setup, AttenuationMode.deterministic(0.25)), t, 0.0)
    assert vs.V > vd.V
    assert vs.V == pytest.approx(0.8, rel=0.02) and vd.V == pytest.approx(0.4, rel=0.02)


def test_incoherent_has_no_fringes(setup):
    f = AttenuatedField.from_setup(setup, AttenuationMode.stochastic(0.25), CoherenceMode.INCOHERENT)
    assert measure_visibility(f, setup.t_screen, 0.0).V < 1e-12


def test_visibility_on_pure_cosine():
    # phase stepping recovers the contrast of I = 1 + V cos(chi) with an offset phase
    class Fake:
        def __init__(self, chi=0.0):
            self.chi = chi

        def with_phase_offset(self, chi):
            return Fake(chi)

        def density(self, x, t):
            return 1.0 + 0.37 * np.cos(self.chi + 0.9) + 0 * x

    assert measure_visibility(Fake(), 1.0, 0.0).V == pytest.approx(0.37, rel=1e-12)


@pytest.mark.parametrize("a,D,V", [(1.0, 0.0, 1.0), (0.25, 0.6, 0.8), (1e-4, 0.9998, 0.0200)])
def test_duality_examples(a, D, V):
    m = duality_metrics(a)
    assert m.D == pytest.approx(D, abs=1e-4) and m.V == pytest.approx(V, abs=1e-4)
    assert 0 <= m.D <= 1 and 0 <= m.V <= 1


@given(st.floats(1e-300, 1e300), st.floats(1e-300, 1e300))
def test_duality_relation_holds(i1, i2):
    m = duality_from_intensities(i1, i2)
    assert m.duality_residual < 1e-12


def test_free_arrival_mapping(sweeper_setup):
    s = sweeper_setup
    xi = s.slit_centers()[1]
    r = 4.0
    x0 = xi + (s.x_sideways - xi) / r
    y = free_arrival_y(s, [x0, xi - 1.0, xi])
    assert y.size == 1
    assert y[0] == pytest.approx(s.vy * 2 * math.sqrt(r * r - 1))


def test_sweeper_metrics_empty(setup):
    trs = [toy(Slit.SLIT2, 1, 5, 2.0, FWD)]
    m = sweeper_metrics(record(trs, ScreenSpec(Orientation.SIDEWAYS, 1.0)), setup)
    assert m.empty and m.n_a == 0 and m.sideways_fraction == 0.0


def test_sweeper_metrics_needs_sideways(setup):
    with pytest.raises(ValueError):
        sweeper_metrics(record([], ScreenSpec(Orientation.FORWARD, 1.0)), setup)


def test_nothing_swept_at_full_transmission(sweeper_setup):
    s = sweeper_setup
    f = AttenuatedField.from_setup(s, AttenuationMode.stochastic(1.0))
    trs = integrate_batch(launch_positions(s, 50), s, f)
    m = sweeper_metrics(record(trs, ScreenSpec(Orientation.SIDEWAYS, 1.0)), s)
    assert m.n_a == 0 and m.empty


def test_local_maxima_counting():
    assert count_local_maxima([0, 5, 40, 5, 0, 6, 50, 4]) == 2
    assert count_local_maxima([1, 3, 9, 30, 60]) == 1
    # a one-count wiggle is within Poisson noise
    assert count_local_maxima([10, 30, 29, 30, 10]) == 1
    assert count_local_maxima([]) == 0
    # two humps with a real valley count twice even when close
    assert count_local_maxima([0, 40, 10, 40, 0]) == 2
    # single counts are not peaks
    assert count_local_maxima([1, 0, 1, 0, 1]) == 0
