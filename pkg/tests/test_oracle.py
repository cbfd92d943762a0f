import numpy as np
import pytest
from scipy import integrate

from intensity_hybrids import oracle
from intensity_hybrids.attenuation import apply_stochastic
from intensity_hybrids.fields import CoherenceMode, two_slit
from intensity_hybrids.packets import TAU, PacketParams, packet_eval, sigma_t
from intensity_hybrids.verification import (continuity_residual, oracle_continuity,
                                            oracle_equivalence, standard_grid)


def test_initial_density_is_normal():
    p = PacketParams(0.5, sigma0=1.2)
    x = np.linspace(-5, 5, 101)
    dens = np.abs(oracle.psi(p, x, 0.0).value) ** 2
    normal = np.exp(-(x - 0.5) ** 2 / (2 * 1.44)) / np.sqrt(2 * np.pi * 1.44)
    np.testing.assert_allclose(dens, normal, rtol=1e-13)


@pytest.mark.parametrize("t", [0.0, 0.3, TAU, 9.0])
def test_modulus_and_gradients_match_packets(t):
    p = PacketParams(-1.0, sigma0=0.9, transverse_group_velocity=0.35, weight=0.4)
    c = -1.0 + 0.35 * t
    sig = float(sigma_t(p, t))
    x = np.linspace(c - 8 * sig, c + 8 * sig, 401)
    amp = oracle.psi(p, x, t)
    s = packet_eval(p, x, t)
    np.testing.assert_allclose(np.exp(amp.log_modulus), s.R, rtol=1e-12)
    np.testing.assert_allclose(amp.dlog_dx.imag, s.v, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(-amp.dlog_dx.real, s.u, rtol=1e-12, atol=1e-14)
    # phase gradient by finite differences of the unwrapped phase
    h = 1e-6
    dphase = np.angle(np.exp(oracle.psi(p, x + h, t).log_psi - oracle.psi(p, x - h, t).log_psi))
    np.testing.assert_allclose(dphase / (2 * h), s.v, rtol=1e-8, atol=1e-8)


def test_modulus_representations_agree():
    p = PacketParams(0.0, weight=0.7)
    amp = oracle.psi(p, np.linspace(-6, 6, 61), 1.3)
    np.testing.assert_allclose(np.abs(amp.value), np.exp(amp.log_modulus), rtol=1e-12)


def test_born_density_special_cases():
    p1 = PacketParams(-1.0)
    x = np.linspace(-4, 4, 41)
    zero = oracle.psi(p1.with_weight(0.0), x, 1.0)
    one = oracle.psi(p1, x, 1.0)
    np.testing.assert_allclose(oracle.born_density(one, zero), np.abs(one.value) ** 2, rtol=1e-14)
    flipped = oracle.psi(PacketParams(-1.0, phase_offset=np.pi), x, 1.0)
    assert np.max(oracle.born_density(one, flipped)) < 1e-28


def test_single_packet_velocities():
    p = PacketParams(0.2, transverse_group_velocity=0.6)
    t = 1.5
    c = 0.2 + 0.6 * t
    zero = oracle.psi(p.with_weight(0.0), c, t)
    v, node = oracle.bohm_velocity(oracle.psi(p, c, t), zero)
    assert not node and v == pytest.approx(0.6)
    x = np.linspace(-3, 5, 81)
    u, _ = oracle.osmotic_velocity(oracle.psi(p, x, t), oracle.psi(p.with_weight(0.0), x, t))
    np.testing.assert_allclose(u, packet_eval(p, x, t).u, rtol=1e-12, atol=1e-14)


def test_symmetric_axis(packets):
    p1, p2 = (oracle.psi(p, 0.0, 2.0) for p in packets)
    assert oracle.bohm_velocity(p1, p2)[0] == pytest.approx(0.0, abs=1e-14)
    assert oracle.osmotic_velocity(p1, p2)[0] == pytest.approx(0.0, abs=1e-14)


def test_osmotic_balance_near_locus(packets):
    # total osmotic velocity and u1 + u2 both vanish on the axis, and change sign there
    x = np.array([-0.3, 0.0, 0.3])
    t = 2.0
    s1, s2 = packet_eval(packets[0], x, t), packet_eval(packets[1], x, t)
    u_tot, _ = oracle.osmotic_velocity(oracle.psi(packets[0], x, t),
                                       oracle.psi(packets[1], x, t))
    assert (s1.u + s2.u)[1] == pytest.approx(0.0, abs=1e-14)
    assert u_tot[1] == pytest.approx(0.0, abs=1e-14)
    assert np.sign(u_tot[0]) == np.sign((s1.u + s2.u)[0]) == -np.sign(u_tot[2])


@pytest.mark.parametrize("a", [1.0, 0.25, 1e-4, 1e-8])
@pytest.mark.parametrize("t", [0.1 * TAU, TAU, 2.96])
def test_fields_match_reference(packets, a, t):
    r = oracle_equivalence(packets, a, t, n=2000)
    assert r["passed"], r


def test_node_flags_agree(packets):
    p1, p2 = packets
    t = 3.0
    x = np.linspace(-12, 12, 4001)
    f = two_slit(packets, x, t, CoherenceMode.COHERENT, density_floor=1e-3)
    _, node = oracle.bohm_velocity(oracle.psi(p1, x, t), oracle.psi(p2, x, t), density_floor=1e-3)
    np.testing.assert_array_equal(f.node, node)


@pytest.mark.parametrize("a", [1.0, 1e-8])
def test_reference_continuity(packets, a):
    for t in (0.1 * TAU, TAU):
        assert oracle_continuity(packets, a, t, n=2000)["passed"]


@pytest.mark.parametrize("a", [1.0, 1e-8])
def test_norm_conservation(packets, a):
    pk = (packets[0], apply_stochastic(packets[1], a))
    norms = []
    for t in (0.0, TAU, 5 * TAU):
        x = standard_grid(pk, t, 20001, half_widths=12.0)
        d = oracle.born_density(oracle.psi(pk[0], x, t), oracle.psi(pk[1], x, t))
        norms.append(integrate.simpson(d, x=x))
    assert np.ptp(norms) <= 1e-8 * norms[0]


def test_continuity_residual_detects_violation():
    # a current with no matching density change must be flagged
    x = np.linspace(-5, 5, 1001)
    r = continuity_residual(lambda xx, tt: np.exp(-xx ** 2) + 0 * tt,
                            lambda xx, tt: xx * np.exp(-xx ** 2), x, 1.0)
    assert r.max() > 0.1
