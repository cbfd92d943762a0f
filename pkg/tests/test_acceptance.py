"""Acceptance criteria, one test (and one printed PASS/FAIL line) per criterion.

Criteria with a coherent and an incoherent half report each half on its own line.
"""
import functools
import time

import numpy as np
import pytest
from scipy import integrate

from intensity_hybrids.attenuation import (AttenuatedField, AttenuationKind, AttenuationMode,
                                           slit_packets, theoretical_visibility)
from intensity_hybrids.config import parse_config
from intensity_hybrids.fields import CoherenceMode
from intensity_hybrids.packets import TAU, build_setup
from intensity_hybrids.runner import run
from intensity_hybrids.screens import (Orientation, ScreenSpec, count_local_maxima, default_grid,
                                       duality_metrics, histogram_bins, measure_visibility,
                                       record, sweeper_metrics, termination_counts)
from intensity_hybrids.trajectories import (Slit, Termination, count_midline_crossings,
                                            integrate_batch, launch_positions, no_crossing_locus)
from intensity_hybrids.verification import fields_continuity, oracle_equivalence

COH, INC = CoherenceMode.COHERENT, CoherenceMode.INCOHERENT
SWEEP_A = [1.0, 1e-2, 1e-4, 1e-6, 1e-8]


def report(capsys, cid, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {cid}: {detail}")


@functools.lru_cache(maxsize=None)
def sweep_run(d: float, L: float, a: float, mode: CoherenceMode, n: int = 200):
    s = build_setup(slit_separation=d, forward_screen_distance=L)
    f = AttenuatedField.from_setup(s, AttenuationMode.stochastic(a), mode)
    return s, integrate_batch(launch_positions(s, n), s, f)


def sideways(s, trs):
    y = [tr.y[-1] for tr in trs if tr.termination is Termination.SIDEWAYS_SCREEN]
    width = np.diff(histogram_bins(y))[0] if len(y) > 1 else 1.0
    return record(trs, ScreenSpec(Orientation.SIDEWAYS, float(width)))


def test_c01_attenuation_contrast_law(capsys):
    s = build_setup()
    t = s.t_screen
    start = time.perf_counter()
    rows, ok = [], True
    for a, tol in ((0.25, 0.02), (0.0025, 0.05)):
        for kind in (AttenuationKind.STOCHASTIC, AttenuationKind.DETERMINISTIC):
            f = AttenuatedField.from_setup(s, AttenuationMode(kind, a))
            v = measure_visibility(f, t, float(no_crossing_locus(f.base_packets, t))).V
            expected = theoretical_visibility(a, kind).V
            rel = abs(v / expected - 1)
            ok &= rel < tol
            rows.append(f"a={a} {kind.value} V={v:.5g} (theory {expected:.5g}, rel {rel:.1e})")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 10
    report(capsys, "C1 attenuation contrast law", ok, "; ".join(rows) + f"; {elapsed:.2f} s")
    assert ok


def test_c02_equal_area(capsys):
    s = build_setup()
    t = s.t_screen
    x = default_grid(s, t, 20001, half_widths=12.0)
    worst, rows = 0.0, []
    for a in (0.25, 0.025, 0.0025):
        det = integrate.simpson(AttenuatedField.from_setup(s, AttenuationMode.deterministic(a))
                                .density(x, t), x=x)
        sto = integrate.simpson(AttenuatedField.from_setup(s, AttenuationMode.stochastic(a))
                                .density(x, t), x=x)
        rel = abs(det - sto) / sto
        worst = max(worst, rel)
        rows.append(f"a={a} rel diff {rel:.2e}")
    ok = worst < 1e-8
    report(capsys, "C2 equal-area consistency", ok, "; ".join(rows) + " (tolerance 1e-8)")
    assert ok


def test_c03_oracle_equivalence(capsys, packets, setup):
    start = time.perf_counter()
    results = [oracle_equivalence(packets, a, t, n=10_000)
               for a in (1.0, 0.25, 1e-4, 1e-8) for t in (0.1 * TAU, TAU, setup.t_screen)]
    elapsed = time.perf_counter() - start
    dens = max(r["density_deviation"] for r in results)
    vel = max(r["velocity_deviation"] for r in results)
    ok = all(r["passed"] for r in results) and elapsed < 30
    report(capsys, "C3 oracle equivalence", ok,
           f"max density dev {dens:.2e} (<=1e-10), max velocity dev {vel:.2e} (<=1e-8), "
           f"{elapsed:.2f} s")
    assert ok


@pytest.mark.parametrize("mode", [COH, INC], ids=lambda m: m.value)
def test_c04_continuity(capsys, packets, setup, mode):
    results = [fields_continuity(packets, a, t, mode, n=10_000)
               for a in (1.0, 1e-8) for t in (0.1 * TAU, TAU, setup.t_screen)]
    worst = max(r["residual"] for r in results)
    ok = all(r["passed"] for r in results)
    report(capsys, f"C4 continuity [{mode.value}]", ok,
           f"max residual {worst:.2e} of local flux-gradient scale (< 1e-4)")
    assert ok


@pytest.mark.parametrize("mode", [COH, INC], ids=lambda m: m.value)
def test_c05_no_crossing(capsys, mode):
    start = time.perf_counter()
    counts = {}
    for a in (1.0, 1e-2, 1e-4, 1e-8, 1e-10):
        s, trs = sweep_run(200e-6, 5.0, a, mode)
        counts[a] = count_midline_crossings(trs, lambda t: no_crossing_locus(slit_packets(s), t))
    elapsed = time.perf_counter() - start
    ok = all(c == 0 for c in counts.values()) and elapsed < 60
    report(capsys, f"C5 no-crossing [{mode.value}]", ok,
           ", ".join(f"a={a}: {c}" for a, c in counts.items())
           + f" crossings among 200+200; {elapsed:.1f} s")
    assert ok


def test_c06_sweeper_onset_and_bookkeeping(capsys, sweeper_setup):
    L = sweeper_setup.forward_screen_distance
    fractions = []
    for a in SWEEP_A:
        s, trs = sweep_run(200e-6, L, a, COH)
        fractions.append(sweeper_metrics(sideways(s, trs), s).sideways_fraction)
    s, trs = sweep_run(200e-6, L, 1e-8, COH)
    counts = termination_counts(trs)[Slit.SLIT2]
    fwd = record(trs, ScreenSpec(Orientation.FORWARD, 0.5)).n_registered(Slit.SLIT2)
    side = sideways(s, trs).n_registered(Slit.SLIT2)
    other = counts[Termination.MAX_TIME] + counts[Termination.NODE_STALL]
    launched = sum(counts.values())
    monotone = all(b >= a for a, b in zip(fractions, fractions[1:]))
    ok = fwd <= 0.01 * launched and side + other == launched - fwd and fwd + side + other == launched \
        and monotone
    report(capsys, "C6 sweeper onset and bookkeeping", ok,
           f"a=1e-8: slit-2 forward {fwd}, sideways {side}, terminated {other}, launched "
           f"{launched}; sideways fractions {fractions}")
    assert ok


def test_c07_bunching_and_slit_distance(capsys, sweeper_setup):
    L = sweeper_setup.forward_screen_distance
    metrics = {}
    for d, length in ((200e-6, L), (400e-6, 2 * L)):
        s, trs = sweep_run(d, length, 1e-8, COH)
        metrics[d] = sweeper_metrics(sideways(s, trs), s)
    a1, a2 = metrics[200e-6].median_angle_rad, metrics[400e-6].median_angle_rad
    change = abs(a2 / a1 - 1)
    ratios = [m.bunching_ratio for m in metrics.values()]
    ok = change < 0.10 and all(r < 1 for r in ratios)
    report(capsys, "C7 bunching and slit-distance independence", ok,
           f"median angle {a1:.4e} -> {a2:.4e} rad ({change:.1%} change); "
           f"bunching ratios {ratios[0]:.3g}, {ratios[1]:.3g}")
    assert ok


def test_c08_duality(capsys):
    residuals = [duality_metrics(a).duality_residual for a in np.logspace(-10, 0, 20)]
    ok = max(residuals) < 1e-12
    report(capsys, "C8 duality relation", ok, f"max |D^2+V^2-1| = {max(residuals):.2e}")
    assert ok


@pytest.mark.parametrize("mode", [COH, INC], ids=lambda m: m.value)
def test_c09_sideways_interference(capsys, sweeper_setup, mode):
    s, trs = sweep_run(200e-6, sweeper_setup.forward_screen_distance, 1e-8, mode)
    rec = sideways(s, trs)
    maxima = count_local_maxima(rec.counts_slit2)
    sw = sweeper_metrics(rec, s)
    if mode is COH:
        ok = maxima >= 2
        detail = f"{maxima} local maxima above noise (need >= 2)"
    else:
        ok = maxima == 1 and sw.sideways_fraction >= 0.9
        detail = f"{maxima} local maxima (need 1), sideways fraction {sw.sideways_fraction:.2f}"
    report(capsys, f"C9 sideways interference [{mode.value}]", ok, detail)
    assert ok


def test_c10_reproducibility(capsys, tmp_path):
    cfg = parse_config("""schema_version: 1
setup:
  forward_screen_distance: 25.0
attenuation:
  a_values: [1.0e-8]
trajectories:
  n_per_slit: 50
  sampler: random
heatmap:
  nx: 21
  nt: 11
""")
    m1 = run("trajectories", cfg, tmp_path / "one", seed=11)
    m2 = run("trajectories", cfg, tmp_path / "two", seed=11, threads=2)
    csvs = sorted(n for n in m1["files"] if n.endswith(".csv"))
    same = [(tmp_path / "one" / n).read_bytes() == (tmp_path / "two" / n).read_bytes() for n in csvs]
    ok = bool(csvs) and all(same)
    report(capsys, "C10 reproducibility", ok, f"{sum(same)}/{len(csvs)} CSV files byte-identical")
    assert ok
