"""Experiment orchestration behind the CLI subcommands.

Every command writes into a staging directory that is moved into place only
when the command finishes, so a failed run leaves no partial products.  All
CSV floats use 17 significant digits and all physical columns are SI.
"""
from __future__ import annotations

import hashlib
import json
import math
import platform
import shutil
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy

from . import __version__
from .attenuation import (AttenuatedField, AttenuationKind, AttenuationMode, slit_packets,
                          theoretical_visibility)
from .config import RunConfig
from .fields import CoherenceMode, evaluate
from .packets import TAU, ExperimentSetup, packet_eval
from .screens import (Orientation, ScreenSpec, analytic_profile, count_local_maxima,
                      default_grid, duality_metrics, histogram_bins, measure_visibility,
                      record, sweeper_metrics, termination_counts)
from .trajectories import (Slit, Termination, Trajectory, count_midline_crossings,
                           integrate_batch, launch_positions, no_crossing_locus)
from .verification import verify_all

COMMANDS = ("profile", "trajectories", "sweep-a", "duality-table", "verify")


class RunFailure(RuntimeError):
    """A run that completed but did not meet its success condition (exit code 2)."""


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


@dataclass
class Outputs:
    """Files of one run, written under a staging directory."""

    root: Path
    files: list[str] = field(default_factory=list)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.root / name

    def csv(self, name: str, header: dict, columns: Sequence[str], rows: Iterable[Sequence]):
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            for key, value in header.items():
                fh.write(f"# {key}: {fmt(value)}\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(fmt(v) for v in row) + "\n")

    def json(self, name: str, payload):
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _tag(a: float) -> str:
    return format(a, ".3g").replace("+", "")


# building blocks -----------------------------------------------------------

def run_trajectories(setup: ExperimentSetup, model: AttenuatedField, cfg: RunConfig,
                     seed: int, threads: int = 1) -> list[Trajectory]:
    """Launch, integrate (optionally across threads) and sort by slit then ``x0``."""
    tc = cfg.trajectories
    launches = launch_positions(setup, tc.n_per_slit, seed=seed, sampler=tc.sampler)
    icfg = cfg.integrator.build(setup)
    if threads <= 1:
        trs = integrate_batch(launches, setup, model, icfg)
    else:
        chunks = [list(c) for c in np.array_split(np.array(launches, dtype=object), threads)
                  if len(c)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(lambda c: integrate_batch(c, setup, model, icfg), chunks)
            trs = [tr for part in parts for tr in part]
    return sorted(trs, key=lambda tr: (int(tr.slit), tr.x0))


def _trajectory_rows(setup: ExperimentSetup, trs: list[Trajectory]):
    L, T = setup.length_unit, setup.time_unit
    for i, tr in enumerate(trs):
        for t, x, y in tr.points:
            yield i, int(tr.slit), t * T, x * L, y * L


def _visibility_point(model: AttenuatedField, t: float) -> float:
    # envelopes of the unattenuated channels are equal on the no-crossing locus
    return float(no_crossing_locus(model.base_packets, t))


def trajectory_metrics(setup: ExperimentSetup, model: AttenuatedField,
                       trs: list[Trajectory], cfg: RunConfig):
    """Screens, sweeper summary and bookkeeping for one trajectory batch."""
    L = setup.length_unit
    weights = None
    if cfg.screens.density_weighted:
        weights = {Slit.SLIT1: model.packets[0].weight ** 2,
                   Slit.SLIT2: model.packets[1].weight ** 2 if not model.attenuation.is_mixture
                   else model.attenuation.a}
    fwd = record(trs, ScreenSpec(Orientation.FORWARD, cfg.screens.forward_bin_width / L),
                 weights)
    side_y = np.array([tr.y[-1] for tr in trs if tr.termination is Termination.SIDEWAYS_SCREEN])
    if cfg.screens.sideways_bin_width is not None:
        bw = cfg.screens.sideways_bin_width / L
    elif side_y.size >= 2 and np.ptp(side_y) > 0:
        edges = histogram_bins(side_y)
        bw = float(edges[1] - edges[0])
    else:
        bw = 1.0
    side = record(trs, ScreenSpec(Orientation.SIDEWAYS, bw), weights)
    sw = sweeper_metrics(side, setup)
    counts = termination_counts(trs)
    locus = lambda t: no_crossing_locus(model.base_packets, t)  # noqa: E731
    metrics = {
        "launched": {s.name: sum(counts[s].values()) for s in Slit},
        "terminations": {s.name: {k.value: v for k, v in counts[s].items()} for s in Slit},
        "forward_registered_slit2": fwd.n_registered(Slit.SLIT2),
        "n_a": sw.n_a,
        "sideways_fraction": sw.sideways_fraction,
        "median_angle_rad": sw.median_angle_rad,
        "bunching_iqr": sw.bunching_iqr * L if not sw.empty else math.nan,
        "bunching_ratio": sw.bunching_ratio,
        "sweeper_empty": sw.empty,
        "midline_crossings": count_midline_crossings(trs, locus),
        "sideways_local_maxima_slit2": count_local_maxima(side.counts_slit2) if not sw.empty else 0,
    }
    return fwd, side, metrics


def _setup_header(setup: ExperimentSetup, **extra) -> dict:
    head = {
        "particle_mass_kg": setup.particle_mass, "wavelength_m": setup.wavelength,
        "slit_separation_m": setup.slit_separation, "slit_width_sigma_m": setup.slit_width_sigma,
        "forward_screen_distance_m": setup.forward_screen_distance,
        "sideways_screen_x_m": setup.sideways_screen_x,
        "forward_speed_m_per_s": setup.forward_speed, "time_to_screen_s": setup.time_to_screen,
    }
    head.update(extra)
    return head


def _write_screen(out: Outputs, name: str, rec, setup: ExperimentSetup, header: dict):
    L = setup.length_unit
    rows = zip(rec.centers * L, rec.counts_total, rec.counts_slit1, rec.counts_slit2)
    out.csv(name, header, ("bin_center", "counts_total", "counts_slit1", "counts_slit2"), rows)


def _write_heatmap(out: Outputs, name: str, setup: ExperimentSetup, model: AttenuatedField,
                   cfg: RunConfig, header: dict):
    t = np.linspace(0.0, setup.t_screen, cfg.heatmap.nt)
    x = default_grid(setup, setup.t_screen, cfg.heatmap.nx)
    X, Tm = np.meshgrid(x, t)
    X, Tm = X.ravel(), Tm.ravel()
    s1 = packet_eval(model.packets[0], X, Tm)
    s2 = packet_eval(model.packets[1], X, Tm)
    f = evaluate(s1, s2, model.coherence, model.density_floor)
    Ptot, Jtot, vtot = f.Ptot, f.Jtot, f.vtot
    if model.attenuation.is_mixture:
        Ptot, Jtot = model.density(X, Tm), model.current(X, Tm)
        vtot = model.velocity(X, Tm).v
    L, T = setup.length_unit, setup.time_unit
    rows = zip(X * L, Tm * T, f.P1 / L, f.P2 / L, Ptot / L, Jtot / T, vtot * L / T, f.phi)
    out.csv(name, header, ("x", "t", "P1", "P2", "Ptot", "Jtot", "vtot", "phi"), rows)


# commands ------------------------------------------------------------------

def cmd_profile(cfg: RunConfig, out: Outputs, seed: int, threads: int) -> dict:
    setup = cfg.setup.build()
    t = setup.t_screen
    pc = cfg.profile
    entries = []
    for a in cfg.attenuation.a_values:
        for mode in cfg.attenuation.mode_list(a):
            for coh in cfg.coherence_modes():
                model = AttenuatedField.from_setup(setup, mode, coh,
                                                   cfg.integrator.density_floor)
                grid = default_grid(setup, t, pc.grid_points, pc.half_widths)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    prof = analytic_profile(model, t, grid)
                vis = measure_visibility(model, t, _visibility_point(model, t),
                                         pc.visibility_bin_width, pc.phase_steps)
                dm = duality_metrics(a)
                name = f"profile_{mode.kind.value}_{coh.value}_a{_tag(a)}.csv"
                header = _setup_header(setup, a=a, attenuation=mode.kind.value,
                                       coherence=coh.value, t_screen_s=setup.time_to_screen,
                                       captured_mass=prof.captured_mass,
                                       warning=prof.warning or "none")
                L = setup.length_unit
                out.csv(name, header, ("x", "intensity"),
                        zip(prof.x * L, prof.intensity / L))
                entries.append({
                    "a": a, "mode": mode.kind.value, "coherence": coh.value, "file": name,
                    "V_measured": vis.V, "V_theory": theoretical_visibility(a, mode).V,
                    "D": dm.D, "duality_residual": dm.duality_residual,
                    "raw_area": prof.raw_area, "captured_mass": prof.captured_mass,
                    "warning": prof.warning,
                })
    out.json("profile_metrics.json", entries)
    return {"profiles": len(entries)}


def cmd_trajectories(cfg: RunConfig, out: Outputs, seed: int, threads: int) -> dict:
    setup = cfg.setup.build()
    entries = []
    for a in cfg.attenuation.a_values:
        for mode in cfg.attenuation.mode_list(a):
            for coh in cfg.coherence_modes():
                model = AttenuatedField.from_setup(setup, mode, coh,
                                                   cfg.integrator.density_floor)
                trs = run_trajectories(setup, model, cfg, seed, threads)
                stem = f"{mode.kind.value}_{coh.value}_a{_tag(a)}"
                header = _setup_header(
                    setup, a=a, attenuation=mode.kind.value, coherence=coh.value, seed=seed,
                    sampler=cfg.trajectories.sampler, n_per_slit=cfg.trajectories.n_per_slit,
                    rel_tol=cfg.integrator.rel_tol, abs_tol=cfg.integrator.abs_tol)
                out.csv(f"trajectories_{stem}.csv", header, ("traj_id", "slit", "t", "x", "y"),
                        _trajectory_rows(setup, trs))
                fwd, side, metrics = trajectory_metrics(setup, model, trs, cfg)
                _write_screen(out, f"screen_forward_{stem}.csv", fwd, setup, header)
                _write_screen(out, f"screen_sideways_{stem}.csv", side, setup, header)
                if cfg.heatmap.enabled:
                    _write_heatmap(out, f"density_{stem}.csv", setup, model, cfg, header)
                entries.append({"a": a, "mode": mode.kind.value, "coherence": coh.value,
                                **metrics})
    out.json("trajectory_metrics.json", entries)
    return {"runs": len(entries)}


def dedupe_a(values: Sequence[float]) -> list[float]:
    """Unique transmission factors in descending order; warns on duplicates."""
    if len(values) < 2:
        raise ValueError("sweep-a needs at least two values of a")
    unique = sorted(set(float(v) for v in values), reverse=True)
    if len(unique) < len(values):
        warnings.warn("duplicate a values removed from sweep", UserWarning, stacklevel=2)
    if len(unique) < 2:
        raise ValueError("sweep-a needs at least two distinct values of a")
    return unique


def sweep_rows(cfg: RunConfig, seed: int, threads: int = 1) -> list[dict]:
    setup = cfg.setup.build()
    t = setup.t_screen
    rows = []
    for coh in cfg.coherence_modes():
        for a in dedupe_a(cfg.attenuation.a_values):
            model = AttenuatedField.from_setup(setup, AttenuationMode.stochastic(a), coh,
                                               cfg.integrator.density_floor)
            trs = run_trajectories(setup, model, cfg, seed, threads)
            _, _, m = trajectory_metrics(setup, model, trs, cfg)
            vis = measure_visibility(model, t, _visibility_point(model, t),
                                     cfg.profile.visibility_bin_width, cfg.profile.phase_steps)
            rows.append({
                "a": a, "coherence": coh.value,
                "V_stoch_theory": theoretical_visibility(a, AttenuationKind.STOCHASTIC).V,
                "V_det_theory": theoretical_visibility(a, AttenuationKind.DETERMINISTIC).V,
                "V_measured": vis.V, "D": duality_metrics(a).D,
                "n_a": m["n_a"], "sideways_fraction": m["sideways_fraction"],
                "median_angle_rad": m["median_angle_rad"], "bunching_iqr": m["bunching_iqr"],
                "bunching_ratio": m["bunching_ratio"],
            })
    return rows


def cmd_sweep_a(cfg: RunConfig, out: Outputs, seed: int, threads: int) -> dict:
    rows = sweep_rows(cfg, seed, threads)
    cols = list(rows[0])
    setup = cfg.setup.build()
    out.csv("sweep_a.csv", _setup_header(setup, seed=seed), cols,
            ([r[c] for c in cols] for r in rows))
    return {"rows": len(rows)}


def duality_rows(cfg: RunConfig) -> list[dict]:
    setup = cfg.setup.build()
    t = setup.t_screen
    rows = []
    for a in cfg.attenuation.a_values:
        measured = {}
        for kind in (AttenuationKind.STOCHASTIC, AttenuationKind.DETERMINISTIC):
            model = AttenuatedField.from_setup(setup, AttenuationMode(kind, a),
                                               CoherenceMode.COHERENT)
            measured[kind] = measure_visibility(
                model, t, _visibility_point(model, t),
                cfg.profile.visibility_bin_width, cfg.profile.phase_steps).V
        dm = duality_metrics(a)
        rows.append({
            "a": a,
            "V_stoch_theory": theoretical_visibility(a, AttenuationKind.STOCHASTIC).V,
            "V_det_theory": theoretical_visibility(a, AttenuationKind.DETERMINISTIC).V,
            "V_stoch_measured": measured[AttenuationKind.STOCHASTIC],
            "V_det_measured": measured[AttenuationKind.DETERMINISTIC],
            "D": dm.D, "duality_residual": dm.duality_residual,
        })
    return rows


def cmd_duality_table(cfg: RunConfig, out: Outputs, seed: int, threads: int) -> dict:
    rows = duality_rows(cfg)
    cols = list(rows[0])
    out.csv("duality_table.csv", _setup_header(cfg.setup.build()), cols,
            ([r[c] for c in cols] for r in rows))
    return {"rows": len(rows)}


def verify_report(cfg: RunConfig) -> dict:
    setup = cfg.setup.build()
    vc = cfg.verify
    times = [k * TAU for k in vc.times_tau]
    if vc.include_screen_time:
        times.append(setup.t_screen)
    report = verify_all(slit_packets(setup), a_values=vc.a_values,
                        continuity_a_values=vc.continuity_a_values, times=times,
                        modes=cfg.coherence_modes(), n=vc.grid_points,
                        density_rtol=vc.density_rtol, velocity_rtol=vc.velocity_rtol,
                        continuity_rtol=vc.continuity_rtol)
    report["times"] = times
    return report


def cmd_verify(cfg: RunConfig, out: Outputs, seed: int, threads: int) -> dict:
    report = verify_report(cfg)
    out.json("verify_report.json", report)
    return {"passed": report["passed"]}


_DISPATCH = {
    "profile": cmd_profile,
    "trajectories": cmd_trajectories,
    "sweep-a": cmd_sweep_a,
    "duality-table": cmd_duality_table,
    "verify": cmd_verify,
}


def run(command: str, cfg: RunConfig, out_dir: str | Path, seed: int | None = None,
        threads: int = 1) -> dict:
    """Execute ``command`` and return the manifest.

    Raises :class:`RunFailure` after writing outputs when ``verify`` fails;
    any other exception removes the staged outputs and propagates.
    """
    if command not in _DISPATCH:
        raise ValueError(f"unknown command {command!r}")
    if command == "sweep-a":
        dedupe_a(cfg.attenuation.a_values)  # validate before doing work
    seed = cfg.trajectories.seed if seed is None else seed
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = out_dir / f".staging-{command}"
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir()
    out = Outputs(staging)
    start = time.perf_counter()
    try:
        summary = _DISPATCH[command](cfg, out, seed, max(1, threads))
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    manifest = {
        "command": command,
        "config_sha256": cfg.digest(),
        "config": cfg.model_dump(mode="json"),
        "seed": seed,
        "threads": threads,
        "versions": {"intensity_hybrids": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_s": time.perf_counter() - start,
        "summary": summary,
        "files": {name: _sha256(staging / name) for name in out.files},
    }
    with open(staging / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name in out.files + ["manifest.json"]:
        (staging / name).replace(out_dir / name)
    staging.rmdir()
    if command == "verify" and not summary["passed"]:
        raise RunFailure("verification tolerances not met; see verify_report.json")
    return manifest
