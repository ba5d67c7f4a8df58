"""Scenario orchestration, rate bookkeeping and data-file emission."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import argrelextrema

from . import __version__, dynamics, fiber, measurement, seeding, states, tomography
from .config import ScenarioConfig, ConfigError

SPEED_OF_LIGHT = 299_792_458.0


# --- efficiency bookkeeping -----------------------------------------------

@dataclass(frozen=True)
class EfficiencyBudget:
    """Photon detection efficiency and excitation duty.

    ``attempt_rate`` (excitation attempts per second while an atom is
    trapped) and ``duty_cycle`` (fraction of time with an atom loaded) are
    not known independently and have no defaults.
    """

    attempt_rate: float
    duty_cycle: float
    bare_detection: float = 1.2e-3
    link_transmittance_factor: float = 0.5

    def __post_init__(self):
        if not 0 < self.duty_cycle <= 1:
            raise ValueError("duty_cycle must lie in (0, 1]")
        if self.attempt_rate <= 0:
            raise ValueError("attempt_rate must be > 0")
        for name in ("bare_detection", "link_transmittance_factor"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")

    @property
    def total_detection(self) -> float:
        return self.bare_detection * self.link_transmittance_factor


def estimate_event_rate(budget: EfficiencyBudget) -> float:
    """Detected atom-photon events per minute."""
    return budget.attempt_rate * budget.duty_cycle * budget.total_detection * 60.0


# --- file output ----------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.6g}"


def _round(obj):
    """Six significant digits for floats, recursively; ints untouched."""
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            return None if np.isnan(x) else ("inf" if x > 0 else "-inf")
        return float(f"{x:.6g}")
    return obj


@dataclass
class Table:
    columns: list[str]
    rows: list[tuple]


@dataclass
class ScenarioResult:
    scenario: str
    summary: dict[str, Any]
    tables: dict[str, Table] = field(default_factory=dict)
    figures: dict[str, Table] = field(default_factory=dict)


def write_csv(path: Path, table: Table) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def write_gnuplot(path: Path, table: Table) -> None:
    lines = ["# " + " ".join(table.columns)]
    lines += [" ".join(_fmt(v) for v in row) for row in table.rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_round(data), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8", newline="\n")


def emit_figure_data(result: ScenarioResult, out_dir: Path) -> list[Path]:
    """One CSV (plus a gnuplot .dat twin) per figure panel, other tables as CSV."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, table in result.figures.items():
        write_csv(out_dir / f"{name}.csv", table)
        write_gnuplot(out_dir / f"{name}.dat", table)
        written += [out_dir / f"{name}.csv", out_dir / f"{name}.dat"]
    for name, table in result.tables.items():
        write_csv(out_dir / f"{name}.csv", table)
        written.append(out_dir / f"{name}.csv")
    write_json(out_dir / "summary.json", result.summary)
    written.append(out_dir / "summary.json")
    return written


# --- helpers --------------------------------------------------------------

def atom_state(label: str) -> np.ndarray:
    basis, sign = label.split("-")
    return states.atom_basis_state(basis, sign)


def budget_from(cfg: ScenarioConfig) -> measurement.ErrorBudget:
    e = cfg.error_budget
    return measurement.ErrorBudget(e.atomic_readout_flip, e.dark_count_fraction, e.prep_error,
                                   e.pol_drift_error)


def noise_from(cfg: ScenarioConfig, extra_field=(0.0, 0.0, 0.0)) -> dynamics.NoiseModel:
    n = cfg.noise
    residual = tuple(float(a + b) for a, b in zip(n.static_residual_field, extra_field))
    return dynamics.NoiseModel(residual, tuple(n.shot_to_shot_sigma), n.lightshift_sigma_z,
                               n.trap_circular_fraction, n.atom_temperature_uK)


def fiber_delay(cfg: ScenarioConfig) -> float:
    return cfg.fiber.length_m * cfg.fiber.group_index / SPEED_OF_LIGHT


def _link_block(lo, hi, *, seed, fb, n_record):
    out = []
    for i in range(lo, hi):
        rng = seeding.trial_rng(seed, i, seeding.DOMAIN_LINK)
        link = fiber.FiberLinkState(fiber.random_link_transform(rng), fb.drift_rate,
                                    fb.loss_transmittance)
        res = fiber.run_compensation(link, fiber.ControllerSetting(), fb.threshold,
                                     fb.max_cycles, fb.cycle_time,
                                     polarimeter_sigma=fb.polarimeter_sigma, rng=rng,
                                     max_step=fb.max_step)
        out.append(res if i < n_record else replace(res, trace=[]))
    return out


def compensate_links(cfg: ScenarioConfig, n_links: int, n_record: int = 0):
    from functools import partial

    task = partial(_link_block, seed=cfg.run.seed, fb=cfg.fiber, n_record=n_record)
    parts = seeding.map_blocks(task, n_links, cfg.run.workers, block_size=64)
    return [r for part in parts for r in part]


# --- scenarios ------------------------------------------------------------

def run_correlation_scan(cfg: ScenarioConfig) -> ScenarioResult:
    c = cfg.correlation
    budget = budget_from(cfg)
    joint = states.make_entangled_state()
    channel_info: dict[str, Any] = {"channel": c.channel}
    if c.channel == "compensated":
        comp = compensate_links(cfg, 1, n_record=0)[0]
        rng = seeding.trial_rng(cfg.run.seed, 0, seeding.DOMAIN_LINK, 1)
        _, joint = fiber.transmit_photon(joint, comp.link, comp.setting, rng)
        residual = fiber.jones_to_poincare(fiber.channel_transform(comp.link, comp.setting))
        channel_info.update(compensation_cycles=comp.cycles_used,
                            compensation_converged=comp.converged,
                            residual_rotation_deg=float(np.degrees(np.arccos(
                                np.clip((np.trace(residual) - 1) / 2, -1, 1)))))
    env = measurement.AtomEnvironment(tuple(c.guiding_field), noise_from(cfg, c.residual_field),
                                      cfg.noise.gf)
    delay = c.readout_delay + fiber_delay(cfg)
    betas = np.deg2rad(c.beta_deg)

    summary: dict[str, Any] = {"scenario": "correlation_scan", "seed": cfg.run.seed,
                               "events_per_point": c.events_per_point,
                               "atom_evolution_time_s": delay, **channel_info}
    figures, record_rows = {}, []
    visibilities = {}
    for bi, basis in enumerate(c.bases):
        records = []
        for k, beta in enumerate(betas):
            records += measurement.simulate_events(
                joint, float(beta), basis, budget, c.events_per_point, seed=cfg.run.seed,
                tags=(bi, k), readout_delay=delay, env=env, workers=cfg.run.workers)
        fits = {}
        panel = "fig2" + "abc"[bi]
        for branch, label in (("+", "plus"), ("-", "minus")):
            curve = measurement.build_correlation_curve(records, basis, branch)
            fit = measurement.fit_visibility(curve)
            fits[label] = fit
            figures[f"{panel}_{label}"] = Table(
                ["beta_deg", "P", "sigma_P"],
                [(np.degrees(b), p, e) for b, p, e in
                 zip(curve.beta_grid, curve.probabilities, curve.errors)])
        v, v_err = measurement.combine_visibilities(list(fits.values()))
        visibilities[basis] = v
        summary[f"V_{basis}"] = v
        summary[f"V_{basis}_err"] = v_err
        for label, fit in fits.items():
            summary[f"fit_{basis}_{label}"] = {
                "V": fit.visibility, "V_err": fit.visibility_err, "phase": fit.phase,
                "phase_defined": fit.phase_defined, "rms_residual": fit.rms_residual}
        if c.write_records:
            offset = len(record_rows)
            record_rows += [(offset + i, np.degrees(r.beta), r.photon_outcome, r.atom_basis,
                             r.atom_analysis, r.atom_outcome) for i, r in enumerate(records)]
    if "x" in visibilities and "y" in visibilities:
        vx, vy = (float(np.clip(visibilities[b], 0, 1)) for b in ("x", "y"))
        summary["fidelity_bound"] = measurement.fidelity_bound_from_visibilities(vx, vy)
    tables = {}
    if c.write_records:
        tables["records"] = Table(["trial_index", "beta_deg", "photon_outcome", "atom_basis",
                                   "atom_analysis", "atom_outcome"], record_rows)
    return ScenarioResult("correlation_scan", summary, tables, figures)


def _damped_fringe(t, offset, amp, tau, omega, phi):
    return offset + 0.5 * amp * np.exp(-(t / tau) ** 2) * np.cos(omega * t + phi)


def fit_precession(times, p, sigma=None, omega_guess: float | None = None) -> dict[str, float]:
    """Fit a Gaussian-damped fringe and measure the extrema spacing.

    Returns the fitted 1/e envelope time and angular frequency, the period
    implied by the extrema spacing of the envelope-normalized fringe (within
    1.5 envelope times) and, for comparison, that of the raw curve within
    two envelope times.
    """
    t = np.asarray(times, dtype=float)
    p = np.asarray(p, dtype=float)
    if omega_guess is None:
        spec = np.abs(np.fft.rfft(p - p.mean()))
        freqs = np.fft.rfftfreq(len(t), t[1] - t[0])
        omega_guess = 2 * np.pi * freqs[int(np.argmax(spec[1:])) + 1]
    p0 = [0.5, 2 * (p[0] - 0.5), t[-1] / 3, omega_guess, 0.0]
    sig = None if sigma is None else np.maximum(np.asarray(sigma, dtype=float), 1e-6)
    popt, pcov = curve_fit(_damped_fringe, t, p, p0=p0, sigma=sig, maxfev=20000)
    tau = abs(popt[2])
    dt = t[1] - t[0]
    raw = _extrema_times(t, p, t <= 2 * tau, dt)
    # dividing out the fitted envelope removes the pull of a Gaussian
    # envelope on extremum positions (several percent at t ~ tau)
    window = t <= 1.5 * tau
    flat = (p - popt[0]) / np.exp(-(t / tau) ** 2)
    corrected = _extrema_times(t, flat, window, dt)
    return {"tau": tau, "tau_err": float(np.sqrt(abs(pcov[2, 2]))), "omega": abs(popt[3]),
            "extrema_period": _period(corrected), "n_extrema": len(corrected),
            "raw_extrema_period": _period(raw), "n_raw_extrema": len(raw)}


def _extrema_times(t, y, window, dt) -> np.ndarray:
    yw = y[window]
    idx = np.sort(np.concatenate([argrelextrema(yw, np.greater)[0],
                                  argrelextrema(yw, np.less)[0]]))
    out = []
    for i in idx:
        # parabolic refinement on the three samples around the extremum
        y0, y1, y2 = yw[i - 1], yw[i], yw[i + 1]
        denom = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
        out.append(t[window][i] + shift * dt)
    return np.array(out)


def _period(ext) -> float:
    return 2 * float(np.mean(np.diff(ext))) if len(ext) > 1 else float("nan")


def run_precession(cfg: ScenarioConfig) -> ScenarioResult:
    pc = cfg.precession
    flip = cfg.error_budget.atomic_readout_flip
    times = np.linspace(0.0, pc.t_max, pc.n_times)
    probe = states.atom_basis_state("x", "down")
    res = dynamics.ensemble_evolution(atom_state(pc.initial), pc.guiding_field,
                                      noise_from(cfg), times, pc.n_traj, seed=cfg.run.seed,
                                      gf=cfg.noise.gf, probes=[probe], workers=cfg.run.workers)
    p = flip + (1 - 2 * flip) * res.means[0]
    sem = (1 - 2 * flip) * res.sems[0]
    f_split = dynamics.splitting_frequency(pc.guiding_field[2], cfg.noise.gf)
    fit = fit_precession(times, p, omega_guess=2 * np.pi * f_split if f_split else None)
    summary = {"scenario": "precession", "seed": cfg.run.seed, "n_traj": pc.n_traj,
               "splitting_frequency_hz": f_split,
               "analytic_period_s": 1 / f_split if f_split else None,
               "extrema_period_s": fit["extrema_period"],
               "raw_extrema_period_s": fit["raw_extrema_period"],
               "fit_period_s": 2 * np.pi / fit["omega"],
               "envelope_1e_s": fit["tau"], "envelope_1e_err_s": fit["tau_err"]}
    fig = Table(["t_us", "P_down_x", "sigma"],
                [(t * 1e6, a, b) for t, a, b in zip(times, p, sem)])
    return ScenarioResult("precession", summary, figures={"fig3": fig})


def simulated_tomography(rhos, budget, n_shots: int, n_bootstrap: int, seed: int, panel: int):
    """r_lower with bootstrap errors for each density matrix of a sequence."""
    r_vals, r_errs, rows = [], [], []
    for j, rho in enumerate(rhos):
        rng = seeding.trial_rng(seed, j, seeding.DOMAIN_SHOTS, panel)
        data = tomography.sampled_input(rho, budget, n_shots, rng)
        _, r = tomography.reconstruct_density_matrix(data)
        boot_rng = seeding.trial_rng(seed, j, seeding.DOMAIN_BOOTSTRAP, panel)
        boots = []
        for _ in range(n_bootstrap):
            pops = {b: tuple(boot_rng.binomial(n_shots, min(max(q, 0.0), 1.0)) / n_shots
                             for q in data.populations[b]) for b in tomography.BASES}
            try:
                boots.append(tomography.reconstruct_density_matrix(
                    tomography.TomographyInput(pops, data.shots))[1])
            except tomography.ReconstructionError:
                continue
        r_vals.append(r)
        r_errs.append(float(np.std(boots, ddof=1)))
        rows.append(tuple(data.populations[b][s] for b in tomography.BASES for s in (0, 1)))
    return np.array(r_vals), np.array(r_errs), rows


def run_purity_decay(cfg: ScenarioConfig) -> ScenarioResult:
    d = cfg.purity_decay
    budget = budget_from(cfg)
    times = np.asarray(d.times_us) * 1e-6
    noise = noise_from(cfg)
    summary: dict[str, Any] = {"scenario": "purity_decay", "seed": cfg.run.seed,
                               "n_traj": d.n_traj, "n_shots": d.n_shots}
    figures, tables = {}, {}
    for panel, (name, label) in enumerate((("fig4a", d.transversal_initial),
                                           ("fig4b", d.longitudinal_initial))):
        res = dynamics.ensemble_evolution(atom_state(label), d.guiding_field, noise, times,
                                          d.n_traj, seed=cfg.run.seed + panel, gf=cfg.noise.gf,
                                          workers=cfg.run.workers)
        r, r_err, pops = simulated_tomography(res.rhos, budget, d.n_shots, d.n_bootstrap,
                                              cfg.run.seed, panel)
        fit = tomography.purity_decay_analysis(times, r, r_err)
        key = "transversal" if panel == 0 else "longitudinal"
        summary[key] = {"initial": label, "T_1e_s": fit.t_1e, "T_1e_err_s": fit.t_1e_err,
                        "kind": fit.kind, "r0": fit.r0, "floor": fit.floor,
                        "r_lower_t0": float(r[0])}
        figures[name] = Table(["t_us", "r_lower", "sigma"],
                              [(t * 1e6, a, b) for t, a, b in zip(times, r, r_err)])
        tables[f"{name}_populations"] = Table(
            ["t_us", "P_up_x", "P_down_x", "P_up_y", "P_down_y", "P_up_z", "P_down_z"],
            [(t * 1e6, *row) for t, row in zip(times, pops)])
    return ScenarioResult("purity_decay", summary, tables, figures)


def run_compensation_convergence(cfg: ScenarioConfig) -> ScenarioResult:
    n = cfg.compensation.n_links
    results = compensate_links(cfg, n, n_record=n)
    cycles = np.array([r.cycles_used for r in results])
    ok = np.array([r.converged and r.cycles_used <= cfg.compensation.success_cycles
                   for r in results])
    trace_rows = [(i, *row) for i, r in enumerate(results) for row in r.trace]
    run_rows = [(i, r.cycles_used, r.converged, r.wall_time) for i, r in enumerate(results)]
    summary = {"scenario": "compensation_convergence", "seed": cfg.run.seed, "n_links": n,
               "fraction_within_success_cycles": float(ok.mean()),
               "success_cycles": cfg.compensation.success_cycles,
               "fraction_converged": float(np.mean([r.converged for r in results])),
               "median_cycles": float(np.median(cycles)),
               "p90_cycles": float(np.percentile(cycles, 90)),
               "mean_wall_time_s": float(np.mean([r.wall_time for r in results])),
               "cycle_time_s": cfg.fiber.cycle_time}
    tables = {"compensation_trace": Table(["run", "cycle", "overlap_V", "overlap_45",
                                           "angle_1", "angle_2", "angle_3"], trace_rows),
              "compensation_runs": Table(["run", "cycles", "converged", "wall_time_s"],
                                         run_rows)}
    return ScenarioResult("compensation_convergence", summary, tables)


def run_rate_estimate(cfg: ScenarioConfig) -> ScenarioResult:
    r = cfg.rate
    if r.attempt_rate is None or r.duty_cycle is None:
        raise ConfigError("rate.attempt_rate" if r.attempt_rate is None else "rate.duty_cycle",
                          "required for rate_estimate")
    budget = EfficiencyBudget(r.attempt_rate, r.duty_cycle, r.bare_detection,
                              r.link_transmittance_factor)
    summary = {"scenario": "rate_estimate", "total_detection_efficiency": budget.total_detection,
               "events_per_minute": estimate_event_rate(budget)}
    return ScenarioResult("rate_estimate", summary)


RUNNERS = {
    "correlation_scan": run_correlation_scan,
    "precession": run_precession,
    "purity_decay": run_purity_decay,
    "compensation_convergence": run_compensation_convergence,
    "rate_estimate": run_rate_estimate,
}


class ScenarioError(RuntimeError):
    def __init__(self, scenario: str, cause: Exception):
        super().__init__(f"{scenario}: {type(cause).__name__}: {cause}")
        self.scenario = scenario
        self.cause = cause


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> dict[str, Any]:
    """Run the configured scenario, write its files and return the manifest."""
    cfg.validate()
    out = Path(out_dir if out_dir is not None else cfg.run.output_dir)
    start = time.perf_counter()
    try:
        result = RUNNERS[cfg.run.scenario](cfg)
    except ConfigError:
        raise
    except Exception as exc:
        raise ScenarioError(cfg.run.scenario, exc) from exc
    files = emit_figure_data(result, out)
    manifest = {
        "scenario": cfg.run.scenario,
        "seed": cfg.run.seed,
        "version": __version__,
        "config": cfg.echo(),
        "files": {p.name: sha256(p) for p in sorted(files)},
        "wall_clock_s": time.perf_counter() - start,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8", newline="\n")
    manifest["summary"] = result.summary
    return manifest
