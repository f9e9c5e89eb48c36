"""Experiment orchestration: scenarios in, deterministic CSV out.

Each ``run_*`` function turns a validated :class:`~.scenario.ScenarioConfig`
into a :class:`RunOutput` — column-oriented rows plus a metadata block with
the fully resolved configuration, grid sizes, and convergence flags.  The
CSV serialization is RFC 4180 (CRLF line endings, ``.`` decimal separator)
with every float printed to 12 significant digits; the metadata block rides
on top as ``# key = value`` comment lines.

Sweep points are independent work items.  They are distributed over a
process pool (``DECOUPLE_SIM_THREADS`` or the ``workers`` argument sets the
size) and collected in task order, so the output is bit-identical for any
worker count: each item's arithmetic is self-contained and the reduction
order is fixed.  Heavy tables are built once per (control, bath, step count)
inside each worker and reused through the engine's cache.

The ratio experiments add bit-flip and dissipation reservoirs alongside the
protected-against dephasing bath.  The swept abscissa is the ratio of
coupling *amplitudes*, so an added bath at ratio r carries coupling strength
eta_added = r^2 * eta_base (the correlation functions, and hence every
second-order decay rate, scale with the amplitude squared).  At r = 1 the
added couplings reach full strength; at r = 0 they vanish identically and
the sweep reproduces the dephasing-only result exactly.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .baths import ReservoirSpec, ThermalParams
from .control import MODE_BARE, MODE_DEPHASING, MODE_FULL, ControlParams
from .engine import (IntegratorConfig, batch_final_fidelities, default_steps,
                     evolve, fidelity_derivative)
from .errors import ConfigurationError, UsageError
from .scenario import ScenarioConfig
from .su2 import bloch_state_batch, density_from_bloch

_MAX_CSV_ROWS_PER_CURVE = 800  # time traces are thinned to about this many


def resolve_workers(requested: int | None = None, n_tasks: int = 1) -> int:
    """Worker count: explicit argument, then DECOUPLE_SIM_THREADS, then CPU
    count — never more than there are tasks."""
    if requested is None:
        env = os.environ.get("DECOUPLE_SIM_THREADS")
        if env is not None:
            try:
                requested = int(env)
            except ValueError:
                raise ConfigurationError(
                    f"DECOUPLE_SIM_THREADS must be an integer, got {env!r}") from None
    if requested is None:
        requested = os.cpu_count() or 1
    if requested < 1:
        raise ConfigurationError(f"worker count must be >= 1, got {requested}")
    return max(1, min(requested, n_tasks))


def _map_ordered(fn, tasks, workers: int):
    """Apply ``fn`` to every task, results in task order regardless of pool."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


@dataclass(frozen=True)
class SweepResult:
    """Fidelity over an initial-condition grid, with its minimum located."""

    thetas: np.ndarray
    phis: np.ndarray
    fidelity: np.ndarray           # (n_theta, n_phi)
    fidelity_refined: np.ndarray   # same grid, doubled step count
    min_fidelity: float
    argmin_theta: float
    argmin_phi: float
    convergence_gap: float
    converged: bool
    min_eigenvalue: float

    @property
    def min_fidelity_refined(self) -> float:
        return float(np.min(self.fidelity_refined))


@dataclass(frozen=True)
class RunOutput:
    """Rows plus metadata; serializes to one deterministic CSV document."""

    name: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    metadata: tuple[tuple[str, str], ...]
    sweep: SweepResult | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, value in self.metadata:
            buf.write(f"# {key} = {value}\r\n")
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def _base_metadata(cfg: ScenarioConfig, steps: int) -> list[tuple[str, str]]:
    items = [("generator", f"decouple-sim {__version__}")]
    items.extend(cfg.metadata_items())
    items.append(("integrator.steps", str(steps)))
    return items


def _resolved_steps(cfg: ScenarioConfig, controls) -> int:
    if cfg.steps is not None:
        return cfg.steps
    return max(default_steps(c) for c in controls)


def _thin_indices(steps: int) -> np.ndarray:
    """Deterministic row thinning for time-trace CSVs, endpoint kept."""
    stride = max(1, steps // _MAX_CSV_ROWS_PER_CURVE)
    idx = list(range(0, steps + 1, stride))
    if idx[-1] != steps:
        idx.append(steps)
    return np.asarray(idx)


def _require(cfg: ScenarioConfig, experiment: str) -> None:
    if cfg.experiment != experiment:
        raise UsageError(
            f"scenario declares experiment '{cfg.experiment}', not "
            f"'{experiment}'")


def _case_label(case) -> str:
    return "bare" if case == "bare" else f"n{case}"


def _case_control(case) -> ControlParams:
    if case == "bare":
        return ControlParams(mode=MODE_BARE)
    return ControlParams(mode=MODE_DEPHASING, n=case)


# ---------------------------------------------------------------------------
# worker payloads (module-level for pickling)

def _trace_task(args):
    (case, cfg_bytes) = args
    cfg, steps = cfg_bytes
    control = _case_control(case)
    rho0 = density_from_bloch(cfg.initial_theta, cfg.initial_phi).entries
    traj = evolve(rho0, control, cfg.reservoirs, cfg.thermal,
                  IntegratorConfig(steps, cfg.tol))
    return traj.fidelity, traj.convergence_gap, traj.min_eigenvalue


def _derivative_task(args):
    (s_value, cfg_bytes) = args
    cfg, steps = cfg_bytes
    base = cfg.reservoirs[0]
    bath = (ReservoirSpec(error_class="dephasing", eta=base.eta, s=s_value,
                          omega_c=base.omega_c),)
    rho0 = density_from_bloch(cfg.initial_theta, cfg.initial_phi).entries
    traj = evolve(rho0, ControlParams(mode=MODE_BARE), bath, cfg.thermal,
                  IntegratorConfig(steps, cfg.tol))
    _, deriv = fidelity_derivative(traj)
    return deriv, float(traj.fidelity[-1]), traj.convergence_gap


def _sweep_fidelities(control, reservoirs, thermal, steps, tol,
                      n_theta, n_phi):
    thetas = np.linspace(0.0, math.pi, n_theta)
    phis = np.linspace(0.0, 2.0 * math.pi, n_phi, endpoint=False)
    batch = bloch_state_batch(thetas, phis)
    fid1, _, _, _, eig1 = batch_final_fidelities(
        control, reservoirs, thermal, IntegratorConfig(steps, tol), batch)
    fid2, _, _, _, eig2 = batch_final_fidelities(
        control, reservoirs, thermal, IntegratorConfig(2 * steps, tol), batch)
    gap = float(np.max(np.abs(fid1 - fid2)))
    result = SweepResult(
        thetas=thetas, phis=phis,
        fidelity=fid1.reshape(n_theta, n_phi),
        fidelity_refined=fid2.reshape(n_theta, n_phi),
        min_fidelity=float(np.min(fid1)),
        argmin_theta=float(thetas[np.argmin(fid1) // n_phi]),
        argmin_phi=float(phis[np.argmin(fid1) % n_phi]),
        convergence_gap=gap, converged=gap <= tol,
        min_eigenvalue=float(min(eig1, eig2)))
    return result


def _sweep_task(args):
    control, reservoirs, thermal, steps, tol, n_theta, n_phi = args
    return _sweep_fidelities(control, reservoirs, thermal, steps, tol,
                             n_theta, n_phi)


def _added_reservoirs(base: ReservoirSpec, ratio: float, added_s: int):
    """Bit-flip + dissipation baths at amplitude ratio r: eta = r^2 eta_base."""
    eta = ratio * ratio * base.eta
    return (ReservoirSpec(error_class="bit_flip", eta=eta, s=added_s,
                          omega_c=base.omega_c),
            ReservoirSpec(error_class="dissipation", eta=eta, s=added_s,
                          omega_c=base.omega_c))


# ---------------------------------------------------------------------------
# runners

def run_trace(cfg: ScenarioConfig, workers: int | None = None) -> RunOutput:
    """Fidelity versus time, one column per decoupling case."""
    _require(cfg, "trace")
    controls = [_case_control(c) for c in cfg.trace_cases]
    steps = _resolved_steps(cfg, controls)
    payload = (cfg, steps)
    results = _map_ordered(_trace_task,
                           [(case, payload) for case in cfg.trace_cases],
                           resolve_workers(workers, len(cfg.trace_cases)))
    idx = _thin_indices(steps)
    t_over_tau = np.linspace(0.0, 1.0, steps + 1)[idx]
    columns = ("t_over_tau",) + tuple(
        f"F_{_case_label(c)}" for c in cfg.trace_cases)
    table = np.column_stack([t_over_tau]
                            + [fid[idx] for fid, _, _ in results])
    meta = _base_metadata(cfg, steps)
    meta.append(("grid.n_rows", str(len(idx))))
    for case, (_, gap, _) in zip(cfg.trace_cases, results):
        meta.append((f"convergence.{_case_label(case)}",
                     f"{gap:.3g} ({'converged' if gap <= cfg.tol else 'flagged'})"))
    for case, (fid, _, _) in zip(cfg.trace_cases, results):
        meta.append((f"endpoint.{_case_label(case)}", f"{fid[-1]:.12g}"))
    return RunOutput(name="trace", columns=columns,
                     rows=tuple(map(tuple, table)), metadata=tuple(meta))


def run_trace_derivative(cfg: ScenarioConfig,
                         workers: int | None = None) -> RunOutput:
    """dF/dt of the unprotected gate for ohmic (s=1) and super-ohmic (s=3)
    variants of the scenario's dephasing bath, evaluated from the generator."""
    _require(cfg, "trace_derivative")
    steps = _resolved_steps(cfg, [ControlParams(mode=MODE_BARE)])
    payload = (cfg, steps)
    s_values = (1, 3)
    results = _map_ordered(_derivative_task,
                           [(s, payload) for s in s_values],
                           resolve_workers(workers, len(s_values)))
    idx = _thin_indices(steps)
    t_over_tau = np.linspace(0.0, 1.0, steps + 1)[idx]
    labels = ("ohmic", "super_ohmic")
    columns = ("t_over_tau",) + tuple(f"dF_dt_{lab}" for lab in labels)
    table = np.column_stack([t_over_tau]
                            + [deriv[idx] for deriv, _, _ in results])
    meta = _base_metadata(cfg, steps)
    meta.append(("grid.n_rows", str(len(idx))))
    for lab, (_, final, gap) in zip(labels, results):
        meta.append((f"endpoint.{lab}", f"{final:.12g}"))
        meta.append((f"convergence.{lab}",
                     f"{gap:.3g} ({'converged' if gap <= cfg.tol else 'flagged'})"))
    return RunOutput(name="trace_derivative", columns=columns,
                     rows=tuple(map(tuple, table)), metadata=tuple(meta))


def run_bloch_sweep(cfg: ScenarioConfig,
                    workers: int | None = None) -> RunOutput:
    """F(tau) over the initial-condition grid; reports the minimum and where
    it sits.  A single (theta, phi) pair degenerates to a one-point grid."""
    _require(cfg, "bloch_sweep")
    steps = _resolved_steps(cfg, [cfg.control])
    if cfg.initial_theta is not None:
        thetas = np.asarray([cfg.initial_theta])
        phis = np.asarray([cfg.initial_phi])
        batch = density_from_bloch(cfg.initial_theta, cfg.initial_phi).entries
        fid1, _, _, _, eig1 = batch_final_fidelities(
            cfg.control, cfg.reservoirs, cfg.thermal,
            IntegratorConfig(steps, cfg.tol), batch[None, :, :])
        fid2, _, _, _, eig2 = batch_final_fidelities(
            cfg.control, cfg.reservoirs, cfg.thermal,
            IntegratorConfig(2 * steps, cfg.tol), batch[None, :, :])
        gap = float(abs(fid1[0] - fid2[0]))
        sweep = SweepResult(thetas=thetas, phis=phis,
                            fidelity=fid1.reshape(1, 1),
                            fidelity_refined=fid2.reshape(1, 1),
                            min_fidelity=float(fid1[0]),
                            argmin_theta=float(thetas[0]),
                            argmin_phi=float(phis[0]),
                            convergence_gap=gap, converged=gap <= cfg.tol,
                            min_eigenvalue=float(min(eig1, eig2)))
    else:
        sweep = _sweep_fidelities(cfg.control, cfg.reservoirs, cfg.thermal,
                                  steps, cfg.tol, cfg.n_theta, cfg.n_phi)
    rows = []
    for i, th in enumerate(sweep.thetas):
        for j, ph in enumerate(sweep.phis):
            rows.append((float(th), float(ph), float(sweep.fidelity[i, j])))
    meta = _base_metadata(cfg, steps)
    meta.append(("grid.n_theta", str(len(sweep.thetas))))
    meta.append(("grid.n_phi", str(len(sweep.phis))))
    meta.append(("min_fidelity", f"{sweep.min_fidelity:.12g}"))
    meta.append(("argmin.theta", f"{sweep.argmin_theta:.12g}"))
    meta.append(("argmin.phi", f"{sweep.argmin_phi:.12g}"))
    meta.append(("min_fidelity_refined", f"{sweep.min_fidelity_refined:.12g}"))
    meta.append(("convergence.sweep",
                 f"{sweep.convergence_gap:.3g} "
                 f"({'converged' if sweep.converged else 'flagged'})"))
    meta.append(("min_eigenvalue", f"{sweep.min_eigenvalue:.12g}"))
    return RunOutput(name="bloch_sweep", columns=("theta", "phi", "F"),
                     rows=tuple(rows), metadata=tuple(meta), sweep=sweep)


def eta_ratio_grid(cfg: ScenarioConfig) -> np.ndarray:
    """The swept amplitude ratios: an exact zero (the dephasing-only
    reference) followed by the logarithmic grid."""
    grid = np.geomspace(cfg.ratio_min, cfg.ratio_max, cfg.ratio_points)
    return np.concatenate([[0.0], grid])


def run_eta_ratio_sweep(cfg: ScenarioConfig,
                        workers: int | None = None) -> RunOutput:
    """Minimum Bloch-sweep fidelity versus added-coupling amplitude ratio,
    for ohmic and super-ohmic added bit-flip + dissipation baths."""
    _require(cfg, "eta_ratio_sweep")
    steps = _resolved_steps(cfg, [cfg.control])
    base = cfg.reservoirs[0]
    ratios = eta_ratio_grid(cfg)
    variants = (1, 3)
    tasks = []
    for added_s in variants:
        for r in ratios:
            reservoirs = (base,) + _added_reservoirs(base, float(r), added_s)
            tasks.append((cfg.control, reservoirs, cfg.thermal, steps,
                          cfg.tol, cfg.n_theta, cfg.n_phi))
    results = _map_ordered(_sweep_task, tasks,
                           resolve_workers(workers, len(tasks)))
    by_variant = [results[:len(ratios)], results[len(ratios):]]
    rows = []
    for k, r in enumerate(ratios):
        rows.append((float(r),
                     by_variant[0][k].min_fidelity,
                     by_variant[1][k].min_fidelity))
    meta = _base_metadata(cfg, steps)
    meta.append(("grid.n_ratios", str(len(ratios))))
    meta.append(("grid.n_theta", str(cfg.n_theta)))
    meta.append(("grid.n_phi", str(cfg.n_phi)))
    worst = max(res.convergence_gap for res in results)
    meta.append(("convergence.worst_gap",
                 f"{worst:.3g} ({'converged' if worst <= cfg.tol else 'flagged'})"))
    meta.append(("min_eigenvalue",
                 f"{min(res.min_eigenvalue for res in results):.12g}"))
    return RunOutput(
        name="eta_ratio_sweep",
        columns=("eta_ratio", "min_F_ohmic_added", "min_F_super_ohmic_added"),
        rows=tuple(rows), metadata=tuple(meta))


def run_full_protection_table(cfg: ScenarioConfig,
                              workers: int | None = None) -> RunOutput:
    """Minimum fidelity for added {ohmic, super-ohmic} baths under the
    dephasing-only and full decoupling fields, at the configured amplitude
    ratio (default 0.2)."""
    _require(cfg, "full_protection_table")
    base = cfg.reservoirs[0]
    controls = {
        MODE_DEPHASING: ControlParams(mode=MODE_DEPHASING, n=cfg.control.n),
        MODE_FULL: ControlParams(mode=MODE_FULL, n=cfg.control.n,
                                 m=cfg.control.m),
    }
    steps = _resolved_steps(cfg, list(controls.values()))
    cases = [(added_s, field)
             for added_s in (1, 3) for field in (MODE_DEPHASING, MODE_FULL)]
    tasks = []
    for added_s, field in cases:
        reservoirs = (base,) + _added_reservoirs(base, cfg.table_ratio, added_s)
        tasks.append((controls[field], reservoirs, cfg.thermal, steps,
                      cfg.tol, cfg.n_theta, cfg.n_phi))
    results = _map_ordered(_sweep_task, tasks,
                           resolve_workers(workers, len(tasks)))
    rows = []
    for (added_s, field), res in zip(cases, results):
        rows.append(("ohmic" if added_s == 1 else "super_ohmic", field,
                     res.min_fidelity, res.argmin_theta, res.argmin_phi))
    meta = _base_metadata(cfg, steps)
    meta.append(("grid.n_theta", str(cfg.n_theta)))
    meta.append(("grid.n_phi", str(cfg.n_phi)))
    worst = max(res.convergence_gap for res in results)
    meta.append(("convergence.worst_gap",
                 f"{worst:.3g} ({'converged' if worst <= cfg.tol else 'flagged'})"))
    for (added_s, field), res in zip(cases, results):
        label = f"{'ohmic' if added_s == 1 else 'super_ohmic'}.{field}"
        meta.append((f"min_fidelity.{label}", f"{res.min_fidelity:.12g}"))
        meta.append((f"min_fidelity_refined.{label}",
                     f"{res.min_fidelity_refined:.12g}"))
    return RunOutput(
        name="full_protection_table",
        columns=("added_baths", "field", "min_fidelity", "argmin_theta",
                 "argmin_phi"),
        rows=tuple(rows), metadata=tuple(meta))


_RUNNERS = {
    "trace": run_trace,
    "trace_derivative": run_trace_derivative,
    "bloch_sweep": run_bloch_sweep,
    "eta_ratio_sweep": run_eta_ratio_sweep,
    "full_protection_table": run_full_protection_table,
}


def run_experiment(cfg: ScenarioConfig,
                   workers: int | None = None) -> RunOutput:
    """Dispatch on the scenario's experiment field."""
    return _RUNNERS[cfg.experiment](cfg, workers=workers)
