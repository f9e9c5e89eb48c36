"""Command-line front end.

Subcommands
-----------
``run <scenario-file>``
    Execute the experiment a scenario file describes and write its CSV
    (``--out-dir`` chooses where, default the working directory).  Flags
    ``--threads``, ``--steps``, and ``--tol`` override the configuration.
``verify``
    Run the built-in oracle and property suites (closed-form kernels against
    adaptive quadrature, field synthesis against finite differences, gate
    and decoupling identities, propagation invariants) and print one
    PASS/FAIL line per check.
``plot <csv> --kind line|heatmap``
    Render a previously produced CSV as a static SVG.

Exit codes: 0 success, 1 failed verification, 2 validation error,
3 convergence/integration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys

import numpy as np

from . import __version__
from .baths import (DEFAULT_THERMAL, ReservoirSpec, bath_autocorrelations,
                    build_kernel_table, correlation_matrix, spectral_density,
                    thermal_occupation)
from .control import (MODE_BARE, MODE_DEPHASING, MODE_FULL, ControlParams,
                      control_field, decoupler_unitaries, total_path,
                      verify_gate)
from .engine import (IntegratorConfig, build_decoherence_table,
                     decoherence_tensor, evolve)
from .errors import (ConfigurationError, ConvergenceError, DecoupleSimError,
                     DomainError, FormatError, IntegrationError,
                     PathConsistencyError, RangeError, ScenarioError,
                     UsageError)
from .plotting import PLOT_KINDS, emit_plot
from .runner import run_experiment
from .scenario import load_scenario
from .su2 import density_from_bloch, field_from_path

_VALIDATION_ERRORS = (ScenarioError, ConfigurationError, DomainError,
                      RangeError, FormatError, UsageError,
                      PathConsistencyError)
_CONVERGENCE_ERRORS = (ConvergenceError, IntegrationError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decouple-sim",
        description="Continuous-decoupling gate-protection simulator")
    parser.add_argument("--version", action="version",
                        version=f"decouple-sim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario file")
    p_run.add_argument("scenario", help="path to the scenario file")
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker processes (default: DECOUPLE_SIM_THREADS "
                            "or the CPU count)")
    p_run.add_argument("--out-dir", default=".",
                       help="directory for the CSV output (default: .)")
    p_run.add_argument("--steps", type=int, default=None,
                       help="override integrator.steps")
    p_run.add_argument("--tol", type=float, default=None,
                       help="override integrator.tol")

    sub.add_parser("verify", help="run the oracle/property suites")

    p_plot = sub.add_parser("plot", help="render a runner CSV to SVG")
    p_plot.add_argument("csv", help="CSV file produced by 'run'")
    p_plot.add_argument("--kind", required=True, choices=PLOT_KINDS)
    p_plot.add_argument("--out", default=None, help="output SVG path")
    return parser


def _cmd_run(args) -> int:
    cfg = load_scenario(args.scenario)
    overrides = {}
    if args.steps is not None:
        if args.steps < 1:
            raise ConfigurationError(f"--steps must be >= 1, got {args.steps}")
        overrides["steps"] = args.steps
    if args.tol is not None:
        if args.tol <= 0.0:
            raise ConfigurationError(f"--tol must be positive, got {args.tol}")
        overrides["tol"] = args.tol
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    output = run_experiment(cfg, workers=args.threads)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, f"{output.name}.csv")
    output.write(path)
    print(f"wrote {path} ({len(output.rows)} rows)")
    for key, value in output.metadata:
        if key.startswith(("min_fidelity", "endpoint.", "convergence.")):
            print(f"  {key} = {value}")
    return 0


# ---------------------------------------------------------------------------
# verification suite

def _check_kernel_oracle():
    """Closed-form kernels against adaptive quadrature of their defining
    frequency integrals, 10 (delta, s) probes."""
    from scipy.integrate import quad
    th = DEFAULT_THERMAL
    worst = 0.0
    for s in (1, 3):
        spec = ReservoirSpec(error_class="dephasing", eta=1.0 / 16.0, s=s)
        beta = th.beta_omega_c / spec.omega_c
        for delta in (0.01, 0.1, 0.37, 0.5, 1.0):
            i1, i2 = bath_autocorrelations(delta, spec, th)
            upper = 80.0 * spec.omega_c

            def f1(w, part):
                val = (spectral_density(w, spec) * thermal_occupation(w, beta)
                       * np.exp(-1j * w * delta))
                return val.real if part == 0 else val.imag

            def f2(w, part):
                val = (spectral_density(w, spec)
                       * (thermal_occupation(w, beta) + 1.0)
                       * np.exp(1j * w * delta))
                return val.real if part == 0 else val.imag

            q1 = complex(quad(f1, 0, upper, args=(0,), limit=800)[0],
                         quad(f1, 0, upper, args=(1,), limit=800)[0])
            q2 = complex(quad(f2, 0, upper, args=(0,), limit=800)[0],
                         quad(f2, 0, upper, args=(1,), limit=800)[0])
            worst = max(worst, abs(i1 - q1) / abs(q1), abs(i2 - q2) / abs(q2))
    return worst <= 1e-8, f"max relative deviation {worst:.3g} (tolerance 1e-8)"


def _check_field_synthesis():
    """Closed-form control fields against finite-difference synthesis from
    the unitary path, 200 random times per mode."""
    rng = np.random.default_rng(20260822)
    params = (ControlParams(mode=MODE_BARE),
              ControlParams(mode=MODE_DEPHASING, n=3),
              ControlParams(mode=MODE_FULL, n=3, m=2))
    worst = 0.0
    for p in params:
        path = total_path(p)
        path = dataclasses.replace(path, derivative=None)
        scale = (np.pi / p.tau) * (2 * p.winding_x + 2 * p.winding_z + 1)
        for t in rng.uniform(0.01, 0.99, size=200) * p.tau:
            exact = control_field(float(t), p).vector
            fd = field_from_path(path, float(t)).vector
            worst = max(worst, float(np.max(np.abs(exact - fd))) / scale)
    return worst <= 1e-6, f"max relative deviation {worst:.3g} (tolerance 1e-6)"


def _check_gate_identities():
    """Gate verification and the vanishing decoupler averages."""
    params = (ControlParams(mode=MODE_BARE),
              ControlParams(mode=MODE_DEPHASING, n=5),
              ControlParams(mode=MODE_FULL, n=5, m=2))
    for p in params:
        if not verify_gate(p):
            return False, f"gate check failed for mode {p.mode}"
    p = ControlParams(mode=MODE_DEPHASING, n=3)
    cycle = p.tau / p.n
    ts = np.linspace(0.0, cycle, 2049)
    u = decoupler_unitaries(ts, p)
    sz = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    integrand = np.conj(np.swapaxes(u, -1, -2)) @ sz @ u
    w = np.ones(len(ts))
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    integral = np.einsum("t,tab->ab", w, integrand) * (cycle / 2048.0 / 3.0)
    dev = float(np.max(np.abs(integral)))
    if dev > 1e-10:
        return False, f"decoupling average {dev:.3g} exceeds 1e-10"
    return True, f"gates exact to 1e-10; decoupling average {dev:.3g}"


def _check_memory_integral():
    """FFT-built decoherence table against direct per-time quadrature."""
    control = ControlParams(mode=MODE_DEPHASING, n=3)
    spec = (ReservoirSpec(error_class="dephasing", eta=1.0 / 16.0, s=1),)
    steps = 1200
    grid = np.linspace(0.0, control.tau, 2 * steps + 1)
    ktable = build_kernel_table(spec, DEFAULT_THERMAL, grid,
                                windings=(control.winding_x, 0))
    dtable = build_decoherence_table(control, ktable, steps)
    worst = 0.0
    for idx in (120, 600, 1201, 1800, 2400):
        direct = decoherence_tensor(float(grid[idx]), control, ktable)
        scale = max(float(np.max(np.abs(direct.entries))), 1e-30)
        worst = max(worst, float(np.max(np.abs(
            direct.entries - dtable.values[idx]))) / scale)
    return worst <= 1e-9, f"max relative deviation {worst:.3g} (tolerance 1e-9)"


def _check_stationarity():
    """Bath correlation symmetry C(delta) = C(-delta)^dagger."""
    specs = (ReservoirSpec(error_class="dephasing", eta=1.0 / 16.0, s=1),
             ReservoirSpec(error_class="bit_flip", eta=0.01, s=3),
             ReservoirSpec(error_class="dissipation", eta=0.02, s=2))
    worst = 0.0
    for delta in (0.03, 0.2, 0.8):
        c_pos = correlation_matrix(delta, specs, DEFAULT_THERMAL)
        c_neg = correlation_matrix(-delta, specs, DEFAULT_THERMAL)
        worst = max(worst, float(np.max(np.abs(c_pos - np.conj(c_neg).T))))
    return worst <= 1e-12, f"max deviation {worst:.3g} (tolerance 1e-12)"


def _check_propagation_invariants():
    """Trace/Hermiticity drift and the zero-coupling identity."""
    th = DEFAULT_THERMAL
    rho0 = density_from_bloch(math.pi / 2.0, 0.0)
    spec = (ReservoirSpec(error_class="dephasing", eta=1.0 / 16.0, s=1),)
    traj = evolve(rho0, ControlParams(mode=MODE_BARE), spec, th,
                  IntegratorConfig(steps=1000), check_convergence=False)
    if traj.trace_drift > 1e-9 or traj.hermiticity_drift > 1e-9:
        return False, (f"drift too large: trace {traj.trace_drift:.3g}, "
                       f"Hermiticity {traj.hermiticity_drift:.3g}")
    free = (ReservoirSpec(error_class="dephasing", eta=0.0, s=1),)
    traj0 = evolve(rho0, ControlParams(mode=MODE_DEPHASING, n=2), free, th,
                   IntegratorConfig(steps=360), check_convergence=False)
    dev = float(np.max(np.abs(traj0.fidelity - 1.0)))
    if dev > 1e-12:
        return False, f"zero-coupling fidelity deviates by {dev:.3g}"
    return True, (f"trace drift {traj.trace_drift:.3g}, Hermiticity drift "
                  f"{traj.hermiticity_drift:.3g}, zero-coupling deviation "
                  f"{dev:.3g}")


_CHECKS = (
    ("kernel_oracle", _check_kernel_oracle),
    ("field_synthesis", _check_field_synthesis),
    ("gate_identities", _check_gate_identities),
    ("memory_integral", _check_memory_integral),
    ("bath_stationarity", _check_stationarity),
    ("propagation_invariants", _check_propagation_invariants),
)


def _cmd_verify(_args) -> int:
    failures = 0
    for name, check in _CHECKS:
        try:
            ok, detail = check()
        except DecoupleSimError as exc:
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1
    if failures:
        print(f"{failures} of {len(_CHECKS)} checks failed")
        return 1
    print(f"all {len(_CHECKS)} checks passed")
    return 0


def _cmd_plot(args) -> int:
    out = emit_plot(args.csv, args.kind, args.out)
    print(f"wrote {out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "verify": _cmd_verify, "plot": _cmd_plot}
    try:
        return handler[args.command](args)
    except _CONVERGENCE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
