"""Scenario files: one experiment described as flat UTF-8 key/value text.

Grammar
-------
One ``key = value`` pair per line.  ``#`` starts a comment (whole-line or
trailing), blank lines are ignored, keys are dotted paths, and every key may
appear at most once.  Lists (reservoirs) use an explicit 1-based index in the
key, e.g. ``reservoirs.1.eta = 0.0625``.

Keys
----
============================  =========================================================
experiment                    trace | trace_derivative | bloch_sweep |
                              eta_ratio_sweep | full_protection_table   (required)
tau_seconds                   gate duration in seconds (default 1e-10)
temperature_kelvin            bath temperature (default 0.25)
beta_omega_c                  explicit dimensionless inverse temperature; overrides
                              the value derived from (temperature_kelvin, tau_seconds)
omega_c_tau                   cutoff in gate units (default 2*pi)
reservoirs.<k>.class          dephasing | bit_flip | dissipation
reservoirs.<k>.eta            coupling strength (required per reservoir)
reservoirs.<k>.s              spectral exponent (default 1)
control.mode                  bare | dephasing_protect | full_protect
control.n, control.m          decoupler windings
initial.theta, initial.phi    single initial Bloch state (trace experiments
                              default to theta=pi/2, phi=0)
initial.n_theta,              sweep grid (defaults 25 x 50); exclusive with a
initial.n_phi                 single initial state
integrator.steps              RK4 steps on [0, tau] (default: resolution-derived)
integrator.tol                step-doubling tolerance (default 1e-4)
trace.cases                   comma list of windings, e.g. ``bare, 2, 3, 5``
sweep.ratio_points            eta-ratio grid size (default 13)
sweep.ratio_min/ratio_max     eta-ratio grid range (defaults 1e-3 and 1)
table.ratio                   added-coupling amplitude ratio (default 0.2)
============================  =========================================================

Keys outside an experiment's vocabulary are rejected with the offending line
number, as are unknown keys, duplicates, and out-of-range values.

When no reservoir is listed, the default bath is the super-ohmic dephasing
reservoir (eta = 1/16, s = 3).  The ratio experiments require their base
reservoir list to be exactly one dephasing bath; the bit-flip and dissipation
reservoirs they add are derived from the swept ratio, not listed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .baths import ERROR_CLASSES, ReservoirSpec, ThermalParams
from .constants import (ETA_DEPHASING_DEFAULT, OMEGA_C_TAU_DEFAULT,
                        TAU_SECONDS_DEFAULT, TEMPERATURE_KELVIN_DEFAULT,
                        beta_omega_c)
from .control import MODE_BARE, MODE_DEPHASING, MODE_FULL, ControlParams
from .errors import ScenarioError

EXPERIMENTS = ("trace", "trace_derivative", "bloch_sweep", "eta_ratio_sweep",
               "full_protection_table")

_COMMON_KEYS = ("experiment", "tau_seconds", "temperature_kelvin",
                "beta_omega_c", "omega_c_tau", "integrator.steps",
                "integrator.tol")
_KEYS_BY_EXPERIMENT = {
    "trace": _COMMON_KEYS + ("initial.theta", "initial.phi", "trace.cases"),
    "trace_derivative": _COMMON_KEYS + ("initial.theta", "initial.phi"),
    "bloch_sweep": _COMMON_KEYS + ("control.mode", "control.n", "control.m",
                                   "initial.theta", "initial.phi",
                                   "initial.n_theta", "initial.n_phi"),
    "eta_ratio_sweep": _COMMON_KEYS + ("control.mode", "control.n",
                                       "initial.n_theta", "initial.n_phi",
                                       "sweep.ratio_points", "sweep.ratio_min",
                                       "sweep.ratio_max"),
    "full_protection_table": _COMMON_KEYS + ("control.n", "control.m",
                                             "initial.n_theta", "initial.n_phi",
                                             "table.ratio"),
}
_RESERVOIR_FIELDS = ("class", "eta", "s")


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully validated experiment description with defaults applied."""

    experiment: str
    tau_seconds: float
    temperature_kelvin: float
    beta_omega_c_override: float | None
    omega_c_tau: float
    reservoirs: tuple[ReservoirSpec, ...]
    control: ControlParams
    initial_theta: float | None
    initial_phi: float | None
    n_theta: int
    n_phi: int
    steps: int | None
    tol: float
    trace_cases: tuple[object, ...]
    ratio_points: int
    ratio_min: float
    ratio_max: float
    table_ratio: float
    source: str | None = None

    @property
    def beta_omega_c(self) -> float:
        """Resolved dimensionless inverse temperature."""
        if self.beta_omega_c_override is not None:
            return self.beta_omega_c_override
        return beta_omega_c(self.temperature_kelvin, self.tau_seconds,
                            self.omega_c_tau)

    @property
    def thermal(self) -> ThermalParams:
        return ThermalParams(beta_omega_c=self.beta_omega_c,
                             temperature_kelvin=self.temperature_kelvin,
                             tau_seconds=self.tau_seconds)

    def metadata_items(self) -> list[tuple[str, str]]:
        """Resolved configuration as ordered key/value strings."""
        items = [("experiment", self.experiment),
                 ("tau_seconds", f"{self.tau_seconds:.12g}"),
                 ("temperature_kelvin", f"{self.temperature_kelvin:.12g}"),
                 ("beta_omega_c", f"{self.beta_omega_c:.12g}"),
                 ("omega_c_tau", f"{self.omega_c_tau:.12g}")]
        for k, r in enumerate(self.reservoirs, start=1):
            items.append((f"reservoirs.{k}.class", r.error_class))
            items.append((f"reservoirs.{k}.eta", f"{r.eta:.12g}"))
            items.append((f"reservoirs.{k}.s", str(r.s)))
        if self.experiment in ("bloch_sweep", "eta_ratio_sweep",
                               "full_protection_table"):
            items.append(("control.mode", self.control.mode))
            items.append(("control.n", str(self.control.n)))
            if self.control.m is not None:
                items.append(("control.m", str(self.control.m)))
        if self.initial_theta is not None:
            items.append(("initial.theta", f"{self.initial_theta:.12g}"))
            items.append(("initial.phi", f"{self.initial_phi:.12g}"))
        elif self.experiment in ("bloch_sweep", "eta_ratio_sweep",
                                 "full_protection_table"):
            items.append(("initial.n_theta", str(self.n_theta)))
            items.append(("initial.n_phi", str(self.n_phi)))
        if self.experiment == "trace":
            items.append(("trace.cases", ", ".join(str(c) for c in self.trace_cases)))
        if self.experiment == "eta_ratio_sweep":
            items.append(("sweep.ratio_points", str(self.ratio_points)))
            items.append(("sweep.ratio_min", f"{self.ratio_min:.12g}"))
            items.append(("sweep.ratio_max", f"{self.ratio_max:.12g}"))
        if self.experiment == "full_protection_table":
            items.append(("table.ratio", f"{self.table_ratio:.12g}"))
        items.append(("integrator.tol", f"{self.tol:.12g}"))
        return items


class _Items:
    """Parsed key/value pairs with typed, line-aware extraction."""

    def __init__(self, pairs: dict):
        self.pairs = pairs  # key -> (value string, line number)

    def take(self, key, default=None):
        if key in self.pairs:
            return self.pairs[key][0]
        return default

    def line(self, key) -> int:
        return self.pairs[key][1]

    def has(self, key) -> bool:
        return key in self.pairs

    def _convert(self, key, conv, kind):
        raw = self.pairs[key][0]
        try:
            return conv(raw)
        except ValueError:
            raise ScenarioError(
                f"line {self.line(key)}: key '{key}' needs {kind}, got {raw!r}") from None

    def take_float(self, key, default=None, positive=False):
        if key not in self.pairs:
            return default
        v = self._convert(key, float, "a number")
        if not math.isfinite(v) or (positive and v <= 0.0):
            raise ScenarioError(
                f"line {self.line(key)}: key '{key}' must be a finite"
                f"{' positive' if positive else ''} number, got {v!r}")
        return v

    def take_int(self, key, default=None, least=None):
        if key not in self.pairs:
            return default
        v = self._convert(key, int, "an integer")
        if least is not None and v < least:
            raise ScenarioError(
                f"line {self.line(key)}: key '{key}' must be >= {least}, got {v}")
        return v

    def take_choice(self, key, choices, default=None):
        if key not in self.pairs:
            return default
        v = self.pairs[key][0]
        if v not in choices:
            raise ScenarioError(
                f"line {self.line(key)}: key '{key}' must be one of "
                f"{', '.join(choices)}; got {v!r}")
        return v


def _parse_pairs(text: str) -> dict:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(
                f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ScenarioError(
                f"line {lineno}: empty {'key' if not key else 'value'} in "
                f"{raw.strip()!r}")
        if key in pairs:
            raise ScenarioError(
                f"line {lineno}: duplicate key '{key}' "
                f"(first set on line {pairs[key][1]})")
        pairs[key] = (value, lineno)
    return pairs


def _parse_reservoirs(items: _Items, omega_c: float):
    """Collect reservoirs.<k>.* keys into ReservoirSpec objects."""
    indexed = {}
    for key in items.pairs:
        parts = key.split(".")
        if parts[0] != "reservoirs":
            continue
        if len(parts) != 3 or parts[2] not in _RESERVOIR_FIELDS:
            raise ScenarioError(
                f"line {items.line(key)}: unknown key '{key}' (reservoir keys "
                f"are reservoirs.<index>.{{class,eta,s}})")
        try:
            idx = int(parts[1])
        except ValueError:
            idx = -1
        if idx < 1:
            raise ScenarioError(
                f"line {items.line(key)}: reservoir index in '{key}' must be a "
                f"positive integer")
        indexed.setdefault(idx, set()).add(parts[2])
    if not indexed:
        return (ReservoirSpec(error_class="dephasing", eta=ETA_DEPHASING_DEFAULT,
                              s=3, omega_c=omega_c),)
    expected = set(range(1, len(indexed) + 1))
    if set(indexed) != expected:
        raise ScenarioError(
            f"reservoir indices must be contiguous from 1; got "
            f"{sorted(indexed)}")
    out = []
    seen_classes = {}
    for idx in sorted(indexed):
        prefix = f"reservoirs.{idx}"
        cls = items.take_choice(f"{prefix}.class", ERROR_CLASSES)
        if cls is None:
            raise ScenarioError(f"reservoir {idx} is missing '{prefix}.class'")
        if not items.has(f"{prefix}.eta"):
            raise ScenarioError(f"reservoir {idx} is missing '{prefix}.eta'")
        eta = items.take_float(f"{prefix}.eta")
        if eta < 0.0:
            raise ScenarioError(
                f"line {items.line(f'{prefix}.eta')}: key '{prefix}.eta' must "
                f"be >= 0, got {eta!r}")
        s = items.take_int(f"{prefix}.s", default=1, least=1)
        if cls in seen_classes:
            raise ScenarioError(
                f"line {items.line(f'{prefix}.class')}: duplicate reservoir "
                f"class '{cls}' (reservoir {seen_classes[cls]} already uses it)")
        seen_classes[cls] = idx
        out.append(ReservoirSpec(error_class=cls, eta=eta, s=s, omega_c=omega_c))
    return tuple(out)


def _parse_trace_cases(items: _Items):
    raw = items.take("trace.cases")
    if raw is None:
        return None
    cases = []
    for piece in raw.split(","):
        piece = piece.strip()
        if piece == "bare":
            cases.append("bare")
            continue
        try:
            n = int(piece)
        except ValueError:
            raise ScenarioError(
                f"line {items.line('trace.cases')}: trace.cases entries must "
                f"be 'bare' or positive integers, got {piece!r}") from None
        if n < 1:
            raise ScenarioError(
                f"line {items.line('trace.cases')}: winding {n} in "
                f"trace.cases must be >= 1")
        cases.append(n)
    if not cases:
        raise ScenarioError(f"line {items.line('trace.cases')}: empty case list")
    return tuple(cases)


def _control_error(exc, items: _Items) -> ScenarioError:
    for key in ("control.m", "control.n", "control.mode"):
        if items.has(key):
            return ScenarioError(f"line {items.line(key)}: {exc}")
    return ScenarioError(str(exc))


def parse_scenario(text: str, source: str | None = None) -> ScenarioConfig:
    """Parse and validate scenario text; see the module docstring for keys."""
    items = _Items(_parse_pairs(text))

    experiment = items.take_choice("experiment", EXPERIMENTS)
    if experiment is None:
        raise ScenarioError("missing required key 'experiment'")
    allowed = set(_KEYS_BY_EXPERIMENT[experiment])
    vocabulary = {k for keys in _KEYS_BY_EXPERIMENT.values() for k in keys}
    for key in items.pairs:
        if key.startswith("reservoirs."):
            continue  # validated structurally below
        if key not in allowed:
            what = (f"not applicable to experiment '{experiment}'"
                    if key in vocabulary else "unknown")
            raise ScenarioError(f"line {items.line(key)}: key '{key}' is {what}")

    tau_seconds = items.take_float("tau_seconds", TAU_SECONDS_DEFAULT, positive=True)
    temperature = items.take_float("temperature_kelvin",
                                   TEMPERATURE_KELVIN_DEFAULT, positive=True)
    beta_override = items.take_float("beta_omega_c", None, positive=True)
    omega_c_tau = items.take_float("omega_c_tau", OMEGA_C_TAU_DEFAULT, positive=True)
    reservoirs = _parse_reservoirs(items, omega_c=omega_c_tau)

    steps = items.take_int("integrator.steps", None, least=1)
    tol = items.take_float("integrator.tol", 1e-4, positive=True)

    theta = items.take_float("initial.theta")
    phi = items.take_float("initial.phi")
    if (theta is None) != (phi is None):
        given, missing = (("initial.theta", "initial.phi") if phi is None
                          else ("initial.phi", "initial.theta"))
        raise ScenarioError(
            f"line {items.line(given)}: '{given}' requires '{missing}' as well")
    if theta is not None and not 0.0 <= theta <= math.pi:
        raise ScenarioError(
            f"line {items.line('initial.theta')}: initial.theta must lie in "
            f"[0, pi], got {theta!r}")
    n_theta = items.take_int("initial.n_theta", 25, least=2)
    n_phi = items.take_int("initial.n_phi", 50, least=2)
    if theta is not None and (items.has("initial.n_theta")
                              or items.has("initial.n_phi")):
        key = ("initial.n_theta" if items.has("initial.n_theta")
               else "initial.n_phi")
        raise ScenarioError(
            f"line {items.line(key)}: a single initial state and a sweep grid "
            f"are mutually exclusive")
    if experiment in ("trace", "trace_derivative") and theta is None:
        theta, phi = math.pi / 2.0, 0.0

    mode = items.take_choice("control.mode",
                             (MODE_BARE, MODE_DEPHASING, MODE_FULL))
    n = items.take_int("control.n", None, least=1)
    m = items.take_int("control.m", None, least=1)
    if experiment == "eta_ratio_sweep":
        if mode is not None and mode != MODE_DEPHASING:
            raise ScenarioError(
                f"line {items.line('control.mode')}: eta_ratio_sweep requires "
                f"control.mode = {MODE_DEPHASING}, got {mode!r}")
        mode = MODE_DEPHASING
        n = 25 if n is None else n
    elif experiment == "full_protection_table":
        mode = MODE_FULL
        n = 25 if n is None else n
        m = 10 if m is None else m
    elif mode is None:
        mode = MODE_BARE
        if n is None:
            n = 1
    elif n is None:
        n = 1 if mode == MODE_BARE else 25
    try:
        control = ControlParams(mode=mode, n=n, m=m, tau=1.0)
    except Exception as exc:
        raise _control_error(exc, items) from None

    trace_cases = _parse_trace_cases(items)
    if trace_cases is None:
        super_ohmic = any(r.s > 1 for r in reservoirs)
        trace_cases = (("bare", 3, 5, 15) if super_ohmic else ("bare", 2, 3, 5))

    ratio_points = items.take_int("sweep.ratio_points", 13, least=2)
    ratio_min = items.take_float("sweep.ratio_min", 1e-3, positive=True)
    ratio_max = items.take_float("sweep.ratio_max", 1.0, positive=True)
    if ratio_min >= ratio_max:
        key = ("sweep.ratio_min" if items.has("sweep.ratio_min")
               else "sweep.ratio_max")
        line = f"line {items.line(key)}: " if items.has(key) else ""
        raise ScenarioError(f"{line}sweep.ratio_min must be below sweep.ratio_max")
    table_ratio = items.take_float("table.ratio", 0.2)
    if table_ratio < 0.0:
        raise ScenarioError(
            f"line {items.line('table.ratio')}: table.ratio must be >= 0")

    if experiment in ("eta_ratio_sweep", "full_protection_table"):
        if (len(reservoirs) != 1 or reservoirs[0].error_class != "dephasing"):
            raise ScenarioError(
                f"experiment '{experiment}' needs exactly one dephasing base "
                f"reservoir (the swept bit-flip and dissipation couplings are "
                f"derived, not listed)")
    if experiment == "trace_derivative":
        if len(reservoirs) != 1 or reservoirs[0].error_class != "dephasing":
            raise ScenarioError(
                "experiment 'trace_derivative' compares ohmic and super-ohmic "
                "variants of a single dephasing reservoir")

    return ScenarioConfig(
        experiment=experiment, tau_seconds=tau_seconds,
        temperature_kelvin=temperature, beta_omega_c_override=beta_override,
        omega_c_tau=omega_c_tau, reservoirs=reservoirs, control=control,
        initial_theta=theta, initial_phi=phi, n_theta=n_theta, n_phi=n_phi,
        steps=steps, tol=tol, trace_cases=trace_cases,
        ratio_points=ratio_points, ratio_min=ratio_min, ratio_max=ratio_max,
        table_ratio=table_ratio, source=source)


def load_scenario(path) -> ScenarioConfig:
    """Read and validate a scenario file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from None
    try:
        return parse_scenario(text, source=str(path))
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
