"""Scenario grammar: parsing, defaults, applicability, and validation."""

import math
from pathlib import Path

import pytest

from decouple_sim.constants import BETA_OMEGA_C_DEFAULT
from decouple_sim.errors import ScenarioError
from decouple_sim.scenario import (EXPERIMENTS, load_scenario, parse_scenario)

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


class TestMinimalDefaults:
    def test_minimal_trace(self):
        cfg = parse_scenario("experiment = trace\n")
        assert cfg.experiment == "trace"
        assert cfg.initial_theta == pytest.approx(math.pi / 2.0)
        assert cfg.initial_phi == 0.0
        assert len(cfg.reservoirs) == 1
        r = cfg.reservoirs[0]
        assert (r.error_class, r.eta, r.s) == ("dephasing", 1.0 / 16.0, 3)
        assert r.omega_c == pytest.approx(2.0 * math.pi)
        assert cfg.trace_cases == ("bare", 3, 5, 15)
        assert cfg.steps is None
        assert cfg.tol == 1e-4

    def test_default_thermal_parameters(self):
        cfg = parse_scenario("experiment = trace\n")
        assert cfg.tau_seconds == 1e-10
        assert cfg.temperature_kelvin == 0.25
        assert abs(cfg.beta_omega_c - BETA_OMEGA_C_DEFAULT) < 1e-12

    def test_ohmic_bath_switches_trace_cases(self):
        cfg = parse_scenario(
            "experiment = trace\n"
            "reservoirs.1.class = dephasing\n"
            "reservoirs.1.eta = 0.0625\n"
            "reservoirs.1.s = 1\n")
        assert cfg.trace_cases == ("bare", 2, 3, 5)

    def test_experiments_constant(self):
        assert EXPERIMENTS == ("trace", "trace_derivative", "bloch_sweep",
                               "eta_ratio_sweep", "full_protection_table")


class TestSyntax:
    def test_comments_and_blanks_ignored(self):
        cfg = parse_scenario(
            "# leading comment\n"
            "\n"
            "experiment = trace   # trailing comment\n"
            "   \n")
        assert cfg.experiment == "trace"

    def test_missing_experiment(self):
        with pytest.raises(ScenarioError, match="experiment"):
            parse_scenario("integrator.steps = 100\n")

    def test_bad_experiment_choice(self):
        with pytest.raises(ScenarioError, match="ramsey"):
            parse_scenario("experiment = ramsey\n")

    def test_malformed_line_reports_number(self):
        with pytest.raises(ScenarioError, match="line 2"):
            parse_scenario("experiment = trace\nthis is not a pair\n")

    def test_duplicate_key_reports_both_lines(self):
        with pytest.raises(ScenarioError, match="line 3.*line 1"):
            parse_scenario("experiment = trace\n\nexperiment = trace\n")

    def test_unknown_key(self):
        with pytest.raises(ScenarioError, match="unknown"):
            parse_scenario("experiment = trace\nfrobnicate = 3\n")

    def test_inapplicable_key_names_experiment(self):
        with pytest.raises(ScenarioError,
                           match="not applicable to experiment 'trace'"):
            parse_scenario("experiment = trace\nsweep.ratio_points = 5\n")

    def test_non_numeric_value_reports_line(self):
        with pytest.raises(ScenarioError, match="line 2"):
            parse_scenario("experiment = trace\nintegrator.steps = many\n")


class TestReservoirs:
    def test_multiple_reservoirs(self):
        cfg = parse_scenario(
            "experiment = trace\n"
            "reservoirs.1.class = dephasing\n"
            "reservoirs.1.eta = 0.0625\n"
            "reservoirs.1.s = 3\n"
            "reservoirs.2.class = bit_flip\n"
            "reservoirs.2.eta = 0.01\n")
        assert len(cfg.reservoirs) == 2
        assert cfg.reservoirs[1].error_class == "bit_flip"
        assert cfg.reservoirs[1].s == 1  # ohmic default

    def test_non_contiguous_indices_rejected(self):
        with pytest.raises(ScenarioError):
            parse_scenario(
                "experiment = trace\n"
                "reservoirs.2.class = dephasing\n"
                "reservoirs.2.eta = 0.0625\n")

    def test_missing_eta_rejected(self):
        with pytest.raises(ScenarioError, match="eta"):
            parse_scenario(
                "experiment = trace\n"
                "reservoirs.1.class = dephasing\n")

    def test_duplicate_class_rejected(self):
        with pytest.raises(ScenarioError, match="duplicate"):
            parse_scenario(
                "experiment = trace\n"
                "reservoirs.1.class = dephasing\n"
                "reservoirs.1.eta = 0.01\n"
                "reservoirs.2.class = dephasing\n"
                "reservoirs.2.eta = 0.02\n")

    def test_bad_class_rejected(self):
        with pytest.raises(ScenarioError):
            parse_scenario(
                "experiment = trace\n"
                "reservoirs.1.class = leakage\n"
                "reservoirs.1.eta = 0.01\n")


class TestThermalOverrides:
    def test_beta_override_wins(self):
        cfg = parse_scenario("experiment = trace\nbeta_omega_c = 3.5\n")
        assert cfg.beta_omega_c == 3.5
        assert cfg.thermal.beta_omega_c == 3.5

    def test_temperature_changes_derived_beta(self):
        cfg = parse_scenario("experiment = trace\ntemperature_kelvin = 0.5\n")
        assert abs(cfg.beta_omega_c - BETA_OMEGA_C_DEFAULT / 2.0) < 1e-12

    def test_override_equal_to_derivation_is_identical(self):
        derived = parse_scenario("experiment = trace\n")
        forced = parse_scenario(
            f"experiment = trace\nbeta_omega_c = {derived.beta_omega_c!r}\n")
        assert forced.beta_omega_c == derived.beta_omega_c


class TestControlDefaults:
    def test_bloch_defaults_to_bare(self):
        cfg = parse_scenario("experiment = bloch_sweep\n")
        assert cfg.control.mode == "bare"
        assert (cfg.n_theta, cfg.n_phi) == (25, 50)

    def test_bloch_mode_without_n(self):
        cfg = parse_scenario("experiment = bloch_sweep\n"
                             "control.mode = dephasing_protect\n")
        assert (cfg.control.mode, cfg.control.n) == ("dephasing_protect", 25)

    def test_eta_sweep_forces_protecting_mode(self):
        cfg = parse_scenario("experiment = eta_ratio_sweep\n")
        assert cfg.control.mode == "dephasing_protect"
        assert cfg.control.n == 25
        assert (cfg.ratio_points, cfg.ratio_min, cfg.ratio_max) \
            == (13, 1e-3, 1.0)

    def test_eta_sweep_rejects_other_mode(self):
        with pytest.raises(ScenarioError, match="dephasing_protect"):
            parse_scenario("experiment = eta_ratio_sweep\n"
                           "control.mode = bare\n")

    def test_table_defaults(self):
        cfg = parse_scenario("experiment = full_protection_table\n")
        assert cfg.control.mode == "full_protect"
        assert (cfg.control.n, cfg.control.m) == (25, 10)
        assert cfg.table_ratio == 0.2

    def test_full_mode_equal_windings_rejected(self):
        with pytest.raises(ScenarioError):
            parse_scenario("experiment = full_protection_table\n"
                           "control.n = 10\n")


class TestInitialState:
    def test_theta_requires_phi(self):
        with pytest.raises(ScenarioError, match="initial.phi"):
            parse_scenario("experiment = bloch_sweep\ninitial.theta = 1.0\n")

    def test_theta_range(self):
        with pytest.raises(ScenarioError, match="0, pi"):
            parse_scenario("experiment = bloch_sweep\n"
                           "initial.theta = 4.0\ninitial.phi = 0.0\n")

    def test_single_point_excludes_grid(self):
        with pytest.raises(ScenarioError, match="mutually exclusive"):
            parse_scenario("experiment = bloch_sweep\n"
                           "initial.theta = 1.0\ninitial.phi = 0.0\n"
                           "initial.n_theta = 9\n")


class TestSweepValidation:
    def test_ratio_ordering(self):
        with pytest.raises(ScenarioError, match="ratio_min"):
            parse_scenario("experiment = eta_ratio_sweep\n"
                           "sweep.ratio_min = 0.5\nsweep.ratio_max = 0.1\n")

    def test_eta_sweep_needs_single_dephasing_base(self):
        with pytest.raises(ScenarioError, match="dephasing"):
            parse_scenario("experiment = eta_ratio_sweep\n"
                           "reservoirs.1.class = bit_flip\n"
                           "reservoirs.1.eta = 0.01\n")

    def test_derivative_needs_single_dephasing_base(self):
        with pytest.raises(ScenarioError):
            parse_scenario("experiment = trace_derivative\n"
                           "reservoirs.1.class = dissipation\n"
                           "reservoirs.1.eta = 0.01\n")


class TestMetadata:
    def test_items_cover_resolved_settings(self):
        cfg = parse_scenario("experiment = eta_ratio_sweep\n")
        items = dict(cfg.metadata_items())
        assert items["experiment"] == "eta_ratio_sweep"
        assert items["control.mode"] == "dephasing_protect"
        assert items["sweep.ratio_points"] == "13"
        assert items["reservoirs.1.class"] == "dephasing"

    def test_trace_lists_cases(self):
        cfg = parse_scenario("experiment = trace\n")
        items = dict(cfg.metadata_items())
        assert items["trace.cases"] == "bare, 3, 5, 15"


class TestLoadScenario:
    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(ScenarioError, match="nope.txt"):
            load_scenario(tmp_path / "nope.txt")

    def test_error_carries_path(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("experiment = trace\nbogus = 1\n")
        with pytest.raises(ScenarioError, match="bad.txt"):
            load_scenario(bad)

    @pytest.mark.parametrize("name", sorted(
        p.name for p in SCENARIO_DIR.glob("*.txt")))
    def test_shipped_scenarios_parse(self, name):
        cfg = load_scenario(SCENARIO_DIR / name)
        assert cfg.experiment in EXPERIMENTS

    def test_shipped_scenarios_exist(self):
        assert len(list(SCENARIO_DIR.glob("*.txt"))) == 8
