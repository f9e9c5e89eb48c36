"""Experiment runner: task orchestration, CSV output, determinism."""

import csv
import io
import math

import numpy as np
import pytest

from decouple_sim.errors import ConfigurationError, UsageError
from decouple_sim.runner import (RunOutput, _thin_indices, eta_ratio_grid,
                                 resolve_workers, run_bloch_sweep,
                                 run_experiment, run_trace)
from decouple_sim.scenario import parse_scenario

from conftest import run_cached

TRACE_SMALL = (
    "experiment = trace\n"
    "reservoirs.1.class = dephasing\n"
    "reservoirs.1.eta = 0.0625\n"
    "reservoirs.1.s = 1\n"
    "trace.cases = bare, 2\n"
    "integrator.steps = 400\n")

BLOCH_SMALL = (
    "experiment = bloch_sweep\n"
    "integrator.steps = 200\n"
    "initial.n_theta = 5\n"
    "initial.n_phi = 6\n")

BLOCH_POINT = (
    "experiment = bloch_sweep\n"
    "integrator.steps = 200\n"
    "initial.theta = 1.0471975512\n"
    "initial.phi = 0.5\n")

DERIV_SMALL = (
    "experiment = trace_derivative\n"
    "integrator.steps = 200\n")

ETA_SMALL = (
    "experiment = eta_ratio_sweep\n"
    "control.n = 2\n"
    "integrator.steps = 360\n"
    "initial.n_theta = 3\n"
    "initial.n_phi = 4\n"
    "sweep.ratio_points = 2\n"
    "sweep.ratio_min = 0.01\n"
    "sweep.ratio_max = 0.2\n")

TABLE_SMALL = (
    "experiment = full_protection_table\n"
    "control.n = 2\n"
    "control.m = 3\n"
    "integrator.steps = 520\n"
    "initial.n_theta = 3\n"
    "initial.n_phi = 4\n"
    "table.ratio = 0.2\n")


def parse_csv(text):
    """(metadata dict, header, rows-of-strings) from RunOutput.to_csv text."""
    meta = {}
    data_lines = []
    for line in text.split("\r\n"):
        if line.startswith("#"):
            k, _, v = line.lstrip("# ").partition(" = ")
            meta[k] = v
        elif line:
            data_lines.append(line)
    rows = list(csv.reader(io.StringIO("\n".join(data_lines))))
    return meta, rows[0], rows[1:]


class TestWorkerResolution:
    def test_explicit_argument_wins(self, monkeypatch):
        monkeypatch.setenv("DECOUPLE_SIM_THREADS", "7")
        assert resolve_workers(3, n_tasks=100) == 3

    def test_env_variable(self, monkeypatch):
        monkeypatch.setenv("DECOUPLE_SIM_THREADS", "5")
        assert resolve_workers(None, n_tasks=100) == 5

    def test_bad_env_rejected(self, monkeypatch):
        monkeypatch.setenv("DECOUPLE_SIM_THREADS", "lots")
        with pytest.raises(ConfigurationError, match="DECOUPLE_SIM_THREADS"):
            resolve_workers(None, n_tasks=4)

    def test_capped_by_task_count(self, monkeypatch):
        monkeypatch.delenv("DECOUPLE_SIM_THREADS", raising=False)
        assert resolve_workers(16, n_tasks=3) == 3


class TestThinning:
    def test_short_runs_keep_every_node(self):
        assert list(_thin_indices(200)) == list(range(201))

    def test_long_runs_thin_with_endpoint(self):
        idx = _thin_indices(8000)
        assert idx[0] == 0
        assert idx[-1] == 8000
        assert len(idx) <= 802
        assert np.all(np.diff(idx) > 0)


class TestEtaRatioGrid:
    def test_zero_reference_then_geometric(self):
        cfg = parse_scenario("experiment = eta_ratio_sweep\n"
                             "sweep.ratio_points = 5\n"
                             "sweep.ratio_min = 0.001\n"
                             "sweep.ratio_max = 1.0\n")
        grid = eta_ratio_grid(cfg)
        assert grid[0] == 0.0
        assert len(grid) == 6
        assert grid[1] == pytest.approx(1e-3)
        assert grid[-1] == pytest.approx(1.0)
        ratios = grid[2:] / grid[1:-1]
        assert np.allclose(ratios, ratios[0])


@pytest.fixture(scope="module")
def trace_out():
    return run_cached(TRACE_SMALL)


class TestTraceRun:
    def test_columns(self, trace_out):
        assert trace_out.name == "trace"
        assert trace_out.columns == ("t_over_tau", "F_bare", "F_n2")

    def test_rows_span_gate_window(self, trace_out):
        assert trace_out.rows[0][0] == 0.0
        assert trace_out.rows[-1][0] == 1.0
        assert len(trace_out.rows) == 401

    def test_fidelity_starts_at_one(self, trace_out):
        assert trace_out.rows[0][1] == pytest.approx(1.0, abs=1e-12)
        assert trace_out.rows[0][2] == pytest.approx(1.0, abs=1e-12)

    def test_endpoint_metadata_matches_last_row(self, trace_out):
        meta = dict(trace_out.metadata)
        assert float(meta["endpoint.bare"]) \
            == pytest.approx(trace_out.rows[-1][1], abs=1e-12)
        assert float(meta["endpoint.n2"]) \
            == pytest.approx(trace_out.rows[-1][2], abs=1e-12)

    def test_protection_helps(self, trace_out):
        assert trace_out.rows[-1][2] > trace_out.rows[-1][1]

    def test_csv_format(self, trace_out):
        text = trace_out.to_csv()
        assert "\r\n" in text
        meta, header, rows = parse_csv(text)
        assert header == list(trace_out.columns)
        assert len(rows) == len(trace_out.rows)
        assert meta["experiment"] == "trace"
        assert meta["integrator.steps"] == "400"
        # every numeric cell is %.12g formatted and round-trips
        for raw, orig in zip(rows[37], trace_out.rows[37]):
            assert raw == f"{orig:.12g}"

    def test_write(self, trace_out, tmp_path):
        path = tmp_path / "trace.csv"
        trace_out.write(path)
        assert path.read_bytes().decode("utf-8") == trace_out.to_csv()


@pytest.fixture(scope="module")
def deriv_out():
    return run_cached(DERIV_SMALL)


class TestDerivativeRun:
    def test_columns(self, deriv_out):
        assert deriv_out.name == "trace_derivative"
        assert deriv_out.columns == ("t_over_tau", "dF_dt_ohmic",
                                     "dF_dt_super_ohmic")

    def test_derivative_zero_at_start(self, deriv_out):
        assert abs(deriv_out.rows[0][1]) < 1e-12
        assert abs(deriv_out.rows[0][2]) < 1e-12

    def test_super_ohmic_decays_faster_early(self, deriv_out):
        rows = np.asarray(deriv_out.rows)
        early = rows[(rows[:, 0] > 0.004) & (rows[:, 0] < 0.1)]
        assert np.all(early[:, 2] < early[:, 1])


@pytest.fixture(scope="module")
def bloch_out():
    return run_cached(BLOCH_SMALL)


class TestBlochSweep:
    def test_grid_shape(self, bloch_out):
        assert bloch_out.columns == ("theta", "phi", "F")
        assert len(bloch_out.rows) == 5 * 6
        thetas = sorted({r[0] for r in bloch_out.rows})
        assert thetas[0] == 0.0
        assert thetas[-1] == pytest.approx(math.pi)

    def test_min_consistency(self, bloch_out):
        meta = dict(bloch_out.metadata)
        fmin = min(r[2] for r in bloch_out.rows)
        assert meta["min_fidelity"] == f"{fmin:.12g}"
        argmin = [r for r in bloch_out.rows if r[2] == fmin][0]
        assert meta["argmin.theta"] == f"{argmin[0]:.12g}"
        assert meta["argmin.phi"] == f"{argmin[1]:.12g}"

    def test_refinement_close(self, bloch_out):
        meta = dict(bloch_out.metadata)
        assert abs(float(meta["min_fidelity_refined"])
                   - float(meta["min_fidelity"])) < 1e-3

    def test_poles_agree_across_phi(self, bloch_out):
        # theta = 0 rows must all carry the same fidelity.
        pole = [r[2] for r in bloch_out.rows if r[0] == 0.0]
        assert len(pole) == 6
        assert max(pole) - min(pole) < 1e-12

    def test_single_point_variant(self):
        out = run_cached(BLOCH_POINT)
        assert len(out.rows) == 1
        theta, phi, f = out.rows[0]
        assert theta == pytest.approx(1.0471975512)
        assert 0.0 < f < 1.0
        meta = dict(out.metadata)
        assert meta["min_fidelity"] == f"{f:.12g}"


@pytest.fixture(scope="module")
def eta_out():
    return run_cached(ETA_SMALL)


class TestEtaRatioSweep:
    def test_columns_and_rows(self, eta_out):
        assert eta_out.columns == ("eta_ratio", "min_F_ohmic_added",
                                   "min_F_super_ohmic_added")
        assert len(eta_out.rows) == 3
        assert eta_out.rows[0][0] == 0.0

    def test_zero_ratio_matches_across_variants(self, eta_out):
        assert eta_out.rows[0][1] == eta_out.rows[0][2]

    def test_added_noise_hurts(self, eta_out):
        assert eta_out.rows[-1][1] < eta_out.rows[0][1]
        assert eta_out.rows[-1][2] < eta_out.rows[0][2]

    def test_monotone_in_ratio(self, eta_out):
        col1 = [r[1] for r in eta_out.rows]
        col2 = [r[2] for r in eta_out.rows]
        assert col1 == sorted(col1, reverse=True)
        assert col2 == sorted(col2, reverse=True)


@pytest.fixture(scope="module")
def table_out():
    return run_cached(TABLE_SMALL)


class TestFullProtectionTable:
    def test_rows(self, table_out):
        assert table_out.columns == ("added_baths", "field",
                                     "min_fidelity", "argmin_theta",
                                     "argmin_phi")
        assert len(table_out.rows) == 4
        combos = {(r[0], r[1]) for r in table_out.rows}
        assert combos == {("ohmic", "dephasing_protect"),
                          ("ohmic", "full_protect"),
                          ("super_ohmic", "dephasing_protect"),
                          ("super_ohmic", "full_protect")}

    def test_full_decoupler_improves_worst_case(self, table_out):
        by = {(r[0], r[1]): r[2] for r in table_out.rows}
        assert by[("ohmic", "full_protect")] \
            > by[("ohmic", "dephasing_protect")]
        assert by[("super_ohmic", "full_protect")] \
            > by[("super_ohmic", "dephasing_protect")]

    def test_metadata_per_case(self, table_out):
        meta = dict(table_out.metadata)
        by = {(r[0], r[1]): r[2] for r in table_out.rows}
        assert meta["min_fidelity.ohmic.full_protect"] \
            == f"{by[('ohmic', 'full_protect')]:.12g}"
        assert "min_fidelity_refined.ohmic.full_protect" in meta


class TestDispatch:
    def test_run_experiment_names(self):
        assert run_cached(TRACE_SMALL).name == "trace"
        assert run_cached(BLOCH_SMALL).name == "bloch_sweep"

    def test_runner_rejects_wrong_experiment(self):
        cfg = parse_scenario(BLOCH_SMALL)
        with pytest.raises(UsageError, match="bloch_sweep"):
            run_trace(cfg)
        cfg2 = parse_scenario(TRACE_SMALL)
        with pytest.raises(UsageError, match="trace"):
            run_bloch_sweep(cfg2)


class TestDeterminism:
    def test_worker_count_does_not_change_bytes(self):
        serial = run_experiment(parse_scenario(ETA_SMALL), workers=1).to_csv()
        pooled = run_experiment(parse_scenario(ETA_SMALL), workers=2).to_csv()
        assert serial == pooled

    def test_repeat_run_is_bit_identical(self):
        a = run_experiment(parse_scenario(TRACE_SMALL), workers=1).to_csv()
        b = run_experiment(parse_scenario(TRACE_SMALL), workers=1).to_csv()
        assert a == b

    def test_no_timestamps_in_output(self):
        text = run_cached(TRACE_SMALL).to_csv()
        assert "date" not in text.lower()
        assert "time_stamp" not in text.lower()
