import csv
import json
import math

import numpy as np
import pytest

from semimarkov import dataio
from semimarkov.cli import main
from semimarkov.errors import DatasetFormatError, EmptyCurve
from semimarkov.plots import render_curves

D1_CSV = """id,from,to,tstart,tstop,status
A,1,2,0,1,1
A,2,3,0,2,1
B,1,3,0,2,1
C,1,,0,3,0
"""

D1_STATES = {
    "labels": ["1", "2", "3"],
    "transitions": [["1", "2"], ["1", "3"], ["2", "3"]],
}

C1_CSV = """id,from,to,tstart,tstop,status,z
1,1,2,0,1,1,1
2,1,2,0,2,1,0
3,1,,0,3,0,1
"""

C1_STATES = {"labels": ["1", "2"], "transitions": [["1", "2"]]}

SIM_CONFIG = {
    "labels": ["good", "bad", "dead"],
    "transitions": [["good", "bad", 0.08], ["good", "dead", 0.04], ["bad", "dead", 0.1]],
    "power": 1.0,
    "beta": [0.4, -0.2],
    "cohort_size": 60,
    "horizon": 12.0,
    "seed": 424242,
}


@pytest.fixture
def d1_files(tmp_path):
    data = tmp_path / "d1.csv"
    states = tmp_path / "states.json"
    data.write_text(D1_CSV)
    states.write_text(json.dumps(D1_STATES))
    return data, states


@pytest.fixture
def c1_files(tmp_path):
    data = tmp_path / "c1.csv"
    states = tmp_path / "states.json"
    data.write_text(C1_CSV)
    states.write_text(json.dumps(C1_STATES))
    return data, states


def _read_curves(path):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(row)
    return rows


class TestIngest:
    def test_d1_summary(self, d1_files, tmp_path, capsys):
        data, states = d1_files
        code = main(["ingest", "--input", str(data), "--states", str(states),
                     "--out", str(tmp_path)])
        assert code == 0
        text = capsys.readouterr().out
        assert "subjects: 3" in text
        assert "records: 4 (1 censored)" in text
        with open(tmp_path / "transitions_summary.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        by_pair = {(r["from"], r["to"]): r for r in rows}
        assert by_pair[("1", "2")]["count"] == "1"
        assert float(by_pair[("1", "2")]["relative"]) == 0.5

    def test_validation_error_exit_code(self, tmp_path):
        data = tmp_path / "bad.csv"
        data.write_text("id,from,to,tstart,tstop,status\nA,1,1,0,1,1\n")
        states = tmp_path / "states.json"
        states.write_text(json.dumps(D1_STATES))
        code = main(["ingest", "--input", str(data), "--states", str(states),
                     "--out", str(tmp_path)])
        assert code == 1


class TestFit:
    def test_c1_fit_report(self, c1_files, tmp_path):
        data, states = c1_files
        code = main(["fit", "--input", str(data), "--states", str(states),
                     "--covariates", "z", "--out", str(tmp_path)])
        assert code == 0
        with open(tmp_path / "fit.json") as fh:
            report = json.load(fh)
        assert report["converged"]
        coef = report["coefficients"][0]
        assert coef["name"] == "z"
        assert coef["coef"] == pytest.approx(-0.5 * math.log(2.0), abs=1e-6)
        assert set(coef) == {"name", "coef", "exp_coef", "se_coef", "z", "p"}
        base = dataio.read_step_function(tmp_path / "baseline_1_2.csv")
        assert base(2.0) == pytest.approx(1.0, abs=1e-10)

    def test_monotone_likelihood_exit_code(self, tmp_path):
        data = tmp_path / "sep.csv"
        data.write_text(
            "id,from,to,tstart,tstop,status,z\na,1,2,0,1,1,1\nb,1,2,0,2,1,0\n"
        )
        states = tmp_path / "states.json"
        states.write_text(json.dumps(C1_STATES))
        code = main(["fit", "--input", str(data), "--states", str(states),
                     "--covariates", "z", "--out", str(tmp_path)])
        assert code == 2


class TestTransitions:
    def test_dsh_curves_on_d1(self, d1_files, tmp_path):
        data, states = d1_files
        code = main(["transitions", "--input", str(data), "--states", str(states),
                     "--method", "dsh", "--clock", "sojourn",
                     "--grid", "2.5,3.5", "--out", str(tmp_path)])
        assert code == 0
        rows = _read_curves(tmp_path / "transitions_dsh_sojourn.csv")
        at = {
            (float(r["t"]), r["from"], r["to"]): float(r["probability"]) for r in rows
        }
        assert at[(2.5, "1", "1")] == pytest.approx(1 / 3, abs=1e-10)
        assert at[(2.5, "1", "2")] == pytest.approx(1 / 3, abs=1e-10)
        assert at[(2.5, "1", "3")] == pytest.approx(1 / 3, abs=1e-10)
        assert at[(3.5, "1", "2")] == pytest.approx(0.0, abs=1e-10)
        assert at[(3.5, "1", "3")] == pytest.approx(2 / 3, abs=1e-10)
        assert rows[0]["method"] == "dsh" and rows[0]["clock"] == "sojourn"

    def test_aj_curves_on_d1(self, d1_files, tmp_path):
        data, states = d1_files
        code = main(["transitions", "--input", str(data), "--states", str(states),
                     "--method", "aj", "--grid", "2.5", "--out", str(tmp_path)])
        assert code == 0
        rows = _read_curves(tmp_path / "transitions_aj_calendar.csv")
        at = {
            (float(r["t"]), r["from"], r["to"]): float(r["probability"]) for r in rows
        }
        assert at[(2.5, "1", "1")] == pytest.approx(1 / 3, abs=1e-10)
        assert at[(2.5, "1", "3")] == pytest.approx(1 / 3, abs=1e-10)
        for r in rows:
            assert float(r["row_sum"]) == pytest.approx(1.0, abs=1e-12)

    def test_numeric_roundtrip_precision(self, d1_files, tmp_path):
        """Written values re-parse to exactly the in-memory estimates."""
        from semimarkov import Clock, build_counting_system, dsh_pipeline, nelson_aalen

        data, states = d1_files
        main(["transitions", "--input", str(data), "--states", str(states),
              "--method", "dsh", "--clock", "sojourn", "--out", str(tmp_path)])
        rows = _read_curves(tmp_path / "transitions_dsh_sojourn.csv")
        space = dataio.load_state_space(states)
        history = dataio.read_dataset(data, space)
        est = dsh_pipeline(nelson_aalen(build_counting_system(history, Clock.SOJOURN)))
        for r in rows:
            i, j = space.index(r["from"]), space.index(r["to"])
            exact = est.at(float(r["t"]))[i, j]
            assert float(r["probability"]) == exact

    def test_plot_is_deterministic(self, d1_files, tmp_path):
        data, states = d1_files
        code = main(["transitions", "--input", str(data), "--states", str(states),
                     "--method", "dsh", "--clock", "sojourn", "--plot",
                     "--out", str(tmp_path)])
        assert code == 0
        svg = tmp_path / "transitions_dsh_sojourn.svg"
        first = svg.read_bytes()
        assert first.startswith(b"<?xml")
        main(["transitions", "--input", str(data), "--states", str(states),
              "--method", "dsh", "--clock", "sojourn", "--plot",
              "--out", str(tmp_path)])
        assert svg.read_bytes() == first

    def test_panel_count_matches_transient_states(self, d1_files, tmp_path):
        data, states = d1_files
        main(["transitions", "--input", str(data), "--states", str(states),
              "--method", "dsh", "--clock", "sojourn", "--plot", "--out", str(tmp_path)])
        svg = (tmp_path / "transitions_dsh_sojourn.svg").read_text()
        assert svg.count("from 1") == 1 and svg.count("from 2") == 1
        assert "from 3" not in svg

    def test_empty_curve_rejected(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("t,from,to,probability,method,clock,row_sum\n")
        with pytest.raises(EmptyCurve):
            render_curves(empty, tmp_path / "out.svg")


class TestPredict:
    def test_d1_prediction_row(self, d1_files, tmp_path):
        data, states = d1_files
        code = main(["predict", "--input", str(data), "--states", str(states),
                     "--s", "1.5", "--t", "2.5", "--state", "1", "--entry", "0",
                     "--out", str(tmp_path)])
        assert code == 0
        with open(tmp_path / "prediction.json") as fh:
            payload = json.load(fh)
        assert payload["probabilities"]["1"] == pytest.approx(0.5, abs=1e-10)
        assert payload["probabilities"]["2"] == pytest.approx(0.0, abs=1e-10)
        assert payload["probabilities"]["3"] == pytest.approx(0.5, abs=1e-10)


class TestSimulateRoundTrip:
    def test_simulate_ingest_fit(self, tmp_path):
        config = tmp_path / "sim.json"
        config.write_text(json.dumps(SIM_CONFIG))
        out = tmp_path / "sim_out"
        code = main(["simulate", "--config", str(config), "--out", str(out)])
        assert code == 0
        with open(out / "truth.json") as fh:
            truth = json.load(fh)
        assert truth["beta"] == [0.4, -0.2]
        states = tmp_path / "sim_states.json"
        states.write_text(json.dumps(
            {"labels": SIM_CONFIG["labels"],
             "transitions": [t[:2] for t in SIM_CONFIG["transitions"]]}
        ))
        assert main(["ingest", "--input", str(out / "cohort.csv"),
                     "--states", str(states), "--out", str(out)]) == 0
        assert main(["fit", "--input", str(out / "cohort.csv"),
                     "--states", str(states), "--covariates", "z1,z2",
                     "--out", str(out)]) == 0
        with open(out / "fit.json") as fh:
            report = json.load(fh)
        assert report["converged"]

    def test_seed_override_changes_output(self, tmp_path):
        config = tmp_path / "sim.json"
        config.write_text(json.dumps(SIM_CONFIG))
        out1, out2, out3 = (tmp_path / f"o{k}" for k in range(3))
        main(["simulate", "--config", str(config), "--out", str(out1)])
        main(["simulate", "--config", str(config), "--out", str(out2)])
        main(["simulate", "--config", str(config), "--seed", "7", "--out", str(out3)])
        assert (out1 / "cohort.csv").read_bytes() == (out2 / "cohort.csv").read_bytes()
        assert (out1 / "cohort.csv").read_bytes() != (out3 / "cohort.csv").read_bytes()


class TestBootstrapCommand:
    def test_bands_and_report(self, tmp_path):
        config = tmp_path / "sim.json"
        spec = dict(SIM_CONFIG, cohort_size=40, beta=[])
        config.write_text(json.dumps(spec))
        out = tmp_path / "run"
        main(["simulate", "--config", str(config), "--out", str(out)])
        states = tmp_path / "states.json"
        states.write_text(json.dumps(
            {"labels": SIM_CONFIG["labels"],
             "transitions": [t[:2] for t in SIM_CONFIG["transitions"]]}
        ))
        code = main(["bootstrap", "--input", str(out / "cohort.csv"),
                     "--states", str(states), "--bootstrap", "15",
                     "--seed", "5", "--grid", "0,2,5", "--out", str(out)])
        assert code == 0
        with open(out / "bootstrap.json") as fh:
            report = json.load(fh)
        assert report["B"] == 15
        rows = _read_curves(out / "bands.csv")
        assert {r["to"] for r in rows if r["from"] == "good"} == {"good", "bad", "dead"}
        for r in rows:
            assert float(r["lo"]) <= float(r["hi"]) + 1e-12
            assert r["B"] == "15"


class TestDataIO:
    def test_entry_column_override(self, tmp_path, d1_files):
        _, states = d1_files
        data = tmp_path / "entry.csv"
        data.write_text(
            "id,from,to,tstart,tstop,status,entry\n"
            "A,1,2,0,1,1,0\nA,2,3,0,2,1,1\n"
        )
        history = dataio.read_dataset(data, dataio.load_state_space(states))
        assert [rec.entry_calendar for rec in history.records] == [0.0, 1.0]

    def test_integer_state_tokens(self, tmp_path, d1_files):
        _, states = d1_files
        space = dataio.load_state_space(states)
        assert dataio._state_index(space, "2") == 1
        with pytest.raises(DatasetFormatError):
            dataio._state_index(space, "nope")

    def test_missing_column_rejected(self, tmp_path, d1_files):
        _, states = d1_files
        data = tmp_path / "short.csv"
        data.write_text("id,from,to,tstart,status\nA,1,2,0,1\n")
        with pytest.raises(DatasetFormatError):
            dataio.read_dataset(data, dataio.load_state_space(states))

    def test_time_varying_covariates_rejected(self, tmp_path, d1_files):
        _, states = d1_files
        data = tmp_path / "tv.csv"
        data.write_text(
            "id,from,to,tstart,tstop,status,z\nA,1,2,0,1,1,1\nA,2,3,0,2,1,2\n"
        )
        with pytest.raises(DatasetFormatError):
            dataio.read_dataset(data, dataio.load_state_space(states), ["z"])

    def test_step_function_roundtrip(self, tmp_path):
        from semimarkov import StepFunction

        f = StepFunction([1.0, 2.5], [1 / 3, 0.25], value_at_zero=0.0)
        path = tmp_path / "curve.csv"
        dataio.write_step_function(path, f)
        g = dataio.read_step_function(path)
        assert np.array_equal(g.times, f.times)
        assert g(2.5) == pytest.approx(f(2.5), abs=1e-15)
