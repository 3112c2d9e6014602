"""Command-line interface: subcommands, exit codes, report artifacts."""

import copy
import json
import os

import pytest

from regiongain.cli import main
from conftest import LINEAR_DOC


def read_report(path):
    with open(path) as fh:
        doc = json.load(fh)
    assert "timestamp" in doc
    return doc["report"]


@pytest.fixture
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


class TestAnalyzeGains:
    def test_planar_example(self, in_tmp, capsys):
        rc = main(["analyze-gains", "planar-example",
                   "--out", "gains.json"])
        assert rc == 0
        rep = read_report("gains.json")
        assert rep["sup_composed_gain"] == pytest.approx(5.545874, abs=1e-3)
        assert "discrepancy_from_stated_1_11" in rep
        assert rep["sgc_fails_anywhere"] is True
        verdicts = [p["verdict"] for p in rep["sgc_intervals"]]
        assert verdicts == ["holds", "fails", "holds"]
        assert rep["bilimit_ratios"]["worst_zero_ratio"] < 1
        assert rep["bilimit_ratios"]["worst_infinity_ratio"] < 1
        assert os.path.exists("gains.csv")
        with open("gains.csv") as fh:
            assert fh.readline().strip() == "s,gamma_delta_s"
        assert "sup composed gain" in capsys.readouterr().out

    def test_report_body_deterministic(self, in_tmp):
        main(["analyze-gains", "bilimit-class", "--out", "a.json"])
        main(["analyze-gains", "bilimit-class", "--out", "b.json"])
        assert read_report("a.json") == read_report("b.json")

    def test_bad_interval(self, in_tmp):
        rc = main(["analyze-gains", "bilimit-class",
                   "--interval", "5", "2"])
        assert rc == 2


class TestCertify:
    def test_planar_mode_certifies_builtin(self, in_tmp):
        rc = main(["certify", "planar-example", "--mode", "planar",
                   "--out", "certify_planar.json"])
        assert rc == 0
        rep = read_report("certify_planar.json")
        assert rep["verdict"] == "certified"
        assert rep["divergence_check"]["verdict"] == "certified"
        assert rep["flux_check"]["flux_outer"] < 0
        assert rep["flux_check"]["divergence_theorem_rel_error"] < 0.02
        assert rep["recurrence_check"]["n_recurrent"] == 0

    def test_local_mode(self, in_tmp):
        rc = main(["certify", "planar-example", "--mode", "local"])
        assert rc == 0
        rep = read_report("certify_local.json")
        assert rep["certificate"]["verdict"] == "certified"
        th = rep["certificate"]["thresholds"]
        assert th["M_tilde"] == 0.0
        assert th["M_hat"] == pytest.approx(0.40131041345867774, abs=1e-9)

    def test_global_mode(self, in_tmp):
        rc = main(["certify", "planar-example", "--mode", "global"])
        assert rc == 0
        th = read_report("certify_global.json")["certificate"]["thresholds"]
        assert th["M_tilde"] == pytest.approx(1.0731457892, abs=1e-6)
        assert th["M_hat"] == "inf"

    def test_almost_global_refutes_contraction(self, in_tmp):
        # the bilimit-class field has div h = -2 < 0: the density check
        # with rho = (V+W)^-1 must refute
        rc = main(["certify", "bilimit-class", "--mode", "almost-global",
                   "--out", "out.json"])
        assert rc == 1
        rep = read_report("out.json")
        assert rep["verdict"] == "refuted"
        assert rep["density_check"]["worst_margin"] < 0

    def test_planar_mode_requires_planar_spec(self, in_tmp):
        doc = copy.deepcopy(LINEAR_DOC)
        doc["dimensions"] = {"n": 2, "m": 1}
        doc["fields"] = {"f": ["-x1", "-x2"], "g": ["-z1"]}
        doc["storage"] = {"V": "abs(x1) + abs(x2)", "W": "abs(z1)"}
        doc["sampling"]["box"] = [[-10, 10]] * 3
        with open("spec3.json", "w") as fh:
            json.dump(doc, fh)
        assert main(["certify", "spec3.json", "--mode", "planar"]) == 4

    def test_missing_threshold_block_is_prereq_error(self, in_tmp):
        doc = copy.deepcopy(LINEAR_DOC)
        del doc["thresholds"]["global"]
        with open("spec.json", "w") as fh:
            json.dump(doc, fh)
        assert main(["certify", "spec.json", "--mode", "global"]) == 4

    def test_refuted_thresholds_exit_code(self, in_tmp):
        # a saturating delta cannot close the global thresholds:
        # M_hat = delta(inf) = 1 < gamma^-1(M_lo) = 12 = M_tilde
        doc = copy.deepcopy(LINEAR_DOC)
        doc["gains"]["delta"] = {"expr": "min(s, 1)"}
        doc["thresholds"]["global"] = {"M_lo": 6.0, "N_lo": 6.0}
        with open("spec.json", "w") as fh:
            json.dump(doc, fh)
        assert main(["certify", "spec.json", "--mode", "global"]) == 1


class TestParseFailures:
    def test_malformed_json(self, in_tmp):
        with open("bad.json", "w") as fh:
            fh.write("{not json")
        assert main(["analyze-gains", "bad.json"]) == 2

    def test_missing_file(self, in_tmp):
        assert main(["analyze-gains", "no-such-file.json"]) == 2

    def test_bad_expression(self, in_tmp):
        doc = copy.deepcopy(LINEAR_DOC)
        doc["gains"]["gamma"] = {"expr": "0.5*"}
        with open("spec.json", "w") as fh:
            json.dump(doc, fh)
        assert main(["analyze-gains", "spec.json"]) == 2


class TestSimulate:
    def test_small_ensemble(self, in_tmp):
        rc = main(["simulate", "planar-example", "--inits", "3",
                   "--T", "5", "--out-dir", "sim"])
        assert rc == 0
        rep = read_report("sim/simulate.json")
        assert rep["n_inits"] == 3 and rep["blowups"] == 0
        assert os.path.exists("sim/trajectory_0000.csv")
        assert os.path.exists("sim/trajectory_0002.csv")

    def test_empty_ensemble(self, in_tmp):
        rc = main(["simulate", "planar-example", "--inits", "0",
                   "--out-dir", "sim"])
        assert rc == 0
        rep = read_report("sim/simulate.json")
        assert rep["n_inits"] == 0 and rep["converged_count"] == 0

    def test_blowup_majority_exit_code(self, in_tmp):
        doc = copy.deepcopy(LINEAR_DOC)
        doc["fields"] = {"f": ["x1^3"], "g": ["-z1"]}
        del doc["thresholds"]
        with open("spec.json", "w") as fh:
            json.dump(doc, fh)
        rc = main(["simulate", "spec.json", "--inits", "4", "--T", "5",
                   "--out-dir", "sim"])
        assert rc == 3
        assert read_report("sim/simulate.json")["blowups"] >= 3


class TestReport:
    def test_renders_consolidated_markdown(self, in_tmp):
        main(["analyze-gains", "planar-example", "--out", "gains.json"])
        main(["certify", "planar-example", "--mode", "planar",
              "--out", "certify_planar.json"])
        main(["simulate", "planar-example", "--inits", "2", "--T", "5",
              "--out-dir", "."])
        rc = main(["report", "--from", ".", "--out", "report.md"])
        assert rc == 0
        text = open("report.md").read()
        assert "# Certification report" in text
        assert "mode planar: **certified**" in text
        assert "globally asymptotically stable (sampled evidence)" in text
        assert "sup composed gain" in text

    def test_empty_directory(self, in_tmp):
        os.makedirs("empty", exist_ok=True)
        assert main(["report", "--from", "empty"]) == 2
