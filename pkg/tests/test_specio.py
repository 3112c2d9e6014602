"""Spec-document parsing, gain declarations, built-ins, defaults."""

import copy
import json

import numpy as np
import pytest

from regiongain.gains import TableGain
from regiongain.specio import (BUILTIN_NAMES, SpecError, builtin_spec,
                               load_spec, parse_spec)
from conftest import LINEAR_DOC


class TestBuiltins:
    def test_names(self):
        assert BUILTIN_NAMES == ("bilimit-class", "planar-example",
                                 "planar-example-paper")

    def test_unknown_name(self):
        with pytest.raises(SpecError):
            builtin_spec("nope")

    def test_returns_fresh_copies(self):
        doc = builtin_spec("planar-example")
        doc["dimensions"]["n"] = 99
        assert builtin_spec("planar-example")["dimensions"]["n"] == 1

    @pytest.mark.parametrize("name", BUILTIN_NAMES)
    def test_all_builtins_parse(self, name):
        sp = parse_spec(builtin_spec(name))
        assert sp.is_planar and sp.dim == 2
        assert sp.seed == 42


class TestParseSpec:
    def test_linear_document(self, linear_spec):
        sp = linear_spec
        assert (sp.n, sp.m) == (1, 1)
        assert sp.seed == 7 and sp.n_samples == 500
        assert sp.box == ((-10.0, 10.0), (-10.0, 10.0))
        assert (sp.sim_T, sp.sim_dt, sp.sim_method) == (30.0, 1e-3, "rk45")
        assert sp.local_thresholds == {"M_hi": 4.0, "N_hi": 4.0}
        assert sp.global_thresholds == {"M_lo": 0.5, "N_lo": 0.5}
        assert sp.V([-2.0]) == 2.0
        assert sp.V.lam([-2.0]) == pytest.approx(0.4)
        assert float(sp.gamma(3.0)) == 1.5

    def test_defaults(self):
        doc = copy.deepcopy(LINEAR_DOC)
        del doc["sampling"], doc["simulation"], doc["thresholds"]
        sp = parse_spec(doc)
        assert sp.seed == 42 and sp.n_samples == 1000
        assert sp.box == ((-10.0, 10.0), (-10.0, 10.0))
        assert (sp.sim_T, sp.sim_dt, sp.sim_method) == (50.0, 1e-3, "rk45")
        assert sp.local_thresholds is None
        assert sp.global_thresholds is None

    def test_default_rho_is_reciprocal_sum(self, linear_spec):
        assert linear_spec.rho([1.0, 1.0]) == pytest.approx(0.5)
        assert linear_spec.rho.eval_many([[2.0, 2.0]])[0] == pytest.approx(
            0.25
        )

    def test_explicit_rho(self):
        doc = copy.deepcopy(LINEAR_DOC)
        doc["rho"] = "exp(-(x1^2 + z1^2))"
        sp = parse_spec(doc)
        assert sp.rho([0.0, 0.0]) == 1.0

    def test_envelope_gain_with_plus_ramp(self, planar_spec):
        delta = planar_spec.delta
        # envelope saturates at 1 while the ramp keeps growing slowly
        assert float(delta(5.0)) > 1.0
        assert float(delta(50.0)) > float(delta(5.0))
        assert float(delta(0.0)) == 0.0

    def test_envelope_gain_without_plus_is_table(self, paper_spec):
        assert isinstance(paper_spec.delta, TableGain)
        assert isinstance(paper_spec.gamma, TableGain)


class TestSpecErrors:
    def _doc(self):
        return copy.deepcopy(LINEAR_DOC)

    def test_not_a_dict(self):
        with pytest.raises(SpecError):
            parse_spec([1, 2, 3])

    def test_missing_dimensions(self):
        doc = self._doc()
        del doc["dimensions"]
        with pytest.raises(SpecError):
            parse_spec(doc)

    def test_nonpositive_dimensions(self):
        doc = self._doc()
        doc["dimensions"]["n"] = 0
        with pytest.raises(SpecError):
            parse_spec(doc)

    def test_component_count_mismatch(self):
        doc = self._doc()
        doc["fields"]["f"] = ["-x1", "-x1"]
        with pytest.raises(SpecError):
            parse_spec(doc)

    def test_missing_storage(self):
        doc = self._doc()
        del doc["storage"]["V"]
        with pytest.raises(SpecError):
            parse_spec(doc)

    def test_bad_expression_reports_location(self):
        doc = self._doc()
        doc["fields"]["f"] = ["-x1 +"]
        with pytest.raises(SpecError) as exc:
            parse_spec(doc)
        assert "fields.f[0]" in str(exc.value)

    def test_undeclared_variable(self):
        doc = self._doc()
        doc["fields"]["g"] = ["-z2"]
        with pytest.raises(SpecError):
            parse_spec(doc)

    def test_bad_gain_declaration(self):
        doc = self._doc()
        doc["gains"]["gamma"] = {"table": [1, 2]}
        with pytest.raises(SpecError):
            parse_spec(doc)
        doc["gains"]["gamma"] = "0.5*s"
        with pytest.raises(SpecError):
            parse_spec(doc)

    def test_malformed_thresholds(self):
        doc = self._doc()
        doc["thresholds"]["local"] = {"M_hi": 2.0}
        with pytest.raises(SpecError):
            parse_spec(doc)

    def test_bad_method(self):
        doc = self._doc()
        doc["simulation"]["method"] = "euler"
        with pytest.raises(SpecError):
            parse_spec(doc)

    def test_bad_box_arity(self):
        doc = self._doc()
        doc["sampling"]["box"] = [[-1, 1]]
        with pytest.raises(SpecError):
            parse_spec(doc)


class TestLoadSpec:
    def test_round_trip_from_file(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(LINEAR_DOC))
        sp = load_spec(path)
        assert sp.seed == 7

    def test_json_error_reports_line_and_column(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"dimensions": {\n  "n": 1,,\n}}')
        with pytest.raises(SpecError) as exc:
            load_spec(path)
        assert "line" in str(exc.value) and "column" in str(exc.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_spec(tmp_path / "absent.json")
