"""Density and planar certificate checks, flux integrals, aggregation."""

import json
import math

import numpy as np
import pytest

from regiongain import regions
from regiongain.certify import (Certificate, CertifyError, CheckReport,
                                DensityFunction, boundary_flux,
                                check_section41_condition, check_theorem1,
                                check_theorem2, divergence, gradient,
                                write_report_json)
from regiongain.gains import ScalarGain
from regiongain.lyapunov import StorageFunction, Thresholds
from regiongain.regions import shell_region, trace_level_curve

BOX = [[-3.0, 3.0], [-3.0, 3.0]]


def outward(y):
    return np.asarray(y, dtype=float)


def inward(y):
    return -np.asarray(y, dtype=float)


@pytest.fixture
def annulus(norm_u):
    return shell_region(norm_u, 1.0, 2.0, BOX, "annulus")


@pytest.fixture
def unit_rho():
    return DensityFunction(lambda y: 1.0,
                           rho_many=lambda Y: np.ones(len(np.atleast_2d(Y))))


class TestDerivatives:
    def test_divergence_of_linear_field_is_trace(self):
        A = np.array([[-1.5, 2.0], [0.3, -1.0]])
        fld = lambda y: A @ np.asarray(y, dtype=float)
        rng = np.random.default_rng(0)
        for _ in range(10):
            y = rng.uniform(-5, 5, 2)
            assert divergence(fld, y) == pytest.approx(-2.5, abs=1e-8)

    def test_divergence_nonlinear(self):
        fld = lambda y: np.array([y[0] ** 2, y[1] ** 3])
        assert divergence(fld, np.array([1.0, 2.0])) == pytest.approx(
            2.0 + 12.0, rel=1e-6
        )

    def test_divergence_step_validation(self):
        with pytest.raises(CertifyError):
            divergence(outward, np.zeros(2), step=-1.0)

    def test_gradient_of_quadratic(self):
        f = lambda y: float(y[0] ** 2 + 3 * y[1])
        g = gradient(f, np.array([2.0, 0.0]))
        assert g == pytest.approx([4.0, 3.0], rel=1e-6)


class TestDensityFunction:
    def test_eval_many_fallback_loop(self):
        rho = DensityFunction(lambda y: float(np.sum(y ** 2)))
        Y = np.array([[1.0, 0.0], [1.0, 1.0]])
        assert np.allclose(rho.eval_many(Y), [1.0, 2.0])
        assert rho([1.0, 1.0]) == 2.0

    def test_check_support(self, annulus, unit_rho):
        n_bad, _ = unit_rho.check_support(annulus, 50, seed=0)
        assert n_bad == 0
        dead = DensityFunction(lambda y: 0.0)
        n_bad, bad_pts = dead.check_support(annulus, 50, seed=0)
        assert n_bad == 50 and len(bad_pts) <= 20


class TestTheorem1:
    def test_expanding_field_certified(self, annulus, unit_rho):
        rep = check_theorem1(outward, unit_rho, annulus, 200, seed=0)
        assert rep.verdict == "certified"
        assert rep.worst_margin == pytest.approx(2.0, rel=1e-5)

    def test_contracting_field_refuted(self, annulus, unit_rho):
        rep = check_theorem1(inward, unit_rho, annulus, 200, seed=0)
        assert rep.verdict == "refuted"
        assert rep.worst_margin < 0
        assert rep.violations

    def test_vanishing_rho_refuted(self, annulus):
        dead = DensityFunction(lambda y: 0.0)
        rep = check_theorem1(outward, dead, annulus, 100, seed=0)
        assert rep.verdict == "refuted"
        assert "support" in rep.detail

    def test_empty_gap_certifies_trivially(self, monkeypatch):
        monkeypatch.setattr(regions, "MAX_PROPOSALS", 50_000)
        never = regions.RegionSpec(
            "gap_R", lambda Y: np.zeros(len(np.atleast_2d(Y)), dtype=bool),
            tuple((a, b) for a, b in BOX), "empty",
        )
        rho = DensityFunction(lambda y: 1.0)
        rep = check_theorem1(outward, rho, never, 100, seed=0)
        assert rep.verdict == "certified"
        assert "empty" in rep.detail and rep.n_samples == 0

    def test_gap_hypothesis_enforced(self, annulus, unit_rho):
        loc = Thresholds(0.0, 5.0, 0.0, 5.0, M_tilde=0.0, M_hat=1.0)
        glo = Thresholds(2.0, math.inf, 2.0, math.inf, M_tilde=4.0,
                         M_hat=math.inf)
        with pytest.raises(CertifyError):
            # local upper bounds do not sit below the global lower bounds
            check_theorem1(outward, unit_rho, annulus, 50, 0,
                           local_th=loc, global_th=glo)

    def test_invalid_thresholds_rejected(self, annulus, unit_rho):
        bad = Thresholds(0.0, 5.0, 0.0, 5.0, M_tilde=2.0, M_hat=1.0)
        glo = Thresholds(6.0, math.inf, 6.0, math.inf, M_tilde=7.0,
                         M_hat=math.inf)
        with pytest.raises(CertifyError):
            check_theorem1(outward, unit_rho, annulus, 50, 0,
                           local_th=bad, global_th=glo)


class TestSection41:
    def _storages(self):
        V = StorageFunction(1, lambda v: abs(float(v[0])),
                            batch=lambda X: np.abs(X[:, 0]))
        W = StorageFunction(1, lambda v: abs(float(v[0])),
                            batch=lambda X: np.abs(X[:, 0]))
        g = ScalarGain(lambda s: 0.5 * np.asarray(s, dtype=float), "Kinf")
        return V, W, g

    def test_expanding_field_certified(self, annulus):
        V, W, g = self._storages()
        rep = check_section41_condition(outward, V, W, g, g, annulus, 100, 0)
        # (div h)(V+W) = 2(V+W) >= 0.5 W + 0.5 V everywhere
        assert rep.verdict == "certified" and rep.worst_margin > 0

    def test_contracting_field_refuted(self, annulus):
        V, W, g = self._storages()
        rep = check_section41_condition(inward, V, W, g, g, annulus, 100, 0)
        assert rep.verdict == "refuted" and rep.violations


class TestTheorem2:
    def test_uniform_negative_divergence_certified(self, annulus):
        rep = check_theorem2(inward, annulus, 200, seed=0)
        assert rep.verdict == "certified"
        assert "-" in rep.detail

    def test_sign_change_refuted_with_straddling_pair(self, annulus):
        fld = lambda y: np.array([y[0] ** 2, y[1]])  # div = 2 y0 + 1
        rep = check_theorem2(fld, annulus, 300, seed=0)
        assert rep.verdict == "refuted"
        assert len(rep.violations) == 2

    def test_tiny_divergence_inconclusive(self, annulus):
        fld = lambda y: -1e-7 * np.asarray(y, dtype=float)
        rep = check_theorem2(fld, annulus, 100, seed=0)
        assert rep.verdict == "inconclusive"

    def test_non_planar_rejected(self, annulus):
        with pytest.raises(CertifyError):
            check_theorem2(inward, annulus, 10, seed=0, dim=3)


class TestBoundaryFlux:
    def circle(self, level):
        def field(Y):
            Y = np.atleast_2d(np.asarray(Y, dtype=float))
            return (Y ** 2).sum(axis=1)

        return trace_level_curve(field, level, BOX)[0]

    def test_matches_divergence_theorem(self):
        c = self.circle(4.0)
        # div(y) = 2 over the disc of radius 2: flux = 2 * pi * 4
        assert boundary_flux(outward, c) == pytest.approx(8 * math.pi,
                                                          rel=1e-2)
        assert boundary_flux(inward, c) == pytest.approx(-8 * math.pi,
                                                         rel=1e-2)

    def test_divergence_free_field_zero_flux(self):
        rot = lambda y: np.array([-y[1], y[0]])
        assert abs(boundary_flux(rot, self.circle(1.0))) < 1e-6

    def test_degenerate_polyline_rejected(self):
        from regiongain.regions import LevelCurve
        bad = LevelCurve(vertices=np.zeros((2, 2)),
                         normals=np.zeros((2, 2)), level=1.0)
        with pytest.raises(CertifyError):
            boundary_flux(outward, bad)


class TestAggregation:
    def _rep(self, verdict):
        return CheckReport(name="r", verdict=verdict, n_samples=1,
                           worst_margin=0.0)

    def test_refuted_wins(self):
        cert = Certificate("local", None, {
            "a": self._rep("certified"), "b": self._rep("refuted"),
            "c": self._rep("inconclusive"),
        })
        assert cert.verdict == "refuted"

    def test_inconclusive_beats_certified(self):
        cert = Certificate("local", None, {
            "a": self._rep("certified"), "b": self._rep("inconclusive"),
        })
        assert cert.verdict == "inconclusive"

    def test_all_certified(self):
        cert = Certificate("local", None, {"a": self._rep("certified")})
        assert cert.verdict == "certified"

    def test_dict_evidence_participates(self):
        cert = Certificate("local", None, {
            "a": self._rep("certified"),
            "b": {"verdict": "refuted", "detail": "thresholds invalid"},
        })
        assert cert.verdict == "refuted"

    def test_ok_objects_participate(self):
        class OkRep:
            ok = False
        cert = Certificate("local", None, {"a": OkRep()})
        assert cert.verdict == "refuted"

    def test_write_report_json(self, tmp_path):
        rep = self._rep("certified")
        path = tmp_path / "rep.json"
        write_report_json(path, rep)
        with open(path) as fh:
            doc = json.load(fh)
        assert doc["verdict"] == "certified" and doc["name"] == "r"
