"""Certificate checks: divergence/density conditions and planar
divergence-sign plus flux tests on the gap region.

All verdicts are sampled evidence, not proofs: each report carries its
sample count, worst margin, and tolerances, and returns "inconclusive"
when the deciding margin falls within 10x of its tolerance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .regions import EmptyRegionError, RegionSpec, sample

__all__ = [
    "CertifyError",
    "TOL_DIV",
    "TOL_FIELD",
    "TOL_DENSITY",
    "DensityFunction",
    "Certificate",
    "CheckReport",
    "divergence",
    "gradient",
    "check_theorem1",
    "check_section41_condition",
    "check_theorem2",
    "boundary_flux",
    "write_report_json",
]

TOL_DENSITY = 1e-8   # min div(h*rho) must exceed this to certify
TOL_DIV = 1e-6       # |div h| lower bound for the planar sign test
TOL_FIELD = 1e-8     # |h| lower bound for the planar nonvanishing test
INCONCLUSIVE_FACTOR = 10.0


class CertifyError(Exception):
    pass


@dataclass
class DensityFunction:
    """Nonnegative C1 (away from the origin) weight for the density test.

    ``rho`` maps a state to a scalar; ``rho_many`` optionally vectorizes.
    """

    rho: callable
    rho_many: callable = None
    name: str = "rho"

    def __call__(self, y):
        return float(self.rho(np.asarray(y, dtype=float)))

    def eval_many(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if self.rho_many is not None:
            return np.asarray(self.rho_many(Y), dtype=float)
        return np.array([float(self.rho(row)) for row in Y])

    def check_support(self, region: RegionSpec, n_samples, seed):
        """supp(rho) must cover the region: rho > 0 on all samples."""
        pts = sample(region, n_samples, seed)
        vals = self.eval_many(pts)
        bad = vals <= 0
        return int(bad.sum()), pts[bad][:20]


@dataclass
class CheckReport:
    """One sampled hypothesis check."""

    name: str
    verdict: str                   # certified | refuted | inconclusive
    n_samples: int
    worst_margin: float
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    detail: str = ""

    @property
    def ok(self):
        return self.verdict == "certified"

    def to_dict(self):
        return {
            "name": self.name,
            "verdict": self.verdict,
            "n_samples": self.n_samples,
            "worst_margin": self.worst_margin,
            "seed": self.seed,
            "tolerances": self.tolerances,
            "violations": [list(map(float, v)) for v in self.violations[:20]],
            "detail": self.detail,
        }


@dataclass
class Certificate:
    """Aggregated certification outcome for one regime."""

    regime: str                    # local | global
    thresholds: object
    evidence: dict = field(default_factory=dict)

    @property
    def verdict(self):
        verdicts = []
        for rep in self.evidence.values():
            if isinstance(rep, dict) and "verdict" in rep:
                verdicts.append(rep["verdict"])
            elif hasattr(rep, "verdict"):
                verdicts.append(rep.verdict)
            elif hasattr(rep, "ok"):
                verdicts.append("certified" if rep.ok else "refuted")
        if any(v == "refuted" for v in verdicts):
            return "refuted"
        if any(v == "inconclusive" for v in verdicts):
            return "inconclusive"
        return "certified"

    def to_dict(self):
        return {
            "regime": self.regime,
            "verdict": self.verdict,
            "thresholds": self.thresholds.to_dict()
            if hasattr(self.thresholds, "to_dict") else self.thresholds,
            "evidence": {
                k: (v.to_dict() if hasattr(v, "to_dict") else v)
                for k, v in self.evidence.items()
            },
        }


def divergence(fld, y, step=None):
    """Central-difference divergence of a vector field at y."""
    y = np.asarray(y, dtype=float)
    k = len(y)
    if step is None:
        step = 1e-5 * (1.0 + float(np.linalg.norm(y)))
    if step <= 0:
        raise CertifyError("step must be positive")
    total = 0.0
    for i in range(k):
        e = np.zeros(k)
        e[i] = step
        total += (float(np.asarray(fld(y + e))[i])
                  - float(np.asarray(fld(y - e))[i])) / (2.0 * step)
    return total


def gradient(scalar, y, step=None):
    """Central-difference gradient of a scalar function at y."""
    y = np.asarray(y, dtype=float)
    k = len(y)
    if step is None:
        step = 1e-5 * (1.0 + float(np.linalg.norm(y)))
    out = np.empty(k)
    for i in range(k):
        e = np.zeros(k)
        e[i] = step
        out[i] = (float(scalar(y + e)) - float(scalar(y - e))) / (2.0 * step)
    return out


def _classify(margin, tol):
    """certified above tol, refuted at or below zero margin, inconclusive
    in the 10x-tol gray zone."""
    if margin <= 0:
        return "refuted"
    if margin <= INCONCLUSIVE_FACTOR * tol:
        return "inconclusive"
    return "certified"


def check_theorem1(h_field, rho: DensityFunction, gap: RegionSpec,
                   n_samples, seed, local_th=None,
                   global_th=None) -> CheckReport:
    """Density condition div(h*rho) > 0 on gap samples.

    When both threshold sets are given, the gap-nontriviality hypothesis
    (local M_hi < global M_lo or local N_hi < global N_lo) is enforced
    before any sampling.  An empty gap region certifies trivially (the
    attractor estimate already sits inside the basin estimate).
    """
    tols = {"tol_density": TOL_DENSITY}
    if local_th is not None and global_th is not None:
        if not (local_th.valid and global_th.valid):
            raise CertifyError("both certificates must have valid thresholds")
        if not (local_th.M_hi < global_th.M_lo
                or local_th.N_hi < global_th.N_lo):
            raise CertifyError(
                "hypothesis violated: need local M_hi < global M_lo "
                "or local N_hi < global N_lo"
            )
    try:
        pts = sample(gap, n_samples, seed)
    except EmptyRegionError:
        return CheckReport(
            name="theorem1_density", verdict="certified", n_samples=0,
            worst_margin=math.inf, seed=seed, tolerances=tols,
            detail="gap empty: attraction follows by inclusion alone",
        )
    # support check first: rho must be positive on all of R
    n_bad_supp, bad_pts = rho.check_support(gap, min(n_samples, 200), seed + 1)
    if n_bad_supp:
        return CheckReport(
            name="theorem1_density", verdict="refuted", n_samples=n_samples,
            worst_margin=0.0, seed=seed, tolerances=tols,
            violations=list(bad_pts),
            detail="rho vanishes on the gap region (support too small)",
        )

    def product_field(y):
        return np.asarray(h_field(y), dtype=float) * rho(y)

    divs = np.array([divergence(product_field, y) for y in pts])
    worst = float(divs.min())
    bad = divs <= TOL_DENSITY
    verdict = _classify(worst, TOL_DENSITY)
    return CheckReport(
        name="theorem1_density", verdict=verdict, n_samples=n_samples,
        worst_margin=worst, seed=seed, tolerances=tols,
        violations=list(pts[bad][:20]),
        detail=f"min div(h*rho) over {n_samples} gap samples",
    )


def check_section41_condition(h_field, V, W, gamma, delta, gap: RegionSpec,
                              n_samples, seed) -> CheckReport:
    """Pointwise check of (div h)(V + W) >= gamma(W) + delta(V) on gap
    samples; reports the worst margin (lhs - rhs)."""
    pts = sample(gap, n_samples, seed)
    n = V.dimension
    margins = np.empty(len(pts))
    for i, y in enumerate(pts):
        v = V(y[:n])
        w = W(y[n:])
        lhs = divergence(h_field, y) * (v + w)
        rhs = float(gamma(w)) + float(delta(v))
        margins[i] = lhs - rhs
    worst = float(margins.min())
    bad = margins < 0
    return CheckReport(
        name="section41_condition",
        verdict="certified" if not bad.any() else "refuted",
        n_samples=n_samples, worst_margin=worst, seed=seed,
        tolerances={}, violations=list(pts[bad][:20]),
        detail="(div h)(V+W) - (gamma(W)+delta(V)) on gap samples",
    )


def check_theorem2(h_field, gap: RegionSpec, n_samples, seed,
                   dim=2) -> CheckReport:
    """Planar test: |div h| >= 1e-6 with a single sign across all gap
    samples, and |h| >= 1e-8 (no equilibrium inside the region)."""
    if dim != 2:
        raise CertifyError("theorem-2 check is planar only (n = m = 1)")
    tols = {"tol_div": TOL_DIV, "tol_field": TOL_FIELD}
    pts = sample(gap, n_samples, seed)
    divs = np.array([divergence(h_field, y) for y in pts])
    mags = np.array([float(np.linalg.norm(h_field(y))) for y in pts])

    pos = divs > 0
    if pos.any() and (~pos).any():
        i_pos = int(np.argmax(divs))
        i_neg = int(np.argmin(divs))
        return CheckReport(
            name="theorem2_planar", verdict="refuted", n_samples=n_samples,
            worst_margin=0.0, seed=seed, tolerances=tols,
            violations=[pts[i_pos], pts[i_neg]],
            detail="div h changes sign across the gap region "
                   "(straddling pair reported)",
        )
    div_margin = float(np.abs(divs).min())
    field_margin = float(mags.min())
    bad_div = np.abs(divs) < TOL_DIV
    bad_field = mags < TOL_FIELD
    if bad_div.any() or bad_field.any():
        worse = min(div_margin / TOL_DIV, field_margin / TOL_FIELD)
        verdict = "refuted" if worse <= 0 else (
            "inconclusive" if worse <= INCONCLUSIVE_FACTOR else "certified"
        )
        if verdict == "certified":
            verdict = "refuted"  # below tolerance is a failure by contract
        return CheckReport(
            name="theorem2_planar", verdict=verdict, n_samples=n_samples,
            worst_margin=min(div_margin, field_margin), seed=seed,
            tolerances=tols,
            violations=list(pts[bad_div | bad_field][:20]),
            detail="div-magnitude or field-magnitude below tolerance",
        )
    verdict = "certified"
    if div_margin <= INCONCLUSIVE_FACTOR * TOL_DIV \
            or field_margin <= INCONCLUSIVE_FACTOR * TOL_FIELD:
        verdict = "inconclusive"
    return CheckReport(
        name="theorem2_planar", verdict=verdict, n_samples=n_samples,
        worst_margin=div_margin, seed=seed, tolerances=tols,
        detail=f"uniform div sign {'+' if pos.all() else '-'}; "
               f"min |div h| = {div_margin:.6g}, min |h| = {field_margin:.6g}",
    )


def boundary_flux(h_field, curve) -> float:
    """Trapezoidal line integral of h . n along a closed polyline with
    per-vertex outward normals."""
    verts = np.asarray(curve.vertices, dtype=float)
    normals = np.asarray(curve.normals, dtype=float)
    if len(verts) < 3:
        raise CertifyError("degenerate polyline (< 3 vertices)")
    hn = np.array([
        float(np.dot(np.asarray(h_field(v), dtype=float), nrm))
        for v, nrm in zip(verts, normals)
    ])
    nxt = np.roll(np.arange(len(verts)), -1)
    seg_len = np.linalg.norm(verts[nxt] - verts, axis=1)
    return float(np.sum(0.5 * (hn + hn[nxt]) * seg_len))


def write_report_json(path, report):
    payload = report.to_dict() if hasattr(report, "to_dict") else report
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
