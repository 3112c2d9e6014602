"""Merged Lyapunov construction and sampled verification.

Builds sigma = (delta + gamma^-1)/2 and the merged function
U(x, z) = max{sigma(V(x)), W(z)}, computes the certificate thresholds
M_tilde / M_hat, estimates Dini derivatives along vector fields, and
verifies the implication-form decrease conditions on samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gains import BracketError, GainError, ScalarGain, TableGain, invert

__all__ = [
    "LyapunovError",
    "StorageFunction",
    "MergedLyapunov",
    "Thresholds",
    "SigmaReport",
    "ImplicationReport",
    "construct_sigma",
    "validate_sigma",
    "merged_U",
    "compute_thresholds",
    "default_taus",
    "dini_derivative",
    "sigma_prime",
    "decrease_rate_E",
    "verify_iss_implication",
    "gain_value_at_infinity",
]

DEFAULT_SLACK = 1e-6
DEFAULT_LAMBDA_EPS = 1e-3


class LyapunovError(Exception):
    pass


class StorageFunction:
    """Positive-definite scalar function of one subsystem state.

    ``value`` maps a length-``dimension`` vector to a nonnegative real;
    ``lam`` is the paired decrease rate (lambda_x or lambda_z) and defaults
    to eps*|x| with eps = 1e-3 when omitted.  ``batch`` optionally provides
    a vectorized evaluator over rows of an (N, dimension) array.
    """

    def __init__(self, dimension, value, lam=None, batch=None, name=""):
        if dimension < 1:
            raise LyapunovError("dimension must be >= 1")
        self.dimension = int(dimension)
        self.value = value
        if lam is None:
            lam = lambda v: DEFAULT_LAMBDA_EPS * float(
                np.linalg.norm(np.asarray(v, dtype=float))
            )
            self.lambda_is_default = True
        else:
            self.lambda_is_default = False
        self.lam = lam
        self._batch = batch
        self.name = name

    def __call__(self, v):
        return float(self.value(np.asarray(v, dtype=float)))

    def eval_many(self, X):
        X = np.asarray(X, dtype=float)
        if self._batch is not None:
            return np.asarray(self._batch(X), dtype=float)
        return np.array([float(self.value(row)) for row in X])

    def check_basic(self, box_halfwidth=5.0, n_samples=200, seed=0):
        """Sampled positive-definiteness and properness probes; returns a
        list of violation strings."""
        problems = []
        origin = np.zeros(self.dimension)
        v0 = self(origin)
        if abs(v0) > 1e-12:
            problems.append(f"value(0) = {v0!r} != 0")
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-box_halfwidth, box_halfwidth, (n_samples, self.dimension))
        pts = pts[np.linalg.norm(pts, axis=1) > 1e-8]
        vals = self.eval_many(pts)
        if (vals <= 0).any():
            bad = pts[int(np.argmin(vals))]
            problems.append(f"nonpositive value at {bad.tolist()}")
        # properness: the max over a sphere of radius R grows along R, 2R, 4R...
        direction = np.ones(self.dimension) / math.sqrt(self.dimension)
        radii = box_halfwidth * 2.0 ** np.arange(4)
        sphere_vals = [self(r * direction) for r in radii]
        if any(b <= a for a, b in zip(sphere_vals, sphere_vals[1:])):
            problems.append("no growth along the doubling-radius probe")
        return problems


@dataclass
class MergedLyapunov:
    """U(x, z) = max{sigma(V(x)), W(z)}."""

    sigma: ScalarGain
    V: StorageFunction
    W: StorageFunction

    def __call__(self, x, z):
        return merged_U(self, x, z)

    def on_state(self, y):
        """Evaluate on a concatenated state y = (x, z)."""
        y = np.asarray(y, dtype=float)
        n = self.V.dimension
        return merged_U(self, y[:n], y[n:])

    def eval_many(self, Y):
        Y = np.asarray(Y, dtype=float)
        n = self.V.dimension
        sv = np.asarray(self.sigma(self.V.eval_many(Y[:, :n])), dtype=float)
        return np.maximum(sv, self.W.eval_many(Y[:, n:]))


@dataclass(frozen=True)
class Thresholds:
    """Assumption ranges (M_lo, M_hi, N_lo, N_hi) with the derived
    certificate levels M_tilde = max{gamma^-1(M_lo), N_lo} and
    M_hat = min{delta(M_hi), N_hi}; valid iff M_tilde < M_hat."""

    M_lo: float
    M_hi: float
    N_lo: float
    N_hi: float
    M_tilde: float
    M_hat: float

    @property
    def valid(self):
        return self.M_tilde < self.M_hat

    def to_dict(self):
        return {
            "M_lo": self.M_lo,
            "M_hi": self.M_hi,
            "N_lo": self.N_lo,
            "N_hi": self.N_hi,
            "M_tilde": self.M_tilde,
            "M_hat": self.M_hat,
            "valid": self.valid,
        }


def gain_value_at_infinity(g: ScalarGain):
    """Limit value of a gain as s -> infinity: +inf when the samples still
    grow at huge arguments, else the saturation plateau."""
    s = 1e8
    a, b = float(g(s)), float(g(2 * s))
    if b > a + 1e-9 * max(1.0, abs(a)):
        return math.inf
    return b


def construct_sigma(gamma: ScalarGain, delta: ScalarGain, s_max=None,
                    n_nodes=1001) -> TableGain:
    """sigma(s) = (delta(s) + gamma^-1(s)) / 2 as a piecewise-linear table
    on [0, s_max]; sigma(0) = 0 by construction.  Nodes cluster
    quadratically near 0, where the sandwich gap shrinks to zero and the
    interpolation error would otherwise dominate it."""
    if s_max is None:
        s_max = max(gamma.domain_hint[1], delta.domain_hint[1])
    if not (s_max > 0):
        raise LyapunovError("s_max must be positive")
    xs = s_max * np.linspace(0.0, 1.0, n_nodes) ** 2
    ys = np.empty_like(xs)
    ys[0] = 0.0
    inv_prev = 0.0
    for i in range(1, len(xs)):
        try:
            inv = invert(gamma, xs[i], bracket_hint=None)
        except BracketError as e:
            raise LyapunovError(
                f"gamma not invertible at s = {xs[i]:.6g}: {e}"
            ) from e
        inv = max(inv, inv_prev)  # guard against bisection jitter
        inv_prev = inv
        ys[i] = 0.5 * (float(delta(xs[i])) + inv)
    return TableGain(xs, ys, claimed_class=gamma.claimed_class, name="sigma")


@dataclass
class SigmaReport:
    ok: bool
    first_violation: float | None = None
    detail: str = ""
    min_lower_gap: float = math.inf   # min of sigma - delta on the grid
    min_upper_gap: float = math.inf   # min of gamma^-1 - sigma on the grid
    min_slope: float = math.inf


def validate_sigma(sigma, gamma, delta, interval, grid_step) -> SigmaReport:
    """Sample the sandwich delta(s) < sigma(s) < gamma^-1(s) and the
    positivity of sigma' (forward differences) on [a, b], a > 0."""
    a, b = float(interval[0]), float(interval[1])
    if not (0 < a < b):
        raise LyapunovError("need 0 < a < b (strictness only claimed off zero)")
    n = max(2, int(math.ceil((b - a) / grid_step)) + 1)
    grid = np.linspace(a, b, n)
    rep = SigmaReport(ok=True)
    for s in grid:
        sig = float(sigma(s))
        lower = sig - float(delta(s))
        rep.min_lower_gap = min(rep.min_lower_gap, lower)
        if lower <= 0:
            return SigmaReport(
                ok=False, first_violation=float(s),
                detail=f"delta(s) >= sigma(s) at s = {s:.6g}",
                min_lower_gap=lower, min_upper_gap=rep.min_upper_gap,
            )
        # compare in gamma-space to avoid an inner inversion
        upper = s - float(gamma(sig))
        rep.min_upper_gap = min(rep.min_upper_gap, upper)
        if upper <= 0:
            return SigmaReport(
                ok=False, first_violation=float(s),
                detail=f"sigma(s) >= gamma^-1(s) at s = {s:.6g}",
                min_lower_gap=rep.min_lower_gap, min_upper_gap=upper,
            )
    h = grid_step
    for s in grid[:-1]:
        slope = (float(sigma(s + h)) - float(sigma(s))) / h
        rep.min_slope = min(rep.min_slope, slope)
        if slope <= 0:
            return SigmaReport(
                ok=False, first_violation=float(s),
                detail=f"sigma' <= 0 near s = {s:.6g}",
                min_lower_gap=rep.min_lower_gap,
                min_upper_gap=rep.min_upper_gap, min_slope=slope,
            )
    return rep


def merged_U(m: MergedLyapunov, x, z):
    return max(float(m.sigma(m.V(x))), m.W(z))


def compute_thresholds(gamma, delta, M_lo, M_hi, N_lo, N_hi) -> Thresholds:
    """M_tilde = max{gamma^-1(M_lo), N_lo}, M_hat = min{delta(M_hi), N_hi};
    infinite inputs propagate (gamma^-1(inf) = inf for unbounded gamma,
    min with inf drops)."""
    M_lo, M_hi = float(M_lo), float(M_hi)
    N_lo, N_hi = float(N_lo), float(N_hi)
    if not (0 <= M_lo < M_hi and 0 <= N_lo < N_hi):
        raise LyapunovError("need 0 <= lo < hi for both threshold pairs")
    if M_lo == 0.0:
        g_inv = 0.0
    elif math.isinf(M_lo):
        raise LyapunovError("M_lo must be finite")
    else:
        try:
            g_inv = invert(gamma, M_lo)
        except BracketError as e:
            raise LyapunovError(
                f"gamma^-1 undefined at M_lo = {M_lo}: {e}"
            ) from e
    d_hi = gain_value_at_infinity(delta) if math.isinf(M_hi) else float(delta(M_hi))
    return Thresholds(
        M_lo=M_lo, M_hi=M_hi, N_lo=N_lo, N_hi=N_hi,
        M_tilde=max(g_inv, N_lo), M_hat=min(d_hi, N_hi),
    )


def default_taus():
    return 1e-2 * 0.5 ** np.arange(13)


def dini_derivative(phi, direction_field, y, taus=None):
    """Finite surrogate of the Dini derivative of phi at y along
    h = direction_field(y): forward difference quotients at a decreasing
    tau sequence; returns (max over the smallest 6 taus, full sequence)."""
    if taus is None:
        taus = default_taus()
    taus = np.asarray(taus, dtype=float)
    if not (np.all(taus > 0) and np.all(np.diff(taus) < 0)):
        raise LyapunovError("taus must be strictly decreasing and positive")
    y = np.asarray(y, dtype=float)
    h = np.asarray(direction_field(y), dtype=float)
    base = float(phi(y))
    quotients = np.array(
        [(float(phi(y + tau * h)) - base) / tau for tau in taus]
    )
    tail = max(1, len(taus) // 2)
    return float(np.max(quotients[-tail:])), quotients


def sigma_prime(sigma: ScalarGain, t):
    """Central-difference slope of sigma at t, using the table's own grid
    step when sigma is a table."""
    if isinstance(sigma, TableGain):
        h = float(sigma.xs[1] - sigma.xs[0])
    else:
        h = 1e-6 * max(1.0, abs(t))
    lo = max(t - h, 0.0)
    return (float(sigma(t + h)) - float(sigma(lo))) / (t + h - lo)


def decrease_rate_E(m: MergedLyapunov, lambda_x, lambda_z, x, z):
    """E(x, z) = min{sigma'(V(x)) * lambda_x(x), lambda_z(z)}."""
    if lambda_x is None or lambda_z is None:
        raise LyapunovError("both lambda evaluators are required")
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    sp = sigma_prime(m.sigma, m.V(x))
    return min(sp * float(lambda_x(x)), float(lambda_z(z)))


@dataclass
class ImplicationReport:
    """Outcome of sampling one implication V >= gain(W) => D+V <= -lambda."""

    n_samples: int
    n_antecedent: int
    n_violations: int
    worst_margin: float            # max over antecedent samples of D+V + lambda
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return self.n_violations == 0

    @property
    def pass_rate(self):
        if self.n_antecedent == 0:
            return 1.0
        return 1.0 - self.n_violations / self.n_antecedent

    def to_dict(self):
        return {
            "ok": self.ok,
            "n_samples": self.n_samples,
            "n_antecedent": self.n_antecedent,
            "n_violations": self.n_violations,
            "worst_margin": self.worst_margin,
            "pass_rate": self.pass_rate,
            "violations": [list(map(float, v)) for v in self.violations[:20]],
        }


def verify_iss_implication(V: StorageFunction, gain: ScalarGain,
                           other: StorageFunction, fld, samples,
                           own_slice, slack_rel=DEFAULT_SLACK,
                           taus=None) -> ImplicationReport:
    """Check V(x) >= gain(W(z)) => D_f+V(x, z) <= -lambda(x) + slack on the
    given samples (full interconnection states).

    ``own_slice`` selects V's coordinates within a sample; the complement
    belongs to ``other``.  ``fld`` maps the full state to the velocity of
    V's coordinates.  Slack is slack_rel * (1 + |lambda(x)|).
    """
    samples = np.asarray(samples, dtype=float)
    dim = samples.shape[1]
    own_idx = np.arange(dim)[own_slice]
    other_idx = np.setdiff1d(np.arange(dim), own_idx)
    n_ant = 0
    n_bad = 0
    worst = -math.inf
    violations = []
    for y in samples:
        xo = y[own_idx]
        zo = y[other_idx]
        if V(xo) < float(gain(other(zo))):
            continue
        n_ant += 1
        lam = float(V.lam(xo))
        dv, _ = dini_derivative(
            lambda yy: V(yy[own_idx]),
            lambda yy: _embed(np.asarray(fld(yy), dtype=float), own_idx, dim),
            y, taus=taus,
        )
        margin = dv + lam
        worst = max(worst, margin)
        if margin > slack_rel * (1.0 + abs(lam)):
            n_bad += 1
            violations.append(y)
    return ImplicationReport(
        n_samples=len(samples), n_antecedent=n_ant, n_violations=n_bad,
        worst_margin=worst if n_ant else -math.inf, violations=violations,
    )


def _embed(vec, idx, dim):
    out = np.zeros(dim)
    out[idx] = vec
    return out
