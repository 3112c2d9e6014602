"""Class-K gain algebra.

Gains are nonnegative scalar functions of a nonnegative scalar: comparison
gains, their running-max envelopes, compositions, numeric inverses, the
small-gain scan over intervals and bi-limit ratio probes.  All objects are
immutable after construction and safe to evaluate concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GainError",
    "BracketError",
    "ScalarGain",
    "TableGain",
    "running_max_envelope",
    "compose",
    "invert",
    "scan_small_gain",
    "bilimit_ratios",
    "BilimitReport",
]

INVERT_TOL = 1e-10
SCAN_REFINE_WIDTH = 1e-8


class GainError(Exception):
    pass


class BracketError(GainError):
    """The target value is not attained on any expandable bracket (for
    instance a class-K gain saturating below the requested value)."""


class ScalarGain:
    """A gain s >= 0 -> g(s) >= 0 with monotonicity metadata.

    ``claimed_class`` is one of "K", "Kinf", "PD" (continuous positive
    definite).  The claim is checked on samples via :meth:`check_basic`,
    not proven.
    """

    def __init__(self, fn, claimed_class="K", domain_hint=(0.0, 10.0), name=""):
        self._fn = fn
        self.claimed_class = claimed_class
        self.domain_hint = (float(domain_hint[0]), float(domain_hint[1]))
        self.name = name

    def __call__(self, s):
        return self._fn(s)

    def __repr__(self):
        label = self.name or "anonymous"
        return f"ScalarGain({label}, class={self.claimed_class})"

    def check_basic(self, n_grid=201):
        """Sampled invariant check: vanishes at zero, nondecreasing for
        class K/Kinf, unbounded probe for Kinf.  Returns a list of
        violation strings (empty if clean)."""
        problems = []
        if abs(float(self(0.0))) > 1e-12:
            problems.append(f"g(0) = {float(self(0.0))!r} != 0")
        lo, hi = self.domain_hint
        grid = np.linspace(max(lo, 0.0), hi, n_grid)
        vals = np.asarray(self(grid), dtype=float)
        if not np.all(np.isfinite(vals)):
            problems.append("non-finite value on the domain grid")
        if (vals < -1e-12).any():
            problems.append("negative value on the domain grid")
        if self.claimed_class in ("K", "Kinf"):
            drops = np.diff(vals) < -1e-10 * np.maximum(1.0, np.abs(vals[:-1]))
            if drops.any():
                i = int(np.argmax(drops))
                problems.append(
                    f"decreasing near s = {grid[i]:.6g} despite class-K claim"
                )
        if self.claimed_class == "Kinf":
            if not float(self(hi)) > float(self(hi / 2)):
                problems.append("no growth between s_max/2 and s_max (Kinf claim)")
        return problems


class TableGain(ScalarGain):
    """Monotone piecewise-linear gain backed by a node table.

    Linear interpolation between nodes; linear extrapolation from the last
    two nodes beyond the table (slope zero tables extrapolate flat).
    """

    def __init__(self, xs, ys, claimed_class="K", name=""):
        xs = np.ascontiguousarray(xs, dtype=float)
        ys = np.ascontiguousarray(ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or len(xs) < 2:
            raise GainError("table needs matching 1-d node arrays, >= 2 nodes")
        if not np.all(np.diff(xs) > 0):
            raise GainError("table abscissae must be strictly increasing")
        if not np.all(np.isfinite(ys)):
            raise GainError("non-finite table ordinate")
        self.xs = xs
        self.ys = ys
        self._slope_hi = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        super().__init__(
            self._eval, claimed_class=claimed_class,
            domain_hint=(float(xs[0]), float(xs[-1])), name=name,
        )

    def _eval(self, s):
        s = np.asarray(s, dtype=float)
        out = np.interp(s, self.xs, self.ys)
        beyond = s > self.xs[-1]
        if np.any(beyond):
            out = np.where(
                beyond, self.ys[-1] + self._slope_hi * (s - self.xs[-1]), out
            )
        return float(out) if out.ndim == 0 else out


def running_max_envelope(base, s_max, grid_step=None, name="") -> TableGain:
    """Monotone envelope s -> max{|base(r)| : 0 <= r <= s} as a table.

    The grid covers [0, s_max] at ``grid_step`` (default s_max/1000).
    """
    if s_max <= 0:
        raise GainError("s_max must be positive")
    if grid_step is None:
        grid_step = 1e-3 * s_max
    if grid_step <= 0:
        raise GainError("grid_step must be positive")
    n = int(math.ceil(s_max / grid_step)) + 1
    xs = np.linspace(0.0, s_max, n)
    vals = np.abs(np.asarray(base(xs), dtype=float))
    if not np.all(np.isfinite(vals)):
        bad = xs[~np.isfinite(vals)][0]
        raise GainError(f"base gain non-finite at s = {bad:.6g}")
    ys = np.maximum.accumulate(vals)
    return TableGain(xs, ys, claimed_class="K", name=name)


def compose(outer: ScalarGain, inner: ScalarGain) -> ScalarGain:
    """s -> outer(inner(s))."""
    cls = "Kinf" if outer.claimed_class == inner.claimed_class == "Kinf" else "K"
    return ScalarGain(
        lambda s: outer(inner(s)),
        claimed_class=cls,
        domain_hint=inner.domain_hint,
        name=f"{outer.name or 'outer'}.{inner.name or 'inner'}",
    )


def invert(g: ScalarGain, y, bracket_hint=None, tol=INVERT_TOL):
    """Solve g(s) = y by bisection for a nondecreasing gain.

    The bracket is expanded by doubling the upper end (up to 2**60 times
    the hint) until g straddles y.  Returns s with
    |g(s) - y| <= tol * max(1, y).  Raises BracketError when y is outside
    the attainable range (e.g. saturated class-K gain), GainError when a
    decreasing sample pair is detected inside the bracket.
    """
    y = float(y)
    if math.isinf(y):
        if g.claimed_class == "Kinf":
            return math.inf
        raise BracketError(f"gain {g.name or g!r} cannot attain +inf")
    if y < 0:
        raise BracketError("negative target for a nonnegative gain")
    if bracket_hint is None:
        lo, hi = 0.0, max(g.domain_hint[1], 1.0)
    else:
        lo, hi = float(bracket_hint[0]), float(bracket_hint[1])
        if hi <= lo:
            raise GainError("empty bracket hint")
    target_tol = tol * max(1.0, y)
    glo = float(g(lo))
    if glo >= y:
        if abs(glo - y) <= target_tol:
            return lo
        raise BracketError(f"g({lo}) = {glo} already exceeds target {y}")
    ghi = float(g(hi))
    doublings = 0
    while ghi < y:
        if doublings >= 60:
            raise BracketError(
                f"target {y} unattained after bracket expansion to {hi} "
                f"(gain saturates near {ghi})"
            )
        new_hi = hi * 2 if hi > 0 else 1.0
        new_ghi = float(g(new_hi))
        if new_ghi < ghi - 1e-12 * max(1.0, abs(ghi)):
            raise GainError(
                f"non-monotone samples: g({hi}) = {ghi} > g({new_hi}) = {new_ghi}"
            )
        hi, ghi = new_hi, new_ghi
        doublings += 1
    # predicate bisection for inf{s : g(s) >= y}; resolving the infimum
    # (not just any tolerance hit) keeps inverses of plateaued envelopes
    # pinned to the left edge of the plateau
    for _ in range(200):
        if hi - lo <= 1e-13 * max(1.0, abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if float(g(mid)) >= y:
            hi = mid
        else:
            lo = mid
    if abs(float(g(hi)) - y) > max(target_tol, 1e-6 * max(1.0, y)):
        raise BracketError(f"bisection failed to attain {y} (jump in g?)")
    return hi


def scan_small_gain(gamma, delta, interval, grid_step):
    """Partition [a, b] into maximal subintervals where gamma(delta(s)) < s
    strictly holds or fails on the sample grid.

    Returns a list of ((lo, hi), verdict) with verdict in {"holds",
    "fails"}; regime-change endpoints are refined by bisection to
    ~1e-8 width.  s = 0 is excluded from judgment (the condition is only
    claimed away from zero); ties within 1e-12 count as "fails" since the
    inequality is strict.
    """
    a, b = float(interval[0]), float(interval[1])
    if not (0 <= a < b):
        raise GainError("need 0 <= a < b")
    if grid_step <= 0:
        raise GainError("grid_step must be positive")

    def margin(s):
        return float(gamma(delta(s))) - s  # < 0 means "holds"

    def holds(s):
        return margin(s) < -1e-12

    n = int(math.ceil((b - a) / grid_step)) + 1
    grid = np.linspace(a, b, max(n, 2))
    if grid[0] == 0.0:
        # s = 0 is excluded from judgment; judge the first cell at its midpoint
        grid[0] = grid[1] / 2
    flags = [holds(s) for s in grid]

    def refine(lo, hi, flag_lo):
        while hi - lo > SCAN_REFINE_WIDTH:
            mid = 0.5 * (lo + hi)
            if holds(mid) == flag_lo:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    pieces = []
    start = a
    for i in range(1, len(grid)):
        if flags[i] != flags[i - 1]:
            cut = refine(grid[i - 1], grid[i], flags[i - 1])
            pieces.append(((start, cut), "holds" if flags[i - 1] else "fails"))
            start = cut
    pieces.append(((start, b), "holds" if flags[-1] else "fails"))
    return pieces


@dataclass(frozen=True)
class BilimitReport:
    """Probe-based surrogate for the bi-limit small-gain ratios."""

    zero_probes: np.ndarray
    zero_ratios: np.ndarray
    infinity_probes: np.ndarray
    infinity_ratios: np.ndarray
    worst_zero_ratio: float = field(default=math.nan)
    worst_infinity_ratio: float = field(default=math.nan)


def bilimit_ratios(gamma, delta, s_small, s_large, n_probes=9) -> BilimitReport:
    """Evaluate gamma(delta(s))/s on geometric probe sequences
    {s_small * 2^-k} and {s_large * 2^k}, k = 0..n_probes-1.

    The caller compares the worst (largest) ratios against 1.
    """
    if not (0 < s_small < s_large):
        raise GainError("need 0 < s_small < s_large")
    zp = s_small * 0.5 ** np.arange(n_probes)
    ip = s_large * 2.0 ** np.arange(n_probes)
    zr = np.array([float(gamma(delta(s))) / s for s in zp])
    ir = np.array([float(gamma(delta(s))) / s for s in ip])
    return BilimitReport(
        zero_probes=zp,
        zero_ratios=zr,
        infinity_probes=ip,
        infinity_ratios=ir,
        worst_zero_ratio=float(zr.max()),
        worst_infinity_ratio=float(ir.max()),
    )
