"""State-space regions: membership predicates, seeded sampling, the
inclusion-chain check, and planar level-curve tracing.

Regions are predicates over concatenated states y = (x, z) paired with a
finite bounding box used for sampling.  Level curves of planar scalar
fields are extracted by marching squares and returned as closed polylines
with outward normals for flux integration.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RegionError",
    "EmptyRegionError",
    "OpenContourError",
    "NoContourError",
    "RegionSpec",
    "box_region",
    "s_set_region",
    "sublevel_region",
    "shell_region",
    "gap_region",
    "contains",
    "sample",
    "InclusionReport",
    "check_inclusion_chain",
    "LevelCurve",
    "trace_level_curve",
    "export_polyline_csv",
    "find_sublevel_box",
]

MAX_PROPOSALS = 10_000_000
FAILOVER_RATE = 1e-4


class RegionError(Exception):
    pass


class EmptyRegionError(RegionError):
    """No accepted sample within the proposal budget."""


class OpenContourError(RegionError):
    """The level set exits the tracing box; enlarge the box."""


class NoContourError(RegionError):
    """No crossing of the level inside the box."""


@dataclass(frozen=True)
class RegionSpec:
    """A named pointwise-decidable region.

    ``pred_many`` maps an (N, d) array of states to a boolean mask;
    ``box`` is a per-axis list of [lo, hi] used for sampling proposals.
    """

    kind: str
    pred_many: callable
    box: tuple
    label: str = ""

    @property
    def dim(self):
        return len(self.box)


def _as_box(box):
    out = tuple((float(lo), float(hi)) for lo, hi in box)
    for lo, hi in out:
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise RegionError(f"bad box axis [{lo}, {hi}]")
    return out


def box_region(box, label="box") -> RegionSpec:
    box = _as_box(box)
    return RegionSpec(
        "box", lambda Y: np.ones(len(np.atleast_2d(Y)), dtype=bool), box, label
    )


def s_set_region(V, W, M_lo, M_hi, N_lo, N_hi, box, label="S") -> RegionSpec:
    """Two-branch union of Assumption-style bounds:
    {M_lo <= V <= M_hi, W <= N_hi} union {V <= M_hi, N_lo <= W <= N_hi}."""
    box = _as_box(box)
    n = V.dimension

    def pred(Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        v = V.eval_many(Y[:, :n])
        w = W.eval_many(Y[:, n:])
        branch1 = (M_lo <= v) & (v <= M_hi) & (w <= N_hi)
        branch2 = (v <= M_hi) & (N_lo <= w) & (w <= N_hi)
        return branch1 | branch2

    return RegionSpec("S_set", pred, box, label)


def sublevel_region(U, c, box, label="") -> RegionSpec:
    box = _as_box(box)
    return RegionSpec(
        "sublevel_U",
        lambda Y: U.eval_many(np.atleast_2d(np.asarray(Y, dtype=float))) <= c,
        box, label or f"U<={c:g}",
    )


def shell_region(U, lo, hi, box, label="") -> RegionSpec:
    if not lo < hi:
        raise EmptyRegionError(f"shell [{lo}, {hi}] has no interior")
    box = _as_box(box)

    def pred(Y):
        u = U.eval_many(np.atleast_2d(np.asarray(Y, dtype=float)))
        return (lo <= u) & (u <= hi)

    return RegionSpec("shell_U", pred, box, label or f"{lo:g}<=U<={hi:g}")


def gap_region(U_g, M_tilde_g, U_l, M_hat_l, box, label="R") -> RegionSpec:
    """Closure of the global estimate minus the local one:
    U_g <= M_tilde_g AND U_l >= M_hat_l (non-strict on both sides)."""
    box = _as_box(box)

    def pred(Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return (U_g.eval_many(Y) <= M_tilde_g) & (U_l.eval_many(Y) >= M_hat_l)

    return RegionSpec("gap_R", pred, box, label)


def contains(r: RegionSpec, y) -> bool:
    y = np.asarray(y, dtype=float).reshape(1, -1)
    return bool(np.asarray(r.pred_many(y)).reshape(-1)[0])


def _halton(index, base):
    out = 0.0
    f = 1.0
    i = index
    while i > 0:
        f /= base
        out += f * (i % base)
        i //= base
    return out


_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def _halton_block(start, count, dim):
    pts = np.empty((count, dim))
    for k in range(count):
        for d in range(dim):
            pts[k, d] = _halton(start + k + 1, _PRIMES[d % len(_PRIMES)])
    return pts


def sample(r: RegionSpec, n, seed):
    """Rejection-sample n points uniformly from the box restricted to the
    region.  Deterministic per (region, n, seed); fails over to a Halton
    low-discrepancy sweep when the acceptance rate drops below 1e-4 and
    raises EmptyRegionError after 1e7 fruitless proposals."""
    if n == 0:
        return np.empty((0, r.dim))
    rng = np.random.default_rng(seed)
    lo = np.array([a for a, _ in r.box])
    hi = np.array([b for _, b in r.box])
    accepted = []
    got = 0
    proposed = 0
    batch = max(1024, 4 * n)
    halton_cursor = 0
    use_halton = False
    while got < n:
        if proposed >= MAX_PROPOSALS:
            raise EmptyRegionError(
                f"region {r.label or r.kind}: no acceptance in "
                f"{MAX_PROPOSALS} proposals (got {got}/{n})"
            )
        if use_halton:
            unit = _halton_block(halton_cursor, batch, r.dim)
            halton_cursor += batch
        else:
            unit = rng.random((batch, r.dim))
        pts = lo + unit * (hi - lo)
        mask = np.asarray(r.pred_many(pts), dtype=bool)
        proposed += batch
        if mask.any():
            accepted.append(pts[mask])
            got += int(mask.sum())
        if not use_halton and proposed >= 100_000 and got < FAILOVER_RATE * proposed:
            use_halton = True
    return np.vstack(accepted)[:n]


@dataclass
class InclusionReport:
    """Sampled verification of the three-set inclusion chain."""

    n_samples: int
    inner_violations: int          # (V<=M_lo) x (W<=N_lo) not inside U<=M_tilde
    middle_violations: int         # U<=M_tilde not inside U<=M_hat
    outer_violations: int          # U<=M_hat not inside (V<=M_hi) x (W<=N_hi)
    worst_inner_margin: float      # max U - M_tilde over inner samples
    worst_outer_margin: float      # max of (V-M_hi, W-N_hi) over outer samples
    counterexamples: list = field(default_factory=list)

    @property
    def ok(self):
        return (self.inner_violations == 0 and self.middle_violations == 0
                and self.outer_violations == 0)

    def to_dict(self):
        return {
            "ok": self.ok,
            "n_samples": self.n_samples,
            "inner_violations": self.inner_violations,
            "middle_violations": self.middle_violations,
            "outer_violations": self.outer_violations,
            "worst_inner_margin": self.worst_inner_margin,
            "worst_outer_margin": self.worst_outer_margin,
            "counterexamples": [list(map(float, c))
                                for c in self.counterexamples[:20]],
        }


def check_inclusion_chain(th, V, W, U, box, n_samples, seed) -> InclusionReport:
    """Sample each smaller set of the chain
    (V<=M_lo x W<=N_lo) c (U<=M_tilde) c (U<=M_hat) c (V<=M_hi x W<=N_hi)
    and assert membership in the next larger set."""
    if not th.valid:
        raise RegionError("thresholds invalid (M_tilde >= M_hat)")
    n = V.dimension
    box = _as_box(box)

    def product_pred(Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return (V.eval_many(Y[:, :n]) <= th.M_lo) & \
               (W.eval_many(Y[:, n:]) <= th.N_lo)

    counterexamples = []

    # inner: product of small sublevels -> U <= M_tilde
    inner_bad = 0
    worst_inner = -math.inf
    if th.M_lo > 0 or th.N_lo > 0:
        inner = RegionSpec("box", product_pred, box, "product-lo")
        pts = sample(inner, n_samples, seed)
        u = U.eval_many(pts)
        worst_inner = float(np.max(u - th.M_tilde))
        bad = u > th.M_tilde
        inner_bad = int(bad.sum())
        counterexamples += [p for p in pts[bad][:5]]
    else:
        # the inner product set is the origin; check it directly
        origin = np.zeros((1, len(box)))
        u0 = float(U.eval_many(origin)[0])
        worst_inner = u0 - th.M_tilde
        if u0 > th.M_tilde:
            inner_bad = 1
            counterexamples.append(origin[0])

    # middle: U <= M_tilde -> U <= M_hat
    middle_bad = 0
    if th.M_tilde > 0:
        mid = sublevel_region(U, th.M_tilde, box)
        pts = sample(mid, n_samples, seed + 1)
        u = U.eval_many(pts)
        bad = u > th.M_hat
        middle_bad = int(bad.sum())
        counterexamples += [p for p in pts[bad][:5]]
    else:
        # {U <= 0} is the origin for positive-definite U
        origin = np.zeros((1, len(box)))
        if float(U.eval_many(origin)[0]) > th.M_hat:
            middle_bad = 1
            counterexamples.append(origin[0])

    # outer: U <= M_hat -> product of large sublevels
    outer = sublevel_region(U, min(th.M_hat, np.inf), box)
    pts = sample(outer, n_samples, seed + 2)
    v = V.eval_many(pts[:, :n])
    w = W.eval_many(pts[:, n:])
    margins = np.maximum(v - th.M_hi, w - th.N_hi)
    worst_outer = float(np.max(margins))
    bad = margins > 0
    outer_bad = int(bad.sum())
    counterexamples += [p for p in pts[bad][:5]]

    return InclusionReport(
        n_samples=n_samples,
        inner_violations=inner_bad,
        middle_violations=middle_bad,
        outer_violations=outer_bad,
        worst_inner_margin=worst_inner,
        worst_outer_margin=worst_outer,
        counterexamples=counterexamples,
    )


@dataclass
class LevelCurve:
    """Closed polyline on a planar level set, counterclockwise, with unit
    outward normals per vertex."""

    vertices: np.ndarray      # (K, 2)
    normals: np.ndarray       # (K, 2)
    level: float

    @property
    def area(self):
        """Shoelace area (positive for counterclockwise orientation)."""
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(
            np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        )

    @property
    def perimeter(self):
        d = np.diff(np.vstack([self.vertices, self.vertices[:1]]), axis=0)
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def _grid_field(U_many, box, nx, ny):
    x = np.linspace(box[0][0], box[0][1], nx + 1)
    y = np.linspace(box[1][0], box[1][1], ny + 1)
    XX, YY = np.meshgrid(x, y, indexing="ij")
    pts = np.column_stack([XX.ravel(), YY.ravel()])
    F = np.asarray(U_many(pts), dtype=float).reshape(nx + 1, ny + 1)
    return x, y, F


def trace_level_curve(U_many, level, box, step=None, grid=512):
    """Marching-squares extraction of {U = level} inside the box.

    ``U_many`` maps an (N, 2) array to N values.  Returns the list of
    closed LevelCurves sorted by descending enclosed area.  Raises
    NoContourError when the level is never crossed and OpenContourError
    when a contour exits the box.
    """
    box = _as_box(box)
    if len(box) != 2:
        raise RegionError("level-curve tracing is planar only")
    if step is not None:
        nx = max(8, int(math.ceil((box[0][1] - box[0][0]) / step)))
        ny = max(8, int(math.ceil((box[1][1] - box[1][0]) / step)))
    else:
        nx = ny = grid
    xg, yg, F = _grid_field(U_many, box, nx, ny)
    F = F - level
    # nudge exact zeros so every crossing is transversal on the grid
    tiny = 1e-12 * max(1.0, abs(level))
    F[F == 0.0] = tiny
    inside = F < 0
    if not inside.any() or inside.all():
        raise NoContourError(f"level {level} not crossed inside the box")

    # crossing points on grid edges, keyed by (i, j, 'h'|'v')
    cross = {}

    def h_edge(i, j):
        key = (i, j, "h")
        if key not in cross:
            f0, f1 = F[i, j], F[i + 1, j]
            t = f0 / (f0 - f1)
            cross[key] = (xg[i] + t * (xg[i + 1] - xg[i]), yg[j])
        return key

    def v_edge(i, j):
        key = (i, j, "v")
        if key not in cross:
            f0, f1 = F[i, j], F[i, j + 1]
            t = f0 / (f0 - f1)
            cross[key] = (xg[i], yg[j] + t * (yg[j + 1] - yg[j]))
        return key

    adjacency = {}

    def link(a, b):
        adjacency.setdefault(a, []).append(b)
        adjacency.setdefault(b, []).append(a)

    for i in range(nx):
        for j in range(ny):
            c = (int(inside[i, j]) | (int(inside[i + 1, j]) << 1)
                 | (int(inside[i + 1, j + 1]) << 2)
                 | (int(inside[i, j + 1]) << 3))
            if c in (0, 15):
                continue
            bottom = lambda: h_edge(i, j)
            top = lambda: h_edge(i, j + 1)
            left = lambda: v_edge(i, j)
            right = lambda: v_edge(i + 1, j)
            if c in (1, 14):
                link(left(), bottom())
            elif c in (2, 13):
                link(bottom(), right())
            elif c in (3, 12):
                link(left(), right())
            elif c in (4, 11):
                link(right(), top())
            elif c in (6, 9):
                link(bottom(), top())
            elif c in (7, 8):
                link(left(), top())
            elif c in (5, 10):
                center_inside = (F[i, j] + F[i + 1, j] + F[i, j + 1]
                                 + F[i + 1, j + 1]) < 0
                if (c == 5) == center_inside:
                    link(left(), top())
                    link(bottom(), right())
                else:
                    link(left(), bottom())
                    link(right(), top())

    if not adjacency:
        raise NoContourError(f"level {level} not crossed inside the box")

    # stitch edges into polylines
    visited = set()
    loops = []
    for start in adjacency:
        if start in visited:
            continue
        if len(adjacency[start]) != 2:
            raise OpenContourError(
                "contour exits the tracing box; enlarge the box"
            )
        loop = [start]
        visited.add(start)
        prev, cur = None, start
        while True:
            nxts = [k for k in adjacency[cur] if k != prev]
            if not nxts:
                raise OpenContourError(
                    "contour exits the tracing box; enlarge the box"
                )
            nxt = nxts[0]
            if nxt == start:
                break
            if nxt in visited:
                # defensive: merge point, treat as closed here
                break
            loop.append(nxt)
            visited.add(nxt)
            prev, cur = cur, nxt
        loops.append(loop)

    dx = xg[1] - xg[0]
    dy = yg[1] - yg[0]
    eps = 0.5 * min(dx, dy)
    curves = []
    for loop in loops:
        if len(loop) < 3:
            continue
        verts = np.array([cross[k] for k in loop])
        # counterclockwise orientation
        area2 = np.sum(verts[:, 0] * np.roll(verts[:, 1], -1)
                       - np.roll(verts[:, 0], -1) * verts[:, 1])
        if area2 < 0:
            verts = verts[::-1]
        # outward normal = normalized finite-difference gradient of U
        plus_x = verts + [eps, 0.0]
        minus_x = verts - [eps, 0.0]
        plus_y = verts + [0.0, eps]
        minus_y = verts - [0.0, eps]
        gx = (np.asarray(U_many(plus_x)) - np.asarray(U_many(minus_x))) / (2 * eps)
        gy = (np.asarray(U_many(plus_y)) - np.asarray(U_many(minus_y))) / (2 * eps)
        mag = np.hypot(gx, gy)
        mag[mag < 1e-30] = 1.0
        normals = np.column_stack([gx / mag, gy / mag])
        curves.append(LevelCurve(vertices=verts, normals=normals,
                                 level=float(level)))
    if not curves:
        raise NoContourError(f"no usable contour at level {level}")
    curves.sort(key=lambda c: abs(c.area), reverse=True)
    return curves


def export_polyline_csv(path, curve: LevelCurve):
    """Write a curve as rows (s_index, y1, y2, n1, n2)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s_index", "y1", "y2", "n1", "n2"])
        for k, (v, nrm) in enumerate(zip(curve.vertices, curve.normals)):
            writer.writerow([k, f"{v[0]:.12g}", f"{v[1]:.12g}",
                             f"{nrm[0]:.12g}", f"{nrm[1]:.12g}"])


def find_sublevel_box(U_many, c, dim, start_halfwidth=1.0, max_doublings=40):
    """Smallest doubling box [-h, h]^dim whose boundary lies strictly above
    level c, so that the sublevel set {U <= c} is contained inside
    (assuming properness).  Raises RegionError when no such box is found."""
    h = float(start_halfwidth)
    for _ in range(max_doublings):
        faces = []
        grid = np.linspace(-h, h, 17)
        for axis in range(dim):
            for side in (-h, h):
                mesh = np.meshgrid(*([grid] * (dim - 1)), indexing="ij") \
                    if dim > 1 else [np.zeros(1)]
                pts = np.column_stack([m.ravel() for m in mesh]) \
                    if dim > 1 else np.zeros((1, 0))
                face = np.insert(pts, axis, side, axis=1)
                faces.append(face)
        boundary = np.vstack(faces)
        if np.min(np.asarray(U_many(boundary))) > c:
            return tuple((-h, h) for _ in range(dim))
        h *= 2.0
    raise RegionError(f"no box with boundary above level {c} found")
