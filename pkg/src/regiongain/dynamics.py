"""Interconnected-system integration and empirical stability checks.

Wraps the compiled/stack-machine kernels behind an InterconnectedSystem
type, integrates trajectories with fixed-step RK4 or adaptive RK45, and
runs the ensemble verifications: shell attractivity, global attraction to
a sublevel set, and recurrence detection on a planar region.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .expr import Program
from .regions import RegionSpec, contains, sample

__all__ = [
    "DynamicsError",
    "InterconnectedSystem",
    "Trajectory",
    "integrate",
    "integrate_ensemble",
    "ShellReport",
    "verify_shell_attractivity",
    "GlobalReport",
    "verify_global_attraction",
    "RecurrenceReport",
    "detect_recurrence",
    "find_equilibria",
    "export_trajectory_csv",
    "worker_count",
]

RK45_RTOL = 1e-8
RK45_ATOL = 1e-10
MAX_OUTPUT_ROWS = 100_000


class DynamicsError(Exception):
    pass


def worker_count():
    """Worker cap from REGION_GAIN_THREADS (default 1 = sequential)."""
    raw = os.environ.get("REGION_GAIN_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _stack_programs(programs):
    """Concatenate component programs into the flat (ops, arg, val, starts)
    layout the integrators consume."""
    ops = np.concatenate([p.ops for p in programs])
    arg = np.concatenate([p.arg for p in programs])
    val = np.concatenate([p.val for p in programs])
    starts = np.zeros(len(programs) + 1, dtype=np.int32)
    np.cumsum([len(p.ops) for p in programs], out=starts[1:])
    return (np.ascontiguousarray(ops, dtype=np.int32),
            np.ascontiguousarray(arg, dtype=np.int32),
            np.ascontiguousarray(val, dtype=np.float64),
            np.ascontiguousarray(starts, dtype=np.int32))


class InterconnectedSystem:
    """The closed interconnection y = (x, z), dy/dt = h(y) = (f(y), g(y)).

    ``f_programs`` and ``g_programs`` are compiled expression Programs over
    the shared variable ordering (x1..xn, z1..zm).
    """

    def __init__(self, n, m, f_programs, g_programs,
                 origin_equilibrium=True, name=""):
        if n < 1 or m < 1:
            raise DynamicsError("need n >= 1 and m >= 1")
        if len(f_programs) != n or len(g_programs) != m:
            raise DynamicsError("component count does not match dimensions")
        self.n = int(n)
        self.m = int(m)
        self.f_programs = tuple(f_programs)
        self.g_programs = tuple(g_programs)
        self.name = name
        self._flat = _stack_programs(self.f_programs + self.g_programs)
        if origin_equilibrium:
            h0 = self.h(np.zeros(self.dim))
            if np.max(np.abs(h0)) > 1e-12:
                raise DynamicsError(
                    f"origin is not an equilibrium: h(0) = {h0.tolist()}"
                )

    @property
    def dim(self):
        return self.n + self.m

    def h(self, y):
        """Combined field at a single state."""
        y = np.ascontiguousarray(y, dtype=np.float64)
        progs = self.f_programs + self.g_programs
        return np.array([
            _core.eval_one(p.ops, p.arg, p.val, y) for p in progs
        ])

    def h_many(self, Y):
        """Combined field on rows of an (N, dim) array."""
        Y = np.ascontiguousarray(np.atleast_2d(Y), dtype=np.float64)
        progs = self.f_programs + self.g_programs
        return np.column_stack([
            _core.eval_many(p.ops, p.arg, p.val, Y) for p in progs
        ])

    def f(self, y):
        return self.h(y)[: self.n]

    def g(self, y):
        return self.h(y)[self.n:]


@dataclass
class Trajectory:
    """One integrated solution, sampled at the output stride."""

    times: np.ndarray
    states: np.ndarray
    blew_up: bool
    n_accept: int = 0
    n_reject: int = 0
    U_values: np.ndarray | None = None

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise DynamicsError("times/states length mismatch")
        if len(self.times) and self.times[0] != 0.0:
            raise DynamicsError("trajectories start at t = 0")
        if np.any(np.diff(self.times) <= 0):
            raise DynamicsError("times must be strictly increasing")

    @property
    def terminal(self):
        return self.states[-1]


def integrate(sys: InterconnectedSystem, y0, T, dt=1e-3,
              method="rk45") -> Trajectory:
    """Integrate dy/dt = h(y) from y0 over [0, T].

    rk4 uses the fixed step dt; rk45 adapts steps (rtol 1e-8, atol 1e-10)
    and emits dense output at spacing ~dt.  Integration stops with
    ``blew_up`` set when |y| exceeds the blow-up norm (1e9).
    """
    if T <= 0:
        raise DynamicsError("T must be positive")
    if dt <= 0:
        raise DynamicsError("dt must be positive")
    y0 = np.asarray(y0, dtype=np.float64)
    if y0.shape != (sys.dim,):
        raise DynamicsError(f"y0 must have shape ({sys.dim},)")
    ops, arg, val, starts = sys._flat
    if method == "rk4":
        n_steps = max(1, int(round(T / dt)))
        stride = max(1, n_steps // min(n_steps, MAX_OUTPUT_ROWS))
        times, states, blew_up = _core.rk4(
            ops, arg, val, starts, sys.dim, y0, T, dt, stride
        )
        return Trajectory(np.asarray(times), np.asarray(states), blew_up)
    if method == "rk45":
        n_out = min(MAX_OUTPUT_ROWS, max(100, int(round(T / dt))))
        times, states, n_accept, n_reject, blew_up = _core.rk45(
            ops, arg, val, starts, sys.dim, y0, T,
            RK45_RTOL, RK45_ATOL, n_out,
        )
        return Trajectory(np.asarray(times), np.asarray(states), blew_up,
                          n_accept=n_accept, n_reject=n_reject)
    raise DynamicsError(f"unknown method {method!r}")


def integrate_ensemble(sys, inits, T, dt=1e-3, method="rk45"):
    """Integrate each row of ``inits``; parallelizes across
    REGION_GAIN_THREADS workers, preserving input order."""
    inits = np.atleast_2d(np.asarray(inits, dtype=float))
    workers = worker_count()
    if workers > 1 and len(inits) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(
                lambda y0: integrate(sys, y0, T, dt, method), inits
            ))
    return [integrate(sys, y0, T, dt, method) for y0 in inits]


@dataclass
class ShellReport:
    n_init: int
    n_terminal_failures: int
    n_monotonicity_failures: int
    worst_terminal_U: float
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return self.n_terminal_failures == 0 and \
            self.n_monotonicity_failures == 0

    def to_dict(self):
        return {
            "ok": self.ok,
            "n_init": self.n_init,
            "n_terminal_failures": self.n_terminal_failures,
            "n_monotonicity_failures": self.n_monotonicity_failures,
            "worst_terminal_U": self.worst_terminal_U,
            "failures": [list(map(float, p)) for p in self.failures[:20]],
        }


def verify_shell_attractivity(sys, U, M_tilde, M_hat, box, n_init, T,
                              seed, dt=1e-3, method="rk45") -> ShellReport:
    """Sample initial conditions in the shell {M_tilde <= U <= M_hat},
    integrate to horizon T, and require (a) terminal U <= M_tilde + tol
    with tol = 1e-3 * (M_hat - M_tilde), and (b) U nonincreasing along the
    sampled trajectory (slack 1e-6 per step) while above M_tilde."""
    if not M_tilde < M_hat:
        raise DynamicsError("need M_tilde < M_hat")
    from .regions import shell_region  # local import to avoid cycle noise
    width = M_hat - M_tilde
    tol = 1e-3 * (width if math.isfinite(width) else max(1.0, M_tilde))
    shell_hi = M_hat if math.isfinite(M_hat) else 10.0 * max(1.0, M_tilde)
    shell = shell_region(U, M_tilde, shell_hi, box)
    inits = sample(shell, n_init, seed)
    trajs = integrate_ensemble(sys, inits, T, dt, method)
    n_term = 0
    n_mono = 0
    worst = -math.inf
    failures = []
    for y0, tr in zip(inits, trajs):
        u = U.eval_many(tr.states)
        worst = max(worst, float(u[-1]))
        if tr.blew_up or u[-1] > M_tilde + tol:
            n_term += 1
            failures.append(y0)
            continue
        in_shell = u > M_tilde + tol
        diffs = np.diff(u)
        if np.any(diffs[in_shell[:-1]] > 1e-6 * np.maximum(1.0, u[:-1][in_shell[:-1]])):
            n_mono += 1
            failures.append(y0)
    return ShellReport(
        n_init=n_init, n_terminal_failures=n_term,
        n_monotonicity_failures=n_mono, worst_terminal_U=worst,
        failures=failures,
    )


@dataclass
class GlobalReport:
    n_init: int
    n_failures: int
    n_blowups: int
    worst_terminal_U: float
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return self.n_failures == 0 and self.n_blowups == 0

    def to_dict(self):
        return {
            "ok": self.ok,
            "n_init": self.n_init,
            "n_failures": self.n_failures,
            "n_blowups": self.n_blowups,
            "worst_terminal_U": self.worst_terminal_U,
            "failures": [list(map(float, p)) for p in self.failures[:20]],
        }


def verify_global_attraction(sys, U_g, M_tilde_g, init_box, n_init, T,
                             seed, dt=1e-3, method="rk45") -> GlobalReport:
    """Random initial conditions across ``init_box`` must reach the
    sublevel set {U_g <= M_tilde_g + tol} by the horizon; blow-ups count as
    refutation evidence."""
    from .regions import box_region
    tol = 1e-3 * max(1.0, M_tilde_g)
    inits = sample(box_region(init_box), n_init, seed)
    trajs = integrate_ensemble(sys, inits, T, dt, method)
    n_fail = 0
    n_blow = 0
    worst = -math.inf
    failures = []
    for y0, tr in zip(inits, trajs):
        if tr.blew_up:
            n_blow += 1
            failures.append(y0)
            continue
        u_end = float(U_g.eval_many(tr.states[-1:])[0])
        worst = max(worst, u_end)
        if u_end > M_tilde_g + tol:
            n_fail += 1
            failures.append(y0)
    return GlobalReport(
        n_init=n_init, n_failures=n_fail, n_blowups=n_blow,
        worst_terminal_U=worst, failures=failures,
    )


@dataclass
class RecurrenceReport:
    n_init: int
    n_recurrent: int
    recurrent_inits: list = field(default_factory=list)

    @property
    def ok(self):
        return self.n_recurrent == 0

    def to_dict(self):
        return {
            "ok": self.ok,
            "n_init": self.n_init,
            "n_recurrent": self.n_recurrent,
            "recurrent_inits": [list(map(float, p))
                                for p in self.recurrent_inits[:20]],
        }


def detect_recurrence(sys, gap: RegionSpec, n_init, T, seed, dt=1e-3,
                      eps=1e-3, method="rk45") -> RecurrenceReport:
    """Integrate from gap-region samples; a trajectory is recurrent when,
    while still inside the gap region, it revisits an earlier state within
    eps at a time separation exceeding 10*dt (evidence of a closed
    orbit)."""
    if sys.dim != 2:
        raise DynamicsError("recurrence detection is planar only")
    inits = sample(gap, n_init, seed)
    trajs = integrate_ensemble(sys, inits, T, dt, method)
    recurrent = []
    for y0, tr in zip(inits, trajs):
        inside = np.asarray(gap.pred_many(tr.states), dtype=bool)
        exit_idx = int(np.argmin(inside)) if not inside.all() else len(inside)
        if exit_idx < 3:
            continue
        t = tr.times[:exit_idx]
        Y = tr.states[:exit_idx]
        if _has_near_return(t, Y, eps, 10 * dt):
            recurrent.append(y0)
    return RecurrenceReport(
        n_init=n_init, n_recurrent=len(recurrent), recurrent_inits=recurrent
    )


def _has_near_return(t, Y, eps, min_sep):
    """True when some later state lies within eps of an earlier *segment*
    of the same path, at a time separation above min_sep.  Segment
    distance (rather than sample distance) keeps detection independent of
    the output-grid phase relative to the orbit period."""
    k = len(t)
    if k < 3:
        return False
    seg_a = Y[:-1]
    seg_v = Y[1:] - Y[:-1]
    seg_len2 = np.maximum((seg_v ** 2).sum(axis=1), 1e-300)
    seg_t_end = t[1:]
    p_block = 256
    s_block = 2048
    for j0 in range(0, k, p_block):
        P = Y[j0:j0 + p_block]                     # later points
        tp = t[j0:j0 + p_block]
        for i0 in range(0, k - 1, s_block):
            A = seg_a[i0:i0 + s_block]
            Vv = seg_v[i0:i0 + s_block]
            L2 = seg_len2[i0:i0 + s_block]
            te = seg_t_end[i0:i0 + s_block]
            diff = P[:, None, :] - A[None, :, :]
            proj = np.clip(
                (diff * Vv[None, :, :]).sum(axis=2) / L2[None, :], 0.0, 1.0
            )
            closest = A[None, :, :] + proj[:, :, None] * Vv[None, :, :]
            d2 = ((P[:, None, :] - closest) ** 2).sum(axis=2)
            seps = tp[:, None] - te[None, :]
            if np.any((d2 < eps * eps) & (seps > min_sep)):
                return True
    return False


def find_equilibria(sys: InterconnectedSystem, box, grid=64, tol=1e-6,
                    dedupe_radius=1e-3):
    """Zeros of h inside the box: coarse-grid candidates refined by
    damped Newton iterations with a finite-difference Jacobian, then
    deduplicated.  Returns an (k, dim) array of equilibria."""
    box = [(float(lo), float(hi)) for lo, hi in box]
    axes = [np.linspace(lo, hi, grid) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    mags = np.linalg.norm(sys.h_many(pts), axis=1)
    # candidate = grid point whose |h| is a local minimum among neighbors,
    # cheap surrogate: take every point below the 1e-2 quantile plus the
    # global minimum, then let Newton sort out duplicates
    cutoff = np.quantile(mags, 0.01)
    cands = pts[mags <= max(cutoff, mags.min())]
    found = []
    for y0 in cands:
        y = _newton_refine(sys, y0, tol)
        if y is None:
            continue
        if not all(lo - 1e-9 <= v <= hi + 1e-9
                   for v, (lo, hi) in zip(y, box)):
            continue
        if all(np.linalg.norm(y - f) > dedupe_radius for f in found):
            found.append(y)
    return np.array(found) if found else np.empty((0, sys.dim))


def _newton_refine(sys, y0, tol, max_iter=60):
    y = np.asarray(y0, dtype=float).copy()
    for _ in range(max_iter):
        r = sys.h(y)
        if np.linalg.norm(r) < 1e-14:
            return y
        step = 1e-7 * (1.0 + np.linalg.norm(y))
        J = np.empty((sys.dim, sys.dim))
        for i in range(sys.dim):
            e = np.zeros(sys.dim)
            e[i] = step
            J[:, i] = (sys.h(y + e) - sys.h(y - e)) / (2 * step)
        try:
            delta = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return None
        # damped update for robustness far from the root
        scale = 1.0
        base = np.linalg.norm(r)
        for _ in range(20):
            y_new = y + scale * delta
            if np.linalg.norm(sys.h(y_new)) < base:
                break
            scale *= 0.5
        else:
            return None
        if np.linalg.norm(y_new - y) < tol * 1e-3:
            y = y_new
            break
        y = y_new
    return y if np.linalg.norm(sys.h(y)) < tol else None


def export_trajectory_csv(path, traj: Trajectory, U=None):
    """Write rows (t, y1..yd[, U])."""
    dim = traj.states.shape[1]
    u_vals = traj.U_values
    if u_vals is None and U is not None:
        u_vals = U.eval_many(traj.states)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["t"] + [f"y{k + 1}" for k in range(dim)]
        if u_vals is not None:
            header.append("U")
        writer.writerow(header)
        for i in range(len(traj.times)):
            row = [f"{traj.times[i]:.12g}"] + [
                f"{v:.12g}" for v in traj.states[i]
            ]
            if u_vals is not None:
                row.append(f"{u_vals[i]:.12g}")
            writer.writerow(row)


def ensemble_summary_json(path, reports):
    """Serialize a dict of named report objects (anything with to_dict)."""
    payload = {k: (v.to_dict() if hasattr(v, "to_dict") else v)
               for k, v in reports.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
