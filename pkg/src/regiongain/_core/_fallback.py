"""Pure-python/numpy implementation of the numeric kernels.

Mirrors the API of the compiled ``_speedups`` module: a postfix stack
machine for flattened expression programs plus fixed-step RK4 and adaptive
Dormand-Prince RK45 integrators for systems whose right-hand sides are
stacked programs.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

BLOWUP_NORM = 1e9

# Dormand-Prince 5(4) tableau
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (
    5179 / 57600,
    0.0,
    7571 / 16695,
    393 / 640,
    -92097 / 339200,
    187 / 2100,
    1 / 40,
)


def eval_one(ops, arg, val, x):
    """Run one program on one variable vector; NaN/inf propagate."""
    stack = []
    n = len(ops)
    for i in range(n):
        op = ops[i]
        if op == 0:
            stack.append(val[i])
        elif op == 1:
            stack.append(x[arg[i]])
        elif op == 2:
            stack[-1] = -stack[-1]
        elif op == 3:
            stack[-1] = abs(stack[-1])
        elif op == 4:
            stack[-1] = math.sin(stack[-1]) if math.isfinite(stack[-1]) else math.nan
        elif op == 5:
            stack[-1] = math.cos(stack[-1]) if math.isfinite(stack[-1]) else math.nan
        elif op == 6:
            v = stack[-1]
            try:
                stack[-1] = math.exp(v)
            except OverflowError:
                stack[-1] = math.inf
        elif op == 7:
            v = stack[-1]
            stack[-1] = math.sqrt(v) if v >= 0 else math.nan
        else:
            b = stack.pop()
            a = stack[-1]
            if op == 8:
                stack[-1] = a + b
            elif op == 9:
                stack[-1] = a - b
            elif op == 10:
                stack[-1] = a * b
            elif op == 11:
                stack[-1] = a / b if b != 0.0 else math.nan
            elif op == 12:
                try:
                    stack[-1] = math.pow(a, b)
                except (ValueError, OverflowError):
                    stack[-1] = math.nan
            elif op == 13:
                stack[-1] = min(a, b)
            elif op == 14:
                stack[-1] = max(a, b)
    return stack[-1]


def eval_many(ops, arg, val, X):
    """Vectorized program evaluation on rows of X (shape (N, n_vars))."""
    X = np.asarray(X, dtype=np.float64)
    n_rows = X.shape[0]
    stack = []
    with np.errstate(all="ignore"):
        for i in range(len(ops)):
            op = ops[i]
            if op == 0:
                stack.append(np.full(n_rows, val[i]))
            elif op == 1:
                stack.append(X[:, arg[i]].copy())
            elif op == 2:
                stack[-1] = -stack[-1]
            elif op == 3:
                stack[-1] = np.abs(stack[-1])
            elif op == 4:
                stack[-1] = np.sin(stack[-1])
            elif op == 5:
                stack[-1] = np.cos(stack[-1])
            elif op == 6:
                stack[-1] = np.exp(stack[-1])
            elif op == 7:
                stack[-1] = np.where(stack[-1] >= 0, np.sqrt(np.abs(stack[-1])), np.nan)
            else:
                b = stack.pop()
                a = stack[-1]
                if op == 8:
                    stack[-1] = a + b
                elif op == 9:
                    stack[-1] = a - b
                elif op == 10:
                    stack[-1] = a * b
                elif op == 11:
                    stack[-1] = np.where(b != 0, a / np.where(b != 0, b, 1.0), np.nan)
                elif op == 12:
                    stack[-1] = np.power(a, b)
                elif op == 13:
                    stack[-1] = np.minimum(a, b)
                elif op == 14:
                    stack[-1] = np.maximum(a, b)
    return stack[-1]


def _field(ops, arg, val, starts, dim, y, out):
    for k in range(dim):
        lo, hi = starts[k], starts[k + 1]
        out[k] = eval_one(ops[lo:hi], arg[lo:hi], val[lo:hi], y)
    return out


def _norm(y):
    return math.sqrt(sum(v * v for v in y))


def rk4(ops, arg, val, starts, dim, y0, T, dt, stride):
    """Classic fixed-step RK4.  Returns (times, states, blew_up)."""
    n_steps = max(1, int(round(T / dt)))
    y = [float(v) for v in y0]
    k1 = [0.0] * dim
    k2 = [0.0] * dim
    k3 = [0.0] * dim
    k4 = [0.0] * dim
    yt = [0.0] * dim
    times = [0.0]
    states = [list(y)]
    blew_up = False
    t = 0.0
    for step in range(1, n_steps + 1):
        _field(ops, arg, val, starts, dim, y, k1)
        for k in range(dim):
            yt[k] = y[k] + 0.5 * dt * k1[k]
        _field(ops, arg, val, starts, dim, yt, k2)
        for k in range(dim):
            yt[k] = y[k] + 0.5 * dt * k2[k]
        _field(ops, arg, val, starts, dim, yt, k3)
        for k in range(dim):
            yt[k] = y[k] + dt * k3[k]
        _field(ops, arg, val, starts, dim, yt, k4)
        for k in range(dim):
            y[k] += dt / 6.0 * (k1[k] + 2 * k2[k] + 2 * k3[k] + k4[k])
        t = step * dt
        bad = any(not math.isfinite(v) for v in y)
        if bad or _norm(y) > BLOWUP_NORM:
            blew_up = True
            times.append(t)
            states.append(list(y))
            break
        if step % stride == 0 or step == n_steps:
            times.append(t)
            states.append(list(y))
    return (
        np.asarray(times),
        np.asarray(states),
        blew_up,
    )


def rk45(ops, arg, val, starts, dim, y0, T, rtol, atol, n_out, max_steps=1_000_000):
    """Adaptive Dormand-Prince 5(4) with cubic-Hermite dense output.

    Returns (times, states, n_accept, n_reject, blew_up).
    """
    y = [float(v) for v in y0]
    t = 0.0
    f0 = _field(ops, arg, val, starts, dim, y, [0.0] * dim)
    # initial step heuristic
    scale = max(_norm(y), 1.0)
    h = min(T, 0.01 * scale / max(_norm(f0), 1e-8))

    out_times = np.linspace(0.0, T, n_out + 1)
    out_states = np.empty((n_out + 1, dim))
    out_states[0] = y
    next_out = 1

    ks = [[0.0] * dim for _ in range(7)]
    ks[0] = list(f0)
    yt = [0.0] * dim
    y5 = [0.0] * dim
    n_accept = 0
    n_reject = 0
    blew_up = False
    steps = 0
    while t < T and next_out <= n_out:
        steps += 1
        if steps > max_steps:
            raise RuntimeError("rk45: step budget exhausted")
        if h < 1e-14 * max(1.0, t):
            if _norm(y) > 1e6:
                # forced-to-zero steps while the state explodes: a
                # finite-time blow-up, not a tolerance problem
                blew_up = True
                break
            raise RuntimeError(f"rk45: step underflow at t={t}")
        h = min(h, T - t)
        for s in range(1, 7):
            a = _DP_A[s]
            for k in range(dim):
                acc = 0.0
                for j in range(s):
                    acc += a[j] * ks[j][k]
                yt[k] = y[k] + h * acc
            _field(ops, arg, val, starts, dim, yt, ks[s])
        err = 0.0
        ok = True
        for k in range(dim):
            acc5 = 0.0
            acc4 = 0.0
            for j in range(7):
                acc5 += _DP_B5[j] * ks[j][k]
                acc4 += _DP_B4[j] * ks[j][k]
            y5[k] = y[k] + h * acc5
            if not math.isfinite(y5[k]):
                ok = False
                break
            sc = atol + rtol * max(abs(y[k]), abs(y5[k]))
            e = h * (acc5 - acc4) / sc
            err += e * e
        err = math.sqrt(err / dim) if ok else math.inf
        if err <= 1.0:
            t_new = t + h
            # dense output: cubic Hermite on [t, t_new]
            while next_out <= n_out and out_times[next_out] <= t_new + 1e-15:
                tau = (out_times[next_out] - t) / h if h > 0 else 0.0
                h00 = (1 + 2 * tau) * (1 - tau) ** 2
                h10 = tau * (1 - tau) ** 2
                h01 = tau * tau * (3 - 2 * tau)
                h11 = tau * tau * (tau - 1)
                for k in range(dim):
                    out_states[next_out, k] = (
                        h00 * y[k]
                        + h10 * h * ks[0][k]
                        + h01 * y5[k]
                        + h11 * h * ks[6][k]
                    )
                next_out += 1
            t = t_new
            y = list(y5)
            ks[0] = list(ks[6])  # FSAL
            n_accept += 1
            if _norm(y) > BLOWUP_NORM:
                blew_up = True
                break
            if err > 0:
                h *= min(5.0, max(0.2, 0.9 * err ** -0.2))
            else:
                h *= 5.0
        else:
            n_reject += 1
            h *= max(0.2, 0.9 * err ** -0.2) if math.isfinite(err) else 0.2
    if blew_up or next_out <= n_out:
        out_times = out_times[:next_out]
        out_states = out_states[:next_out]
        if blew_up:
            out_times = np.append(out_times, t)
            out_states = np.vstack([out_states, y])
    return out_times, out_states, n_accept, n_reject, blew_up
