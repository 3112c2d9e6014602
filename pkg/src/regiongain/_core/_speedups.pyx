# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled numeric kernels: postfix stack machine and ODE integrators.

API mirrors ``_fallback``; selection happens in ``regiongain._core``.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport (cos, exp, fabs, isfinite, pow as c_pow, sin, sqrt,
                        INFINITY, NAN)

cnp.import_array()

BACKEND = "compiled"

BLOWUP_NORM = 1e9

DEF BLOWUP = 1e9
DEF MAX_STACK = 128
DEF MAX_DIM = 16

cdef double _DP_C[7]
cdef double _DP_A[7][6]
cdef double _DP_B5[7]
cdef double _DP_B4[7]

_dp_c = (0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0)
_dp_a = (
    (0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    (1.0 / 5, 0.0, 0.0, 0.0, 0.0, 0.0),
    (3.0 / 40, 9.0 / 40, 0.0, 0.0, 0.0, 0.0),
    (44.0 / 45, -56.0 / 15, 32.0 / 9, 0.0, 0.0, 0.0),
    (19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0.0, 0.0),
    (9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656, 0.0),
    (35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84),
)
_dp_b5 = (35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0)
_dp_b4 = (5179.0 / 57600, 0.0, 7571.0 / 16695, 393.0 / 640,
          -92097.0 / 339200, 187.0 / 2100, 1.0 / 40)

for _i in range(7):
    _DP_C[_i] = _dp_c[_i]
    _DP_B5[_i] = _dp_b5[_i]
    _DP_B4[_i] = _dp_b4[_i]
    for _j in range(6):
        _DP_A[_i][_j] = _dp_a[_i][_j]


cdef double _eval(const int* ops, const int* arg, const double* val,
                  Py_ssize_t n, const double* x) noexcept nogil:
    cdef Py_ssize_t i
    cdef int op
    cdef int sp = 0
    cdef double stack[MAX_STACK]
    cdef double a, b
    for i in range(n):
        op = ops[i]
        if op == 0:
            stack[sp] = val[i]
            sp += 1
        elif op == 1:
            stack[sp] = x[arg[i]]
            sp += 1
        elif op == 2:
            stack[sp - 1] = -stack[sp - 1]
        elif op == 3:
            stack[sp - 1] = fabs(stack[sp - 1])
        elif op == 4:
            stack[sp - 1] = sin(stack[sp - 1])
        elif op == 5:
            stack[sp - 1] = cos(stack[sp - 1])
        elif op == 6:
            stack[sp - 1] = exp(stack[sp - 1])
        elif op == 7:
            stack[sp - 1] = sqrt(stack[sp - 1]) if stack[sp - 1] >= 0 else NAN
        else:
            sp -= 1
            b = stack[sp]
            a = stack[sp - 1]
            if op == 8:
                stack[sp - 1] = a + b
            elif op == 9:
                stack[sp - 1] = a - b
            elif op == 10:
                stack[sp - 1] = a * b
            elif op == 11:
                stack[sp - 1] = a / b if b != 0.0 else NAN
            elif op == 12:
                stack[sp - 1] = c_pow(a, b)
            elif op == 13:
                stack[sp - 1] = a if a < b else b
            elif op == 14:
                stack[sp - 1] = a if a > b else b
    return stack[sp - 1]


def eval_one(cnp.int32_t[::1] ops, cnp.int32_t[::1] arg, double[::1] val,
             double[::1] x):
    return _eval(<const int*> &ops[0], <const int*> &arg[0], &val[0],
                 ops.shape[0], &x[0])


def eval_many(cnp.int32_t[::1] ops, cnp.int32_t[::1] arg, double[::1] val, X):
    cdef cnp.ndarray[double, ndim=2, mode="c"] Xc = \
        np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n_rows = Xc.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n_rows)
    cdef Py_ssize_t r
    cdef const int* ops_p = <const int*> &ops[0]
    cdef const int* arg_p = <const int*> &arg[0]
    cdef const double* val_p = &val[0]
    cdef Py_ssize_t n = ops.shape[0]
    with nogil:
        for r in range(n_rows):
            out[r] = _eval(ops_p, arg_p, val_p, n, &Xc[r, 0])
    return out


cdef void _fld(const int* ops, const int* arg, const double* val,
               const int* starts, int dim, const double* y,
               double* out) noexcept nogil:
    cdef int k
    for k in range(dim):
        out[k] = _eval(ops + starts[k], arg + starts[k], val + starts[k],
                       starts[k + 1] - starts[k], y)


cdef double _nrm(const double* y, int dim) noexcept nogil:
    cdef double s = 0.0
    cdef int k
    for k in range(dim):
        s += y[k] * y[k]
    return sqrt(s)


def rk4(cnp.int32_t[::1] ops, cnp.int32_t[::1] arg, double[::1] val,
        cnp.int32_t[::1] starts, int dim, y0, double T, double dt, int stride):
    cdef long n_steps = max(1, <long> (T / dt + 0.5))
    cdef double y[MAX_DIM]
    cdef double k1[MAX_DIM]
    cdef double k2[MAX_DIM]
    cdef double k3[MAX_DIM]
    cdef double k4[MAX_DIM]
    cdef double yt[MAX_DIM]
    cdef int k
    cdef long step
    cdef bint blew_up = False
    cdef const int* ops_p = <const int*> &ops[0]
    cdef const int* arg_p = <const int*> &arg[0]
    cdef const double* val_p = &val[0]
    cdef const int* st_p = <const int*> &starts[0]
    y0 = np.asarray(y0, dtype=np.float64)
    for k in range(dim):
        y[k] = y0[k]
    cdef long n_out = n_steps // stride + 2
    cdef cnp.ndarray[double, ndim=1] times = np.empty(n_out)
    cdef cnp.ndarray[double, ndim=2] states = np.empty((n_out, dim))
    cdef long row = 0
    times[0] = 0.0
    for k in range(dim):
        states[0, k] = y[k]
    row = 1
    cdef bint bad
    with nogil:
        for step in range(1, n_steps + 1):
            _fld(ops_p, arg_p, val_p, st_p, dim, y, k1)
            for k in range(dim):
                yt[k] = y[k] + 0.5 * dt * k1[k]
            _fld(ops_p, arg_p, val_p, st_p, dim, yt, k2)
            for k in range(dim):
                yt[k] = y[k] + 0.5 * dt * k2[k]
            _fld(ops_p, arg_p, val_p, st_p, dim, yt, k3)
            for k in range(dim):
                yt[k] = y[k] + dt * k3[k]
            _fld(ops_p, arg_p, val_p, st_p, dim, yt, k4)
            bad = False
            for k in range(dim):
                y[k] += dt / 6.0 * (k1[k] + 2 * k2[k] + 2 * k3[k] + k4[k])
                if not isfinite(y[k]):
                    bad = True
            if bad or _nrm(y, dim) > BLOWUP:
                blew_up = True
                times[row] = step * dt
                for k in range(dim):
                    states[row, k] = y[k]
                row += 1
                break
            if step % stride == 0 or step == n_steps:
                times[row] = step * dt
                for k in range(dim):
                    states[row, k] = y[k]
                row += 1
    return times[:row], states[:row], blew_up


def rk45(cnp.int32_t[::1] ops, cnp.int32_t[::1] arg, double[::1] val,
         cnp.int32_t[::1] starts, int dim, y0, double T,
         double rtol, double atol, int n_out, long max_steps=1000000):
    cdef double y[MAX_DIM]
    cdef double y5[MAX_DIM]
    cdef double yt[MAX_DIM]
    cdef double ks[7][MAX_DIM]
    cdef int k, s, j
    cdef double t = 0.0, h, err, sc, e, acc, acc5, acc4, tau
    cdef double h00, h10, h01, h11
    cdef long n_accept = 0, n_reject = 0, steps = 0
    cdef bint blew_up = False, ok
    cdef const int* ops_p = <const int*> &ops[0]
    cdef const int* arg_p = <const int*> &arg[0]
    cdef const double* val_p = &val[0]
    cdef const int* st_p = <const int*> &starts[0]
    y0 = np.asarray(y0, dtype=np.float64)
    for k in range(dim):
        y[k] = y0[k]
    _fld(ops_p, arg_p, val_p, st_p, dim, y, ks[0])
    h = min(T, 0.01 * max(_nrm(y, dim), 1.0) / max(_nrm(ks[0], dim), 1e-8))

    cdef cnp.ndarray[double, ndim=1] out_times = np.linspace(0.0, T, n_out + 1)
    cdef cnp.ndarray[double, ndim=2] out_states = np.empty((n_out + 1, dim))
    for k in range(dim):
        out_states[0, k] = y[k]
    cdef long next_out = 1
    cdef double t_new

    while t < T and next_out <= n_out:
        steps += 1
        if steps > max_steps:
            raise RuntimeError("rk45: step budget exhausted")
        if h < 1e-14 * max(1.0, t):
            if _nrm(y, dim) > 1e6:
                # forced-to-zero steps while the state explodes: a
                # finite-time blow-up, not a tolerance problem
                blew_up = True
                break
            raise RuntimeError("rk45: step underflow at t=%g" % t)
        if h > T - t:
            h = T - t
        for s in range(1, 7):
            for k in range(dim):
                acc = 0.0
                for j in range(s):
                    acc += _DP_A[s][j] * ks[j][k]
                yt[k] = y[k] + h * acc
            _fld(ops_p, arg_p, val_p, st_p, dim, yt, ks[s])
        err = 0.0
        ok = True
        for k in range(dim):
            acc5 = 0.0
            acc4 = 0.0
            for j in range(7):
                acc5 += _DP_B5[j] * ks[j][k]
                acc4 += _DP_B4[j] * ks[j][k]
            y5[k] = y[k] + h * acc5
            if not isfinite(y5[k]):
                ok = False
                break
            sc = atol + rtol * max(fabs(y[k]), fabs(y5[k]))
            e = h * (acc5 - acc4) / sc
            err += e * e
        err = sqrt(err / dim) if ok else INFINITY
        if err <= 1.0:
            t_new = t + h
            while next_out <= n_out and out_times[next_out] <= t_new + 1e-15:
                tau = (out_times[next_out] - t) / h if h > 0 else 0.0
                h00 = (1 + 2 * tau) * (1 - tau) * (1 - tau)
                h10 = tau * (1 - tau) * (1 - tau)
                h01 = tau * tau * (3 - 2 * tau)
                h11 = tau * tau * (tau - 1)
                for k in range(dim):
                    out_states[next_out, k] = (h00 * y[k] + h10 * h * ks[0][k]
                                               + h01 * y5[k] + h11 * h * ks[6][k])
                next_out += 1
            t = t_new
            for k in range(dim):
                y[k] = y5[k]
                ks[0][k] = ks[6][k]
            n_accept += 1
            if _nrm(y, dim) > BLOWUP:
                blew_up = True
                break
            if err > 0:
                h *= min(5.0, max(0.2, 0.9 * c_pow(err, -0.2)))
            else:
                h *= 5.0
        else:
            n_reject += 1
            h *= max(0.2, 0.9 * c_pow(err, -0.2)) if isfinite(err) else 0.2
    if blew_up or next_out <= n_out:
        out_times = out_times[:next_out]
        out_states = out_states[:next_out]
        if blew_up:
            out_times = np.append(out_times, t)
            out_states = np.vstack([out_states, np.asarray(
                [y[k] for k in range(dim)])])
    return out_times, out_states, n_accept, n_reject, blew_up
