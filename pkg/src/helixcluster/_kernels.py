"""Sequential radial sweeps shared by the mode solvers.

Both the outer and inner mode problems reduce to cumulative integrals with an
exponential weight,

    forward:  y(t) = y(t0) e^{-(Lam(t)-Lam(t0))} + int_{t0}^{t} s(x) e^{-(Lam(t)-Lam(x))} dx
    backward: y(t) = y(t1) e^{-(Lam(t1)-Lam(t))} + int_{t}^{t1} s(x) e^{-(Lam(x)-Lam(t))} dx

with Lam nondecreasing.  Each cell integral is computed in closed form after
splitting the weight into its linear part (integrated exactly against
polynomial moments) and a smooth remainder folded into the source, which
keeps the scheme fourth order and stable when Lam jumps by many units per cell.

Only the final two-term recurrence is sequential; it is compiled with numba
when available.  The second hot loop is the evaluation of a Fourier field and
its polar derivatives at many points (quintic Hermite pieces in r, a rotation
recurrence in theta).  Set HELIXCLUSTER_NO_NUMBA=1 to force the numpy paths.
"""

from __future__ import annotations

import os

import numpy as np

_SERIES_CUT = 1.0
_SERIES_TERMS = 24
_TAU = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])
# inverse Vandermonde for a cubic through _TAU, mapping samples to monomial coefficients
_VINV = np.linalg.inv(np.vander(_TAU, 4, increasing=True))


def exp_moments(mu: np.ndarray, order: int = 3) -> np.ndarray:
    """M_n = int_0^1 s^n exp(-mu s) ds for n = 0..order, stacked on the last axis."""
    mu = np.asarray(mu, dtype=float)
    out = np.empty(mu.shape + (order + 1,))
    small = np.abs(mu) < _SERIES_CUT
    if np.any(small):
        m = mu[small]
        for n in range(order + 1):
            acc = np.zeros_like(m)
            term = np.ones_like(m)
            fact = 1.0
            for j in range(_SERIES_TERMS):
                acc += term / (fact * (n + j + 1))
                fact *= j + 1
                term = term * (-m)
            out[small, n] = acc
    big = ~small
    if np.any(big):
        m = mu[big]
        em = np.exp(-m)
        prev = -np.expm1(-m) / m
        out[big, 0] = prev
        for n in range(1, order + 1):
            prev = (n * prev - em) / m
            out[big, n] = prev
    return out


def _lagrange_weights(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per cell, a 4-node stencil and weights interpolating to the cell's _TAU points."""
    n = t.size
    i = np.arange(n - 1)
    j0 = np.clip(i - 1, 0, n - 4)
    sten = j0[:, None] + np.arange(4)
    ts = t[sten]
    H = t[i + 1] - t[i]
    tq = t[i][:, None] + _TAU[None, :] * H[:, None]
    W = np.ones((n - 1, 4, 4))
    for p in range(4):
        for q in range(4):
            if q != p:
                W[:, :, p] *= (tq - ts[:, q, None]) / (ts[:, p, None] - ts[:, q, None])
    return sten, W


def cell_integrals(t: np.ndarray, lam: np.ndarray, src: np.ndarray, forward: bool) -> tuple[np.ndarray, np.ndarray]:
    """Decay factors and weighted cell integrals, shape (n-1, m)."""
    sten, W = _lagrange_weights(t)
    H = np.diff(t)
    mu = np.diff(lam, axis=0)
    s_q = np.einsum("cqp,cpm->cqm", W, src[sten])
    lam_q = np.einsum("cqp,cpm->cqm", W, lam[sten])
    lam0 = lam[:-1][:, None, :]
    delta = lam_q - (lam0 + _TAU[None, :, None] * mu[:, None, :])
    delta[:, 0, :] = 0.0
    delta[:, -1, :] = 0.0
    if forward:
        # weight exp(-mu (1 - tau) + delta); in sigma = 1 - tau the samples run reversed
        p = (s_q * np.exp(delta))[:, ::-1, :]
    else:
        p = s_q * np.exp(-delta)
    coef = np.einsum("nq,cqm->cnm", _VINV, p)
    M = exp_moments(mu)
    I = H[:, None] * np.einsum("cnm,cmn->cm", coef, M)
    return np.exp(-mu), I


def recurrence_numpy(decay: np.ndarray, I: np.ndarray, y_start: np.ndarray, forward: bool) -> np.ndarray:
    n = decay.shape[0] + 1
    out = np.empty((n,) + I.shape[1:], dtype=np.result_type(I, y_start))
    if forward:
        out[0] = y_start
        for i in range(n - 1):
            out[i + 1] = out[i] * decay[i] + I[i]
    else:
        out[n - 1] = y_start
        for i in range(n - 2, -1, -1):
            out[i] = out[i + 1] * decay[i] + I[i]
    return out


try:
    if os.environ.get("HELIXCLUSTER_NO_NUMBA", "") not in ("", "0"):
        raise ImportError("numba disabled by environment")
    import numba as nb

    @nb.njit(cache=True)
    def _recurrence_jit(decay, I, y_start, forward):  # pragma: no cover - compiled
        n = decay.shape[0] + 1
        m = I.shape[1]
        out = np.empty((n, m), dtype=np.complex128)
        if forward:
            for j in range(m):
                out[0, j] = y_start[j]
            for i in range(n - 1):
                for j in range(m):
                    out[i + 1, j] = out[i, j] * decay[i, j] + I[i, j]
        else:
            for j in range(m):
                out[n - 1, j] = y_start[j]
            for i in range(n - 2, -1, -1):
                for j in range(m):
                    out[i, j] = out[i + 1, j] * decay[i, j] + I[i, j]
        return out

    @nb.njit(cache=True)
    def _mode_sum_jit(nodes, f0, f1, f2, r, th):  # pragma: no cover - compiled
        n = nodes.size
        M = f0.shape[1]
        N = r.size
        out = np.zeros((6, N))
        for p in range(N):
            rr = r[p]
            lo, hi = 0, n
            while lo < hi:
                mid = (lo + hi) // 2
                if nodes[mid] <= rr:
                    lo = mid + 1
                else:
                    hi = mid
            i = min(max(lo - 1, 0), n - 2)
            H = nodes[i + 1] - nodes[i]
            t = (rr - nodes[i]) / H
            t2 = t * t
            t3 = t2 * t
            t4 = t3 * t
            t5 = t4 * t
            b0 = 1 - 10 * t3 + 15 * t4 - 6 * t5
            b1 = t - 6 * t3 + 8 * t4 - 3 * t5
            b2 = 0.5 * (t2 - 3 * t3 + 3 * t4 - t5)
            b3 = 0.5 * (t3 - 2 * t4 + t5)
            b4 = -4 * t3 + 7 * t4 - 3 * t5
            b5 = 10 * t3 - 15 * t4 + 6 * t5
            g0 = (-30 * t2 + 60 * t3 - 30 * t4) / H
            g1 = (1 - 18 * t2 + 32 * t3 - 15 * t4) / H
            g2 = 0.5 * (2 * t - 9 * t2 + 12 * t3 - 5 * t4) / H
            g3 = 0.5 * (3 * t2 - 8 * t3 + 5 * t4) / H
            g4 = (-12 * t2 + 28 * t3 - 15 * t4) / H
            g5 = (30 * t2 - 60 * t3 + 30 * t4) / H
            HH = H * H
            a0 = (-60 * t + 180 * t2 - 120 * t3) / HH
            a1 = (-36 * t + 96 * t2 - 60 * t3) / HH
            a2 = 0.5 * (2 - 18 * t + 36 * t2 - 20 * t3) / HH
            a3 = 0.5 * (6 * t - 24 * t2 + 20 * t3) / HH
            a4 = (-24 * t + 84 * t2 - 60 * t3) / HH
            a5 = (60 * t - 180 * t2 + 120 * t3) / HH
            step = complex(np.cos(th[p]), np.sin(th[p]))
            e = 1.0 + 0.0j
            for m in range(M):
                d0 = f0[i, m]
                d1 = H * f1[i, m]
                d2 = HH * f2[i, m]
                d3 = HH * f2[i + 1, m]
                d4 = H * f1[i + 1, m]
                d5 = f0[i + 1, m]
                w = e if m == 0 else 2.0 * e
                v = (b0 * d0 + b1 * d1 + b2 * d2 + b3 * d3 + b4 * d4 + b5 * d5) * w
                v1 = (g0 * d0 + g1 * d1 + g2 * d2 + g3 * d3 + g4 * d4 + g5 * d5) * w
                v2 = (a0 * d0 + a1 * d1 + a2 * d2 + a3 * d3 + a4 * d4 + a5 * d5) * w
                out[0, p] += v.real
                out[1, p] += v1.real
                out[2, p] += v2.real
                out[3, p] -= m * v.imag
                out[4, p] -= m * m * v.real
                out[5, p] -= m * v1.imag
                e *= step
        return out

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def damped_sweep(t, lam, src, y_start, forward: bool = True, use_numba: bool | None = None) -> np.ndarray:
    """Cumulative exponentially weighted integral along t for each column.

    ``lam`` and ``src`` have shape (n,) or (n, m); ``y_start`` is the value at
    the first node (forward) or the last node (backward).
    """
    t = np.ascontiguousarray(t, dtype=float)
    src = np.asarray(src)
    vector = src.ndim == 1
    src2 = src[:, None] if vector else src
    lam = np.asarray(lam, dtype=float)
    lam = np.broadcast_to(lam, t.shape) if lam.ndim == 0 else lam
    lam2 = np.broadcast_to(lam.reshape(t.shape[0], -1), src2.shape)
    y0 = np.broadcast_to(np.asarray(y_start), src2.shape[1:])
    decay, I = cell_integrals(t, lam2, src2, forward)
    jit = HAVE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    if jit:
        out = _recurrence_jit(np.ascontiguousarray(decay), np.ascontiguousarray(I, dtype=np.complex128),
                              np.ascontiguousarray(y0, dtype=np.complex128), forward)
        if not (np.iscomplexobj(src) or np.iscomplexobj(y_start)):
            out = out.real.copy()
    else:
        out = recurrence_numpy(decay, I, y0, forward)
    return out[:, 0] if vector else out


def mode_sum(nodes, f0, f1, f2, r, th):
    """Compiled sum over consecutive modes k = 0..M-1; rows f, f_r, f_rr, f_t, f_tt, f_rt."""
    return _mode_sum_jit(np.ascontiguousarray(nodes, dtype=float), np.ascontiguousarray(f0, dtype=np.complex128),
                         np.ascontiguousarray(f1, dtype=np.complex128), np.ascontiguousarray(f2, dtype=np.complex128),
                         np.ascontiguousarray(r, dtype=float).ravel(), np.ascontiguousarray(th, dtype=float).ravel())
