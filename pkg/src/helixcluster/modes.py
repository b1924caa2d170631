"""Fourier-mode solvers for the two linear problems of the construction.

Outer problem, on the whole plane::

    L psi + g = 0,   L = (1/r) d_r (r h^2/(h^2+r^2) d_r) + (1/r^2) d_theta^2.

Inner problem, the linearized Liouville equation at the standard bubble::

    Delta phi + U phi + f = 0,   U = 8/(1+r^2)^2.

Both are split into angular modes.  Each mode is solved by variation of
parameters written as exponentially weighted cumulative integrals (see
``_kernels.damped_sweep``), so growing homogeneous solutions never have to
be stored explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from . import _kernels
from ._kernels import damped_sweep
from .operator import ScalarJet

FloatArray = NDArray[np.float64]
Sampler = Callable[[FloatArray], FloatArray]


class NonDecayingInput(ValueError):
    """The right-hand side does not decay fast enough for the mode theory to apply."""


# ---------------------------------------------------------------------------
# grids and interpolation


@dataclass(frozen=True, slots=True)
class RadialGrid:
    nodes: FloatArray

    def __post_init__(self) -> None:
        r = np.asarray(self.nodes, dtype=float)
        if r.ndim != 1 or r.size < 4:
            raise ValueError("grid needs at least 4 nodes")
        if r[0] <= 0 or np.any(np.diff(r) <= 0):
            raise ValueError("grid nodes must be positive and strictly increasing")
        if r[-1] / r[0] <= 1e3:
            raise ValueError("grid must span more than three decades")
        r.setflags(write=False)
        object.__setattr__(self, "nodes", r)

    @property
    def r_min(self) -> float:
        return float(self.nodes[0])

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def count(self) -> int:
        return int(self.nodes.size)

    @property
    def u(self) -> FloatArray:
        return np.log(self.nodes)

    @staticmethod
    def log_spaced(r_min: float = 1e-6, r_max: float = 1e3, count: int = 2048) -> RadialGrid:
        return RadialGrid(np.geomspace(r_min, r_max, count))

    def refined(self, lo: float, hi: float, spacing: float) -> RadialGrid:
        """Replace the nodes inside [lo, hi] by a uniform band of the given spacing."""
        lo, hi = max(lo, self.r_min), min(hi, self.r_max)
        n = max(int(math.ceil((hi - lo) / spacing)), 1)
        band = np.linspace(lo, hi, n + 1)
        r = self.nodes
        # keep base nodes wherever they are already finer than the band
        fine = np.concatenate([np.diff(r), [np.inf]]) < spacing
        keep_base = fine | (r < lo - 0.5 * spacing) | (r > hi + 0.5 * spacing)
        cut = r[fine].max() if np.any(fine & (r >= lo)) else -np.inf
        return RadialGrid(np.union1d(r[keep_base], band[band > cut + 0.5 * spacing]))


def quintic_hermite(x: FloatArray, f0: np.ndarray, f1: np.ndarray, f2: np.ndarray, xq: ArrayLike):
    """Quintic Hermite interpolant through values, first and second derivatives.

    Data arrays have shape (n, ...) and the result for query points of shape
    Q has shape Q + (...); returns value, first and second derivative.
    """
    xq = np.asarray(xq, dtype=float)
    idx = np.clip(np.searchsorted(x, xq, side="right") - 1, 0, x.size - 2)
    H = x[idx + 1] - x[idx]
    t = (xq - x[idx]) / H
    extra = f0.ndim - 1
    sh = t.shape + (1,) * extra
    t = t.reshape(sh)
    H = H.reshape(sh)
    t2, t3, t4, t5 = t * t, t**3, t**4, t**5
    # basis functions and their t-derivatives
    b = [
        1 - 10 * t3 + 15 * t4 - 6 * t5,
        t - 6 * t3 + 8 * t4 - 3 * t5,
        0.5 * (t2 - 3 * t3 + 3 * t4 - t5),
        0.5 * (t3 - 2 * t4 + t5),
        -4 * t3 + 7 * t4 - 3 * t5,
        10 * t3 - 15 * t4 + 6 * t5,
    ]
    db = [
        -30 * t2 + 60 * t3 - 30 * t4,
        1 - 18 * t2 + 32 * t3 - 15 * t4,
        0.5 * (2 * t - 9 * t2 + 12 * t3 - 5 * t4),
        0.5 * (3 * t2 - 8 * t3 + 5 * t4),
        -12 * t2 + 28 * t3 - 15 * t4,
        30 * t2 - 60 * t3 + 30 * t4,
    ]
    ddb = [
        -60 * t + 180 * t2 - 120 * t3,
        -36 * t + 96 * t2 - 60 * t3,
        0.5 * (2 - 18 * t + 36 * t2 - 20 * t3),
        0.5 * (6 * t - 24 * t2 + 20 * t3),
        -24 * t + 84 * t2 - 60 * t3,
        60 * t - 180 * t2 + 120 * t3,
    ]
    data = [f0[idx], H * f1[idx], H * H * f2[idx], H * H * f2[idx + 1], H * f1[idx + 1], f0[idx + 1]]
    v = sum(bi * di for bi, di in zip(b, data))
    d1 = sum(bi * di for bi, di in zip(db, data)) / H
    d2 = sum(bi * di for bi, di in zip(ddb, data)) / (H * H)
    return v, d1, d2


@dataclass(slots=True)
class ModeFunction:
    """Radial profile of one angular mode, sampled on a grid.

    With derivative samples the profile is interpolated by quintic Hermite
    pieces in r, otherwise by a cubic spline in log r.
    """

    k: int
    grid: RadialGrid
    samples: np.ndarray
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None
    report: dict = field(default_factory=dict)
    _spline: object = field(default=None, repr=False)

    def __call__(self, r: ArrayLike, nder: int = 0):
        r = np.asarray(r, dtype=float)
        if self.d1 is not None and self.d2 is not None:
            vals = quintic_hermite(self.grid.nodes, self.samples, self.d1, self.d2, r)
            return vals[nder] if nder in (0, 1, 2) else vals
        if self._spline is None:
            self._spline = CubicSpline(self.grid.u, self.samples, axis=0)
        r = np.clip(r, self.grid.r_min, None)
        u = np.log(r)
        if nder == 0:
            return self._spline(u)
        d1 = self._spline(u, 1) / r
        if nder == 1:
            return d1
        return (self._spline(u, 2) / r - d1) / r

    def derivatives(self, r: ArrayLike):
        """Value, first and second radial derivative at r."""
        if self.d1 is not None and self.d2 is not None:
            return quintic_hermite(self.grid.nodes, self.samples, self.d1, self.d2, np.asarray(r, dtype=float))
        return self(r, 0), self(r, 1), self(r, 2)


@dataclass(slots=True)
class FourierField:
    """Real planar field sum_k c_k(r) e^{ik theta}, stored by its modes k >= 0."""

    modes: dict[int, ModeFunction]
    K: int
    _cache: tuple | None = field(default=None, repr=False)

    def coefficient(self, k: int) -> ModeFunction:
        if k >= 0:
            return self.modes[k]
        m = self.modes[-k]
        conj = lambda a: None if a is None else np.conj(a)  # noqa: E731
        return ModeFunction(k, m.grid, np.conj(m.samples), conj(m.d1), conj(m.d2))

    def value(self, x: ArrayLike) -> FloatArray:
        return self.jet(x).value

    def _stacked(self):
        ks = sorted(self.modes)
        ms = [self.modes[k] for k in ks]
        f0 = np.stack([np.asarray(m.samples, dtype=complex) for m in ms], axis=1)
        if all(m.d1 is not None and m.d2 is not None for m in ms):
            f1 = np.stack([np.asarray(m.d1, dtype=complex) for m in ms], axis=1)
            f2 = np.stack([np.asarray(m.d2, dtype=complex) for m in ms], axis=1)
        else:
            f1 = f2 = None
        return np.array(ks), f0, f1, f2

    def jet(self, x: ArrayLike, use_numba: bool | None = None) -> ScalarJet:
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        th = np.arctan2(x[..., 1], x[..., 0])
        if self._cache is None:
            self._cache = self._stacked()
        ks, f0, f1, f2 = self._cache
        jit = _kernels.HAVE_NUMBA if use_numba is None else (use_numba and _kernels.HAVE_NUMBA)
        if jit and f1 is not None and np.array_equal(ks, np.arange(ks.size)):
            parts = _kernels.mode_sum(self.modes[0].grid.nodes, f0, f1, f2, r, th)
            f, fr, frr, ft, ftt, frt = (p.reshape(r.shape) for p in parts)
            return self._fix_origin(polar_to_cartesian_jet(x, r, f, fr, frr, ft, ftt, frt), r)
        if f1 is not None:
            c, c1, c2 = quintic_hermite(self.modes[ks[0]].grid.nodes, f0, f1, f2, r)
        else:
            parts = [self.modes[k].derivatives(r) for k in ks]
            c, c1, c2 = (np.stack([p[i] for p in parts], axis=-1) for i in range(3))
        w = np.where(ks == 0, 1.0, 2.0)
        e = w * np.exp(1j * th[..., None] * ks)
        ik = 1j * ks
        f = np.real(np.sum(c * e, axis=-1))
        fr = np.real(np.sum(c1 * e, axis=-1))
        frr = np.real(np.sum(c2 * e, axis=-1))
        ft = np.real(np.sum(ik * c * e, axis=-1))
        ftt = np.real(np.sum(-(ks * ks) * c * e, axis=-1))
        frt = np.real(np.sum(ik * c1 * e, axis=-1))
        return self._fix_origin(polar_to_cartesian_jet(x, r, f, fr, frr, ft, ftt, frt), r)

    def _fix_origin(self, jet: ScalarJet, r: FloatArray) -> ScalarJet:
        # the polar formulas lose the k = 1 slope and the k = 0, 2 curvature at r = 0;
        # near 0, c_0 ~ v + c r^2/2, c_1 ~ a r and c_2 ~ b r^2/2, read off from first derivatives
        at0 = r == 0.0
        if not np.any(at0):
            return jet
        r0 = float(self.modes[0].grid.nodes[0])
        slope = {k: complex(np.ravel(self.modes[k].derivatives(np.array([r0]))[1])[0]) if k in self.modes else 0j
                 for k in (0, 1, 2)}
        c = slope[0].real / r0
        a = slope[1]
        b = slope[2] / r0
        v = float(np.real(np.ravel(self.modes[0](np.array([r0])))[0])) - 0.5 * r0 * slope[0].real
        g = np.array([2.0 * a.real, -2.0 * a.imag])
        H = np.array([[c + 2.0 * b.real, -2.0 * b.imag], [-2.0 * b.imag, c - 2.0 * b.real]])
        value, grad, hess = jet.value.copy(), jet.grad.copy(), jet.hess.copy()
        value[at0] = v
        grad[at0] = g
        hess[at0] = H
        return ScalarJet(value, grad, hess)


def polar_to_cartesian_jet(x, r, f, fr, frr, ft, ftt, frt) -> ScalarJet:
    rs = np.where(r > 0, r, 1.0)
    er = np.stack([x[..., 0] / rs, x[..., 1] / rs], axis=-1)
    et = np.stack([-er[..., 1], er[..., 0]], axis=-1)
    g = fr[..., None] * er + (ft / rs)[..., None] * et
    outer = lambda a, b: a[..., :, None] * b[..., None, :]  # noqa: E731
    H = (
        frr[..., None, None] * outer(er, er)
        + (fr / rs + ftt / rs**2)[..., None, None] * outer(et, et)
        + (frt / rs - ft / rs**2)[..., None, None] * (outer(er, et) + outer(et, er))
    )
    return ScalarJet(f, g, H)


def decompose(sampler: Sampler, grid: RadialGrid, K: int = 32, n_theta: int | None = None) -> FourierField:
    """Angular Fourier coefficients of a real field on every grid circle."""
    n_theta = 4 * K + 4 if n_theta is None else n_theta
    if n_theta < 4 * K + 4:
        raise ValueError("n_theta must be at least 4K+4")
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    r = grid.nodes
    pts = np.stack([r[:, None] * np.cos(th), r[:, None] * np.sin(th)], axis=-1)
    vals = np.asarray(sampler(pts), dtype=float).reshape(r.size, n_theta)
    coef = np.fft.rfft(vals, axis=1) / n_theta
    return FourierField({k: ModeFunction(k, grid, coef[:, k].copy()) for k in range(K + 1)}, K)


def mode_samples(field_: FourierField, ks: range | list[int]) -> np.ndarray:
    return np.stack([field_.modes[k].samples for k in ks], axis=1)


# ---------------------------------------------------------------------------
# outer modes


@dataclass(frozen=True, slots=True)
class HomogeneousSolution:
    """Positive solution z_k of the outer mode equation, kept as log z and r z'/z."""

    k: int
    h: float
    grid: RadialGrid
    log_z: FloatArray
    omega: FloatArray

    def as_mode(self) -> ModeFunction:
        return ModeFunction(self.k, self.grid, np.exp(self.log_z - self.log_z.max()))


class _HomogeneousFamily:
    """All z_k for k = 1..kmax on one grid, from a single stiff solve of the Riccati equations
    for omega_k = r z_k'/z_k in u = log r (started from z_k ~ r^k)."""

    def __init__(self, kmax: int, h: float, r: FloatArray) -> None:
        ks = np.arange(1, kmax + 1, dtype=float)
        u = np.log(r)
        hh = h * h

        def rhs(uu, y):
            r2 = math.exp(2 * uu)
            om = y[:kmax]
            return np.concatenate([2 * r2 * om / (r2 + hh) - om * om + ks**2 * (1 + r2 / hh), om])

        def jac(uu, y):
            r2 = math.exp(2 * uu)
            zero = sparse.csc_matrix((kmax, kmax))
            top = sparse.diags(2 * r2 / (r2 + hh) - 2 * y[:kmax])
            return sparse.bmat([[top, zero], [sparse.identity(kmax), zero]], format="csc")

        a = ks * (ks + 2) / (2 * (ks + 1) * hh)
        y0 = np.concatenate([ks + a * r[0] ** 2, ks * u[0]])
        sol = solve_ivp(rhs, (u[0], u[-1]), y0, method="Radau", t_eval=u, jac=jac, rtol=1e-12, atol=1e-12)
        if not sol.success:  # pragma: no cover
            raise RuntimeError(f"homogeneous solve failed: {sol.message}")
        self.kmax = kmax
        self.omega = sol.y[:kmax].T.copy()
        self.log_z = sol.y[kmax:].T.copy()


_FAMILIES: dict[tuple[float, bytes], _HomogeneousFamily] = {}


def _family(kmax: int, h: float, grid: RadialGrid) -> _HomogeneousFamily:
    key = (float(h), grid.nodes.tobytes())
    fam = _FAMILIES.get(key)
    if fam is None or fam.kmax < kmax:
        if len(_FAMILIES) > 32:
            _FAMILIES.clear()
        fam = _HomogeneousFamily(max(kmax, 8), float(h), grid.nodes)
        _FAMILIES[key] = fam
    return fam


def homogeneous_zk(k: int, h: float, grid: RadialGrid) -> HomogeneousSolution:
    if k < 1:
        raise ValueError("homogeneous_zk needs k >= 1")
    fam = _family(int(k), h, grid)
    return HomogeneousSolution(int(k), float(h), grid, fam.log_z[:, k - 1].copy(), fam.omega[:, k - 1].copy())


def _check_decay(g: np.ndarray, r: FloatArray, nu: float) -> float:
    """Weighted sup of |g| (1+r)^nu; raises when it grows across the outer decade of the grid."""
    weighted = np.abs(g) * ((1.0 + r) ** nu).reshape((-1,) + (1,) * (np.ndim(g) - 1))
    wsup = float(np.max(weighted))
    outer = r > r[-1] / 10.0
    ref = float(np.max(weighted[~outer])) if np.any(~outer) else 0.0
    top = float(np.max(weighted[outer])) if np.any(outer) else 0.0
    if top > 10.0 * ref and top > 1e-12:
        raise NonDecayingInput(f"weighted sup of the source grows at large r ({top:.3g} vs {ref:.3g})")
    return wsup


def _outer_batch(ks: np.ndarray, G: np.ndarray, h: float, grid: RadialGrid):
    """Solve L_k psi + g_k = 0 for the columns of G (one column per entry of ks)."""
    r = grid.nodes
    u = grid.u
    hh = h * h
    fac = ((r * r + hh) / hh)[:, None]
    rr = r[:, None]
    src = G * rr * rr
    psi = np.zeros_like(G)
    d1 = np.zeros_like(G)
    tails = np.zeros(G.shape[1], dtype=G.dtype)
    zero = ks == 0
    if np.any(zero):
        s0 = src[:, zero]
        A0 = damped_sweep(u, 0.0, s0, s0[0] / 2.0, forward=True)
        psi[:, zero] = damped_sweep(u, 0.0, -fac * A0, -s0[0] / 4.0, forward=True)
        d1[:, zero] = -fac * A0 / rr
    pos = ~zero
    if np.any(pos):
        kk = ks[pos]
        fam = _family(int(kk.max()), h, grid)
        Z = fam.log_z[:, kk - 1]
        om = fam.omega[:, kk - 1]
        sp = src[:, pos]
        At = damped_sweep(u, Z, sp, sp[0] / (kk + 2.0), forward=True)
        tail = fac[-1] * At[-1] / (2.0 * om[-1])
        ps = damped_sweep(u, Z, fac * At, tail, forward=False)
        psi[:, pos] = ps
        d1[:, pos] = (om * ps - fac * At) / rr
        tails[pos] = tail
    k2 = (ks * ks)[None, :]
    d2 = fac * (-G + k2 * psi / (rr * rr)) - d1 * ((hh - rr * rr) / (rr * (rr * rr + hh)))
    return psi, d1, d2, tails


def _mode_report(k, grid, tail, wsup, psi, g, h) -> dict:
    return {
        "mode": int(k),
        "truncation_radii": [grid.r_min, grid.r_max],
        "tail_bound": float(abs(tail)),
        "weighted_source_sup": wsup,
        "residual_norm": _fd_residual_outer(psi, g, grid.nodes, k, h),
    }


def outer_mode_solve(k: int, g_k: ModeFunction, h: float, nu: float = 2.5) -> ModeFunction:
    """Decaying (k != 0) or origin-anchored (k = 0) solution of L_k psi + g_k = 0."""
    k = abs(int(k))
    g = np.asarray(g_k.samples)
    wsup = _check_decay(g, g_k.grid.nodes, nu)
    psi, d1, d2, tails = _outer_batch(np.array([k]), g[:, None], h, g_k.grid)
    report = _mode_report(k, g_k.grid, tails[0], wsup, psi[:, 0], g, h)
    return ModeFunction(k, g_k.grid, psi[:, 0], d1[:, 0], d2[:, 0], report)


def _fd_residual_outer(psi, g, r, k, h) -> float:
    """Max relative residual of L_k psi + g by three-point differences on the interior nodes."""
    x0, x1, x2 = r[:-2], r[1:-1], r[2:]
    p0, p1, p2 = psi[:-2], psi[1:-1], psi[2:]
    hl, hr = x1 - x0, x2 - x1
    dp = (p2 - p1) / hr * hl / (hl + hr) + (p1 - p0) / hl * hr / (hl + hr)
    ddp = 2 * ((p2 - p1) / hr - (p1 - p0) / hl) / (hl + hr)
    hh = h * h
    Lk = hh / (x1 * x1 + hh) * (ddp + dp * (hh - x1 * x1) / (x1 * (x1 * x1 + hh))) - k * k * p1 / (x1 * x1)
    scale = max(float(np.max(np.abs(g))), 1e-300)
    band = (x1 > 10 * r[0]) & (x1 < r[-1] / 10)
    return float(np.max(np.abs(Lk + g[1:-1])[band]) / scale) if np.any(band) else 0.0


@dataclass(slots=True)
class OuterSolution:
    field: FourierField
    h: float
    reports: list[dict]

    def jet(self, x: ArrayLike) -> ScalarJet:
        return self.field.jet(x)

    def value(self, x: ArrayLike) -> FloatArray:
        return self.field.value(x)

    def shifted(self, c: float) -> OuterSolution:
        """Same field plus a constant (only mode 0 changes)."""
        modes = dict(self.field.modes)
        m0 = modes[0]
        modes[0] = ModeFunction(0, m0.grid, m0.samples + c, m0.d1, m0.d2, m0.report)
        return OuterSolution(FourierField(modes, self.field.K), self.h, self.reports)


def outer_solve(g: Sampler | FourierField, h: float, grid: RadialGrid, K: int = 32,
                n_theta: int | None = None, nu: float = 2.5) -> OuterSolution:
    """Solve L psi + g = 0 on the plane: decompose, solve every mode, resum."""
    fg = g if isinstance(g, FourierField) else decompose(g, grid, K, n_theta)
    grid = fg.modes[0].grid
    ks = np.arange(fg.K + 1)
    G = np.stack([np.asarray(fg.modes[k].samples, dtype=complex) for k in ks], axis=1)
    wsup = _check_decay(G, grid.nodes, nu)
    psi, d1, d2, tails = _outer_batch(ks, G, h, grid)
    modes = {}
    reports = []
    for k in ks:
        rep = _mode_report(k, grid, tails[k], wsup, psi[:, k], G[:, k], h)
        modes[int(k)] = ModeFunction(int(k), grid, psi[:, k], d1[:, k], d2[:, k], rep)
        reports.append(rep)
    return OuterSolution(FourierField(modes, fg.K), h, reports)


# ---------------------------------------------------------------------------
# inner modes


def bubble_weight(r: ArrayLike) -> FloatArray:
    r = np.asarray(r, dtype=float)
    return 8.0 / (1.0 + r * r) ** 2


def _cumulative(u, src):
    return damped_sweep(u, 0.0, src, 0.0, forward=True)


def inner_mode_solve(k: int, h_k: ModeFunction, m: float = 2.5) -> ModeFunction:
    """Solution of phi'' + phi'/r + U phi - k^2 phi/r^2 + h_k = 0 regular at 0.

    k = 0 and |k| = 1 use the closed-form homogeneous pairs with the integral
    normalizations of the mode-0 and mode-1 formulas; |k| >= 2 picks the
    solution decaying at infinity.
    """
    k = abs(int(k))
    grid = h_k.grid
    r, u = grid.nodes, grid.u
    hv = np.asarray(h_k.samples)
    wsup = _check_decay(hv, r, m)
    r2 = r * r
    lr = np.log(r)
    if k == 0:
        z = (r2 - 1) / (r2 + 1)
        dz = 4 * r / (r2 + 1) ** 2
        w = ((r2 - 1) * lr - 2) / (r2 + 1)
        dw = (2 * r * lr + (r2 - 1) / r) / (r2 + 1) - 2 * r * ((r2 - 1) * lr - 2) / (r2 + 1) ** 2
        F = _cumulative(u, hv * z * r2)
        G = _cumulative(u, hv * w * r2)
        # normalization constant: int_0^1 h (w - z/2) rho d rho
        Gfp = G - 0.5 * F
        C = CubicSpline(u, Gfp.real)(0.0) + (1j * CubicSpline(u, Gfp.imag)(0.0) if np.iscomplexobj(Gfp) else 0.0)
        phi = -w * F + z * (G - C)
        d1 = -dw * F + dz * (G - C)
        tail = 0.0
    elif k == 1:
        z = 4 * r / (1 + r2)
        dz = 4 * (1 - r2) / (1 + r2) ** 2
        num = r2 * (r2 + 4 * lr) - 1
        den = 8 * r * (r2 + 1)
        w = num / den
        dnum = 4 * r**3 + 8 * r * lr + 4 * r
        dden = 8 * (3 * r2 + 1)
        dw = (dnum * den - num * dden) / den**2
        F = _cumulative(u, hv * z * r2)
        G = _cumulative(u, hv * w * r2)
        phi = -w * F + z * G
        d1 = -dw * F + dz * G
        tail = 0.0
    else:
        A = ((k + 1) + (k - 1) * r2) / (1 + r2)
        B = ((k - 1) + (k + 1) * r2) / (1 + r2)
        dA = -4 * r / (1 + r2) ** 2
        dB = 4 * r / (1 + r2) ** 2
        lam = k * u
        T1 = damped_sweep(u, lam, A * hv * r2, A[0] * hv[0] * r2[0] / (k + 2.0), forward=True)
        slope = _tail_slope(hv, r)
        tail = B[-1] * hv[-1] * r2[-1] / (k + slope - 2.0)
        T2 = damped_sweep(u, lam, B * hv * r2, tail, forward=False)
        C = 2.0 * k * (k * k - 1.0)
        phi = (B * T1 + A * T2) / C
        d1 = ((dB - k * B / r) * T1 + (dA + k * A / r) * T2) / C
    d2 = -d1 / r - bubble_weight(r) * phi + k * k * phi / r2 - hv
    report = {
        "mode": k,
        "truncation_radii": [grid.r_min, grid.r_max],
        "tail_bound": float(abs(tail)),
        "weighted_source_sup": wsup,
    }
    return ModeFunction(k, grid, phi, d1, d2, report)


def _tail_slope(hv: np.ndarray, r: FloatArray) -> float:
    a = np.abs(hv[-8:])
    if np.any(a <= 0):
        return 2.5
    s = -np.polyfit(np.log(r[-8:]), np.log(a), 1)[0]
    return float(max(s, 2.5))


def inner_solve(f: Sampler | FourierField, grid: RadialGrid, K: int = 8, n_theta: int | None = None) -> FourierField:
    ff = f if isinstance(f, FourierField) else decompose(f, grid, K, n_theta)
    return FourierField({k: inner_mode_solve(k, ff.modes[k]) for k in range(ff.K + 1)}, ff.K)


# ---------------------------------------------------------------------------
# radial co-kernel correction


def phi2_profile(y: ArrayLike, c: float = 1.0) -> ScalarJet:
    """Radial solution of Delta phi + U phi + c U Z0 = 0 (Z0 = 2(1-|y|^2)/(1+|y|^2))."""
    from .liouville import radial_jet

    y = np.asarray(y, dtype=float)
    s = np.sum(y * y, axis=-1)
    q = s + 1.0
    p, dp, ddp = (s - 1) / q, 2 / q**2, -4 / q**3
    L, dL, ddL = np.log1p(s), 1 / q, -1 / q**2
    f = c * ((4 / 3) * p * L - (8 / 3) / q)
    fs = c * ((4 / 3) * (dp * L + p * dL) + (8 / 3) / q**2)
    fss = c * ((4 / 3) * (ddp * L + 2 * dp * dL + p * ddL) - (16 / 3) / q**3)
    return radial_jet(y, f, 2 * fs, 4 * fss)
