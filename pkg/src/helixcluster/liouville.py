"""Liouville bubbles and the regularized single-filament stream function.

The building block is the scaled bubble

    Gamma(z) = log 8 / (l^2 + |z|^2)^2,   l = eps * mu,

which solves -Delta Gamma = l^2 exp(Gamma).  Near a helix the operator L is a
perturbation of the Laplacian in chart variables; the two correction
constants and the third-mode corrector H1 remove its leading error terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

from .operator import FramedChart, ScalarJet

FloatArray = NDArray[np.float64]
LOG8 = math.log(8.0)


@dataclass(frozen=True, slots=True)
class BubbleParams:
    eps: float
    mu: float = 1.0
    epsmu: float = field(init=False)

    def __post_init__(self) -> None:
        if not (self.eps > 0 and self.mu > 0):
            raise ValueError("eps and mu must be positive")
        object.__setattr__(self, "epsmu", self.eps * self.mu)
        if self.epsmu >= 1.0:
            raise ValueError("eps*mu must be below 1")


@dataclass(frozen=True, slots=True)
class CorrectionConstants:
    R: float
    h: float
    c1: float = field(init=False)
    c2: float = field(init=False)
    third_mode: float = field(init=False)

    def __post_init__(self) -> None:
        R, h = self.R, self.h
        s2 = h * h + R * R
        object.__setattr__(self, "c1", 0.5 * R * h / s2**1.5)
        object.__setattr__(self, "c2", R * R / (8.0 * s2 * s2) * (2.0 * h * h / s2 + 1.0))
        object.__setattr__(self, "third_mode", 4.0 * R**3 / (h * s2**1.5))

    @property
    def dipole(self) -> float:
        """Coefficient of the l^2 z1 / (l^2+|z|^2)^2 term left by the corrections."""
        R, h = self.R, self.h
        return 4.0 * R * (3.0 * h * h + R * R) / (h * (h * h + R * R) ** 1.5)


def _as_points(z: ArrayLike) -> FloatArray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1:] != (2,):
        raise ValueError("points must have a trailing dimension of 2")
    return z


def radial_jet(z: FloatArray, val: FloatArray, d1_over_r: FloatArray, curv: FloatArray) -> ScalarJet:
    """Jet of f(|z|) given f, f'(r)/r and (f'' - f'/r)/r^2, which stay finite at r = 0."""
    g = d1_over_r[..., None] * z
    H = d1_over_r[..., None, None] * np.eye(2) + curv[..., None, None] * (z[..., :, None] * z[..., None, :])
    return ScalarJet(val, g, H)


def gamma_bubble(z: ArrayLike, p: BubbleParams | float) -> ScalarJet:
    l2 = (p.epsmu if isinstance(p, BubbleParams) else float(p)) ** 2
    z = _as_points(z)
    d = l2 + np.sum(z * z, axis=-1)
    return radial_jet(z, LOG8 - 2.0 * np.log(d), -4.0 / d, 8.0 / (d * d))


def bubble_U(y: ArrayLike) -> FloatArray:
    y = np.asarray(y, dtype=float)
    return 8.0 / (1.0 + np.sum(y * y, axis=-1)) ** 2


def kernel_Z(j: int, y: ArrayLike) -> FloatArray:
    """Bounded kernel elements of the linearized Liouville operator at the standard bubble."""
    y = _as_points(y)
    q = 1.0 + np.sum(y * y, axis=-1)
    if j == 0:
        return 2.0 - 4.0 * (q - 1.0) / q
    if j in (1, 2):
        return -4.0 * y[..., j - 1] / q
    raise ValueError(f"kernel index must be 0, 1 or 2, got {j}")


def bubble_mass() -> float:
    """Integral of U over the plane, by radial quadrature plus the analytic tail beyond r = 1e4."""
    rmax = 1e4
    val, _ = integrate.quad(lambda r: 2 * math.pi * r * 8.0 / (1 + r * r) ** 2, 0.0, rmax, limit=200, epsabs=1e-13)
    return val + 8.0 * math.pi / (1.0 + rmax * rmax)


def dipole_moment() -> float:
    """Integral of U(y) y1 Z1(y); reduces to pi * int_0^inf r^3 U(r) * (-4 / (1+r^2)) dr."""
    f = lambda r: math.pi * r**3 * 8.0 / (1 + r * r) ** 2 * (-4.0 / (1 + r * r))  # noqa: E731
    val, _ = integrate.quad(f, 0.0, np.inf, limit=400, epsabs=1e-13)
    return val


# ---------------------------------------------------------------------------
# Third-mode corrector.  In the scaled variable t = s / l,
#   h1(s) = s^3 / l^2 * (G(s/l) - G(1/l)),   G(t) = int_t^inf u^-7 I(u) du,
#   I(t) = int_0^t v^7/(1+v^2)^2 dv,
# so a single universal table of G serves every l.

_SERIES_TERMS = 64
_SERIES_CUT = 0.5


def _I_over_t8(t: FloatArray) -> FloatArray:
    W = t * t
    out = np.empty_like(W)
    small = W < _SERIES_CUT
    if np.any(small):
        w = W[small]
        acc = np.zeros_like(w)
        for k in range(_SERIES_TERMS - 1, -1, -1):
            acc = acc * w + (-1) ** k * (k + 1) / (k + 4)
        out[small] = 0.5 * acc
    big = ~small
    if np.any(big):
        w = W[big]
        It = 0.25 * w * w - w + 1.5 * np.log1p(w) + 0.5 / (1.0 + w) - 0.5
        out[big] = It / (w**4)
    return out


def _D_series(t: FloatArray) -> FloatArray:
    """(1/(1+W)^2 - 8 I/t^8) / W with W = t^2."""
    W = t * t
    out = np.empty_like(W)
    small = W < _SERIES_CUT
    if np.any(small):
        w = W[small]
        acc = np.zeros_like(w)
        for k in range(_SERIES_TERMS, 0, -1):
            acc = acc * w + (-1) ** k * (k + 1) * k / (k + 4)
        out[small] = acc
    big = ~small
    if np.any(big):
        w = W[big]
        out[big] = (1.0 / (1.0 + w) ** 2 - 8.0 * _I_over_t8(np.sqrt(w))) / w
    return out


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _G_increment(t_lo: FloatArray, t_hi: FloatArray) -> FloatArray:
    """int_{t_lo}^{t_hi} u^-7 I(u) du by Gauss-Legendre in log u, where the integrand becomes u^2 I/u^8."""
    a, b = np.log(t_lo), np.log(t_hi)
    half = 0.5 * (b - a)
    u = np.exp(0.5 * (a + b)[..., None] + half[..., None] * _GL_X)
    vals = u * u * _I_over_t8(u)
    return half * np.sum(vals * _GL_W, axis=-1)


class _GTable:
    """G on a log-uniform table, interpolated by quintic Hermite pieces in v = log t.

    Both v-derivatives of G are closed-form, so the interpolant is accurate to
    roughly dv^6 relative to G with 128 nodes per decade.
    """

    lo, hi, per_decade = -4.0, 6.0, 128

    def __init__(self) -> None:
        self.logt = np.linspace(self.lo, self.hi, int((self.hi - self.lo) * self.per_decade) + 1)
        t = 10.0**self.logt
        G = np.empty_like(t)
        G[-1] = self._tail(t[-1:])[0]
        inc = _G_increment(t[:-1], t[1:])
        G[:-1] = G[-1] + np.cumsum(inc[::-1])[::-1]
        self.t, self.G = t, G
        self.v = np.log(t)
        self.dG, self.d2G = self._v_derivatives(t)

    @staticmethod
    def _v_derivatives(t: FloatArray) -> tuple[FloatArray, FloatArray]:
        t2 = t * t
        i8 = _I_over_t8(t)
        return -t2 * i8, -t2 / (1.0 + t2) ** 2 + 6.0 * t2 * i8

    @staticmethod
    def _tail(t: FloatArray) -> FloatArray:
        # asymptotics of int_t^inf u^-7 I(u) du, remainder below t^-6 log t
        t2 = t * t
        return 1.0 / (8.0 * t2) - 1.0 / (4.0 * t2 * t2) + (0.5 * np.log(t) + 1.0 / 12.0) / t2**3

    def __call__(self, t: FloatArray) -> FloatArray:
        from .modes import quintic_hermite

        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        far = t >= self.t[-1]
        out[far] = self._tail(t[far])
        tiny = t <= self.t[0]
        if np.any(tiny):
            t0 = self.t[0]
            tt = t[tiny]
            out[tiny] = self.G[0] + (t0**2 - tt**2) / 16.0 - (t0**4 - tt**4) / 20.0
        mid = ~(far | tiny)
        if np.any(mid):
            out[mid] = quintic_hermite(self.v, self.G, self.dG, self.d2G, np.log(t[mid]))[0]
        return out


@lru_cache(maxsize=1)
def _g_table() -> _GTable:
    return _GTable()


def _q_parts(r: FloatArray, l: float) -> tuple[FloatArray, FloatArray, FloatArray]:
    """q = h1(r)/r^3 with q'/r and (q'' - q'/r)/r^2."""
    G = _g_table()
    t = r / l
    q = (G(t) - G(np.array([1.0 / l]))[0]) / (l * l)
    m = -_I_over_t8(t) / l**4
    curv = -_D_series(t) / l**6
    return q, m, curv


def h1_profile(s: ArrayLike, p: BubbleParams | float) -> tuple[FloatArray, FloatArray]:
    """h1(s) and h1'(s)."""
    l = p.epsmu if isinstance(p, BubbleParams) else float(p)
    s = np.asarray(s, dtype=float)
    q, m, _ = _q_parts(np.abs(s), l)
    return s**3 * q, 3.0 * s * s * q + s**4 * m


def h1_second_derivative(s: ArrayLike, p: BubbleParams | float) -> FloatArray:
    l = p.epsmu if isinstance(p, BubbleParams) else float(p)
    s = np.asarray(s, dtype=float)
    q, m, curv = _q_parts(s, l)
    # q'' = m + r^2 * curv
    qpp = m + s * s * curv
    return 6.0 * s * q + 6.0 * s * s * (s * m) + s**3 * qpp


def _cubic_jet(z: FloatArray) -> ScalarJet:
    """Jet of Re(z^3) = z1^3 - 3 z1 z2^2."""
    z1, z2 = z[..., 0], z[..., 1]
    v = z1**3 - 3.0 * z1 * z2**2
    g = np.stack([3.0 * z1**2 - 3.0 * z2**2, -6.0 * z1 * z2], axis=-1)
    H = np.empty(z.shape[:-1] + (2, 2))
    H[..., 0, 0] = 6.0 * z1
    H[..., 1, 1] = -6.0 * z1
    H[..., 0, 1] = H[..., 1, 0] = -6.0 * z2
    return ScalarJet(v, g, H)


def H1_corrector(z: ArrayLike, p: BubbleParams | float) -> ScalarJet:
    l = p.epsmu if isinstance(p, BubbleParams) else float(p)
    z = _as_points(z)
    r = np.sqrt(np.sum(z * z, axis=-1))
    q, m, curv = _q_parts(np.atleast_1d(r).reshape(r.shape), l)
    return radial_jet(z, q, m, curv).times(_cubic_jet(z))


def _poly_jet(z: FloatArray, cc: CorrectionConstants) -> ScalarJet:
    """Jet of 1 + c1 z1 + c2 |z|^2."""
    v = 1.0 + cc.c1 * z[..., 0] + cc.c2 * np.sum(z * z, axis=-1)
    g = 2.0 * cc.c2 * z
    g[..., 0] += cc.c1
    H = np.broadcast_to(2.0 * cc.c2 * np.eye(2), z.shape[:-1] + (2, 2)).copy()
    return ScalarJet(v, g, H)


def psi_bubble(z: ArrayLike, p: BubbleParams | float, cc: CorrectionConstants) -> ScalarJet:
    z = _as_points(z)
    base = gamma_bubble(z, p).times(_poly_jet(z, cc))
    return base + H1_corrector(z, p).scale(cc.third_mode)


def psi_filament(x: ArrayLike, chart: FramedChart, p: BubbleParams | float, cc: CorrectionConstants) -> ScalarJet:
    """The single-filament stream function in plane coordinates, as a jet in x."""
    z = chart.to_z(_as_points(x))
    return chart.push_jet(psi_bubble(z, p, cc))


def ee1_remainder(z: ArrayLike, p: BubbleParams | float, cc: CorrectionConstants, chart: FramedChart) -> FloatArray:
    """L(psi_mu) - Delta Gamma - dipole term, evaluated in chart variables."""
    from .operator import apply_L_in_chart

    l = p.epsmu if isinstance(p, BubbleParams) else float(p)
    z = _as_points(z)
    Lpsi = apply_L_in_chart(psi_bubble(z, l, cc), z, chart)
    lap = gamma_bubble(z, l).laplacian
    d = l * l + np.sum(z * z, axis=-1)
    return Lpsi - lap - cc.dipole * l * l * z[..., 0] / d**2
