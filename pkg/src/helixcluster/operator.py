"""The anisotropic elliptic operator of the helical reduction and its local charts.

``L psi = div(K grad psi)`` with

    K(x) = [[h^2 + x2^2, -x1 x2], [-x1 x2, h^2 + x1^2]] / (h^2 + |x|^2).

Fields are passed around as 2-jets (value, gradient, Hessian) so that L can be
applied exactly, without numerical differentiation.  All functions broadcast:
a jet may carry a batch of points, with gradient shape ``(..., 2)`` and
Hessian shape ``(..., 2, 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

FloatArray = NDArray[np.float64]


class DegeneratePoint(ValueError):
    """A frame chart was requested at the origin, where the helix degenerates."""


@dataclass(frozen=True, slots=True)
class ScalarJet:
    value: FloatArray | float
    grad: FloatArray
    hess: FloatArray

    def __post_init__(self) -> None:
        g = np.asarray(self.grad, dtype=float)
        H = np.asarray(self.hess, dtype=float)
        if g.shape[-1:] != (2,) or H.shape[-2:] != (2, 2):
            raise ValueError("jet gradient must end in 2 and Hessian in (2, 2)")
        object.__setattr__(self, "grad", g)
        object.__setattr__(self, "hess", H)
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float))

    def __add__(self, other: ScalarJet) -> ScalarJet:
        return ScalarJet(self.value + other.value, self.grad + other.grad, self.hess + other.hess)

    def scale(self, c: float | FloatArray) -> ScalarJet:
        c = np.asarray(c, dtype=float)
        return ScalarJet(c * self.value, c[..., None] * self.grad, c[..., None, None] * self.hess)

    def times(self, other: ScalarJet) -> ScalarJet:
        """Jet of the pointwise product."""
        u, v = self.value, other.value
        gu, gv = self.grad, other.grad
        g = u[..., None] * gv + v[..., None] * gu
        H = (
            u[..., None, None] * other.hess
            + v[..., None, None] * self.hess
            + gu[..., :, None] * gv[..., None, :]
            + gv[..., :, None] * gu[..., None, :]
        )
        return ScalarJet(u * v, g, H)

    @property
    def laplacian(self) -> FloatArray:
        return self.hess[..., 0, 0] + self.hess[..., 1, 1]

    @staticmethod
    def zeros(shape: tuple[int, ...] = ()) -> ScalarJet:
        return ScalarJet(np.zeros(shape), np.zeros(shape + (2,)), np.zeros(shape + (2, 2)))


def k_matrix(x: ArrayLike, h: float) -> FloatArray:
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    d = h * h + x1 * x1 + x2 * x2
    K = np.empty(x.shape[:-1] + (2, 2))
    K[..., 0, 0] = (h * h + x2 * x2) / d
    K[..., 1, 1] = (h * h + x1 * x1) / d
    K[..., 0, 1] = K[..., 1, 0] = -x1 * x2 / d
    return K


def drift(x: ArrayLike, h: float) -> FloatArray:
    """First-order coefficients of L (the divergence of the rows of K)."""
    x = np.asarray(x, dtype=float)
    d = h * h + np.sum(x * x, axis=-1)
    f = -(2.0 * h * h / d + 1.0) / d
    return f[..., None] * x


def apply_L(jet: ScalarJet, x: ArrayLike, h: float) -> FloatArray:
    x = np.asarray(x, dtype=float)
    K = k_matrix(x, h)
    second = np.einsum("...ij,...ij->...", K, jet.hess)
    return second + np.einsum("...i,...i->...", drift(x, h), jet.grad)


@dataclass(frozen=True, slots=True)
class FramedChart:
    """Affine chart x = P + A z in which L is the Laplacian at z = 0."""

    P: FloatArray
    A: FloatArray
    Ainv: FloatArray
    detA: float
    h: float

    @property
    def R(self) -> float:
        return float(math.hypot(self.P[0], self.P[1]))

    def to_x(self, z: ArrayLike) -> FloatArray:
        return self.P + np.asarray(z, dtype=float) @ self.A.T

    def to_z(self, x: ArrayLike) -> FloatArray:
        return (np.asarray(x, dtype=float) - self.P) @ self.Ainv.T

    def pull_jet(self, jet_x: ScalarJet) -> ScalarJet:
        """Jet of phi(z) = psi(P + A z) from the jet of psi at x."""
        A = self.A
        return ScalarJet(jet_x.value, jet_x.grad @ A, A.T @ jet_x.hess @ A)

    def push_jet(self, jet_z: ScalarJet) -> ScalarJet:
        """Jet of psi(x) = phi(Ainv (x - P)) from the jet of phi at z."""
        Ai = self.Ainv
        return ScalarJet(jet_z.value, jet_z.grad @ Ai, Ai.T @ jet_z.hess @ Ai)


def frame_chart(P: ArrayLike, h: float) -> FramedChart:
    a, b = (float(v) for v in np.asarray(P, dtype=float))
    R = math.hypot(a, b)
    if R == 0.0:
        raise DegeneratePoint("frame chart undefined at the origin")
    s = math.sqrt(h * h + R * R)
    A = np.array([[a * h / (R * s), -b / R], [b * h / (R * s), a / R]])
    Ainv = np.array([[a * s / (R * h), b * s / (R * h)], [-b / R, a / R]])
    return FramedChart(np.array([a, b]), A, Ainv, h / s, h)


def chart_radius_sq(z: ArrayLike, R: float, h: float) -> FloatArray:
    """|P + A z|^2 written in chart variables."""
    z = np.asarray(z, dtype=float)
    z1, z2 = z[..., 0], z[..., 1]
    s2 = h * h + R * R
    return R * R + 2.0 * R * h * z1 / math.sqrt(s2) + h * h * z1 * z1 / s2 + z2 * z2


def b_coefficients(z: ArrayLike, R: float, h: float) -> tuple[FloatArray, ...]:
    """Coefficients (c11, c22, c12, d1, d2) of B = c11 d11 + c22 d22 + c12 d12 + d1 d_1 + d2 d_2."""
    z = np.asarray(z, dtype=float)
    z1, z2 = z[..., 0], z[..., 1]
    s = math.sqrt(h * h + R * R)
    r2 = chart_radius_sq(z, R, h)
    d = h * h + r2
    w = z1 * h / s + R
    f = 2.0 * h * h / d + 1.0
    c11 = (h * h * (R * R - r2) + z2 * z2 * s * s) / (d * h * h)
    c22 = (w * w - r2) / d
    c12 = -2.0 * s / (h * d) * z2 * w
    d1 = -(z1 * h * h + R * h * s) / (h * h * d) * f
    d2 = -z2 / d * f
    return c11, c22, c12, d1, d2


def apply_B(jet: ScalarJet, z: ArrayLike, chart: FramedChart, h: float | None = None) -> FloatArray:
    h = chart.h if h is None else h
    c11, c22, c12, d1, d2 = b_coefficients(z, chart.R, h)
    H, g = jet.hess, jet.grad
    return c11 * H[..., 0, 0] + c22 * H[..., 1, 1] + c12 * H[..., 0, 1] + d1 * g[..., 0] + d2 * g[..., 1]


def apply_L_in_chart(jet: ScalarJet, z: ArrayLike, chart: FramedChart) -> FloatArray:
    """L applied to phi(Ainv(x - P)) at x = P + A z, given the z-jet of phi."""
    return jet.laplacian + apply_B(jet, z, chart)
