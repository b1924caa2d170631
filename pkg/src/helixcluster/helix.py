"""Rotating-translating circular helices and their Frenet data.

A helix with base point (a, b), pitch parameter h and circulation kappa is
parametrized by arclength s and slow time tau.  It rotates rigidly about
the vertical axis with angular speed ``sigma`` and rises with speed ``beta``,
which is exactly its self-induced binormal motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]


class DegenerateHelix(ValueError):
    """Raised when a helix has zero radius or non-positive pitch."""


@dataclass(frozen=True, slots=True)
class HelixSpec:
    a: float
    b: float
    h: float
    kappa: float = 1.0
    R: float = field(init=False)
    sigma: float = field(init=False)
    beta: float = field(init=False)

    def __post_init__(self) -> None:
        R = math.hypot(self.a, self.b)
        if not (R > 0.0):
            raise DegenerateHelix("helix radius must be positive")
        if not (self.h > 0.0):
            raise DegenerateHelix("pitch parameter h must be positive")
        denom = R * R + self.h * self.h
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "sigma", 2.0 * self.kappa * self.h / denom)
        object.__setattr__(self, "beta", 2.0 * self.kappa * R * R / denom)

    @property
    def scale(self) -> float:
        """sqrt(R^2 + h^2), the arclength per unit of phase."""
        return math.sqrt(self.R**2 + self.h**2)

    @property
    def curvature(self) -> float:
        return self.R / (self.R**2 + self.h**2)

    @property
    def torsion(self) -> float:
        return self.h / (self.R**2 + self.h**2)


@dataclass(frozen=True, slots=True)
class FrenetSample:
    point: FloatArray
    tangent: FloatArray
    normal: FloatArray
    binormal: FloatArray
    curvature: float
    torsion: float


def _phase(spec: HelixSpec, s: float, tau: float) -> float:
    return (s - spec.sigma * tau) / spec.scale


def helix_point(spec: HelixSpec, s: float, tau: float = 0.0) -> FloatArray:
    c = spec.scale
    th = _phase(spec, s, tau)
    ct, st = math.cos(th), math.sin(th)
    return np.array(
        [
            spec.a * ct - spec.b * st,
            spec.a * st + spec.b * ct,
            (spec.h * s + spec.beta * tau) / c,
        ]
    )


def helix_derivatives(spec: HelixSpec, s: float, tau: float = 0.0) -> tuple[FloatArray, FloatArray, FloatArray]:
    """First three exact arclength derivatives of the curve."""
    c = spec.scale
    th = _phase(spec, s, tau)
    ct, st = math.cos(th), math.sin(th)
    a, b = spec.a, spec.b
    d1 = np.array([-a * st - b * ct, a * ct - b * st, spec.h]) / c
    d2 = np.array([-a * ct + b * st, -a * st - b * ct, 0.0]) / c**2
    d3 = np.array([a * st + b * ct, -a * ct + b * st, 0.0]) / c**3
    return d1, d2, d3


def frenet(spec: HelixSpec, s: float, tau: float = 0.0) -> FrenetSample:
    d1, d2, d3 = helix_derivatives(spec, s, tau)
    t = d1 / np.linalg.norm(d1)
    k = float(np.linalg.norm(d2))
    n = d2 / k
    bvec = np.cross(t, n)
    cross12 = np.cross(d1, d2)
    tors = float(np.dot(cross12, d3) / np.dot(cross12, cross12))
    return FrenetSample(helix_point(spec, s, tau), t, n, bvec, k, tors)


def rotate(v: FloatArray, angle: float) -> FloatArray:
    """Rotate the horizontal part of a 2- or 3-vector counter-clockwise."""
    c, s = math.cos(angle), math.sin(angle)
    out = np.array(v, dtype=float, copy=True)
    out[0], out[1] = c * v[0] - s * v[1], s * v[0] + c * v[1]
    return out


def rigid_motion_point(spec: HelixSpec, s: float, tau: float) -> FloatArray:
    """Same point as helix_point, obtained by rotating and lifting the tau=0 curve."""
    p = rotate(helix_point(spec, s, 0.0), -spec.sigma * tau / spec.scale)
    p[2] += spec.beta * tau / spec.scale
    return p


def binormal_residual(spec: HelixSpec, s: float, tau: float, dt: float) -> float:
    """Max-norm of the central difference of tau -> gamma minus 2*kappa*curvature*binormal."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    vel = (helix_point(spec, s, tau + dt) - helix_point(spec, s, tau - dt)) / (2.0 * dt)
    fr = frenet(spec, s, tau)
    return float(np.max(np.abs(vel - 2.0 * spec.kappa * fr.curvature * fr.binormal)))


def sample_rows(spec: HelixSpec, s_values: FloatArray, tau: float) -> list[tuple[float, ...]]:
    rows = []
    for s in s_values:
        fr = frenet(spec, float(s), tau)
        rows.append((float(s), *map(float, fr.point), fr.curvature, fr.torsion))
    return rows
