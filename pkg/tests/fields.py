"""Smooth planar test functions with analytic 2-jets, used by several test modules."""

from __future__ import annotations

import numpy as np

from helixcluster.operator import ScalarJet


def _gauss(c, s, amp=1.0):
    c = np.asarray(c, float)

    def f(x):
        x = np.asarray(x, float)
        d = x - c
        return amp * np.exp(-np.sum(d * d, axis=-1) / s**2)

    def jet(x):
        x = np.asarray(x, float)
        d = x - c
        v = f(x)
        g = -2.0 * d / s**2 * v[..., None]
        H = (4.0 * d[..., :, None] * d[..., None, :] / s**4 - 2.0 * np.eye(2) / s**2) * v[..., None, None]
        return ScalarJet(v, g, H)

    return f, jet


def _poly_cut(coef, s):
    # p(x) * exp(-|x|^2/s^2) with p quadratic: coef = (c0, c1, c2, c11, c12, c22)
    c0, c1, c2, c11, c12, c22 = coef

    def p_jet(x):
        x1, x2 = x[..., 0], x[..., 1]
        v = c0 + c1 * x1 + c2 * x2 + c11 * x1 * x1 + c12 * x1 * x2 + c22 * x2 * x2
        g = np.stack([c1 + 2 * c11 * x1 + c12 * x2, c2 + c12 * x1 + 2 * c22 * x2], axis=-1)
        H = np.broadcast_to(np.array([[2 * c11, c12], [c12, 2 * c22]]), x.shape[:-1] + (2, 2))
        return ScalarJet(v, g, H)

    gf, gj = _gauss((0.0, 0.0), s)

    def f(x):
        x = np.asarray(x, float)
        return p_jet(x).value * gf(x)

    def jet(x):
        x = np.asarray(x, float)
        return p_jet(x).times(gj(x))

    return f, jet


def _trig():
    def f(x):
        x = np.asarray(x, float)
        return np.sin(x[..., 0]) * np.cos(0.5 * x[..., 1])

    def jet(x):
        x = np.asarray(x, float)
        s1, c1 = np.sin(x[..., 0]), np.cos(x[..., 0])
        s2, c2 = np.sin(0.5 * x[..., 1]), np.cos(0.5 * x[..., 1])
        v = s1 * c2
        g = np.stack([c1 * c2, -0.5 * s1 * s2], axis=-1)
        H = np.empty(x.shape[:-1] + (2, 2))
        H[..., 0, 0] = -s1 * c2
        H[..., 1, 1] = -0.25 * s1 * c2
        H[..., 0, 1] = H[..., 1, 0] = -0.5 * c1 * s2
        return ScalarJet(v, g, H)

    return f, jet


SUITE = {
    "gauss_center": _gauss((0.0, 0.0), 1.0),
    "gauss_off": _gauss((0.8, -0.3), 0.6),
    "gauss_wide": _gauss((-0.5, 1.2), 2.0, 3.0),
    "gauss_narrow": _gauss((1.0, 0.2), 0.3),
    "poly_linear": _poly_cut((0.0, 1.0, 0.0, 0.0, 0.0, 0.0), 1.5),
    "poly_quad": _poly_cut((1.0, 0.0, 0.0, 1.0, 0.0, -1.0), 1.2),
    "poly_mixed": _poly_cut((0.3, -0.7, 0.4, 0.2, 1.1, 0.5), 0.9),
    "poly_radial": _poly_cut((0.0, 0.0, 0.0, 1.0, 0.0, 1.0), 2.0),
    "trig": _trig(),
    "gauss_far": _gauss((2.0, 2.0), 1.3),
}


def fd_grad(f, x, e=1e-2):
    x = np.asarray(x, float)
    g = np.zeros(2)
    for i in range(2):
        d = np.zeros(2)
        d[i] = e
        g[i] = (-f(x + 2 * d) + 8 * f(x + d) - 8 * f(x - d) + f(x - 2 * d)) / (12 * e)
    return g


def fd_divergence_L(f, x, h, e=1e-2):
    """Nested fourth-order differences of K grad f: an oracle for L that never sees a jet."""
    from helixcluster.operator import k_matrix

    def flux(y, i):
        return (k_matrix(y, h) @ fd_grad(f, y, e))[i]

    x = np.asarray(x, float)
    out = 0.0
    for i in range(2):
        d = np.zeros(2)
        d[i] = e
        out += (-flux(x + 2 * d, i) + 8 * flux(x + d, i) - 8 * flux(x - d, i) + flux(x - 2 * d, i)) / (12 * e)
    return out
