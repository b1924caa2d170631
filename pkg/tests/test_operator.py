import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fields import SUITE, fd_divergence_L
from helixcluster.operator import (
    DegeneratePoint,
    ScalarJet,
    apply_B,
    apply_L,
    apply_L_in_chart,
    b_coefficients,
    frame_chart,
    k_matrix,
)


def jet_const(c=2.0):
    return ScalarJet(c, np.zeros(2), np.zeros((2, 2)))


def test_k_matrix_examples():
    assert np.allclose(k_matrix([0, 0], 0.7), np.eye(2))
    assert np.allclose(k_matrix([1, 0], 1.0), [[0.5, 0], [0, 1]])


@settings(max_examples=50, deadline=None)
@given(st.floats(-4, 4), st.floats(-4, 4), st.floats(0.1, 3))
def test_k_matrix_spectrum(x1, x2, h):
    K = k_matrix([x1, x2], h)
    ev = np.linalg.eigvalsh(K)
    r2 = x1 * x1 + x2 * x2
    assert np.allclose(ev, sorted([h * h / (h * h + r2), 1.0]), atol=1e-12)
    assert np.linalg.det(K) == pytest.approx(h * h / (h * h + r2), rel=1e-12)


def test_apply_L_constant():
    assert apply_L(jet_const(), [0.3, 0.4], 1.0) == 0.0


def test_apply_L_linear():
    # drift coefficient at (1,0), h=1 is -(1/2)(2/2+1) = -1
    jet = ScalarJet(1.0, np.array([1.0, 0.0]), np.zeros((2, 2)))
    assert apply_L(jet, [1.0, 0.0], 1.0) == pytest.approx(-1.0, abs=1e-15)


@pytest.mark.parametrize("name", sorted(SUITE))
@pytest.mark.parametrize("h", [0.6, 1.0, 2.0])
def test_L_matches_divergence_form(name, h):
    f, jet = SUITE[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for x in rng.uniform(-1.5, 1.5, size=(4, 2)):
        exact = apply_L(jet(x), x, h)
        fd = fd_divergence_L(f, x, h, e=3e-3)
        scale = max(1.0, np.abs(jet(x).hess).max(), np.abs(jet(x).grad).max())
        assert abs(exact - fd) < 1e-6 * scale


def test_chart_examples():
    R, h = 1.3, 0.8
    s = math.sqrt(h * h + R * R)
    c = frame_chart([R, 0], h)
    assert np.allclose(c.A, [[h / s, 0], [0, 1]], atol=1e-15)
    c = frame_chart([0, R], h)
    assert np.allclose(c.A, [[0, -1], [h / s, 0]], atol=1e-15)
    c = frame_chart([math.cos(0.4), math.sin(0.4)], 1.0)
    assert c.detA == pytest.approx(1 / math.sqrt(2), rel=1e-14)
    with pytest.raises(DegeneratePoint):
        frame_chart([0, 0], 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 3))
def test_chart_inverse_and_determinant(a, b, h):
    if math.hypot(a, b) < 1e-3:
        return
    c = frame_chart([a, b], h)
    assert np.allclose(c.A @ c.Ainv, np.eye(2), atol=1e-12)
    assert np.linalg.det(c.A) == pytest.approx(h / math.sqrt(h * h + a * a + b * b), rel=1e-12)
    # at z = 0 the operator is exactly the Laplacian
    assert np.allclose(c.A.T @ np.linalg.inv(k_matrix([a, b], h)) @ c.A, np.eye(2), atol=1e-12)


def test_B_vanishes_on_constants_at_origin():
    c = frame_chart([0.9, 0.4], 1.1)
    assert apply_B(jet_const(), np.zeros(2), c) == 0.0


@pytest.mark.parametrize("name", sorted(SUITE))
def test_conjugation_identity(name):
    f, jet = SUITE[name]
    c = frame_chart([0.9, -0.5], 0.8)
    rng = np.random.default_rng(7)
    for z in rng.uniform(-0.4, 0.4, size=(5, 2)):
        x = c.to_x(z)
        Lx = apply_L(jet(x), x, c.h)
        # phi(z) = f(P + A z) differentiated numerically in z: an independent route
        phi = lambda zz: f(c.to_x(zz))  # noqa: E731
        Lz_fd = fd_divergence_L_laplace_plus_B(phi, z, c)
        Lz = apply_L_in_chart(c.pull_jet(jet(x)), z, c)
        scale = max(1.0, np.abs(jet(x).hess).max())
        assert abs(Lx - Lz) < 1e-10 * scale
        assert abs(Lx - Lz_fd) < 1e-6 * scale


def fd_divergence_L_laplace_plus_B(phi, z, chart, e=3e-3):
    from fields import fd_grad

    def d2(i, j):
        di = np.zeros(2)
        di[i] = e
        gi = lambda zz: fd_grad(phi, zz, e)[j]  # noqa: E731
        return (-gi(z + 2 * di) + 8 * gi(z + di) - 8 * gi(z - di) + gi(z - 2 * di)) / (12 * e)

    H = np.array([[d2(0, 0), d2(0, 1)], [d2(1, 0), d2(1, 1)]])
    jet = ScalarJet(phi(z), fd_grad(phi, z, e), 0.5 * (H + H.T))
    return jet.laplacian + apply_B(jet, z, chart)


def test_B_leading_coefficient():
    R, h = 1.2, 0.7
    lead = -2 * R * h / (h * h + R * R) ** 1.5
    for t in (1e-2, 1e-3):
        c11 = b_coefficients(np.array([t, 0.0]), R, h)[0]
        assert abs(c11 - lead * t) < 5 * t * t
