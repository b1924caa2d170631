import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

import helixcluster.residual as res
from helixcluster.assembly import vorticity_W
from helixcluster.liouville import LOG8, bubble_U, kernel_Z
from helixcluster.residual import (
    INNER,
    M_MOMENT,
    OUTER,
    TRANSITION,
    Envelope,
    GridSpec,
    ProjectionShift,
    RateFit,
    VorticityGrid3D,
    balance_functions,
    chart_radii,
    classify,
    coefficients_A,
    coefficients_A_gradient,
    error_S,
    export_field,
    fit_slope,
    kernel_projections,
    moment_U_gamma,
    polar_rule,
    projection_mass_check,
    read_field,
    reconstruct_vorticity,
    residual_scan,
    rotate,
    sample_points,
    sample_vorticity,
    weighted_residual,
)


# ---------------------------------------------------------------- regions and weights


def test_classify_radii(coarse_asm):
    p = coarse_asm.params
    inner, edge = p.delta**2 / p.log_eps, p.delta / p.log_eps
    ch = coarse_asm.fil.charts[1]
    z = np.array([[0.5 * inner, 0.0], [0.999 * inner, 0.0], [0.5 * (inner + edge), 0.0], [1.001 * edge, 0.0], [3 * edge, 0.0]])
    region, index = classify(ch.to_x(z), coarse_asm)
    assert list(region) == [INNER, INNER, TRANSITION, OUTER, OUTER]
    assert list(index) == [1, 1, 1, -1, -1]


def test_classify_partitions_samples(coarse_asm):
    x = sample_points(coarse_asm, 1200, seed=3)
    region, index = classify(x, coarse_asm)
    assert set(np.unique(region)) == {INNER, TRANSITION, OUTER}
    assert np.all((index == -1) == (region == OUTER))
    rad = chart_radii(x, coarse_asm)
    near = region != OUTER
    assert np.all(rad[near, index[near]] == rad[near].min(axis=1))


def test_weighted_residual_by_hand(coarse_asm):
    p = coarse_asm.params
    env = Envelope(a=0.5, nu=3.0)
    ch = coarse_asm.fil.charts[0]
    l = p.eps * coarse_asm.mu[0]
    x = np.vstack([ch.to_x(np.array([[2 * l, 0.0], [0.0, 10 * l]])), [[0.2, 2.5]]])
    smp = weighted_residual(x, coarse_asm, env)
    S = error_S(x, coarse_asm)
    assert np.array_equal(smp.raw, S)
    for k, y in enumerate((2.0, 10.0)):
        want = l * l * abs(S[k]) * (1 + y**2.5) / (l * math.log(p.log_eps))
        assert smp.weighted[k] == pytest.approx(want, rel=1e-9)
        assert smp.y[k] == pytest.approx(y, rel=1e-9)
    assert smp.weighted[2] == pytest.approx(abs(S[2]) * (1 + math.hypot(0.2, 2.5) ** 3) / p.eps, rel=1e-12)
    assert math.isnan(smp.y[2])
    assert list(smp.region) == [INNER, TRANSITION, OUTER]
    assert smp.sup(INNER, 0) == smp.weighted[0]


def test_sample_points_deterministic(coarse_asm):
    a = sample_points(coarse_asm, 500, seed=1)
    assert np.array_equal(a, sample_points(coarse_asm, 500, seed=1))
    assert not np.array_equal(a, sample_points(coarse_asm, 500, seed=2))
    assert a.shape == (500, 2)


def test_scan_records(coarse_asm):
    scan = residual_scan(coarse_asm, 1200)
    assert scan["finite"]
    assert scan["samples"] == 1200
    assert len(scan["filaments"]) == 3
    for rec in scan["filaments"]:
        assert rec["inner_count"] > 20 and rec["transition_count"] > 5
        # the inner maximum sits at the bubble scale, not at the core edge
        assert rec["inner_argmax_y"] < 50
    assert scan["inner_sup"] == max(r["inner_sup"] for r in scan["filaments"])
    assert 0 < scan["inner_sup"] < 50


def test_bubble_center_cancellation(coarse_asm, coarse_asm3):
    # eps^2 mu^2 S at P_i is O(eps mu log|log eps|): the weighted value stays bounded
    for asm in (coarse_asm, coarse_asm3):
        smp = weighted_residual(asm.P, asm)
        assert np.all(smp.region == INNER)
        assert smp.weighted.max() < 20


# ---------------------------------------------------------------- rate fits


@given(st.floats(0.3, 2.5), st.floats(0.1, 100.0))
def test_fit_slope_on_power_laws(p, c):
    eps = np.array([1e-2, 1e-3, 1e-4])
    # weighted sups carry one power of eps less than S
    assert fit_slope(eps, c * eps ** (p - 1)) == pytest.approx(p, abs=1e-9)


def test_rate_fit_fields():
    f = RateFit("inner", [1e-2, 1e-3, 1e-4], [5.0, 4.0, 6.0], 1.0, (0.8, 1.3))
    assert f.passed
    assert f.stability == pytest.approx(1.5)
    assert f.growth == pytest.approx(1.5)
    assert f.to_dict()["passed"] is True
    g = RateFit("outer", [1e-2, 1e-3, 1e-4], [5.0, 2.0, 1.0], 0.5, (1.0, math.inf))
    assert not g.passed and g.growth == 1.0


def test_rate_fit_validation():
    with pytest.raises(ValueError):
        RateFit("inner", [1e-2, 1e-3], [1.0, 1.0], 1.0, (0.8, 1.3))
    with pytest.raises(ValueError):
        RateFit("inner", [1e-4, 1e-3, 1e-2], [1.0, 1.0, 1.0], 1.0, (0.8, 1.3))


# ---------------------------------------------------------------- quadrature


def test_polar_rule_integrates_polynomials():
    y, w = polar_rule(3.0, 64, 32)
    assert np.sum(w) == pytest.approx(9 * math.pi, rel=1e-12)
    assert np.sum(w * y[:, 0] ** 2) == pytest.approx(math.pi * 3**4 / 4, rel=1e-12)
    assert abs(np.sum(w * y[:, 0])) < 1e-12


def test_projection_mass_check():
    mass, mom = projection_mass_check()
    assert mass == pytest.approx(8 * math.pi, rel=1e-9)
    assert mom == pytest.approx(M_MOMENT, rel=1e-6)


def test_moment_U_gamma_against_cartesian_quadrature():
    def f(y2, y1):
        r2 = y1 * y1 + y2 * y2
        return float(bubble_U(np.array([y1, y2]))) * (LOG8 - 2 * math.log1p(r2)) * y1 * float(kernel_Z(1, np.array([y1, y2])))

    # Cartesian quadrature over the disk |y| < L plus the radial tail beyond it
    L = 60.0
    disk = integrate.dblquad(f, -L, L, lambda t: -math.sqrt(L * L - t * t), lambda t: math.sqrt(L * L - t * t), epsabs=1e-10)[0]
    tail = integrate.quad(lambda r: math.pi * r**3 * 8 / (1 + r * r) ** 2 * (LOG8 - 2 * math.log1p(r * r)) * (-4 / (1 + r * r)),
                          L, np.inf)[0]
    assert moment_U_gamma() == pytest.approx(disk + tail, rel=1e-6)


# ---------------------------------------------------------------- coefficients A and F


def explicit_A(i, asm):
    """The explicit sums, written as a plain double loop."""
    p, fil = asm.params, asm.fil
    k, cc = fil.kappas, fil.cc
    R = math.hypot(*asm.P[i])
    a1 = p.log_eps * (4 * cc[i].c1 - p.alpha * p.h * R / (k[i] * math.sqrt(p.h**2 + R**2))) - 4 * cc[i].c1 * math.log(asm.mu[i])
    a2 = 0.0
    for j in range(asm.N):
        if j == i:
            continue
        z1, z2 = fil.charts[j].to_z(asm.P[i])
        r2 = z1 * z1 + z2 * z2
        a1 += -4 * (k[j] / k[i]) * z1 / r2 * (1 + cc[j].c1 * z1 + cc[j].c2 * r2) + (k[j] / k[i]) * math.log(8 / r2**2) * cc[j].c1
        a2 += -4 * (k[j] / k[i]) * z2 / r2
    gH = fil.charts[i].A.T @ asm.H2.jet(asm.P[i][None]).grad[0] / k[i]
    return a1 + gH[0], a2 + gH[1]


def test_coefficients_A_direct_sum(coarse_asm):
    for i in range(3):
        assert np.allclose(coefficients_A(i, coarse_asm), explicit_A(i, coarse_asm), rtol=1e-12, atol=1e-12)


def test_coefficients_A_differentiates_the_truncated_expansion(coarse_asm):
    # FD of the full pair expansion equals the explicit sums plus the terms they drop
    asm = coarse_asm
    k, cc, p = asm.fil.kappas, asm.fil.cc, asm.params
    for i in range(3):
        def pair(w):
            s = 0.0
            for j in range(asm.N):
                if j != i:
                    z = asm.fil.charts[j].to_z(asm.P[i]) + w
                    r2 = z @ z
                    s += k[j] / k[i] * (LOG8 - 2 * math.log(r2)) * (1 + cc[j].c1 * z[0] + cc[j].c2 * r2)
            return s

        e = 1e-6
        fd = np.array([(pair(e * v) - pair(-e * v)) / (2 * e) for v in np.eye(2)])
        plane = -p.alpha * p.log_eps * asm.P[i] + asm.H2.jet(asm.P[i][None]).grad[0]
        route = fd + asm.fil.charts[i].A.T @ plane / k[i]
        route[0] += 4 * cc[i].c1 * (p.log_eps - math.log(asm.mu[i]))
        dropped = np.zeros(2)
        for j in range(asm.N):
            if j != i:
                z = asm.fil.charts[j].to_z(asm.P[i])
                r2 = z @ z
                G = LOG8 - 2 * math.log(r2)
                dropped[0] += k[j] / k[i] * G * 2 * cc[j].c2 * z[0]
                dropped[1] += k[j] / k[i] * (-4 * z[1] / r2 * (cc[j].c1 * z[0] + cc[j].c2 * r2) + G * 2 * cc[j].c2 * z[1])
        assert np.allclose(route, np.array(coefficients_A(i, asm)) + dropped, atol=1e-7)


def test_coefficients_A_gradient_matches_fd(coarse_asm):
    from helixcluster.liouville import psi_filament

    asm = coarse_asm
    p, fil = asm.params, asm.fil
    for i in range(3):
        def other(x):
            x = np.asarray(x, float)[None]
            v = asm.H2.value(x)[0] - 0.5 * p.alpha * p.log_eps * float(x[0] @ x[0])
            for j in range(asm.N):
                if j != i:
                    v += fil.kappas[j] * psi_filament(x, fil.charts[j], fil.bubble(j), fil.cc[j]).value[0]
            return v / fil.kappas[i]

        ch = fil.charts[i]
        e = 1e-6
        fd = np.array([(other(asm.P[i] + ch.A @ (e * v)) - other(asm.P[i] - ch.A @ (e * v))) / (2 * e) for v in np.eye(2)])
        fd[0] += fil.cc[i].c1 * 4 * (p.log_eps - math.log(asm.mu[i]))
        assert np.allclose(coefficients_A_gradient(i, asm), fd, atol=1e-6)


def test_conjugate_cancellation(coarse_asm):
    a = [coefficients_A(i, coarse_asm) for i in range(3)]
    assert abs(a[1][1]) < 1e-6
    assert abs(a[0][1] + a[2][1]) < 1e-6
    assert a[0][0] == pytest.approx(a[2][0], abs=1e-6)
    F = [balance_functions(i, coarse_asm) for i in range(3)]
    assert F[1][1] == 0.0
    assert F[0][1] == pytest.approx(-F[2][1], abs=1e-12)


def test_balance_functions_cancel_at_balance(coarse_asm, coarse_asm3):
    # each part of F_1i is O(|log eps|); at a balanced configuration the sum is O(1)
    for asm in (coarse_asm, coarse_asm3):
        p = asm.params
        for i in range(3):
            f1, f2 = balance_functions(i, asm)
            R = math.hypot(*asm.P[i])
            s = math.sqrt(p.h**2 + R**2)
            first = p.log_eps * abs(2 * p.h * R / s**3 - p.alpha * p.h * R / (asm.fil.kappas[i] * s))
            assert abs(f1) < 0.6 * first
            assert abs(f1) < 3 and abs(f2) < 3


# ---------------------------------------------------------------- projections


def test_projections_symmetry(coarse_asm):
    c = [kernel_projections(i, coarse_asm, n_rad=256, n_ang=128) for i in range(3)]
    assert abs(c[1][2]) < 1e-12 * abs(c[1][1]) + 1e-15
    assert np.allclose(c[0][:2], c[2][:2], rtol=1e-8, atol=1e-14)
    assert c[0][2] == pytest.approx(-c[2][2], rel=1e-8)


def test_projection_shift_arithmetic():
    s = ProjectionShift(0, (-60.0, 1.0), (-70.0, 0.0))
    assert s.relative_error[0] == pytest.approx(1 / 7)
    assert s.relative_error[1] == math.inf


# ---------------------------------------------------------------- 3D field


def test_rotate():
    x = np.array([[1.0, 0.0], [0.3, -2.0]])
    assert np.allclose(rotate(x, math.pi / 2), [[0.0, 1.0], [2.0, 0.3]], atol=1e-15)
    assert np.allclose(rotate(rotate(x, 0.7), -0.7), x, atol=1e-15)


def test_reconstruction_at_filament(coarse_asm):
    P = coarse_asm.P[0]
    om = reconstruct_vorticity(np.array([[P[0], P[1], 0.0]]), coarse_asm)[0]
    W = vorticity_W(P[None], coarse_asm)[0]
    assert np.allclose(om, W * np.array([-P[1], P[0], 1.0]), rtol=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-3, 3), st.floats(-math.pi, math.pi))
def test_helical_symmetry(coarse_asm, a, b, x3, theta):
    h = coarse_asm.params.h
    x = np.array([1.0 + a, b, x3])
    xr = np.concatenate([rotate(x[:2], theta), [x3 + h * theta]])
    w, wr = reconstruct_vorticity(x[None], coarse_asm)[0], reconstruct_vorticity(xr[None], coarse_asm)[0]
    want = np.concatenate([rotate(w[:2], theta), [w[2]]])
    assert np.allclose(wr, want, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(w).max()))


def test_gridspec():
    g = GridSpec((0, 0, 0), (1, 2, 3), 3)
    assert g.n == (3, 3, 3)
    assert g.spacing == (0.5, 1.0, 1.5)
    pts = g.points().reshape(-1, 3)
    assert np.array_equal(pts[1], [0.5, 0.0, 0.0])
    assert np.array_equal(pts[3], [0.0, 1.0, 0.0])
    assert np.array_equal(pts[9], [0.0, 0.0, 1.5])
    with pytest.raises(ValueError):
        GridSpec((0, 0, 0), (1, 1, 1), (1, 4, 4))
    with pytest.raises(ValueError):
        GridSpec((0, 0, 0), (1, 0, 1), 4)


def smooth_W(x, asm):
    # a helically invariant stand-in for W: any function of the rotated plane point
    return np.exp(-4 * np.sum((x - np.array([0.8, 0.1])) ** 2, axis=-1))


def test_divergence_free_construction(monkeypatch, coarse_asm):
    monkeypatch.setattr(res, "vorticity_W", smooth_W)
    errs = {}
    for n in (17, 33):
        g = GridSpec((0.0, -0.5, -0.5), (1.0, 0.5, 0.5), n)
        vg = sample_vorticity(g, coarse_asm)
        errs[n] = np.abs(vg.divergence(4)).max() / np.abs(vg.omega).max()
        assert np.abs(vg.divergence(2)).max() / np.abs(vg.omega).max() < 0.05
    assert errs[33] < 1e-3
    # fourth-order convergence
    assert errs[17] / errs[33] > 10


def test_export_csv_and_vtk(coarse_asm, tmp_path):
    g = GridSpec((0.9, -0.4, -0.1), (1.2, 0.4, 0.1), 8)
    vg = sample_vorticity(g, coarse_asm)
    p1 = export_field(vg, tmp_path / "a.csv")
    lines = p1.read_text().splitlines()
    assert len(lines) == 513 and lines[0] == "x1,x2,x3,w1,w2,w3"
    p2 = export_field(vg, tmp_path / "b.csv")
    assert p1.read_bytes() == p2.read_bytes()
    for fmt, name in (("csv", "a.csv"), ("vtk-legacy-ascii", "a.vtk")):
        path = export_field(vg, tmp_path / name, fmt)
        pts, om = read_field(path)
        assert np.array_equal(om, vg.omega.reshape(-1, 3))
        assert np.allclose(pts, g.points().reshape(-1, 3), rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        export_field(vg, tmp_path / "x", "json")


def test_vorticity_grid_divergence_shape():
    g = GridSpec((0, 0, 0), (1, 1, 1), 9)
    vg = VorticityGrid3D(g, np.zeros((9, 9, 9, 3)))
    assert vg.divergence(4).shape == (5, 5, 5)
    assert vg.divergence(2).shape == (5, 5, 5)
    with pytest.raises(ValueError):
        vg.divergence(3)
