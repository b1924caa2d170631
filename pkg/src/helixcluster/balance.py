"""Balancing equations for the relative positions inside a cluster of helices.

Points live in the complex plane.  For circulations kappa_i the system reads

    F_i(P) = sum_{j != i} kappa_j / (P_i - P_j) = U_i,
    U_i    = kappa_i h r0 / (2 s^3) - alpha h r0 / (4 s),   s = sqrt(h^2 + r0^2).

Contracting with kappa kills the left side identically, which pins alpha.
Solutions are searched for among point sets closed under complex conjugation,
with the translation freedom removed by fixing the centroid at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

ComplexArray = NDArray[np.complex128]

SUPPORTED_PAIRS = frozenset({(2, 1), (3, 2), (4, 3), (5, 4), (6, 5)})


class ZeroTotalCirculation(ValueError):
    pass


class CoincidentPoints(ValueError):
    pass


class NewtonDiverged(RuntimeError):
    pass


class DegenerateConfiguration(RuntimeError):
    pass


class UnsupportedPair(ValueError):
    pass


@dataclass(frozen=True)
class ClusterCharges:
    kappas: tuple[float, ...]
    h: float
    r0: float

    def __post_init__(self) -> None:
        k = tuple(float(v) for v in self.kappas)
        if len(k) < 1 or any(v == 0.0 for v in k):
            raise ValueError("circulations must be nonzero")
        if not self.h > 0:
            raise ValueError("h must be positive")
        object.__setattr__(self, "kappas", k)

    @property
    def array(self) -> NDArray[np.float64]:
        return np.array(self.kappas)

    @property
    def N(self) -> int:
        return len(self.kappas)


@dataclass(frozen=True)
class ClusterConfiguration:
    points: ComplexArray
    alpha: float
    gauge: complex = 0j

    @property
    def d(self) -> float:
        return min_distance(self.points)


@dataclass
class BalanceReport:
    residual: float
    jacobian: ComplexArray
    singular_values: NDArray[np.float64]
    kernel_dim: int
    cokernel_residual: float
    iterations: int = 0
    symmetric_singular_values: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    certified: bool | None = None

    @property
    def sigma_min(self) -> float:
        s = self.symmetric_singular_values
        return float(s.min()) if s.size else float("nan")

    def to_dict(self) -> dict:
        return {
            "residual": self.residual,
            "singular_values": self.singular_values.tolist(),
            "symmetric_singular_values": self.symmetric_singular_values.tolist(),
            "kernel_dim": self.kernel_dim,
            "cokernel_residual": self.cokernel_residual,
            "iterations": self.iterations,
            "certified": self.certified,
        }


def alpha_constant(charges: ClusterCharges) -> float:
    k = charges.array
    total = float(k.sum())
    if total == 0.0:
        raise ZeroTotalCirculation("sum of circulations vanishes, alpha is undefined")
    return 2.0 / (charges.h**2 + charges.r0**2) * float(k @ k) / total


def target_velocity(charges: ClusterCharges, alpha: float | None = None) -> NDArray[np.float64]:
    """The right-hand sides U_i."""
    alpha = alpha_constant(charges) if alpha is None else alpha
    h, r0 = charges.h, charges.r0
    s = math.sqrt(h * h + r0 * r0)
    return charges.array * h * r0 / (2 * s**3) - alpha * h * r0 / (4 * s)


def min_distance(points: ArrayLike) -> float:
    P = np.asarray(points, dtype=complex)
    if P.size < 2:
        return math.inf
    D = np.abs(P[:, None] - P[None, :])
    D[np.diag_indices_from(D)] = np.inf
    return float(D.min())


def _pair_terms(points: ArrayLike, power: int) -> ComplexArray:
    P = np.asarray(points, dtype=complex)
    if min_distance(P) == 0.0:
        raise CoincidentPoints("two cluster points coincide")
    D = P[:, None] - P[None, :]
    np.fill_diagonal(D, 1.0)
    T = D ** (-power)
    np.fill_diagonal(T, 0.0)
    return T


def interaction(points: ArrayLike, kappas: ArrayLike) -> ComplexArray:
    """F_i = sum_{j != i} kappa_j / (P_i - P_j)."""
    return _pair_terms(points, 1) @ np.asarray(kappas, dtype=float)


def balance_residual(config: ClusterConfiguration, charges: ClusterCharges) -> ComplexArray:
    return interaction(config.points, charges.array) - target_velocity(charges, config.alpha)


def jacobian(config: ClusterConfiguration, charges: ClusterCharges) -> ComplexArray:
    """Complex derivative dF_i/dP_j."""
    T = _pair_terms(config.points, 2)
    J = T * charges.array[None, :]
    np.fill_diagonal(J, -J.sum(axis=1))
    return J


class _SymmetricChart:
    """Real coordinates on conjugation-closed point sets.

    Each conjugate pair contributes (Re p, Im p) and each real point its
    abscissa; the residual is kept on one representative per pair.
    """

    def __init__(self, points: ComplexArray, kappas: NDArray[np.float64], tol: float) -> None:
        N = points.size
        cols: list[ComplexArray] = []
        rows: list[tuple[int, bool]] = []  # (index, take imaginary part)
        used: set[int] = set()
        for i in range(N):
            if i in used:
                continue
            if abs(points[i].imag) <= tol:
                e = np.zeros(N, complex)
                e[i] = 1.0
                cols.append(e)
                rows.append((i, False))
                used.add(i)
                continue
            mates = [j for j in range(N) if j not in used and j != i and abs(points[j] - points[i].conjugate()) <= tol]
            mates = [j for j in mates if kappas[j] == kappas[i]]
            if not mates:
                raise ValueError("point set is not symmetric under conjugation")
            j = mates[0]
            e, f = np.zeros(N, complex), np.zeros(N, complex)
            e[i] = e[j] = 1.0
            f[i], f[j] = 1j, -1j
            cols += [e, f]
            rows += [(i, False), (i, True)]
            used |= {i, j}
        self.M = np.array(cols).T
        self.rows = rows

    def coords(self, points: ComplexArray) -> NDArray[np.float64]:
        return np.linalg.lstsq(self.M, points, rcond=None)[0].real

    def points(self, v: NDArray[np.float64]) -> ComplexArray:
        return self.M @ v

    def restrict(self, vec: ComplexArray) -> NDArray[np.float64]:
        return np.array([vec[i].imag if im else vec[i].real for i, im in self.rows])

    def real_jacobian(self, J: ComplexArray) -> NDArray[np.float64]:
        JM = J @ self.M
        return np.array([JM[i].imag if im else JM[i].real for i, im in self.rows])


def _augmented(chart: _SymmetricChart, config: ClusterConfiguration, charges: ClusterCharges):
    r = balance_residual(config, charges)
    e = np.append(chart.restrict(r), (config.points.sum() - config.gauge).real)
    Jr = np.vstack([chart.real_jacobian(jacobian(config, charges)), chart.M.sum(axis=0).real])
    return r, e, Jr


def _report(config: ClusterConfiguration, charges: ClusterCharges, iterations: int, chart: _SymmetricChart | None) -> BalanceReport:
    r = balance_residual(config, charges)
    J = jacobian(config, charges)
    sv = np.linalg.svd(J, compute_uv=False)
    kdim = int(np.sum(sv <= 1e-10 * max(sv.max(), 1e-300)))
    k = charges.array
    cok = abs(complex(k @ r) + complex(k @ target_velocity(charges, config.alpha)))
    sym = np.zeros(0)
    if chart is not None:
        _, _, Jr = _augmented(chart, config, charges)
        sym = np.linalg.svd(Jr, compute_uv=False)
    return BalanceReport(float(np.abs(r).max()), J, sv, kdim, cok, iterations, sym)


def solve_configuration(
    charges: ClusterCharges,
    guess: ArrayLike,
    tol: float = 1e-12,
    max_iter: int = 100,
    max_halvings: int = 30,
    alpha: float | None = None,
) -> tuple[ClusterConfiguration, BalanceReport]:
    """Damped Gauss-Newton in the conjugation-symmetric subspace with the centroid pinned at 0.

    The augmented system has one more row than unknowns (the contraction with
    kappa is redundant), so each step is a least-squares solve.
    """
    alpha = alpha_constant(charges) if alpha is None else alpha
    P = np.asarray(guess, dtype=complex).copy()
    if P.size != charges.N:
        raise ValueError("guess must have one point per circulation")
    if min_distance(P) == 0.0:
        raise CoincidentPoints("initial guess has coincident points")
    scale = max(1.0, float(np.abs(P).max()))
    chart = _SymmetricChart(P, charges.array, 1e-12 * scale)
    v = chart.coords(P)
    cfg = ClusterConfiguration(chart.points(v), alpha)
    for it in range(max_iter + 1):
        r, e, Jr = _augmented(chart, cfg, charges)
        if np.abs(r).max() < tol and abs(e[-1]) < tol:
            return cfg, _report(cfg, charges, it, chart)
        if it == max_iter:
            break
        dv = np.linalg.lstsq(Jr, -e, rcond=None)[0]
        step, norm0 = 1.0, np.linalg.norm(e)
        for _ in range(max_halvings + 1):
            trial = ClusterConfiguration(chart.points(v + step * dv), alpha)
            if min_distance(trial.points) >= 1e-8:
                _, e2, _ = _augmented(chart, trial, charges)
                if np.linalg.norm(e2) < norm0:
                    break
            step *= 0.5
        else:
            raise NewtonDiverged(f"no decreasing step found at iteration {it}")
        v = v + step * dv
        cfg = trial
        if cfg.d < 1e-8:
            raise NewtonDiverged("points collided during Newton iteration")
    raise NewtonDiverged(f"residual {np.abs(balance_residual(cfg, charges)).max():.3e} after {max_iter} iterations")


def nondegeneracy_certificate(
    config: ClusterConfiguration, charges: ClusterCharges, threshold: float = 1e-8, strict: bool = True
) -> BalanceReport:
    """Singular values of the full and the pinned symmetric Jacobian.

    Certified when the complex kernel is exactly the translations and the
    smallest singular value on the pinned symmetric subspace exceeds threshold.
    """
    P = np.asarray(config.points, dtype=complex)
    if min_distance(P) == 0.0:
        raise CoincidentPoints("configuration has coincident points")
    chart = _SymmetricChart(P, charges.array, 1e-9 * max(1.0, float(np.abs(P).max())))
    rep = _report(config, charges, 0, chart)
    rep.certified = bool(rep.kernel_dim == 1 and rep.sigma_min > threshold)
    if strict and not rep.certified:
        raise DegenerateConfiguration(f"sigma_min={rep.sigma_min:.3e}, kernel dimension {rep.kernel_dim}")
    return rep


def alternating_charges(m: int, n: int) -> tuple[float, ...]:
    """m positive and n negative unit charges, alternating and starting with a positive one."""
    out, pos, neg = [], m, n
    while pos or neg:
        if pos and (len(out) % 2 == 0 or not neg):
            out.append(1.0)
            pos -= 1
        else:
            out.append(-1.0)
            neg -= 1
    return tuple(out)


def line_guess(N: int, spacing: float = 1.0) -> ComplexArray:
    """Equally spaced points on the imaginary axis, centred at 0 (closed under conjugation)."""
    return 1j * spacing * (np.arange(N) - (N - 1) / 2.0)


def sb_family(m: int, n: int, h: float = 1.0, r0: float = 1.0, threshold: float = 1e-8):
    if m == n:
        raise UnsupportedPair("m must be different from n")
    if (m, n) not in SUPPORTED_PAIRS:
        raise UnsupportedPair(f"(m, n) = ({m}, {n}) is not in the supported set {sorted(SUPPORTED_PAIRS)}")
    charges = ClusterCharges(alternating_charges(m, n), h, r0)
    cfg, rep = solve_configuration(charges, line_guess(m + n))
    cert = nondegeneracy_certificate(cfg, charges, threshold, strict=False)
    rep.certified = cert.certified
    return charges, cfg, rep
