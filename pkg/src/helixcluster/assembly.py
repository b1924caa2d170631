"""The first approximate stream function of a cluster of helical filaments.

Given circulations, a balanced configuration and eps, this module places the
filaments at P_i = (r0 + s, 0) + Phat_i / |log eps|, glues the single-filament
stream functions with a cutoff around (r0, 0), solves for the global outer
correction H2 and fixes the concentration scales mu_i.  The resulting
``StreamAssembly`` evaluates Psi_0, the vorticity nonlinearity and W.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .liouville import BubbleParams, CorrectionConstants, LOG8, ee1_remainder, gamma_bubble, psi_filament
from .modes import FourierField, ModeFunction, OuterSolution, RadialGrid, outer_solve
from .operator import FramedChart, ScalarJet, apply_B, apply_L, frame_chart

FloatArray = NDArray[np.float64]


class FixedPointDiverged(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# cutoffs


def smooth_step(t: ArrayLike, rate: float = 1.0) -> tuple[FloatArray, FloatArray, FloatArray]:
    """C-infinity step from 0 (t <= 0) to 1 (t >= 1) and its first two derivatives.

    S = f(t) / (f(t) + f(1-t)) with f(t) = exp(-rate/t).  Smoothness matters here:
    the cutoff enters the outer source through its second derivatives, and any
    kink along a circle off the origin spoils the angular Fourier convergence.
    Larger rates flatten the ends at the price of a steeper middle.
    """
    t = np.asarray(t, dtype=float)
    inner = (t > 0.0) & (t < 1.0)
    tt = np.where(inner, t, 0.5)
    a, b = 1.0 / tt, 1.0 / (1.0 - tt)
    # S = 1 / (1 + e^q), q = rate (a - b)
    q = rate * (a - b)
    S = 0.5 * (1.0 - np.tanh(0.5 * q))
    dq = -rate * (a * a + b * b)
    d2q = 2.0 * rate * (a**3 - b**3)
    dS_dq = -S * (1.0 - S)
    d2S_dq2 = -dS_dq * (1.0 - 2.0 * S)
    d1 = dS_dq * dq
    d2 = d2S_dq2 * dq * dq + dS_dq * d2q
    v = np.where(inner, S, (t >= 1.0).astype(float))
    return v, np.where(inner, d1, 0.0), np.where(inner, d2, 0.0)


ETA_RATE = 2.0  # fastest angular coefficient decay at K ~ 256 among the rates tried


def eta_profile(s: ArrayLike) -> tuple[FloatArray, FloatArray, FloatArray]:
    """eta(s) = 1 for s <= 1/2, 0 for s >= 1, with derivatives."""
    v, d1, d2 = smooth_step(2.0 * np.asarray(s, dtype=float) - 1.0, ETA_RATE)
    return 1.0 - v, -2.0 * d1, -4.0 * d2


def eta0_jet(x: ArrayLike, center: ArrayLike) -> ScalarJet:
    x = np.asarray(x, dtype=float)
    d = x - np.asarray(center, dtype=float)
    rho = np.hypot(d[..., 0], d[..., 1])
    v, d1, d2 = eta_profile(rho)
    safe = np.where(rho > 0, rho, 1.0)
    e = d / safe[..., None]
    ee = e[..., :, None] * e[..., None, :]
    H = d2[..., None, None] * ee + (d1 / safe)[..., None, None] * (np.eye(2) - ee)
    return ScalarJet(v, d1[..., None] * e, H)


def eta0(x: ArrayLike, params: AssemblyParams) -> FloatArray:
    x = np.asarray(x, dtype=float)
    return eta_profile(np.hypot(x[..., 0] - params.r0, x[..., 1]))[0]


# ---------------------------------------------------------------------------
# parameters and state


@dataclass(frozen=True)
class AssemblyParams:
    eps: float
    delta: float
    delta1: float
    r0: float
    h: float
    Phat: tuple[complex, ...]
    kappas: tuple[float, ...]
    alpha: float
    s: float = 0.0
    anchor: tuple[float, float] | None = None
    K: int = 192
    base_count: int = 2048
    band_spacing: float = 1.5e-3
    local_correction: bool = True
    local_width: float = 0.3
    local_K: int = 16
    local_orders: int = 2
    mu_form: str = "full"

    def __post_init__(self) -> None:
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if len(self.Phat) != len(self.kappas):
            raise ValueError("one plane point per circulation")
        if not 0.0 < self.delta1 < self.delta**2:
            raise ValueError("delta1 must satisfy 0 < delta1 < delta^2")
        if self.mu_form not in MU_FORMS:
            raise ValueError(f"mu_form must be one of {MU_FORMS}")
        object.__setattr__(self, "Phat", tuple(complex(p) for p in self.Phat))
        object.__setattr__(self, "kappas", tuple(float(k) for k in self.kappas))
        if len(self.Phat) > 1:
            P = np.array(self.Phat)
            D = np.abs(P[:, None] - P[None, :])
            D[np.diag_indices_from(D)] = np.inf
            d = float(D.min())
            bound = math.sqrt(self.h**2 + self.r0**2) / self.h * d / 4.0
            if self.delta > bound:
                raise ValueError(f"delta={self.delta} exceeds the separation bound {bound:.4f}")

    @property
    def log_eps(self) -> float:
        """|log eps|."""
        return -math.log(self.eps)

    @property
    def anchor_point(self) -> FloatArray:
        return np.array(self.anchor if self.anchor is not None else (self.r0, 0.0), dtype=float)

    def points(self) -> FloatArray:
        P = np.array(self.Phat) / self.log_eps + (self.r0 + self.s)
        return np.stack([P.real, P.imag], axis=-1)

    def grid(self) -> RadialGrid:
        base = RadialGrid.log_spaced(1e-6, 1e3, self.base_count)
        return base.refined(max(self.r0 - 1.05, 1e-3), self.r0 + 1.05, self.band_spacing)


@dataclass
class Filaments:
    """Per-filament data that depends on the positions and scales."""

    P: FloatArray
    kappas: FloatArray
    mu: FloatArray
    eps: float
    charts: list[FramedChart]
    cc: list[CorrectionConstants]

    @staticmethod
    def build(P: FloatArray, kappas: ArrayLike, mu: ArrayLike, eps: float, h: float) -> Filaments:
        charts = [frame_chart(p, h) for p in P]
        cc = [CorrectionConstants(c.R, h) for c in charts]
        return Filaments(np.asarray(P, float), np.asarray(kappas, float), np.asarray(mu, float), eps, charts, cc)

    @property
    def N(self) -> int:
        return self.P.shape[0]

    def bubble(self, j: int) -> BubbleParams:
        return BubbleParams(self.eps, float(self.mu[j]))

    def with_mu(self, mu: ArrayLike) -> Filaments:
        return Filaments(self.P, self.kappas, np.asarray(mu, float), self.eps, self.charts, self.cc)

    def sum_jet(self, x: FloatArray) -> ScalarJet:
        """Jet of sum_j kappa_j Psi_j."""
        acc = ScalarJet.zeros(x.shape[:-1])
        for j in range(self.N):
            acc = acc + psi_filament(x, self.charts[j], self.bubble(j), self.cc[j]).scale(self.kappas[j])
        return acc

    def core_terms(self, x: FloatArray) -> FloatArray:
        """sum_j kappa_j (Delta Gamma_j + dipole_j), the exact part of L(Psi_j) in chart variables."""
        out = np.zeros(x.shape[:-1])
        for j in range(self.N):
            z = self.charts[j].to_z(x)
            l = self.eps * self.mu[j]
            d = l * l + np.sum(z * z, axis=-1)
            out += self.kappas[j] * (gamma_bubble(z, l).laplacian + self.cc[j].dipole * l * l * z[..., 0] / d**2)
        return out

    def chart_coords(self, i: int, x: ArrayLike) -> FloatArray:
        return self.charts[i].to_z(np.asarray(x, dtype=float))


def commutator_source(fil: Filaments, params: AssemblyParams):
    """Sampler for g = L(eta0 sum kappa_j Psi_j) - eta0 sum kappa_j (Delta Gamma_j + dipole_j)."""
    center = np.array([params.r0, 0.0])
    h = params.h

    def g(x: ArrayLike) -> FloatArray:
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        flat = x.reshape(-1, 2)
        out = np.zeros(flat.shape[0])
        inside = np.hypot(flat[:, 0] - center[0], flat[:, 1]) < 1.0
        if np.any(inside):
            xi = flat[inside]
            eta = eta0_jet(xi, center)
            total = apply_L(eta.times(fil.sum_jet(xi)), xi, h)
            out[inside] = total - eta.value * fil.core_terms(xi)
        return out.reshape(shape)

    return g


# with h this large the outer mode operator is the flat Laplacian to rounding
FLAT_H = 1e8


def _chunked(f, x: FloatArray, size: int = 200_000) -> FloatArray:
    shape = x.shape[:-1]
    flat = x.reshape(-1, 2)
    if flat.shape[0] <= size:
        return np.asarray(f(flat)).reshape(shape)
    return np.concatenate([f(flat[i:i + size]) for i in range(0, flat.shape[0], size)]).reshape(shape)


def _window(z: FloatArray, width: float) -> FloatArray:
    # flat to fourth order at the filament, so (1 - window) E stays O(|z|^4)
    return np.exp(-((np.sum(z * z, axis=-1) / width**2) ** 2))


def _add_solutions(a: OuterSolution, b: OuterSolution) -> OuterSolution:
    modes = {}
    for k, ma in a.field.modes.items():
        mb = b.field.modes[k]
        modes[k] = ModeFunction(k, ma.grid, ma.samples + mb.samples, ma.d1 + mb.d1, ma.d2 + mb.d2, ma.report)
    return OuterSolution(FourierField(modes, a.field.K), a.h, a.reports)


def local_correctors(fil: Filaments, width: float = 0.3, K: int = 16, count: int = 1024,
                     orders: int = 2) -> list[OuterSolution]:
    """Q_j with (Delta_z + B_j) Q_j + kappa_j w(z) E_j(z) small and smooth in the chart of filament j.

    E_j is the single-filament remainder L(psi_j) - Delta Gamma - dipole.  It is
    bounded but direction dependent at P_j, which a Fourier series about the
    origin only resolves algebraically.  About P_j itself it needs a handful of
    modes.  The variable part B_j of the operator is peeled off by iterating
    Delta Q^(n+1) = -w B_j Q^n.  Every round leaves a remainder about ten times
    smaller and one order smoother at P_j; what is left goes to the global solve.
    """
    out = []
    for j in range(fil.N):
        l = fil.eps * float(fil.mu[j])
        chart, cc, kj = fil.charts[j], fil.cc[j], float(fil.kappas[j])
        grid = RadialGrid.log_spaced(1e-3 * l, 50.0 * width, count)

        def src(z, l=l, chart=chart, cc=cc, kj=kj):
            return kj * _window(z, width) * ee1_remainder(z, l, cc, chart)

        Q = outer_solve(src, FLAT_H, grid, K=K)
        total = Q
        for _ in range(orders):
            def src_n(z, Q=Q, chart=chart):
                z = np.asarray(z, dtype=float)
                return _window(z, width) * apply_B(Q.jet(z), z, chart)

            Q = outer_solve(src_n, FLAT_H, grid, K=K)
            total = _add_solutions(total, Q)
        out.append(total)
    return out


def cut_local_jet(x: ArrayLike, local: list[OuterSolution], charts: list[FramedChart], center: FloatArray) -> ScalarJet:
    """Jet of eta0(x) sum_j Q_j(A_j^{-1}(x - P_j)), evaluated only on the support of eta0."""
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    flat = x.reshape(-1, 2)
    value, grad, hess = np.zeros(flat.shape[0]), np.zeros((flat.shape[0], 2)), np.zeros((flat.shape[0], 2, 2))
    inside = np.hypot(flat[:, 0] - center[0], flat[:, 1] - center[1]) < 1.0
    if local and np.any(inside):
        xi = flat[inside]
        acc = ScalarJet.zeros((xi.shape[0],))
        for Q, ch in zip(local, charts):
            acc = acc + ch.push_jet(Q.jet(ch.to_z(xi)))
        acc = eta0_jet(xi, center).times(acc)
        value[inside], grad[inside], hess[inside] = acc.value, acc.grad, acc.hess
    return ScalarJet(value.reshape(shape), grad.reshape(shape + (2,)), hess.reshape(shape + (2, 2)))


@dataclass
class OuterCorrection:
    """H2 = eta0(x) sum_j Q_j(A_j^{-1}(x - P_j)) + H, with H a Fourier field about the origin.

    The local part carries the singular angular structure at the filaments, so
    the source left for H is only |z| log|z| rough there.
    """

    smooth: OuterSolution
    local: list[OuterSolution]
    charts: list[FramedChart]
    center: FloatArray

    def local_jet(self, x: ArrayLike) -> ScalarJet:
        return cut_local_jet(x, self.local, self.charts, self.center)

    def jet(self, x: ArrayLike) -> ScalarJet:
        x = np.asarray(x, dtype=float)
        return self.smooth.jet(x) + self.local_jet(x)

    def value(self, x: ArrayLike) -> FloatArray:
        return self.jet(x).value

    def shifted(self, c: float) -> OuterCorrection:
        return OuterCorrection(self.smooth.shifted(c), self.local, self.charts, self.center)


def solve_H2eps(fil: Filaments, params: AssemblyParams, grid: RadialGrid | None = None) -> OuterCorrection:
    """L H2 + g = 0 for the commutator source of fil, normalized to vanish at the anchor point."""
    grid = params.grid() if grid is None else grid
    g = commutator_source(fil, params)
    center = np.array([params.r0, 0.0])
    local = local_correctors(fil, params.local_width, params.local_K, orders=params.local_orders) if params.local_correction else []

    def rest(x):
        def block(xb):
            out = g(xb)
            if local:
                out = out + apply_L(cut_local_jet(xb, local, fil.charts, center), xb, params.h)
            return out

        return _chunked(block, np.asarray(x, dtype=float))

    sol = OuterCorrection(outer_solve(rest, params.h, grid, K=params.K), local, fil.charts, center)
    return sol.shifted(-float(sol.value(params.anchor_point)))


MU_FORMS = ("full", "truncated")


def mu_relation(fil: Filaments, H2: OuterCorrection | OuterSolution, form: str = "full") -> FloatArray:
    """log mu_i from 2 kappa_i log mu_i = sum_{j != i} kappa_j Psi_j(P_i) + H2(P_i).

    "truncated" replaces Psi_j(P_i) by log(8/|z|^4)(1 + c1 z1 + c2 |z|^2) with
    z = A_j^{-1}(P_i - P_j), dropping the cubic corrector and the core width.
    The cubic term is O(|log eps|^-3) at the other filaments but it is not
    O(eps), so only the full form cancels the bubble peak of S at P_i.
    """
    if form not in MU_FORMS:
        raise ValueError(f"form must be one of {MU_FORMS}")
    out = np.empty(fil.N)
    H2P = H2.value(fil.P)
    for i in range(fil.N):
        acc = 0.0
        for j in range(fil.N):
            if j == i:
                continue
            if form == "full":
                acc += fil.kappas[j] * float(psi_filament(fil.P[i], fil.charts[j], fil.bubble(j), fil.cc[j]).value)
                continue
            z = fil.charts[j].to_z(fil.P[i])
            r2 = float(z @ z)
            cc = fil.cc[j]
            acc += fil.kappas[j] * (LOG8 - 2.0 * math.log(r2)) * (1.0 + cc.c1 * z[0] + cc.c2 * r2)
        out[i] = (acc + H2P[i]) / (2.0 * fil.kappas[i])
    return out


@dataclass
class StreamAssembly:
    params: AssemblyParams
    fil: Filaments
    H2: OuterCorrection
    sweeps: list[float] = field(default_factory=list)
    g_sup: float = 0.0

    @property
    def P(self) -> FloatArray:
        return self.fil.P

    @property
    def mu(self) -> FloatArray:
        return self.fil.mu

    @property
    def N(self) -> int:
        return self.fil.N

    def growth_index(self) -> FloatArray:
        """log mu_i^2 / log|log eps|."""
        return 2.0 * np.log(self.mu) / math.log(self.params.log_eps)

    def mu_residual(self) -> float:
        """max |log mu_i - relation_i| re-evaluated after convergence."""
        return float(np.max(np.abs(np.log(self.mu) - mu_relation(self.fil, self.H2, self.params.mu_form))))

    def summary(self) -> dict:
        p = self.params
        return {
            "eps": p.eps,
            "delta": p.delta,
            "delta1": p.delta1,
            "r0": p.r0,
            "h": p.h,
            "s": p.s,
            "alpha": p.alpha,
            "kappas": list(p.kappas),
            "Phat": [[z.real, z.imag] for z in p.Phat],
            "P": self.P.tolist(),
            "mu": self.mu.tolist(),
            "anchor": p.anchor_point.tolist(),
            "K": p.K,
            "base_count": p.base_count,
            "band_spacing": p.band_spacing,
            "local_correction": p.local_correction,
            "mu_form": p.mu_form,
            "sweeps": self.sweeps,
            "mu_residual": self.mu_residual(),
            "g_sup": self.g_sup,
        }


def solve_mu(params: AssemblyParams, max_sweeps: int = 50, tol: float = 1e-10, grid: RadialGrid | None = None) -> StreamAssembly:
    """Joint fixed point of the mu relation and the outer correction, started from mu = 1."""
    grid = params.grid() if grid is None else grid
    fil = Filaments.build(params.points(), params.kappas, np.ones(len(params.kappas)), params.eps, params.h)
    deltas: list[float] = []
    for _ in range(max_sweeps):
        H2 = solve_H2eps(fil, params, grid)
        log_mu = mu_relation(fil, H2, params.mu_form)
        if np.any(np.log(params.eps) + log_mu >= 0.0):
            raise FixedPointDiverged("eps * mu reached 1")
        step = float(np.max(np.abs(log_mu - np.log(fil.mu))))
        deltas.append(step)
        fil = fil.with_mu(np.exp(log_mu))
        if step < tol:
            asm = StreamAssembly(params, fil, H2, deltas)
            asm.g_sup = _source_sup(commutator_source(fil, params), params)
            return asm
    raise FixedPointDiverged(f"no convergence in {max_sweeps} sweeps, last delta {deltas[-1]:.3e}")


def verify_mu(asm: StreamAssembly) -> float:
    """Rebuild H2 from the final mu and re-evaluate the mu relation; returns max |log mu - relation|.

    The stored H2 was computed with the mu of the previous sweep, so this is an
    independent check that the fixed point really closed.
    """
    H2 = solve_H2eps(asm.fil, asm.params)
    return float(np.max(np.abs(np.log(asm.mu) - mu_relation(asm.fil, H2, asm.params.mu_form))))


def _source_sup(g, params: AssemblyParams, n: int = 256) -> float:
    t = np.linspace(-1.0, 1.0, n)
    X, Y = np.meshgrid(params.r0 + t, t, indexing="ij")
    return float(np.abs(g(np.stack([X, Y], axis=-1))).max())


def plane_offsets(config_points: ArrayLike, h: float, r0: float) -> tuple[complex, ...]:
    """Offsets Phat from a balanced configuration.

    The balancing system is written in the variables ((s/h) a, b), which are
    the chart coordinates of P_i - P_j times |log eps| to leading order, so the
    radial offset is rescaled by h/s.
    """
    P = np.asarray(config_points, dtype=complex)
    return tuple(P.real * (h / math.hypot(h, r0)) + 1j * P.imag)


def params_to_dict(params: AssemblyParams) -> dict:
    d = asdict(params)
    d["Phat"] = [[z.real, z.imag] for z in params.Phat]
    d["kappas"] = list(params.kappas)
    d["anchor"] = None if params.anchor is None else list(params.anchor)
    return d


def params_from_dict(d: dict) -> AssemblyParams:
    d = dict(d)
    d["Phat"] = tuple(complex(a, b) for a, b in d["Phat"])
    d["kappas"] = tuple(d["kappas"])
    if d.get("anchor") is not None:
        d["anchor"] = tuple(d["anchor"])
    return AssemblyParams(**d)


def rebuild_assembly(params: AssemblyParams, mu: ArrayLike) -> StreamAssembly:
    """StreamAssembly from stored scales: one outer solve instead of the whole fixed point.

    mu_residual() of the result tells whether the stored mu still closes the relation.
    """
    fil = Filaments.build(params.points(), params.kappas, mu, params.eps, params.h)
    H2 = solve_H2eps(fil, params)
    asm = StreamAssembly(params, fil, H2, [])
    asm.g_sup = _source_sup(commutator_source(fil, params), params)
    return asm


def assemble(config_points: ArrayLike, kappas: ArrayLike, alpha: float, eps: float, h: float, r0: float,
             delta: float = 0.2, delta1: float = 0.03, **kw) -> StreamAssembly:
    """Assembly for a balanced configuration (points in the balancing variables)."""
    params = AssemblyParams(eps, delta, delta1, r0, h, plane_offsets(config_points, h, r0),
                            tuple(np.asarray(kappas, float)), alpha, **kw)
    return solve_mu(params)


# ---------------------------------------------------------------------------
# evaluation


def psi0_eval(x: ArrayLike, asm: StreamAssembly) -> ScalarJet:
    x = np.asarray(x, dtype=float)
    eta = eta0_jet(x, (asm.params.r0, 0.0))
    return eta.times(asm.fil.sum_jet(x)) + asm.H2.jet(x)


def psi01_residual(x: ArrayLike, asm: StreamAssembly) -> FloatArray:
    """L(Psi_0) - eta0 sum kappa_j (Delta Gamma_j + dipole_j); vanishes up to the outer solve error."""
    x = np.asarray(x, dtype=float)
    return apply_L(psi0_eval(x, asm), x, asm.params.h) - eta0(x, asm.params) * asm.fil.core_terms(x)


def cutoff_thresholds(asm: StreamAssembly) -> tuple[FloatArray, float]:
    """Lower thresholds T_j (eta^j = 0 below T_j + d) and the width d = -4 log delta."""
    p = asm.params
    R2 = np.sum(asm.P**2, axis=-1)
    k = asm.fil.kappas
    T = -(p.alpha * R2 / (2 * k)) * p.log_eps + 4 * math.log(p.log_eps) + 2 * np.log(asm.mu) + LOG8
    return T, -4.0 * math.log(p.delta)


def threshold_cutoffs(u: ArrayLike, asm: StreamAssembly) -> FloatArray:
    """eta^j(u_j) for u of shape (..., N)."""
    T, d = cutoff_thresholds(asm)
    return smooth_step((np.asarray(u, dtype=float) - T - d) / d)[0]


def shifted_arguments(x: ArrayLike, asm: StreamAssembly, psi: FloatArray | None = None) -> FloatArray:
    """u_j = (Psi_0 - (alpha/2)|log eps||x|^2) / kappa_j, shape (..., N)."""
    x = np.asarray(x, dtype=float)
    p = asm.params
    psi = psi0_eval(x, asm).value if psi is None else psi
    base = psi - 0.5 * p.alpha * p.log_eps * np.sum(x * x, axis=-1)
    return base[..., None] / asm.fil.kappas


OWNER_RADIUS = 2.0  # in units of delta / |log eps|


def nearest_filament(x: ArrayLike, asm: StreamAssembly) -> NDArray[np.int64]:
    """Index of the filament with the smallest chart distance |A_j^{-1}(x - P_j)|.

    Points farther than OWNER_RADIUS * delta/|log eps| from every filament get -1.
    """
    x = np.asarray(x, dtype=float)
    d = np.stack([np.sum(asm.fil.chart_coords(j, x) ** 2, axis=-1) for j in range(asm.N)], axis=-1)
    idx = np.argmin(d, axis=-1)
    far = np.take_along_axis(d, idx[..., None], axis=-1)[..., 0] >= (OWNER_RADIUS * asm.params.delta / asm.params.log_eps) ** 2
    return np.where(far, -1, idx)


def nonlinearity_F(u: ArrayLike, asm: StreamAssembly, owner: ArrayLike | None = None) -> FloatArray:
    """sum_j eps^(2 - alpha R_j^2 / (2 kappa_j)) kappa_j eta^j(u_j) e^(u_j), evaluated in log space.

    Filaments with equal kappa, R and mu (a conjugate pair) have identical
    thresholds, so term j also fires in the core of its twin.  For kappa_j < 0
    the argument u_j grows like (alpha/2)|log eps||x|^2 and the term switches
    on again far away.  Passing owner (see nearest_filament) keeps only the
    term of the owning filament at each point; the terms vanish on the owner
    boundaries, so the result is still smooth.
    """
    u = np.asarray(u, dtype=float)
    p = asm.params
    k = asm.fil.kappas
    R2 = np.sum(asm.P**2, axis=-1)
    log_pref = (2.0 - p.alpha * R2 / (2.0 * k)) * math.log(p.eps)
    eta = threshold_cutoffs(u, asm)
    # the exponent is only needed where the cutoff is on, and is bounded there
    u = np.where(eta > 0, u, 0.0)
    if owner is not None:
        eta = np.where(np.arange(asm.N) == np.asarray(owner)[..., None], eta, 0.0)
    terms = np.where(eta > 0, k * eta * np.exp(np.where(eta > 0, log_pref + u, 0.0)), 0.0)
    return terms.sum(axis=-1)


def vorticity_W(x: ArrayLike, asm: StreamAssembly, psi: FloatArray | None = None) -> FloatArray:
    x = np.asarray(x, dtype=float)
    return nonlinearity_F(shifted_arguments(x, asm, psi), asm, nearest_filament(x, asm))


def inner_mass(i: int, asm: StreamAssembly, n_rad: int = 160, n_ang: int = 64) -> float:
    """Integral of W over the chart disk |A_i^{-1}(x - P_i)| < delta/|log eps|.

    Polar quadrature in chart variables: Gauss-Legendre in log(1 + rho/l)
    radially and the trapezoid rule in angle; dx = det A dz.
    """
    p = asm.params
    ch = asm.fil.charts[i]
    l = p.eps * asm.mu[i]
    rho_max = p.delta / p.log_eps
    xg, wg = np.polynomial.legendre.leggauss(n_rad)
    smax = math.log1p(rho_max / l)
    s = 0.5 * smax * (xg + 1.0)
    ws = 0.5 * smax * wg
    rho = l * np.expm1(s)
    wr = ws * l * np.exp(s) * rho
    th = 2 * np.pi * np.arange(n_ang) / n_ang
    z = np.stack([rho[:, None] * np.cos(th), rho[:, None] * np.sin(th)], axis=-1)
    W = vorticity_W(ch.to_x(z), asm)
    return float(ch.detA * (2 * np.pi / n_ang) * np.sum(wr[:, None] * W))
