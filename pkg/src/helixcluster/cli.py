"""Command line entry point.

    helixcluster helix sample --a 1 --b 0 --h 1 --kappa 1 --s-range 0,6.28,50 --tau 0
    helixcluster config solve --m 2 --n 1 --out config.json
    helixcluster config check config.json
    helixcluster assemble --config config.json --eps 1e-3 --out assembly.json
    helixcluster residual scan --assembly assembly.json --samples 4000 --out report.json
    helixcluster rates --cluster config.json --eps 1e-2,1e-3,1e-4 --out rates.json
    helixcluster field export --assembly assembly.json --grid 64 --bounds ... --format csv --out omega.csv

JSON goes to --out when given and to stdout otherwise.  Progress is logged to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import StreamAssembly, assemble, params_from_dict, params_to_dict, rebuild_assembly
from .balance import (
    ClusterCharges,
    ClusterConfiguration,
    alpha_constant,
    balance_residual,
    line_guess,
    nondegeneracy_certificate,
    sb_family,
    solve_configuration,
)
from .helix import HelixSpec, sample_rows
from .residual import GridSpec, export_field, rate_study, residual_scan, sample_vorticity

log = logging.getLogger("helixcluster")

SIDECAR_MODES = 16  # H2 modes written next to assembly.json


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
        log.info("wrote %s", out)
    else:
        print(text)


# ---------------------------------------------------------------------------
# helix


def cmd_helix_sample(args) -> int:
    lo, hi, n = _floats(args.s_range)
    spec = HelixSpec(args.a, args.b, args.h, args.kappa)
    rows = sample_rows(spec, np.linspace(lo, hi, int(n)), args.tau)
    stream = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["s", "x1", "x2", "x3", "curvature", "torsion"])
        for row in rows:
            w.writerow([f"{v:.17g}" for v in row])
    finally:
        if args.out:
            stream.close()
    return 0


# ---------------------------------------------------------------------------
# configurations


def config_payload(charges: ClusterCharges, cfg: ClusterConfiguration, rep) -> dict:
    return {
        "kappas": list(charges.kappas),
        "h": charges.h,
        "r0": charges.r0,
        "alpha": cfg.alpha,
        "points": [[p.real, p.imag] for p in cfg.points],
        "residual": rep.residual,
        "singular_values": rep.singular_values.tolist(),
        "sigma_min": rep.sigma_min,
        "certified": rep.certified,
        "d": cfg.d,
    }


def read_config(path: str) -> tuple[ClusterCharges, ClusterConfiguration]:
    d = json.loads(Path(path).read_text())
    charges = ClusterCharges(tuple(d["kappas"]), d["h"], d["r0"])
    pts = np.array([complex(a, b) for a, b in d["points"]])
    return charges, ClusterConfiguration(pts, float(d["alpha"]))


def cmd_config_solve(args) -> int:
    if args.kappas:
        charges = ClusterCharges(tuple(_floats(args.kappas)), args.h, args.r0)
        if args.guess:
            g = json.loads(Path(args.guess).read_text())
            g = g["points"] if isinstance(g, dict) else g
            guess = np.array([complex(a, b) for a, b in g])
        else:
            guess = line_guess(charges.N)
        cfg, rep = solve_configuration(charges, guess)
        rep.certified = nondegeneracy_certificate(cfg, charges, strict=False).certified
    else:
        if args.m is None or args.n is None:
            raise SystemExit("config solve needs --m and --n, or --kappas")
        charges, cfg, rep = sb_family(args.m, args.n, args.h, args.r0)
    rep_full = nondegeneracy_certificate(cfg, charges, strict=False)
    rep.symmetric_singular_values = rep_full.symmetric_singular_values
    _emit(config_payload(charges, cfg, rep), args.out)
    return 0


def cmd_config_check(args) -> int:
    charges, cfg = read_config(args.file)
    res = float(np.abs(balance_residual(cfg, charges)).max())
    alpha_ok = math.isclose(cfg.alpha, alpha_constant(charges), rel_tol=1e-14, abs_tol=1e-14)
    out = {"residual": res, "alpha_ok": alpha_ok}
    try:
        cert = nondegeneracy_certificate(cfg, charges, strict=False)
        out.update(certified=bool(cert.certified), sigma_min=cert.sigma_min)
    except ValueError as exc:
        # e.g. a point set without the conjugation symmetry the certificate works in
        out.update(certified=False, sigma_min=None, error=str(exc))
    ok = res < args.tol and alpha_ok and out["certified"]
    out["ok"] = ok
    _emit(out, args.out)
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# assemblies


def _resolution(args) -> dict:
    kw = {}
    for name in ("K", "base_count", "band_spacing", "mu_form"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    return kw


def write_assembly(asm: StreamAssembly, path: str | Path, config: dict | None = None) -> Path:
    """assembly.json plus a CSV sidecar with the lowest H2 modes (k, r, value, d1, d2 as re/im pairs)."""
    path = Path(path)
    sidecar = path.with_suffix(".h2modes.csv")
    payload = {
        "version": __version__,
        "params": params_to_dict(asm.params),
        "summary": asm.summary(),
        "mu": asm.mu.tolist(),
        "config": config,
        "h2_modes_csv": sidecar.name,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    field = asm.H2.smooth.field
    with open(sidecar, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "r", "re", "im", "d1_re", "d1_im", "d2_re", "d2_im"])
        for k in sorted(field.modes)[: SIDECAR_MODES + 1]:
            m = field.modes[k]
            for j, r in enumerate(m.grid.nodes):
                vals = (m.samples[j], m.d1[j], m.d2[j])
                w.writerow([k, f"{r:.17g}"] + [f"{x:.17g}" for v in vals for x in (v.real, v.imag)])
    return path


def read_assembly(path: str | Path) -> StreamAssembly:
    d = json.loads(Path(path).read_text())
    asm = rebuild_assembly(params_from_dict(d["params"]), d["mu"])
    log.info("rebuilt %s, mu relation residual %.2e", path, asm.mu_residual())
    return asm


def cmd_assemble(args) -> int:
    charges, cfg = read_config(args.config)
    log.info("assembling eps=%g", args.eps)
    asm = assemble(cfg.points, charges.kappas, cfg.alpha, args.eps, charges.h, charges.r0,
                   args.delta, args.delta1, **_resolution(args))
    write_assembly(asm, args.out, json.loads(Path(args.config).read_text()))
    print(json.dumps(asm.summary(), indent=2, sort_keys=True))
    return 0


def cmd_residual_scan(args) -> int:
    asm = read_assembly(args.assembly)
    scan = residual_scan(asm, args.samples, args.seed)
    scan["mu_residual"] = asm.mu_residual()
    _emit(scan, args.out)
    return 0


def cmd_rates(args) -> int:
    charges, cfg = read_config(args.cluster)
    ladder = []
    for eps in sorted(_floats(args.eps), reverse=True):
        log.info("assembling eps=%g", eps)
        ladder.append(assemble(cfg.points, charges.kappas, cfg.alpha, eps, charges.h, charges.r0,
                               args.delta, args.delta1, **_resolution(args)))
    fits = rate_study(ladder, args.samples, args.seed)
    _emit({name: f.to_dict() for name, f in fits.items()}, args.out)
    return 0 if fits["inner"].passed and fits["outer"].passed else 1


def cmd_field_export(args) -> int:
    asm = read_assembly(args.assembly)
    if args.bounds:
        b = _floats(args.bounds)
        if len(b) != 6:
            raise SystemExit("--bounds takes lo1,lo2,lo3,hi1,hi2,hi3")
        lo, hi = tuple(b[:3]), tuple(b[3:])
    else:
        r0 = asm.params.r0
        lo, hi = (r0 - 0.5, -0.5, -0.5), (r0 + 0.5, 0.5, 0.5)
    vg = sample_vorticity(GridSpec(lo, hi, args.grid), asm)
    path = export_field(vg, args.out, args.format)
    div = vg.divergence(4)
    scale = float(np.abs(vg.omega).max())
    _emit({"path": str(path), "grid": list(vg.grid.n), "lo": list(lo), "hi": list(hi), "max_omega": scale,
           "relative_divergence": float(np.abs(div).max() / scale) if scale > 0 else 0.0}, None)
    return 0


# ---------------------------------------------------------------------------


def _add_resolution(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--delta1", type=float, default=0.03)
    p.add_argument("--K", type=int, help="angular modes of the outer solve (default 192)")
    p.add_argument("--base-count", dest="base_count", type=int)
    p.add_argument("--band-spacing", dest="band_spacing", type=float)
    p.add_argument("--mu-form", dest="mu_form", choices=["full", "truncated"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="helixcluster", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    hx = sub.add_parser("helix", help="helix geometry").add_subparsers(dest="action", required=True)
    p = hx.add_parser("sample", help="CSV samples of a vortex helix with its curvature and torsion")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, default=0.0)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--s-range", default="0,6.283185307179586,33", help="start,stop,count")
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_helix_sample)

    cf = sub.add_parser("config", help="balanced point configurations").add_subparsers(dest="action", required=True)
    p = cf.add_parser("solve", help="solve the balancing system")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--h", type=float, default=1.0)
    p.add_argument("--r0", type=float, default=1.0)
    p.add_argument("--kappas", help="comma separated circulations (instead of --m/--n)")
    p.add_argument("--guess", help="JSON file with points [[re, im], ...] or a config file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_config_solve)
    p = cf.add_parser("check", help="re-verify a configuration file")
    p.add_argument("file")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_config_check)

    p = sub.add_parser("assemble", help="assemble the first approximation for one eps")
    p.add_argument("--config", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--out", required=True)
    _add_resolution(p)
    p.set_defaults(func=cmd_assemble)

    rs = sub.add_parser("residual", help="residual diagnostics").add_subparsers(dest="action", required=True)
    p = rs.add_parser("scan", help="weighted residual sups by region")
    p.add_argument("--assembly", required=True)
    p.add_argument("--samples", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_residual_scan)

    p = sub.add_parser("rates", help="residual rates over an eps ladder")
    p.add_argument("--cluster", required=True)
    p.add_argument("--eps", default="1e-2,1e-3,1e-4")
    p.add_argument("--samples", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _add_resolution(p)
    p.set_defaults(func=cmd_rates)

    fe = sub.add_parser("field", help="3D vorticity export").add_subparsers(dest="action", required=True)
    p = fe.add_parser("export", help="sample the 3D vorticity on a grid")
    p.add_argument("--assembly", required=True)
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--bounds", help="lo1,lo2,lo3,hi1,hi2,hi3")
    p.add_argument("--format", choices=["csv", "vtk-legacy-ascii"], default="csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_field_export)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    return int(args.func(args) or 0)


if __name__ == "__main__":
    raise SystemExit(main())
