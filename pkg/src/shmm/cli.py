"""Command-line entry point.

Outputs go under ``--out`` or, by default, ``$SHMM_OUTPUT_ROOT`` (falling back
to ``./shmm_out``). Exit codes: 0 success, 2 configuration error, 3 solver
failure, 4 threshold miss in ``--check`` mode.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from shmm import io
from shmm.cell import MicroSolveConfig, cell_problem_oracle, hmm_effdiff
from shmm.core import MIN_POINTS_PER_WAVELENGTH, EffDiffField, SHMMConfig, assemble_macro_diffusivity
from shmm.experiments import (
    PRESETS,
    ConfigError,
    ExperimentConfig,
    check_record,
    compare_tables,
    run_experiment,
    scaling_csv,
    scaling_probe,
)
from shmm.fields import Grid2D, from_spectral
from shmm.flowgen import VARIANTS, Rect, StreamSpec, decompose, generate, restrict_to_domain
from shmm.pde import CFLError, RunSummary, SolveSetup, dns_grid, dns_solve, macro_solve, midline_profile
from shmm.shear import shear_k11, shear_k22
from shmm.tensor import DiffTensor2, NotSPDError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4
OUTPUT_ENV = "SHMM_OUTPUT_ROOT"


def _out_dir(args, sub: str) -> Path:
    root = Path(args.out) if args.out else Path(os.environ.get(OUTPUT_ENV, "shmm_out")) / sub
    root.mkdir(parents=True, exist_ok=True)
    return root


def _components(text: str | None) -> list[list[float]]:
    if not text:
        return []
    out = []
    for part in text.split(";"):
        a, m1, m2 = part.split(",")
        out.append([float(_fraction(a)), int(m1), int(m2)])
    return out


def _fraction(s: str) -> float:
    """``"1/3"`` -> 0.333..., plain numbers pass through."""
    if "/" in s:
        num, den = s.split("/")
        return float(num) / float(den)
    return float(s)


def cmd_generate(args) -> int:
    spec = StreamSpec(
        variant=args.variant,
        components=tuple(tuple(c) for c in _components(args.components)),
        kmax=args.kmax,
        decay=args.decay,
        energy=args.energy,
        direction=args.direction,
        seed=args.seed,
    )
    psi = generate(spec)
    out = _out_dir(args, "generate")
    io.write_spectral(out / "psi.csv", psi)
    if args.grid:
        io.write_grid_field(out / "psi_grid.csv", from_spectral(psi, Grid2D.unit_periodic(args.grid)))
    print(out / "psi.csv")
    return EXIT_OK


def cmd_decompose(args) -> int:
    psi = io.read_spectral(args.input)
    d = decompose(psi, args.alpha, args.levels)
    out = _out_dir(args, "decompose")
    for ell, lev in enumerate(d.levels, start=1):
        for tag, comp in lev.components().items():
            io.write_spectral(out / f"{tag}_L{ell}.csv", comp)
    print(f"{d.depth} level(s) written to {out}")
    return EXIT_OK


def _base(args) -> DiffTensor2:
    try:
        if args.base:
            return DiffTensor2.from_csv(args.base).check_spd("base")
        return DiffTensor2.iso(args.kappa).check_spd("base")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_effdiff(args) -> int:
    psi = io.read_spectral(args.input)
    base = _base(args)
    micro = MicroSolveConfig(n_micro=args.n_micro, method=args.micro_method)
    out = _out_dir(args, "effdiff")
    if args.method == "oracle":
        k = cell_problem_oracle(psi, base, n=args.oracle_n, dump_dir=str(out) if args.dump else None)
    elif args.method == "hmm":
        g = Grid2D.unit_periodic(args.n_micro)
        local = restrict_to_domain(psi, Rect((0.0, 0.0), (1.0, 1.0)), g, min_points_per_wavelength=MIN_POINTS_PER_WAVELENGTH)
        k = hmm_effdiff(local, base, replace(micro, dump_dir=str(out) if args.dump else None)).tensor
    elif args.method == "shear":
        e1, e2 = psi.support_extent()
        if e1 and e2:
            raise ConfigError("shear method needs a stream function depending on one coordinate only")
        n = 2 * psi.kmax + 2
        t = np.arange(n) / n
        if e1 == 0:
            k = shear_k11(psi.evaluate(np.zeros(1), t)[0], base)
        else:
            k = shear_k22(psi.evaluate(t, np.zeros(1))[:, 0], base)
    else:
        cfg = SHMMConfig(alpha=args.alpha, depth=args.depth, points_per_level=args.points_per_level, micro=micro)
        pts = [tuple(args.point)] if args.point else None
        field = assemble_macro_diffusivity(psi, Grid2D.unit_periodic(args.macro_n), base, cfg, pts)
        (out / "effdiff_field.csv").write_text(field.to_csv())
        k = field.mean()
    (out / f"tensor_{args.method}.csv").write_text(io.tensor_to_csv(k))
    print(k.to_csv())
    return EXIT_OK


def _setup(args, dt) -> SolveSetup:
    return SolveSetup(dns_grid(args.n), t_end=args.t_end, dt=dt, min_points_per_wavelength=args.min_ppw)


def _emit(out: Path, name: str, u, summary: RunSummary) -> None:
    io.write_grid_field(out / f"{name}_field.csv", u)
    (out / f"{name}_profile_mid.csv").write_text(io.profile_to_csv(*midline_profile(u)))
    (out / f"{name}_profile_avg.csv").write_text(io.profile_to_csv(*midline_profile(u, average=True)))
    (out / f"{name}_summary.json").write_text(json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")


def cmd_dns(args) -> int:
    psi = io.read_spectral(args.input)
    s = RunSummary()
    u = dns_solve(psi, args.kappa, _setup(args, args.dt), s)
    out = _out_dir(args, "dns")
    _emit(out, "dns", u, s)
    print(f"{s.steps} steps, u in [{s.u_min:.6f}, {s.u_max:.6f}], {s.wall_time:.1f} s")
    return EXIT_OK


def cmd_macro(args) -> int:
    if args.field:
        K = EffDiffField.from_csv(Path(args.field).read_text(), Grid2D.unit_periodic(args.macro_n))
    else:
        K = io.tensor_from_csv(Path(args.tensor).read_text())
    s = RunSummary()
    u = macro_solve(K, _setup(args, args.dt), s)
    out = _out_dir(args, "macro")
    _emit(out, "macro", u, s)
    print(f"{s.steps} steps, {s.wall_time:.1f} s")
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.preset:
        cfg = ExperimentConfig.preset(args.preset)
    elif args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        raise ConfigError("experiment needs --preset or --config")
    if args.no_dns:
        cfg = replace(cfg, dns=replace(cfg.dns, enabled=False))
    if args.seed is not None:
        cfg = replace(cfg, stream=replace(cfg.stream, seed=args.seed))
    out = _out_dir(args, cfg.name)
    rec = run_experiment(cfg, out)
    text, csv = compare_tables([rec])
    (out / "table.csv").write_text(csv)
    print(text, end="")
    for stage, msg in rec.errors.items():
        print(f"stage {stage} failed: {msg}", file=sys.stderr)
    if not rec.ok:
        return EXIT_SOLVER
    if args.check:
        miss = check_record(rec, cfg.check)
        for m in miss:
            print(f"CHECK FAIL: {m}", file=sys.stderr)
        if miss:
            return EXIT_CHECK
        print("CHECK PASS")
    return EXIT_OK


def cmd_scaling(args) -> int:
    cfg = SHMMConfig(alpha=args.alpha, points_per_level=args.points_per_level, micro=MicroSolveConfig(method=args.micro_method))
    pts = scaling_probe(sorted(args.depths), cfg)
    out = _out_dir(args, "scaling")
    text = scaling_csv(pts)
    (out / "scaling.csv").write_text(text)
    print(text, end="")
    if args.check:
        t1 = pts[0].wall_time / pts[0].depth
        lin = all(p.grid_points == args.points_per_level**2 * p.depth for p in pts)
        within = all(p.wall_time <= 2.0 * t1 * p.depth and p.wall_time >= 0.5 * t1 * p.depth for p in pts)
        if not (lin and within):
            print("CHECK FAIL: work or time not linear in depth", file=sys.stderr)
            return EXIT_CHECK
        print("CHECK PASS")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shmm", description="Seamless multiscale homogenization of advection-diffusion.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp):
        sp.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV}/<verb>)")

    g = sub.add_parser("generate", help="synthesize a stream function")
    common(g)
    g.add_argument("--variant", choices=VARIANTS, default="cellular-sum")
    g.add_argument("--components", help='cellular terms "a,m1,m2;a,m1,m2" (a may be a fraction)')
    g.add_argument("--kmax", type=int, default=50)
    g.add_argument("--decay", type=float, default=3.0)
    g.add_argument("--energy", type=float, default=2.0)
    g.add_argument("--direction", choices=("x1", "x2"), default="x2")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--grid", type=int, help="also write grid samples on an n x n torus grid")
    g.set_defaults(fn=cmd_generate)

    d = sub.add_parser("decompose", help="split a stream function into scale blocks")
    common(d)
    d.add_argument("input")
    d.add_argument("--alpha", type=int, default=5)
    d.add_argument("--levels", type=int, default=1)
    d.set_defaults(fn=cmd_decompose)

    e = sub.add_parser("effdiff", help="effective diffusivity of a stream function")
    common(e)
    e.add_argument("input")
    e.add_argument("--method", choices=("shmm", "hmm", "oracle", "shear"), default="shmm")
    e.add_argument("--kappa", type=float, default=1.0)
    e.add_argument("--base", help="base tensor as k11,k12,k22 (overrides --kappa)")
    e.add_argument("--alpha", type=int, default=5)
    e.add_argument("--depth", type=int, default=2)
    e.add_argument("--macro-n", type=int, default=10)
    e.add_argument("--point", type=int, nargs=2, metavar=("I", "J"))
    e.add_argument("--points-per-level", type=int, default=64)
    e.add_argument("--n-micro", type=int, default=64)
    e.add_argument("--micro-method", choices=("evolve", "direct"), default="evolve")
    e.add_argument("--oracle-n", type=int, default=256)
    e.add_argument("--dump", action="store_true", help="write correctors / micro fields")
    e.set_defaults(fn=cmd_effdiff)

    for name, fn in (("dns", cmd_dns), ("macro", cmd_macro)):
        s = sub.add_parser(name, help="direct simulation" if name == "dns" else "homogenized solve")
        common(s)
        if name == "dns":
            s.add_argument("input")
            s.add_argument("--kappa", type=float, default=1.0)
            s.add_argument("--dt", type=float, default=3e-6)
        else:
            src = s.add_mutually_exclusive_group(required=True)
            src.add_argument("--tensor", help="tensor CSV")
            src.add_argument("--field", help="effdiff_field CSV")
            s.add_argument("--macro-n", type=int, default=10)
            s.add_argument("--dt", type=float, default=None)
        s.add_argument("--n", type=int, default=256)
        s.add_argument("--t-end", type=float, default=0.1)
        s.add_argument("--min-ppw", type=float, default=10.0)
        s.set_defaults(fn=fn)

    x = sub.add_parser("experiment", help="run a configured experiment")
    common(x)
    src = x.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--config", help="TOML file with an [experiment] table")
    x.add_argument("--seed", type=int)
    x.add_argument("--no-dns", action="store_true")
    x.add_argument("--check", action="store_true", help="exit 4 if a configured threshold is missed")
    x.set_defaults(fn=cmd_experiment)

    c = sub.add_parser("scaling", help="work and wall time versus hierarchy depth")
    common(c)
    c.add_argument("--depths", type=int, nargs="+", default=[1, 2, 3])
    c.add_argument("--alpha", type=int, default=5)
    c.add_argument("--points-per-level", type=int, default=64)
    c.add_argument("--micro-method", choices=("evolve", "direct"), default="evolve")
    c.add_argument("--check", action="store_true")
    c.set_defaults(fn=cmd_scaling)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, CFLError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ArithmeticError, NotSPDError) as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        # remaining argument-level validation (grid sizes, malformed files, ...)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
