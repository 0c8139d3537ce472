"""Command-line entry point: ``shtomo <command> [options]``.

Exit status is 0 on success, 1 on a usage error and 2 when a computation or
I/O step fails.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .forward_model import (
    MaterialParams,
    assemble_dtn_matrix,
    build_kernel_spectrum,
    read_kappa_csv,
)
from .parameters import FitError, compute_mu0, fit_parameters
from .pipeline import PipelineError, load_config, run_experiment, with_overrides

EXIT_OK, EXIT_USAGE, EXIT_COMPUTE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, help="noise RNG seed (overrides the config)")
    common.add_argument("--config", type=Path, help="experiment config (INI) or run manifest (JSON)")
    common.add_argument("--out", type=Path, help="output directory")

    material = _Parser(add_help=False)
    material.add_argument("--rho", type=float)
    material.add_argument("--mu", type=float)
    material.add_argument("--mu_s", "--mu-s", dest="mu_s", type=float)
    material.add_argument("--ell2", type=float)

    parser = _Parser(prog="shtomo", description="Forward model, imaging and parameter fitting for a disk inclusion.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("kernel", parents=[common, material], help="emit kernel coefficients as CSV")
    p.add_argument("--n-modes", type=int, default=None)

    p = sub.add_parser("matrix", parents=[common, material], help="assemble and save the DtN matrix")
    p.add_argument("--n-modes", type=int, default=None)
    p.add_argument("--n-boundary", type=int, default=None)

    sub.add_parser("reconstruct", parents=[common], help="run the imaging pipeline from a config file")

    p = sub.add_parser("fit-params", parents=[common], help="fit (mu, mu_s, ell2) to kernel CSV data")
    p.add_argument("kappa_csv", nargs="?", type=Path, help="CSV with header n,kappa_n")
    p.add_argument("--kappa", dest="kappa_opt", type=Path, help="same as the positional argument")
    p.add_argument("--rho", type=float)

    p = sub.add_parser("mu0", parents=[common, material], help="coercivity threshold report")
    p.add_argument("--b-norm", type=float, default=0.0)
    return parser


def _material(args, *, need_mu=True) -> MaterialParams:
    base = load_config(args.config).material if args.config else None
    values = {}
    for name in ("mu", "mu_s", "ell2", "rho"):
        v = getattr(args, name, None)
        if v is None and base is not None:
            v = getattr(base, name)
        if v is None and name == "mu" and not need_mu:
            v = 1.0
        if v is None:
            raise UsageError(f"missing --{name} (or a --config with [material])")
        values[name] = v
    try:
        return MaterialParams(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _config_value(args, attr, default):
    if args.config:
        return getattr(load_config(args.config), attr)
    return default


def _emit(text: str, out: Path | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)
    print(out / name)


def _cmd_kernel(args) -> int:
    params = _material(args)
    n_modes = args.n_modes or _config_value(args, "n_modes", 100)
    spec = build_kernel_spectrum(params, n_modes)
    _emit(spec.to_csv(), args.out, "kernel.csv")
    return EXIT_OK


def _cmd_matrix(args) -> int:
    params = _material(args)
    n_modes = args.n_modes or _config_value(args, "n_modes", 100)
    n_boundary = args.n_boundary or _config_value(args, "n_boundary", 128)
    A = assemble_dtn_matrix(build_kernel_spectrum(params, n_modes), n_boundary)
    if args.out is None:
        sys.stdout.write(A.to_csv())
        return EXIT_OK
    args.out.mkdir(parents=True, exist_ok=True)
    A.save(args.out / "dtn_matrix.bin")
    A.to_csv(args.out / "dtn_matrix.csv")
    print(args.out / "dtn_matrix.bin")
    print(args.out / "dtn_matrix.csv")
    return EXIT_OK


def _cmd_reconstruct(args) -> int:
    if args.config is None:
        raise UsageError("reconstruct needs --config")
    config = with_overrides(load_config(args.config), seed=args.seed, out_dir=args.out)
    manifest = run_experiment(config)
    print(manifest.outputs["manifest"])
    return EXIT_OK


def _cmd_fit(args) -> int:
    path = args.kappa_csv or args.kappa_opt
    if path is None:
        raise UsageError("fit-params needs a kappa CSV")
    rho = args.rho
    if rho is None and args.config:
        rho = load_config(args.config).material.rho
    if rho is None:
        raise UsageError("fit-params needs --rho (or a --config with [material])")
    result = fit_parameters(read_kappa_csv(path), rho)
    sys.stdout.write(result.to_text())
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "fit.csv").write_text(result.to_csv())
    return EXIT_OK


def _cmd_mu0(args) -> int:
    params = _material(args, need_mu=False)
    report = compute_mu0(params, args.b_norm)
    sys.stdout.write(report.to_text())
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "mu0.csv").write_text(report.to_csv())
    return EXIT_OK


COMMANDS = {
    "kernel": _cmd_kernel,
    "matrix": _cmd_matrix,
    "reconstruct": _cmd_reconstruct,
    "fit-params": _cmd_fit,
    "mu0": _cmd_mu0,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (PipelineError, FitError, ValueError, OSError, ArithmeticError) as exc:
        print(f"shtomo: error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
