"""Command-line surface.

Subcommands: table, bounds, moments, simulate, couple, delta. Results go to
stdout (CSV first where applicable, then one JSON document embedding a run
manifest); diagnostics go to stderr. Exit codes: 0 success, 2 usage or
domain error, 3 validity (precondition) error, 4 numerical error.

JSON is emitted with sorted keys and 17-significant-digit floats so that
parse -> re-serialize round-trips byte-identically.
"""

from __future__ import annotations

import argparse
import os
import sys
from datetime import datetime, timezone

from . import __version__
from .analytic import QuadratureSpec
from .bounds import bound_report, delta_S, delta_V
from .coupling import (
    coupling_batch,
    draws_to_csv,
    estimate_delta,
    size_bias_identity_check,
)
from .errors import NumericalError, ValidityError
from .geometry import ModelParams
from .moments import moment_set
from .simulate import VolumeMethod, batch_to_csv, run_replicates
from .stats import sandwich_test

__all__ = ["main", "to_json", "default_parallelism"]


def to_json(value, indent: int = 0) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    pad = "  " * indent
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, str):
        import json as _json

        return _json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        inner = ",\n".join(
            f"{pad}  {to_json(str(k))}: {to_json(v, indent + 1)}"
            for k, v in sorted(value.items())
        )
        return "{\n" + inner + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        inner = ",\n".join(f"{pad}  {to_json(v, indent + 1)}" for v in value)
        return "[\n" + inner + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(value)!r}")


def default_parallelism() -> int:
    env = os.environ.get("COVERAGE_STEIN_THREADS")
    if env:
        value = int(env)
        if value < 1:
            raise ValueError("COVERAGE_STEIN_THREADS must be >= 1")
        return value
    return os.cpu_count() or 1


def _manifest(command: str, args: argparse.Namespace) -> dict:
    fields = {}
    for key in ("d", "n", "rho", "R", "seed", "draws", "outer", "inner", "variant", "dims"):
        if hasattr(args, key):
            fields[key] = getattr(args, key)
    return {
        "command": command,
        "params": fields,
        "seed": getattr(args, "seed", None),
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def _emit_json(document: dict) -> None:
    sys.stdout.write(to_json(document) + "\n")


def _cmd_table(args) -> int:
    dims = [int(tok) for tok in args.dims.split(",") if tok]
    for d in dims:
        if d not in (1, 2, 3):
            raise ValueError(f"table supports dims 1,2,3 only; got {d}")
    spec = QuadratureSpec(
        absolute_tolerance=args.tolerance, relative_tolerance=args.tolerance
    )
    print(f"asymptotic Kolmogorov-bound constants at rho = {args.rho:g}")
    print(f"{'d':>2}  {'delta_V':>12}  {'delta_S':>12}")
    for d in dims:
        dv = delta_V(args.rho, d, spec)
        ds = delta_S(args.rho, d, spec)
        print(f"{d:>2}  {dv:>12.6g}  {ds:>12.6g}")
    return 0


def _cmd_bounds(args) -> int:
    params = ModelParams(d=args.d, n=args.n, rho=args.rho)
    moments = moment_set(params)
    report = bound_report(params, moments)
    _emit_json({"manifest": _manifest("bounds", args), **report.to_dict()})
    return 0


def _cmd_moments(args) -> int:
    params = ModelParams(d=args.d, n=args.n, rho=args.rho)
    moments = moment_set(params)
    _emit_json({"manifest": _manifest("moments", args), **moments.to_dict()})
    return 0


def _volume_method(name: str, d: int, mc_samples: int) -> VolumeMethod:
    if name == "auto":
        return VolumeMethod.auto(d, mc_samples)
    return VolumeMethod(name, mc_samples)


def _cmd_simulate(args) -> int:
    params = ModelParams(d=args.d, n=args.n, rho=args.rho)
    method = _volume_method(args.volume_method, args.d, args.mc_samples)
    parallelism = args.parallelism or default_parallelism()
    batch = run_replicates(params, args.R, args.seed, method, parallelism)
    sys.stdout.write(batch_to_csv(batch))
    moments = moment_set(params)
    reports = {"S": sandwich_test(params, batch, "S", moments)}
    if method.mode.startswith("exact"):
        reports["V"] = sandwich_test(params, batch, "V", moments)
    _emit_json({"manifest": _manifest("simulate", args), "sandwich": reports})
    return 0


def _cmd_couple(args) -> int:
    params = ModelParams(d=args.d, n=args.n, rho=args.rho)
    batch = coupling_batch(
        params,
        args.variant,
        args.draws,
        args.seed,
        parallelism=args.parallelism or default_parallelism(),
    )
    sys.stdout.write(draws_to_csv(batch["y"], batch["y_prime"], batch["bernoulli"]))
    identity = size_bias_identity_check(batch["y"], batch["y_prime"], seed=args.seed)
    _emit_json({"manifest": _manifest("couple", args), "identity_check": identity})
    return 0


def _cmd_delta(args) -> int:
    params = ModelParams(d=args.d, n=args.n, rho=args.rho)
    estimate = estimate_delta(
        params,
        args.variant,
        args.outer,
        args.inner,
        args.seed,
        parallelism=args.parallelism or default_parallelism(),
    )
    _emit_json({"manifest": _manifest("delta", args), **estimate.to_dict()})
    return 0


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--d", type=int, required=True, help="dimension")
    parser.add_argument("--n", type=int, required=True, help="number of points")
    parser.add_argument("--rho", type=float, required=True, help="grain radius")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coverstein",
        description="Coverage models over binomial point processes on the torus",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("table", help="asymptotic bound constants per dimension")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--dims", type=str, default="1,2,3", help="comma-separated dims")
    p.add_argument("--tolerance", type=float, default=1e-12)
    p.set_defaults(func=_cmd_table)

    p = sub.add_parser("bounds", help="finite-n and asymptotic bound constants")
    _add_model_args(p)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("moments", help="exact means and variances of V and S")
    _add_model_args(p)
    p.set_defaults(func=_cmd_moments)

    p = sub.add_parser("simulate", help="replicate batch plus sandwich test")
    _add_model_args(p)
    p.add_argument("--R", type=int, required=True, help="replicate count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallelism", type=int, default=None)
    p.add_argument(
        "--volume-method",
        choices=["auto", "exact-1d", "exact-2d", "monte-carlo"],
        default="auto",
    )
    p.add_argument("--mc-samples", type=int, default=1_000_000)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("couple", help="size-biased coupling draws")
    p.add_argument("--variant", choices=["V", "W"], required=True)
    _add_model_args(p)
    p.add_argument("--draws", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallelism", type=int, default=None)
    p.set_defaults(func=_cmd_couple)

    p = sub.add_parser("delta", help="nested estimator of the coupling Delta")
    p.add_argument("--variant", choices=["V", "W"], required=True)
    _add_model_args(p)
    p.add_argument("--outer", type=int, required=True)
    p.add_argument("--inner", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallelism", type=int, default=None)
    p.set_defaults(func=_cmd_delta)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidityError as exc:
        print(f"validity error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
