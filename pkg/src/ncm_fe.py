"""
ncm-fe - CLI entry point.
Provides matpoint-bench, fe-bench, verify, path-scan and solve subcommands.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections.abc import Callable

import numpy as np
from pydantic import ValidationError

from .__version__ import __version__
from .benchmarks import fe_bench, matpoint_bench, path_scan_records, version_string, write_csv
from .constants import (
    ASSEMBLY_MODES,
    DEFAULT_BATCH_SIZES,
    DEFAULT_FE_ASSEMBLIES,
    DEFAULT_FE_BATCH,
    DEFAULT_FE_MODEL,
    DEFAULT_GAMMA_MAX,
    DEFAULT_MESH_SIZES,
    DEFAULT_MODEL,
    DEFAULT_PATH_STEPS,
    DEFAULT_POINT_COUNTS,
    DEFAULT_REPETITIONS,
    DEFAULT_SEED,
    DERIVATIVE_MODES,
    NEWTON_LOAD_STEPS,
)
from .errors import NcmFeError
from .logging_config import log_run_header, setup_logging
from .mesh import (
    build_quad_cache,
    build_structured_cube,
    load_bc_file,
    read_mesh,
    twist_cube_model,
)
from .models import FeModel, NewtonConfig
from .schemas import RunConfig
from .solver import newton_solve
from .verification import run_verify
from .weights import load_model

logger = logging.getLogger(__name__)


# ── Argument helpers ─────────────────────────────────────────────────────────


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"expected integers >= 1, got {text!r}")
    return values


def _choice_list(choices: tuple[str, ...]) -> Callable[[str], list[str]]:
    def parse(text: str) -> list[str]:
        values = [v.strip() for v in text.split(",") if v.strip()]
        bad = [v for v in values if v not in choices]
        if not values or bad:
            raise argparse.ArgumentTypeError(f"choose from {', '.join(choices)}; got {text!r}")
        return values

    return parse


def _config_error(source: str, exc: ValidationError) -> NcmFeError:
    err = exc.errors()[0]
    loc = ".".join(str(p) for p in err["loc"])
    return NcmFeError(f"{source}: {loc}: {err['msg']}")


def load_run_config(path: str | None) -> RunConfig:
    """Validated ``--config`` file, or an empty config when no path is given."""
    if not path:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as f:
            return RunConfig.model_validate(json.load(f))
    except FileNotFoundError:
        raise NcmFeError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise NcmFeError(f"{path}: invalid JSON ({exc})") from None
    except ValidationError as exc:
        raise _config_error(path, exc) from None


def resolve(args: argparse.Namespace) -> RunConfig:
    """Merge precedence: explicit CLI flag > ``--config`` file > built-in default (applied by callers)."""
    merged = load_run_config(getattr(args, "config", None)).model_dump()
    for key in RunConfig.model_fields:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as exc:
        raise _config_error("command line", exc) from None


def _echo(cfg: RunConfig, command: str) -> dict:
    return {"command": command, **cfg.model_dump(exclude_none=True)}


# ── Commands ─────────────────────────────────────────────────────────────────


def cmd_matpoint_bench(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    model = load_model(cfg.model or DEFAULT_MODEL)
    records = matpoint_bench(
        model,
        n_points=cfg.n_points or DEFAULT_POINT_COUNTS,
        batch_sizes=cfg.batch_sizes or DEFAULT_BATCH_SIZES,
        modes=cfg.mode or DERIVATIVE_MODES,
        repetitions=cfg.repetitions or DEFAULT_REPETITIONS,
        seed=cfg.seed if cfg.seed is not None else DEFAULT_SEED,
    )
    write_csv(cfg.out, records, config=_echo(cfg, "matpoint-bench"))
    return 0


def cmd_fe_bench(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    model = load_model(cfg.model or DEFAULT_FE_MODEL, derivative_mode=(cfg.mode or [None])[0])
    records = fe_bench(
        model,
        mesh_sizes=cfg.mesh_sizes or DEFAULT_MESH_SIZES,
        assemblies=cfg.assembly or DEFAULT_FE_ASSEMBLIES,
        batch_sizes=cfg.batch_sizes or [DEFAULT_FE_BATCH],
        workers=cfg.workers or [1],
        repetitions=cfg.repetitions or 1,
        load_steps=cfg.load_steps or NEWTON_LOAD_STEPS,
    )
    write_csv(cfg.out, records, config=_echo(cfg, "fe-bench"))
    failed = sum(1 for r in records if r.kind == "raw" and not r.converged)
    if failed:
        print(f"warning: {failed} solve(s) did not converge; see the error column", file=sys.stderr)
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    model = load_model(cfg.model) if cfg.model else None
    report = run_verify(model, seed=cfg.seed if cfg.seed is not None else DEFAULT_SEED, quick=bool(cfg.quick))
    text = report.model_dump_json(indent=2)
    if cfg.out and cfg.out != "-":
        with open(cfg.out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    else:
        print(text)
    for check in report.checks:
        if not check.passed:
            print(f"FAILED {check.name}: {check.max_error:.3e} > {check.tolerance:.1e} {check.detail}", file=sys.stderr)
    print(
        f"verify: {sum(c.passed for c in report.checks)}/{len(report.checks)} checks passed",
        file=sys.stderr,
    )
    return 0 if report.passed else 1


def cmd_path_scan(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    model = load_model(cfg.model or DEFAULT_MODEL)
    records = path_scan_records(
        model,
        gamma_max=cfg.gamma_max if cfg.gamma_max is not None else DEFAULT_GAMMA_MAX,
        steps=cfg.steps or DEFAULT_PATH_STEPS,
    )
    write_csv(cfg.out, records, config=_echo(cfg, "path-scan"), kind="path-scan")
    return 0


def _solve_problem(cfg: RunConfig) -> FeModel:
    """``cube:<n>`` without ``--bc`` is the twist cube; anything else needs a BC file."""
    mesh_spec = cfg.mesh or f"cube:{(cfg.mesh_sizes or DEFAULT_MESH_SIZES)[0]}"
    if mesh_spec.startswith("cube:"):
        try:
            n = int(mesh_spec.split(":", 1)[1])
        except ValueError:
            raise NcmFeError(f"bad structured mesh spec {mesh_spec!r}; use cube:<n>") from None
        if not cfg.bc:
            return twist_cube_model(n)
        mesh = build_structured_cube(n)
    elif not cfg.bc:
        raise NcmFeError("solve needs --bc when --mesh is a mesh file")
    else:
        mesh = read_mesh(mesh_spec)
    return FeModel(mesh=mesh, cache=build_quad_cache(mesh), dofmap=load_bc_file(cfg.bc, mesh))


def cmd_solve(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    model = load_model(cfg.model or DEFAULT_FE_MODEL, derivative_mode=(cfg.mode or [None])[0])
    fe = _solve_problem(cfg)
    d, report = newton_solve(
        model,
        fe,
        NewtonConfig(load_steps=cfg.load_steps or NEWTON_LOAD_STEPS),
        assembly=(cfg.assembly or ["batch"])[0],
        n_batch=(cfg.batch_sizes or [DEFAULT_FE_BATCH])[0],
        n_workers=(cfg.workers or [1])[0],
    )
    summary = {"version": version_string(), "config": _echo(cfg, "solve"), **vars(report)}
    if cfg.out and cfg.out != "-":
        with open(cfg.out, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["node", "x", "y", "z", "ux", "uy", "uz"])
            for node, (xyz, u) in enumerate(zip(fe.mesh.nodes, d.reshape(-1, 3), strict=True)):
                writer.writerow([node, *map(repr, map(float, xyz)), *map(repr, map(float, u))])
        with open(f"{cfg.out}.report.json", "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2)
        print(f"wrote {cfg.out} and {cfg.out}.report.json", file=sys.stderr)
    else:
        print(json.dumps(summary, indent=2))
    print(
        f"converged in {report.load_steps} load steps, {report.newton_iterations} Newton iterations; "
        f"max tr(C) = {report.max_trace_c:.3f}; |u|max = {float(np.max(np.abs(d))):.4f}",
        file=sys.stderr,
    )
    return 0


# ── Parser ───────────────────────────────────────────────────────────────────


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="JSON run config with the same keys as the flags")
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default=None,
        help="Logging verbosity (default: INFO, or value from config)",
    )
    parser.add_argument("--model", default=None, help="Weight file, bundled name, or gent-thomas")
    parser.add_argument("--out", default=None, help="Output file (default: stdout)")
    parser.add_argument("--seed", type=int, default=None, help=f"Random seed (default: {DEFAULT_SEED})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncm-fe",
        description="Batch-vectorized finite elements with neural constitutive models",
        epilog=(
            "Examples:\n"
            "  ncm-fe matpoint-bench --batch-sizes 1,32,1024 --out mp.csv\n"
            "  ncm-fe fe-bench --mesh-sizes 4,8 --assembly trad,batch --out fe.csv\n"
            "  ncm-fe verify --quick\n"
            "  ncm-fe path-scan --model cann-gent-thomas --gamma-max 0.5\n"
            "  ncm-fe solve --mesh cube:8 --out u.csv\n"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"ncm-fe {__version__}")
    sub = parser.add_subparsers(dest="command")

    mp = sub.add_parser("matpoint-bench", help="Time constitutive sweeps over batch sizes")
    _common(mp)
    mp.add_argument("--n-points", type=_int_list, default=None, help="Comma-separated point counts")
    mp.add_argument("--batch-sizes", type=_int_list, default=None, help="Comma-separated batch sizes")
    mp.add_argument("--mode", type=_choice_list(DERIVATIVE_MODES), default=None, help="cgo, fd or both")
    mp.add_argument("--repetitions", type=int, default=None)

    fe = sub.add_parser("fe-bench", help="Solve the twist cube per assembly mode and time phases")
    _common(fe)
    fe.add_argument("--mesh-sizes", type=_int_list, default=None, help="Cube subdivisions per edge")
    fe.add_argument("--assembly", type=_choice_list(ASSEMBLY_MODES), default=None)
    fe.add_argument("--batch-sizes", type=_int_list, default=None)
    fe.add_argument("--workers", type=_int_list, default=None)
    fe.add_argument("--mode", type=_choice_list(DERIVATIVE_MODES), default=None)
    fe.add_argument("--repetitions", type=int, default=None)
    fe.add_argument("--load-steps", type=int, default=None)

    ver = sub.add_parser("verify", help="Run the oracle and property checks")
    _common(ver)
    ver.add_argument("--quick", action="store_true", default=None, help="Smaller samples and meshes")

    ps = sub.add_parser("path-scan", help="Energy along the six loading paths vs Gent-Thomas")
    _common(ps)
    ps.add_argument("--gamma-max", type=float, default=None)
    ps.add_argument("--steps", type=int, default=None)

    so = sub.add_parser("solve", help="Solve a mesh + boundary-condition problem")
    _common(so)
    so.add_argument("--mesh", default=None, help="Mesh file or cube:<n> (default: twist cube)")
    so.add_argument("--bc", default=None, help="Boundary-condition JSON file")
    so.add_argument("--mesh-sizes", type=_int_list, default=None, help=argparse.SUPPRESS)
    so.add_argument("--assembly", type=_choice_list(ASSEMBLY_MODES), default=None)
    so.add_argument("--batch-sizes", type=_int_list, default=None)
    so.add_argument("--workers", type=_int_list, default=None)
    so.add_argument("--mode", type=_choice_list(DERIVATIVE_MODES), default=None)
    so.add_argument("--load-steps", type=int, default=None)
    return parser


COMMANDS: dict[str, Callable[[argparse.Namespace], int]] = {
    "matpoint-bench": cmd_matpoint_bench,
    "fe-bench": cmd_fe_bench,
    "verify": cmd_verify,
    "path-scan": cmd_path_scan,
    "solve": cmd_solve,
}


def main(argv: list[str] | None = None) -> None:
    """CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return

    setup_logging(level=args.log_level, command=args.command)
    try:
        log_run_header(args.command, resolve(args))
        code = COMMANDS[args.command](args)
    except NcmFeError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(2)
    except OSError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(2)
    logger.info("%s finished with status %d", args.command, code)
    if code:
        sys.exit(code)


if __name__ == "__main__":
    main()
