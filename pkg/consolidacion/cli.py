"""
Línea de comandos del simulador.

    python cli.py run <config|preset> --out DIR
    python cli.py preset fill-dry --T 1000 --cells 64 --steps 4000 --out DIR
    python cli.py check <config|preset>
    python cli.py converge <config|preset> --levels 3
    python cli.py oracle --cases 100

Códigos de salida: 0 correcto, 2 configuración, 3 resolvedor, 4 invariante.
Los errores se escriben en stderr como un objeto JSON.
"""

import argparse
import json
import logging
import sys

from config import dump_config, resolve_config
from constitutive import restriction_scales
from errors import ConfigError, ConsolidationError, InvariantError
from output import write_run_outputs
from scenario import build_fill_dry_scenario, build_stationary_scenario, run_scenario
from timestep import check_step_restrictions
from verification import ORACLE_TOLERANCE, convergence_study, oracle_compare_small, random_admissible_config

logger = logging.getLogger(__name__)

ORACLE_LIMIT = 1e-8


def _print_json(data, stream=None):
    print(json.dumps(data, indent=2, sort_keys=True), file=stream or sys.stdout)


def _execute(cfg, out_dir):
    try:
        snapshots, report = run_scenario(cfg)
    except ConsolidationError as err:
        partial = getattr(err, "partial", None)
        if partial is not None:
            write_run_outputs(out_dir, partial[0], partial[1], dump_config(cfg))
        raise

    files = write_run_outputs(out_dir, snapshots, report, dump_config(cfg))
    print(f"{cfg.name}: {report.steps_run} pasos, {len(files)} instantáneas en {out_dir}")
    if not report.invariants.ok:
        raise InvariantError(
            f"{len(report.invariants.violations)} violaciones de invariantes", report=report.invariants
        )
    return 0


def cmd_run(args):
    return _execute(resolve_config(args.config), args.out)


def cmd_preset(args):
    if args.name == "fill-dry":
        cfg = build_fill_dry_scenario(args.T, cells=args.cells, steps=args.steps)
    else:
        cfg = build_stationary_scenario(args.T, cells=args.cells, steps=args.steps)
    return _execute(cfg, args.out)


def cmd_check(args):
    cfg = resolve_config(args.config)
    params, solver = cfg.physics, cfg.solver
    report = check_step_restrictions(
        solver.final_time, solver.steps, params.R, params.s_flat, *restriction_scales(params)
    )
    _print_json({"name": cfg.name, "R": params.R, "restrictions": report.to_dict()})
    if solver.enforce_step_restriction and not report.saturation_satisfied:
        raise ConfigError(
            "paso de tiempo demasiado grande para el problema de saturación",
            [f"time.steps debe ser mayor que {report.lower_bound!r} (valor: {solver.steps})"],
        )
    return 0


def cmd_converge(args):
    study = convergence_study(resolve_config(args.config), levels=args.levels)
    _print_json(study.to_dict())
    return 0


def cmd_oracle(args):
    worst = 0.0
    inconclusive = []
    for seed in range(args.cases):
        result = oracle_compare_small(random_admissible_config(seed))
        if not result.conclusive:
            inconclusive.append(seed)
            continue
        worst = max(worst, result.deviation)
    _print_json(
        {
            "cases": args.cases,
            "max_deviation": worst,
            "inconclusive": inconclusive,
            "oracle_tolerance": ORACLE_TOLERANCE,
        }
    )
    if worst > ORACLE_LIMIT:
        raise InvariantError(f"desviación respecto al oráculo {worst!r} mayor que {ORACLE_LIMIT!r}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="consolidacion", description="Simulador de consolidación con agua de cal")
    parser.add_argument("-v", "--verbose", action="store_true", help="registro de depuración")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="simula un escenario desde un fichero YAML o un preset")
    run.add_argument("config")
    run.add_argument("--out", required=True)
    run.set_defaults(func=cmd_run)

    preset = commands.add_parser("preset", help="simula un escenario predefinido")
    preset.add_argument("name", choices=["fill-dry", "stationary"])
    preset.add_argument("--T", type=float, default=None)
    preset.add_argument("--cells", type=int, default=None)
    preset.add_argument("--steps", type=int, default=None)
    preset.add_argument("--out", required=True)
    preset.set_defaults(func=cmd_preset)

    check = commands.add_parser("check", help="valida una configuración y sus restricciones de paso")
    check.add_argument("config")
    check.set_defaults(func=cmd_check)

    converge = commands.add_parser("converge", help="estudio de autoconvergencia en tiempo")
    converge.add_argument("config")
    converge.add_argument("--levels", type=int, default=3)
    converge.set_defaults(func=cmd_converge)

    oracle = commands.add_parser("oracle", help="compara pasos sueltos con los oráculos densos")
    oracle.add_argument("--cases", type=int, default=100)
    oracle.set_defaults(func=cmd_oracle)
    return parser


def _preset_defaults(args):
    if args.command != "preset":
        return
    defaults = {"fill-dry": (1000.0, 64), "stationary": (10.0, 16)}[args.name]
    if args.T is None:
        args.T = defaults[0]
    if args.cells is None:
        args.cells = defaults[1]


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return exit_.code
    _preset_defaults(args)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    logger.debug("orden %s", args.command)
    try:
        return args.func(args)
    except ConsolidationError as err:
        data = err.to_dict()
        data.setdefault("violations", [])
        if isinstance(err, InvariantError) and err.report is not None:
            data["violations"] = [v.to_dict() for v in err.report.violations]
        _print_json(data, sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
