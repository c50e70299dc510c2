"""
Lectura y escritura de escenarios en YAML.

El documento se valida en dos pasadas:

1. estructura, con jsonschema contra scenario_schema.json (claves
   desconocidas rechazadas, tipos, campos obligatorios);
2. semántica, al construir los objetos del modelo (rangos de los datos,
   curva de mojado monótona, R >= 1, instantáneas dentro de [0, T]).

Cada pasada informa de todas las violaciones a la vez; en la segunda, una
sección inválida no impide comprobar las demás.

Sin sección kernel, el núcleo es triangular con radio 0.05 * grid.length.
"""

import json
import logging
import math
import os
from functools import lru_cache

import yaml
from jsonschema import Draft7Validator

from constitutive import PermeabilityLaw, PhysParams, WettingCurve, invert_wetting
from errors import ConfigError
from mesh import GridSpec
from scenario import (
    BoundaryPhase,
    BoundaryPoint,
    BoundarySchedule,
    ScenarioConfig,
    build_fill_dry_scenario,
    build_stationary_scenario,
    scenario_violations,
)
from timestep import SolverConfig
from transport import DEFAULT_RADIUS_FRACTION, MollifierKernel

logger = logging.getLogger(__name__)

BASE_DIR = os.path.dirname(os.path.abspath(__file__))

_schema_cache = None


def load_schema():
    """Carga scenario_schema.json una sola vez"""
    global _schema_cache
    if _schema_cache is not None:
        return _schema_cache
    with open(os.path.join(BASE_DIR, "scenario_schema.json"), "r", encoding="utf-8") as f:
        _schema_cache = json.load(f)
    return _schema_cache


def _path(error):
    return "/" + "/".join(str(part) for part in error.absolute_path)


def check_schema(data):
    """Lista de violaciones estructurales con su ruta (p. ej. /boundary/left/alpha)"""
    validator = Draft7Validator(load_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    return [f"{_path(e)}: {e.message}" for e in errors]


def _build(violations, factory, **kwargs):
    try:
        return factory(**kwargs)
    except ConfigError as err:
        violations.extend(err.violations or [str(err)])
        return None


def _wetting(data):
    if data.get("kind", "linear") == "tabulated":
        return WettingCurve.tabulated(data.get("breakpoints", ()))
    return WettingCurve.linear(data.get("offset", 0.0), data.get("slope", 1.0))


def _permeability(data):
    return PermeabilityLaw(
        kind=data.get("kind", "constant"),
        k0=float(data.get("k0", 2e-4)),
        decay=float(data.get("decay", 0.0)),
        floor=float(data.get("floor", 0.0)),
    )


def _point(data, curve):
    """Punto de contorno; sin curva de mojado válida una fase dada en presión queda con s = nan"""
    phases = []
    for phase in data["phases"]:
        if "s" in phase:
            s = phase["s"]
        else:
            s = math.nan if curve is None else invert_wetting(curve, phase["p"])
        phases.append(BoundaryPhase(float(phase["start"]), float(s), float(phase["h"])))
    return BoundaryPoint(alpha=float(data["alpha"]), beta=float(data["beta"]), phases=tuple(phases))


def _field(value):
    return float(value) if isinstance(value, (int, float)) else tuple(float(v) for v in value)


def config_from_dict(data):
    """Construye un ScenarioConfig validado a partir del documento ya leído"""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(
            "el documento del escenario debe ser un diccionario", ["/: se esperaba un diccionario de secciones"]
        )
    violations = check_schema(data)
    if violations:
        raise ConfigError("el documento del escenario no cumple el esquema", violations)

    violations = []
    time = data["time"]
    grid_data = data["grid"]
    grid = _build(violations, GridSpec, cells=int(grid_data["cells"]),
                  **{k: float(v) for k, v in grid_data.items() if k != "cells"})
    physics_data = {k: (None if v is None else float(v)) for k, v in data["physics"].items()}
    physics = _build(violations, PhysParams, **physics_data)
    wetting = _build(violations, _wetting, data=data.get("wetting", {}))
    permeability = _build(violations, _permeability, data=data.get("permeability", {}))
    kernel_data = dict(data.get("kernel", {}))
    kernel_data.setdefault("radius", DEFAULT_RADIUS_FRACTION * float(grid_data.get("length", GridSpec.length)))
    kernel = _build(violations, MollifierKernel, **kernel_data)
    solver_data = dict(data.get("solver", {}))
    final_time = float(time["final"])
    solver = _build(violations, SolverConfig, final_time=final_time, steps=int(time["steps"]), **solver_data)

    snapshots = time.get("snapshots")
    if snapshots is None:
        snapshots = [final_time * k / 4 for k in (1, 2, 3, 4)]
    snapshots = tuple(float(t) for t in snapshots)
    boundary = BoundarySchedule(_point(data["boundary"]["left"], wetting), _point(data["boundary"]["right"], wetting))
    initial = data["initial"]
    initial = {"s": _field(initial["s"]), "h": _field(initial["h"]), "c_p": _field(initial.get("c_p", 0.0))}

    # Con una sección inválida se comprueba el resto con los rangos más amplios
    violations.extend(
        scenario_violations(
            boundary,
            snapshots,
            initial,
            final_time,
            s_flat=0.0 if physics is None else physics.s_flat,
            h_sharp=math.inf if physics is None else physics.h_sharp,
            n_nodes=None if grid is None else grid.cells + 1,
        )
    )
    if violations or None in (grid, physics, wetting, permeability, kernel, solver):
        raise ConfigError("escenario no válido", violations)

    return ScenarioConfig(
        grid=grid,
        physics=physics,
        wetting=wetting,
        permeability=permeability,
        kernel=kernel,
        solver=solver,
        boundary=boundary,
        snapshot_times=snapshots,
        initial_s=initial["s"],
        initial_h=initial["h"],
        initial_c_p=initial["c_p"],
        name=data.get("name", "scenario"),
    )


def parse_config(text):
    """Lee un escenario YAML; los errores de sintaxis llevan línea y columna"""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        if mark is None:
            raise ConfigError(f"YAML no válido: {err}") from err
        raise ConfigError(f"YAML no válido: {err.problem}", line=mark.line + 1, column=mark.column + 1) from err
    return config_from_dict(data)


def load_config(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def _field_out(value):
    return value if isinstance(value, float) else list(value)


def config_to_dict(cfg):
    wetting = cfg.wetting
    if wetting.kind == "linear":
        wetting_data = {"kind": "linear", "offset": wetting.offset, "slope": wetting.slope}
    else:
        wetting_data = {"kind": "tabulated", "breakpoints": [list(p) for p in wetting.breakpoints]}
    law = cfg.permeability
    solver = cfg.solver
    physics = cfg.physics

    def point(p):
        return {
            "alpha": p.alpha,
            "beta": p.beta,
            "phases": [{"start": ph.start, "s": ph.s, "h": ph.h} for ph in p.phases],
        }

    return {
        "name": cfg.name,
        "time": {"final": solver.final_time, "steps": solver.steps, "snapshots": list(cfg.snapshot_times)},
        "grid": {"cells": cfg.grid.cells, "length": cfg.grid.length, "ratio": cfg.grid.ratio},
        "physics": {
            name: getattr(physics, name)
            for name in ("rho_w", "rho_h", "m_w", "m_h", "m_p", "m_g", "gamma", "kappa", "s_flat", "h_sharp", "truncation")
        },
        "wetting": wetting_data,
        "permeability": {"kind": law.kind, "k0": law.k0, "decay": law.decay, "floor": law.floor},
        "kernel": {"radius": cfg.kernel.radius, "profile": cfg.kernel.profile},
        "solver": {
            "newton_tol": solver.newton_tol,
            "newton_max_iter": solver.newton_max_iter,
            "picard_tol": solver.picard_tol,
            "picard_max_iter": solver.picard_max_iter,
            "enforce_step_restriction": solver.enforce_step_restriction,
            "degeneracy_floor": solver.degeneracy_floor,
            "equilibrium_tol": solver.equilibrium_tol,
        },
        "boundary": {"left": point(cfg.boundary.left), "right": point(cfg.boundary.right)},
        "initial": {
            "s": _field_out(cfg.initial_s),
            "h": _field_out(cfg.initial_h),
            "c_p": _field_out(cfg.initial_c_p),
        },
    }


def dump_config(cfg):
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)


@lru_cache(maxsize=None)
def _preset_text(name):
    with open(os.path.join(BASE_DIR, f"{name}.yaml"), "r", encoding="utf-8") as f:
        return f.read()


PRESETS = {
    "fill_dry_default": lambda: parse_config(_preset_text("fill_dry_default")),
    "fill-dry": lambda: build_fill_dry_scenario(),
    "stationary": lambda: build_stationary_scenario(),
}


def load_preset(name):
    if name not in PRESETS:
        raise ConfigError(f"preset desconocido {name!r}", [f"preset debe ser uno de {sorted(PRESETS)}"])
    return PRESETS[name]()


def resolve_config(target):
    """Un nombre de preset o la ruta de un fichero YAML"""
    if target in PRESETS:
        logger.info("usando el preset %s", target)
        return load_preset(target)
    if not os.path.exists(target):
        raise ConfigError(f"no existe el fichero de configuración: {target}")
    return load_config(target)
