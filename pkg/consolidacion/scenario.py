"""
Simulaciones completas: calendario de contorno, escenarios predefinidos
(llenado y secado, estado estacionario) y el bucle de pasos con captura de
instantáneas y monitores de invariantes.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from constitutive import PermeabilityLaw, PhysParams, WettingCurve, restriction_scales
from diagnostics import (
    InvariantReport,
    check_hydroxide_ceiling,
    check_ledgers,
    check_precipitate_monotone,
    check_state_bounds,
    check_truncation,
    check_velocity_bound,
)
from errors import ConfigError, ConsolidationError
from mesh import GridSpec
from output import Snapshot
from timestep import (
    BoundaryData,
    SolverConfig,
    State,
    Trajectory,
    advance_one_step,
    check_step_restrictions,
)
from transport import MollifierKernel, velocity_bound_constant, velocity_field

logger = logging.getLogger(__name__)

# Saturación exterior de la fase de secado cuando s_flat = 0
DRYING_FLOOR = 0.01


@dataclass(frozen=True)
class BoundaryPhase:
    """Valores exteriores constantes desde start hasta la fase siguiente"""

    start: float
    s: float
    h: float


@dataclass(frozen=True)
class BoundaryPoint:
    alpha: float
    beta: float
    phases: tuple

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))

    def value_at(self, t):
        current = self.phases[0]
        for phase in self.phases[1:]:
            if phase.start <= t:
                current = phase
        return current.s, current.h

    def average(self, a, b):
        """Media exacta de (s, h) sobre [a, b]"""
        spans = []
        for k, phase in enumerate(self.phases):
            end = self.phases[k + 1].start if k + 1 < len(self.phases) else math.inf
            overlap = min(b, end) - max(a, phase.start)
            if overlap > 0:
                spans.append((overlap, phase))
        if len(spans) == 1:
            return spans[0][1].s, spans[0][1].h
        if not spans:
            return self.value_at(a)
        width = b - a
        s = sum(overlap * phase.s for overlap, phase in spans) / width
        h = sum(overlap * phase.h for overlap, phase in spans) / width
        return s, h


@dataclass(frozen=True)
class BoundarySchedule:
    left: BoundaryPoint
    right: BoundaryPoint

    @property
    def points(self):
        return self.left, self.right

    @property
    def last_switch(self):
        return max(phase.start for point in self.points for phase in point.phases)

    def at(self, t):
        return tuple(point.value_at(t) for point in self.points)


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Todo lo necesario para reproducir una simulación.

    Los datos iniciales son un valor uniforme o una tupla con un valor por nodo.
    El tiempo final y el número de pasos viven en solver.
    """

    grid: GridSpec
    physics: PhysParams
    wetting: WettingCurve
    permeability: PermeabilityLaw
    kernel: MollifierKernel
    solver: SolverConfig
    boundary: BoundarySchedule
    snapshot_times: tuple
    initial_s: object = 0.0
    initial_h: object = 0.0
    initial_c_p: object = 0.0
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        for name in ("initial_s", "initial_h", "initial_c_p"):
            value = getattr(self, name)
            if np.isscalar(value):
                object.__setattr__(self, name, float(value))
            else:
                object.__setattr__(self, name, tuple(float(v) for v in value))

    @property
    def final_time(self):
        return self.solver.final_time

    def _initial_field(self, value, n_nodes):
        if np.isscalar(value):
            return np.full(n_nodes, float(value))
        return np.array(value, dtype=float)

    def initial_state(self, grid):
        n = grid.n_nodes
        s = self._initial_field(self.initial_s, n)
        c_p = self._initial_field(self.initial_c_p, n)
        v = velocity_field(s, c_p, self.wetting, self.permeability, self.kernel, self.physics.rho_h, grid)
        return State(s=s, h=self._initial_field(self.initial_h, n), c_p=c_p, t=0.0, v=v)

    def validate(self):
        """Comprueba las hipótesis sobre los datos y devuelve el propio escenario"""
        violations = scenario_violations(
            self.boundary,
            self.snapshot_times,
            {"s": self.initial_s, "h": self.initial_h, "c_p": self.initial_c_p},
            self.final_time,
            s_flat=self.physics.s_flat,
            h_sharp=self.physics.h_sharp,
            n_nodes=self.grid.cells + 1,
        )
        if violations:
            raise ConfigError("escenario no válido", violations)
        return self


def scenario_violations(boundary, snapshot_times, initial, final_time, s_flat=0.0, h_sharp=math.inf, n_nodes=None):
    """
    Violaciones de los datos de contorno, iniciales e instantáneas.

    Sin n_nodes no se comprueba la longitud de los datos nodales. Una
    saturación exterior nan (presión que no se pudo convertir) no se
    comprueba.
    """
    violations = []
    for name, low, high in (("s", s_flat, 1.0), ("h", 0.0, h_sharp), ("c_p", 0.0, math.inf)):
        value = initial[name]
        values = [value] if np.isscalar(value) else list(value)
        if n_nodes is not None and not np.isscalar(value) and len(values) != n_nodes:
            violations.append(f"initial.{name} debe tener {n_nodes} valores, tiene {len(values)}")
        if any(not low <= v <= high for v in values):
            violations.append(f"initial.{name} debe estar en [{low!r}, {high!r}]")

    for side, point in zip(("left", "right"), boundary.points):
        where = f"boundary.{side}"
        if point.alpha < 0:
            violations.append(f"{where}.alpha debe ser >= 0")
        if point.beta < 0:
            violations.append(f"{where}.beta debe ser >= 0")
        if not point.phases:
            violations.append(f"{where}.phases no puede estar vacía")
            continue
        if point.phases[0].start != 0.0:
            violations.append(f"{where}.phases debe empezar en t=0")
        if any(b.start <= a.start for a, b in zip(point.phases, point.phases[1:])):
            violations.append(f"{where}.phases debe tener instantes de inicio crecientes")
        for k, phase in enumerate(point.phases):
            if not math.isnan(phase.s) and not s_flat <= phase.s <= 1.0:
                violations.append(f"{where}.phases[{k}].s debe estar en [s_flat, 1]")
            if not 0.0 <= phase.h <= h_sharp:
                violations.append(f"{where}.phases[{k}].h debe estar en [0, h_sharp]")

    if not any(point.alpha > 0 for point in boundary.points):
        violations.append("boundary: al menos un punto necesita alpha > 0")
    if not any(point.beta > 0 for point in boundary.points):
        violations.append("boundary: al menos un punto necesita beta > 0")
    if not snapshot_times:
        violations.append("time.snapshots no puede estar vacía")
    if any(not 0.0 <= t <= final_time for t in snapshot_times):
        violations.append("time.snapshots debe estar en [0, time.final]")
    return violations


@dataclass
class RunReport:
    steps_run: int
    tau: float
    final_time: float
    flags: list
    restrictions: object
    invariants: InvariantReport
    step_reports: list = field(default_factory=list)
    stopped_early: bool = False
    trajectory: Optional[Trajectory] = None

    def to_dict(self):
        reports = self.step_reports
        return {
            "steps_run": self.steps_run,
            "tau": self.tau,
            "final_time": self.final_time,
            "flags": list(self.flags),
            "restrictions": self.restrictions.to_dict(),
            "stopped_early": self.stopped_early,
            "max_newton_iterations": max((r.newton_iterations for r in reports), default=0),
            "max_picard_iterations": max((r.picard_iterations for r in reports), default=0),
            "newton_fallbacks": sum(1 for r in reports if r.used_fallback),
            "truncation_steps": sum(1 for r in reports if r.truncation_active),
            "invariants_ok": self.invariants.ok,
        }


def time_averaged_boundary(schedule, j, tau):
    """Datos de contorno del paso j: media de cada fase sobre [(j-1) tau, j tau]"""
    a, b = (j - 1) * tau, j * tau
    left = schedule.left.average(a, b)
    right = schedule.right.average(a, b)
    return BoundaryData(
        s_ext=(left[0], right[0]),
        h_ext=(left[1], right[1]),
        alpha=(schedule.left.alpha, schedule.right.alpha),
        beta=(schedule.left.beta, schedule.right.beta),
    )


def default_step_count(final_time, params):
    """4 * ceil(max(T R^2 gamma m^W / rho^W, T, 1)); múltiplo de 4 para que T/4 caiga en un paso"""
    reaction_scale = restriction_scales(params)[0]
    return 4 * math.ceil(max(final_time * params.R**2 * reaction_scale, final_time, 1.0))


def build_fill_dry_scenario(final_time=1000.0, cells=64, steps=None, ratio=1.05, **physics_overrides):
    """
    Ensayo de llenado y secado: en [0, T/4] el contorno x=0 está en contacto
    con agua de cal (s=1, h=1); después se seca (s=max(s_flat, 0.01), h=0).
    El extremo x=L drena hacia una saturación exterior nula y no deja pasar
    Ca(OH)2.
    """
    if not final_time > 0:
        raise ConfigError("escenario de llenado-secado no válido", ["time.final debe ser > 0"])
    physics = PhysParams(
        rho_w=1.0, rho_h=1.0, m_w=1.0, m_h=1.0, gamma=1e-2, kappa=1e-3, s_flat=0.0, h_sharp=1.0
    )
    if physics_overrides:
        physics = replace(physics, **physics_overrides)
    if steps is None:
        steps = default_step_count(final_time, physics)

    length = 1.0
    drying = max(physics.s_flat, DRYING_FLOOR)
    left = BoundaryPoint(
        alpha=1.0,
        beta=1.0,
        phases=(BoundaryPhase(0.0, 1.0, 1.0), BoundaryPhase(final_time / 4, drying, 0.0)),
    )
    right = BoundaryPoint(alpha=1.0, beta=0.0, phases=(BoundaryPhase(0.0, physics.s_flat, 0.0),))
    return ScenarioConfig(
        grid=GridSpec(cells=cells, length=length, ratio=ratio),
        physics=physics,
        wetting=WettingCurve.linear(0.0, 1.0),
        permeability=PermeabilityLaw.constant(2e-4),
        kernel=MollifierKernel.for_length(length),
        solver=SolverConfig(final_time=float(final_time), steps=steps),
        boundary=BoundarySchedule(left, right),
        snapshot_times=tuple(final_time * k / 4 for k in (1, 2, 3, 4)),
        initial_s=physics.s_flat,
        initial_h=0.0,
        initial_c_p=0.0,
        name="fill_dry",
    )


def build_stationary_scenario(final_time=10.0, level=0.5, cells=16, steps=None):
    """Sin reacción, s uniforme igual a la exterior y h nulo: punto fijo del esquema"""
    physics = PhysParams(gamma=0.0, s_flat=0.0, h_sharp=1.0)
    if steps is None:
        steps = default_step_count(final_time, physics)
    point = BoundaryPoint(alpha=1.0, beta=1.0, phases=(BoundaryPhase(0.0, level, 0.0),))
    return ScenarioConfig(
        grid=GridSpec(cells=cells, length=1.0, ratio=1.0),
        physics=physics,
        wetting=WettingCurve.linear(0.0, 1.0),
        permeability=PermeabilityLaw.constant(2e-4),
        kernel=MollifierKernel.for_length(1.0),
        solver=SolverConfig(final_time=float(final_time), steps=steps),
        boundary=BoundarySchedule(point, point),
        snapshot_times=tuple(final_time * k / 4 for k in (1, 2, 3, 4)),
        initial_s=level,
        initial_h=0.0,
        initial_c_p=0.0,
        name="stationary",
    )


def degeneracy_flags(cfg):
    flags = []
    if cfg.physics.degenerate:
        flags.append("s_flat_zero")
    exterior = [phase.s for point in cfg.boundary.points for phase in point.phases]
    if any(s <= 0 for s in exterior):
        flags.append("exterior_saturation_zero")
    if cfg.physics.s_flat < DRYING_FLOOR and DRYING_FLOOR in exterior:
        flags.append("drying_saturation_substituted")
    return flags


def snapshot_steps(cfg):
    """Paso más cercano a cada instante pedido, sin repetidos y en orden"""
    solver = cfg.solver
    if solver.final_time == 0:
        return [0]
    tau = solver.tau
    return sorted({min(solver.steps, max(0, round(t / tau))) for t in cfg.snapshot_times})


def _snapshot(state, step, grid):
    return Snapshot(
        time=state.t,
        step=step,
        x=grid.nodes.copy(),
        s=state.s.copy(),
        h=state.h.copy(),
        c_p=state.c_p.copy(),
        v=state.v.copy(),
    )


def _check_step(state, prev, step_report, cfg, grid, bound_constant):
    params = cfg.physics
    step = step_report.step
    report = check_state_bounds(state, params, step)
    report.merge(check_precipitate_monotone(prev.c_p, state.c_p, step))
    report.merge(check_ledgers(step_report, grid.n_nodes))
    report.merge(check_truncation(step_report, state, params))
    report.merge(check_velocity_bound(state, bound_constant, grid, step))
    report.merge(check_hydroxide_ceiling(state, params, step))
    return report


def run_scenario(cfg, keep_trajectory=False):
    """
    Ejecuta los n pasos del escenario. Devuelve (instantáneas, RunReport).

    Hay una instantánea por cada paso de snapshot_steps, también cuando la
    simulación se para antes por equilibrio.

    Si un paso falla, el error lleva en .partial las instantáneas ya tomadas y
    el informe hasta el último paso aceptado.
    """
    cfg.validate()
    grid = cfg.grid.build()
    params, solver = cfg.physics, cfg.solver
    tau = solver.tau

    restrictions = check_step_restrictions(
        solver.final_time, solver.steps, params.R, params.s_flat, *restriction_scales(params)
    )
    if solver.enforce_step_restriction and solver.final_time > 0 and not restrictions.saturation_satisfied:
        raise ConfigError(
            "paso de tiempo demasiado grande para el problema de saturación",
            [f"time.steps debe ser mayor que {restrictions.lower_bound!r} (valor: {solver.steps})"],
        )

    flags = degeneracy_flags(cfg)
    if restrictions.degenerate:
        flags.append("contraction_restriction_degenerate")
    for flag in flags:
        logger.warning("escenario %s: %s", cfg.name, flag)

    state = cfg.initial_state(grid)
    bound_constant = velocity_bound_constant(
        cfg.wetting, cfg.permeability, cfg.kernel, params.rho_h, grid.length
    )
    invariants = check_state_bounds(state, params, 0)
    report = RunReport(
        steps_run=0,
        tau=tau,
        final_time=solver.final_time,
        flags=flags,
        restrictions=restrictions,
        invariants=invariants,
        trajectory=Trajectory(grid, tau, [state]) if keep_trajectory else None,
    )

    pending = snapshot_steps(cfg)
    snapshots = []
    if pending[0] == 0:
        snapshots.append(_snapshot(state, 0, grid))
        pending.pop(0)

    total = solver.steps if solver.final_time > 0 else 0
    logger.info("simulando %s: %d pasos, tau=%r, %d celdas", cfg.name, total, tau, grid.n_cells)
    for j in range(1, total + 1):
        bc = time_averaged_boundary(cfg.boundary, j, tau)
        try:
            new_state, step_report = advance_one_step(
                state, bc, solver, params, grid, cfg.wetting, cfg.permeability, cfg.kernel, step=j
            )
        except ConsolidationError as err:
            err.step = j
            err.partial = (snapshots, report)
            logger.error("falló el paso %d: %s", j, err)
            raise

        invariants.merge(_check_step(new_state, state, step_report, cfg, grid, bound_constant))
        report.step_reports.append(step_report)
        report.steps_run = j
        if keep_trajectory:
            report.trajectory.states.append(new_state)

        if pending and pending[0] == j:
            snapshots.append(_snapshot(new_state, j, grid))
            pending.pop(0)

        prev, state = state, new_state
        if solver.equilibrium_tol is not None and state.t >= cfg.boundary.last_switch:
            change = float(np.max(np.abs(state.s - prev.s))) / tau
            if change < solver.equilibrium_tol:
                logger.info("equilibrio alcanzado en el paso %d (t=%r)", j, state.t)
                report.stopped_early = j < total
                break

    # Tras una parada por equilibrio cada instante pendiente conserva su paso y
    # su tiempo, con el estado de parada
    for step in pending:
        snapshots.append(replace(_snapshot(state, step, grid), time=step * tau, state_step=report.steps_run))

    logger.info(
        "terminado %s: %d pasos, %d instantáneas, invariantes %s",
        cfg.name,
        report.steps_run,
        len(snapshots),
        "ok" if invariants.ok else f"violados ({len(invariants.violations)})",
    )
    return snapshots, report
