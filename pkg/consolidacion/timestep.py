"""
Un paso del esquema discreto en tiempo con acoplamiento retardado.

Dentro del paso j:

1. s_j resuelve la ecuación del agua, monótona y no lineal, con h_{j-1} y
   c^P_{j-1} congelados (Newton amortiguado sobre el residuo con masas
   concentradas).
2. h_j resuelve la ecuación del Ca(OH)2 con s_{j-1} y v^R_{j-1} congelados.
   El término de entrada (h^ext - h_j)^+ se resuelve con un conjunto activo.
3. c^P_j = c^P_{j-1} + tau * gamma * m^P * h_j s_j (1 - s_j).
4. q_j y v_j se recalculan con (s_j, c^P_j) para el paso siguiente.

No hay subiteración entre s y h.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from constitutive import (
    eval_permeability,
    eval_wetting_extended,
    reaction_rate_P,
    restriction_scales,
    truncate_Q,
    wetting_slope,
)
from errors import ConfigError, InvariantError, SolverError
from mesh import cell_average
from transport import truncate_velocity, velocity_field
from tridiag import solve_tridiagonal, tridiagonal_matvec

logger = logging.getLogger(__name__)

# Un truncamiento que mueve el valor menos que esto es ruido de redondeo
TRUNCATION_SLACK = 1e-10


@dataclass
class State:
    """Campos nodales s, h, c^P en el instante t (v: velocidad de transporte)"""

    s: np.ndarray
    h: np.ndarray
    c_p: np.ndarray
    t: float = 0.0
    v: Optional[np.ndarray] = None

    def copy(self):
        return State(
            s=self.s.copy(),
            h=self.h.copy(),
            c_p=self.c_p.copy(),
            t=self.t,
            v=None if self.v is None else self.v.copy(),
        )


@dataclass(frozen=True)
class BoundaryData:
    """Datos de contorno del paso en (x=0, x=L), ya promediados en el intervalo"""

    s_ext: tuple
    h_ext: tuple
    alpha: tuple
    beta: tuple


@dataclass(frozen=True)
class SolverConfig:
    final_time: float = 1000.0
    steps: int = 4000
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    picard_tol: float = 1e-10
    picard_max_iter: int = 8
    enforce_step_restriction: bool = True
    degeneracy_floor: float = 1e-6
    equilibrium_tol: Optional[float] = None

    def __post_init__(self):
        violations = []
        if not self.final_time >= 0:
            violations.append("time.final debe ser >= 0")
        if not isinstance(self.steps, int) or self.steps < 1:
            violations.append("time.steps debe ser un entero >= 1")
        for name in ("newton_tol", "picard_tol", "degeneracy_floor"):
            if not getattr(self, name) > 0:
                violations.append(f"solver.{name} debe ser > 0")
        for name in ("newton_max_iter", "picard_max_iter"):
            if getattr(self, name) < 1:
                violations.append(f"solver.{name} debe ser >= 1")
        if self.equilibrium_tol is not None and not self.equilibrium_tol > 0:
            violations.append("solver.equilibrium_tol debe ser > 0")
        if violations:
            raise ConfigError("ajustes del resolvedor no válidos", violations)

    @property
    def tau(self):
        return self.final_time / self.steps


@dataclass
class StepReport:
    step: int
    time: float
    newton_iterations: int
    picard_iterations: int
    s_residual: float
    h_residual: float
    water_ledger: float
    hydroxide_ledger: float
    truncation: dict = field(default_factory=dict)
    used_fallback: bool = False

    @property
    def truncation_active(self):
        return any(self.truncation.values())

    def to_dict(self):
        return {
            "step": self.step,
            "time": self.time,
            "newton_iterations": self.newton_iterations,
            "picard_iterations": self.picard_iterations,
            "s_residual": self.s_residual,
            "h_residual": self.h_residual,
            "water_ledger": self.water_ledger,
            "hydroxide_ledger": self.hydroxide_ledger,
            "truncation": dict(self.truncation),
            "used_fallback": self.used_fallback,
        }


@dataclass
class Trajectory:
    """Todos los estados aceptados de una simulación, empezando por el inicial"""

    grid: object
    tau: float
    states: list = field(default_factory=list)

    @property
    def initial(self):
        return self.states[0]

    @property
    def final(self):
        return self.states[-1]

    @property
    def steps(self):
        return len(self.states) - 1


class SolveResult(NamedTuple):
    values: np.ndarray
    iterations: int
    residual: float
    used_fallback: bool = False


@dataclass(frozen=True)
class StepRestrictionReport:
    steps: int
    monotone_bound: float
    lower_bound: float
    contraction_bound: float
    satisfied: bool
    saturation_satisfied: bool
    degenerate: bool

    def __bool__(self):
        return self.satisfied

    @property
    def required(self):
        return max(self.lower_bound, self.contraction_bound)

    def to_dict(self):
        return {
            "steps": self.steps,
            "monotone_bound": self.monotone_bound,
            "lower_bound": self.lower_bound,
            "contraction_bound": self.contraction_bound,
            "satisfied": self.satisfied,
            "saturation_satisfied": self.saturation_satisfied,
            "degenerate": self.degenerate,
        }


def check_step_restrictions(final_time, steps, R, s_flat, reaction_scale=1.0, transport_scale=1.0):
    """
    Restricciones sobre el número de pasos n = T / tau:

        n > T R^2              (la ecuación de s es monótona)
        n > 2 T R^2            (cota inferior s >= s_flat)
        n > T R^2 / (2 s_flat) (contracción en la ecuación de h)

    Con constantes unidad se recuperan las cotas tal cual; los factores
    reaction_scale = gamma m^W / rho^W y transport_scale = rho^H / kappa
    devuelven las constantes físicas. Con s_flat = 0 la última cota diverge y
    el informe queda marcado como degenerado.
    """
    base = final_time * R * R
    monotone = base * reaction_scale
    lower = 2.0 * base * reaction_scale
    degenerate = s_flat <= 0
    contraction = math.inf if degenerate else base * transport_scale / (2.0 * s_flat)
    return StepRestrictionReport(
        steps=steps,
        monotone_bound=monotone,
        lower_bound=lower,
        contraction_bound=contraction,
        satisfied=steps > max(lower, contraction),
        saturation_satisfied=steps > lower,
        degenerate=degenerate,
    )


def ensure_step_restriction(cfg, params):
    """
    Falla si tau viola las cotas de la ecuación de s.

    La cota de contracción sólo se informa: el transporte de h se resuelve de
    forma implícita y no necesita la iteración de punto fijo.
    """
    report = check_step_restrictions(cfg.tau, 1, params.R, params.s_flat, *restriction_scales(params))
    if not report.saturation_satisfied:
        limit = cfg.final_time * report.lower_bound / cfg.tau if cfg.tau > 0 else math.inf
        raise ConfigError(
            "paso de tiempo demasiado grande para el problema de saturación",
            [f"time.steps debe ser mayor que {limit!r} (valor: {cfg.steps})"],
        )
    return report


def _dryness_slope(s, R):
    """Derivada de s * Q_R(1 - s)"""
    return np.where(s > 1.0, 0.0, np.where(1.0 - s > R, R, 1.0 - 2.0 * s))


def _max_abs(values):
    return float(np.max(np.abs(values))) if len(values) else 0.0


class _SaturationProblem:
    """Residuo y jacobiano tridiagonal de la ecuación de s con masas concentradas"""

    def __init__(self, prev, bc, tau, params, grid, curve, law):
        self.curve = curve
        self.R = params.R
        self.s_prev = np.asarray(prev.s, dtype=float)
        self.mass = params.rho_w * grid.masses / tau
        self.k_over_h = eval_permeability(law, cell_average(prev.c_p)) / grid.widths
        self.source = params.gamma * params.m_w * grid.masses * truncate_Q(np.asarray(prev.h, dtype=float), self.R)
        self.alpha = np.asarray(bc.alpha, dtype=float)
        self.p_ext = np.asarray(eval_wetting_extended(curve, np.asarray(bc.s_ext, dtype=float)))

    def residual(self, s):
        p = eval_wetting_extended(self.curve, s)
        flux = self.k_over_h * np.diff(p)
        res = self.mass * (s - self.s_prev)
        res[:-1] -= flux
        res[1:] += flux
        res[0] += self.alpha[0] * (p[0] - self.p_ext[0])
        res[-1] += self.alpha[1] * (p[-1] - self.p_ext[1])
        res -= self.source * s * truncate_Q(1.0 - s, self.R)
        return res

    def jacobian(self, s):
        slope = wetting_slope(self.curve, s)
        a = self.k_over_h
        diag = self.mass.copy()
        diag[:-1] += a * slope[:-1]
        diag[1:] += a * slope[1:]
        diag[0] += self.alpha[0] * slope[0]
        diag[-1] += self.alpha[1] * slope[-1]
        diag -= self.source * _dryness_slope(s, self.R)
        lower = np.zeros_like(diag)
        upper = np.zeros_like(diag)
        upper[:-1] = -a * slope[1:]
        lower[1:] = -a * slope[:-1]
        return lower, diag, upper

    def error(self, res):
        # residuo en unidades de saturación: tau * F_i / (rho^W m_i)
        return _max_abs(res / self.mass)


def solve_saturation_step(prev, bc, cfg, params, grid, curve, law):
    """
    Resuelve s_j con Newton amortiguado; si Newton se estanca sigue con una
    iteración de punto fijo de jacobiano congelado.
    """
    if cfg.enforce_step_restriction:
        ensure_step_restriction(cfg, params)

    problem = _SaturationProblem(prev, bc, cfg.tau, params, grid, curve, law)
    s = np.array(prev.s, dtype=float)
    res = problem.residual(s)
    err = problem.error(res)
    iterations = 0

    while err > cfg.newton_tol:
        if iterations >= cfg.newton_max_iter:
            raise SolverError("Newton no convergió en el paso de saturación", residual=err, iterations=iterations)
        jacobian = problem.jacobian(s)
        delta = solve_tridiagonal(*jacobian, -res)
        iterations += 1

        step = 1.0
        while step >= 1.0 / 64:
            trial = s + step * delta
            trial_res = problem.residual(trial)
            trial_err = problem.error(trial_res)
            if trial_err < (1.0 - 1e-4 * step) * err:
                break
            step *= 0.5
        else:
            logger.warning("Newton estancado en la saturación con residuo %.3e, se pasa a punto fijo", err)
            return _frozen_jacobian_iteration(problem, s, res, jacobian, cfg, iterations)

        s, res, err = trial, trial_res, trial_err

    logger.debug("saturación: %d iteraciones de Newton, residuo %.3e", iterations, err)
    return SolveResult(s, iterations, err)


def _frozen_jacobian_iteration(problem, s, res, jacobian, cfg, iterations):
    for _ in range(cfg.newton_max_iter):
        s = s + solve_tridiagonal(*jacobian, -res)
        res = problem.residual(s)
        err = problem.error(res)
        iterations += 1
        if err <= cfg.newton_tol:
            return SolveResult(s, iterations, err, used_fallback=True)
    raise SolverError("la iteración de punto fijo de respaldo no convergió", residual=err, iterations=iterations)


class _HydroxideProblem:
    """
    Sistema lineal de la ecuación de h salvo el término de entrada en el contorno.

    Difusión kappa * max(s_{j-1}, floor) y convección con flujo upwind
    rho^H v^R h_upwind por celda: la matriz es una M-matriz.
    """

    def __init__(self, s_prev, v_r, h_prev, bc, cfg, params, grid):
        s_prev = np.asarray(s_prev, dtype=float)
        if np.any(s_prev < -TRUNCATION_SLACK):
            node = int(np.argmin(s_prev))
            raise InvariantError(f"saturación negativa {s_prev[node]!r} en el nodo {node}: coeficiente de difusión negativo")

        self.mass = params.rho_h * grid.masses / cfg.tau
        self.nodes = (0, grid.n_nodes - 1)
        self.h_ext = np.asarray(bc.h_ext, dtype=float)
        s_boundary = np.maximum(s_prev[list(self.nodes)], 0.0)
        self.inflow = np.asarray(bc.beta, dtype=float) * s_boundary

        diffusion = params.kappa * np.maximum(cell_average(s_prev), cfg.degeneracy_floor) / grid.widths
        drift = params.rho_h * cell_average(v_r)
        forward = np.maximum(drift, 0.0)
        backward = np.minimum(drift, 0.0)

        diag = self.mass + params.gamma * params.m_h * grid.masses * s_prev * (1.0 - s_prev)
        diag[:-1] += diffusion + forward
        diag[1:] += diffusion - backward
        lower = np.zeros_like(diag)
        upper = np.zeros_like(diag)
        upper[:-1] = -diffusion + backward
        lower[1:] = -diffusion - forward

        self.lower, self.diag, self.upper = lower, diag, upper
        self.rhs = self.mass * np.asarray(h_prev, dtype=float)

    def solve(self, active):
        diag = self.diag.copy()
        rhs = self.rhs.copy()
        for side, node in enumerate(self.nodes):
            if active[side]:
                diag[node] += self.inflow[side]
                rhs[node] += self.inflow[side] * self.h_ext[side]
        return solve_tridiagonal(self.lower, diag, self.upper, rhs)

    def consistent(self, h, active):
        for side, node in enumerate(self.nodes):
            if self.inflow[side] == 0:
                continue
            gap = self.h_ext[side] - h[node]
            slack = 1e-14 * max(1.0, abs(self.h_ext[side]))
            if active[side] and gap < -slack:
                return False
            if not active[side] and gap > slack:
                return False
        return True

    def active_from(self, h):
        return tuple(
            bool(self.inflow[side] > 0 and self.h_ext[side] - h[node] > 0)
            for side, node in enumerate(self.nodes)
        )

    def residual(self, h):
        res = tridiagonal_matvec(self.lower, self.diag, self.upper, h) - self.rhs
        for side, node in enumerate(self.nodes):
            res[node] -= self.inflow[side] * max(self.h_ext[side] - h[node], 0.0)
        return res

    def error(self, res):
        return _max_abs(res / self.mass)


def solve_hydroxide_step(s_prev, v_r, h_prev, bc, cfg, params, grid):
    """
    Resuelve h_j. El signo de (h^ext - h_j) en cada extremo se adivina, se
    resuelve el sistema lineal y se comprueba; si las pasadas no se
    estabilizan se prueban las cuatro combinaciones.
    """
    problem = _HydroxideProblem(s_prev, v_r, h_prev, bc, cfg, params, grid)
    active = problem.active_from(np.asarray(h_prev, dtype=float))
    passes = 0

    for _ in range(cfg.picard_max_iter):
        h = problem.solve(active)
        passes += 1
        if problem.consistent(h, active):
            break
        active = problem.active_from(h)
    else:
        for active in itertools.product((False, True), repeat=len(problem.nodes)):
            h = problem.solve(active)
            passes += 1
            if problem.consistent(h, active):
                break
        else:
            raise SolverError("no hay conjunto de entrada consistente en el paso de hidróxido", iterations=passes)

    err = problem.error(problem.residual(h))
    if err > cfg.picard_tol:
        raise SolverError("residuo de hidróxido por encima de la tolerancia", residual=err, iterations=passes)
    logger.debug("hidróxido: %d pasadas de conjunto activo, residuo %.3e", passes, err)
    return SolveResult(h, passes, err)


def update_precipitate(c_p_prev, h, s, tau, gamma, m_p):
    """c^P_j = c^P_{j-1} + tau * gamma * m^P * h_j s_j (1 - s_j)"""
    rate = reaction_rate_P(np.maximum(h, 0.0), np.clip(s, 0.0, 1.0), gamma, m_p)
    return np.asarray(c_p_prev, dtype=float) + tau * rate


def water_ledger(s_new, s_prev, h_lag, bc, tau, params, grid, curve):
    """Identidad de masa del agua (ecuación de s probada con phi = 1)"""
    masses = grid.masses
    R = params.R
    p = eval_wetting_extended(curve, s_new)
    p_ext = eval_wetting_extended(curve, np.asarray(bc.s_ext, dtype=float))
    boundary = bc.alpha[0] * (p[0] - p_ext[0]) + bc.alpha[1] * (p[-1] - p_ext[1])
    reaction = params.gamma * params.m_w * np.sum(masses * truncate_Q(h_lag, R) * s_new * truncate_Q(1.0 - s_new, R))
    return float(params.rho_w * np.sum(masses * (s_new - s_prev)) + tau * boundary - tau * reaction)


def hydroxide_ledger(h_new, h_prev, s_prev, bc, tau, params, grid):
    """Identidad de masa del Ca(OH)2 (ecuación de h probada con psi = 1)"""
    masses = grid.masses
    inflow = 0.0
    for side, node in enumerate((0, grid.n_nodes - 1)):
        inflow += bc.beta[side] * max(s_prev[node], 0.0) * max(bc.h_ext[side] - h_new[node], 0.0)
    reaction = params.gamma * params.m_h * np.sum(masses * h_new * s_prev * (1.0 - s_prev))
    return float(params.rho_h * np.sum(masses * (h_new - h_prev)) - tau * inflow + tau * reaction)


def advance_one_step(state, bc, cfg, params, grid, curve, law, kernel, step=None):
    """
    Avanza un paso: s_j, luego h_j (con s_{j-1} y v^R_{j-1}), luego c^P_j, y
    recalcula la velocidad con el estado nuevo.
    """
    R = params.R
    tau = cfg.tau
    v_prev = state.v
    if v_prev is None:
        v_prev = velocity_field(state.s, state.c_p, curve, law, kernel, params.rho_h, grid)
    v_r = truncate_velocity(v_prev, R)

    saturation = solve_saturation_step(state, bc, cfg, params, grid, curve, law)
    hydroxide = solve_hydroxide_step(state.s, v_r, state.h, bc, cfg, params, grid)
    s_new, h_new = saturation.values, hydroxide.values
    c_p = update_precipitate(state.c_p, h_new, s_new, tau, params.gamma, params.m_p)
    v_new = velocity_field(s_new, c_p, curve, law, kernel, params.rho_h, grid)

    time = state.t + tau if step is None else step * tau
    new_state = State(s=s_new, h=h_new, c_p=c_p, t=time, v=v_new)

    truncation = {
        "hydroxide": bool(np.any(state.h > R + TRUNCATION_SLACK) or np.any(state.h < -TRUNCATION_SLACK)),
        "dryness": bool(np.any(s_new > 1.0 + TRUNCATION_SLACK) or np.any(1.0 - s_new > R + TRUNCATION_SLACK)),
        "velocity": bool(np.any(np.abs(v_prev) > R)),
    }
    report = StepReport(
        step=step if step is not None else 0,
        time=time,
        newton_iterations=saturation.iterations,
        picard_iterations=hydroxide.iterations,
        s_residual=saturation.residual,
        h_residual=hydroxide.residual,
        water_ledger=water_ledger(s_new, state.s, state.h, bc, tau, params, grid, curve),
        hydroxide_ledger=hydroxide_ledger(h_new, state.h, state.s, bc, tau, params, grid),
        truncation=truncation,
        used_fallback=saturation.used_fallback,
    )
    return new_state, report
