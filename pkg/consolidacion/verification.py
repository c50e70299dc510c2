"""
Estudios de verificación fuera de línea.

- oracle_compare_small: compara un paso de producción con resolvedores de
  fuerza bruta sobre matrices densas (mallas de como mucho 4 nodos).
- random_admissible_config: configuraciones aleatorias reproducibles por semilla.
- convergence_study: autoconvergencia en tiempo con tau, tau/2, tau/4, ...
"""

import itertools
import logging
import math
from dataclasses import replace
from typing import NamedTuple

import numpy as np

from constitutive import (
    PermeabilityLaw,
    PhysParams,
    WettingCurve,
    eval_permeability,
    reaction_rate_P,
    secant_slope,
    truncate_Q,
)
from mesh import GridSpec
from scenario import (
    BoundaryPhase,
    BoundaryPoint,
    BoundarySchedule,
    ScenarioConfig,
    run_scenario,
    time_averaged_boundary,
)
from timestep import SolverConfig, advance_one_step
from transport import MollifierKernel, truncate_velocity

logger = logging.getLogger(__name__)

ORACLE_TOLERANCE = 1e-14
ORACLE_MAX_ITER = 5000
ORACLE_MAX_NODES = 4


class OracleComparison(NamedTuple):
    deviation: float
    conclusive: bool
    detail: str = ""


class ConvergenceStudy(NamedTuple):
    steps: list
    differences: list
    ratios: list
    orders: list

    @property
    def order(self):
        return self.orders[-1] if self.orders else math.nan

    def to_dict(self):
        return {
            "steps": list(self.steps),
            "differences": list(self.differences),
            "ratios": list(self.ratios),
            "orders": list(self.orders),
        }


def random_admissible_config(seed):
    """
    Configuración válida de un solo paso sobre 2 a 4 nodos.

    El paso se elige para que rho^W / tau domine a la reacción, así el
    problema de s es monótono aunque no se impongan las restricciones.
    """
    rng = np.random.default_rng(seed)
    cells = int(rng.integers(1, ORACLE_MAX_NODES))
    length = float(rng.uniform(0.5, 2.0))
    n_nodes = cells + 1

    s_flat = float(rng.uniform(0.0, 0.2))
    h_sharp = float(rng.uniform(0.5, 2.0))
    physics = PhysParams(
        rho_w=float(rng.uniform(0.5, 2.0)),
        rho_h=float(rng.uniform(0.5, 2.0)),
        m_w=float(rng.uniform(0.5, 2.0)),
        m_h=float(rng.uniform(0.5, 2.0)),
        m_p=float(rng.uniform(0.5, 2.0)),
        gamma=float(rng.uniform(0.0, 1.0)),
        kappa=float(rng.uniform(1e-3, 1e-1)),
        s_flat=s_flat,
        h_sharp=h_sharp,
    )
    if rng.random() < 0.5:
        permeability = PermeabilityLaw.constant(rng.uniform(1e-3, 1.0))
    else:
        k0 = float(rng.uniform(1e-2, 1.0))
        permeability = PermeabilityLaw.exp_decay(k0, rng.uniform(0.0, 5.0), k0 * rng.uniform(0.05, 1.0))

    reaction = physics.gamma * physics.m_w * h_sharp / physics.rho_w
    tau = float(rng.uniform(0.02, 1.0)) / (2.0 + reaction)

    def point(alpha_low, beta_low):
        return BoundaryPoint(
            alpha=float(rng.uniform(alpha_low, 2.0)),
            beta=float(rng.uniform(beta_low, 2.0)),
            phases=(BoundaryPhase(0.0, float(rng.uniform(max(s_flat, 0.05), 1.0)), float(rng.uniform(0.0, h_sharp))),),
        )

    return ScenarioConfig(
        grid=GridSpec(cells=cells, length=length, ratio=float(rng.uniform(0.8, 1.25))),
        physics=physics,
        wetting=WettingCurve.linear(rng.uniform(-1.0, 1.0), rng.uniform(0.5, 2.0)),
        permeability=permeability,
        kernel=MollifierKernel(radius=float(rng.uniform(0.1, 1.0)) * length),
        solver=SolverConfig(final_time=tau, steps=1, enforce_step_restriction=False),
        boundary=BoundarySchedule(point(0.1, 0.1), point(0.0, 0.0)),
        snapshot_times=(tau,),
        initial_s=tuple(rng.uniform(s_flat, 1.0, n_nodes)),
        initial_h=tuple(rng.uniform(0.0, h_sharp, n_nodes)),
        initial_c_p=tuple(rng.uniform(0.0, 2.0, n_nodes)),
        name=f"random_{seed}",
    )


def _dense_masses(grid):
    masses = np.zeros(grid.n_nodes)
    for c in range(grid.n_cells):
        masses[c] += grid.widths[c] / 2
        masses[c + 1] += grid.widths[c] / 2
    return masses


def brute_force_saturation(state, bc, tau, params, grid, curve, law):
    """
    Iteración de punto fijo con la pendiente secante congelada: cada iterada
    resuelve un sistema lineal denso. Devuelve (s, convergido).
    """
    n = grid.n_nodes
    masses = _dense_masses(grid)
    c_p = np.asarray(state.c_p, dtype=float)
    R = params.R
    s_prev = np.asarray(state.s, dtype=float)
    ends = (0, n - 1)

    s = s_prev.copy()
    for _ in range(ORACLE_MAX_ITER):
        A = np.diag(params.rho_w * masses / tau)
        b = params.rho_w * masses / tau * s_prev
        for c in range(grid.n_cells):
            k = float(eval_permeability(law, 0.5 * (c_p[c] + c_p[c + 1])))
            g = k * float(secant_slope(curve, s[c], s[c + 1])) / grid.widths[c]
            A[c, c] += g
            A[c + 1, c + 1] += g
            A[c, c + 1] -= g
            A[c + 1, c] -= g
        for side, node in enumerate(ends):
            g = bc.alpha[side] * float(secant_slope(curve, bc.s_ext[side], s[node]))
            A[node, node] += g
            b[node] += g * bc.s_ext[side]
        for i in range(n):
            A[i, i] -= params.gamma * params.m_w * masses[i] * truncate_Q(float(state.h[i]), R) * truncate_Q(1.0 - s[i], R)
        s_next = np.linalg.solve(A, b)
        change = float(np.max(np.abs(s_next - s)))
        s = s_next
        if change <= ORACLE_TOLERANCE:
            return s, True
    return s, False


def brute_force_hydroxide(s_prev, v_r, h_prev, bc, cfg, params, grid):
    """Prueba los cuatro conjuntos de entrada activos con sistemas densos"""
    n = grid.n_nodes
    masses = _dense_masses(grid)
    ends = (0, n - 1)
    A = np.diag(params.rho_h * masses / cfg.tau)
    b = params.rho_h * masses / cfg.tau * np.asarray(h_prev, dtype=float)
    for i in range(n):
        A[i, i] += params.gamma * params.m_h * masses[i] * s_prev[i] * (1.0 - s_prev[i])
    for c in range(grid.n_cells):
        d = params.kappa * max(0.5 * (s_prev[c] + s_prev[c + 1]), cfg.degeneracy_floor) / grid.widths[c]
        A[c, c] += d
        A[c + 1, c + 1] += d
        A[c, c + 1] -= d
        A[c + 1, c] -= d
        drift = params.rho_h * 0.5 * (v_r[c] + v_r[c + 1])
        upwind = c if drift > 0 else c + 1
        A[c, upwind] += drift
        A[c + 1, upwind] -= drift

    for active in itertools.product((False, True), repeat=2):
        A_k, b_k = A.copy(), b.copy()
        for side, node in enumerate(ends):
            if active[side]:
                weight = bc.beta[side] * max(s_prev[node], 0.0)
                A_k[node, node] += weight
                b_k[node] += weight * bc.h_ext[side]
        h = np.linalg.solve(A_k, b_k)
        if all(
            (bc.h_ext[side] - h[node] >= -1e-13) if active[side] else (bc.h_ext[side] - h[node] <= 1e-13)
            for side, node in enumerate(ends)
        ):
            return h, True
    return h, False


def oracle_compare_small(cfg):
    """Desviación nodal máxima entre el paso de producción y los oráculos densos"""
    grid = cfg.grid.build()
    if grid.n_nodes > ORACLE_MAX_NODES:
        raise ValueError(f"la comparación con el oráculo admite como mucho {ORACLE_MAX_NODES} nodos")
    params, solver = cfg.physics, cfg.solver
    tau = solver.tau
    state = cfg.initial_state(grid)
    bc = time_averaged_boundary(cfg.boundary, 1, tau)

    new_state, _ = advance_one_step(
        state, bc, solver, params, grid, cfg.wetting, cfg.permeability, cfg.kernel, step=1
    )

    s, s_ok = brute_force_saturation(state, bc, tau, params, grid, cfg.wetting, cfg.permeability)
    v_r = truncate_velocity(state.v, params.R)
    h, h_ok = brute_force_hydroxide(state.s, v_r, state.h, bc, solver, params, grid)
    if not (s_ok and h_ok):
        return OracleComparison(math.nan, False, "el oráculo no convergió")

    c_p = state.c_p + tau * reaction_rate_P(np.maximum(h, 0.0), np.clip(s, 0.0, 1.0), params.gamma, params.m_p)
    deviation = max(
        float(np.max(np.abs(new_state.s - s))),
        float(np.max(np.abs(new_state.h - h))),
        float(np.max(np.abs(new_state.c_p - c_p))),
    )
    return OracleComparison(deviation, True)


def convergence_study(cfg, levels=3):
    """
    Ejecuta cfg con n, 2n, 4n, ... pasos y compara los perfiles finales de s y h.

    differences[k] = max|u_{k+1} - u_k| y orders[k] = log2(differences[k] / differences[k+1]).
    """
    if levels < 3:
        raise ValueError("un estudio de convergencia necesita al menos 3 niveles")
    base = cfg.solver.steps
    steps, finals = [], []
    for level in range(levels):
        n = base * 2**level
        refined = replace(cfg, solver=replace(cfg.solver, steps=n, equilibrium_tol=None))
        snapshots, _ = run_scenario(refined)
        final = snapshots[-1]
        steps.append(n)
        finals.append(np.concatenate([final.s, final.h]))
        logger.info("nivel de convergencia %d: %d pasos", level, n)

    differences = [float(np.max(np.abs(b - a))) for a, b in zip(finals, finals[1:])]
    ratios = [a / b if b > 0 else math.inf for a, b in zip(differences, differences[1:])]
    orders = [math.log2(r) if 0 < r < math.inf else math.nan for r in ratios]
    return ConvergenceStudy(steps, differences, ratios, orders)
