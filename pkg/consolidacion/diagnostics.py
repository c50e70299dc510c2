"""
Monitores de invariantes y series de estimaciones a priori.

Todas las comprobaciones son de sólo lectura: reciben estados o informes de
paso y devuelven un InvariantReport parcial que se combina con merge().
Un margen positivo significa que la cota se cumple con holgura.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from mesh import gradient_l2

STATE_TOLERANCE = 1e-10
LEDGER_TOLERANCE = 1e-8
VELOCITY_TOLERANCE = 1e-12
CEILING_FACTOR = 10.0


@dataclass(frozen=True)
class InvariantViolation:
    check: str
    step: int
    node: Optional[int]
    magnitude: float

    def to_dict(self):
        return {"check": self.check, "step": self.step, "node": self.node, "magnitude": self.magnitude}

    @classmethod
    def from_dict(cls, data):
        return cls(data["check"], data["step"], data["node"], data["magnitude"])


@dataclass
class InvariantReport:
    margins: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    steps_checked: int = 0

    @property
    def ok(self):
        return not self.violations

    def record(self, check, margin):
        margin = float(margin)
        if check not in self.margins or margin < self.margins[check]:
            self.margins[check] = margin

    def violate(self, check, step, node, magnitude):
        self.violations.append(InvariantViolation(check, int(step), None if node is None else int(node), float(magnitude)))

    def merge(self, other):
        for check, margin in other.margins.items():
            self.record(check, margin)
        self.violations.extend(other.violations)
        self.steps_checked = max(self.steps_checked, other.steps_checked)
        return self

    def to_dict(self):
        return {
            "ok": self.ok,
            "steps_checked": self.steps_checked,
            "margins": dict(sorted(self.margins.items())),
            "violations": [v.to_dict() for v in self.violations],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            margins=dict(data["margins"]),
            violations=[InvariantViolation.from_dict(v) for v in data["violations"]],
            steps_checked=data["steps_checked"],
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _flag_nodes(report, check, margins, step, tol):
    margins = np.asarray(margins, dtype=float)
    report.record(check, margins.min())
    for node in np.flatnonzero(margins < -tol):
        report.violate(check, step, node, -margins[node])


def check_state_bounds(state, params, step=0, tol=STATE_TOLERANCE):
    """s en [s_flat - tol, 1 + tol] y h >= -tol en cada nodo"""
    report = InvariantReport(steps_checked=step)
    s = np.asarray(state.s, dtype=float)
    _flag_nodes(report, "saturation_lower", s - params.s_flat, step, tol)
    _flag_nodes(report, "saturation_upper", 1.0 - s, step, tol)
    _flag_nodes(report, "hydroxide_positivity", state.h, step, tol)
    return report


def check_precipitate_monotone(c_p_prev, c_p_new, step=0):
    report = InvariantReport(steps_checked=step)
    _flag_nodes(report, "precipitate_monotone", np.asarray(c_p_new) - np.asarray(c_p_prev), step, 0.0)
    return report


def ledger_limit(n_nodes, tol=LEDGER_TOLERANCE):
    return tol * n_nodes


def check_ledgers(step_report, n_nodes, tol=LEDGER_TOLERANCE):
    """Los balances de masa phi=1 y psi=1 se anulan dentro de tol * N"""
    report = InvariantReport(steps_checked=step_report.step)
    limit = ledger_limit(n_nodes, tol)
    for check, value in (("water_ledger", step_report.water_ledger), ("hydroxide_ledger", step_report.hydroxide_ledger)):
        margin = limit - abs(value)
        report.record(check, margin)
        if margin < 0:
            report.violate(check, step_report.step, None, abs(value))
    return report


def check_truncation(step_report, state, params):
    report = InvariantReport(steps_checked=step_report.step)
    R = params.R
    extent = max(float(np.max(state.h)), float(np.max(1.0 - state.s)))
    if state.v is not None:
        extent = max(extent, float(np.max(np.abs(state.v))))
    report.record("truncation", R - extent)
    for name, active in sorted(step_report.truncation.items()):
        if active:
            report.violate(f"truncation_{name}", step_report.step, None, extent - R)
    return report


def check_velocity_bound(state, constant, grid, step=0, tol=VELOCITY_TOLERANCE):
    """sup|v| <= C ||ds/dx||_2"""
    report = InvariantReport(steps_checked=step)
    if state.v is None:
        return report
    speed = np.abs(state.v)
    bound = constant * gradient_l2(state.s, grid)
    margin = bound - float(speed.max())
    report.record("velocity_bound", margin)
    if margin < -tol * (1.0 + bound):
        report.violate("velocity_bound", step, int(np.argmax(speed)), -margin)
    return report


def check_hydroxide_ceiling(state, params, step=0):
    """h se mantiene por debajo de 10 * h_sharp durante toda la simulación"""
    report = InvariantReport(steps_checked=step)
    ceiling = CEILING_FACTOR * params.h_sharp
    _flag_nodes(report, "hydroxide_ceiling", ceiling - np.asarray(state.h), step, 0.0)
    return report


def hydroxide_mass_series(trajectory):
    masses = trajectory.grid.masses
    return [float(np.sum(masses * state.h)) for state in trajectory.states]


def hydroxide_mass_bound(trajectory):
    """max_j sum_i m_i h_{j,i}"""
    return max(hydroxide_mass_series(trajectory))


def hydroxide_mass_allowance(trajectory, betas, params):
    """
    Cota superior de la masa de Ca(OH)2: la inicial más lo que puede entrar
    por el contorno, como mucho beta * h_sharp / rho^H por unidad de tiempo.
    """
    initial = float(np.sum(trajectory.grid.masses * trajectory.initial.h))
    elapsed = trajectory.steps * trajectory.tau
    return initial + elapsed * sum(betas) * params.h_sharp / params.rho_h


def gradient_energy_series(trajectory):
    """Sumas acumuladas tau * sum_j ||ds_j/dx||^2 para j = 1..n"""
    grid, tau = trajectory.grid, trajectory.tau
    total = 0.0
    series = []
    for state in trajectory.states[1:]:
        total += tau * gradient_l2(state.s, grid) ** 2
        series.append(total)
    return series


def boundary_energy_series(trajectory, alphas):
    """Sumas acumuladas tau * sum_j sum_b alpha_b s_j(b)^2"""
    tau = trajectory.tau
    total = 0.0
    series = []
    for state in trajectory.states[1:]:
        total += tau * (alphas[0] * state.s[0] ** 2 + alphas[1] * state.s[-1] ** 2)
        series.append(float(total))
    return series


def hydroxide_energy_series(trajectory):
    """max_{i<=j} sum m h_i^2 + tau * sum_{i<=j} ||dh_i/dx||^2"""
    grid, tau = trajectory.grid, trajectory.tau
    peak = 0.0
    dissipated = 0.0
    series = []
    for state in trajectory.states[1:]:
        peak = max(peak, float(np.sum(grid.masses * state.h**2)))
        dissipated += tau * gradient_l2(state.h, grid) ** 2
        series.append(peak + dissipated)
    return series
