"""
Leyes constitutivas puntuales del modelo de consolidación con cal.

Aquí viven la curva de mojado f (y su extensión lineal fuera de [0, 1]), la
permeabilidad k(c^P), el truncamiento Q_R, la cinética de la carbonatación
(ley de acción de masas) y el reparto estequiométrico de la reacción

    Ca(OH)2 + CO2 -> CaCO3 + H2O

Todas las funciones son puras y aceptan escalares o arrays de numpy.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import ConfigError

WETTING_KINDS = ("linear", "tabulated")
PERMEABILITY_KINDS = ("constant", "exp_decay")


@dataclass(frozen=True)
class WettingCurve:
    """
    Curva de mojado p = f(s), estrictamente creciente en [0, 1].

    - linear: f(s) = offset + slope * s
    - tabulated: interpolación lineal a trozos entre breakpoints (s, p),
      con el primer punto en s=0 y el último en s=1
    """

    kind: str = "linear"
    offset: float = 0.0
    slope: float = 1.0
    breakpoints: tuple = ()

    def __post_init__(self):
        violations = []
        if self.kind not in WETTING_KINDS:
            violations.append(f"wetting.kind debe ser uno de {WETTING_KINDS} (valor: {self.kind!r})")
        elif self.kind == "linear":
            if not self.slope > 0:
                violations.append("wetting.slope debe ser > 0")
        else:
            points = self.breakpoints
            if len(points) < 2:
                violations.append("wetting.breakpoints necesita al menos dos puntos")
            else:
                xs = [p[0] for p in points]
                ps = [p[1] for p in points]
                if xs[0] != 0.0 or xs[-1] != 1.0:
                    violations.append("wetting.breakpoints debe empezar en s=0 y terminar en s=1")
                if any(b <= a for a, b in zip(xs, xs[1:])):
                    violations.append("las saturaciones de wetting.breakpoints deben ser estrictamente crecientes")
                elif any(b <= a for a, b in zip(ps, ps[1:])):
                    violations.append("las presiones de wetting.breakpoints deben ser estrictamente crecientes")
        if violations:
            raise ConfigError("curva de mojado no válida", violations)

    @classmethod
    def linear(cls, offset=0.0, slope=1.0):
        return cls(kind="linear", offset=float(offset), slope=float(slope))

    @classmethod
    def tabulated(cls, breakpoints):
        points = tuple((float(s), float(p)) for s, p in breakpoints)
        return cls(kind="tabulated", breakpoints=points)

    def _table(self):
        xs = np.array([p[0] for p in self.breakpoints])
        ps = np.array([p[1] for p in self.breakpoints])
        return xs, ps, np.diff(ps) / np.diff(xs)

    @property
    def f_flat(self):
        """Cota inferior de f'"""
        if self.kind == "linear":
            return self.slope
        return float(self._table()[2].min())

    @property
    def f_sharp(self):
        """Cota superior de f'"""
        if self.kind == "linear":
            return self.slope
        return float(self._table()[2].max())


@dataclass(frozen=True)
class PermeabilityLaw:
    """
    Permeabilidad k(c^P), no creciente, con valores en [k_flat, k_sharp].

    - constant: k = k0
    - exp_decay: k = floor + (k0 - floor) * exp(-decay * c^P)
    """

    kind: str = "constant"
    k0: float = 2e-4
    decay: float = 0.0
    floor: float = 0.0

    def __post_init__(self):
        violations = []
        if self.kind not in PERMEABILITY_KINDS:
            violations.append(f"permeability.kind debe ser uno de {PERMEABILITY_KINDS} (valor: {self.kind!r})")
        if not self.k0 > 0:
            violations.append("permeability.k0 debe ser > 0")
        if self.kind == "exp_decay":
            if self.decay < 0:
                violations.append("permeability.decay debe ser >= 0")
            if not 0 < self.floor <= self.k0:
                violations.append("permeability.floor debe cumplir 0 < floor <= k0")
        if violations:
            raise ConfigError("ley de permeabilidad no válida", violations)

    @classmethod
    def constant(cls, k0):
        return cls(kind="constant", k0=float(k0))

    @classmethod
    def exp_decay(cls, k0, decay, floor):
        return cls(kind="exp_decay", k0=float(k0), decay=float(decay), floor=float(floor))

    @property
    def k_flat(self):
        return self.k0 if self.kind == "constant" else self.floor

    @property
    def k_sharp(self):
        return self.k0


def default_truncation_level(h_sharp):
    """Nivel R por defecto: suficientemente grande para que Q_R nunca actúe"""
    return max(1.0, 10.0 * max(h_sharp, 1.0))


@dataclass(frozen=True)
class PhysParams:
    """
    Constantes físicas del modelo.

    Las permeabilidades de contorno alpha y beta se guardan por punto de
    contorno en el calendario de contorno (scenario.BoundaryPoint).
    s_flat = 0 se acepta (es el caso de la prueba 1D) pero se marca como
    degenerado.
    """

    rho_w: float = 1.0
    rho_h: float = 1.0
    m_w: float = 1.0
    m_h: float = 1.0
    m_p: float = 1.0
    m_g: float = 1.0
    gamma: float = 1e-2
    kappa: float = 1e-3
    s_flat: float = 0.0
    h_sharp: float = 1.0
    truncation: Optional[float] = None

    def __post_init__(self):
        violations = []
        for name in ("rho_w", "rho_h", "m_w", "m_h", "m_p", "m_g", "kappa", "h_sharp"):
            if not getattr(self, name) > 0:
                violations.append(f"physics.{name} debe ser > 0")
        if self.gamma < 0:
            violations.append("physics.gamma debe ser >= 0")
        if not 0 <= self.s_flat <= 1:
            violations.append("physics.s_flat debe estar en [0, 1]")
        if self.truncation is not None and self.truncation < 1:
            violations.append("physics.truncation (R) debe ser >= 1")
        if violations:
            raise ConfigError("parámetros físicos no válidos", violations)

    @property
    def R(self):
        if self.truncation is None:
            return default_truncation_level(self.h_sharp)
        return self.truncation

    @property
    def degenerate(self):
        return self.s_flat <= 0


def restriction_scales(params):
    """Factores físicos de las restricciones de paso: (gamma m^W / rho^W, rho^H / kappa)"""
    return params.gamma * params.m_w / params.rho_w, params.rho_h / params.kappa


def eval_wetting_extended(curve, s):
    """Evalúa la extensión f~ de la curva de mojado (lineal fuera de [0, 1])"""
    if curve.kind == "linear":
        return curve.offset + curve.slope * s
    xs, ps, slopes = curve._table()
    s_arr = np.asarray(s, dtype=float)
    inside = np.interp(s_arr, xs, ps)
    below = ps[0] + slopes[0] * s_arr
    above = ps[-1] + slopes[-1] * (s_arr - 1.0)
    value = np.where(s_arr < 0.0, below, np.where(s_arr > 1.0, above, inside))
    return float(value) if value.ndim == 0 else value


def wetting_slope(curve, s):
    """Derivada de f~ (pendiente del tramo derecho en los breakpoints)"""
    if curve.kind == "linear":
        return curve.slope + 0.0 * np.asarray(s, dtype=float)
    xs, _, slopes = curve._table()
    s_arr = np.asarray(s, dtype=float)
    index = np.clip(np.searchsorted(xs, s_arr, side="right") - 1, 0, len(slopes) - 1)
    return slopes[index]


def secant_slope(curve, a, b):
    """(f~(b) - f~(a)) / (b - a), con f~' en el punto medio si a == b"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if curve.kind == "linear":
        return curve.slope + 0.0 * (a + b)
    delta = b - a
    same = np.abs(delta) <= 1e-14 * np.maximum(1.0, np.abs(a))
    with np.errstate(divide="ignore", invalid="ignore"):
        secant = (eval_wetting_extended(curve, b) - eval_wetting_extended(curve, a)) / delta
    return np.where(same, wetting_slope(curve, 0.5 * (a + b)), secant)


def invert_wetting(curve, p):
    """Saturación s con f~(s) = p"""
    if curve.kind == "linear":
        return (p - curve.offset) / curve.slope
    xs, ps, slopes = curve._table()
    p_arr = np.asarray(p, dtype=float)
    inside = np.interp(p_arr, ps, xs)
    below = (p_arr - ps[0]) / slopes[0]
    above = 1.0 + (p_arr - ps[-1]) / slopes[-1]
    value = np.where(p_arr < ps[0], below, np.where(p_arr > ps[-1], above, inside))
    return float(value) if value.ndim == 0 else value


def eval_permeability(law, c_p):
    """k(c^P); c^P negativo es un error de dominio"""
    c_arr = np.asarray(c_p, dtype=float)
    if np.any(c_arr < 0):
        raise ValueError("la permeabilidad solo está definida para c_p >= 0")
    if law.kind == "constant":
        value = law.k0 + 0.0 * c_arr
    else:
        value = law.floor + (law.k0 - law.floor) * np.exp(-law.decay * c_arr)
    return float(value) if value.ndim == 0 else value


def reaction_rate_P(h, s, gamma, m_p):
    """Ley de acción de masas: gamma * m^P * h * s * (1 - s)"""
    return gamma * m_p * h * s * (1.0 - s)


def stoichiometric_rates(rate_p, params):
    """
    Reparte la producción de CaCO3 entre agua, Ca(OH)2 y CO2:

        c^P'/m^P = c^W'/m^W = -c^H'/m^H = -c^G'/m^G
    """
    moles = rate_p / params.m_p
    return moles * params.m_w, -moles * params.m_h, -moles * params.m_g


def truncate_Q(v, R):
    """Q_R(v) = min(max(v, 0), R)"""
    if not R > 0:
        raise ValueError("el nivel de truncamiento debe ser positivo")
    if np.ndim(v) == 0:
        return min(max(float(v), 0.0), R)
    return np.clip(v, 0.0, R)
