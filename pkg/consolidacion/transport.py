"""
Flujo de agua (ley de Darcy), velocidad de transporte suavizada y su
truncamiento.

    q   = -k(c^P) d/dx f~(s)                    (una constante por celda)
    v(x) = 1/rho^H * int_Omega sigma(x - y) q(y) dy
    v^R = sign(v) * min(|v|, R)

La convolución se integra de forma exacta: q es constante en cada celda, así
que el peso de la celda c en el nodo i es la masa del núcleo sobre la celda,
W_ic = int_c sigma(x_i - y) dy. No se renormaliza cerca del contorno.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from constitutive import eval_permeability, eval_wetting_extended
from errors import ConfigError
from mesh import cell_average

KERNEL_PROFILES = ("triangular", "bump")
DEFAULT_RADIUS_FRACTION = 0.05
WEIGHT_CACHE_SIZE = 16


def _bump(u):
    return math.exp(-1.0 / (1.0 - u * u)) if abs(u) < 1.0 else 0.0


@lru_cache(maxsize=None)
def _bump_mass():
    return quad(_bump, -1.0, 1.0, epsabs=1e-14, epsrel=1e-14)[0]


@dataclass(frozen=True)
class MollifierKernel:
    """
    Núcleo sigma >= 0 con soporte en [-radius, radius] e integral unidad.

    - triangular: sigma(y) = max(0, 1 - |y|/eps) / eps
    - bump: sigma(y) = C exp(-1 / (1 - (y/eps)^2)), C normaliza la masa
    """

    radius: float = 0.05
    profile: str = "triangular"

    def __post_init__(self):
        violations = []
        if not self.radius > 0:
            violations.append("kernel.radius debe ser > 0")
        if self.profile not in KERNEL_PROFILES:
            violations.append(f"kernel.profile debe ser uno de {KERNEL_PROFILES}")
        if violations:
            raise ConfigError("núcleo suavizante no válido", violations)

    @classmethod
    def for_length(cls, length, profile="triangular"):
        """Núcleo por defecto de un dominio de longitud L: radio 0.05 * L"""
        return cls(radius=DEFAULT_RADIUS_FRACTION * length, profile=profile)

    def density(self, y):
        eps = self.radius
        if self.profile == "triangular":
            return max(0.0, 1.0 - abs(y) / eps) / eps
        return _bump(y / eps) / (eps * _bump_mass())

    @property
    def sup(self):
        if self.profile == "triangular":
            return 1.0 / self.radius
        return math.exp(-1.0) / (self.radius * _bump_mass())

    def cdf(self, z):
        """Masa del núcleo en (-inf, z]"""
        eps = self.radius
        if z <= -eps:
            return 0.0
        if z >= eps:
            return 1.0
        if self.profile == "triangular":
            u = z / eps
            return 0.5 * (1.0 + u) ** 2 if u <= 0 else 1.0 - 0.5 * (1.0 - u) ** 2
        return quad(_bump, -1.0, z / eps, epsabs=1e-14, epsrel=1e-14)[0] / _bump_mass()

    def weights(self, grid):
        """Matriz W (nodos x celdas) con W_ic = int_c sigma(x_i - y) dy, cacheada por malla"""
        return _weight_matrix(self, grid.nodes.tobytes())


@lru_cache(maxsize=WEIGHT_CACHE_SIZE)
def _weight_matrix(kernel, nodes_key):
    nodes = np.frombuffer(nodes_key, dtype=float)
    n_cells = len(nodes) - 1
    matrix = np.zeros((len(nodes), n_cells))
    for i, x in enumerate(nodes):
        for c in range(n_cells):
            a, b = nodes[c], nodes[c + 1]
            if b <= x - kernel.radius or a >= x + kernel.radius:
                continue
            matrix[i, c] = kernel.cdf(x - a) - kernel.cdf(x - b)
    matrix.setflags(write=False)
    return matrix


def compute_water_flux(s, c_p, curve, law, grid):
    """q_c = -k(media de c^P en la celda) * (f~(s_{i+1}) - f~(s_i)) / h_c"""
    s = np.asarray(s, dtype=float)
    c_p = np.asarray(c_p, dtype=float)
    if len(s) != grid.n_nodes or len(c_p) != grid.n_nodes:
        raise ValueError(
            f"los campos nodales deben tener {grid.n_nodes} valores, tienen {len(s)} y {len(c_p)}"
        )
    k_cells = eval_permeability(law, cell_average(c_p))
    pressure = eval_wetting_extended(curve, s)
    return -k_cells * np.diff(pressure) / grid.widths


def mollified_velocity(q, kernel, rho_h, grid):
    """v(x_i) = 1/rho^H * sum_c W_ic q_c"""
    return kernel.weights(grid) @ np.asarray(q, dtype=float) / rho_h


def truncate_velocity(v, R):
    """v^R = (Q_R(|v|)/|v|) v, componente a componente"""
    if not R > 0:
        raise ValueError("el nivel de truncamiento debe ser positivo")
    return np.clip(v, -R, R)


def velocity_field(s, c_p, curve, law, kernel, rho_h, grid):
    """Velocidad de transporte nodal a partir del estado (s, c^P)"""
    q = compute_water_flux(s, c_p, curve, law, grid)
    return mollified_velocity(q, kernel, rho_h, grid)


def velocity_bound_constant(curve, law, kernel, rho_h, length):
    """C tal que sup|v| <= C ||ds/dx||_2  (k# f# sup(sigma) sqrt(L) / rho^H)"""
    return law.k_sharp * curve.f_sharp * kernel.sup * math.sqrt(length) / rho_h
