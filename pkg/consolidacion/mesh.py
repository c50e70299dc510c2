"""
Malla 1D graduada sobre [0, L], más fina junto al contorno activo x=0.

Los nodos son los grados de libertad de elementos lineales a trozos; las
masas nodales son las de la cuadratura trapezoidal (mass lumping).
"""

from dataclasses import dataclass

import numpy as np

from errors import ConfigError


class Grid1D:
    """
    Malla inmutable: nodos x_0 = 0 < x_1 < ... < x_N = L.

    Las anchuras de celda h_i = x_{i+1} - x_i se derivan de los nodos.
    """

    def __init__(self, nodes):
        nodes = np.array(nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 2:
            raise ValueError("una malla necesita al menos dos nodos")
        if nodes[0] != 0.0:
            raise ValueError("el primer nodo debe ser x=0")
        widths = np.diff(nodes)
        if np.any(widths <= 0):
            raise ValueError("los nodos de la malla deben ser estrictamente crecientes")
        nodes.setflags(write=False)
        widths.setflags(write=False)
        self.nodes = nodes
        self.widths = widths
        self._masses = None

    @property
    def length(self):
        return float(self.nodes[-1])

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_cells(self):
        return len(self.widths)

    @property
    def midpoints(self):
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    @property
    def masses(self):
        if self._masses is None:
            masses = node_lumped_masses(self)
            masses.setflags(write=False)
            self._masses = masses
        return self._masses

    def to_dict(self):
        return {"nodes": [float(x) for x in self.nodes]}

    @classmethod
    def from_dict(cls, data):
        return cls(data["nodes"])

    def __eq__(self, other):
        return isinstance(other, Grid1D) and np.array_equal(self.nodes, other.nodes)

    def __hash__(self):
        return hash(self.nodes.tobytes())

    def __repr__(self):
        return f"<Grid1D cells={self.n_cells} length={self.length!r}>"


@dataclass(frozen=True)
class GridSpec:
    """Parámetros de la malla tal y como aparecen en la configuración"""

    cells: int = 64
    length: float = 1.0
    ratio: float = 1.05

    def __post_init__(self):
        violations = []
        if not isinstance(self.cells, int) or self.cells < 1:
            violations.append("grid.cells debe ser un entero >= 1")
        if not self.length > 0:
            violations.append("grid.length debe ser > 0")
        if not self.ratio > 0:
            violations.append("grid.ratio debe ser > 0")
        if violations:
            raise ConfigError("malla no válida", violations)

    def build(self):
        return build_graded_grid(self.cells, self.length, self.ratio)


def build_graded_grid(n_cells, length, ratio):
    """
    Anchuras en progresión geométrica w_i = w_0 * ratio**i que suman L.

    ratio=1 da la malla uniforme; ratio>1 deja la celda más pequeña en x=0.
    La última anchura absorbe el redondeo para que x_N = L exactamente.
    """
    if n_cells < 1:
        raise ValueError("n_cells debe ser >= 1")
    if not length > 0 or not ratio > 0:
        raise ValueError("length y ratio deben ser positivos")

    powers = ratio ** np.arange(n_cells, dtype=float)
    widths = length * powers / powers.sum()
    nodes = np.concatenate(([0.0], np.cumsum(widths)))
    nodes[-1] = length
    return Grid1D(nodes)


def node_lumped_masses(grid):
    """m_0 = h_0/2, m_i = (h_{i-1} + h_i)/2, m_N = h_{N-1}/2"""
    masses = np.zeros(grid.n_nodes)
    masses[:-1] += 0.5 * grid.widths
    masses[1:] += 0.5 * grid.widths
    return masses


def cell_average(values):
    """Media aritmética de los valores nodales en cada celda"""
    values = np.asarray(values, dtype=float)
    return 0.5 * (values[:-1] + values[1:])


def gradient_l2(values, grid):
    """Norma L2 del gradiente de la interpolante lineal a trozos"""
    jumps = np.diff(np.asarray(values, dtype=float))
    return float(np.sqrt(np.sum(jumps**2 / grid.widths)))
