"""
Errores del simulador de consolidación.

Cada error lleva una categoría legible por máquina y el código de salida que
usa la línea de comandos:

    config     -> 2
    solver     -> 3
    invariant  -> 4
"""


class ConsolidationError(Exception):
    """Error base del paquete"""

    category = "error"
    exit_code = 1

    def to_dict(self):
        return {"error": self.category, "detail": str(self)}


class ConfigError(ConsolidationError, ValueError):
    """
    Configuración inválida.

    Guarda la lista completa de violaciones para informarlas todas a la vez,
    y la línea/columna cuando el fallo es de sintaxis.
    """

    category = "config"
    exit_code = 2

    def __init__(self, message, violations=(), line=None, column=None):
        super().__init__(message)
        self.violations = list(violations)
        self.line = line
        self.column = column

    def __str__(self):
        text = super().__str__()
        if self.line is not None:
            text = f"{text} (línea {self.line}, columna {self.column})"
        if self.violations:
            text = text + "".join(f"\n  - {v}" for v in self.violations)
        return text

    def to_dict(self):
        data = super().to_dict()
        data["detail"] = self.args[0]
        data["violations"] = list(self.violations)
        if self.line is not None:
            data["line"] = self.line
            data["column"] = self.column
        return data


class SolverError(ConsolidationError):
    """Un paso de tiempo no convergió"""

    category = "solver"
    exit_code = 3

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        # Se rellenan cuando el fallo ocurre dentro de una simulación completa
        self.step = None
        self.partial = None


class InvariantError(ConsolidationError):
    """Se violó una cota que el esquema discreto debe respetar"""

    category = "invariant"
    exit_code = 4

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
