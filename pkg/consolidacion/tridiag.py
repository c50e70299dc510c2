"""
Sistemas tridiagonales (algoritmo de Thomas).

Convención de los argumentos, todos de longitud n:

    lower = (0, a_2, ..., a_n)      subdiagonal, lower[0] no se usa
    diag  = (b_1, ..., b_n)
    upper = (c_1, ..., c_{n-1}, 0)  superdiagonal, upper[-1] no se usa

Sin pivoteo: las matrices que se montan en el paso de tiempo son
diagonalmente dominantes. Si además son M-matrices y el lado derecho es no
negativo, todas las cantidades intermedias son no negativas y la solución
también lo es, incluso en aritmética de coma flotante.
"""

import numpy as np


def solve_tridiagonal(lower, diag, upper, rhs):
    """Resuelve A x = rhs con A tridiagonal"""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    b = np.array(diag, dtype=float)
    d = np.array(rhs, dtype=float)
    n = len(d)
    if not (len(lower) == len(b) == len(upper) == n):
        raise ValueError("las diagonales y el término independiente deben tener la misma longitud")

    for k in range(1, n):
        m = lower[k] / b[k - 1]
        b[k] = b[k] - m * upper[k - 1]
        d[k] = d[k] - m * d[k - 1]

    x = b
    x[-1] = d[-1] / b[-1]
    for k in range(n - 2, -1, -1):
        x[k] = (d[k] - upper[k] * x[k + 1]) / b[k]
    return x


def tridiagonal_matvec(lower, diag, upper, x):
    """Producto A x para una matriz tridiagonal en la misma convención"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(diag, dtype=float) * x
    y[1:] += np.asarray(lower, dtype=float)[1:] * x[:-1]
    y[:-1] += np.asarray(upper, dtype=float)[:-1] * x[1:]
    return y


def to_dense(lower, diag, upper):
    """Matriz densa equivalente (para pruebas y oráculos)"""
    n = len(diag)
    matrix = np.diag(np.asarray(diag, dtype=float))
    for k in range(1, n):
        matrix[k, k - 1] = lower[k]
        matrix[k - 1, k] = upper[k - 1]
    return matrix
