"""Scalar math that works for plain floats and for dual numbers.

Anything that implements ``exp``/``log``/``sqrt``/``sin``/``cos`` methods
(see :class:`kfiou.diff.Dual`) is dispatched to those; everything else goes
through :mod:`math`.
"""

import math


def exp(x):
    return x.exp() if hasattr(x, "exp") else math.exp(x)


def log(x):
    return x.log() if hasattr(x, "log") else math.log(x)


def log1p(x):
    return x.log1p() if hasattr(x, "log1p") else math.log1p(x)


def sqrt(x):
    return x.sqrt() if hasattr(x, "sqrt") else math.sqrt(x)


def sin(x):
    return x.sin() if hasattr(x, "sin") else math.sin(x)


def cos(x):
    return x.cos() if hasattr(x, "cos") else math.cos(x)


def value(x) -> float:
    """Real part of a scalar (the value itself for floats)."""
    return float(getattr(x, "value", x))


def radians(deg):
    return deg * (math.pi / 180.0)


# 2x2 / 3x3 closed-form linear algebra on nested lists.

def det(m):
    if len(m) == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


def inv(m):
    d = det(m)
    if value(d) == 0.0:
        raise ZeroDivisionError("singular matrix")
    if len(m) == 2:
        return [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
    c = [
        [
            m[1][1] * m[2][2] - m[1][2] * m[2][1],
            m[0][2] * m[2][1] - m[0][1] * m[2][2],
            m[0][1] * m[1][2] - m[0][2] * m[1][1],
        ],
        [
            m[1][2] * m[2][0] - m[1][0] * m[2][2],
            m[0][0] * m[2][2] - m[0][2] * m[2][0],
            m[0][2] * m[1][0] - m[0][0] * m[1][2],
        ],
        [
            m[1][0] * m[2][1] - m[1][1] * m[2][0],
            m[0][1] * m[2][0] - m[0][0] * m[2][1],
            m[0][0] * m[1][1] - m[0][1] * m[1][0],
        ],
    ]
    return [[c[i][j] / d for j in range(3)] for i in range(3)]


def matmul(a, b):
    n, k, p = len(a), len(b), len(b[0])
    return [[sum_(a[i][t] * b[t][j] for t in range(k)) for j in range(p)] for i in range(n)]


def matvec(a, v):
    return [sum_(a[i][t] * v[t] for t in range(len(v))) for i in range(len(a))]


def dot(u, v):
    return sum_(a * b for a, b in zip(u, v))


def add(a, b):
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def sub(a, b):
    return [[x - y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def transpose(a):
    return [list(r) for r in zip(*a)]


def trace(a):
    return sum_(a[i][i] for i in range(len(a)))


def symmetrize(a):
    n = len(a)
    return [[(a[i][j] + a[j][i]) * 0.5 for j in range(n)] for i in range(n)]


def sum_(items):
    # builtin sum starts from int 0, which is fine for duals but keeps this explicit
    it = iter(items)
    total = next(it)
    for x in it:
        total = total + x
    return total
