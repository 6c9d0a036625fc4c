"""Exact arithmetic over the Gaussian rationals Q(i).

Small dense linear algebra (row reduction, nullspaces, inverses) is done on
lists of lists of :class:`GaussianRational`. Matrix sizes here never exceed
the dimension of sl(n) for small n, so the naive algorithms are fine.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Iterable, List, Sequence

import numpy as np


_ZERO_Q = Fraction(0)


class GaussianRational:
    """A number ``re + i*im`` with rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    @classmethod
    def _raw(cls, re: Fraction, im: Fraction) -> "GaussianRational":
        g = object.__new__(cls)
        g.re = re
        g.im = im
        return g

    @classmethod
    def coerce(cls, value) -> "GaussianRational":
        if isinstance(value, GaussianRational):
            return value
        if isinstance(value, complex):
            return cls.from_complex(value)
        if isinstance(value, (int, Fraction)):
            return cls(value, 0)
        if isinstance(value, float):
            return cls.from_complex(complex(value))
        if isinstance(value, np.generic):
            return cls.coerce(value.item())
        raise TypeError(f"cannot convert {value!r} to a Gaussian rational")

    @classmethod
    def from_complex(cls, z: complex, max_den: int = 10**6, tol: float = 1e-12) -> "GaussianRational":
        """Rationalize a floating point complex number, failing if it is not close to a small fraction."""
        z = complex(z)
        re = Fraction(z.real).limit_denominator(max_den)
        im = Fraction(z.imag).limit_denominator(max_den)
        if abs(float(re) - z.real) > tol or abs(float(im) - z.imag) > tol:
            raise ValueError(f"{z!r} is not representable as a Gaussian rational")
        return cls(re, im)

    # arithmetic; zero parts are skipped since most coefficients are purely real or imaginary
    def __add__(self, other):
        o = other if type(other) is GaussianRational else GaussianRational.coerce(other)
        re = o.re if not self.re else (self.re if not o.re else self.re + o.re)
        im = o.im if not self.im else (self.im if not o.im else self.im + o.im)
        return GaussianRational._raw(re, im)

    __radd__ = __add__

    def __sub__(self, other):
        o = other if type(other) is GaussianRational else GaussianRational.coerce(other)
        return self + (-o)

    def __rsub__(self, other):
        return GaussianRational.coerce(other) - self

    def __mul__(self, other):
        o = other if type(other) is GaussianRational else GaussianRational.coerce(other)
        a, b, c, d = self.re, self.im, o.re, o.im
        if not b and not d:
            return GaussianRational._raw(a * c, _ZERO_Q)
        if not a and not c:
            return GaussianRational._raw(-(b * d), _ZERO_Q)
        if not b and not c:
            return GaussianRational._raw(_ZERO_Q, a * d)
        if not a and not d:
            return GaussianRational._raw(_ZERO_Q, b * c)
        return GaussianRational._raw(a * c - b * d, a * d + b * c)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = GaussianRational.coerce(other)
        den = o.re * o.re + o.im * o.im
        if den == 0:
            raise ZeroDivisionError("division by zero Gaussian rational")
        return GaussianRational((self.re * o.re + self.im * o.im) / den, (self.im * o.re - self.re * o.im) / den)

    def __rtruediv__(self, other):
        return GaussianRational.coerce(other) / self

    def __neg__(self):
        return GaussianRational._raw(-self.re, -self.im)

    def conjugate(self) -> "GaussianRational":
        return GaussianRational(self.re, -self.im)

    def __eq__(self, other):
        try:
            o = GaussianRational.coerce(other)
        except TypeError:
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __repr__(self):
        if not self.im:
            return str(self.re)
        if not self.re:
            return f"{self.im}i"
        return f"({self.re}+{self.im}i)"


ZERO = GaussianRational(0)
ONE = GaussianRational(1)
I = GaussianRational(0, 1)

Matrix = List[List[GaussianRational]]


def to_exact(mat) -> Matrix:
    """Convert a numeric (complex) array into an exact matrix, raising ValueError if impossible."""
    arr = np.asarray(mat)
    if arr.ndim == 1:
        return [[GaussianRational.coerce(v)] for v in arr]
    return [[GaussianRational.coerce(complex(v)) for v in row] for row in arr]


def to_numpy(mat: Sequence[Sequence[GaussianRational]]) -> np.ndarray:
    return np.array([[complex(v) for v in row] for row in mat], dtype=complex)


def zeros(rows: int, cols: int) -> Matrix:
    return [[ZERO for _ in range(cols)] for _ in range(rows)]


def identity(n: int) -> Matrix:
    m = zeros(n, n)
    for i in range(n):
        m[i][i] = ONE
    return m


def matmul(A: Matrix, B: Matrix) -> Matrix:
    n, k, m = len(A), len(B), len(B[0])
    out = zeros(n, m)
    for i in range(n):
        Ai = A[i]
        for j in range(m):
            s = ZERO
            for l in range(k):
                if Ai[l] and B[l][j]:
                    s = s + Ai[l] * B[l][j]
            out[i][j] = s
    return out


def rref(M: Matrix):
    """Reduced row echelon form; returns (matrix, pivot columns)."""
    A = [list(row) for row in M]
    rows = len(A)
    cols = len(A[0]) if rows else 0
    pivots = []
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if A[i][c]), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        inv = ONE / A[r][c]
        A[r] = [v * inv for v in A[r]]
        for i in range(rows):
            if i != r and A[i][c]:
                f = A[i][c]
                A[i] = [vi - f * vr for vi, vr in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    return A, pivots


def nullspace(M: Matrix, ncols: int | None = None) -> List[List[GaussianRational]]:
    """Basis of the right nullspace, one vector per free column (standard RREF basis)."""
    if not M:
        n = ncols or 0
        return [[ONE if i == j else ZERO for i in range(n)] for j in range(n)]
    R, pivots = rref(M)
    n = len(M[0])
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for f in free:
        v = [ZERO] * n
        v[f] = ONE
        for row, pc in zip(R, pivots):
            v[pc] = -row[f]
        basis.append(v)
    return basis


def inverse(M: Matrix) -> Matrix:
    n = len(M)
    aug = [list(row) + list(irow) for row, irow in zip(M, identity(n))]
    R, pivots = rref(aug)
    if pivots[:n] != list(range(n)):
        raise ZeroDivisionError("singular exact matrix")
    return [row[n:] for row in R]


def is_representable(mat: Iterable) -> bool:
    try:
        to_exact(mat)
    except (ValueError, TypeError):
        return False
    return True
