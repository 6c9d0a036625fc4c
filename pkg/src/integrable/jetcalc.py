"""Exact differential polynomials and the hierarchy recursion.

A :class:`DiffPoly` is a polynomial in jet variables ``d^k u_c / dx^k`` with
Gaussian rational coefficients. ``u = sum_c u_c P_c`` where ``P_c`` runs over
the perp basis of the context, so jet components index that basis.

The coefficients Q_{b,j}(u) satisfy

    (Q_j)_x + [u, Q_j] = [Q_{j+1}, a],   Q_0 = b,

and are computed one order at a time: the perp part of Q_{j+1} by inverting
ad(a), the centralizer part by exact integration in x with zero constant.
"""
from __future__ import annotations

import warnings
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ._exact import ZERO, GaussianRational, to_exact
from .algebra import AlgebraContext, ContextError, commutator

DEFAULT_MAX_J = 6
DEFAULT_MAX_ORDER = 64


class NotExact(ArithmeticError):
    """The polynomial is not a total x-derivative in the jet ring."""


class JetVar(NamedTuple):
    component: int
    order: int


Monomial = Tuple[JetVar, ...]


def _gq(c) -> GaussianRational:
    return GaussianRational.coerce(c)


class DiffPoly:
    """Sparse polynomial: canonical sorted monomials mapped to nonzero coefficients."""

    __slots__ = ("terms",)

    def __init__(self, terms: Optional[Mapping[Monomial, GaussianRational]] = None):
        self.terms: Dict[Monomial, GaussianRational] = {}
        if terms:
            for m, c in terms.items():
                c = _gq(c)
                if c:
                    key = tuple(sorted(m))
                    prev = self.terms.get(key)
                    c = c if prev is None else prev + c
                    if c:
                        self.terms[key] = c
                    else:
                        self.terms.pop(key, None)

    # constructors
    @classmethod
    def const(cls, c) -> "DiffPoly":
        return cls({(): c})

    @classmethod
    def jet(cls, component: int, order: int = 0, coeff=1) -> "DiffPoly":
        return cls({(JetVar(component, order),): coeff})

    @classmethod
    def _raw(cls, terms: Dict[Monomial, GaussianRational]) -> "DiffPoly":
        p = cls.__new__(cls)
        p.terms = terms
        return p

    # arithmetic
    def __add__(self, other) -> "DiffPoly":
        other = _as_poly(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            v = out.get(m)
            v = c if v is None else v + c
            if v:
                out[m] = v
            else:
                out.pop(m, None)
        return DiffPoly._raw(out)

    __radd__ = __add__

    def __neg__(self) -> "DiffPoly":
        return DiffPoly._raw({m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> "DiffPoly":
        return self + (-_as_poly(other))

    def __rsub__(self, other) -> "DiffPoly":
        return _as_poly(other) - self

    def __mul__(self, other) -> "DiffPoly":
        if not isinstance(other, DiffPoly):
            c = _gq(other)
            if not c:
                return DiffPoly()
            return DiffPoly._raw({m: v * c for m, v in self.terms.items()})
        out: Dict[Monomial, GaussianRational] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(sorted(m1 + m2))
                v = out.get(m)
                v = c1 * c2 if v is None else v + c1 * c2
                if v:
                    out[m] = v
                else:
                    out.pop(m, None)
        return DiffPoly._raw(out)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiffPoly):
            try:
                other = _as_poly(other)
            except TypeError:
                return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def __len__(self):
        return len(self.terms)

    def max_order(self) -> int:
        return max((v.order for m in self.terms for v in m), default=-1)

    def components(self) -> set:
        return {v.component for m in self.terms for v in m}

    def jets(self) -> set:
        return {v for m in self.terms for v in m}

    def evaluate(self, jets: Mapping[JetVar, object]):
        """Numeric substitution; values may be complex scalars or numpy arrays."""
        total = 0
        for m, c in self.terms.items():
            term = complex(c)
            for v in m:
                try:
                    term = term * jets[v]
                except KeyError:
                    raise KeyError(f"missing jet assignment for {v}") from None
            total = total + term
        return total

    def substitute(self, mapping: Mapping[int, "DiffPoly"]) -> "DiffPoly":
        """Replace component c by mapping[c]; its k-th jet becomes the k-th x-derivative."""
        cache: Dict[JetVar, DiffPoly] = {}

        def image(v: JetVar) -> DiffPoly:
            if v not in cache:
                if v.component in mapping:
                    p = _as_poly(mapping[v.component])
                    for _ in range(v.order):
                        p = total_x_derivative(p)
                    cache[v] = p
                else:
                    cache[v] = DiffPoly({(v,): 1})
            return cache[v]

        out = DiffPoly()
        for m, c in self.terms.items():
            t = DiffPoly.const(c)
            for v in m:
                t = t * image(v)
            out = out + t
        return out

    def to_tree(self, names: Optional[Sequence[str]] = None) -> dict:
        if not self.terms:
            return _const_tree(ZERO)
        args = [_monomial_tree(m, c, names) for m, c in sorted(self.terms.items(), key=lambda kv: _mono_key(kv[0]))]
        return args[0] if len(args) == 1 else {"op": "add", "args": args}

    def __repr__(self):
        return f"DiffPoly({to_text(self)})"


def _as_poly(x) -> DiffPoly:
    if isinstance(x, DiffPoly):
        return x
    return DiffPoly.const(x)


def _mono_key(m: Monomial):
    return (len(m), tuple(m))


def _frac_str(f: Fraction) -> str:
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def _const_tree(c: GaussianRational) -> dict:
    return {"op": "const", "re": _frac_str(c.re), "im": _frac_str(c.im)}


def _var_name(v: JetVar, names: Optional[Sequence[str]]) -> str:
    if names is not None and v.component < len(names):
        return names[v.component]
    return f"u{v.component}"


def _monomial_tree(m: Monomial, c: GaussianRational, names) -> dict:
    args = [_const_tree(c)] + [{"op": "jet", "var": _var_name(v, names), "order": v.order} for v in m]
    return {"op": "mul", "args": args}


def to_text(p: DiffPoly, names: Optional[Sequence[str]] = None) -> str:
    if not p.terms:
        return "0"
    parts = []
    for m, c in sorted(p.terms.items(), key=lambda kv: _mono_key(kv[0])):
        factors = [_var_name(v, names) + ("_" + "x" * v.order if v.order else "") for v in m]
        parts.append("*".join([f"({c!r})"] + factors))
    return " + ".join(parts)


# ---------------------------------------------------------------------------
# derivation and integration

def total_x_derivative(p: DiffPoly, max_order: int = DEFAULT_MAX_ORDER) -> DiffPoly:
    """Total x-derivative by the Leibniz rule; each jet raises its order by one."""
    out: Dict[Monomial, GaussianRational] = {}
    for m, c in p.terms.items():
        for idx, v in enumerate(m):
            if v.order + 1 > max_order:
                raise ValueError(f"jet order {v.order + 1} exceeds the declared maximum {max_order}")
            nm = tuple(sorted(m[:idx] + (JetVar(v.component, v.order + 1),) + m[idx + 1:]))
            val = out.get(nm)
            val = c if val is None else val + c
            if val:
                out[nm] = val
            else:
                out.pop(nm, None)
    return DiffPoly._raw(out)


def formal_integrate(p: DiffPoly) -> DiffPoly:
    """Return q with D_x q = p and no constant term; raise NotExact if impossible.

    Peels off the top-order jets: an exact p of top order n is linear in the
    order-n jets with coefficients A_c; a primitive of the leading part is
    obtained by integrating A_c in the order-(n-1) jets along rays.
    """
    remaining = p
    result = DiffPoly()
    guard = 0
    while remaining.terms:
        guard += 1
        if guard > 10000:
            raise NotExact("integration did not terminate")
        n = remaining.max_order()
        if n <= 0:
            raise NotExact("polynomial has terms without derivatives; not a total derivative")
        # split by order-n content
        coeffs: Dict[int, Dict[Monomial, GaussianRational]] = {}
        for m, c in remaining.terms.items():
            top = [v for v in m if v.order == n]
            if not top:
                continue
            if len(top) > 1:
                raise NotExact("nonlinear in the highest-order jets")
            v = top[0]
            rest = tuple(w for w in m if w != v) if m.count(v) == 1 else None
            if rest is None:
                raise NotExact("nonlinear in the highest-order jets")
            coeffs.setdefault(v.component, {})[rest] = c
        prim = DiffPoly()
        for comp, A in coeffs.items():
            y = JetVar(comp, n - 1)
            acc: Dict[Monomial, GaussianRational] = {}
            for m, c in A.items():
                k = sum(1 for w in m if w.order == n - 1)
                nm = tuple(sorted(m + (y,)))
                acc[nm] = acc.get(nm, ZERO) + c / (k + 1)
            prim = prim + DiffPoly(acc)
        new_remaining = remaining - total_x_derivative(prim)
        if new_remaining.max_order() >= n and any(
            any(v.order == n for v in m) for m in new_remaining.terms
        ):
            raise NotExact("highest-order part is not a derivative (integrability fails)")
        result = result + prim
        remaining = new_remaining
    return result


# ---------------------------------------------------------------------------
# matrices of differential polynomials

class DiffPolyMatrix:
    """Square matrix with DiffPoly entries."""

    __slots__ = ("entries",)

    def __init__(self, entries: Sequence[Sequence[DiffPoly]]):
        self.entries = [[_as_poly(e) for e in row] for row in entries]

    @property
    def dim(self) -> int:
        return len(self.entries)

    @classmethod
    def zeros(cls, n: int) -> "DiffPolyMatrix":
        return cls([[DiffPoly() for _ in range(n)] for _ in range(n)])

    @classmethod
    def constant(cls, M) -> "DiffPolyMatrix":
        ex = M if isinstance(M, list) else to_exact(M)
        return cls([[DiffPoly.const(v) for v in row] for row in ex])

    def __add__(self, other: "DiffPolyMatrix") -> "DiffPolyMatrix":
        return DiffPolyMatrix([[x + y for x, y in zip(r1, r2)] for r1, r2 in zip(self.entries, other.entries)])

    def __sub__(self, other: "DiffPolyMatrix") -> "DiffPolyMatrix":
        return DiffPolyMatrix([[x - y for x, y in zip(r1, r2)] for r1, r2 in zip(self.entries, other.entries)])

    def __neg__(self):
        return DiffPolyMatrix([[-x for x in r] for r in self.entries])

    def scale(self, c) -> "DiffPolyMatrix":
        return DiffPolyMatrix([[x * c for x in r] for r in self.entries])

    def __matmul__(self, other: "DiffPolyMatrix") -> "DiffPolyMatrix":
        n = self.dim
        out = []
        for i in range(n):
            row = []
            for j in range(n):
                s = DiffPoly()
                for k in range(n):
                    x, y = self.entries[i][k], other.entries[k][j]
                    if x.terms and y.terms:
                        s = s + x * y
                row.append(s)
            out.append(row)
        return DiffPolyMatrix(out)

    def bracket(self, other: "DiffPolyMatrix") -> "DiffPolyMatrix":
        return (self @ other) - (other @ self)

    def derivative(self) -> "DiffPolyMatrix":
        return DiffPolyMatrix([[total_x_derivative(x) for x in r] for r in self.entries])

    def substitute(self, mapping: Mapping[int, DiffPoly]) -> "DiffPolyMatrix":
        return DiffPolyMatrix([[x.substitute(mapping) for x in r] for r in self.entries])

    def is_zero(self) -> bool:
        return all(x.is_zero() for r in self.entries for x in r)

    def __eq__(self, other) -> bool:
        return isinstance(other, DiffPolyMatrix) and self.entries == other.entries

    def max_order(self) -> int:
        return max(x.max_order() for r in self.entries for x in r)

    def term_count(self) -> int:
        return sum(len(x) for r in self.entries for x in r)

    def jets(self) -> set:
        out = set()
        for r in self.entries:
            for x in r:
                out |= x.jets()
        return out

    def to_tree(self, names: Optional[Sequence[str]] = None) -> dict:
        return {"op": "matrix", "args": [[x.to_tree(names) for x in r] for r in self.entries]}

    def __repr__(self):
        return "DiffPolyMatrix(" + repr([[to_text(x) for x in r] for r in self.entries]) + ")"


def evaluate(M: DiffPolyMatrix, jets: Mapping[JetVar, object]) -> np.ndarray:
    """Numeric value of a DiffPolyMatrix; jet values may be arrays (result gets trailing n x n axes)."""
    n = M.dim
    vals = [[x.evaluate(jets) for x in row] for row in M.entries]
    shape = np.broadcast(*[np.asarray(v) for row in vals for v in row]).shape
    out = np.zeros(shape + (n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            out[..., i, j] = vals[i][j]
    return out


# ---------------------------------------------------------------------------
# the recursion

def default_names(ctx: AlgebraContext) -> List[str]:
    if ctx.dim == 2 and len(ctx.basis_perp) == 2:
        return ["q", "r"]
    return [f"u{c}" for c in range(len(ctx.basis_perp))]


def _exact_data(ctx: AlgebraContext):
    if ctx.exact is None:
        raise ContextError(f"context {ctx.name!r} is not exactly representable over Q(i); "
                           "symbolic recursion needs Gaussian rational a and bases")
    return ctx.exact


def u_matrix(ctx: AlgebraContext) -> DiffPolyMatrix:
    """u = sum_c u_c P_c over the perp basis."""
    ex = _exact_data(ctx)
    n = ctx.dim
    out = DiffPolyMatrix.zeros(n)
    for c, P in enumerate(ex.basis_perp):
        out = out + DiffPolyMatrix([[DiffPoly.jet(c) * P[i][j] for j in range(n)] for i in range(n)])
    return out


def _split_coords(ctx: AlgebraContext, M: DiffPolyMatrix) -> List[DiffPoly]:
    ex = ctx.exact
    n = ctx.dim
    vec = [M.entries[r // n][r % n] for r in ex.pivot_rows]
    coords = []
    for row in ex.coord_rows:
        s = DiffPoly()
        for c, v in zip(row, vec):
            if c and v.terms:
                s = s + v * c
        coords.append(s)
    return coords


def _combine(basis, coords: Sequence[DiffPoly], n: int) -> DiffPolyMatrix:
    out = [[DiffPoly() for _ in range(n)] for _ in range(n)]
    for B, c in zip(basis, coords):
        if not c.terms:
            continue
        for i in range(n):
            for j in range(n):
                if B[i][j]:
                    out[i][j] = out[i][j] + c * B[i][j]
    return DiffPolyMatrix(out)


def _check_b(ctx: AlgebraContext, b) -> list:
    b = np.asarray(ctx.b if b is None else b, dtype=complex)
    for K in ctx.basis_cent:
        if np.linalg.norm(commutator(b, K)) > 1e-10:
            raise ContextError("b does not lie in the centralizer of a (its centralizer must equal that of a)")
    try:
        return to_exact(b)
    except ValueError:
        raise ContextError("b is not representable over Q(i)") from None


def _b_key(b) -> tuple:
    return tuple(complex(v) for v in np.asarray(b, dtype=complex).reshape(-1))


_Q_CACHE: Dict[tuple, List[DiffPolyMatrix]] = {}


def compute_Q_list(ctx: AlgebraContext, b=None, j: int = 1, max_j: int = DEFAULT_MAX_J) -> List[DiffPolyMatrix]:
    """[Q_{b,0}, ..., Q_{b,j}]; each step re-verifies the recursion identity exactly."""
    ex = _exact_data(ctx)
    b_ex = _check_b(ctx, b)
    bval = ctx.b if b is None else b
    if j < 0:
        raise ValueError("j must be nonnegative")
    key = (id(ctx), ctx.name, _b_key(bval))
    cached = _Q_CACHE.get(key)
    if cached is not None and len(cached) > j:
        return cached[: j + 1]
    n = ctx.dim
    u = u_matrix(ctx)
    a = DiffPolyMatrix.constant(ex.a)
    nc = len(ex.basis_cent)
    Qs = cached[:] if cached else [DiffPolyMatrix.constant(b_ex)]
    while len(Qs) <= j:
        Q = Qs[-1]
        if len(Qs) > max_j:
            warnings.warn(f"computing Q_{len(Qs)} beyond max_j={max_j}: previous level has {Q.term_count()} terms",
                          RuntimeWarning, stacklevel=2)
        R = Q.derivative() + u.bracket(Q)
        coords = _split_coords(ctx, R)
        perp = coords[nc:]
        new_perp = []
        for row in ex.ad_a_perp_inv:
            s = DiffPoly()
            for c, v in zip(row, perp):
                if c and v.terms:
                    s = s + v * c
            new_perp.append(-s)
        Qperp = _combine(ex.basis_perp, new_perp, n)
        S = _split_coords(ctx, u.bracket(Qperp))[:nc]
        cent = [formal_integrate(-s) for s in S]
        Qnext = Qperp + _combine(ex.basis_cent, cent, n)
        resid = R - Qnext.bracket(a)
        if not resid.is_zero():
            raise ArithmeticError(f"recursion identity failed at j={len(Qs) - 1}")
        Qs.append(Qnext)
    _Q_CACHE[key] = Qs
    return Qs[: j + 1]


def compute_Q(ctx: AlgebraContext, b=None, j: int = 1, max_j: int = DEFAULT_MAX_J) -> DiffPolyMatrix:
    """Q_{b,j}(u) as an exact DiffPolyMatrix."""
    return compute_Q_list(ctx, b, j, max_j)[j]


def flow_rhs(ctx: AlgebraContext, b=None, j: int = 1, max_j: int = DEFAULT_MAX_J) -> DiffPolyMatrix:
    """Right-hand side (Q_{b,j})_x + [u, Q_{b,j}] of the (b,j)-flow."""
    Q = compute_Q(ctx, b, j, max_j)
    return Q.derivative() + u_matrix(ctx).bracket(Q)


def recursion_residual(ctx: AlgebraContext, b=None, j: int = 1) -> DiffPolyMatrix:
    """(Q_j)_x + [u,Q_j] - [Q_{j+1}, a]; the zero matrix when the recursion holds."""
    Qs = compute_Q_list(ctx, b, j + 1, max_j=max(DEFAULT_MAX_J, j + 1))
    a = DiffPolyMatrix.constant(_exact_data(ctx).a)
    return Qs[j].derivative() + u_matrix(ctx).bracket(Qs[j]) - Qs[j + 1].bracket(a)


def perp_entries(ctx: AlgebraContext, M: DiffPolyMatrix) -> List[DiffPoly]:
    """Coordinates of the perp part of M (the components of a flow u_t = M)."""
    return _split_coords(ctx, M)[len(_exact_data(ctx).basis_cent):]


def jets_from_values(values: Mapping[int, Sequence]) -> Dict[JetVar, object]:
    """Build a jet assignment from {component: [u_c, u_c', u_c'', ...]}."""
    out: Dict[JetVar, object] = {}
    for c, derivs in values.items():
        for k, v in enumerate(derivs):
            out[JetVar(c, k)] = v
    return out
