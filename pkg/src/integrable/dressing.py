"""Dressing by rational loops with simple poles.

A dressing element is a loop of the form sum_k zeta_k(lambda) P_k with
orthogonal projections P_k summing to the identity. Acting on a solution with
frame E it produces the frame  g E g_new^-1  where g_new has the same shape as
g with projections transported by the frame evaluated at the pole. Frames stay
closed-form compositions, so they can be evaluated at any lambda off the pole
set and chained.

A general Zakharov-Shabat engine (rank-one residues at prescribed poles and
zeros) handles the twisted Tzitzeica case where the pole set is an orbit of
the twist.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .algebra import AlgebraContext, check_reality, commutator, twisted_sample_set
from .laxflow import SolutionGrid

SPAN_FLOOR = 1e-12
PROJECTION_TOL = 1e-12
FAMILIES = ("f_alpha_pi", "g_is_pi", "h_is_pi")
REALITY_TAGS = ("Gtau", "U", "Gtausigma")
_FAMILY_ALIASES = {"f": "f_alpha_pi", "g": "g_is_pi", "h": "h_is_pi", "f_αpi": "f_alpha_pi",
                   "g_ispi": "g_is_pi", "h_ispi": "h_is_pi"}
_TAG_ALIASES = {"Gτ": "Gtau", "Gτσ": "Gtausigma", "U/U0": "U", "U/U₀": "U"}


class DressingError(ValueError):
    pass


class SingularDressing(DressingError):
    """The transported span degenerates at some gridpoints."""

    def __init__(self, message: str, locations):
        super().__init__(message)
        self.locations = locations


def hermitian_projection(V: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the column span of V; works on stacks (..., n, r)."""
    V = np.asarray(V, dtype=complex)
    if V.ndim == 1:
        V = V[:, None]
    Vh = np.conj(np.swapaxes(V, -1, -2))
    return V @ np.linalg.solve(Vh @ V, Vh)


def projection_defect(P: np.ndarray) -> float:
    """max of |P^2 - P| and |P - P^*| over a stack, ignoring masked points."""
    P = np.asarray(P)
    d1 = np.abs(P @ P - P)
    d2 = np.abs(P - np.conj(np.swapaxes(P, -1, -2)))
    return float(max(np.nanmax(d1), np.nanmax(d2)))


# ---------------------------------------------------------------------------
# frame evaluators

class FrameEvaluator:
    """Interface: closed-form frame E(x, lambda) on a fixed grid, normalized to I at the base point."""

    axes: Tuple[np.ndarray, ...]
    dim: int

    @property
    def grid_shape(self) -> Tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def base_index(self) -> Tuple[int, ...]:
        return tuple(int(np.argmin(np.abs(a))) for a in self.axes)

    def evaluate(self, lam: complex) -> np.ndarray:
        raise NotImplementedError

    def dlam(self, lam: complex) -> np.ndarray:
        raise NotImplementedError

    def excluded(self) -> List[complex]:
        """Spectral values where the evaluator is undefined."""
        return []

    def __call__(self, lam: complex) -> np.ndarray:
        return self.evaluate(lam)


def _exp_line(L: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """exp(x L) for every x in xs; eigen-decomposition when well conditioned."""
    w, P = np.linalg.eig(L)
    if np.linalg.cond(P) < 1e6:
        Pinv = np.linalg.inv(P)
        return (P[None] * np.exp(np.outer(xs, w))[:, None, :]) @ Pinv[None]
    return scipy.linalg.expm(xs[:, None, None] * L[None])


@dataclass
class VacuumFrame(FrameEvaluator):
    """E = exp(sum_i x_i L_i(lambda)) with commuting Laurent polynomials L_i.

    ``exponents[i]`` maps a power of lambda to its coefficient matrix.
    """

    axes: Tuple[np.ndarray, ...]
    exponents: List[Dict[int, np.ndarray]]
    dim: int
    kind: str = "flow"

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        self.exponents = [{int(p): np.asarray(c, dtype=complex) for p, c in e.items()} for e in self.exponents]

    def _L(self, i: int, lam: complex, derivative: bool = False) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for p, c in self.exponents[i].items():
            if p < 0 and lam == 0:
                raise ZeroDivisionError("lambda = 0 is a pole of this vacuum frame")
            if derivative:
                if p != 0:
                    out = out + p * lam ** (p - 1) * c
            else:
                out = out + lam ** p * c
        return out

    def excluded(self) -> List[complex]:
        return [0j] if any(p < 0 for e in self.exponents for p in e) else []

    def evaluate(self, lam: complex) -> np.ndarray:
        lam = complex(lam)
        k = len(self.axes)
        E = None
        for i, ax in enumerate(self.axes):
            Ei = _exp_line(self._L(i, lam), ax)
            shape = [1] * k + [self.dim, self.dim]
            shape[i] = ax.size
            Ei = Ei.reshape(shape)
            E = Ei if E is None else E @ Ei
        return np.broadcast_to(E, self.grid_shape + (self.dim, self.dim)).copy()

    def dlam(self, lam: complex) -> np.ndarray:
        lam = complex(lam)
        mesh = np.meshgrid(*self.axes, indexing="ij")
        D = sum(m[..., None, None] * self._L(i, lam, True) for i, m in enumerate(mesh))
        return D @ self.evaluate(lam)

    # constructors ---------------------------------------------------------
    @classmethod
    def flow(cls, ctx: AlgebraContext, b, j: int, x, t) -> "VacuumFrame":
        """exp(a lambda x + b lambda^j t); j = -1 gives the -1-flow vacuum."""
        b = ctx.b if b is None else np.asarray(b, dtype=complex)
        return cls((x, t), [{1: ctx.a}, {j: b}], ctx.dim, "minus-one" if j == -1 else "flow")

    @classmethod
    def minus_one(cls, ctx: AlgebraContext, x, t) -> "VacuumFrame":
        return cls.flow(ctx, ctx.b, -1, x, t)

    @classmethod
    def ntuple(cls, ctx: AlgebraContext, axes) -> "VacuumFrame":
        if len(ctx.flats) != len(axes):
            raise ValueError("one axis per flat generator is required")
        return cls(tuple(axes), [{1: A} for A in ctx.flats], ctx.dim, "ntuple")

    @classmethod
    def elliptic(cls, ctx: AlgebraContext, x, y, a=None) -> "VacuumFrame":
        """Normalized elliptic vacuum: F^-1 F_z = (lambda^-1 - 1) a and F(lambda = 1) = I."""
        a = ctx.a if a is None else np.asarray(a, dtype=complex)
        return cls((x, y), [{-1: a, 1: a, 0: -2 * a}, {-1: 1j * a, 1: -1j * a}], ctx.dim, "elliptic")


def vacuum_frame(ctx: AlgebraContext, b, j: int, x, t, lam: complex) -> np.ndarray:
    """exp(a x lambda + b lambda^j t) at the given points (scalars or grid axes)."""
    lam = complex(lam)
    if j < 0 and lam == 0:
        raise ZeroDivisionError("lambda = 0 is a pole of the -1-flow vacuum")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    ev = VacuumFrame.flow(ctx, b, j, xs, ts)
    out = ev.evaluate(lam)
    if np.ndim(x) == 0 and np.ndim(t) == 0:
        return out[0, 0]
    return out


# ---------------------------------------------------------------------------
# dressing elements

def _zeta_f(alpha: complex) -> Tuple[Callable, Callable]:
    ab = np.conj(alpha)

    def z(lam):
        return (lam - alpha) * (ab - 1) / ((ab * lam - 1) * (1 - alpha))

    def dz(lam):
        c = (ab - 1) / (1 - alpha)
        return c * ((ab * lam - 1) - ab * (lam - alpha)) / (ab * lam - 1) ** 2

    return z, dz


def _zeta_g(alpha: complex) -> Tuple[Callable, Callable]:
    ab = np.conj(alpha)

    def z(lam):
        return (lam - alpha) / (lam - ab)

    def dz(lam):
        return (alpha - ab) / (lam - ab) ** 2

    return z, dz


@dataclass
class SimplePoleDressing:
    """A rational dressing element.

    family f_alpha_pi: pi + zeta_alpha pi_perp, zero at alpha, pole at 1/conj(alpha), identity at 1.
    family g_is_pi:    pi + (lambda - alpha)/(lambda - conj(alpha)) pi_perp; alpha = i s is the
                       standard case, any non-real alpha is accepted.
    family h_is_pi:    g_{is, pi} g_{-is, conj(pi)} with pi the projection onto (W, iZ), W and Z real
                       unit vectors; pi and conj(pi) are orthogonal.
    """

    family: str
    pole: complex
    V: np.ndarray
    reality_tag: Optional[str] = None

    def __post_init__(self):
        self.family = _FAMILY_ALIASES.get(self.family, self.family)
        if self.family not in FAMILIES:
            raise DressingError(f"unknown family {self.family!r}; known: {', '.join(FAMILIES)}")
        self.pole = complex(self.pole)
        V = np.asarray(self.V, dtype=complex)
        self.V = V[:, None] if V.ndim == 1 else V
        if np.min(np.linalg.svd(self.V, compute_uv=False)) < SPAN_FLOOR:
            raise DressingError("V must have independent columns")
        n = self.V.shape[0]
        if self.V.shape[1] >= n:
            raise DressingError("V must span a proper subspace")
        if self.family == "f_alpha_pi":
            if abs(abs(self.pole) - 1) < 1e-12 or abs(self.pole) < 1e-12:
                raise DressingError("f-family pole alpha must satisfy |alpha| != 0, 1")
        else:
            if abs(self.pole.imag) < 1e-12:
                raise DressingError("g/h-family pole must be off the real axis")
        if self.family == "h_is_pi":
            if abs(self.pole.real) > 1e-14:
                raise DressingError("h-family pole must be i s with s real")
            if self.V.shape[1] != 1 or n % 2:
                raise DressingError("h-family needs one vector (W, iZ) in an even dimension")
            m = n // 2
            W, Z = self.V[:m, 0], self.V[m:, 0] / 1j
            if np.max(np.abs(W.imag)) > 1e-12 or np.max(np.abs(Z.imag)) > 1e-12:
                raise DressingError("h-family vector must have the form (W, iZ) with W, Z real")
            if abs(np.linalg.norm(W) - np.linalg.norm(Z)) > 1e-12 * max(1.0, np.linalg.norm(W)):
                raise DressingError("h-family needs |W| = |Z| so that pi and its conjugate are orthogonal")
        if self.reality_tag is None:
            self.reality_tag = {"f_alpha_pi": "Gtau", "g_is_pi": "U", "h_is_pi": "Gtausigma"}[self.family]
        self.reality_tag = _TAG_ALIASES.get(self.reality_tag, self.reality_tag)
        if self.reality_tag not in REALITY_TAGS:
            raise DressingError(f"unknown reality tag {self.reality_tag!r}")
        self.projection = hermitian_projection(self.V)

    # structure ------------------------------------------------------------
    @property
    def s(self) -> float:
        return float(self.pole.imag)

    @property
    def transport_point(self) -> complex:
        """Spectral value where the base frame transports the span."""
        if self.family == "f_alpha_pi":
            return 1 / np.conj(self.pole)
        if self.family == "g_is_pi":
            return np.conj(self.pole)
        return -1j * self.s

    def singular_points(self) -> List[complex]:
        """Zeros and poles of the element."""
        if self.family == "f_alpha_pi":
            return [self.pole, 1 / np.conj(self.pole)]
        return [self.pole, np.conj(self.pole)]

    def _parts(self, P: np.ndarray) -> List[Tuple[np.ndarray, Callable, Callable]]:
        n = P.shape[-1]
        Id = np.eye(n)
        if self.family == "f_alpha_pi":
            z, dz = _zeta_f(self.pole)
            return [(P, lambda l: 1.0, lambda l: 0.0), (Id - P, z, dz)]
        if self.family == "g_is_pi":
            z, dz = _zeta_g(self.pole)
            return [(P, lambda l: 1.0, lambda l: 0.0), (Id - P, z, dz)]
        s = self.s
        Pb = np.conj(P)

        def rinv(l):
            return (l + 1j * s) / (l - 1j * s)

        def drinv(l):
            return -2j * s / (l - 1j * s) ** 2

        def r(l):
            return (l - 1j * s) / (l + 1j * s)

        def dr(l):
            return 2j * s / (l + 1j * s) ** 2

        return [(P, rinv, drinv), (Pb, r, dr), (Id - P - Pb, lambda l: 1.0, lambda l: 0.0)]

    def loop(self, lam: complex, P: Optional[np.ndarray] = None, inverse: bool = False) -> np.ndarray:
        """Value of the element built on projection P (default: its own) at lambda."""
        P = self.projection if P is None else P
        out = 0
        for Q, z, _ in self._parts(P):
            c = z(lam)
            out = out + (1 / c if inverse else c) * Q
        return out

    def dloop(self, lam: complex, P: Optional[np.ndarray] = None, inverse: bool = False) -> np.ndarray:
        P = self.projection if P is None else P
        out = 0
        for Q, z, dz in self._parts(P):
            c = dz(lam)
            if inverse:
                c = -c / z(lam) ** 2
            out = out + c * Q
        return out

    def inverse_m1(self, P: np.ndarray) -> np.ndarray:
        """lambda^-1 coefficient at infinity of the inverse element built on P (g and h families)."""
        n = P.shape[-1]
        if self.family == "g_is_pi":
            return (self.pole - np.conj(self.pole)) * (np.eye(n) - P)
        if self.family == "h_is_pi":
            return 2j * self.s * (np.conj(P) - P)
        raise DressingError("the f-family is not normalized at infinity; use frames instead")

    def reality_condition(self, ctx: AlgebraContext) -> str:
        """Condition name understood by algebra.check_reality."""
        if self.reality_tag == "Gtau":
            return "Gtau"
        if self.reality_tag == "Gtausigma":
            # the h-family is real for tau with lambda -> conj(lambda) and sigma-twisted by lambda -> -lambda
            return "U/U0"
        if ctx.sigma is not None and np.max(np.abs(self.V.imag)) < 1e-14:
            return "U/U0"
        return "U"

    def reality_residual(self, ctx: AlgebraContext, lams: Sequence[complex] = (0.7 + 0.4j, 2.0 - 1.3j)) -> float:
        cond = self.reality_condition(ctx)
        sample = twisted_sample_set(lams, ctx.k if cond == "U/U0" else 1, inversion=(cond == "Gtau"))
        vals = [(l, self.loop(l)) for l in sample]
        return check_reality(vals, cond, ctx, level="group")


# ---------------------------------------------------------------------------
# dressed frames

@dataclass
class DressedFrame(FrameEvaluator):
    """E_new(lambda) = g(lambda) E(lambda) g_new(lambda)^-1 with g_new built on a projection field."""

    base: FrameEvaluator
    element: SimplePoleDressing
    projection: np.ndarray          # grid_shape + (n, n)

    def __post_init__(self):
        self.axes = self.base.axes
        self.dim = self.base.dim

    def excluded(self) -> List[complex]:
        return list(self.base.excluded()) + self.element.singular_points()

    def evaluate(self, lam: complex) -> np.ndarray:
        el = self.element
        return el.loop(lam) @ self.base.evaluate(lam) @ el.loop(lam, self.projection, inverse=True)

    def dlam(self, lam: complex) -> np.ndarray:
        el = self.element
        g, dg = el.loop(lam), el.dloop(lam)
        h, dh = el.loop(lam, self.projection, inverse=True), el.dloop(lam, self.projection, inverse=True)
        E, dE = self.base.evaluate(lam), self.base.dlam(lam)
        return dg @ E @ h + g @ dE @ h + g @ E @ dh


# ---------------------------------------------------------------------------
# solutions

SOLUTION_KINDS = ("flow", "minus-one", "ntuple", "elliptic")


@dataclass
class Solution:
    """A solution grid together with a closed-form frame."""

    ctx: AlgebraContext
    kind: str
    grid: SolutionGrid
    frame: FrameEvaluator
    poles: Tuple[complex, ...] = ()
    singular: Optional[np.ndarray] = None   # boolean mask of masked gridpoints

    @property
    def fields(self):
        return self.grid.fields


@dataclass
class DressedSolution(Solution):
    base: Optional[Solution] = None
    element: Optional[SimplePoleDressing] = None
    projection: Optional[np.ndarray] = None


def _mesh(axes):
    return np.meshgrid(*axes, indexing="ij")


def _scalar_fields(ctx: AlgebraContext, kind: str, fields: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """Scalar unknowns recovered from the matrix fields for the catalog equations."""
    out = {}
    if kind == "flow" and ctx.dim == 2:
        out["q"] = fields["u"][..., 0, 1]
    if kind == "minus-one":
        v = fields["v"]
        if ctx.name == "sl2-su2/so2":
            cos_q = (4j * v[..., 0, 0]).real
            sin_q = (4j * v[..., 0, 1]).real
            q = np.arctan2(sin_q, cos_q)
            # unwrap along both axes from the base point outward
            q = np.unwrap(q, axis=0)
            q = np.unwrap(q, axis=1)
            out["q"] = q
        if ctx.name == "sl3-tzitzeica":
            out["w"] = np.log(v[..., 1, 2].real)
    if kind == "ntuple" and ctx.name.endswith("grassmann"):
        n = ctx.dim // 2
        out["F"] = fields["v"][..., :n, n:].real
    return out


def vacuum_solution(ctx: AlgebraContext, kind: str, axes, b=None, j: int = 2) -> Solution:
    """The zero solution of the chosen system with its closed-form frame."""
    axes = tuple(np.asarray(a, dtype=float) for a in axes)
    shape = tuple(a.size for a in axes) + (ctx.dim, ctx.dim)
    zero = np.zeros(shape, dtype=complex)
    if kind == "flow":
        frame = VacuumFrame.flow(ctx, b, j, *axes)
        fields = {"u": zero}
        meta = {"j": j}
        tag = "flow"
    elif kind == "minus-one":
        frame = VacuumFrame.minus_one(ctx, *axes)
        fields = {"u": zero, "v": np.broadcast_to(ctx.b, shape).copy()}
        meta = {}
        tag = "minus-one"
    elif kind == "ntuple":
        frame = VacuumFrame.ntuple(ctx, axes)
        fields = {"v": zero}
        meta = {}
        tag = "grassmann" if ctx.name.endswith("grassmann") else "uu0-system"
    elif kind == "elliptic":
        frame = VacuumFrame.elliptic(ctx, *axes)
        fields = {"v1": np.broadcast_to(ctx.a, shape).copy()}
        meta = {"m": 1}
        tag = "gtau"
    else:
        raise ValueError(f"unknown solution kind {kind!r}; known: {', '.join(SOLUTION_KINDS)}")
    fields.update(_scalar_fields(ctx, kind, fields))
    names = ("x", "t") if kind in ("flow", "minus-one") else (("x", "y") if kind == "elliptic"
                                                              else tuple(f"x{i + 1}" for i in range(len(axes))))
    if kind == "flow":
        meta["b"] = None if b is None else np.asarray(b).tolist()
    grid = SolutionGrid(axes, fields, tag, ctx.name, names, meta=meta)
    return Solution(ctx, kind, grid, frame)


def transport_projection(el: SimplePoleDressing, frame_at_point: np.ndarray,
                         floor: float = SPAN_FLOOR) -> Tuple[np.ndarray, np.ndarray]:
    """Projection onto frame_at_point^-1 (span V), pointwise.

    Returns (projection field, boolean mask of degenerate points). Degenerate
    points carry NaN.
    """
    E = np.asarray(frame_at_point, dtype=complex)
    Vt = np.linalg.solve(E, np.broadcast_to(el.V, E.shape[:-2] + el.V.shape))
    sv = np.linalg.svd(Vt, compute_uv=False)
    bad = ~np.all(np.isfinite(sv), axis=-1) | (sv.min(axis=-1) < floor)
    Vt = np.where(bad[..., None, None], np.eye(*el.V.shape), Vt)
    P = hermitian_projection(Vt)
    P[bad] = np.nan
    return P, bad


def update_projection(el: SimplePoleDressing, frame_at_pole: np.ndarray) -> np.ndarray:
    """Hermitian projection onto frame_at_pole^-1 (span V); raises SingularDressing on degenerate points."""
    P, bad = transport_projection(el, frame_at_pole)
    if np.any(bad):
        raise SingularDressing("transported span degenerates", np.argwhere(bad))
    return P


def dress(el: SimplePoleDressing, base: Solution, mask: bool = True) -> DressedSolution:
    """Act with a rational element on a solution.

    The projection is transported by the base frame at the element's transport
    point; fields are updated from the lambda-expansion of the new inverse factor:
    u + [a, m1] for flows, conjugation by its value at 0 for v of the -1-flow and
    the elliptic slot, v + m1 for the U/U0 n-tuple.
    """
    ctx = base.ctx
    point = el.transport_point
    for z in base.frame.excluded():
        if abs(z - point) < 1e-10:
            raise DressingError(f"transport point {point} collides with a singular value of the base frame")
    if any(abs(p - el.pole) < 1e-12 for p in base.poles):
        raise DressingError("poles of a dressing chain must be pairwise distinct")
    cond = el.reality_condition(ctx)
    if cond == "U/U0" and ctx.sigma is None:
        raise DressingError("element is sigma-twisted but the context has no sigma")
    P, bad = transport_projection(el, base.frame.evaluate(point))
    if np.any(bad) and not mask:
        raise SingularDressing("transported span degenerates", np.argwhere(bad))
    Psafe = np.where(bad[..., None, None], el.projection, P)
    f = base.grid.fields
    new: Dict[str, np.ndarray] = {}
    if base.kind == "flow":
        new["u"] = f["u"] + commutator(ctx.a, el.inverse_m1(Psafe))
    elif base.kind == "minus-one":
        m1 = el.inverse_m1(Psafe)
        chi0 = el.loop(0.0, Psafe, inverse=True)
        new["u"] = f["u"] + commutator(ctx.a, m1)
        new["v"] = np.linalg.solve(chi0, f["v"] @ chi0)
    elif base.kind == "ntuple":
        new["v"] = f["v"] + el.inverse_m1(Psafe)
        new["v"] = _drop_centralizer(ctx, new["v"])
    elif base.kind == "elliptic":
        chi0 = el.loop(0.0, Psafe, inverse=True)
        new["v1"] = np.linalg.solve(chi0, f["v1"] @ chi0)
    else:
        raise ValueError(f"unknown solution kind {base.kind!r}")
    new.update(_scalar_fields(ctx, base.kind, new))
    prior = base.singular if base.singular is not None else np.zeros(bad.shape, bool)
    masked = bad | prior
    if np.any(masked):
        for k, v in new.items():
            v = np.array(v, dtype=complex if np.iscomplexobj(v) else float)
            v[masked] = np.nan
            new[k] = v
    grid = SolutionGrid(base.grid.axes, new, base.grid.equation_tag, ctx.name, base.grid.axis_names,
                        meta=dict(base.grid.meta, poles=[[p.real, p.imag] for p in base.poles + (el.pole,)]),
                        allow_masked=bool(np.any(masked)))
    frame = DressedFrame(base.frame, el, Psafe)
    return DressedSolution(ctx, base.kind, grid, frame, base.poles + (el.pole,), masked if np.any(masked) else None,
                           base=base, element=el, projection=P)


def _drop_centralizer(ctx: AlgebraContext, v: np.ndarray) -> np.ndarray:
    """Remove the component commuting with every flat (the diagonal of the off-diagonal block)."""
    if not ctx.flats:
        return v
    out = np.array(v)
    for A in ctx.flats:
        nrm = np.sum(np.abs(A) ** 2)
        coef = np.einsum("...ij,ij->...", out, np.conj(A)) / nrm
        out = out - coef[..., None, None] * A
    return out


def multi_dress(els: Sequence[SimplePoleDressing], base: Solution, mask: bool = True) -> Solution:
    """Left fold of dress over the elements; poles must be pairwise distinct."""
    poles = [e.pole for e in els] + list(base.poles)
    for i in range(len(poles)):
        for k in range(i + 1, len(poles)):
            if abs(poles[i] - poles[k]) < 1e-12:
                raise DressingError(f"repeated pole {poles[i]}: dressing poles must be pairwise distinct")
    sol = base
    for el in els:
        sol = dress(el, sol, mask=mask)
    return sol


def frame_reality_residual(ctx: AlgebraContext, frame: FrameEvaluator, condition: str,
                           lams: Sequence[complex] = (0.6 + 0.3j, 1.7 - 0.8j), stride: int = 8) -> float:
    """check_reality of a frame on a subsampled grid over a closed lambda sample set."""
    k = ctx.k if condition in ("U/U0", "Gtausigma") else 1
    sample = twisted_sample_set(lams, k, inversion=condition in ("Gtau", "Gtausigma"))
    vals = [frame.evaluate(l) for l in sample]
    sl = tuple(slice(None, None, stride) for _ in frame.axes)
    pts = np.stack([v[sl] for v in vals])          # (S, ...sub, n, n)
    flat = pts.reshape(len(sample), -1, ctx.dim, ctx.dim)
    worst = 0.0
    for p in range(flat.shape[1]):
        if not np.all(np.isfinite(flat[:, p])):
            continue
        worst = max(worst, check_reality(list(zip(sample, flat[:, p])), condition, ctx, level="group"))
    return worst


# ---------------------------------------------------------------------------
# Zakharov-Shabat engine

@dataclass
class ZSFrame(FrameEvaluator):
    """E_new = chi(base)^-1 E chi with chi = I + sum_k A_k C_k / (lambda - mu_k)."""

    base: FrameEvaluator
    poles: Tuple[complex, ...]
    cols: np.ndarray      # (K,) + grid + (n,)
    rows: np.ndarray      # (K,) + grid + (n,)

    def __post_init__(self):
        self.axes = self.base.axes
        self.dim = self.base.dim
        bi = self.base_index
        self._cols0 = self.cols[(slice(None),) + bi]
        self._rows0 = self.rows[(slice(None),) + bi]

    def excluded(self) -> List[complex]:
        return list(self.base.excluded()) + list(self.poles)

    def chi(self, lam: complex, at_base: bool = False) -> np.ndarray:
        cols = self._cols0 if at_base else self.cols
        rows = self._rows0 if at_base else self.rows
        out = np.eye(self.dim, dtype=complex)
        for k, mu in enumerate(self.poles):
            out = out + cols[k][..., :, None] * rows[k][..., None, :] / (lam - mu)
        return out

    def dchi(self, lam: complex, at_base: bool = False) -> np.ndarray:
        cols = self._cols0 if at_base else self.cols
        rows = self._rows0 if at_base else self.rows
        out = 0
        for k, mu in enumerate(self.poles):
            out = out - cols[k][..., :, None] * rows[k][..., None, :] / (lam - mu) ** 2
        return out

    def m1(self) -> np.ndarray:
        return sum(self.cols[k][..., :, None] * self.rows[k][..., None, :] for k in range(len(self.poles)))

    def evaluate(self, lam: complex) -> np.ndarray:
        return np.linalg.solve(self.chi(lam, True), self.base.evaluate(lam) @ self.chi(lam))

    def dlam(self, lam: complex) -> np.ndarray:
        cb = self.chi(lam, True)
        cbinv = np.linalg.inv(cb)
        dcb = self.dchi(lam, True)
        E, dE = self.base.evaluate(lam), self.base.dlam(lam)
        c, dc = self.chi(lam), self.dchi(lam)
        return -cbinv @ dcb @ cbinv @ E @ c + cbinv @ (dE @ c + E @ dc)


def zs_solve(frame: FrameEvaluator, poles: Sequence[complex], col0: Sequence[np.ndarray],
             zeros: Sequence[complex], row0: Sequence[np.ndarray], cond_limit: float = 1e12):
    """Residue data of chi for rank-one poles mu_k and zeros nu_l.

    Columns A_k = E(mu_k)^-1 A_k0 and rows B_l = B_l0 E(nu_l) are transported
    by the frame; the rows C_k of the residues solve B_l chi(nu_l) = 0.
    Returns (ZSFrame, mask of singular points).
    """
    K = len(poles)
    if len(zeros) != K:
        raise DressingError("the Zakharov-Shabat engine needs as many zeros as poles")
    allp = list(poles) + list(zeros)
    for i in range(len(allp)):
        for k in range(i + 1, len(allp)):
            if abs(allp[i] - allp[k]) < 1e-12:
                raise DressingError("poles and zeros must be pairwise distinct")
    A = np.stack([np.linalg.solve(frame.evaluate(mu), np.broadcast_to(np.asarray(a0, complex),
                                                                     frame.grid_shape + (frame.dim,))[..., None])[..., 0]
                  for mu, a0 in zip(poles, col0)])
    B = np.stack([np.einsum("j,...jk->...k", np.asarray(b0, complex), frame.evaluate(nu))
                  for nu, b0 in zip(zeros, row0)])
    # M[l, k] = B_l . A_k / (nu_l - mu_k); solve M C = -B for the rows C_k
    M = np.einsum("l...i,k...i->...lk", B, A) / _denominator(zeros, poles, frame.grid_shape)
    cond = np.linalg.cond(M)
    bad = ~np.isfinite(cond) | (cond > cond_limit)
    Msafe = np.where(bad[..., None, None], np.eye(K), M)
    rhs = -np.moveaxis(B, 0, -2)                    # grid + (K, n)
    C = np.linalg.solve(Msafe, rhs)                 # grid + (K, n)
    C = np.moveaxis(C, -2, 0)
    return ZSFrame(frame, tuple(complex(p) for p in poles), A, C), bad


def _denominator(zeros, poles, grid_shape):
    D = np.subtract.outer(np.asarray(zeros, complex), np.asarray(poles, complex))
    return D.reshape((1,) * len(grid_shape) + D.shape)


def zs_dress(base: Solution, poles, col0, zeros, row0, mask: bool = True) -> DressedSolution:
    """Dress a solution with the Zakharov-Shabat engine (flows and the -1-flow)."""
    ctx = base.ctx
    frame, bad = zs_solve(base.frame, poles, col0, zeros, row0)
    if np.any(bad) and not mask:
        raise SingularDressing("residue system is singular", np.argwhere(bad))
    m1 = frame.m1()
    f = base.grid.fields
    new: Dict[str, np.ndarray] = {}
    if base.kind == "flow":
        new["u"] = f["u"] + commutator(ctx.a, m1)
    elif base.kind == "minus-one":
        chi0 = frame.chi(0.0)
        new["u"] = f["u"] + commutator(ctx.a, m1)
        new["v"] = np.linalg.solve(chi0, f["v"] @ chi0)
    else:
        raise ValueError("the Zakharov-Shabat engine handles flows and the -1-flow")
    new.update(_scalar_fields(ctx, base.kind, new))
    if np.any(bad):
        for k, v in new.items():
            v = np.array(v)
            v[bad] = np.nan
            new[k] = v
    grid = SolutionGrid(base.grid.axes, new, base.grid.equation_tag, ctx.name, base.grid.axis_names,
                        meta=dict(base.grid.meta, poles=[[complex(p).real, complex(p).imag] for p in poles]),
                        allow_masked=bool(np.any(bad)))
    return DressedSolution(ctx, base.kind, grid, frame, base.poles + tuple(complex(p) for p in poles),
                           bad if np.any(bad) else None, base=base)


# ---------------------------------------------------------------------------
# catalog recipes

def tzitzeica_dress(base: Solution, mu: float, a0) -> DressedSolution:
    """Tzitzeica solution from a pole orbit mu, e^{2 pi i/3} mu, e^{4 pi i/3} mu.

    The residue columns are tied together by the twist so that the result
    stays real and twisted; zeros sit at the pole orbit divided by e^{i pi/3}.
    """
    ctx = base.ctx
    if ctx.sigma is None or ctx.sigma.kind != "neg-transpose-by-C":
        raise DressingError("tzitzeica_dress needs the twisted sl(3) context")
    mu = float(mu)
    if mu == 0:
        raise DressingError("mu must be non-zero")
    a0 = np.asarray(a0, dtype=float).astype(complex)
    C = ctx.sigma.C
    Kmat = C @ np.linalg.inv(C).T
    om = np.exp(2j * np.pi / 3)
    beta = np.exp(1j * np.pi / 3)
    poles = [mu, om * mu, om ** 2 * mu]
    cols = [a0, Kmat @ a0, np.linalg.solve(Kmat, a0)]
    zeros = [p / beta for p in poles]
    rows = [np.linalg.solve(C, c) for c in cols]
    return zs_dress(base, poles, cols, zeros, rows)
