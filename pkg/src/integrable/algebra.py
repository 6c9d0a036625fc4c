"""Matrix Lie algebra infrastructure.

Brackets, involutions, the eigenspace decomposition of a finite order
automorphism, the centralizer splitting defined by a regular element ``a``,
and reality checks for loops sampled at finitely many spectral values.

Contexts bundle all of this and are built either from the named catalog
(:func:`get_context`) or from :func:`make_context`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from . import _exact

SYMBOLIC_ZERO = 1e-10
REGULARITY_LIMIT = 1e8
PAIRING_TOL = 1e-9

INVOLUTION_KINDS = (
    "conjugate",           # X -> conj(X)
    "neg-conj-transpose",  # X -> -conj(X)^T
    "neg-transpose",       # X -> -X^T
    "conj-by-C",           # X -> C X C^-1
    "neg-transpose-by-C",  # X -> -C X^T C^-1
)
ANTILINEAR_KINDS = ("conjugate", "neg-conj-transpose")


class ContextError(ValueError):
    """Raised for invalid contexts, involutions or non-regular elements."""


def commutator(A, B) -> np.ndarray:
    """Return ``AB - BA``; works on stacks of matrices as well."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape[-2:] != B.shape[-2:] or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"dimension mismatch in bracket: {A.shape} vs {B.shape}")
    return A @ B - B @ A


def trace_form(X, Y) -> complex:
    """The ad-invariant form tr(XY)."""
    return np.trace(np.asarray(X) @ np.asarray(Y), axis1=-2, axis2=-1)


def _swap(X):
    return np.swapaxes(X, -1, -2)


@dataclass(frozen=True)
class InvolutionSpec:
    """A (possibly antilinear) automorphism of finite order of a matrix algebra.

    ``kind`` is one of :data:`INVOLUTION_KINDS`. The two conjugation kinds need
    the matrix ``C``. ``order`` is the order of the map on the algebra.
    """

    kind: str
    C: Optional[np.ndarray] = None
    order: int = 2

    def __post_init__(self):
        if self.kind not in INVOLUTION_KINDS:
            raise ContextError(f"unknown involution kind {self.kind!r}")
        if self.kind.endswith("by-C"):
            if self.C is None:
                raise ContextError(f"involution kind {self.kind!r} needs a matrix C")
            C = np.asarray(self.C, dtype=complex)
            if abs(np.linalg.det(C)) < 1e-12:
                raise ContextError("involution matrix C is singular")
            object.__setattr__(self, "C", C)
            object.__setattr__(self, "_Cinv", np.linalg.inv(C))
        if self.order < 1:
            raise ContextError("order must be positive")

    @property
    def antilinear(self) -> bool:
        return self.kind in ANTILINEAR_KINDS

    def __call__(self, X) -> np.ndarray:
        return apply_involution(self, X)

    def group(self, g) -> np.ndarray:
        """The corresponding map on the group (exponentiated action)."""
        g = np.asarray(g, dtype=complex)
        if self.kind == "conjugate":
            return np.conj(g)
        if self.kind == "neg-conj-transpose":
            return np.linalg.inv(np.conj(_swap(g)))
        if self.kind == "neg-transpose":
            return np.linalg.inv(_swap(g))
        if self.kind == "conj-by-C":
            return self.C @ g @ self._Cinv
        return self.C @ np.linalg.inv(_swap(g)) @ self._Cinv

    def power(self, X, times: int) -> np.ndarray:
        for _ in range(times):
            X = self(X)
        return X

    def check_order(self, dim: int, seed: int = 0) -> float:
        """Residual of applying the map ``order`` times to a random matrix."""
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        return float(np.linalg.norm(self.power(X, self.order) - X))


def apply_involution(spec: InvolutionSpec, X) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    if spec.kind == "conjugate":
        return np.conj(X)
    if spec.kind == "neg-conj-transpose":
        return -np.conj(_swap(X))
    if spec.kind == "neg-transpose":
        return -_swap(X)
    if spec.kind == "conj-by-C":
        return spec.C @ X @ spec._Cinv
    return -spec.C @ _swap(X) @ spec._Cinv


def eigenspace_project(sigma: InvolutionSpec, j: int, X) -> np.ndarray:
    """Component of X in the eigenspace of sigma with eigenvalue exp(2 pi i j / k)."""
    if sigma.antilinear:
        raise ContextError("eigenspace projection needs a complex linear automorphism")
    k = sigma.order
    alpha = np.exp(2j * np.pi / k)
    X = np.asarray(X, dtype=complex)
    acc = np.zeros_like(X)
    Y = X
    for l in range(k):
        acc = acc + alpha ** (-j * l) * Y
        Y = sigma(Y)
    return acc / k


# ---------------------------------------------------------------------------
# algebra bases

def _elementary(n: int, i: int, j: int) -> np.ndarray:
    E = np.zeros((n, n), dtype=complex)
    E[i, j] = 1
    return E


def algebra_basis(kind: str, n: int) -> List[np.ndarray]:
    """Standard basis: off-diagonal units row-major then Cartan part for sl;
    e_ij - e_ji for o; all units for gl."""
    if kind == "sl":
        out = [_elementary(n, i, j) for i in range(n) for j in range(n) if i != j]
        out += [_elementary(n, i, i) - _elementary(n, i + 1, i + 1) for i in range(n - 1)]
        return out
    if kind == "o":
        return [_elementary(n, i, j) - _elementary(n, j, i) for i in range(n) for j in range(i + 1, n)]
    if kind == "gl":
        return [_elementary(n, i, j) for i in range(n) for j in range(n)]
    raise ContextError(f"unknown algebra kind {kind!r}")


@dataclass
class ExactData:
    """Exact (Gaussian rational) copies of the context data used by jetcalc."""

    a: list
    basis_cent: list
    basis_perp: list
    coord_rows: list      # maps vec(X) restricted to pivot rows to [cent | perp] coordinates
    pivot_rows: list
    ad_a_perp_inv: list   # inverse of ad(a) on perp coordinates


@dataclass
class AlgebraContext:
    """A complex matrix Lie algebra with involutions and a regular element.

    Built by :func:`make_context`; treat as immutable.
    """

    name: str
    dim: int
    algebra: str
    tau: InvolutionSpec
    sigma: Optional[InvolutionSpec]
    a: Optional[np.ndarray]
    b: Optional[np.ndarray]
    basis: List[np.ndarray]
    basis_cent: List[np.ndarray] = field(default_factory=list)
    basis_perp: List[np.ndarray] = field(default_factory=list)
    flats: List[np.ndarray] = field(default_factory=list)
    ad_condition: float = float("nan")
    exact: Optional[ExactData] = None
    _split_pinv: Optional[np.ndarray] = None
    _ad_perp_inv: Optional[np.ndarray] = None

    # -- bilinear form
    @staticmethod
    def form(X, Y) -> complex:
        return trace_form(X, Y)

    @property
    def k(self) -> int:
        return self.sigma.order if self.sigma is not None else 1

    def _require_split(self):
        if self._split_pinv is None:
            raise ContextError(f"context {self.name!r} has no regular element; splitting unavailable")

    def perp_coords(self, X) -> np.ndarray:
        """Coordinates of the perp component of X in ``basis_perp`` (works on stacks)."""
        self._require_split()
        X = np.asarray(X, dtype=complex)
        flat = X.reshape(X.shape[:-2] + (-1,))
        coords = flat @ self._split_pinv.T
        return coords[..., len(self.basis_cent):]

    def cent_coords(self, X) -> np.ndarray:
        self._require_split()
        X = np.asarray(X, dtype=complex)
        flat = X.reshape(X.shape[:-2] + (-1,))
        coords = flat @ self._split_pinv.T
        return coords[..., : len(self.basis_cent)]

    def from_perp_coords(self, c) -> np.ndarray:
        P = np.array(self.basis_perp)
        return np.tensordot(np.asarray(c), P, axes=([-1], [0]))

    def ad_a_inverse(self, X) -> np.ndarray:
        """ad(a)^-1 applied to the perp component of X."""
        c = self.perp_coords(X)
        return self.from_perp_coords(c @ self._ad_perp_inv.T)


def centralizer_split(ctx: AlgebraContext, X) -> Tuple[np.ndarray, np.ndarray]:
    """Split X = X_cent + X_perp along the centralizer of a and its trace-orthogonal complement."""
    ctx._require_split()
    X = np.asarray(X, dtype=complex)
    flat = X.reshape(X.shape[:-2] + (-1,))
    coords = flat @ ctx._split_pinv.T
    nc = len(ctx.basis_cent)
    C = np.array(ctx.basis_cent) if nc else np.zeros((0,) + X.shape[-2:])
    P = np.array(ctx.basis_perp)
    Xc = np.tensordot(coords[..., :nc], C, axes=([-1], [0])) if nc else np.zeros_like(X)
    Xp = np.tensordot(coords[..., nc:], P, axes=([-1], [0]))
    return Xc, Xp


def _vec_columns(mats: Sequence[np.ndarray]) -> np.ndarray:
    return np.array([np.asarray(m).reshape(-1) for m in mats]).T


def _exact_bases(a, basis):
    """Centralizer and perp bases by exact row reduction; None if a is not rational."""
    try:
        a_ex = _exact.to_exact(a)
        basis_ex = [_exact.to_exact(B) for B in basis]
    except (ValueError, TypeError):
        return None
    n = len(a_ex)
    dimg = len(basis_ex)
    # coordinates: pick independent rows of the vec(basis) matrix
    cols = [[B[i][j] for B in basis_ex] for i in range(n) for j in range(n)]
    _, piv = _exact.rref([list(r) for r in zip(*cols)])  # pivots over rows of vec matrix
    pivot_rows = piv
    square = [cols[r] for r in pivot_rows]
    coord_inv = _exact.inverse(square)

    def coords_of(M):
        vec = [M[r // n][r % n] for r in pivot_rows]
        return [sum((coord_inv[i][l] * vec[l] for l in range(dimg)), _exact.ZERO) for i in range(dimg)]

    def bracket(A, B):
        AB = _exact.matmul(A, B)
        BA = _exact.matmul(B, A)
        return [[x - y for x, y in zip(r1, r2)] for r1, r2 in zip(AB, BA)]

    def combo(vec):
        out = _exact.zeros(n, n)
        for c, B in zip(vec, basis_ex):
            if c:
                for i in range(n):
                    for j in range(n):
                        if B[i][j]:
                            out[i][j] = out[i][j] + c * B[i][j]
        return out

    ad_cols = [coords_of(bracket(a_ex, B)) for B in basis_ex]
    ad_mat = [list(r) for r in zip(*ad_cols)]
    cent_vecs = _exact.nullspace(ad_mat, dimg)
    cent = [combo(v) for v in cent_vecs]
    if not cent:
        raise ContextError("empty centralizer")
    pair_rows = []
    for K in cent:
        row = []
        for B in basis_ex:
            KB = _exact.matmul(K, B)
            row.append(sum((KB[i][i] for i in range(n)), _exact.ZERO))
        pair_rows.append(row)
    perp_vecs = _exact.nullspace(pair_rows, dimg)
    perp = [combo(v) for v in perp_vecs]
    if len(cent) + len(perp) != dimg:
        raise ContextError("centralizer and its complement do not span the algebra")
    # coordinates in the combined [cent | perp] basis, read off the same pivot rows
    split_square = [[M[r // n][r % n] for M in cent + perp] for r in pivot_rows]
    try:
        split_inv = _exact.inverse(split_square)
    except ZeroDivisionError:
        raise ContextError("a is not semisimple: centralizer meets its complement") from None

    def split_coords(M):
        vec = [M[r // n][r % n] for r in pivot_rows]
        return [sum((split_inv[i][l] * vec[l] for l in range(dimg)), _exact.ZERO) for i in range(dimg)]

    return a_ex, cent, perp, pivot_rows, split_inv, split_coords, bracket


def _float_bases(a, basis):
    n = a.shape[0]
    Bv = _vec_columns(basis)
    pinv = np.linalg.pinv(Bv)
    ad_mat = pinv @ _vec_columns([commutator(a, B) for B in basis])
    null = scipy.linalg.null_space(ad_mat, rcond=1e-10)
    cent = [np.tensordot(null[:, i], np.array(basis), axes=([0], [0])) for i in range(null.shape[1])]
    rows = np.array([[np.trace(K @ B) for B in basis] for K in cent])
    nullp = scipy.linalg.null_space(rows, rcond=1e-10)
    perp = [np.tensordot(nullp[:, i], np.array(basis), axes=([0], [0])) for i in range(nullp.shape[1])]
    return cent, perp


def make_context(
    name: str,
    dim: int,
    tau: InvolutionSpec,
    a=None,
    b=None,
    sigma: Optional[InvolutionSpec] = None,
    algebra: str = "sl",
    flats: Optional[Sequence] = None,
    check: bool = True,
) -> AlgebraContext:
    """Raw constructor: validates the data and precomputes splittings.

    ``a`` may be omitted for contexts that only need the involutions
    (elliptic systems); then the centralizer splitting is unavailable.
    """
    if not tau.antilinear or tau.order != 2:
        raise ContextError("tau must be an antilinear involution of order 2")
    if sigma is not None and sigma.antilinear:
        raise ContextError("sigma must be complex linear")
    if check:
        if tau.check_order(dim) > SYMBOLIC_ZERO:
            raise ContextError("tau does not have order 2")
        if sigma is not None and sigma.check_order(dim) > 1e-8:
            raise ContextError(f"sigma does not have order {sigma.order}")
    basis = algebra_basis(algebra, dim)
    ctx = AlgebraContext(name=name, dim=dim, algebra=algebra, tau=tau, sigma=sigma,
                         a=None if a is None else np.asarray(a, dtype=complex),
                         b=None if b is None else np.asarray(b, dtype=complex),
                         basis=basis, flats=[np.asarray(f, dtype=complex) for f in (flats or [])])
    if ctx.a is None:
        return ctx
    a = ctx.a
    if ctx.b is None:
        ctx.b = a.copy()
    if np.linalg.norm(commutator(a, ctx.b)) > SYMBOLIC_ZERO:
        raise ContextError("[a, b] != 0")
    if sigma is not None and check:
        defect = np.linalg.norm(eigenspace_project(sigma, 1, a) - a)
        if defect > 1e-8:
            raise ContextError(f"a is not in the eigenspace G_1 of sigma (defect {defect:.2e})")

    exact = _exact_bases(a, basis)
    if exact is not None:
        a_ex, cent_ex, perp_ex, pivot_rows, split_inv, split_coords, bracket = exact
        cent = [_exact.to_numpy(K) for K in cent_ex]
        perp = [_exact.to_numpy(P) for P in perp_ex]
    else:
        cent, perp = _float_bases(a, basis)
    ctx.basis_cent = cent
    ctx.basis_perp = perp
    split = _vec_columns(cent + perp)
    if np.linalg.matrix_rank(split, tol=1e-9) != len(cent) + len(perp):
        raise ContextError("a is not semisimple: centralizer meets its complement")
    ctx._split_pinv = np.linalg.pinv(split)
    ad_perp = np.array([ctx.perp_coords(commutator(a, P)) for P in perp]).T
    cond = np.linalg.cond(ad_perp) if perp else 1.0
    ctx.ad_condition = float(cond)
    if not np.isfinite(cond) or cond > REGULARITY_LIMIT:
        raise ContextError(f"ad(a) is ill-conditioned on the complement (condition {cond:.3e}); a is not regular")
    ctx._ad_perp_inv = np.linalg.inv(ad_perp)
    if exact is not None:
        ad_cols = [split_coords(bracket(a_ex, P))[len(cent_ex):] for P in perp_ex]
        ad_mat = [list(r) for r in zip(*ad_cols)]
        ctx.exact = ExactData(a=a_ex, basis_cent=cent_ex, basis_perp=perp_ex, coord_rows=split_inv,
                              pivot_rows=pivot_rows, ad_a_perp_inv=_exact.inverse(ad_mat))
    for B in ctx.flats:
        if np.linalg.norm(commutator(a, B)) > SYMBOLIC_ZERO:
            raise ContextError("flats must commute with a")
    return ctx


# ---------------------------------------------------------------------------
# catalog

def _tzitzeica_C() -> np.ndarray:
    al = np.exp(2j * np.pi / 3)
    return np.array([[0, al ** 2, 0], [al, 0, 0], [0, 0, 1]], dtype=complex)


def _cyclic_down(n: int) -> np.ndarray:
    """e_21 + e_32 + ... + e_{n,n-1} + e_{1n}."""
    a = np.zeros((n, n), dtype=complex)
    for i in range(n - 1):
        a[i + 1, i] = 1
    a[0, n - 1] = 1
    return a


def catalog_ids() -> Tuple[str, ...]:
    return ("sl2-su2", "sl2-su2/so2", "sl3-tzitzeica", "o4-grassmann", "sln-toda", "sln-kw")


def get_context(name: str, n: Optional[int] = None) -> AlgebraContext:
    """Named catalog of contexts. ``n`` sizes the sln-* families (defaults 3 and 2)."""
    su = InvolutionSpec("neg-conj-transpose")
    conj = InvolutionSpec("conjugate")
    a2 = np.diag([1j, -1j])
    if name == "sl2-su2":
        return make_context(name, 2, su, a=a2, b=a2)
    if name == "sl2-su2/so2":
        return make_context(name, 2, su, a=a2, b=-a2 / 4, sigma=InvolutionSpec("neg-transpose"))
    if name == "sl3-tzitzeica":
        a = np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]], dtype=complex)
        b = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=complex)
        sigma = InvolutionSpec("neg-transpose-by-C", C=_tzitzeica_C(), order=6)
        return make_context(name, 3, conj, a=a, b=b, sigma=sigma)
    if name == "o4-grassmann":
        return grassmann_context(2, name=name)
    if name == "sln-toda":
        n = n or 3
        al = np.exp(2j * np.pi / n)
        C = np.diag([al ** i for i in range(n)])
        a = _cyclic_down(n)
        return make_context(f"sl{n}-toda", n, conj, a=a, b=a.T.copy(),
                            sigma=InvolutionSpec("conj-by-C", C=C, order=n))
    if name == "sln-kw":
        n = n or 2
        al = np.exp(2j * np.pi / n)
        perm = _cyclic_down(n)  # the permutation matrix (12...n)
        a = np.diag([al ** i for i in range(n)])
        # sigma(g) = C^-1 g C is conjugation by C^-1
        sigma = InvolutionSpec("conj-by-C", C=np.linalg.inv(perm), order=n)
        return make_context(f"sl{n}-kw", n, conj, a=a, b=a.copy(), sigma=sigma)
    raise ContextError(f"unknown context id {name!r}; known: {', '.join(catalog_ids())}")


def grassmann_flats(n: int) -> List[np.ndarray]:
    """a_i = -e_{i,n+i} + e_{n+i,i} spanning a maximal abelian subspace of U_1."""
    out = []
    for i in range(n):
        A = np.zeros((2 * n, 2 * n), dtype=complex)
        A[i, n + i] = -1
        A[n + i, i] = 1
        out.append(A)
    return out


def grassmann_context(n: int, name: Optional[str] = None) -> AlgebraContext:
    """O(2n)/O(n)xO(n): tau = conj, sigma = conjugation by I_{n,n}; a is a generic flat."""
    flats = grassmann_flats(n)
    a = sum((i + 1) * f for i, f in enumerate(flats))
    Inn = np.diag([1.0] * n + [-1.0] * n).astype(complex)
    return make_context(name or f"o{2 * n}-grassmann", 2 * n, InvolutionSpec("conjugate"), a=a, b=flats[-1],
                        sigma=InvolutionSpec("conj-by-C", C=Inn, order=2), algebra="o", flats=flats)


# ---------------------------------------------------------------------------
# reality conditions

REALITY_CONDITIONS = ("U", "U/U0", "Gtau", "Gtausigma")
_CONDITION_ALIASES = {"Gτ": "Gtau", "Gτσ": "Gtausigma", "U/U₀": "U/U0"}


def _find_partner(lams: np.ndarray, target: complex) -> int:
    d = np.abs(lams - target)
    idx = int(np.argmin(d))
    if d[idx] > PAIRING_TOL * max(1.0, abs(target)):
        raise ValueError(f"sample set not closed: no sample at lambda = {target:.6g}")
    return idx


def check_reality(loop_samples: Sequence[Tuple[complex, np.ndarray]], condition: str,
                  ctx: AlgebraContext, level: str = "algebra") -> float:
    """Max residual of a reality identity over sampled loop values.

    ``level='algebra'`` uses tau and sigma on the Lie algebra (Lax pairs);
    ``level='group'`` uses the induced group maps (frames, dressing elements).
    """
    condition = _CONDITION_ALIASES.get(condition, condition)
    if condition not in REALITY_CONDITIONS:
        raise ValueError(f"unknown reality condition {condition!r}")
    if level not in ("algebra", "group"):
        raise ValueError("level must be 'algebra' or 'group'")
    lams = np.array([complex(l) for l, _ in loop_samples])
    vals = [np.asarray(v, dtype=complex) for _, v in loop_samples]
    tau = ctx.tau if level == "algebra" else ctx.tau.group
    sig = None
    if condition in ("U/U0", "Gtausigma"):
        if ctx.sigma is None:
            raise ValueError(f"condition {condition} needs a context with sigma")
        sig = ctx.sigma if level == "algebra" else ctx.sigma.group
    twist = np.exp(2j * np.pi / ctx.k)
    worst = 0.0
    for lam, X in zip(lams, vals):
        if condition in ("U", "U/U0"):
            partner = np.conj(lam)
        else:
            if lam == 0:
                raise ValueError("lambda = 0 has no partner under 1/conj(lambda)")
            partner = 1 / np.conj(lam)
        Y = vals[_find_partner(lams, partner)]
        worst = max(worst, float(np.max(np.abs(tau(Y) - X))))
        if sig is not None:
            Z = vals[_find_partner(lams, twist * lam)]
            worst = max(worst, float(np.max(np.abs(sig(X) - Z))))
    return worst


def twisted_sample_set(base: Sequence[complex], k: int, inversion: bool = False) -> List[complex]:
    """Close a set of spectral values under conjugation (or 1/conj) and the k-fold rotation."""
    out: List[complex] = []

    def add(z):
        if all(abs(z - w) > 1e-12 * max(1, abs(z)) for w in out):
            out.append(z)

    frontier = [complex(z) for z in base]
    while frontier:
        z = frontier.pop()
        if any(abs(z - w) <= 1e-12 * max(1, abs(z)) for w in out):
            continue
        add(z)
        frontier.append(1 / np.conj(z) if inversion else np.conj(z))
        frontier.append(z * np.exp(2j * np.pi / k))
    return out
