"""Truncated Laurent loops, Gauss (Birkhoff) factorization g = g_plus g_minus, and the
characteristic initial value problem for the -1-flow.

Loops live on the unit circle. A minus loop is normalized to the identity at
lambda = infinity. Factorization solves the block Toeplitz system expressing
that g * g_minus^-1 has no negative powers down to -K.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import CubicSpline

from .algebra import AlgebraContext, commutator

DEFAULT_N = 64
DEFAULT_K = 16
COND_LIMIT = 1e10
DET_FLOOR = 1e-12
TAIL_TOL = 1e-10


class AliasingError(ValueError):
    """Fourier coefficients outside the truncation window are not negligible."""

    def __init__(self, tail: float, tol: float):
        super().__init__(f"discarded Fourier tail {tail:.3e} exceeds tolerance {tol:.1e}")
        self.tail = tail


class BigCellError(ArithmeticError):
    """The loop lies (numerically) outside the big cell: the Toeplitz system is singular."""

    def __init__(self, message: str, locations=None, condition: float = float("inf")):
        super().__init__(message)
        self.locations = locations
        self.condition = condition


# ---------------------------------------------------------------------------
# loops

@dataclass
class LaurentLoop:
    """Matrix Laurent polynomial sum_{p=lo}^{hi} coeffs[p-lo] lambda^p.

    ``coeffs`` has shape ``(P,) + batch + (n, n)``; the batch axes let one
    object hold a loop per grid point.
    """

    coeffs: np.ndarray
    lo: int

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)

    @property
    def hi(self) -> int:
        return self.lo + self.coeffs.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.coeffs.shape[-1]

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.coeffs.shape[1:-2]

    @classmethod
    def constant(cls, M) -> "LaurentLoop":
        return cls(np.asarray(M, dtype=complex)[None], 0)

    @classmethod
    def identity(cls, n: int) -> "LaurentLoop":
        return cls.constant(np.eye(n))

    @classmethod
    def from_terms(cls, terms: dict, n: Optional[int] = None) -> "LaurentLoop":
        ps = sorted(terms)
        lo, hi = ps[0], ps[-1]
        first = np.asarray(terms[ps[0]], dtype=complex)
        out = np.zeros((hi - lo + 1,) + first.shape, dtype=complex)
        for p, c in terms.items():
            out[p - lo] = c
        return cls(out, lo)

    def coeff(self, p: int) -> np.ndarray:
        if p < self.lo or p > self.hi:
            return np.zeros(self.coeffs.shape[1:], dtype=complex)
        return self.coeffs[p - self.lo]

    def powers(self) -> range:
        return range(self.lo, self.hi + 1)

    def evaluate(self, lam) -> np.ndarray:
        """Value at a scalar lambda (shape batch + (n,n)) or at an array of lambdas (leading axis)."""
        lam = np.asarray(lam, dtype=complex)
        if lam.ndim == 0:
            out = np.zeros(self.coeffs.shape[1:], dtype=complex)
            for p in self.powers():
                out += lam ** p * self.coeffs[p - self.lo]
            return out
        pw = lam[:, None] ** np.arange(self.lo, self.hi + 1)[None, :]
        return np.tensordot(pw, self.coeffs, axes=([1], [0]))

    def window(self, lo: int, hi: int) -> "LaurentLoop":
        """Restrict (or zero-pad) to powers lo..hi."""
        out = np.zeros((hi - lo + 1,) + self.coeffs.shape[1:], dtype=complex)
        for p in range(max(lo, self.lo), min(hi, self.hi) + 1):
            out[p - lo] = self.coeffs[p - self.lo]
        return LaurentLoop(out, lo)

    def mass_outside(self, lo: int, hi: int) -> float:
        """Largest Frobenius norm of a coefficient with power outside [lo, hi]."""
        worst = 0.0
        for p in self.powers():
            if p < lo or p > hi:
                worst = max(worst, float(np.max(np.linalg.norm(self.coeffs[p - self.lo], axis=(-2, -1)))))
        return worst

    def shift(self, k: int) -> "LaurentLoop":
        """Multiply by lambda^k."""
        return LaurentLoop(self.coeffs.copy(), self.lo + k)

    def __matmul__(self, other: "LaurentLoop") -> "LaurentLoop":
        P, Q = self.coeffs.shape[0], other.coeffs.shape[0]
        shape = np.broadcast_shapes(self.coeffs.shape[1:-2], other.coeffs.shape[1:-2])
        out = np.zeros((P + Q - 1,) + shape + (self.dim, other.dim), dtype=complex)
        for i in range(P):
            for j in range(Q):
                out[i + j] += self.coeffs[i] @ other.coeffs[j]
        return LaurentLoop(out, self.lo + other.lo)

    def __add__(self, other: "LaurentLoop") -> "LaurentLoop":
        lo, hi = min(self.lo, other.lo), max(self.hi, other.hi)
        return LaurentLoop(self.window(lo, hi).coeffs + other.window(lo, hi).coeffs, lo)

    def __sub__(self, other: "LaurentLoop") -> "LaurentLoop":
        return self + other.scale(-1)

    def scale(self, c) -> "LaurentLoop":
        return LaurentLoop(self.coeffs * c, self.lo)

    def bracket(self, other: "LaurentLoop") -> "LaurentLoop":
        return (self @ other) - (other @ self)

    def map_coeffs(self, f: Callable[[np.ndarray], np.ndarray]) -> "LaurentLoop":
        return LaurentLoop(np.array([f(c) for c in self.coeffs]), self.lo)

    def is_plus(self, tol: float = 0.0) -> bool:
        return self.mass_outside(0, max(self.hi, 0)) <= tol

    def is_minus(self, tol: float = 0.0) -> bool:
        return (self.mass_outside(min(self.lo, 0), 0) <= tol
                and float(np.max(np.abs(self.coeff(0) - np.eye(self.dim)))) <= tol)


def unit_circle(N: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(N) / N)


def sample(loop_fn: Callable[[complex], np.ndarray], N: int = DEFAULT_N) -> np.ndarray:
    """Samples of a loop at the N-th roots of unity, stacked on a leading axis."""
    return np.array([loop_fn(l) for l in unit_circle(N)])


def fourier_coeffs(samples, K: int = DEFAULT_K, tail_tol: Optional[float] = TAIL_TOL) -> LaurentLoop:
    """Coefficients on [-K, K] of a loop sampled at the N roots of unity (leading axis).

    Raises AliasingError when the largest discarded coefficient exceeds ``tail_tol``
    (pass None to skip the check).
    """
    samples = np.asarray(samples, dtype=complex)
    N = samples.shape[0]
    if N < 2 * K + 1:
        raise ValueError(f"need N >= 2K+1 samples (N={N}, K={K})")
    c = np.fft.fft(samples, axis=0) / N
    powers = np.fft.fftfreq(N, 1.0 / N).astype(int)
    out = np.zeros((2 * K + 1,) + samples.shape[1:], dtype=complex)
    tail = 0.0
    for idx, p in enumerate(powers):
        if -K <= p <= K:
            out[p + K] = c[idx]
        else:
            tail = max(tail, float(np.max(np.linalg.norm(c[idx], axis=(-2, -1)))))
    if tail_tol is not None and tail > tail_tol:
        raise AliasingError(tail, tail_tol)
    loop = LaurentLoop(out, -K)
    loop.tail = tail
    return loop


# ---------------------------------------------------------------------------
# factorization

@dataclass
class FactorReport:
    g_plus: LaurentLoop
    g_minus: LaurentLoop
    g_minus_inv: LaurentLoop
    reconstruction_residual: float
    solve_condition: float
    failures: List[Tuple[int, ...]] = field(default_factory=list)

    @property
    def m1(self) -> np.ndarray:
        """lambda^-1 coefficient of g_minus^-1."""
        return self.g_minus_inv.coeff(-1)


def _toeplitz_system(g: LaurentLoop, K: int):
    n = g.dim
    batch = g.batch_shape
    T = np.zeros(batch + (K * n, K * n), dtype=complex)
    rhs = np.zeros(batch + (K * n, n), dtype=complex)
    for p in range(1, K + 1):
        rhs[..., (p - 1) * n: p * n, :] = -g.coeff(-p)
        for k in range(1, K + 1):
            T[..., (p - 1) * n: p * n, (k - 1) * n: k * n] = g.coeff(k - p)
    return T, rhs


def _series_inverse_minus(h: LaurentLoop, K: int) -> LaurentLoop:
    """Formal inverse of I + sum_{k>=1} c_k lambda^-k, truncated at lambda^-K."""
    n = h.dim
    G = [np.broadcast_to(np.eye(n, dtype=complex), h.coeffs.shape[1:]).copy()]
    for p in range(1, K + 1):
        acc = np.zeros(h.coeffs.shape[1:], dtype=complex)
        for k in range(1, p + 1):
            acc -= h.coeff(-k) @ G[p - k]
        G.append(acc)
    return LaurentLoop(np.array(G[::-1]), -K)


def birkhoff_factor(g: LaurentLoop, order: Optional[int] = None, N: int = DEFAULT_N,
                    cond_limit: float = COND_LIMIT, mask: bool = False) -> FactorReport:
    """Factor g = g_plus g_minus with g_minus(infinity) = I.

    g_minus^-1 = I + sum_{k=1}^M c_k lambda^-k solves the block Toeplitz system
    sum_k G_{k-p} c_k = -G_{-p} (p = 1..M), where M = ``order`` defaults to three
    times the span of g so the truncated factors are accurate to far below the
    loop's own tail. g_plus is g g_minus^-1 on powers 0..hi(g). With ``mask`` a
    batch of loops is factored and failing points are NaN-filled and listed;
    otherwise any failure raises BigCellError.
    """
    span = max(-g.lo, g.hi, 1)
    M = order if order is not None else 3 * span
    n = g.dim
    N = max(N, 2 * (M + span) + 1)
    lams = unit_circle(N)
    vals = g.evaluate(lams)
    dets = np.abs(np.linalg.det(vals))
    if np.min(dets) < DET_FLOOR and not (mask and g.batch_shape):
        raise BigCellError("loop is not invertible on the unit circle")
    T, rhs = _toeplitz_system(g, M)
    conds = np.linalg.cond(T)
    bad_mask = ~np.isfinite(conds) | (conds > cond_limit)
    failures = [tuple(int(i) for i in idx) for idx in np.argwhere(bad_mask)] if g.batch_shape else []
    if np.any(bad_mask) and not mask:
        worst = float(np.max(np.where(np.isfinite(conds), conds, np.inf)))
        raise BigCellError(f"Toeplitz system ill-conditioned (condition {worst:.3e}); loop is outside the big cell",
                           failures or None, worst)
    T_safe = np.where(bad_mask[..., None, None], np.eye(M * n), T)
    c = np.linalg.solve(T_safe, rhs)
    h_coeffs = np.zeros((M + 1,) + g.coeffs.shape[1:], dtype=complex)
    for k in range(1, M + 1):
        h_coeffs[M - k] = c[..., (k - 1) * n: k * n, :]
    h_coeffs[M] = np.eye(n)
    h = LaurentLoop(h_coeffs, -M)
    g_plus = (g @ h).window(0, max(g.hi, 0))
    g_minus = _series_inverse_minus(h, M)
    # residual g - g_plus h^-1 on the circle, with h inverted pointwise
    hv = h.evaluate(lams)
    if np.any(bad_mask):
        hv = np.where(bad_mask[None, ..., None, None], np.eye(n), hv)
    recon = g_plus.evaluate(lams) @ np.linalg.inv(hv)
    err = np.linalg.norm(vals - recon, axis=(-2, -1))
    if g.batch_shape and np.any(bad_mask):
        err = np.where(bad_mask[None], np.nan, err)
        for L in (g_plus, g_minus, h):
            L.coeffs[:, bad_mask] = np.nan
    residual = float(np.nanmax(err)) if np.any(np.isfinite(err)) else float("nan")
    cond = float(np.max(np.where(bad_mask, 0.0, conds)))
    return FactorReport(g_plus, g_minus, h, residual, cond, failures)


def refactor_defect(report: FactorReport, N: int = DEFAULT_N) -> float:
    """Factor g_plus * g_minus again and compare with the original factors."""
    M = -report.g_minus_inv.lo
    again = birkhoff_factor(report.g_plus @ report.g_minus, M, N)
    d1 = float(np.max(np.abs(again.g_plus.window(0, report.g_plus.hi).coeffs - report.g_plus.coeffs)))
    d2 = float(np.max(np.abs(again.g_minus_inv.coeffs - report.g_minus_inv.coeffs)))
    return max(d1, d2)


def random_near_identity(rng: np.random.Generator, n: int, K: int = DEFAULT_K, scale: float = 0.1,
                         decay: float = 0.4) -> LaurentLoop:
    """I + scale * sum_p R_p decay^|p| lambda^p with complex Gaussian R_p."""
    coeffs = scale * (rng.normal(size=(2 * K + 1, n, n)) + 1j * rng.normal(size=(2 * K + 1, n, n)))
    coeffs *= (decay ** np.abs(np.arange(-K, K + 1)))[:, None, None]
    coeffs[K] += np.eye(n)
    return LaurentLoop(coeffs, -K)


# ---------------------------------------------------------------------------
# the characteristic initial value problem

MapLike = Union[Callable[[float], np.ndarray], np.ndarray]


def _as_callable(data: MapLike, grid: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    if callable(data):
        def fn(s):
            s = np.atleast_1d(s)
            return np.array([np.asarray(data(float(v)), dtype=complex) for v in s])
        return fn
    arr = np.asarray(data, dtype=complex)
    if arr.shape[0] != grid.size:
        raise ValueError("sampled initial data must match the grid length")
    spline_re = CubicSpline(grid, arr.real, axis=0)
    spline_im = CubicSpline(grid, arr.imag, axis=0)
    return lambda s: spline_re(np.atleast_1d(s)) + 1j * spline_im(np.atleast_1d(s))


def _rk4_loop_ode(coef: Callable[[np.ndarray], np.ndarray], lam_power: Tuple[np.ndarray, int],
                  grid: np.ndarray, lams: np.ndarray, n: int) -> np.ndarray:
    """L' = L (C lambda^p + coef(s)) for all lambdas; returns L at every grid node (nodes, N, n, n)."""
    C, p = lam_power
    lp = lams ** p
    const = lp[:, None, None] * C[None]
    h = np.diff(grid)
    nodes = grid.size
    mids = grid[:-1] + h / 2
    at_nodes = coef(grid)
    at_mids = coef(mids)
    out = np.empty((nodes, lams.size, n, n), dtype=complex)
    L = np.broadcast_to(np.eye(n, dtype=complex), (lams.size, n, n)).copy()
    out[0] = L
    for i in range(nodes - 1):
        A0 = const + at_nodes[i][None]
        Am = const + at_mids[i][None]
        A1 = const + at_nodes[i + 1][None]
        k1 = L @ A0
        k2 = (L + 0.5 * h[i] * k1) @ Am
        k3 = (L + 0.5 * h[i] * k2) @ Am
        k4 = (L + h[i] * k3) @ A1
        L = L + (h[i] / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(L)):
            raise FloatingPointError("loop ODE integration became unstable")
        out[i + 1] = L
    return out


@dataclass
class GoursatResult:
    u: np.ndarray            # (nx, nt, n, n)
    v: np.ndarray
    x: np.ndarray
    t: np.ndarray
    max_reconstruction: float
    max_tail: float
    failures: List[Tuple[int, int]]

    def grid(self, ctx_ref: Optional[str] = None):
        from .laxflow import SolutionGrid
        return SolutionGrid((self.x, self.t), {"u": self.u, "v": self.v}, "minus-one", ctx_ref,
                            allow_masked=bool(self.failures))


def _spectrum_defect(X: np.ndarray, ref: np.ndarray) -> float:
    """Distance between characteristic polynomials (insensitive to eigenvalue ordering)."""
    return float(np.max(np.abs(np.poly(X) - np.poly(ref))))


def goursat_solve(ctx: AlgebraContext, xi: MapLike, eta: MapLike, x: np.ndarray, t: np.ndarray,
                  N: int = DEFAULT_N, K: int = DEFAULT_K, tail_tol: float = 1e-8,
                  validate: bool = True) -> GoursatResult:
    """Solve u_t = [a, v], v_x = -[u, v] with u(x,0) = xi(x), v(0,t) = eta(t).

    L_plus(x) and L_minus(t) are integrated on the lambda circle, then
    L_minus^-1 L_plus = V_plus V_minus^-1 is factored at every grid point;
    u = xi + [a, m1] with m1 the lambda^-1 coefficient of V_minus, and
    v = g0^-1 eta g0 with g0 the constant term of V_plus.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if abs(x[0]) > 1e-14 or abs(t[0]) > 1e-14:
        raise ValueError("goursat grids must start at 0")
    n = ctx.dim
    xi_fn = _as_callable(xi, x)
    eta_fn = _as_callable(eta, t)
    xi_nodes = xi_fn(x)
    eta_nodes = eta_fn(t)
    if validate:
        perp = ctx.from_perp_coords(ctx.perp_coords(xi_nodes))
        if np.max(np.abs(perp - xi_nodes)) > 1e-8:
            raise ValueError("xi must take values in the complement of the centralizer of a")
        worst = max(_spectrum_defect(e, ctx.b) for e in eta_nodes)
        if worst > 1e-6 * max(1.0, np.linalg.norm(ctx.b)):
            raise ValueError(f"eta must lie on the adjoint orbit of b (spectrum defect {worst:.2e})")
    lams = unit_circle(N)
    Lp = _rk4_loop_ode(xi_fn, (ctx.a, 1), x, lams, n)      # (nx, N, n, n)
    Lm = _rk4_minus(eta_fn, t, lams, n)
    Lm_inv = np.linalg.inv(Lm)
    G = Lm_inv[None, :, :, :, :] @ Lp[:, None, :, :, :]    # (nx, nt, N, n, n)
    G = np.moveaxis(G, 2, 0)                                 # (N, nx, nt, n, n)
    loop = fourier_coeffs(G, K, tail_tol=None)
    tail = loop.tail
    if tail > tail_tol:
        raise AliasingError(tail, tail_tol)
    rep = birkhoff_factor(loop, N=N, mask=True)
    m1 = rep.m1
    g0 = rep.g_plus.coeff(0)
    u = xi_nodes[:, None] + commutator(ctx.a, m1)
    v = np.linalg.solve(g0, eta_nodes[None, :] @ g0)
    return GoursatResult(u, v, x, t, rep.reconstruction_residual, tail, rep.failures)


def _rk4_minus(eta_fn, t: np.ndarray, lams: np.ndarray, n: int) -> np.ndarray:
    """L' = L lambda^-1 eta(t) on the lambda circle."""
    inv = 1.0 / lams
    h = np.diff(t)
    mids = t[:-1] + h / 2
    at_nodes = eta_fn(t)
    at_mids = eta_fn(mids)
    out = np.empty((t.size, lams.size, n, n), dtype=complex)
    L = np.broadcast_to(np.eye(n, dtype=complex), (lams.size, n, n)).copy()
    out[0] = L
    for i in range(t.size - 1):
        A0 = inv[:, None, None] * at_nodes[i][None]
        Am = inv[:, None, None] * at_mids[i][None]
        A1 = inv[:, None, None] * at_nodes[i + 1][None]
        k1 = L @ A0
        k2 = (L + 0.5 * h[i] * k1) @ Am
        k3 = (L + 0.5 * h[i] * k2) @ Am
        k4 = (L + h[i] * k3) @ A1
        L = L + (h[i] / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = L
    return out
