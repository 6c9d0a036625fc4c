"""Finite-type solutions of the elliptic (G, tau)-systems and their residuals.

A finite-type solution is generated by a Laurent polynomial eta(x, y) in
lambda with window [-d, d] solving the commuting Lax equations

    eta_x = [eta, p1(lambda^(d-m) eta)],    eta_y = [eta, p1(i lambda^(d-m) eta)],

where p1 is the projection onto loops in the real form vanishing at lambda = 1.
The frame solves F^-1 dF = p1(lambda^(d-m) eta dz) and is normalized by
F(lambda = 1) = I; the normalized slots are the coefficients of F^-1 F_z.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .algebra import (AlgebraContext, ContextError, InvolutionSpec, commutator, eigenspace_project,
                      get_context, make_context)
from .birkhoff import LaurentLoop
from .laxflow import FrameGrid, SolutionGrid, fd, interior_max

OVERFLOW_TOL = 1e-8
REALITY_TOL = 1e-10
MEMBERSHIP_TOL = 1e-10


class WindowOverflow(ArithmeticError):
    """The finite-type flow pushed mass outside the [-d, d] window."""


class InvalidPotential(ValueError):
    pass


# ---------------------------------------------------------------------------
# contexts

@dataclass
class EllipticContext:
    base: AlgebraContext
    m: int = 1
    d: int = 1

    def __post_init__(self):
        if self.m < 1 or self.d < 1:
            raise ValueError("m and d must be positive")
        if self.d < self.m:
            raise ValueError("the finite-type window needs d >= m")
        sig = self.base.sigma
        if sig is not None:
            rng = np.random.default_rng(0)
            X = rng.normal(size=(self.n, self.n)) + 1j * rng.normal(size=(self.n, self.n))
            if np.max(np.abs(self.tau(sig(X)) - sig(self.tau(X)))) > 1e-10:
                raise ContextError("tau and sigma must commute")
            if (self.d - self.m) % sig.order:
                raise ContextError(f"with sigma of order {sig.order} the degree must satisfy d = m mod {sig.order}")

    @property
    def n(self) -> int:
        return self.base.dim

    @property
    def tau(self) -> InvolutionSpec:
        return self.base.tau

    @property
    def sigma(self) -> Optional[InvolutionSpec]:
        return self.base.sigma

    @property
    def shift(self) -> int:
        return self.d - self.m

    @property
    def buffer(self) -> int:
        """Default working window half-width for the shifted products."""
        return 2 * self.d + self.m


def eh_context() -> AlgebraContext:
    """sl(3) with tau(X) = -conj(X)^T and sigma(X) = -D X^T D^-1 of order 4."""
    D = np.array([[0, 1, 0], [-1, 0, 0], [0, 0, 1]], dtype=complex)
    return make_context("sl3-eh", 3, InvolutionSpec("neg-conj-transpose"),
                        sigma=InvolutionSpec("neg-transpose-by-C", C=D, order=4))


def elliptic_context(name: str, m: int = 1, d: int = 1) -> EllipticContext:
    """Catalog: 'sl2-su2' (harmonic maps into SU(2)) and 'sl3-eh' (twisted sl(3))."""
    if name == "sl3-eh":
        return EllipticContext(eh_context(), m, d)
    return EllipticContext(get_context(name), m, d)


# ---------------------------------------------------------------------------
# the splitting

def _p1_terms(coeff_at, J: int, tau: InvolutionSpec, scale: complex = 1.0) -> Dict[int, np.ndarray]:
    """p1 of sum_p c_p lambda^p given its negative coefficients c_{-1..-J}."""
    out: Dict[int, np.ndarray] = {}
    const = 0
    for j in range(1, J + 1):
        X = scale * coeff_at(-j)
        T = tau(X)
        out[-j] = X
        out[j] = T
        const = const - X - T
    out[0] = np.asarray(const) if J else 0
    return out


def project_p1(xi: LaurentLoop, tau: InvolutionSpec) -> LaurentLoop:
    """sum_{j>=1} xi_{-j} (lambda^-j - 1) + tau(xi_{-j}) (lambda^j - 1)."""
    J = max(-xi.lo, 0)
    if J == 0:
        return LaurentLoop(np.zeros_like(xi.coeffs[:1]), 0)
    terms = _p1_terms(xi.coeff, J, tau)
    return LaurentLoop.from_terms(terms)


def project_p2(xi: LaurentLoop, tau: InvolutionSpec) -> LaurentLoop:
    """xi - p1(xi): b0 + sum_{j>=1} (xi_j - tau(xi_{-j})) lambda^j with b0 = xi_0 + sum (xi_{-j} + tau(xi_{-j}))."""
    J = max(-xi.lo, 0)
    hi = max(xi.hi, J, 0)
    terms = {0: xi.coeff(0) + sum((xi.coeff(-j) + tau(xi.coeff(-j)) for j in range(1, J + 1)),
                                  np.zeros_like(xi.coeff(0)))}
    for j in range(1, hi + 1):
        terms[j] = xi.coeff(j) - (tau(xi.coeff(-j)) if j <= J else 0)
    return LaurentLoop.from_terms(terms)


# ---------------------------------------------------------------------------
# finite-type flow

def validate_potential(ec: EllipticContext, V: LaurentLoop) -> None:
    """Raise InvalidPotential unless V fits the window, is real and (with sigma) twisted."""
    if V.lo < -ec.d or V.hi > ec.d:
        raise InvalidPotential(f"V must lie in the window [-{ec.d}, {ec.d}]")
    Vw = V.window(-ec.d, ec.d)
    for j in range(0, ec.d + 1):
        defect = np.max(np.abs(Vw.coeff(-j) - ec.tau(Vw.coeff(j))))
        if defect > REALITY_TOL:
            raise InvalidPotential(f"V violates V_-j = tau(V_j) at j = {j} (defect {defect:.2e})")
    if ec.sigma is not None:
        for j in range(-ec.d, ec.d + 1):
            X = Vw.coeff(j)
            defect = np.max(np.abs(eigenspace_project(ec.sigma, j, X) - X))
            if defect > MEMBERSHIP_TOL:
                raise InvalidPotential(f"V_{j} is not in the {j}-eigenspace of sigma (defect {defect:.2e})")
    if np.max(np.abs(np.trace(Vw.coeffs, axis1=-2, axis2=-1))) > 1e-10 and ec.base.algebra == "sl":
        raise InvalidPotential("V must be trace free")


def _connection_terms(ec: EllipticContext, eta: np.ndarray, scale: complex) -> Dict[int, np.ndarray]:
    """p1(scale lambda^(d-m) eta) for a coefficient stack eta (..., 2d+1, n, n)."""
    d, s = ec.d, ec.shift

    def coeff(p):
        # coefficient of lambda^p in lambda^s eta is eta_{p - s}
        return eta[..., p - s + d, :, :]

    return _p1_terms(coeff, ec.m, ec.tau, scale)


def _bracket_rhs(ec: EllipticContext, eta: np.ndarray, A: Dict[int, np.ndarray]) -> Tuple[np.ndarray, float]:
    """[eta, A] truncated to [-d, d] and the largest coefficient dropped."""
    d = ec.d
    out = np.zeros_like(eta)
    overflow = 0.0
    lo, hi = -d - ec.m, d + ec.m
    for p in range(lo, hi + 1):
        acc = 0
        for q, Aq in A.items():
            r = p - q
            if -d <= r <= d:
                E = eta[..., r + d, :, :]
                acc = acc + E @ Aq - Aq @ E
        if -d <= p <= d:
            out[..., p + d, :, :] = acc
        elif not np.isscalar(acc):
            overflow = max(overflow, float(np.max(np.abs(acc))))
    return out, overflow


def _eta_rhs(ec: EllipticContext, eta: np.ndarray, scale: complex):
    A = _connection_terms(ec, eta, scale)
    return _bracket_rhs(ec, eta, A)


def _frame_connection(ec: EllipticContext, eta: np.ndarray, scale: complex, lams: np.ndarray) -> np.ndarray:
    """A(lambda) for each lambda sample: (..., L, n, n)."""
    A = _connection_terms(ec, eta, scale)
    out = 0
    for p, c in A.items():
        c = np.asarray(c)
        out = out + (lams ** p)[(Ellipsis,) + (None,) * 2] * c[..., None, :, :]
    return out


@dataclass
class FiniteTypeState:
    """eta on a grid (coefficients over [-d, d]) and, optionally, frames at lambda samples."""

    ec: EllipticContext
    axes: Tuple[np.ndarray, np.ndarray]
    eta: np.ndarray                    # (nx, ny, 2d+1, n, n)
    lams: Tuple[complex, ...] = ()
    frames: Optional[np.ndarray] = None   # (nx, ny, L, n, n)
    max_overflow: float = 0.0

    @property
    def loop(self) -> LaurentLoop:
        return LaurentLoop(np.moveaxis(self.eta, 2, 0), -self.ec.d)

    def coeff(self, p: int) -> np.ndarray:
        return self.eta[..., p + self.ec.d, :, :]

    def slots(self) -> Dict[str, np.ndarray]:
        """Normalized slots v_j = eta_{m-d-j}, j = 1..m."""
        m, d = self.ec.m, self.ec.d
        return {f"v{j}": self.coeff(m - d - j) for j in range(1, m + 1)}

    def eta_at(self, lam: complex) -> np.ndarray:
        d = self.ec.d
        pw = complex(lam) ** np.arange(-d, d + 1)
        return np.einsum("p,...pij->...ij", pw, self.eta)

    def frame_grid(self) -> FrameGrid:
        if self.frames is None:
            raise ValueError("no frames were integrated")
        base = tuple(int(np.argmin(np.abs(a))) for a in self.axes)
        return FrameGrid(self.axes, self.lams, np.moveaxis(self.frames, 2, 0), base)

    def frame(self, lam: complex) -> np.ndarray:
        for i, l in enumerate(self.lams):
            if abs(l - lam) < 1e-14:
                return self.frames[..., i, :, :]
        raise KeyError(f"lambda {lam} was not integrated")

    def solution_grid(self) -> SolutionGrid:
        fields = dict(self.slots())
        if self.frames is not None and any(abs(l + 1) < 1e-14 for l in self.lams):
            fields["s"] = self.frame(-1.0)
        return SolutionGrid(self.axes, fields, "gtau", self.ec.base.name, ("x", "y"),
                            meta={"m": self.ec.m, "d": self.ec.d, "normalized": True})


def _rk4_step(ec, eta, F, h, scale, lams):
    """One RK4 step of the joint system eta' = [eta, A], F' = F A(lambda)."""
    worst = 0.0

    def rhs(e, f):
        nonlocal worst
        de, ov = _eta_rhs(ec, e, scale)
        worst = max(worst, ov)
        dF = None if f is None else f @ _frame_connection(ec, e, scale, lams)
        return de, dF

    k1e, k1f = rhs(eta, F)
    k2e, k2f = rhs(eta + 0.5 * h * k1e, None if F is None else F + 0.5 * h * k1f)
    k3e, k3f = rhs(eta + 0.5 * h * k2e, None if F is None else F + 0.5 * h * k2f)
    k4e, k4f = rhs(eta + h * k3e, None if F is None else F + h * k3f)
    eta_new = eta + (h / 6) * (k1e + 2 * k2e + 2 * k3e + k4e)
    F_new = None if F is None else F + (h / 6) * (k1f + 2 * k2f + 2 * k3f + k4f)
    return eta_new, F_new, worst


def _sweep(ec, eta0, F0, axis_vals, start, scale, lams):
    """Integrate forward and backward from index ``start`` along one axis; returns node values."""
    n = axis_vals.size
    etas = [None] * n
    Fs = [None] * n
    etas[start], Fs[start] = eta0, F0
    worst = 0.0
    for direction in (1, -1):
        e, f = eta0, F0
        i = start
        while 0 <= i + direction < n:
            h = axis_vals[i + direction] - axis_vals[i]
            e, f, ov = _rk4_step(ec, e, f, h, scale, lams)
            worst = max(worst, ov)
            if not np.all(np.isfinite(e)):
                raise FloatingPointError("finite-type integration became unstable")
            i += direction
            etas[i], Fs[i] = e, f
    eta = np.stack(etas)
    F = None if F0 is None else np.stack(Fs)
    return eta, F, worst


def finite_type_integrate(ec: EllipticContext, V: LaurentLoop, x: np.ndarray, y: np.ndarray,
                          lams: Sequence[complex] = (), overflow_tol: float = OVERFLOW_TOL,
                          validate: bool = True) -> FiniteTypeState:
    """RK4 integration of the finite-type flow from eta = V at the grid point nearest the origin.

    Integrates along x through the base point, then along every y-line. With
    ``lams`` the frame F(lambda) is integrated jointly (F = I at the base point).
    """
    if validate:
        validate_potential(ec, V)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = ec.n, ec.d
    eta0 = np.moveaxis(V.window(-d, d).coeffs, 0, -3).astype(complex)
    if eta0.ndim != 3:
        raise InvalidPotential("V must be a single loop, not a batch")
    lam_arr = np.array([complex(l) for l in lams])
    F0 = np.broadcast_to(np.eye(n, dtype=complex), (lam_arr.size, n, n)).copy() if lam_arr.size else None
    bx = int(np.argmin(np.abs(x)))
    by = int(np.argmin(np.abs(y)))
    eta_line, F_line, w1 = _sweep(ec, eta0, F0, x, bx, 1.0, lam_arr)
    # sweep along y for all x simultaneously
    eta_all, F_all, w2 = _sweep(ec, eta_line, F_line, y, by, 1j, lam_arr)
    eta_all = np.moveaxis(eta_all, 0, 1)            # (nx, ny, 2d+1, n, n)
    if F_all is not None:
        F_all = np.moveaxis(F_all, 0, 1)            # (nx, ny, L, n, n)
    worst = max(w1, w2)
    if worst > overflow_tol:
        raise WindowOverflow(f"finite-type flow left the window (overflow {worst:.2e})")
    return FiniteTypeState(ec, (x, y), eta_all, tuple(complex(l) for l in lam_arr), F_all, worst)


def recover_frame(ec: EllipticContext, state: FiniteTypeState, lams: Sequence[complex]) -> FiniteTypeState:
    """Frames at the requested lambda samples, integrated jointly with eta from its base value."""
    bi = tuple(int(np.argmin(np.abs(a))) for a in state.axes)
    V = LaurentLoop(state.eta[bi], -ec.d)
    return finite_type_integrate(ec, V, state.axes[0], state.axes[1], lams, validate=False)


def isospectral_drift(state: FiniteTypeState, lam0: complex) -> float:
    """max over the grid of the distance between characteristic polynomials of eta(lam0) and V(lam0)."""
    E = state.eta_at(lam0)
    bi = tuple(int(np.argmin(np.abs(a))) for a in state.axes)
    ref = np.poly(E[bi])
    worst = 0.0
    for idx in np.ndindex(E.shape[:2]):
        worst = max(worst, float(np.max(np.abs(np.poly(E[idx]) - ref))))
    return worst


def compatibility_defect(state: FiniteTypeState, accuracy: int = 2) -> float:
    """max |d_y (eta_x) - d_x (eta_y)| with eta_x, eta_y the exact flow vector fields and outer differences."""
    ec = state.ec
    fx, _ = _eta_rhs(ec, state.eta, 1.0)
    fy, _ = _eta_rhs(ec, state.eta, 1j)
    hx, hy = (float(a[1] - a[0]) for a in state.axes)
    R = fd(fx, hy, 1, accuracy=accuracy) - fd(fy, hx, 0, accuracy=accuracy)
    return interior_max(R, 3)


def reality_defect(state: FiniteTypeState) -> float:
    """max |eta_-j - tau(eta_j)| over the grid."""
    tau = state.ec.tau
    return max(float(np.max(np.abs(state.coeff(-j) - tau(state.coeff(j))))) for j in range(state.ec.d + 1))


def primitive_defect(state: FiniteTypeState, lam: complex = 0.8 + 0.3j) -> float:
    """Gauge-invariant form of the primitive constraint for sigma of order k > 2 and m = 1.

    In the frame normalized at lambda = 1 the twisted frame reads F(lambda) G with
    sigma(G) = F(w) G, w = exp(2 pi i / k). Membership of the slot in the -1
    eigenspace then becomes sigma(v1) = w^-1 F(w) v1 F(w)^-1, and the twist of
    the frame becomes sigma(F(lambda)) = F(w lambda) F(w)^-1. Frames at lambda,
    w and w lambda must have been integrated.
    """
    sig = state.ec.sigma
    if sig is None or sig.order <= 2:
        raise ValueError("primitive maps need sigma of order k > 2")
    if state.ec.m != 1:
        raise ValueError("the primitive constraint is stated for m = 1")
    w = np.exp(2j * np.pi / sig.order)
    Fw = state.frame(w)
    v1 = state.slots()["v1"]
    lhs = sig(v1)
    rhs = Fw @ v1 @ np.linalg.inv(Fw) / w
    d1 = float(np.max(np.abs(lhs - rhs)))
    Fl = state.frame(lam)
    Fwl = state.frame(w * lam)
    d2 = float(np.max(np.abs(sig.group(Fl) - Fwl @ np.linalg.inv(Fw))))
    return max(d1, d2)


def primitive_lams(k: int, lam: complex = 0.8 + 0.3j) -> List[complex]:
    w = np.exp(2j * np.pi / k)
    return [lam, w, w * lam, -1.0]


# ---------------------------------------------------------------------------
# residuals

def _dz(F, hs, accuracy):
    return 0.5 * (fd(F, hs[0], 0, accuracy=accuracy) - 1j * fd(F, hs[1], 1, accuracy=accuracy))


def _dzbar(F, hs, accuracy):
    return 0.5 * (fd(F, hs[0], 0, accuracy=accuracy) + 1j * fd(F, hs[1], 1, accuracy=accuracy))


def gtau_residual(ec: EllipticContext, grid: SolutionGrid, normalized: bool = True, accuracy: int = 2) -> float:
    """Residual of the m-th (G, tau)-system; slots 'v1'..'vm' (normalized) or 'u0'..'um' (plain)."""
    tau = ec.tau
    hs = grid.spacing
    m = ec.m
    worst = 0.0
    if normalized:
        missing = [f"v{j}" for j in range(1, m + 1) if f"v{j}" not in grid.fields]
        if missing:
            raise ValueError(f"normalized system needs slots {missing}")
        v = {j: np.asarray(grid[f"v{j}"], dtype=complex) for j in range(1, m + 1)}
        tv = {j: tau(v[j]) for j in v}
        for j in range(1, m + 1):
            R = _dzbar(v[j], hs, accuracy)
            for i in range(1, m - j + 1):
                R = R - commutator(v[i + j], tv[i])
            for i in range(1, m + 1):
                R = R + commutator(v[j], tv[i])
            worst = max(worst, interior_max(R, 2))
        return worst
    missing = [f"u{j}" for j in range(0, m + 1) if f"u{j}" not in grid.fields]
    if missing:
        raise ValueError(f"plain system needs slots {missing}")
    u = {j: np.asarray(grid[f"u{j}"], dtype=complex) for j in range(0, m + 1)}
    tu = {j: tau(u[j]) for j in u}
    for j in range(1, m + 1):
        R = _dzbar(u[j], hs, accuracy)
        for i in range(0, m - j + 1):
            R = R - commutator(u[i + j], tu[i])
        worst = max(worst, interior_max(R, 2))
    R0 = _dzbar(u[0], hs, accuracy) - _dz(tu[0], hs, accuracy)
    for i in range(0, m + 1):
        R0 = R0 - commutator(u[i], tu[i])
    return max(worst, interior_max(R0, 2))


def slot_membership_defect(ec: EllipticContext, grid: SolutionGrid) -> float:
    """max over plain slots u_i of the distance from the -i eigenspace of sigma."""
    if ec.sigma is None:
        return 0.0
    worst = 0.0
    for i in range(0, ec.m + 1):
        name = f"u{i}"
        if name in grid.fields:
            X = np.asarray(grid[name], dtype=complex)
            worst = max(worst, float(np.nanmax(np.abs(eigenspace_project(ec.sigma, -i, X) - X))))
    return worst


def plain_slots(state: FiniteTypeState) -> Dict[str, np.ndarray]:
    """Slots of the plain system in the gauge of the normalized frame: u_j = v_j, u_0 = -sum v_j."""
    v = state.slots()
    out = {f"u{j}": v[f"v{j}"] for j in range(1, state.ec.m + 1)}
    out["u0"] = -sum(v.values())
    return out


def gtau_residual_grid(ctx: AlgebraContext, grid: SolutionGrid, accuracy: int = 2, **params) -> float:
    m = int(params.get("m", grid.meta.get("m", 1)))
    normalized = bool(params.get("normalized", grid.meta.get("normalized", True)))
    ec = EllipticContext(ctx, m, max(m, int(grid.meta.get("d", m))))
    return gtau_residual(ec, grid, normalized, accuracy)


def harmonic_residual(grid: SolutionGrid, ctx: AlgebraContext, accuracy: int = 2, field: str = "s") -> float:
    """Residual of A_zbar + [A, tau(A)] with A = -(1/2) s^-1 s_z."""
    s = np.asarray(grid[field], dtype=complex)
    det = np.abs(np.linalg.det(s))
    if np.nanmin(det) < 1e-14:
        raise ValueError("s is singular at some gridpoint")
    hs = grid.spacing
    A = -0.5 * np.linalg.solve(s, _dz(s, hs, accuracy))
    R = _dzbar(A, hs, accuracy) + commutator(A, ctx.tau(A))
    return interior_max(R, 2)


def geodesic_grid(ctx: AlgebraContext, x: np.ndarray, y: np.ndarray, a=None) -> SolutionGrid:
    """s = exp(-4 a x), the image of the vacuum frame at lambda = -1."""
    from .dressing import VacuumFrame
    fr = VacuumFrame.elliptic(ctx, x, y, a)
    return SolutionGrid((x, y), {"s": fr.evaluate(-1.0)}, "harmonic", ctx.name, ("x", "y"))
