"""Gridded solutions, Lax connections, frame integration and PDE residuals.

Conventions: a frame E solves E_{x_i} = E A_i, so flatness of the connection
sum_i A_i dx_i reads

    d_j A_i - d_i A_j - [A_i, A_j] = 0      (i < j).

Grids are indexed ``[i0, i1, ...]`` following ``axes``; matrix fields carry two
trailing axes. Derivatives are centered finite differences; points where a
stencil does not fit are NaN and are excluded from residual maxima.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import jetcalc
from .algebra import AlgebraContext, commutator, get_context

DEFAULT_LAMBDAS = (1.0, -1.0, 1j, -1j, 2.0, 0.5)
FLATNESS_GATE = 1e-4
BLOWUP_LIMIT = 1e12


class FlatnessGateError(RuntimeError):
    """The connection is too far from flat for frame integration to be meaningful."""


class FrameIntegrationError(RuntimeError):
    """Frame integration became unstable."""


class InsufficientResolution(ValueError):
    """The grid is too small for the derivative orders an equation needs."""


# ---------------------------------------------------------------------------
# grids

def _check_uniform(ax: np.ndarray, name: str) -> float:
    ax = np.asarray(ax, dtype=float)
    if ax.ndim != 1 or ax.size < 2:
        raise ValueError(f"axis {name} must be 1-D with at least two points")
    d = np.diff(ax)
    if np.any(d <= 0):
        raise ValueError(f"axis {name} is not strictly increasing")
    h = float(d.mean())
    if np.max(np.abs(d - h)) > 1e-9 * max(1.0, abs(h)) * ax.size:
        raise ValueError(f"axis {name} is not uniformly spaced")
    return h


@dataclass
class SolutionGrid:
    """Named fields sampled on a rectangular grid.

    Each entry of ``fields`` has shape ``grid_shape + value_shape`` where the
    value shape is ``()`` for scalar equations and ``(n, n)`` for matrices.
    NaN entries mark masked (singular) points and are only allowed when
    ``allow_masked`` is set.
    """

    axes: Tuple[np.ndarray, ...]
    fields: Dict[str, np.ndarray]
    equation_tag: str
    ctx_ref: Optional[str] = None
    axis_names: Tuple[str, ...] = ("x", "t")
    meta: Dict[str, object] = field(default_factory=dict)
    allow_masked: bool = False

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if len(self.axis_names) != len(self.axes):
            self.axis_names = tuple(f"x{i + 1}" for i in range(len(self.axes)))
        self.spacing = tuple(_check_uniform(a, n) for a, n in zip(self.axes, self.axis_names))
        shape = self.grid_shape
        for name, arr in self.fields.items():
            arr = np.asarray(arr)
            if arr.shape[: len(shape)] != shape:
                raise ValueError(f"field {name!r} has shape {arr.shape}, grid is {shape}")
            if not self.allow_masked and not np.all(np.isfinite(arr)):
                raise ValueError(f"field {name!r} has non-finite values")
            self.fields[name] = arr

    @property
    def grid_shape(self) -> Tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def values(self) -> np.ndarray:
        return next(iter(self.fields.values()))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.fields[name]

    def mesh(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def with_fields(self, tag: Optional[str] = None, **fields) -> "SolutionGrid":
        return SolutionGrid(self.axes, dict(fields), tag or self.equation_tag, self.ctx_ref,
                            self.axis_names, dict(self.meta), self.allow_masked)

    # serialization
    def to_dict(self) -> dict:
        out = {"equation_tag": self.equation_tag, "ctx_ref": self.ctx_ref,
               "axes": {n: a.tolist() for n, a in zip(self.axis_names, self.axes)},
               "fields": {}, "meta": _jsonable(self.meta)}
        for name, arr in self.fields.items():
            arr = np.asarray(arr, dtype=complex)
            out["fields"][name] = {"shape": list(arr.shape), "re": arr.real.ravel().tolist(),
                                   "im": arr.imag.ravel().tolist()}
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "SolutionGrid":
        names = tuple(d["axes"].keys())
        axes = tuple(np.array(d["axes"][n]) for n in names)
        fields = {}
        for name, f in d["fields"].items():
            fields[name] = (np.array(f["re"]) + 1j * np.array(f["im"])).reshape(f["shape"])
        return cls(axes, fields, d["equation_tag"], d.get("ctx_ref"), names, dict(d.get("meta", {})),
                   allow_masked=True)

    def to_csv(self, path, names: Optional[Sequence[str]] = None) -> None:
        """One row per grid point: axis coordinates then Re/Im of every tracked entry."""
        names = list(names or self.fields)
        mesh = [m.ravel() for m in self.mesh()]
        cols, header = [], list(self.axis_names)
        npts = mesh[0].size
        for name in names:
            arr = np.asarray(self.fields[name], dtype=complex).reshape(npts, -1)
            tail = self.fields[name].shape[len(self.axes):]
            for k in range(arr.shape[1]):
                idx = np.unravel_index(k, tail) if tail else ()
                label = name + "".join(f"_{i}" for i in idx)
                header += [f"re_{label}", f"im_{label}"]
                cols += [arr[:, k].real, arr[:, k].imag]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in range(npts):
                w.writerow([repr(float(m[r])) for m in mesh] + [repr(float(c[r])) for c in cols])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def uniform_axis(start: float, stop: float, n: int) -> np.ndarray:
    return np.linspace(start, stop, n)


# ---------------------------------------------------------------------------
# finite differences

_STENCILS = {
    # (derivative order, accuracy) -> (offsets, weights); divide by h**order
    (1, 2): ((-1, 1), (-0.5, 0.5)),
    (2, 2): ((-1, 0, 1), (1.0, -2.0, 1.0)),
    (3, 2): ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    (4, 2): ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
    (1, 4): ((-2, -1, 1, 2), (1 / 12, -8 / 12, 8 / 12, -1 / 12)),
    (2, 4): ((-2, -1, 0, 1, 2), (-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12)),
    (3, 4): ((-3, -2, -1, 1, 2, 3), (1 / 8, -1.0, 13 / 8, -13 / 8, 1.0, -1 / 8)),
    (1, 6): ((-3, -2, -1, 1, 2, 3), (-1 / 60, 3 / 20, -3 / 4, 3 / 4, -3 / 20, 1 / 60)),
}


def stencil_width(order: int, accuracy: int = 2) -> int:
    if order == 0:
        return 0
    return max(abs(o) for o in _STENCILS[(order, accuracy)][0])


def fd(F: np.ndarray, h: float, axis: int, order: int = 1, accuracy: int = 2) -> np.ndarray:
    """Centered difference along ``axis``; entries without a full stencil are NaN."""
    F = np.asarray(F)
    if order == 0:
        return F.astype(complex)
    try:
        offsets, weights = _STENCILS[(order, accuracy)]
    except KeyError:
        raise ValueError(f"no stencil for derivative order {order} at accuracy {accuracy}") from None
    w = max(abs(o) for o in offsets)
    n = F.shape[axis]
    out = np.full(F.shape, np.nan, dtype=complex)
    if n <= 2 * w:
        return out
    F = np.moveaxis(F, axis, 0)
    res = np.zeros((n - 2 * w,) + F.shape[1:], dtype=complex)
    for o, c in zip(offsets, weights):
        res += c * F[w + o: n - w + o]
    res /= h ** order
    outm = np.moveaxis(out, axis, 0)
    outm[w: n - w] = res
    return out


def interior_max(R: np.ndarray, value_dims: int = 0) -> float:
    """Max over grid points of the (Frobenius) norm of R, ignoring NaN points."""
    R = np.asarray(R)
    if value_dims:
        R = np.sqrt(np.sum(np.abs(R) ** 2, axis=tuple(range(-value_dims, 0))))
    else:
        R = np.abs(R)
    if np.all(np.isnan(R)):
        return float("nan")
    return float(np.nanmax(R))


def convergence_order(hs: Sequence[float], residuals: Sequence[float]) -> float:
    """Least-squares slope of log(residual) against log(h)."""
    return float(np.polyfit(np.log(hs), np.log(residuals), 1)[0])


# ---------------------------------------------------------------------------
# connections

@dataclass
class ConnectionField:
    """A connection sum_i A_i dx_i whose components are Laurent polynomials in lambda.

    ``parts[i]`` maps a power p of lambda to a coefficient field with shape
    ``grid_shape + (n, n)`` (or ``(n, n)`` for constant coefficients).
    """

    axes: Tuple[np.ndarray, ...]
    parts: List[Dict[int, np.ndarray]]
    dim: int
    tag: str = ""

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        self.spacing = tuple(_check_uniform(a, f"x{i}") for i, a in enumerate(self.axes))
        shape = self.grid_shape + (self.dim, self.dim)
        self.parts = [{p: np.broadcast_to(np.asarray(c, dtype=complex), shape) for p, c in part.items()}
                      for part in self.parts]

    @property
    def grid_shape(self) -> Tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    def window(self, i: int) -> Tuple[int, int]:
        ps = list(self.parts[i])
        return min(ps), max(ps)

    def evaluate(self, i: int, lam: complex) -> np.ndarray:
        out = np.zeros(self.grid_shape + (self.dim, self.dim), dtype=complex)
        for p, c in self.parts[i].items():
            out = out + (lam ** p) * c
        return out


def _jets_from_grid(ctx: AlgebraContext, u: np.ndarray, h: float, max_order: int, axis: int = 0,
                    accuracy: int = 2):
    coords = ctx.perp_coords(u)
    jets = {}
    for c in range(coords.shape[-1]):
        for k in range(max_order + 1):
            acc = accuracy if (k, accuracy) in _STENCILS else 2
            jets[jetcalc.JetVar(c, k)] = fd(coords[..., c], h, axis, k, accuracy=acc) if k else coords[..., c]
    return jets


def assemble_lax(ctx: AlgebraContext, b, j: int, u_grid: SolutionGrid, field_name: str = "u",
                 accuracy: int = 2) -> ConnectionField:
    """A_x = a lambda + u, A_t = sum_{i=0}^{j} Q_{b,j-i}(u) lambda^i, with jets by centered differences."""
    u = np.asarray(u_grid.fields[field_name], dtype=complex)
    need = 2 * stencil_width(max(j - 1, 1), accuracy if (max(j - 1, 1), accuracy) in _STENCILS else 2) + 3
    if u_grid.grid_shape[0] < need:
        raise InsufficientResolution(f"(b,{j})-flow needs at least {need} points along x")
    b = ctx.b if b is None else np.asarray(b, dtype=complex)
    Qs = jetcalc.compute_Q_list(ctx, b, j)
    jets = _jets_from_grid(ctx, u, u_grid.spacing[0], max(j - 1, 0), accuracy=accuracy)
    t_part = {}
    for i in range(j + 1):
        Qm = Qs[j - i]
        val = jetcalc.evaluate(Qm, jets) if Qm.jets() else np.broadcast_to(
            jetcalc.evaluate(Qm, {}), u.shape)
        t_part[i] = np.broadcast_to(val, u.shape)
    return ConnectionField(u_grid.axes, [{1: ctx.a, 0: u}, t_part], ctx.dim, tag=f"flow(b,{j})")


def assemble_minus_one(ctx: AlgebraContext, grid: SolutionGrid) -> ConnectionField:
    """(a lambda + u) dx + lambda^-1 v dt from fields ``u`` and ``v``."""
    return ConnectionField(grid.axes, [{1: ctx.a, 0: grid["u"]}, {-1: grid["v"]}], ctx.dim, tag="minus-one")


def assemble_ntuple(ctx: AlgebraContext, grid: SolutionGrid, field_name: str = "v") -> ConnectionField:
    """sum_i (a_i lambda + [a_i, v]) dx_i for the U/U0-system."""
    v = np.asarray(grid[field_name], dtype=complex)
    flats = ctx.flats
    if len(flats) != len(grid.axes):
        raise ValueError(f"context has {len(flats)} flats but the grid has {len(grid.axes)} axes")
    parts = [{1: A, 0: commutator(A, v)} for A in flats]
    return ConnectionField(grid.axes, parts, ctx.dim, tag="uu0")


def assemble_gtau(ctx: AlgebraContext, grid: SolutionGrid, slots: Sequence[str], normalized: bool) -> ConnectionField:
    """Real-coordinate form of the elliptic Lax pair.

    Plain: A_z = sum_j u_j lambda^-j, A_zbar = sum_j tau(u_j) lambda^j.
    Normalized: A_z = sum_j (lambda^-j - 1) v_j, A_zbar = sum_j (lambda^j - 1) tau(v_j).
    With z = x + i y: A_x = A_z + A_zbar, A_y = i (A_z - A_zbar).
    """
    tau = ctx.tau
    Az: Dict[int, np.ndarray] = {}
    Azb: Dict[int, np.ndarray] = {}

    def add(d, p, X):
        d[p] = d.get(p, 0) + X

    for idx, name in enumerate(slots):
        X = np.asarray(grid[name], dtype=complex)
        jj = idx + 1 if normalized else idx
        add(Az, -jj, X)
        add(Azb, jj, tau(X))
        if normalized:
            add(Az, 0, -X)
            add(Azb, 0, -tau(X))
    ax: Dict[int, np.ndarray] = {}
    ay: Dict[int, np.ndarray] = {}
    for p in set(Az) | set(Azb):
        zc = Az.get(p, 0)
        zb = Azb.get(p, 0)
        ax[p] = zc + zb
        ay[p] = 1j * (zc - zb)
    return ConnectionField(grid.axes, [ax, ay], ctx.dim, tag="gtau")


def flatness_residual(theta: ConnectionField, lambda_samples: Optional[Iterable[complex]] = None,
                      accuracy: int = 2) -> float:
    """max over interior points and lambda of |d_j A_i - d_i A_j - [A_i, A_j]|."""
    if any(n < 3 for n in theta.grid_shape):
        raise ValueError("flatness residual needs a grid of at least 3 points per axis")
    lams = list(DEFAULT_LAMBDAS if lambda_samples is None else lambda_samples)
    worst = 0.0
    k = len(theta.parts)
    for lam in lams:
        A = [theta.evaluate(i, lam) for i in range(k)]
        for i in range(k):
            for j in range(i + 1, k):
                R = (fd(A[i], theta.spacing[j], j, accuracy=accuracy) - fd(A[j], theta.spacing[i], i, accuracy=accuracy)
                     - commutator(A[i], A[j]))
                worst = max(worst, interior_max(R, 2))
    return worst


# ---------------------------------------------------------------------------
# frames

@dataclass
class FrameGrid:
    axes: Tuple[np.ndarray, ...]
    lams: Tuple[complex, ...]
    values: np.ndarray          # (len(lams),) + grid_shape + (n, n)
    base_index: Tuple[int, ...]

    def at(self, lam: complex) -> np.ndarray:
        for i, l in enumerate(self.lams):
            if abs(l - lam) < 1e-14:
                return self.values[i]
        raise KeyError(f"lambda {lam} not in the sample set")


def _midpoints(A: np.ndarray) -> np.ndarray:
    """Cubic interpolation of A (first axis) at the half-integer points."""
    n = A.shape[0]
    if n < 4:
        return 0.5 * (A[:-1] + A[1:])
    mid = np.empty((n - 1,) + A.shape[1:], dtype=complex)
    mid[1:-1] = (-A[:-3] + 9 * A[1:-2] + 9 * A[2:-1] - A[3:]) / 16
    mid[0] = (5 * A[0] + 15 * A[1] - 5 * A[2] + A[3]) / 16
    mid[-1] = (5 * A[-1] + 15 * A[-2] - 5 * A[-3] + A[-4]) / 16
    return mid


def _rk4_line(E0: np.ndarray, A: np.ndarray, h: float) -> np.ndarray:
    """Integrate E' = E A along the first axis of A from E0; returns all nodes."""
    n = A.shape[0]
    mid = _midpoints(A)
    out = np.empty(A.shape, dtype=complex)
    out[0] = E0
    E = E0
    for i in range(n - 1):
        k1 = E @ A[i]
        k2 = (E + 0.5 * h * k1) @ mid[i]
        k3 = (E + 0.5 * h * k2) @ mid[i]
        k4 = (E + h * k3) @ A[i + 1]
        E = E + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(E)) or np.max(np.abs(E)) > BLOWUP_LIMIT:
            raise FrameIntegrationError("frame integration blew up")
        out[i + 1] = E
    return out


def _integrate_from(E0: np.ndarray, A: np.ndarray, h: float, start: int) -> np.ndarray:
    """Integrate along the first axis forward and backward from index ``start``."""
    fwd = _rk4_line(E0, A[start:], h)
    bwd = _rk4_line(E0, A[: start + 1][::-1], -h)[::-1]
    return np.concatenate([bwd[:-1], fwd], axis=0)


def _base_index(axes) -> Tuple[int, ...]:
    return tuple(int(np.argmin(np.abs(a))) for a in axes)


def integrate_frame(theta: ConnectionField, lams, gate: float = FLATNESS_GATE,
                    order: Sequence[int] = (0, 1)) -> FrameGrid:
    """Fourth-order frame integration: along axis order[0] through the base point, then along order[1]-lines.

    The base point is the grid point closest to the origin; E = I there.
    Connections built from difference jets are undefined on a boundary strip;
    the frame is integrated on the largest finite box and is NaN outside it.
    """
    lam_list = [complex(lams)] if np.isscalar(lams) else [complex(l) for l in lams]
    if len(theta.parts) != 2:
        raise ValueError("integrate_frame handles two-dimensional connections")
    if gate is not None:
        fr = flatness_residual(theta, lam_list)
        if fr > gate:
            raise FlatnessGateError(f"flatness residual {fr:.3e} exceeds gate {gate:.1e}")
    base = _base_index(theta.axes)
    n = theta.dim
    first, second = order
    box = _finite_box(theta, lam_list)
    if any(not (sl.start <= b < sl.stop) for sl, b in zip(box, base)):
        raise FrameIntegrationError("the base point lies outside the region where the connection is defined")
    local = tuple(b - sl.start for sl, b in zip(box, base))
    vals = []
    for lam in lam_list:
        full = [theta.evaluate(i, lam) for i in range(2)]
        A = [F[box] for F in full]
        # put the first integration axis in front
        A1 = np.moveaxis(A[first], first, 0)
        A2 = np.moveaxis(A[second], first, 0)
        line = A1[:, local[second]]
        E_line = _integrate_from(np.eye(n, dtype=complex), line, theta.spacing[first], local[first])
        # along the second axis for every point of the first line (vectorized over the first axis)
        A2s = np.moveaxis(A2, 1, 0)  # (second, first, n, n)
        E = _integrate_from(E_line, A2s, theta.spacing[second], local[second])  # (second, first, n, n)
        E = np.moveaxis(E, 0, 1)  # (first, second, n, n)
        E = np.moveaxis(E, 0, first)
        out = np.full(full[0].shape, np.nan, dtype=complex)
        out[box] = E
        vals.append(out)
    return FrameGrid(theta.axes, tuple(lam_list), np.array(vals), base)


def _finite_box(theta: ConnectionField, lams) -> Tuple[slice, ...]:
    """Index box obtained by trimming boundary rows and columns that carry non-finite entries."""
    ok = np.ones(theta.grid_shape, dtype=bool)
    for lam in lams:
        for i in range(len(theta.parts)):
            ok &= np.all(np.isfinite(theta.evaluate(i, lam)), axis=(-2, -1))
    box = []
    for ax in range(ok.ndim):
        other = tuple(k for k in range(ok.ndim) if k != ax)
        good = np.flatnonzero(np.any(ok, axis=other))
        lo, hi = (good[0], good[-1] + 1) if good.size else (0, 0)
        box.append(slice(int(lo), int(hi)))
    box = tuple(box)
    if not np.all(ok[box]):
        raise FrameIntegrationError("the connection has non-finite values inside the grid")
    return box


def log_derivative(E: np.ndarray, h: float, axis: int, accuracy: int = 2) -> np.ndarray:
    """E^-1 dE/dx_axis by centered differences."""
    return np.linalg.solve(E, fd(E, h, axis, 1, accuracy))


# ---------------------------------------------------------------------------
# named PDE residuals

PDE_TAGS = ("nls", "mkdv", "sge", "tzitzeica", "minus-one", "uu0-system", "grassmann", "gtau", "harmonic", "flow")


def _scalar(grid: SolutionGrid, name: str, entry=(0, 1)) -> np.ndarray:
    if name in grid.fields:
        return np.asarray(grid[name])
    U = np.asarray(grid["u"])
    return U[..., entry[0], entry[1]]


def pde_residual(tag: str, grid: SolutionGrid, ctx: Optional[AlgebraContext] = None, **params) -> float:
    """Centered-difference residual of a named equation, max over interior points.

    ``accuracy`` (2 or 4) selects the difference stencils.
    """
    acc = int(params.pop("accuracy", 2))
    if tag not in PDE_TAGS:
        raise ValueError(f"unknown equation tag {tag!r}; known: {', '.join(PDE_TAGS)}")
    hs = grid.spacing
    if tag == "nls":
        q = _scalar(grid, "q")
        R = fd(q, hs[1], 1, accuracy=acc) - 0.5j * (fd(q, hs[0], 0, 2, accuracy=acc) + 2 * np.abs(q) ** 2 * q)
        return interior_max(R)
    if tag == "mkdv":
        q = _scalar(grid, "q")
        R = fd(q, hs[1], 1, accuracy=acc) + 0.25 * (fd(q, hs[0], 0, 3, accuracy=acc) + 6 * q ** 2 * fd(q, hs[0], 0, accuracy=acc))
        return interior_max(R)
    if tag == "sge":
        q = np.asarray(grid["q"])
        R = fd(fd(q, hs[0], 0, accuracy=acc), hs[1], 1, accuracy=acc) - np.sin(q)
        return interior_max(R)
    if tag == "tzitzeica":
        w = np.asarray(grid["w"])
        R = fd(fd(w, hs[0], 0, accuracy=acc), hs[1], 1, accuracy=acc) - (np.exp(w) - np.exp(-2 * w))
        return interior_max(R)
    if ctx is None:
        ctx = get_context(grid.ctx_ref) if grid.ctx_ref else None
        if ctx is None:
            raise ValueError(f"equation {tag!r} needs a context")
    if tag == "minus-one":
        u, v = grid["u"], grid["v"]
        R1 = fd(u, hs[1], 1, accuracy=acc) - commutator(ctx.a, v)
        R2 = fd(v, hs[0], 0, accuracy=acc) + commutator(u, v)
        return max(interior_max(R1, 2), interior_max(R2, 2))
    if tag == "uu0-system":
        v = np.asarray(grid["v"])
        flats = ctx.flats
        worst = 0.0
        for i in range(len(flats)):
            for j in range(len(flats)):
                if i == j:
                    continue
                R = (commutator(flats[i], fd(v, hs[j], j, accuracy=acc)) - commutator(flats[j], fd(v, hs[i], i, accuracy=acc))
                     - commutator(commutator(flats[i], v), commutator(flats[j], v)))
                worst = max(worst, interior_max(R, 2))
        return worst
    if tag == "grassmann":
        return grassmann_residual(grid, acc)
    if tag == "gtau":
        from .elliptic import gtau_residual_grid
        return gtau_residual_grid(ctx, grid, accuracy=acc, **params)
    if tag == "harmonic":
        from .elliptic import harmonic_residual
        return harmonic_residual(grid, ctx, accuracy=acc)
    # generic (b,j)-flow
    b = params.get("b", grid.meta.get("b"))
    j = int(params.get("j", grid.meta.get("j", 2)))
    b = ctx.b if b is None else np.asarray(b, dtype=complex)
    u = np.asarray(grid["u"], dtype=complex)
    rhs = jetcalc.flow_rhs(ctx, b, j)
    jets = _jets_from_grid(ctx, u, hs[0], j, accuracy=acc)
    R = fd(u, hs[1], 1, accuracy=acc) - jetcalc.evaluate(rhs, jets)
    return interior_max(R, 2)


def grassmann_residual(grid: SolutionGrid, accuracy: int = 2) -> float:
    """Residual of the O(2n)/O(n)xO(n)-system for F = (f_ij) on an n-dimensional grid."""
    F = np.asarray(grid["F"])
    n = F.shape[-1]
    if len(grid.axes) != n:
        raise ValueError("the Grassmann system needs an n-dimensional grid for n x n F")
    hs = grid.spacing
    dF = [fd(F, hs[k], k, accuracy=accuracy) for k in range(n)]
    worst = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            s1 = sum(F[..., k, i] * F[..., k, j] for k in range(n))
            s2 = sum(F[..., i, k] * F[..., j, k] for k in range(n))
            r1 = dF[i][..., i, j] + dF[j][..., j, i] + s1
            r2 = dF[j][..., i, j] + dF[i][..., j, i] + s2
            worst = max(worst, interior_max(r1), interior_max(r2))
            for k in range(n):
                if k in (i, j):
                    continue
                worst = max(worst, interior_max(dF[k][..., i, j] - F[..., i, k] * F[..., k, j]))
    return worst


def residual_report(tag: str, grid: SolutionGrid, residual: float) -> dict:
    return {"tag": tag, "h": list(grid.spacing), "residual": residual}


# ---------------------------------------------------------------------------
# scalar lifts

def lift_scalar(tag: str, grid: SolutionGrid, ctx: Optional[AlgebraContext] = None, accuracy: int = 2) -> SolutionGrid:
    """Matrix fields (u, v) of the Lax pair for a scalar solution grid."""
    hs = grid.spacing
    if tag == "sge":
        ctx = ctx or get_context("sl2-su2/so2")
        q = np.asarray(grid["q"], dtype=float)
        qx = fd(q, hs[0], 0, accuracy=accuracy).real
        u = np.zeros(q.shape + (2, 2), dtype=complex)
        u[..., 0, 1] = qx / 2
        u[..., 1, 0] = -qx / 2
        c, s = np.cos(q / 2), np.sin(q / 2)
        g = np.stack([np.stack([c, s], -1), np.stack([-s, c], -1)], -2).astype(complex)
        v = np.linalg.inv(g) @ ctx.b @ g
        return SolutionGrid(grid.axes, {"u": u, "v": v}, "minus-one", ctx.name, grid.axis_names,
                            allow_masked=True)
    if tag == "tzitzeica":
        ctx = ctx or get_context("sl3-tzitzeica")
        w = np.asarray(grid["w"], dtype=float)
        wx = fd(w, hs[0], 0, accuracy=accuracy)
        u = np.zeros(w.shape + (3, 3), dtype=complex)
        u[..., 0, 0] = wx
        u[..., 1, 1] = -wx
        g = np.zeros(w.shape + (3, 3), dtype=complex)
        g[..., 0, 0] = np.exp(w)
        g[..., 1, 1] = np.exp(-w)
        g[..., 2, 2] = 1
        v = np.linalg.inv(g) @ ctx.b @ g
        return SolutionGrid(grid.axes, {"u": u, "v": v}, "minus-one", ctx.name, grid.axis_names,
                            allow_masked=True)
    if tag in ("nls", "mkdv"):
        q = np.asarray(grid["q"], dtype=complex)
        u = np.zeros(q.shape + (2, 2), dtype=complex)
        u[..., 0, 1] = q
        u[..., 1, 0] = -np.conj(q) if tag == "nls" else -q
        return SolutionGrid(grid.axes, {"u": u}, tag, "sl2-su2", grid.axis_names,
                            meta={"j": 2 if tag == "nls" else 3})
    raise ValueError(f"no scalar lift for {tag!r}")
