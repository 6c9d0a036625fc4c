"""Geometric objects read off from frames: curved flats, their Cartan images, and harmonic maps."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .algebra import AlgebraContext, commutator, trace_form
from .laxflow import fd, interior_max

LAMBDA_STEP = 1e-4
SINGULAR_DET = 1e-12


class SingularFrame(ValueError):
    pass


@dataclass
class ImmersionGrid:
    """Per-gridpoint matrices (algebra-valued tangent maps or group-valued maps) plus diagnostics."""

    axes: Tuple[np.ndarray, ...]
    values: np.ndarray                 # grid_shape + (n, n)
    kind: str                          # "curved-flat", "cartan", "harmonic"
    recipe: str
    diagnostics: Dict[str, float] = field(default_factory=dict)
    extras: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def grid_shape(self) -> Tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    def to_csv(self, path) -> None:
        """Point cloud: one row per gridpoint with coordinates and real/imag matrix entries."""
        n = self.values.shape[-1]
        mesh = np.meshgrid(*self.axes, indexing="ij")
        head = [f"x{i + 1}" for i in range(len(self.axes))]
        head += [f"{part}{i}{j}" for i in range(n) for j in range(n) for part in ("re", "im")]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for idx in np.ndindex(self.grid_shape):
                M = self.values[idx]
                row = [repr(float(m[idx])) for m in mesh]
                for i in range(n):
                    for j in range(n):
                        row += [repr(float(M[i, j].real)), repr(float(M[i, j].imag))]
                w.writerow(row)


# ---------------------------------------------------------------------------
# frame access

def _axes_of(frame) -> Tuple[np.ndarray, ...]:
    return tuple(np.asarray(a, dtype=float) for a in frame.axes)


def frame_at(frame, lam: complex) -> np.ndarray:
    """E(lambda) on the grid for closed-form evaluators or sampled FrameGrids."""
    if hasattr(frame, "evaluate"):
        return frame.evaluate(complex(lam))
    return frame.at(complex(lam))


def frame_dlam(frame, lam: complex, step: float = LAMBDA_STEP) -> np.ndarray:
    """dE/dlambda: the evaluator's exact rule when it has one, otherwise a central difference."""
    if hasattr(frame, "dlam"):
        try:
            return frame.dlam(complex(lam))
        except NotImplementedError:
            pass
    if not hasattr(frame, "evaluate"):
        raise ValueError("a sampled frame cannot be differentiated in lambda")
    return (frame.evaluate(lam + step) - frame.evaluate(lam - step)) / (2 * step)


def _checked_inverse(E: np.ndarray, what: str) -> np.ndarray:
    det = np.abs(np.linalg.det(E))
    bad = ~(det > SINGULAR_DET)
    if np.any(bad):
        locs = [tuple(int(i) for i in ix) for ix in np.argwhere(bad)[:5]]
        raise SingularFrame(f"{what} is singular at gridpoints {locs}")
    return np.linalg.inv(E)


def _grad(F: np.ndarray, axes, accuracy: int):
    return [fd(F, float(ax[1] - ax[0]), i, accuracy=accuracy) for i, ax in enumerate(axes)]


def _unitarity(G: np.ndarray) -> float:
    n = G.shape[-1]
    return float(np.nanmax(np.abs(G @ np.conj(np.swapaxes(G, -1, -2)) - np.eye(n))))


def _compact(ctx: Optional[AlgebraContext]) -> bool:
    return ctx is not None and ctx.tau.kind == "neg-conj-transpose"


def _char_poly_gap(M: np.ndarray, ref: np.ndarray) -> float:
    target = np.poly(ref)
    worst = 0.0
    flat = M.reshape((-1,) + M.shape[-2:])
    for X in flat:
        if np.all(np.isfinite(X)):
            worst = max(worst, float(np.max(np.abs(np.poly(X) - target))))
    return worst


# ---------------------------------------------------------------------------
# extractors

def curved_flat_tangent(frame, ctx: Optional[AlgebraContext] = None, flats: Optional[Sequence[np.ndarray]] = None,
                        accuracy: int = 4) -> ImmersionGrid:
    """Y = dE/dlambda E^-1 at lambda = 0, with the Gram matrix of its coordinate derivatives.

    ``gram_drift`` compares <Y_xi, Y_xj> against <a_i, a_j> when flats are given
    (or the context carries one flat per axis) and against the base point otherwise.
    """
    axes = _axes_of(frame)
    if hasattr(frame, "excluded") and any(abs(z) < 1e-14 for z in frame.excluded()):
        raise SingularFrame("the frame has a pole at lambda = 0")
    E0 = frame_at(frame, 0.0)
    Y = frame_dlam(frame, 0.0) @ _checked_inverse(E0, "E(0)")
    grads = _grad(Y, axes, accuracy)
    k = len(axes)
    gram = np.empty(Y.shape[:-2] + (k, k), dtype=complex)
    for i in range(k):
        for j in range(k):
            gram[..., i, j] = np.trace(grads[i] @ grads[j], axis1=-2, axis2=-1)
    if flats is None and ctx is not None and ctx.flats is not None and len(ctx.flats) == k:
        flats = ctx.flats
    if flats is not None:
        ref = np.array([[trace_form(a, b) for b in flats] for a in flats])
    else:
        base = tuple(int(np.argmin(np.abs(a))) for a in axes)
        ref = gram[base]
    drift = interior_max(gram - ref, 2) / np.sqrt(k * k)
    diag = {"gram_drift": float(drift)}
    return ImmersionGrid(axes, Y, "curved-flat", "dE/dlambda E^-1 at lambda=0", diag, {"gram": gram})


def cartan_map(frame, ctx: AlgebraContext, flats: Optional[Sequence[np.ndarray]] = None,
               accuracy: int = 4) -> ImmersionGrid:
    """psi = E(1) E(-1)^-1 with its Cartan-image and log-derivative diagnostics.

    With a frame satisfying E(-lambda) = sigma(E(lambda)) the map equals
    E(1) sigma(E(1))^-1 and satisfies sigma(psi) psi = I; moreover
    psi^-1 psi_xi = 2 E(-1) a_i E(-1)^-1.
    """
    axes = _axes_of(frame)
    E1 = frame_at(frame, 1.0)
    Em = frame_at(frame, -1.0)
    Em_inv = _checked_inverse(Em, "E(-1)")
    psi = E1 @ Em_inv
    n = psi.shape[-1]
    diag: Dict[str, float] = {}
    if ctx.sigma is not None:
        sg = ctx.sigma.group
        diag["cartan_defect"] = float(np.nanmax(np.abs(sg(psi) @ psi - np.eye(n))))
        diag["sigma_form_defect"] = float(np.nanmax(np.abs(psi - E1 @ np.linalg.inv(sg(E1)))))
    if _compact(ctx):
        diag["unitarity_defect"] = _unitarity(psi)
    grads = _grad(psi, axes, accuracy)
    psi_inv = np.linalg.inv(psi)
    logs = [psi_inv @ g for g in grads]
    if flats is None and ctx.flats is not None and len(ctx.flats) == len(axes):
        flats = ctx.flats
    if flats is not None:
        worst = 0.0
        for L, a in zip(logs, flats):
            expect = 2 * Em @ np.asarray(a, dtype=complex) @ Em_inv
            worst = max(worst, interior_max(L - expect, 2))
        diag["log_derivative_defect"] = worst
    extras = {f"log_x{i + 1}": L for i, L in enumerate(logs)}
    return ImmersionGrid(axes, psi, "cartan", "E(1) E(-1)^-1", diag, extras)


def harmonic_from_minus1(frame, ctx: AlgebraContext, accuracy: int = 4) -> ImmersionGrid:
    """s = E(-1) E(1)^-1 for a frame of the -1-flow, with its Lorentz-harmonic residual.

    A = s^-1 s_x / 2 and B = s^-1 s_t / 2 satisfy A_t = -B_x = [A, B]. The
    spectrum of s^-1 s_x is that of -2a at every gridpoint.
    """
    axes = _axes_of(frame)
    if len(axes) != 2:
        raise ValueError("harmonic maps live on a 2D (x, t) grid")
    E1 = frame_at(frame, 1.0)
    Em = frame_at(frame, -1.0)
    s = Em @ _checked_inverse(E1, "E(1)")
    s_inv = np.linalg.inv(s)
    hx, ht = (float(a[1] - a[0]) for a in axes)
    A = 0.5 * s_inv @ fd(s, hx, 0, accuracy=accuracy)
    B = 0.5 * s_inv @ fd(s, ht, 1, accuracy=accuracy)
    AB = commutator(A, B)
    res = max(interior_max(fd(A, ht, 1, accuracy=accuracy) - AB, 2),
              interior_max(fd(B, hx, 0, accuracy=accuracy) + AB, 2))
    # pointwise spectral check on a higher-order derivative so it is not limited by the residual stencil
    sx = s_inv @ fd(s, hx, 0, accuracy=6)
    diag = {"harmonic_residual": res, "spectrum_defect": _char_poly_gap(sx, -2 * ctx.a)}
    if _compact(ctx):
        diag["unitarity_defect"] = _unitarity(s)
    return ImmersionGrid(axes, s, "harmonic", "E(-1) E(1)^-1", diag, {"A": A, "B": B})

