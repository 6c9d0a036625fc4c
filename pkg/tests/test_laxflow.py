import json

import numpy as np
import pytest

from _oracles import mesh, mkdv_soliton, nls_plane_wave, nls_soliton, sge_kink
from integrable.algebra import get_context
from integrable.dressing import vacuum_solution
from integrable.laxflow import (FlatnessGateError, InsufficientResolution, SolutionGrid, assemble_lax,
                                assemble_minus_one, convergence_order, fd, flatness_residual, integrate_frame,
                                interior_max, lift_scalar, log_derivative, pde_residual)

SU2 = get_context("sl2-su2")
SO2 = get_context("sl2-su2/so2")


def axis(n, lo=-1.0, hi=1.0):
    return np.linspace(lo, hi, n)


def scalar_grid(tag, fn, n, ctx_ref="sl2-su2"):
    x = axis(n)
    X, T = mesh(x, x)
    name = {"sge": "q", "tzitzeica": "w"}.get(tag, "q")
    return SolutionGrid((x, x), {name: fn(X, T)}, tag, ctx_ref)


def test_fd_orders():
    x = np.linspace(0, 1, 101)
    h = x[1] - x[0]
    f = np.sin(3 * x)
    for acc in (2, 4):
        d1 = fd(f, h, 0, 1, acc)
        d3 = fd(f, h, 0, 3, acc)
        assert np.isnan(d1[0]) and np.isnan(d3[0])
        assert np.nanmax(np.abs(d1 - 3 * np.cos(3 * x))) < (1e-3 if acc == 2 else 1e-6)
        assert np.nanmax(np.abs(d3 + 27 * np.cos(3 * x))) < (1e-2 if acc == 2 else 1e-4)
    with pytest.raises(ValueError):
        fd(f, h, 0, 5)


def test_grid_validation():
    x = np.array([0.0, 0.1, 0.3])
    with pytest.raises(ValueError):
        SolutionGrid((x, x), {"q": np.zeros((3, 3))}, "nls")
    y = axis(5)
    with pytest.raises(ValueError):
        SolutionGrid((y, y), {"q": np.full((5, 5), np.nan)}, "nls")
    with pytest.raises(ValueError):
        SolutionGrid((y, y), {"q": np.zeros((4, 5))}, "nls")


def test_oracle_pde_residuals_converge():
    for tag, fn in (("nls", nls_plane_wave), ("nls", nls_soliton), ("mkdv", mkdv_soliton), ("sge", sge_kink)):
        res = [pde_residual(tag, scalar_grid(tag, fn, n), accuracy=2) for n in (41, 81, 161)]
        hs = [2 / 40, 2 / 80, 2 / 160]
        assert convergence_order(hs, res) > 1.8, tag


def test_wrong_solution_is_rejected():
    # the plane wave of the opposite-sign equation leaves an O(1) residual
    g = scalar_grid("nls", lambda X, T: 0.8 * np.exp(1j * (0.5 * X - 0.765 * T)), 81)
    assert pde_residual("nls", g) > 0.1
    with pytest.raises(ValueError):
        pde_residual("kdv", g)


def test_plane_wave_lax_pair_is_flat():
    g = scalar_grid("nls", nls_plane_wave, 81)
    theta = assemble_lax(SU2, SU2.a, 2, lift_scalar("nls", g))
    assert flatness_residual(theta) < 1e-3
    # a perturbed field is not flat
    bad = lift_scalar("nls", g)
    X, T = g.mesh()
    bad.fields["u"][..., 0, 1] += 0.05 * np.sin(3 * X) * T
    assert flatness_residual(assemble_lax(SU2, SU2.a, 2, bad)) > 1e-2


def test_kink_minus_one_flat():
    g = scalar_grid("sge", sge_kink, 81, "sl2-su2/so2")
    lifted = lift_scalar("sge", g)
    theta = assemble_minus_one(SO2, lifted)
    assert flatness_residual(theta) < 1e-3
    assert pde_residual("minus-one", lifted, SO2) < 1e-3


def test_mkdv_lax_pair_is_flat():
    g = scalar_grid("mkdv", mkdv_soliton, 81)
    theta = assemble_lax(SU2, SU2.a, 3, lift_scalar("mkdv", g))
    assert flatness_residual(theta) < 1e-2


def test_vacuum_flatness_exact():
    for kind, ctx in (("flow", SU2), ("minus-one", SO2)):
        vac = vacuum_solution(ctx, kind, (axis(9), axis(9)))
        theta = assemble_lax(ctx, ctx.a, 2, vac.grid) if kind == "flow" else assemble_minus_one(ctx, vac.grid)
        assert flatness_residual(theta) < 1e-13


def test_insufficient_resolution():
    g = SolutionGrid((axis(4), axis(4)), {"u": np.zeros((4, 4, 2, 2))}, "flow")
    with pytest.raises(InsufficientResolution):
        assemble_lax(SU2, SU2.a, 3, g)


def test_integrate_frame_matches_closed_form():
    n = 41
    vac = vacuum_solution(SU2, "flow", (axis(n), axis(n)), j=2)
    theta = assemble_lax(SU2, SU2.a, 2, vac.grid)
    lams = (0.7, 0.3 + 0.4j)
    fr = integrate_frame(theta, lams)
    for lam in lams:
        E = fr.at(lam)
        # the difference jets leave one boundary row undefined
        assert np.all(np.isnan(E[0])) and np.all(np.isfinite(E[1:-1]))
        assert np.max(np.abs(E - vac.frame.evaluate(lam))[1:-1]) < 1e-8
    # either integration order gives the same frame on a flat connection
    g = scalar_grid("nls", nls_plane_wave, n)
    theta = assemble_lax(SU2, SU2.a, 2, lift_scalar("nls", g), accuracy=4)
    E1 = integrate_frame(theta, 0.5).at(0.5)
    E2 = integrate_frame(theta, 0.5, order=(1, 0)).at(0.5)
    assert np.nanmax(np.abs(E1 - E2)) < 1e-5
    # at real lambda the su(2) frame is unitary
    assert np.nanmax(np.abs(E1 @ np.conj(np.swapaxes(E1, -1, -2)) - np.eye(2))) < 1e-6
    # and its log derivative reproduces the connection
    L = log_derivative(E1, theta.spacing[0], 0, accuracy=4)
    assert interior_max(L - theta.evaluate(0, 0.5), 2) < 1e-4


def test_flatness_gate():
    g = scalar_grid("nls", lambda X, T: np.exp(1j * X * T), 41)
    theta = assemble_lax(SU2, SU2.a, 2, lift_scalar("nls", g))
    with pytest.raises(FlatnessGateError):
        integrate_frame(theta, 0.5)


def test_serialization_roundtrip(tmp_path):
    g = scalar_grid("nls", nls_soliton, 9)
    g.meta["note"] = 1 + 2j
    d = json.loads(json.dumps(g.to_dict()))
    back = SolutionGrid.from_dict(d)
    assert np.array_equal(back["q"], g["q"])
    assert back.equation_tag == "nls" and back.meta["note"] == {"re": 1.0, "im": 2.0}
    path = tmp_path / "g.csv"
    g.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "x,t,re_q,im_q"
    assert len(rows) == 82
    x, t, re, im = map(float, rows[5].split(","))
    assert complex(re, im) == g["q"].reshape(-1)[4]
