import numpy as np
import pytest

from _oracles import gram_schmidt_projection, sge_kink
from integrable.algebra import get_context
from integrable.dressing import (DressingError, SimplePoleDressing, dress, frame_reality_residual,
                                 hermitian_projection, multi_dress, projection_defect, tzitzeica_dress,
                                 vacuum_solution)
from integrable.laxflow import pde_residual

SU2 = get_context("sl2-su2")
SO2 = get_context("sl2-su2/so2")
RNG = np.random.default_rng(11)


def axis(n, lo=-1.0, hi=1.0):
    return np.linspace(lo, hi, n)


def test_projection_matches_gram_schmidt():
    for n, r in ((2, 1), (4, 2), (5, 3)):
        V = RNG.normal(size=(n, r)) + 1j * RNG.normal(size=(n, r))
        P = hermitian_projection(V)
        assert np.max(np.abs(P - gram_schmidt_projection(V))) < 1e-12
        assert projection_defect(P) < 1e-12
        assert np.isclose(np.trace(P).real, r)


def test_element_identities():
    g = SimplePoleDressing("g", 0.3 + 0.8j, [1, 0.7 + 0.2j])
    for lam in (0.4, 1.3 - 0.2j, -2.0):
        assert np.allclose(g.loop(lam) @ g.loop(lam, inverse=True), np.eye(2))
    # the element degenerates to pi at its zero
    assert np.allclose(g.loop(g.pole), g.projection)
    assert np.linalg.matrix_rank(g.loop(g.pole)) == 1
    f = SimplePoleDressing("f", 0.5 + 0.3j, [1, 0.3 + 0.1j])
    assert np.allclose(f.loop(1.0), np.eye(2))
    assert np.linalg.matrix_rank(f.loop(f.pole), tol=1e-12) == 1
    h = SimplePoleDressing("h", 0.7j, [1.0, 0, 0.6j, 0.8j])
    P = h.projection
    assert np.max(np.abs(P @ np.conj(P))) < 1e-12
    for el in (g, f, h):
        assert el.reality_residual(get_context("o4-grassmann") if el is h else SU2) < 1e-12


def test_element_validation():
    with pytest.raises(DressingError):
        SimplePoleDressing("g", 0.5, [1, 0])            # real pole
    with pytest.raises(DressingError):
        SimplePoleDressing("f", 0.6 + 0.8j, [1, 0])     # on the unit circle
    with pytest.raises(DressingError):
        SimplePoleDressing("g", 1j, np.eye(2))          # not a proper subspace
    with pytest.raises(DressingError):
        SimplePoleDressing("h", 0.7j, [1.0, 0, 0.5j, 0.5j])   # |W| != |Z|
    with pytest.raises(DressingError):
        SimplePoleDressing("k", 1j, [1, 0])


def test_nls_soliton_amplitude():
    x = axis(801, -8, 8)
    el = SimplePoleDressing("g", 0.3 + 0.8j, [1, 0.7 + 0.2j])
    sol = dress(el, vacuum_solution(SU2, "flow", (x, np.array([0.0, 0.01])), j=2))
    q = sol.fields["q"][:, 0]
    # a sech profile of height 2 Im(alpha) with unit-free mass pi
    assert abs(np.max(np.abs(q)) - 1.6) < 1e-4
    assert abs(np.trapezoid(np.abs(q), x) - np.pi) < 1e-4


def test_sge_soliton_matches_kink():
    x = axis(81, -2, 2)
    el = SimplePoleDressing("g", 0.5j, [1, 0.3])
    sol = dress(el, vacuum_solution(SO2, "minus-one", (x, x)))
    X, T = np.meshgrid(x, x, indexing="ij")
    # pole i s gives the kink of slope 2s, shifted by log|V2/V1|
    ref = sge_kink(X + np.log(0.3), T, k=1.0)
    q = sol.fields["q"]
    gap = min(np.max(np.abs(np.angle(np.exp(1j * (q - sgn * ref))))) for sgn in (1, -1))
    assert gap < 1e-10
    assert pde_residual("sge", sol.grid, accuracy=4) < 1e-4


def test_dressed_frame_is_identity_at_base():
    x = axis(21)
    sol = dress(SimplePoleDressing("g", 0.4 + 0.6j, [1, 0.2j]), vacuum_solution(SU2, "flow", (x, x), j=2))
    b = sol.frame.base_index
    for lam in (0.3, 1.1 + 0.5j):
        assert np.allclose(sol.frame.evaluate(lam)[b], np.eye(2))
    assert frame_reality_residual(SU2, sol.frame, "U") < 1e-10
    assert projection_defect(sol.projection) < 1e-10


def test_repeated_poles_rejected():
    x = axis(9)
    vac = vacuum_solution(SU2, "flow", (x, x), j=2)
    els = [SimplePoleDressing("g", 0.4 + 0.6j, [1, 0.2]), SimplePoleDressing("g", 0.4 + 0.6j, [1, 0.5])]
    with pytest.raises(DressingError):
        multi_dress(els, vac)
    one = dress(els[0], vac)
    with pytest.raises(DressingError):
        dress(els[1], one)


def test_two_soliton_solves_nls():
    x = axis(129)
    els = [SimplePoleDressing("g", 0.25 + 0.6j, [1, 0.7 + 0.2j]),
           SimplePoleDressing("g", -0.35 + 0.45j, [1, -0.4 + 0.9j])]
    sol = multi_dress(els, vacuum_solution(SU2, "flow", (x, x), j=2))
    assert pde_residual("nls", sol.grid, accuracy=4) < 1e-5
    assert len(sol.poles) == 2


def test_tzitzeica_dressing_real_and_solves():
    x = axis(65, -0.5, 0.5)
    ctx = get_context("sl3-tzitzeica")
    sol = tzitzeica_dress(vacuum_solution(ctx, "minus-one", (x, x)), 1.0, [0.44, 0.49, 0.43])
    w = sol.fields["w"]
    assert np.all(np.isfinite(w))
    assert np.max(np.abs(w)) > 1e-2
    assert pde_residual("tzitzeica", sol.grid, accuracy=4) < 1e-5
    assert frame_reality_residual(ctx, sol.frame, "U/U0") < 1e-8


def test_grassmann_dressing_tracks_flats():
    ctx = get_context("o4-grassmann")
    x = axis(65)
    sol = dress(SimplePoleDressing("h", 0.7j, [1.0, 0, 0.6j, 0.8j]), vacuum_solution(ctx, "ntuple", (x, axis(65, -0.7, 0.7))))
    F = sol.fields["F"]
    assert F.shape == (65, 65, 2, 2)
    assert np.max(np.abs(F)) > 1e-2
    assert pde_residual("grassmann", sol.grid, accuracy=4) < 1e-5
