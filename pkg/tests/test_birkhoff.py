import numpy as np
import pytest

from _oracles import exp_series_coeffs
from integrable.algebra import get_context
from integrable.birkhoff import (AliasingError, BigCellError, LaurentLoop, birkhoff_factor, fourier_coeffs,
                                 goursat_solve, random_near_identity, refactor_defect, sample)

A = np.array([[0.3, 0.5j], [-0.2, 0.1 - 0.4j]])


def test_fourier_coeffs_of_exponential():
    loop = fourier_coeffs(sample(lambda l: _expm(A * l), 64), 16)
    ref = exp_series_coeffs(A, 16)
    for p in range(17):
        assert np.max(np.abs(loop.coeff(p) - ref[p])) < 1e-14
        if p:
            assert np.max(np.abs(loop.coeff(-p))) < 1e-14


def _expm(M):
    w, P = np.linalg.eig(M)
    return P @ np.diag(np.exp(w)) @ np.linalg.inv(P)


def test_aliasing_detected():
    with pytest.raises(AliasingError):
        fourier_coeffs(sample(lambda l: np.eye(2) + l ** 20 * A, 64), 16)
    with pytest.raises(ValueError):
        fourier_coeffs(sample(lambda l: np.eye(2), 16), 16)


def test_laurent_algebra():
    X = LaurentLoop.from_terms({-1: A, 1: A.T})
    Y = LaurentLoop.from_terms({0: np.eye(2), 2: A})
    lam = 0.7 - 0.3j
    assert np.allclose((X @ Y).evaluate(lam), X.evaluate(lam) @ Y.evaluate(lam))
    assert np.allclose((X + Y).evaluate(lam), X.evaluate(lam) + Y.evaluate(lam))
    assert np.allclose(X.bracket(Y).evaluate(lam), X.evaluate(lam) @ Y.evaluate(lam) - Y.evaluate(lam) @ X.evaluate(lam))
    assert Y.is_plus() and not X.is_plus()


def test_trivial_factorizations():
    plus = LaurentLoop.from_terms({0: np.eye(2) + 0.1 * A, 1: 0.2 * A})
    rep = birkhoff_factor(plus)
    assert np.max(np.abs(rep.g_plus.coeffs - plus.coeffs)) < 1e-12
    assert rep.g_minus.is_minus(1e-12) and np.max(np.abs(rep.g_minus.coeffs[:-1])) < 1e-12
    minus = LaurentLoop.from_terms({-2: 0.3 * A, -1: A, 0: np.eye(2)})
    rep = birkhoff_factor(minus)
    assert np.max(np.abs(rep.g_plus.coeffs - np.eye(2))) < 1e-12
    assert np.max(np.abs(rep.g_minus.window(-2, 0).coeffs - minus.coeffs)) < 1e-12


def test_random_loops_factor():
    rng = np.random.default_rng(5)
    for _ in range(10):
        g = random_near_identity(rng, 3)
        rep = birkhoff_factor(g)
        assert rep.reconstruction_residual < 1e-8
        assert rep.g_minus.is_minus(1e-8) and rep.g_plus.is_plus()
        assert refactor_defect(rep) < 1e-10


@pytest.mark.parametrize("terms", [
    {1: np.array([[1, 0], [0, 0]]), -1: np.array([[0, 0], [0, 1]])},
    {1: np.array([[0, 1], [0, 0]]), -1: np.array([[0, 0], [-1, 0]])},
])
def test_big_cell_failures_are_loud(terms):
    with pytest.raises(BigCellError):
        birkhoff_factor(LaurentLoop.from_terms(terms))


def test_batched_factor_masks_failures():
    good = np.eye(2) + 0.1 * A
    coeffs = np.zeros((3, 2, 2, 2), dtype=complex)
    coeffs[1, 0] = good
    coeffs[2, 1] = [[1, 0], [0, 0]]
    coeffs[0, 1] = [[0, 0], [0, 1]]
    rep = birkhoff_factor(LaurentLoop(coeffs, -1), mask=True)
    assert rep.failures == [(1,)]
    assert np.all(np.isnan(rep.g_plus.coeffs[:, 1]))
    assert np.all(np.isfinite(rep.g_plus.coeffs[:, 0]))


def test_goursat_vacuum_and_validation():
    ctx = get_context("sl2-su2/so2")
    x = np.linspace(0, 0.5, 9)
    res = goursat_solve(ctx, lambda s: np.zeros((2, 2)), lambda s: ctx.b, x, x)
    assert np.max(np.abs(res.u)) < 1e-12
    assert np.max(np.abs(res.v - ctx.b)) < 1e-12
    with pytest.raises(ValueError):
        goursat_solve(ctx, lambda s: ctx.a, lambda s: ctx.b, x, x)          # xi in the centralizer
    with pytest.raises(ValueError):
        goursat_solve(ctx, lambda s: np.zeros((2, 2)), lambda s: 2 * ctx.b, x, x)
    with pytest.raises(ValueError):
        goursat_solve(ctx, lambda s: np.zeros((2, 2)), lambda s: ctx.b, x + 0.1, x)
