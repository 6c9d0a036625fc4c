import numpy as np
import pytest

from integrable.algebra import (ContextError, InvolutionSpec, apply_involution, catalog_ids, centralizer_split,
                                check_reality, commutator, eigenspace_project, get_context, grassmann_context,
                                make_context, twisted_sample_set)

RNG = np.random.default_rng(7)


def rand(n, rng=RNG):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def test_commutator_basic():
    A = rand(3)
    assert np.allclose(commutator(A, A), 0)
    a = np.diag([1j, -1j])
    q, r = 0.3 - 0.2j, 1.1 + 0.5j
    B = np.array([[0, q], [r, 0]])
    assert np.allclose(commutator(a, B), [[0, 2j * q], [-2j * r, 0]])
    X, Y, Z = rand(3), rand(3), rand(3)
    jac = commutator(X, commutator(Y, Z)) + commutator(Y, commutator(Z, X)) + commutator(Z, commutator(X, Y))
    assert np.max(np.abs(jac)) < 1e-12
    with pytest.raises(ValueError):
        commutator(rand(2), rand(3))


def test_involution_kinds():
    su = InvolutionSpec("neg-conj-transpose")
    X = np.array([[0.5j, 0.2 + 0.1j], [-0.2 + 0.1j, -0.5j]])
    assert np.allclose(su(X), X)
    assert su.antilinear
    assert not InvolutionSpec("neg-transpose").antilinear
    for spec in (su, InvolutionSpec("conjugate"), InvolutionSpec("neg-transpose")):
        assert spec.check_order(3) < 1e-12
    with pytest.raises(ContextError):
        InvolutionSpec("conj-by-C")
    with pytest.raises(ContextError):
        InvolutionSpec("conj-by-C", C=np.zeros((2, 2)))
    with pytest.raises(ContextError):
        InvolutionSpec("rotate")


def test_tzitzeica_lax_matrix_is_real():
    # the -1-flow Lax matrix of the Tzitzeica context at real lambda is fixed by conjugation
    ctx = get_context("sl3-tzitzeica")
    w, wx, lam = 0.3, -0.7, 1.0
    Ax = np.array([[wx, 0, lam], [lam, -wx, 0], [0, lam, 0]], dtype=complex)
    At = np.array([[0, np.exp(-2 * w), 0], [0, 0, np.exp(w)], [np.exp(w), 0, 0]], dtype=complex) / lam
    assert np.allclose(apply_involution(ctx.tau, Ax), Ax)
    assert np.allclose(apply_involution(ctx.tau, At), At)


def test_tzitzeica_eigenspace_patterns():
    # the sigma of order 6 grades sl(3) by the displayed patterns
    ctx = get_context("sl3-tzitzeica")
    s, s1, s2 = 0.7, 1.3, -0.4
    Y = {
        0: [[s, 0, 0], [0, -s, 0], [0, 0, 0]],
        2: [[0, 0, 0], [0, 0, s], [-s, 0, 0]],
        3: [[s, 0, 0], [0, s, 0], [0, 0, -2 * s]],
        4: [[0, 0, s], [0, 0, 0], [0, -s, 0]],
    }
    for j, M in Y.items():
        M = np.array(M, dtype=complex)
        for i in range(6):
            P = eigenspace_project(ctx.sigma, i, M)
            assert np.allclose(P, M if i == j else 0, atol=1e-12), (j, i)
    # a and b sit in degrees 1 and -1
    assert np.allclose(eigenspace_project(ctx.sigma, 1, ctx.a), ctx.a)
    assert np.allclose(eigenspace_project(ctx.sigma, 5, ctx.b), ctx.b)
    # the two-parameter patterns in degrees 1 and 5
    Y1 = np.array([[0, 0, s1], [s2, 0, 0], [0, s1, 0]], dtype=complex)
    Y5 = np.array([[0, s1, 0], [0, 0, s2], [s2, 0, 0]], dtype=complex)
    for j, M in ((1, Y1), (5, Y5)):
        for i in range(6):
            assert np.allclose(eigenspace_project(ctx.sigma, i, M), M if i == j else 0, atol=1e-12)


def test_eigenspace_resolution_and_fixed_points():
    sig = get_context("sl3-tzitzeica").sigma
    X = rand(3)
    X = X - np.trace(X) / 3 * np.eye(3)
    total = sum(eigenspace_project(sig, j, X) for j in range(sig.order))
    assert np.allclose(total, X)
    F = eigenspace_project(sig, 0, X)
    assert np.allclose(eigenspace_project(sig, 0, F), F)
    assert np.allclose(eigenspace_project(sig, 2, F), 0)


def test_centralizer_split():
    ctx = get_context("sl2-su2")
    c, p = centralizer_split(ctx, ctx.a)
    assert np.allclose(c, ctx.a) and np.allclose(p, 0)
    off = np.array([[0, 1 + 2j], [3 - 1j, 0]])
    c, p = centralizer_split(ctx, off)
    assert np.allclose(c, 0) and np.allclose(p, off)
    for name in ("sl3-tzitzeica", "o4-grassmann", "sln-toda"):
        ctx = get_context(name)
        X = sum(RNG.normal() * B for B in ctx.basis)
        c, p = centralizer_split(ctx, X)
        assert np.allclose(c + p, X)
        assert abs(np.trace(c @ p)) < 1e-10
        c2, p2 = centralizer_split(ctx, c)
        assert np.allclose(c2, c) and np.allclose(p2, 0)
        assert np.allclose(commutator(ctx.a, ctx.ad_a_inverse(p)), p)


def test_catalog_contexts_valid():
    for name in catalog_ids():
        ctx = get_context(name)
        assert np.linalg.norm(commutator(ctx.a, ctx.b)) < 1e-10
        assert ctx.ad_condition < 1e8
        assert len(ctx.basis_cent) + len(ctx.basis_perp) == len(ctx.basis)
        if ctx.sigma is not None:
            assert np.allclose(eigenspace_project(ctx.sigma, 1, ctx.a), ctx.a)
    assert get_context("sln-toda", 4).dim == 4
    assert grassmann_context(3).dim == 6
    with pytest.raises(ContextError):
        get_context("nope")


def test_make_context_rejects_bad_data():
    su = InvolutionSpec("neg-conj-transpose")
    with pytest.raises(ContextError):
        make_context("x", 2, su, a=np.diag([1j, -1j]), b=np.array([[0, 1], [0, 0]]))
    with pytest.raises(ContextError):
        make_context("x", 2, su, a=np.array([[0, 1], [0, 0]]))     # nilpotent, not semisimple
    with pytest.raises(ContextError):
        make_context("x", 2, InvolutionSpec("neg-transpose"), a=np.diag([1j, -1j]))


def test_check_reality():
    ctx = get_context("sl3-tzitzeica")
    w, wx = 0.2, 0.5

    def theta_x(lam):
        return np.array([[wx, 0, lam], [lam, -wx, 0], [0, lam, 0]], dtype=complex)

    samples = [(l, theta_x(l)) for l in (1.0, -1.0)]
    assert check_reality(samples, "U", ctx) == 0.0
    su = get_context("sl2-su2")
    X = np.array([[0.3j, 1 + 1j], [-1 + 1j, -0.3j]])
    assert check_reality([(0.5 + 0.5j, X), (0.5 - 0.5j, X)], "U", su) < 1e-15
    with pytest.raises(ValueError):
        check_reality([(0.5 + 0.5j, X)], "U", su)


def test_twisted_sample_set_closed():
    pts = twisted_sample_set([0.7 + 0.2j], 3)
    assert len(pts) == 6
    for z in pts:
        assert min(abs(np.conj(z) - w) for w in pts) < 1e-12
        assert min(abs(z * np.exp(2j * np.pi / 3) - w) for w in pts) < 1e-12
    inv = twisted_sample_set([0.7 + 0.2j], 1, inversion=True)
    assert len(inv) == 2
