"""Randomized invariants, 1000 cases each."""
import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from integrable.algebra import apply_involution, commutator, eigenspace_project, get_context
from integrable.birkhoff import LaurentLoop
from integrable.dressing import hermitian_projection, projection_defect
from integrable.elliptic import eh_context, project_p1, project_p2

CASES = settings(max_examples=1000, deadline=None)
TWISTED = {"sl3-tzitzeica": get_context("sl3-tzitzeica"), "sl3-toda": get_context("sln-toda"),
           "sl4-toda": get_context("sln-toda", 4), "sl3-eh": eh_context(), "o4-grassmann": get_context("o4-grassmann"),
           "sl3-kw": get_context("sln-kw", 3)}
SU2 = get_context("sl2-su2")


def _commutes(ctx) -> bool:
    X = np.random.default_rng(0).normal(size=(ctx.dim, ctx.dim)) * (1 + 0.3j)
    gap = apply_involution(ctx.tau, ctx.sigma(X)) - ctx.sigma(apply_involution(ctx.tau, X))
    return float(np.max(np.abs(gap))) < 1e-12


# tau reverses the grading only when it commutes with sigma; the Toda and
# Tzitzeica pairs satisfy tau sigma = sigma^-1 tau instead
COMMUTING = sorted(name for name, ctx in TWISTED.items() if _commutes(ctx))

reals = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def complex_matrix(n):
    return arrays(np.float64, (2, n, n), elements=reals).map(lambda a: a[0] + 1j * a[1])


@st.composite
def twisted_case(draw, names=None):
    name = draw(st.sampled_from(names or sorted(TWISTED)))
    ctx = TWISTED[name]
    k = ctx.sigma.order
    X = draw(complex_matrix(ctx.dim))
    Y = draw(complex_matrix(ctx.dim))
    return ctx, k, X, Y, draw(st.integers(0, k - 1)), draw(st.integers(0, k - 1))


def scale(X):
    return max(1.0, float(np.max(np.abs(X))))


@CASES
@given(twisted_case())
def test_eigenspace_resolution_of_identity(case):
    ctx, k, X, _, j, _ = case
    parts = [eigenspace_project(ctx.sigma, i, X) for i in range(k)]
    assert np.max(np.abs(sum(parts) - X)) <= 1e-12 * scale(X) * k
    Pj = parts[j]
    assert np.max(np.abs(eigenspace_project(ctx.sigma, j, Pj) - Pj)) <= 1e-12 * scale(X)
    # distinct eigenspaces are independent
    assert np.max(np.abs(eigenspace_project(ctx.sigma, (j + 1) % k, Pj))) <= 1e-12 * scale(X)


@CASES
@given(twisted_case())
def test_bracket_grading(case):
    ctx, k, X, Y, j, r = case
    Xj = eigenspace_project(ctx.sigma, j, X)
    Yr = eigenspace_project(ctx.sigma, r, Y)
    Z = commutator(Xj, Yr)
    assert np.max(np.abs(eigenspace_project(ctx.sigma, (j + r) % k, Z) - Z)) <= 1e-12 * scale(X) * scale(Y)


@CASES
@given(twisted_case(COMMUTING))
def test_tau_reverses_grading(case):
    ctx, k, X, _, j, _ = case
    Xj = eigenspace_project(ctx.sigma, j, X)
    T = apply_involution(ctx.tau, Xj)
    assert np.max(np.abs(eigenspace_project(ctx.sigma, (-j) % k, T) - T)) <= 1e-12 * scale(X)


def test_commuting_pairs_are_sampled():
    assert len(COMMUTING) >= 3


@CASES
@given(st.integers(2, 5).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n - 1))), st.data())
def test_hermitian_projection_idempotent(shape, data):
    n, r = shape
    V = data.draw(arrays(np.float64, (2, n, r), elements=reals)).astype(float)
    V = V[0] + 1j * V[1]
    sv = np.linalg.svd(V, compute_uv=False)
    # nearly dependent or vanishing columns: the span is not well defined
    assume(sv[-1] > 1e-3 * sv[0] and sv[-1] > 1e-6)
    P = hermitian_projection(V)
    assert projection_defect(P) <= 1e-10
    assert abs(np.trace(P).real - r) <= 1e-10


@st.composite
def loops(draw):
    lo = draw(st.integers(-4, 0))
    hi = draw(st.integers(0, 4))
    c = draw(arrays(np.float64, (2, hi - lo + 1, 2, 2), elements=reals))
    return LaurentLoop(c[0] + 1j * c[1], lo)


@CASES
@given(loops())
def test_splitting_identity(xi):
    tau = SU2.tau
    p1, p2 = project_p1(xi, tau), project_p2(xi, tau)
    tol = 1e-12 * scale(xi.coeffs) * (xi.hi - xi.lo + 1)
    assert np.max(np.abs((p1 + p2 - xi).coeffs)) <= tol
    again = project_p1(p1, tau)
    assert np.max(np.abs((again - p1).coeffs)) <= tol
    assert p2.is_plus(tol)
