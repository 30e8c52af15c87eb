import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from fuyau.errors import ConeError, GeometryError
from fuyau.forms import from_hermitian, make_grid
from fuyau.geometry import flat_metric
from fuyau.hessian import (g_tensor, gamma2_margin, in_gamma2, inverse, mixed_ratio, pencil_eigenvalues, sigma2_matrix,
                           sigma_k)


def _hermitian_field(rng, n, npts, positive=False):
    M = rng.standard_normal((n, n, npts)) + 1j * rng.standard_normal((n, n, npts))
    H = 0.5 * (M + np.conj(np.swapaxes(M, 0, 1)))
    if positive:
        H = np.einsum("ikp,jkp->ijp", M, np.conj(M)) + 0.5 * np.eye(n)[:, :, None]
    return H


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.sampled_from([2, 3]))
def test_pencil_eigenvalues_match_generalized_eigh(seed, n):
    rng = np.random.default_rng(seed)
    a = _hermitian_field(rng, n, 5)
    g = _hermitian_field(rng, n, 5, positive=True)
    lam = pencil_eigenvalues(a, g).lam
    for p in range(5):
        ref = scipy.linalg.eigh(a[:, :, p], g[:, :, p], eigvals_only=True)[::-1]
        np.testing.assert_allclose(lam[:, p], ref, rtol=1e-10, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.sampled_from([2, 3]))
def test_sigma2_trace_formula_agrees_with_eigenvalues(seed, n):
    rng = np.random.default_rng(seed)
    a = _hermitian_field(rng, n, 4)
    g = _hermitian_field(rng, n, 4, positive=True)
    s2 = sigma_k(pencil_eigenvalues(a, g), 2)
    np.testing.assert_allclose(sigma2_matrix(a, inverse(g)), s2, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(mixed_ratio(a, a, inverse(g)), 2 * s2 / (n * (n - 1)), rtol=1e-10, atol=1e-12)


def test_sigma_k_of_known_spectrum():
    lam = np.array([3.0, 2.0, -1.0])
    assert sigma_k(lam, 1) == 4.0
    assert sigma_k(lam, 2) == 6.0 - 3.0 - 2.0
    with pytest.raises(ValueError):
        sigma_k(lam, 3)


def test_non_positive_metric_reports_worst_point():
    g = np.zeros((2, 2, 3))
    g[0, 0] = g[1, 1] = 1.0
    g[1, 1, 2] = -0.5
    with pytest.raises(GeometryError) as exc:
        pencil_eigenvalues(g, g)
    assert exc.value.worst_index == (2,)


def test_gamma2_margins_of_diagonal_forms():
    grid = make_grid(2, 8)
    om = flat_metric(grid)
    c = om.g[0, 0].real.item()
    for lams, inside in (((1.0, 1.0), True), ((2.0, -0.5), False), ((3.0, 0.2), True)):
        H = np.diag(lams).reshape(2, 2, 1, 1, 1, 1) * c
        a = from_hermitian(grid, H + 0j)
        m1, m2 = gamma2_margin(a, om)
        assert m1 == pytest.approx(sum(lams) / 2)
        assert m2 == pytest.approx(lams[0] * lams[1])
        assert in_gamma2(a, om) == inside


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_g_tensor_is_derivative_of_sqrt_sigma2(seed):
    rng = np.random.default_rng(seed)
    n = 3
    g = _hermitian_field(rng, n, 1, positive=True)
    a = 4.0 * g + 0.3 * _hermitian_field(rng, n, 1)
    G = g_tensor(a, g).G
    E = _hermitian_field(rng, n, 1)
    h = 1e-6

    def f(x):
        return np.sqrt(sigma2_matrix(x, inverse(g)))

    fd = (f(a + h * E) - f(a - h * E)) / (2 * h)
    pred = np.einsum("ijp,ijp->p", G, E).real
    np.testing.assert_allclose(pred, fd, rtol=1e-6)


def test_eigenvalue_ratio_of_identity_is_one_over_n():
    # equal eigenvalues 1: (sigma_1 - lambda_2)/((n-1) sigma_1) = (n-1)/((n-1) n) = 1/n
    g = np.eye(2)[:, :, None] + 0j
    assert g_tensor(g, g).lt94_ratio == pytest.approx(0.5)
    g3 = np.eye(3)[:, :, None] + 0j
    assert g_tensor(g3, g3).lt94_ratio == pytest.approx(1.0 / 3.0)


def test_g_tensor_outside_cone_raises():
    g = np.eye(2)[:, :, None] + 0j
    a = np.diag([1.0, -2.0])[:, :, None] + 0j
    with pytest.raises(ConeError):
        g_tensor(a, g)
