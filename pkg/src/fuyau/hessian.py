"""Pointwise algebra of Hermitian pencils: eigenvalues, sigma_k, cone margins, G tensor.

Matrix fields have shape (n, n, *s) with s broadcastable to the grid, the same
layout produced by :func:`fuyau.forms.to_hermitian`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConeError, GeometryError
from .forms import FormField, to_hermitian, top_ratio, wedge, wedge_all


def _last(m: np.ndarray) -> np.ndarray:
    """(n, n, *s) -> (*s, n, n)"""
    return np.moveaxis(np.moveaxis(m, 0, -1), 0, -1)


def _first(m: np.ndarray) -> np.ndarray:
    """(*s, n, n) -> (n, n, *s)"""
    return np.moveaxis(np.moveaxis(m, -1, 0), -1, 0)


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.conj(np.swapaxes(m, 0, 1)))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("ij...,jk...->ik...", a, b)


def trace(a: np.ndarray) -> np.ndarray:
    return np.einsum("ii...->...", a)


def inverse(g: np.ndarray) -> np.ndarray:
    return _first(np.linalg.inv(_last(g)))


def det(g: np.ndarray) -> np.ndarray:
    return np.linalg.det(_last(g))


@dataclass(frozen=True)
class PencilEigenvalues:
    """Eigenvalues of g^{-1} a per point, shape (n, *s), sorted descending along axis 0."""

    lam: np.ndarray

    @property
    def n(self) -> int:
        return self.lam.shape[0]


def _cholesky(g: np.ndarray) -> np.ndarray:
    gl = _last(hermitian_part(g))
    try:
        return np.linalg.cholesky(gl)
    except np.linalg.LinAlgError:
        ev = np.linalg.eigvalsh(gl)[..., 0]
        idx = np.unravel_index(int(np.argmin(ev)), ev.shape)
        raise GeometryError(
            f"metric is not positive definite: smallest eigenvalue {ev[idx]:.3e} at grid index {idx}",
            worst_index=idx,
        ) from None


def pencil_eigenvalues(a: np.ndarray, g: np.ndarray) -> PencilEigenvalues:
    """Eigenvalues of the pencil (a, g): g^{-1} a, via Cholesky congruence.

    ``a`` and ``g`` are Hermitian matrix fields (n, n, *s).
    """
    Lc = _cholesky(g)
    shape = np.broadcast_shapes(a.shape[2:], g.shape[2:])
    n = g.shape[0]
    Lc = np.broadcast_to(Lc, shape + (n, n))
    Li = np.linalg.inv(Lc)
    al = np.broadcast_to(_last(hermitian_part(a)), shape + (n, n))
    m = Li @ al @ np.conj(np.swapaxes(Li, -1, -2))
    lam = np.linalg.eigvalsh(m)[..., ::-1]
    return PencilEigenvalues(np.moveaxis(lam, -1, 0))


def sigma_k(lam: PencilEigenvalues | np.ndarray, k: int) -> np.ndarray:
    v = lam.lam if isinstance(lam, PencilEigenvalues) else np.asarray(lam)
    if k == 1:
        return v.sum(axis=0)
    if k == 2:
        s1 = v.sum(axis=0)
        return 0.5 * (s1 * s1 - (v * v).sum(axis=0))
    raise ValueError("only sigma_1 and sigma_2 are supported")


def sigma2_matrix(a: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """sigma_2 of the pencil from traces: (tr(B)^2 - tr(B^2))/2 with B = g^{-1} a."""
    b = matmul(ginv, a)
    t1 = trace(b)
    return np.real(0.5 * (t1 * t1 - trace(matmul(b, b))))


def mixed_ratio(a: np.ndarray, b: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """top_ratio(sqrt(-1)a ^ sqrt(-1)b ^ omega^{n-2}) for Hermitian matrices a, b (any n)."""
    n = ginv.shape[0]
    ga, gb = matmul(ginv, a), matmul(ginv, b)
    return (trace(ga) * trace(gb) - trace(matmul(ga, gb))) / (n * (n - 1))


def gamma2_margin(a: FormField, omega) -> tuple[float, float]:
    """Minima over the grid of a ^ omega^{n-1}/omega^n and a^2 ^ omega^{n-2}/omega^n."""
    n = a.grid.n
    r1 = top_ratio(wedge(a, omega.power(n - 1)), omega.detg).real
    r2 = top_ratio(wedge_all(a, a, omega.power(n - 2)), omega.detg).real
    return float(r1.min()), float(r2.min())


def in_gamma2(a: FormField, omega) -> bool:
    m1, m2 = gamma2_margin(a, omega)
    return m1 > 0 and m2 > 0


@dataclass(frozen=True)
class GTensorField:
    """G[i, j] = d sigma_2^{1/2} / d a[i, j] per point, shape (n, n, *s)."""

    G: np.ndarray
    lt94_ratio: float


def g_tensor(a: FormField | np.ndarray, omega) -> GTensorField:
    """Derivative of sigma_2^{1/2} of the pencil with respect to the entries of a.

    For a Hermitian matrix field ``a`` (or a real (1,1)-form) and metric g,
    sigma_2(g^{-1}a) = (tr(g^{-1}a)^2 - tr(g^{-1}a g^{-1}a))/2, hence

        d sigma_2^{1/2} / d a_{ij} = [sigma_1 g^{-1} - g^{-1} a g^{-1}]_{ji} / (2 sigma_2^{1/2}).

    In the orthonormal pencil eigenbasis this is diag(sigma_1 - lambda_i)/(2 sigma_2^{1/2}).
    ``lt94_ratio`` is min over the grid and over i >= 2 of G^{ii}/sum_k G^{kk} in
    that eigenbasis, i.e. (sigma_1 - lambda_2)/((n-1) sigma_1) with eigenvalues
    sorted descending.
    """
    am = to_hermitian(a) if isinstance(a, FormField) else np.asarray(a)
    g = omega.g if hasattr(omega, "g") else np.asarray(omega)
    ginv = inverse(g)
    n = g.shape[0]
    lam = pencil_eigenvalues(am, g)
    s1, s2 = sigma_k(lam, 1), sigma_k(lam, 2)
    if np.min(s1) <= 0 or np.min(s2) <= 0:
        raise ConeError("g_tensor requires a form in the Gamma_2 cone with sigma_2 > 0",
                        margins=(float(np.min(s1)) / n, 2 * float(np.min(s2)) / (n * (n - 1))))
    M = s1 * ginv - matmul(matmul(ginv, am), ginv)
    G = np.swapaxes(M, 0, 1) / (2 * np.sqrt(s2))
    ratio = float(np.min((s1 - lam.lam[1]) / ((n - 1) * s1)))
    return GTensorField(G, ratio)


def lt94_ratio(a: FormField | np.ndarray, omega) -> float:
    return g_tensor(a, omega).lt94_ratio
