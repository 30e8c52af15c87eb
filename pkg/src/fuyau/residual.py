"""Residuals of the t-family in divergence form and in sigma_2 (Hessian) form.

All residuals are divided by omega^n.  At parameter t the data are
substituted as rho -> t rho and mu -> t mu, and the auxiliary term
n alpha (t-1) ddbar h ^ ddbar h ^ omega^{n-2} is included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .forms import FormField, ddbar, differentiate, scalar, to_hermitian, wedge, wedge_all
from .geometry import ProblemData
from .hessian import matmul, pencil_eigenvalues, sigma_k, trace


@dataclass(frozen=True)
class ResidualField:
    values: np.ndarray
    form: str
    t: float

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def _phi_form(phi: np.ndarray, data: ProblemData) -> FormField:
    return scalar(data.grid, np.asarray(phi) + 0j)


def omega_tilde(phi: np.ndarray, data: ProblemData, t: float, theta: FormField | None = None) -> FormField:
    """e^phi omega + t alpha e^{-phi} rho + 2n alpha ddbar phi."""
    n, a = data.n, data.alpha
    om = data.omega.omega
    if theta is None:
        theta = ddbar(_phi_form(phi, data))
    out = om * np.exp(phi) + theta * (2 * n * a)
    if t != 0:
        out = out + data.rho * (t * a * np.exp(-phi))
    return out


def omega_hat(phi: np.ndarray, data: ProblemData, t: float) -> FormField:
    """e^{-phi} omega_tilde."""
    return omega_tilde(phi, data, t) * np.exp(-phi)


def residual_divergence(phi: np.ndarray, data: ProblemData, t: float) -> ResidualField:
    """[ddbar(e^phi omega - t alpha e^{-phi} rho) ^ omega^{n-2} + n alpha Theta^2 ^ omega^{n-2}
    + n alpha (t-1) Theta_h^2 ^ omega^{n-2}] / omega^n + t mu / n!, with Theta = ddbar phi."""
    n, a = data.n, data.alpha
    om = data.omega
    X = om.omega * np.exp(phi)
    if t != 0:
        X = X - data.rho * (t * a * np.exp(-phi))
    theta = ddbar(_phi_form(phi, data))
    top = ddbar(X) + wedge(theta, theta) * (n * a)
    if n > 2:
        top = wedge(top, om.power(n - 2))
    vals = om.top_ratio(top).real
    if t != 1:
        vals = vals + n * a * (t - 1) * data.h_square_ratio
    if t != 0:
        vals = vals + t * data.mu / math.factorial(n)
    return ResidualField(vals, "divergence", t)


def _effective_mu(data: ProblemData, t: float) -> np.ndarray:
    """t mu plus the h-term of the family rewritten as a multiple of omega^n/n!."""
    n = data.n
    mu = t * data.mu
    if t != 1:
        mu = mu + math.factorial(n) * n * data.alpha * (t - 1) * data.h_square_ratio
    return mu


F_TERMS = ("rho_trace", "rho_square", "mu", "rho_gradient", "torsion")


def f_terms(phi: np.ndarray, data: ProblemData, t: float) -> dict[str, np.ndarray]:
    """Named contributions to f (each already divided by omega^n)."""
    n, a = data.n, data.alpha
    om = data.omega
    grid = data.grid
    wn2 = om.power(n - 2)
    P = om.top_ratio
    rho = data.rho * t
    zero = np.zeros((1,) * grid.ndim)
    terms = {}
    if t != 0:
        terms["rho_trace"] = 2 * a * P(wedge(rho, om.power(n - 1))).real
        terms["rho_square"] = a * a * np.exp(-2 * phi) * P(wedge_all(rho, rho, wn2)).real
    else:
        terms["rho_trace"] = zero
        terms["rho_square"] = zero
    terms["mu"] = -4 * n * a * _effective_mu(data, t) / math.factorial(n)

    ph = _phi_form(phi, data)
    dphi = differentiate(ph, "d")
    dbphi = differentiate(ph, "dbar")
    if t != 0:
        drho = differentiate(rho, "d")
        dbrho = differentiate(rho, "dbar")
        inner = (
            wedge_all(dphi, dbphi, rho)
            - wedge(dphi, dbrho)
            - wedge(drho, dbphi)
        ) * 1j + ddbar(rho)
        terms["rho_gradient"] = 4 * n * a * a * np.exp(-phi) * P(wedge(inner, wn2)).real
    else:
        terms["rho_gradient"] = zero
    if om.kaehler:
        terms["torsion"] = zero
    else:
        inner = (wedge(om.d_omega, dbphi) + wedge(dphi, om.dbar_omega)) * 1j + om.ddbar_omega
        terms["torsion"] = -4 * n * a * np.exp(phi) * P(wedge(inner, wn2)).real
    return terms


def f_field(phi: np.ndarray, data: ProblemData, t: float) -> np.ndarray:
    terms = f_terms(phi, data, t)
    return sum(terms[k] for k in F_TERMS)


def f_field_direct(phi: np.ndarray, data: ProblemData, t: float) -> np.ndarray:
    """Second assembly of f: build the full (n,n)-form first, divide by omega^n once."""
    n, a = data.n, data.alpha
    om = data.omega
    rho = data.rho * t
    ph = _phi_form(phi, data)
    dphi = differentiate(ph, "d")
    dbphi = differentiate(ph, "dbar")
    top = (
        wedge(rho, om.power(n - 1)) * (2 * a)
        + wedge_all(rho, rho, om.power(n - 2)) * (a * a * np.exp(-2 * phi))
        + om.power(n) * (-4 * n * a * _effective_mu(data, t) / math.factorial(n))
    )
    grad = (
        (wedge_all(dphi, dbphi, rho) - wedge(dphi, differentiate(rho, "dbar"))
         - wedge(differentiate(rho, "d"), dbphi)) * 1j
        + ddbar(rho)
    ) * (4 * n * a * a * np.exp(-phi))
    tors = (
        (wedge(om.d_omega, dbphi) + wedge(dphi, om.dbar_omega)) * 1j + om.ddbar_omega
    ) * (-4 * n * a * np.exp(phi))
    top = top + wedge(grad + tors, om.power(n - 2))
    return om.top_ratio(top).real


def grad_norm2(phi: np.ndarray, data: ProblemData) -> np.ndarray:
    """|d phi|^2_g = g^{i jbar} phi_i phi_jbar."""
    ph = _phi_form(phi, data)
    d = differentiate(ph, "d").coeffs
    db = differentiate(ph, "dbar").coeffs
    M = d[:, None] * db[None, :]
    return trace(matmul(data.omega.ginv, M)).real


def residual_hessian(phi: np.ndarray, data: ProblemData, t: float) -> ResidualField:
    """sigma_2(omega_tilde) - n(n-1)/2 (e^{2 phi} - 4 alpha e^phi |d phi|^2) - n(n-1)/2 f."""
    n, a = data.n, data.alpha
    wt = omega_tilde(phi, data, t)
    s2 = sigma_k(pencil_eigenvalues(to_hermitian(wt), data.omega.g), 2)
    c = n * (n - 1) / 2
    vals = s2 - c * (np.exp(2 * phi) - 4 * a * np.exp(phi) * grad_norm2(phi, data)) - c * f_field(phi, data, t)
    return ResidualField(vals, "hessian", t)


def expected_kappa(n: int, alpha: float) -> float:
    return 2 * n * n * (n - 1) * alpha


@dataclass(frozen=True)
class EquivalenceReport:
    kappa: float
    spread: float
    expected: float
    worst_index: tuple
    n_points: int

    @property
    def passed(self) -> bool:
        return self.spread <= 1e-8 and abs(self.kappa - self.expected) <= 1e-8 * abs(self.expected)


def random_probe(data: ProblemData, seed: int = 0, amplitude: float = 0.3, kmax: int = 2,
                 nterms: int = 6, offset: float = 0.0) -> np.ndarray:
    """Band-limited real probe field with the data's dependence pattern (plus axis 0)."""
    grid = data.grid
    rng = np.random.default_rng(seed)
    shape = list(data.work_shape)
    shape[0] = grid.N
    active = [ax for ax, s in enumerate(shape) if s > 1]
    x = grid.coords()
    out = np.full(tuple(shape), offset, dtype=float)
    for _ in range(nterms):
        phase = rng.uniform(0, 2 * np.pi)
        arg = phase
        for ax in active:
            arg = arg + int(rng.integers(-kmax, kmax + 1)) * x[ax]
        out = out + amplitude * rng.uniform(0.5, 1.0) * np.cos(arg)
    return out


def equivalence_factor(data: ProblemData, t: float, phi: np.ndarray | None = None, seed: int = 0,
                       rel_floor: float = 1e-3) -> EquivalenceReport:
    """kappa with residual_hessian = kappa * residual_divergence pointwise.

    kappa is the least-squares ratio; ``spread`` is the largest relative
    deviation of the pointwise ratio from kappa over points where the
    divergence residual exceeds ``rel_floor`` times its maximum.
    """
    if phi is None:
        phi = random_probe(data, seed)
    D = residual_divergence(phi, data, t).values
    H = residual_hessian(phi, data, t).values
    D, H = np.broadcast_arrays(D, H)
    kappa = float(np.sum(D * H) / np.sum(D * D))
    mask = np.abs(D) >= rel_floor * np.max(np.abs(D))
    ratio = np.where(mask, H / np.where(mask, D, 1.0), kappa)
    dev = np.abs(ratio - kappa) / abs(kappa)
    worst = np.unravel_index(int(np.argmax(dev)), dev.shape)
    return EquivalenceReport(kappa, float(dev[worst]), expected_kappa(data.n, data.alpha),
                             tuple(int(i) for i in worst), int(mask.sum()))
