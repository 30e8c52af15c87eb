"""Measured footprints of the a-priori estimates on computed states."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .forms import FormField, differentiate, scalar, to_hermitian, wedge_all
from .geometry import ProblemData, normalization_value
from .hessian import g_tensor, matmul, pencil_eigenvalues, trace
from .residual import grad_norm2, omega_tilde


def c0_sandwich(phi: np.ndarray, A: float) -> float:
    """Smallest M0 with A/M0 <= e^{-phi} <= M0 A."""
    e = np.exp(-np.asarray(phi))
    return float(max(e.max() / A, A / e.min()))


def hessian_norm(phi: np.ndarray, data: ProblemData) -> np.ndarray:
    """|ddbar phi|_g = (g^{i lbar} g^{k jbar} phi_{i jbar} phi_{k lbar})^{1/2}, pointwise."""
    from .forms import ddbar

    Phi = to_hermitian(ddbar(scalar(data.grid, np.asarray(phi) + 0j)))
    gp = matmul(data.omega.ginv, Phi)
    return np.sqrt(np.maximum(trace(matmul(gp, gp)).real, 0.0))


@dataclass(frozen=True)
class C19Result:
    c19_ratio: float
    lambda1_ratio: float
    sup_hess: float
    sup_grad2: float
    lambda1_sup: float


def c2_vs_grad_ratio(phi: np.ndarray, data: ProblemData, t: float = 1.0) -> C19Result:
    """sup|ddbar phi|_g / (1 + sup|d phi|^2_g), plus the variant with sup lambda_1 of omega_tilde."""
    hs = float(np.max(hessian_norm(phi, data)))
    g2 = float(np.max(grad_norm2(phi, data)))
    lam = pencil_eigenvalues(to_hermitian(omega_tilde(phi, data, t)), data.omega.g)
    l1 = float(np.max(lam.lam[0]))
    return C19Result(hs / (1 + g2), hs / (1 + l1), hs, g2, l1)


@dataclass(frozen=True)
class Lemma21Result:
    lhs: float
    rhs: float
    gap: float
    terms: tuple[float, float, float]

    @property
    def relative_gap(self) -> float:
        return self.gap / max(abs(self.lhs) + abs(self.rhs), 1e-300)

    @property
    def passed(self) -> bool:
        return self.gap >= -1e-8 * (abs(self.lhs) + abs(self.rhs))


F_CHOICES = {
    "exp": (lambda s: -np.exp(-2 * s), lambda s: 2 * np.exp(-2 * s)),
    "identity": (lambda s: s, lambda s: np.ones_like(s)),
}


def lemma21_check(phi: np.ndarray, data: ProblemData, f_choice: str = "exp") -> Lemma21Result:
    """Both sides of the weighted L^2 gradient inequality on a t = 1 state.

    LHS = int f'(phi) sqrt(-1) d phi ^ dbar phi ^ (e^phi omega + alpha e^{-phi} rho) ^ omega^{n-2}
    RHS = -2 int f'(phi) sqrt(-1) d phi ^ (e^phi dbar omega - alpha e^{-phi} dbar rho) ^ omega^{n-2}
          -2 int f'(phi) dbar phi ^ (e^phi omega - alpha e^{-phi} rho) ^ sqrt(-1) d omega^{n-2}
          +2 int f(phi) mu omega^n/n!
    Integrals of top forms T are n! * integrate(T/omega^n).
    """
    f, fp = F_CHOICES[f_choice]
    n, a = data.n, data.alpha
    om = data.omega
    grid = data.grid
    ph = scalar(grid, np.asarray(phi) + 0j)
    dphi = differentiate(ph, "d")
    dbphi = differentiate(ph, "dbar")
    wn2 = om.power(n - 2)
    ep, em = np.exp(phi), np.exp(-phi)
    fpp = fp(phi)
    nf = math.factorial(n)

    def integral(top: FormField) -> float:
        return nf * om.integrate(om.top_ratio(top).real)

    lhs = integral(wedge_all(dphi, dbphi, om.omega * ep + data.rho * (a * em), wn2) * (1j * fpp))
    t1 = -2 * integral(wedge_all(dphi, om.dbar_omega * ep - differentiate(data.rho, "dbar") * (a * em), wn2)
                       * (1j * fpp))
    if n > 2:
        t2 = -2 * integral(wedge_all(dbphi, om.omega * ep - data.rho * (a * em), differentiate(wn2, "d"))
                           * (1j * fpp))
    else:
        t2 = 0.0
    t3 = 2 * om.integrate(f(phi) * data.mu)
    rhs = t1 + t2 + t3
    return Lemma21Result(lhs, rhs, rhs - lhs, (t1, t2, t3))


@dataclass(frozen=True)
class MonitorReport:
    t: float
    M0: float
    sup_grad2: float
    lambda1_sup: float
    c19_ratio: float
    lambda1_ratio: float
    m1: float
    m2: float
    lemma21_gap: float
    lt94_ratio: float
    norm_residual: float
    sup_exp_neg_phi: float
    inf_exp_neg_phi: float
    astheno_defect: float
    residual_sup: float

    def as_dict(self) -> dict:
        return asdict(self)


def full_report(state, data: ProblemData) -> MonitorReport:
    phi, t = state.phi, state.t
    e = np.exp(-phi)
    ratio = c2_vs_grad_ratio(phi, data, t)
    wt = omega_tilde(phi, data, t)
    try:
        lt = g_tensor(wt, data.omega).lt94_ratio
    except Exception:
        lt = float("nan")
    gap = lemma21_check(phi, data, "exp").gap if t == 1.0 else float("nan")
    return MonitorReport(
        t=t,
        M0=c0_sandwich(phi, data.A),
        sup_grad2=ratio.sup_grad2,
        lambda1_sup=ratio.lambda1_sup,
        c19_ratio=ratio.c19_ratio,
        lambda1_ratio=ratio.lambda1_ratio,
        m1=state.cone_margins[0],
        m2=state.cone_margins[1],
        lemma21_gap=gap,
        lt94_ratio=lt,
        norm_residual=abs(normalization_value(phi, data) - data.A),
        sup_exp_neg_phi=float(e.max()),
        inf_exp_neg_phi=float(e.min()),
        astheno_defect=float(data.omega.astheno_defect),
        residual_sup=state.residual_sup,
    )
