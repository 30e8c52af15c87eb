"""Base Hermitian structures, problem data, and manufactured problems.

Metrics are built from a unit reference (g = I plus a perturbation) and then
scaled by a constant so that the volume int omega^n/n! equals 1.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConeError, GeometryError
from .forms import (
    FormField,
    GridSpec,
    ddbar,
    differentiate,
    from_hermitian,
    integrate,
    power,
    scalar,
    to_hermitian,
    top_ratio,
    wedge,
)
from .hessian import det, hermitian_part, inverse

log = logging.getLogger(__name__)

ASTHENO_TOL = 1e-8
KAEHLER_TOL = 1e-12


# ---------------------------------------------------------------------------
# trigonometric-polynomial data


@dataclass(frozen=True)
class TrigTerm:
    """coef * basis(k . x) with basis one of cos, sin, exp(i .)."""

    coef: complex
    k: tuple[int, ...]
    kind: str = "cos"

    def __post_init__(self):
        if self.kind not in ("cos", "sin", "exp"):
            raise ValueError(f"unknown trig kind {self.kind!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrigTerm":
        coef = d.get("coef", 1.0)
        if isinstance(coef, (list, tuple)):
            coef = complex(coef[0], coef[1])
        return cls(coef=coef, k=tuple(int(v) for v in d["k"]), kind=d.get("kind", "cos"))


def trig_field(grid: GridSpec, terms: Sequence[TrigTerm | dict], constant: complex = 0.0) -> np.ndarray:
    """Evaluate a sum of trig terms; axes with zero wavenumber in every term stay singleton."""
    terms = [t if isinstance(t, TrigTerm) else TrigTerm.from_dict(t) for t in terms]
    x = grid.coords()
    out = np.full((1,) * grid.ndim, constant, dtype=complex)
    for t in terms:
        if len(t.k) != grid.ndim:
            raise ValueError(f"wavevector {t.k} has length {len(t.k)}, expected {grid.ndim}")
        phase = np.zeros((1,) * grid.ndim)
        for a, ka in enumerate(t.k):
            if ka:
                phase = phase + ka * x[a]
        if t.kind == "cos":
            val = np.cos(phase)
        elif t.kind == "sin":
            val = np.sin(phase)
        else:
            val = np.exp(1j * phase)
        out = out + t.coef * val
    return out


def _real_if_close(a: np.ndarray, what: str) -> np.ndarray:
    if np.max(np.abs(a.imag), initial=0.0) > 1e-12 * max(1.0, float(np.max(np.abs(a), initial=0.0))):
        raise GeometryError(f"{what} must be real-valued")
    return np.ascontiguousarray(a.real)


# ---------------------------------------------------------------------------
# Hermitian structures


@dataclass(frozen=True, eq=False)
class HermitianStructure:
    """Metric omega = sqrt(-1) g_{ij} dz^i ^ dzbar^j with cached derived data."""

    grid: GridSpec
    g: np.ndarray
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    @functools.cached_property
    def omega(self) -> FormField:
        return from_hermitian(self.grid, self.g, name="omega")

    @functools.cached_property
    def detg(self) -> np.ndarray:
        return det(self.g).real

    @functools.cached_property
    def ginv(self) -> np.ndarray:
        return inverse(self.g)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.g.shape[2:]

    @functools.cached_property
    def _powers(self) -> dict[int, FormField]:
        return {}

    def power(self, k: int) -> FormField:
        if k not in self._powers:
            self._powers[k] = power(self.omega, k)
        return self._powers[k]

    @functools.cached_property
    def d_omega(self) -> FormField:
        return differentiate(self.omega, "d")

    @functools.cached_property
    def dbar_omega(self) -> FormField:
        return differentiate(self.omega, "dbar")

    @functools.cached_property
    def ddbar_omega(self) -> FormField:
        return ddbar(self.omega)

    @functools.cached_property
    def kaehler(self) -> bool:
        return self.d_omega.sup_norm() <= KAEHLER_TOL

    @functools.cached_property
    def astheno_defect(self) -> float:
        """sup-norm of sqrt(-1) d d-bar omega^{n-2}; identically 0 for n = 2."""
        n = self.grid.n
        if n == 2:
            return 0.0
        return ddbar(self.power(n - 2)).sup_norm()

    def volume(self) -> float:
        return integrate(1.0, self.detg, self.grid)

    def top_ratio(self, t: FormField) -> np.ndarray:
        return top_ratio(t, self.detg)

    def integrate(self, u) -> float:
        return integrate(u, self.detg, self.grid)

    def min_eigenvalue(self) -> float:
        from .hessian import _last

        return float(np.linalg.eigvalsh(_last(hermitian_part(self.g)))[..., 0].min())

    def validate(self, require_astheno: bool = True) -> "HermitianStructure":
        lam = self.min_eigenvalue()
        if not lam > 0:
            raise GeometryError(f"metric not positive definite (min eigenvalue {lam:.3e})")
        if require_astheno and self.astheno_defect > ASTHENO_TOL:
            raise GeometryError(
                f"metric is not astheno-Kaehler: defect {self.astheno_defect:.3e} > {ASTHENO_TOL:g}"
            )
        return self

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.grid.n,
            "N": self.grid.N,
            "kaehler": bool(self.kaehler),
            "astheno_defect": float(self.astheno_defect),
            "volume": self.volume(),
            "min_eigenvalue": self.min_eigenvalue(),
            "sup_d_omega": self.d_omega.sup_norm(),
        }


def _identity(grid: GridSpec) -> np.ndarray:
    n = grid.n
    return np.eye(n, dtype=complex).reshape((n, n) + (1,) * grid.ndim)


def normalized_structure(grid: GridSpec, g_unit: np.ndarray, kind: str, params: dict | None = None) -> HermitianStructure:
    """Scale g by a constant so that int omega^n/n! = 1."""
    vol = integrate(1.0, det(g_unit).real, grid)
    c = vol ** (-1.0 / grid.n)
    return HermitianStructure(grid, c * g_unit, kind=kind, params=params or {})


def flat_metric(grid: GridSpec) -> HermitianStructure:
    return normalized_structure(grid, _identity(grid), "flat")


def _xi_form(grid: GridSpec, xi: Sequence[dict]) -> FormField:
    """(0,1)-form sum_j xi_j dzbar^j from trig terms carrying a 1-based component index j."""
    n = grid.n
    comps = [[] for _ in range(n)]
    for term in xi:
        j = int(term["j"]) - 1
        if not 0 <= j < n:
            raise ValueError(f"xi component j={j + 1} out of range 1..{n}")
        comps[j].append(TrigTerm.from_dict(term))
    arrs = [trig_field(grid, c) for c in comps]
    shape = np.broadcast_shapes(*(a.shape for a in arrs))
    return FormField(grid, 0, 1, np.stack([np.broadcast_to(a, shape) for a in arrs]), name="xi")


def skt_perturbation(grid: GridSpec, xi: Sequence[dict]) -> np.ndarray:
    """Hermitian matrix field of d xi + conj(d xi)."""
    dxi = differentiate(_xi_form(grid, xi), "d")
    return hermitian_part(to_hermitian(dxi + dxi.conj()))


def _max_admissible(pert: np.ndarray, tol: float = 1e-10) -> float:
    """Largest eps with I + eps*pert positive definite everywhere, by bisection."""
    from .hessian import _last

    pl = _last(pert)
    n = pl.shape[-1]

    def ok(e):
        return np.linalg.eigvalsh(np.eye(n) + e * pl)[..., 0].min() > 0

    hi = 1.0
    while ok(hi):
        hi *= 2
        if hi > 1e12:
            return math.inf
    lo = 0.0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def skt_metric(grid: GridSpec, xi: Sequence[dict], eps: float) -> HermitianStructure:
    """omega = omega_0 + eps (d xi + conj d xi), pluriclosed by construction, then volume-normalized.

    ``xi`` is a list of trig terms each with a 1-based component index ``j``
    (the term multiplies dzbar^j).
    """
    if grid.n != 3:
        raise GeometryError("skt_metric is defined for n = 3")
    params = {"xi": list(xi), "eps": eps}
    if not xi or eps == 0:
        return normalized_structure(grid, _identity(grid), "flat", params)
    pert = skt_perturbation(grid, xi)
    g_unit = _identity(grid) + eps * pert
    from .hessian import _last

    if np.linalg.eigvalsh(_last(g_unit))[..., 0].min() <= 0:
        emax = _max_admissible(pert)
        raise GeometryError(
            f"eps={eps} violates positivity; largest admissible eps is {emax:.6g}", max_eps=emax
        )
    return normalized_structure(grid, g_unit, "skt", params).validate()


def conformal_metric(grid: GridSpec, psi: Sequence[dict]) -> HermitianStructure:
    """omega = e^psi omega_0 for a real trig polynomial psi (astheno-Kaehler only for n = 2)."""
    p = _real_if_close(trig_field(grid, psi), "psi")
    g_unit = _identity(grid) * np.exp(p)[None, None]
    return normalized_structure(grid, g_unit, "conformal", {"psi": list(psi)}).validate()


def build_metric(grid: GridSpec, spec: dict | None) -> HermitianStructure:
    spec = spec or {"type": "flat"}
    kind = spec.get("type", "flat")
    if kind == "flat":
        return flat_metric(grid)
    if kind == "skt":
        return skt_metric(grid, spec.get("xi", []), float(spec.get("eps", 0.0)))
    if kind == "conformal":
        return conformal_metric(grid, spec.get("psi", []))
    raise GeometryError(f"unknown metric type {kind!r}")


# ---------------------------------------------------------------------------
# problem data


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Data of the equation: slope alpha, real (1,1)-form rho, mean-zero mu, normalization A."""

    omega: HermitianStructure
    alpha: float
    rho: FormField
    mu: np.ndarray
    A: float
    norm_kind: str = "Ln"
    h: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.alpha == 0:
            raise ValueError("alpha must be nonzero")
        if not self.A > 0:
            raise ValueError("A must be positive")
        if self.norm_kind not in ("L1", "Ln"):
            raise ValueError(f"norm_kind must be 'L1' or 'Ln', got {self.norm_kind!r}")

    @property
    def grid(self) -> GridSpec:
        return self.omega.grid

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def norm_p(self) -> int:
        return 1 if self.norm_kind == "L1" else self.n

    @functools.cached_property
    def work_shape(self) -> tuple[int, ...]:
        """Broadcast shape of all data; solutions live in this translation-invariant subspace."""
        shapes = [self.omega.shape, self.rho.point_shape, np.shape(self.mu)]
        if self.h is not None:
            shapes.append(np.shape(self.h))
        return np.broadcast_shapes(*shapes, (1,) * self.grid.ndim)

    @functools.cached_property
    def rho_matrix(self) -> np.ndarray:
        return to_hermitian(self.rho)

    @functools.cached_property
    def ddbar_h(self) -> FormField | None:
        return None if self.h is None else ddbar(scalar(self.grid, self.h + 0j))

    @functools.cached_property
    def h_square_ratio(self) -> np.ndarray:
        """top_ratio(ddbar h ^ ddbar h ^ omega^{n-2}); zero if h is absent."""
        if self.h is None:
            return np.zeros((1,) * self.grid.ndim)
        th = self.ddbar_h
        return self.omega.top_ratio(wedge(wedge(th, th), self.omega.power(self.n - 2))).real

    def with_(self, **kw) -> "ProblemData":
        from dataclasses import replace

        return replace(self, **kw)

    def mu_mean(self) -> float:
        return self.omega.integrate(self.mu)


def lp_norm(u: np.ndarray, p: int, omega: HermitianStructure) -> float:
    """(int |u|^p omega^n/n!)^{1/p}."""
    return omega.integrate(np.abs(u) ** p) ** (1.0 / p)


def normalization_value(phi: np.ndarray, data: ProblemData) -> float:
    return lp_norm(np.exp(-phi), data.norm_p, data.omega)


def rho_from_terms(grid: GridSpec, terms: Sequence[dict]) -> FormField:
    """Real (1,1)-form sqrt(-1) r_{ij} dz^i ^ dzbar^j from trig terms with 1-based indices i, j.

    A non-Hermitian coefficient matrix is replaced by its Hermitian part (with a warning).
    """
    n = grid.n
    entries: dict[tuple[int, int], list] = {}
    for term in terms:
        i, j = int(term["i"]) - 1, int(term["j"]) - 1
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"rho index ({i + 1},{j + 1}) out of range")
        entries.setdefault((i, j), []).append(TrigTerm.from_dict(term))
    arrs = {ij: trig_field(grid, ts) for ij, ts in entries.items()}
    shape = np.broadcast_shapes((1,) * grid.ndim, *(a.shape for a in arrs.values()))
    r = np.zeros((n, n) + shape, dtype=complex)
    for (i, j), a in arrs.items():
        r[i, j] += a
    rh = hermitian_part(r)
    if np.max(np.abs(rh - r), initial=0.0) > 1e-14:
        log.warning("rho coefficient matrix is not Hermitian; using its Hermitian part")
    return from_hermitian(grid, rh, name="rho")


def make_problem(
    alpha: float,
    rho_terms: Sequence[dict] | FormField | None,
    mu_terms: Sequence[dict] | np.ndarray | None,
    A: float,
    norm_kind: str,
    omega: HermitianStructure,
    solve_h: bool = True,
    meta: dict | None = None,
    seed: int = 0,
) -> ProblemData:
    """Assemble problem data; mu is corrected to omega-weighted mean zero and h is solved for."""
    grid = omega.grid
    if isinstance(rho_terms, FormField):
        rho = rho_terms
    else:
        rho = rho_from_terms(grid, rho_terms or [])
    if isinstance(mu_terms, np.ndarray):
        mu = mu_terms
    else:
        mu = _real_if_close(trig_field(grid, mu_terms or []), "mu")
    mean = omega.integrate(mu) / omega.volume()
    if abs(mean) > 0:
        mu = mu - mean
    data = ProblemData(omega, float(alpha), rho, mu, float(A), norm_kind, None, meta or {})
    if solve_h:
        from .linearized import solve_h as _solve_h

        data = data.with_(h=_solve_h(omega, seed=seed))
    return data


def manufactured_problem(
    phi_star: np.ndarray,
    alpha: float,
    rho: FormField | Sequence[dict] | None,
    t: float,
    omega: HermitianStructure,
    norm_kind: str = "Ln",
    h: np.ndarray | None = None,
) -> ProblemData:
    """Back-compute mu so that phi_star solves the t-family exactly; A is read off phi_star."""
    from .hessian import in_gamma2
    from .linearized import solve_h as _solve_h
    from .residual import omega_tilde, residual_divergence

    if not t > 0:
        raise ValueError("manufactured problems need t > 0")
    grid = omega.grid
    if not isinstance(rho, FormField):
        rho = rho_from_terms(grid, rho or [])
    if h is None and t < 1:
        h = _solve_h(omega)
    zero_mu = np.zeros((1,) * grid.ndim)
    base = ProblemData(omega, float(alpha), rho, zero_mu, 1.0, norm_kind, h)
    r0 = residual_divergence(phi_star, base, t).values
    mu = -math.factorial(grid.n) * r0 / t
    A = lp_norm(np.exp(-phi_star), 1 if norm_kind == "L1" else grid.n, omega)
    data = base.with_(mu=mu, A=A, meta={"manufactured": True, "t": t})
    if not in_gamma2(omega_tilde(phi_star, data, t), omega):
        raise ConeError("omega_tilde at phi_star is outside Gamma_2; shrink the amplitude of phi_star "
                        "or raise its additive constant")
    return data
