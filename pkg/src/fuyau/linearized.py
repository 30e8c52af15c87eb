"""Linear operators L~, L, L*, a Fourier preconditioner, kernel extraction, and the h-solve."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import KernelError
from .forms import FormField, _ddbar_symbols, ddbar, differentiate, scalar, wedge, wedge_all
from .geometry import HermitianStructure, ProblemData
from .hessian import matmul, to_hermitian, trace

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# preconditioner


def principal_matrix(W: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """B with top_ratio(ddbar u ^ sqrt(-1)W ^ omega^{n-2}) = sum_ij B_ji u_{i jbar}."""
    n = ginv.shape[0]
    gw = matmul(ginv, W)
    return (trace(gw) * ginv - matmul(gw, ginv)) / (n * (n - 1))


@dataclass
class FourierPreconditioner:
    """Approximate inverse of u -> c(x) sum_ij Bbar_ji u_{i jbar}.

    Bbar is the grid mean of the principal coefficient matrix B and
    c = tr B / tr Bbar its pointwise scale.  The zero mode is annihilated when
    ``shift`` is 0 and mapped by -1/shift otherwise.
    """

    grid: object
    shape: tuple[int, ...]
    Bbar: np.ndarray
    scale: np.ndarray | float = 1.0
    symbol: np.ndarray = field(init=False)

    def __post_init__(self):
        S = _ddbar_symbols(self.grid, self.shape)
        n = self.grid.n
        sym = np.zeros(self.shape)
        for i in range(n):
            for j in range(n):
                sym = sym + np.real(self.Bbar[j, i] * S[i][j])
        self.symbol = np.broadcast_to(sym, self.shape).copy()

    @classmethod
    def from_matrix(cls, grid, shape, B: np.ndarray) -> "FourierPreconditioner":
        Bbar = B.reshape(B.shape[:2] + (-1,)).mean(axis=-1)
        Bbar = 0.5 * (Bbar + Bbar.conj().T)
        c = np.real(trace(B)) / np.real(np.trace(Bbar))
        return cls(grid, tuple(shape), Bbar, c)

    @property
    def smallest_nonzero(self) -> float:
        a = np.abs(self.symbol)
        a = a[a > 0]
        return float(a.min()) if a.size else 1.0

    @property
    def largest(self) -> float:
        return float(np.abs(self.symbol).max())

    def solve(self, r: np.ndarray, shift: float = 0.0) -> np.ndarray:
        spec = sfft.fftn(np.broadcast_to(r / self.scale, self.shape))
        denom = self.symbol - shift
        zero = self.symbol == 0
        if shift == 0:
            denom = np.where(zero, 1.0, denom)
            out = spec / denom
            out[zero] = 0.0
        else:
            out = spec / denom
        return sfft.ifftn(out).real


# ---------------------------------------------------------------------------
# operator handles


@dataclass
class LinearOperatorHandle:
    apply: Callable[[np.ndarray], np.ndarray]
    kind: str
    shape: tuple[int, ...]
    precond: FourierPreconditioner
    omega: HermitianStructure
    frozen: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.apply(np.broadcast_to(u, self.shape))

    def with_mass(self, c: float) -> "LinearOperatorHandle":
        """Operator u -> op(u) + c u (sanity device for kernel extraction)."""
        base = self.apply
        return LinearOperatorHandle(lambda u: base(u) + c * u, self.kind + "+mass", self.shape,
                                    self.precond, self.omega, dict(self.frozen, mass=c))


def apply_Ltilde(u: np.ndarray, omega: HermitianStructure) -> np.ndarray:
    """top_ratio(ddbar(u omega) ^ omega^{n-2})."""
    n = omega.grid.n
    top = ddbar(omega.omega * u)
    if n > 2:
        top = wedge(top, omega.power(n - 2))
    return omega.top_ratio(top).real


def ltilde_operator(omega: HermitianStructure, shape=None) -> LinearOperatorHandle:
    shape = tuple(shape or omega.shape)
    pre = FourierPreconditioner.from_matrix(omega.grid, shape, omega.ginv / omega.grid.n)
    return LinearOperatorHandle(lambda u: np.broadcast_to(apply_Ltilde(u, omega), shape),
                                "Ltilde", shape, pre, omega)


@dataclass
class FrozenState:
    """Coefficients of L and L* at (phi_hat, t_hat)."""

    data: ProblemData
    phi: np.ndarray
    t: float
    P: FormField  # e^phi omega + t alpha e^{-phi} rho
    theta: FormField  # ddbar phi
    W: FormField  # omega_tilde
    C: np.ndarray  # contraction matrix of the Theta ^ ddbar u term

    @classmethod
    def build(cls, phi: np.ndarray, data: ProblemData, t: float) -> "FrozenState":
        n, a = data.n, data.alpha
        om = data.omega
        P = om.omega * np.exp(phi)
        if t != 0:
            P = P + data.rho * (t * a * np.exp(-phi))
        theta = ddbar(scalar(data.grid, phi + 0j))
        W = P + theta * (2 * n * a)
        C = 2 * n * a * principal_matrix(to_hermitian(theta), om.ginv)
        return cls(data, phi, t, P, theta, W, C)


def apply_L(u: np.ndarray, fs: FrozenState) -> np.ndarray:
    """top_ratio(ddbar(u P) ^ omega^{n-2} + 2n alpha ddbar(phi) ^ ddbar(u) ^ omega^{n-2})."""
    data = fs.data
    n = data.n
    om = data.omega
    top = ddbar(fs.P * u)
    if n > 2:
        top = wedge(top, om.power(n - 2))
    first = om.top_ratio(top).real
    U = to_hermitian(ddbar(scalar(data.grid, u + 0j)))
    second = np.einsum("ij...,ji...->...", U, fs.C).real
    return first + second


def apply_L_forms(u: np.ndarray, fs: FrozenState) -> np.ndarray:
    """apply_L assembled entirely with wedge products (reference path)."""
    data = fs.data
    n, a = data.n, data.alpha
    om = data.omega
    wn2 = om.power(n - 2)
    uu = ddbar(scalar(data.grid, u + 0j))
    top = wedge(ddbar(fs.P * u), wn2) + wedge_all(fs.theta, uu, wn2) * (2 * n * a)
    return om.top_ratio(top).real


def apply_L_star(v: np.ndarray, fs: FrozenState) -> np.ndarray:
    """top_ratio(ddbar v ^ W ^ omega^{n-2} + sqrt(-1) dv ^ W ^ dbar omega^{n-2}
    - sqrt(-1) dbar v ^ W ^ d omega^{n-2}) with W = omega_tilde."""
    data = fs.data
    n = data.n
    om = data.omega
    vf = scalar(data.grid, np.asarray(v) + 0j)
    wn2 = om.power(n - 2)
    top = wedge_all(ddbar(vf), fs.W, wn2)
    if n > 2:
        top = top + wedge_all(differentiate(vf, "d"), fs.W, differentiate(wn2, "dbar")) * 1j
        top = top - wedge_all(differentiate(vf, "dbar"), fs.W, differentiate(wn2, "d")) * 1j
    return om.top_ratio(top).real


def _precond_for(fs: FrozenState, shape) -> FourierPreconditioner:
    om = fs.data.omega
    B = principal_matrix(to_hermitian(fs.W), om.ginv)
    return FourierPreconditioner.from_matrix(fs.data.grid, shape, B)


def L_operator(phi: np.ndarray, data: ProblemData, t: float, shape=None) -> LinearOperatorHandle:
    shape = tuple(shape or np.broadcast_shapes(data.work_shape, np.shape(phi)))
    fs = FrozenState.build(phi, data, t)
    return LinearOperatorHandle(lambda u: np.broadcast_to(apply_L(u, fs), shape), "L", shape,
                                _precond_for(fs, shape), data.omega, {"phi": phi, "t": t, "state": fs})


def L_star_operator(phi: np.ndarray, data: ProblemData, t: float, shape=None) -> LinearOperatorHandle:
    shape = tuple(shape or np.broadcast_shapes(data.work_shape, np.shape(phi)))
    fs = FrozenState.build(phi, data, t)
    return LinearOperatorHandle(lambda v: np.broadcast_to(apply_L_star(v, fs), shape), "Lstar", shape,
                                _precond_for(fs, shape), data.omega, {"phi": phi, "t": t, "state": fs})


# ---------------------------------------------------------------------------
# Krylov helpers


@dataclass
class KrylovResult:
    x: np.ndarray
    iterations: int
    converged: bool
    rel_residual: float


def gmres_solve(matvec, rhs: np.ndarray, precond=None, rtol: float = 1e-10, restart: int = 60,
                maxiter: int = 20, x0=None) -> KrylovResult:
    """Right-hand side and unknown are arrays of a common shape; flat vectors internally."""
    shape = rhs.shape
    size = rhs.size
    A = LinearOperator((size, size), matvec=lambda x: np.ravel(matvec(x.reshape(shape))), dtype=float)
    M = None
    if precond is not None:
        M = LinearOperator((size, size), matvec=lambda x: np.ravel(precond(x.reshape(shape))), dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    b = np.ravel(rhs).astype(float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return KrylovResult(np.zeros(shape), 0, True, 0.0)
    x, info = gmres(A, b, x0=None if x0 is None else np.ravel(x0), rtol=rtol, atol=0.0,
                    restart=min(restart, size), maxiter=maxiter, M=M, callback=cb,
                    callback_type="pr_norm")
    rel = float(np.linalg.norm(A.matvec(x) - b) / bnorm)
    return KrylovResult(x.reshape(shape), count[0], info == 0 or rel <= rtol * 10, rel)


# ---------------------------------------------------------------------------
# kernel extraction


@dataclass
class KernelResult:
    v: np.ndarray
    defect: float  # sup |op v| with sup |v| = 1
    gap_ratio: float  # estimated |second eigenvalue| / |first|
    positive: bool
    iterations: int


def _weighted_mean(u: np.ndarray, omega: HermitianStructure) -> float:
    return omega.integrate(u) / omega.volume()


def kernel_generator(op: LinearOperatorHandle, seed: int = 0, shift: float | None = None,
                     tol: float = 1e-9, maxit: int = 30, check_gap: bool = True) -> KernelResult:
    """Kernel vector of op by shifted inverse iteration, normalized to sup = 1 and positive sign.

    Raises KernelError when op has no numerically small eigenvalue, or when a
    second small eigenvalue makes the kernel ambiguous.
    """
    shape = op.shape
    scale = max(op.precond.largest, 1.0)
    if op.size == 1:
        v = np.ones(shape)
        d = float(np.abs(op(v)).max())
        if d > tol * scale:
            raise KernelError(f"operator has no kernel: |op(1)| = {d:.3e}")
        return KernelResult(v, d, np.inf, True, 0)
    sigma = shift if shift is not None else 1e-2 * op.precond.smallest_nonzero
    rng = np.random.default_rng(seed)
    v = 1.0 + 0.1 * rng.standard_normal(shape)
    v /= np.abs(v).max()
    its = 0
    history = []
    for its in range(1, maxit + 1):
        res = gmres_solve(lambda x: op(x) - sigma * x, v, lambda r: op.precond.solve(r, sigma), rtol=1e-10,
                          maxiter=10)
        x = res.x / res.x.flat[np.argmax(np.abs(res.x))]
        change = float(np.abs(x - v).max())
        v = x
        history.append(float(np.abs(op(v)).max()))
        if history[-1] <= 1e-3 * tol * scale or change <= 1e-13:
            break
        # stagnation at the round-off floor
        if its >= 3 and history[-1] > 0.5 * history[-2]:
            break
    if v.sum() < 0:
        v = -v
    v = v / np.abs(v).max()
    defect = float(np.abs(op(v)).max())
    if defect > tol * scale:
        raise KernelError(
            f"{op.kind}: no numerical kernel; smallest |op v|/|v| = {defect:.3e} (tolerance {tol * scale:.1e})"
        )
    gap = np.inf
    if check_gap:
        gap = _second_eigen_ratio(op, v, defect, seed)
        if gap < 10.0:
            raise KernelError(f"{op.kind}: kernel dimension ambiguous (second/first eigenvalue ratio {gap:.2e})")
    return KernelResult(v, defect, gap, bool(v.min() > 0), its)


def _second_eigen_ratio(op: LinearOperatorHandle, v0: np.ndarray, defect: float, seed: int) -> float:
    """Estimate |mu_1| of op on the weighted-mean-zero complement by unshifted inverse iteration."""
    om = op.omega
    rng = np.random.default_rng(seed + 1)

    def proj(y):
        return y - _weighted_mean(y, om) * v0 / _weighted_mean(v0, om)

    y = proj(rng.standard_normal(op.shape))
    mu1 = np.inf
    for _ in range(4):
        y /= np.linalg.norm(y)
        res = gmres_solve(lambda x: proj(op(proj(x))), y, lambda r: proj(op.precond.solve(r)), rtol=1e-8,
                          maxiter=10)
        z = proj(res.x)
        mu1 = float(np.linalg.norm(y) / np.linalg.norm(z))
        y = z
    mu0 = defect / max(np.abs(v0).max(), 1e-300)
    return mu1 / max(mu0, 1e-300)


# ---------------------------------------------------------------------------
# the h-equation


@dataclass
class HSolution:
    h: np.ndarray
    v0: np.ndarray
    defect: float


def h_defect(h: np.ndarray, omega: HermitianStructure) -> float:
    """sup |ddbar(e^h omega) ^ omega^{n-2} / omega^n|."""
    return float(np.abs(apply_Ltilde(np.exp(h), omega)).max())


def solve_h_full(omega: HermitianStructure, seed: int = 0, tol: float = 1e-8) -> HSolution:
    op = ltilde_operator(omega)
    kr = kernel_generator(op, seed=seed, tol=tol * 1e-2)
    if not kr.positive:
        raise KernelError(f"kernel generator of L~ changes sign (min {kr.v.min():.3e})")
    h = np.log(kr.v)
    h = h - h.max()
    d = h_defect(h, omega)
    if d > tol:
        raise KernelError(f"h-equation defect {d:.3e} exceeds {tol:g}")
    return HSolution(h, kr.v, d)


def solve_h(omega: HermitianStructure, seed: int = 0, tol: float = 1e-8) -> np.ndarray:
    """h with ddbar(e^h omega) ^ omega^{n-2} = 0, normalized so max h = 0."""
    return solve_h_full(omega, seed, tol).h
