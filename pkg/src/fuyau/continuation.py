"""Damped Newton-Krylov solves at fixed t and the adaptive continuation path in t."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConeError, ContinuationError, NewtonError
from .geometry import ProblemData, lp_norm, normalization_value
from .hessian import gamma2_margin
from .linearized import FrozenState, _precond_for, apply_L, gmres_solve
from .residual import omega_tilde, residual_divergence

log = logging.getLogger(__name__)


@dataclass
class NewtonOptions:
    tol: float = 1e-9
    maxiter: int = 50
    krylov_rtol: float = 1e-10
    krylov_restart: int = 60
    krylov_maxiter: int = 10
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 20


@dataclass
class SolverState:
    phi: np.ndarray
    t: float
    newton_iters: int
    krylov_iters: int
    residual_sup: float
    cone_margins: tuple[float, float]
    norm_residual: float
    history: list[float] = field(default_factory=list)
    quad_constant: float = float("nan")
    steps: list[float] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "t": self.t,
            "newton_iters": self.newton_iters,
            "krylov_iters": self.krylov_iters,
            "residual_sup": self.residual_sup,
            "m1": self.cone_margins[0],
            "m2": self.cone_margins[1],
            "norm_residual": self.norm_residual,
            "quad_constant": self.quad_constant,
            "history": list(self.history),
        }


def _full(phi, data: ProblemData) -> np.ndarray:
    shape = np.broadcast_shapes(data.work_shape, np.shape(phi))
    return np.array(np.broadcast_to(phi, shape), dtype=float)


def renormalize(phi: np.ndarray, data: ProblemData) -> np.ndarray:
    """Add the constant restoring ||e^{-phi}|| = A in the data's norm."""
    c = math.log(normalization_value(phi, data) / data.A)
    return phi + c


def renormalize_constant(phi: np.ndarray, A: float, p: int, omega) -> float:
    return math.log(lp_norm(np.exp(-phi), p, omega) / A)


def cone_margins(phi: np.ndarray, data: ProblemData, t: float) -> tuple[float, float]:
    return gamma2_margin(omega_tilde(phi, data, t), data.omega)


def initial_solution(data: ProblemData) -> np.ndarray:
    """phi_0 = h + log ||e^{-h}|| - log A, solving the t = 0 problem."""
    h = np.zeros((1,) * data.grid.ndim) if data.h is None else data.h
    h = _full(h, data)
    phi0 = h + math.log(normalization_value(h, data)) - math.log(data.A)
    m = cone_margins(phi0, data, 0.0)
    if not (m[0] > 0 and m[1] > 0):
        raise ConeError(f"initial solution outside Gamma_2 (margins {m[0]:.3e}, {m[1]:.3e}); A too large",
                        margins=m)
    return phi0


def _projected(R: np.ndarray, data: ProblemData) -> np.ndarray:
    om = data.omega
    return R - om.integrate(R) / om.volume()


def newton_solve_at_t(phi_init: np.ndarray, t: float, data: ProblemData,
                      opts: NewtonOptions | None = None) -> SolverState:
    """Damped Newton for the t-problem under the normalization constraint.

    The correction u solves Pi L u = -Pi R on {int u e^{-p phi} omega^n = 0},
    Pi the projection onto omega-weighted mean zero and p the norm exponent.
    """
    opts = opts or NewtonOptions()
    om = data.omega
    p = data.norm_p
    phi = renormalize(_full(phi_init, data), data)
    m = cone_margins(phi, data, t)
    if not (m[0] > 0 and m[1] > 0):
        raise ConeError(f"initial guess outside Gamma_2 at t={t:g} (margins {m[0]:.3e}, {m[1]:.3e})", margins=m)
    detg = np.broadcast_to(om.detg, phi.shape)
    R = residual_divergence(phi, data, t).values
    history = [float(np.max(np.abs(R)))]
    steps: list[float] = []
    krylov = 0
    it = 0
    while history[-1] > opts.tol:
        if it >= opts.maxiter:
            raise NewtonError(f"no convergence in {opts.maxiter} Newton steps (residual {history[-1]:.3e})",
                              "maxiter")
        it += 1
        r = np.broadcast_to(_projected(R, data), phi.shape)
        fs = FrozenState.build(phi, data, t)
        pre = _precond_for(fs, phi.shape)
        wt = np.exp(-p * phi) * detg
        wsum = float(np.sum(wt))

        def pdom(w):
            return w - float(np.sum(w * wt)) / wsum

        def pran(y):
            return y - om.integrate(y) / om.volume()

        res = gmres_solve(lambda w: pran(np.broadcast_to(apply_L(pdom(w), fs), phi.shape)), -r,
                          lambda y: pran(pre.solve(y)), rtol=opts.krylov_rtol,
                          restart=opts.krylov_restart, maxiter=opts.krylov_maxiter)
        krylov += res.iterations
        if not res.converged:
            raise NewtonError(f"Krylov solve did not converge (relative residual {res.rel_residual:.2e})", "krylov")
        u = pdom(res.x)
        f0 = float(np.mean(r * r))
        s = 1.0
        accepted = False
        any_in_cone = False
        for _ in range(opts.max_backtracks + 1):
            cand = renormalize(phi + s * u, data)
            mc = cone_margins(cand, data, t)
            if mc[0] > 0 and mc[1] > 0:
                any_in_cone = True
                Rc = residual_divergence(cand, data, t).values
                rc = _projected(Rc, data)
                if float(np.mean(rc * rc)) <= (1 - 2 * opts.armijo * s) * f0:
                    accepted = True
                    break
            s *= opts.backtrack
        if not accepted:
            kind = "stagnation" if any_in_cone else "cone"
            raise NewtonError(f"line search failed at t={t:g} ({kind}); residual {history[-1]:.3e}", kind)
        phi, R = cand, Rc
        steps.append(s)
        history.append(float(np.max(np.abs(R))))
        log.debug("t=%g newton %d: residual %.3e step %.3g krylov %d", t, it, history[-1], s, res.iterations)
    quad = [history[k + 1] / history[k] ** 2 for k in range(len(history) - 1) if history[k] <= 1e-3]
    return SolverState(
        phi=phi,
        t=t,
        newton_iters=it,
        krylov_iters=krylov,
        residual_sup=history[-1],
        cone_margins=cone_margins(phi, data, t),
        norm_residual=abs(normalization_value(phi, data) - data.A),
        history=history,
        quad_constant=max(quad) if quad else float("nan"),
        steps=steps,
    )


# ---------------------------------------------------------------------------
# continuation


@dataclass
class ContinuationOptions:
    dt0: float = 0.25
    dt_min: float = 1e-4
    dt_max: float = 0.25
    grow: float = 1.5
    easy_iters: int = 3
    direction: str = "forward"
    newton: NewtonOptions = field(default_factory=NewtonOptions)
    monitor: bool = True


@dataclass
class ContinuationTrace:
    states: list[SolverState] = field(default_factory=list)
    reports: list = field(default_factory=list)
    dts: list[float] = field(default_factory=list)
    failures: list[tuple[float, str]] = field(default_factory=list)

    @property
    def final(self) -> SolverState:
        return self.states[-1]

    CSV_FIELDS = ("t", "dt", "newton_iters", "krylov_iters", "residual_sup", "m1", "m2",
                  "sup_exp_neg_phi", "inf_exp_neg_phi", "sup_grad2", "lambda1_ratio", "M0", "c19_ratio")

    def rows(self) -> list[dict]:
        out = []
        for st, dt, rep in zip(self.states, self.dts, self.reports or [None] * len(self.states)):
            row = {"t": st.t, "dt": dt, "newton_iters": st.newton_iters, "krylov_iters": st.krylov_iters,
                   "residual_sup": st.residual_sup, "m1": st.cone_margins[0], "m2": st.cone_margins[1]}
            if rep is not None:
                row.update({"sup_exp_neg_phi": rep.sup_exp_neg_phi, "inf_exp_neg_phi": rep.inf_exp_neg_phi,
                            "sup_grad2": rep.sup_grad2, "lambda1_ratio": rep.lambda1_ratio, "M0": rep.M0,
                            "c19_ratio": rep.c19_ratio})
            out.append(row)
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.CSV_FIELDS, extrasaction="ignore")
            w.writeheader()
            for row in self.rows():
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def _secant(states: list[SolverState], t_new: float, data: ProblemData) -> np.ndarray:
    a, b = states[-2], states[-1]
    guess = b.phi + (b.phi - a.phi) * (t_new - b.t) / (b.t - a.t)
    guess = renormalize(guess, data)
    m = cone_margins(guess, data, t_new)
    return guess if (m[0] > 0 and m[1] > 0) else b.phi


def run_continuation(data: ProblemData, opts: ContinuationOptions | None = None,
                     phi_start: np.ndarray | None = None) -> ContinuationTrace:
    """Follow the t-family from 0 to 1 (or from 1 to 0 with direction='backward').

    Forward runs start from the explicit t = 0 solution; backward runs need
    ``phi_start`` (a solution at t = 1, or a guess for it).
    """
    from .monitors import full_report

    opts = opts or ContinuationOptions()
    forward = opts.direction == "forward"
    t0, t1 = (0.0, 1.0) if forward else (1.0, 0.0)
    sgn = 1.0 if forward else -1.0
    if phi_start is None:
        if not forward:
            raise ValueError("backward continuation needs phi_start")
        phi_start = initial_solution(data)
    trace = ContinuationTrace()
    st = newton_solve_at_t(phi_start, t0, data, opts.newton)
    trace.states.append(st)
    trace.dts.append(0.0)
    if opts.monitor:
        trace.reports.append(full_report(st, data))
    dt = opts.dt0
    easy = 0
    t = t0
    while sgn * (t1 - t) > 1e-15:
        dt = min(dt, abs(t1 - t))
        t_new = t1 if abs(t1 - t) - dt <= 1e-15 else t + sgn * dt
        guess = _secant(trace.states, t_new, data) if len(trace.states) >= 2 else trace.states[-1].phi
        try:
            st = newton_solve_at_t(guess, t_new, data, opts.newton)
        except (NewtonError, ConeError) as exc:
            trace.failures.append((t_new, str(exc)))
            dt *= 0.5
            easy = 0
            log.info("step to t=%g failed (%s); dt -> %g", t_new, exc, dt)
            if dt < opts.dt_min:
                raise ContinuationError(
                    f"step size underflow below {opts.dt_min:g} at t={t:g}; last good state kept", trace
                ) from exc
            continue
        trace.states.append(st)
        trace.dts.append(abs(t_new - t))
        if opts.monitor:
            trace.reports.append(full_report(st, data))
        t = t_new
        log.info("accepted t=%g (newton %d, residual %.2e)", t, st.newton_iters, st.residual_sup)
        easy = easy + 1 if st.newton_iters <= opts.easy_iters else 0
        if easy >= 2:
            dt = min(dt * opts.grow, opts.dt_max)
            easy = 0
    return trace


def solve(data: ProblemData, opts: ContinuationOptions | None = None) -> ContinuationTrace:
    return run_continuation(data, opts)
