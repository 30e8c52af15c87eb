"""YAML run configuration with strict validation (unknown keys are rejected)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError

TOP_KEYS = {
    "scenario", "experiment", "n", "N", "alpha", "A", "norm", "metric", "rho", "mu", "seed",
    "tolerances", "continuation", "out", "trace_rho_nonneg", "A_list", "backward", "perturbation",
}
METRIC_KEYS = {"type", "xi", "eps", "psi"}
TOL_KEYS = {"newton", "krylov", "newton_maxiter"}
CONT_KEYS = {"dt0", "dt_min", "dt_max"}
TERM_KEYS = {"coef", "k", "kind"}
EXPERIMENTS = {"solve", "continuation", "uniqueness", "monotonicity", "check"}


@dataclass
class RunConfig:
    scenario: str = "default"
    experiment: str = "solve"
    n: int = 2
    N: int = 16
    alpha: float = -1.0
    A: float = 0.05
    norm: str = "Ln"
    metric: dict = field(default_factory=lambda: {"type": "flat"})
    rho: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    seed: int = 0
    tol_newton: float = 1e-9
    tol_krylov: float = 1e-10
    newton_maxiter: int = 50
    dt0: float = 0.25
    dt_min: float = 1e-4
    dt_max: float = 0.25
    out: str | None = None
    trace_rho_nonneg: bool = False
    A_list: list = field(default_factory=list)
    backward: bool = False
    perturbation: float = 0.05

    @property
    def effective_norm(self) -> str:
        return "L1" if self.trace_rho_nonneg else self.norm


def _check_terms(terms: Any, what: str, ndim: int, index_keys: set[str]) -> list:
    if terms is None:
        return []
    if not isinstance(terms, list):
        raise ConfigError(f"{what} must be a list of terms")
    out = []
    for i, t in enumerate(terms):
        if not isinstance(t, dict):
            raise ConfigError(f"{what}[{i}] must be a mapping")
        extra = set(t) - TERM_KEYS - index_keys
        if extra:
            raise ConfigError(f"{what}[{i}]: unknown keys {sorted(extra)}")
        missing = index_keys - set(t)
        if missing or "k" not in t:
            raise ConfigError(f"{what}[{i}]: missing keys {sorted(missing | ({'k'} - set(t)))}")
        k = t["k"]
        if not (isinstance(k, list) and len(k) == ndim and all(isinstance(v, int) for v in k)):
            raise ConfigError(f"{what}[{i}]: k must be a list of {ndim} integers")
        if t.get("kind", "cos") not in ("cos", "sin", "exp"):
            raise ConfigError(f"{what}[{i}]: kind must be cos, sin or exp")
        coef = t.get("coef", 1.0)
        if isinstance(coef, list):
            if len(coef) != 2 or not all(isinstance(v, (int, float)) for v in coef):
                raise ConfigError(f"{what}[{i}]: complex coef must be [re, im]")
        elif not isinstance(coef, (int, float)):
            raise ConfigError(f"{what}[{i}]: coef must be a number or [re, im]")
        out.append(dict(t))
    return out


def _number(d: dict, key: str, default, kind=float):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number, got {v!r}")
    return kind(v)


def validate(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    extra = set(raw) - TOP_KEYS
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}")
    cfg = RunConfig()
    cfg.scenario = str(raw.get("scenario", cfg.scenario))
    cfg.experiment = str(raw.get("experiment", cfg.experiment))
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {sorted(EXPERIMENTS)}")
    cfg.n = _number(raw, "n", cfg.n, int)
    cfg.N = _number(raw, "N", cfg.N, int)
    if cfg.n not in (2, 3):
        raise ConfigError("n must be 2 or 3")
    if cfg.N < 8 or cfg.N % 2:
        raise ConfigError("N must be even and >= 8")
    cfg.alpha = _number(raw, "alpha", cfg.alpha)
    if cfg.alpha == 0:
        raise ConfigError("alpha must be nonzero")
    cfg.A = _number(raw, "A", cfg.A)
    if cfg.A <= 0:
        raise ConfigError("A must be positive")
    cfg.norm = str(raw.get("norm", cfg.norm))
    if cfg.norm not in ("L1", "Ln"):
        raise ConfigError("norm must be 'L1' or 'Ln'")
    ndim = 2 * cfg.n
    metric = raw.get("metric", {"type": "flat"}) or {"type": "flat"}
    if not isinstance(metric, dict):
        raise ConfigError("metric must be a mapping")
    extra = set(metric) - METRIC_KEYS
    if extra:
        raise ConfigError(f"metric: unknown keys {sorted(extra)}")
    mtype = metric.get("type", "flat")
    if mtype not in ("flat", "skt", "conformal"):
        raise ConfigError("metric.type must be flat, skt or conformal")
    if mtype == "skt" and cfg.n != 3:
        raise ConfigError("skt metrics require n = 3")
    cfg.metric = {
        "type": mtype,
        "xi": _check_terms(metric.get("xi"), "metric.xi", ndim, {"j"}),
        "eps": _number(metric, "eps", 0.0),
        "psi": _check_terms(metric.get("psi"), "metric.psi", ndim, set()),
    }
    cfg.rho = _check_terms(raw.get("rho"), "rho", ndim, {"i", "j"})
    cfg.mu = _check_terms(raw.get("mu"), "mu", ndim, set())
    cfg.seed = _number(raw, "seed", cfg.seed, int)
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    tol = raw.get("tolerances", {}) or {}
    if not isinstance(tol, dict) or set(tol) - TOL_KEYS:
        raise ConfigError(f"tolerances: allowed keys are {sorted(TOL_KEYS)}")
    cfg.tol_newton = _number(tol, "newton", cfg.tol_newton)
    cfg.tol_krylov = _number(tol, "krylov", cfg.tol_krylov)
    cfg.newton_maxiter = _number(tol, "newton_maxiter", cfg.newton_maxiter, int)
    cont = raw.get("continuation", {}) or {}
    if not isinstance(cont, dict) or set(cont) - CONT_KEYS:
        raise ConfigError(f"continuation: allowed keys are {sorted(CONT_KEYS)}")
    cfg.dt0 = _number(cont, "dt0", cfg.dt0)
    cfg.dt_min = _number(cont, "dt_min", cfg.dt_min)
    cfg.dt_max = _number(cont, "dt_max", cfg.dt_max)
    cfg.out = raw.get("out")
    cfg.trace_rho_nonneg = bool(raw.get("trace_rho_nonneg", False))
    A_list = raw.get("A_list", []) or []
    if not isinstance(A_list, list) or not all(isinstance(a, (int, float)) and a > 0 for a in A_list):
        raise ConfigError("A_list must be a list of positive numbers")
    cfg.A_list = [float(a) for a in A_list]
    cfg.backward = bool(raw.get("backward", False))
    cfg.perturbation = _number(raw, "perturbation", cfg.perturbation)
    return cfg


def load_config(path) -> RunConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return validate(raw or {})


def check_trace_rho(grid, omega, rho_terms) -> float:
    """Assert tr_omega rho >= 0 pointwise; returns its minimum."""
    from .geometry import rho_from_terms
    from .hessian import matmul, trace
    from .forms import to_hermitian

    tr = trace(matmul(omega.ginv, to_hermitian(rho_from_terms(grid, rho_terms)))).real
    m = float(np.min(tr))
    if m < -1e-12 * max(1.0, float(np.max(np.abs(tr)))):
        raise ConfigError(f"trace_rho_nonneg is set but tr_omega rho reaches {m:.3e}")
    return m


def build_problem(cfg: RunConfig, A: float | None = None, N: int | None = None):
    """Grid, metric and problem data for a validated config."""
    from .forms import make_grid
    from .geometry import build_metric, make_problem

    grid = make_grid(cfg.n, N or cfg.N)
    omega = build_metric(grid, cfg.metric)
    if cfg.trace_rho_nonneg:
        check_trace_rho(grid, omega, cfg.rho)
    return make_problem(cfg.alpha, cfg.rho, cfg.mu, A if A is not None else cfg.A, cfg.effective_norm, omega,
                        meta={"scenario": cfg.scenario, "seed": cfg.seed}, seed=cfg.seed)
