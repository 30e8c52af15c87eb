import csv
import math

import numpy as np
import pytest

from fuyau.continuation import (ContinuationOptions, NewtonOptions, initial_solution, newton_solve_at_t, renormalize,
                                renormalize_constant, run_continuation)
from fuyau.errors import ConeError, ContinuationError, NewtonError
from fuyau.forms import make_grid
from fuyau.geometry import (conformal_metric, flat_metric, make_problem, manufactured_problem, normalization_value,
                            skt_metric)
from fuyau.monitors import c0_sandwich, c2_vs_grad_ratio, full_report, hessian_norm, lemma21_check
from fuyau.residual import residual_divergence

A = 0.05


@pytest.fixture(scope="module")
def trivial():
    return make_problem(-1.0, [], [], A, "L1", flat_metric(make_grid(2, 8)))


@pytest.fixture(scope="module")
def manufactured16():
    grid = make_grid(2, 16)
    phi_star = 3.0 + 0.1 * np.cos(grid.coord(0))
    return phi_star, manufactured_problem(phi_star, -1.0, [{"i": 1, "j": 1, "coef": 0.05, "k": [0, 1, 0, 0]}], 1.0,
                                          flat_metric(grid))


def test_renormalize_constant_examples(trivial):
    om = trivial.omega
    phi = np.full((1,) * 4, -math.log(2 * A))  # ||e^{-phi}||_1 = 2A
    assert renormalize_constant(phi, A, 1, om) == pytest.approx(math.log(2), rel=1e-14)
    assert renormalize_constant(np.full((1,) * 4, -math.log(A)), A, 1, om) == pytest.approx(0.0, abs=1e-14)
    ln = trivial.with_(norm_kind="Ln")
    np.testing.assert_allclose(renormalize(np.zeros((1,) * 4), ln), -math.log(A), rtol=1e-14)


def test_initial_solution_flat(trivial):
    phi0 = initial_solution(trivial)
    np.testing.assert_allclose(phi0, -math.log(0.05), rtol=1e-14)
    assert -math.log(0.05) == pytest.approx(2.995732273553991)
    assert normalization_value(phi0, trivial) == pytest.approx(A, rel=1e-14)


def test_initial_solution_skt_solves_t0():
    om = skt_metric(make_grid(3, 16), [{"j": 2, "coef": 1.0, "k": [1, 0, 0, 0, 0, 0], "kind": "exp"}], 0.05)
    data = make_problem(-1.0, [{"i": 1, "j": 1, "coef": 0.1, "k": [0, 1, 0, 0, 0, 0]}], [], A, "Ln", om)
    phi0 = initial_solution(data)
    assert residual_divergence(phi0, data, 0.0).sup <= 1e-6
    assert normalization_value(phi0, data) == pytest.approx(A, rel=1e-12)


def test_initial_solution_conformal_solves_t0():
    om = conformal_metric(make_grid(2, 16), [{"coef": 0.1, "k": [1, 0, 0, 0]}])
    data = make_problem(-1.0, [], [], A, "Ln", om)
    phi0 = initial_solution(data)
    assert residual_divergence(phi0, data, 0.0).sup <= 1e-8


def test_initial_solution_rejects_huge_A():
    om = conformal_metric(make_grid(2, 16), [{"coef": 0.5, "k": [1, 0, 0, 0]}])
    data = make_problem(-1.0, [], [], 1e4, "Ln", om)
    with pytest.raises(ConeError) as exc:
        initial_solution(data)
    assert exc.value.margins is not None


def test_newton_from_exact_solution_is_a_fixed_point(manufactured16):
    phi_star, data = manufactured16
    st = newton_solve_at_t(phi_star, 1.0, data)
    assert st.newton_iters <= 1
    assert np.max(np.abs(st.phi - phi_star)) <= 1e-10


def test_newton_recovers_manufactured_solution(manufactured16):
    phi_star, data = manufactured16
    st = newton_solve_at_t(phi_star + 0.01 * np.cos(data.grid.coord(0)), 1.0, data)
    assert np.max(np.abs(st.phi - phi_star)) <= 1e-8
    assert st.newton_iters <= 8
    assert st.cone_margins[0] > 0 and st.cone_margins[1] > 0
    assert st.norm_residual <= 1e-12 * data.A


@pytest.mark.parametrize("opts, kind", [
    (NewtonOptions(maxiter=1), "maxiter"),
    (NewtonOptions(krylov_restart=2, krylov_maxiter=1), "krylov"),
])
def test_newton_failure_kinds(manufactured16, opts, kind):
    phi_star, data = manufactured16
    with pytest.raises(NewtonError) as exc:
        newton_solve_at_t(phi_star + 0.01 * np.cos(data.grid.coord(0)), 1.0, data, opts)
    assert exc.value.kind == kind


def test_newton_rejects_start_outside_cone(manufactured16):
    phi_star, data = manufactured16
    with pytest.raises(ConeError):
        newton_solve_at_t(phi_star + 5.0 * np.cos(data.grid.coord(0)), 1.0, data)


def test_trivial_continuation_stays_constant(trivial, tmp_path):
    tr = run_continuation(trivial)
    assert tr.final.t == 1.0
    for st in tr.states:
        assert st.newton_iters <= 2
        np.testing.assert_allclose(st.phi, -math.log(A), rtol=1e-14)
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == len(tr.states)
    assert tuple(rows[0]) == tr.CSV_FIELDS


def test_backward_continuation_returns_to_t0(trivial):
    tr = run_continuation(trivial, ContinuationOptions(direction="backward"),
                          phi_start=np.full((1,) * 4, -math.log(A)))
    assert tr.final.t == 0.0


def test_underflow_reports_last_good_state():
    data = make_problem(-1.0, [{"i": 1, "j": 1, "coef": 0.2, "k": [1, 0, 0, 0]}], [{"coef": 30.0, "k": [1, 1, 0, 0]}],
                        10.0, "Ln", flat_metric(make_grid(2, 8)))
    with pytest.raises(ContinuationError) as exc:
        run_continuation(data, ContinuationOptions(dt_min=0.02))
    assert exc.value.last_t == 0.0
    assert exc.value.trace.failures


# ---------------------------------------------------------------------------
# monitors


def test_c0_sandwich_examples():
    assert c0_sandwich(np.full(3, -math.log(A)), A) == pytest.approx(1.0)
    phi = -np.log(np.array([A / 2, A, 2 * A]))
    assert c0_sandwich(phi, A) == pytest.approx(2.0)


def test_hessian_gradient_ratio_of_constant_is_zero(trivial):
    assert c2_vs_grad_ratio(np.full((1,) * 4, 3.0), trivial).c19_ratio == 0.0


@pytest.mark.parametrize("eps", [1e-3, 1e-2, 0.1])
def test_hessian_gradient_ratio_of_cosine(eps):
    # phi = eps cos x1 on the normalized flat metric g = c I: |ddbar phi|_g = eps |cos x1| / (4c),
    # |d phi|^2_g = eps^2 sin^2 x1 / (4c)
    grid = make_grid(2, 16)
    data = make_problem(-1.0, [], [], A, "Ln", flat_metric(grid))
    c = 1 / (8 * math.pi**2)
    res = c2_vs_grad_ratio(eps * np.cos(grid.coord(0)), data)
    expected = (eps / (4 * c)) / (1 + eps**2 / (4 * c))
    assert res.c19_ratio == pytest.approx(expected, rel=1e-12)
    assert np.max(hessian_norm(eps * np.cos(grid.coord(0)), data)) == pytest.approx(eps / (4 * c), rel=1e-12)


def test_gradient_inequality_vanishes_on_constant_solution(trivial):
    for f in ("exp", "identity"):
        res = lemma21_check(np.full((1,) * 4, -math.log(A)), trivial, f)
        assert res.lhs == 0.0 and res.rhs == 0.0 and res.gap == 0.0
        assert res.passed


def test_gradient_inequality_holds_on_manufactured_solution(manufactured16):
    phi_star, data = manufactured16
    for f in ("exp", "identity"):
        res = lemma21_check(phi_star, data, f)
        assert res.lhs > 0
        assert res.passed


def test_full_report_on_constant_solution(trivial):
    st = run_continuation(trivial).final
    rep = full_report(st, trivial)
    assert rep.M0 == pytest.approx(1.0)
    assert rep.sup_grad2 == 0.0 and rep.c19_ratio == 0.0 and rep.lemma21_gap == 0.0
    # omega_tilde = e^phi omega, so every pencil eigenvalue is e^phi = 1/A
    assert rep.lambda1_sup == pytest.approx(1 / A)


def test_full_report_schema_on_skt():
    om = skt_metric(make_grid(3, 8), [{"j": 2, "coef": 1.0, "k": [1, 0, 0, 0, 0, 0], "kind": "exp"}], 0.05)
    data = make_problem(-1.0, [], [], A, "Ln", om)
    st = run_continuation(data).final
    rep = full_report(st, data).as_dict()
    assert "astheno_defect" in rep and rep["astheno_defect"] <= 1e-10
    assert all(np.isfinite(v) for v in rep.values())
    assert rep["M0"] >= 1.0
