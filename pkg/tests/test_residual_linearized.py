import numpy as np
import pytest

import fuyau.residual as residual
from fuyau.checks import adjoint_defect, analytic_probes
from fuyau.errors import KernelError
from fuyau.forms import make_grid
from fuyau.geometry import conformal_metric, flat_metric, make_problem, skt_metric
from fuyau.linearized import (FrozenState, L_operator, L_star_operator, apply_L, apply_L_forms, kernel_generator,
                              ltilde_operator)
from fuyau.residual import (equivalence_factor, expected_kappa, f_field, f_field_direct, f_terms, random_probe,
                            residual_divergence)

RHO2 = [{"i": 1, "j": 1, "coef": 0.2, "k": [1, 0, 0, 0]},
        {"i": 1, "j": 2, "coef": 0.1, "k": [0, 1, -1, 0], "kind": "exp"},
        {"i": 2, "j": 1, "coef": 0.1, "k": [0, -1, 1, 0], "kind": "exp"}]
SKT_XI = [{"j": 2, "coef": 1.0, "k": [1, 0, 0, 0, 0, 0], "kind": "exp"}]
RHO3 = [{"i": 1, "j": 1, "coef": 0.2, "k": [0, 1, 0, 0, 0, 0]},
        {"i": 2, "j": 3, "coef": 0.1, "k": [0, 0, 1, 0, 0, 0], "kind": "exp"},
        {"i": 3, "j": 2, "coef": 0.1, "k": [0, 0, -1, 0, 0, 0], "kind": "exp"}]


@pytest.fixture(scope="module")
def skt16():
    om = skt_metric(make_grid(3, 16), SKT_XI, 0.05)
    return make_problem(-1.0, RHO3, [{"coef": 1.0, "k": [1, 1, 0, 0, 0, 0]}], 0.05, "Ln", om)


@pytest.fixture(scope="module")
def flat16():
    return make_problem(-1.0, RHO2, [{"coef": 1.0, "k": [1, 1, 0, 0]}], 0.05, "Ln", flat_metric(make_grid(2, 16)))


def test_expected_kappa_values():
    assert expected_kappa(2, -1.0) == -8.0
    assert expected_kappa(3, -1.0) == -36.0
    assert expected_kappa(2, 0.5) == 4.0


def test_kappa_on_conformal_metric():
    om = conformal_metric(make_grid(2, 16), [{"coef": 0.2, "k": [1, 0, 0, 0]}])
    data = make_problem(-1.0, [], [], 0.05, "Ln", om)
    rep = equivalence_factor(data, 1.0, random_probe(data, 1, 0.3, 1, 3, 3.0))
    assert rep.kappa == pytest.approx(-8.0, rel=1e-10)
    assert rep.spread <= 1e-6


def test_kappa_on_skt(skt16):
    for t in (0.0, 0.5, 1.0):
        rep = equivalence_factor(skt16, t, random_probe(skt16, 0, 0.3, 1, 3, 3.0))
        assert rep.kappa == pytest.approx(-36.0, rel=1e-10)
        assert rep.spread <= 1e-6


def test_torsion_sign_mutation_breaks_equivalence(skt16, monkeypatch):
    phi = random_probe(skt16, 0, 0.3, 1, 3, 3.0)
    assert equivalence_factor(skt16, 1.0, phi).spread <= 1e-6
    orig = residual.f_terms

    def flipped(phi, data, t):
        terms = orig(phi, data, t)
        terms["torsion"] = -terms["torsion"]
        return terms

    monkeypatch.setattr(residual, "f_terms", flipped)
    assert equivalence_factor(skt16, 1.0, phi).spread > 1e-3


def test_rho_gradient_sign_mutation_breaks_equivalence(flat16, monkeypatch):
    phi = random_probe(flat16, 0, 0.3, 1, 3, 3.0)
    orig = residual.f_terms

    def flipped(phi, data, t):
        terms = orig(phi, data, t)
        terms["rho_gradient"] = -terms["rho_gradient"]
        return terms

    monkeypatch.setattr(residual, "f_terms", flipped)
    assert equivalence_factor(flat16, 1.0, phi).spread > 1e-3


def test_two_assemblies_of_f_agree(skt16):
    phi = random_probe(skt16, 3, 0.3, 1, 3, 3.0)
    for t in (0.0, 0.7, 1.0):
        a, b = f_field(phi, skt16, t), f_field_direct(phi, skt16, t)
        assert np.max(np.abs(a - b)) <= 1e-10 * max(1.0, np.max(np.abs(a)))
    assert set(f_terms(phi, skt16, 1.0)) == set(residual.F_TERMS)


def test_constant_is_exact_solution_without_data():
    data = make_problem(-1.0, [], [], 0.05, "Ln", flat_metric(make_grid(2, 8)))
    phi = np.full((1,) * 4, -np.log(0.05))
    for t in (0.0, 0.5, 1.0):
        assert residual_divergence(phi, data, t).sup == 0.0


# ---------------------------------------------------------------------------
# linearization


def _fd_errors(data, phi, u, t):
    fs = FrozenState.build(phi, data, t)
    Lu = apply_L(u, fs)
    R0 = residual_divergence(phi, data, t).values
    errs = []
    for s in (1e-3, 1e-4):
        fd = (residual_divergence(phi + s * u, data, t).values - R0) / s
        errs.append(float(np.max(np.abs(fd - Lu))) / float(np.max(np.abs(Lu))))
    return errs


@pytest.mark.parametrize("which", ["flat", "skt"])
def test_apply_L_matches_finite_differences_first_order(which, flat16, skt16):
    data = flat16 if which == "flat" else skt16
    phi = random_probe(data, 5, 0.3, 1, 3, 3.0)
    u = random_probe(data, 6, 1.0, 1, 3, 0.0)
    e3, e4 = _fd_errors(data, phi, u, 0.6)
    assert e3 < 1e-2
    assert 7.0 < e3 / e4 < 13.0


def test_apply_L_reference_path(skt16):
    phi = random_probe(skt16, 7, 0.3, 1, 3, 3.0)
    u = random_probe(skt16, 8, 1.0, 1, 3, 0.0)
    fs = FrozenState.build(phi, skt16, 0.4)
    a, b = apply_L(u, fs), apply_L_forms(u, fs)
    assert np.max(np.abs(a - b)) <= 1e-11 * np.max(np.abs(a))


@pytest.mark.parametrize("N", [16, 32])
def test_adjoint_pairing_on_conformal_metric(N):
    om = conformal_metric(make_grid(2, N), [{"coef": 0.2, "k": [1, 0, 0, 0]},
                                            {"coef": 0.1, "k": [0, 1, 1, 0], "kind": "sin"}])
    data = make_problem(-1.0, RHO2, [], 0.05, "Ln", om)
    assert adjoint_defect(data) <= 1e-14


def test_adjoint_pairing_on_skt(skt16):
    assert adjoint_defect(skt16) <= 1e-14


def test_constants_span_kernel_of_L_star(skt16):
    phi = analytic_probes(skt16.grid)[0]
    Ls = L_star_operator(phi, skt16, 0.5)
    assert np.max(np.abs(Ls(np.ones(Ls.shape)))) <= 1e-10


def test_kernel_of_L_is_positive(flat16):
    phi = analytic_probes(flat16.grid)[0]
    kr = kernel_generator(L_operator(phi, flat16, 0.5), seed=0)
    assert kr.positive
    assert kr.gap_ratio > 10


def test_mass_term_removes_kernel():
    op = ltilde_operator(flat_metric(make_grid(2, 8)))
    with pytest.raises(KernelError):
        kernel_generator(op.with_mass(1.0), seed=0)
