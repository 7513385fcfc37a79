import math

import numpy as np
import pytest

import hlab


def test_rho_identities():
    lam = [3.0, 1.5, -0.5, 0.25]
    sig = hlab.sigma_all(lam)
    assert hlab.rho_k(lam, 1) == pytest.approx(sig[-1], rel=1e-12)
    assert hlab.rho_k(lam, 4) == pytest.approx(sig[1], rel=1e-12)


def test_jet_of_monge_ampere():
    op = hlab.Operator.log_rho_k(2, 1)
    f, grad, hess = hlab.jet(op, [2.0, 0.5])
    assert f == pytest.approx(math.log(1.0))
    assert np.allclose(grad, [0.5, 2.0])
    assert np.allclose(hess, np.diag([-0.25, -4.0]))
    assert hlab.value(op, [1.0, -1.0]) is None


def test_outside_domain_raises():
    with pytest.raises(hlab.Error):
        hlab.jet(hlab.Operator.log_rho_k(3, 2), [-3.0, -2.0, -1.0])


@pytest.mark.parametrize("family,n,k,expected", [("log_rho_k", 3, 2, 2), ("sigma_k_root", 3, 2, 2)])
def test_rank(family, n, k, expected):
    op = getattr(hlab.Operator, family)(n, k)
    r = hlab.estimate_rank(hlab.LevelSet(op, 0.0 if family == "log_rho_k" else 1.0))
    assert r["rank"] == expected == hlab.analytic_rank(op)


def test_cone_membership():
    ls = hlab.LevelSet(hlab.Operator.log_rho_k(2, 1), 0.0)
    assert hlab.membership_cplus(ls, [2.0, 2.0])["verdict"] == "in"
    assert hlab.membership_ctilde(ls, [-1.0, 5.0])["verdict"] == "out"
    w = hlab.dichotomy_witness(ls, [2.0, 2.0])
    assert w["violations"] == 0


def test_cns_has_no_violations():
    r = hlab.cns_check(hlab.Operator.sigma_k_root(3, 2), trials=500)
    assert r["violations"] == 0


def test_manufactured_solve():
    cfg = {
        "dimension": 2,
        "resolution": 8,
        "operator": {"family": "logrho", "k": 1},
        "psi": {"kind": "manufactured", "u_star": {"modes": [{"amp": 0.02, "trig": "cos", "k": [1, 0, 0, 0]}]}},
    }
    r = hlab.solve(cfg)
    assert r["u"].shape == (8**4,)
    assert r["error_inf"] < 1e-8
    assert abs(r["b"]) < 1e-8


def test_bad_config_raises():
    with pytest.raises(hlab.Error):
        hlab.solve({"dimension": 2, "operator": {"family": "nope"}})


def test_gauduchon_subsolution():
    r = hlab.gauduchon({"resolution": 8}, a5_samples=32)
    assert r["residual_inf"] < 1e-8
    assert not r["subsolution"]["any_out"]
