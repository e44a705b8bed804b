import warnings

import numpy as np
import pytest

from netlpm.direct_pem import (MisoStructure, _residual_and_jacobian, _signals,
                               pem_fit, prediction_error)
from netlpm.errors import DidNotConverge
from netlpm.lti_core import RationalTF, filter
from netlpm.network import PredictorSet
from netlpm.parfit import ModelOrders
from netlpm.simulator import ExcitationSpec, TimeSeriesDataset, simulate

PS = PredictorSet(3, 1, (1, 2, 4))
ORD = ModelOrders(2, 2, 1)


def true_theta(net, st):
    parts = [o.theta_of(net.modules[(3, k)]) for k, o in zip(st.predictors, st.module_orders)]
    h = net.noise_filters[(3, 3)]
    return np.concatenate(parts + [h.num[1:], h.den[1:]])    # H = C / D


@pytest.fixture(scope="module")
def structure():
    from netlpm import paper_network
    return MisoStructure.from_network(paper_network(), PS, ORD)


def test_structure_sizes(structure):
    assert structure.predictors == (1, 2, 4)
    assert structure.noise_orders == (3, 3)
    assert structure.n_theta == 4 + 2 + 8 + 6


def test_prediction_error_zero_at_truth(net, structure):
    ds = simulate(net, ExcitationSpec(), 500, 0, process_noise=False)
    eps = prediction_error(true_theta(net, structure), ds, structure)
    assert np.max(np.abs(eps)) < 1e-10


def test_prediction_error_recovers_innovation(net, structure):
    # with process noise, eps(theta_true) equals e3 apart from the r-to-w start-up
    ds = simulate(net, ExcitationSpec(), 2000, 1)
    eps = prediction_error(true_theta(net, structure), ds, structure)
    h = net.noise_filters[(3, 3)]
    e3 = filter(RationalTF(h.den, h.num), ds.v[2])
    np.testing.assert_allclose(eps, e3, atol=1e-10)


def test_noise_free_fit_from_truth(net, structure):
    ds = simulate(net, ExcitationSpec(), 500, 0, process_noise=False)
    th = true_theta(net, structure)
    res = pem_fit(ds, structure, theta0=th)
    assert res.cost < 1e-20
    for k in structure.predictors:
        o = res.module(k).orders
        np.testing.assert_allclose(res.module(k).theta, o.theta_of(net.modules[(3, k)]),
                                   atol=1e-6)


def test_fir_output_error_exact():
    rng = np.random.default_rng(0)
    N = 400
    w1 = rng.standard_normal(N)
    fir = RationalTF([0, 0.5, -0.3, 0.2], [1])
    w = np.vstack([w1, filter(fir, w1)])
    ds = TimeSeriesDataset(w=w, w_meas=w, r=np.zeros_like(w), v=np.zeros_like(w))
    st = MisoStructure(2, (1,), (ModelOrders(3, 0, 1),), (0, 0))
    res = pem_fit(ds, st)
    np.testing.assert_allclose(res.module(1).theta, [0.5, -0.3, 0.2], atol=1e-10)


def test_analytic_jacobian_matches_differences(net, structure):
    ds = simulate(net, ExcitationSpec(), 500, 3)
    y, u = _signals(ds, structure)
    th = true_theta(net, structure) * (1 + 0.02 * np.random.default_rng(1).standard_normal(20))
    r, J = _residual_and_jacobian(th, y, u, structure)
    h = 1e-6
    for k in range(th.size):
        e = np.zeros_like(th)
        e[k] = h
        fd = (_residual_and_jacobian(th + e, y, u, structure)[0]
              - _residual_and_jacobian(th - e, y, u, structure)[0]) / (2 * h)
        assert np.max(np.abs(fd - J[:, k])) <= 1e-5 * max(1.0, np.max(np.abs(J[:, k])))


def test_stochastic_fit_and_whiteness(net, structure):
    white, finite = 0, 0
    seeds = range(20)
    for s in seeds:
        ds = simulate(net, ExcitationSpec(), 500, s)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DidNotConverge)
            res = pem_fit(ds, structure)
        est = res.module(1)
        finite += np.all(np.isfinite(est.theta)) and res.cost > 0
        if res.converged:
            y, u = _signals(ds, structure)
            r, J = _residual_and_jacobian(res.theta, y, u, structure)
            grad = 2 * J.T @ r / r.size
            assert np.linalg.norm(grad) <= 1e-8 * (1 + res.cost)
        e = prediction_error(res.theta, ds, structure)[structure.skip:]
        e = e - e.mean()
        ac = np.array([e[l:] @ e[:-l] for l in range(1, 21)]) / (e @ e)
        white += np.all(np.abs(ac) < 3 / np.sqrt(e.size))
    assert finite == len(seeds)
    assert white >= 0.9 * len(seeds)


def test_too_short_record(net, structure):
    ds = simulate(net, ExcitationSpec(), 150, 0)
    with pytest.raises(ValueError):
        pem_fit(ds, structure)


def test_result_schema(net, structure):
    ds = simulate(net, ExcitationSpec(), 500, 0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DidNotConverge)
        res = pem_fit(ds, structure, restarts=2)
    d = res.to_dict(1)
    assert {"theta", "cost", "converged", "theta_cov", "stable_flag",
            "noise_model", "modules"} <= set(d)
    assert len(d["theta"]) == 4
    assert len(res.restarts) == 2
    c, dd = res.noise_model.den, res.noise_model.num
    assert c[0] == 1 and dd[0] == 1
