import time

import numpy as np
import pytest

from netlpm.errors import EmptyReferenceSet, GridMismatch, PredictorSetWarning
from netlpm.indirect import run_indirect, stage1, stage2, write_target_csv
from netlpm.lpm import LpmConfig, mid_band
from netlpm.lti_core import freq_response
from netlpm.network import PredictorSet, closed_loop_frm, network_from_dict
from netlpm.simulator import ExcitationSpec, TimeSeriesDataset, simulate

PS = PredictorSet(3, 1, (1, 2, 4))
REFS = [1, 2, 4]
CFG = LpmConfig(2, 12)


def noise_free(net, N, seed=0):
    return simulate(net, ExcitationSpec("multisine", 0.1), N, seed,
                    process_noise=False, sensor_noise=False)


def max_mid_error(net, N):
    res = run_indirect(noise_free(net, N), PS, REFS, CFG)
    lines = mid_band(N, CFG.half_width)
    sel = np.isin(res.line_indices, lines)
    return np.max(np.abs(res.target_frf[sel] - freq_response(net.modules[(3, 1)], lines, N)))


def test_stage1_matches_closed_loop_block(net):
    N = 16384
    s = stage1(noise_free(net, N), PS, REFS, CFG)
    lines = mid_band(N, CFG.half_width)
    sel = np.isin(s.line_indices, lines)
    T = closed_loop_frm(net, lines, N)[:, [0, 1, 3]][:, :, [0, 1, 3]]
    assert np.max(np.abs(s.G[sel] - T)) < 1e-3


def test_stage1_identity_for_unconnected_nodes():
    m = network_from_dict({"nodes": 2, "modules": [], "noise_cov": {"diag": [1e-4, 1e-4]},
                           "references": [1, 2]})
    ds = simulate(m, ExcitationSpec("white", 1.0), 1024, 0)
    s = stage1(ds, PredictorSet(2, 1, (1,)), [1, 2], CFG)
    np.testing.assert_allclose(s.G[:, 0, :], np.broadcast_to([1, 0], (s.G.shape[0], 2)), atol=0.02)


def test_empty_references(net):
    ds = noise_free(net, 256)
    with pytest.raises(EmptyReferenceSet):
        stage1(ds, PS, [], CFG)


def test_noise_free_recovery(net):
    N = 4096
    res = run_indirect(noise_free(net, N), PS, REFS, CFG)
    lines = mid_band(N, CFG.half_width)
    sel = np.isin(res.line_indices, lines)
    g0 = freq_response(net.modules[(3, 1)], lines, N)
    assert np.max(np.abs(res.target_frf[sel] - g0) / np.abs(g0)) <= 5e-2


def test_noise_free_error_shrinks_with_N(net):
    errs = [max_mid_error(net, N) for N in (512, 4096, 16384)]
    assert errs[0] >= errs[1] >= errs[2]
    assert errs[2] <= 5e-2


def test_stochastic_variance_positive(net):
    ds = simulate(net, ExcitationSpec("white", 0.1), 500, 0)
    res = run_indirect(ds, PS, REFS, CFG)
    sel = np.isin(res.line_indices, mid_band(500, 12))
    assert np.all(res.target_var[sel] > 0)


def test_static_gain_dataset():
    N = 256
    r1 = np.random.default_rng(3).standard_normal(N)
    w = np.vstack([r1, 2 * r1])
    r = np.vstack([r1, np.zeros(N)])
    ds = TimeSeriesDataset(w=w, w_meas=w, r=r, v=np.zeros_like(w))
    res = run_indirect(ds, PredictorSet(2, 1, (1,)), [1], LpmConfig(1, 4))
    np.testing.assert_allclose(res.target_frf, 2.0, atol=1e-9)


def test_pipeline_equals_composition(net):
    ds = simulate(net, ExcitationSpec(), 500, 2)
    a = run_indirect(ds, PS, REFS, CFG)
    b = stage2(ds, PS, stage1(ds, PS, REFS, CFG), CFG, REFS)
    assert np.array_equal(a.target_frf, b.target_frf)
    assert np.array_equal(a.target_var, b.target_var)
    assert np.array_equal(a.W_hat, b.W_hat)


def test_stage2_is_deterministic(net):
    ds = simulate(net, ExcitationSpec(), 500, 2)
    s = stage1(ds, PS, REFS, CFG)
    assert np.array_equal(stage2(ds, PS, s, CFG, REFS).W_hat, stage2(ds, PS, s, CFG, REFS).W_hat)


def test_grid_mismatch(net):
    s = stage1(simulate(net, ExcitationSpec(), 500, 0), PS, REFS, CFG)
    with pytest.raises(GridMismatch):
        stage2(simulate(net, ExcitationSpec(), 600, 0), PS, s, CFG, REFS)


def test_runtime(net):
    ds = simulate(net, ExcitationSpec(), 500, 0)
    t0 = time.perf_counter()
    run_indirect(ds, PS, REFS, CFG)
    assert time.perf_counter() - t0 < 5


def test_invalid_predictor_set_warns(net):
    ds = simulate(net, ExcitationSpec(), 500, 0)
    with pytest.warns(PredictorSetWarning):
        run_indirect(ds, PredictorSet(3, 1, (1,)), REFS, CFG, model=net)


def test_sensor_noise_changes_estimate_within_reported_spread(net):
    N = 16384
    clean = run_indirect(noise_free(net, N), PS, REFS, CFG)
    noisy_net = net.replace(sensor_noise_var=np.full(4, 0.01))
    ds = simulate(noisy_net, ExcitationSpec("multisine", 0.1), N, 0, process_noise=False)
    noisy = run_indirect(ds, PS, REFS, CFG)
    sel = np.isin(noisy.line_indices, mid_band(N, 12))
    sd = np.sqrt(noisy.target_var[sel])
    assert np.mean(np.abs(noisy.target_frf[sel] - clean.target_frf[sel]) < 3 * sd) >= 0.9


def test_target_csv(net, tmp_path):
    res = run_indirect(simulate(net, ExcitationSpec(), 500, 0), PS, REFS, CFG)
    write_target_csv(res, tmp_path / "t.csv")
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "line,Re,Im,var,edge"
    assert len(rows) == res.line_indices.size + 1
