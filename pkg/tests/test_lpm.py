import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netlpm.errors import InsufficientLines, InvariantViolation, RankDeficientWindow
from netlpm.lpm import LpmConfig, SpectrumRecord, dft, lpm_estimate, mid_band, spectrum_from_time
from netlpm.lti_core import RationalTF, filter, freq_response


def random_record(rng, n_i, n_y, F=40, N=None):
    U = rng.standard_normal((n_i, F)) + 1j * rng.standard_normal((n_i, F))
    Y = rng.standard_normal((n_y, F)) + 1j * rng.standard_normal((n_y, F))
    return SpectrumRecord(U, Y, np.arange(F), N or 2 * F)


def normal_equation_oracle(rec, cfg, center_pos):
    """High-precision normal-equations solve at one center line.

    Columns are ordered transient first, then input blocks, unlike the
    library layout.
    """
    mpmath.mp.dps = 40
    n, d = cfg.half_width, cfg.degree
    F = rec.line_indices.size
    W = 2 * n + 1
    start = min(max(center_pos - n, 0), F - W)
    idx = range(start, start + W)
    rows = []
    for p in idx:
        r = mpmath.mpf(int(rec.line_indices[p] - rec.line_indices[center_pos]))
        row = [r ** s for s in range(d + 1)]
        for i in range(rec.U.shape[0]):
            u = mpmath.mpc(complex(rec.U[i, p]))
            row += [u * r ** s for s in range(d + 1)]
        rows.append(row)
    K = mpmath.matrix(rows)
    KH = K.transpose_conj()
    A = KH * K
    Ainv = A ** -1
    out = []
    for y in range(rec.Y.shape[0]):
        Yv = mpmath.matrix([mpmath.mpc(complex(rec.Y[y, p])) for p in idx])
        th = Ainv * (KH * Yv)
        res = Yv - K * th
        ss = sum(abs(res[q]) ** 2 for q in range(W))
        rv = ss / (W - K.cols)
        g = [complex(th[(d + 1) * (1 + i)]) for i in range(rec.U.shape[0])]
        var = [float(rv * Ainv[(d + 1) * (1 + i), (d + 1) * (1 + i)].real)
               for i in range(rec.U.shape[0])]
        out.append((g, var, complex(th[0]), float(rv)))
    return out


def test_dft_constant_and_cosine():
    X = dft(np.full(16, 3.0))
    assert X[0] == pytest.approx(48.0)
    assert np.max(np.abs(X[1:])) < 1e-12
    t = np.arange(32)
    X = dft(np.cos(2 * np.pi * 5 * t / 32))
    assert abs(abs(X[5]) - 16) < 1e-12


def test_parseval_against_direct_dft(rng):
    for N in (7, 16, 33, 64):
        x = rng.standard_normal(N)
        n = np.arange(N)
        full = np.exp(-2j * np.pi * np.outer(n, n) / N) @ x
        np.testing.assert_allclose(dft(x), full[:N // 2 + 1], atol=1e-10)
        assert abs(np.sum(x ** 2) - np.sum(np.abs(full) ** 2) / N) <= 1e-10 * np.sum(x ** 2)


def test_static_gain_recovered(rng):
    U = rng.standard_normal((1, 60)) + 1j * rng.standard_normal((1, 60))
    est = lpm_estimate(SpectrumRecord(U, 2 * U, np.arange(60), 120), LpmConfig(2, 4))
    np.testing.assert_allclose(est.G[:, 0, 0], 2.0, atol=1e-12)
    assert np.max(est.var_G) < 1e-20


def test_exact_for_polynomial_frf(rng):
    # G(k) quadratic in k and T(k) quadratic: the local model is exact everywhere
    k = np.arange(80)
    Gk = 0.5 + 0.01j * k - 2e-4 * k ** 2
    Tk = 1 - 0.02 * k + 1e-4j * k ** 2
    U = rng.standard_normal((1, 80)) + 1j * rng.standard_normal((1, 80))
    est = lpm_estimate(SpectrumRecord(U, Gk * U + Tk, k, 160), LpmConfig(2, 5))
    np.testing.assert_allclose(est.G[:, 0, 0], Gk[est.line_indices], atol=1e-9)
    np.testing.assert_allclose(est.T[:, 0], Tk[est.line_indices], atol=1e-9)


def test_matches_normal_equations_small_case(rng):
    rec = random_record(rng, 1, 1, F=30)
    cfg = LpmConfig(2, 3)
    est = lpm_estimate(rec, cfg)
    for pos in (1, 2, 10, 14):
        n = np.searchsorted(est.line_indices, pos)
        (g, var, t, rv), = normal_equation_oracle(rec, cfg, pos)
        assert abs(est.G[n, 0, 0] - g[0]) < 1e-10
        assert abs(est.var_G[n, 0, 0] - var[0]) < 1e-10 * max(1, var[0])
        assert abs(est.T[n, 0] - t) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 2), st.integers(1, 2),
       st.integers(0, 2), st.integers(0, 7))
def test_matches_oracle_random(seed, n_i, n_y, d, hw):
    cfg = LpmConfig(d, hw)
    if cfg.window > 15 or cfg.window <= cfg.n_params(n_i):
        return
    rng = np.random.default_rng(seed)
    rec = random_record(rng, n_i, n_y, F=24)
    est = lpm_estimate(rec, cfg)
    for n, pos in enumerate(est.line_indices[[0, -1, est.line_indices.size // 2]]):
        m = np.searchsorted(est.line_indices, pos)
        for y, (g, var, t, rv) in enumerate(normal_equation_oracle(rec, cfg, pos)):
            np.testing.assert_allclose(est.G[m, y], g, rtol=0, atol=1e-10)
            np.testing.assert_allclose(est.var_G[m, y], var, rtol=1e-10, atol=1e-12)
            assert abs(est.T[m, y] - t) < 1e-10
            assert abs(est.residual_var[m, y] - rv) <= 1e-10 * max(1, rv)


def test_residuals_orthogonal_to_regressors(rng):
    rec = random_record(rng, 2, 1, F=40)
    cfg = LpmConfig(2, 6)
    est = lpm_estimate(rec, cfg, centers=[20])
    idx = np.arange(20 - 6, 20 + 7)
    r = (idx - 20).astype(float)
    cols = [rec.U[i, idx] * r ** s for i in range(2) for s in range(3)]
    cols += [r ** s for s in range(3)]
    K = np.column_stack(cols)
    # rebuild the full coefficient vector by least squares and check the residual
    theta, *_ = np.linalg.lstsq(K, rec.Y[0, idx], rcond=None)
    np.testing.assert_allclose(theta[[0, 3]], est.G[0, 0], atol=1e-9)
    res = rec.Y[0, idx] - K @ theta
    assert np.max(np.abs(K.conj().T @ res)) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.complex_numbers(min_magnitude=1e-2, max_magnitude=1e2))
def test_common_scaling_invariance(seed, c):
    rec = random_record(np.random.default_rng(seed), 2, 1, F=30)
    cfg = LpmConfig(2, 5)
    a = lpm_estimate(rec, cfg)
    b = lpm_estimate(SpectrumRecord(c * rec.U, c * rec.Y, rec.line_indices, rec.N), cfg)
    np.testing.assert_allclose(b.G, a.G, atol=1e-10 * max(1, np.abs(a.G).max()))


def test_edge_windows_shift_inward(rng):
    rec = random_record(rng, 1, 1, F=30)
    est = lpm_estimate(rec, LpmConfig(1, 4))
    assert est.edge[0] and est.edge[-1]
    assert not est.edge[est.line_indices.size // 2]
    assert est.dof == 9 - 4


def test_errors(rng):
    rec = random_record(rng, 2, 1, F=10)
    with pytest.raises(InvariantViolation):
        lpm_estimate(rec, LpmConfig(2, 2))         # 5 lines < 9 parameters
    with pytest.raises(InsufficientLines):
        lpm_estimate(rec, LpmConfig(1, 6))
    zero = SpectrumRecord(np.zeros((1, 30)), rec.Y[:, :1].repeat(30, 1), np.arange(30), 60)
    with pytest.raises(RankDeficientWindow):
        lpm_estimate(zero, LpmConfig(1, 3))


def _noisy_siso(N, seed, tf):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(N)
    y = filter(tf, u) + 0.1 * rng.standard_normal(N)
    return spectrum_from_time(u, y)


def test_wider_window_reduces_reported_variance():
    tf = RationalTF([0, 0.5], [1, -0.5])
    N = 2048
    lines = mid_band(N, 24)
    v_small = np.zeros(lines.size)
    v_big = np.zeros(lines.size)
    for s in range(20):
        spec = _noisy_siso(N, s, tf)
        v_small += lpm_estimate(spec, LpmConfig(2, 12), centers=lines).var_G[:, 0, 0]
        v_big += lpm_estimate(spec, LpmConfig(2, 24), centers=lines).var_G[:, 0, 0]
    assert np.all(v_big <= v_small)


def test_wider_window_biases_sharp_resonance():
    tf = RationalTF([0, 0.05], [1, -1.9 * np.cos(0.3), 0.95 ** 2])
    N = 1024
    u = np.random.default_rng(0).standard_normal(N)
    spec = spectrum_from_time(u, filter(tf, u))
    lines = mid_band(N, 24)
    true = freq_response(tf, lines, N)
    err = [np.max(np.abs(lpm_estimate(spec, LpmConfig(2, hw), centers=lines).G[:, 0, 0] - true))
           for hw in (6, 12, 24)]
    assert err[0] < err[1] < err[2]
