import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netlpm.errors import DenominatorZeroOnGrid
from netlpm.lti_core import (RationalTF, filter, freq_response, grid_points,
                             impulse_response)

G31 = RationalTF([0, 1, 0.05], [1, 1, 0.6])
G32 = RationalTF([0, 0.09], [1, 0.5])


def stable_tf(draw_coeffs, nb, na, radius=0.95):
    """Strictly proper tf with poles drawn inside ``radius``."""
    rs, ang, b = draw_coeffs
    poles = []
    for k in range(na // 2):
        p = rs[k] * radius * np.exp(1j * ang[k] * np.pi)
        poles += [p, np.conj(p)]
    if na % 2:
        poles.append(radius * (2 * rs[-1] - 1))
    den = np.real(np.poly(poles)) if poles else np.array([1.0])
    return RationalTF(np.concatenate([[0.0], b[:nb]]), den)


@st.composite
def tfs(draw, max_nb=3, max_na=4):
    nb = draw(st.integers(1, max_nb))
    na = draw(st.integers(0, max_na))
    fl = st.floats(0.0, 1.0)
    rs = draw(st.lists(fl, min_size=na // 2 + 1, max_size=na // 2 + 1))
    ang = draw(st.lists(fl, min_size=na // 2 + 1, max_size=na // 2 + 1))
    b = draw(st.lists(st.floats(-2, 2), min_size=nb, max_size=nb))
    return stable_tf((rs, ang, np.array(b)), nb, na)


def test_normalizes_to_monic():
    tf = RationalTF([0, 2, 4], [2, 1])
    np.testing.assert_allclose(tf.num, [0, 1, 2])
    np.testing.assert_allclose(tf.den, [1, 0.5])
    assert tf.strictly_proper and tf.delay == 1


def test_rejects_zero_leading_denominator():
    with pytest.raises(ValueError):
        RationalTF([1], [0, 1])


def test_zero_numerator_gives_zero_response():
    g = freq_response(RationalTF([0], [1, 0.3]), np.arange(8), 16)
    assert np.all(g == 0)


def test_unit_noise_filter_is_one():
    g = freq_response(RationalTF([1], [1]), np.arange(8), 16)
    np.testing.assert_array_equal(g, np.ones(8, dtype=complex))


def test_static_gain_at_dc():
    # (1 + 0.05) / (1 + 1 + 0.6), substituted by hand
    g = freq_response(G31, [0], 64)
    assert abs(g[0] - 1.05 / 2.6) < 1e-15


def test_pole_on_grid_raises():
    with pytest.raises(DenominatorZeroOnGrid):
        freq_response(RationalTF([0, 1], [1, -1]), [0], 8)


def test_grid_points_on_unit_circle():
    z = grid_points(np.arange(10), 10)
    np.testing.assert_allclose(np.abs(z), 1.0)
    assert z[0] == 1


def test_identity_filter_passes_input(rng):
    u = rng.standard_normal(50)
    np.testing.assert_array_equal(filter(RationalTF.identity(), u), u)


def test_strictly_proper_has_no_feedthrough():
    u = np.zeros(10)
    u[0] = 1.0
    assert filter(G31, u)[0] == 0.0


def test_hand_unrolled_recursion():
    u = np.zeros(5)
    u[0] = 1.0
    y = filter(G32, u)
    assert y[1] == pytest.approx(0.09, abs=1e-15)
    assert y[2] == pytest.approx(-0.045, abs=1e-15)


def test_impulse_response_values():
    np.testing.assert_array_equal(impulse_response(RationalTF.identity(), 3), [1, 0, 0])
    np.testing.assert_allclose(impulse_response(G31, 3), [0, 1, -0.95], atol=1e-15)


def test_impulse_tail_decays():
    h = impulse_response(G31, 200)
    rho = np.max(np.abs(G31.poles()))
    assert np.max(np.abs(h[-20:])) < 1e-8
    assert rho < 1


def test_filter_matches_explicit_difference_equation(rng):
    u = rng.standard_normal(40)
    b, a = G31.num, G31.den
    y = np.zeros_like(u)
    for t in range(u.size):
        acc = sum(b[k] * u[t - k] for k in range(b.size) if t - k >= 0)
        acc -= sum(a[k] * y[t - k] for k in range(1, a.size) if t - k >= 0)
        y[t] = acc
    np.testing.assert_allclose(filter(G31, u), y, rtol=1e-12, atol=1e-14)


def test_filter_rejects_nonfinite():
    with pytest.raises(ValueError):
        filter(G31, np.array([1.0, np.nan]))


@settings(max_examples=40, deadline=None)
@given(tfs(), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_filter_linearity(tf, alpha, beta, seed):
    r = np.random.default_rng(seed)
    u, v = r.standard_normal((2, 64))
    lhs = filter(tf, alpha * u + beta * v)
    rhs = alpha * filter(tf, u) + beta * filter(tf, v)
    scale = max(np.max(np.abs(lhs)), 1e-300)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale + 1e-300


@settings(max_examples=40, deadline=None)
@given(tfs(), tfs(), st.integers(0, 2**31))
def test_filter_cascade_commutes(tf1, tf2, seed):
    u = np.random.default_rng(seed).standard_normal(64)
    a = filter(tf1, filter(tf2, u))
    b = filter(tf2, filter(tf1, u))
    scale = max(np.max(np.abs(a)), 1e-300)
    assert np.max(np.abs(a - b)) <= 1e-10 * scale + 1e-300


@settings(max_examples=40, deadline=None)
@given(tfs(), st.integers(0, 63))
def test_freq_response_matches_dft_of_impulse_response(tf, k):
    # poles within 0.95: 0.95**2048 is far below double precision
    N = 64
    h = impulse_response(tf, 64 * 32)
    folded = h.reshape(-1, N).sum(axis=0)      # periodized impulse response
    dft = np.sum(folded * np.exp(-2j * np.pi * k * np.arange(N) / N))
    g = freq_response(tf, [k], N)[0]
    assert abs(g - dft) <= 1e-8 * max(abs(g), 1e-12)
