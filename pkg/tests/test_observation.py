import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import crandn
from ris_chest.channel import draw_channel, stack_channel
from ris_chest.observation import (
    ONE_BIT_SCALE,
    Observation,
    add_awgn,
    draw_mask,
    from_rx_matrix,
    mask_for,
    noiseless_block,
    quantize_1bit,
    sample,
    to_rx_matrix,
    zadoff_chu,
    zc_length,
    zc_pilot_block,
)
from ris_chest.transforms import ImplicitOperator

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_zc_known_values():
    # length 3, root 1: exp(-1j pi n (n+1) / 3)
    expect = np.exp(-1j * np.pi * np.array([0, 2, 6]) / 3)
    np.testing.assert_allclose(zadoff_chu(3, 1), expect, atol=1e-14)


@pytest.mark.parametrize("n,u", [(7, 1), (13, 5), (17, 3), (31, 2)])
def test_zc_cazac(n, u):
    zc = zadoff_chu(n, u)
    np.testing.assert_allclose(np.abs(zc), 1.0, atol=1e-12)
    for s in range(1, n):
        assert abs(np.vdot(zc, np.roll(zc, s))) < 1e-9


def test_zc_errors():
    with pytest.raises(ValueError):
        zadoff_chu(8, 2)
    with pytest.raises(ValueError):
        zadoff_chu(0)


def test_pilot_block(small):
    block = zc_pilot_block(small)
    assert block.pilots.shape == (small.n_t, small.n_p)
    np.testing.assert_allclose(np.abs(block.pilots), 1.0)
    # column p is column 0 cyclically shifted by p
    seq = zadoff_chu(zc_length(small.n_t, small.n_p))
    assert len(seq) == 9  # odd length >= max(N_t, N_p)
    np.testing.assert_allclose(block.pilots[:, 2], seq[2:2 + small.n_t])


def test_noiseless_block_is_h_times_t(small, rng):
    block = zc_pilot_block(small)
    op = ImplicitOperator.from_config(small, block.pilots)
    h, x = stack_channel(draw_channel(small, rng), small)
    np.testing.assert_allclose(noiseless_block(x, op), h @ block.pilots, atol=1e-10)


@given(st.integers(1, 4), st.integers(1, 5), st.integers(1, 4))
def test_rx_layout_roundtrip(n_k, n_r, n_p):
    z = np.arange(n_k * n_r * n_p).reshape(n_k * n_r, n_p)
    y = to_rx_matrix(z, n_k, n_r, n_p)
    assert y.shape == (n_r, n_p * n_k)
    for k in range(n_k):
        for r in range(n_r):
            for p in range(n_p):
                assert y[r, p * n_k + k] == z[k * n_r + r, p]
    np.testing.assert_array_equal(from_rx_matrix(y, n_k, n_r, n_p), z)


@given(finite, finite)
def test_quantize_scalar(a, b):
    q = quantize_1bit(np.array([complex(a, b)]))[0]
    assert q.real == (ONE_BIT_SCALE if a >= 0 else -ONE_BIT_SCALE)
    assert q.imag == (ONE_BIT_SCALE if b >= 0 else -ONE_BIT_SCALE)
    assert abs(abs(q) - 1) < 1e-15


def test_quantize_zero_and_real():
    np.testing.assert_array_equal(quantize_1bit(np.zeros(2, complex)), [(1 + 1j) / math.sqrt(2)] * 2)
    # real input has a zero imaginary part, which quantizes to +1
    q = quantize_1bit(np.array([-2.0, 0.0, 3]))
    np.testing.assert_array_equal(q, np.array([-1 + 1j, 1 + 1j, 1 + 1j]) * ONE_BIT_SCALE)
    q = quantize_1bit(np.array([[-1, 2]]))
    assert q.shape == (1, 2)


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_quantize_scale_invariant(seed, c):
    z = crandn(np.random.default_rng(seed), 50)
    np.testing.assert_array_equal(quantize_1bit(c * z), quantize_1bit(z))


def test_awgn_empirical_snr():
    rng = np.random.default_rng(0)
    z = crandn(rng, 200000)
    for snr in (0.0, 10.0):
        noisy, nv = add_awgn(z, snr, rng)
        ratio = np.mean(np.abs(noisy - z) ** 2) / np.mean(np.abs(z) ** 2)
        assert ratio == pytest.approx(10 ** (-snr / 10), rel=0.02)
        assert nv == pytest.approx(np.mean(np.abs(z) ** 2) / 10 ** (snr / 10))


def test_awgn_inf_and_zero():
    z = np.ones(4, complex)
    out, nv = add_awgn(z, math.inf, np.random.default_rng(0))
    assert nv == 0 and np.array_equal(out, z)
    with pytest.raises(ValueError):
        add_awgn(np.zeros(3), 10, np.random.default_rng(0))


@given(st.integers(1, 20), st.integers(1, 10), st.data())
def test_mask_counts(n_r, n_p, data):
    per = data.draw(st.integers(1, n_r))
    mask = draw_mask(n_r, n_p, per, np.random.default_rng(data.draw(st.integers(0, 1000))))
    assert mask.shape == (n_r, n_p)
    assert np.all(mask.omega.sum(axis=0) == per)
    expanded = mask.expand(3)
    assert expanded.shape == (n_r, 3 * n_p)
    for p in range(n_p):
        for k in range(3):
            np.testing.assert_array_equal(expanded[:, p * 3 + k], mask.omega[:, p])


def test_mask_errors_and_ratio(small):
    with pytest.raises(ValueError):
        draw_mask(4, 2, 5, np.random.default_rng(0))
    mask = mask_for(small.replace(rho=0.25), np.random.default_rng(0))
    assert mask.omega.sum(axis=0).tolist() == [4] * small.n_p


def test_mask_uniform_marginal():
    rng = np.random.default_rng(1)
    hits = sum(draw_mask(10, 1, 3, rng).omega[:, 0].astype(int) for _ in range(5000))
    np.testing.assert_allclose(hits / 5000, 0.3, atol=0.03)


def test_sample_and_bytes(tiny, rng):
    qz = quantize_1bit(crandn(rng, tiny.n_k * tiny.n_r, tiny.n_p))
    mask = mask_for(tiny, rng)
    obs = sample(qz, mask, tiny.n_k, 0.5)
    assert obs.y.shape == (tiny.n_r, tiny.n_p * tiny.n_k)
    assert np.all(obs.y[~obs.observed] == 0)
    full = to_rx_matrix(qz, tiny.n_k, tiny.n_r, tiny.n_p)
    np.testing.assert_array_equal(obs.y[obs.observed], full[obs.observed])
    assert obs.fraction == pytest.approx(tiny.rho)
    blob = obs.to_bytes()
    assert blob[:8] == b"RISOBS1\0"
    back = Observation.from_bytes(blob)
    np.testing.assert_array_equal(back.y, obs.y)
    np.testing.assert_array_equal(back.mask.omega, mask.omega)
    assert back.noise_var == 0.5 and back.n_k == tiny.n_k
    with pytest.raises(ValueError):
        Observation.from_bytes(b"BAD" + blob[3:])
    with pytest.raises(ValueError):
        Observation.from_bytes(blob[:-16])
    with pytest.raises(ValueError):
        sample(qz[:-1], mask, tiny.n_k)


def test_zc_shift_cross_correlation():
    zc = zadoff_chu(13, 3)
    for a, b in [(0, 4), (2, 9), (5, 6)]:
        assert abs(np.vdot(np.roll(zc, a), np.roll(zc, b))) < 1e-10


def test_zero_signal_and_rank_one_block(small):
    block = zc_pilot_block(small)
    op = ImplicitOperator.from_config(small, block.pilots)
    assert not np.any(noiseless_block(np.zeros(op.shape[1], complex), op))
    from ris_chest.channel import draw_on_grid_channel

    ch = draw_on_grid_channel(small.replace(n_cl=1, n_sp=1), np.random.default_rng(2))
    _, x = stack_channel(ch, small)
    z = noiseless_block(x, op)
    s = np.linalg.svd(z, compute_uv=False)
    assert np.all(s[1:] < 1e-9 * s[0])


@pytest.mark.parametrize("snr", [0.0, 10.0])
def test_awgn_hundred_trials(snr):
    rng = np.random.default_rng(3)
    z = crandn(rng, 64, 8)
    ratios = [np.sum(np.abs(add_awgn(z, snr, rng)[0] - z) ** 2) / np.sum(np.abs(z) ** 2) for _ in range(100)]
    assert np.mean(ratios) == pytest.approx(10 ** (-snr / 10), rel=0.1)


def test_quantize_examples_and_symmetry(rng):
    np.testing.assert_allclose(quantize_1bit(np.array([0.3 - 2j])), [(1 - 1j) / math.sqrt(2)])
    m = crandn(rng, 40)
    q = quantize_1bit(m)
    np.testing.assert_array_equal(quantize_1bit(q), q)
    np.testing.assert_array_equal(quantize_1bit(-m), -q)


def test_full_sampling_and_exact_fraction(small, rng):
    assert mask_for(small.replace(rho=1.0), rng).omega.all()
    for rho in (0.125, 0.25, 0.5):
        mask = mask_for(small.replace(rho=rho), rng)
        assert mask.omega.mean() == rho
