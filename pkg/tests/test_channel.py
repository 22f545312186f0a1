import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpacdma import channel as ch
from fpacdma.errors import ConfigurationError


def test_pole_values():
    assert ch.fading_pole(0.0) == 1.0
    assert ch.fading_pole(0.01) == pytest.approx(math.exp(-2 * math.pi * 0.01), rel=1e-15)
    assert ch.fading_pole(0.01) == pytest.approx(0.9391, abs=1e-4)


def test_frozen_fading_without_innovation(rng):
    p = ch.ChannelParams(1, [1.0], 0.1, doppler_rate=0.0, fading_innovation_std=0.0)
    s = ch.ChannelState(np.array([0.7]))
    for _ in range(50):
        s = ch.advance_fading(s, p, rng)
    assert s.fading[0] == 0.7
    assert s.symbol_index == 50


def test_ar1_stationary_variance(rng):
    # long-run variance of a(n+1) = alpha a(n) + nu is sigma_nu^2 / (1 - alpha^2)
    p = ch.ChannelParams(1, [1.0], 0.1, frame_length=10**5, doppler_rate=0.01, fading_innovation_std=0.1)
    _, fading = ch.transmit_frame(np.ones((10**5, 1)), _single_code(), p, ch.ChannelState(np.zeros(1)), rng)
    expected = 0.1**2 / (1 - p.alpha**2)
    assert np.var(fading[1000:]) == pytest.approx(expected, rel=0.1)


def _single_code():
    from fpacdma.spreading import generate_gold_family

    return generate_gold_family(5)


def test_vectorized_trace_matches_stepwise(gold5):
    p = ch.ChannelParams.from_snr(3, 10.0, 2.0, doppler_rate=0.02, fading_innovation_std=0.05)
    s0 = ch.ChannelState(np.array([0.9, 0.5, 1.1]))
    _, fading = ch.transmit_frame(np.ones((40, 3)), gold5, p, s0, np.random.default_rng(3))
    r = np.random.default_rng(3)
    s, trace = s0, [s0.fading]
    for _ in range(39):
        s = ch.advance_fading(s, p, r)
        trace.append(s.fading)
    assert np.allclose(fading, np.array(trace), atol=1e-15)


def test_noiseless_matched_filter_identity(gold5, rng):
    # S^T r = R A E^(1/2) d exactly when there is no noise
    p = ch.ChannelParams(6, np.array([1.0, 2.0, 0.5, 1.0, 3.0, 1.0]), 0.0, frame_length=30)
    obs = ch.simulate_frame(gold5, p, rng)
    expected = (obs.true_symbols * obs.true_fading * np.sqrt(p.bit_energies)) @ obs.R
    assert np.max(np.abs(obs.z - expected)) < 1e-10


def test_from_snr_conventions():
    p = ch.ChannelParams.from_snr(4, 10.0, 4.0)
    assert p.bit_energies[0] == 1.0
    assert np.allclose(p.bit_energies[1:], 10**0.4)
    assert p.noise_psd == pytest.approx(0.1)
    assert p.noise_var == pytest.approx(0.05)


def test_noise_variance_per_chip(gold5, rng):
    p = ch.ChannelParams(1, [1.0], 0.4, frame_length=4000)
    chips, fading = ch.transmit_frame(np.ones((4000, 1)), gold5, p, ch.initial_state(1, rng), rng)
    clean = (fading * 1.0) @ gold5.signature_matrix(1).T
    assert np.var(chips - clean) == pytest.approx(0.2, rel=0.05)


def test_initial_state_clipped(rng):
    a = np.concatenate([ch.initial_state(33, rng).fading for _ in range(200)])
    assert a.min() >= ch.INITIAL_FADING_CLIP[0]
    assert a.max() <= ch.INITIAL_FADING_CLIP[1]
    assert np.mean(a) == pytest.approx(ch.INITIAL_FADING_MEAN, abs=0.02)


def test_reproducible_frames(gold5):
    p = ch.ChannelParams.from_snr(5, 8.0)
    a = ch.simulate_frame(gold5, p, np.random.default_rng(9))
    b = ch.simulate_frame(gold5, p, np.random.default_rng(9))
    assert np.array_equal(a.z, b.z)
    assert np.array_equal(a.true_fading, b.true_fading)


@pytest.mark.parametrize(
    "kw",
    [
        dict(num_users=2, bit_energies=[1.0], noise_psd=0.1),
        dict(num_users=1, bit_energies=[0.0], noise_psd=0.1),
        dict(num_users=1, bit_energies=[1.0], noise_psd=-1.0),
        dict(num_users=1, bit_energies=[1.0], noise_psd=0.1, doppler_rate=-0.1),
        dict(num_users=1, bit_energies=[1.0], noise_psd=0.1, frame_length=0),
    ],
)
def test_invalid_params(kw):
    with pytest.raises(ConfigurationError):
        ch.ChannelParams(**kw)


def test_transmit_rejects_bad_symbols(gold5, rng):
    p = ch.ChannelParams(2, [1.0, 1.0], 0.1)
    with pytest.raises(ConfigurationError):
        ch.transmit_frame(np.zeros((3, 2)), gold5, p, ch.initial_state(2, rng), rng)
    with pytest.raises(ConfigurationError):
        ch.transmit_frame(np.ones((3, 3)), gold5, p, ch.initial_state(2, rng), rng)


def test_frame_csv(tmp_path, gold5, rng):
    obs = ch.simulate_frame(gold5, ch.ChannelParams.from_snr(2, 10.0, frame_length=3), rng)
    path = tmp_path / "frame.csv"
    ch.write_frame_csv(obs, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,user,true_symbol,true_fading,z"
    assert len(lines) == 1 + 3 * 2


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.05))
def test_default_innovation_targets_stationary_std(dop):
    std = ch.default_innovation_std(dop, 0.01)
    alpha = ch.fading_pole(dop)
    if alpha < 1:
        assert math.sqrt(std**2 / (1 - alpha**2)) == pytest.approx(0.01)
    else:
        assert std == 0.0
