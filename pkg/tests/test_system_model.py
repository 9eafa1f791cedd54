import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_profile
from kfl.allocation import optimal_power
from kfl.system_model import (ChannelModel, DeviceProfile, PayloadSpec, channel_gain,
                              compute_energy, compute_latency, dbm_to_watts, draw_channel,
                              db_to_linear, upload_energy, upload_latency, upload_window,
                              uplink_rate)


def test_unit_conversions():
    assert dbm_to_watts(30) == pytest.approx(1.0)
    assert dbm_to_watts(-174) == pytest.approx(3.981071705534985e-21)
    assert db_to_linear(-30) == pytest.approx(1e-3)


def test_profile_validation():
    with pytest.raises(ValueError):
        make_profile(samples=0)
    with pytest.raises(ValueError):
        make_profile(cpu_freq=0.0)
    with pytest.raises(ValueError):
        DeviceProfile(0, [3, -1], 1e9, 1.0, 1.0, 1.0, 1.0)


def test_total_samples_derived():
    assert make_profile(samples=[3, 0, 4]).total_samples == 7


def test_gain_reference_distance(model):
    assert channel_gain(model, model.ref_distance, 1.0) == pytest.approx(1e-3)


def test_gain_arithmetic(model):
    assert channel_gain(model, 10.0, 1.0) == pytest.approx(1e-5)


def test_gain_monte_carlo_mean(model):
    prof = make_profile(distance=20.0)
    gains = np.array([draw_channel(model, [prof], t, seed=7).gains[0] for t in range(100_000)])
    expected = 1e-3 * (1.0 / 20.0) ** 2
    assert gains.mean() == pytest.approx(expected, rel=0.02)


def test_channel_keyed_by_device_not_position(model):
    a, b = make_profile(0, distance=30.0), make_profile(1, distance=40.0)
    g_ab = draw_channel(model, [a, b], 3, seed=1).gains
    g_ba = draw_channel(model, [b, a], 3, seed=1).gains
    g_b = draw_channel(model, [b], 3, seed=1).gains
    assert g_ab[0] == g_ba[1] and g_ab[1] == g_ba[0] == g_b[0]


def test_channel_bit_identical(model):
    profs = [make_profile(i, distance=10.0 + i) for i in range(5)]
    assert np.array_equal(draw_channel(model, profs, 9, 4).gains,
                          draw_channel(model, profs, 9, 4).gains)


def test_latency_zero_iters():
    assert compute_latency(make_profile(), 0) == 0.0


def test_latency_reference_value():
    # 5 * 600 * 553406 / 1.2e9, evaluated by hand
    assert compute_latency(make_profile(), 5) == pytest.approx(1.383515, rel=1e-6)


def test_latency_halves_with_double_freq():
    assert compute_latency(make_profile(cpu_freq=2.4e9), 5) == pytest.approx(
        compute_latency(make_profile(), 5) / 2)


def test_energy_zero_iters():
    assert compute_energy(make_profile(), 0) == 0.0


def test_energy_reference_value():
    # 1e-28 * 5 * 600 * 553406 * 1.44e18, evaluated by hand
    assert compute_energy(make_profile(), 5) == pytest.approx(0.23907139, rel=1e-6)


def test_energy_quadratic_in_freq():
    ratio = compute_energy(make_profile(cpu_freq=2.4e9), 5) / compute_energy(make_profile(), 5)
    assert ratio == pytest.approx(4.0)


@given(st.integers(1, 20), st.integers(1, 2000))
def test_cost_linear_in_iters_and_samples(tau, samples):
    p1 = make_profile(samples=samples)
    p2 = make_profile(samples=2 * samples)
    assert compute_latency(p1, 2 * tau) == pytest.approx(2 * compute_latency(p1, tau))
    assert compute_latency(p2, tau) == pytest.approx(2 * compute_latency(p1, tau))
    assert compute_energy(p1, 2 * tau) == pytest.approx(2 * compute_energy(p1, tau))
    assert compute_energy(p2, tau) == pytest.approx(2 * compute_energy(p1, tau))


def test_rate_zero_power(model):
    assert uplink_rate(0.5, 0.0, 1e-6, model) == 0.0


def test_rate_unit_snr(model):
    theta, h = 0.2, 1e-6
    p = theta * model.bandwidth_total * model.noise_psd / h
    assert uplink_rate(theta, p, h, model) == pytest.approx(theta * model.bandwidth_total)


def test_rate_snr_three(model):
    theta, h = 0.5, 1e-6
    p = 3 * theta * model.bandwidth_total * model.noise_psd / h
    assert uplink_rate(theta, p, h, model) == pytest.approx(5e6)


def test_upload_latency_examples():
    pay = PayloadSpec(640, 32)
    assert upload_latency(pay, 20480.0) == pytest.approx(1.0)
    assert upload_latency(pay, pay.bits) == pytest.approx(1.0)
    assert upload_latency(pay, math.inf) == 0.0
    assert upload_latency(pay, 0.0) == math.inf


def test_upload_energy_unit_exponent(model):
    theta, h = 0.25, 1e-6
    band = theta * model.bandwidth_total
    t_u = 0.01
    pay = PayloadSpec(int(band * t_u / 32), 32)
    t_u = pay.bits / band  # make Qq / (theta B T_U) exactly 1
    assert upload_energy(theta, t_u, h, pay, model) == pytest.approx(band * t_u * model.noise_psd / h)


def test_upload_energy_matches_optimal_power(model, payload):
    prof = make_profile(samples=100, flops=1e5)
    h, theta = 2e-7, 0.3
    window = upload_window(prof, 1.0, 5)
    energy = upload_energy(theta, window, h, payload, model)
    power = optimal_power(theta, prof, h, 1.0, payload, model, 5)
    assert energy / window == pytest.approx(power, rel=1e-9)


def test_upload_energy_decreasing_in_share(model, payload):
    thetas = np.linspace(0.001, 1.0, 500)
    e = [upload_energy(t, 0.5, 1e-9, payload, model) for t in thetas]
    assert np.all(np.diff(e) < 0)


def test_upload_energy_overflow_is_inf(model):
    assert upload_energy(1e-9, 1e-6, 1e-9, PayloadSpec(10**6), model) == math.inf


def test_payload_accounting():
    pay = PayloadSpec.for_knowledge(10, 64, model_params=553406)
    assert pay.knowledge_params == 640
    assert pay.bits == 640 * 32
    assert pay.bytes == 2560
    assert pay.overhead_ratio == pytest.approx(640 / 553406)


def test_channel_model_validation():
    with pytest.raises(ValueError):
        ChannelModel(bandwidth_total=0)
    with pytest.raises(ValueError):
        ChannelModel(path_loss_exp=0.5)
