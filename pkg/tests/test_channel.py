import numpy as np
import pytest

from isac_secbf.channel import (
    ae_channel,
    build_channels,
    clutter_channel,
    dump_channels,
    roundtrip_channel,
    steering,
    user_channel,
)
from isac_secbf.scenario import make_rng


def test_steering_zero_angle():
    assert np.allclose(steering(0.0, 4), np.ones(4))


def test_steering_broadside_pi_half():
    assert np.allclose(steering(np.pi / 2, 4), [1, -1, 1, -1])


def test_steering_pi_sixth():
    assert np.allclose(steering(np.pi / 6, 4), [1, 1j, -1, -1j])


def test_steering_unit_modulus_and_norm():
    rng = np.random.default_rng(0)
    for _ in range(20):
        ang = rng.uniform(-np.pi / 2, np.pi / 2)
        n = int(rng.integers(1, 32))
        a = steering(ang, n)
        assert np.allclose(np.abs(a), 1.0)
        assert np.linalg.norm(a) ** 2 == pytest.approx(n, rel=1e-12)


def test_user_channel_los_only_identity(desk_config):
    cfg = desk_config.with_updates(
        nlos_paths=0,
        ref_gain_rho=1.0,
        user_geometry=((0.3, 1.0), (0.1, 1.0)),
    )
    h = user_channel(cfg, 0, make_rng(0, "x"))
    assert np.allclose(h, steering(0.3, cfg.m_t))


def test_user_channel_norm_scaling(desk_config):
    cfg = desk_config.with_updates(
        nlos_paths=0,
        ref_gain_rho=1.0,
        pathloss_exp=2.0,
        user_geometry=((0.2, 100.0), (0.1, 100.0)),
    )
    h = user_channel(cfg, 0, make_rng(0, "x"))
    assert np.linalg.norm(h) ** 2 == pytest.approx(cfg.m_t * 1e-4, rel=1e-12)


def test_user_channel_nlos_power_monte_carlo(desk_config):
    # E || h - LoS ||^2 = n_NL * 10^-1 * rho d^-alpha * M_t, within 5%
    cfg = desk_config.with_updates(user_geometry=((0.15, 150.0), (0.1, 150.0)))
    rng = make_rng(3, "mc")
    gain = cfg.ref_gain_rho * 150.0 ** -cfg.pathloss_exp
    los = np.sqrt(gain) * steering(0.15, cfg.m_t)
    acc = 0.0
    trials = 10_000
    for _ in range(trials):
        h = user_channel(cfg, 0, rng)
        acc += np.linalg.norm(h - los) ** 2
    expected = cfg.nlos_paths * cfg.nlos_power * gain * cfg.m_t
    assert acc / trials == pytest.approx(expected, rel=0.05)


def test_ae_channel_all_ones(desk_config):
    cfg = desk_config.with_updates(ref_gain_rho=1.0, ae_geometry=((0.0, 1.0), (0.1, 100.0)))
    assert np.allclose(ae_channel(cfg, 0), np.ones(cfg.m_t))


def test_ae_channel_inverse_square(desk_config):
    cfg = desk_config.with_updates(ref_gain_rho=1.0, ae_geometry=((0.2, 100.0), (0.1, 200.0)))
    h0 = ae_channel(cfg, 0)
    assert np.linalg.norm(h0) ** 2 == pytest.approx(cfg.m_t * 1e-4, rel=1e-12)
    cfg2 = cfg.with_updates(ae_geometry=((0.2, 100.0), (0.2, 200.0)))
    near, far = ae_channel(cfg2, 0), ae_channel(cfg2, 1)
    ratio = np.linalg.norm(near) ** 2 / np.linalg.norm(far) ** 2
    assert ratio == pytest.approx(4.0, rel=1e-12)


def test_roundtrip_rank_one(desk_channels):
    for h in desk_channels.h_roundtrip:
        s = np.linalg.svd(h, compute_uv=False)
        assert s[1] <= 1e-12 * s[0]


def test_roundtrip_frobenius(desk_config):
    cfg = desk_config.with_updates(ref_gain_rho=1.0, ae_geometry=((0.3, 1.0), (0.1, 1.0)), rcs=(1.0, 1.0))
    h = roundtrip_channel(cfg, 0)
    assert np.linalg.norm(h) == pytest.approx(np.sqrt(cfg.m_r * cfg.m_t), rel=1e-12)
    cfg2 = cfg.with_updates(ae_geometry=((0.3, 2.0), (0.1, 1.0)))
    h2 = roundtrip_channel(cfg2, 0)
    assert np.linalg.norm(h) / np.linalg.norm(h2) == pytest.approx(4.0, rel=1e-12)


def test_clutter_empty_and_ranks(desk_config):
    cfg0 = desk_config.with_updates(clutter=())
    assert np.all(clutter_channel(cfg0) == 0)
    cfg1 = desk_config.with_updates(clutter=((0.4, 0.1 + 0j),))
    s = np.linalg.svd(clutter_channel(cfg1), compute_uv=False)
    assert s[1] <= 1e-12 * s[0]
    # three distinct angles -> numerical rank 3
    s3 = np.linalg.svd(clutter_channel(desk_config), compute_uv=False)
    assert np.sum(s3 > 1e-9 * s3[0]) == 3


def test_channelset_regeneration_bit_identical(desk_config):
    a = build_channels(desk_config, make_rng(11, "channels"))
    b = build_channels(desk_config, make_rng(11, "channels"))
    assert np.array_equal(a.h_users, b.h_users)
    assert all(np.array_equal(x, y) for x, y in zip(a.h_roundtrip, b.h_roundtrip))
    assert np.array_equal(a.h_clutter, b.h_clutter)


def test_roundtrip_and_ae_share_transmit_direction(desk_config, desk_channels):
    # a_t(theta)^H proportional to h_e^H: cosine similarity of 1
    for t in range(desk_config.t_aes):
        h_e = desk_channels.h_aes[t]
        h_rt = desk_channels.h_roundtrip[t]
        # dominant right singular vector of H_s is a_t direction
        _, _, vh = np.linalg.svd(h_rt)
        v = vh[0].conj()
        cos = abs(h_e.conj() @ v) / np.linalg.norm(h_e)
        assert cos == pytest.approx(1.0, abs=1e-12)


def test_dump_channels(tmp_path, desk_channels):
    path = tmp_path / "ch.csv"
    dump_channels(desk_channels, path)
    text = path.read_text().splitlines()
    header = [l for l in text if l.startswith("#")]
    assert any("h_users" in h for h in header)
    assert any("h_roundtrip_1" in h for h in header)
    # first data row of h_users has 2*K columns
    first = text[1].split(",")
    assert len(first) == 2 * desk_channels.h_users.shape[1]
