import math

import numpy as np
import pytest

from isac_secbf import scenario
from isac_secbf.scenario import (
    DEFAULT_SCENARIO,
    ScenarioError,
    db_to_linear,
    dbm_to_watts,
    linear_to_db,
    load_scenario,
    make_rng,
    scenario_from_dict,
    watts_to_dbm,
)


def test_30_dbm_is_one_watt(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("power_dbm: 30.0\n")
    cfg = load_scenario(path)
    assert cfg.power_budget == pytest.approx(1.0, rel=1e-12)


def test_noise_minus80_dbm(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("noise_dbm: {comm: -80.0, eav: -80.0, sense: -80.0}\n")
    cfg = load_scenario(path)
    assert cfg.noise_comm == pytest.approx(1.0e-11, rel=1e-12)
    assert cfg.noise_sense == pytest.approx(1.0e-11, rel=1e-12)


def test_gamma_r_default_15db(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("gamma_e_db: -10.0\n")  # gamma_r omitted -> 15 dB default
    cfg = load_scenario(path)
    assert cfg.gamma_r == pytest.approx(10 ** 1.5, rel=1e-12)
    assert cfg.gamma_e == pytest.approx(0.1, rel=1e-12)


def test_defaults_match_published_setup():
    cfg = scenario_from_dict({})
    assert cfg.m_t == cfg.m_r == 64
    assert cfg.k_users == 4 and cfg.t_aes == 2
    assert cfg.rcs == (1.0, 1.0)  # 0 dBsm
    assert cfg.nlos_paths == 3
    assert cfg.nlos_power == pytest.approx(0.1)


def test_db_roundtrip_property():
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = rng.uniform(-120.0, 60.0)
        assert linear_to_db(db_to_linear(x)) == pytest.approx(x, abs=1e-12)
        w = 10 ** rng.uniform(-15, 3)
        assert dbm_to_watts(watts_to_dbm(w)) == pytest.approx(w, rel=1e-12)


def test_parse_failure(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("antennas: {tx: [unclosed\n")
    with pytest.raises(ScenarioError):
        load_scenario(path)


@pytest.mark.parametrize(
    "mutation, field",
    [
        ({"antennas": {"tx": 0, "rx": 8}}, "antennas.tx"),
        ({"antennas": {"tx": 8, "rx": -1}}, "antennas.rx"),
        ({"users": []}, "users"),
        ({"frame_len": 0}, "frame_len"),
        ({"n_sensing_beams": -1}, "n_sensing_beams"),
        ({"users": [{"angle_deg": 95.0, "distance_m": 10.0}]}, "users.angle_deg"),
        ({"users": [{"angle_deg": 10.0, "distance_m": -5.0}]}, "users.distance_m"),
        ({"aes": [{"angle_deg": -91.0, "distance_m": 100.0}]}, "aes.angle_deg"),
        ({"bogus_key": 1}, "bogus_key"),
    ],
)
def test_validation_names_offending_field(mutation, field):
    raw = dict(DEFAULT_SCENARIO)
    raw.update(mutation)
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(raw)
    assert err.value.field_name == field


def test_validation_rejects_random_mutations():
    # property-style: corrupting any positive count/geometry invariant raises
    rng = np.random.default_rng(7)
    numeric_keys = ["power_dbm", "gamma_e_db", "gamma_r_db", "frame_len"]
    for _ in range(50):
        raw = dict(DEFAULT_SCENARIO)
        key = numeric_keys[rng.integers(len(numeric_keys))]
        if key == "frame_len":
            raw[key] = int(rng.integers(-5, 1))
            with pytest.raises(ScenarioError):
                scenario_from_dict(raw)
        else:
            raw[key] = float("nan")
            with pytest.raises(ScenarioError):
                scenario_from_dict(raw)


def test_rng_determinism_and_separation():
    a1 = make_rng(42, "trial0").standard_normal(8)
    a2 = make_rng(42, "trial0").standard_normal(8)
    b = make_rng(42, "trial1").standard_normal(8)
    c = make_rng(43, "trial0").standard_normal(8)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)


def test_clutter_reference_tracks_ae_gain():
    raw = dict(DEFAULT_SCENARIO)
    cfg = scenario_from_dict(raw)
    # default -10 dB relative: |xi|^2 == 0.1 * mean(zeta * rho * d^-4)
    zeta_rho_d4 = np.mean([z * cfg.ref_gain_rho * d ** -4 for z, (_, d) in zip(cfg.rcs, cfg.ae_geometry)])
    for _, coeff in cfg.clutter:
        assert abs(coeff) ** 2 == pytest.approx(0.1 * zeta_rho_d4, rel=1e-9)
