"""Scenario configuration: loading, validation, unit conversion, seeded RNG streams.

A scenario file is a YAML document with the following top-level keys::

    antennas {tx, rx}
    users    [{angle_deg, distance_m}]
    aes      [{angle_deg, distance_m, rcs_dbsm}]
    clutter  [{angle_deg, gain_db}]
    power_dbm
    noise_dbm {comm, eav, sense}
    gamma_e_db
    gamma_r_db
    frame_len
    n_sensing_beams
    n_rf
    pathloss {rho_db, alpha0}
    nlos {paths, power_db}
    seed

All dB / dBm quantities are converted to linear ratios / watts at load time.
Omitted keys fall back to the defaults in DEFAULT_SCENARIO.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

__all__ = [
    "ScenarioConfig",
    "ScenarioError",
    "load_scenario",
    "scenario_from_dict",
    "make_rng",
    "db_to_linear",
    "linear_to_db",
    "dbm_to_watts",
    "watts_to_dbm",
    "DEFAULT_SCENARIO",
]


class ScenarioError(ValueError):
    """Raised when a scenario file fails to parse or validate."""

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"scenario field '{field_name}': {message}")


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def dbm_to_watts(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def watts_to_dbm(x_w: float) -> float:
    return 10.0 * math.log10(x_w) + 30.0


# Defaults mirror the standard simulation setup: 30 dBm budget, -80 dBm noise
# floors, -10 dB eavesdropper SINR cap, 15 dB sensing SCNR floor, 0 dBsm
# targets, 3 NLoS paths at -10 dB each.  Reference gain at 1 m and the user
# pathloss exponent are documented choices (no published values).
DEFAULT_SCENARIO: dict = {
    "antennas": {"tx": 64, "rx": 64},
    "users": [
        {"angle_deg": -60.0, "distance_m": 200.0},
        {"angle_deg": -15.0, "distance_m": 200.0},
        {"angle_deg": 15.0, "distance_m": 200.0},
        {"angle_deg": 60.0, "distance_m": 200.0},
    ],
    "aes": [
        {"angle_deg": -40.0, "distance_m": 100.0, "rcs_dbsm": 0.0},
        {"angle_deg": 40.0, "distance_m": 100.0, "rcs_dbsm": 0.0},
    ],
    # Three static scatterers, reflected power 10 dB below the mean AE
    # round-trip gain (gain_db is relative to that reference).
    "clutter": [
        {"angle_deg": -75.0, "gain_db": -10.0},
        {"angle_deg": 0.0, "gain_db": -10.0},
        {"angle_deg": 75.0, "gain_db": -10.0},
    ],
    "power_dbm": 30.0,
    "noise_dbm": {"comm": -80.0, "eav": -80.0, "sense": -80.0},
    "gamma_e_db": -10.0,
    "gamma_r_db": 15.0,
    "frame_len": 64,
    "n_sensing_beams": 4,
    "n_rf": 8,
    "pathloss": {"rho_db": -30.0, "alpha0": 2.5},
    "nlos": {"paths": 3, "power_db": -10.0},
    "seed": 1,
}


@dataclass(frozen=True)
class ScenarioConfig:
    """All physical and algorithmic parameters of one simulation instance.

    Immutable after construction; safe to share across parallel trials.
    Power-like fields are linear (watts); gamma_e / gamma_r are linear ratios.
    """

    m_t: int
    m_r: int
    k_users: int
    t_aes: int
    n_s: int
    n_rf: int
    power_budget: float
    noise_comm: float
    noise_eav: float
    noise_sense: float
    gamma_e: float
    gamma_r: float
    frame_len_l: int
    ref_gain_rho: float
    pathloss_exp: float
    user_geometry: tuple  # ((angle_rad, distance_m), ...)
    ae_geometry: tuple
    clutter: tuple  # ((angle_rad, complex reflection coefficient), ...)
    rcs: tuple  # linear RCS per AE (from dBsm)
    nlos_paths: int
    nlos_power: float
    seed: int

    def validate(self) -> "ScenarioConfig":
        counts = {
            "antennas.tx": self.m_t,
            "antennas.rx": self.m_r,
            "users": self.k_users,
            "frame_len": self.frame_len_l,
        }
        for name, value in counts.items():
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ScenarioError(name, f"must be a count >= 1, got {value!r}")
        # t_aes = 0 is the eavesdropper-free corner used by sum-rate baselines
        if not isinstance(self.t_aes, (int, np.integer)) or self.t_aes < 0:
            raise ScenarioError("aes", f"must be >= 0, got {self.t_aes!r}")
        if not isinstance(self.n_s, (int, np.integer)) or self.n_s < 0:
            raise ScenarioError("n_sensing_beams", f"must be >= 0, got {self.n_s!r}")
        if not isinstance(self.n_rf, (int, np.integer)) or self.n_rf < 1:
            raise ScenarioError("n_rf", f"must be >= 1, got {self.n_rf!r}")
        if not isinstance(self.nlos_paths, (int, np.integer)) or self.nlos_paths < 0:
            raise ScenarioError("nlos.paths", f"must be >= 0, got {self.nlos_paths!r}")
        positives = {
            "power_dbm": self.power_budget,
            "noise_dbm.comm": self.noise_comm,
            "noise_dbm.eav": self.noise_eav,
            "noise_dbm.sense": self.noise_sense,
            "gamma_e_db": self.gamma_e,
            "gamma_r_db": self.gamma_r,
            "pathloss.rho_db": self.ref_gain_rho,
            "nlos.power_db": self.nlos_power,
        }
        for name, value in positives.items():
            if not (value > 0.0) or not math.isfinite(value):
                raise ScenarioError(name, f"must convert to a positive finite value, got {value!r}")
        if len(self.user_geometry) != self.k_users:
            raise ScenarioError("users", "k_users must equal len(user_geometry)")
        if len(self.ae_geometry) != self.t_aes:
            raise ScenarioError("aes", "t_aes must equal len(ae_geometry)")
        if len(self.rcs) != self.t_aes:
            raise ScenarioError("aes.rcs_dbsm", "one RCS entry required per AE")
        for label, geom in (("users", self.user_geometry), ("aes", self.ae_geometry)):
            for angle, dist in geom:
                if not (-math.pi / 2 < angle < math.pi / 2):
                    raise ScenarioError(f"{label}.angle_deg", f"angle {angle} rad outside (-pi/2, pi/2)")
                if not dist > 0:
                    raise ScenarioError(f"{label}.distance_m", f"distance must be > 0, got {dist}")
        for angle, _ in self.clutter:
            if not (-math.pi / 2 < angle < math.pi / 2):
                raise ScenarioError("clutter.angle_deg", f"angle {angle} rad outside (-pi/2, pi/2)")
        return self

    def with_updates(self, **kwargs) -> "ScenarioConfig":
        return replace(self, **kwargs).validate()


def _get(raw: dict, key: str, defaults: dict = DEFAULT_SCENARIO):
    return raw[key] if key in raw else defaults[key]


def scenario_from_dict(raw: dict) -> ScenarioConfig:
    """Build a validated ScenarioConfig from a schema dict (defaults applied)."""
    if not isinstance(raw, dict):
        raise ScenarioError("<document>", "top level must be a mapping")
    known = set(DEFAULT_SCENARIO)
    unknown = set(raw) - known
    if unknown:
        raise ScenarioError(sorted(unknown)[0], "unknown key")

    antennas = _get(raw, "antennas")
    users = _get(raw, "users")
    aes = _get(raw, "aes")
    clutter_raw = _get(raw, "clutter")
    noise = _get(raw, "noise_dbm")
    pathloss = _get(raw, "pathloss")
    nlos = _get(raw, "nlos")

    try:
        user_geometry = tuple((math.radians(u["angle_deg"]), float(u["distance_m"])) for u in users)
    except (TypeError, KeyError) as exc:
        raise ScenarioError("users", f"each entry needs angle_deg and distance_m ({exc})") from exc
    try:
        ae_geometry = tuple((math.radians(a["angle_deg"]), float(a["distance_m"])) for a in aes)
        rcs = tuple(db_to_linear(float(a.get("rcs_dbsm", 0.0))) for a in aes)
    except (TypeError, KeyError) as exc:
        raise ScenarioError("aes", f"each entry needs angle_deg and distance_m ({exc})") from exc

    rho = db_to_linear(float(pathloss["rho_db"]))

    # Clutter reflection power is specified relative to the mean AE round-trip
    # gain zeta * rho * d^-4 so that "10 dB below" survives geometry changes.
    if ae_geometry:
        ref_gain = float(np.mean([z * rho * d ** -4.0 for z, (_, d) in zip(rcs, ae_geometry)]))
    else:
        ref_gain = rho * 100.0 ** -4.0
    clutter = []
    for c in clutter_raw:
        try:
            ang = math.radians(c["angle_deg"])
            power = db_to_linear(float(c["gain_db"])) * ref_gain
        except (TypeError, KeyError) as exc:
            raise ScenarioError("clutter", f"each entry needs angle_deg and gain_db ({exc})") from exc
        clutter.append((ang, complex(math.sqrt(power), 0.0)))

    try:
        cfg = ScenarioConfig(
            m_t=int(antennas["tx"]),
            m_r=int(antennas["rx"]),
            k_users=len(user_geometry),
            t_aes=len(ae_geometry),
            n_s=int(_get(raw, "n_sensing_beams")),
            n_rf=int(_get(raw, "n_rf")),
            power_budget=dbm_to_watts(float(_get(raw, "power_dbm"))),
            noise_comm=dbm_to_watts(float(noise["comm"])),
            noise_eav=dbm_to_watts(float(noise["eav"])),
            noise_sense=dbm_to_watts(float(noise["sense"])),
            gamma_e=db_to_linear(float(_get(raw, "gamma_e_db"))),
            gamma_r=db_to_linear(float(_get(raw, "gamma_r_db"))),
            frame_len_l=int(_get(raw, "frame_len")),
            ref_gain_rho=rho,
            pathloss_exp=float(pathloss["alpha0"]),
            user_geometry=user_geometry,
            ae_geometry=ae_geometry,
            clutter=tuple(clutter),
            rcs=rcs,
            nlos_paths=int(nlos["paths"]),
            nlos_power=db_to_linear(float(nlos["power_db"])),
            seed=int(_get(raw, "seed")),
        )
    except (TypeError, KeyError) as exc:
        raise ScenarioError(str(exc), "missing or malformed") from exc
    return cfg.validate()


def load_scenario(path) -> ScenarioConfig:
    """Load and validate a scenario YAML file."""
    with open(path, "r") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError("<document>", f"YAML parse failure: {exc}") from exc
    if raw is None:
        raw = {}
    return scenario_from_dict(raw)


def make_rng(seed: int, stream: str) -> np.random.Generator:
    """Deterministic generator for (seed, stream); streams are independent.

    The stream label is hashed (sha256) into the spawn key, so identical
    (seed, stream) pairs always reproduce the same draws regardless of
    creation order or platform.
    """
    digest = hashlib.sha256(stream.encode("utf-8")).digest()
    words = tuple(int.from_bytes(digest[4 * i : 4 * i + 4], "little") for i in range(4))
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=words)
    return np.random.Generator(np.random.PCG64(ss))
