"""Channel synthesis for the downlink: user links, eavesdropper links,
round-trip radar links, and clutter.

All arrays are half-wavelength ULAs; the transmit and receive arrays share
the same geometry but may differ in element count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .scenario import ScenarioConfig

__all__ = [
    "ChannelSet",
    "steering",
    "user_channel",
    "ae_channel",
    "roundtrip_channel",
    "clutter_channel",
    "build_channels",
    "dump_channels",
]


def steering(angle: float, n: int) -> np.ndarray:
    """Steering vector of an n-element half-wavelength ULA.

    Element m is exp(j * pi * m * sin(angle)), m = 0..n-1.
    """
    m = np.arange(n)
    return np.exp(1j * np.pi * m * np.sin(angle))


@dataclass
class ChannelSet:
    """One realization of every channel in the scene.

    h_users:     (M_t, K) columns are user channels
    h_aes:       list of T vectors (M_t,)
    h_roundtrip: list of T matrices (M_r, M_t), each rank one
    h_clutter:   (M_r, M_t) sum of clutter scatterers
    """

    h_users: np.ndarray
    h_aes: list
    h_roundtrip: list
    h_clutter: np.ndarray
    truth_angles: np.ndarray
    truth_distances: np.ndarray

    def with_ae_channels(self, h_aes: list, h_roundtrip: list) -> "ChannelSet":
        """Copy with eavesdropper-side channels replaced (e.g. by estimates)."""
        return replace(self, h_aes=list(h_aes), h_roundtrip=list(h_roundtrip))


def user_channel(config: ScenarioConfig, k: int, rng: np.random.Generator) -> np.ndarray:
    """S-V style user channel: LoS steering plus NLoS scattered paths."""
    psi, dist = config.user_geometry[k]
    gain = np.sqrt(config.ref_gain_rho * dist ** (-config.pathloss_exp))
    h = steering(psi, config.m_t).astype(complex)
    for _ in range(config.nlos_paths):
        ang = rng.uniform(-np.pi / 2, np.pi / 2)
        # complex gain with E|alpha|^2 = nlos_power
        alpha = np.sqrt(config.nlos_power / 2) * (rng.standard_normal() + 1j * rng.standard_normal())
        h = h + alpha * steering(ang, config.m_t)
    return gain * h


def ae_channel(config: ScenarioConfig, t: int) -> np.ndarray:
    """LoS-only eavesdropper channel with inverse-square pathloss."""
    theta, dist = config.ae_geometry[t]
    return np.sqrt(config.ref_gain_rho * dist ** -2.0) * steering(theta, config.m_t)


def roundtrip_channel(config: ScenarioConfig, t: int) -> np.ndarray:
    """Rank-one BS -> AE -> BS radar channel with d^-4 two-way loss."""
    theta, dist = config.ae_geometry[t]
    amp = np.sqrt(config.rcs[t] * config.ref_gain_rho * dist ** -4.0)
    a_r = steering(theta, config.m_r)
    a_t = steering(theta, config.m_t)
    return amp * np.outer(a_r, a_t.conj())


def clutter_channel(config: ScenarioConfig) -> np.ndarray:
    """Sum of rank-one scatterer returns; zero matrix when no clutter."""
    h = np.zeros((config.m_r, config.m_t), dtype=complex)
    for ang, coeff in config.clutter:
        h += coeff * np.outer(steering(ang, config.m_r), steering(ang, config.m_t).conj())
    return h


def build_channels(config: ScenarioConfig, rng: np.random.Generator) -> ChannelSet:
    """Realize every channel for one trial from a dedicated random stream."""
    h_users = np.stack([user_channel(config, k, rng) for k in range(config.k_users)], axis=1)
    h_aes = [ae_channel(config, t) for t in range(config.t_aes)]
    h_roundtrip = [roundtrip_channel(config, t) for t in range(config.t_aes)]
    return ChannelSet(
        h_users=h_users,
        h_aes=h_aes,
        h_roundtrip=h_roundtrip,
        h_clutter=clutter_channel(config),
        truth_angles=np.array([a for a, _ in config.ae_geometry]),
        truth_distances=np.array([d for _, d in config.ae_geometry]),
    )


def dump_channels(channels: ChannelSet, path) -> None:
    """Write all channel matrices as CSV with interleaved real/imag columns.

    One block per matrix, preceded by '# name rows cols'; intended as a
    cross-language regression fixture, not for round-tripping configs.
    """
    with open(path, "w") as fh:
        blocks = [("h_users", channels.h_users), ("h_clutter", channels.h_clutter)]
        blocks += [(f"h_ae_{t}", v.reshape(-1, 1)) for t, v in enumerate(channels.h_aes)]
        blocks += [(f"h_roundtrip_{t}", m) for t, m in enumerate(channels.h_roundtrip)]
        for name, mat in blocks:
            mat = np.atleast_2d(mat)
            fh.write(f"# {name} {mat.shape[0]} {mat.shape[1]}\n")
            for row in mat:
                cells = []
                for z in row:
                    cells.append(f"{z.real:.17g}")
                    cells.append(f"{z.imag:.17g}")
                fh.write(",".join(cells) + "\n")
