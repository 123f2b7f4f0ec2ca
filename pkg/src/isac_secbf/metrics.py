"""Performance metrics: user/eavesdropper SINR, secrecy rate, matched
filtering, sensing SCNR, and the optimal receive combiner.

All rates are bits per channel use unless noted; SINR/SCNR values are linear
ratios (convert with 10*log10 for dB).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channel import ChannelSet
from .scenario import ScenarioConfig

__all__ = [
    "BeamformerPair",
    "ReceiveBank",
    "user_sinr",
    "ae_sinr",
    "worst_ae_sinr",
    "sum_rate",
    "sum_secrecy_rate",
    "sensing_symbols",
    "matched_filter",
    "sensing_scnr",
    "scnr_matrices",
    "receive_beamformer",
]


@dataclass
class BeamformerPair:
    """Communication beams (M_t x K) and dedicated sensing beams (M_t x N_s).

    N_s may be zero, in which case v_sense has shape (M_t, 0).
    """

    w_comm: np.ndarray
    v_sense: np.ndarray

    @property
    def combined(self) -> np.ndarray:
        return np.concatenate([self.w_comm, self.v_sense], axis=1)

    @property
    def total_power(self) -> float:
        return float(np.linalg.norm(self.w_comm) ** 2 + np.linalg.norm(self.v_sense) ** 2)


@dataclass
class ReceiveBank:
    """Unit-norm receive combiners, one per sensed target."""

    u: list = field(default_factory=list)


def user_sinr(channels: ChannelSet, pair: BeamformerPair, k: int, noise_c: float) -> float:
    h = channels.h_users[:, k]
    gains = np.abs(h.conj() @ pair.w_comm) ** 2
    signal = gains[k]
    interference = gains.sum() - signal
    if pair.v_sense.shape[1]:
        interference += float(np.sum(np.abs(h.conj() @ pair.v_sense) ** 2))
    return float(signal / (interference + noise_c))


def ae_sinr(channels: ChannelSet, pair: BeamformerPair, t: int, k: int, noise_e: float) -> float:
    """Worst-case eavesdropping SINR on user k's stream at AE t.

    Inter-stream interference is assumed cancelled at the eavesdropper, so
    only the sensing beams and thermal noise remain in the denominator.
    """
    h_e = channels.h_aes[t]
    signal = float(np.abs(h_e.conj() @ pair.w_comm[:, k]) ** 2)
    jam = 0.0
    if pair.v_sense.shape[1]:
        jam = float(np.sum(np.abs(h_e.conj() @ pair.v_sense) ** 2))
    return signal / (jam + noise_e)


def worst_ae_sinr(channels: ChannelSet, pair: BeamformerPair, noise_e: float) -> np.ndarray:
    """Per-AE maximum over user streams; empty array when there are no AEs."""
    t_aes = len(channels.h_aes)
    k_users = pair.w_comm.shape[1]
    out = np.zeros(t_aes)
    for t in range(t_aes):
        out[t] = max(ae_sinr(channels, pair, t, k, noise_e) for k in range(k_users))
    return out


def sum_rate(channels: ChannelSet, pair: BeamformerPair, noise_c: float) -> float:
    k_users = pair.w_comm.shape[1]
    return float(
        sum(np.log2(1.0 + user_sinr(channels, pair, k, noise_c)) for k in range(k_users))
    )


def sum_secrecy_rate(
    channels: ChannelSet, pair: BeamformerPair, noise_c: float, noise_e: float
) -> float:
    """Per-user clamped secrecy rate, summed over users (bits/use)."""
    k_users = pair.w_comm.shape[1]
    t_aes = len(channels.h_aes)
    total = 0.0
    for k in range(k_users):
        rate_k = np.log2(1.0 + user_sinr(channels, pair, k, noise_c))
        if t_aes:
            worst = max(ae_sinr(channels, pair, t, k, noise_e) for t in range(t_aes))
            rate_k -= np.log2(1.0 + worst)
        total += max(rate_k, 0.0)
    return float(total)


def sensing_symbols(n_streams: int, frame_len: int, rng: np.random.Generator) -> np.ndarray:
    """Pseudo-random symbol block S (n_streams x L) with S @ S^H = L * I exactly.

    Rows start as QPSK sequences and are then orthonormalized, which removes
    the stochastic cross-correlation terms the expectation identities assume.
    """
    if frame_len < n_streams:
        raise ValueError("frame length must be at least the number of streams")
    qpsk = rng.integers(0, 4, size=(n_streams, frame_len))
    s = np.exp(1j * (np.pi / 4 + np.pi / 2 * qpsk))
    q, _ = np.linalg.qr(s.conj().T)  # (L, n_streams), orthonormal columns
    return np.sqrt(frame_len) * q.conj().T


def matched_filter(echoes: np.ndarray, symbols: np.ndarray) -> np.ndarray:
    """Correlate received samples with the transmitted symbol block: Y @ S^H."""
    if echoes.shape[1] != symbols.shape[1]:
        raise ValueError(
            f"sample-count mismatch: echoes L={echoes.shape[1]}, symbols L={symbols.shape[1]}"
        )
    return echoes @ symbols.conj().T


def _echo_covariances(channels: ChannelSet, pair: BeamformerPair, t: int):
    """Target and clutter output covariances G_t, C_t seen at the receive array."""
    wc = pair.combined
    g = channels.h_roundtrip[t] @ wc
    c = channels.h_clutter @ wc
    return g @ g.conj().T, c @ c.conj().T


def sensing_scnr(
    channels: ChannelSet,
    pair: BeamformerPair,
    u_t: np.ndarray,
    config: ScenarioConfig,
    t: int = 0,
) -> float:
    """Post-matched-filter, post-combining SCNR of AE t's echo."""
    g_cov, c_cov = _echo_covariances(channels, pair, t)
    n_streams = pair.combined.shape[1]
    ell = config.frame_len_l
    num = ell * float(np.real(u_t.conj() @ g_cov @ u_t))
    den = ell * float(np.real(u_t.conj() @ c_cov @ u_t)) + n_streams * config.noise_sense
    return num / den


def scnr_matrices(
    channels: ChannelSet, u_t: np.ndarray, t: int
) -> tuple[np.ndarray, np.ndarray]:
    """Transmit-side quadratic forms of the SCNR for a fixed combiner u_t.

    Returns (A_t, A_I): A_t = H_t^H u u^H H_t and A_I = H_I^H u u^H H_I,
    both M_t x M_t PSD rank one.
    """
    gt = channels.h_roundtrip[t].conj().T @ u_t
    gi = channels.h_clutter.conj().T @ u_t
    return np.outer(gt, gt.conj()), np.outer(gi, gi.conj())


def receive_beamformer(
    channels: ChannelSet, pair: BeamformerPair, t: int, config: ScenarioConfig
) -> np.ndarray:
    """SCNR-maximizing unit-norm combiner for AE t.

    Solves the generalized Rayleigh quotient max u^H G u / u^H R u where R
    includes the clutter covariance plus the scaled-identity noise term, via
    the generalized Hermitian eigenproblem.  Near-degenerate top eigenvalues
    are broken by direct quotient evaluation, then first index.
    """
    g_cov, c_cov = _echo_covariances(channels, pair, t)
    n_streams = pair.combined.shape[1]
    ell = config.frame_len_l
    r = c_cov + (n_streams * config.noise_sense / ell) * np.eye(config.m_r)
    vals, vecs = scipy.linalg.eigh(g_cov, r)
    top = vals[-1]
    tol = 1e-9 * max(abs(top), 1.0)
    candidates = [i for i in range(len(vals)) if vals[i] >= top - tol]
    best_idx = candidates[0]
    if len(candidates) > 1:
        best = -np.inf
        for i in candidates:
            u = vecs[:, i] / np.linalg.norm(vecs[:, i])
            q = sensing_scnr(channels, pair, u, config, t)
            if q > best + 1e-15:
                best, best_idx = q, i
    u = vecs[:, best_idx]
    u = u / np.linalg.norm(u)
    # deterministic global phase: largest-magnitude entry real positive
    pivot = np.argmax(np.abs(u))
    phase = u[pivot] / abs(u[pivot])
    return u * phase.conj()
