"""Sum-rate evaluators: instantaneous, Monte-Carlo ergodic, and the S-CSI surrogate.

Conventions: the effective channel is a row vector, h^T = h_{u,0}^T +
h_{u,2}^T Xi H_1, and products with beamformers are plain transposes (no
conjugation on the channel side).  Power is split equally, P/U per user.
Everything runs in linear watts.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .geometry import ChannelRealization, ChannelStats, sample_channels_batch
from .covariance import CovarianceSet

__all__ = [
    "BeamformingSolution",
    "effective_channels",
    "instantaneous_sum_rate",
    "ergodic_sum_rate_mc",
    "scsi_user_rates",
    "scsi_sum_rate",
    "rate_decomposed",
]

_UNIT_TOL = 1e-9
_IMAG_RTOL = 1e-8


@dataclass
class BeamformingSolution:
    """Beamformer matrix F (columns f_u, unit norm) and RIS diagonal xi (unit modulus)."""

    beamformers: np.ndarray  # (N, U) complex
    xi: np.ndarray  # (M,) complex

    @property
    def num_users(self) -> int:
        return self.beamformers.shape[1]

    def validate(self, tol: float = _UNIT_TOL):
        norms = np.linalg.norm(self.beamformers, axis=0)
        if np.max(np.abs(norms - 1.0)) > tol:
            raise ValueError(f"beamformer columns must have unit norm, got {norms}")
        if self.xi.size and np.max(np.abs(np.abs(self.xi) - 1.0)) > tol:
            raise ValueError("xi entries must have unit modulus")

    def copy(self) -> "BeamformingSolution":
        return BeamformingSolution(self.beamformers.copy(), self.xi.copy())


def effective_channels(realization: ChannelRealization, xi) -> np.ndarray:
    """(U, N) effective channels h_u = h_{u,0} + H_1^T (xi * h_{u,2})."""
    xi = np.asarray(xi, dtype=complex).reshape(-1)
    if xi.size:
        return realization.h_u0 + (realization.h_u2 * xi[None, :]) @ realization.H_1
    return realization.h_u0


def _sum_rate_from_products(power_w: float, noise_w: float, s: np.ndarray) -> float:
    """Sum rate from the (U, U) matrix s[u, i] = h_u^T f_i."""
    u = s.shape[0]
    p_share = power_w / u
    powers = p_share * np.abs(s) ** 2
    signal = np.diag(powers)
    interference = powers.sum(axis=1) - signal
    sinr = signal / (noise_w + interference)
    return float(np.sum(np.log2(1.0 + sinr)))


def instantaneous_sum_rate(realization: ChannelRealization,
                           solution: BeamformingSolution,
                           power_w: float, noise_w: float) -> float:
    """Sum over users of log2(1 + SINR_u) for one channel draw, equal power P/U."""
    if noise_w <= 0:
        raise ValueError(f"noise power must be > 0, got {noise_w}")
    h = effective_channels(realization, solution.xi)
    s = h @ solution.beamformers  # (U, U), no conjugation
    return _sum_rate_from_products(power_w, noise_w, s)


def ergodic_sum_rate_mc(stats: ChannelStats, solution: BeamformingSolution,
                        power_w: float, noise_w: float, n_samples: int,
                        rng: np.random.Generator,
                        chunk: int = 20000) -> tuple[float, float]:
    """Monte-Carlo mean of the instantaneous sum rate and its standard error."""
    if noise_w <= 0:
        raise ValueError(f"noise power must be > 0, got {noise_w}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    u = stats.num_users
    xi = np.asarray(solution.xi, dtype=complex).reshape(-1)
    p_share = power_w / u

    total = 0.0
    total_sq = 0.0
    remaining = int(n_samples)
    while remaining > 0:
        b = min(chunk, remaining)
        real = sample_channels_batch(stats, b, rng)
        if xi.size:
            h = real.h_u0 + np.einsum("bum,bmn->bun", real.h_u2 * xi[None, None, :],
                                      real.H_1)
        else:
            h = real.h_u0
        s = np.einsum("bun,ni->bui", h, solution.beamformers)  # (b, U, U)
        powers = p_share * np.abs(s) ** 2
        signal = np.einsum("buu->bu", powers)
        interference = powers.sum(axis=2) - signal
        rates = np.log2(1.0 + signal / (noise_w + interference)).sum(axis=1)
        total += float(rates.sum())
        total_sq += float((rates ** 2).sum())
        remaining -= b

    mean = total / n_samples
    var = max(total_sq / n_samples - mean ** 2, 0.0)
    stderr = float(np.sqrt(var / n_samples))
    return mean, stderr


def _quadratic_forms(covariances: CovarianceSet, beamformers: np.ndarray) -> np.ndarray:
    """(U, U) real matrix q[u, i] = f_i^H C_u f_i; raises if far from real."""
    q = np.einsum("ni,unm,mi->ui", np.conj(beamformers), covariances.matrices,
                  beamformers)
    scale = np.abs(q.real) + np.finfo(float).tiny
    if np.max(np.abs(q.imag) / scale) > _IMAG_RTOL:
        raise ValueError("quadratic forms not real: covariance is not Hermitian enough")
    return q.real


def scsi_user_rates(covariances: CovarianceSet, beamformers: np.ndarray,
                    power_w: float, noise_w: float) -> np.ndarray:
    """(U,) per-user surrogate rates log2(1 + (P/U) f_u^H C_u f_u / (noise + interf))."""
    if noise_w <= 0:
        raise ValueError(f"noise power must be > 0, got {noise_w}")
    u = covariances.num_users
    q = _quadratic_forms(covariances, beamformers)
    p_share = power_w / u
    signal = p_share * np.diag(q)
    interference = p_share * (q.sum(axis=1) - np.diag(q))
    return np.log2(1.0 + signal / (noise_w + interference))


def scsi_sum_rate(covariances: CovarianceSet, beamformers: np.ndarray,
                  power_w: float, noise_w: float) -> float:
    """Statistical-CSI surrogate objective: sum of scsi_user_rates."""
    return float(np.sum(scsi_user_rates(covariances, beamformers, power_w, noise_w)))


def rate_decomposed(covariances: CovarianceSet, beamformers: np.ndarray,
                    power_w: float, noise_w: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-user (signal_log, interference_log); their difference is the user rate.

    signal_log_u = log2(noise + (P/U) sum_i f_i^H C_u f_i), interference_log_u
    drops the i = u term.
    """
    if noise_w <= 0:
        raise ValueError(f"noise power must be > 0, got {noise_w}")
    u = covariances.num_users
    q = _quadratic_forms(covariances, beamformers)
    p_share = power_w / u
    full = noise_w + p_share * q.sum(axis=1)
    interf = noise_w + p_share * (q.sum(axis=1) - np.diag(q))
    return np.log2(full), np.log2(interf)
