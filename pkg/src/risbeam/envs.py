"""MDP environments for joint active/passive beamforming, plus the phase quantizer.

Four scenarios share one step/reset interface:

  scsi_joint    action sets F and xi; reward is the statistical-CSI surrogate
                rate with covariances rebuilt for the new xi each step
  no_ris        RIS removed (M = 0); action sets F only; reward is the
                surrogate rate under the reduced covariance, fixed per episode
  random_phase  xi drawn uniform once per episode and frozen, channels drawn
                once and frozen; action sets F; reward is the instantaneous
                rate on the frozen draw
  icsi          one channel realization frozen per episode; action sets F and
                xi; reward is the instantaneous rate on the frozen draw

Episodes restart with fresh UE positions; they end purely by length.
Training always uses continuous phases; quantize_phases is an evaluation-time
projection.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .geometry import (SystemGeometry, build_stats, draw_ue_positions,
                       sample_channels)
from .covariance import CovarianceBuilder, CovarianceSet, covariance_set
from .rates import (BeamformingSolution, instantaneous_sum_rate,
                    scsi_sum_rate, scsi_user_rates)

__all__ = [
    "SCENARIOS",
    "EnvConfig",
    "BeamformingEnv",
    "decode_action",
    "quantize_phases",
    "scsi_observation",
    "channel_observation",
    "observation_dim",
    "action_dim",
]

SCENARIOS = ("scsi_joint", "no_ris", "random_phase", "icsi")


@dataclass(frozen=True)
class EnvConfig:
    scenario: str
    geometry: SystemGeometry
    episode_length: int
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")


def observation_dim(scenario: str, num_users: int, bs_antennas: int,
                    ris_elements: int) -> int:
    u, n, m = num_users, bs_antennas, ris_elements
    if scenario == "scsi_joint":
        return u * (3 * n + 1) + 2 * m
    if scenario == "no_ris":
        return u * (3 * n + 1)
    if scenario == "random_phase":
        return 4 * n * u + 2 * n * m + 2 * u * m + 1
    if scenario == "icsi":
        return 4 * n * u + 2 * n * m + 2 * u * m + 2 * m + 1
    raise ValueError(f"unknown scenario {scenario!r}")


def action_dim(scenario: str, num_users: int, bs_antennas: int,
               ris_elements: int) -> int:
    base = 2 * num_users * bs_antennas
    if scenario in ("scsi_joint", "icsi"):
        return base + 2 * ris_elements
    if scenario in ("no_ris", "random_phase"):
        return base
    raise ValueError(f"unknown scenario {scenario!r}")


def _angles_to_unit(alpha: np.ndarray, beta: np.ndarray):
    """cos(alpha) + j sin(beta); callers project onto their constraint set."""
    return np.cos(alpha) + 1j * np.sin(beta)


def decode_action(raw, num_users: int, bs_antennas: int,
                  ris_action_elements: int) -> BeamformingSolution:
    """Map raw in [-1, 1]^(2UN + 2M') to a constraint-satisfying solution.

    Angles are a = pi*(raw + 1) in [0, 2pi].  Each beamformer takes N (alpha,
    beta) pairs laid out [alpha_1..alpha_N, beta_1..beta_N] per user, and is
    renormalized to unit norm (an exactly-zero vector falls back to the
    uniform beam).  RIS entries use one pair each and are projected to unit
    modulus, with z = 0 mapping to 1.  ris_action_elements is the number of
    RIS entries carried by the action (0 when the action has no RIS block).
    """
    u, n, m = num_users, bs_antennas, ris_action_elements
    raw = np.asarray(raw, dtype=float).reshape(-1)
    expected = 2 * u * n + 2 * m
    if raw.shape[0] != expected:
        raise ValueError(f"action length {raw.shape[0]}, expected {expected}")
    a = np.pi * (raw + 1.0)

    beamformers = np.empty((n, u), dtype=complex)
    for i in range(u):
        block = a[2 * n * i:2 * n * (i + 1)]
        f = _angles_to_unit(block[:n], block[n:])
        norm = np.linalg.norm(f)
        beamformers[:, i] = f / norm if norm > 0.0 else np.full(n, 1.0 / np.sqrt(n))

    if m:
        block = a[2 * n * u:]
        z = _angles_to_unit(block[:m], block[m:])
        mags = np.abs(z)
        safe = np.where(mags > 0.0, mags, 1.0)
        xi = np.where(mags > 0.0, z / safe, 1.0 + 0.0j)
    else:
        xi = np.zeros(0, dtype=complex)
    return BeamformingSolution(beamformers=beamformers, xi=xi)


def quantize_phases(xi, bits: int) -> np.ndarray:
    """Project unit-modulus phases onto the 2^bits-point uniform grid.

    Each entry moves to the grid phase with the smallest wrapped angular
    distance; exact ties go to the numerically smaller grid phase.
    """
    if bits < 1:
        raise ValueError("bits must be >= 1")
    xi = np.asarray(xi, dtype=complex).reshape(-1)
    if xi.size and np.max(np.abs(np.abs(xi) - 1.0)) > 1e-8:
        raise ValueError("xi entries must have unit modulus")
    levels = 2 ** bits
    step = 2.0 * np.pi / levels
    phi = np.mod(np.angle(xi), 2.0 * np.pi)
    k0 = np.floor(phi / step).astype(int) % levels
    k1 = (k0 + 1) % levels
    d0 = np.abs(phi - k0 * step)
    d1 = np.abs((k0 + 1) * step - phi)
    lower_wins = (d0 < d1) | ((d0 == d1) & (k0 * step <= k1 * step))
    k = np.where(lower_wins, k0, k1)
    return np.exp(1j * k * step)


def scsi_observation(solution: BeamformingSolution, covariances: CovarianceSet,
                     power_w: float, noise_w: float) -> np.ndarray:
    """[Re F | Im F | Re xi | Im xi | per-user |C_u f_u| | per-user rates].

    Beamformer blocks are user-major (all real parts user by user, then all
    imaginary parts), matching the RIS and feature blocks.
    """
    f = solution.beamformers
    mu = np.abs(np.einsum("unm,mu->un", covariances.matrices, f))
    lam = scsi_user_rates(covariances, f, power_w, noise_w)
    return np.concatenate([
        f.T.real.reshape(-1), f.T.imag.reshape(-1),
        solution.xi.real, solution.xi.imag,
        mu.reshape(-1), lam,
    ])


def channel_observation(realization, solution: BeamformingSolution,
                        sum_rate: float, include_ris_phases: bool) -> np.ndarray:
    """[Re/Im direct | Re/Im BS-RIS | Re/Im RIS-UE | Re/Im F | (Re/Im xi) | rate]."""
    parts = [
        realization.h_u0.real.reshape(-1), realization.h_u0.imag.reshape(-1),
        realization.H_1.real.reshape(-1), realization.H_1.imag.reshape(-1),
        realization.h_u2.real.reshape(-1), realization.h_u2.imag.reshape(-1),
        solution.beamformers.T.real.reshape(-1),
        solution.beamformers.T.imag.reshape(-1),
    ]
    if include_ris_phases:
        parts.extend([solution.xi.real, solution.xi.imag])
    parts.append(np.array([sum_rate]))
    return np.concatenate(parts)


class BeamformingEnv:
    """Episodic environment exposing reset/step and the two dimension queries."""

    def __init__(self, config: EnvConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.scenario = config.scenario
        geometry = config.geometry
        if self.scenario == "no_ris":
            geometry = geometry.without_ris()
        self.geometry = geometry
        self.power_w = geometry.tx_power_w
        self.noise_w = geometry.noise_power_w
        self._rng = rng if rng is not None else np.random.default_rng(config.seed)
        self._u = geometry.num_users
        self._n = geometry.num_bs_antennas
        self._m = geometry.num_ris_elements
        self.episode_length = config.episode_length
        self._t = 0
        self._started = False
        self.stats = None
        self.covariances = None
        self.realization = None
        self.current_solution = None
        self._frozen_xi = None
        self._cov_builder = None

    @property
    def observation_dim(self) -> int:
        return observation_dim(self.scenario, self._u, self._n, self._m)

    @property
    def action_dim(self) -> int:
        return action_dim(self.scenario, self._u, self._n, self._m)

    @property
    def ris_action_elements(self) -> int:
        return self._m if self.scenario in ("scsi_joint", "icsi") else 0

    def reset(self) -> np.ndarray:
        positions = draw_ue_positions(self.geometry, self._rng)
        self.stats = build_stats(self.geometry, positions)
        self._t = 0
        self._started = True

        f0 = np.full((self._n, self._u), 1.0 / np.sqrt(self._n), dtype=complex)
        if self.scenario == "random_phase":
            phases = self._rng.uniform(0.0, 2.0 * np.pi, self._m)
            self._frozen_xi = np.exp(1j * phases)
            self.current_solution = BeamformingSolution(f0, self._frozen_xi.copy())
            self.realization = sample_channels(self.stats, self._rng)
        else:
            self.current_solution = BeamformingSolution(
                f0, np.ones(self._m, dtype=complex))
            if self.scenario == "icsi":
                self.realization = sample_channels(self.stats, self._rng)

        if self.scenario in ("scsi_joint", "no_ris"):
            self._cov_builder = CovarianceBuilder(self.stats)
            self.covariances = self._cov_builder.build(self.current_solution.xi)
        return self._observation()

    def step(self, raw_action) -> tuple[np.ndarray, float, bool]:
        if not self._started:
            raise RuntimeError("step before reset")
        if self._t >= self.episode_length:
            raise RuntimeError("episode is done; call reset")
        decoded = decode_action(raw_action, self._u, self._n,
                                self.ris_action_elements)

        if self.scenario == "scsi_joint":
            self.current_solution = decoded
            self.covariances = self._cov_builder.build(decoded.xi)
            reward = scsi_sum_rate(self.covariances, decoded.beamformers,
                                   self.power_w, self.noise_w)
        elif self.scenario == "no_ris":
            self.current_solution = decoded
            reward = scsi_sum_rate(self.covariances, decoded.beamformers,
                                   self.power_w, self.noise_w)
        elif self.scenario == "random_phase":
            self.current_solution = BeamformingSolution(decoded.beamformers,
                                                        self._frozen_xi.copy())
            reward = instantaneous_sum_rate(self.realization,
                                            self.current_solution,
                                            self.power_w, self.noise_w)
        else:  # icsi
            self.current_solution = decoded
            reward = instantaneous_sum_rate(self.realization,
                                            self.current_solution,
                                            self.power_w, self.noise_w)

        self._t += 1
        done = self._t >= self.episode_length
        return self._observation(), float(reward), done

    def _observation(self) -> np.ndarray:
        if self.scenario in ("scsi_joint", "no_ris"):
            return scsi_observation(self.current_solution, self.covariances,
                                    self.power_w, self.noise_w)
        rate = instantaneous_sum_rate(self.realization, self.current_solution,
                                      self.power_w, self.noise_w)
        return channel_observation(self.realization, self.current_solution,
                                   rate, include_ris_phases=(self.scenario == "icsi"))
