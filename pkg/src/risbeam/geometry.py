"""Scenario geometry, pathloss, UPA steering vectors and Rician channel sampling.

All quantities are kept in linear units internally (power gains in watts/watt,
Rician factors as plain ratios); dB/dBm appear only on the configuration
boundary.  Steering vectors are unnormalized: every entry has modulus one, so
``norm(a)**2 == P_H * P_V`` exactly.  That convention is what makes the
closed-form channel covariance in :mod:`risbeam.covariance` carry its explicit
element-count factors, and the Monte-Carlo oracle there confirms it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import numpy as np

__all__ = [
    "SystemGeometry",
    "ChannelStats",
    "ChannelRealization",
    "db_to_linear",
    "dbm_to_watts",
    "pathloss_linear",
    "angles_between",
    "upa_steering",
    "draw_ue_positions",
    "build_stats",
    "sample_channels",
    "sample_channels_batch",
]


def db_to_linear(x_db: float) -> float:
    """Convert a dB power ratio to linear scale (10^(x/10))."""
    return float(10.0 ** (np.asarray(x_db, dtype=float) / 10.0))


def dbm_to_watts(x_dbm: float) -> float:
    """Convert a dBm power level to watts."""
    return db_to_linear(x_dbm) * 1e-3


@dataclass(frozen=True)
class SystemGeometry:
    """Static scenario description: node positions, array sizes, link constants.

    ``ris_dims == (0, 0)`` encodes the RIS-free system (M = 0); all other
    dimension pairs must be >= 1 in each axis.  Positions are 3-vectors in
    meters; the UE disk lies in the plane of its center.
    """

    bs_pos: tuple[float, float, float] = (5.0, 0.0, 30.0)
    ris_pos: tuple[float, float, float] = (0.0, 70.0, 3.0)
    ue_circle_center: tuple[float, float, float] = (5.0, 70.0, 0.0)
    ue_circle_radius: float = 3.0
    num_users: int = 3
    bs_dims: tuple[int, int] = (8, 4)
    ris_dims: tuple[int, int] = (8, 4)
    element_spacing: float = 0.5  # D / wavelength
    pl0_db: float = -30.0
    alpha0: float = 3.4  # BS-UE exponent
    alpha1: float = 2.2  # BS-RIS exponent
    alpha2: float = 3.0  # RIS-UE exponent
    kappa_u0_db: float = -3.0
    kappa1_db: float = 10.0
    kappa_u2_db: float = 10.0
    noise_power_dbm: float = -80.0
    tx_power_dbm: float = 10.0

    def __post_init__(self):
        for name in ("bs_pos", "ris_pos", "ue_circle_center"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        object.__setattr__(self, "bs_dims", tuple(int(x) for x in self.bs_dims))
        object.__setattr__(self, "ris_dims", tuple(int(x) for x in self.ris_dims))
        if min(self.bs_dims) < 1:
            raise ValueError(f"bs_dims must be >= 1 each, got {self.bs_dims}")
        if self.ris_dims != (0, 0) and min(self.ris_dims) < 1:
            raise ValueError(f"ris_dims must be (0, 0) or >= 1 each, got {self.ris_dims}")
        if self.num_users < 1:
            raise ValueError("num_users must be >= 1")
        if self.ue_circle_radius < 0:
            raise ValueError("ue_circle_radius must be >= 0")
        pairs = (
            (self.bs_pos, self.ris_pos),
            (self.bs_pos, self.ue_circle_center),
            (self.ris_pos, self.ue_circle_center),
        )
        for a, b in pairs:
            if np.linalg.norm(np.subtract(a, b)) <= 0.0:
                raise ValueError("distinct scenario nodes must not coincide")

    @property
    def num_bs_antennas(self) -> int:
        return self.bs_dims[0] * self.bs_dims[1]

    @property
    def num_ris_elements(self) -> int:
        return self.ris_dims[0] * self.ris_dims[1]

    @property
    def noise_power_w(self) -> float:
        return dbm_to_watts(self.noise_power_dbm)

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watts(self.tx_power_dbm)

    def without_ris(self) -> "SystemGeometry":
        """Copy of this geometry with the RIS removed (M = 0)."""
        return replace(self, ris_dims=(0, 0))


@dataclass
class ChannelStats:
    """Per-user deterministic channel statistics (pathloss, Rician factors, LoS).

    ``hbar_u0`` is (U, N), ``hbar_u2`` is (U, M), ``Hbar_1`` is (M, N); the
    LoS matrix of the BS-RIS link is rank one: a_RIS (AoA at the RIS from the
    BS) times a_BS (AoD toward the RIS) conjugate-transposed.
    """

    delta_u0: np.ndarray  # (U,) linear power gains
    delta_u2: np.ndarray  # (U,)
    delta_1: float
    kappa_u0: np.ndarray  # (U,) linear Rician factors
    kappa_u2: np.ndarray  # (U,)
    kappa_1: float
    hbar_u0: np.ndarray  # (U, N) complex, unit-modulus entries
    hbar_u2: np.ndarray  # (U, M) complex
    Hbar_1: np.ndarray  # (M, N) complex
    ue_positions: np.ndarray = field(default=None)  # (U, 3), for bookkeeping

    @property
    def num_users(self) -> int:
        return self.hbar_u0.shape[0]

    @property
    def num_bs_antennas(self) -> int:
        return self.hbar_u0.shape[1]

    @property
    def num_ris_elements(self) -> int:
        return self.hbar_u2.shape[1]


@dataclass
class ChannelRealization:
    """One sampled draw of all links for all users."""

    h_u0: np.ndarray  # (U, N) complex
    H_1: np.ndarray  # (M, N) complex
    h_u2: np.ndarray  # (U, M) complex


def pathloss_linear(d: float, alpha: float, pl0_db: float) -> float:
    """Linear power gain 10^((pl0_db - 10*alpha*log10(d)) / 10) at distance d > 0 m."""
    if d <= 0:
        raise ValueError(f"distance must be > 0, got {d}")
    return float(10.0 ** ((pl0_db - 10.0 * alpha * np.log10(d)) / 10.0))


def angles_between(p_from, p_to) -> tuple[float, float]:
    """(azimuth, elevation) of the direction p_from -> p_to, z-up convention.

    azimuth = atan2(dy, dx); elevation = arccos(dz / |d|), in [0, pi].
    """
    delta = np.asarray(p_to, dtype=float) - np.asarray(p_from, dtype=float)
    r = float(np.linalg.norm(delta))
    if r <= 0.0:
        raise ValueError("coincident points have no direction")
    azimuth = float(np.arctan2(delta[1], delta[0]))
    elevation = float(np.arccos(np.clip(delta[2] / r, -1.0, 1.0)))
    return azimuth, elevation


def upa_steering(azimuth: float, elevation: float, dims: tuple[int, int],
                 spacing: float = 0.5) -> np.ndarray:
    """Unnormalized UPA response: exp(j*2*pi*spacing*(h sin(az) sin(el) + v cos(el))).

    Indices run h = 0..P_H-1, v = 0..P_V-1; the flat output is row-major in
    (h, v) with v fastest.  No 1/sqrt(P_H*P_V) prefactor.
    """
    ph, pv = int(dims[0]), int(dims[1])
    if ph < 1 or pv < 1:
        raise ValueError(f"array dims must be >= 1 each, got {dims}")
    h = np.arange(ph)[:, None]
    v = np.arange(pv)[None, :]
    phase = 2.0 * np.pi * spacing * (h * np.sin(azimuth) * np.sin(elevation)
                                     + v * np.cos(elevation))
    return np.exp(1j * phase).reshape(-1)


def draw_ue_positions(geometry: SystemGeometry, rng: np.random.Generator) -> np.ndarray:
    """Draw num_users positions uniformly over the UE disk (area-uniform)."""
    u = geometry.num_users
    radii = geometry.ue_circle_radius * np.sqrt(rng.uniform(size=u))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=u)
    center = np.asarray(geometry.ue_circle_center, dtype=float)
    pos = np.tile(center, (u, 1))
    pos[:, 0] += radii * np.cos(theta)
    pos[:, 1] += radii * np.sin(theta)
    return pos


def build_stats(geometry: SystemGeometry, ue_positions) -> ChannelStats:
    """Assemble ChannelStats for given UE positions inside the configured disk."""
    pos = np.atleast_2d(np.asarray(ue_positions, dtype=float))
    u = geometry.num_users
    if pos.shape != (u, 3):
        raise ValueError(f"expected {u} UE positions of dim 3, got shape {pos.shape}")
    center = np.asarray(geometry.ue_circle_center, dtype=float)
    offsets = np.linalg.norm(pos - center, axis=1)
    if np.any(offsets > geometry.ue_circle_radius * (1 + 1e-9) + 1e-12):
        raise ValueError("UE positions must lie inside the configured circle")

    n = geometry.num_bs_antennas
    m = geometry.num_ris_elements
    bs = np.asarray(geometry.bs_pos, dtype=float)
    ris = np.asarray(geometry.ris_pos, dtype=float)

    delta_u0 = np.empty(u)
    delta_u2 = np.empty(u)
    hbar_u0 = np.empty((u, n), dtype=complex)
    hbar_u2 = np.empty((u, m), dtype=complex)
    for i in range(u):
        d0 = float(np.linalg.norm(pos[i] - bs))
        delta_u0[i] = pathloss_linear(d0, geometry.alpha0, geometry.pl0_db)
        az, el = angles_between(bs, pos[i])
        hbar_u0[i] = upa_steering(az, el, geometry.bs_dims, geometry.element_spacing)
        d2 = float(np.linalg.norm(pos[i] - ris))
        delta_u2[i] = pathloss_linear(d2, geometry.alpha2, geometry.pl0_db)
        if m > 0:
            az2, el2 = angles_between(ris, pos[i])
            hbar_u2[i] = upa_steering(az2, el2, geometry.ris_dims, geometry.element_spacing)

    d1 = float(np.linalg.norm(ris - bs))
    delta_1 = pathloss_linear(d1, geometry.alpha1, geometry.pl0_db)
    if m > 0:
        a_ris = upa_steering(*angles_between(ris, bs), geometry.ris_dims,
                             geometry.element_spacing)
        a_bs = upa_steering(*angles_between(bs, ris), geometry.bs_dims,
                            geometry.element_spacing)
        Hbar_1 = a_ris[:, None] * np.conj(a_bs)[None, :]
    else:
        Hbar_1 = np.zeros((0, n), dtype=complex)

    return ChannelStats(
        delta_u0=delta_u0,
        delta_u2=delta_u2,
        delta_1=delta_1,
        kappa_u0=np.full(u, db_to_linear(geometry.kappa_u0_db)),
        kappa_u2=np.full(u, db_to_linear(geometry.kappa_u2_db)),
        kappa_1=db_to_linear(geometry.kappa1_db),
        hbar_u0=hbar_u0,
        hbar_u2=hbar_u2,
        Hbar_1=Hbar_1,
        ue_positions=pos,
    )


def _rician_mix(delta, kappa, los, nlos):
    delta = np.asarray(delta, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    a = np.sqrt(delta * kappa / (1.0 + kappa))
    b = np.sqrt(delta / (1.0 + kappa))
    return a * los + b * nlos


def _cn_unit(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric complex Gaussian, zero mean, unit variance per entry."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_channels(stats: ChannelStats, rng: np.random.Generator) -> ChannelRealization:
    """Draw one Rician realization of every link; deterministic given the rng state."""
    u, n = stats.hbar_u0.shape
    m = stats.num_ris_elements
    h_u0 = _rician_mix(stats.delta_u0[:, None], stats.kappa_u0[:, None],
                       stats.hbar_u0, _cn_unit(rng, (u, n)))
    H_1 = _rician_mix(stats.delta_1, stats.kappa_1, stats.Hbar_1, _cn_unit(rng, (m, n)))
    h_u2 = _rician_mix(stats.delta_u2[:, None], stats.kappa_u2[:, None],
                       stats.hbar_u2, _cn_unit(rng, (u, m)))
    return ChannelRealization(h_u0=h_u0, H_1=H_1, h_u2=h_u2)


def sample_channels_batch(stats: ChannelStats, n_samples: int,
                          rng: np.random.Generator) -> ChannelRealization:
    """Draw n_samples i.i.d. realizations with a leading sample axis on every field."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    u, n = stats.hbar_u0.shape
    m = stats.num_ris_elements
    h_u0 = _rician_mix(stats.delta_u0[None, :, None], stats.kappa_u0[None, :, None],
                       stats.hbar_u0[None], _cn_unit(rng, (n_samples, u, n)))
    H_1 = _rician_mix(stats.delta_1, stats.kappa_1, stats.Hbar_1[None],
                      _cn_unit(rng, (n_samples, m, n)))
    h_u2 = _rician_mix(stats.delta_u2[None, :, None], stats.kappa_u2[None, :, None],
                       stats.hbar_u2[None], _cn_unit(rng, (n_samples, u, m)))
    return ChannelRealization(h_u0=h_u0, H_1=H_1, h_u2=h_u2)
