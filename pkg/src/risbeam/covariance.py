"""Closed-form statistical covariance of the effective channel and its MC oracle.

The closed form for one user decomposes into five pieces (written for the
effective row channel h^T = h_{u,0}^T + h_{u,2}^T Xi H_1 with unnormalized
steering vectors):

  direct_los        (d0*k0/(1+k0)) * conj(hb0) hb0^T
  direct_diffuse    (d0/(1+k0)) * I
  cascade_diffuse   (M*d1*d2/(1+k1)) * I
  cross             c3 * (conj(hb0) row^T + conj(row) hb0^T),  row = (xi*hb2) Hb1
  bs_outer          c4 * Hb1^H Hb1           (= M * a_bs a_bs^H)
  cascade_los       c5 * conj(row) row^T

with c3 = sqrt(d1*d0*d2*k1*k0*k2 / ((1+k1)(1+k0)(1+k2))),
c4 = d1*d2*k1 / ((1+k1)(1+k2)) and c5 = d1*d2*k1*k2 / ((1+k1)(1+k2)).

The Monte-Carlo oracle estimates E[conj(h) h^T] directly from channel draws
and is the arbiter for the closed form; it also reports the grouped pieces
(A = direct terms, BC = cross term, D = cascade terms) for per-term checks.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .geometry import ChannelStats, sample_channels_batch

__all__ = [
    "CovarianceSet",
    "CovarianceBuilder",
    "closed_form_terms",
    "covariance_closed_form",
    "covariance_set",
    "covariance_monte_carlo",
    "MonteCarloTerms",
]

_HERMITIAN_ATOL = 1e-10
_PSD_RTOL = 1e-8


@dataclass
class CovarianceSet:
    """Per-user covariance matrices plus the reflection diagonal they embed."""

    matrices: np.ndarray  # (U, N, N) complex
    xi: np.ndarray  # (M,) complex, the diagonal used to build them

    @property
    def num_users(self) -> int:
        return self.matrices.shape[0]

    def validate(self):
        """Assert Hermitian symmetry and positive semidefiniteness per user."""
        for c in self.matrices:
            herm_err = np.max(np.abs(c - c.conj().T))
            if herm_err > _HERMITIAN_ATOL:
                raise ValueError(f"covariance not Hermitian: max asym {herm_err:.3e}")
            eigs = np.linalg.eigvalsh(0.5 * (c + c.conj().T))
            tr = float(np.real(np.trace(c)))
            if eigs[0] < -_PSD_RTOL * max(tr, 0.0):
                raise ValueError(f"covariance not PSD: min eig {eigs[0]:.3e}, trace {tr:.3e}")


def _check_xi(xi: np.ndarray, m: int) -> np.ndarray:
    xi = np.asarray(xi, dtype=complex).reshape(-1)
    if xi.shape[0] != m:
        raise ValueError(f"xi has length {xi.shape[0]}, expected {m}")
    if m and np.max(np.abs(np.abs(xi) - 1.0)) > 1e-8:
        raise ValueError("xi entries must have unit modulus")
    return xi


def closed_form_terms(stats: ChannelStats, xi, user: int) -> dict[str, np.ndarray]:
    """The five-piece decomposition (six named arrays, identity split in two)."""
    n = stats.num_bs_antennas
    m = stats.num_ris_elements
    xi = _check_xi(xi, m)

    d0 = stats.delta_u0[user]
    d2 = stats.delta_u2[user]
    d1 = stats.delta_1
    k0 = stats.kappa_u0[user]
    k2 = stats.kappa_u2[user]
    k1 = stats.kappa_1
    hb0 = stats.hbar_u0[user]
    hb2 = stats.hbar_u2[user]
    Hb1 = stats.Hbar_1

    eye = np.eye(n, dtype=complex)
    row = (hb2 * xi) @ Hb1 if m else np.zeros(n, dtype=complex)  # hb2^T Xi Hb1

    direct_los = (d0 * k0 / (1.0 + k0)) * np.outer(np.conj(hb0), hb0)
    direct_diffuse = (d0 / (1.0 + k0)) * eye
    cascade_diffuse = (m * d1 * d2 / (1.0 + k1)) * eye
    c3 = np.sqrt(d1 * d0 * d2 * k1 * k0 * k2 / ((1.0 + k1) * (1.0 + k0) * (1.0 + k2)))
    half_cross = c3 * np.outer(np.conj(hb0), row)
    cross = half_cross + half_cross.conj().T
    c4 = d1 * d2 * k1 / ((1.0 + k1) * (1.0 + k2))
    bs_outer = c4 * (Hb1.conj().T @ Hb1)
    c5 = d1 * d2 * k1 * k2 / ((1.0 + k1) * (1.0 + k2))
    cascade_los = c5 * np.outer(np.conj(row), row)

    return {
        "direct_los": direct_los,
        "direct_diffuse": direct_diffuse,
        "cascade_diffuse": cascade_diffuse,
        "cross": cross,
        "bs_outer": bs_outer,
        "cascade_los": cascade_los,
    }


def covariance_closed_form(stats: ChannelStats, xi, user: int) -> np.ndarray:
    """Closed-form E[conj(h_u) h_u^T] for one user; requires unit-modulus xi."""
    terms = closed_form_terms(stats, xi, user)
    return sum(terms.values())


def covariance_set(stats: ChannelStats, xi) -> CovarianceSet:
    """Closed-form covariances for all users under one reflection diagonal."""
    u = stats.num_users
    n = stats.num_bs_antennas
    xi = _check_xi(xi, stats.num_ris_elements)
    mats = np.empty((u, n, n), dtype=complex)
    for i in range(u):
        mats[i] = covariance_closed_form(stats, xi, i)
    return CovarianceSet(matrices=mats, xi=xi)


class CovarianceBuilder:
    """Rebuilds the closed-form set quickly as xi changes (stats held fixed).

    The xi-independent pieces (direct terms, diffuse identities and the
    cascade outer product) are summed once; each build only recomputes the
    cross and cascade-LoS terms.  Agrees with covariance_set to rounding.
    """

    def __init__(self, stats: ChannelStats):
        self.stats = stats
        u = stats.num_users
        n = stats.num_bs_antennas
        ones = np.ones(stats.num_ris_elements, dtype=complex)
        self._static = np.empty((u, n, n), dtype=complex)
        self._c3 = np.empty(u)
        self._c5 = np.empty(u)
        for i in range(u):
            terms = closed_form_terms(stats, ones, i)
            self._static[i] = (terms["direct_los"] + terms["direct_diffuse"]
                               + terms["cascade_diffuse"] + terms["bs_outer"])
            d0, d2 = stats.delta_u0[i], stats.delta_u2[i]
            k0, k2 = stats.kappa_u0[i], stats.kappa_u2[i]
            d1, k1 = stats.delta_1, stats.kappa_1
            self._c3[i] = np.sqrt(d1 * d0 * d2 * k1 * k0 * k2
                                  / ((1.0 + k1) * (1.0 + k0) * (1.0 + k2)))
            self._c5[i] = d1 * d2 * k1 * k2 / ((1.0 + k1) * (1.0 + k2))
        self._conj_hb0 = np.conj(stats.hbar_u0)

    def build(self, xi) -> CovarianceSet:
        stats = self.stats
        u = stats.num_users
        xi = _check_xi(xi, stats.num_ris_elements)
        mats = self._static.copy()
        if stats.num_ris_elements:
            rows = (stats.hbar_u2 * xi[None, :]) @ stats.Hbar_1  # (U, N)
            for i in range(u):
                half = self._c3[i] * np.outer(self._conj_hb0[i], rows[i])
                mats[i] += half + half.conj().T
                mats[i] += self._c5[i] * np.outer(np.conj(rows[i]), rows[i])
        return CovarianceSet(matrices=mats, xi=xi)


@dataclass
class MonteCarloTerms:
    """Grouped sample averages: total = A + BC + D.

    A  = avg conj(h0) h0^T                      (direct link)
    BC = avg of the two cross products           (direct x cascade)
    D  = avg conj(r) r^T with r = (xi*h2) H1     (cascade link)
    """

    A: np.ndarray
    BC: np.ndarray
    D: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.A + self.BC + self.D


def covariance_monte_carlo(stats: ChannelStats, xi, user: int, n_samples: int,
                           rng: np.random.Generator, chunk: int = 20000,
                           return_terms: bool = False):
    """Sample average of conj(h_u) h_u^T over i.i.d. channel draws.

    Independent of the closed form: builds the effective channel from raw
    realizations and averages the outer product.  Samples are drawn in chunks
    from a single stream, so results are deterministic given the rng.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n = stats.num_bs_antennas
    m = stats.num_ris_elements
    xi = _check_xi(xi, m)

    acc_a = np.zeros((n, n), dtype=complex)
    acc_b = np.zeros((n, n), dtype=complex)
    acc_d = np.zeros((n, n), dtype=complex)
    remaining = int(n_samples)
    while remaining > 0:
        b = min(chunk, remaining)
        real = sample_channels_batch(stats, b, rng)
        h0 = real.h_u0[:, user, :]  # (b, N)
        if m:
            r = np.einsum("bm,bmn->bn", real.h_u2[:, user, :] * xi[None, :], real.H_1)
        else:
            r = np.zeros((b, n), dtype=complex)
        acc_a += np.einsum("bi,bj->ij", np.conj(h0), h0)
        acc_b += np.einsum("bi,bj->ij", np.conj(h0), r)
        acc_d += np.einsum("bi,bj->ij", np.conj(r), r)
        remaining -= b

    a = acc_a / n_samples
    bc = (acc_b + acc_b.conj().T) / n_samples
    d = acc_d / n_samples
    terms = MonteCarloTerms(A=a, BC=bc, D=d)
    if return_terms:
        return terms
    return terms.total
