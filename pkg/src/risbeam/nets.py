"""Dense actor/critic stack on a flat parameter vector, plus Adam and checkpoints.

Architecture (fixed shape, widths configurable): actor input -> h1 -> h2 ->
action_dim with ReLU hidden layers and a tanh output head, a learnable
state-independent log-std vector, and a critic of the same trunk with a
linear scalar head (values are unbounded, so no tanh there).  All parameters
live in a single float64 vector whose block layout is described by
:class:`PolicySpec`; the arithmetic itself is in :mod:`risbeam.kernels`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels

__all__ = [
    "PolicySpec",
    "AdamState",
    "PolicySample",
    "init_params",
    "actor_forward",
    "critic_forward",
    "log_prob",
    "policy_sample",
    "adam_step",
    "save_params",
    "load_params",
    "LOG_STD_INIT",
]

LOG_STD_INIT = float(np.log(0.5))

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_BLOCK_ORDER = (
    "actor_w1", "actor_b1", "actor_w2", "actor_b2", "actor_w3", "actor_b3",
    "log_std",
    "critic_w1", "critic_b1", "critic_w2", "critic_b2", "critic_w3", "critic_b3",
)


@dataclass(frozen=True)
class PolicySpec:
    """Shape bookkeeping for the flat parameter vector."""

    obs_dim: int
    action_dim: int
    hidden: tuple[int, int] = (64, 64)

    def __post_init__(self):
        if self.obs_dim < 1 or self.action_dim < 1:
            raise ValueError("obs_dim and action_dim must be >= 1")
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise ValueError("hidden must be a pair of positive widths")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @cached_property
    def block_shapes(self) -> dict[str, tuple[int, ...]]:
        d, a = self.obs_dim, self.action_dim
        h1, h2 = self.hidden
        return {
            "actor_w1": (d, h1), "actor_b1": (h1,),
            "actor_w2": (h1, h2), "actor_b2": (h2,),
            "actor_w3": (h2, a), "actor_b3": (a,),
            "log_std": (a,),
            "critic_w1": (d, h1), "critic_b1": (h1,),
            "critic_w2": (h1, h2), "critic_b2": (h2,),
            "critic_w3": (h2, 1), "critic_b3": (1,),
        }

    @cached_property
    def slices(self) -> dict[str, slice]:
        out = {}
        start = 0
        for name in _BLOCK_ORDER:
            size = int(np.prod(self.block_shapes[name]))
            out[name] = slice(start, start + size)
            start += size
        return out

    @cached_property
    def num_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.block_shapes.values())

    @cached_property
    def layout(self) -> np.ndarray:
        """int64 [obs, h1, h2, act, 13 block starts, total] consumed by kernels."""
        starts = [s.start for s in self.slices.values()]
        return np.array(
            [self.obs_dim, *self.hidden, self.action_dim, *starts, self.num_params],
            dtype=np.int64,
        )

    def view(self, theta: np.ndarray, name: str) -> np.ndarray:
        """Reshaped view of one parameter block (writes through to theta)."""
        return theta[self.slices[name]].reshape(self.block_shapes[name])


def init_params(spec: PolicySpec, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights, zero biases, log_std at log(0.5)."""
    theta = np.zeros(spec.num_params)
    shapes = spec.block_shapes
    for name in ("actor_w1", "actor_w2", "actor_w3",
                 "critic_w1", "critic_w2", "critic_w3"):
        fan_in, fan_out = shapes[name]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        spec.view(theta, name)[...] = rng.uniform(-bound, bound, shapes[name])
    spec.view(theta, "log_std")[...] = LOG_STD_INIT
    return theta


def _as_batch(x) -> tuple[np.ndarray, bool]:
    arr = np.ascontiguousarray(x, dtype=float)
    if arr.ndim == 1:
        return arr.reshape(1, -1), True
    return arr, False


def actor_forward(spec: PolicySpec, theta: np.ndarray, obs) -> np.ndarray:
    """Policy mean in (-1, 1); accepts a single observation or a batch."""
    batch, single = _as_batch(obs)
    if batch.shape[1] != spec.obs_dim:
        raise ValueError(f"obs dim {batch.shape[1]} != spec obs_dim {spec.obs_dim}")
    mean = kernels.actor_forward(theta, spec.layout, batch)
    return mean[0] if single else mean


def critic_forward(spec: PolicySpec, theta: np.ndarray, obs):
    """State value estimate; scalar for a single observation, (B,) for a batch."""
    batch, single = _as_batch(obs)
    if batch.shape[1] != spec.obs_dim:
        raise ValueError(f"obs dim {batch.shape[1]} != spec obs_dim {spec.obs_dim}")
    vals = kernels.critic_forward(theta, spec.layout, batch)
    return float(vals[0]) if single else vals


def log_prob(mean, log_std, z):
    """Diagonal-Gaussian log density at pre-clip point(s) z."""
    mean = np.asarray(mean, dtype=float)
    log_std = np.asarray(log_std, dtype=float)
    z = np.asarray(z, dtype=float)
    t = (z - mean) / np.exp(log_std)
    per_dim = -log_std - 0.5 * np.log(2.0 * np.pi) - 0.5 * t * t
    total = per_dim.sum(axis=-1)
    return float(total) if total.ndim == 0 else total


class PolicySample(NamedTuple):
    action: np.ndarray  # clipped to [-1, 1]
    raw: np.ndarray  # pre-clip Gaussian sample z
    log_prob: float  # density at z (unclipped)


def policy_sample(mean, log_std, rng: np.random.Generator) -> PolicySample:
    """Sample z ~ N(mean, diag(exp(log_std))^2), clip to [-1, 1], keep z's density."""
    mean = np.asarray(mean, dtype=float)
    log_std = np.asarray(log_std, dtype=float)
    z = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    return PolicySample(np.clip(z, -1.0, 1.0), z, log_prob(mean, log_std, z))


@dataclass
class AdamState:
    """First/second-moment accumulators and the step counter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, num_params: int) -> "AdamState":
        return cls(m=np.zeros(num_params), v=np.zeros(num_params), step=0)


def adam_step(theta: np.ndarray, grad: np.ndarray, state: AdamState, lr: float):
    """One bias-corrected moment update; mutates theta and state in place."""
    if theta.shape != grad.shape or theta.shape != state.m.shape:
        raise ValueError("parameter, gradient and moment shapes must match")
    state.step += 1
    kernels.adam_step(theta, np.ascontiguousarray(grad, dtype=float),
                      state.m, state.v, float(state.step), lr,
                      ADAM_BETA1, ADAM_BETA2, ADAM_EPS)


# --- checkpoint format -------------------------------------------------------
# header: magic "RISBMPOL" (8 bytes), version uint32, obs uint32, h1 uint32,
# h2 uint32, act uint32, count uint64; then count float64 values, all
# little-endian, in block-declaration order.

_MAGIC = b"RISBMPOL"
_VERSION = 1
_HEADER = struct.Struct("<8sIIIIIQ")


def save_params(path, spec: PolicySpec, theta: np.ndarray):
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != spec.num_params:
        raise ValueError("parameter vector does not match spec")
    header = _HEADER.pack(_MAGIC, _VERSION, spec.obs_dim, spec.hidden[0],
                          spec.hidden[1], spec.action_dim, theta.shape[0])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(theta.astype("<f8").tobytes())


def load_params(path) -> tuple[PolicySpec, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint")
    magic, version, obs, h1, h2, act, count = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a policy checkpoint (bad magic)")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    spec = PolicySpec(obs_dim=obs, action_dim=act, hidden=(h1, h2))
    if count != spec.num_params:
        raise ValueError(f"{path}: parameter count {count} does not match dims")
    expected = _HEADER.size + 8 * count
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(data)}")
    theta = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    return spec, theta
