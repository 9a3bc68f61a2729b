"""On-policy training: rollouts, GAE, the clipped surrogate, and the A2C baseline.

The update schedule follows the actor-critic loop literally: run the current
policy for a short horizon, estimate advantages by the backward GAE recursion,
then take K full-batch epochs on (clipped surrogate + 0.5 * value MSE) before
syncing the acting policy.  Episodes are plain step-count truncations, so the
bootstrap value of the final observation closes every segment.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
import numpy as np

from . import kernels, nets
from .nets import AdamState, PolicySpec

__all__ = [
    "TrainConfig",
    "RolloutBuffer",
    "TrainResult",
    "TrainingDiverged",
    "compute_gae",
    "normalize_advantages",
    "rollout",
    "clipped_surrogate",
    "value_loss",
    "a2c_policy_loss",
    "train",
    "a2c_train",
    "SMOOTHING_WINDOW",
    "VALUE_LOSS_COEF",
]

SMOOTHING_WINDOW = 100
VALUE_LOSS_COEF = 0.5
_ADV_STD_FLOOR = 1e-8

LOG_COLUMNS = ("episode", "cumulative_reward", "smoothed_reward",
               "mean_value_loss", "mean_policy_loss", "wall_seconds")


@dataclass
class TrainConfig:
    """Training hyperparameters; defaults are the common full-scale settings."""

    gamma: float = 0.995
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    horizon: int = 10
    epochs: int = 100
    minibatch: int = 10
    lr: float = 1.5e-4
    episodes: int = 2000
    episode_length: int = 4000

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be > 0")
        if self.minibatch > self.horizon:
            raise ValueError("minibatch must be <= horizon")
        if min(self.horizon, self.epochs, self.minibatch,
               self.episodes, self.episode_length) < 1:
            raise ValueError("horizon, epochs, minibatch, episodes, episode_length >= 1")


@dataclass
class RolloutBuffer:
    """Per-timestep records of one on-policy segment."""

    observations: np.ndarray  # (T, obs_dim)
    raw_actions: np.ndarray  # (T, action_dim), pre-clip samples
    log_probs: np.ndarray  # (T,), densities under the acting policy
    rewards: np.ndarray  # (T,)
    values: np.ndarray  # (T,)
    dones: np.ndarray  # (T,) bool

    def __len__(self) -> int:
        return self.rewards.shape[0]


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite; carries the partial training log."""

    def __init__(self, message: str, log: list[dict]):
        super().__init__(message)
        self.log = log


def compute_gae(rewards, values, gamma: float, lam: float) -> np.ndarray:
    """GAE advantages; values has one more entry (the bootstrap) than rewards."""
    rewards = np.ascontiguousarray(rewards, dtype=float)
    values = np.ascontiguousarray(values, dtype=float)
    if values.shape[0] != rewards.shape[0] + 1:
        raise ValueError("values must have length len(rewards) + 1")
    return kernels.gae_advantages(rewards, values, float(gamma), float(lam))


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    """Zero-mean unit-std per batch; returned unchanged when std is ~zero."""
    adv = np.asarray(adv, dtype=float)
    std = adv.std()
    if std < _ADV_STD_FLOOR:
        return adv.copy()
    return (adv - adv.mean()) / std


def rollout(env, spec: PolicySpec, theta: np.ndarray, horizon: int,
            rng: np.random.Generator, obs: np.ndarray):
    """Run the policy for up to `horizon` steps (stopping at done).

    Returns (buffer, bootstrap_value, next_obs).  Values and log-probs are
    evaluated in one batched pass at the end so the stored densities match the
    optimizer's own recomputation bit for bit.
    """
    layout = spec.layout
    log_std = spec.view(theta, "log_std")
    obs_rows = []
    raw_rows = []
    rewards = []
    dones = []
    cur = np.ascontiguousarray(obs, dtype=float)
    for _ in range(horizon):
        mean = nets.actor_forward(spec, theta, cur)
        sample = nets.policy_sample(mean, log_std, rng)
        nxt, reward, done = env.step(sample.action)
        obs_rows.append(cur)
        raw_rows.append(sample.raw)
        rewards.append(reward)
        dones.append(done)
        cur = np.ascontiguousarray(nxt, dtype=float)
        if done:
            break

    obs_batch = np.ascontiguousarray(np.stack(obs_rows), dtype=float)
    raw_batch = np.ascontiguousarray(np.stack(raw_rows), dtype=float)
    with_final = np.ascontiguousarray(np.vstack([obs_batch, cur[None, :]]))
    values_all = kernels.critic_forward(theta, layout, with_final)
    log_probs = kernels.actor_log_prob(theta, layout, obs_batch, raw_batch)
    buffer = RolloutBuffer(
        observations=obs_batch,
        raw_actions=raw_batch,
        log_probs=np.asarray(log_probs, dtype=float),
        rewards=np.asarray(rewards, dtype=float),
        values=np.asarray(values_all[:-1], dtype=float),
        dones=np.asarray(dones, dtype=bool),
    )
    return buffer, float(values_all[-1]), cur


def clipped_surrogate(spec: PolicySpec, theta: np.ndarray, observations,
                      raw_actions, log_probs_old, advantages,
                      clip_eps: float) -> float:
    """Negated clipped objective, advantages normalized per batch."""
    obs = np.ascontiguousarray(observations, dtype=float)
    z = np.ascontiguousarray(raw_actions, dtype=float)
    adv = normalize_advantages(advantages)
    zero_ret = np.zeros(obs.shape[0])
    _, policy_loss, _ = kernels.ppo_loss_grad(
        theta, spec.layout, obs, z,
        np.ascontiguousarray(log_probs_old, dtype=float), adv, zero_ret,
        float(clip_eps), VALUE_LOSS_COEF)
    return float(policy_loss)


def value_loss(spec: PolicySpec, theta: np.ndarray, observations,
               returns) -> float:
    """Mean squared error of the critic against empirical returns."""
    preds = nets.critic_forward(spec, theta, np.atleast_2d(observations))
    resid = preds - np.asarray(returns, dtype=float)
    return float(np.mean(resid ** 2))


def a2c_policy_loss(spec: PolicySpec, theta: np.ndarray, observations,
                    raw_actions, advantages) -> float:
    """Plain policy-gradient loss -mean(logpi * advantage), normalized batch."""
    obs = np.ascontiguousarray(observations, dtype=float)
    z = np.ascontiguousarray(raw_actions, dtype=float)
    adv = normalize_advantages(advantages)
    zero_ret = np.zeros(obs.shape[0])
    _, policy_loss, _ = kernels.a2c_loss_grad(theta, spec.layout, obs, z,
                                              adv, zero_ret, VALUE_LOSS_COEF)
    return float(policy_loss)


@dataclass
class TrainResult:
    spec: PolicySpec
    params: np.ndarray
    log: list[dict] = field(default_factory=list)
    algo: str = "ppo"


def _update_ppo(theta, layout, adam, buffer, adv, ret, config, logp_old):
    pol_sum = 0.0
    val_sum = 0.0
    for _ in range(config.epochs):
        grad, pol, val = kernels.ppo_loss_grad(
            theta, layout, buffer.observations, buffer.raw_actions, logp_old,
            adv, ret, config.clip_eps, VALUE_LOSS_COEF)
        adam.step += 1
        kernels.adam_step(theta, grad, adam.m, adam.v, float(adam.step), config.lr,
                          nets.ADAM_BETA1, nets.ADAM_BETA2, nets.ADAM_EPS)
        pol_sum += pol
        val_sum += val
    return pol_sum / config.epochs, val_sum / config.epochs


def _update_a2c(theta, layout, adam, buffer, adv, ret, config, logp_old):
    grad, pol, val = kernels.a2c_loss_grad(
        theta, layout, buffer.observations, buffer.raw_actions, adv, ret,
        VALUE_LOSS_COEF)
    adam.step += 1
    kernels.adam_step(theta, grad, adam.m, adam.v, float(adam.step), config.lr,
                      nets.ADAM_BETA1, nets.ADAM_BETA2, nets.ADAM_EPS)
    return pol, val


def _train_loop(env_factory, config: TrainConfig, rng: np.random.Generator,
                update_fn, algo: str) -> TrainResult:
    env = env_factory()
    spec = PolicySpec(env.observation_dim, env.action_dim)
    theta = nets.init_params(spec, rng)
    layout = spec.layout
    adam = AdamState.zeros(spec.num_params)

    log: list[dict] = []
    reward_history: list[float] = []
    for episode in range(1, config.episodes + 1):
        t_start = time.perf_counter()
        obs = env.reset()
        theta_old = theta.copy()
        ep_reward = 0.0
        pol_losses = []
        val_losses = []
        steps_left = config.episode_length
        while steps_left > 0:
            horizon = min(config.horizon, steps_left)
            buffer, bootstrap, obs = rollout(env, spec, theta_old, horizon,
                                             rng, obs)
            steps_left -= len(buffer)
            ep_reward += float(buffer.rewards.sum())
            values_ext = np.concatenate([buffer.values, [bootstrap]])
            adv_raw = compute_gae(buffer.rewards, values_ext, config.gamma,
                                  config.gae_lambda)
            ret = adv_raw + buffer.values
            adv = normalize_advantages(adv_raw)
            pol, val = update_fn(theta, layout, adam, buffer, adv, ret, config,
                                 buffer.log_probs)
            if not (np.isfinite(pol) and np.isfinite(val)):
                raise TrainingDiverged(
                    f"non-finite loss at episode {episode} "
                    f"(policy {pol}, value {val})", log)
            pol_losses.append(pol)
            val_losses.append(val)
            theta_old = theta.copy()

        reward_history.append(ep_reward)
        window = reward_history[-SMOOTHING_WINDOW:]
        log.append({
            "episode": episode,
            "cumulative_reward": ep_reward,
            "smoothed_reward": float(np.mean(window)),
            "mean_value_loss": float(np.mean(val_losses)),
            "mean_policy_loss": float(np.mean(pol_losses)),
            "wall_seconds": time.perf_counter() - t_start,
        })
    return TrainResult(spec=spec, params=theta, log=log, algo=algo)


def train(env_factory, config: TrainConfig, rng: np.random.Generator) -> TrainResult:
    """Clipped-surrogate training over `config.episodes` episodes."""
    return _train_loop(env_factory, config, rng, _update_ppo, "ppo")


def a2c_train(env_factory, config: TrainConfig, rng: np.random.Generator) -> TrainResult:
    """Advantage actor-critic baseline: one plain policy-gradient epoch per rollout."""
    return _train_loop(env_factory, config, rng, _update_a2c, "a2c")
