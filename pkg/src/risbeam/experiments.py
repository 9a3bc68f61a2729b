"""Study runners: convergence, the three sweeps, covariance verification, eval.

Every runner is deterministic given its config: RNG streams are spawned from
(seed, role) pairs, sweep tasks are enumerated in grid order, and parallel
execution (``jobs > 1``) only farms out independent tasks whose results are
merged back in that fixed order.

The evaluation protocol shared by the sweeps: reset a fresh environment with
an evaluation seed, run the trained policy greedily (action = mean) for a
fixed number of steps, keep the best-reward solution of the episode, and
score it twice: on the variant's own objective (its environment reward) and
on a common Monte-Carlo ergodic sum rate so different CSI assumptions are
compared on the same physical quantity.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import nets
from .config import ExperimentConfig
from .covariance import (closed_form_terms, covariance_monte_carlo,
                         covariance_set)
from .envs import BeamformingEnv, EnvConfig, quantize_phases
from .geometry import SystemGeometry, build_stats
from .ppo import TrainConfig, TrainResult, a2c_train, train
from .rates import ergodic_sum_rate_mc, scsi_sum_rate

__all__ = [
    "VARIANTS",
    "SWEEP_VARIANTS",
    "EvalSummary",
    "train_variant",
    "evaluate_variant",
    "random_policy_mean_reward",
    "geometry_for_distance",
    "geometry_for_rician",
    "run_convergence",
    "run_distance_sweep",
    "run_power_sweep",
    "run_rician_sweep",
    "run_verify_covariance",
    "write_csv",
]

# variant name -> (environment scenario, training algorithm)
VARIANTS = {
    "scsi_ppo": ("scsi_joint", "ppo"),
    "scsi_a2c": ("scsi_joint", "a2c"),
    "no_ris": ("no_ris", "ppo"),
    "random_phase": ("random_phase", "ppo"),
    "icsi_ppo": ("icsi", "ppo"),
}
SWEEP_VARIANTS = ("scsi_ppo", "scsi_a2c", "random_phase", "no_ris", "icsi_ppo")

# RNG roles, combined with the experiment seed into independent streams
_ROLE_POLICY = 0
_ROLE_ENV = 1
_ROLE_EVAL_ENV = 2
_ROLE_EVAL_MC = 3
_ROLE_RANDOM_BASELINE = 4


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed),
                                                        spawn_key=tuple(key)))


def make_env_factory(scenario: str, geometry: SystemGeometry,
                     episode_length: int, seed: int, role: int = _ROLE_ENV):
    def factory() -> BeamformingEnv:
        cfg = EnvConfig(scenario=scenario, geometry=geometry,
                        episode_length=episode_length, seed=0)
        return BeamformingEnv(cfg, rng=_rng(seed, role))
    return factory


def train_variant(variant: str, geometry: SystemGeometry, train_cfg: TrainConfig,
                  seed: int) -> TrainResult:
    """Train one variant with policy/env RNG streams derived from the seed."""
    scenario, algo = VARIANTS[variant]
    factory = make_env_factory(scenario, geometry, train_cfg.episode_length, seed)
    rng = _rng(seed, _ROLE_POLICY)
    runner = train if algo == "ppo" else a2c_train
    return runner(factory, train_cfg, rng)


def greedy_rollout(env: BeamformingEnv, spec, theta, steps: int):
    """Deterministic rollout (action = policy mean); returns the best solution."""
    obs = env.reset()
    best_solution = None
    best_reward = -np.inf
    for _ in range(steps):
        mean = nets.actor_forward(spec, theta, obs)
        obs, reward, done = env.step(np.clip(mean, -1.0, 1.0))
        if reward > best_reward:
            best_reward = reward
            best_solution = env.current_solution.copy()
        if done:
            break
    return best_solution, float(best_reward)


@dataclass
class EvalSummary:
    objective_rate: float  # mean over eval episodes of the variant's own reward
    ergodic_rate: float  # mean over eval episodes of the common MC metric


def evaluate_variant(variant: str, geometry: SystemGeometry,
                     result: TrainResult, config: ExperimentConfig,
                     seed: int) -> EvalSummary:
    scenario, _ = VARIANTS[variant]
    objectives = []
    ergodics = []
    for episode in range(config.eval_episodes):
        env = BeamformingEnv(
            EnvConfig(scenario=scenario, geometry=geometry,
                      episode_length=config.eval_steps, seed=0),
            rng=_rng(seed, _ROLE_EVAL_ENV, episode))
        solution, objective = greedy_rollout(env, result.spec, result.params,
                                             config.eval_steps)
        mc_rng = _rng(seed, _ROLE_EVAL_MC, episode)
        ergodic, _ = ergodic_sum_rate_mc(env.stats, solution, env.power_w,
                                         env.noise_w, config.eval_mc_samples,
                                         mc_rng)
        objectives.append(objective)
        ergodics.append(ergodic)
    return EvalSummary(objective_rate=float(np.mean(objectives)),
                       ergodic_rate=float(np.mean(ergodics)))


def random_policy_mean_reward(scenario: str, geometry: SystemGeometry,
                              train_cfg: TrainConfig, seed: int,
                              episodes: int = 20) -> float:
    """Mean episode cumulative reward under uniform random actions."""
    env = BeamformingEnv(
        EnvConfig(scenario=scenario, geometry=geometry,
                  episode_length=train_cfg.episode_length, seed=0),
        rng=_rng(seed, _ROLE_RANDOM_BASELINE, 0))
    rng = _rng(seed, _ROLE_RANDOM_BASELINE, 1)
    totals = []
    for _ in range(episodes):
        env.reset()
        total = 0.0
        done = False
        while not done:
            action = rng.uniform(-1.0, 1.0, env.action_dim)
            _, reward, done = env.step(action)
            total += reward
        totals.append(total)
    return float(np.mean(totals))


# ---------------------------------------------------------------------------
# geometry overrides for the sweep axes
# ---------------------------------------------------------------------------

def geometry_for_distance(geometry: SystemGeometry, d: float) -> SystemGeometry:
    """Single user pinned at 3-D distance d from the RIS, on the ground plane.

    The user sits on the +x ray from the RIS ground projection, so the RIS-UE
    distance is exactly d while the BS-UE distance grows with d.
    """
    ris = geometry.ris_pos
    if d <= abs(ris[2]):
        raise ValueError(f"distance {d} must exceed the RIS height {ris[2]}")
    x = float(np.sqrt(d ** 2 - ris[2] ** 2))
    center = (ris[0] + x, ris[1], 0.0)
    return replace(geometry, num_users=1, ue_circle_center=center,
                   ue_circle_radius=0.0)


def geometry_for_rician(geometry: SystemGeometry, kappa_db: float) -> SystemGeometry:
    """Shared RIS-link Rician factor, fully Rayleigh direct link (kappa_u0 = 0)."""
    return replace(geometry, kappa1_db=kappa_db, kappa_u2_db=kappa_db,
                   kappa_u0_db=float("-inf"))


# ---------------------------------------------------------------------------
# study runners
# ---------------------------------------------------------------------------

def run_convergence(config: ExperimentConfig,
                    algos: tuple[str, ...] = ("ppo",)) -> dict[str, TrainResult]:
    """Train the configured scenario once per algorithm with the first seed."""
    seed = config.seeds[0]
    out = {}
    for algo in algos:
        if algo not in ("ppo", "a2c"):
            raise ValueError(f"unknown algorithm {algo!r}")
        factory = make_env_factory(config.scenario, config.geometry,
                                   config.train.episode_length, seed)
        rng = _rng(seed, _ROLE_POLICY)
        runner = train if algo == "ppo" else a2c_train
        out[algo] = runner(factory, config.train, rng)
    return out


def _sweep_task(payload: dict) -> dict:
    """One (axis value, variant, seed) training + evaluation; pool-friendly."""
    config = ExperimentConfig.from_dict(payload["config"])
    variant = payload["variant"]
    seed = payload["seed"]
    axis = payload["axis"]
    value = payload["value"]

    geometry = config.geometry
    if axis == "power_dbm":
        geometry = replace(geometry, tx_power_dbm=float(value))
    elif axis == "rician_db":
        geometry = geometry_for_rician(geometry, float(value))
    elif axis == "distance":
        geometry = geometry_for_distance(geometry, float(value))
    elif axis != "none":
        raise ValueError(f"unknown sweep axis {axis!r}")

    result = train_variant(variant, geometry, config.train, seed)
    summary = evaluate_variant(variant, geometry, result, config, seed)
    row = {
        "axis": axis,
        "value": value,
        "variant": variant,
        "seed": seed,
        "objective_rate": summary.objective_rate,
        "ergodic_rate": summary.ergodic_rate,
    }
    if payload.get("quantization_bits"):
        row["quantized"] = _quantized_rates(
            variant, geometry, result, config, seed,
            payload["quantization_bits"])
    return row


def _quantized_rates(variant, geometry, result: TrainResult,
                     config: ExperimentConfig, seed: int,
                     bits_list) -> dict:
    """Surrogate rate of the evaluated solution at continuous and quantized phases."""
    scenario, _ = VARIANTS[variant]
    per_level: dict[str, list[float]] = {"continuous": []}
    for bits in bits_list:
        per_level[str(bits)] = []
    for episode in range(config.eval_episodes):
        env = BeamformingEnv(
            EnvConfig(scenario=scenario, geometry=geometry,
                      episode_length=config.eval_steps, seed=0),
            rng=_rng(seed, _ROLE_EVAL_ENV, episode))
        solution, _ = greedy_rollout(env, result.spec, result.params,
                                     config.eval_steps)
        stats = env.stats
        covs = covariance_set(stats, solution.xi)
        per_level["continuous"].append(
            scsi_sum_rate(covs, solution.beamformers, env.power_w, env.noise_w))
        for bits in bits_list:
            xi_q = quantize_phases(solution.xi, bits)
            covs_q = covariance_set(stats, xi_q)
            per_level[str(bits)].append(
                scsi_sum_rate(covs_q, solution.beamformers, env.power_w,
                              env.noise_w))
    return {level: float(np.mean(vals)) for level, vals in per_level.items()}


def _run_tasks(tasks: list[dict], jobs: int) -> list[dict]:
    if jobs <= 1:
        return [_sweep_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_task, tasks))


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=0))


def run_power_sweep(config: ExperimentConfig,
                    variants: tuple[str, ...] = SWEEP_VARIANTS,
                    jobs: int = 1) -> list[dict]:
    """Rows (p_dbm, variant, objective mean/std, ergodic mean/std over seeds)."""
    values = config.sweep_values
    tasks = [
        {"config": config.to_dict(), "axis": "power_dbm", "value": v,
         "variant": variant, "seed": seed}
        for v in values for variant in variants for seed in config.seeds
    ]
    results = _run_tasks(tasks, jobs)
    return _aggregate(results, "p_dbm", values, variants, config.seeds)


def run_rician_sweep(config: ExperimentConfig,
                     variants: tuple[str, ...] = SWEEP_VARIANTS,
                     jobs: int = 1) -> list[dict]:
    """Rows (kappa_db, variant, objective mean/std, ergodic mean/std over seeds)."""
    values = config.sweep_values
    tasks = [
        {"config": config.to_dict(), "axis": "rician_db", "value": v,
         "variant": variant, "seed": seed}
        for v in values for variant in variants for seed in config.seeds
    ]
    results = _run_tasks(tasks, jobs)
    return _aggregate(results, "kappa_db", values, variants, config.seeds)


def _aggregate(results: list[dict], axis_name: str, values, variants,
               seeds) -> list[dict]:
    by_key = {}
    for row in results:
        by_key.setdefault((row["value"], row["variant"]), []).append(row)
    out = []
    for v in values:
        for variant in variants:
            group = by_key[(v, variant)]
            obj_mean, obj_std = _mean_std([r["objective_rate"] for r in group])
            erg_mean, erg_std = _mean_std([r["ergodic_rate"] for r in group])
            out.append({
                axis_name: v,
                "variant": variant,
                "objective_rate_mean": obj_mean,
                "objective_rate_std": obj_std,
                "ergodic_rate_mean": erg_mean,
                "ergodic_rate_std": erg_std,
            })
    return out


def run_distance_sweep(config: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """Rows (d, q_bits, mean/std surrogate sum rate over seeds), scsi_ppo only.

    Trains a single-user agent per distance, then scores the final solution at
    continuous phases and at each quantization level.
    """
    values = config.sweep_values
    bits = list(config.quantization_bits)
    tasks = [
        {"config": config.to_dict(), "axis": "distance", "value": v,
         "variant": "scsi_ppo", "seed": seed, "quantization_bits": bits}
        for v in values for seed in config.seeds
    ]
    results = _run_tasks(tasks, jobs)
    by_value = {}
    for row in results:
        by_value.setdefault(row["value"], []).append(row)
    levels = ["continuous"] + [str(b) for b in bits]
    out = []
    for v in values:
        group = by_value[v]
        for level in levels:
            mean, std = _mean_std([r["quantized"][level] for r in group])
            out.append({"d": v, "q_bits": level, "sum_rate_mean": mean,
                        "sum_rate_std": std})
    return out


def run_verify_covariance(config: ExperimentConfig,
                          kappa_grid: tuple[float, ...] = (0.1, 1.0, 10.0),
                          n_samples: int = 200000,
                          seed: int | None = None) -> list[dict]:
    """Per-term and total relative Frobenius errors of the closed form vs MC.

    Grid rows scan linear (kappa_1, kappa_u2) pairs at the configured
    geometry; two anchor rows exercise the deterministic limit (huge kappas)
    and the vanishing cascade (delta_u2 = 0).
    """
    seed = config.seeds[0] if seed is None else seed
    geometry = replace(config.geometry, num_users=1)
    rows = []

    def _one(case: str, kappa1_lin: float, kappa2_lin: float, row_seed: int,
             zero_delta_u2: bool = False) -> dict:
        rng = _rng(row_seed, 7)
        stats = build_stats(geometry,
                            np.asarray([geometry.ue_circle_center], dtype=float))
        stats.kappa_1 = float(kappa1_lin)
        stats.kappa_u2[:] = kappa2_lin
        if zero_delta_u2:
            stats.delta_u2[:] = 0.0
        m = stats.num_ris_elements
        xi = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, m))
        terms = closed_form_terms(stats, xi, 0)
        cf_a = terms["direct_los"] + terms["direct_diffuse"]
        cf_bc = terms["cross"]
        cf_d = terms["cascade_diffuse"] + terms["bs_outer"] + terms["cascade_los"]
        mc = covariance_monte_carlo(stats, xi, 0, n_samples, rng,
                                    return_terms=True)
        return {
            "case": case,
            "kappa1": kappa1_lin,
            "kappa_u2": kappa2_lin,
            "err_a": _rel_frob(cf_a, mc.A),
            "err_bc": _rel_frob(cf_bc, mc.BC),
            "err_d": _rel_frob(cf_d, mc.D),
            "err_total": _rel_frob(cf_a + cf_bc + cf_d, mc.total),
        }

    for i, k1 in enumerate(kappa_grid):
        for j, k2 in enumerate(kappa_grid):
            rows.append(_one("grid", k1, k2, seed + 101 * i + j))
    big = 1e12
    rows.append(_one("kappa_inf", big, big, seed + 9001))
    rows.append(_one("delta_u2_zero", 10.0, 10.0, seed + 9002,
                     zero_delta_u2=True))
    return rows


def _rel_frob(approx: np.ndarray, reference: np.ndarray) -> float:
    num = float(np.linalg.norm(approx - reference))
    den = float(np.linalg.norm(reference))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header: list[str], rows: list[dict]):
    """Schema-stable CSV: fixed header, rows in the order given, repr floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[key]) for key in header])
