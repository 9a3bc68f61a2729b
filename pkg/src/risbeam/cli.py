"""Command-line front end: training, evaluation, and the study sweeps.

Subcommands: train, eval, convergence, sweep-distance, sweep-power,
sweep-rician, verify-covariance.  All of them resolve a configuration from
``--preset`` or ``--config`` (a JSON file), then apply the narrow CLI
overrides (--seed, --scenario, --out).  Exit code 0 on success, 2 on a
contract violation, 3 when training aborts on a non-finite loss (the partial
log is still flushed).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import ExperimentConfig, load_config, preset
from .envs import SCENARIOS
from .experiments import (SWEEP_VARIANTS, VARIANTS, evaluate_variant,
                          run_convergence, run_distance_sweep,
                          run_power_sweep, run_rician_sweep,
                          run_verify_covariance, train_variant, write_csv)
from .nets import load_params, save_params
from .ppo import LOG_COLUMNS, TrainResult, TrainingDiverged

DEFAULT_POWER_GRID = tuple(float(p) for p in range(-10, 25, 5))
DEFAULT_DISTANCE_GRID = tuple(float(d) for d in range(40, 105, 5))
DEFAULT_RICIAN_GRID = (0.0, 5.0, 10.0)

_SCENARIO_TO_VARIANT = {
    "scsi_joint": "scsi_ppo",
    "no_ris": "no_ris",
    "random_phase": "random_phase",
    "icsi": "icsi_ppo",
}


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=str, default=None,
                        help="JSON config file (overrides the preset)")
    parser.add_argument("--preset", choices=("paper", "desk"), default="desk")
    parser.add_argument("--seed", type=int, default=None,
                        help="replace the config seed list with this one seed")
    parser.add_argument("--out", type=str, default=None,
                        help="output directory (default: config output_dir)")
    parser.add_argument("--scenario", choices=SCENARIOS, default=None)
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker processes for sweep points")


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else preset(args.preset)
    if args.scenario:
        cfg.scenario = args.scenario
    if args.seed is not None:
        cfg.seeds = (args.seed,)
    if args.out:
        cfg.output_dir = args.out
    return cfg


def _out_dir(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_training_log(path: Path, result: TrainResult):
    write_csv(path, list(LOG_COLUMNS), result.log)


def _grid(cfg: ExperimentConfig, axis: str, default: tuple[float, ...]):
    if cfg.sweep_axis == axis and cfg.sweep_values:
        return cfg.sweep_values
    return default


def _cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    seed = cfg.seeds[0]
    if args.algo == "a2c":
        if cfg.scenario != "scsi_joint":
            raise ValueError("the a2c baseline trains the scsi_joint scenario")
        variant = "scsi_a2c"
    else:
        variant = _SCENARIO_TO_VARIANT[cfg.scenario]
    tag = f"{cfg.scenario}_{args.algo}_seed{seed}"
    try:
        result = train_variant(variant, cfg.geometry, cfg.train, seed)
    except TrainingDiverged as exc:
        _write_training_log(out / f"training_log_{tag}.partial.csv",
                            TrainResult(spec=None, params=None, log=exc.log))
        print(f"training aborted: {exc}", file=sys.stderr)
        return 3
    _write_training_log(out / f"training_log_{tag}.csv", result)
    ckpt = out / f"policy_{tag}.rbp"
    save_params(ckpt, result.spec, result.params)
    print(f"wrote {out / f'training_log_{tag}.csv'}")
    print(f"wrote {ckpt}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    spec, theta = load_params(args.checkpoint)
    variant = _SCENARIO_TO_VARIANT[cfg.scenario]
    result = TrainResult(spec=spec, params=theta)
    rows = []
    for seed in cfg.seeds:
        summary = evaluate_variant(variant, cfg.geometry, result, cfg, seed)
        rows.append({"scenario": cfg.scenario, "seed": seed,
                     "objective_rate": summary.objective_rate,
                     "ergodic_rate": summary.ergodic_rate})
    path = out / "eval.csv"
    write_csv(path, ["scenario", "seed", "objective_rate", "ergodic_rate"], rows)
    for row in rows:
        print(f"seed {row['seed']}: objective {row['objective_rate']:.4f} "
              f"ergodic {row['ergodic_rate']:.4f} bit/s/Hz")
    print(f"wrote {path}")
    return 0


def _cmd_convergence(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    algos = ("ppo", "a2c") if args.with_a2c else ("ppo",)
    try:
        results = run_convergence(cfg, algos=algos)
    except TrainingDiverged as exc:
        path = out / "convergence_partial.csv"
        write_csv(path, ["episode", "reward", "smoothed"],
                  [{"episode": r["episode"], "reward": r["cumulative_reward"],
                    "smoothed": r["smoothed_reward"]} for r in exc.log])
        print(f"training aborted: {exc}; partial log at {path}", file=sys.stderr)
        return 3
    for algo, result in results.items():
        rows = [{"episode": r["episode"], "reward": r["cumulative_reward"],
                 "smoothed": r["smoothed_reward"]} for r in result.log]
        path = out / f"convergence_{algo}.csv"
        write_csv(path, ["episode", "reward", "smoothed"], rows)
        _write_training_log(out / f"training_log_convergence_{algo}.csv", result)
        print(f"wrote {path}")
    return 0


def _cmd_sweep_distance(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    cfg.geometry = replace(cfg.geometry, tx_power_dbm=args.power_dbm)
    cfg.sweep_axis = "distance"
    cfg.sweep_values = _grid(cfg, "distance", DEFAULT_DISTANCE_GRID)
    rows = run_distance_sweep(cfg, jobs=args.jobs)
    path = out / "distance_sweep.csv"
    write_csv(path, ["d", "q_bits", "sum_rate_mean", "sum_rate_std"], rows)
    print(f"wrote {path}")
    return 0


def _variant_list(args) -> tuple[str, ...]:
    if not args.variants:
        return SWEEP_VARIANTS
    names = tuple(v.strip() for v in args.variants.split(","))
    unknown = [v for v in names if v not in VARIANTS]
    if unknown:
        raise ValueError(f"unknown variants {unknown}; choose from {sorted(VARIANTS)}")
    return names


def _cmd_sweep_power(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    cfg.sweep_axis = "power_dbm"
    cfg.sweep_values = _grid(cfg, "power_dbm", DEFAULT_POWER_GRID)
    rows = run_power_sweep(cfg, variants=_variant_list(args), jobs=args.jobs)
    path = out / "power_sweep.csv"
    write_csv(path, ["p_dbm", "variant", "objective_rate_mean",
                     "objective_rate_std", "ergodic_rate_mean",
                     "ergodic_rate_std"], rows)
    print(f"wrote {path}")
    return 0


def _cmd_sweep_rician(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    cfg.sweep_axis = "rician_db"
    cfg.sweep_values = _grid(cfg, "rician_db", DEFAULT_RICIAN_GRID)
    rows = run_rician_sweep(cfg, variants=_variant_list(args), jobs=args.jobs)
    path = out / "rician_sweep.csv"
    write_csv(path, ["kappa_db", "variant", "objective_rate_mean",
                     "objective_rate_std", "ergodic_rate_mean",
                     "ergodic_rate_std"], rows)
    print(f"wrote {path}")
    return 0


def _cmd_verify_covariance(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    rows = run_verify_covariance(cfg, n_samples=args.samples)
    header = ["case", "kappa1", "kappa_u2", "err_a", "err_bc", "err_d",
              "err_total"]
    path = out / "verify_covariance.csv"
    write_csv(path, header, rows)
    print(",".join(header))
    for row in rows:
        print(",".join(str(row[k]) for k in header))
    worst = max(row["err_total"] for row in rows if row["case"] == "grid")
    print(f"worst grid total relative error: {worst:.5f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risbeam",
        description="RIS-aided MU-MISO beamforming workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one scenario and save a checkpoint")
    _add_common(p)
    p.add_argument("--algo", choices=("ppo", "a2c"), default="ppo")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("convergence", help="learning-curve study")
    _add_common(p)
    p.add_argument("--with-a2c", action="store_true",
                   help="also train the A2C baseline")
    p.set_defaults(func=_cmd_convergence)

    p = sub.add_parser("sweep-distance", help="RIS-UE distance sweep with quantization")
    _add_common(p)
    p.add_argument("--power-dbm", type=float, default=5.0,
                   help="transmit power for the single-user protocol")
    p.set_defaults(func=_cmd_sweep_distance)

    p = sub.add_parser("sweep-power", help="transmit-power sweep over variants")
    _add_common(p)
    p.add_argument("--variants", type=str, default=None,
                   help="comma-separated subset of " + ",".join(SWEEP_VARIANTS))
    p.set_defaults(func=_cmd_sweep_power)

    p = sub.add_parser("sweep-rician", help="Rician-factor sweep over variants")
    _add_common(p)
    p.add_argument("--variants", type=str, default=None,
                   help="comma-separated subset of " + ",".join(SWEEP_VARIANTS))
    p.set_defaults(func=_cmd_sweep_rician)

    p = sub.add_parser("verify-covariance",
                       help="closed-form covariance vs Monte-Carlo oracle")
    _add_common(p)
    p.add_argument("--samples", type=int, default=200000)
    p.set_defaults(func=_cmd_verify_covariance)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
