"""Command-line front door: train, eval, and compare subcommands.

Config precedence is built-in defaults < config file < command-line
overrides, and the fully resolved snapshot is written into the run
manifest together with the command line, seeds, and a content hash, so a
manifest is sufficient to reproduce a run.  All randomness flows from the
single ``--seed`` through named streams.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from functools import partial
from pathlib import Path

import numpy as np

from . import baselines, harness
from .dqn import DqnConfig, DqnPolicy, DqnResult, train_dqn
from .neural import RunningNorm, read_checkpoint, write_checkpoint
from .ppo import GaussianPolicy, PpoConfig, PpoPolicy, PpoResult, train_ppo
from .simulator import SimConfig, TaskMode, make_env, parse_kv_file, sim_config_from_strings

MANIFEST_SCHEMA = 1
TASK_CHOICES = [m.value for m in TaskMode]


class UsageError(ValueError):
    """Bad arguments or config detected after argparse (exit code 2)."""


# -- config plumbing -----------------------------------------------------------


def split_config_items(items: dict[str, str]) -> tuple[dict[str, str], dict[str, str], dict[str, str]]:
    """Route flat key=value items: bare keys go to the simulator config,
    ``dqn.``/``ppo.`` prefixes to the algorithm configs."""
    sim: dict[str, str] = {}
    dqn: dict[str, str] = {}
    ppo: dict[str, str] = {}
    for key, value in items.items():
        if key.startswith("dqn."):
            dqn[key[4:]] = value
        elif key.startswith("ppo."):
            ppo[key[4:]] = value
        else:
            sim[key] = value
    return sim, dqn, ppo


def _coerce_dataclass(cls, base, items: dict[str, str]):
    field_map = {f.name: f for f in dataclasses.fields(cls)}
    kwargs: dict[str, object] = {}
    for key, value in items.items():
        if key not in field_map:
            raise UsageError(f"unknown {cls.__name__} parameter {key!r}")
        current = getattr(base, key)
        if isinstance(current, bool):
            kwargs[key] = value.lower() in ("1", "true", "yes")
        elif isinstance(current, tuple):
            kwargs[key] = tuple(int(x) for x in value.split(",") if x.strip())
        elif isinstance(current, int):
            kwargs[key] = int(value)
        elif current is None:
            kwargs[key] = None if value.lower() in ("none", "") else float(value)
        else:
            kwargs[key] = float(value)
    return dataclasses.replace(base, **kwargs)


def resolve_configs(args) -> tuple[SimConfig, dict[str, str], dict[str, str]]:
    items: dict[str, str] = {}
    if getattr(args, "config", None):
        items.update(parse_kv_file(args.config))
    for override in getattr(args, "set", None) or []:
        if "=" not in override:
            raise UsageError(f"--set expects key=value, got {override!r}")
        key, value = override.split("=", 1)
        items[key.strip()] = value.strip()
    sim_items, dqn_items, ppo_items = split_config_items(items)
    try:
        sim_cfg = sim_config_from_strings(sim_items)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return sim_cfg, dqn_items, ppo_items


def _config_snapshot(sim_cfg: SimConfig, algo_cfg, run: dict) -> dict:
    def as_dict(cfg):
        if cfg is None:
            return None
        d = dataclasses.asdict(cfg)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    return {"sim": as_dict(sim_cfg), "algo": as_dict(algo_cfg), "run": run}


def write_manifest(out_dir: Path, argv: list[str], snapshot: dict, seeds: dict, outputs: list[str]) -> None:
    canonical = json.dumps(snapshot, sort_keys=True, separators=(",", ":"))
    manifest = {
        "schema_version": MANIFEST_SCHEMA,
        "command": argv,
        "config": snapshot,
        "config_hash": hashlib.sha256(canonical.encode()).hexdigest(),
        "seeds": seeds,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "outputs": outputs,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def default_out_dir(kind: str, args) -> Path:
    root = Path(os.environ.get("CROPRL_OUT_ROOT", "runs"))
    parts = [kind, getattr(args, "task", None), getattr(args, "algo", None)]
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = getattr(args, "seed_base", None)
    if seed is not None:
        parts.append(f"seed{seed}")
    return root / "-".join(str(p) for p in parts if p)


# -- checkpoints -----------------------------------------------------------------


def save_agent_checkpoint(directory: Path, task: TaskMode, result: DqnResult | PpoResult, cfg=None) -> None:
    if isinstance(result, DqnResult):
        agent = result.agent
        meta = {
            "schema_version": MANIFEST_SCHEMA,
            "algo": "dqn",
            "task": task.value,
            "obs_dim": agent.q_net.input_dim,
            "action_table": agent.table.tolist(),
            "normalizer": agent.normalizer.state_dict(),
            "optimizer": {"kind": agent.opt.kind, "learning_rate": agent.opt.learning_rate, "t": agent.opt.t},
        }
        write_checkpoint(directory, {"q": agent.q_net}, meta)
        return
    policy = result.policy
    meta = {
        "schema_version": MANIFEST_SCHEMA,
        "algo": "ppo",
        "task": task.value,
        "obs_dim": policy.obs_dim,
        "action_dim": policy.action_dim,
        "shared_trunk": policy.shared_trunk,
        "log_std": [float(v) for v in policy.log_std],
        "normalizer": result.normalizer.state_dict(),
        "optimizer": {"kind": "adam", "learning_rate": cfg.learning_rate if cfg else None},
    }
    if policy.shared_trunk:
        write_checkpoint(directory, {"shared": policy.net}, meta)
    else:
        write_checkpoint(directory, {"policy": policy.policy_net, "value": policy.value_net}, meta)


def load_agent_policy(directory: Path, deterministic: bool):
    nets, meta = read_checkpoint(directory)
    normalizer = RunningNorm.from_state(meta["normalizer"])
    if meta["algo"] == "dqn":
        return (
            DqnPolicy(q_net=nets["q"], table=np.array(meta["action_table"]), normalizer=normalizer),
            meta,
        )
    policy = GaussianPolicy.from_parts(
        nets, np.array(meta["log_std"], dtype=np.float64), bool(meta["shared_trunk"])
    )
    return PpoPolicy(policy=policy, normalizer=normalizer, deterministic=deterministic), meta


# -- subcommands -----------------------------------------------------------------


def cmd_train(args, argv: list[str]) -> int:
    sim_cfg, dqn_items, ppo_items = resolve_configs(args)
    task = TaskMode(args.task)
    out_dir = Path(args.out) if args.out else default_out_dir("train", args)
    out_dir.mkdir(parents=True, exist_ok=True)
    env_factory = partial(make_env, task, sim_cfg)

    if args.algo == "dqn":
        if args.steps is not None:
            raise UsageError("--steps applies to ppo; use --episodes for dqn")
        cfg = _coerce_dataclass(DqnConfig, DqnConfig(), dqn_items)
        if args.episodes is not None:
            cfg = dataclasses.replace(cfg, episodes=args.episodes)
        result = train_dqn(env_factory, cfg, args.seed, mode=task)
        curve_path = out_dir / "curve.csv"
        with open(curve_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "cumulative_reward", "epsilon", "loss_mean"])
            for row in result.curve:
                writer.writerow(
                    [row.episode, repr(row.cumulative_reward), repr(row.epsilon), repr(row.loss_mean)]
                )
    else:
        if args.episodes is not None:
            raise UsageError("--episodes applies to dqn; use --steps for ppo")
        # validation-episode action selection defaults per task: stochastic
        # for the single-input tasks, deterministic for mixed
        base_ppo = PpoConfig(deterministic_eval=task == TaskMode.MIXED)
        cfg = _coerce_dataclass(PpoConfig, base_ppo, ppo_items)
        if args.steps is not None:
            cfg = dataclasses.replace(cfg, total_steps=args.steps)
        result = train_ppo(env_factory, cfg, args.seed)
        curve_path = out_dir / "curve.csv"
        with open(curve_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["timestep", "eval_mean_reward", "clip_fraction", "approx_kl"])
            for row in result.curve:
                writer.writerow(
                    [row.timestep, repr(row.eval_mean_reward), repr(row.clip_fraction), repr(row.approx_kl)]
                )

    ckpt_dir = out_dir / "checkpoint"
    save_agent_checkpoint(ckpt_dir, task, result, cfg)
    snapshot = _config_snapshot(sim_cfg, cfg, {"task": task.value, "algo": args.algo, "seed": args.seed})
    write_manifest(out_dir, argv, snapshot, {"master": args.seed}, ["curve.csv", "checkpoint"])
    return 0


def _resolve_eval_policy(args, task: TaskMode, sim_cfg: SimConfig):
    name = args.policy
    deterministic_default = task == TaskMode.MIXED
    if args.eval_mode == "stochastic":
        deterministic = False
    elif args.eval_mode == "deterministic":
        deterministic = True
    else:
        deterministic = deterministic_default

    if name == "null":
        return baselines.NullPolicy(task), "null"
    if name == "expert":
        if args.schedule:
            schedule = baselines.load_schedule_csv(
                args.schedule, max_fert_kg=sim_cfg.max_fert_kg, max_water_l=sim_cfg.max_water_l
            )
        else:
            schedule = baselines.default_expert_schedule()
        return baselines.ExpertPolicy(task, schedule), "expert"

    ckpt = Path(name)
    if not (ckpt / "meta.json").exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    policy, meta = load_agent_policy(ckpt, deterministic)
    if meta["task"] != task.value:
        raise UsageError(
            f"checkpoint was trained for task {meta['task']!r} (obs dim {meta['obs_dim']}); "
            f"--task {task.value} has a different observation dimension — dimension mismatch"
        )
    return policy, meta["algo"]


def cmd_eval(args, argv: list[str]) -> int:
    if args.episodes < 1:
        raise UsageError("--episodes must be >= 1")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    sim_cfg, _, _ = resolve_configs(args)
    task = TaskMode(args.task)
    out_dir = Path(args.out) if args.out else default_out_dir("eval", args)
    out_dir.mkdir(parents=True, exist_ok=True)

    policy, policy_label = _resolve_eval_policy(args, task, sim_cfg)
    report = harness.evaluate(
        policy,
        partial(make_env, task, sim_cfg),
        episodes=args.episodes,
        seed_base=args.seed_base,
        policy_name=args.name or policy_label,
        task=task,
        workers=args.workers,
    )
    report.save(out_dir / "report.json")
    harness.emit_histogram_figure(report, out_dir)
    snapshot = _config_snapshot(
        sim_cfg,
        None,
        {
            "task": task.value,
            "policy": args.policy,
            "episodes": args.episodes,
            "seed_base": args.seed_base,
            "eval_mode": args.eval_mode,
        },
    )
    write_manifest(out_dir, argv, snapshot, {"seed_base": args.seed_base}, ["report.json"])
    return 0


def cmd_compare(args, argv: list[str]) -> int:
    if len(args.reports) < 2:
        raise UsageError("need at least two report paths")
    reports = [harness.EvalReport.load(p) for p in args.reports]
    if args.by_task:
        groups: dict[str, list[harness.EvalReport]] = {}
        for r in reports:
            groups.setdefault(r.task, []).append(r)
        order = [m.value for m in TaskMode if m.value in groups]
        rows = [harness.compare(groups[t]) for t in order]
    else:
        try:
            rows = [harness.compare(reports)]
        except harness.MixedModes as exc:
            raise UsageError(f"{exc}; pass --by-task to group them") from exc

    text = harness.comparison_to_text(rows)
    sys.stdout.write(text)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        harness.comparison_to_csv(rows, out_dir / "comparison.csv")
        (out_dir / "comparison.txt").write_text(text, encoding="utf-8")
        snapshot = {"sim": None, "algo": None, "run": {"reports": [str(p) for p in args.reports]}}
        write_manifest(out_dir, argv, snapshot, {}, ["comparison.csv", "comparison.txt"])
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="croprl",
        description="Train and evaluate crop management policies on the surrogate maize simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a DQN or PPO policy")
    p_train.add_argument("--task", required=True, choices=TASK_CHOICES)
    p_train.add_argument("--algo", required=True, choices=["dqn", "ppo"])
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--episodes", type=int, default=None, help="dqn episode budget")
    p_train.add_argument("--steps", type=int, default=None, help="ppo timestep budget")
    p_train.add_argument("--config", default=None, help="key=value config file")
    p_train.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")
    p_train.add_argument("--out", default=None, help="output directory")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint or baseline")
    p_eval.add_argument("--task", required=True, choices=TASK_CHOICES)
    p_eval.add_argument("--policy", required=True, help="checkpoint dir, 'null', or 'expert'")
    p_eval.add_argument("--episodes", type=int, default=1000)
    p_eval.add_argument("--seed-base", type=int, default=10_000, dest="seed_base")
    p_eval.add_argument("--schedule", default=None, help="expert schedule CSV")
    p_eval.add_argument("--workers", type=int, default=1)
    p_eval.add_argument(
        "--eval-mode",
        choices=["default", "stochastic", "deterministic"],
        default="default",
        help="action selection for ppo checkpoints (default: stochastic for fert/irr, deterministic for mix)",
    )
    p_eval.add_argument("--name", default=None, help="policy name recorded in the report")
    p_eval.add_argument("--config", default=None)
    p_eval.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_eval.add_argument("--out", default=None)

    p_cmp = sub.add_parser("compare", help="tabulate evaluation reports")
    p_cmp.add_argument("reports", nargs="*", help="report.json paths")
    p_cmp.add_argument("--by-task", action="store_true", dest="by_task")
    p_cmp.add_argument("--out", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"train": cmd_train, "eval": cmd_eval, "compare": cmd_compare}
    try:
        return handlers[args.command](args, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
