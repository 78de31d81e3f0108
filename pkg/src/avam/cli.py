"""Command line: gen-demos, train, eval, metrics and inspect."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import logs
from .agent import DualAgent, TrainerConfig, TrainingAbort, run_episode, train, transition_sample
from .agent.trainer import TrainLog
from .config import TOGGLES, ConfigError, RunConfig, load_config
from .demo import DemoError, DemoTrajectory, discover_keyframes, load_transitions, scripted_demo
from .env import ActiveVisionEnv
from .metrics import EpisodeRecord, MetricsError, episode_stats, report_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

MANIFEST = "manifest.json"
CHECKPOINT = "checkpoint.npz"
TRAIN_LOG = "train_log.csv"
TRAIN_SUMMARY = "train_summary.json"
EPISODE_LOG = "episodes.jsonl"
REPORT = "report.csv"

BASELINES = ("random-view", "static")

# disjoint seed ranges for demos, training episodes and evaluation episodes
DEMO_SEED_STRIDE = 1_000
TRAIN_EPISODE_BASE = 1_000_000
EVAL_EPISODE_BASE = 2_000_000
SEED_STRIDE = 100_000


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- library-level pipeline ------------------------------------------------------

def demo_seed(cfg: RunConfig, i: int) -> int:
    return cfg.seed * DEMO_SEED_STRIDE + i


def generate_demos(cfg: RunConfig) -> tuple[list, list]:
    """Scripted demos for cfg.demo.count seeds; returns (trajectories, failures)."""
    env = ActiveVisionEnv(cfg.env)
    trajs, failures = [], []
    for i in range(cfg.demo.count):
        try:
            trajs.append(scripted_demo(env, cfg.task, demo_seed(cfg, i)))
        except DemoError as exc:
            failures.append({"index": i, "seed": demo_seed(cfg, i), "error": str(exc)})
    return trajs, failures


def make_env(cfg: RunConfig) -> ActiveVisionEnv:
    return ActiveVisionEnv(cfg.env, align=cfg.align, aux=cfg.aux)


def demo_transitions(cfg: RunConfig, trajs, env: ActiveVisionEnv | None = None) -> list:
    env = env or make_env(cfg)
    return load_transitions(trajs, env, cfg.aug, cfg.demo.augment_per_segment, cfg.seed)


def train_agent(cfg: RunConfig, trajs, progress=None) -> tuple[DualAgent, TrainLog, int]:
    """Ingest demos per the toggles and run the training loop; returns (agent, log, demo transitions)."""
    env = make_env(cfg)
    samples = [transition_sample(t) for t in demo_transitions(cfg, trajs, env)]
    tcfg: TrainerConfig = cfg.trainer_config()
    agent, log = train(env, cfg.task, samples, tcfg, TRAIN_EPISODE_BASE + cfg.seed * SEED_STRIDE, progress=progress)
    return agent, log, len(samples)


def eval_seed(cfg: RunConfig, i: int) -> int:
    return EVAL_EPISODE_BASE + cfg.seed * SEED_STRIDE + i


def evaluate(agent: DualAgent, cfg: RunConfig, episodes: int, baseline: str | None = None) -> list:
    """Greedy episodes; returns (seed, EpisodeOutcome) pairs."""
    if episodes < 1:
        raise ValueError("need at least one episode")
    env = make_env(cfg)
    out = []
    for i in range(episodes):
        s = eval_seed(cfg, i)
        o = run_episode(env, agent, cfg.task, s, 0.0, np.random.default_rng(s),
                        random_view=baseline == "random-view", static_camera=baseline == "static")
        out.append((s, o))
    return out


def episode_record(label: str, seed: int, outcome, cfg: RunConfig, movable: bool) -> dict:
    return {"type": "episode", "label": label, "seed": seed, "outcome": outcome.kind, "length": outcome.length,
            "max_steps": cfg.env.max_steps, "movable_camera": movable,
            "steps": [s.to_dict() for s in outcome.steps]}


def records_to_reports(records) -> list[tuple[str, object]]:
    """Aggregate episode records per label, in first-seen label order."""
    groups: dict[str, list] = {}
    movable: dict[str, bool] = {}
    for r in records:
        if r.get("type") != "episode":
            continue
        try:
            ep = EpisodeRecord.from_steps(r["steps"], r["outcome"], int(r["max_steps"]))
            if ep.length != r["length"]:
                raise MetricsError(f"episode {r.get('seed')}: length field disagrees with its steps")
        except KeyError as exc:
            raise MetricsError(f"episode record missing field {exc}") from exc
        groups.setdefault(r["label"], []).append(ep)
        movable[r["label"]] = movable.get(r["label"], True) and bool(r.get("movable_camera", True))
    if not groups:
        raise MetricsError("no episode records")
    return [(label, episode_stats(eps, movable[label])) for label, eps in groups.items()]


# -- commands ----------------------------------------------------------------------

def _out_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {p}: {exc}", EXIT_RUNTIME) from exc
    if not os.access(p, os.W_OK):
        raise CliError(f"output directory {p} is not writable", EXIT_RUNTIME)
    return p


def cmd_gen_demos(cfg: RunConfig, out) -> dict:
    out = _out_dir(out)
    trajs, failures = generate_demos(cfg)
    files = []
    for traj in trajs:
        name = f"demo_{traj.seed:08d}.jsonl"
        logs.write_log(out / name, logs.header(cfg.demo_hash(), cfg.seed, kind="demo"), traj.to_records())
        files.append(name)
    for f in failures:
        print(f"demo {f['index']} (seed {f['seed']}) failed: {f['error']}", file=sys.stderr)
    manifest = {"config_hash": cfg.hash(), "demo_hash": cfg.demo_hash(), "seed": cfg.seed, "task": cfg.task,
                "count": cfg.demo.count, "files": files, "failures": failures}
    (out / MANIFEST).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    if cfg.demo.count > 0 and not trajs:
        raise CliError("every demo failed", EXIT_RUNTIME)
    return manifest


def read_demos(cfg: RunConfig, path) -> list:
    path = Path(path)
    manifest_path = path / MANIFEST
    if not manifest_path.is_file():
        raise CliError(f"no demo manifest at {manifest_path}", EXIT_CONFIG)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("demo_hash") != cfg.demo_hash():
        raise CliError("demos were generated with a different task, env or demo count", EXIT_CONFIG)
    trajs = []
    for name in manifest["files"]:
        head, records = logs.read_log(path / name)
        if head.get("config_hash") != cfg.demo_hash():
            raise CliError(f"{name}: demo hash mismatch", EXIT_CONFIG)
        trajs.append(DemoTrajectory.from_records(records))
    return trajs


def _write_train_log(path: Path, log: TrainLog) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TrainLog.COLUMNS)
        for row in log.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def cmd_train(cfg: RunConfig, demos, out, progress=None) -> dict:
    if demos is None:
        if cfg.demo.count > 0:
            raise CliError("training needs --demos (or demo.count = 0 to learn from interaction only)", EXIT_CONFIG)
        trajs = []
    else:
        trajs = read_demos(cfg, demos)
    out = _out_dir(out)
    agent, log, n_demo = train_agent(cfg, trajs, progress)
    agent.save(out / CHECKPOINT, cfg.hash(), cfg.to_dict())
    _write_train_log(out / TRAIN_LOG, log)
    summary = {"config_hash": cfg.hash(), "seed": cfg.seed, "demos": len(trajs), "demo_transitions": n_demo,
               "raw_transitions": sum(len(discover_keyframes(t)) for t in trajs),
               "updates": len(log.rows), "train_outcomes": log.outcomes}
    (out / TRAIN_SUMMARY).write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return summary


def cmd_eval(cfg: RunConfig, checkpoint, episodes: int, out, baseline: str | None = None) -> list:
    try:
        agent, meta = DualAgent.load(checkpoint)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot load checkpoint {checkpoint}: {exc}", EXIT_CONFIG) from exc
    if meta.get("config_hash") != cfg.hash():
        raise CliError("checkpoint was trained with a different config (hash mismatch)", EXIT_CONFIG)
    if episodes < 1:
        raise CliError("--episodes must be at least 1", EXIT_CONFIG)
    out = _out_dir(out)
    label = baseline or "trained"
    movable = baseline != "static"
    results = evaluate(agent, cfg, episodes, baseline)
    records = [episode_record(label, s, o, cfg, movable) for s, o in results]
    logs.write_log(out / EPISODE_LOG, logs.header(cfg.hash(), cfg.seed, kind="eval", label=label), records)
    eps = [EpisodeRecord.from_outcome(o, cfg.env.max_steps) for _, o in results]
    reports = [(label, episode_stats(eps, movable))]
    (out / REPORT).write_text(report_csv(reports))
    return reports


def cmd_metrics(paths, out=None) -> str:
    if not paths:
        raise CliError("no logs given", EXIT_CONFIG)
    records = []
    for p in paths:
        try:
            _, recs = logs.read_log(p)
        except OSError as exc:
            raise CliError(f"cannot read {p}: {exc}", EXIT_CONFIG) from exc
        records.extend(recs)
    text = report_csv(records_to_reports(records))
    if out is not None:
        Path(out).write_text(text)
    return text


def cmd_inspect(path) -> str:
    path = Path(path)
    if not path.exists():
        raise CliError(f"{path} does not exist", EXIT_CONFIG)
    if path.is_dir():
        lines = [f"{path}/"] + [f"  {p.name}" for p in sorted(path.iterdir())]
        if (path / MANIFEST).is_file():
            m = json.loads((path / MANIFEST).read_text())
            lines.append(f"demos: {len(m['files'])} ok, {len(m['failures'])} failed, task {m['task']}, seed {m['seed']}")
        return "\n".join(lines)
    if path.suffix == ".npz":
        _, meta = DualAgent.load(path)
        return json.dumps({k: v for k, v in meta.items() if k != "config"}, sort_keys=True, indent=2)
    head, records = logs.read_log(path)
    lines = [f"header: {logs.dumps(head)}"]
    counts = Counter(r["type"] for r in records)
    lines += [f"{k}: {v}" for k, v in sorted(counts.items())]
    if counts.get("frame"):
        traj = DemoTrajectory.from_records(records)
        lines.append(f"keyframes: {discover_keyframes(traj).pairs} over {len(traj)} frames")
    if counts.get("episode"):
        kinds = Counter(r["outcome"] for r in records if r["type"] == "episode")
        lines.append("outcomes: " + ", ".join(f"{k}={v}" for k, v in sorted(kinds.items())))
    return "\n".join(lines)


# -- argument parsing ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--ablate", action="append", choices=TOGGLES, default=[],
                        help="switch a toggle off (repeatable)")

    p = argparse.ArgumentParser(prog="avam", description="Active vision-action manipulation desk lab.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-demos", parents=[common], help="write scripted demonstrations")
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", parents=[common], help="train the dual agent")
    t.add_argument("--demos", help="directory written by gen-demos")
    t.add_argument("--out", required=True)

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--baseline", choices=BASELINES)
    e.add_argument("--out", required=True)

    m = sub.add_parser("metrics", help="recompute metrics from episode logs")
    m.add_argument("logs", nargs="*")
    m.add_argument("--out", help="CSV path (stdout when omitted)")

    i = sub.add_parser("inspect", help="summarize a log, checkpoint or demo directory")
    i.add_argument("path")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = RunConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    return cfg.ablate(*args.ablate)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "metrics":
            text = cmd_metrics(args.logs, args.out)
            if args.out is None:
                sys.stdout.write(text)
            return EXIT_OK
        if args.command == "inspect":
            print(cmd_inspect(args.path))
            return EXIT_OK
        cfg = resolve_config(args)
        if args.command == "gen-demos":
            m = cmd_gen_demos(cfg, args.out)
            print(f"wrote {len(m['files'])} demos to {args.out}")
        elif args.command == "train":
            s = cmd_train(cfg, args.demos, args.out)
            print(f"trained {s['updates']} updates on {s['demo_transitions']} demo transitions; wrote {args.out}")
        elif args.command == "eval":
            reports = cmd_eval(cfg, args.checkpoint, args.episodes, args.out, args.baseline)
            sys.stdout.write(report_csv(reports))
        return EXIT_OK
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingAbort, DemoError, MetricsError, logs.LogError, OSError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
