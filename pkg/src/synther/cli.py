"""Command-line entry point wiring all pipelines.

Each run writes into an output directory content-addressed by the hash of its
resolved config; CSV payloads are deterministic given config + seed, and wall
clock timestamps live only in the sidecar log.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from synther import agents, augment, data, diffusion, envs, loops, metrics
from synther.config import KNOWN_KEYS, RunConfig
from synther.errors import ConfigError, SyntherError

SUBCOMMANDS = (
    "collect",
    "diffusion-train",
    "generate",
    "metrics",
    "augment",
    "offline",
    "online",
    "report",
)


def _apply_thread_cap() -> None:
    cap = os.environ.get("SYNTHER_THREADS")
    if cap:
        try:
            import torch

            torch.set_num_threads(int(cap))
        except (ImportError, ValueError):
            pass


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="synther", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="key=value config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default="runs", help="base output directory")
        if name in ("diffusion-train", "generate", "offline", "report"):
            sp.add_argument("--data", default=None)
        if name == "offline":
            sp.add_argument("--steps", type=int, default=None)
        if name in ("generate", "report"):
            sp.add_argument("--model", default=None)
        if name == "generate":
            sp.add_argument("--count", type=int, default=None)
        if name == "metrics":
            sp.add_argument("--real", required=True)
            sp.add_argument("--synth", required=True)
        if name == "augment":
            sp.add_argument("--data", required=True)
            sp.add_argument("--kind", default=None)
            sp.add_argument("--target", type=int, default=None)
        if name in ("collect", "offline", "online", "metrics"):
            sp.add_argument("--env", default=None)
    return p


def _split_overrides(argv: list[str]) -> tuple[list[str], dict[str, str]]:
    """Pull --ns.key=value overrides out of argv before argparse sees them."""
    plain, overrides = [], {}
    for arg in argv:
        if arg.startswith("--") and "=" in arg and "." in arg.split("=", 1)[0]:
            key, raw = arg[2:].split("=", 1)
            overrides[key] = raw
        else:
            plain.append(arg)
    return plain, overrides


def _prepare_run(cfg: RunConfig, base: str) -> Path:
    run_dir = Path(base) / f"run-{cfg.content_hash()}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(cfg.resolved_text(), encoding="utf-8")
    with open(run_dir / "log.txt", "a", encoding="utf-8") as f:
        f.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} start\n")
    return run_dir


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _edm_config(cfg: RunConfig) -> diffusion.EDMConfig:
    kw = {}
    for key in KNOWN_KEYS:
        if key.startswith("edm."):
            kw[key.split(".", 1)[1]] = cfg[key]
    return diffusion.EDMConfig(**kw)


def _agent_config(cfg: RunConfig) -> agents.AgentConfig:
    hidden = tuple(int(x) for x in str(cfg["agent.hidden"]).split(",") if x)
    ac = agents.AgentConfig(
        gamma=cfg["agent.gamma"],
        tau=cfg["agent.tau"],
        lr=cfg["agent.lr"],
        hidden=hidden,
        batch_size=cfg["agent.batch_size"],
        utd=cfg["agent.utd"],
        td3bc_alpha=cfg["agent.td3bc_alpha"],
        policy_noise=cfg["agent.policy_noise"],
        noise_clip=cfg["agent.noise_clip"],
        policy_delay=cfg["agent.policy_delay"],
    )
    return ac.larger() if cfg["agent.larger"] else ac


def _check_schema(ds: data.TransitionDataset, env, what: str) -> None:
    if ds.schema != env.spec.schema():
        raise ConfigError(
            f"schema mismatch: {what} has (state={ds.schema.state_dim}, "
            f"action={ds.schema.action_dim}, terminal={ds.schema.has_terminal}) "
            f"but env {env.spec.name!r} expects (state={env.spec.state_dim}, "
            f"action={env.spec.action_dim}, terminal={env.spec.has_terminal})"
        )


def cmd_collect(args, cfg: RunConfig, run_dir: Path) -> None:
    env = envs.make_env(cfg["env"])
    policy = cfg["collect.policy"]
    if policy != "random":
        raise ConfigError(
            "CLI collection supports the random policy; mixed/expert collection "
            "needs a checkpoint and runs through the library API"
        )
    ds = envs.collect_dataset(
        env, "random", cfg["collect.n"], cfg["seed"], epsilon=cfg["collect.epsilon"]
    )
    data.save_dataset(ds, run_dir / "dataset.bin")
    print(f"wrote {ds.count} transitions to {run_dir / 'dataset.bin'}")


def cmd_diffusion_train(args, cfg: RunConfig, run_dir: Path) -> None:
    if not args.data:
        raise ConfigError("diffusion-train requires --data")
    ds = data.load_dataset(args.data)
    model = diffusion.DiffusionModel(ds.schema, config=_edm_config(cfg), seed=cfg["seed"])
    model.normalizer = data.fit_normalizer(ds)
    trace = model.train(ds, seed=cfg["seed"])
    diffusion.save_model(model, run_dir / "model.bin")
    _write_csv(run_dir / "loss_trace.csv", ["step", "loss"], trace)
    print(f"trained {len(trace)} logged steps; model at {run_dir / 'model.bin'}")


def cmd_generate(args, cfg: RunConfig, run_dir: Path) -> None:
    if not args.model:
        raise ConfigError("generate requires --model")
    model = diffusion.load_model(args.model)
    count = args.count if args.count is not None else cfg["generate.count"]
    ds = model.generate(count, seed=cfg["seed"])
    data.save_dataset(ds, run_dir / "synthetic.bin")
    print(f"wrote {ds.count} synthetic transitions to {run_dir / 'synthetic.bin'}")


def cmd_metrics(args, cfg: RunConfig, run_dir: Path) -> None:
    real = data.load_dataset(args.real)
    synth = data.load_dataset(args.synth)
    report = metrics.metric_report(
        real,
        synth,
        kind=cfg["metrics.kind"],
        sample_cap=cfg["metrics.sample_cap"],
        seed=cfg["seed"],
    )
    (run_dir / "summary.txt").write_text(
        "\n".join(report.summary_lines()) + "\n", encoding="utf-8"
    )
    _write_csv(
        run_dir / "per_dim_ks.csv",
        ["dim", "ks"],
        [(d, float(v)) for d, v in enumerate(report.per_dim_ks)],
    )
    if args.env:
        env = envs.make_env(args.env)
        _check_schema(real, env, "real dataset")
        _check_schema(synth, env, "synthetic dataset")
        nrm = data.fit_normalizer(real)
        n = min(cfg["metrics.fig4_rows"], synth.count)
        sub = data.TransitionDataset(synth.schema, synth.rows[:n])
        dists = metrics.min_l2_distances(sub, real, nrm)
        per_row, mean_mse, n_invalid = metrics.dynamics_mse(sub, env)
        # invalid rows are dropped inside dynamics_mse; pair up what remains
        k = min(len(dists), len(per_row))
        _write_csv(
            run_dir / "distance_vs_dynamics.csv",
            ["min_l2", "dynamics_mse"],
            zip(dists[:k].tolist(), per_row[:k].tolist()),
        )
        with open(run_dir / "summary.txt", "a", encoding="utf-8") as f:
            f.write(f"dynamics_mse_mean={mean_mse}\n")
            f.write(f"dynamics_invalid_rows={n_invalid}\n")
    print(f"marginal={report.marginal:.6f} correlation={report.correlation:.6f}")


def cmd_augment(args, cfg: RunConfig, run_dir: Path) -> None:
    ds = data.load_dataset(args.data)
    kind = args.kind or cfg["augment.kind"]
    scheme = augment.AugmentationScheme(kind=kind, noise_std=cfg["augment.noise_std"])
    target = args.target or cfg["augment.target_count"] or 2 * ds.count
    out = augment.upsample_with_augmentation(ds, scheme, target, cfg["seed"])
    data.save_dataset(out, run_dir / "augmented.bin")
    print(f"wrote {out.count} rows ({kind}) to {run_dir / 'augmented.bin'}")


def cmd_offline(args, cfg: RunConfig, run_dir: Path) -> None:
    if not args.data:
        raise ConfigError("offline requires --data")
    ds = data.load_dataset(args.data)
    env = envs.make_env(args.env or cfg["env"])
    _check_schema(ds, env, "dataset")
    steps = args.steps if args.steps is not None else cfg["offline.steps"]
    agent, trace = loops.offline_train(
        ds,
        env,
        _agent_config(cfg),
        steps=steps,
        seed=cfg["seed"],
        eval_every=cfg["offline.eval_every"],
        eval_episodes=cfg["offline.eval_episodes"],
    )
    _write_csv(run_dir / "eval_trace.csv", ["step", "mean_return", "std_return"], trace)
    import torch

    torch.save(
        {"actor": agent.actor.state_dict(), "critic": agent.critic.state_dict()},
        run_dir / "agent.pt",
    )
    print(f"final eval return {trace[-1][1]:.3f} over {cfg['offline.eval_episodes']} episodes")


def cmd_online(args, cfg: RunConfig, run_dir: Path) -> None:
    env = envs.make_env(args.env or cfg["env"])
    eval_env = envs.make_env(args.env or cfg["env"])
    edm_cfg = _edm_config(cfg)
    syn_cfg = loops.SyntherOnlineConfig(
        ratio=cfg["online.ratio"],
        gen_every=cfg["online.gen_every"],
        gen_count=cfg["online.gen_count"],
        diffusion_steps_per_round=cfg["online.diffusion_steps_per_round"],
        synthetic_capacity=cfg["online.synthetic_capacity"],
        real_capacity=cfg["online.real_capacity"],
        warmup=cfg["online.warmup"],
        enabled=cfg["online.enabled"],
        edm=edm_cfg,
    )
    log_path = run_dir / "log.txt"

    def log(msg):
        with open(log_path, "a", encoding="utf-8") as f:
            f.write(msg + "\n")

    agent, trace = loops.online_synther_train(
        env,
        eval_env,
        _agent_config(cfg),
        syn_cfg,
        cfg["online.steps"],
        seed=cfg["seed"],
        eval_every=cfg["online.eval_every"],
        eval_episodes=cfg["online.eval_episodes"],
        log=log,
    )
    _write_csv(run_dir / "eval_trace.csv", ["step", "mean_return", "std_return"], trace)
    print(f"final eval return {trace[-1][1]:.3f}")


def cmd_report(args, cfg: RunConfig, run_dir: Path) -> None:
    if not args.data or not args.model:
        raise ConfigError("report requires --data and --model")
    ds = data.load_dataset(args.data)
    model = diffusion.load_model(args.model)
    ratio = metrics.compression_report(ds, model)
    n_floats = ds.count * ds.schema.row_dim
    lines = [
        f"dataset_floats={n_floats}",
        f"model_parameters={model.net.num_params()}",
        f"compression_ratio={ratio}",
    ]
    (run_dir / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"compression {ratio}x ({n_floats} floats / {model.net.num_params()} params)")


COMMANDS = {
    "collect": cmd_collect,
    "diffusion-train": cmd_diffusion_train,
    "generate": cmd_generate,
    "metrics": cmd_metrics,
    "augment": cmd_augment,
    "offline": cmd_offline,
    "online": cmd_online,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    plain, overrides = _split_overrides(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(plain)
        cfg = RunConfig.from_sources(getattr(args, "config", None), overrides)
        if args.seed is not None:
            cfg.set("seed", args.seed)
        if getattr(args, "env", None):
            cfg.set("env", args.env)
        _apply_thread_cap()
        run_dir = _prepare_run(cfg, args.out)
        COMMANDS[args.command](args, cfg, run_dir)
        return 0
    except SyntherError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: FileNotFoundError: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
