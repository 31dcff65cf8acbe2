"""Offline and online training loops gluing agents, buffers and diffusion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from synther.agents import AgentConfig, SACAgent, TD3BCAgent, evaluate_policy
from synther.data import (
    ReplayBuffer,
    ReplayPair,
    TransitionDataset,
    fit_normalizer,
    mixed_sample,
)
from synther.diffusion import DiffusionModel, EDMConfig
from synther.errors import InvalidInputError, NumericError

EPS_STD = 1e-3  # floor on state std used for TD3+BC observation scaling


@dataclass(frozen=True)
class SyntherOnlineConfig:
    """Desk-scale defaults for the online synthetic-replay loop.

    Paper scale generates 1M rows per 10K real steps; these defaults shrink
    the cadence proportionally (10K per 1K) to keep toy runs in minutes.
    """

    ratio: float = 0.5
    gen_every: int = 1_000  # real env steps between generation rounds
    gen_count: int = 10_000  # synthetic rows produced per round
    diffusion_steps_per_round: int = 1_000
    synthetic_capacity: int = 1_000_000
    real_capacity: int = 1_000_000
    warmup: int = 1_000
    enabled: bool = True
    edm: EDMConfig = field(
        default_factory=lambda: EDMConfig(width=128, depth=2, steps=24, batch_size=256)
    )

    def __post_init__(self):
        if not (0.0 <= self.ratio <= 1.0):
            raise InvalidInputError("ratio must lie in [0, 1]")
        if self.gen_every < 1 or self.gen_count < 1:
            raise InvalidInputError("cadence values must be >= 1")


def _split(batch: np.ndarray, schema):
    s = batch[:, schema.state_slice]
    a = batch[:, schema.action_slice]
    r = batch[:, schema.reward_index]
    ns = batch[:, schema.next_state_slice]
    if schema.has_terminal:
        d = batch[:, schema.terminal_index]
    else:
        d = np.zeros(batch.shape[0], dtype=np.float32)
    return s, a, r, ns, d


def offline_train(
    dataset: TransitionDataset,
    env,
    agent_cfg: AgentConfig,
    steps: int = 100_000,
    seed: int = 0,
    eval_every: int = 5_000,
    eval_episodes: int = 10,
) -> tuple[TD3BCAgent, list[tuple[int, float, float]]]:
    """TD3+BC trained purely on the given dataset, with periodic evaluation.

    States are normalized per dataset, as is standard for this baseline.
    """
    if dataset.count == 0:
        raise InvalidInputError("dataset is empty")
    schema = dataset.schema
    spec = env.spec
    if schema != spec.schema():
        raise InvalidInputError("dataset schema does not match environment")
    mean = dataset.rows[:, schema.state_slice].astype(np.float64).mean(axis=0)
    std = dataset.rows[:, schema.state_slice].astype(np.float64).std(axis=0)
    std = np.maximum(std, EPS_STD)

    agent = TD3BCAgent(
        spec.state_dim, spec.action_dim, spec.action_high, agent_cfg, seed=seed
    )
    agent.set_state_normalization(mean, std)

    rows = dataset.rows.copy()
    rows[:, schema.state_slice] = (rows[:, schema.state_slice] - mean) / std
    rows[:, schema.next_state_slice] = (rows[:, schema.next_state_slice] - mean) / std

    rng = np.random.default_rng([seed, 100])
    trace = []
    for step in range(1, steps + 1):
        idx = rng.integers(0, rows.shape[0], size=agent_cfg.batch_size)
        s, a, r, ns, d = _split(rows[idx], schema)
        agent.update(s, a, r, ns, d)
        if step % eval_every == 0 or step == steps:
            rets = evaluate_policy(env, agent, episodes=eval_episodes, seed=seed + 7)
            trace.append((step, float(rets.mean()), float(rets.std())))
    return agent, trace


def online_synther_train(
    env,
    eval_env,
    agent_cfg: AgentConfig,
    synther_cfg: SyntherOnlineConfig,
    total_steps: int,
    seed: int = 0,
    eval_every: int = 2_000,
    eval_episodes: int = 5,
    log=None,
) -> tuple[SACAgent, list[tuple[int, float, float]]]:
    """SAC on a real/synthetic replay mixture, per the online algorithm:
    collect with the policy, periodically fine-tune the diffusion model on the
    real buffer, generate into a finite synthetic buffer, and update the agent
    `utd` times per env step on ratio-r mixed batches.

    With `enabled=False`, ratio 1 and utd 1 this is plain SAC.
    """
    if total_steps < synther_cfg.warmup:
        raise InvalidInputError("total_steps must cover the warmup")
    spec = env.spec
    schema = spec.schema()
    agent = SACAgent(
        spec.state_dim, spec.action_dim, spec.action_high, agent_cfg, seed=seed
    )
    pair = ReplayPair(
        real=ReplayBuffer(schema.row_dim, synther_cfg.real_capacity),
        synthetic=ReplayBuffer(schema.row_dim, synther_cfg.synthetic_capacity),
        ratio=synther_cfg.ratio,
    )
    env_rng = np.random.default_rng([seed, 0])
    batch_rng = np.random.default_rng([seed, 1])
    model: DiffusionModel | None = None
    obs = env.reset(env_rng)
    trace = []
    round_idx = 0
    for step in range(1, total_steps + 1):
        if step <= synther_cfg.warmup:
            a = env_rng.uniform(spec.action_low, spec.action_high, size=spec.action_dim)
        else:
            a = np.clip(agent.act(obs), spec.action_low, spec.action_high)
        next_obs, reward, terminal, truncated = env.step(a)
        row = np.concatenate([obs, a, [reward], next_obs])
        if schema.has_terminal:
            row = np.concatenate([row, [terminal]])
        pair.real.push(row.astype(np.float32))
        obs = env.reset(env_rng) if (terminal or truncated) else next_obs

        generation_failed = False
        if (
            synther_cfg.enabled
            and step > synther_cfg.warmup
            and step % synther_cfg.gen_every == 0
        ):
            round_idx += 1
            real_rows = pair.real.data()
            real_ds = TransitionDataset(schema, real_rows)
            if model is None:
                model = DiffusionModel(schema, config=synther_cfg.edm, seed=seed)
            # continual fine-tuning: refresh the normalizer, keep the weights
            model.normalizer = fit_normalizer(real_ds)
            try:
                model.train(
                    real_ds,
                    seed=int(np.random.default_rng([seed, 2, round_idx]).integers(2**31)),
                    train_steps=synther_cfg.diffusion_steps_per_round,
                    lr=synther_cfg.edm.lr,
                )
                synth = model.generate(synther_cfg.gen_count, seed=seed * 1_000 + round_idx)
                pair.synthetic.push(synth.rows)
            except NumericError as e:
                generation_failed = True
                if log is not None:
                    log(f"diffusion diverged in round {round_idx}: {e}; using r=1")

        if step > synther_cfg.warmup:
            for _ in range(agent_cfg.utd):
                if len(pair.synthetic) == 0 or generation_failed or pair.ratio == 1.0:
                    batch = pair.real.sample(agent_cfg.batch_size, batch_rng)
                else:
                    batch = mixed_sample(pair, agent_cfg.batch_size, batch_rng)
                s, a_b, r_b, ns, d = _split(batch, schema)
                agent.update(s, a_b, r_b, ns, d)

        if step % eval_every == 0 or step == total_steps:
            rets = evaluate_policy(eval_env, agent, episodes=eval_episodes, seed=seed + 7)
            trace.append((step, float(rets.mean()), float(rets.std())))
    return agent, trace


def sac_train(
    env,
    eval_env,
    agent_cfg: AgentConfig,
    total_steps: int,
    seed: int = 0,
    eval_every: int = 2_000,
    eval_episodes: int = 5,
) -> tuple[SACAgent, list[tuple[int, float, float]]]:
    """Plain SAC baseline: the online loop with generation off and r = 1."""
    cfg = SyntherOnlineConfig(ratio=1.0, enabled=False)
    return online_synther_train(
        env,
        eval_env,
        agent_cfg,
        cfg,
        total_steps,
        seed=seed,
        eval_every=eval_every,
        eval_episodes=eval_episodes,
    )
