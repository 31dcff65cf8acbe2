"""Offline pipeline end to end on the point-mass task, at demo scale.

Collect mixed-policy data, train the diffusion model on it, generate synthetic
transitions, score their fidelity, then train TD3+BC once on real data and
once purely on synthetic data and compare evaluation returns. A few minutes
on one CPU core; shrink the constants further if you are impatient.
"""

import numpy as np

from synther import data, diffusion, envs, loops, metrics
from synther.agents import AgentConfig

GOAL = np.array([1.0, 1.0])


def controller(obs):
    # proportional-derivative pull toward the goal; mixed with random actions below
    p, v = obs[:2], obs[2:]
    return np.clip(2.0 * (GOAL - p) - v, -1.0, 1.0)


env = envs.make_env("pointmass")
train = envs.collect_dataset(env, controller, 20_000, seed=0, epsilon=0.5)
held = envs.collect_dataset(envs.make_env("pointmass"), controller, 20_000, seed=1, epsilon=0.5)
print(f"collected {train.count} transitions, terminal rate {train.rows[:, -1].mean():.3f}")

config = diffusion.EDMConfig(width=128, depth=2, train_steps=10_000, batch_size=256)
model = diffusion.DiffusionModel(train.schema, config, seed=0)
model.normalizer = data.fit_normalizer(train)
model.train(train, seed=1)

synth = model.generate(20_000, seed=2)
report = metrics.metric_report(held, synth)
print("\n".join(report.summary_lines()))

per_row, mean_mse, n_invalid = metrics.dynamics_mse(synth, envs.make_env("pointmass"))
print(f"dynamics MSE {mean_mse:.5f} over {len(per_row)} rows ({n_invalid} invalid)")

agent_cfg = AgentConfig()
_, real_trace = loops.offline_train(
    train, envs.make_env("pointmass"), agent_cfg, steps=5_000, seed=0,
    eval_every=5_000, eval_episodes=10,
)
_, synth_trace = loops.offline_train(
    synth, envs.make_env("pointmass"), agent_cfg, steps=5_000, seed=0,
    eval_every=5_000, eval_episodes=10,
)
print(f"TD3+BC on real data:      return {real_trace[-1][1]:.1f}")
print(f"TD3+BC on synthetic only: return {synth_trace[-1][1]:.1f}")
