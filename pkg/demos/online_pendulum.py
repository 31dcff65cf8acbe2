"""Online synthetic-replay loop on Pendulum, shrunk to a coffee-break run.

SAC collects real steps; every `gen_every` steps the diffusion model is
fine-tuned on the real buffer and refills a finite synthetic buffer; agent
updates draw half of each batch from synthetic experience.
"""

import torch

from synther import diffusion, envs, loops
from synther.agents import AgentConfig

torch.set_num_threads(1)

agent_cfg = AgentConfig(hidden=(128, 128), utd=4)
synther_cfg = loops.SyntherOnlineConfig(
    ratio=0.5,
    gen_every=1_000,
    gen_count=5_000,
    diffusion_steps_per_round=500,
    synthetic_capacity=10_000,
    warmup=1_000,
    edm=diffusion.EDMConfig(width=128, depth=2, steps=24, batch_size=256),
)

agent, trace = loops.online_synther_train(
    envs.make_env("pendulum"),
    envs.make_env("pendulum"),
    agent_cfg,
    synther_cfg,
    total_steps=6_000,
    seed=0,
    eval_every=1_000,
    eval_episodes=5,
    log=print,
)

print("step  mean_return  std")
for step, mean, std in trace:
    print(f"{step:5d}  {mean:11.1f}  {std:.1f}")
