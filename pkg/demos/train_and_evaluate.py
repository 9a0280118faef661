"""
Training a small planner and driving with it
============================================

A few hundred steps on a small dataset are enough to watch every loss term
fall and to compare the coarse VAE proposal with the refined trajectory.
The acceptance runs use the default sizes and far more data; this script
keeps everything small enough for a laptop minute or two.
"""

import numpy as np

from futureplan.config import Config
from futureplan.evaluation import evaluate_closed_loop, evaluate_open_loop, suite_jobs
from futureplan.training import train
from futureplan.world.dataset import generate_dataset, parse_scenario_mix

###############################################################################
# Data: 300 episodes over every scenario, 10% held out.
ds = generate_dataset(parse_scenario_mix("all"), 300, seed=0)
train_set, holdout = ds.split(0.1, seed=0)
print(f"{len(train_set)} training / {len(holdout)} held-out episodes")

###############################################################################
# A reduced model. ``variant="full"`` keeps latent frames and two-stage decoding.
cfg = Config(d_model=64, n_layers=2, n_heads=4, num_tokens=4, scene_tokens=4, history_tokens=2,
             encoder_channels=8, latent_dim=16, teacher_channels=16, refine_dim=32,
             batch_size=16, steps=300, warmup_steps=30)


def report(rec):
    if rec["step"] % 50 == 0:
        terms = "  ".join(f"{k}={rec[k]:.3f}" for k in ("l_vis", "l_plan", "l_plan_r", "l_ce"))
        print(f"step {rec['step']:4d}  {terms}")


model = train(train_set, cfg, callback=report).model

###############################################################################
# Open loop: errors of the command-selected trajectory per horizon step.
res = evaluate_open_loop(model, holdout)
for stage in ("coarse", "final"):
    print(f"{stage:6s} ADE {res[stage]['ade']:.2f} m  FDE {res[stage]['fde']:.2f} m  per step",
          np.round(res[stage]["l2"], 2))

###############################################################################
# Closed loop: re-plan every 0.5 s and track the first waypoint.
cl = evaluate_closed_loop(model, suite_jobs(["straight-follow", "emergency-brake"], range(900_000, 900_005)))
print("success", cl["success_rate"], "collisions", cl["collision_rate"],
      "toy driving score", round(cl["driving_score"], 1))
