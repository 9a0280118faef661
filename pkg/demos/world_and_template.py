"""
A first look at the synthetic world and the output template
===========================================================

Episodes come from scripted scenes driven by an expert. Each one holds
ego-centric BEV rasters (current + history), the future front-view
rasters the model learns to anticipate in latent space, and the expert's
next six waypoints.
"""

import numpy as np

from futureplan.tokens import SpecialVocab, build_output_template, locate_spans
from futureplan.world.episodes import NO_TRIGGER, generate_episode
from futureplan.world.scenarios import SCENARIOS

np.set_printoptions(precision=2, suppress=True)

###############################################################################
# One episode per scenario. The command indexes one of K=6 trajectories.
for name in SCENARIOS:
    ep = generate_episode(0, name)
    trig = "-" if ep.trigger_offset == NO_TRIGGER else ep.trigger_offset
    print(f"{name:26s} command={ep.command}  final waypoint={ep.gt_traj[-1]}  "
          f"agents={int(ep.agent_mask.sum())}  trigger offset={trig}")

###############################################################################
# In the emergency-brake scene the pedestrian is still at the kerb at time t;
# only the future front view shows it stepping out.
ep = generate_episode(3, "emergency-brake")
print("\nBEV stack", ep.obs_bev.shape, "front stack", ep.future_front.shape)
change = np.abs(ep.future_front - ep.future_front[0]).reshape(len(ep.future_front), -1).sum(1)
print("trigger offset", ep.trigger_offset, "| front-view change vs step t+1:", change)

###############################################################################
# Training datasets add small pose noise before the snapshot, so some
# expert trajectories show a recovery back to the lane centre.
calm = generate_episode(4, "straight-follow")
noisy = generate_episode(4, "straight-follow", perturb=True)
print("\nundisturbed lateral offsets:", calm.gt_traj[:, 1])
print("recovery lateral offsets:   ", noisy.gt_traj[:, 1])

###############################################################################
# The output template: F frames of N placeholders between boundary markers,
# then the single planning token whose hidden state seeds the planner.
vocab = SpecialVocab.create(num_tokens=4)
tmpl = build_output_template(num_frames=3, num_tokens=4, vocab=vocab)
print("\ntemplate ids:", list(tmpl.token_ids))
print("length", len(tmpl), "= F(N+2)+1 =", 3 * (4 + 2) + 1)
print("frame spans:", tmpl.frame_spans, "planning position:", tmpl.planning_pos)
spans, pos = locate_spans(tmpl.token_ids, vocab)
print("recovered from the ids alone:", spans == list(tmpl.frame_spans) and pos == tmpl.planning_pos)
