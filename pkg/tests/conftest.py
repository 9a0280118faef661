import numpy as np
import pytest
import torch

from futureplan.config import Config
from futureplan.model import FuturePlanner
from futureplan.world.core import WorldConfig

# Tiny sizes for gradient checks and fast structural tests.
MICRO_WORLD = WorldConfig(horizon=2, num_commands=2, bev_size=16, front_size=8, history=1,
                          max_lanes=2, lane_points=4, max_agents=2)
MICRO_CFG = Config(d_model=8, n_layers=2, n_heads=2, ff_mult=2, max_seq_len=32, num_frames=2, num_tokens=2,
                   scene_tokens=2, history_tokens=2, encoder_channels=4, latent_dim=4, teacher_channels=4,
                   num_modes=2, z_dim=3, refine_dim=8, traj_scale=1.0, batch_size=4)

# Small but world-compatible sizes (F=6, K=6 fixed by the world).
SMALL_CFG = Config(d_model=32, n_layers=2, n_heads=2, num_tokens=4, scene_tokens=4, history_tokens=2,
                   encoder_channels=8, latent_dim=8, teacher_channels=8, refine_dim=16, batch_size=8)


def micro_model(variant="full", dtype=torch.float64, seed=0, **kw):
    torch.manual_seed(seed)
    return FuturePlanner(MICRO_CFG.replace(variant=variant, **kw), MICRO_WORLD).to(dtype)


def random_batch(world: WorldConfig, cfg: Config, b: int, seed: int = 0, dtype=torch.float64):
    """Synthetic batch with straight lanes around the ego and agents close enough to trigger hinges."""
    g = torch.Generator().manual_seed(seed)
    f = world.horizon
    xs = torch.linspace(-5.0, 20.0, world.lane_points, dtype=dtype)
    lanes = torch.zeros(b, world.max_lanes, world.lane_points, 2, dtype=dtype)
    for i in range(world.max_lanes):
        lanes[:, i, :, 0] = xs
        lanes[:, i, :, 1] = 3.5 * i
    lane_mask = torch.ones(b, world.max_lanes, dtype=torch.bool)
    lane_mask[:, -1] = torch.rand(b, generator=g) < 0.5
    return {
        "obs_bev": torch.rand(b, world.history + 1, world.bev_channels, world.bev_size, world.bev_size,
                              generator=g).to(dtype),
        "future_front": (torch.rand(b, f, world.front_size, world.front_size, generator=g) < 0.3).to(dtype),
        "command": torch.randint(0, cfg.num_modes, (b,), generator=g),
        "gt_traj": (torch.randn(b, f, 2, generator=g) * 2.0).to(dtype),
        "lanes": lanes,
        "lane_mask": lane_mask,
        "lane_half_width": torch.full((b, world.max_lanes), 2.0, dtype=dtype),
        "agent_futures": (torch.randn(b, world.max_agents, f, 2, generator=g) * 1.5).to(dtype),
        "agent_mask": torch.rand(b, world.max_agents, generator=g) < 0.7,
    }


@pytest.fixture(scope="session")
def small_dataset():
    from futureplan.world.dataset import generate_dataset, parse_scenario_mix

    return generate_dataset(parse_scenario_mix("all"), 40, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
