import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from Nets.Networks import init_params  # noqa: E402
from shared.schemas import ExperimentConfig, GridWorldConfig  # noqa: E402


def make_tiny_config(**overrides) -> ExperimentConfig:
    """Small nets and budgets so a full training run finishes in seconds."""
    values = dict(
        env=GridWorldConfig(width=4, height=4, n_distractors=1),
        encoder_hidden=8,
        feature_dim=6,
        recurrent_dim=5,
        time_hidden=3,
        embedding_dim=4,
        episode_length=4,
        batch_size=2,
        buffer_capacity=16,
        goal_warmup=8,
        replay_capacity=8,
        broadcast_every=2,
        eval_goals=3,
        eval_trials=2,
        total_frames=60,
        eval_every=20,
        record_wall_time=False,
        learning_rate=1e-3,
    )
    values.update(overrides)
    return ExperimentConfig(**values)


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    return make_tiny_config()


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config, seed=3)
