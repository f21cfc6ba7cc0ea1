"""
Full-budget training reproductions. Each run takes tens of minutes on 8 CPU
threads; deselected by default, run with `pytest -m slow`.
"""

import pytest

from Evaluation.Presets import run_preset
from shared.schemas import ExperimentConfig, GridWorldConfig

pytestmark = pytest.mark.slow

FRAMES = 2_000_000


def _base(seed=0, env=None) -> ExperimentConfig:
    return ExperimentConfig(env=env or GridWorldConfig(), actors=8, total_frames=FRAMES, eval_every=250_000,
                            eval_goals=100, eval_trials=20, seed=seed)


def _final(preset, out, base) -> float:
    return run_preset(preset, out, base)[-1].achievement_overall


def test_discern_reaches_most_goals_on_the_open_grid(tmp_path):
    assert _final("discern-uniform", tmp_path, _base()) >= 0.8


def test_discern_ignores_large_distractors_better_than_pixel_distance(tmp_path):
    base = _base(env=GridWorldConfig.distractor_dominant())
    discern = _final("discern-uniform", tmp_path / "discern", base)
    pixel = _final("l2", tmp_path / "l2", base)
    assert discern - pixel >= 0.2


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_hindsight_alone_or_reward_alone_falls_short(tmp_path, seed):
    base = _base(seed=seed)
    full = _final("discern-uniform", tmp_path / "full", base)
    assert _final("her-only", tmp_path / "her", base) <= 0.5 * full
    assert _final("no-her", tmp_path / "noher", base) <= 0.5 * full
