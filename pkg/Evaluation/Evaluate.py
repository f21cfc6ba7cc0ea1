"""
Goal-achievement evaluation.

For every goal and trial: fresh reset, T greedy steps, then compare the final
avatar position with the goal's. Dimension d is achieved when
|x_d - g_d| <= 0.1 * range_d (range = full grid extent); the goal is achieved
when every dimension is. Fractions are exact counts over goals x trials.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Tuple, Union

import numpy as np

from Agent.Policy import GoalPolicy, greedy_policy
from Evaluation.GoalSet import GoalSet
from GridEnv.Environment import GridWorld
from Nets.Networks import ParamSet
from shared.schemas import AchievementReport, GridWorldConfig

log = logging.getLogger(__name__)

EVAL_STREAM = 0xE7A1
TOLERANCE = 0.1

PolicySource = Union[ParamSet, Callable[[], GoalPolicy]]


def achieved_dimensions(final: np.ndarray, goal: np.ndarray, ranges) -> np.ndarray:
    return np.abs(np.asarray(final) - np.asarray(goal)) <= TOLERANCE * np.asarray(ranges, dtype=np.float64)


def _factory(source: PolicySource, T: int) -> Callable[[], GoalPolicy]:
    if isinstance(source, ParamSet):
        return lambda: greedy_policy(source, T)
    return source


def run_trial(policy: GoalPolicy, env: GridWorld, goal_obs: np.ndarray, seed: np.random.SeedSequence,
              T: int) -> np.ndarray:
    """Final controllable state after T steps from a fresh reset."""
    state, obs = env.reset(int(np.random.default_rng(seed).integers(2**31)))
    policy.begin(goal_obs)
    for t in range(1, T + 1):
        state, obs = env.step(state, int(policy.act(obs, t)))
    return env.controllable_state(state)


def evaluate(source: PolicySource, goal_set: GoalSet, trials: int, T: int, env_config: GridWorldConfig,
             seed: int = 0, workers: int = 1, frames: int = 0) -> AchievementReport:
    if trials < 1:
        raise ValueError("need at least one trial per goal")
    make_policy = _factory(source, T)
    env = GridWorld(env_config)
    ranges = env_config.ranges
    root = np.random.SeedSequence(entropy=seed, spawn_key=(EVAL_STREAM,))

    def _goal(i: int) -> Tuple[int, np.ndarray]:
        joint, per_dim = 0, np.zeros(goal_set.truths.shape[1], dtype=np.int64)
        policy = make_policy()
        for j in range(trials):
            trial_seed = np.random.SeedSequence(entropy=root.entropy, spawn_key=(EVAL_STREAM, i, j))
            final = run_trial(policy, env, goal_set.observations[i], trial_seed, T)
            hit = achieved_dimensions(final, goal_set.truths[i], ranges)
            per_dim += hit
            joint += int(hit.all())
        return joint, per_dim

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_goal, range(len(goal_set))))
    else:
        results = [_goal(i) for i in range(len(goal_set))]

    report = AchievementReport(
        n_goals=len(goal_set),
        trials_per_goal=trials,
        achieved=sum(r[0] for r in results),
        achieved_per_dimension=[int(c) for c in np.sum([r[1] for r in results], axis=0)],
        frames=frames,
    )
    log.info("evaluation frames=%d overall=%.4f per_dimension=%s", frames, report.overall,
             ",".join(f"{v:.4f}" for v in report.per_dimension))
    return report
