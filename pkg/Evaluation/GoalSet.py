"""Fixed evaluation goals: rendered observation + ground-truth avatar position."""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from GridEnv.Environment import GridWorld
from shared.errors import CheckpointError
from shared.schemas import GridWorldConfig

GOAL_STREAM = 0x601  # keeps goal rollouts apart from every training stream
ROLLOUT_STEPS = 25

MAGIC = b"DSGS"
_HEADER = struct.Struct("<4sIIIII")


@dataclass(frozen=True)
class GoalSet:
    observations: np.ndarray  # (N, H, W, C)
    truths: np.ndarray  # (N, dims)

    def __len__(self) -> int:
        return int(self.observations.shape[0])


def build_goal_set(env_config: GridWorldConfig, n_goals: int, seed: int, steps: int = ROLLOUT_STEPS) -> GoalSet:
    """Each goal is where a uniformly random policy ends up `steps` moves after a reset."""
    if n_goals < 1:
        raise ValueError("need at least one goal")
    env = GridWorld(env_config)
    observations, truths = [], []
    for child in np.random.SeedSequence(entropy=seed, spawn_key=(GOAL_STREAM,)).spawn(n_goals):
        rng = np.random.default_rng(child)
        state, obs = env.reset(int(rng.integers(2**31)))
        for _ in range(steps):
            state, obs = env.step(state, int(rng.integers(env.n_actions)))
        observations.append(obs)
        truths.append(env.controllable_state(state))
    return GoalSet(np.stack(observations), np.stack(truths))


def save_goal_set(path: Path, goals: GoalSet) -> None:
    n, h, w, c = goals.observations.shape
    dims = goals.truths.shape[1]
    parts = [_HEADER.pack(MAGIC, n, h, w, c, dims)]
    for obs, truth in zip(goals.observations, goals.truths):
        parts.append(np.ascontiguousarray(obs, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(truth, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_goal_set(path: Path) -> GoalSet:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError("truncated goal-set header", len(raw))
    magic, n, h, w, c, dims = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}", 0)
    per = h * w * c + dims
    body = raw[_HEADER.size:]
    if len(body) != n * per * 8:
        raise CheckpointError(f"expected {n * per * 8} payload bytes, found {len(body)}", _HEADER.size)
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(n, per)
    return GoalSet(flat[:, : h * w * c].reshape(n, h, w, c), flat[:, h * w * c:])
