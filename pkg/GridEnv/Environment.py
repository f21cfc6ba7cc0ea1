"""
Grid world with one controllable avatar and uncontrollable distractors.

Avatar dynamics are a deterministic function of (state, action). Distractors
move on their own (random walk or a fixed loop) and never read the action.
The environment is pure: step() returns a new EnvState, the RNG state travels
inside it.
"""

from dataclasses import dataclass, replace
from typing import List, Tuple

import numpy as np

from shared.errors import EnvironmentConfigError, InvalidActionError
from shared.schemas import N_ACTIONS, GridWorldConfig

UP, DOWN, LEFT, RIGHT, NOOP = range(N_ACTIONS)
MOVES = {UP: (0, -1), DOWN: (0, 1), LEFT: (-1, 0), RIGHT: (1, 0), NOOP: (0, 0)}
WALK = (MOVES[UP], MOVES[DOWN], MOVES[LEFT], MOVES[RIGHT])

Cell = Tuple[int, int]


@dataclass(frozen=True)
class EnvState:
    avatar: Cell
    distractors: Tuple[Cell, ...]
    phases: Tuple[int, ...]  # loop index per distractor (cyclic motion)
    rng_state: dict
    steps: int = 0


def _rng(state_dict: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state_dict
    return rng


def _clamp(v: int, hi: int) -> int:
    return min(max(v, 0), hi)


def loop_cells(config: GridWorldConfig) -> List[Cell]:
    """Clockwise border loop that a block of distractor_size cells can follow."""
    hi_x = config.width - config.distractor_size
    hi_y = config.height - config.distractor_size
    if hi_x <= 0 or hi_y <= 0:
        return [(x, 0) for x in range(hi_x + 1)] if hi_y <= 0 else [(0, y) for y in range(hi_y + 1)]
    top = [(x, 0) for x in range(hi_x)]
    right = [(hi_x, y) for y in range(hi_y)]
    bottom = [(x, hi_y) for x in range(hi_x, 0, -1)]
    left = [(0, y) for y in range(hi_y, 0, -1)]
    return top + right + bottom + left


class GridWorld:
    """Environment factory bound to one GridWorldConfig."""

    def __init__(self, config: GridWorldConfig):
        if config.width * config.height <= 1:
            raise EnvironmentConfigError(f"degenerate grid {config.width}x{config.height}")
        if config.distractor_size > min(config.width, config.height):
            raise EnvironmentConfigError("distractor block does not fit in the grid")
        self.config = config
        self.loop = loop_cells(config)

    @property
    def n_actions(self) -> int:
        return N_ACTIONS

    def _block(self, cell: Cell) -> List[Cell]:
        k = self.config.distractor_size
        return [(cell[0] + dx, cell[1] + dy) for dx in range(k) for dy in range(k)]

    def reset(self, seed: int) -> Tuple[EnvState, np.ndarray]:
        cfg = self.config
        rng = np.random.default_rng(seed)
        distractors, phases = [], []
        for _ in range(cfg.n_distractors):
            if cfg.distractor_motion == "cyclic":
                phase = int(rng.integers(len(self.loop)))
                phases.append(phase)
                distractors.append(self.loop[phase])
            else:
                phases.append(0)
                distractors.append((int(rng.integers(cfg.width - cfg.distractor_size + 1)),
                                    int(rng.integers(cfg.height - cfg.distractor_size + 1))))
        occupied = {c for d in distractors for c in self._block(d)}
        free = [(x, y) for y in range(cfg.height) for x in range(cfg.width) if (x, y) not in occupied]
        if not free:
            free = [(x, y) for y in range(cfg.height) for x in range(cfg.width)]
        avatar = free[int(rng.integers(len(free)))]
        state = EnvState(avatar, tuple(distractors), tuple(phases), rng.bit_generator.state, 0)
        return state, self.render(state)

    def step(self, state: EnvState, action: int) -> Tuple[EnvState, np.ndarray]:
        if not isinstance(action, (int, np.integer)) or not 0 <= action < N_ACTIONS:
            raise InvalidActionError(f"action {action!r} not in [0, {N_ACTIONS})")
        cfg = self.config
        dx, dy = MOVES[int(action)]
        avatar = (_clamp(state.avatar[0] + dx, cfg.width - 1), _clamp(state.avatar[1] + dy, cfg.height - 1))

        rng = _rng(state.rng_state)
        distractors, phases = [], []
        for cell, phase in zip(state.distractors, state.phases):
            if cfg.distractor_motion == "cyclic":
                phase = (phase + 1) % len(self.loop)
                cell = self.loop[phase]
            else:
                mx, my = WALK[int(rng.integers(len(WALK)))]
                cell = (_clamp(cell[0] + mx, cfg.width - cfg.distractor_size),
                        _clamp(cell[1] + my, cfg.height - cfg.distractor_size))
            distractors.append(cell)
            phases.append(phase)

        new = replace(state, avatar=avatar, distractors=tuple(distractors), phases=tuple(phases),
                      rng_state=rng.bit_generator.state, steps=state.steps + 1)
        return new, self.render(new)

    def render(self, state: EnvState) -> np.ndarray:
        cfg = self.config
        pal = cfg.palette
        obs = np.empty(cfg.obs_shape)
        obs[:, :] = pal.background
        for d in state.distractors:
            for x, y in self._block(d):
                obs[y, x] = pal.distractor
        obs[state.avatar[1], state.avatar[0]] = pal.avatar
        return obs

    @staticmethod
    def controllable_state(state: EnvState) -> np.ndarray:
        """Ground-truth avatar (x, y); for evaluation only."""
        return np.array(state.avatar, dtype=np.float64)


def reset(config: GridWorldConfig, seed: int) -> Tuple[EnvState, np.ndarray]:
    return GridWorld(config).reset(seed)


def controllable_state(state: EnvState) -> np.ndarray:
    return GridWorld.controllable_state(state)
