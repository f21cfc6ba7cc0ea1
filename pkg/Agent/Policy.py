from typing import Optional, Protocol

import numpy as np

from Agent.Learning import select_action
from Nets.Networks import ParamSet, encode, initial_state, q_values, time_features


class GoalPolicy(Protocol):
    def begin(self, goal_obs: np.ndarray) -> None: ...

    def act(self, obs: np.ndarray, t: int) -> int: ...


class NetworkPolicy:
    """
    Goal-conditioned epsilon-greedy policy over a parameter snapshot.

    begin() encodes the goal once and resets the recurrent state; act() takes
    the 1-based step index within the goal episode.
    """

    def __init__(self, params: ParamSet, episode_length: int, epsilon: float = 0.0,
                 rng: Optional[np.random.Generator] = None):
        self.params = params
        self.episode_length = episode_length
        self.epsilon = epsilon
        self.rng = rng or np.random.default_rng(0)
        self.h_goal = None
        self.state = initial_state(params)

    def begin(self, goal_obs: np.ndarray) -> None:
        self.h_goal = encode(goal_obs, self.params)
        self.state = initial_state(self.params)

    def act(self, obs: np.ndarray, t: int) -> int:
        q, self.state = q_values(encode(obs, self.params), self.h_goal,
                                 time_features(t, self.episode_length), self.state, self.params)
        return select_action(q, self.epsilon, self.rng)


def greedy_policy(params: ParamSet, episode_length: int) -> NetworkPolicy:
    return NetworkPolicy(params, episode_length, epsilon=0.0)
