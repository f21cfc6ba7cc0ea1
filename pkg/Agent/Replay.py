from collections import deque
from typing import Deque, List, Optional

import numpy as np

from Agent.Learning import GoalEpisode


class ReplayBuffer:
    """Actor-local FIFO of goal episodes, stored with their original goals."""

    def __init__(self, capacity: int = 256):
        self.capacity = capacity
        self._episodes: Deque[GoalEpisode] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._episodes)

    def add(self, episode: GoalEpisode) -> None:
        self._episodes.append(episode)

    def sample(self, rng: np.random.Generator) -> Optional[GoalEpisode]:
        if not self._episodes:
            return None
        return self._episodes[int(rng.integers(len(self._episodes)))]

    def episodes(self) -> List[GoalEpisode]:
        return list(self._episodes)

    def extend(self, episodes) -> None:
        for ep in episodes:
            self.add(ep)
