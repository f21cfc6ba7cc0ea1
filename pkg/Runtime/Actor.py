"""
Actor: runs goal episodes in its own environment and ships them to the learner.

Per goal episode: sample g from the shared goal buffer, take T epsilon-greedy
steps (offering every visited observation to the buffer), then either relabel
in hindsight (prob p_her, r_T = 1) or score the terminal state with the reward
provider. The environment is never reset between goal episodes; only the
recurrent state is.
"""

import logging
import threading
from dataclasses import replace
from typing import List

import numpy as np

from Agent.Learning import GoalEpisode, make_discounts, relabel_hindsight
from Agent.Policy import NetworkPolicy
from Agent.Replay import ReplayBuffer
from GoalBuffer.Buffer import GoalBuffer
from GridEnv.Environment import GridWorld
from Reward.Providers import RewardProvider
from Runtime.Channels import ParamBroadcast, ParamSnapshot, TrajectoryQueue
from shared.schemas import ExperimentConfig

log = logging.getLogger(__name__)

ACTOR_STREAM = 1


def actor_seed(seed: int, actor_id: int, generation: int = 0) -> np.random.SeedSequence:
    """Independent stream per actor; `generation` > 0 for actors restarted on resume."""
    key = (ACTOR_STREAM, actor_id) + ((generation,) if generation else ())
    return np.random.SeedSequence(entropy=seed, spawn_key=key)


class Actor:
    def __init__(self, actor_id: int, config: ExperimentConfig, provider: RewardProvider,
                 buffer: GoalBuffer, source: ParamBroadcast, epsilon: float, generation: int = 0):
        self.actor_id = actor_id
        self.config = config
        self.provider = provider
        self.buffer = buffer
        self.source = source
        self.epsilon = epsilon
        self.rng = np.random.default_rng(actor_seed(config.seed, actor_id, generation))
        self.env = GridWorld(config.env)
        self.env_state, self.obs = self.env.reset(int(self.rng.integers(2**31)))
        self.replay = ReplayBuffer(config.replay_capacity)
        self.snapshot: ParamSnapshot = source.latest()
        self.seq = 0
        self.episodes = 0
        self.frames = 0  # total environment steps taken
        self._unreported = 0  # steps not yet attached to a message

    def _step(self, action: int) -> None:
        self.env_state, self.obs = self.env.step(self.env_state, action)
        self.frames += 1
        self._unreported += 1

    def warm_up(self) -> None:
        """Random steps until the goal buffer may be sampled."""
        while not self.buffer.is_warm:
            self.buffer.propose_substitution(self.obs, self.rng)
            self._step(int(self.rng.integers(self.env.n_actions)))

    def run_episode(self) -> List[GoalEpisode]:
        """One goal episode; returns the fresh episode and, when available, a replayed one."""
        self.warm_up()
        cfg = self.config
        T = cfg.episode_length
        goal = self.buffer.sample_goal(self.rng)
        policy = NetworkPolicy(self.snapshot.params, T, self.epsilon, self.rng)
        policy.begin(goal)

        observations = np.empty((T, *cfg.env.obs_shape))
        actions = np.empty(T, dtype=np.int64)
        for t in range(T):
            observations[t] = self.obs
            self.buffer.propose_substitution(self.obs, self.rng)
            actions[t] = policy.act(self.obs, t + 1)
            self._step(int(actions[t]))

        rewards = np.zeros(T)
        rewards[-1] = self.provider.reward(self.snapshot.params, self.obs, goal)
        raw = GoalEpisode(
            observations=observations, terminal=self.obs.copy(), actions=actions, rewards=rewards,
            discounts=make_discounts(T, cfg.gamma), goal=goal, actor_id=self.actor_id, seq=self.seq,
            version=self.snapshot.version,
        )
        fresh = replace(relabel_hindsight(raw, cfg.hindsight, self.rng), frames=self._unreported,
                        hindsight_applied=True)
        self._unreported = 0
        self.seq += 1

        out = [fresh]
        replayed = self.replay.sample(self.rng)
        if replayed is not None:
            out.append(replace(replayed, replayed=True, hindsight_applied=False, frames=0))
        self.replay.add(raw)

        self.episodes += 1
        if self.episodes % cfg.poll_every == 0:
            self.snapshot = self.source.latest()
        return out

    def take_unreported(self) -> int:
        """Steps not yet attached to a delivered episode; resets the count."""
        n, self._unreported = self._unreported, 0
        return n


def actor_loop(actor: Actor, sink: TrajectoryQueue, stop: threading.Event) -> Actor:
    """Run goal episodes into `sink` until `stop` is set."""
    log.info("actor started id=%d epsilon=%.4f", actor.actor_id, actor.epsilon)
    while not stop.is_set():
        for episode in actor.run_episode():
            if not sink.put(episode, stop):
                actor._unreported += episode.frames
                break
    log.info("actor stopped id=%d episodes=%d frames=%d", actor.actor_id, actor.episodes, actor.frames)
    return actor
