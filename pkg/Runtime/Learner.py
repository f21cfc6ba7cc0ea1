"""
Learner: batches goal episodes, relabels the ones that have not been through
the hindsight gate, updates theta with Peng's Q(lambda) and the reward
embedding with the provider's loss, and broadcasts parameters.
"""

import logging
import threading
from dataclasses import replace
from typing import Callable, Dict, List, Optional

import numpy as np

from Agent.Learning import GoalEpisode, relabel_hindsight, td_update
from Autodiff.Graph import Graph, backward
from Autodiff.Optim import RmsPropState, rmsprop_step
from GoalBuffer.Buffer import GoalBuffer
from Nets.Networks import ParamSet, bind, encode
from Reward.Providers import RewardBatch, RewardProvider
from Runtime.Channels import ParamBroadcast, TrajectoryQueue
from shared.errors import NonFiniteGradientError
from shared.schemas import ExperimentConfig

log = logging.getLogger(__name__)

LEARNER_STREAM = 2


class Learner:
    def __init__(self, config: ExperimentConfig, params: ParamSet, provider: RewardProvider,
                 buffer: GoalBuffer, broadcast: ParamBroadcast):
        self.config = config
        self.params = params
        self.provider = provider
        self.buffer = buffer
        self.broadcast = broadcast
        self.opt = RmsPropState(config.learning_rate, config.rms_decay, config.rms_epsilon)
        self.rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(LEARNER_STREAM,)))
        self.pending: List[GoalEpisode] = []
        self.frames = 0
        self.updates = 0
        self.last_seq: Dict[int, int] = {}
        self.sequence_faults = 0
        self.refused = 0
        self.stats: Dict[str, List[float]] = {"td_loss": [], "disc_loss": [], "reward": []}

    # ---------- intake ----------
    def observe(self, episode: GoalEpisode) -> None:
        self.frames += episode.frames
        if not episode.replayed:
            expected = self.last_seq.get(episode.actor_id, -1) + 1
            if episode.seq != expected:
                self.sequence_faults += 1
                log.error("trajectory sequence fault actor=%d expected=%d got=%d",
                          episode.actor_id, expected, episode.seq)
            self.last_seq[episode.actor_id] = episode.seq
        self.pending.append(episode)

    def ready(self) -> bool:
        return len(self.pending) >= self.config.batch_size

    # ---------- updates ----------
    def _relabel(self, batch: List[GoalEpisode]) -> List[GoalEpisode]:
        out = []
        for ep in batch:
            if not ep.hindsight_applied:
                ep = replace(relabel_hindsight(ep, self.config.hindsight, self.rng), hindsight_applied=True)
            out.append(ep)
        return out

    def reward_update(self, batch: List[GoalEpisode]) -> float:
        """One step of the provider's embedding loss; NaN when the provider does not train."""
        if not self.provider.trains:
            return float("nan")
        cfg = self.config
        b = len(batch)
        h_terminal = encode(np.stack([ep.terminal for ep in batch]), self.params)
        h_goal = encode(np.stack([ep.goal for ep in batch]), self.params)
        h_decoys = None
        if self.provider.needs_decoys:
            decoys = np.stack([self.buffer.sample_decoys(cfg.decoys, self.rng, goal=ep.goal) for ep in batch])
            h_decoys = encode(decoys.reshape(b * cfg.decoys, *decoys.shape[2:]), self.params)
            h_decoys = h_decoys.reshape(b, cfg.decoys, -1)

        g = Graph()
        names = self.params.names(*self.provider.trains)
        p = bind(g, self.params, names)
        loss = self.provider.loss(g, p, RewardBatch(h_terminal, h_goal, h_decoys, cfg.effective_beta))
        value = float(loss.value)
        if not np.isfinite(value):
            log.error("reward update refused: non-finite loss %r", value)
            self.refused += 1
            return value
        try:
            arrays, self.opt = rmsprop_step(self.params.arrays, backward(g, loss), self.opt, names)
        except NonFiniteGradientError:
            self.refused += 1
            return value
        self.params = self.params.replace(arrays)
        return value

    def step(self) -> Dict[str, float]:
        """Consume one batch of B episodes."""
        b = self.config.batch_size
        batch, self.pending = self._relabel(self.pending[:b]), self.pending[b:]

        result = td_update(batch, self.params, self.opt, self.config.lam)
        self.params, self.opt = result.params, result.state
        self.refused += int(result.refused)
        disc = self.reward_update(batch)

        self.updates += 1
        if self.updates % self.config.broadcast_every == 0:
            self.broadcast.publish(self.params)
        rewards = [float(ep.rewards[-1]) for ep in batch]
        self.stats["td_loss"].append(result.loss)
        self.stats["disc_loss"].append(disc)
        self.stats["reward"].extend(rewards)
        if self.updates % 100 == 0:
            log.debug("learner update=%d frames=%d td_loss=%.6f disc_loss=%.6f",
                      self.updates, self.frames, result.loss, disc)
        return {"td_loss": result.loss, "disc_loss": disc, "mean_reward": float(np.mean(rewards))}

    def drain_stats(self) -> Dict[str, float]:
        """Means since the previous call (NaN when nothing was recorded)."""
        def _mean(values):
            finite = [v for v in values if np.isfinite(v)]
            return float(np.mean(finite)) if finite else float("nan")

        out = {
            "td_loss": _mean(self.stats["td_loss"]),
            "disc_loss": _mean(self.stats["disc_loss"]),
            "mean_reward": _mean(self.stats["reward"]),
        }
        self.stats = {"td_loss": [], "disc_loss": [], "reward": []}
        return out


def learner_loop(learner: Learner, source: TrajectoryQueue, stop: threading.Event,
                 on_update: Optional[Callable[[Learner], None]] = None) -> Learner:
    """Consume episodes from `source` until the frame budget is met, then set `stop`."""
    while not stop.is_set() and learner.frames < learner.config.total_frames:
        episode = source.get(timeout=0.1)
        if episode is None:
            continue
        learner.observe(episode)
        while learner.ready():
            learner.step()
            if on_update is not None:
                on_update(learner)
    stop.set()
    return learner
