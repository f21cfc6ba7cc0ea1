"""
Goal-conditioned Q-learning: epsilon-greedy acting, Peng's Q(lambda) targets,
hindsight relabelling and the TD update of theta.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np

from Autodiff.Graph import Graph, Var, backward
from Autodiff.Optim import RmsPropState, rmsprop_step
from Nets.Networks import (
    THETA, ParamSet, bind, build_encoder, build_q, encode, flatten_obs, q_values, time_features,
)
from shared.errors import NonFiniteGradientError, ShapeError
from shared.schemas import HindsightConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GoalEpisode:
    """
    One goal episode of T actions.

    observations[t] is the state in which actions[t] was taken; terminal is the
    state reached by the last action. Rewards are zero except at the last step;
    discounts are gamma except 0 at the last step.
    """

    observations: np.ndarray  # (T, H, W, C)
    terminal: np.ndarray  # (H, W, C)
    actions: np.ndarray  # (T,)
    rewards: np.ndarray  # (T,)
    discounts: np.ndarray  # (T,)
    goal: np.ndarray  # (H, W, C)
    actor_id: int = 0
    seq: int = 0
    frames: int = 0
    version: int = 0
    hindsight_applied: bool = False
    replayed: bool = False

    @property
    def length(self) -> int:
        return int(self.actions.shape[0])

    def reached_states(self) -> np.ndarray:
        """States reached after each action: s_2 .. s_T, terminal."""
        return np.concatenate([self.observations[1:], self.terminal[None]], axis=0)


def make_discounts(length: int, gamma: float) -> np.ndarray:
    d = np.full(length, gamma, dtype=np.float64)
    d[-1] = 0.0
    return d


# ---------- acting ----------

def select_action(q: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over a Q vector; ties go to the lowest action index."""
    explore = rng.random() < epsilon
    if explore:
        return int(rng.integers(q.shape[-1]))
    return int(np.argmax(q))


def act(obs: np.ndarray, h_goal: np.ndarray, recurrent_state: np.ndarray, t: int, T: int,
        epsilon: float, params: ParamSet, rng: np.random.Generator) -> Tuple[int, np.ndarray]:
    q, next_state = q_values(encode(obs, params), h_goal, time_features(t, T), recurrent_state, params)
    return select_action(q, epsilon, rng), next_state


# ---------- targets ----------

def peng_q_lambda_targets(rewards: np.ndarray, discounts: np.ndarray, q_all: np.ndarray, lam: float) -> np.ndarray:
    """
    G_T = r_T
    G_t = r_t + gamma_t * ((1 - lam) * max_a Q(s_{t+1}, a) + lam * G_{t+1})

    Works on (..., T) rewards/discounts and (..., T, n) Q values.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    discounts = np.asarray(discounts, dtype=np.float64)
    q_all = np.asarray(q_all, dtype=np.float64)
    if rewards.shape != discounts.shape or q_all.shape[:-1] != rewards.shape:
        raise ShapeError("peng_q_lambda_targets",
                         f"rewards {rewards.shape}, discounts {discounts.shape}, q {q_all.shape} disagree")
    targets = np.empty_like(rewards)
    targets[..., -1] = rewards[..., -1]
    next_max = q_all[..., 1:, :].max(axis=-1)
    for t in range(rewards.shape[-1] - 2, -1, -1):
        mix = (1.0 - lam) * next_max[..., t] + lam * targets[..., t + 1]
        targets[..., t] = rewards[..., t] + discounts[..., t] * mix
    return targets


# ---------- hindsight ----------

def relabel_hindsight(episode: GoalEpisode, cfg: HindsightConfig, rng: np.random.Generator) -> GoalEpisode:
    """With prob p_her: goal <- one of the last `window` reached states, r_T <- 1."""
    if not rng.random() < cfg.p_her:
        return episode
    reached = episode.reached_states()
    t = episode.length
    pick = int(rng.integers(max(0, t - cfg.window), t))
    rewards = episode.rewards.copy()
    rewards[-1] = 1.0
    return replace(episode, goal=reached[pick].copy(), rewards=rewards)


# ---------- TD update ----------

def build_td_loss(g: Graph, p, batch: Sequence[GoalEpisode], lam: float) -> Tuple[Var, np.ndarray]:
    """Mean squared Peng Q(lambda) error over batch and steps; returns (loss, targets)."""
    b, t_len = len(batch), batch[0].length
    if any(ep.length != t_len for ep in batch):
        raise ShapeError("td_update", "episodes in a batch must share their length")
    obs = np.stack([ep.observations for ep in batch])
    goals = flatten_obs(np.stack([ep.goal for ep in batch]), batch=True)

    h_all = build_encoder(g, p, g.input("obs", obs.reshape(b * t_len, -1)))
    h_all = g.reshape(h_all, (b, t_len, h_all.shape[-1]))
    h_goal = build_encoder(g, p, g.input("goals", goals))
    state = g.input("state0", np.zeros((b, p["gru/uz"].shape[0])))

    qs: List[Var] = []
    for t in range(t_len):
        tf = g.input(f"time{t}", np.tile(time_features(t + 1, t_len), (b, 1)))
        q, state = build_q(g, p, g.select(h_all, t, axis=1), h_goal, tf, state)
        qs.append(q)

    q_np = np.stack([q.value for q in qs], axis=1)
    rewards = np.stack([ep.rewards for ep in batch])
    discounts = np.stack([ep.discounts for ep in batch])
    actions = np.stack([ep.actions for ep in batch]).astype(np.int64)
    targets = peng_q_lambda_targets(rewards, discounts, q_np, lam)

    errors = [g.square(g.pick(qs[t], actions[:, t]) - targets[:, t]) for t in range(t_len)]
    return g.mean(g.concat(errors, axis=-1)), targets


@dataclass(frozen=True)
class UpdateResult:
    loss: float
    params: ParamSet
    state: RmsPropState
    refused: bool = False


def td_update(batch: Sequence[GoalEpisode], params: ParamSet, opt: RmsPropState, lam: float) -> UpdateResult:
    g = Graph()
    names = params.names(THETA)
    p = bind(g, params, names)
    loss, _ = build_td_loss(g, p, batch, lam)
    value = float(loss.value)
    if not np.isfinite(value):
        log.error("td_update refused: non-finite loss %r", value)
        return UpdateResult(value, params, opt, refused=True)
    try:
        arrays, opt = rmsprop_step(params.arrays, backward(g, loss), opt, names)
    except NonFiniteGradientError:
        return UpdateResult(value, params, opt, refused=True)
    return UpdateResult(value, params.replace(arrays), opt)
