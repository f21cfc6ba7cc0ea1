"""
Goal-achievement rewards.

The learned reward is the rectified cosine similarity of L2-normalised goal
embeddings, r = max(0, xi(h(s_T)) . xi(h(g))). Its embedding is trained as a
discriminator: a softmax over beta-scaled similarities picks the true goal out
of K decoys. h(.) is treated as fixed (stop-gradient) by every reward loss.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from Autodiff.Graph import Graph, Var
from Nets.Networks import (
    DECODER, PHI, ParamSet, bind, build_decoder, build_embedding, embed, encode,
)
from shared.errors import OutOfRangeError
from shared.schemas import ExperimentConfig

log = logging.getLogger(__name__)


# ---------- similarity and shaping ----------

def goal_similarity(h_sT: np.ndarray, h_g: np.ndarray, params: ParamSet) -> float:
    e = embed(np.stack([h_sT, h_g]), params)
    if not np.any(e[0]) or not np.any(e[1]):
        log.warning("goal_similarity: degenerate zero embedding; similarity set to 0")
        return 0.0
    return float(e[0] @ e[1])


def achievement_reward(ell: float) -> float:
    return min(1.0, max(0.0, float(ell)))


def l2_pixel_reward(s: np.ndarray, g: np.ndarray, sigma_pixel: float) -> float:
    if sigma_pixel <= 0.0:
        raise OutOfRangeError(f"sigma_pixel must be positive, got {sigma_pixel}")
    diff = np.asarray(s, dtype=np.float64) - np.asarray(g, dtype=np.float64)
    return float(np.exp(-np.sum(diff * diff) / sigma_pixel))


# ---------- discriminator ----------

@dataclass(frozen=True)
class DiscriminatorBatchItem:
    h_terminal: np.ndarray  # (F,)
    h_goal: np.ndarray  # (F,)
    h_decoys: np.ndarray  # (K, F)

    @property
    def k(self) -> int:
        return self.h_decoys.shape[0]

    @property
    def beta(self) -> float:
        return float(self.k + 1)


def build_discriminator_logits(g: Graph, p: Dict[str, Var], h_terminal: Var, h_goal: Var,
                               h_decoys: Var, beta: float) -> Var:
    """(B, K+1) logits; column 0 is the true goal."""
    b, k, f = h_decoys.shape
    e_s = build_embedding(g, p, g.stop_gradient(h_terminal))
    e_g = build_embedding(g, p, g.stop_gradient(h_goal))
    e_d = build_embedding(g, p, g.reshape(g.stop_gradient(h_decoys), (b * k, f)))
    m = e_s.shape[-1]
    pos = g.sum(e_s * e_g, axis=-1, keepdims=True)
    neg = g.sum(g.reshape(e_s, (b, 1, m)) * g.reshape(e_d, (b, k, m)), axis=-1)
    return g.concat([pos, neg], axis=-1) * beta


def build_discriminator_loss(g: Graph, p: Dict[str, Var], h_terminal: Var, h_goal: Var,
                             h_decoys: Var, beta: float) -> Var:
    """-(1/B) sum_b log q(g_b | s_T^b)."""
    logits = build_discriminator_logits(g, p, h_terminal, h_goal, h_decoys, beta)
    log_q = g.log_softmax(logits, axis=-1)
    return -g.mean(g.pick(log_q, np.zeros(logits.shape[0], dtype=np.int64)))


def _item_graph(item: DiscriminatorBatchItem, params: ParamSet) -> Tuple[Graph, Dict[str, Var], Var, Var, Var]:
    g = Graph()
    p = bind(g, params, params.names(PHI))
    return (g, p, g.input("h_terminal", item.h_terminal[None]), g.input("h_goal", item.h_goal[None]),
            g.input("h_decoys", item.h_decoys[None]))


def discriminator_loss(item: DiscriminatorBatchItem, params: ParamSet) -> float:
    g, p, hs, hg, hd = _item_graph(item, params)
    return float(build_discriminator_loss(g, p, hs, hg, hd, item.beta).value)


def discriminator_probabilities(item: DiscriminatorBatchItem, params: ParamSet) -> np.ndarray:
    """q over [goal, decoy_1..decoy_K]."""
    g, p, hs, hg, hd = _item_graph(item, params)
    return g.softmax(build_discriminator_logits(g, p, hs, hg, hd, item.beta)).value[0]


# ---------- conditioned autoencoder baseline ----------

def build_ae_loss(g: Graph, p: Dict[str, Var], features: Var) -> Var:
    """mean_b ||h - xi^-1(xi(h))||^2 with h held fixed."""
    h = g.stop_gradient(features)
    recon = build_decoder(g, p, build_embedding(g, p, h))
    return g.mean(g.sum(g.square(h - recon), axis=-1))


def ae_baseline_train(features_batch: np.ndarray, params: ParamSet) -> float:
    """Reconstruction loss of a feature batch (B, F) under the AE parameters."""
    g = Graph()
    p = bind(g, params, params.names(PHI, DECODER))
    return float(build_ae_loss(g, p, g.input("features", np.atleast_2d(features_batch))).value)


# ---------- providers ----------

@dataclass(frozen=True)
class RewardBatch:
    h_terminal: np.ndarray  # (B, F)
    h_goal: np.ndarray  # (B, F)
    h_decoys: Optional[np.ndarray]  # (B, K, F)
    beta: float


class RewardProvider:
    kind = "none"
    trains: Tuple[str, ...] = ()
    needs_decoys = False

    def reward(self, params: ParamSet, terminal_obs: np.ndarray, goal_obs: np.ndarray) -> float:
        return 0.0

    def loss(self, g: Graph, p: Dict[str, Var], batch: RewardBatch) -> Optional[Var]:
        return None


class DiscernReward(RewardProvider):
    kind = "discern"
    trains = (PHI,)
    needs_decoys = True

    def reward(self, params, terminal_obs, goal_obs):
        h = encode(np.stack([terminal_obs, goal_obs]), params)
        return achievement_reward(goal_similarity(h[0], h[1], params))

    def loss(self, g, p, batch):
        return build_discriminator_loss(
            g, p, g.input("h_terminal", batch.h_terminal), g.input("h_goal", batch.h_goal),
            g.input("h_decoys", batch.h_decoys), batch.beta,
        )


class AutoencoderReward(DiscernReward):
    kind = "ae"
    trains = (PHI, DECODER)
    needs_decoys = False

    def loss(self, g, p, batch):
        features = np.concatenate([batch.h_terminal, batch.h_goal])
        return build_ae_loss(g, p, g.input("features", features))


class PixelL2Reward(RewardProvider):
    kind = "l2"

    def __init__(self, sigma_pixel: float):
        if sigma_pixel <= 0.0:
            raise OutOfRangeError(f"sigma_pixel must be positive, got {sigma_pixel}")
        self.sigma_pixel = sigma_pixel

    def reward(self, params, terminal_obs, goal_obs):
        return l2_pixel_reward(terminal_obs, goal_obs, self.sigma_pixel)


def make_provider(config: ExperimentConfig) -> RewardProvider:
    if config.reward == "discern":
        return DiscernReward()
    if config.reward == "ae":
        return AutoencoderReward()
    if config.reward == "l2":
        return PixelL2Reward(config.sigma_pixel)
    return RewardProvider()
