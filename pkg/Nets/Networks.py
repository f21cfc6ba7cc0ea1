"""
Function approximators of the agent.

  h(s)   shared flatten-MLP encoder (two hidden ReLU layers, linear F-dim output)
  xi(h)  goal embedding: one tanh layer followed by L2 normalisation
  time   (sin 2pi t/T, cos 2pi t/T) through one hidden ReLU layer
  trunk  gated recurrent cell over [h(s_t), h(s_g), time]
  head   dueling Q: psi.v + (psi.w_a - mean_a' psi.w_a') + b

Graph builders (build_*) record into an Autodiff Graph and are what the learner
differentiates. The plain functions (encode, embed, q_values) evaluate a
parameter snapshot and are what actors and evaluation call.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np

from Autodiff.Graph import Graph, Var
from shared.errors import OutOfRangeError, ShapeError
from shared.schemas import N_ACTIONS, ExperimentConfig

THETA = "theta"
PHI = "phi"
DECODER = "decoder"


@dataclass(frozen=True)
class ParamSet:
    arrays: Dict[str, np.ndarray]
    groups: Dict[str, str] = field(default_factory=dict)

    def names(self, *groups: str) -> Tuple[str, ...]:
        return tuple(n for n in self.arrays if not groups or self.groups.get(n) in groups)

    def replace(self, arrays: Mapping[str, np.ndarray]) -> "ParamSet":
        merged = dict(self.arrays)
        merged.update(arrays)
        return ParamSet(merged, dict(self.groups))

    def copy(self) -> "ParamSet":
        return ParamSet({k: v.copy() for k, v in self.arrays.items()}, dict(self.groups))

    def digest(self, *groups: str) -> str:
        h = hashlib.sha256()
        for name in sorted(self.names(*groups)):
            h.update(name.encode("utf-8"))
            h.update(np.ascontiguousarray(self.arrays[name], dtype="<f8").tobytes())
        return h.hexdigest()

    @property
    def obs_dim(self) -> int:
        return self.arrays["encoder/w0"].shape[0]

    @property
    def recurrent_dim(self) -> int:
        return self.arrays["gru/uz"].shape[0]


def _truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    z = rng.standard_normal(shape)
    bad = np.abs(z) > 2.0
    while np.any(bad):
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > 2.0
    return z * std


def init_params(config: ExperimentConfig, seed: int, with_decoder: Optional[bool] = None) -> ParamSet:
    """Weights ~ truncated normal with std 1/sqrt(fan_in); biases zero."""
    rng = np.random.default_rng(seed)
    env = config.env
    d = env.height * env.width * 3
    e, f, m = config.encoder_hidden, config.feature_dim, config.embedding_dim
    th, r = config.time_hidden, config.recurrent_dim
    i = 2 * f + th
    with_decoder = config.reward == "ae" if with_decoder is None else with_decoder

    shapes = {
        "encoder/w0": ((d, e), THETA), "encoder/b0": ((e,), THETA),
        "encoder/w1": ((e, e), THETA), "encoder/b1": ((e,), THETA),
        "encoder/w2": ((e, f), THETA), "encoder/b2": ((f,), THETA),
        "time/w": ((2, th), THETA), "time/b": ((th,), THETA),
        "gru/wz": ((i, r), THETA), "gru/uz": ((r, r), THETA), "gru/bz": ((r,), THETA),
        "gru/wr": ((i, r), THETA), "gru/ur": ((r, r), THETA), "gru/br": ((r,), THETA),
        "gru/wh": ((i, r), THETA), "gru/uh": ((r, r), THETA), "gru/bh": ((r,), THETA),
        "head/v": ((r, 1), THETA), "head/w": ((r, N_ACTIONS), THETA), "head/b": ((1,), THETA),
        "embed/w": ((f, m), PHI), "embed/b": ((m,), PHI),
    }
    if with_decoder:
        shapes["decode/w"] = ((m, f), DECODER)
        shapes["decode/b"] = ((f,), DECODER)

    arrays, groups = {}, {}
    for name, (shape, group) in shapes.items():
        if len(shape) == 1:
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = _truncated_normal(rng, shape, 1.0 / np.sqrt(shape[0]))
        groups[name] = group
    return ParamSet(arrays, groups)


def bind(graph: Graph, params: ParamSet, trainable: Iterable[str] = ()) -> Dict[str, Var]:
    trainable = set(trainable)
    return {name: graph.param(name, arr, trainable=name in trainable) for name, arr in params.arrays.items()}


# ---------- graph builders ----------

def build_encoder(g: Graph, p: Mapping[str, Var], obs: Var) -> Var:
    if obs.shape[-1] != p["encoder/w0"].shape[0]:
        raise ShapeError("encode", f"observation of {obs.shape[-1]} scalars, encoder expects {p['encoder/w0'].shape[0]}")
    x = g.relu(obs @ p["encoder/w0"] + p["encoder/b0"])
    x = g.relu(x @ p["encoder/w1"] + p["encoder/b1"])
    return x @ p["encoder/w2"] + p["encoder/b2"]


def build_embedding(g: Graph, p: Mapping[str, Var], features: Var) -> Var:
    return g.l2_normalize(g.tanh(features @ p["embed/w"] + p["embed/b"]))


def build_decoder(g: Graph, p: Mapping[str, Var], embedding: Var) -> Var:
    return embedding @ p["decode/w"] + p["decode/b"]


def build_time_layer(g: Graph, p: Mapping[str, Var], time_feats: Var) -> Var:
    return g.relu(time_feats @ p["time/w"] + p["time/b"])


def build_trunk(g: Graph, p: Mapping[str, Var], x: Var, state: Var) -> Var:
    z = g.sigmoid(x @ p["gru/wz"] + state @ p["gru/uz"] + p["gru/bz"])
    r = g.sigmoid(x @ p["gru/wr"] + state @ p["gru/ur"] + p["gru/br"])
    n = g.tanh(x @ p["gru/wh"] + (r * state) @ p["gru/uh"] + p["gru/bh"])
    return (1.0 - z) * n + z * state


def build_dueling_head(g: Graph, p: Mapping[str, Var], psi: Var) -> Var:
    value = psi @ p["head/v"]
    adv = psi @ p["head/w"]
    return value + (adv - g.mean(adv, axis=-1, keepdims=True)) + p["head/b"]


def build_q(g: Graph, p: Mapping[str, Var], h_s: Var, h_g: Var, time_feats: Var, state: Var) -> Tuple[Var, Var]:
    x = g.concat([h_s, h_g, build_time_layer(g, p, time_feats)], axis=-1)
    psi = build_trunk(g, p, x, state)
    return build_dueling_head(g, p, psi), psi


# ---------- snapshot evaluation ----------

def flatten_obs(obs: np.ndarray, batch: bool = False) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    if batch:
        return obs.reshape(obs.shape[0], -1)
    return obs.reshape(-1)


def encode(obs: np.ndarray, params: ParamSet) -> np.ndarray:
    """h(s) for one observation (H, W, C) or a batch (B, H, W, C)."""
    obs = np.asarray(obs, dtype=np.float64)
    batch = obs.ndim == 4
    if obs.ndim not in (3, 4):
        raise ShapeError("encode", f"observation must be (H, W, C) or (B, H, W, C), got {obs.shape}")
    g = Graph()
    return build_encoder(g, bind(g, params), g.input("obs", flatten_obs(obs, batch))).value


def embed(features: np.ndarray, params: ParamSet) -> np.ndarray:
    g = Graph()
    return build_embedding(g, bind(g, params), g.input("features", features)).value


def time_features(t: int, T: int) -> np.ndarray:
    if not 1 <= t <= T:
        raise OutOfRangeError(f"time step {t} outside [1, {T}]")
    angle = 2.0 * np.pi * t / T
    return np.array([np.sin(angle), np.cos(angle)])


def initial_state(params: ParamSet, batch: Optional[int] = None) -> np.ndarray:
    r = params.recurrent_dim
    return np.zeros(r) if batch is None else np.zeros((batch, r))


def q_values(h_s, h_g, time_feats, state, params: ParamSet) -> Tuple[np.ndarray, np.ndarray]:
    g = Graph()
    q, psi = build_q(
        g, bind(g, params),
        g.input("h_s", h_s), g.input("h_g", h_g), g.input("time", time_feats), g.input("state", state),
    )
    return q.value, psi.value
