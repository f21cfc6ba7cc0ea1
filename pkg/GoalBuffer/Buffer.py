"""
Fixed-capacity evolving goal buffer shared by every actor.

Before it is full the buffer fills its next empty slot with every proposed
observation. Once full, proposals go through the substitution strategy:

  uniform  with prob p_replace overwrite a uniformly chosen slot
  diverse  with prob p_replace pick a removal candidate s_r; swap it for s when
           s_r is closer to the rest of the buffer than s (mean pixel L2 over
           the other slots), else swap anyway with prob p_add_non_diverse
"""

import logging
import struct
import threading
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from shared.errors import CheckpointError, ColdBufferError

log = logging.getLogger(__name__)

MAGIC = b"DSGB"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIII")


class GoalBuffer:
    def __init__(
        self,
        capacity: int,
        obs_shape: Tuple[int, int, int],
        strategy: str = "uniform",
        p_replace: float = 1e-3,
        p_add_non_diverse: float = 1e-3,
        warmup: int = 64,
        seed: int = 0,
    ):
        if strategy not in ("uniform", "diverse"):
            raise ValueError(f"unknown substitution strategy {strategy!r}")
        self.capacity = capacity
        self.obs_shape = tuple(obs_shape)
        self.strategy = strategy
        self.p_replace = p_replace
        self.p_add_non_diverse = p_add_non_diverse
        self.warmup = min(warmup, capacity)
        self.slots = np.zeros((capacity, *self.obs_shape))
        self.filled = 0
        self.replacement_counts = np.zeros(capacity, dtype=np.int64)
        self.rng = np.random.default_rng(seed)
        self._lock = threading.Lock()

    @property
    def is_warm(self) -> bool:
        return self.filled >= self.warmup

    @property
    def is_full(self) -> bool:
        return self.filled == self.capacity

    # ---------- substitution ----------
    def mean_distance(self, obs: np.ndarray, exclude: int) -> float:
        """Mean pixel-space L2 distance from obs to every filled slot except `exclude`."""
        flat = self.slots[: self.filled].reshape(self.filled, -1)
        d = np.linalg.norm(flat - np.reshape(obs, -1), axis=1)
        mask = np.ones(self.filled, dtype=bool)
        mask[exclude] = False
        return float(d[mask].mean()) if mask.any() else 0.0

    def propose_substitution(self, obs: np.ndarray, rng: Optional[np.random.Generator] = None) -> bool:
        """Offer an observation to the buffer; True when a slot was written."""
        rng = rng or self.rng
        obs = np.asarray(obs, dtype=np.float64)
        with self._lock:
            if not self.is_full:
                self.slots[self.filled] = obs
                self.filled += 1
                return True
            if rng.random() >= self.p_replace:
                return False
            slot = int(rng.integers(self.capacity))
            if self.strategy == "diverse":
                d_removed = self.mean_distance(self.slots[slot], exclude=slot)
                d_candidate = self.mean_distance(obs, exclude=slot)
                if not d_removed < d_candidate and rng.random() >= self.p_add_non_diverse:
                    return False
            self.slots[slot] = obs
            self.replacement_counts[slot] += 1
            return True

    # ---------- sampling ----------
    def _check_warm(self) -> None:
        if not self.is_warm:
            raise ColdBufferError(f"goal buffer holds {self.filled} observations, needs {self.warmup}")

    def sample_goal(self, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        rng = rng or self.rng
        with self._lock:
            self._check_warm()
            return self.slots[int(rng.integers(self.filled))].copy()

    def sample_decoys(self, k: int, rng: Optional[np.random.Generator] = None,
                      goal: Optional[np.ndarray] = None) -> np.ndarray:
        """K independent uniform draws; a draw equal to `goal` is redrawn once."""
        if k < 1:
            raise ValueError("need at least one decoy")
        rng = rng or self.rng
        with self._lock:
            self._check_warm()
            out = np.empty((k, *self.obs_shape))
            for i in range(k):
                idx = int(rng.integers(self.filled))
                if goal is not None and np.array_equal(self.slots[idx], goal):
                    idx = int(rng.integers(self.filled))
                out[i] = self.slots[idx]
            return out

    # ---------- persistence ----------
    def snapshot(self) -> dict:
        with self._lock:
            return {
                "slots": self.slots[: self.filled].copy(),
                "replacement_counts": self.replacement_counts.copy(),
                "rng": self.rng.bit_generator.state,
            }

    def restore(self, snap: dict) -> None:
        with self._lock:
            slots = snap["slots"]
            self.filled = len(slots)
            self.slots[: self.filled] = slots
            self.replacement_counts = np.asarray(snap["replacement_counts"], dtype=np.int64).copy()
            self.rng.bit_generator.state = snap["rng"]

    def dump(self, path: Path) -> None:
        h, w, c = self.obs_shape
        with self._lock:
            payload = self.slots[: self.filled].astype("<f8").tobytes()
            header = _HEADER.pack(MAGIC, VERSION, self.capacity, self.filled, h, w, c)
        Path(path).write_bytes(header + payload)
        log.info("goal buffer dumped path=%s filled=%d", path, self.filled)


def load_dump(path: Path) -> Tuple[int, np.ndarray]:
    """Read a goal-buffer dump; returns (capacity, filled observations)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError("truncated goal-buffer header", len(raw))
    magic, version, capacity, filled, h, w, c = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise CheckpointError(f"unsupported goal-buffer version {version}", 4)
    need = filled * h * w * c * 8
    body = raw[_HEADER.size:]
    if len(body) != need:
        raise CheckpointError(f"expected {need} payload bytes, found {len(body)}", _HEADER.size + min(len(body), need))
    return capacity, np.frombuffer(body, dtype="<f8").reshape(filled, h, w, c).astype(np.float64)
