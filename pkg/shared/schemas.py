import hashlib
import json
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Color = Tuple[float, float, float]

N_ACTIONS = 5  # up, down, left, right, no-op


# ---------- Environment ----------
class Palette(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    avatar: Color = (1.0, 0.0, 0.0)
    distractor: Color = (0.0, 1.0, 0.0)
    background: Color = (0.0, 0.0, 1.0)

    @field_validator("avatar", "distractor", "background")
    @classmethod
    def _unit_range(cls, v: Color) -> Color:
        if any(c < 0.0 or c > 1.0 for c in v):
            raise ValueError("palette intensities must lie in [0, 1]")
        return v

    @model_validator(mode="after")
    def _distinct(self):
        if self.avatar == self.distractor or self.avatar == self.background:
            raise ValueError("avatar colour must differ from distractor and background colours")
        return self


class GridWorldConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    width: int = Field(8, ge=1)
    height: int = Field(8, ge=1)
    n_distractors: int = Field(1, ge=0, le=3)
    distractor_motion: Literal["random-walk", "cyclic"] = "random-walk"
    distractor_size: int = Field(1, ge=1)
    palette: Palette = Field(default_factory=Palette)
    seed: int = 0

    @property
    def n_actions(self) -> int:
        return N_ACTIONS

    @property
    def obs_shape(self) -> Tuple[int, int, int]:
        return (self.height, self.width, 3)

    @property
    def ranges(self) -> Tuple[int, int]:
        """Full extent of each controllable dimension (x, y)."""
        return (self.width - 1, self.height - 1)

    @classmethod
    def distractor_dominant(cls, **overrides) -> "GridWorldConfig":
        base = dict(n_distractors=3, distractor_size=2)
        base.update(overrides)
        return cls(**base)


# ---------- Agent ----------
class HindsightConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    p_her: float = Field(0.25, ge=0.0, le=1.0)
    window: int = Field(3, ge=1)


# ---------- Runtime ----------
RewardKind = Literal["discern", "ae", "l2", "none"]
BufferStrategy = Literal["uniform", "diverse"]

# excluded from the compatibility hash: changing them never invalidates a checkpoint
_HASH_EXEMPT = {"total_frames", "eval_every", "record_wall_time"}


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    env: GridWorldConfig = Field(default_factory=GridWorldConfig)
    reward: RewardKind = "discern"
    sigma_pixel: float = Field(4.0, gt=0.0)

    buffer_strategy: BufferStrategy = "uniform"
    buffer_capacity: int = Field(1024, ge=1)
    goal_warmup: int = Field(64, ge=1)
    p_replace: float = Field(1e-3, ge=0.0, le=1.0)
    p_add_non_diverse: float = Field(1e-3, ge=0.0, le=1.0)

    episode_length: int = Field(50, ge=1)
    decoys: int = Field(4, ge=1)
    beta: Optional[float] = Field(None, gt=0.0)
    hindsight: HindsightConfig = Field(default_factory=HindsightConfig)
    gamma: float = Field(0.98, ge=0.0, lt=1.0)
    lam: float = Field(0.9, ge=0.0, le=1.0)
    batch_size: int = Field(32, ge=1)
    replay_capacity: int = Field(256, ge=1)

    learning_rate: float = Field(1e-4, gt=0.0)
    rms_decay: float = Field(0.9, ge=0.0, lt=1.0)
    rms_epsilon: float = Field(1e-8, gt=0.0)

    feature_dim: int = Field(64, ge=1)
    encoder_hidden: int = Field(128, ge=1)
    recurrent_dim: int = Field(128, ge=1)
    time_hidden: int = Field(16, ge=1)
    embedding_dim: int = Field(32, ge=1)

    actors: int = Field(1, ge=1)
    epsilon_base: float = Field(0.4, ge=0.0, le=1.0)
    epsilon_alpha: float = Field(7.0, ge=0.0)
    actor_epsilons: Optional[List[float]] = None
    queue_capacity: int = Field(64, ge=1)
    broadcast_every: int = Field(10, ge=1)
    poll_every: int = Field(2, ge=1)

    total_frames: int = Field(2_000_000, ge=1)
    eval_every: int = Field(50_000, ge=1)
    eval_goals: int = Field(100, ge=1)
    eval_trials: int = Field(20, ge=1)
    eval_seed: int = 90210
    record_wall_time: bool = True
    seed: int = 0

    @field_validator("actor_epsilons", mode="before")
    @classmethod
    def _split_list(cls, v):
        if isinstance(v, str):
            v = [item for item in (p.strip() for p in v.split(",")) if item]
        return v

    @field_validator("actor_epsilons")
    @classmethod
    def _probabilities(cls, v):
        if v is not None and any(e < 0.0 or e > 1.0 for e in v):
            raise ValueError("actor epsilons must lie in [0, 1]")
        return v

    @model_validator(mode="after")
    def _consistency(self):
        if self.hindsight.window > self.episode_length:
            raise ValueError("hindsight window cannot exceed the episode length")
        if self.actor_epsilons is not None and len(self.actor_epsilons) != self.actors:
            raise ValueError("actor_epsilons needs one value per actor")
        if self.goal_warmup > self.buffer_capacity:
            raise ValueError("goal_warmup cannot exceed buffer_capacity")
        return self

    @property
    def effective_beta(self) -> float:
        return self.beta if self.beta is not None else float(self.decoys + 1)

    def epsilons(self) -> List[float]:
        """Per-actor exploration rates, geometric over actors."""
        if self.actor_epsilons is not None:
            return list(self.actor_epsilons)
        n = self.actors
        if n == 1:
            return [self.epsilon_base]
        return [self.epsilon_base ** (1.0 + self.epsilon_alpha * i / (n - 1)) for i in range(n)]

    def config_hash(self) -> bytes:
        payload = self.model_dump(mode="json", exclude=_HASH_EXEMPT)
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).digest()


# ---------- Evaluation ----------
class AchievementReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_goals: int = Field(ge=1)
    trials_per_goal: int = Field(ge=1)
    achieved: int = Field(ge=0)
    achieved_per_dimension: List[int]
    frames: int = 0

    @property
    def total(self) -> int:
        return self.n_goals * self.trials_per_goal

    @property
    def overall(self) -> float:
        return self.achieved / self.total

    @property
    def per_dimension(self) -> List[float]:
        return [c / self.total for c in self.achieved_per_dimension]

    @model_validator(mode="after")
    def _counts(self):
        if any(c < self.achieved or c > self.total for c in self.achieved_per_dimension):
            raise ValueError("per-dimension counts must lie between the joint count and the trial total")
        if self.achieved > self.total:
            raise ValueError("achieved exceeds the number of trials")
        return self


class MetricsRow(BaseModel):
    frames: int
    wall_seconds: float
    td_loss: float
    disc_loss: float
    mean_reward: float
    achievement_overall: float
    achievement_dims: List[float] = Field(default_factory=list)

    def record(self) -> dict:
        row = self.model_dump(exclude={"achievement_dims"})
        for i, v in enumerate(self.achievement_dims):
            row[f"achievement_dim_{i}"] = v
        return row


# ---------- Service ----------
class RunRequest(BaseModel):
    config_text: Optional[str] = None
    preset: Optional[str] = None
    name: Optional[str] = Field(default=None, pattern=r"^[A-Za-z0-9_-]{1,64}$")
    seed: Optional[int] = None
    actors: Optional[int] = None
    frames: Optional[int] = None

    @model_validator(mode="after")
    def _one_source(self):
        if self.config_text is not None and self.preset is not None:
            raise ValueError("give either config_text or preset, not both")
        return self


class RunStatus(BaseModel):
    run_id: str
    state: str  # "running" | "finished" | "failed"
    out_dir: str
    frames: int = 0
    error: Optional[str] = None
    metrics: List[dict] = Field(default_factory=list)


class EvalRequest(BaseModel):
    checkpoint: str
    goals: str
    trials: int = Field(20, ge=1)


class EvalResponse(BaseModel):
    overall: float
    per_dimension: List[float]
    n_goals: int
    trials_per_goal: int
