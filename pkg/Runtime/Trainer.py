"""
Training orchestration.

One actor: actor and learner run in lock-step on the calling thread, so two
runs with the same config and seed produce identical metrics. Several actors:
each actor gets a thread, the learner runs on the caller's thread and
evaluates in between updates.

Every `eval_every` learner frames the greedy policy is evaluated on the fixed
goal set, a metrics row is appended, metrics.csv is rewritten and a
checkpoint is saved. Resuming from that checkpoint continues the run exactly
(single-actor mode).
"""

import logging
import threading
import time
from dataclasses import fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from Agent.Learning import GoalEpisode
from Autodiff.Optim import RmsPropState
from Evaluation.Evaluate import evaluate
from Evaluation.GoalSet import GoalSet, build_goal_set
from Evaluation.Report import emit_report, write_metrics_csv
from GoalBuffer.Buffer import GoalBuffer
from GridEnv.Environment import EnvState
from Nets.Networks import ParamSet, init_params
from Reward.Providers import make_provider
from Runtime.Actor import Actor, actor_loop
from Runtime.Channels import ParamBroadcast, ParamSnapshot, TrajectoryQueue
from Runtime.Checkpoint import Checkpoint, checkpoint_load, checkpoint_save
from Runtime.Learner import Learner, learner_loop
from shared.errors import ConfigMismatchError
from shared.schemas import ExperimentConfig, MetricsRow

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.dsrn"
METRICS_NAME = "metrics.csv"

_EPISODE_ARRAYS = ("observations", "terminal", "actions", "rewards", "discounts", "goal")
_EPISODE_META = tuple(f.name for f in fields(GoalEpisode) if f.name not in _EPISODE_ARRAYS)


# ---------- checkpoint codecs ----------
def write_params(ckpt: Checkpoint, prefix: str, params: ParamSet) -> None:
    for name, arr in params.arrays.items():
        ckpt.arrays[f"{prefix}/{name}"] = arr
    ckpt.blobs[f"{prefix}.groups"] = [[name, params.groups.get(name, "")] for name in params.arrays]


def read_params(ckpt: Checkpoint, prefix: str) -> ParamSet:
    groups = dict(ckpt.blobs[f"{prefix}.groups"])
    return ParamSet({name: ckpt.arrays[f"{prefix}/{name}"] for name in groups}, groups)


def _put_episodes(ckpt: Checkpoint, prefix: str, episodes: List[GoalEpisode]) -> None:
    meta = []
    for i, ep in enumerate(episodes):
        for name in _EPISODE_ARRAYS:
            ckpt.arrays[f"{prefix}/{i}/{name}"] = getattr(ep, name)
        meta.append({name: getattr(ep, name) for name in _EPISODE_META})
    ckpt.blobs[f"{prefix}.meta"] = meta


def _get_episodes(ckpt: Checkpoint, prefix: str) -> List[GoalEpisode]:
    out = []
    for i, meta in enumerate(ckpt.blobs[f"{prefix}.meta"]):
        arrays = {name: ckpt.arrays[f"{prefix}/{i}/{name}"] for name in _EPISODE_ARRAYS}
        arrays["actions"] = arrays["actions"].astype(np.int64)
        out.append(GoalEpisode(**arrays, **meta))
    return out


def read_buffer_state(ckpt: Checkpoint) -> dict:
    return {"slots": ckpt.arrays["buffer/slots"], "replacement_counts": ckpt.arrays["buffer/replacement_counts"],
            "rng": ckpt.blobs["buffer"]["rng"]}


def _env_blob(state: EnvState) -> dict:
    return {"avatar": list(state.avatar), "distractors": [list(d) for d in state.distractors],
            "phases": list(state.phases), "rng_state": state.rng_state, "steps": state.steps}


def _env_state(blob: dict) -> EnvState:
    return EnvState(tuple(blob["avatar"]), tuple(tuple(d) for d in blob["distractors"]),
                    tuple(blob["phases"]), blob["rng_state"], blob["steps"])


# ---------- trainer ----------
class Trainer:
    def __init__(self, config: ExperimentConfig, out_dir: Path, goal_set: Optional[GoalSet] = None,
                 generation: int = 0):
        self.config = config
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.provider = make_provider(config)
        params = init_params(config, config.seed)
        self.buffer = GoalBuffer(config.buffer_capacity, config.env.obs_shape, config.buffer_strategy,
                                 config.p_replace, config.p_add_non_diverse, config.goal_warmup, config.seed)
        self.broadcast = ParamBroadcast(params)
        self.learner = Learner(config, params, self.provider, self.buffer, self.broadcast)
        self.actors = [Actor(i, config, self.provider, self.buffer, self.broadcast, eps, generation)
                       for i, eps in enumerate(config.epsilons())]
        self.goal_set = goal_set if goal_set is not None else build_goal_set(
            config.env, config.eval_goals, config.eval_seed)
        self.rows: List[MetricsRow] = []
        self.next_eval = config.eval_every
        self.elapsed = 0.0
        self._started = 0.0

    @property
    def frames(self) -> int:
        return self.learner.frames

    @property
    def checkpoint_path(self) -> Path:
        return self.out_dir / CHECKPOINT_NAME

    def _wall_seconds(self) -> float:
        if not self.config.record_wall_time:
            return 0.0
        return self.elapsed + (time.monotonic() - self._started)

    # ---------- evaluation ----------
    def evaluation_due(self) -> bool:
        return self.learner.frames >= self.next_eval

    def record_evaluation(self) -> MetricsRow:
        cfg = self.config
        report = evaluate(self.learner.params.copy(), self.goal_set, cfg.eval_trials, cfg.episode_length,
                          cfg.env, seed=cfg.eval_seed, frames=self.learner.frames)
        stats = self.learner.drain_stats()
        row = MetricsRow(frames=self.learner.frames, wall_seconds=self._wall_seconds(),
                         td_loss=stats["td_loss"], disc_loss=stats["disc_loss"], mean_reward=stats["mean_reward"],
                         achievement_overall=report.overall, achievement_dims=report.per_dimension)
        self.rows.append(row)
        self.next_eval = (self.learner.frames // cfg.eval_every + 1) * cfg.eval_every
        write_metrics_csv(self.rows, self.out_dir / METRICS_NAME)
        checkpoint_save(self.checkpoint_path, self.to_checkpoint())
        log.info("eval frames=%d achievement=%.4f td_loss=%.6f disc_loss=%.6f",
                 row.frames, row.achievement_overall, row.td_loss, row.disc_loss)
        return row

    # ---------- loops ----------
    def run(self) -> List[MetricsRow]:
        cfg = self.config
        log.info("training started out=%s reward=%s strategy=%s actors=%d frames=%d",
                 self.out_dir, cfg.reward, cfg.buffer_strategy, cfg.actors, cfg.total_frames)
        self._started = time.monotonic()
        if len(self.actors) == 1:
            self._run_sync()
        else:
            self._run_threaded()
        if not self.rows or self.rows[-1].frames != self.learner.frames:
            self.record_evaluation()
        self.elapsed = self._wall_seconds()
        emit_report(self.rows, self.out_dir, label=cfg.reward)
        log.info("training finished frames=%d updates=%d refused=%d sequence_faults=%d",
                 self.learner.frames, self.learner.updates, self.learner.refused, self.learner.sequence_faults)
        return self.rows

    def _run_sync(self) -> None:
        actor, learner = self.actors[0], self.learner
        while learner.frames < self.config.total_frames:
            for episode in actor.run_episode():
                learner.observe(episode)
            while learner.ready():
                learner.step()
            if self.evaluation_due():
                self.record_evaluation()

    def _run_threaded(self) -> None:
        stop = threading.Event()
        queue: TrajectoryQueue = TrajectoryQueue(self.config.queue_capacity)
        threads = [threading.Thread(target=actor_loop, args=(a, queue, stop), name=f"actor-{a.actor_id}",
                                    daemon=True) for a in self.actors]
        for t in threads:
            t.start()

        def _on_update(_learner: Learner) -> None:
            if self.evaluation_due():
                self.record_evaluation()

        try:
            learner_loop(self.learner, queue, stop, on_update=_on_update)
        finally:
            stop.set()
            for t in threads:
                t.join()
        # steps taken after the budget was met still count
        for episode in queue.drain():
            self.learner.observe(episode)
        self.learner.frames += sum(a.take_unreported() for a in self.actors)

    # ---------- checkpoints ----------
    def to_checkpoint(self) -> Checkpoint:
        cfg, learner = self.config, self.learner
        ckpt = Checkpoint(cfg.config_hash())
        ckpt.blobs["config"] = cfg.model_dump(mode="json")

        write_params(ckpt, "params", learner.params)
        for name, acc in learner.opt.accumulators.items():
            ckpt.arrays[f"opt/{name}"] = acc
        ckpt.blobs["opt"] = {"steps": learner.opt.steps, "names": list(learner.opt.accumulators)}
        latest = self.broadcast.latest()
        write_params(ckpt, "broadcast", latest.params)

        snap = self.buffer.snapshot()
        ckpt.arrays["buffer/slots"] = snap["slots"]
        ckpt.arrays["buffer/replacement_counts"] = snap["replacement_counts"]
        ckpt.blobs["buffer"] = {"rng": snap["rng"]}

        _put_episodes(ckpt, "learner/pending", learner.pending)
        ckpt.blobs["learner"] = {
            "frames": learner.frames, "updates": learner.updates, "refused": learner.refused,
            "sequence_faults": learner.sequence_faults,
            "last_seq": {str(k): v for k, v in learner.last_seq.items()},
            "rng": learner.rng.bit_generator.state, "stats": learner.stats,
        }

        # actor state is only consistent when actors are not running concurrently
        if len(self.actors) == 1:
            actor = self.actors[0]
            _put_episodes(ckpt, "actor/replay", actor.replay.episodes())
            write_params(ckpt, "actor/snapshot", actor.snapshot.params)
            ckpt.blobs["actor"] = {
                "env": _env_blob(actor.env_state), "rng": actor.rng.bit_generator.state, "seq": actor.seq,
                "episodes": actor.episodes, "frames": actor.frames, "unreported": actor._unreported,
                "snapshot_version": actor.snapshot.version,
            }

        ckpt.blobs["run"] = {
            "broadcast_version": latest.version, "next_eval": self.next_eval, "elapsed": self._wall_seconds(),
            "rows": [r.model_dump() for r in self.rows],
        }
        return ckpt

    def restore(self, ckpt: Checkpoint) -> None:
        if ckpt.config_hash != self.config.config_hash():
            raise ConfigMismatchError("checkpoint was written under a different configuration")
        learner = self.learner
        learner.params = read_params(ckpt, "params")
        names = ckpt.blobs["opt"]["names"]
        learner.opt = RmsPropState(self.config.learning_rate, self.config.rms_decay, self.config.rms_epsilon,
                                   {n: ckpt.arrays[f"opt/{n}"] for n in names}, ckpt.blobs["opt"]["steps"])
        run = ckpt.blobs["run"]
        self.broadcast.restore(ParamSnapshot(run["broadcast_version"], read_params(ckpt, "broadcast")))

        self.buffer.restore(read_buffer_state(ckpt))

        lb = ckpt.blobs["learner"]
        learner.pending = _get_episodes(ckpt, "learner/pending")
        learner.frames, learner.updates, learner.refused = lb["frames"], lb["updates"], lb["refused"]
        learner.sequence_faults = lb["sequence_faults"]
        learner.rng.bit_generator.state = lb["rng"]
        learner.stats = {k: list(v) for k, v in lb["stats"].items()}

        ab = ckpt.blobs.get("actor")
        if ab is not None and len(self.actors) == 1:
            learner.last_seq = {int(k): v for k, v in lb["last_seq"].items()}
            actor = self.actors[0]
            actor.env_state = _env_state(ab["env"])
            actor.obs = actor.env.render(actor.env_state)
            actor.rng.bit_generator.state = ab["rng"]
            actor.seq, actor.episodes = ab["seq"], ab["episodes"]
            actor.frames, actor._unreported = ab["frames"], ab["unreported"]
            actor.snapshot = ParamSnapshot(ab["snapshot_version"], read_params(ckpt, "actor/snapshot"))
            actor.replay.extend(_get_episodes(ckpt, "actor/replay"))
        else:
            # fresh actors restart their sequence numbers
            learner.last_seq = {}
            for actor in self.actors:
                actor.snapshot = self.broadcast.latest()

        self.next_eval = run["next_eval"]
        self.elapsed = run["elapsed"]
        self.rows = [MetricsRow(**r) for r in run["rows"]]
        log.info("resumed from checkpoint frames=%d updates=%d rows=%d", learner.frames, learner.updates,
                 len(self.rows))

    @classmethod
    def resume(cls, config: ExperimentConfig, out_dir: Path, checkpoint: Optional[Path] = None,
               goal_set: Optional[GoalSet] = None) -> "Trainer":
        """Trainer continuing from `checkpoint` (default: the one in out_dir)."""
        path = Path(checkpoint) if checkpoint is not None else Path(out_dir) / CHECKPOINT_NAME
        ckpt = checkpoint_load(path, expected_hash=config.config_hash())
        generation = ckpt.blobs["learner"]["updates"] + 1 if config.actors > 1 else 0
        trainer = cls(config, out_dir, goal_set=goal_set, generation=generation)
        trainer.restore(ckpt)
        return trainer


def train(config: ExperimentConfig, out_dir: Path, resume: bool = False) -> List[MetricsRow]:
    if resume and (Path(out_dir) / CHECKPOINT_NAME).exists():
        trainer = Trainer.resume(config, out_dir)
    else:
        trainer = Trainer(config, out_dir)
    return trainer.run()
