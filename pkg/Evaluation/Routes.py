from pathlib import Path

from fastapi import APIRouter

from Evaluation.Evaluate import evaluate
from Evaluation.GoalSet import load_goal_set
from Evaluation.Presets import PRESETS
from Runtime.Checkpoint import checkpoint_load
from Runtime.Config import build_config
from Runtime.Trainer import read_params
from shared.schemas import EvalRequest, EvalResponse

router = APIRouter(tags=["evaluation"])


@router.post("/eval", response_model=EvalResponse)
def eval_checkpoint(req: EvalRequest) -> EvalResponse:
    ckpt = checkpoint_load(Path(req.checkpoint))
    config = build_config(ckpt.blobs["config"])
    report = evaluate(read_params(ckpt, "params"), load_goal_set(Path(req.goals)), req.trials,
                      config.episode_length, config.env, seed=config.eval_seed,
                      frames=ckpt.blobs["learner"]["frames"])
    return EvalResponse(overall=report.overall, per_dimension=report.per_dimension,
                        n_goals=report.n_goals, trials_per_goal=report.trials_per_goal)


@router.get("/presets")
def presets() -> dict:
    return {"presets": {name: delta for name, delta in sorted(PRESETS.items())}}
