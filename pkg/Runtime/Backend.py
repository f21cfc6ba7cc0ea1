"""
Run-control backend.

    uvicorn Runtime.Backend:app --reload

POST /runs starts a training run on a background thread, GET /runs and
GET /runs/{run_id} report progress and metrics rows. Evaluation routes are
mounted from Evaluation.Routes.
"""

import logging
import math
import os
import threading
import uuid
from pathlib import Path
from typing import Dict, List, Optional

from fastapi import APIRouter, FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from Evaluation.Presets import preset_config
from Evaluation.Routes import router as eval_router
from Runtime.Config import build_config, parse_config_text
from Runtime.Trainer import Trainer
from shared.errors import DiscernError
from shared.logs import configure_logging
from shared.schemas import RunRequest, RunStatus

configure_logging()
log = logging.getLogger(__name__)

RUNS_DIR = Path(os.getenv("DISCERN_RUNS_DIR", "runs"))

app = FastAPI(
    title="DISCERN run control",
    docs_url="/docs",
    redoc_url="/redoc",
    openapi_url="/openapi.json",
)


@app.exception_handler(DiscernError)
def discern_error(_: Request, exc: DiscernError) -> JSONResponse:
    return JSONResponse(status_code=400, content={"error": type(exc).__name__, "detail": str(exc)})


def _clean(record: dict) -> dict:
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in record.items()}


class _Run:
    def __init__(self, run_id: str, trainer: Trainer):
        self.run_id = run_id
        self.trainer = trainer
        self.state = "running"
        self.error: Optional[str] = None
        self.thread = threading.Thread(target=self._execute, name=f"run-{run_id}", daemon=True)

    def _execute(self) -> None:
        try:
            self.trainer.run()
            self.state = "finished"
        except Exception as e:  # reported through the status endpoint
            log.exception("run failed run_id=%s", self.run_id)
            self.state, self.error = "failed", str(e)

    def status(self) -> RunStatus:
        return RunStatus(run_id=self.run_id, state=self.state, out_dir=str(self.trainer.out_dir),
                         frames=self.trainer.frames, error=self.error,
                         metrics=[_clean(r.record()) for r in list(self.trainer.rows)])


class RunRegistry:
    def __init__(self, root: Path):
        self.root = root
        self._runs: Dict[str, _Run] = {}
        self._lock = threading.Lock()

    def start(self, req: RunRequest) -> RunStatus:
        overrides = {"seed": req.seed, "actors": req.actors, "total_frames": req.frames}
        if req.preset is not None:
            config = build_config(preset_config(req.preset).model_dump(), overrides)
        else:
            config = build_config(parse_config_text(req.config_text or ""), overrides)
        run_id = req.name or uuid.uuid4().hex[:8]
        with self._lock:
            if run_id in self._runs:
                raise HTTPException(status_code=409, detail=f"run {run_id!r} already exists")
            out_dir = (self.root / run_id).resolve()
            if not out_dir.is_relative_to(self.root.resolve()):
                raise HTTPException(status_code=400, detail=f"run name {run_id!r} leaves the runs directory")
            run = _Run(run_id, Trainer(config, out_dir))
            self._runs[run_id] = run
        run.thread.start()
        log.info("run started run_id=%s reward=%s frames=%d", run_id, config.reward, config.total_frames)
        return run.status()

    def get(self, run_id: str) -> _Run:
        with self._lock:
            run = self._runs.get(run_id)
        if run is None:
            raise HTTPException(status_code=404, detail=f"no run {run_id!r}")
        return run

    def all(self) -> List[_Run]:
        with self._lock:
            return list(self._runs.values())


registry = RunRegistry(RUNS_DIR)

# ---------- runs ----------
runs_router = APIRouter(prefix="/runs", tags=["runs"])


@runs_router.post("", response_model=RunStatus)
def start_run(req: RunRequest) -> RunStatus:
    return registry.start(req)


@runs_router.get("", response_model=List[RunStatus])
def list_runs() -> List[RunStatus]:
    return [r.status() for r in registry.all()]


@runs_router.get("/{run_id}", response_model=RunStatus)
def run_status(run_id: str) -> RunStatus:
    return registry.get(run_id).status()


app.include_router(runs_router)
app.include_router(eval_router)


@app.get("/")
def root():
    return {"ok": True, "service": "discern"}


@app.get("/health")
def health():
    return {"ok": True, "runs": len(registry.all())}
