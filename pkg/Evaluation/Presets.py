"""Named experiment presets: the DISCERN variants and the baselines they are compared against."""

from pathlib import Path
from typing import Any, Dict, List, Optional

from Runtime.Trainer import Trainer
from shared.errors import UnknownPresetError
from shared.schemas import ExperimentConfig, MetricsRow

PRESETS: Dict[str, Dict[str, Any]] = {
    "discern-uniform": {"reward": "discern", "buffer_strategy": "uniform"},
    "discern-diverse": {"reward": "discern", "buffer_strategy": "diverse"},
    "ae": {"reward": "ae", "buffer_strategy": "uniform"},
    "l2": {"reward": "l2", "buffer_strategy": "uniform"},
    "her-only": {"reward": "none", "hindsight": {"p_her": 1.0}},
    "no-her": {"reward": "discern", "hindsight": {"p_her": 0.0}},
}


def _merge(base: Dict[str, Any], delta: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in delta.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def preset_config(name: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    if name not in PRESETS:
        raise UnknownPresetError(name, PRESETS)
    base = base or ExperimentConfig()
    return ExperimentConfig.model_validate(_merge(base.model_dump(), PRESETS[name]))


def run_preset(name: str, out_dir: Path, base: Optional[ExperimentConfig] = None) -> List[MetricsRow]:
    return Trainer(preset_config(name, base), Path(out_dir)).run()
