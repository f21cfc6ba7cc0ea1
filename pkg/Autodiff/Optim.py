import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np

from shared.errors import NonFiniteGradientError, ShapeError

log = logging.getLogger(__name__)


@dataclass
class RmsPropState:
    """Plain (uncentred) RMSProp accumulators, one per parameter name."""

    learning_rate: float = 1e-4
    decay: float = 0.9
    epsilon: float = 1e-8
    accumulators: Dict[str, np.ndarray] = field(default_factory=dict)
    steps: int = 0

    def accumulator(self, name: str, like: np.ndarray) -> np.ndarray:
        acc = self.accumulators.get(name)
        if acc is None:
            return np.zeros_like(like, dtype=np.float64)
        return acc


def rmsprop_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: RmsPropState,
    names: Optional[Iterable[str]] = None,
) -> Tuple[Dict[str, np.ndarray], RmsPropState]:
    """
    One RMSProp step on `names` (default: every parameter with a gradient).

        acc   <- decay * acc + (1 - decay) * g^2
        param <- param - lr * g / sqrt(acc + eps)

    Returns a new parameter mapping; arrays of untouched parameters are shared.
    A non-finite gradient refuses the whole step.
    """
    names = list(grads) if names is None else list(names)
    bad = [n for n in names if not np.all(np.isfinite(grads[n]))]
    if bad:
        log.error("rmsprop step refused: non-finite gradient for %s", ", ".join(bad))
        raise NonFiniteGradientError(bad)

    new_params = dict(params)
    new_acc = dict(state.accumulators)
    for name in names:
        p, g = params[name], grads[name]
        if p.shape != g.shape:
            raise ShapeError(name, f"parameter shape {p.shape} != gradient shape {g.shape}")
        acc = state.decay * state.accumulator(name, p) + (1.0 - state.decay) * g * g
        new_acc[name] = acc
        new_params[name] = p - state.learning_rate * g / np.sqrt(acc + state.epsilon)

    new_state = RmsPropState(
        learning_rate=state.learning_rate,
        decay=state.decay,
        epsilon=state.epsilon,
        accumulators=new_acc,
        steps=state.steps + 1,
    )
    return new_params, new_state
