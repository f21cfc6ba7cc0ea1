from typing import Dict, Iterable, Optional

import numpy as np

from Autodiff.Graph import Graph, Var, backward


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> float:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0


def numerical_gradient(graph: Graph, loss: Var, name: str, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of `loss` w.r.t. the named parameter, by graph replay."""
    base = graph.values[graph.params[name]]
    grad = np.zeros_like(base)
    flat = grad.reshape(-1)
    for k in range(base.size):
        probe = base.copy().reshape(-1)
        probe[k] += step
        up = graph.replay({name: probe.reshape(base.shape)})[loss.index]
        probe[k] -= 2.0 * step
        down = graph.replay({name: probe.reshape(base.shape)})[loss.index]
        flat[k] = (float(np.sum(up)) - float(np.sum(down))) / (2.0 * step)
    return grad


def check_gradients(
    graph: Graph,
    loss: Var,
    names: Optional[Iterable[str]] = None,
    step: float = 1e-5,
) -> Dict[str, float]:
    """Max relative error between backward() and finite differences, per parameter."""
    analytic = backward(graph, loss)
    names = list(analytic) if names is None else list(names)
    return {
        name: relative_error(analytic[name], numerical_gradient(graph, loss, name, step))
        for name in names
    }
