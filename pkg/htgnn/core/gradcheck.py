import logging
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from htgnn.core.tensor import Tensor, backward, no_grad, zero_grad
from htgnn.errors import GradientError, NonFiniteError

logger = logging.getLogger(__name__)

LossFn = Callable[[Sequence[Tensor]], Tensor]


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


def _evaluate(f: LossFn, params: Sequence[Tensor]) -> float:
    with no_grad():
        value = f(params)
    value = float(np.asarray(value.data).reshape(-1)[0])
    if not np.isfinite(value):
        raise NonFiniteError("loss evaluation during gradient check was not finite")
    return value


def _analytic_gradients(f: LossFn, params: Sequence[Tensor]) -> Dict[int, np.ndarray]:
    zero_grad(params)
    loss = f(params)
    if not np.isfinite(loss.data).all():
        raise NonFiniteError("loss evaluation during gradient check was not finite")
    backward(loss)
    grads = {id(p): (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for p in params}
    zero_grad(params)
    return grads


def _coordinates(param: Tensor, max_coords: Optional[int], rng: np.random.Generator) -> np.ndarray:
    if max_coords is None or param.size <= max_coords:
        return np.arange(param.size)
    return np.sort(rng.choice(param.size, size=max_coords, replace=False))


def _max_error(f: LossFn, params: Sequence[Tensor], checked: Sequence[Tensor], grads: Dict[int, np.ndarray],
               eps: float, max_coords: Optional[int], rng: np.random.Generator, atol: float = 0.0) -> float:
    worst = 0.0
    for param in checked:
        analytic = grads[id(param)].reshape(-1)
        for index in _coordinates(param, max_coords, rng):
            original = param.data.flat[index]
            param.data.flat[index] = original + eps
            plus = _evaluate(f, params)
            param.data.flat[index] = original - eps
            minus = _evaluate(f, params)
            param.data.flat[index] = original
            numeric = (plus - minus) / (2.0 * eps)
            if abs(float(analytic[index])) + abs(numeric) < atol:
                continue
            worst = max(worst, relative_error(float(analytic[index]), numeric))
    return worst


def grad_check(f: LossFn, params: Sequence[Tensor], eps: float = 1e-5, max_coords: Optional[int] = None,
               seed: int = 0, atol: float = 0.0) -> float:
    """Max relative error between backward() and central differences

    `f` receives `params` and must rebuild its graph from their current data.
    With `max_coords`, each tensor is checked on a seeded sample of coordinates.
    Coordinates whose analytic and numeric magnitudes sum below `atol` are
    skipped: there the difference is rounding noise of the loss.
    """
    if eps <= 0:
        raise GradientError(f"grad_check needs eps > 0, got {eps}")
    params = list(params)
    grads = _analytic_gradients(f, params)
    return _max_error(f, params, params, grads, eps, max_coords, np.random.default_rng(seed), atol)


def grad_check_groups(f: LossFn, groups: Dict[str, Sequence[Tensor]], eps: float = 1e-5,
                      max_coords: Optional[int] = None, seed: int = 0, atol: float = 0.0) -> Dict[str, float]:
    """Per-group max relative error sharing one analytic backward pass"""
    if eps <= 0:
        raise GradientError(f"grad_check needs eps > 0, got {eps}")
    params = [p for group in groups.values() for p in group]
    grads = _analytic_gradients(f, params)
    rng = np.random.default_rng(seed)
    errors = {}
    for name, group in groups.items():
        errors[name] = _max_error(f, params, list(group), grads, eps, max_coords, rng, atol)
        logger.info(f"Gradient check {name}: max relative error {errors[name]:.3e}")
    return errors
