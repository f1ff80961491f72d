"""Regularized MSE objective, Adam updates and the finite-difference gradient oracle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .config import OptimConfig
from .errors import ModelError, OptimizationError
from .lstm import Gradients, LstmModel, backward, forward, is_bias


@dataclass
class AdamState:
    m: Gradients
    v: Gradients
    t: int = 0

    @classmethod
    def for_model(cls, model: LstmModel) -> "AdamState":
        return cls(m=model.zeros_like(), v=model.zeros_like(), t=0)


def mse_loss(prediction: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean of squared errors over features (and over the batch for 2-D inputs)."""
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise ModelError(f"prediction shape {prediction.shape} != target shape {target.shape}")
    diff = prediction - target
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def residuals(prediction: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-sample MSE over the last axis."""
    diff = np.asarray(prediction, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return np.mean(diff**2, axis=-1)


def penalty(model: LstmModel, l1_coeff: float, l2_coeff: float) -> float:
    total = 0.0
    for name, tensor in model.params.items():
        if is_bias(name):
            continue
        total += l1_coeff * float(np.sum(np.abs(tensor))) + l2_coeff * float(np.sum(tensor**2))
    return total


def regularized_loss(
    model: LstmModel,
    data_loss: float,
    config: OptimConfig,
    grads: Optional[Gradients] = None,
) -> float:
    """data_loss + l1*sum|w| + l2*sum(w^2) over weights; biases are not penalised.

    When ``grads`` is given the matching subgradient (sign(w), sign(0) = 0, and 2w)
    is added to it in place.
    """
    if config.l1_coeff < 0 or config.l2_coeff < 0:
        raise OptimizationError("regularization coefficients must be >= 0")
    if grads is not None:
        for name, tensor in model.params.items():
            if not is_bias(name):
                grads[name] += config.l1_coeff * np.sign(tensor) + 2.0 * config.l2_coeff * tensor
    return data_loss + penalty(model, config.l1_coeff, config.l2_coeff)


def objective(
    model: LstmModel, inputs: np.ndarray, targets: np.ndarray, config: OptimConfig
) -> Tuple[float, float, Gradients]:
    """(data loss, regularized loss, gradients of the regularized loss)."""
    prediction, cache = forward(model, inputs)
    data_loss, grad_output = mse_loss(prediction, targets)
    grads = backward(model, cache, grad_output)
    total = regularized_loss(model, data_loss, config, grads)
    return data_loss, total, grads


def global_norm(grads: Gradients) -> float:
    return float(np.sqrt(sum(float(np.sum(g**2)) for g in grads.values())))


def clip_gradients(grads: Gradients, max_norm: float) -> float:
    """Rescale in place so the global L2 norm is at most ``max_norm``; returns the prior norm."""
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for name in grads:
            grads[name] *= scale
    return norm


def adam_step(
    model: LstmModel, grads: Gradients, state: AdamState, config: OptimConfig
) -> Tuple[LstmModel, AdamState]:
    """One bias-corrected Adam update; mutates and returns ``model`` and ``state``."""
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise OptimizationError(f"non-finite gradient in {name}", tensor=name)

    # Nothing is written back until every tensor's update is finite.
    t = state.t + 1
    correction1 = 1.0 - config.beta1**t
    correction2 = 1.0 - config.beta2**t
    updates: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    for name, grad in grads.items():
        m = config.beta1 * state.m[name] + (1.0 - config.beta1) * grad
        v = config.beta2 * state.v[name] + (1.0 - config.beta2) * grad**2
        m_hat = m / correction1
        v_hat = v / correction2
        step = config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
        param = model.params[name] - step
        if not np.all(np.isfinite(param)):
            raise OptimizationError(f"non-finite parameter in {name} after step {t}", name)
        updates[name] = (m, v, param)

    for name, (m, v, param) in updates.items():
        state.m[name][...] = m
        state.v[name][...] = v
        model.params[name][...] = param
    state.t = t
    return model, state


def numerical_gradient(
    loss: Callable[[], float], array: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Central differences of ``loss()`` with respect to every entry of ``array``.

    ``array`` is perturbed in place and restored after each entry.
    """
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    for k in range(flat.size):
        original = flat[k]
        flat[k] = original + step
        upper = loss()
        flat[k] = original - step
        lower = loss()
        flat[k] = original
        grad.reshape(-1)[k] = (upper - lower) / (2.0 * step)
    return grad


def finite_diff_gradients(
    model: LstmModel,
    inputs: np.ndarray,
    target: np.ndarray,
    step: float = 1e-5,
    config: Optional[OptimConfig] = None,
) -> Gradients:
    """Finite-difference gradients of the full regularized loss (double precision)."""
    config = config or OptimConfig()

    def loss() -> float:
        prediction, _ = forward(model, inputs)
        return regularized_loss(model, mse_loss(prediction, target)[0], config)

    return {
        name: numerical_gradient(loss, tensor, step) for name, tensor in model.params.items()
    }
