"""Targeted, norm-budgeted iterative gradient attack.

Starting from the clean image, each iteration steps against the gradient of
the targeted cross-entropy along the steepest-descent direction of the chosen
norm, projects the accumulated perturbation back onto the norm ball and clamps
pixels to [0, 1]. The loop ends as soon as the classifier outputs the target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import Classifier, forward, loss_and_input_gradient
from .core import Image, NumericError, ParameterError, ShapeError
from .norms import NormKind, norm, project_to_ball

GRAD_EPS = 1e-12


@dataclass(frozen=True)
class AttackConfig:
    norm_kind: NormKind
    beta: float
    target_label: int
    learning_rate: float = 0.01
    max_iterations: int = 500

    def __post_init__(self):
        object.__setattr__(self, "norm_kind", NormKind.parse(self.norm_kind))
        if not self.beta > 0:
            raise ParameterError(f"beta must be > 0, got {self.beta}")
        if not self.learning_rate > 0:
            raise ParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.max_iterations < 1:
            raise ParameterError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass(frozen=True)
class AttackResult:
    adversarial: Image
    success: bool
    iterations_used: int
    final_perturbation_norm: float
    final_target_probability: float
    trace: list = field(default_factory=list)  # (loss, perturbation norm) per step


def step_direction(grad: np.ndarray, kind: NormKind, x: np.ndarray | None = None) -> np.ndarray:
    """Unit steepest-ascent direction of ``grad`` under ``kind``.

    For l1 this is a single signed coordinate. When ``x`` is given, l1 skips
    coordinates whose descent step would push a pixel further past the [0, 1]
    box, since clamping would undo that step on every iteration.
    """
    if kind is NormKind.LINF:
        return np.sign(grad)
    if kind is NormKind.L2:
        n = np.sqrt(np.sum(grad * grad))
        return grad / n if n >= GRAD_EPS else np.zeros_like(grad)
    mag = np.abs(grad).ravel()
    if x is not None:
        flat = x.ravel()
        g = grad.ravel()
        blocked = ((flat <= 0.0) & (g > 0)) | ((flat >= 1.0) & (g < 0))
        mag = np.where(blocked, 0.0, mag)
    d = np.zeros(grad.size)
    i = int(np.argmax(mag))
    if mag[i] > 0:
        d[i] = np.sign(grad.ravel()[i])
    return d.reshape(grad.shape)


def craft(f: Classifier, x_true: Image, config: AttackConfig) -> AttackResult:
    if x_true.shape != f.input_shape:
        raise ShapeError(
            f"image shape {x_true.shape} does not match classifier input {f.input_shape}"
        )
    if not 0 <= config.target_label < f.num_classes:
        raise ParameterError(
            f"target label {config.target_label} outside [0, {f.num_classes})"
        )
    kind, beta, y = config.norm_kind, config.beta, config.target_label
    x0 = x_true.data
    x_adv = x0.copy()
    trace = []
    loss_value, pred, grad = loss_and_input_gradient(f, x_true, y)
    it = 0
    while pred.argmax_label != y and it < config.max_iterations:
        it += 1
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite input gradient at iteration {it}")
        d = step_direction(grad, kind, x_adv)
        stepped = x_adv - config.learning_rate * d
        delta = project_to_ball(stepped - x0, kind, beta)
        x_adv = np.clip(x0 + delta, 0.0, 1.0)
        loss_value, pred, grad = loss_and_input_gradient(f, Image(x_adv), y)
        trace.append((loss_value, norm(x_adv - x0, kind)))
    adversarial = Image(x_adv)
    return AttackResult(
        adversarial=adversarial,
        success=pred.argmax_label == y,
        iterations_used=it,
        final_perturbation_norm=norm(x_adv - x0, kind),
        final_target_probability=float(pred.probabilities[y]),
        trace=trace,
    )
