"""Equal-weight soft Dice + binary cross-entropy loss with analytic gradient.

The kernel operates on flat vectors; callers flatten voxel grids first.
Probabilities are clamped to [P_MIN, 1 - P_MIN] before any logarithm, so
the loss is finite for hard 0/1 predictions. The Dice term keeps the
formula's literal value for the empty-empty case (both vectors all zero
give a Dice loss of 1, not 0); some frameworks special-case this to 0, we
do not.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatchError

# Log-safety clamp for predicted probabilities.
P_MIN = 1e-7
DEFAULT_EPSILON = 1e-5


@dataclass(frozen=True)
class LossInputs:
    """Paired label/probability vectors plus the Dice smoothing constant."""

    y: np.ndarray = field(repr=False)
    y_hat: np.ndarray = field(repr=False)
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        y_hat = np.asarray(self.y_hat, dtype=np.float64).reshape(-1)
        if y.size != y_hat.size:
            raise LengthMismatchError(
                f"labels have length {y.size}, probabilities {y_hat.size}"
            )
        if y.size == 0:
            raise ValueError("loss inputs must be non-empty")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("labels must be binary {0, 1}")
        if y_hat.min() < 0.0 or y_hat.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y_hat", y_hat)

    @property
    def n(self) -> int:
        return self.y.size


def soft_dice_loss(inp: LossInputs) -> float:
    """1 - 2*sum(y*y_hat) / (sum(y + y_hat) + epsilon)."""
    overlap = float(np.dot(inp.y, inp.y_hat))
    denom = float(np.sum(inp.y) + np.sum(inp.y_hat)) + inp.epsilon
    return 1.0 - 2.0 * overlap / denom


def bce_loss(inp: LossInputs) -> float:
    """Mean binary cross-entropy, with probabilities clamped before logs."""
    p = np.clip(inp.y_hat, P_MIN, 1.0 - P_MIN)
    terms = inp.y * np.log(p) + (1.0 - inp.y) * np.log(1.0 - p)
    return float(-np.mean(terms))


def combined_loss(inp: LossInputs) -> float:
    """Sum of the Dice and cross-entropy terms (equal weighting)."""
    return soft_dice_loss(inp) + bce_loss(inp)


def combined_loss_grad(inp: LossInputs) -> np.ndarray:
    """Elementwise d(combined_loss)/d(y_hat).

    With T = sum(y*y_hat) and S = sum(y + y_hat) + epsilon:
        d(dice)/d(y_hat_i) = -(2*y_i*S - 2*T) / S^2
        d(bce)/d(y_hat_i)  = -(1/N) * (y_i/p_i - (1 - y_i)/(1 - p_i))
    where p is the clamped probability vector. The result is exact where
    probabilities sit strictly inside the clamp band; at the boundaries the
    BCE term is differentiated at the clamped value.
    """
    overlap = float(np.dot(inp.y, inp.y_hat))
    denom = float(np.sum(inp.y) + np.sum(inp.y_hat)) + inp.epsilon
    dice_grad = -(2.0 * inp.y * denom - 2.0 * overlap) / (denom * denom)
    p = np.clip(inp.y_hat, P_MIN, 1.0 - P_MIN)
    bce_grad = -(inp.y / p - (1.0 - inp.y) / (1.0 - p)) / inp.n
    return dice_grad + bce_grad
