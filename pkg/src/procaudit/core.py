"""Dense linear algebra helpers, activations, loss and a finite-difference oracle.

Matrices and vectors are plain float64 numpy arrays. The helpers here add the
shape and finiteness checks the rest of the package relies on.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

PROB_FLOOR = 1e-12


class ShapeError(ValueError):
    """Operand dimensions do not line up."""


class NumericError(ArithmeticError):
    """A NaN or infinity showed up where a finite value was required."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite value in {where}")
    return arr


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.float64)


def zeros(rows: int, cols: int) -> np.ndarray:
    return np.zeros((rows, cols), dtype=np.float64)


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit dimension check.

    Raises ShapeError naming both operand shapes when ``a.cols != b.rows``.
    """
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    return check_finite(out, "matmul result")


def relu(v) -> np.ndarray:
    return np.maximum(np.asarray(v, dtype=np.float64), 0.0)


def softmax(v) -> np.ndarray:
    """Softmax along the last axis, shifted by the max for overflow safety."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0 or v.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    check_finite(v, "softmax input")
    z = v - np.max(v, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def cross_entropy(pred, target_class: int) -> float:
    """Negative log-probability of ``target_class``, floored at 1e-12."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim != 1:
        raise ShapeError(f"expected a probability vector, got shape {pred.shape}")
    if not 0 <= target_class < pred.shape[0]:
        raise ValueError(f"target class {target_class} out of range for {pred.shape[0]} classes")
    return float(-np.log(max(pred[target_class], PROB_FLOOR)))


def batch_cross_entropy(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-row cross-entropy for a (rows, classes) probability matrix."""
    picked = probs[np.arange(probs.shape[0]), labels]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def numerical_gradient(
    f: Callable[[np.ndarray], float], params, step: float = 1e-3
) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array.

    ``params`` is not modified; each coordinate is perturbed on a copy.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.array(params, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericError(f"non-finite function value at coordinate {i}")
        g[i] = (hi - lo) / (2.0 * step)
    return grad
