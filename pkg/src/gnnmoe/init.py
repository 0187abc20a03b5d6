"""Parameter initialisers."""

import numpy as np

from .autodiff import Tensor


def glorot(fan_in: int, fan_out: int, rng: np.random.Generator, dtype=np.float64) -> Tensor:
    """Uniform in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype), requires_grad=True)


def zeros(rows: int, cols: int, dtype=np.float64) -> Tensor:
    return Tensor(np.zeros((rows, cols), dtype=dtype), requires_grad=True)


def ones(rows: int, cols: int, dtype=np.float64) -> Tensor:
    return Tensor(np.ones((rows, cols), dtype=dtype), requires_grad=True)
