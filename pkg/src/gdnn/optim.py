"""SGD with momentum, applied tensor by tensor.

The update is v <- momentum*v + g; p <- p - lr*v, in float32, in place.
Frozen tensors are left bit-identical: the step returns before touching
either the parameter or its velocity.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError


@dataclass
class GradBuffer:
    """Gradient accumulator and momentum state for one parameter tensor."""
    param: np.ndarray
    grad: np.ndarray = field(init=False)
    velocity: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.param.dtype != np.float32:
            raise ConfigError(f"parameters must be float32, got {self.param.dtype}")
        self.grad = np.zeros(self.param.shape, np.float32)
        self.velocity = np.zeros(self.param.shape, np.float32)

    def zero_grad(self):
        self.grad[...] = 0.0

    def add_grad(self, g: np.ndarray):
        if g.shape != self.grad.shape:
            raise DimensionError(f"gradient shape {g.shape}, expected {self.grad.shape}")
        self.grad += g


def sgd_step(buf: GradBuffer, lr: float, momentum: float, frozen: bool = False):
    if frozen:
        return
    if lr < 0 or momentum < 0:
        raise ConfigError(f"lr and momentum must be >= 0, got lr={lr} momentum={momentum}")
    buf.velocity *= np.float32(momentum)
    buf.velocity += buf.grad
    buf.param -= np.float32(lr) * buf.velocity
