"""SGD with classical/Nesterov momentum and coupled L2 weight decay."""

import numpy as np


class SGD:
    """Update rule per parameter:

        g   <- grad + weight_decay * value
        buf <- momentum * buf + g
        value -= lr * (g + momentum * buf)   (nesterov)
        value -= lr * buf                    (classical)
    """

    def __init__(self, params, lr, momentum=0.0, nesterov=False, weight_decay=0.0):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.nesterov = nesterov
        self.weight_decay = weight_decay

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        for p in self.params:
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.value
            buf = p.momentum_buffer
            buf *= self.momentum
            buf += g
            if self.nesterov:
                p.value -= (self.lr * (g + self.momentum * buf)).astype(p.value.dtype, copy=False)
            else:
                p.value -= (self.lr * buf).astype(p.value.dtype, copy=False)
            p.version += 1

    def scale_lr(self, factor):
        self.lr *= factor
