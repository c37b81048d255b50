import numpy as np


def _check(params, grads, buffers):
    if set(params) != set(grads):
        raise ValueError(f"parameter names {sorted(params)} and gradient names "
                         f"{sorted(grads)} differ")
    for name, p in params.items():
        if np.shape(grads[name]) != np.shape(p):
            raise ValueError(f"gradient for {name!r} has shape {np.shape(grads[name])}, "
                             f"parameter has {np.shape(p)}")
        if name in buffers and buffers[name].shape != np.shape(p):
            raise ValueError(f"optimizer buffer for {name!r} does not match parameter shape")


class Adam:
    """Adam with bias correction. ``step`` returns a new parameter dict."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        _check(params, grads, self.m)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        out = {}
        for name, p in params.items():
            g = np.asarray(grads[name], dtype=np.float64)
            m = self.m.get(name, np.zeros_like(g))
            v = self.v.get(name, np.zeros_like(g))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            out[name] = p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return out


class SGDMomentum:
    """v <- momentum * v + g;  p <- p - lr * v"""

    def __init__(self, lr=0.01, momentum=0.9):
        self.lr = lr
        self.momentum = momentum
        self.t = 0
        self.velocity = {}

    def step(self, params, grads):
        _check(params, grads, self.velocity)
        self.t += 1
        out = {}
        for name, p in params.items():
            g = np.asarray(grads[name], dtype=np.float64)
            v = self.momentum * self.velocity.get(name, np.zeros_like(g)) + g
            self.velocity[name] = v
            out[name] = p - self.lr * v
        return out


def adam_step(state: Adam, params, grads):
    return state.step(params, grads)


def sgd_momentum_step(state: SGDMomentum, params, grads):
    return state.step(params, grads)
