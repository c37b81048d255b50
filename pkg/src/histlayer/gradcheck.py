"""Central finite-difference checks for layer and model gradients."""
from dataclasses import dataclass

import numpy as np

from histlayer import tensor as T
from histlayer.model import Model, forward, loss_and_grads

# norm floor so groups whose gradients are numerically zero do not divide by ~0
REL_FLOOR = 1e-8


def relative_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), REL_FLOOR)
    return float(np.linalg.norm(a - n) / scale)


def numerical_gradient(f, x, step=1e-5):
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (copied)."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


@dataclass
class GradCheckReport:
    errors: dict
    tol: float

    @property
    def passed(self):
        return all(e <= self.tol for e in self.errors.values())

    @property
    def max_error(self):
        return max(self.errors.values())

    def lines(self):
        return [f"{name:14s} max_rel_err={err:.3e}" for name, err in self.errors.items()]


def finite_diff_check(model: Model, batch, step=1e-5, tol=1e-5):
    """Compare backprop against central differences of the mean batch loss."""
    x, y = batch
    _, grads, _ = loss_and_grads(model, x, y)
    errors = {}
    for name, p in model.params.items():
        probe = model.copy()

        def loss_at(value, name=name, probe=probe):
            params = dict(probe.params)
            params[name] = value
            probe.params = params
            logits, _ = forward(probe, x)
            return T.softmax_cross_entropy(logits, y)[0]

        errors[name] = relative_error(grads[name], numerical_gradient(loss_at, p, step))
    return GradCheckReport(errors, tol)
