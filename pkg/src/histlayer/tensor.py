"""Dense (N, C, H, W) float64 primitives with hand-written backward passes.

Tensors are plain ``numpy.ndarray`` objects of rank 4 (or rank 2 for the
flattened feature matrices fed to the linear head). Every forward function
is pure; the matching ``*_backward`` function takes the upstream gradient and
whatever the forward needed, and returns gradients for each input.
"""
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when array shapes are incompatible with an operation."""


def as_tensor(x, ndim=4):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise ShapeError(f"expected a rank-{ndim} array, got shape {arr.shape}")
    return arr


def _pair(v):
    if isinstance(v, (int, np.integer)):
        return int(v), int(v)
    a, b = v
    return int(a), int(b)


def output_size(size, window, stride):
    """Valid-window output length, ``floor((size - window) / stride) + 1``."""
    if window < 1 or stride < 1:
        raise ShapeError(f"window {window} and stride {stride} must be positive")
    if window > size:
        raise ShapeError(f"window {window} larger than input extent {size}")
    return (size - window) // stride + 1


def windows(x, window, stride):
    """Strided view of shape (N, C, R, C', S, T) over valid sliding windows."""
    S, T = _pair(window)
    sh, sw = _pair(stride)
    output_size(x.shape[2], S, sh)
    output_size(x.shape[3], T, sw)
    view = sliding_window_view(x, (S, T), axis=(2, 3))
    return view[:, :, ::sh, ::sw]


def scatter_windows(grad_windows, input_shape, stride):
    """Adjoint of :func:`windows`: accumulate (N, C, R, C', S, T) back to input."""
    sh, sw = _pair(stride)
    _, _, R, Cc, S, T = grad_windows.shape
    out = np.zeros(input_shape, dtype=np.float64)
    for s in range(S):
        for t in range(T):
            out[:, :, s:s + sh * (R - 1) + 1:sh, t:t + sw * (Cc - 1) + 1:sw] += grad_windows[..., s, t]
    return out


@dataclass
class ConvParams:
    weight: np.ndarray  # (out_channels, in_channels, kH, kW)
    bias: np.ndarray  # (out_channels,)
    stride: tuple = (1, 1)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.stride = _pair(self.stride)
        if self.weight.ndim != 4:
            raise ShapeError(f"conv weight must be rank 4, got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"conv bias shape {self.bias.shape} does not match "
                f"{self.weight.shape[0]} output channels")
        if min(self.weight.shape[2:]) < 1:
            raise ShapeError("kernel dimensions must be >= 1")

    @property
    def out_channels(self):
        return self.weight.shape[0]

    @property
    def in_channels(self):
        return self.weight.shape[1]


@dataclass
class LinearParams:
    weight: np.ndarray  # (out_features, in_features)
    bias: np.ndarray  # (out_features,)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"linear weight {self.weight.shape} and bias {self.bias.shape} disagree")


def conv2d(x, p: ConvParams):
    """Valid cross-correlation (no kernel flip) plus bias."""
    x = as_tensor(x)
    if x.shape[1] != p.in_channels:
        raise ShapeError(
            f"conv2d expects {p.in_channels} input channels, got {x.shape[1]} "
            f"(input shape {x.shape})")
    kh, kw = p.weight.shape[2:]
    if kh > x.shape[2] or kw > x.shape[3]:
        raise ShapeError(f"kernel {kh}x{kw} does not fit input {x.shape[2]}x{x.shape[3]}")
    cols = windows(x, (kh, kw), p.stride)
    out = np.einsum("ncrwst,ocst->norw", cols, p.weight, optimize=True)
    return out + p.bias[None, :, None, None]


def conv2d_backward(grad_out, x, p: ConvParams):
    """Return (grad_x, grad_weight, grad_bias)."""
    x = as_tensor(x)
    kh, kw = p.weight.shape[2:]
    cols = windows(x, (kh, kw), p.stride)
    grad_w = np.einsum("norw,ncrwst->ocst", grad_out, cols, optimize=True)
    grad_b = grad_out.sum(axis=(0, 2, 3))
    grad_cols = np.einsum("norw,ocst->ncrwst", grad_out, p.weight, optimize=True)
    grad_x = scatter_windows(grad_cols, x.shape, p.stride)
    return grad_x, grad_w, grad_b


def sum_pool2d(x, window, stride=None):
    x = as_tensor(x)
    stride = window if stride is None else stride
    return windows(x, window, stride).sum(axis=(-2, -1))


def sum_pool2d_backward(grad_out, input_shape, window, stride=None):
    S, T = _pair(window)
    stride = window if stride is None else stride
    g = np.broadcast_to(grad_out[..., None, None], grad_out.shape + (S, T))
    return scatter_windows(g, input_shape, stride)


def avg_pool2d(x, window, stride=None):
    """Mean over each valid S x T window; stride defaults to the window."""
    x = as_tensor(x)
    stride = window if stride is None else stride
    win = windows(x, window, stride)
    # offsets from each window's first value: a constant window averages to itself exactly
    anchor = win[..., :1, :1]
    return anchor[..., 0, 0] + (win - anchor).mean(axis=(-2, -1))


def avg_pool2d_backward(grad_out, input_shape, window, stride=None):
    S, T = _pair(window)
    return sum_pool2d_backward(grad_out, input_shape, (S, T), stride) / (S * T)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(grad_out, x):
    return grad_out * (x > 0)


def global_avg_pool(x):
    x = as_tensor(x)
    if x.shape[2] < 1 or x.shape[3] < 1:
        raise ShapeError(f"global_avg_pool needs non-empty spatial dims, got {x.shape}")
    return x.mean(axis=(2, 3), keepdims=True)


def global_avg_pool_backward(grad_out, input_shape):
    H, W = input_shape[2:]
    return np.broadcast_to(grad_out / (H * W), input_shape).copy()


def flatten(x):
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(x.shape[0], -1)


def concat_features(a, b):
    """Flatten both inputs to (N, F) and join along features, ``a`` first."""
    a, b = flatten(a), flatten(b)
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"batch size mismatch: {a.shape[0]} vs {b.shape[0]}")
    return np.concatenate([a, b], axis=1)


def concat_features_backward(grad_out, n_a):
    return grad_out[:, :n_a], grad_out[:, n_a:]


def linear(x, p: LinearParams):
    x = flatten(x)
    if x.shape[1] != p.weight.shape[1]:
        raise ShapeError(
            f"linear expects {p.weight.shape[1]} input features, got {x.shape[1]}")
    return x @ p.weight.T + p.bias


def linear_backward(grad_out, x, p: LinearParams):
    """Return (grad_x, grad_weight, grad_bias) for flattened ``x``."""
    x = flatten(x)
    return grad_out @ p.weight, grad_out.T @ x, grad_out.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. ``logits``."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} disagree")
    n, k = logits.shape
    if n == 0:
        raise ShapeError("empty batch")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - z[rows, labels]))
    grad = np.exp(z - log_norm[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / n
