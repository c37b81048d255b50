"""Localized soft-binning histogram layer.

Each input channel ``k`` is compared against ``B`` learnable bin centers
``mu[b, k]`` with learnable widths ``gamma[b, k]``.  A per-element
membership in ``[0, 1]`` is computed with either a Gaussian RBF,
``exp(-gamma**2 * (x - mu)**2)``, or a triangular hat,
``max(0, 1 - |gamma| * |x - mu|)``, and the memberships are counted over a
sliding ``S x T`` window.  Output maps are laid out with channel index
``k * B + b``.

The direct path (:func:`hist_forward` / :func:`hist_backward`) works on a
(N, K, B, H, W) membership tensor.  :func:`forward_composed` rebuilds the
same RBF result from 1x1 convolutions, elementwise ops and average pooling.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from histlayer import tensor as T

SUM_TO_ONE_EPS = 1e-12


class Binning(str, enum.Enum):
    RBF = "rbf"
    LINEAR = "linear"


@dataclass(frozen=True)
class EquispacedInit:
    """Equally spaced centers on [lo, hi] with one shared width."""
    lo: float = 0.0
    hi: float = 1.0


@dataclass(frozen=True)
class UniformInit:
    """Centers and widths drawn i.i.d. from U(-1/sqrt(BK), 1/sqrt(BK))."""


@dataclass(frozen=True)
class HistogramConfig:
    bins: int
    channels: int
    window: tuple = (3, 3)
    stride: tuple = (1, 1)
    binning: Binning = Binning.RBF
    normalize_count: bool = True
    sum_to_one: bool = False
    # input channel count to reduce from with a learnable 1x1 conv; None = no reduction
    reduce_channels: Optional[int] = None
    init: Union[EquispacedInit, UniformInit] = field(default_factory=EquispacedInit)

    def __post_init__(self):
        if self.bins < 1 or self.channels < 1:
            raise ValueError(f"bins and channels must be positive, got B={self.bins}, "
                             f"K={self.channels}")
        object.__setattr__(self, "window", T._pair(self.window))
        object.__setattr__(self, "stride", T._pair(self.stride))
        object.__setattr__(self, "binning", Binning(self.binning))
        if min(self.window) < 1 or min(self.stride) < 1:
            raise ValueError("window and stride must be positive")
        if self.reduce_channels is not None and self.reduce_channels < 1:
            raise ValueError("reduce_channels must be positive when given")

    def output_shape(self, height, width):
        """Spatial (R, C) of the output maps for an M x N input."""
        return (T.output_size(height, self.window[0], self.stride[0]),
                T.output_size(width, self.window[1], self.stride[1]))


@dataclass
class HistogramParams:
    centers: np.ndarray  # (B, K)
    widths: np.ndarray  # (B, K)

    def __post_init__(self):
        self.centers = np.array(self.centers, dtype=np.float64)
        self.widths = np.array(self.widths, dtype=np.float64)
        if self.centers.ndim != 2 or self.centers.shape != self.widths.shape:
            raise T.ShapeError(f"centers {self.centers.shape} and widths "
                               f"{self.widths.shape} must both be (B, K)")
        if not (np.all(np.isfinite(self.centers)) and np.all(np.isfinite(self.widths))):
            raise ValueError("histogram parameters must be finite")

    @property
    def bins(self):
        return self.centers.shape[0]

    @property
    def channels(self):
        return self.centers.shape[1]

    def check(self, cfg: HistogramConfig):
        if (self.bins, self.channels) != (cfg.bins, cfg.channels):
            raise T.ShapeError(f"params are (B={self.bins}, K={self.channels}) but config "
                               f"expects (B={cfg.bins}, K={cfg.channels})")

    def to_dict(self):
        return {"bins": self.bins, "channels": self.channels,
                "centers": self.centers.ravel().tolist(),
                "widths": self.widths.ravel().tolist()}

    @classmethod
    def from_dict(cls, d):
        shape = (int(d["bins"]), int(d["channels"]))
        try:
            centers = np.asarray(d["centers"], dtype=np.float64).reshape(shape)
            widths = np.asarray(d["widths"], dtype=np.float64).reshape(shape)
        except ValueError as exc:
            raise T.ShapeError(f"parameter lists do not match bins x channels {shape}") from exc
        return cls(centers, widths)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def init_params(cfg: HistogramConfig, seed=None) -> HistogramParams:
    B, K = cfg.bins, cfg.channels
    if isinstance(cfg.init, EquispacedInit):
        lo, hi = cfg.init.lo, cfg.init.hi
        if not hi > lo:
            raise ValueError(f"empty init range [{lo}, {hi}]")
        spacing = (hi - lo) / B
        centers = lo + (np.arange(B) + 0.5) * spacing
        return HistogramParams(np.repeat(centers[:, None], K, axis=1),
                               np.full((B, K), B / (hi - lo)))
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(B * K)
    return HistogramParams(rng.uniform(-bound, bound, (B, K)),
                           rng.uniform(-bound, bound, (B, K)))


def _check_input(x, p: HistogramParams, cfg: HistogramConfig):
    x = T.as_tensor(x)
    p.check(cfg)
    if x.shape[1] != cfg.channels:
        raise T.ShapeError(f"histogram layer expects {cfg.channels} channels, "
                           f"got input shape {x.shape}")
    cfg.output_shape(*x.shape[2:])
    return x


def memberships(x, p: HistogramParams, binning: Binning):
    """Per-element bin responses and their partials, each (N, K, B, H, W).

    Returns ``(psi, dpsi_dmu, dpsi_dgamma)``; ``dpsi/dx == -dpsi/dmu``.
    """
    mu = p.centers.T[None, :, :, None, None]
    gamma = p.widths.T[None, :, :, None, None]
    d = x[:, :, None] - mu
    if binning is Binning.RBF:
        psi = np.exp(-(gamma * d) ** 2)
        return psi, 2.0 * gamma ** 2 * d * psi, -2.0 * gamma * d ** 2 * psi
    g = np.abs(gamma)
    u = 1.0 - g * np.abs(d)
    live = u > 0
    psi = np.where(live, u, 0.0)
    # np.sign(0) == 0 gives the zero subgradient at the peak and for gamma == 0
    dmu = np.where(live, g * np.sign(d), 0.0)
    dgamma = np.where(live, -np.sign(gamma) * np.abs(d), 0.0)
    return psi, dmu, dgamma


def _pool_scale(cfg):
    return 1.0 / (cfg.window[0] * cfg.window[1]) if cfg.normalize_count else 1.0


def _constrain(psi):
    denom = psi.sum(axis=2, keepdims=True) + SUM_TO_ONE_EPS
    return psi / denom, denom


def hist_forward(x, p: HistogramParams, cfg: HistogramConfig):
    """Histogram maps of shape (N, B*K, R, C) for either binning kind."""
    x = _check_input(x, p, cfg)
    psi, _, _ = memberships(x, p, cfg.binning)
    if cfg.sum_to_one:
        psi, _ = _constrain(psi)
    N, K, B, H, W = psi.shape
    win = T.windows(psi.reshape(N, K * B, H, W), cfg.window, cfg.stride)
    # sorted summation: a window's count is bit-identical under any reordering of its values
    win = np.sort(win.reshape(win.shape[:4] + (-1,)), axis=-1)
    return win.sum(axis=-1) * _pool_scale(cfg)


def hist_backward(x, p: HistogramParams, cfg: HistogramConfig, upstream):
    """Gradients ``(grad_centers, grad_widths, grad_input)`` of ``sum(upstream * Y)``."""
    x = _check_input(x, p, cfg)
    psi, dmu, dgamma = memberships(x, p, cfg.binning)
    N, K, B, H, W = psi.shape
    R, C = cfg.output_shape(H, W)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (N, K * B, R, C):
        raise T.ShapeError(f"upstream gradient shape {upstream.shape} does not match "
                           f"histogram output {(N, K * B, R, C)}")
    g = T.sum_pool2d_backward(upstream * _pool_scale(cfg), (N, K * B, H, W),
                              cfg.window, cfg.stride).reshape(N, K, B, H, W)
    if cfg.sum_to_one:
        phi, denom = _constrain(psi)
        g = (g - (g * phi).sum(axis=2, keepdims=True)) / denom
    grad_mu = (g * dmu).sum(axis=(0, 3, 4)).T
    grad_gamma = (g * dgamma).sum(axis=(0, 3, 4)).T
    grad_x = -(g * dmu).sum(axis=2)
    return grad_mu, grad_gamma, grad_x


def _require(cfg, binning):
    if cfg.binning is not binning:
        raise ValueError(f"config binning is {cfg.binning.value}, expected {binning.value}")


def rbf_bin_forward(x, p, cfg):
    _require(cfg, Binning.RBF)
    return hist_forward(x, p, cfg)


def linear_bin_forward(x, p, cfg):
    _require(cfg, Binning.LINEAR)
    return hist_forward(x, p, cfg)


def rbf_grad_centers(x, p, cfg, upstream):
    _require(cfg, Binning.RBF)
    return hist_backward(x, p, cfg, upstream)[0]


def rbf_grad_widths(x, p, cfg, upstream):
    _require(cfg, Binning.RBF)
    return hist_backward(x, p, cfg, upstream)[1]


def rbf_grad_input(x, p, cfg, upstream):
    _require(cfg, Binning.RBF)
    return hist_backward(x, p, cfg, upstream)[2]


def linear_bin_backward(x, p, cfg, upstream):
    _require(cfg, Binning.LINEAR)
    return hist_backward(x, p, cfg, upstream)


def _grouped_1x1(x, weights, biases):
    """Independent 1x1 convolution per input channel; output channel i*G + g."""
    outs = []
    for k in range(x.shape[1]):
        cp = T.ConvParams(weights[k].reshape(-1, 1, 1, 1), biases[k])
        outs.append(T.conv2d(x[:, k:k + 1], cp))
    return np.concatenate(outs, axis=1)


def forward_composed(x, p: HistogramParams, cfg: HistogramConfig,
                     reduction: Optional[T.ConvParams] = None):
    """RBF histogram built only from conv, elementwise and pooling primitives."""
    _require(cfg, Binning.RBF)
    if reduction is not None:
        x = T.conv2d(x, reduction)
    x = _check_input(x, p, cfg)
    B, K = p.bins, p.channels
    centered = _grouped_1x1(x, np.ones((K, B)), -p.centers.T)
    scaled = _grouped_1x1(centered, p.widths.T.reshape(K * B, 1), np.zeros((K * B, 1)))
    contrib = np.exp(-np.square(scaled))
    if cfg.sum_to_one:
        N, _, H, W = contrib.shape
        grouped = contrib.reshape(N, K, B, H, W)
        contrib = (grouped / (grouped.sum(axis=2, keepdims=True) + SUM_TO_ONE_EPS)
                   ).reshape(N, K * B, H, W)
    out = T.avg_pool2d(contrib, cfg.window, cfg.stride)
    if not cfg.normalize_count:
        out = out * (cfg.window[0] * cfg.window[1])
    return out


class HistogramLayer:
    """Histogram layer with optional learnable 1x1 channel reduction in front."""

    def __init__(self, cfg: HistogramConfig, params: Optional[HistogramParams] = None,
                 reduction: Optional[T.ConvParams] = None, seed=None):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg, seed)
        self.params.check(cfg)
        if cfg.reduce_channels is not None and reduction is None:
            rng = np.random.default_rng(seed)
            bound = 1.0 / np.sqrt(cfg.reduce_channels)
            reduction = T.ConvParams(
                rng.uniform(-bound, bound, (cfg.channels, cfg.reduce_channels, 1, 1)),
                rng.uniform(-bound, bound, cfg.channels))
        self.reduction = reduction

    def forward(self, x):
        x = T.as_tensor(x)
        reduced = T.conv2d(x, self.reduction) if self.reduction is not None else x
        return hist_forward(reduced, self.params, self.cfg), (x, reduced)

    def backward(self, cache, upstream):
        """Return (grads dict, grad_input)."""
        x, reduced = cache
        g_mu, g_gamma, g_in = hist_backward(reduced, self.params, self.cfg, upstream)
        grads = {"centers": g_mu, "widths": g_gamma}
        if self.reduction is not None:
            g_in, g_w, g_b = T.conv2d_backward(g_in, x, self.reduction)
            grads["reduce.weight"] = g_w
            grads["reduce.bias"] = g_b
        return grads, g_in
