"""The three small synthetic-texture classifiers.

* ``conv``: conv3x3(1 -> 3) + ReLU -> GAP -> linear(3 -> classes)
* ``hist``: histogram(B=3, K=1, 3x3 window) -> GAP -> linear(3 -> classes)
* ``combination``: both branches, features concatenated conv-first -> linear(6 -> classes)

Parameters live in a flat ``{name: ndarray}`` dict so optimizers and the
gradient checker can treat them uniformly.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from histlayer import tensor as T
from histlayer.histogram import (Binning, EquispacedInit, HistogramConfig,
                                 HistogramParams, hist_backward, hist_forward,
                                 init_params)

NINE_CLASS_PARAM_COUNTS = {"conv": 66, "hist": 42, "combination": 99}


class Variant(str, enum.Enum):
    CONV = "conv"
    HIST = "hist"
    COMBINATION = "combination"


class StaleCacheError(RuntimeError):
    """A backward pass was attempted with a cache from older parameters."""


def default_hist_config(binning=Binning.RBF, normalize_count=False, sum_to_one=False):
    # sum-pooled counts: with lr 1e-3 and a 300-epoch cap the 1/9-scaled features underfit
    return HistogramConfig(bins=3, channels=1, window=(3, 3), stride=(1, 1),
                           binning=binning, normalize_count=normalize_count,
                           sum_to_one=sum_to_one, init=EquispacedInit(0.0, 1.0))


@dataclass(frozen=True)
class ModelSpec:
    variant: Variant = Variant.COMBINATION
    num_classes: int = 9
    feature_channels: int = 3
    kernel: int = 3
    hist: HistogramConfig = field(default_factory=default_hist_config)

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.num_classes < 2:
            raise ValueError("need at least two classes")

    @property
    def uses_conv(self):
        return self.variant in (Variant.CONV, Variant.COMBINATION)

    @property
    def uses_hist(self):
        return self.variant in (Variant.HIST, Variant.COMBINATION)

    @property
    def feature_dim(self):
        d = self.feature_channels if self.uses_conv else 0
        if self.uses_hist:
            d += self.hist.bins * self.hist.channels
        return d

    def param_count(self):
        n = 0
        if self.uses_conv:
            n += self.feature_channels * (self.kernel * self.kernel + 1)
        if self.uses_hist:
            n += 2 * self.hist.bins * self.hist.channels
        return n + self.num_classes * (self.feature_dim + 1)

    def to_dict(self):
        h = self.hist
        return {"variant": self.variant.value, "num_classes": self.num_classes,
                "feature_channels": self.feature_channels, "kernel": self.kernel,
                "hist": {"bins": h.bins, "channels": h.channels, "window": list(h.window),
                         "stride": list(h.stride), "binning": h.binning.value,
                         "normalize_count": h.normalize_count, "sum_to_one": h.sum_to_one}}

    @classmethod
    def from_dict(cls, d):
        h = dict(d.get("hist", {}))
        hist = replace(default_hist_config(), **{
            k: (tuple(v) if isinstance(v, list) else v) for k, v in h.items()})
        return cls(variant=d["variant"], num_classes=d["num_classes"],
                   feature_channels=d.get("feature_channels", 3),
                   kernel=d.get("kernel", 3), hist=hist)


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


class Model:
    def __init__(self, spec: ModelSpec, params: dict, seed=None):
        self.spec = spec
        self.seed = seed
        self.version = 0
        self._params = {}
        self.params = params
        count = self.num_params()
        if count != spec.param_count():
            raise ValueError(f"model has {count} parameters, expected {spec.param_count()}")

    @property
    def params(self):
        return self._params

    @params.setter
    def params(self, new):
        self._params = {k: np.array(v, dtype=np.float64) for k, v in new.items()}
        self.version += 1

    def num_params(self):
        return int(sum(v.size for v in self._params.values()))

    def copy(self):
        return Model(self.spec, self._params, self.seed)

    def hist_params(self):
        return HistogramParams(self._params["hist.centers"], self._params["hist.widths"])


def build_model(spec: ModelSpec, seed=0) -> Model:
    """Seeded model; each branch draws from its own stream so shared parts match."""
    params = {}
    if spec.uses_conv:
        rng = np.random.default_rng([seed, 0])
        fan_in = spec.kernel * spec.kernel
        params["conv.weight"] = _uniform(rng, fan_in, (spec.feature_channels, 1, spec.kernel,
                                                       spec.kernel))
        params["conv.bias"] = _uniform(rng, fan_in, spec.feature_channels)
    if spec.uses_hist:
        hp = init_params(spec.hist, seed=np.random.default_rng([seed, 1]))
        params["hist.centers"] = hp.centers
        params["hist.widths"] = hp.widths
    rng = np.random.default_rng([seed, 2])
    params["fc.weight"] = _uniform(rng, spec.feature_dim, (spec.num_classes, spec.feature_dim))
    params["fc.bias"] = _uniform(rng, spec.feature_dim, spec.num_classes)
    return Model(spec, params, seed)


def _conv_params(model):
    return T.ConvParams(model.params["conv.weight"], model.params["conv.bias"])


def _fc_params(model):
    return T.LinearParams(model.params["fc.weight"], model.params["fc.bias"])


def features(model: Model, x):
    """Pre-FC feature vectors (N, d) and the cache needed to backpropagate them."""
    x = T.as_tensor(x)
    if x.shape[1] != 1:
        raise T.ShapeError(f"models take single-channel images, got shape {x.shape}")
    cache = {"version": model.version, "x": x}
    parts = []
    if model.spec.uses_conv:
        pre = T.conv2d(x, _conv_params(model))
        act = T.relu(pre)
        cache["conv_pre"] = pre
        cache["conv_act_shape"] = act.shape
        parts.append(T.flatten(T.global_avg_pool(act)))
    if model.spec.uses_hist:
        h = hist_forward(x, model.hist_params(), model.spec.hist)
        cache["hist_shape"] = h.shape
        parts.append(T.flatten(T.global_avg_pool(h)))
    feats = parts[0] if len(parts) == 1 else T.concat_features(parts[0], parts[1])
    cache["features"] = feats
    return feats, cache


def forward(model: Model, x):
    feats, cache = features(model, x)
    return T.linear(feats, _fc_params(model)), cache


def backward(model: Model, cache, grad_logits):
    """Gradients for every parameter given d(loss)/d(logits)."""
    if cache.get("version") != model.version:
        raise StaleCacheError("cache was produced before the last parameter update")
    grads = {}
    g_feat, grads["fc.weight"], grads["fc.bias"] = T.linear_backward(
        grad_logits, cache["features"], _fc_params(model))
    n_conv = model.spec.feature_channels if model.spec.uses_conv else 0
    g_conv, g_hist = T.concat_features_backward(g_feat, n_conv)
    x = cache["x"]
    if model.spec.uses_conv:
        shape = cache["conv_act_shape"]
        g_act = T.global_avg_pool_backward(g_conv.reshape(shape[0], shape[1], 1, 1), shape)
        g_pre = T.relu_backward(g_act, cache["conv_pre"])
        _, grads["conv.weight"], grads["conv.bias"] = T.conv2d_backward(
            g_pre, x, _conv_params(model))
    if model.spec.uses_hist:
        shape = cache["hist_shape"]
        g_maps = T.global_avg_pool_backward(g_hist.reshape(shape[0], shape[1], 1, 1), shape)
        grads["hist.centers"], grads["hist.widths"], _ = hist_backward(
            x, model.hist_params(), model.spec.hist, g_maps)
    return {k: grads[k] for k in model.params}


def loss_and_grads(model: Model, x, labels):
    logits, cache = forward(model, x)
    loss, g = T.softmax_cross_entropy(logits, labels)
    return loss, backward(model, cache, g), logits
