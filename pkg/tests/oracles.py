"""Slow reference computations kept independent of the package code paths."""
import math

import numpy as np


def central_diff(f, x, step=1e-5):
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        hi = f(x.copy())
        x[idx] = orig - step
        lo = f(x.copy())
        x[idx] = orig
        out[idx] = (hi - lo) / (2 * step)
    return out


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def hist_loop(x, centers, widths, window, stride, kind="rbf", normalize=True, sum_to_one=False):
    """Scalar loops over every (n, k, b, r, c, s, t); output channel k*B + b."""
    N, K, H, W = x.shape
    B = centers.shape[0]
    S, T = window
    sh, sw = stride
    R, C = (H - S) // sh + 1, (W - T) // sw + 1

    def response(v, m, g):
        if kind == "rbf":
            return math.exp(-(g * g) * (v - m) ** 2)
        return max(0.0, 1.0 - abs(g) * abs(v - m))

    out = np.zeros((N, K * B, R, C))
    for n in range(N):
        for k in range(K):
            for r in range(R):
                for c in range(C):
                    for s in range(S):
                        for t in range(T):
                            v = x[n, k, r * sh + s, c * sw + t]
                            resp = [response(v, centers[b, k], widths[b, k]) for b in range(B)]
                            if sum_to_one:
                                total = sum(resp) + 1e-12
                                resp = [q / total for q in resp]
                            for b in range(B):
                                out[n, k * B + b, r, c] += resp[b]
    if normalize:
        out /= S * T
    return out


def conv_loop(x, w, bias):
    N, Ci, H, W = x.shape
    O, _, kh, kw = w.shape
    out = np.zeros((N, O, H - kh + 1, W - kw + 1))
    for n, o, i, j in np.ndindex(out.shape):
        out[n, o, i, j] = bias[o] + sum(
            x[n, c, i + s, j + t] * w[o, c, s, t]
            for c in range(Ci) for s in range(kh) for t in range(kw))
    return out
