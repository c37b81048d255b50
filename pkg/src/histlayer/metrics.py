import numpy as np

FDR_EPS = 1e-12


class SingletonClassError(ValueError):
    """A class has fewer than two samples, so its scatter is undefined."""


def accuracy(preds, labels):
    preds, labels = np.asarray(preds), np.asarray(labels)
    if preds.shape != labels.shape:
        raise ValueError(f"preds {preds.shape} and labels {labels.shape} differ in length")
    if labels.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return 100.0 * float(np.mean(preds == labels))


def confusion(preds, labels, num_classes):
    """Counts with rows indexed by true class and columns by prediction."""
    preds, labels = np.asarray(preds), np.asarray(labels)
    for name, v in (("label", labels), ("prediction", preds)):
        if v.size and (v.min() < 0 or v.max() >= num_classes):
            raise ValueError(f"{name} out of range [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def row_normalize(cm):
    cm = np.asarray(cm, dtype=np.float64)
    sums = cm.sum(axis=1, keepdims=True)
    return np.divide(cm, sums, out=np.zeros_like(cm), where=sums > 0)


def fdr_per_class(features, labels):
    """One-vs-rest log Fisher discriminant ratio for each class.

    ``ln((|m_c - m_rest|^2 + eps) / (tr S_c + tr S_rest + eps))`` with sample
    covariances. Returns a dict ``{class: log_fdr}``.
    """
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != labels.shape[0]:
        raise ValueError(f"features {X.shape} and labels {labels.shape} disagree")
    out = {}
    for c in np.unique(labels):
        inside, rest = X[labels == c], X[labels != c]
        if len(inside) < 2 or len(rest) < 2:
            raise SingletonClassError(f"class {c} needs >= 2 samples in and out of class")
        between = float(np.sum((inside.mean(axis=0) - rest.mean(axis=0)) ** 2))
        within = float(inside.var(axis=0, ddof=1).sum() + rest.var(axis=0, ddof=1).sum())
        out[int(c)] = float(np.log((between + FDR_EPS) / (within + FDR_EPS)))
    return out
