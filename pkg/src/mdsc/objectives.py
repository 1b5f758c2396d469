"""Training objectives with closed-form gradients.

The per-term functions take comparison-space matrices and return a
:class:`LossReport` whose ``grads`` are keyed by argument name. The
composite objectives (:func:`cluster_total`, :func:`contrastive_total`)
backpropagate through the model and key gradients by parameter name, as
returned by :meth:`AlignmentModel.params`.

Similarity is cosine everywhere. Intra and inter terms average first
within each style present in the batch and then over those styles.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, ValidationError
from .numerics import cosine_matrix, cosine_matrix_backward, normalize_rows, normalize_rows_backward

TERM_NAMES = ("infonce", "intra_m", "inter_m", "intra_a", "inter_a", "reg", "cls")


@dataclass(frozen=True)
class LossWeights:
    intra_m: float = 1.0
    inter_m: float = 1.0
    intra_a: float = 1.0
    inter_a: float = 1.0
    reg: float = 1.0
    cls: float = 1.0
    tau: float = 0.07

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigurationError(f"temperature tau must be > 0, got {self.tau}")
        lams = (self.intra_m, self.inter_m, self.intra_a, self.inter_a, self.reg, self.cls)
        if any(x < 0 for x in lams):
            raise ConfigurationError("loss weights must be non-negative")
        if not any(x > 0 for x in lams):
            raise ConfigurationError("at least one loss weight must be positive")

    def cluster_terms(self):
        return {"intra_m": self.intra_m, "inter_m": self.inter_m, "intra_a": self.intra_a,
                "inter_a": self.inter_a, "reg": self.reg, "cls": self.cls}


@dataclass
class LossReport:
    total: float
    terms: dict = field(default_factory=dict)
    grads: dict = field(default_factory=dict)

    def as_json(self):
        return {"total": self.total, "terms": dict(self.terms)}


def _log_softmax(x, axis):
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def infonce(projected_motion, projected_audio, tau):
    """Symmetric in-batch InfoNCE over cosine similarities.

    Row ``i`` of each matrix is the positive pair for the other's row ``i``;
    every other row of the batch is a negative.
    """
    pm = np.asarray(projected_motion, dtype=np.float64)
    pa = np.asarray(projected_audio, dtype=np.float64)
    if pm.shape != pa.shape or pm.ndim != 2:
        raise DimensionError(f"InfoNCE inputs must share a 2-D shape, got {pm.shape} and {pa.shape}")
    n = pm.shape[0]
    if n < 2:
        raise ValidationError("InfoNCE needs at least 2 pairs")
    if not tau > 0:
        raise ConfigurationError("tau must be positive")
    S, cache = cosine_matrix(pm, pa, ("motion row", "music row"))
    logits = S / tau
    lsm_rows = _log_softmax(logits, axis=1)
    lsm_cols = _log_softmax(logits, axis=0)
    diag = np.arange(n)
    l_ma = -np.mean(lsm_rows[diag, diag])
    l_am = -np.mean(lsm_cols[diag, diag])
    total = 0.5 * (l_ma + l_am)

    eye = np.eye(n)
    grad_logits = 0.5 * ((np.exp(lsm_rows) - eye) + (np.exp(lsm_cols) - eye)) / n
    gm, ga = cosine_matrix_backward(grad_logits / tau, cache)
    return LossReport(float(total), {"m2a": float(l_ma), "a2m": float(l_am)}, {"motion": gm, "music": ga})


def _check_labels(labels, K, n):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise DimensionError(f"expected {n} labels, got shape {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= K):
        raise ValidationError(f"labels must lie in [0, {K})")
    return labels


def _class_weights(labels, K):
    """Per-row weight ``1 / (P * n_class)``; ``P`` = number of present classes."""
    counts = np.bincount(labels, minlength=K)
    present = np.count_nonzero(counts)
    if present == 0:
        raise ValidationError("batch contains no samples")
    return 1.0 / (present * counts[labels])


def loss_intra(projected, labels, centers):
    """Mean over present styles of mean ``1 - cos(sample, own center)``."""
    X = np.asarray(projected, dtype=np.float64)
    C = np.asarray(centers, dtype=np.float64)
    K = C.shape[0]
    labels = _check_labels(labels, K, X.shape[0])
    w = _class_weights(labels, K)
    S, cache = cosine_matrix(X, C, ("sample", "center"))
    rows = np.arange(X.shape[0])
    value = float(np.sum(w * (1.0 - S[rows, labels])))
    grad_s = np.zeros_like(S)
    grad_s[rows, labels] = -w
    gx, gc = cosine_matrix_backward(grad_s, cache)
    return LossReport(value, {"intra": value}, {"projected": gx, "centers": gc})


def loss_inter(projected, labels, centers):
    """Mean over present styles of the mean cosine to every wrong center."""
    X = np.asarray(projected, dtype=np.float64)
    C = np.asarray(centers, dtype=np.float64)
    K = C.shape[0]
    if K < 2:
        raise ConfigurationError("inter-cluster loss needs K >= 2")
    labels = _check_labels(labels, K, X.shape[0])
    w = _class_weights(labels, K) / (K - 1)
    S, cache = cosine_matrix(X, C, ("sample", "center"))
    mask = np.ones_like(S)
    mask[np.arange(X.shape[0]), labels] = 0.0
    grad_s = w[:, None] * mask
    value = float(np.sum(grad_s * S))
    gx, gc = cosine_matrix_backward(grad_s, cache)
    return LossReport(value, {"inter": value}, {"projected": gx, "centers": gc})


def loss_reg(centers):
    """Mean pairwise cosine among distinct centers."""
    C = np.asarray(centers, dtype=np.float64)
    K = C.shape[0]
    if K < 2:
        raise ConfigurationError("center regularizer needs K >= 2")
    S, cache = cosine_matrix(C, C, ("center", "center"))
    grad_s = (1.0 - np.eye(K)) / (K * (K - 1))
    value = float(np.sum(grad_s * S))
    g1, g2 = cosine_matrix_backward(grad_s, cache)
    return LossReport(value, {"reg": value}, {"centers": g1 + g2})


def loss_classification(logits, labels):
    """Mean softmax cross-entropy."""
    Z = np.asarray(logits, dtype=np.float64)
    if Z.ndim != 2:
        raise DimensionError(f"logits must be 2-D, got shape {Z.shape}")
    n, K = Z.shape
    labels = _check_labels(labels, K, n)
    lsm = _log_softmax(Z, axis=1)
    rows = np.arange(n)
    value = float(-np.mean(lsm[rows, labels]))
    grad = np.exp(lsm)
    grad[rows, labels] -= 1.0
    return LossReport(value, {"cls": value}, {"logits": grad / n})


class _Grads(dict):
    def add(self, name, g):
        if name in self:
            self[name] = self[name] + g
        else:
            self[name] = np.array(g, dtype=np.float64, copy=True)


def _project_batch(batch, model):
    sides = {}
    if batch.motion is not None:
        sides["m"] = model.forward_motion(batch.motion)
    if batch.music is not None:
        sides["a"] = model.forward_audio(batch.music)
    if not sides:
        raise ValidationError("batch holds neither modality")
    return sides


def _backprop_heads(model, sides, grad_proj, grads):
    heads = {"m": ("motion_head", model.motion_head), "a": ("audio_head", model.audio_head)}
    for key, g in grad_proj.items():
        prefix, head = heads[key]
        if head is None:
            continue  # fixed modality: identity, nothing trainable upstream
        pgrads, _ = head.backward(g, sides[key][1])
        for k, v in pgrads.items():
            grads.add(f"{prefix}.{k}", v)


def _classification_block(batch, model, sides, weight, grads, grad_proj):
    keys = [k for k in ("m", "a") if k in sides]
    U, norms = normalize_rows(np.vstack([sides[k][0] for k in keys]), "projected row")
    labels = np.concatenate([batch.styles for _ in keys])
    rep = loss_classification(model.logits(U), labels)
    gz = weight * rep.grads["logits"]
    grads.add("logits.W", U.T @ gz)
    grads.add("logits.b", gz.sum(axis=0))
    gP = normalize_rows_backward(gz @ model.logits.W.T, U, norms)
    n = len(batch)
    for i, k in enumerate(keys):
        grad_proj[k] = grad_proj.get(k, 0.0) + gP[i * n:(i + 1) * n]
    return rep.total


def _finish(terms, weights_by_term, grads, model):
    total = float(sum(weights_by_term[t] * v for t, v in terms.items()))
    for name, arr in model.params().items():
        if name not in grads:
            grads[name] = np.zeros_like(arr)
    return LossReport(total, terms, dict(grads))


def cluster_total(batch, model, weights):
    """Weighted intra/inter/regularizer sum plus auxiliary classification.

    Terms of a modality absent from the batch are omitted. Gradients reach
    the MLP heads, the centers and the logits head; the raw embeddings are
    constants.
    """
    if model.centers is None:
        raise ConfigurationError("cluster objective needs a model with centers")
    sides = _project_batch(batch, model)
    lam = weights.cluster_terms()
    C = model.centers
    terms = {}
    grads = _Grads()
    grad_proj = {}
    for key in ("m", "a"):
        if key not in sides:
            continue
        P = sides[key][0]
        for kind, fn in (("intra", loss_intra), ("inter", loss_inter)):
            name = f"{kind}_{key}"
            rep = fn(P, batch.styles, C)
            terms[name] = rep.total
            grad_proj[key] = grad_proj.get(key, 0.0) + lam[name] * rep.grads["projected"]
            grads.add("centers", lam[name] * rep.grads["centers"])
    rep = loss_reg(C)
    terms["reg"] = rep.total
    grads.add("centers", lam["reg"] * rep.grads["centers"])
    terms["cls"] = _classification_block(batch, model, sides, lam["cls"], grads, grad_proj)
    _backprop_heads(model, sides, grad_proj, grads)
    return _finish(terms, lam, grads, model)


def contrastive_total(batch, model, weights):
    """Symmetric InfoNCE plus ``weights.cls`` times the classification loss."""
    if batch.motion is None or batch.music is None or not np.all(batch.paired):
        raise ValidationError("contrastive objective needs a fully paired batch")
    sides = _project_batch(batch, model)
    rep = infonce(sides["m"][0], sides["a"][0], weights.tau)
    grads = _Grads()
    grad_proj = {"m": rep.grads["motion"], "a": rep.grads["music"]}
    terms = {"infonce": rep.total}
    terms["cls"] = _classification_block(batch, model, sides, weights.cls, grads, grad_proj)
    _backprop_heads(model, sides, grad_proj, grads)
    return _finish(terms, {"infonce": 1.0, "cls": weights.cls}, grads, model)
