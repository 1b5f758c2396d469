"""Style-consistency metrics.

Per modality: style accuracy through the shared logits head, top-k
retrieval of the correct center, intra distance (to the own center), inter
distance (mean over the K-1 wrong centers) and their ratio I2I. Across
modalities: mean cosine of paired embeddings (Simi). Distances are
``1 - cos`` and thus lie in [0, 2].

All means use ``math.fsum`` so results do not depend on record order.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .alignment import classify, predict
from .embedding_io import MOTION, MODALITIES, atomic_write_text
from .errors import DegenerateVectorError, UnsupportedMetricError, ValidationError
from .numerics import Rng, cosine, cosine_matrix

DEFAULT_K_VALUES = (1, 3)


def _mean(values):
    values = list(values)
    return math.fsum(values) / len(values)


def metric_distance(u, v):
    return 1.0 - cosine(u, v)


def distance_matrix(X, C):
    """``1 - cos`` between every row of ``X`` and every row of ``C``."""
    S, _ = cosine_matrix(X, C, ("embedding", "center"))
    return 1.0 - np.clip(S, -1.0, 1.0)


def _project(model, dataset, modality):
    ids, X, y = dataset.matrix(modality)
    if not ids:
        return ids, np.zeros((0, model.space_dim)), y
    fwd = model.forward_motion if modality == MOTION else model.forward_audio
    return ids, fwd(X)[0], y


def _modalities(dataset):
    counts = dataset.counts()
    present = [m for m in MODALITIES if counts[m] > 0]
    if not present:
        raise ValidationError("cannot evaluate an empty record set")
    return present


def _require_centers(model, metric):
    if model.centers is None:
        raise UnsupportedMetricError(f"{metric} needs cluster centers; this model was trained without them")


def eval_accuracy(model, dataset):
    """``{modality: fraction}`` of records whose argmax logit is their style."""
    out = {}
    for m in _modalities(dataset):
        _, P, y = _project(model, dataset, m)
        out[m] = float(np.mean(predict(classify(model, P)) == y))
    return out


def retrieval_ranks(D, labels):
    """1-based rank of the correct center; ties go to the lower center index."""
    own = D[np.arange(len(labels)), labels][:, None]
    idx = np.arange(D.shape[1])[None, :]
    closer = (D < own) | ((D == own) & (idx < labels[:, None]))
    return 1 + closer.sum(axis=1)


def eval_retrieval(model, dataset, k_values=DEFAULT_K_VALUES):
    """``{modality: {"top<k>": fraction}}``."""
    _require_centers(model, "retrieval")
    if max(k_values) > model.K or min(k_values) < 1:
        raise ValidationError(f"retrieval k values must lie in [1, K={model.K}], got {list(k_values)}")
    out = {}
    for m in _modalities(dataset):
        _, P, y = _project(model, dataset, m)
        ranks = retrieval_ranks(distance_matrix(P, model.centers), y)
        out[m] = {f"top{k}": float(np.mean(ranks <= k)) for k in k_values}
    return out


def per_record_distances(model, P, y):
    """Per-record intra and inter (mean over wrong centers) distances."""
    D = distance_matrix(P, model.centers)
    rows = np.arange(len(y))
    intra = D[rows, y]
    inter = (D.sum(axis=1) - intra) / (model.K - 1)
    return intra, inter


def eval_intra_inter(model, dataset):
    """``{modality: (intra, inter, i2i)}`` with record-averaged distances."""
    _require_centers(model, "intra/inter distance")
    out = {}
    for m in _modalities(dataset):
        _, P, y = _project(model, dataset, m)
        intra, inter = per_record_distances(model, P, y)
        a, b = _mean(intra), _mean(inter)
        if b == 0.0:
            raise DegenerateVectorError(f"{m} inter-cluster distance is zero; I2I undefined")
        out[m] = (a, b, a / b)
    return out


def eval_simi(model, dataset):
    """Mean cosine between projected motion and music of each linked pair.

    For single-sided variants the identity side is already in the
    comparison space, so the two are compared there.
    """
    pairs = dataset.pairs()
    if not pairs:
        raise UnsupportedMetricError("Simi needs at least one motion/music pair")
    Zm = np.array([m.vec for m, _ in pairs])
    Za = np.array([a.vec for _, a in pairs])
    Pm = model.forward_motion(Zm)[0]
    Pa = model.forward_audio(Za)[0]
    return _mean(cosine(u, v) for u, v in zip(Pm, Pa))


def per_style_stats(model, dataset):
    """``{modality: {style: stats}}`` with sample mean and unbiased variance.

    ``stats`` holds ``intra_mean/var``, ``inter_mean/var``, ``i2i_mean/var``
    over per-record values, ``i2i`` (= intra_mean / inter_mean), ``n`` and
    ``low_count`` (set when fewer than 2 records make the variance 0 by
    convention).
    """
    _require_centers(model, "per-style statistics")
    out = {}
    for m in _modalities(dataset):
        _, P, y = _project(model, dataset, m)
        intra, inter = per_record_distances(model, P, y)
        if np.any(inter == 0.0):
            raise DegenerateVectorError(f"{m}: a record has zero inter-cluster distance")
        ratio = intra / inter
        table = {}
        for k, style in enumerate(dataset.styles):
            sel = y == k
            n = int(sel.sum())
            if n == 0:
                continue
            row = {"n": n, "low_count": n < 2}
            for name, vals in (("intra", intra[sel]), ("inter", inter[sel]), ("i2i", ratio[sel])):
                mu = _mean(vals)
                row[f"{name}_mean"] = mu
                row[f"{name}_var"] = math.fsum((v - mu) ** 2 for v in vals) / (n - 1) if n > 1 else 0.0
            row["i2i"] = row["intra_mean"] / row["inter_mean"]
            table[style] = row
        out[m] = table
    return out


@dataclass
class MetricsReport:
    modalities: dict = field(default_factory=dict)
    simi: float = None
    per_style: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    def to_json(self):
        out = {m: dict(block) for m, block in self.modalities.items()}
        if self.simi is not None:
            out["simi"] = self.simi
        out["per_style"] = self.per_style
        out["counts"] = self.counts
        return out

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, allow_nan=False) + "\n"

    def per_style_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["n", "intra_mean", "intra_var", "inter_mean", "inter_var", "i2i_mean", "i2i_var", "i2i", "low_count"]
        w.writerow(["modality", "style", *cols])
        for m, table in self.per_style.items():
            for style, row in table.items():
                w.writerow([m, style, *(repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols)])
        return buf.getvalue()

    def summary(self):
        """Table-style text: percentages for fractions, two decimals for distances."""
        lines = []
        for m, block in self.modalities.items():
            cells = []
            for key, val in block.items():
                if val is None:
                    cells.append(f"{key}=-")
                elif key == "acc" or key.startswith("top"):
                    cells.append(f"{key}={100 * val:.2f}%")
                else:
                    cells.append(f"{key}={val:.2f}")
            lines.append(f"{m:<6} " + "  ".join(cells))
        if self.simi is not None:
            lines.append(f"simi   {self.simi:.2f}")
        return "\n".join(lines)


def evaluate(model, dataset, k_values=DEFAULT_K_VALUES):
    """Every metric that applies to ``model`` and ``dataset``.

    Center-based metrics are ``None`` for contrastive models. Simi is
    omitted when the records carry no pairs (motion-only evaluation).
    """
    mods = _modalities(dataset)
    acc = eval_accuracy(model, dataset)
    if model.centers is not None:
        retr = eval_retrieval(model, dataset, k_values)
        dist = eval_intra_inter(model, dataset)
        per_style = per_style_stats(model, dataset)
    else:
        retr = {m: {f"top{k}": None for k in k_values} for m in mods}
        dist = {m: (None, None, None) for m in mods}
        per_style = {}
    blocks = {}
    for m in mods:
        intra, inter, i2i = dist[m]
        blocks[m] = {"acc": acc[m], **retr[m], "intra": intra, "inter": inter, "i2i": i2i}
    simi = eval_simi(model, dataset) if dataset.pairs() else None
    counts = {m: c for m, c in dataset.counts().items() if c}
    return MetricsReport(blocks, simi, per_style, counts)


def save_report(report, path, per_style_csv=None):
    atomic_write_text(path, report.dumps())
    if per_style_csv is not None:
        atomic_write_text(per_style_csv, report.per_style_csv())


def project_2d(embeddings, seed=0, iterations=200):
    """Top-2 principal-component coordinates via power iteration.

    The covariance of the centered data is power-iterated from a seeded
    random start for a fixed number of steps, deflated, and iterated again.
    Each component's sign is chosen so its first nonzero loading is positive.
    """
    X = np.asarray(embeddings, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValidationError("project_2d needs at least 2 row vectors")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    scale = np.abs(cov).max()
    if scale == 0.0 or not np.isfinite(scale):
        raise DegenerateVectorError("data has rank 0; nothing to project")
    rng = Rng(seed, 2)
    comps = []
    A = cov.copy()
    for c in range(2):
        v = rng.normal(A.shape[0])
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iterations):
            w = A @ v
            nw = np.linalg.norm(w)
            if nw <= 1e-14 * scale:
                break
            v = w / nw
            lam = float(v @ A @ v)
        if np.linalg.norm(A @ v) <= 1e-14 * scale:
            if c == 0:
                raise DegenerateVectorError("data has rank 0; nothing to project")
            # rank-1 data: any direction orthogonal to the first works
            v = _orthogonal_to(comps[0], rng)
            lam = 0.0
        nz = np.flatnonzero(np.abs(v) > 1e-12)
        if nz.size and v[nz[0]] < 0:
            v = -v
        comps.append(v)
        A = A - lam * np.outer(v, v)
    return Xc @ np.array(comps).T


def _orthogonal_to(u, rng):
    v = rng.normal(u.size)
    v -= (v @ u) * u
    return v / np.linalg.norm(v)


def projection_csv(ids, styles, coords):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "style", "x", "y"])
    for rid, style, (x, y) in zip(ids, styles, coords):
        w.writerow([rid, style, repr(float(x)), repr(float(y))])
    return buf.getvalue()
