"""Deterministic training loop, checkpoints and loss traces."""

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .alignment import AlignmentModel, ModelConfig, Variant, init_model, renormalize_centers
from .embedding_io import MOTION, MUSIC, Batch, atomic_write_text, stratified_batches
from .errors import ConfigurationError, DegenerateVectorError, DivergenceError, ValidationError
from .numerics import AdamState, adam_step
from .objectives import LossWeights, cluster_total, contrastive_total

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class Objective(str, Enum):
    CONTRASTIVE = "contrastive"
    CLUSTER = "cluster"


@dataclass(frozen=True)
class TrainConfig:
    variant: Variant = Variant.JOINT
    objective: Objective = Objective.CLUSTER
    weights: LossWeights = None
    learnable_centers: bool = True
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    c_J: int = 256

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "objective", Objective(self.objective))
        if self.weights is None:
            object.__setattr__(self, "weights", LossWeights())
        elif isinstance(self.weights, dict):
            object.__setattr__(self, "weights", LossWeights(**self.weights))
        if self.objective is Objective.CONTRASTIVE and self.variant is not Variant.JOINT:
            raise ConfigurationError("the contrastive objective is only defined for the joint variant")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigurationError(f"batch_size must be >= 2, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")

    def to_json(self):
        out = asdict(self)
        out["variant"] = self.variant.value
        out["objective"] = self.objective.value
        out["weights"] = asdict(self.weights)
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


@dataclass
class TrainTrace:
    """Full-dataset loss after every epoch; row 0 is the untrained model."""

    epochs: list = field(default_factory=list)
    totals: list = field(default_factory=list)
    terms: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)

    def append(self, epoch, report, seconds):
        self.epochs.append(epoch)
        self.totals.append(report.total)
        self.terms.append(dict(report.terms))
        self.wall_time.append(seconds)

    def to_csv(self):
        names = list(self.terms[0]) if self.terms else []
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "total", *names, "wall_time"])
        for e, t, terms, s in zip(self.epochs, self.totals, self.terms, self.wall_time):
            w.writerow([e, repr(t), *(repr(terms[n]) for n in names), f"{s:.6f}"])
        return buf.getvalue()


def full_batch(dataset):
    """Every training unit as one row-aligned batch (no shuffling)."""
    units = dataset.units()
    if not units:
        raise ValidationError("cannot build a batch from an empty dataset")

    def stack(mod, dim):
        rows = [next((r.vec for r in u if r.modality == mod), None) for u in units]
        if any(r is None for r in rows):
            return None
        return np.array(rows, dtype=np.float64).reshape(len(units), dim)

    return Batch(
        styles=np.array([dataset.styles.index(u[0].style) for u in units], dtype=np.int64),
        motion=stack(MOTION, dataset.c_M),
        music=stack(MUSIC, dataset.c_A),
        paired=np.array([len(u) == 2 for u in units]),
        ids=[tuple(r.id for r in u) for u in units],
    )


def objective_fn(config):
    return contrastive_total if config.objective is Objective.CONTRASTIVE else cluster_total


def init_centers_from_data(dataset, model):
    """Unit-normalized per-style mean of the model's current projections.

    Both modalities contribute when present.
    """
    sums = np.zeros((dataset.K, model.space_dim))
    counts = np.zeros(dataset.K, dtype=np.int64)
    for modality, fwd in ((MOTION, model.forward_motion), (MUSIC, model.forward_audio)):
        _, X, y = dataset.matrix(modality)
        if len(y) == 0:
            continue
        P = fwd(X)[0]
        np.add.at(sums, y, P)
        counts += np.bincount(y, minlength=dataset.K)
    for k, label in enumerate(dataset.styles):
        if counts[k] == 0:
            raise ValidationError(f"style {label!r} has no records to initialize its center")
    centers = sums / counts[:, None]
    try:
        return renormalize_centers(centers)
    except DegenerateVectorError as exc:
        raise DegenerateVectorError(
            f"style {dataset.styles.labels[exc.index]!r} has a zero mean projection", index=exc.index
        ) from exc


def _check_finite(report, epoch):
    for name, value in report.terms.items():
        if not np.isfinite(value):
            raise DivergenceError(f"non-finite {name} loss at epoch {epoch}", epoch=epoch, term=name)
    if not np.isfinite(report.total):
        raise DivergenceError(f"non-finite total loss at epoch {epoch}", epoch=epoch, term="total")


def train(dataset, config):
    """Train an alignment model; returns ``(model, trace)``.

    Model init, batch order and updates depend only on ``dataset`` and
    ``config``, so identical inputs produce identical checkpoints.
    """
    if dataset.K < 2:
        raise ConfigurationError("training needs at least 2 styles")
    mcfg = ModelConfig(config.variant, dataset.c_M, dataset.c_A, dataset.K, config.c_J)
    model = init_model(mcfg, config.seed, styles=dataset.styles.labels)
    if config.objective is Objective.CONTRASTIVE:
        model.centers = None
    elif not config.learnable_centers:
        model.centers = init_centers_from_data(dataset, model)
    trainable = [n for n in model.params() if n != "centers" or config.learnable_centers]

    loss = objective_fn(config)
    whole = full_batch(dataset)
    trace = TrainTrace()
    start = time.perf_counter()
    first = loss(whole, model, config.weights)
    _check_finite(first, 0)
    trace.append(0, first, 0.0)

    state = AdamState(learning_rate=config.learning_rate)
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        try:
            for batch in stratified_batches(dataset, config.batch_size, _epoch_seed(config.seed, epoch)):
                rep = loss(batch, model, config.weights)
                _check_finite(rep, epoch)
                grads = {n: rep.grads[n] for n in trainable}
                _update(model, grads, state, epoch, config.learnable_centers)
            rep = loss(whole, model, config.weights)
            _check_finite(rep, epoch)
        except DegenerateVectorError as exc:
            # the data passed at epoch 0, so this comes from the parameters
            raise DivergenceError(f"{exc} at epoch {epoch}", epoch=epoch, term="degenerate") from exc
        trace.append(epoch, rep, time.perf_counter() - t0)
        logger.debug("epoch %d total %.6f %s", epoch, rep.total, rep.terms)
    logger.info("trained %d epochs in %.2fs, final loss %.6f", config.epochs, time.perf_counter() - start, trace.totals[-1])
    return model, trace


def _update(model, grads, state, epoch, learnable_centers):
    try:
        adam_step(model.params(), grads, state)
    except DivergenceError as exc:
        raise DivergenceError(f"{exc} at epoch {epoch}", epoch=epoch, term=exc.term) from exc
    for name, arr in model.params().items():
        if not np.all(np.isfinite(arr)):
            raise DivergenceError(f"parameter {name} became non-finite at epoch {epoch}", epoch=epoch, term=name)
    if model.centers is not None and learnable_centers:
        try:
            renormalize_centers(model.centers)
        except DegenerateVectorError as exc:
            raise DivergenceError(f"{exc} at epoch {epoch}", epoch=epoch, term="centers") from exc


def _epoch_seed(seed, epoch):
    return (seed * 1_000_003 + epoch) % 2**64


# checkpoints


def checkpoint_json(model, config):
    cfg = model.config
    obj = {
        "format_version": CHECKPOINT_VERSION,
        "variant": cfg.variant.value,
        "dims": {"c_M": cfg.c_M, "c_A": cfg.c_A, "c_J": cfg.c_J, "K": cfg.K},
        "styles": list(model.styles) if model.styles is not None else None,
        "weights": {name: arr.tolist() for name, arr in model.params().items()},
        "train_config": config.to_json() if config is not None else None,
        "seed": config.seed if config is not None else None,
    }
    return json.dumps(obj, allow_nan=False) + "\n"


def save_checkpoint(model, config, path):
    atomic_write_text(path, checkpoint_json(model, config))


def read_checkpoint(path):
    """Returns ``(model, train_config_or_None)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read checkpoint {path}: {exc}") from exc
    for key in ("format_version", "variant", "dims", "weights"):
        if key not in obj:
            raise ValidationError(f"checkpoint missing field {key}")
    if obj["format_version"] != CHECKPOINT_VERSION:
        raise ValidationError(f"checkpoint field format_version: unsupported value {obj['format_version']}")
    try:
        variant = Variant(obj["variant"])
    except ValueError:
        raise ValidationError(f"checkpoint field variant: invalid value {obj['variant']!r}") from None
    dims = obj["dims"]
    try:
        mcfg = ModelConfig(variant, int(dims["c_M"]), int(dims["c_A"]), int(dims["K"]), int(dims["c_J"]))
        weights = {k: np.array(v, dtype=np.float64) for k, v in obj["weights"].items()}
        model = AlignmentModel.from_weights(mcfg, weights, obj.get("styles"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"checkpoint field weights/dims invalid: {exc}") from exc
    if model.centers is not None:
        norms = np.linalg.norm(model.centers, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise ValidationError("checkpoint field weights.centers: rows are not unit norm")
    tc = obj.get("train_config")
    return model, (TrainConfig.from_json(tc) if tc else None)


def load_checkpoint(path):
    return read_checkpoint(path)[0]
