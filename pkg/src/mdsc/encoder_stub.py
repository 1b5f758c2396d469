"""Feed-forward motion autoencoder standing in for a pretrained motion encoder.

A pose window of ``T`` frames by ``c`` features is flattened, encoded to a
``c_M``-dimensional embedding by a two-layer MLP and decoded back by a second
one. Training minimizes the mean squared reconstruction error; the encoder
half then produces motion embeddings in the dataset format.
"""

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from .embedding_io import MOTION, EmbeddingRecord, atomic_write_text
from .errors import DimensionError, DivergenceError, ValidationError
from .layers import MlpHead
from .numerics import AdamState, Rng, adam_step

DEFAULT_T = 160
DEFAULT_C = 75
DEFAULT_C_M = 768


@dataclass(frozen=True)
class AutoencoderConfig:
    T: int = DEFAULT_T
    c: int = DEFAULT_C
    c_M: int = DEFAULT_C_M
    hidden: int = None
    activation: str = "relu"
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3

    def __post_init__(self):
        if min(self.T, self.c, self.c_M) < 1:
            raise ValidationError(f"invalid autoencoder dims T={self.T} c={self.c} c_M={self.c_M}")
        if self.hidden is None:
            object.__setattr__(self, "hidden", 2 * self.c_M)
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be >= 1")

    @property
    def flat_dim(self):
        return self.T * self.c


@dataclass
class AutoencoderModel:
    encoder: MlpHead
    decoder: MlpHead
    T: int
    c: int

    def __post_init__(self):
        if self.encoder.c_in != self.T * self.c or self.decoder.c_out != self.T * self.c:
            raise DimensionError(f"autoencoder must map {self.T}x{self.c} windows to themselves")
        if self.decoder.c_in != self.encoder.c_out:
            raise DimensionError("decoder input must match encoder output")

    @property
    def c_M(self):
        return self.encoder.c_out

    @classmethod
    def init(cls, config, seed):
        rng = Rng(seed, 3)
        enc = MlpHead.init(config.flat_dim, config.c_M, rng.child(1), config.hidden, config.activation)
        dec = MlpHead.init(config.c_M, config.flat_dim, rng.child(2), config.hidden, config.activation)
        return cls(enc, dec, config.T, config.c)

    def params(self):
        out = {f"encoder.{k}": v for k, v in self.encoder.params().items()}
        out.update({f"decoder.{k}": v for k, v in self.decoder.params().items()})
        return out


def _flatten(model, windows):
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (model.T, model.c):
        raise DimensionError(f"windows must have shape (n, {model.T}, {model.c}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("pose windows contain non-finite values")
    return x.reshape(x.shape[0], -1)


def encode(model, windows):
    """``E_M(x)`` for one window or a stack of windows (always 2-D output)."""
    return model.encoder(_flatten(model, windows))


def decode(model, z):
    out = model.decoder(np.atleast_2d(np.asarray(z, dtype=np.float64)))
    return out.reshape(-1, model.T, model.c)


def reconstruct(model, window):
    """``D_M(E_M(x))`` with the same shape as ``window``."""
    w = np.asarray(window, dtype=np.float64)
    out = decode(model, encode(model, w))
    return out[0] if w.ndim == 2 else out


def reconstruction_loss(model, windows):
    """Mean squared error over every entry of every window."""
    x = _flatten(model, windows)
    if x.shape[0] == 0:
        raise ValidationError("reconstruction loss of an empty window set")
    err = model.decoder(model.encoder(x)) - x
    return float(np.mean(err * err))


def _loss_and_grads(model, x):
    z, enc_cache = model.encoder.forward(x)
    y, dec_cache = model.decoder.forward(z)
    err = y - x
    loss = float(np.mean(err * err))
    dgrads, gz = model.decoder.backward(2.0 * err / err.size, dec_cache)
    egrads, _ = model.encoder.backward(gz, enc_cache)
    grads = {f"encoder.{k}": v for k, v in egrads.items()}
    grads.update({f"decoder.{k}": v for k, v in dgrads.items()})
    return loss, grads


def pretrain_autoencoder(windows, config, seed):
    """Adam on mini-batches of windows; returns ``(model, losses)``.

    ``losses[e]`` is the full-set MSE after epoch ``e`` (``losses[0]`` before
    any update).
    """
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] < 2:
        raise ValidationError("pretraining needs at least 2 windows of shape (T, c)")
    model = AutoencoderModel.init(config, seed)
    x = _flatten(model, x)
    rng = Rng(seed, 4)
    state = AdamState(learning_rate=config.learning_rate)
    losses = [reconstruction_loss(model, x.reshape(-1, model.T, model.c))]
    if not np.isfinite(losses[0]):
        raise DivergenceError("non-finite reconstruction loss before training", epoch=0, term="reconstruction")
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(x.shape[0])
        for start in range(0, len(order), config.batch_size):
            loss, grads = _loss_and_grads(model, x[order[start:start + config.batch_size]])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite reconstruction loss at epoch {epoch}", epoch=epoch, term="reconstruction")
            try:
                adam_step(model.params(), grads, state)
            except DivergenceError as exc:
                raise DivergenceError(f"{exc} at epoch {epoch}", epoch=epoch, term=exc.term) from exc
        full = reconstruction_loss(model, x.reshape(-1, model.T, model.c))
        if not np.isfinite(full):
            raise DivergenceError(f"non-finite reconstruction loss at epoch {epoch}", epoch=epoch, term="reconstruction")
        losses.append(full)
    return model, losses


def encode_windows(model, windows, ids=None, styles=None, prefix="w"):
    """Motion records ``vec = E_M(x)``, one per window.

    ``styles`` is a single label or one label per window; records are only
    loadable as a dataset when every label belongs to its vocabulary.
    """
    Z = encode(model, windows)
    n = Z.shape[0]
    ids = [f"{prefix}{i:05d}" for i in range(n)] if ids is None else list(ids)
    if styles is None or isinstance(styles, str):
        styles = [styles or "unlabeled"] * n
    if len(ids) != n or len(styles) != n:
        raise DimensionError(f"{n} windows but {len(ids)} ids and {len(styles)} styles")
    return [EmbeddingRecord(i, MOTION, s, z.copy()) for i, s, z in zip(ids, styles, Z)]


def load_windows(path, T=None, c=None):
    """Read pose windows from JSONL ``{"id", "values", ["style"]}``.

    Returns ``(ids, windows[n, T, c], styles_or_None)``.
    """
    ids, values, styles = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"windows line {lineno}: invalid JSON ({exc})") from exc
            if "id" not in obj or "values" not in obj:
                raise ValidationError(f"windows line {lineno}: needs id and values")
            try:
                arr = np.array(obj["values"], dtype=np.float64)
            except (TypeError, ValueError):
                raise ValidationError(f"window {obj['id']}: values is not a numeric matrix") from None
            if arr.ndim != 2 or min(arr.shape) < 1:
                raise ValidationError(f"window {obj['id']}: values must be a non-empty T x c matrix")
            if values and arr.shape != values[0].shape:
                raise DimensionError(f"window {obj['id']}: shape {arr.shape} differs from {values[0].shape}")
            if (T is not None and arr.shape[0] != T) or (c is not None and arr.shape[1] != c):
                raise DimensionError(f"window {obj['id']}: shape {arr.shape}, expected ({T}, {c})")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"window {obj['id']}: values contain non-finite numbers")
            ids.append(str(obj["id"]))
            values.append(arr)
            styles.append(obj.get("style"))
    if not values:
        raise ValidationError(f"no windows in {path}")
    return ids, np.stack(values), (styles if all(s is not None for s in styles) else None)


def save_autoencoder(model, config, path, seed=None):
    obj = {
        "format_version": 1,
        "kind": "autoencoder",
        "dims": {"T": model.T, "c": model.c, "c_M": model.c_M, "hidden": model.encoder.hidden},
        "activation": model.encoder.activation,
        "weights": {k: v.tolist() for k, v in model.params().items()},
        "config": asdict(config),
        "seed": seed,
    }
    atomic_write_text(path, json.dumps(obj, allow_nan=False) + "\n")


def load_autoencoder(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("kind") != "autoencoder" or obj.get("format_version") != 1:
        raise ValidationError(f"{path} is not a version-1 autoencoder checkpoint")
    w = {k: np.array(v, dtype=np.float64) for k, v in obj["weights"].items()}
    act = obj["activation"]
    enc = MlpHead(w["encoder.W1"], w["encoder.b1"], w["encoder.W2"], w["encoder.b2"], act)
    dec = MlpHead(w["decoder.W1"], w["decoder.b1"], w["decoder.W2"], w["decoder.b2"], act)
    return AutoencoderModel(enc, dec, obj["dims"]["T"], obj["dims"]["c"])


def loss_csv(losses):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "mse"])
    for e, v in enumerate(losses):
        w.writerow([e, repr(v)])
    return buf.getvalue()
