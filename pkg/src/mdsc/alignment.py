"""Trainable alignment state: projection heads, style centers, logits head.

Three variants decide which modality is projected and where the two meet:

=========  ===================  ==================  ================
variant    motion side          music side          comparison space
=========  ===================  ==================  ================
m2a        MLP  c_M -> c_A      identity            c_A
a2m        identity             MLP  c_A -> c_M     c_M
joint      MLP  c_M -> c_J      MLP  c_A -> c_J     c_J
=========  ===================  ==================  ================

MLP heads see L2-normalized input embeddings, which makes every projection
(and hence every cosine-based loss and metric) invariant to rescaling of the
raw embeddings.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError, DegenerateVectorError, DimensionError, ValidationError
from .layers import MlpHead
from .numerics import NORM_EPS, Rng, normalize_rows

DEFAULT_C_J = 256


class Variant(str, Enum):
    MOTION_TO_AUDIO = "m2a"
    AUDIO_TO_MOTION = "a2m"
    JOINT = "joint"


@dataclass(frozen=True)
class ModelConfig:
    variant: Variant
    c_M: int
    c_A: int
    K: int
    c_J: int = DEFAULT_C_J

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if min(self.c_M, self.c_A, self.c_J) < 1:
            raise ConfigurationError(f"dims must be >= 1 (c_M={self.c_M}, c_A={self.c_A}, c_J={self.c_J})")
        if self.K < 2:
            raise ConfigurationError(f"need K >= 2 styles, got {self.K}")

    @property
    def space_dim(self):
        return {Variant.MOTION_TO_AUDIO: self.c_A, Variant.AUDIO_TO_MOTION: self.c_M, Variant.JOINT: self.c_J}[self.variant]


@dataclass
class LogitsHead:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise DimensionError(f"logits head shapes W{self.W.shape} b{self.b.shape} disagree")

    def __call__(self, v):
        return v @ self.W + self.b


class AlignmentModel:
    """Projection heads + centers + one logits head shared by both modalities.

    ``centers`` is ``None`` for contrastively trained models, which have no
    cluster structure to evaluate against.
    """

    def __init__(self, config, motion_head=None, audio_head=None, centers=None, logits=None, styles=None):
        self.config = config
        self.styles = None if styles is None else tuple(styles)
        self.motion_head = motion_head
        self.audio_head = audio_head
        self.centers = None if centers is None else np.asarray(centers, dtype=np.float64)
        self.logits = logits
        self.validate()

    @property
    def variant(self):
        return self.config.variant

    @property
    def space_dim(self):
        return self.config.space_dim

    @property
    def K(self):
        return self.config.K

    def validate(self):
        cfg = self.config
        need_m = cfg.variant in (Variant.MOTION_TO_AUDIO, Variant.JOINT)
        need_a = cfg.variant in (Variant.AUDIO_TO_MOTION, Variant.JOINT)
        if need_m != (self.motion_head is not None):
            raise ValidationError(f"variant {cfg.variant.value} {'requires' if need_m else 'forbids'} a motion head")
        if need_a != (self.audio_head is not None):
            raise ValidationError(f"variant {cfg.variant.value} {'requires' if need_a else 'forbids'} an audio head")
        d = cfg.space_dim
        if self.motion_head is not None and (self.motion_head.c_in, self.motion_head.c_out) != (cfg.c_M, d):
            raise DimensionError(f"motion head maps {self.motion_head.c_in}->{self.motion_head.c_out}, expected {cfg.c_M}->{d}")
        if self.audio_head is not None and (self.audio_head.c_in, self.audio_head.c_out) != (cfg.c_A, d):
            raise DimensionError(f"audio head maps {self.audio_head.c_in}->{self.audio_head.c_out}, expected {cfg.c_A}->{d}")
        if self.centers is not None:
            if self.centers.shape != (cfg.K, d):
                raise DimensionError(f"centers have shape {self.centers.shape}, expected {(cfg.K, d)}")
            if not np.all(np.isfinite(self.centers)):
                raise ValidationError("centers contain non-finite values")
        if self.logits is None or self.logits.W.shape != (d, cfg.K):
            raise DimensionError(f"logits head must map {d} -> {cfg.K}")
        if self.styles is not None and len(self.styles) != cfg.K:
            raise ValidationError(f"model has {len(self.styles)} style labels for K={cfg.K}")

    def params(self):
        """Trainable tensors by name; the arrays are the model's own (mutable)."""
        out = {}
        if self.motion_head is not None:
            out.update({f"motion_head.{k}": v for k, v in self.motion_head.params().items()})
        if self.audio_head is not None:
            out.update({f"audio_head.{k}": v for k, v in self.audio_head.params().items()})
        if self.centers is not None:
            out["centers"] = self.centers
        out["logits.W"] = self.logits.W
        out["logits.b"] = self.logits.b
        return out

    def copy(self):
        return AlignmentModel.from_weights(self.config, {k: v.copy() for k, v in self.params().items()}, self.styles)

    @classmethod
    def from_weights(cls, config, weights, styles=None):
        """Build a model from a flat ``{name: array}`` mapping (see :meth:`params`)."""
        def head(prefix):
            if f"{prefix}.W1" not in weights:
                return None
            return MlpHead(*(weights[f"{prefix}.{k}"] for k in ("W1", "b1", "W2", "b2")))

        return cls(
            config,
            motion_head=head("motion_head"),
            audio_head=head("audio_head"),
            centers=weights.get("centers"),
            logits=LogitsHead(weights["logits.W"], weights["logits.b"]),
            styles=styles,
        )

    # forward passes with caches, consumed by objectives

    def forward_motion(self, Z):
        return _forward(self.motion_head, Z, self.config.c_M, "motion")

    def forward_audio(self, Z):
        return _forward(self.audio_head, Z, self.config.c_A, "music")


def _forward(head, Z, dim, what):
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != dim:
        raise DimensionError(f"{what} embeddings must have shape (n, {dim}), got {Z.shape}")
    if head is None:
        return Z, None
    unit, _ = normalize_rows(Z, f"{what} row")
    out, cache = head.forward(unit)
    return out, cache


def _as_rows(z):
    z = np.asarray(z, dtype=np.float64)
    return (z[None, :], True) if z.ndim == 1 else (z, False)


def project_motion(model, z_M):
    """Map motion embedding(s) into the comparison space."""
    rows, single = _as_rows(z_M)
    out = model.forward_motion(rows)[0]
    return out[0] if single else out


def project_audio(model, z_A):
    """Map music embedding(s) into the comparison space."""
    rows, single = _as_rows(z_A)
    out = model.forward_audio(rows)[0]
    return out[0] if single else out


def classify(model, projected):
    """Style logits ``v @ W + b`` with ``v`` the unit-normalized projection.

    Normalizing first keeps predictions independent of embedding scale,
    including on the identity side of single-sided variants.
    """
    rows, single = _as_rows(projected)
    if rows.shape[1] != model.space_dim:
        raise DimensionError(f"classify expects dim {model.space_dim}, got {rows.shape[1]}")
    out = model.logits(normalize_rows(rows, "projected row")[0])
    return out[0] if single else out


def predict(logits):
    """Argmax per row; ``np.argmax`` already resolves ties to the lowest index."""
    return np.argmax(np.atleast_2d(logits), axis=1)


def renormalize_centers(centers):
    """Rescale every row to unit L2 norm, in place. Returns ``centers``."""
    norms = np.linalg.norm(centers, axis=1)
    bad = np.flatnonzero(~(norms >= NORM_EPS) | ~np.isfinite(norms))
    if bad.size:
        raise DegenerateVectorError(f"center {int(bad[0])} has near-zero or non-finite norm", index=int(bad[0]))
    centers /= norms[:, None]
    return centers


def init_model(config, seed, styles=None):
    """Fresh model: fan-in scaled uniform weights, random unit-vector centers."""
    rng = Rng(seed, 1)
    d = config.space_dim
    motion_head = audio_head = None
    if config.variant in (Variant.MOTION_TO_AUDIO, Variant.JOINT):
        motion_head = MlpHead.init(config.c_M, d, rng.child(1))
    if config.variant in (Variant.AUDIO_TO_MOTION, Variant.JOINT):
        audio_head = MlpHead.init(config.c_A, d, rng.child(2))
    centers = rng.child(3).unit_vectors(config.K, d)
    r = 1.0 / np.sqrt(d)
    lrng = rng.child(4)
    logits = LogitsHead(lrng.uniform(-r, r, (d, config.K)), lrng.uniform(-r, r, config.K))
    return AlignmentModel(config, motion_head, audio_head, centers, logits, styles)
