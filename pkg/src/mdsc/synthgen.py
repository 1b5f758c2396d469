"""Synthetic paired embeddings with a known style layout.

Each style owns a unit prototype in a shared latent space. A sample draws
``u = normalize(prototype + sigma * noise)`` and emits ``A_M @ u`` as its
motion embedding and ``A_A @ u`` as its music embedding, so both modalities
are linear images of the same latent point.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .embedding_io import MOTION, MUSIC, EmbeddingDataset, EmbeddingRecord, StyleVocabulary, atomic_write_text, default_styles
from .errors import OracleUnavailableError, SeparationInfeasibleError, ValidationError
from .numerics import Rng, normalize_rows

MAX_PROTOTYPE_ATTEMPTS = 10_000
MAX_PROTOTYPE_COSINE = 0.5


@dataclass(frozen=True)
class SyntheticSpec:
    K: int = 10
    latent_dim: int = 16
    c_M: int = 32
    c_A: int = 24
    n_per_class: int = 100
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.K < 2:
            raise ValidationError("SyntheticSpec needs K >= 2")
        if min(self.latent_dim, self.c_M, self.c_A) < 2:
            raise ValidationError("SyntheticSpec dims must be >= 2")
        if self.n_per_class < 1:
            raise ValidationError("n_per_class must be >= 1")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")


@dataclass
class GroundTruth:
    prototypes: np.ndarray
    A_M: np.ndarray
    A_A: np.ndarray
    spec: SyntheticSpec

    def to_json(self):
        return {
            "prototypes": self.prototypes.tolist(),
            "A_M": self.A_M.tolist(),
            "A_A": self.A_A.tolist(),
            "spec": asdict(self.spec),
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            prototypes=np.array(obj["prototypes"], dtype=np.float64),
            A_M=np.array(obj["A_M"], dtype=np.float64),
            A_A=np.array(obj["A_A"], dtype=np.float64),
            spec=SyntheticSpec(**obj["spec"]),
        )


def draw_prototypes(K, dim, rng, max_cos=MAX_PROTOTYPE_COSINE, budget=MAX_PROTOTYPE_ATTEMPTS):
    """Sequential rejection sampling of ``K`` unit vectors with pairwise cosine <= ``max_cos``."""
    chosen = []
    for _ in range(budget):
        cand = rng.unit_vectors(1, dim)[0]
        if all(float(cand @ p) <= max_cos for p in chosen):
            chosen.append(cand)
            if len(chosen) == K:
                return np.array(chosen)
    raise SeparationInfeasibleError(
        f"could not place {K} prototypes with cosine <= {max_cos} in {dim} dims after {budget} draws; "
        "use a smaller K or a larger latent_dim"
    )


def _full_rank_map(rows, cols, rng):
    for _ in range(100):
        A = rng.normal((rows, cols), scale=1.0 / np.sqrt(cols))
        if np.linalg.matrix_rank(A) == min(rows, cols):
            return A
    raise OracleUnavailableError("could not draw a full-rank modality map")


def generate(spec):
    """Returns ``(dataset, ground_truth)``; records are pair-linked."""
    rng = Rng(spec.seed, 7)
    prototypes = draw_prototypes(spec.K, spec.latent_dim, rng.child(1))
    A_M = _full_rank_map(spec.c_M, spec.latent_dim, rng.child(2))
    A_A = _full_rank_map(spec.c_A, spec.latent_dim, rng.child(3))
    styles = default_styles(spec.K)
    noise = rng.child(4).normal((spec.K, spec.n_per_class, spec.latent_dim))

    records = []
    for k in range(spec.K):
        latents, _ = normalize_rows(prototypes[k] + spec.noise_sigma * noise[k])
        for i, u in enumerate(latents):
            mid = f"m-{k:03d}-{i:05d}"
            aid = f"a-{k:03d}-{i:05d}"
            records.append(EmbeddingRecord(mid, MOTION, styles[k], A_M @ u, pair_id=aid))
            records.append(EmbeddingRecord(aid, MUSIC, styles[k], A_A @ u, pair_id=mid))
    dataset = EmbeddingDataset(records, StyleVocabulary(styles), spec.c_M, spec.c_A)
    return dataset, GroundTruth(prototypes, A_M, A_A, spec)


def save_ground_truth(gt, path):
    atomic_write_text(path, json.dumps(gt.to_json()) + "\n")


def load_ground_truth(path):
    with open(path, encoding="utf-8") as fh:
        return GroundTruth.from_json(json.load(fh))


def oracle_nearest_prototype(dataset, ground_truth):
    """Style index per record (in ``dataset.records`` order) by latent recovery.

    Each vector is pulled back through the pseudo-inverse of its modality map
    and assigned to the prototype of highest cosine.
    """
    pinv = {}
    for modality, A in ((MOTION, ground_truth.A_M), (MUSIC, ground_truth.A_A)):
        if np.linalg.matrix_rank(A) < A.shape[1]:
            raise OracleUnavailableError(f"{modality} map is rank deficient")
        pinv[modality] = np.linalg.pinv(A)
    P = ground_truth.prototypes
    out = np.empty(len(dataset.records), dtype=np.int64)
    for i, rec in enumerate(dataset.records):
        u = pinv[rec.modality] @ rec.vec
        out[i] = int(np.argmax(P @ (u / np.linalg.norm(u))))
    return out
