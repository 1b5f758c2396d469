"""On-disk embedding datasets: JSON manifest + JSONL records.

Layout of a dataset directory::

    manifest.json   {"format_version": 1, "c_M": int, "c_A": int,
                     "styles": [str, ...], "counts": {"motion": int, "music": int}}
    records.jsonl   one {"id", "modality", "style", "pair_id", "vec"} per line

Floats are written with ``repr`` (shortest round-trip form), so a
save/load cycle reproduces every vector bit for bit.
"""

import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, ValidationError
from .numerics import Rng

FORMAT_VERSION = 1
MOTION = "motion"
MUSIC = "music"
MODALITIES = (MOTION, MUSIC)

AIST_STYLES = ("JB", "JS", "LH", "BR", "LO", "MH", "KR", "WA", "HO", "PO")
MANIFEST_NAME = "manifest.json"
RECORDS_NAME = "records.jsonl"


def default_styles(k):
    """The first ``k`` AIST++ genre codes, padded with ``S10``, ``S11``... beyond ten."""
    return tuple(AIST_STYLES[:k]) + tuple(f"S{i}" for i in range(len(AIST_STYLES), k))


@dataclass(frozen=True)
class StyleVocabulary:
    labels: tuple

    def __post_init__(self):
        labels = tuple(str(s) for s in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(set(labels)) != len(labels):
            raise ValidationError(f"duplicate style labels in {list(labels)}")
        if len(labels) < 2:
            raise ValidationError("a style vocabulary needs at least 2 styles")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(labels)})

    @property
    def K(self):
        return len(self.labels)

    def index(self, label):
        try:
            return self._index[label]
        except KeyError:
            raise ValidationError(f"unknown style {label!r}") from None

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)


@dataclass(frozen=True)
class EmbeddingRecord:
    id: str
    modality: str
    style: str
    vec: np.ndarray
    pair_id: str = None

    def to_json(self):
        return {
            "id": self.id,
            "modality": self.modality,
            "style": self.style,
            "pair_id": self.pair_id,
            "vec": [float(x) for x in self.vec],
        }


@dataclass
class EmbeddingDataset:
    """Validated, read-only collection of embedding records."""

    records: list
    styles: StyleVocabulary
    c_M: int
    c_A: int
    _by_id: dict = field(init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.styles, StyleVocabulary):
            self.styles = StyleVocabulary(tuple(self.styles))
        if self.c_M < 1 or self.c_A < 1:
            raise ValidationError(f"embedding dims must be >= 1, got c_M={self.c_M} c_A={self.c_A}")
        self._by_id = {}
        for rec in self.records:
            self._check_record(rec)
            if rec.id in self._by_id:
                raise ValidationError(f"record {rec.id}: duplicate id")
            self._by_id[rec.id] = rec
        for rec in self.records:
            if rec.pair_id is None:
                continue
            other = self._by_id.get(rec.pair_id)
            if other is None:
                raise ValidationError(f"record {rec.id}: field pair_id refers to missing record {rec.pair_id!r}")
            if other.modality == rec.modality:
                raise ValidationError(f"record {rec.id}: field pair_id links two {rec.modality} records")
            if other.style != rec.style:
                raise ValidationError(f"record {rec.id}: field style differs from paired record {other.id}")
            if other.pair_id not in (None, rec.id):
                raise ValidationError(f"record {rec.id}: field pair_id is not reciprocated by {other.id}")

    def _check_record(self, rec):
        if rec.modality not in MODALITIES:
            raise ValidationError(f"record {rec.id}: field modality has invalid value {rec.modality!r}")
        if rec.style not in self.styles.labels:
            raise ValidationError(f"record {rec.id}: field style has unknown label {rec.style!r}")
        dim = self.c_M if rec.modality == MOTION else self.c_A
        if rec.vec.ndim != 1 or rec.vec.size != dim:
            raise DimensionError(f"record {rec.id}: field vec has length {rec.vec.size}, expected {dim}")
        if not np.all(np.isfinite(rec.vec)):
            raise ValidationError(f"record {rec.id}: field vec contains non-finite values")

    @property
    def K(self):
        return self.styles.K

    def __len__(self):
        return len(self.records)

    def __getitem__(self, rid):
        return self._by_id[rid]

    def counts(self):
        return {m: sum(r.modality == m for r in self.records) for m in MODALITIES}

    def of(self, modality):
        return [r for r in self.records if r.modality == modality]

    def matrix(self, modality):
        """``(ids, vectors, style_indices)`` for one modality, in record order."""
        recs = self.of(modality)
        dim = self.c_M if modality == MOTION else self.c_A
        X = np.array([r.vec for r in recs], dtype=np.float64).reshape(len(recs), dim)
        y = np.array([self.styles.index(r.style) for r in recs], dtype=np.int64)
        return [r.id for r in recs], X, y

    def pairs(self):
        """``(motion_record, music_record)`` tuples, in motion record order."""
        return [(r, self._by_id[r.pair_id]) for r in self.of(MOTION) if r.pair_id is not None]

    def units(self):
        """Training units: a motion/music pair, or a lone record."""
        out = []
        for r in self.records:
            if r.pair_id is None:
                out.append((r,))
            elif r.modality == MOTION:
                out.append((r, self._by_id[r.pair_id]))
        return out

    def subset(self, ids):
        keep = set(ids)
        recs = [r for r in self.records if r.id in keep]
        return EmbeddingDataset(recs, self.styles, self.c_M, self.c_A)

    def manifest(self):
        return {
            "format_version": FORMAT_VERSION,
            "c_M": self.c_M,
            "c_A": self.c_A,
            "styles": list(self.styles.labels),
            "counts": self.counts(),
        }


def atomic_write_text(path, text):
    """Write via a sibling temp file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_records(dataset):
    return "".join(json.dumps(r.to_json(), allow_nan=False) + "\n" for r in dataset.records)


def save_dataset(dataset, directory):
    """Write ``manifest.json`` and ``records.jsonl`` into ``directory``."""
    directory = Path(directory)
    atomic_write_text(directory / RECORDS_NAME, dumps_records(dataset))
    atomic_write_text(directory / MANIFEST_NAME, json.dumps(dataset.manifest(), indent=2) + "\n")
    return directory / MANIFEST_NAME, directory / RECORDS_NAME


def _parse_record(obj, lineno):
    if not isinstance(obj, dict):
        raise ValidationError(f"records line {lineno}: expected a JSON object")
    rid = obj.get("id", f"<line {lineno}>")
    for key in ("id", "modality", "style", "vec"):
        if key not in obj:
            raise ValidationError(f"record {rid}: missing field {key}")
    if set(obj) - {"id", "modality", "style", "pair_id", "vec"}:
        raise ValidationError(f"record {rid}: unexpected fields {sorted(set(obj) - {'id', 'modality', 'style', 'pair_id', 'vec'})}")
    vec = obj["vec"]
    if not isinstance(vec, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in vec):
        raise ValidationError(f"record {rid}: field vec must be a list of numbers")
    pair_id = obj.get("pair_id")
    if pair_id is not None and not isinstance(pair_id, str):
        raise ValidationError(f"record {rid}: field pair_id must be a string or null")
    return EmbeddingRecord(
        id=str(obj["id"]),
        modality=obj["modality"],
        style=obj["style"],
        vec=np.array(vec, dtype=np.float64),
        pair_id=pair_id,
    )


def load_dataset(manifest_path, records_path=None):
    """Load and validate a dataset.

    ``manifest_path`` may also be the dataset directory, in which case the
    records file is looked up next to the manifest.
    """
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        records_path = manifest_path / RECORDS_NAME if records_path is None else records_path
        manifest_path = manifest_path / MANIFEST_NAME
    elif records_path is None:
        records_path = manifest_path.parent / RECORDS_NAME
    try:
        manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read manifest {manifest_path}: {exc}") from exc
    for key in ("format_version", "c_M", "c_A", "styles", "counts"):
        if key not in manifest:
            raise ValidationError(f"manifest missing field {key}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise ValidationError(f"unsupported manifest format_version {manifest['format_version']}")

    records = []
    try:
        with open(records_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValidationError(f"records line {lineno}: invalid JSON ({exc})") from exc
                records.append(_parse_record(obj, lineno))
    except OSError as exc:
        raise ValidationError(f"cannot read records {records_path}: {exc}") from exc

    ds = EmbeddingDataset(records, StyleVocabulary(tuple(manifest["styles"])), int(manifest["c_M"]), int(manifest["c_A"]))
    counts = ds.counts()
    declared = {m: int(manifest["counts"].get(m, 0)) for m in MODALITIES}
    if counts != declared:
        raise ValidationError(f"manifest counts {declared} do not match records {counts}")
    return ds


def split(dataset, fraction, seed):
    """Stratified train/validation split over training units.

    Pairs stay together. Within each style ``round(fraction * n)`` units go to
    train, clipped so both sides get at least one unit; styles with a single
    unit go entirely to train (with a warning).
    """
    if not 0.0 < fraction < 1.0:
        raise ValidationError(f"split fraction must lie in (0, 1), got {fraction}")
    rng = Rng(seed)
    by_style = {s: [] for s in dataset.styles}
    for unit in dataset.units():
        by_style[unit[0].style].append(unit)
    train_ids, val_ids = [], []
    for style, units in by_style.items():
        if not units:
            continue
        if len(units) < 2:
            warnings.warn(f"style {style!r} has fewer than 2 units; placed entirely in train", stacklevel=2)
            train_ids += [r.id for u in units for r in u]
            continue
        order = rng.permutation(len(units))
        n_train = min(max(int(round(fraction * len(units))), 1), len(units) - 1)
        for pos, idx in enumerate(order):
            target = train_ids if pos < n_train else val_ids
            target += [r.id for r in units[idx]]
    return dataset.subset(train_ids), dataset.subset(val_ids)


@dataclass
class Batch:
    """Rows of one mini-batch. Row ``i`` of ``motion`` and ``music`` belong to
    the same unit; a modality absent from every unit is ``None``."""

    styles: np.ndarray
    motion: np.ndarray = None
    music: np.ndarray = None
    paired: np.ndarray = None
    ids: list = None

    def __len__(self):
        return len(self.styles)


def _stack(units, modality, dim):
    vecs = []
    for u in units:
        rec = next((r for r in u if r.modality == modality), None)
        if rec is None:
            return None
        vecs.append(rec.vec)
    return np.array(vecs, dtype=np.float64).reshape(len(units), dim)


def stratified_batches(dataset, batch_size, seed):
    """One epoch of batches with round-robin style coverage.

    Units are shuffled within each style and the style order is shuffled once;
    the unit stream then visits styles round-robin (skipping exhausted ones)
    and is cut into consecutive chunks of ``batch_size``. A trailing chunk of
    a single unit is merged into the previous batch.

    Datasets that mix paired and unpaired records, or that carry both
    modalities unpaired, cannot be batched row-aligned and are rejected.
    """
    if batch_size < 2:
        raise ValidationError("batch_size must be >= 2")
    units = dataset.units()
    if not units:
        raise ValidationError("cannot batch an empty dataset")
    shapes = {tuple(sorted(r.modality for r in u)) for u in units}
    if len(shapes) != 1:
        raise ValidationError(
            "batching needs uniform units: either every record paired, or a single modality"
        )

    rng = Rng(seed)
    by_style = [[] for _ in range(dataset.K)]
    for u in units:
        by_style[dataset.styles.index(u[0].style)].append(u)
    queues = [[group[i] for i in rng.permutation(len(group))] for group in by_style]
    style_order = [int(k) for k in rng.permutation(dataset.K)]

    stream = []
    depth = 0
    while len(stream) < len(units):
        for k in style_order:
            if depth < len(queues[k]):
                stream.append(queues[k][depth])
        depth += 1

    chunks = [stream[i:i + batch_size] for i in range(0, len(stream), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        tail = chunks.pop()
        chunks[-1] = chunks[-1] + tail

    batches = []
    for chunk in chunks:
        batches.append(
            Batch(
                styles=np.array([dataset.styles.index(u[0].style) for u in chunk], dtype=np.int64),
                motion=_stack(chunk, MOTION, dataset.c_M),
                music=_stack(chunk, MUSIC, dataset.c_A),
                paired=np.array([len(u) == 2 for u in chunk]),
                ids=[tuple(r.id for r in u) for u in chunk],
            )
        )
    return batches
