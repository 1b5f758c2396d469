import json
from collections import Counter

import numpy as np
import pytest

from mdsc.embedding_io import (
    MOTION,
    MUSIC,
    EmbeddingDataset,
    EmbeddingRecord,
    StyleVocabulary,
    default_styles,
    load_dataset,
    save_dataset,
    split,
    stratified_batches,
)
from mdsc.errors import DimensionError, ValidationError


def write(tmp_path, manifest, lines):
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    (tmp_path / "records.jsonl").write_text("".join(json.dumps(x) + "\n" for x in lines))
    return tmp_path / "manifest.json", tmp_path / "records.jsonl"


def manifest(**counts):
    return {"format_version": 1, "c_M": 4, "c_A": 3, "styles": ["a", "b"],
            "counts": {"motion": counts.get("motion", 0), "music": counts.get("music", 0)}}


def rec(rid, modality, style, vec, pair_id=None):
    return {"id": rid, "modality": modality, "style": style, "pair_id": pair_id, "vec": vec}


def make_dataset(per_style, K=2, paired=True, seed=0):
    g = np.random.default_rng(seed)
    styles = default_styles(K)
    recs = []
    for k, s in enumerate(styles):
        for i in range(per_style):
            mid, aid = f"m{k}_{i}", f"a{k}_{i}"
            recs.append(EmbeddingRecord(mid, MOTION, s, g.normal(size=4), aid if paired else None))
            if paired:
                recs.append(EmbeddingRecord(aid, MUSIC, s, g.normal(size=3), mid))
    return EmbeddingDataset(recs, StyleVocabulary(styles), 4, 3)


class TestLoad:
    def test_two_valid_records(self, tmp_path):
        m, r = write(tmp_path, manifest(motion=1, music=1), [
            rec("m1", "motion", "a", [1, 2, 3, 4], "a1"),
            rec("a1", "music", "a", [1, 2, 3], "m1"),
        ])
        ds = load_dataset(m, r)
        assert len(ds) == 2 and ds.K == 2
        assert ds.styles.labels == ("a", "b")

    def test_dimension_error_names_record(self, tmp_path):
        m, r = write(tmp_path, manifest(motion=1), [rec("bad-one", "motion", "a", [1, 2, 3, 4, 5])])
        with pytest.raises(DimensionError, match="bad-one"):
            load_dataset(m, r)

    @pytest.mark.parametrize("record, field", [
        (rec("x", "motion", "zzz", [1, 2, 3, 4]), "style"),
        (rec("x", "motion", "a", [1, 2, 3, 4], "ghost"), "pair_id"),
        (rec("x", "dance", "a", [1, 2, 3, 4]), "modality"),
    ])
    def test_invalid_fields(self, tmp_path, record, field):
        m, r = write(tmp_path, manifest(motion=1), [record])
        with pytest.raises(ValidationError, match=f"x.*{field}"):
            load_dataset(m, r)

    def test_non_finite_rejected(self, tmp_path):
        (tmp_path / "manifest.json").write_text(json.dumps(manifest(motion=1)))
        (tmp_path / "records.jsonl").write_text('{"id":"nan1","modality":"motion","style":"a","pair_id":null,"vec":[1,2,NaN,4]}\n')
        with pytest.raises(ValidationError, match="nan1"):
            load_dataset(tmp_path)

    def test_pair_style_mismatch(self, tmp_path):
        m, r = write(tmp_path, manifest(motion=1, music=1), [
            rec("m1", "motion", "a", [1, 2, 3, 4], "a1"),
            rec("a1", "music", "b", [1, 2, 3], "m1"),
        ])
        with pytest.raises(ValidationError, match="style"):
            load_dataset(m, r)

    def test_counts_must_match(self, tmp_path):
        m, r = write(tmp_path, manifest(motion=2), [rec("m1", "motion", "a", [1, 2, 3, 4])])
        with pytest.raises(ValidationError, match="counts"):
            load_dataset(m, r)

    def test_vocabulary_needs_two_unique(self):
        with pytest.raises(ValidationError):
            StyleVocabulary(("a",))
        with pytest.raises(ValidationError):
            StyleVocabulary(("a", "b", "a"))

    def test_round_trip_bit_exact(self, tmp_path):
        g = np.random.default_rng(1)
        recs = [EmbeddingRecord(f"r{i}", MOTION, "a" if i % 2 else "b", g.normal(size=4) * 10 ** g.uniform(-8, 8))
                for i in range(1000)]
        ds = EmbeddingDataset(recs, StyleVocabulary(("a", "b")), 4, 3)
        save_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        assert [r.id for r in back.records] == [r.id for r in recs]
        for a, b in zip(recs, back.records):
            assert a.vec.tobytes() == b.vec.tobytes()


class TestSplit:
    def test_exact_ratio(self):
        ds = make_dataset(10)
        train, val = split(ds, 0.8, seed=1)
        for s in ds.styles:
            assert sum(r.style == s for r in train.of(MOTION)) == 8
            assert sum(r.style == s for r in val.of(MOTION)) == 2

    def test_deterministic(self):
        ds = make_dataset(10)
        a, b = split(ds, 0.7, 4), split(ds, 0.7, 4)
        assert [r.id for r in a[0].records] == [r.id for r in b[0].records]

    def test_partition(self):
        ds = make_dataset(7)
        train, val = split(ds, 0.6, 2)
        assert Counter(r.id for r in train.records) + Counter(r.id for r in val.records) == Counter(r.id for r in ds.records)
        assert not {r.id for r in train.records} & {r.id for r in val.records}

    def test_pairs_stay_together(self):
        train, val = split(make_dataset(9), 0.5, 3)
        for part in (train, val):
            assert len(part.pairs()) == len(part.of(MOTION)) == len(part.of(MUSIC))

    def test_singleton_style_goes_to_train(self):
        recs = [EmbeddingRecord("m0", MOTION, "a", np.ones(4)), EmbeddingRecord("m1", MOTION, "b", np.ones(4)),
                EmbeddingRecord("m2", MOTION, "b", np.ones(4))]
        ds = EmbeddingDataset(recs, StyleVocabulary(("a", "b")), 4, 3)
        with pytest.warns(UserWarning, match="'a'"):
            train, val = split(ds, 0.5, 0)
        assert "m0" in {r.id for r in train.records}

    def test_bad_fraction(self):
        with pytest.raises(ValidationError):
            split(make_dataset(3), 1.0, 0)


class TestBatches:
    def test_both_styles_every_batch(self):
        batches = stratified_batches(make_dataset(4), 4, seed=0)
        assert len(batches) == 2
        assert all(set(b.styles) == {0, 1} for b in batches)

    def test_epoch_covers_each_record_once(self):
        ds = make_dataset(13, K=3)
        seen = Counter(rid for b in stratified_batches(ds, 5, 9) for unit in b.ids for rid in unit)
        assert seen == Counter(r.id for r in ds.records)

    def test_rows_aligned(self):
        ds = make_dataset(5, K=3)
        for b in stratified_batches(ds, 4, 1):
            for i, (mid, aid) in enumerate(b.ids):
                assert np.array_equal(b.motion[i], ds[mid].vec)
                assert np.array_equal(b.music[i], ds[aid].vec)
                assert ds.styles.index(ds[mid].style) == b.styles[i]

    def test_deterministic(self):
        ds = make_dataset(6, K=3)
        assert [b.ids for b in stratified_batches(ds, 4, 3)] == [b.ids for b in stratified_batches(ds, 4, 3)]

    @pytest.mark.parametrize("counts", [(3, 1, 5), (2, 2, 2), (6, 1, 1, 4), (1, 7)])
    @pytest.mark.parametrize("batch_size", [2, 3, 4, 5])
    def test_coverage_exhaustive(self, counts, batch_size):
        styles = default_styles(len(counts))
        recs = [EmbeddingRecord(f"m{k}_{i}", MOTION, s, np.ones(4)) for k, s in enumerate(styles) for i in range(counts[k])]
        ds = EmbeddingDataset(recs, StyleVocabulary(styles), 4, 3)
        K = len(counts)
        for seed in range(10):
            remaining = Counter(r.style for r in recs)
            for b in stratified_batches(ds, batch_size, seed):
                distinct_remaining = sum(1 for v in remaining.values() if v > 0)
                present = len(set(b.styles.tolist()))
                if batch_size >= K:
                    assert present >= min(K, distinct_remaining)
                for s in b.styles:
                    remaining[styles[s]] -= 1

    def test_motion_only_batches(self):
        ds = make_dataset(4, paired=False)
        b = stratified_batches(ds, 3, 0)[0]
        assert b.music is None and b.motion.shape[1] == 4

    def test_empty_dataset(self):
        ds = EmbeddingDataset([], StyleVocabulary(("a", "b")), 4, 3)
        with pytest.raises(ValidationError):
            stratified_batches(ds, 4, 0)

    def test_no_singleton_tail(self):
        batches = stratified_batches(make_dataset(5), 3, 0)  # 10 units
        assert min(len(b) for b in batches) >= 2
