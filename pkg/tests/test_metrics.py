import math

import numpy as np
import pytest

from mdsc.alignment import AlignmentModel, LogitsHead, ModelConfig, Variant
from mdsc.embedding_io import MOTION, MUSIC, EmbeddingDataset, EmbeddingRecord, StyleVocabulary
from mdsc.errors import DegenerateVectorError, UnsupportedMetricError, ValidationError
from mdsc.metrics import (
    eval_intra_inter,
    eval_retrieval,
    eval_simi,
    evaluate,
    per_style_stats,
    project_2d,
    projection_csv,
    retrieval_ranks,
)
from mdsc.trainer import TrainConfig, train


def cos(u, v):
    return float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))


@pytest.fixture(scope="module")
def trained(small_synth):
    ds, _ = small_synth
    model, _ = train(ds, TrainConfig(epochs=5, batch_size=8, c_J=8, seed=1))
    return model, ds


def identity_model(centers, W=None):
    """a2m over a 2-D space: motion is compared directly, music goes through a head."""
    from mdsc.layers import MlpHead
    from mdsc.numerics import Rng
    K, d = centers.shape
    W = np.eye(d, K) if W is None else W
    cfg = ModelConfig(Variant.AUDIO_TO_MOTION, d, 2, K)
    return AlignmentModel(cfg, None, MlpHead.init(2, d, Rng(0)), np.array(centers, float), LogitsHead(W, np.zeros(K)))


def motion_dataset(vecs, labels, styles=("p", "q", "r")):
    recs = [EmbeddingRecord(f"m{i}", MOTION, styles[k], np.array(v, float)) for i, (v, k) in enumerate(zip(vecs, labels))]
    return EmbeddingDataset(recs, StyleVocabulary(styles), len(vecs[0]), 2)


def test_hand_computed_distances():
    C = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    ds = motion_dataset([[1, 0, 0], [1, 1, 0]], [0, 1])
    model = identity_model(C)
    intra, inter, i2i = eval_intra_inter(model, ds)[MOTION]
    s = 1 / math.sqrt(2)
    # record 0: intra 0, inter (1 + 1) / 2 ; record 1: intra 1 - s, inter ((1 - s) + 1) / 2
    assert intra == pytest.approx((0 + 1 - s) / 2, abs=1e-12)
    assert inter == pytest.approx((1 + (2 - s) / 2) / 2, abs=1e-12)
    assert i2i == pytest.approx(intra / inter, abs=1e-12)


def test_retrieval_ranks_ties_lower_index():
    D = np.array([[0.5, 0.5, 0.1], [0.2, 0.2, 0.9]])
    assert retrieval_ranks(D, np.array([1, 0])).tolist() == [3, 1]


def test_loops_match(trained):
    model, ds = trained
    rep = evaluate(model, ds)
    for m, fwd in ((MOTION, model.forward_motion), (MUSIC, model.forward_audio)):
        ids, X, y = ds.matrix(m)
        P = fwd(X)[0]
        intra, inter, top1, top3, hits = [], [], 0, 0, 0
        for p, k in zip(P, y):
            d = [1 - cos(p, c) for c in model.centers]
            intra.append(d[k])
            inter.append(sum(d[j] for j in range(model.K) if j != k) / (model.K - 1))
            order = sorted(range(model.K), key=lambda j: (d[j], j))
            top1 += order.index(k) < 1
            top3 += order.index(k) < 3
            u = p / np.linalg.norm(p)
            logits = [sum(u[i] * model.logits.W[i, j] for i in range(len(u))) + model.logits.b[j] for j in range(model.K)]
            hits += int(np.argmax(logits) == k)
        n = len(y)
        block = rep.modalities[m]
        assert block["intra"] == pytest.approx(sum(intra) / n, rel=1e-12)
        assert block["inter"] == pytest.approx(sum(inter) / n, rel=1e-12)
        assert block["i2i"] == pytest.approx(block["intra"] / block["inter"], rel=1e-14)
        assert block["top1"] == pytest.approx(top1 / n) and block["top3"] == pytest.approx(top3 / n)
        assert block["acc"] == pytest.approx(hits / n)
    pairs = ds.pairs()
    simi = sum(cos(model.forward_motion(m.vec[None])[0][0], model.forward_audio(a.vec[None])[0][0]) for m, a in pairs)
    assert rep.simi == pytest.approx(simi / len(pairs), rel=1e-12)


def test_per_style_stats(trained):
    model, ds = trained
    stats = per_style_stats(model, ds)
    intra_all = eval_intra_inter(model, ds)[MOTION][0]
    table = stats[MOTION]
    n_total = sum(r["n"] for r in table.values())
    assert sum(r["n"] * r["intra_mean"] for r in table.values()) / n_total == pytest.approx(intra_all, rel=1e-12)
    for row in table.values():
        assert row["i2i"] == pytest.approx(row["intra_mean"] / row["inter_mean"])
        assert row["intra_var"] >= 0


def test_variance_single_record():
    C = np.eye(3)
    ds = motion_dataset([[1, 0.2, 0], [0, 1, 0], [0.1, 1, 0]], [0, 1, 1])
    row = per_style_stats(identity_model(C), ds)[MOTION]["p"]
    assert row["n"] == 1 and row["low_count"] and row["intra_var"] == 0.0


def test_record_order_invariant(trained):
    model, ds = trained
    shuffled = EmbeddingDataset(list(reversed(ds.records)), ds.styles, ds.c_M, ds.c_A)
    assert evaluate(model, ds).to_json() == evaluate(model, shuffled).to_json()


def test_scale_invariant(trained):
    model, ds = trained
    scaled = EmbeddingDataset([EmbeddingRecord(r.id, r.modality, r.style, 1e6 * r.vec, r.pair_id) for r in ds.records],
                              ds.styles, ds.c_M, ds.c_A)
    a, b = evaluate(model, ds), evaluate(model, scaled)
    for m in (MOTION, MUSIC):
        for k, v in a.modalities[m].items():
            assert b.modalities[m][k] == pytest.approx(v, rel=1e-9)


def test_motion_only_report(trained):
    model, ds = trained
    sub = EmbeddingDataset([EmbeddingRecord(r.id, r.modality, r.style, r.vec) for r in ds.of(MOTION)],
                           ds.styles, ds.c_M, ds.c_A)
    rep = evaluate(model, sub).to_json()
    assert MUSIC not in rep and "simi" not in rep and MOTION in rep
    with pytest.raises(UnsupportedMetricError):
        eval_simi(model, sub)


def test_contrastive_model_has_no_center_metrics(small_synth):
    ds, _ = small_synth
    model, _ = train(ds, TrainConfig(objective="contrastive", epochs=2, batch_size=8, c_J=8))
    rep = evaluate(model, ds)
    assert rep.modalities[MOTION]["top1"] is None and rep.modalities[MOTION]["acc"] is not None
    with pytest.raises(UnsupportedMetricError):
        eval_retrieval(model, ds)
    assert "null" not in rep.summary()


def test_retrieval_k_bounds(trained):
    model, ds = trained
    with pytest.raises(ValidationError):
        eval_retrieval(model, ds, (1, model.K + 1))


def test_summary_format(trained):
    model, ds = trained
    text = evaluate(model, ds).summary()
    assert "%" in text and "simi" in text


class TestProjection:
    def test_matches_eigh(self, rng):
        X = rng.normal(size=(40, 6)) * np.array([5.0, 3.0, 1.0, 0.5, 0.2, 0.1])
        coords = project_2d(X, seed=0)
        Xc = X - X.mean(axis=0)
        vals, vecs = np.linalg.eigh(Xc.T @ Xc)
        ref = Xc @ vecs[:, ::-1][:, :2]
        for j in range(2):
            sign = np.sign(ref[:, j] @ coords[:, j])
            np.testing.assert_allclose(coords[:, j], sign * ref[:, j], atol=1e-8)

    def test_sign_convention_and_determinism(self, rng):
        X = rng.normal(size=(20, 5))
        a, b = project_2d(X, 3), project_2d(X, 3)
        assert np.array_equal(a, b)
        np.testing.assert_allclose(project_2d(X, 0), project_2d(X, 9), atol=1e-8)

    def test_separates_clusters(self, rng):
        centers = rng.normal(size=(3, 10)) * 10
        X = np.vstack([c + rng.normal(size=(30, 10)) for c in centers])
        y = np.repeat(np.arange(3), 30)
        P = project_2d(X)
        within = np.mean([np.linalg.norm(P[y == k] - P[y == k].mean(0), axis=1).mean() for k in range(3)])
        means = [P[y == k].mean(0) for k in range(3)]
        between = np.mean([np.linalg.norm(means[i] - means[j]) for i in range(3) for j in range(i + 1, 3)])
        assert between / within > 3

    def test_rank_one_and_zero(self):
        X = np.outer(np.arange(5.0), [1.0, 2.0, 0.0])
        P = project_2d(X)
        assert P.shape == (5, 2) and np.allclose(P[:, 1], 0)
        with pytest.raises(DegenerateVectorError):
            project_2d(np.ones((4, 3)))

    def test_csv(self):
        text = projection_csv(["a", "b"], ["x", "y"], np.array([[0.5, 1.0], [2.0, -1.0]]))
        assert text.splitlines() == ["id,style,x,y", "a,x,0.5,1.0", "b,y,2.0,-1.0"]
