"""Finite-difference audit of every objective on random small instances."""

from dataclasses import dataclass

import numpy as np

from .alignment import AlignmentModel, ModelConfig, Variant, init_model
from .embedding_io import Batch
from .numerics import Rng, finite_diff_grad, max_relative_error
from .objectives import (
    LossWeights,
    cluster_total,
    contrastive_total,
    infonce,
    loss_classification,
    loss_inter,
    loss_intra,
    loss_reg,
)

TERMS = ("infonce", "loss_intra", "loss_inter", "loss_reg", "loss_classification", "cluster_total", "contrastive_total")
DEFAULT_TOLERANCE = 1e-4
DEFAULT_STEP = 1e-5


@dataclass
class GradcheckResult:
    term: str
    instances: int
    max_rel_error: float
    tolerance: float

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


def _instance(term, rng):
    """Returns ``(params, f, analytic)`` for one random instance of ``term``."""
    n = int(rng.integers(2, 9))
    c = int(rng.integers(2, 7))
    K = int(rng.integers(2, 5))
    labels = rng.integers(0, K, n)
    if term == "infonce":
        tau = float(rng.uniform(0.1, 1.0, None))
        p = {"motion": rng.normal((n, c)), "music": rng.normal((n, c))}
        return p, lambda q: infonce(q["motion"], q["music"], tau).total, infonce(p["motion"], p["music"], tau).grads
    if term in ("loss_intra", "loss_inter"):
        fn = loss_intra if term == "loss_intra" else loss_inter
        p = {"projected": rng.normal((n, c)), "centers": rng.normal((K, c))}
        return p, lambda q: fn(q["projected"], labels, q["centers"]).total, fn(p["projected"], labels, p["centers"]).grads
    if term == "loss_reg":
        p = {"centers": rng.normal((K, c))}
        return p, lambda q: loss_reg(q["centers"]).total, loss_reg(p["centers"]).grads
    if term == "loss_classification":
        p = {"logits": rng.normal((n, K))}
        return p, lambda q: loss_classification(q["logits"], labels).total, loss_classification(p["logits"], labels).grads

    variant = Variant.JOINT if term == "contrastive_total" else list(Variant)[int(rng.integers(0, 3))]
    c_M, c_A = int(rng.integers(2, 7)), int(rng.integers(2, 7))
    cfg = ModelConfig(variant, c_M, c_A, K, c_J=c)
    model = init_model(cfg, int(rng.integers(0, 2**31)))
    batch = Batch(styles=labels, motion=rng.normal((n, c_M)), music=rng.normal((n, c_A)), paired=np.ones(n, bool))
    lam = rng.uniform(0.1, 2.0, 6)
    weights = LossWeights(*lam, tau=float(rng.uniform(0.1, 1.0, None)))
    fn = cluster_total if term == "cluster_total" else contrastive_total
    p = {k: v.copy() for k, v in model.params().items()}

    def f(q):
        return fn(batch, AlignmentModel.from_weights(cfg, q), weights).total

    return p, f, fn(batch, model, weights).grads


def check_term(term, instances=20, seed=0, h=DEFAULT_STEP, tolerance=DEFAULT_TOLERANCE):
    rng = Rng(seed, TERMS.index(term))
    worst = 0.0
    for _ in range(instances):
        params, f, analytic = _instance(term, rng)
        numeric = finite_diff_grad(f, params, h)
        worst = max(worst, max_relative_error({k: analytic[k] for k in numeric}, numeric))
    return GradcheckResult(term, instances, worst, tolerance)


def run_all(instances=20, seed=0, h=DEFAULT_STEP, tolerance=DEFAULT_TOLERANCE, terms=TERMS):
    return [check_term(t, instances, seed, h, tolerance) for t in terms]


def format_table(results):
    lines = [f"{'term':<22}{'instances':>10}{'max_rel_err':>14}  status"]
    for r in results:
        lines.append(f"{r.term:<22}{r.instances:>10}{r.max_rel_error:>14.3e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
