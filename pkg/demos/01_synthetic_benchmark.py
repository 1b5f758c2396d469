# Train the joint cluster model on a synthetic K=10 benchmark and report
# every style-consistency metric on a held-out fifth of the data.
#
#   python3 demos/01_synthetic_benchmark.py [epochs]

import sys
import time

import numpy as np

from mdsc.embedding_io import split
from mdsc.metrics import evaluate
from mdsc.synthgen import SyntheticSpec, generate, oracle_nearest_prototype
from mdsc.trainer import TrainConfig, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 200

# Ten styles, each a unit prototype in a 16-d latent space, mapped linearly
# into 32-d "motion" and 24-d "music" embeddings with a little noise.
spec = SyntheticSpec(K=10, latent_dim=16, c_M=32, c_A=24, n_per_class=100, noise_sigma=0.05, seed=0)
ds, gt = generate(spec)
print(f"{len(ds)} records, counts {ds.counts()}, styles {list(ds.styles.labels)}")

# How well could anyone do? The oracle knows the generating maps.
truth = np.array([ds.styles.index(r.style) for r in ds.records])
print(f"oracle nearest-prototype accuracy: {np.mean(oracle_nearest_prototype(ds, gt) == truth):.3f}")

train_ds, val = split(ds, 0.8, seed=0)
print(f"train {len(train_ds)} / held-out {len(val)} records")

t0 = time.perf_counter()
model, trace = train(train_ds, TrainConfig(epochs=epochs))
print(f"trained {epochs} epochs in {time.perf_counter() - t0:.1f}s; loss {trace.totals[0]:.3f} -> {trace.totals[-1]:.3f}")

# Term-by-term view of where the loss went.
for name in trace.terms[0]:
    print(f"  {name:<8} {trace.terms[0][name]:8.4f} -> {trace.terms[-1][name]:8.4f}")

print()
print(evaluate(model, val).summary())
