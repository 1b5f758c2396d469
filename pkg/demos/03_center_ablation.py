# Learnable centers versus centers frozen at the per-style mean of the
# initial projections.

from mdsc.embedding_io import split
from mdsc.metrics import evaluate
from mdsc.synthgen import SyntheticSpec, generate
from mdsc.trainer import TrainConfig, train

ds, _ = generate(SyntheticSpec())
train_ds, val = split(ds, 0.8, seed=0)

for learnable in (False, True):
    model, _ = train(train_ds, TrainConfig(learnable_centers=learnable))
    r = evaluate(model, val).to_json()
    tag = "learnable" if learnable else "frozen   "
    print(f"{tag}  acc_m {r['motion']['acc']:.3f}  acc_a {r['music']['acc']:.3f}  "
          f"simi {r['simi']:.3f}  I2I {r['motion']['i2i']:.3f}/{r['music']['i2i']:.3f}")
