# Pretrain the motion autoencoder on toy pose windows, turn its codes into a
# motion-only dataset and look at the codes in 2-D.

import numpy as np

from mdsc.embedding_io import EmbeddingDataset, MOTION, StyleVocabulary
from mdsc.encoder_stub import AutoencoderConfig, encode_windows, pretrain_autoencoder
from mdsc.metrics import project_2d, projection_csv

rng = np.random.default_rng(0)
T, c = 16, 6

# Two "styles": slow sinusoids and fast ones, each joint with a random phase.
t = np.linspace(0, 1, T)[:, None]
windows, styles = [], []
for i in range(60):
    freq = 1.0 if i % 2 == 0 else 4.0
    phase = rng.uniform(0, 2 * np.pi, c)
    windows.append(np.sin(2 * np.pi * freq * t + phase) + 0.05 * rng.normal(size=(T, c)))
    styles.append("slow" if i % 2 == 0 else "fast")
windows = np.stack(windows)

cfg = AutoencoderConfig(T=T, c=c, c_M=8, epochs=150, batch_size=16, learning_rate=3e-3)
model, losses = pretrain_autoencoder(windows, cfg, seed=0)
print(f"reconstruction MSE {losses[0]:.4f} -> {losses[-1]:.4f} (data variance {np.var(windows):.4f})")

records = encode_windows(model, windows, styles=styles)
ds = EmbeddingDataset(records, StyleVocabulary(("slow", "fast")), cfg.c_M, 1)
ids, Z, y = ds.matrix(MOTION)

coords = project_2d(Z, seed=0)
for k, label in enumerate(ds.styles):
    print(f"{label:<5} mean PCA position {coords[y == k].mean(axis=0).round(3)}")

# The CSV is ready for any plotting tool.
print(projection_csv(ids, [styles[i] for i in range(len(ids))], coords).splitlines()[:4])
