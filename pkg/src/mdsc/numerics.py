"""Dense float64 numerics: products, cosine similarity, seeded RNG, Adam and
central finite differences.

Everything here works on plain ``numpy.ndarray`` objects in double precision.
The row-wise cosine helpers come with explicit backward passes; the loss
functions in :mod:`mdsc.objectives` are built from them.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVectorError, DimensionError, DivergenceError, ProbeError

NORM_EPS = 1e-12


def matmul(a, b):
    """Matrix product with shape checking.

    Raises:
        DimensionError: if ``a.shape[-1] != b.shape[0]``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def cosine(u, v):
    """Cosine similarity of two vectors, clamped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise DimensionError(f"cosine of vectors with lengths {u.size} and {v.size}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < NORM_EPS:
        raise DegenerateVectorError("first argument has near-zero norm", index=0)
    if nv < NORM_EPS:
        raise DegenerateVectorError("second argument has near-zero norm", index=1)
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def normalize_rows(x, what="row"):
    """Return ``(x / ||x||, norms)`` row-wise; rejects near-zero rows."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(norms < NORM_EPS)
    if bad.size:
        raise DegenerateVectorError(f"{what} {int(bad[0])} has near-zero norm", index=int(bad[0]))
    return x / norms[:, None], norms


def normalize_rows_backward(grad_unit, unit, norms):
    # d(x/|x|) = (I - x̂x̂ᵀ)/|x|
    radial = np.sum(grad_unit * unit, axis=1, keepdims=True)
    return (grad_unit - radial * unit) / norms[:, None]


def cosine_matrix(x, y, what=("row", "row")):
    """Pairwise cosine ``S[i, j] = cos(x_i, y_j)`` plus a cache for backprop.

    Unlike :func:`cosine` the result is not clamped, so that it stays
    differentiable; values exceed [-1, 1] only by rounding.
    """
    xu, xn = normalize_rows(x, what[0])
    yu, yn = normalize_rows(y, what[1])
    return xu @ yu.T, (xu, xn, yu, yn)


def cosine_matrix_backward(grad_s, cache):
    """Gradients of a scalar w.r.t. ``x`` and ``y`` given ``dL/dS``."""
    xu, xn, yu, yn = cache
    gx = normalize_rows_backward(grad_s @ yu, xu, xn)
    gy = normalize_rows_backward(grad_s.T @ xu, yu, yn)
    return gx, gy


class Rng:
    """Seeded random stream.

    Backed by numpy's PCG64 bit generator (O'Neill's permuted congruential
    generator, 128-bit state), whose raw output is specified and identical on
    every platform. Child streams are derived with ``SeedSequence`` so that
    independent consumers never share state.
    """

    def __init__(self, seed, *key):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, *self.key])
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *key):
        return Rng(self.seed, *self.key, *key)

    def uniform(self, low, high, size):
        return self._gen.uniform(low, high, size)

    def normal(self, size, scale=1.0):
        return self._gen.normal(0.0, scale, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size)

    def unit_vectors(self, n, dim):
        v = self._gen.normal(0.0, 1.0, (n, dim))
        return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("Adam betas must lie strictly between 0 and 1")
        if self.epsilon <= 0.0 or self.learning_rate <= 0.0:
            raise ValueError("Adam learning rate and epsilon must be positive")


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place on ``params``.

    ``params`` and ``grads`` are dicts of arrays keyed by tensor name. Only
    names present in ``grads`` are updated. Returns ``(params, state)``.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise DimensionError(f"gradient {name} has shape {g.shape}, parameter {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in tensor {name!r}", term=name)

    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        params[name] -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


def finite_diff_grad(f, params, h=1e-5):
    """Central-difference gradient of scalar ``f(params)``.

    ``params`` is a dict of float arrays; each coordinate is perturbed by
    ``±h`` on a private copy, so the caller's arrays are never modified.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    work = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    out = {}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(work)
            flat[i] = orig - h
            fm = f(work)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise ProbeError(f"non-finite value probing {name}[{i}]", name=name, index=i)
            gflat[i] = (fp - fm) / (2.0 * h)
        out[name] = g
    return out


def max_relative_error(analytic, numeric, floor=1e-10):
    """Worst per-tensor relative error ``max|a - n| / max(max|a|, max|n|, floor)``.

    Scaling by the tensor's largest entry keeps tiny coordinates, where the
    finite-difference rounding error dominates, from swamping the check.
    """
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        if a.size == 0:
            continue
        scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(n))), floor)
        worst = max(worst, float(np.max(np.abs(a - n))) / scale)
    return worst
