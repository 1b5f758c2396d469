"""Two-layer perceptron with a hand-written backward pass."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

ACTIVATIONS = ("relu", "linear")


@dataclass
class MlpHead:
    """``y = act(x @ W1 + b1) @ W2 + b2`` with row-vector inputs.

    Weights are stored input-major (``W1`` is ``c_in x hidden``) so a batch of
    row embeddings is projected with two matrix products.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64).reshape(-1)
        self.W2 = np.asarray(self.W2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64).reshape(-1)
        self.validate()

    @classmethod
    def init(cls, c_in, c_out, rng, hidden=None, activation="relu"):
        """Fan-in scaled uniform init, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
        hidden = max(c_in, c_out) if hidden is None else hidden
        if min(c_in, c_out, hidden) < 1:
            raise DimensionError(f"invalid MLP dims {c_in} -> {hidden} -> {c_out}")
        r1 = 1.0 / np.sqrt(c_in)
        r2 = 1.0 / np.sqrt(hidden)
        return cls(
            W1=rng.uniform(-r1, r1, (c_in, hidden)),
            b1=rng.uniform(-r1, r1, hidden),
            W2=rng.uniform(-r2, r2, (hidden, c_out)),
            b2=rng.uniform(-r2, r2, c_out),
            activation=activation,
        )

    def validate(self):
        if self.activation not in ACTIVATIONS:
            raise DimensionError(f"unknown activation {self.activation!r}")
        if self.W1.ndim != 2 or self.W2.ndim != 2:
            raise DimensionError("MLP weights must be matrices")
        h = self.W1.shape[1]
        if self.b1.shape != (h,) or self.W2.shape[0] != h or self.b2.shape != (self.W2.shape[1],):
            raise DimensionError(
                f"inconsistent MLP shapes W1{self.W1.shape} b1{self.b1.shape} "
                f"W2{self.W2.shape} b2{self.b2.shape}"
            )
        for name in ("W1", "b1", "W2", "b2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DimensionError(f"MLP tensor {name} contains non-finite values")

    @property
    def c_in(self):
        return self.W1.shape[0]

    @property
    def c_out(self):
        return self.W2.shape[1]

    @property
    def hidden(self):
        return self.W1.shape[1]

    def params(self):
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def forward(self, x):
        """Project rows of ``x``; returns ``(y, cache)``."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.c_in:
            raise DimensionError(f"MLP expects (n, {self.c_in}) input, got {x.shape}")
        pre = x @ self.W1 + self.b1
        hid = np.maximum(pre, 0.0) if self.activation == "relu" else pre
        return hid @ self.W2 + self.b2, (x, pre, hid)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, grad_y, cache):
        """Returns ``(param_grads, grad_x)`` for upstream gradient ``grad_y``."""
        x, pre, hid = cache
        grads = {"W2": hid.T @ grad_y, "b2": grad_y.sum(axis=0)}
        grad_hid = grad_y @ self.W2.T
        grad_pre = grad_hid * (pre > 0.0) if self.activation == "relu" else grad_hid
        grads["W1"] = x.T @ grad_pre
        grads["b1"] = grad_pre.sum(axis=0)
        return grads, grad_pre @ self.W1.T
