"""Small dense networks with explicit reverse-mode gradients.

Everything is float64 numpy: deep-learning frameworks are overkill for three
hidden layers, and doubles keep gradient checks and checkpoint round-trips
exact.  Hidden layers are ReLU, the output layer is linear; heads apply their
own transforms.
"""

from __future__ import annotations

import struct
from typing import List, Optional, Sequence, Tuple

import numpy as np

HEADER_WORD = struct.Struct("<I")


class Mlp:
    """Fully connected net.  Weights are (fan_in, fan_out); forward with
    ``record=True`` keeps the activations needed by ``backward``."""

    def __init__(self, sizes: Sequence[int], rng: Optional[np.random.Generator] = None):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"bad layer sizes {sizes}")
        self.sizes = sizes
        rng = rng if rng is not None else np.random.default_rng()
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))
        self._tape: Optional[List[np.ndarray]] = None

    # -- forward / backward --------------------------------------------------

    def forward(self, x: np.ndarray, record: bool = False) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[1]} != {self.sizes[0]}")
        acts = [x]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w + b
            if i < len(self.weights) - 1:
                z = np.maximum(z, 0.0)
            acts.append(z)
        if record:
            self._tape = acts
        return acts[-1]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)

    def backward(self, grad_out: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        """Gradients of sum(grad_out * output) w.r.t. parameters and input.

        Consumes the tape of the last recorded forward.  Returns (grads, dx)
        where grads interleaves [dW1, db1, dW2, db2, ...] matching params().
        """
        if self._tape is None:
            raise RuntimeError("backward() without a recorded forward pass")
        acts = self._tape
        self._tape = None
        delta = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
        grads: List[np.ndarray] = []
        for i in range(len(self.weights) - 1, -1, -1):
            a_prev = acts[i]
            if i < len(self.weights) - 1:
                delta = delta * (acts[i + 1] > 0.0)  # ReLU mask
            grads.append(delta.sum(axis=0))          # db
            grads.append(a_prev.T @ delta)            # dW
            delta = delta @ self.weights[i].T
        grads.reverse()
        return grads, delta

    # -- parameter access ------------------------------------------------------

    def params(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "Mlp":
        twin = Mlp.__new__(Mlp)
        twin.sizes = list(self.sizes)
        twin.weights = [w.copy() for w in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        twin._tape = None
        return twin

    # -- serialization ---------------------------------------------------------

    def save_bytes(self) -> bytes:
        """Layer sizes, then per layer the row-major weight matrix and the
        bias vector, all little-endian float64."""
        chunks = [HEADER_WORD.pack(len(self.sizes))]
        for s in self.sizes:
            chunks.append(HEADER_WORD.pack(s))
        for w, b in zip(self.weights, self.biases):
            chunks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
            chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
        return b"".join(chunks)

    @classmethod
    def load_bytes(cls, blob: bytes) -> "Mlp":
        if len(blob) < HEADER_WORD.size:
            raise ValueError("weight stream too short for header")
        (count,) = HEADER_WORD.unpack_from(blob, 0)
        if not 2 <= count <= 64:
            raise ValueError(f"implausible layer count {count}")
        need = HEADER_WORD.size * (1 + count)
        if len(blob) < need:
            raise ValueError("weight stream header truncated")
        sizes = [HEADER_WORD.unpack_from(blob, HEADER_WORD.size * (1 + i))[0]
                 for i in range(count)]
        if any(s < 1 for s in sizes):
            raise ValueError(f"bad layer sizes {sizes}")
        n_params = sum(fi * fo + fo for fi, fo in zip(sizes[:-1], sizes[1:]))
        if len(blob) != need + 8 * n_params:
            raise ValueError(f"weight stream length {len(blob)} does not match sizes {sizes}")
        net = cls.__new__(cls)
        net.sizes = sizes
        net.weights, net.biases = [], []
        offset = need
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = np.frombuffer(blob, dtype="<f8", count=fan_in * fan_out, offset=offset)
            offset += 8 * fan_in * fan_out
            b = np.frombuffer(blob, dtype="<f8", count=fan_out, offset=offset)
            offset += 8 * fan_out
            net.weights.append(w.reshape(fan_in, fan_out).copy())
            net.biases.append(b.copy())
        net._tape = None
        return net


def save_weights(net: Mlp) -> bytes:
    return net.save_bytes()


def load_weights(blob: bytes) -> Mlp:
    return Mlp.load_bytes(blob)


class Adam:
    """Bias-corrected Adam; moments mirror the parameter list it was built for."""

    def __init__(self, params: Sequence[np.ndarray], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        if len(params) != len(self.m) or len(grads) != len(params):
            raise ValueError("parameter/gradient count mismatch")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def soft_update(targets: Sequence[np.ndarray], sources: Sequence[np.ndarray],
                tau: float) -> None:
    """Exponential moving average: target <- tau * source + (1 - tau) * target."""
    if len(targets) != len(sources):
        raise ValueError("parameter count mismatch")
    for t, s in zip(targets, sources):
        if t.shape != s.shape:
            raise ValueError(f"shape mismatch {t.shape} vs {s.shape}")
        t *= 1.0 - tau
        t += tau * s
