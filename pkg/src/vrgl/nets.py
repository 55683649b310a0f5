"""Tiny differentiable MLPs with manual backprop, verified by finite differences."""

from __future__ import annotations

import json

import numpy as np


class NetError(ValueError):
    pass


class Mlp:
    """Fully connected net: tanh hidden layers, linear output.

    Weights use He-style scaled Gaussian init from the caller's seeded RNG,
    so identically seeded nets are bitwise identical.
    """

    def __init__(self, sizes: list[int], rng: np.random.Generator):
        if len(sizes) < 2:
            raise NetError("need at least input and output sizes")
        self.sizes = list(sizes)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(np.asarray(x, dtype=np.float64))
        return y

    def forward_cached(self, x: np.ndarray):
        """Returns (output, per-layer activations) for use by backward."""
        squeeze = x.ndim == 1
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if h.shape[1] != self.in_dim:
            raise NetError(f"input dim {h.shape[1]} != {self.in_dim}")
        acts = [h]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W.T + b
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        return (h[0] if squeeze else h), acts

    def backward(self, acts, grad_out: np.ndarray):
        """Chain-rule pass using cached activations.

        Returns ([(dW, db), ...] outermost-first, grad wrt the input batch).
        """
        g = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
        grads = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            if i < len(self.weights) - 1:
                g = g * (1.0 - acts[i + 1] ** 2)  # through tanh
            grads[i] = (g.T @ acts[i], g.sum(axis=0))
            g = g @ self.weights[i]
        return grads, g

    # -- flat parameter view ------------------------------------------------
    def get_flat(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights] + [b for b in self.biases])

    def set_flat(self, vec: np.ndarray) -> None:
        i = 0
        for w in self.weights:
            w[...] = vec[i : i + w.size].reshape(w.shape)
            i += w.size
        for b in self.biases:
            b[...] = vec[i : i + b.size]
            i += b.size
        if i != vec.size:
            raise NetError("flat vector size mismatch")

    @staticmethod
    def grads_flat(grads) -> np.ndarray:
        return np.concatenate([dw.ravel() for dw, _ in grads] + [db for _, db in grads])

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.sizes = list(self.sizes)
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def to_dict(self) -> dict:
        return {"kind": "mlp", "sizes": self.sizes, "params": self.get_flat().tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        net = cls(d["sizes"], np.random.default_rng(0))
        net.set_flat(np.array(d["params"]))
        return net


class DuelingMlp:
    """Shared trunk with value and advantage streams.

    Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a'), which leaves Q invariant to
    constant shifts of the advantage stream.
    """

    def __init__(self, in_dim: int, hidden: list[int], n_actions: int, rng: np.random.Generator):
        if not hidden:
            raise NetError("dueling net needs at least one hidden layer")
        self.trunk = Mlp([in_dim] + list(hidden), rng)
        self.v_head = Mlp([hidden[-1], 1], rng)
        self.a_head = Mlp([hidden[-1], n_actions], rng)
        self.n_actions = n_actions

    @property
    def in_dim(self) -> int:
        return self.trunk.in_dim

    @property
    def out_dim(self) -> int:
        return self.n_actions

    def forward(self, x: np.ndarray) -> np.ndarray:
        q, _ = self.forward_cached(x)
        return q

    def forward_cached(self, x: np.ndarray):
        squeeze = np.asarray(x).ndim == 1
        xb = np.atleast_2d(np.asarray(x, dtype=np.float64))
        # trunk output passes through a final tanh so both heads see bounded features
        h_lin, trunk_acts = self.trunk.forward_cached(xb)
        h = np.tanh(h_lin)
        v, v_acts = self.v_head.forward_cached(h)
        a, a_acts = self.a_head.forward_cached(h)
        q = v + a - a.mean(axis=1, keepdims=True)
        cache = (trunk_acts, h_lin, h, v_acts, a_acts)
        return (q[0] if squeeze else q), cache

    def backward(self, cache, grad_q: np.ndarray):
        trunk_acts, h_lin, h, v_acts, a_acts = cache
        g = np.atleast_2d(np.asarray(grad_q, dtype=np.float64))
        gv = g.sum(axis=1, keepdims=True)
        ga = g - g.mean(axis=1, keepdims=True)
        v_grads, gh_v = self.v_head.backward(v_acts, gv)
        a_grads, gh_a = self.a_head.backward(a_acts, ga)
        gh = (gh_v + gh_a) * (1.0 - h**2)
        trunk_grads, gx = self.trunk.backward(trunk_acts, gh)
        return (trunk_grads, v_grads, a_grads), gx

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.trunk.get_flat(), self.v_head.get_flat(), self.a_head.get_flat()])

    def set_flat(self, vec: np.ndarray) -> None:
        nt = self.trunk.get_flat().size
        nv = self.v_head.get_flat().size
        self.trunk.set_flat(vec[:nt])
        self.v_head.set_flat(vec[nt : nt + nv])
        self.a_head.set_flat(vec[nt + nv :])

    @staticmethod
    def grads_flat(grads) -> np.ndarray:
        trunk_grads, v_grads, a_grads = grads
        return np.concatenate(
            [Mlp.grads_flat(trunk_grads), Mlp.grads_flat(v_grads), Mlp.grads_flat(a_grads)]
        )

    def copy(self) -> "DuelingMlp":
        clone = DuelingMlp.__new__(DuelingMlp)
        clone.trunk = self.trunk.copy()
        clone.v_head = self.v_head.copy()
        clone.a_head = self.a_head.copy()
        clone.n_actions = self.n_actions
        return clone

    def to_dict(self) -> dict:
        return {
            "kind": "dueling",
            "trunk": self.trunk.to_dict(),
            "v_head": self.v_head.to_dict(),
            "a_head": self.a_head.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DuelingMlp":
        net = cls.__new__(cls)
        net.trunk = Mlp.from_dict(d["trunk"])
        net.v_head = Mlp.from_dict(d["v_head"])
        net.a_head = Mlp.from_dict(d["a_head"])
        net.n_actions = net.a_head.out_dim
        return net


def mlp_forward(net, x: np.ndarray) -> np.ndarray:
    return net.forward(x)


def mlp_backward(net, x: np.ndarray, grad_out: np.ndarray):
    """Parameter gradients (and input gradient) for one upstream gradient."""
    _, cache = net.forward_cached(x)
    return net.backward(cache, grad_out)


class Adam:
    """Standard Adam over a flat parameter vector."""

    def __init__(self, n_params: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1 - self.beta2) * grads**2
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def soft_update(target, online, tau: float) -> None:
    target.set_flat((1.0 - tau) * target.get_flat() + tau * online.get_flat())


def save_checkpoint(net, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(net.to_dict(), f)


def load_checkpoint(path):
    with open(path, encoding="utf-8") as f:
        d = json.load(f)
    if d.get("kind") == "dueling":
        return DuelingMlp.from_dict(d)
    return Mlp.from_dict(d)


def finite_difference_check(net, x: np.ndarray, upstream: np.ndarray, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    The scalar objective is sum(upstream * net(x)), whose analytic gradient
    is exactly the backward pass with `upstream` as the output gradient.
    """
    grads, _ = mlp_backward(net, x, upstream)
    analytic = type(net).grads_flat(grads)
    theta = net.get_flat()
    numeric = np.zeros_like(theta)
    for i in range(theta.size):
        bump = theta.copy()
        bump[i] = theta[i] + h
        net.set_flat(bump)
        up = np.sum(upstream * net.forward(x))
        bump[i] = theta[i] - h
        net.set_flat(bump)
        down = np.sum(upstream * net.forward(x))
        numeric[i] = (up - down) / (2 * h)
    net.set_flat(theta)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
