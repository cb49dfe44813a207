"""Minimal float64 neural layers with explicit backprop.

Layers register their parameters in a ParamStore under dotted names and
accumulate gradients into matching buffers.  Forward passes return caches that
backward passes consume.  Everything is plain numpy; activations are tanh so
losses stay smooth for finite-difference checks.  Parameter arrays are only
ever mutated in place, which keeps layer views valid after checkpoint loads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ParamStore:
    """Named float64 parameter and gradient arrays."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        arr = np.array(value, dtype=np.float64)
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        return arr

    def names(self) -> list[str]:
        return sorted(self.params)

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())


def xavier(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    return rng.standard_normal((d_in, d_out)) / np.sqrt(d_in)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_vjp(y: np.ndarray, dy: np.ndarray, axis: int = -1) -> np.ndarray:
    """Gradient through softmax given its output y and upstream dy."""
    return y * (dy - np.sum(dy * y, axis=axis, keepdims=True))


def sinusoid_positions(n: int, dim: int) -> np.ndarray:
    """Fixed sinusoidal position table, shape (n, dim)."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    i = np.arange(dim // 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * i / dim)
    out = np.zeros((n, dim))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles[:, : dim - dim // 2])
    return out


class Linear:
    """y = x @ w + b over rows of x."""

    def __init__(self, store, name, d_in, d_out, rng=None, zero_init=False):
        self.store = store
        self.name = name
        w = np.zeros((d_in, d_out)) if zero_init else xavier(rng, d_in, d_out)
        store.add(name + ".w", w)
        store.add(name + ".b", np.zeros(d_out))

    @property
    def w(self) -> np.ndarray:
        return self.store.params[self.name + ".w"]

    @property
    def b(self) -> np.ndarray:
        return self.store.params[self.name + ".b"]

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x @ self.w + self.b

    def backward(self, x: np.ndarray, dy: np.ndarray) -> np.ndarray:
        self.store.grads[self.name + ".w"] += x.T @ dy
        self.store.grads[self.name + ".b"] += dy.sum(axis=0)
        return dy @ self.w.T


class MultiHeadAttention:
    """Scaled dot-product attention; query and key/value inputs may differ."""

    def __init__(self, store, name, dim, n_heads, rng, zero_out_proj=False):
        if dim % n_heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {n_heads}")
        self.n_heads = n_heads
        self.d_head = dim // n_heads
        self.dim = dim
        self.wq = Linear(store, name + ".wq", dim, dim, rng)
        self.wk = Linear(store, name + ".wk", dim, dim, rng)
        self.wv = Linear(store, name + ".wv", dim, dim, rng)
        self.wo = Linear(store, name + ".wo", dim, dim, rng, zero_init=zero_out_proj)

    def _split(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        return x.reshape(n, self.n_heads, self.d_head).transpose(1, 0, 2)

    def _merge(self, xh: np.ndarray) -> np.ndarray:
        return xh.transpose(1, 0, 2).reshape(xh.shape[1], self.dim)

    def forward(self, q_in: np.ndarray, kv_in: np.ndarray):
        qh = self._split(self.wq.forward(q_in))
        kh = self._split(self.wk.forward(kv_in))
        vh = self._split(self.wv.forward(kv_in))
        att = softmax(qh @ kh.transpose(0, 2, 1) / np.sqrt(self.d_head))
        ctx = self._merge(att @ vh)
        out = self.wo.forward(ctx)
        cache = (q_in, kv_in, qh, kh, vh, att, ctx)
        return out, cache

    def backward(self, cache, dout: np.ndarray):
        q_in, kv_in, qh, kh, vh, att, ctx = cache
        dctx_h = self._split(self.wo.backward(ctx, dout))
        datt = dctx_h @ vh.transpose(0, 2, 1)
        dvh = att.transpose(0, 2, 1) @ dctx_h
        dscores = softmax_vjp(att, datt) / np.sqrt(self.d_head)
        dqh = dscores @ kh
        dkh = dscores.transpose(0, 2, 1) @ qh
        dq_in = self.wq.backward(q_in, self._merge(dqh))
        dkv_in = self.wk.backward(kv_in, self._merge(dkh))
        dkv_in = dkv_in + self.wv.backward(kv_in, self._merge(dvh))
        return dq_in, dkv_in


class FeedForward:
    """Two linear layers around tanh."""

    def __init__(self, store, name, dim, hidden, rng):
        self.lin1 = Linear(store, name + ".lin1", dim, hidden, rng)
        self.lin2 = Linear(store, name + ".lin2", hidden, dim, rng)

    def forward(self, x: np.ndarray):
        a = np.tanh(self.lin1.forward(x))
        return self.lin2.forward(a), (x, a)

    def backward(self, cache, dy: np.ndarray) -> np.ndarray:
        x, a = cache
        da = self.lin2.backward(a, dy)
        return self.lin1.backward(x, da * (1.0 - a * a))


def maxpool_rows(x: np.ndarray):
    """Columnwise max over rows; returns (pooled vector, argmax rows)."""
    idx = np.argmax(x, axis=0)
    return x[idx, np.arange(x.shape[1])], idx


def maxpool_rows_vjp(idx: np.ndarray, n_rows: int, dvec: np.ndarray) -> np.ndarray:
    dx = np.zeros((n_rows, dvec.shape[0]))
    dx[idx, np.arange(dvec.shape[0])] = dvec
    return dx


class Adam:
    """Adam over every parameter in the store, updates applied in place."""

    def __init__(self, store: ParamStore, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in store.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in store.params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name in self.store.names():
            g = self.store.grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            self.store.params[name] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class GradCheckReport:
    max_rel_error: float
    group_errors: dict[str, float]
    worst_group: str
    n_checked: int

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def param_group(name: str) -> str:
    return name.split(".", 1)[0]


def finite_difference_check(
    store: ParamStore,
    loss_fn,
    grad_fn,
    eps: float = 1e-5,
    param_filter=None,
) -> GradCheckReport:
    """Compare analytic gradients with central differences for every entry.

    loss_fn() returns the scalar loss; grad_fn() populates store.grads for the
    same loss.  A central difference of a loss of magnitude L carries roundoff
    of order L*eps_mach/eps, so the relative-error denominator is floored at
    1e-6 * max(1, |L|): entries whose true gradient sits at or below the
    achievable difference precision are measured against that floor instead of
    their own (noise-dominated) magnitude.
    """
    store.zero_grads()
    grad_fn()
    analytic = {k: v.copy() for k, v in store.grads.items()}
    floor = 1e-6 * max(1.0, abs(loss_fn()))
    group_errors: dict[str, float] = {}
    n_checked = 0
    for name in store.names():
        if param_filter is not None and not param_filter(name):
            continue
        p = store.params[name]
        flat = p.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_fn()
            flat[i] = orig - eps
            lm = loss_fn()
            flat[i] = orig
            num = (lp - lm) / (2 * eps)
            rel = abs(a_flat[i] - num) / max(abs(a_flat[i]) + abs(num), floor)
            g = param_group(name)
            group_errors[g] = max(group_errors.get(g, 0.0), rel)
            n_checked += 1
    if not group_errors:
        raise ValueError("no parameters selected for checking")
    worst = max(group_errors, key=lambda g: group_errors[g])
    return GradCheckReport(
        max_rel_error=group_errors[worst],
        group_errors=group_errors,
        worst_group=worst,
        n_checked=n_checked,
    )
