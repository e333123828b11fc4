"""Dense tensors with reverse-mode differentiation, plus the optimizer bits.

Everything is float64. A Tape records primitive operations during a forward
pass; backward() replays them in reverse and accumulates gradients into the
participating ParamTensors.
"""

from __future__ import annotations

import math

import numpy as np


class ParamTensor:
    """A named parameter array paired with a gradient accumulator."""

    __slots__ = ("name", "value", "grad", "trainable")

    def __init__(self, name: str, value, trainable: bool = True):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(self.value)):
            raise ValueError(f"non-finite init for parameter {name!r}")
        self.grad = np.zeros_like(self.value)
        self.trainable = trainable

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"ParamTensor({self.name!r}, shape={self.value.shape})"


class Var:
    """A node on the tape: a value and the closure that back-propagates into
    its inputs."""

    __slots__ = ("value", "grad", "_bw")

    def __init__(self, value, bw=None):
        self.value = value
        self.grad = None
        self._bw = bw

    def _add_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g


class Tape:
    """Ordered record of primitive operations.

    Nodes are appended in execution order, so the list is topologically
    sorted by construction. Shape errors are raised at record time.
    """

    def __init__(self):
        self._nodes: list[Var] = []
        self._leaves: dict[int, Var] = {}

    def _push(self, v: Var) -> Var:
        self._nodes.append(v)
        return v

    # leaves ------------------------------------------------------------

    def param(self, p: ParamTensor) -> Var:
        """Leaf node for a parameter; memoized so that repeated uses share
        one node and their gradient contributions add up."""
        key = id(p)
        v = self._leaves.get(key)
        if v is None:
            def bw(g, p=p):
                if p.trainable:
                    p.grad += g
            v = self._push(Var(p.value, bw))
            self._leaves[key] = v
        return v

    def const(self, x) -> Var:
        return self._push(Var(np.asarray(x, dtype=np.float64)))

    # primitives ---------------------------------------------------------

    def matvec(self, w: Var, x: Var) -> Var:
        if w.value.ndim != 2 or x.value.ndim != 1 or w.value.shape[1] != x.value.shape[0]:
            raise ValueError(f"matvec shape mismatch: {w.value.shape} @ {x.value.shape}")
        out = Var(w.value @ x.value)

        def bw(g):
            w._add_grad(np.outer(g, x.value))
            x._add_grad(w.value.T @ g)
        out._bw = bw
        return self._push(out)

    def row(self, w: Var, i: int) -> Var:
        if w.value.ndim != 2:
            raise ValueError("row expects a matrix")
        out = Var(w.value[i])

        def bw(g):
            gw = np.zeros_like(w.value)
            gw[i] = g
            w._add_grad(gw)
        out._bw = bw
        return self._push(out)

    def add(self, a: Var, b: Var) -> Var:
        if a.value.shape != b.value.shape:
            raise ValueError(f"add shape mismatch: {a.value.shape} vs {b.value.shape}")
        out = Var(a.value + b.value)

        def bw(g):
            a._add_grad(g)
            b._add_grad(g)
        out._bw = bw
        return self._push(out)

    def addn(self, vs: list[Var]) -> Var:
        """Sum of any number of same-shaped vars; empty sum is scalar zero."""
        if not vs:
            return self.const(0.0)
        if len(vs) == 1:
            return vs[0]
        shape = vs[0].value.shape
        for v in vs:
            if v.value.shape != shape:
                raise ValueError("addn shape mismatch")
        out = Var(sum(v.value for v in vs))

        def bw(g):
            for v in vs:
                v._add_grad(g)
        out._bw = bw
        return self._push(out)

    def sub(self, a: Var, b: Var) -> Var:
        if a.value.shape != b.value.shape:
            raise ValueError(f"sub shape mismatch: {a.value.shape} vs {b.value.shape}")
        out = Var(a.value - b.value)

        def bw(g):
            a._add_grad(g)
            b._add_grad(-g)
        out._bw = bw
        return self._push(out)

    def scale(self, a: Var, c: float) -> Var:
        out = Var(a.value * c)

        def bw(g):
            a._add_grad(g * c)
        out._bw = bw
        return self._push(out)

    def concat(self, vs: list[Var]) -> Var:
        for v in vs:
            if v.value.ndim != 1:
                raise ValueError("concat expects vectors")
        sizes = [v.value.shape[0] for v in vs]
        out = Var(np.concatenate([v.value for v in vs]))

        def bw(g):
            o = 0
            for v, n in zip(vs, sizes):
                v._add_grad(g[o:o + n])
                o += n
        out._bw = bw
        return self._push(out)

    def tanh(self, x: Var) -> Var:
        y = np.tanh(x.value)
        out = Var(y)

        def bw(g):
            x._add_grad(g * (1.0 - y * y))
        out._bw = bw
        return self._push(out)

    def logistic(self, x: Var) -> Var:
        y = 1.0 / (1.0 + np.exp(-x.value))
        out = Var(y)

        def bw(g):
            x._add_grad(g * y * (1.0 - y))
        out._bw = bw
        return self._push(out)

    def mul(self, a: Var, b: Var) -> Var:
        if a.value.shape != b.value.shape:
            raise ValueError(f"mul shape mismatch: {a.value.shape} vs {b.value.shape}")
        out = Var(a.value * b.value)

        def bw(g):
            a._add_grad(g * b.value)
            b._add_grad(g * a.value)
        out._bw = bw
        return self._push(out)

    def inner(self, a: Var, b: Var) -> Var:
        if a.value.shape != b.value.shape or a.value.ndim != 1:
            raise ValueError(f"inner shape mismatch: {a.value.shape} vs {b.value.shape}")
        out = Var(np.asarray(a.value @ b.value))

        def bw(g):
            a._add_grad(g * b.value)
            b._add_grad(g * a.value)
        out._bw = bw
        return self._push(out)

    def vsum(self, x: Var) -> Var:
        out = Var(np.asarray(x.value.sum()))

        def bw(g):
            x._add_grad(np.full_like(x.value, float(g)))
        out._bw = bw
        return self._push(out)

    # ---------------------------------------------------------------------

    def backward(self, seed: Var):
        """Propagate d(seed)/d(everything) into ParamTensor.grad buffers.

        seed must be a scalar output of this tape.
        """
        if seed.value.shape != ():
            raise ValueError("backward seed must be a scalar")
        seed._add_grad(np.asarray(1.0))
        for node in reversed(self._nodes):
            if node.grad is not None and node._bw is not None:
                node._bw(node.grad)

    def __len__(self):
        return len(self._nodes)


def backward(tape: Tape, seed: Var):
    tape.backward(seed)


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform init over [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]."""
    if rows < 1 or cols < 1:
        raise ValueError("glorot_init needs rows, cols >= 1")
    bound = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def glorot_bound(rows: int, cols: int) -> float:
    return math.sqrt(6.0 / (rows + cols))


class AdamState:
    """First/second moment accumulators and the step counter."""

    def __init__(self, params: list[ParamTensor]):
        self.t = 0
        self.m = {p.name: np.zeros_like(p.value) for p in params}
        self.v = {p.name: np.zeros_like(p.value) for p in params}


def adam_step(params: list[ParamTensor], state: AdamState, eta: float,
              beta1: float = 0.9, beta2: float = 0.9, eps: float = 1e-8):
    """One Adam update from the gradients currently stored on the params."""
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p in params:
        if not p.trainable:
            continue
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient for parameter {p.name!r}")
        m = state.m[p.name]
        v = state.v[p.name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.value -= eta * (m / bc1) / (np.sqrt(v / bc2) + eps)


def clip_global_norm(grads: list[np.ndarray], max_norm: float = 1.0) -> float:
    """Scale all gradients in place so the global l2 norm is <= max_norm.

    Returns the pre-clip norm.
    """
    total = 0.0
    for g in grads:
        total += float(np.sum(g * g))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0.0:
        s = max_norm / norm
        for g in grads:
            g *= s
    return norm


def finite_diff_check(f, params: list[ParamTensor], h: float = 1e-5) -> float:
    """Compare the analytic gradients stored on `params` against central
    finite differences of the scalar function f().

    Relative error uses a max(1, |analytic|) denominator; returns the max
    over all coordinates.
    """
    worst = 0.0
    for p in params:
        if not p.trainable:
            continue
        flat = p.value.ravel()
        gflat = p.grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            err = abs(gflat[i] - num) / max(1.0, abs(gflat[i]))
            if err > worst:
                worst = err
    return worst
