"""Reverse-mode automatic differentiation over small dense numpy arrays.

Every operation appends a node to a :class:`Tape`. Nodes are appended in
creation order, so the node list is already topologically sorted and the
backward pass is a single reverse sweep.

    tape = Tape()
    w = tape.leaf(np.array([2.0]))
    y = (w * 3.0 + 1.0).sum()
    tape.backward(y)
    w.grad  # array([3.])
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class TapeError(RuntimeError):
    pass


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (undo numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Var:
    __slots__ = ("tape", "value", "parents", "vjp", "grad", "index", "name")

    def __init__(self, tape: "Tape", value, parents=(), vjp: VJP | None = None, name: str = ""):
        self.tape = tape
        self.value = np.asarray(value, dtype=np.float64)
        self.parents: tuple[Var, ...] = tuple(parents)
        self.vjp = vjp
        self.grad: np.ndarray | None = None
        self.name = name
        self.index = tape._append(self)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(shape={self.value.shape}, name={self.name!r})"

    # arithmetic
    def _lift(self, other) -> "Var":
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise TapeError("operands live on different tapes")
            return other
        return self.tape.const(other)

    def __add__(self, other):
        other = self._lift(other)
        sa, sb = self.shape, other.shape
        return Var(self.tape, self.value + other.value, (self, other),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        sa, sb = self.shape, other.shape
        return Var(self.tape, self.value - other.value, (self, other),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")

    def __rsub__(self, other):
        return self._lift(other) - self

    def __neg__(self):
        return Var(self.tape, -self.value, (self,), lambda g: (-g,), "neg")

    def __mul__(self, other):
        other = self._lift(other)
        a, b = self.value, other.value
        return Var(self.tape, a * b, (self, other),
                   lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)), "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=np.float64))

    def __matmul__(self, other):
        return matmul(self, self._lift(other))

    def square(self) -> "Var":
        a = self.value
        return Var(self.tape, a * a, (self,), lambda g: (2.0 * a * g,), "square")

    def reciprocal(self) -> "Var":
        out = 1.0 / self.value
        return Var(self.tape, out, (self,), lambda g: (-g * out * out,), "reciprocal")

    def tanh(self) -> "Var":
        out = np.tanh(self.value)
        return Var(self.tape, out, (self,), lambda g: (g * (1.0 - out * out),), "tanh")

    def sigmoid(self) -> "Var":
        out = _sigmoid(self.value)
        return Var(self.tape, out, (self,), lambda g: (g * out * (1.0 - out),), "sigmoid")

    def exp(self) -> "Var":
        out = np.exp(self.value)
        return Var(self.tape, out, (self,), lambda g: (g * out,), "exp")

    def sum(self) -> "Var":
        shape = self.shape
        return Var(self.tape, self.value.sum(), (self,),
                   lambda g: (np.broadcast_to(g, shape).copy(),), "sum")

    def mean(self) -> "Var":
        n = self.value.size
        return self.sum() * (1.0 / n)

    def column(self, j: int) -> "Var":
        """Column ``j`` of a 2-D value, as a 1-D Var."""
        shape = self.shape

        def vjp(g):
            out = np.zeros(shape)
            out[:, j] = g
            return (out,)

        return Var(self.tape, self.value[:, j], (self,), vjp, "column")

    def reshape(self, *shape) -> "Var":
        old = self.shape
        return Var(self.tape, self.value.reshape(*shape), (self,),
                   lambda g: (g.reshape(old),), "reshape")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def matmul(a: Var, b: Var) -> Var:
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2:
        raise TapeError("matmul expects 2-D operands")
    if av.shape[1] != bv.shape[0]:
        raise TapeError(f"matmul shape mismatch {av.shape} @ {bv.shape}")
    return Var(a.tape, av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g), "matmul")


def transpose(a: Var) -> Var:
    return Var(a.tape, a.value.T, (a,), lambda g: (g.T,), "transpose")


class Tape:
    """Linear record of operations; node order is a valid topological order."""

    def __init__(self) -> None:
        self.nodes: list[Var] = []
        self._swept = False

    def _append(self, v: Var) -> int:
        self.nodes.append(v)
        return len(self.nodes) - 1

    def __len__(self) -> int:
        return len(self.nodes)

    def leaf(self, value, name: str = "") -> Var:
        return Var(self, np.array(value, dtype=np.float64), name=name)

    def const(self, value) -> Var:
        return Var(self, value, name="const")

    def custom(self, value, parents: Sequence[Var], vjp: VJP, name: str = "custom") -> Var:
        """Record a primitive whose vector-Jacobian product is supplied by the caller."""
        return Var(self, value, parents, vjp, name)

    def backward(self, output: Var, seed=None) -> None:
        """Accumulate d(output)/d(node) into ``node.grad`` for every node.

        ``seed`` defaults to ones (so a non-scalar output is summed).
        """
        if output.tape is not self:
            raise TapeError("output was not recorded on this tape")
        for v in self.nodes:
            v.grad = None
        g0 = np.ones_like(output.value) if seed is None else np.asarray(seed, dtype=np.float64)
        output.grad = np.array(g0, dtype=np.float64)
        for v in reversed(self.nodes[: output.index + 1]):
            if v.grad is None or v.vjp is None:
                continue
            for p, gp in zip(v.parents, v.vjp(v.grad)):
                if gp is None:
                    continue
                if p.grad is None:
                    p.grad = np.array(gp, dtype=np.float64)
                else:
                    p.grad = p.grad + gp
        self._swept = True

    @property
    def swept(self) -> bool:
        return self._swept

    def check_order(self) -> bool:
        """True when every node's parents were recorded before it."""
        return all(p.index < v.index for v in self.nodes for p in v.parents)
