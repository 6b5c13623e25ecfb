"""Fully connected scalar-output networks on top of the tape.

Parameters live in one flat float64 vector (``net.theta``); ``weights[l]``
(shape ``(out, in)``) and ``biases[l]`` are views into it, laid out layer by
layer as row-major weights followed by the bias. This is also the order of
the ``weights``/``biases`` lists in the checkpoint file.

Two evaluation routes exist on purpose:

* :func:`forward` composes the network from primitive tape ops (matmul,
  add, tanh). It is the readable reference used for ``grad_params`` and
  ``grad_input``.
* :func:`apply` records the whole network as one fused tape primitive backed
  by :mod:`pcmnn.kernels`, optionally carrying the input derivative along
  (forward mode) so the derivative itself stays differentiable in the
  parameters. Training uses this route.

Checkpoint layout (JSON, ``format = "pcmnn-mlp"``, ``version = 1``)::

    {"format": "pcmnn-mlp", "version": 1,
     "layer_sizes": [n_in, h1, ..., 1],
     "activation": "tanh",
     "output_map": {"kind": "identity", "offset": o, "scale": s}
                 | {"kind": "bounded", "lo": lo, "hi": hi},
     "weights": [[row-major floats of layer 0], ...],
     "biases": [[floats of layer 0], ...]}

Floats are written with Python's shortest round-trip repr, so a
save/load cycle is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import kernels
from .tape import Tape, TapeError, Var, _sigmoid, matmul, transpose

CHECKPOINT_FORMAT = "pcmnn-mlp"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class OutputMap:
    """Map applied to the raw last-layer output.

    ``identity``: ``offset + scale * raw``. ``bounded``:
    ``lo + (hi - lo) * sigmoid(raw)``, so outputs never leave ``[lo, hi]``.
    """

    kind: str = "identity"
    offset: float = 0.0
    scale: float = 1.0
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("identity", "bounded"):
            raise ValueError(f"unknown output map {self.kind!r}")
        if self.kind == "bounded" and not self.lo < self.hi:
            raise ValueError("bounded output map needs lo < hi")
        if self.kind == "identity" and self.scale == 0.0:
            raise ValueError("identity output map needs a nonzero scale")

    @classmethod
    def bounded(cls, lo: float, hi: float) -> "OutputMap":
        return cls(kind="bounded", lo=float(lo), hi=float(hi))

    def numpy(self, raw: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return self.offset + self.scale * raw
        return self.lo + (self.hi - self.lo) * _sigmoid(raw)

    def derivative(self, raw: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return np.full_like(raw, self.scale)
        s = _sigmoid(raw)
        return (self.hi - self.lo) * s * (1.0 - s)

    def on_tape(self, raw: Var) -> Var:
        if self.kind == "identity":
            if self.scale == 1.0 and self.offset == 0.0:
                return raw
            return raw * self.scale + self.offset
        return raw.sigmoid() * (self.hi - self.lo) + self.lo

    def to_dict(self) -> dict:
        if self.kind == "identity":
            return {"kind": "identity", "offset": self.offset, "scale": self.scale}
        return {"kind": "bounded", "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict) -> "OutputMap":
        if d["kind"] == "identity":
            return cls(kind="identity", offset=float(d["offset"]), scale=float(d["scale"]))
        if d["kind"] == "bounded":
            return cls.bounded(d["lo"], d["hi"])
        raise ValueError(f"unknown output map {d['kind']!r}")


def _param_count(layer_sizes) -> int:
    return sum(o * i + o for i, o in zip(layer_sizes[:-1], layer_sizes[1:]))


@dataclass
class MlpNetwork:
    layer_sizes: tuple[int, ...]
    theta: np.ndarray
    output_map: OutputMap = field(default_factory=OutputMap)
    activation: str = "tanh"

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError(f"bad layer sizes {self.layer_sizes}")
        if self.activation != "tanh":
            # the ODE residual differentiates through the activation: must be C1
            raise ValueError("only the tanh hidden activation is supported")
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if self.theta.shape != (_param_count(self.layer_sizes),):
            raise ValueError(
                f"theta has {self.theta.size} entries, layers need {_param_count(self.layer_sizes)}"
            )
        self._bind_views()

    def _bind_views(self) -> None:
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        pos = 0
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            self.weights.append(self.theta[pos:pos + n_in * n_out].reshape(n_out, n_in))
            pos += n_in * n_out
            self.biases.append(self.theta[pos:pos + n_out])
            pos += n_out

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_params(self) -> int:
        return self.theta.size

    def set_theta(self, theta: np.ndarray) -> None:
        self.theta[...] = theta

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(self.layer_sizes, self.theta.copy(), self.output_map, self.activation)

    def __call__(self, X) -> np.ndarray:
        """Plain numpy evaluation (no tape). ``X`` is ``(n, n_in)`` or ``(n_in,)``."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X2 = _as_batch(X, self.n_inputs)
        raw, _, _ = kernels.mlp_forward(self.weights, self.biases, X2)
        out = self.output_map.numpy(raw[:, 0])
        return out[0] if single else out


def _as_batch(X: np.ndarray, n_in: int) -> np.ndarray:
    X2 = np.atleast_2d(X)
    if X.ndim == 1:
        X2 = X.reshape(1, -1)
    if X2.shape[1] != n_in:
        raise ValueError(f"input has {X2.shape[1]} features, network expects {n_in}")
    return X2


def init_network(layer_sizes, rng: np.random.Generator, output_map: OutputMap | None = None) -> MlpNetwork:
    """Glorot-uniform weights, zero biases."""
    layer_sizes = tuple(int(n) for n in layer_sizes)
    net = MlpNetwork(layer_sizes, np.zeros(_param_count(layer_sizes)), output_map or OutputMap())
    for W in net.weights:
        n_out, n_in = W.shape
        limit = np.sqrt(6.0 / (n_in + n_out))
        W[...] = rng.uniform(-limit, limit, size=W.shape)
    return net


# --- reference route: composed from primitive ops -------------------------------------


@dataclass
class ForwardRecord:
    """Result of :func:`forward`: the tape plus handles to its leaves."""

    tape: Tape
    input: Var
    params: list[Var]
    raw: Var
    output: Var
    net: MlpNetwork

    @property
    def value(self) -> np.ndarray:
        return self.output.value


def forward(net: MlpNetwork, x) -> ForwardRecord:
    """Evaluate ``net`` on a vector (or batch) of inputs, recording every op."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim > 2:
        raise ValueError("input must be a vector or a 2-D batch")
    X = _as_batch(x, net.n_inputs)
    tape = Tape()
    xin = tape.leaf(X, name="input")
    params = []
    a = xin
    n_layers = len(net.weights)
    for layer, (W, b) in enumerate(zip(net.weights, net.biases)):
        Wv = tape.leaf(W, name=f"W{layer}")
        bv = tape.leaf(b, name=f"b{layer}")
        params += [Wv, bv]
        a = matmul(a, transpose(Wv)) + bv
        if layer < n_layers - 1:
            a = a.tanh()
    raw = a.column(0)
    out = net.output_map.on_tape(raw)
    if x.ndim == 1:
        out = out.sum()  # single sample: scalar output
    return ForwardRecord(tape, xin, params, raw, out, net)


def grad_params(rec: ForwardRecord) -> np.ndarray:
    """d(output)/d(theta) in the flat parameter layout (summed over a batch)."""
    rec.tape.backward(rec.output)
    parts = [np.zeros_like(p.value) if p.grad is None else p.grad for p in rec.params]
    return np.concatenate([g.ravel() for g in parts])


def grad_input(rec: ForwardRecord, index: int) -> np.ndarray | float:
    """d(output)/d(input[index]) by a reverse sweep.

    For a batch, each sample's output depends only on its own input row, so
    one sweep seeded with ones yields the per-sample derivatives.
    """
    if not 0 <= index < rec.net.n_inputs:
        raise IndexError(f"input index {index} out of range for {rec.net.n_inputs} inputs")
    rec.tape.backward(rec.output)
    g = rec.input.grad
    if g is None:
        g = np.zeros_like(rec.input.value)
    col = g[:, index]
    return float(col[0]) if rec.output.value.ndim == 0 else col


# --- fused route: the whole network as one tape primitive ------------------------------


def param_leaves(tape: Tape, net: MlpNetwork) -> Var:
    """Register ``net.theta`` as a single flat leaf."""
    return tape.leaf(net.theta, name="theta")


def apply(tape: Tape, net: MlpNetwork, X, theta: Var, tangent_col: int = -1):
    """Fused forward of ``net`` on a batch, differentiable in ``theta``.

    Returns ``(y, dy)``: the mapped output and, if ``tangent_col >= 0``, its
    derivative with respect to input column ``tangent_col`` (else None).
    ``X`` may be an array or a Var (its gradient is propagated).
    """
    x_var = X if isinstance(X, Var) else tape.const(np.asarray(X, dtype=np.float64))
    Xv = _as_batch(x_var.value, net.n_inputs)
    if tangent_col >= net.n_inputs:
        raise IndexError(f"tangent column {tangent_col} out of range")
    weights, biases = net.weights, net.biases
    raw, draw, cache = kernels.mlp_forward(weights, biases, Xv, tangent_col)
    n = Xv.shape[0]
    has_tangent = tangent_col >= 0
    value = np.concatenate([raw, draw], axis=1) if has_tangent else raw
    x_shape = x_var.value.shape

    def vjp(g):
        gy = np.ascontiguousarray(g[:, :1])
        gdy = np.ascontiguousarray(g[:, 1:2]) if has_tangent else None
        gW, gb, gX = kernels.mlp_backward(weights, cache, gy, gdy)
        flat = np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(gW, gb)])
        return (gX.reshape(x_shape), flat)

    node = tape.custom(value, (x_var, theta), vjp, name="mlp")
    raw_v = node.column(0)
    y = net.output_map.on_tape(raw_v)
    if not has_tangent:
        return y, None
    dy = node.column(1)
    if net.output_map.kind == "identity":
        dy = dy * net.output_map.scale
    else:
        # d/dx [lo + (hi-lo) s(raw)] = (hi-lo) s (1-s) draw, with s taken from the tape
        span = net.output_map.hi - net.output_map.lo
        s = raw_v.sigmoid()
        dy = dy * s * (1.0 - s) * span
    assert dy.shape == (n,)
    return y, dy


# --- checkpoint I/O -------------------------------------------------------------------


def network_to_dict(net: MlpNetwork) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "activation": net.activation,
        "output_map": net.output_map.to_dict(),
        "weights": [W.ravel().tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def network_from_dict(d: dict) -> MlpNetwork:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a pcmnn network checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')}")
    sizes = tuple(d["layer_sizes"])
    parts = []
    for (n_in, n_out), w, b in zip(zip(sizes[:-1], sizes[1:]), d["weights"], d["biases"]):
        if len(w) != n_in * n_out or len(b) != n_out:
            raise ValueError("checkpoint weights do not match layer sizes")
        parts += [np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64)]
    if len(parts) != 2 * (len(sizes) - 1):
        raise ValueError("checkpoint layer count mismatch")
    return MlpNetwork(sizes, np.concatenate(parts), OutputMap.from_dict(d["output_map"]), d["activation"])


def save_network(net: MlpNetwork, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net)) + "\n", encoding="utf-8")


def load_network(path) -> MlpNetwork:
    return network_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


__all__ = [
    "MlpNetwork", "OutputMap", "ForwardRecord", "TapeError",
    "init_network", "forward", "grad_params", "grad_input", "apply", "param_leaves",
    "network_to_dict", "network_from_dict", "save_network", "load_network",
]
