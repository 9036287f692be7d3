"""Dense float64 tensors with reverse-mode differentiation.

Each primitive records its inputs and a vector-Jacobian closure on the
output tensor; `backward` walks the recording once in reverse topological
order and accumulates gradients into leaf tensors. The recording lives for
one forward pass and dies with the tensors themselves, so there is no
global tape to reset between iterations.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "RandomStream",
    "OptimizerState",
    "ShapeError",
    "apply_primitive",
    "backward",
    "xavier_init",
    "clip_and_step",
    "maybe_decay_lr",
]


class ShapeError(ValueError):
    """Operand shapes do not conform to the requested primitive."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_inputs", "_vjp")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        # Leaves created with requires_grad get an eagerly zeroed gradient
        # buffer; graph-internal tensors never allocate one.
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._inputs = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    # -- operator sugar over the module-level primitives ----------------
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __getitem__(self, key):
        return slice_(self, key)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None):
        return reduce_mean(self, axis=axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _from_op(data, inputs, vjp):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if any(i.requires_grad for i in inputs):
        out.requires_grad = True
        out._inputs = inputs
        out._vjp = vjp
    else:
        out.requires_grad = False
        out._inputs = ()
        out._vjp = None
    return out


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back down to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(kind, a, b):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(f"{kind}: shapes {a.data.shape} and {b.data.shape} do not broadcast")


# -- primitives ----------------------------------------------------------

def add(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("add", a, b)

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _from_op(a.data + b.data, (a, b), vjp)


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("sub", a, b)

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _from_op(a.data - b.data, (a, b), vjp)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("mul", a, b)

    def vjp(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _from_op(a.data * b.data, (a, b), vjp)


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} have mismatched inner dims")

    def vjp(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape)
        return ga, gb

    return _from_op(np.matmul(a.data, b.data), (a, b), vjp)


def concat(tensors, axis=-1):
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    base = list(tensors[0].data.shape)
    ax = axis if axis >= 0 else len(base) + axis
    for t in tensors[1:]:
        s = list(t.data.shape)
        if len(s) != len(base) or any(i != ax and s[i] != base[i] for i in range(len(s))):
            raise ShapeError(f"concat: shapes {tensors[0].shape} and {t.shape} differ off axis {axis}")
    sizes = [t.data.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=ax))

    return _from_op(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), vjp)


def sigmoid(x):
    x = _wrap(x)
    out_data = np.empty_like(x.data)
    pos = x.data >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def vjp(g):
        return (g * out_data * (1.0 - out_data),)

    return _from_op(out_data, (x,), vjp)


def tanh(x):
    x = _wrap(x)
    out_data = np.tanh(x.data)

    def vjp(g):
        return (g * (1.0 - out_data * out_data),)

    return _from_op(out_data, (x,), vjp)


def softmax(x, axis=-1):
    x = _wrap(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        return (out_data * (g - dot),)

    return _from_op(out_data, (x,), vjp)


def log_softmax(x, axis=-1):
    x = _wrap(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out_data = z - lse

    def vjp(g):
        return (g - np.exp(out_data) * g.sum(axis=axis, keepdims=True),)

    return _from_op(out_data, (x,), vjp)


def log(x):
    x = _wrap(x)

    def vjp(g):
        return (g / x.data,)

    return _from_op(np.log(x.data), (x,), vjp)


def clip(x, lo, hi):
    """Clamp values to [lo, hi]; gradient is zero where the clamp binds."""
    x = _wrap(x)
    out_data = np.clip(x.data, lo, hi)
    inside = (x.data >= lo) & (x.data <= hi)

    def vjp(g):
        return (g * inside,)

    return _from_op(out_data, (x,), vjp)


def gather_rows(table, ids):
    """Look up rows of `table` by integer index; gradient scatter-adds."""
    table = _wrap(table)
    idx = np.asarray(ids.data if isinstance(ids, Tensor) else ids)
    if not np.issubdtype(idx.dtype, np.integer):
        idx = idx.astype(np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexError(f"gather-rows: index out of range for table with {table.data.shape[0]} rows")

    def vjp(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        return (gt,)

    return _from_op(table.data[idx], (table,), vjp)


def take_along_last(x, ids):
    """Pick one entry per row along the final axis (e.g. target log-probs)."""
    x = _wrap(x)
    idx = np.asarray(ids)
    if not np.issubdtype(idx.dtype, np.integer):
        idx = idx.astype(np.int64)
    if idx.shape != x.data.shape[:-1]:
        raise ShapeError(f"take-along: index shape {idx.shape} does not match {x.shape[:-1]}")
    expanded = np.expand_dims(idx, -1)

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, expanded, np.expand_dims(g, -1), axis=-1)
        return (gx,)

    return _from_op(np.take_along_axis(x.data, expanded, axis=-1)[..., 0], (x,), vjp)


def reduce_sum(x, axis=None, keepdims=False):
    x = _wrap(x)
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.data.shape).copy(),)

    return _from_op(out_data, (x,), vjp)


def reduce_mean(x, axis=None):
    x = _wrap(x)
    out_data = x.data.mean(axis=axis)
    n = x.data.size if axis is None else x.data.shape[axis]

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / n, x.data.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis) / n, x.data.shape).copy(),)

    return _from_op(out_data, (x,), vjp)


def slice_(x, key):
    x = _wrap(x)

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[key] = g
        return (gx,)

    return _from_op(x.data[key], (x,), vjp)


def reshape(x, shape):
    x = _wrap(x)
    old = x.data.shape

    def vjp(g):
        return (g.reshape(old),)

    return _from_op(x.data.reshape(shape), (x,), vjp)


_PRIMITIVES = {
    "matmul": lambda inputs, **kw: matmul(*inputs),
    "add": lambda inputs, **kw: add(*inputs),
    "mul": lambda inputs, **kw: mul(*inputs),
    "concat-last-dim": lambda inputs, **kw: concat(inputs, axis=-1),
    "sigmoid": lambda inputs, **kw: sigmoid(*inputs),
    "tanh": lambda inputs, **kw: tanh(*inputs),
    "softmax-last-dim": lambda inputs, **kw: softmax(*inputs, axis=-1),
    "log-softmax-last-dim": lambda inputs, **kw: log_softmax(*inputs, axis=-1),
    "gather-rows": lambda inputs, **kw: gather_rows(*inputs),
    "sum": lambda inputs, **kw: reduce_sum(inputs[0], axis=kw.get("axis"), keepdims=kw.get("keepdims", False)),
    "mean": lambda inputs, **kw: reduce_mean(inputs[0], axis=kw.get("axis")),
    "slice": lambda inputs, **kw: slice_(inputs[0], kw["key"]),
}


def apply_primitive(kind, inputs, **kwargs):
    """Dispatch a named primitive over tensor inputs, recording it for backward."""
    if kind not in _PRIMITIVES:
        raise ValueError(f"unknown primitive kind: {kind!r}")
    return _PRIMITIVES[kind](list(inputs), **kwargs)


# -- reverse pass --------------------------------------------------------

def backward(loss):
    """Accumulate d(loss)/d(leaf) into every reachable leaf's grad buffer.

    Repeated calls over the same recording re-propagate from scratch, so
    gradients add up exactly once per call.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("backward: loss is not finite")

    # Iterative post-order topological sort; graphs grow past the default
    # recursion limit on long unrolled sequences.
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        nid = id(node)
        if nid in visited:
            continue
        visited.add(nid)
        stack.append((node, True))
        for child in node._inputs:
            if child.requires_grad and id(child) not in visited:
                stack.append((child, False))

    adjoint = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g.reshape(node.data.shape)
            continue
        for child, gc in zip(node._inputs, node._vjp(g)):
            if not child.requires_grad:
                continue
            cid = id(child)
            prev = adjoint.get(cid)
            # Out-of-place add: vjp outputs may alias each other.
            adjoint[cid] = gc if prev is None else prev + gc


# -- parameters, rng, optimizer ------------------------------------------

class Parameter:
    """Named leaf tensor whose grad buffer matches its value's shape."""

    __slots__ = ("name", "value")

    def __init__(self, name, value):
        self.name = name
        if isinstance(value, Tensor):
            value.requires_grad = True
            if value.grad is None:
                value.grad = np.zeros_like(value.data)
            self.value = value
        else:
            self.value = Tensor(value, requires_grad=True)

    @property
    def data(self):
        return self.value.data

    @property
    def grad(self):
        return self.value.grad

    def zero_grad(self):
        self.value.zero_grad()

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.data.shape})"


class RandomStream:
    """Seeded random source: same seed and algorithm give identical draws."""

    def __init__(self, seed, algorithm="pcg64"):
        if algorithm != "pcg64":
            raise ValueError(f"unsupported rng algorithm: {algorithm!r}")
        self.seed = int(seed)
        self.algorithm = algorithm
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def derive(self, *keys):
        """Child stream with a seed determined by this seed and the keys."""
        tag = repr((self.seed,) + keys).encode()
        child = int.from_bytes(hashlib.sha256(tag).digest()[:8], "little")
        return RandomStream(child, self.algorithm)

    def uniform(self, low, high, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, size=None, std=1.0):
        return self._gen.normal(0.0, std, size)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, seq):
        return seq[int(self._gen.integers(0, len(seq)))]

    def categorical(self, probs):
        """Sample one column index per row of a [rows, k] probability matrix."""
        probs = np.asarray(probs, dtype=np.float64)
        cdf = probs.cumsum(axis=1)
        u = self._gen.random((probs.shape[0], 1)) * cdf[:, -1:]
        return np.minimum((cdf < u).sum(axis=1), probs.shape[1] - 1)


def xavier_init(fan_in, fan_out, rng):
    """Uniform draw in [-b, b] with b = sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"xavier_init: fans must be >= 1, got ({fan_in}, {fan_out})")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)))


class OptimizerState:
    """SGD with global-norm gradient clipping and conditional lr decay."""

    def __init__(self, learning_rate, decay_factor=0.99, clip_norm=5.0):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 < decay_factor < 1.0):
            raise ValueError("decay_factor must lie in (0, 1)")
        if clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        self.learning_rate = learning_rate
        self.decay_factor = decay_factor
        self.clip_norm = clip_norm
        self.adversarial_loss_history = []


def clip_and_step(params, state):
    """Scale grads to the clip norm if needed, apply SGD, zero grads.

    Duplicated parameter objects are stepped once; non-finite gradients
    raise before any value changes.
    """
    seen = set()
    unique = []
    for p in params:
        if id(p) not in seen:
            seen.add(id(p))
            unique.append(p)
    sq = 0.0
    for p in unique:
        g = p.grad
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient in parameter {p.name!r}")
        sq += float((g * g).sum())
    norm = np.sqrt(sq)
    scale = state.clip_norm / norm if norm > state.clip_norm else 1.0
    step = state.learning_rate * scale
    for p in unique:
        p.value.data -= step * p.grad
        p.zero_grad()


def maybe_decay_lr(state, new_adversarial_loss):
    """Decay the learning rate after two consecutive strict loss increases."""
    state.adversarial_loss_history.append(float(new_adversarial_loss))
    h = state.adversarial_loss_history
    if len(h) >= 3 and h[-1] > h[-2] > h[-3]:
        state.learning_rate *= state.decay_factor
    return state
