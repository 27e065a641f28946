"""Reverse-mode automatic differentiation over dense float64 arrays.

Small tape-based engine: every operation returns a new Tensor that
remembers its parents and how to push gradients back to them. Only the
primitives needed by this project are implemented (affine maps,
elementwise arithmetic, tanh/exp/sqrt/abs, reductions, concatenation,
row-wise sorting and weighted gathers).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "ParamSet",
    "NonFiniteError",
    "backward",
    "grads_for",
    "constant",
    "concat",
    "rows",
    "sort_rows",
    "sort3",
    "weighted_gather",
]


class NonFiniteError(ValueError):
    """A NaN or Inf showed up in a tensor; upstream numerics are broken."""


# With strict checks every op output is scanned for NaN/Inf. Off by
# default for speed: leaf tensors are always validated, NaN/Inf
# propagate through the ops used here, and backward()/item() re-check.
STRICT_CHECKS = False


def _as_array(data) -> np.ndarray:
    a = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("non-finite value in tensor")
    return a


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    """Immutable value node on the autodiff tape.

    `data` is always float64. Gradients accumulate into `.grad` during
    a `backward()` pass, but only for tensors with `requires_grad`
    somewhere beneath them; constant subgraphs are pruned at
    construction so inference pays no tape cost.
    """

    __slots__ = ("data", "grad", "_parents", "_backward_fn", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        if _parents and not STRICT_CHECKS:
            # op outputs are already float64 ndarrays; NaN/Inf propagate
            # and are caught at backward()/item()
            self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        else:
            self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        if self.requires_grad:
            self._parents = _parents
            self._backward_fn = _backward
        else:
            self._parents = ()
            self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, g: np.ndarray, own: bool = False):
        """Add `g` to the gradient; `own=True` means `g` is freshly
        allocated and may be adopted without copying."""
        if self.grad is None:
            self.grad = g if own and g.shape == self.data.shape else g.copy()
        else:
            self.grad += g

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        other = _lift(other)
        out_data = self.data + other.data

        def bwd(g):
            if self.requires_grad:
                ub = _unbroadcast(g, self.data.shape)
                self._accum(ub, own=ub is not g)
            if other.requires_grad:
                ub = _unbroadcast(g, other.data.shape)
                other._accum(ub, own=ub is not g)

        return Tensor(out_data, _parents=(self, other), _backward=bwd)

    __radd__ = __add__

    def __sub__(self, other):
        other = _lift(other)
        out_data = self.data - other.data

        def bwd(g):
            if self.requires_grad:
                ub = _unbroadcast(g, self.data.shape)
                self._accum(ub, own=ub is not g)
            if other.requires_grad:
                other._accum(_unbroadcast(-g, other.data.shape), own=True)

        return Tensor(out_data, _parents=(self, other), _backward=bwd)

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        other = _lift(other)
        out_data = self.data * other.data

        def bwd(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g * other.data, self.data.shape), own=True)
            if other.requires_grad:
                other._accum(_unbroadcast(g * self.data, other.data.shape), own=True)

        return Tensor(out_data, _parents=(self, other), _backward=bwd)

    __rmul__ = __mul__

    def __neg__(self):
        def bwd(g):
            self._accum(-g, own=True)

        return Tensor(-self.data, _parents=(self,), _backward=bwd)

    def __matmul__(self, other):
        other = _lift(other)
        out_data = self.data @ other.data

        def bwd(g):
            if self.requires_grad:
                self._accum(g @ other.data.T, own=True)
            if other.requires_grad:
                other._accum(self.data.T @ g, own=True)

        return Tensor(out_data, _parents=(self, other), _backward=bwd)

    # -- elementwise nonlinear -------------------------------------------

    def tanh(self):
        y = np.tanh(self.data)

        def bwd(g):
            self._accum(g * (1.0 - y * y), own=True)

        return Tensor(y, _parents=(self,), _backward=bwd)

    def exp(self):
        y = np.exp(self.data)

        def bwd(g):
            self._accum(g * y, own=True)

        return Tensor(y, _parents=(self,), _backward=bwd)

    def sqrt(self):
        y = np.sqrt(self.data)

        def bwd(g):
            # subgradient 0 at exactly 0 keeps constant-input graphs finite
            d = np.where(y > 0.0, 0.5 / np.where(y > 0.0, y, 1.0), 0.0)
            self._accum(g * d, own=True)

        return Tensor(y, _parents=(self,), _backward=bwd)

    def abs(self):
        s = np.sign(self.data)

        def bwd(g):
            self._accum(g * s, own=True)

        return Tensor(np.abs(self.data), _parents=(self,), _backward=bwd)

    def square(self):
        return self * self

    # -- reductions / shape ----------------------------------------------

    def sum(self):
        def bwd(g):
            self._accum(np.full_like(self.data, float(g)), own=True)

        return Tensor(np.array([self.data.sum()]), _parents=(self,), _backward=bwd)

    def mean(self):
        n = self.data.size

        def bwd(g):
            self._accum(np.full_like(self.data, float(g) / n), own=True)

        return Tensor(np.array([self.data.mean()]), _parents=(self,), _backward=bwd)

    def reshape(self, *shape):
        orig = self.data.shape

        def bwd(g):
            self._accum(g.reshape(orig))  # reshape is a view; _accum copies

        return Tensor(self.data.reshape(*shape), _parents=(self,), _backward=bwd)

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() requires a single-element tensor")
        return float(self.data.reshape(-1)[0])


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(data) -> Tensor:
    return Tensor(data)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accum(g[tuple(idx)])

    return Tensor(out_data, _parents=tuple(tensors), _backward=bwd)


def sort_rows(t: Tensor) -> tuple[Tensor, np.ndarray]:
    """Sort the last axis of `t` ascending, per row, with a stable tie-break.

    Returns (sorted tensor, permutation indices). Gradients route back
    through the recorded permutation.
    """
    t = _lift(t)
    perm = np.argsort(t.data, axis=-1, kind="stable")
    out_data = np.take_along_axis(t.data, perm, axis=-1)

    def bwd(g):
        gi = np.empty_like(t.data)
        np.put_along_axis(gi, perm, g, axis=-1)
        t._accum(gi, own=True)

    return Tensor(out_data, _parents=(t,), _backward=bwd), perm


def sort3(v) -> tuple[Tensor, np.ndarray]:
    """Ascending sort of a 3-vector plus the permutation that produced it."""
    v = _lift(v)
    if v.data.shape != (3,):
        raise ValueError(f"sort3 expects shape (3,), got {v.data.shape}")
    return sort_rows(v)


def rows(t: Tensor, lo: int, hi: int) -> Tensor:
    """Contiguous row slice t[lo:hi] with scatter-back gradients."""
    t = _lift(t)

    def bwd(g):
        gi = np.zeros_like(t.data)
        gi[lo:hi] = g
        t._accum(gi, own=True)

    return Tensor(t.data[lo:hi], _parents=(t,), _backward=bwd)


def weighted_gather(table: Tensor, idx: np.ndarray, weights: np.ndarray) -> Tensor:
    """out[p] = sum_k weights[p, k] * table[idx[p, k]].

    `idx` is (P, K) integer, `weights` (P, K) constant float; `table`
    is (M, C) and may require grad (gradients scatter-add back).
    """
    table = _lift(table)
    out_data = np.einsum("pk,pkc->pc", weights, table.data[idx])

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx.reshape(-1), (weights[:, :, None] * g[:, None, :]).reshape(-1, g.shape[-1]))
        table._accum(gt, own=True)

    return Tensor(out_data, _parents=(table,), _backward=bwd)


def backward(loss: Tensor) -> None:
    """Run reverse-mode accumulation from a scalar loss.

    Gradients land in `.grad` of every reachable tensor that requires
    them; tensors not reachable from the loss keep `.grad` of None.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar output, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    for node in topo:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward_fn is not None:
            node._backward_fn(node.grad)
            if not np.all(np.isfinite(node.grad)):
                raise NonFiniteError("non-finite gradient")


class ParamSet:
    """Named trainable tensors with deterministic ordering."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.version = 0

    def add(self, name: str, data) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name!r}")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def items(self):
        return self._params.items()

    def bump(self) -> None:
        """Record an in-place weight update (invalidates value caches)."""
        self.version += 1

    def count(self) -> int:
        return sum(t.data.size for t in self._params.values())


def grads_for(loss: Tensor, params: ParamSet) -> dict[str, np.ndarray]:
    """Backward pass returning one gradient per parameter.

    Parameters not connected to the loss get a zero gradient.
    """
    backward(loss)
    out = {}
    for name, t in params.items():
        out[name] = t.grad if t.grad is not None else np.zeros_like(t.data)
    return out
