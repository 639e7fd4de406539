"""Dense 2-D tensors and a reverse-mode gradient tape.

Every tensor is a 2-D float64 array.  Scalars are stored as 1x1.  Operations
only record onto a tape when one is active (``with Tape() as tape:``) and at
least one input requires a gradient; outside a tape they are plain numpy.
"""

from __future__ import annotations

import contextvars
import hashlib
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np


class ContractError(ValueError):
    """Raised when a caller violates an operation's precondition."""


_ACTIVE_TAPE: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar(
    "itergraph_active_tape", default=None
)


def current_tape() -> Optional["Tape"]:
    return _ACTIVE_TAPE.get()


class Tensor:
    __slots__ = ("values", "requires_grad", "grad", "name", "__weakref__")

    # make numpy defer to our reflected operators
    __array_priority__ = 100

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.ndim > 2:
            raise ContractError(f"tensors are 2-D, got shape {arr.shape}")
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool = False) -> "Tensor":
        # internal fast path: arr is already a fresh 2-D float64 array
        t = cls.__new__(cls)
        t.values = arr
        t.requires_grad = requires_grad
        t.grad = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def numpy(self) -> np.ndarray:
        return self.values

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # operator sugar, implemented in ops to keep the tape logic in one place
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    @property
    def T(self) -> "Tensor":
        from . import ops
        return ops.transpose(self)


class LowRank:
    """A gradient kept in factored form, sum_k U_k @ V_k.T (+ an optional dense part).

    Products like ``A @ M`` with a thin ``M`` send ``G @ M.T`` back to ``A``.
    When an n x n matrix is used many times, stacking those factors and
    multiplying once is much cheaper than summing n x n outer products.
    """

    __slots__ = ("us", "vs", "dense_part", "shape")

    def __init__(self, u: np.ndarray, v: np.ndarray):
        self.us = [u]
        self.vs = [v]
        self.dense_part: Optional[np.ndarray] = None
        self.shape = (u.shape[0], v.shape[0])

    def __iadd__(self, other):
        if isinstance(other, LowRank):
            self.us.extend(other.us)
            self.vs.extend(other.vs)
            if other.dense_part is not None:
                self += other.dense_part
        elif self.dense_part is None:
            self.dense_part = np.array(other, dtype=np.float64)
        else:
            self.dense_part = self.dense_part + other
        return self

    def scaled(self, c: float) -> "LowRank":
        out = LowRank(self.us[0] * c, self.vs[0])
        out.us.extend(u * c for u in self.us[1:])
        out.vs.extend(self.vs[1:])
        if self.dense_part is not None:
            out.dense_part = self.dense_part * c
        return out

    def dense(self) -> np.ndarray:
        u = self.us[0] if len(self.us) == 1 else np.hstack(self.us)
        v = self.vs[0] if len(self.vs) == 1 else np.hstack(self.vs)
        out = u @ v.T
        if self.dense_part is not None:
            out += self.dense_part
        return out


def _accumulate(old, new):
    if old is None:
        return new
    if isinstance(old, LowRank):
        # never mutate an adjoint a backward closure may still hold
        merged = old.scaled(1.0)
        merged += new
        return merged
    if isinstance(new, LowRank):
        merged = new.scaled(1.0)
        merged += old
        return merged
    return old + new


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Record(NamedTuple):
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: BackwardFn
    kink: Optional[np.ndarray]


class Tape:
    """Ordered record of primitive operations for one forward pass.

    Records are appended in execution order, which is already a topological
    order, so ``backward`` simply walks them in reverse.
    """

    def __init__(self):
        self.records: list[Record] = []
        self._produced: set[int] = set()
        self._consumed = False
        self._token = None

    def __enter__(self) -> "Tape":
        if self._consumed:
            raise ContractError("tape already consumed by backward()")
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def consumed(self) -> bool:
        return self._consumed

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: BackwardFn,
               kink: Optional[np.ndarray] = None) -> None:
        self.records.append(Record(out, inputs, backward, kink))
        self._produced.add(id(out))

    def produced(self, t: Tensor) -> bool:
        return id(t) in self._produced

    def kink_signature(self) -> str:
        """Digest of every stored branch mask (relu, threshold, floor).

        Two forward passes with equal signatures took the same side of every
        non-smooth branch, so a finite difference between them is valid.
        """
        h = hashlib.sha1()
        for rec in self.records:
            if rec.kink is not None:
                h.update(np.packbits(rec.kink).tobytes())
        return h.hexdigest()


def backward(tape: Tape, loss: Tensor, params: Optional[Sequence[Tensor]] = None) -> None:
    """Populate ``.grad`` on every leaf that requires a gradient.

    Leaves reached from ``loss`` receive d loss / d leaf; leaves recorded on the
    tape but not on a path to ``loss``, and any extra ``params`` passed in,
    receive zeros.  The tape is consumed.
    """
    if tape.consumed:
        raise ContractError("backward() called twice on the same tape")
    if loss.shape != (1, 1):
        raise ContractError(f"loss must be a scalar (1x1), got {loss.shape}")
    if not tape.records or not tape.produced(loss):
        raise ContractError("loss was not produced on this tape; run the forward pass first")

    adjoint: dict[int, object] = {id(loss): np.ones((1, 1))}
    leaves: dict[int, Tensor] = {}
    for rec in reversed(tape.records):
        for inp in rec.inputs:
            if inp.requires_grad and not tape.produced(inp):
                leaves[id(inp)] = inp
        g = adjoint.pop(id(rec.out), None)
        if g is None:
            continue
        if isinstance(g, LowRank) and not getattr(rec.backward, "accepts_low_rank", False):
            g = g.dense()
        grads = rec.backward(g)
        for inp, gi in zip(rec.inputs, grads):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            adjoint[key] = _accumulate(adjoint.get(key), gi)
    for key, leaf in leaves.items():
        g = adjoint.get(key)
        if isinstance(g, LowRank):
            g = g.dense()
        leaf.grad = np.zeros_like(leaf.values) if g is None else np.array(g, dtype=np.float64)
    for p in params or ():
        if id(p) not in leaves:
            p.grad = np.zeros_like(p.values)
    tape.records.clear()
    tape._consumed = True
