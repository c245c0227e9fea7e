"""Minimal dense-tensor arithmetic with reverse-mode automatic differentiation.

Values are 64-bit numpy arrays. Every differentiable operation executed while
a Tape is active records a node (operands, output, backward rule) onto that
tape; ``backward`` replays the tape in reverse creation order, which is a
valid topological order by construction. Tapes are rebuilt per forward pass,
so data-dependent structure (e.g. which edges survive pruning) may change
between passes.

No general broadcasting: binary ops take equal shapes, or a tensor and a
Python scalar treated as a constant.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateRowError,
    DomainError,
    NumericError,
    RankError,
    ShapeError,
    StateError,
)

_LOCAL = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Dense 64-bit real array with optional accumulated gradient."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar delegating to the functional ops below.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


class _Node:
    __slots__ = ("output", "inputs", "backward_fn", "name")

    def __init__(self, output, inputs, backward_fn, name):
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.name = name


class Tape:
    """Ordered record of executed operations for one forward pass.

    Usable as a context manager; nesting is allowed (innermost tape records).
    ``backward_visits`` counts nodes visited by ``backward`` (instrumentation).
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False
        self.backward_visits = 0

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _tape_stack().pop()

    def __len__(self) -> int:
        return len(self.nodes)


def record_op(
    output: Tensor,
    inputs: Sequence[Tensor],
    backward_fn: Callable[[np.ndarray], tuple],
    name: str = "custom",
) -> Tensor:
    """Register a differentiable op on the active tape.

    ``backward_fn`` maps the output gradient to one gradient (or None) per
    input. Recording happens only when some input requires grad and a tape
    is active; the output's requires_grad flag is set either way.
    """
    needs = any(t.requires_grad for t in inputs)
    output.requires_grad = needs
    tape = active_tape()
    if needs and tape is not None:
        tape.nodes.append(_Node(output, tuple(inputs), backward_fn, name))
    return output


def _ensure_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"{op} produced non-finite values")


def _out(data: np.ndarray, inputs, backward_fn, name: str) -> Tensor:
    _ensure_finite(data, name)
    t = Tensor.__new__(Tensor)
    t.data = data
    t.requires_grad = False
    t.grad = None
    return record_op(t, inputs, backward_fn, name)


def _as_operands(a, b, op: str):
    """Split a binary op's second operand into tensor or scalar constant."""
    if isinstance(b, Tensor):
        if a.shape != b.shape:
            raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")
        return b, None
    return None, float(b)


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    bt, c = _as_operands(a, b, "add")
    if bt is not None:
        return _out(a.data + bt.data, (a, bt), lambda g: (g, g), "add")
    return _out(a.data + c, (a,), lambda g: (g,), "add")


def sub(a: Tensor, b) -> Tensor:
    bt, c = _as_operands(a, b, "sub")
    if bt is not None:
        return _out(a.data - bt.data, (a, bt), lambda g: (g, -g), "sub")
    return _out(a.data - c, (a,), lambda g: (g,), "sub")


def mul(a: Tensor, b) -> Tensor:
    bt, c = _as_operands(a, b, "mul")
    if bt is not None:
        ad, bd = a.data, bt.data
        return _out(ad * bd, (a, bt), lambda g: (g * bd, g * ad), "mul")
    return _out(a.data * c, (a,), lambda g: (g * c,), "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(
            f"matmul requires 2-D operands, got {a.shape} and {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    return _out(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose requires a 2-D operand, got {a.shape}")
    return _out(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size and -1 not in shape:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")
    old = a.shape
    return _out(a.data.reshape(shape).copy(), (a,), lambda g: (g.reshape(old),), "reshape")


# ---------------------------------------------------------------------------
# elementwise nonlinearities
# ---------------------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    # Derivative at exactly 0 is taken as 0.
    d = x.data
    return _out(np.maximum(d, 0.0), (x,), lambda g: (g * (d > 0.0),), "relu")


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)
    return _out(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):  # overflow surfaces as NumericError
        out = np.exp(x.data)
    return _out(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    d = x.data
    bad = np.flatnonzero(d.reshape(-1) <= 0.0)
    if bad.size:
        raise DomainError(f"log of non-positive value at flat index {int(bad[0])}")
    return _out(np.log(d), (x,), lambda g: (g / d,), "log")


_ELEMENTWISE = {"relu": relu, "sigmoid": sigmoid, "exp": exp, "log": log}


def elementwise(op: str, x: Tensor) -> Tensor:
    """Apply one of {relu, sigmoid, exp, log} element-wise."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise DomainError(f"unknown elementwise op {op!r}") from None
    return fn(x)


def pow_const(x: Tensor, p: float) -> Tensor:
    """x**p with constant exponent; non-integer p requires x > 0."""
    d = x.data
    if p != int(p) and (d <= 0.0).any():
        raise DomainError(f"pow_const: non-integer exponent {p} on non-positive input")
    out = d**p
    return _out(out, (x,), lambda g: (g * p * d ** (p - 1.0),), "pow_const")


def row_l2_normalize(x: Tensor) -> Tensor:
    """Scale each row of a 2-D tensor to unit Euclidean norm."""
    if x.data.ndim != 2:
        raise ShapeError(f"row_l2_normalize requires a 2-D operand, got {x.shape}")
    norms = np.sqrt((x.data**2).sum(axis=1))
    tiny = np.flatnonzero(norms < 1e-12)
    if tiny.size:
        raise DegenerateRowError(f"row {int(tiny[0])} has norm below 1e-12")
    out = x.data / norms[:, None]

    def bwd(g):
        # Jacobian of x/||x|| per row: (I - y y^T)/||x||.
        dots = (g * out).sum(axis=1)
        return ((g - out * dots[:, None]) / norms[:, None],)

    return _out(out, (x,), bwd, "row_l2_normalize")


def row_l2_normalize_or_zero(x: Tensor) -> Tensor:
    """Like row_l2_normalize, but rows with norm below 1e-12 map to zero
    (with zero gradient) instead of raising. Directionless rows then have
    cosine 0 to everything."""
    if x.data.ndim != 2:
        raise ShapeError(f"row_l2_normalize_or_zero requires a 2-D operand, got {x.shape}")
    norms = np.sqrt((x.data**2).sum(axis=1))
    good = norms >= 1e-12
    safe = np.where(good, norms, 1.0)
    out = np.where(good[:, None], x.data / safe[:, None], 0.0)

    def bwd(g):
        dots = (g * out).sum(axis=1)
        gx = (g - out * dots[:, None]) / safe[:, None]
        gx[~good] = 0.0
        return (gx,)

    return _out(out, (x,), bwd, "row_l2_normalize_or_zero")


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _out(
        np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),), "sum_all"
    )


def mean_all(x: Tensor) -> Tensor:
    return mul(sum_all(x), 1.0 / x.size)


def row_sum(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"row_sum requires a 2-D operand, got {x.shape}")
    m = x.shape[1]
    return _out(
        x.data.sum(axis=1),
        (x,),
        lambda g: (np.repeat(g[:, None], m, axis=1),),
        "row_sum",
    )


def rowwise_dot(a: Tensor, b: Tensor) -> Tensor:
    """Per-row inner product of two equal-shape 2-D tensors -> 1-D tensor."""
    if a.data.ndim != 2 or a.shape != b.shape:
        raise ShapeError(f"rowwise_dot: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    return _out(
        (ad * bd).sum(axis=1),
        (a, b),
        lambda g: (g[:, None] * bd, g[:, None] * ad),
        "rowwise_dot",
    )


# ---------------------------------------------------------------------------
# indexing / structure
# ---------------------------------------------------------------------------


def _index_array(idx, bound: int, op: str) -> np.ndarray:
    arr = np.asarray(idx, dtype=np.int64)
    if arr.ndim != 1:
        raise ShapeError(f"{op}: index array must be 1-D")
    if arr.size and (arr.min() < 0 or arr.max() >= bound):
        raise DomainError(f"{op}: index out of range [0, {bound})")
    return arr


def gather_rows(x: Tensor, idx) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"gather_rows requires a 2-D operand, got {x.shape}")
    ia = _index_array(idx, x.shape[0], "gather_rows")
    shape = x.shape

    def bwd(g):
        gx = np.zeros(shape)
        np.add.at(gx, ia, g)
        return (gx,)

    return _out(x.data[ia].copy(), (x,), bwd, "gather_rows")


def take(x: Tensor, idx) -> Tensor:
    """Gather entries of a 1-D tensor; backward scatter-adds."""
    if x.data.ndim != 1:
        raise ShapeError(f"take requires a 1-D operand, got {x.shape}")
    ia = _index_array(idx, x.shape[0], "take")
    n = x.shape[0]

    def bwd(g):
        gx = np.zeros(n)
        np.add.at(gx, ia, g)
        return (gx,)

    return _out(x.data[ia].copy(), (x,), bwd, "take")


def gather_pairs(x: Tensor, rows, cols) -> Tensor:
    """Gather x[rows[k], cols[k]] for each k from a 2-D tensor."""
    if x.data.ndim != 2:
        raise ShapeError(f"gather_pairs requires a 2-D operand, got {x.shape}")
    ra = _index_array(rows, x.shape[0], "gather_pairs")
    ca = _index_array(cols, x.shape[1], "gather_pairs")
    if ra.shape != ca.shape:
        raise ShapeError("gather_pairs: row and column index lengths differ")
    shape = x.shape

    def bwd(g):
        gx = np.zeros(shape)
        np.add.at(gx, (ra, ca), g)
        return (gx,)

    return _out(x.data[ra, ca].copy(), (x,), bwd, "gather_pairs")


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: incompatible shapes {a.shape} and {b.shape}")
    p = a.shape[1]
    return _out(
        np.concatenate([a.data, b.data], axis=1),
        (a, b),
        lambda g: (g[:, :p], g[:, p:]),
        "concat_cols",
    )


def concat_vec(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeError("concat_vec requires 1-D operands")
    p = a.shape[0]
    return _out(
        np.concatenate([a.data, b.data]), (a, b), lambda g: (g[:p], g[p:]), "concat_vec"
    )


def segment_sum(x: Tensor, seg_ids, num_segments: int) -> Tensor:
    """Sum entries of a 1-D tensor into ``num_segments`` buckets."""
    if x.data.ndim != 1:
        raise ShapeError(f"segment_sum requires a 1-D operand, got {x.shape}")
    sa = _index_array(seg_ids, num_segments, "segment_sum")
    if sa.shape[0] != x.shape[0]:
        raise ShapeError("segment_sum: segment ids must align with values")
    out = np.zeros(num_segments)
    np.add.at(out, sa, x.data)
    return _out(out, (x,), lambda g: (g[sa],), "segment_sum")


def spmm(row_offsets, col_indices, values: Tensor, dense: Tensor) -> Tensor:
    """CSR sparse times dense: out[i] = sum_e values[e] * dense[col[e]].

    Gradient flows to both the edge values and the dense operand. The kernel
    accumulates in edge order, matching the sequential reference exactly.
    """
    offs = np.asarray(row_offsets, dtype=np.int64)
    cols = np.asarray(col_indices, dtype=np.int64)
    n_rows = offs.shape[0] - 1
    if values.data.ndim != 1 or values.shape[0] != cols.shape[0]:
        raise ShapeError("spmm: values must be 1-D and aligned with col_indices")
    if dense.data.ndim != 2:
        raise ShapeError(f"spmm: dense operand must be 2-D, got {dense.shape}")
    if offs[-1] != cols.shape[0]:
        raise ShapeError("spmm: row_offsets inconsistent with edge count")
    if cols.size and (cols.min() < 0 or cols.max() >= dense.shape[0]):
        raise DomainError("spmm: column index out of range")
    rows = np.repeat(np.arange(n_rows), np.diff(offs))
    vd, dd = values.data, dense.data
    out = np.zeros((n_rows, dense.shape[1]))
    np.add.at(out, rows, vd[:, None] * dd[cols])

    def bwd(g):
        gv = (g[rows] * dd[cols]).sum(axis=1)
        gd = np.zeros(dd.shape)
        np.add.at(gd, cols, vd[:, None] * g[rows])
        return (gv, gd)

    return _out(out, (values, dense), bwd, "spmm")


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate dLoss/dLeaf into every participating leaf's ``grad``.

    The tape is consumed; calling backward twice on it raises StateError, as
    does backward onto a leaf whose grad was not reset since the last call.
    """
    if loss.data.ndim != 0:
        raise RankError(f"backward requires a scalar loss, got shape {loss.shape}")
    if tape.consumed:
        raise StateError("tape already consumed by a previous backward call")
    produced = {id(n.output) for n in tape.nodes}
    if id(loss) not in produced:
        raise StateError("loss was not produced on this tape")
    tape.consumed = True

    leaves: dict[int, Tensor] = {}
    for node in tape.nodes:
        for t in node.inputs:
            if t.requires_grad and id(t) not in produced:
                leaves[id(t)] = t

    grads: dict[int, np.ndarray] = {id(loss): np.ones(())}
    for node in reversed(tape.nodes):
        tape.backward_visits += 1
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        input_grads = node.backward_fn(g)
        for t, ig in zip(node.inputs, input_grads):
            if ig is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + ig
            else:
                grads[key] = ig

    for key, leaf in leaves.items():
        if leaf.grad is not None:
            raise StateError("leaf gradient already set; zero grads before backward")
        g = grads.get(key)
        leaf.grad = np.zeros(leaf.shape) if g is None else np.asarray(g, dtype=np.float64)


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()


def gradient_check(f, inputs: Sequence[Tensor], step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must map the given leaf tensors to a scalar tensor deterministically
    and every input must have requires_grad set. The error per coordinate is
    |analytic - numeric| / max(1, |numeric|).
    """
    if not (1e-8 < step < 1e-3):
        raise DomainError(f"step {step} outside (1e-8, 1e-3)")
    inputs = list(inputs)
    for t in inputs:
        if not t.requires_grad:
            raise DomainError("gradient_check inputs must require grad")
        t.zero_grad()

    with Tape() as tape:
        out = f(*inputs)
        if out.data.ndim != 0:
            raise RankError(f"gradient_check target must be scalar, got {out.shape}")
        backward(out, tape)
    analytic = [
        np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in inputs
    ]
    zero_grads(inputs)

    max_err = 0.0
    for t, g in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = float(f(*inputs).data)
            flat[i] = orig - step
            fm = float(f(*inputs).data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * step)
            err = abs(gflat[i] - numeric) / max(1.0, abs(numeric))
            if err > max_err:
                max_err = err
    return max_err
