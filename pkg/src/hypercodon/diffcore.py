"""Reverse-mode differentiation surface used by every numeric module.

The tape itself is torch's autograd graph; this module fixes the op
vocabulary, the domain clamps near the ball boundary, and ships a
finite-difference checker that shares no code with autograd.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import torch
import torch.nn.functional as F

Tensor = torch.Tensor
DiffTensor = torch.Tensor

ATANH_LIMIT = 1.0 - 1e-12
TRIG_LIMIT = 1.0 - 1e-12
DEFAULT_DTYPE = torch.float64


def tensor(values, requires_grad: bool = False, dtype: torch.dtype = DEFAULT_DTYPE) -> Tensor:
    """Create a leaf tensor (float64 by default)."""
    t = torch.as_tensor(values, dtype=dtype).clone()
    if requires_grad:
        t.requires_grad_(True)
    return t


# -- domain-safe elementwise functions ---------------------------------------


def _limit(x: Tensor, margin: float) -> float:
    # margin below 1 that survives rounding in x's dtype
    return 1.0 - max(margin, 2 * torch.finfo(x.dtype).eps)


def _floor(x: Tensor, floor: float) -> float:
    return max(floor, torch.finfo(x.dtype).tiny)


def artanh(x: Tensor) -> Tensor:
    # clamp region has zero gradient (constant branch)
    lim = _limit(x, 1.0 - ATANH_LIMIT)
    return torch.atanh(x.clamp(-lim, lim))


def asinh(x: Tensor) -> Tensor:
    return torch.asinh(x)


def acos(x: Tensor) -> Tensor:
    lim = _limit(x, 1.0 - TRIG_LIMIT)
    return torch.acos(x.clamp(-lim, lim))


def asin(x: Tensor) -> Tensor:
    lim = _limit(x, 1.0 - TRIG_LIMIT)
    return torch.asin(x.clamp(-lim, lim))


def acosh1p(delta: Tensor) -> Tensor:
    """``arccosh(1 + delta)`` for ``delta >= 0`` without cancellation at 0."""
    delta = delta.clamp_min(0.0)
    q = delta * (delta + 2.0)
    # the floor keeps the gradient finite; the where keeps acosh1p(0) exactly 0
    root = torch.where(q > 0, torch.sqrt(q.clamp_min(_floor(delta, 1e-300))), torch.zeros_like(q))
    return torch.log1p(delta + root)


def safe_norm(x: Tensor, dim: int = -1, keepdim: bool = False, floor: float = 1e-300) -> Tensor:
    """Euclidean norm whose gradient stays finite at the zero vector."""
    return torch.sqrt((x * x).sum(dim=dim, keepdim=keepdim).clamp_min(_floor(x, floor)))


# -- op table -----------------------------------------------------------------


@dataclass
class TapeEntry:
    kind: str
    input_shapes: tuple[tuple[int, ...], ...]
    output_shape: tuple[int, ...]


@dataclass
class Tape:
    """Ordered record of the ops executed through :func:`forward_op`.

    Gradients flow through torch's autograd graph; the record exists for
    inspection and determinism checks.
    """

    entries: list[TapeEntry] = field(default_factory=list)

    def kinds(self) -> list[str]:
        return [e.kind for e in self.entries]


_active_tapes: list[Tape] = []


@contextlib.contextmanager
def recording() -> Iterator[Tape]:
    tape = Tape()
    _active_tapes.append(tape)
    try:
        yield tape
    finally:
        _active_tapes.pop()


def _shapes(xs: Sequence[Tensor]) -> str:
    return ", ".join(str(tuple(x.shape)) for x in xs)


def _broadcast(kind: str, a: Tensor, b: Tensor) -> None:
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError:
        raise ValueError(f"{kind}: shapes {_shapes([a, b])} do not broadcast") from None


def _arity(kind: str, inputs: Sequence[Tensor], n: int) -> None:
    if len(inputs) != n:
        raise ValueError(f"{kind}: expected {n} inputs, got {len(inputs)}")


def _binary(fn):
    def run(kind, inputs, **kw):
        _arity(kind, inputs, 2)
        _broadcast(kind, *inputs)
        return fn(*inputs)

    return run


def _unary(fn):
    def run(kind, inputs, **kw):
        _arity(kind, inputs, 1)
        return fn(inputs[0])

    return run


def _matmul(kind, inputs, **kw):
    _arity(kind, inputs, 2)
    a, b = inputs
    if a.dim() == 0 or b.dim() == 0 or a.shape[-1] != b.shape[0 if b.dim() == 1 else -2]:
        raise ValueError(f"{kind}: shapes {_shapes(inputs)} are not conformable")
    return a @ b


def _dot(kind, inputs, **kw):
    _arity(kind, inputs, 2)
    a, b = inputs
    if a.shape != b.shape:
        raise ValueError(f"{kind}: shapes {_shapes(inputs)} differ")
    return (a * b).sum(dim=-1)


def _reduce(fn):
    def run(kind, inputs, axis=None, keepdim=False, **kw):
        _arity(kind, inputs, 1)
        x = inputs[0]
        if axis is None:
            return fn(x)
        if not -x.dim() <= axis < x.dim():
            raise ValueError(f"{kind}: axis {axis} out of range for shape {tuple(x.shape)}")
        return fn(x, dim=axis, keepdim=keepdim)

    return run


def _norm(kind, inputs, axis=-1, keepdim=False, **kw):
    _arity(kind, inputs, 1)
    return safe_norm(inputs[0], dim=axis, keepdim=keepdim)


def _concat(kind, inputs, axis=0, **kw):
    if not inputs:
        raise ValueError(f"{kind}: needs at least one input")
    ref = list(inputs[0].shape)
    for x in inputs[1:]:
        other = list(x.shape)
        if len(other) != len(ref) or any(
            i != axis % len(ref) and p != q for i, (p, q) in enumerate(zip(ref, other))
        ):
            raise ValueError(f"{kind}: shapes {_shapes(inputs)} cannot be joined on axis {axis}")
    return torch.cat(list(inputs), dim=axis)


def _slice(kind, inputs, start=0, stop=None, axis=0, **kw):
    _arity(kind, inputs, 1)
    x = inputs[0]
    n = x.shape[axis]
    stop = n if stop is None else stop
    if not 0 <= start < stop <= n:
        raise ValueError(f"{kind}: [{start}:{stop}] invalid for axis {axis} of shape {tuple(x.shape)}")
    return x.narrow(axis, start, stop - start)


def _softmax(kind, inputs, axis=-1, **kw):
    _arity(kind, inputs, 1)
    return torch.softmax(inputs[0], dim=axis)


def _layer_norm(kind, inputs, eps=1e-5, **kw):
    if len(inputs) != 3:
        raise ValueError(f"{kind}: expected (x, weight, bias), got {len(inputs)} inputs")
    x, w, b = inputs
    if w.shape != x.shape[-1:] or b.shape != x.shape[-1:]:
        raise ValueError(f"{kind}: shapes {_shapes(inputs)} mismatch on the feature axis")
    return F.layer_norm(x, x.shape[-1:], w, b, eps)


def _embedding(kind, inputs, **kw):
    _arity(kind, inputs, 2)
    table, ids = inputs
    if table.dim() != 2:
        raise ValueError(f"{kind}: table must be 2-D, got {tuple(table.shape)}")
    if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= table.shape[0]):
        raise ValueError(f"{kind}: ids out of range for table {tuple(table.shape)}")
    return table[ids.long()]


def _clamp(kind, inputs, lo=None, hi=None, **kw):
    _arity(kind, inputs, 1)
    return inputs[0].clamp(lo, hi)


OPS: dict[str, Callable] = {
    "add": _binary(torch.add),
    "sub": _binary(torch.sub),
    "mul": _binary(torch.mul),
    "div": _binary(torch.div),
    "matmul": _matmul,
    "sum": _reduce(torch.sum),
    "mean": _reduce(torch.mean),
    "norm": _norm,
    "dot": _dot,
    "concat": _concat,
    "slice": _slice,
    "tanh": _unary(torch.tanh),
    "artanh": _unary(artanh),
    "sinh": _unary(torch.sinh),
    "asinh": _unary(asinh),
    "cosh": _unary(torch.cosh),
    "acos": _unary(acos),
    "asin": _unary(asin),
    "sqrt": _unary(torch.sqrt),
    "exp": _unary(torch.exp),
    "log": _unary(torch.log),
    "softmax": _softmax,
    "layer_norm": _layer_norm,
    "embedding_lookup": _embedding,
    "clamp": _clamp,
    "max0": _unary(torch.relu),
}


def forward_op(kind: str, *inputs: Tensor, **kwargs) -> Tensor:
    """Apply op ``kind`` to ``inputs``, recording it on any active tape."""
    try:
        fn = OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}") from None
    out = fn(kind, inputs, **kwargs)
    for tape in _active_tapes:
        tape.entries.append(
            TapeEntry(kind, tuple(tuple(x.shape) for x in inputs), tuple(out.shape))
        )
    return out


def backward(output: Tensor) -> None:
    """Accumulate d(output)/d(leaf) into ``.grad`` of every requires-grad leaf."""
    if output.numel() != 1:
        raise ValueError(f"backward needs a scalar output, got shape {tuple(output.shape)}")
    output.reshape(()).backward()


# -- finite-difference oracle -------------------------------------------------


@dataclass(frozen=True)
class GradCheck:
    max_rel_error: float
    skipped: bool = False
    reason: str = ""

    def __float__(self) -> float:
        return self.max_rel_error


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    step: float = 1e-6,
    domain: Callable[..., bool] | None = None,
    kink_tol: float = 1e-2,
) -> GradCheck:
    """Compare autograd against central differences for scalar ``f``.

    Returns the largest ``|analytic - numeric| / max(1, |numeric|)`` over
    every input coordinate. A coordinate whose one-sided differences
    disagree by more than ``kink_tol`` marks a non-differentiable point and
    the check is skipped. Raises ``ValueError`` when a probe leaves the
    domain (``domain`` returns False or ``f`` goes non-finite).
    """
    base = [x.detach().to(torch.float64).clone() for x in inputs]

    def value(args: list[Tensor]) -> float:
        with torch.no_grad():
            out = f(*args)
        if out.numel() != 1:
            raise ValueError(f"grad_check needs a scalar function, got shape {tuple(out.shape)}")
        return float(out)

    if domain is not None and not domain(*base):
        raise ValueError("grad_check: inputs lie outside the domain")

    leaves = [x.clone().requires_grad_(True) for x in base]
    out = f(*leaves)
    if out.numel() != 1:
        raise ValueError(f"grad_check needs a scalar function, got shape {tuple(out.shape)}")
    analytic = torch.autograd.grad(out.reshape(()), leaves, allow_unused=True)
    f0 = float(out.detach())

    worst = 0.0
    for i, x in enumerate(base):
        g = analytic[i]
        g = torch.zeros_like(x) if g is None else g.detach()
        flat = x.reshape(-1)
        for j in range(flat.numel()):
            probes = []
            for sign in (1.0, -1.0):
                args = [b.clone() for b in base]
                args[i].reshape(-1)[j] += sign * step
                if domain is not None and not domain(*args):
                    raise ValueError(f"grad_check: input {i} sits on a domain boundary (coordinate {j})")
                v = value(args)
                if not torch.isfinite(torch.tensor(v)):
                    raise ValueError(f"grad_check: non-finite value next to input {i}, coordinate {j}")
                probes.append(v)
            fp, fm = probes
            numeric = (fp - fm) / (2 * step)
            one_sided = abs((fp - f0) / step - (f0 - fm) / step)
            if one_sided > kink_tol * max(1.0, abs(numeric)):
                return GradCheck(float("nan"), True, f"non-differentiable at input {i}, coordinate {j}")
            err = abs(float(g.reshape(-1)[j]) - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return GradCheck(worst)
