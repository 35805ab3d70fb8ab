#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module provides the numerical core: a numpy-backed Tensor with
define-by-run reverse-mode differentiation.

Every differentiable operation builds its result through make_op(),
which records the input tensors and a backward rule on the output.
backward() orders the recorded graph topologically (ComputationTape)
and applies the chain rule from a scalar loss down to the leaves.

Conventions:
- Images are (batch, channel, height, width) arrays.
- Convolutions use cross-correlation semantics.
- Binary operations require equal shapes; python scalars are the only
  implicit operand expansion. Use broadcast_to() or reshape() otherwise.
- Any operation producing NaN/Inf raises NonFiniteError.
- Precision is chosen at tensor creation: float32 for training,
  float64 for gradient checks.

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
from contextlib import contextmanager
from dataclasses import dataclass
from numbers import Number
import threading
from typing import Any, Callable, Iterable, Iterator, Optional, Sequence, Union

# Third party packages
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

# pyexo2ego libs
from pyexo2ego.libs.exceptions import AppBaseException

# ------------------------
# Constants
# ------------------------

DEFAULT_DTYPE = np.float32
LOG_EPSILON = 1e-12             # Guard of log(): log(max(x, LOG_EPSILON))
NORM_EPSILON = 1e-12            # Zero-safe denominator of l2_norm gradient
INSTANCE_NORM_EPSILON = 1e-5
GRAD_CHECK_FLOOR = 1e-8         # Denominator floor of grad_check errors

Scalar = Union[int, float, np.floating, np.integer]
BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

# ------------------------
# Exceptions
# ------------------------

class AutodiffException(AppBaseException):
    """
    Base exception for tensor and differentiation errors.
    """
    pass


class ShapeMismatchError(AutodiffException):
    """
    Raised when operand shapes are incompatible; names both shapes.
    """

    def __init__(self, op: str, first: tuple, second: tuple, detail: str = ""):
        self.op = op
        self.shapes = (tuple(first), tuple(second))
        suffix = f" ({detail})" if detail else ""
        super().__init__(
            f"{op}: incompatible shapes {tuple(first)} and {tuple(second)}{suffix}"
        )


class NonFiniteError(AutodiffException):
    """
    Raised when an operation produces NaN or Inf values.
    """

    def __init__(self, op: str):
        self.op = op
        super().__init__(f"{op} produced non-finite values (NaN or Inf)")


# ------------------------
# Gradient Mode
# ------------------------

_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """
    Disable graph recording in the current thread.

    Operations evaluated inside the block produce constant tensors.
    Used for inference, evaluation and for the fake images fed to
    the discriminator update.

    Example:
        >>> with no_grad():
        ...     fake = model.generate("g1", exo)
        >>> fake.requires_grad
        False
    """

    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


# ------------------------
# Tensor
# ------------------------

class Tensor:
    """
    Dense n-dimensional array with optional gradient tracking.

    Attributes:
        data (np.ndarray): C-contiguous values
        requires_grad (bool): Whether gradients flow to this tensor
        grad (Optional[np.ndarray]): Gradient accumulator, same shape as
            data, None until a backward pass reaches it
        name (str): Optional label used in error messages and checkpoints
    """

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        dtype: Optional[Any] = None,
        name: str = ""
    ) -> None:
        """
        Create a leaf tensor.

        Args:
            data (Any): Array-like values. Floating numpy arrays keep their
                precision unless dtype is given; everything else defaults
                to float32.
            requires_grad (bool, optional): Track gradients. Defaults to False.
            dtype (Optional[Any], optional): Force a precision
                (np.float32 or np.float64). Defaults to None.
            name (str, optional): Label. Defaults to "".

        Raises:
            AutodiffException: On zero-sized extents
            NonFiniteError: On NaN/Inf values
        """

        if dtype is None:
            is_float_array = isinstance(data, np.ndarray) \
                and np.issubdtype(data.dtype, np.floating)
            dtype = data.dtype if is_float_array else DEFAULT_DTYPE
        array = np.array(data, dtype=dtype, order="C", copy=True)
        if any(extent < 1 for extent in array.shape):
            raise AutodiffException(
                f"Tensor extents must be >= 1, got shape {array.shape}"
            )
        _check_finite(array, name or "tensor creation")
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._inputs: tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardRule] = None
        self._op = ""


    @classmethod
    def _from_op(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.ascontiguousarray(data)
        out.requires_grad = requires_grad
        out.grad = None
        out.name = ""
        out._inputs = ()
        out._backward = None
        out._op = ""
        return out


    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


    @property
    def ndim(self) -> int:
        return self.data.ndim


    @property
    def size(self) -> int:
        return self.data.size


    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype


    @property
    def is_leaf(self) -> bool:
        return self._backward is None


    def numpy(self) -> np.ndarray:
        """
        Return a copy of the values.
        """

        return self.data.copy()


    def item(self) -> float:
        if self.data.size != 1:
            raise AutodiffException(
                f"item() needs a single-element tensor, got shape {self.shape}"
            )
        return float(self.data.reshape(-1)[0])


    def detach(self) -> "Tensor":
        """
        Return a constant tensor sharing this tensor's values.
        """

        return Tensor._from_op(self.data, requires_grad=False)


    def zero_grad(self) -> None:
        self.grad = None


    def __repr__(self) -> str:
        label = f" '{self.name}'" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}, " \
            + f"requires_grad={self.requires_grad})"


    # Operator sugar, all routed through the functions below

    def __add__(self, other: Union["Tensor", Scalar]) -> "Tensor":
        return add(self, other)


    def __radd__(self, other: Scalar) -> "Tensor":
        return add(self, other)


    def __sub__(self, other: Union["Tensor", Scalar]) -> "Tensor":
        return sub(self, other)


    def __rsub__(self, other: Scalar) -> "Tensor":
        return add(neg(self), other)


    def __mul__(self, other: Union["Tensor", Scalar]) -> "Tensor":
        return mul(self, other)


    def __rmul__(self, other: Scalar) -> "Tensor":
        return mul(self, other)


    def __truediv__(self, other: Union["Tensor", Scalar]) -> "Tensor":
        return div(self, other)


    def __neg__(self) -> "Tensor":
        return neg(self)


    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


    def sum(self, axis: Optional[Union[int, tuple]] = None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis, keepdims)


    def mean(self, axis: Optional[Union[int, tuple]] = None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis, keepdims)


    def reshape(self, *shape: Any) -> "Tensor":
        target = shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape
        return reshape(self, target)


# ------------------------
# Recording Primitive
# ------------------------

def _check_finite(array: np.ndarray, op: str) -> None:
    if not np.isfinite(array).all():
        raise NonFiniteError(op)


def make_op(
    data: np.ndarray,
    inputs: Sequence[Tensor],
    backward_rule: BackwardRule,
    op: str = "op"
) -> Tensor:
    """
    Wrap an operation result and record how to differentiate it.

    The output tracks gradients when recording is enabled and at least
    one input does. backward_rule receives the gradient of the output
    and returns one gradient (or None) per input, in input order.

    Args:
        data (np.ndarray): Forward result
        inputs (Sequence[Tensor]): Operands the result depends on
        backward_rule (BackwardRule): Output gradient -> input gradients
        op (str, optional): Operation name for errors. Defaults to "op".

    Returns:
        Tensor: The result

    Raises:
        NonFiniteError: If data holds NaN or Inf

    Example:
        >>> def double(x):
        ...     return make_op(x.data * 2, (x,), lambda g: (g * 2,), "double")
    """

    data = np.asarray(data)
    _check_finite(data, op)
    tracked = is_grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor._from_op(data, requires_grad=tracked)
    if tracked:
        out._inputs = tuple(inputs)
        out._backward = backward_rule
        out._op = op
    return out


# ------------------------
# Computation Tape
# ------------------------

@dataclass(frozen=True)
class TapeEntry:
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward_rule: BackwardRule
    op: str


class ComputationTape:
    """
    Topologically ordered list of the operations behind a tensor.

    Every entry's inputs are produced by earlier entries (or are leaves),
    so replaying the list in reverse visits each output before any of
    its inputs. The order only depends on the graph structure and the
    input order of each operation, which makes backward deterministic.

    Attributes:
        entries (list[TapeEntry]): Recorded operations, inputs first
        leaves (list[Tensor]): Gradient-tracking leaves in first-visit order
    """

    def __init__(self, entries: list[TapeEntry], leaves: list[Tensor]) -> None:
        self.entries = entries
        self.leaves = leaves


    @classmethod
    def from_loss(cls, loss: Tensor) -> "ComputationTape":
        """
        Collect the graph reachable from a tensor (iterative DFS post-order).

        Args:
            loss (Tensor): Root tensor

        Returns:
            ComputationTape: The ordered tape
        """

        entries: list[TapeEntry] = []
        leaves: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(loss, False)]

        while stack:
            node, expanded = stack.pop()
            if expanded:
                entries.append(TapeEntry(
                    node, node._inputs, node._backward, node._op
                ))
                continue
            if id(node) in visited or not node.requires_grad:
                continue
            visited.add(id(node))
            if node.is_leaf:
                leaves.append(node)
                continue
            stack.append((node, True))
            for parent in reversed(node._inputs):
                if id(parent) not in visited:
                    stack.append((parent, False))

        return cls(entries, leaves)


    def __len__(self) -> int:
        return len(self.entries)


    def backward(self, loss: Tensor) -> None:
        """
        Apply the chain rule from loss back to the leaves of this tape.

        Leaf gradients accumulate into Tensor.grad; intermediate
        gradients are released as soon as they have been propagated.
        """

        if loss.is_leaf:
            if loss.requires_grad:
                _accumulate(loss, np.ones_like(loss.data))
            return

        pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self.entries):
            grad_out = pending.pop(id(entry.output), None)
            if grad_out is None:
                continue
            grads_in = entry.backward_rule(grad_out)
            for tensor, grad in zip(entry.inputs, grads_in):
                if grad is None or not tensor.requires_grad:
                    continue
                if grad.shape != tensor.shape:
                    raise ShapeMismatchError(
                        f"backward of {entry.op}", grad.shape, tensor.shape,
                        "gradient does not match its operand"
                    )
                if tensor.is_leaf:
                    _accumulate(tensor, grad)
                elif id(tensor) in pending:
                    pending[id(tensor)] = pending[id(tensor)] + grad
                else:
                    pending[id(tensor)] = grad


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    grad = grad.astype(tensor.dtype, copy=False)
    if tensor.grad is None:
        tensor.grad = np.array(grad, copy=True)
    else:
        tensor.grad = tensor.grad + grad


def backward(loss: Tensor, leaves: Optional[Iterable[Tensor]] = None) -> None:
    """
    Populate grad on every gradient-tracking leaf reachable from loss.

    Calling backward twice without resetting grads accumulates. Leaves
    passed in `leaves` that the loss does not reach get a zero gradient
    (when they have none yet), so optimizers always see a full set.

    Args:
        loss (Tensor): Scalar (single-element) tensor
        leaves (Optional[Iterable[Tensor]], optional): Parameters expected
            to receive a gradient. Defaults to None.

    Raises:
        AutodiffException: If loss is not a scalar

    Example:
        >>> w = Tensor([1.0, 2.0], requires_grad=True)
        >>> x = Tensor([3.0, 4.0])
        >>> backward((w * x).sum())
        >>> w.grad
        array([3., 4.], dtype=float32)
    """

    if loss.size != 1:
        raise AutodiffException(
            f"backward() needs a scalar loss, got shape {loss.shape}"
        )
    ComputationTape.from_loss(loss).backward(loss)
    for leaf in leaves or ():
        if leaf.requires_grad and leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)


# ------------------------
# Helper Functions
# ------------------------

def _is_scalar(value: Any) -> bool:
    return isinstance(value, Number) and not isinstance(value, bool)


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(op, a.shape, b.shape)


def _normalize_axis(axis: Optional[Union[int, Sequence[int]]], ndim: int) -> Optional[tuple[int, ...]]:
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, (int, np.integer)) else tuple(axis)
    return tuple(sorted(int(a) % ndim for a in axes))


def _expand_reduced(grad: np.ndarray, shape: tuple, axis: Optional[tuple], keepdims: bool) -> np.ndarray:
    """
    Broadcast a reduction's output gradient back to its input shape.
    """

    if axis is not None and not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape)


def tensor(data: Any, requires_grad: bool = False, dtype: Optional[Any] = None, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype, name=name)


def zeros(shape: Sequence[int], dtype: Any = DEFAULT_DTYPE, requires_grad: bool = False, name: str = "") -> Tensor:
    return Tensor(np.zeros(tuple(shape), dtype=dtype), requires_grad=requires_grad, name=name)


def ones(shape: Sequence[int], dtype: Any = DEFAULT_DTYPE, requires_grad: bool = False, name: str = "") -> Tensor:
    return Tensor(np.ones(tuple(shape), dtype=dtype), requires_grad=requires_grad, name=name)


def randn(
    rng: np.random.Generator,
    shape: Sequence[int],
    std: float = 1.0,
    dtype: Any = DEFAULT_DTYPE,
    requires_grad: bool = False,
    name: str = ""
) -> Tensor:
    """
    Gaussian N(0, std²) tensor drawn from a seeded generator.
    """

    values = rng.standard_normal(tuple(shape)) * std
    return Tensor(values.astype(dtype), requires_grad=requires_grad, name=name)


# ------------------------
# Elementwise Operations
# ------------------------

def add(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if _is_scalar(b):
        return make_op(a.data + b, (a,), lambda g: (g,), "add")
    _require_same_shape("add", a, b)
    return make_op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if _is_scalar(b):
        return make_op(a.data - b, (a,), lambda g: (g,), "sub")
    _require_same_shape("sub", a, b)
    return make_op(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if _is_scalar(b):
        return scalar_mul(a, b)
    _require_same_shape("mul", a, b)
    return make_op(
        a.data * b.data, (a, b),
        lambda g: (g * b.data, g * a.data),
        "mul"
    )


def scalar_mul(a: Tensor, factor: Scalar) -> Tensor:
    return make_op(a.data * factor, (a,), lambda g: (g * factor,), "scalar_mul")


def div(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if _is_scalar(b):
        return scalar_mul(a, 1.0 / b)
    _require_same_shape("div", a, b)
    out = a.data / b.data
    return make_op(
        out, (a, b),
        lambda g: (g / b.data, -g * out / b.data),
        "div"
    )


def neg(a: Tensor) -> Tensor:
    return make_op(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_op(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    """
    Guarded natural log: log(max(x, 1e-12)).

    The gradient is 1/x above the guard and 0 where the guard applies.
    """

    guarded = a.data > LOG_EPSILON
    out = np.log(np.where(guarded, a.data, LOG_EPSILON))
    return make_op(
        out, (a,),
        lambda g: (np.where(guarded, g / np.where(guarded, a.data, 1.0), 0.0).astype(a.dtype),),
        "log"
    )


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return make_op(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def abs_(a: Tensor) -> Tensor:
    return make_op(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return make_op(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    slope = np.where(a.data > 0, 1.0, alpha).astype(a.dtype)
    return make_op(a.data * slope, (a,), lambda g: (g * slope,), "leaky_relu")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_op(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a: Tensor) -> Tensor:
    out = special.expit(a.data)
    return make_op(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def log_sigmoid(a: Tensor) -> Tensor:
    """
    Stable log σ(x); log(1 − σ(x)) is log_sigmoid(−x).
    """

    out = special.log_expit(a.data)
    return make_op(
        out, (a,),
        lambda g: (g * special.expit(-a.data),),
        "log_sigmoid"
    )


# ------------------------
# Shape Operations
# ------------------------

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    original = a.shape
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeMismatchError("reshape", original, tuple(shape)) from exc
    return make_op(out, (a,), lambda g: (g.reshape(original),), "reshape")


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_op(
        np.transpose(a.data, axes), (a,),
        lambda g: (np.transpose(g, inverse),),
        "transpose"
    )


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    """
    Explicit numpy-style broadcast; the gradient sums the copies back.
    """

    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError as exc:
        raise ShapeMismatchError("broadcast_to", a.shape, shape) from exc
    original = a.shape

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        extra = g.ndim - len(original)
        g = g.sum(axis=tuple(range(extra))) if extra else g
        stretched = tuple(
            i for i, extent in enumerate(original)
            if extent == 1 and g.shape[i] != 1
        )
        if stretched:
            g = g.sum(axis=stretched, keepdims=True)
        return (g,)

    return make_op(out, (a,), rule, "broadcast_to")


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis = axis % a.ndim
    if not 0 <= start < stop <= a.shape[axis]:
        raise AutodiffException(
            f"slice_axis: range [{start}, {stop}) outside axis {axis} "
            + f"of shape {a.shape}"
        )
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return make_op(a.data[index], (a,), rule, "slice_axis")


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """
    Stack two (B,C,H,W) tensors along the channel axis.

    Raises:
        ShapeMismatchError: If batch or spatial extents differ
    """

    if a.ndim != 4 or b.ndim != 4 or a.shape[0] != b.shape[0] \
        or a.shape[2:] != b.shape[2:]:
        raise ShapeMismatchError(
            "concat_channels", a.shape, b.shape, "batch and spatial extents must match"
        )
    split = a.shape[1]
    return make_op(
        np.concatenate([a.data, b.data], axis=1), (a, b),
        lambda g: (g[:, :split], g[:, split:]),
        "concat_channels"
    )


def slice_channels(a: Tensor, start: int, stop: int) -> Tensor:
    return slice_axis(a, 1, start, stop)


# ------------------------
# Reductions
# ------------------------

def reduce_sum(a: Tensor, axis: Optional[Union[int, Sequence[int]]] = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, a.ndim)
    shape = a.shape
    return make_op(
        np.sum(a.data, axis=axes, keepdims=keepdims), (a,),
        lambda g: (_expand_reduced(g, shape, axes, keepdims).copy(),),
        "sum"
    )


def reduce_mean(a: Tensor, axis: Optional[Union[int, Sequence[int]]] = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, a.ndim)
    shape = a.shape
    count = a.size if axes is None else int(np.prod([shape[i] for i in axes]))
    return make_op(
        np.mean(a.data, axis=axes, keepdims=keepdims), (a,),
        lambda g: ((_expand_reduced(g, shape, axes, keepdims) / count).astype(a.dtype),),
        "mean"
    )


def _reduce_extreme(a: Tensor, axis: Optional[Union[int, Sequence[int]]], keepdims: bool, which: str) -> Tensor:
    axes = _normalize_axis(axis, a.ndim)
    reducer = np.max if which == "max" else np.min
    kept = reducer(a.data, axis=axes, keepdims=True)
    # Ties share the gradient equally
    mask = (a.data == kept).astype(a.dtype)
    mask /= mask.sum(axis=axes, keepdims=True)
    out = kept if keepdims else reducer(a.data, axis=axes)
    shape = a.shape
    return make_op(
        out, (a,),
        lambda g: (_expand_reduced(g, shape, axes, keepdims) * mask,),
        which
    )


def reduce_max(a: Tensor, axis: Optional[Union[int, Sequence[int]]] = None, keepdims: bool = False) -> Tensor:
    return _reduce_extreme(a, axis, keepdims, "max")


def reduce_min(a: Tensor, axis: Optional[Union[int, Sequence[int]]] = None, keepdims: bool = False) -> Tensor:
    return _reduce_extreme(a, axis, keepdims, "min")


def mean_abs(a: Tensor) -> Tensor:
    """
    Mean absolute value, the L1 distance used by the image losses.

    Example:
        >>> mean_abs(Tensor([1.0, -1.0, 2.0])).item()
        1.3333333...
    """

    return reduce_mean(abs_(a))


def l2_norm(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """
    Euclidean norm along one axis, with a zero-safe gradient.
    """

    axes = _normalize_axis(axis, a.ndim)
    norm_kept = np.sqrt(np.sum(a.data * a.data, axis=axes, keepdims=True))
    out = norm_kept if keepdims else np.squeeze(norm_kept, axis=axes)
    shape = a.shape

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        g = _expand_reduced(g, shape, axes, keepdims)
        return (g * a.data / np.maximum(norm_kept, NORM_EPSILON),)

    return make_op(out, (a,), rule, "l2_norm")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    out = special.softmax(a.data, axis=axis)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return make_op(out, (a,), rule, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    out = special.log_softmax(a.data, axis=axis)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),)

    return make_op(out, (a,), rule, "log_softmax")


# ------------------------
# Linear Algebra
# ------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of 2-D operands or batched 3-D operands.

    Raises:
        ShapeMismatchError: On rank, batch or inner-dimension mismatch
    """

    if a.ndim != b.ndim or a.ndim not in (2, 3) \
        or a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    return make_op(
        np.matmul(a.data, b.data), (a, b),
        lambda g: (
            np.matmul(g, np.swapaxes(b.data, -1, -2)),
            np.matmul(np.swapaxes(a.data, -1, -2), g)
        ),
        "matmul"
    )


# ------------------------
# Image Operations
# ------------------------

def _pad_spatial(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _windows(x_padded: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """
    Strided (B,C,H',W',kh,kw) view of all kernel placements.
    """

    view = sliding_window_view(x_padded, (kh, kw), axis=(2, 3))
    return view[:, :, ::stride, ::stride]


def _scatter_windows(cols: np.ndarray, height: int, width: int, stride: int) -> np.ndarray:
    """
    Sum (B,C,H',W',kh,kw) window contributions into a (B,C,height,width)
    raster; the adjoint of _windows.
    """

    batch, channels, out_h, out_w, kh, kw = cols.shape
    raster = np.zeros((batch, channels, height, width), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            raster[
                :, :,
                i:i + stride * (out_h - 1) + 1:stride,
                j:j + stride * (out_w - 1) + 1:stride
            ] += cols[..., i, j]
    return raster


def _check_conv_args(op: str, x: Tensor, kernel: Tensor, bias: Optional[Tensor], kernel_in_axis: int, stride: int, padding: int) -> None:
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeMismatchError(op, x.shape, kernel.shape, "expected 4-D input and kernel")
    if x.shape[1] != kernel.shape[kernel_in_axis]:
        raise ShapeMismatchError(op, x.shape, kernel.shape, "input channels differ")
    out_axis = 1 - kernel_in_axis
    if bias is not None and bias.shape != (kernel.shape[out_axis],):
        raise ShapeMismatchError(op, bias.shape, kernel.shape, "bias must have one value per output channel")
    if stride < 1 or padding < 0:
        raise AutodiffException(f"{op}: stride must be >= 1 and padding >= 0")


def conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """
    2-D cross-correlation with zero padding.

    Output extent: H' = floor((H + 2·padding − kh) / stride) + 1.

    Args:
        x (Tensor): Input (B, Cin, H, W)
        kernel (Tensor): Weights (Cout, Cin, kh, kw)
        bias (Optional[Tensor], optional): (Cout,). Defaults to None.
        stride (int, optional): Step between placements. Defaults to 1.
        padding (int, optional): Zero border on each side. Defaults to 0.

    Returns:
        Tensor: (B, Cout, H', W')

    Raises:
        ShapeMismatchError: On channel, rank or kernel-size mismatch

    Example:
        >>> x = Tensor(np.ones((1, 1, 3, 3)))
        >>> k = Tensor(np.ones((1, 1, 3, 3)))
        >>> conv2d(x, k, padding=1).data[0, 0]
        array([[4., 6., 4.], [6., 9., 6.], [4., 6., 4.]])
    """

    _check_conv_args("conv2d", x, kernel, bias, 1, stride, padding)
    _, _, kh, kw = kernel.shape
    height, width = x.shape[2] + 2 * padding, x.shape[3] + 2 * padding
    if kh > height or kw > width:
        raise ShapeMismatchError("conv2d", x.shape, kernel.shape, "kernel larger than padded input")

    windows = _windows(_pad_spatial(x.data, padding), kh, kw, stride)
    out = np.einsum("bchwij,ocij->bohw", windows, kernel.data, optimize=True)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    operands = (x, kernel) if bias is None else (x, kernel, bias)

    def rule(g: np.ndarray) -> tuple:
        cols = np.einsum("bohw,ocij->bchwij", g, kernel.data, optimize=True)
        grad_x = _scatter_windows(cols, height, width, stride)
        grad_x = grad_x[:, :, padding:height - padding, padding:width - padding]
        grad_k = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        grads = (np.ascontiguousarray(grad_x), grad_k.astype(kernel.dtype))
        return grads + ((g.sum(axis=(0, 2, 3)),) if bias is not None else ())

    return make_op(out, operands, rule, "conv2d")


def conv_transpose2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """
    Transposed convolution, the adjoint of conv2d.

    Its forward pass equals the input gradient of a conv2d with the same
    kernel, stride and padding. Output extent:
    H'' = (H − 1)·stride − 2·padding + kh.

    Args:
        x (Tensor): Input (B, Cin, H, W)
        kernel (Tensor): Weights (Cin, Cout, kh, kw)
        bias (Optional[Tensor], optional): (Cout,). Defaults to None.
        stride (int, optional): Upsampling factor. Defaults to 1.
        padding (int, optional): Border cropped on each side. Defaults to 0.

    Returns:
        Tensor: (B, Cout, H'', W'')

    Raises:
        ShapeMismatchError: On channel or rank mismatch, or a padding
            that would crop the whole output
    """

    _check_conv_args("conv_transpose2d", x, kernel, bias, 0, stride, padding)
    _, _, kh, kw = kernel.shape
    full_h = (x.shape[2] - 1) * stride + kh
    full_w = (x.shape[3] - 1) * stride + kw
    if full_h - 2 * padding < 1 or full_w - 2 * padding < 1:
        raise ShapeMismatchError("conv_transpose2d", x.shape, kernel.shape, "padding crops the whole output")

    cols = np.einsum("bchw,coij->bohwij", x.data, kernel.data, optimize=True)
    full = _scatter_windows(cols, full_h, full_w, stride)
    out = full[:, :, padding:full_h - padding, padding:full_w - padding]
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    operands = (x, kernel) if bias is None else (x, kernel, bias)

    def rule(g: np.ndarray) -> tuple:
        windows = _windows(_pad_spatial(g, padding), kh, kw, stride)
        grad_x = np.einsum("bohwij,coij->bchw", windows, kernel.data, optimize=True)
        grad_k = np.tensordot(x.data, windows, axes=([0, 2, 3], [0, 2, 3]))
        grads = (grad_x.astype(x.dtype), grad_k.astype(kernel.dtype))
        return grads + ((g.sum(axis=(0, 2, 3)),) if bias is not None else ())

    return make_op(out, operands, rule, "conv_transpose2d")


def instance_norm(x: Tensor, eps: float = INSTANCE_NORM_EPSILON) -> Tensor:
    """
    Normalize each (sample, channel) plane to zero mean and unit variance.

    No affine parameters; the variance is the biased estimate.
    """

    if x.ndim != 4:
        raise AutodiffException(f"instance_norm needs (B,C,H,W), got {x.shape}")
    count = x.shape[2] * x.shape[3]
    mean = x.data.mean(axis=(2, 3), keepdims=True)
    centered = x.data - mean
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=(2, 3), keepdims=True) + eps)
    x_hat = centered * inv_std

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        g_sum = g.sum(axis=(2, 3), keepdims=True)
        g_dot = (g * x_hat).sum(axis=(2, 3), keepdims=True)
        return ((inv_std / count * (count * g - g_sum - x_hat * g_dot)).astype(x.dtype),)

    return make_op(x_hat, (x,), rule, "instance_norm")


def avg_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """
    Non-overlapping size×size average pooling.
    """

    batch, channels, height, width = x.shape
    if height % size or width % size:
        raise AutodiffException(
            f"avg_pool2d: spatial extents {height}x{width} not divisible by {size}"
        )
    blocks = x.data.reshape(batch, channels, height // size, size, width // size, size)
    scale = 1.0 / (size * size)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        spread = np.repeat(np.repeat(g, size, axis=2), size, axis=3)
        return ((spread * scale).astype(x.dtype),)

    return make_op(blocks.mean(axis=(3, 5)), (x,), rule, "avg_pool2d")


# ------------------------
# Gradient Checking
# ------------------------

def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5) -> float:
    """
    Compare analytic gradients with central finite differences.

    Every entry of every input is perturbed by ±eps; the error of an
    entry is |analytic − numeric| / max(|analytic|, |numeric|, 1e-8).
    Inputs should be float64 tensors with requires_grad set.

    Args:
        fn (Callable[..., Tensor]): Function of the inputs returning a scalar
        inputs (Sequence[Tensor]): Tensors to differentiate against
        eps (float, optional): Perturbation. Defaults to 1e-5.

    Returns:
        float: Maximum relative error over all entries

    Raises:
        AutodiffException: If fn is not scalar-valued or eps <= 0

    Example:
        >>> x = Tensor(np.random.default_rng(0).normal(size=5), requires_grad=True)
        >>> grad_check(lambda t: reduce_mean(tanh(t)), [x]) < 1e-6
        True
    """

    if eps <= 0:
        raise AutodiffException(f"grad_check: eps must be positive, got {eps}")
    for tensor in inputs:
        tensor.requires_grad = True
        tensor.grad = None

    out = fn(*inputs)
    if out.size != 1:
        raise AutodiffException(
            f"grad_check: function must return a scalar, got shape {out.shape}"
        )
    backward(out, leaves=inputs)
    analytic = [tensor.grad.reshape(-1).astype(np.float64) for tensor in inputs]

    worst = 0.0
    with no_grad():
        for tensor, expected in zip(inputs, analytic):
            flat = tensor.data.reshape(-1)
            for k in range(flat.size):
                original = flat[k]
                flat[k] = original + eps
                plus = fn(*inputs).item()
                flat[k] = original - eps
                minus = fn(*inputs).item()
                flat[k] = original
                numeric = (plus - minus) / (2.0 * eps)
                denominator = max(abs(expected[k]), abs(numeric), GRAD_CHECK_FLOOR)
                worst = max(worst, abs(expected[k] - numeric) / denominator)
    return worst
