"""Tensor with reverse-mode automatic differentiation.

Each op records its parents and a backward closure on the output tensor.
`backward` linearizes the recorded graph into a GradGraph (parents always
precede children) and accumulates gradients in reverse order.
"""
import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from app.domain.exceptions import ContractViolationError


logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording in the current thread."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Tensor:
    """Dense row-major array with an optional gradient."""

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        array = np.asarray(data, dtype=dtype) if dtype is not None else np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.data: np.ndarray = array
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.op = "leaf"
        self.parents: Tuple["Tensor", ...] = ()
        self.backward_fn: Optional[BackwardFn] = None

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        op: str,
        backward_fn: BackwardFn,
    ) -> "Tensor":
        """Create an op output, recording the graph edge when needed."""
        out = cls(data)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.op = op
            out.parents = tuple(parents)
            out.backward_fn = backward_fn
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self.backward_fn is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}, requires_grad={self.requires_grad})"

    # Operator sugar; implementations live in ops.py
    def __add__(self, other):
        from app.infrastructure.tensor import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from app.infrastructure.tensor import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from app.infrastructure.tensor import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from app.infrastructure.tensor import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from app.infrastructure.tensor import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from app.infrastructure.tensor import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from app.infrastructure.tensor import ops
        return ops.div(self, other)

    def __neg__(self):
        from app.infrastructure.tensor import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from app.infrastructure.tensor import ops
        return ops.matmul(self, other)


def as_tensor(value, dtype=None) -> Tensor:
    """Wrap arrays and scalars; tensors pass through unchanged."""
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype) if dtype is not None else value)


@dataclass
class GraphNode:
    """One recorded operation: tag, parent node indices, output tensor."""

    op: str
    parents: Tuple[int, ...]
    tensor: Tensor


@dataclass
class GradGraph:
    """Topologically ordered graph rooted at a scalar loss."""

    nodes: List[GraphNode] = field(default_factory=list)
    gradients: List[Optional[np.ndarray]] = field(default_factory=list)

    @classmethod
    def trace(cls, root: Tensor) -> "GradGraph":
        """Linearize every tensor reachable from root (iterative post-order DFS)."""
        index: Dict[int, int] = {}
        order: List[Tensor] = []
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            tensor, expanded = stack.pop()
            key = id(tensor)
            if key in index:
                continue
            if expanded:
                index[key] = len(order)
                order.append(tensor)
                continue
            stack.append((tensor, True))
            for parent in reversed(tensor.parents):
                if id(parent) not in index and parent.requires_grad:
                    stack.append((parent, False))
        graph = cls()
        for tensor in order:
            parent_ids = tuple(index[id(p)] for p in tensor.parents if id(p) in index)
            graph.nodes.append(GraphNode(tensor.op, parent_ids, tensor))
        graph.gradients = [None] * len(graph.nodes)
        return graph

    def run_backward(self) -> None:
        """Accumulate gradients from the last node (the root) backwards."""
        root = self.nodes[-1].tensor
        self.gradients[-1] = np.ones_like(root.data)
        positions = {id(node.tensor): i for i, node in enumerate(self.nodes)}
        for i in range(len(self.nodes) - 1, -1, -1):
            node = self.nodes[i]
            grad = self.gradients[i]
            if grad is None or node.tensor.backward_fn is None:
                continue
            parent_grads = node.tensor.backward_fn(grad)
            for parent, parent_grad in zip(node.tensor.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                j = positions[id(parent)]
                if parent_grad.shape != parent.data.shape:
                    raise ContractViolationError(
                        f"gradient shape {parent_grad.shape} != value shape {parent.data.shape} "
                        f"in backward of {node.op}"
                    )
                current = self.gradients[j]
                self.gradients[j] = parent_grad if current is None else current + parent_grad


def backward(loss: Tensor, leaves: Optional[Sequence[Tensor]] = None) -> List[np.ndarray]:
    """
    Back-propagate from a scalar loss.

    Gradients are accumulated into `.grad` of every reachable leaf that
    requires grad.

    Args:
        loss: Scalar tensor
        leaves: Optional tensors whose gradients are returned; leaves not on
            any path to the loss get exact zeros

    Returns:
        Gradients aligned with `leaves` (empty list when leaves is None)

    Raises:
        ContractViolationError: If the loss is not a scalar
    """
    if loss.data.size != 1:
        raise ContractViolationError(f"backward requires a scalar loss, got shape {loss.shape}")
    results: Dict[int, np.ndarray] = {}
    if loss.requires_grad:
        graph = GradGraph.trace(loss)
        graph.run_backward()
        for node, grad in zip(graph.nodes, graph.gradients):
            if node.tensor.is_leaf and grad is not None:
                leaf = node.tensor
                leaf.grad = grad.copy() if leaf.grad is None else leaf.grad + grad
                results[id(leaf)] = grad
    if leaves is None:
        return []
    return [
        np.array(results[id(leaf)], copy=True) if id(leaf) in results else np.zeros_like(leaf.data)
        for leaf in leaves
    ]
