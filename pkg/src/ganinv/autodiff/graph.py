"""Reverse sweeps, forward tangent sweeps and Hessian-vector products."""

from __future__ import annotations

import numpy as np

from ganinv.autodiff.tensor import Tensor, add, no_grad
from ganinv.errors import NumericError, ShapeError


def toposort(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` with parents before children."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node.parents):
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def grad(loss: Tensor, leaves, create_graph=False) -> list[Tensor]:
    """Gradient of a scalar ``loss`` with respect to each of ``leaves``.

    Leaves that do not influence ``loss`` get a zero gradient.  With
    ``create_graph`` the returned gradients are themselves graph nodes and
    can be differentiated again.
    """
    if loss.size != 1:
        raise ShapeError(f"grad needs a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is not finite", node=loss.op)
    leaves = list(leaves)
    if not loss.requires_grad:
        return [Tensor(np.zeros_like(leaf.data)) for leaf in leaves]

    keep = {id(leaf) for leaf in leaves}
    grads = {id(loss): Tensor(np.ones_like(loss.data))}
    order = toposort(loss)
    if create_graph:
        _backward(order, grads, keep)
    else:
        with no_grad():
            _backward(order, grads, keep)
    return [grads.get(id(leaf)) or Tensor(np.zeros_like(leaf.data)) for leaf in leaves]


def _backward(order, grads, keep):
    for node in reversed(order):
        g = grads.get(id(node)) if id(node) in keep else grads.pop(id(node), None)
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            if not np.isfinite(pg.data).all():
                raise NumericError(f"non-finite gradient through '{node.op}'", node=node)
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else add(prev, pg)


def push_tangent(output: Tensor, tangents: dict) -> np.ndarray:
    """Forward-mode derivative of ``output`` given tangents of some leaves.

    ``tangents`` maps leaf tensors to their tangent arrays (keyed by the
    Tensor objects themselves).
    """
    seeds = {id(k): np.asarray(v, dtype=np.float64) for k, v in tangents.items()}
    found = {}
    for node in toposort(output):
        if node.jvp is None:
            t = seeds.get(id(node))
        else:
            ts = [found.get(id(p)) for p in node.parents]
            if all(t is None for t in ts):
                t = None
            else:
                ts = [np.zeros_like(p.data) if t is None else t for p, t in zip(node.parents, ts)]
                t = node.jvp(ts)
        if t is not None:
            found[id(node)] = t
    t = found.get(id(output))
    if t is None:
        return np.zeros_like(output.data)
    if not np.isfinite(t).all():
        raise NumericError("non-finite tangent", node=output.op)
    return np.array(t, dtype=np.float64)


class HessianOperator:
    """Gradient graph of ``loss_fn`` at ``x`` reused for many products H·v.

    The gradient is recorded once (reverse sweep with ``create_graph``) and
    each product pushes ``v`` forward through that recorded graph.
    """

    def __init__(self, loss_fn, x):
        self.x = Tensor(np.array(x, dtype=np.float64), requires_grad=True)
        self.loss = loss_fn(self.x)
        (self._grad,) = grad(self.loss, [self.x], create_graph=True)

    @property
    def value(self) -> float:
        return self.loss.item()

    @property
    def gradient(self) -> np.ndarray:
        return self._grad.data

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != self.x.shape:
            raise ShapeError(f"vector {v.shape} does not match point {self.x.shape}")
        return push_tangent(self._grad, {self.x: v})


def hvp(loss_fn, x, v) -> np.ndarray:
    """Hessian of ``loss_fn`` at ``x`` applied to ``v`` (forward-over-reverse)."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != x.shape:
        raise ShapeError(f"vector {v.shape} does not match point {x.shape}")
    return HessianOperator(loss_fn, x)(v)
