"""Reverse-mode autodiff, Hessian-vector products, CG and optimizers."""

from ganinv.autodiff import tensor as ops
from ganinv.autodiff.cg import CGResult, cg_solve
from ganinv.autodiff.graph import HessianOperator, grad, hvp, push_tangent, toposort
from ganinv.autodiff.optim import OptimizerState, optimizer_step
from ganinv.autodiff.tensor import Tensor, constant, no_grad

__all__ = [
    "CGResult",
    "HessianOperator",
    "OptimizerState",
    "Tensor",
    "cg_solve",
    "constant",
    "grad",
    "hvp",
    "no_grad",
    "ops",
    "optimizer_step",
    "push_tangent",
    "toposort",
]
