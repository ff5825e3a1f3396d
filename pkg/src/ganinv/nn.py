"""Dense feed-forward networks: description, construction and inference.

A layer computes ``act(x @ W + b)`` with ``W`` of shape ``(n_in, n_out)``.
The same code path serves classifiers, generators and discriminators;
their role only constrains the output layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ganinv.autodiff import Tensor, no_grad
from ganinv.autodiff import ops
from ganinv.errors import ShapeError, SpecError

ACTIVATIONS = ("relu", "sigmoid", "tanh", "linear", "softmax")
ROLES = ("classifier", "generator", "discriminator")
# output value range -> final activation it implies for generators
GENERATOR_RANGES = {"unit": "sigmoid", "symmetric": "tanh", "real": "linear"}
LIPSCHITZ = {"relu": 1.0, "tanh": 1.0, "linear": 1.0, "sigmoid": 0.25}


@dataclass(frozen=True)
class LayerSpec:
    n_in: int
    n_out: int
    activation: str


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple
    role: str
    latent_dim: int = 0
    value_range: str = "unit"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        validate(self)

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    @classmethod
    def dense(cls, sizes, hidden="relu", output=None, role="classifier", value_range="unit"):
        """Spec from a size chain like ``[784, 256, 6]``.

        ``output`` defaults to the activation the role requires.
        """
        if output is None:
            output = {
                "classifier": "softmax",
                "discriminator": "sigmoid",
                "generator": GENERATOR_RANGES.get(value_range, "sigmoid"),
            }[role]
        sizes = list(sizes)
        layers = [
            LayerSpec(a, b, hidden if i < len(sizes) - 2 else output)
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]
        latent = sizes[0] if role == "generator" else 0
        return cls(tuple(layers), role, latent, value_range)


def validate(spec: ModelSpec) -> None:
    if spec.role not in ROLES:
        raise SpecError(f"unknown role {spec.role!r}")
    if not spec.layers:
        raise SpecError("a model needs at least one layer")
    for k, layer in enumerate(spec.layers):
        if layer.n_in < 1 or layer.n_out < 1:
            raise SpecError(f"layer {k} has a non-positive size")
        if layer.activation not in ACTIVATIONS:
            raise SpecError(f"layer {k}: unknown activation {layer.activation!r}")
        if layer.activation == "softmax" and k != len(spec.layers) - 1:
            raise SpecError("softmax is only allowed as the output layer")
    for k, (a, b) in enumerate(zip(spec.layers[:-1], spec.layers[1:])):
        if a.n_out != b.n_in:
            raise SpecError(f"layer {k} outputs {a.n_out} but layer {k + 1} expects {b.n_in}")
    last = spec.layers[-1]
    if spec.role == "classifier" and last.activation != "softmax":
        raise SpecError("classifier output layer must be softmax")
    if spec.role == "discriminator" and (last.activation != "sigmoid" or last.n_out != 1):
        raise SpecError("discriminator output layer must be a sigmoid scalar")
    if spec.role == "generator":
        want = GENERATOR_RANGES.get(spec.value_range)
        if want is None:
            raise SpecError(f"unknown generator value range {spec.value_range!r}")
        if last.activation != want:
            raise SpecError(
                f"generator with {spec.value_range!r} range needs a {want} output layer"
            )
        if spec.latent_dim != spec.n_in:
            raise SpecError("generator latent dimension must equal its input size")


@dataclass
class Model:
    spec: ModelSpec
    weights: list  # [(W, b), ...] float64 arrays
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.weights) != len(self.spec.layers):
            raise SpecError("one (W, b) pair per layer is required")
        for k, ((w, b), layer) in enumerate(zip(self.weights, self.spec.layers)):
            if w.shape != (layer.n_in, layer.n_out) or b.shape != (layer.n_out,):
                raise SpecError(f"layer {k} parameter shapes {w.shape}, {b.shape} do not match spec")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise SpecError(f"layer {k} has non-finite parameters")

    def parameters(self) -> list[np.ndarray]:
        return [a for pair in self.weights for a in pair]

    def with_parameters(self, flat, **provenance) -> "Model":
        pairs = [(flat[2 * k], flat[2 * k + 1]) for k in range(len(self.spec.layers))]
        return Model(self.spec, pairs, {**self.provenance, **provenance})


def build(spec: ModelSpec, seed: int) -> Model:
    """Glorot-uniform weights, zero biases, reproducible from ``seed``."""
    validate(spec)
    rng = np.random.default_rng(seed)
    weights = []
    for layer in spec.layers:
        limit = np.sqrt(6.0 / (layer.n_in + layer.n_out))
        w = rng.uniform(-limit, limit, size=(layer.n_in, layer.n_out))
        weights.append((w, np.zeros(layer.n_out)))
    return Model(spec, weights, {"init_seed": seed})


def _activate(h, activation):
    if activation == "relu":
        return ops.relu(h)
    if activation == "sigmoid":
        return ops.sigmoid(h)
    if activation == "tanh":
        return ops.tanh(h)
    return h  # linear; softmax is applied by callers on the logits


def forward(model: Model, x, params=None, logits=False) -> Tensor:
    """Differentiable forward pass.

    ``params`` optionally replaces the model's own arrays with tensors
    (flat list ``[W0, b0, W1, b1, ...]``) so gradients reach them.  For
    classifiers ``logits=True`` returns pre-softmax scores.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim == 1:
        x = ops.reshape(x, (1, -1))
    if x.shape[-1] != model.spec.n_in:
        raise ShapeError(f"input width {x.shape[-1]} != model input {model.spec.n_in}")
    if params is None:
        params = [Tensor(a) for a in model.parameters()]
    h = x
    for k, layer in enumerate(model.spec.layers):
        h = ops.add(ops.matmul(h, params[2 * k]), params[2 * k + 1])
        if layer.activation == "softmax":
            return h if logits else ops.softmax(h)
        h = _activate(h, layer.activation)
    return h


def infer(model: Model, batch) -> np.ndarray:
    """Pure inference; a 1-D input is treated as a batch of one."""
    batch = np.asarray(batch, dtype=np.float64)
    with no_grad():
        return forward(model, batch).data
