"""Training loops for the target classifier and the GAN."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ganinv.autodiff import OptimizerState, Tensor, grad, no_grad, optimizer_step
from ganinv.autodiff import ops
from ganinv.data import Dataset
from ganinv.errors import ConfigError, DataError, GanInvError, NumericError
from ganinv.nn import Model, ModelSpec, build, forward

LOG_CLAMP = 1e-7
PRIORS = ("normal", "uniform")
GEN_LOSSES = ("non-saturating", "minimax")


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def state(self) -> OptimizerState:
        return OptimizerState(self.kind, self.lr, self.beta1, self.beta2, self.eps)


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    # GAN only
    disc_optimizer: OptimizerConfig = None
    d_steps: int = 1
    gen_loss: str = "non-saturating"
    prior: str = "normal"
    latent_dim: int = 64

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.d_steps < 1 or self.latent_dim < 1:
            raise ConfigError("epochs >= 0, batch_size, d_steps, latent_dim >= 1 required")
        if self.gen_loss not in GEN_LOSSES:
            raise ConfigError(f"gen_loss must be one of {GEN_LOSSES}")
        if self.prior not in PRIORS:
            raise ConfigError(f"prior must be one of {PRIORS}")
        if self.disc_optimizer is None:
            self.disc_optimizer = OptimizerConfig(**vars(self.optimizer))


@dataclass
class TrainReport:
    columns: tuple
    rows: list = field(default_factory=list)
    wall_clock: float = 0.0  # seconds; kept out of written artifacts
    notes: dict = field(default_factory=dict)

    def column(self, name) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


class TrainingDiverged(GanInvError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


def smoothed_loss_ok(losses, window=5, max_rise=0.10) -> bool:
    """True when the ``window``-epoch moving average never rises by more than ``max_rise``."""
    losses = np.asarray(losses, dtype=np.float64)
    if len(losses) < window + 1:
        return True
    ma = np.convolve(losses, np.ones(window) / window, mode="valid")
    return bool(np.all(ma[1:] <= ma[:-1] * (1.0 + max_rise) + 1e-12))


def _batches(n, batch_size, rng):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def _check_batch(data: Dataset, cfg: TrainConfig):
    if len(data) == 0:
        raise DataError("cannot train on an empty dataset")
    if cfg.batch_size > len(data):
        raise ConfigError(f"batch size {cfg.batch_size} exceeds dataset size {len(data)}")


# ---------------------------------------------------------------- classifier


def classifier_metrics(model: Model, data: Dataset) -> tuple[float, float]:
    """(mean cross-entropy, accuracy) over the whole dataset."""
    with no_grad():
        logits = forward(model, data.images, logits=True)
        loss = ops.softmax_cross_entropy(logits, data.onehot()).item()
    acc = float(np.mean(np.argmax(logits.data, axis=1) == data.labels))
    return loss, acc


def train_classifier(data: Dataset, spec: ModelSpec, cfg: TrainConfig):
    """Mini-batch cross-entropy training; returns ``(model, report)``."""
    if spec.role != "classifier":
        raise ConfigError("train_classifier needs a classifier spec")
    if spec.n_out != data.n_classes:
        raise DataError(f"model has {spec.n_out} outputs but data has {data.n_classes} classes")
    _check_batch(data, cfg)
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    model = build(spec, cfg.seed)
    params = model.parameters()
    state = cfg.optimizer.state()
    onehot = data.onehot()
    report = TrainReport(("epoch", "loss", "accuracy"))
    for epoch in range(cfg.epochs):
        losses = []
        for idx in _batches(len(data), cfg.batch_size, rng):
            leaves = [Tensor(p, requires_grad=True) for p in params]
            logits = forward(model, data.images[idx], leaves, logits=True)
            loss = ops.softmax_cross_entropy(logits, onehot[idx])
            grads = grad(loss, leaves)
            params = optimizer_step(state, params, [g.data for g in grads])
            losses.append(loss.item())
        model = model.with_parameters(params)
        _, acc = classifier_metrics(model, data)
        report.rows.append((epoch, float(np.mean(losses)), acc))
    model = model.with_parameters(
        params,
        train_seed=cfg.seed,
        epochs=cfg.epochs,
        dataset=list(data.sources),
        transforms=list(data.transforms),
        classes=list(data.class_names),
    )
    report.wall_clock = time.perf_counter() - started
    return model, report


# ----------------------------------------------------------------------- GAN


def gan_objective(d_real, d_fake, mode="non-saturating"):
    """Discriminator and generator losses from discriminator outputs.

    ``d_loss = -mean(log D(x)) - mean(log(1 - D(G(z))))``.  The generator
    minimizes ``mean(log(1 - D(G(z))))`` in ``minimax`` mode and
    ``-mean(log D(G(z)))`` in ``non-saturating`` mode.  Log arguments are
    clamped to ``[1e-7, 1 - 1e-7]``.
    """
    if mode not in GEN_LOSSES:
        raise ConfigError(f"mode must be one of {GEN_LOSSES}")
    d_real = ops.clip(ops.as_tensor(d_real), LOG_CLAMP, 1 - LOG_CLAMP)
    d_fake = ops.clip(ops.as_tensor(d_fake), LOG_CLAMP, 1 - LOG_CLAMP)
    log_fake_comp = ops.mean(ops.log(ops.sub(1.0, d_fake)))
    d_loss = ops.neg(ops.add(ops.mean(ops.log(d_real)), log_fake_comp))
    if mode == "minimax":
        g_loss = log_fake_comp
    else:
        g_loss = ops.neg(ops.mean(ops.log(d_fake)))
    return d_loss, g_loss


def clamped_count(*arrays) -> int:
    return int(sum(np.sum((a < LOG_CLAMP) | (a > 1 - LOG_CLAMP)) for a in arrays))


def sample_prior(prior, n, dim, rng) -> np.ndarray:
    if prior == "normal":
        return rng.standard_normal((n, dim))
    if prior == "uniform":
        return rng.uniform(-1.0, 1.0, size=(n, dim))
    raise ConfigError(f"unknown prior {prior!r}")


def generator_prior(generator: Model) -> str:
    return generator.provenance.get("prior", "normal")


def sample(generator: Model, n, seed) -> np.ndarray:
    """``n`` generator outputs for latent codes drawn from its training prior."""
    rng = np.random.default_rng(seed)
    z = sample_prior(generator_prior(generator), n, generator.spec.latent_dim, rng)
    with no_grad():
        return forward(generator, z).data


def train_gan(data: Dataset, gen_spec: ModelSpec, disc_spec: ModelSpec, cfg: TrainConfig):
    """Alternating GAN training; returns ``(generator, discriminator, report)``.

    Each mini-batch updates the discriminator once; the generator is updated
    after every ``cfg.d_steps`` discriminator updates.
    """
    if gen_spec.role != "generator" or disc_spec.role != "discriminator":
        raise ConfigError("train_gan needs a generator and a discriminator spec")
    if gen_spec.n_out != data.n_features or disc_spec.n_in != data.n_features:
        raise DataError("generator output and discriminator input must match the data width")
    if gen_spec.latent_dim != cfg.latent_dim:
        raise ConfigError(f"generator latent {gen_spec.latent_dim} != config latent {cfg.latent_dim}")
    _check_batch(data, cfg)
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    gen = build(gen_spec, cfg.seed)
    disc = build(disc_spec, cfg.seed + 1)
    g_params, d_params = gen.parameters(), disc.parameters()
    g_state, d_state = cfg.optimizer.state(), cfg.disc_optimizer.state()
    report = TrainReport(("epoch", "d_loss", "g_loss", "d_real", "d_fake", "clamped"))
    report.notes = {"gen_loss": cfg.gen_loss, "prior": cfg.prior, "d_steps": cfg.d_steps}
    x = data.images

    def d_step(xb):
        z = sample_prior(cfg.prior, len(xb), cfg.latent_dim, rng)
        with no_grad():
            fake = forward(gen, z, [Tensor(p) for p in g_params]).data
        leaves = [Tensor(p, requires_grad=True) for p in d_params]
        d_real = forward(disc, xb, leaves)
        d_fake = forward(disc, fake, leaves)
        d_loss, _ = gan_objective(d_real, d_fake, cfg.gen_loss)
        grads = grad(d_loss, leaves)
        return (
            optimizer_step(d_state, d_params, [g.data for g in grads]),
            d_loss.item(),
            clamped_count(d_real.data, d_fake.data),
            float(d_real.data.mean()),
        )

    def g_step(n):
        z = sample_prior(cfg.prior, n, cfg.latent_dim, rng)
        leaves = [Tensor(p, requires_grad=True) for p in g_params]
        d_fake = forward(disc, forward(gen, z, leaves), [Tensor(p) for p in d_params])
        _, g_loss = gan_objective(0.5, d_fake, cfg.gen_loss)
        grads = grad(g_loss, leaves)
        return optimizer_step(g_state, g_params, [g.data for g in grads]), g_loss.item(), float(d_fake.data.mean())

    for epoch in range(cfg.epochs):
        d_losses, g_losses, d_reals, d_fakes, clamped = [], [], [], [], 0
        try:
            for b, idx in enumerate(_batches(len(x), cfg.batch_size, rng)):
                d_params, d_loss, n_clamped, d_real = d_step(x[idx])
                d_losses.append(d_loss)
                d_reals.append(d_real)
                clamped += n_clamped
                if (b + 1) % cfg.d_steps == 0:
                    g_params, g_loss, d_fake = g_step(cfg.batch_size)
                    g_losses.append(g_loss)
                    d_fakes.append(d_fake)
        except NumericError as exc:
            report.wall_clock = time.perf_counter() - started
            raise TrainingDiverged(f"GAN training diverged in epoch {epoch}: {exc}", report) from exc
        report.rows.append(
            (
                epoch,
                float(np.mean(d_losses)),
                float(np.mean(g_losses)) if g_losses else float("nan"),
                float(np.mean(d_reals)),
                float(np.mean(d_fakes)) if d_fakes else float("nan"),
                clamped,
            )
        )
    prov = {
        "train_seed": cfg.seed,
        "epochs": cfg.epochs,
        "dataset": list(data.sources),
        "transforms": list(data.transforms),
        "gen_loss": cfg.gen_loss,
    }
    gen = gen.with_parameters(g_params, prior=cfg.prior, **prov)
    disc = disc.with_parameters(d_params, **prov)
    report.wall_clock = time.perf_counter() - started
    return gen, disc, report
