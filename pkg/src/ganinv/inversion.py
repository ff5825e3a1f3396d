"""White-box model inversion in pixel space and in a generator's latent space.

Both modes minimize ``cross_entropy(f(x), y) + lam * R`` with a first-order
optimizer from several seeded starting points and keep the best iterate.
In pixel space ``x`` is optimized directly and kept in ``[0, 1]``; in
latent space ``x = G(z)`` and ``z`` is optimized, so every candidate is a
generator output.  ``R`` is ``sum |v|^p`` over ``z`` (or ``G(z)`` when
``regularize_image`` is set), or absent when ``p`` is None.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import softmax

from ganinv.autodiff import HessianOperator, OptimizerState, Tensor, cg_solve, grad, no_grad
from ganinv.autodiff import optimizer_step
from ganinv.autodiff import ops
from ganinv.errors import ConfigError, NumericError, ShapeError
from ganinv.nn import Model, forward, infer
from ganinv.trainers import generator_prior, sample_prior

log = logging.getLogger(__name__)

MODES = ("direct", "latent")
P_RANGE = range(1, 7)


@dataclass(frozen=True)
class AttackConfig:
    target: int = 0
    mode: str = "latent"
    lam: float = 0.01
    p: int | None = None
    optimizer: str = "adam"
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iter: int = 2000
    tol: float = 1e-6
    patience: int = 50
    restarts: int = 8
    seed: int = 0
    refine: bool = False
    cg_tol: float = 1e-6
    cg_max_iter: int = 100
    damping: float = 1e-3
    regularize_image: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.p is not None and (int(self.p) != self.p or self.p not in P_RANGE):
            raise ConfigError(f"p must be an integer in 1..6 or None, got {self.p!r}")
        if self.lam < 0:
            raise ConfigError("lam must be non-negative")
        if self.restarts < 1:
            raise ConfigError("restarts must be at least 1")
        if self.max_iter < 0 or self.patience < 1 or self.tol < 0:
            raise ConfigError("max_iter >= 0, patience >= 1, tol >= 0 required")
        if self.target < 0:
            raise ConfigError("target class index must be non-negative")
        if self.damping < 0:
            raise ConfigError("damping must be non-negative")
        OptimizerState(self.optimizer, self.lr)  # validates kind/lr


@dataclass
class RefineDiagnostics:
    loss_before: float
    loss_after: float
    cg_residual: float
    cg_relative_residual: float
    cg_iterations: int
    converged: bool
    indefinite: bool
    damping: float
    step_norm: float
    accepted: bool = False


@dataclass
class InversionResult:
    x: np.ndarray
    z: np.ndarray | None
    loss: float
    confidence: float
    trace: list  # (iteration, loss, best_loss, confidence)
    restart: int
    config: AttackConfig
    restarts: list = field(default_factory=list)  # (restart, best loss or None, error or None)
    nearest_distance: float | None = None
    refine: RefineDiagnostics | None = None

    def trace_rows(self):
        return [(it, loss, conf) for it, loss, _, conf in self.trace]


# ------------------------------------------------------------------- losses


def lp_term(v, p) -> Tensor:
    """``sum |v_i|^p``; the subgradient at 0 is 0 for ``p = 1``."""
    if p is None or int(p) != p or p not in P_RANGE:
        raise ConfigError(f"p must be an integer in 1..6, got {p!r}")
    return ops.sum(ops.power(ops.abs(v), int(p)))


def _onehot(y, k) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim == 0:
        if not 0 <= int(y) < k:
            raise ConfigError(f"class index {int(y)} outside 0..{k - 1}")
        return np.eye(k)[int(y)][None, :]
    y = y.reshape(1, -1).astype(np.float64)
    if y.shape[1] != k or y.sum() != 1 or not np.isin(y, (0, 1)).all():
        raise ConfigError(f"y must be a one-hot vector over {k} classes")
    return y


def attack_loss(model: Model, x, y, lam=0.0, p=None) -> Tensor:
    """``cross_entropy(model(x), y) + lam * ||x||_p^p`` as a graph node.

    ``y`` is a class index or a one-hot vector.  ``p=None`` drops the
    regularizer.
    """
    x = ops.as_tensor(x)
    if x.ndim == 1:
        x = ops.reshape(x, (1, -1))
    onehot = _onehot(y, model.spec.n_out)
    loss = ops.softmax_cross_entropy(forward(model, x, logits=True), onehot)
    if p is not None and lam:
        loss = ops.add(loss, ops.mul(lp_term(x, p), float(lam)))
    elif p is not None:
        lp_term(x, p)  # still validate p
    return loss


def latent_loss(model: Model, generator: Model, z, y, lam=0.0, p=None, regularize_image=False):
    """Attack loss of ``G(z)``; returns ``(loss node, image node)``."""
    z = ops.as_tensor(z)
    if z.ndim == 1:
        z = ops.reshape(z, (1, -1))
    image = forward(generator, z)
    onehot = _onehot(y, model.spec.n_out)
    loss = ops.softmax_cross_entropy(forward(model, image, logits=True), onehot)
    if p is not None and lam:
        loss = ops.add(loss, ops.mul(lp_term(image if regularize_image else z, p), float(lam)))
    return loss, image


# ------------------------------------------------------------------- engine


def _descend(objective, x0, cfg: AttackConfig, project=None):
    """First-order descent tracking the best iterate.

    ``objective(x_tensor) -> (loss_node, class_probs)``.  Stops when the
    best loss improved by less than ``cfg.tol`` over ``cfg.patience``
    iterations, or after ``cfg.max_iter`` evaluations.
    """
    state = OptimizerState(cfg.optimizer, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    x = np.array(x0, dtype=np.float64)
    best_loss, best_x = np.inf, x
    history, trace = [], []
    for it in range(cfg.max_iter):
        xt = Tensor(x, requires_grad=True)
        loss, probs = objective(xt)
        value = loss.item()
        if value < best_loss:
            best_loss, best_x = value, x
        history.append(best_loss)
        trace.append((it, value, best_loss, float(probs[cfg.target])))
        if it >= cfg.patience and history[it - cfg.patience] - best_loss < cfg.tol:
            break
        (g,) = grad(loss, [xt])
        x = optimizer_step(state, [x], [g.data])[0]
        if project is not None:
            x = project(x)
    if not trace:
        with no_grad():
            loss, _ = objective(Tensor(x))
        best_loss = loss.item()
    return best_x, best_loss, trace


def _run_restarts(run_one, cfg: AttackConfig, workers=1):
    indices = range(cfg.restarts)

    def guarded(i):
        try:
            return i, run_one(i), None
        except NumericError as exc:
            log.warning("restart %d aborted: %s", i, exc)
            return i, None, str(exc)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(guarded, indices))
    else:
        outcomes = [guarded(i) for i in indices]
    done = [(i, out) for i, out, err in outcomes if out is not None]
    if not done:
        raise NumericError(f"all {cfg.restarts} restarts hit non-finite losses")
    winner, best = min(done, key=lambda item: (item[1][1], item[0]))
    summary = [(i, None if out is None else out[1], err) for i, out, err in outcomes]
    return winner, best, summary


def _nearest(x, reference):
    if reference is None or len(reference) == 0:
        return None
    return nearest_distance(x, reference)


def nearest_distance(x, reference) -> float:
    """Smallest root-mean-square pixel distance from ``x`` to any reference row."""
    reference = np.asarray(reference, dtype=np.float64)
    diff = reference - np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(np.sqrt(np.min(np.mean(diff * diff, axis=1))))


def _check_target(model: Model, cfg: AttackConfig):
    if cfg.target >= model.spec.n_out:
        raise ConfigError(f"target {cfg.target} outside the model's {model.spec.n_out} classes")


def invert_direct(model: Model, cfg: AttackConfig, reference=None, inits=None, workers=1):
    """Search pixel space; ``x`` starts uniform in ``[0,1]^d`` and is clamped there.

    ``inits`` optionally fixes the starting point of each restart.
    ``reference`` (training images of the target class) enables the
    nearest-sample distance diagnostic.
    """
    if cfg.mode != "direct":
        raise ConfigError("invert_direct needs mode='direct'")
    _check_target(model, cfg)
    d = model.spec.n_in
    onehot = _onehot(cfg.target, model.spec.n_out)
    clamp = lambda x: np.clip(x, 0.0, 1.0)  # noqa: E731

    def objective(xt):
        logits = forward(model, xt, logits=True)
        loss = ops.softmax_cross_entropy(logits, onehot)
        if cfg.p is not None and cfg.lam:
            loss = ops.add(loss, ops.mul(lp_term(xt, cfg.p), cfg.lam))
        return loss, softmax(logits.data[0])

    def run_one(i):
        if inits is not None:
            x0 = np.asarray(inits[i], dtype=np.float64).reshape(1, d)
        else:
            x0 = np.random.default_rng([cfg.seed, i]).uniform(0.0, 1.0, size=(1, d))
        return _descend(objective, x0, cfg, clamp)

    winner, (x, loss, trace), summary = _run_restarts(run_one, cfg, workers)
    diag = None
    if cfg.refine:
        x, loss, diag = _refine(lambda t: objective(t)[0], x, loss, cfg, clamp)
    x = x.reshape(-1)
    return InversionResult(
        x=x,
        z=None,
        loss=loss,
        confidence=float(infer(model, x[None, :])[0, cfg.target]),
        trace=trace,
        restart=winner,
        config=cfg,
        restarts=summary,
        nearest_distance=_nearest(x, reference),
        refine=diag,
    )


def invert_latent(model: Model, generator: Model, cfg: AttackConfig, reference=None, inits=None, workers=1):
    """Search the generator's latent space; the result image is ``G(z_hat)``."""
    if cfg.mode != "latent":
        raise ConfigError("invert_latent needs mode='latent'")
    if generator.spec.n_out != model.spec.n_in:
        raise ShapeError(
            f"generator emits {generator.spec.n_out} values, classifier expects {model.spec.n_in}"
        )
    _check_target(model, cfg)
    k = generator.spec.latent_dim
    prior = generator_prior(generator)

    def objective(zt):
        loss, image = latent_loss(model, generator, zt, cfg.target, cfg.lam, cfg.p, cfg.regularize_image)
        return loss, _probs(model, image)

    def run_one(i):
        if inits is not None:
            z0 = np.asarray(inits[i], dtype=np.float64).reshape(1, k)
        else:
            z0 = sample_prior(prior, 1, k, np.random.default_rng([cfg.seed, i]))
        return _descend(objective, z0, cfg)

    winner, (z, loss, trace), summary = _run_restarts(run_one, cfg, workers)
    diag = None
    if cfg.refine:
        z, loss, diag = _refine(lambda t: objective(t)[0], z, loss, cfg)
    x = infer(generator, z.reshape(1, k))[0]
    return InversionResult(
        x=x,
        z=z.reshape(-1),
        loss=loss,
        confidence=float(infer(model, x[None, :])[0, cfg.target]),
        trace=trace,
        restart=winner,
        config=cfg,
        restarts=summary,
        nearest_distance=_nearest(x, reference),
        refine=diag,
    )


def _probs(model, image):
    with no_grad():
        logits = forward(model, ops.constant(image), logits=True)
    return softmax(logits.data[0])


def invert(model, cfg: AttackConfig, generator=None, **kw) -> InversionResult:
    if cfg.mode == "direct":
        return invert_direct(model, cfg, **kw)
    if generator is None:
        raise ConfigError("latent mode needs a generator")
    return invert_latent(model, generator, cfg, **kw)


# -------------------------------------------------------- second-order step


def newton_refine(loss_fn, x, cg_tol=1e-6, cg_max_iter=None, damping=1e-3):
    """One damped Newton step ``x + dx`` with ``(H + damping I) dx = -grad``.

    ``H`` is only touched through Hessian-vector products inside conjugate
    gradients.  Returns ``(x_new, RefineDiagnostics)``; a CG solve that did
    not converge still yields its best iterate, flagged in the diagnostics.
    """
    x = np.asarray(x, dtype=np.float64)
    op = HessianOperator(loss_fn, x)
    g = op.gradient
    sol = cg_solve(op, -g, tol=cg_tol, max_iter=cg_max_iter, damping=damping)
    x_new = x + sol.x
    with no_grad():
        after = loss_fn(Tensor(x_new)).item()
    gnorm = float(np.linalg.norm(g))
    return x_new, RefineDiagnostics(
        loss_before=op.value,
        loss_after=after,
        cg_residual=sol.residual,
        cg_relative_residual=sol.residual / gnorm if gnorm else 0.0,
        cg_iterations=sol.iterations,
        converged=sol.converged,
        indefinite=sol.indefinite,
        damping=damping,
        step_norm=float(np.linalg.norm(sol.x)),
    )


def _refine(loss_fn, x, loss, cfg: AttackConfig, project=None):
    """Post-convergence Newton step, kept only if it lowers the loss."""
    try:
        x_new, diag = newton_refine(loss_fn, x, cfg.cg_tol, cfg.cg_max_iter, cfg.damping)
    except NumericError as exc:
        log.warning("newton refinement skipped: %s", exc)
        return x, loss, None
    if project is not None:
        x_new = project(x_new)
        with no_grad():
            diag.loss_after = loss_fn(Tensor(x_new)).item()
    if diag.loss_after < loss:
        diag.accepted = True
        return x_new, diag.loss_after, diag
    return x, loss, diag


# -------------------------------------------------------------------- sweep

SWEEP_COLUMNS = ("p", "lam", "loss", "confidence", "restart", "nearest_distance", "error")


def sweep_p(model, generator, base_cfg: AttackConfig, ps=(None, 1, 2, 3, 4, 5, 6), reference=None, workers=1):
    """One attack per norm order with identical seeds; ``{p: result or error}``.

    Every ``p`` is validated before the first attack runs.  A failing cell
    is recorded as its exception and the sweep moves on.
    """
    configs = [(p, replace(base_cfg, p=p)) for p in ps]
    table = {}
    for p, cfg in configs:
        try:
            table[p] = invert(model, cfg, generator, reference=reference, workers=workers)
        except (NumericError, ShapeError) as exc:
            table[p] = exc
    return table


def sweep_rows(table):
    rows = []
    for p, res in table.items():
        label = "none" if p is None else p
        if isinstance(res, Exception):
            rows.append((label, None, None, None, None, None, str(res)))
        else:
            rows.append(
                (label, res.config.lam, res.loss, res.confidence, res.restart, res.nearest_distance, "")
            )
    return rows


def config_echo(cfg: AttackConfig) -> dict:
    return {k: ("none" if v is None else v) for k, v in asdict(cfg).items()}
