"""Lipschitz, class-gap and latent-interpolation analysis of a generator.

All distances are Euclidean.  ``beta_upper`` multiplies per-layer spectral
norms by the activation's Lipschitz constant, so for every latent pair
``|G(z1) - G(z2)| <= beta_upper |z1 - z2|``; two image clouds at distance
``gamma`` therefore need latent codes at least ``gamma / beta_upper`` apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from ganinv.errors import ConfigError, GanInvError, ShapeError
from ganinv.nn import LIPSCHITZ, Model, infer
from ganinv.trainers import generator_prior, sample_prior


@dataclass
class LipschitzReport:
    beta_empirical: float
    beta_upper: float
    pairs: int
    probes: int
    sampling: str
    seed: int
    layer_norms: list = field(default_factory=list)
    # per-pair distances, kept for follow-up checks
    latent_dist: np.ndarray = field(default=None, repr=False)
    image_dist: np.ndarray = field(default=None, repr=False)

    def summary(self) -> dict:
        return {
            "beta_empirical": self.beta_empirical,
            "beta_upper": self.beta_upper,
            "pairs": self.pairs,
            "probes": self.probes,
            "sampling": self.sampling,
            "seed": self.seed,
            "norm": "l2 in latent and image space",
            "layer_norms": " ".join(repr(float(v)) for v in self.layer_norms),
        }


@dataclass
class ManifoldGapReport:
    gamma: float
    latent_gap_bound: float
    beta_upper: float
    classes: tuple
    counts: tuple

    def summary(self) -> dict:
        return {
            "class_a": self.classes[0],
            "class_b": self.classes[1],
            "count_a": self.counts[0],
            "count_b": self.counts[1],
            "gamma": self.gamma,
            "beta_upper": self.beta_upper,
            "latent_gap_bound": self.latent_gap_bound,
        }


@dataclass
class InterpolationTrace:
    z1: np.ndarray
    z2: np.ndarray
    steps: int
    latents: np.ndarray
    images: np.ndarray
    confidences: np.ndarray  # (steps, classes)
    disc_scores: np.ndarray | None

    def rows(self):
        for k in range(self.steps):
            probs = self.confidences[k]
            score = None if self.disc_scores is None else float(self.disc_scores[k])
            yield (k, int(np.argmax(probs)), float(np.max(probs)), score, *map(float, probs))


def spectral_norm(w, iters=100, tol=1e-9, seed=0) -> float:
    """Largest singular value of ``w`` by power iteration on ``w^T w``."""
    w = np.asarray(w, dtype=np.float64)
    v = np.random.default_rng(seed).standard_normal(w.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        u = w @ v
        s = np.linalg.norm(u)
        if s == 0.0:
            return 0.0
        v = w.T @ (u / s)
        v /= np.linalg.norm(v)
        new = float(np.linalg.norm(w @ v))
        if abs(new - sigma) <= tol * new:
            return new
        sigma = new
    return sigma


def lipschitz_upper(model: Model, iters=100, tol=1e-9):
    """``(bound, per-layer spectral norms)``."""
    norms = [spectral_norm(w, iters, tol) for w, _ in model.weights]
    bound = 1.0
    for s, layer in zip(norms, model.spec.layers):
        bound *= s * LIPSCHITZ[layer.activation]
    return bound, norms


def _distinct_pairs(prior, n, k, rng):
    z1 = sample_prior(prior, n, k, rng)
    z2 = sample_prior(prior, n, k, rng)
    same = np.all(z1 == z2, axis=1)
    while same.any():
        z2[same] = sample_prior(prior, int(same.sum()), k, rng)
        same = np.all(z1 == z2, axis=1)
    return z1, z2


def estimate_lipschitz(generator: Model, pairs=10_000, seed=0, probes=None, step=1e-4, chunk=2048):
    """Empirical and analytic Lipschitz constants of ``generator``.

    The empirical value is the largest distance ratio over random latent
    pairs drawn from the generator's prior, together with local
    finite-difference probes along random unit directions.
    """
    if pairs < 1:
        raise ConfigError("pairs must be >= 1")
    g = generator.spec
    prior = generator_prior(generator)
    rng = np.random.default_rng(seed)
    z1, z2 = _distinct_pairs(prior, pairs, g.latent_dim, rng)
    lat, img = [], []
    for s in range(0, pairs, chunk):
        a, b = z1[s : s + chunk], z2[s : s + chunk]
        lat.append(np.linalg.norm(a - b, axis=1))
        img.append(np.linalg.norm(infer(generator, a) - infer(generator, b), axis=1))
    lat, img = np.concatenate(lat), np.concatenate(img)
    best = float(np.max(img / lat))

    n_probes = max(1, pairs // 10) if probes is None else probes
    if n_probes:
        z = sample_prior(prior, n_probes, g.latent_dim, rng)
        u = rng.standard_normal(z.shape)
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        moved = z + step * u
        dz = np.linalg.norm(moved - z, axis=1)
        dx = np.linalg.norm(infer(generator, moved) - infer(generator, z), axis=1)
        keep = dz > 0
        if keep.any():
            best = max(best, float(np.max(dx[keep] / dz[keep])))

    upper, norms = lipschitz_upper(generator)
    return LipschitzReport(
        beta_empirical=best,
        beta_upper=upper,
        pairs=pairs,
        probes=n_probes,
        sampling=f"{prior} prior, {pairs} pairs + {n_probes} probes (step {step:g})",
        seed=seed,
        layer_norms=norms,
        latent_dist=lat,
        image_dist=img,
    )


def manifold_gap(p_samples, q_samples, chunk=256) -> float:
    """Exact minimum Euclidean distance between any row of P and any row of Q."""
    p = np.atleast_2d(np.asarray(p_samples, dtype=np.float64))
    q = np.atleast_2d(np.asarray(q_samples, dtype=np.float64))
    if len(p) == 0 or len(q) == 0 or p.size == 0 or q.size == 0:
        raise ShapeError("both sample sets must be non-empty")
    if p.shape[1] != q.shape[1]:
        raise ShapeError(f"feature dimensions differ: {p.shape[1]} vs {q.shape[1]}")
    best = np.inf
    for s in range(0, len(p), chunk):
        best = min(best, float(cdist(p[s : s + chunk], q).min()))
    return best


def latent_gap_bound(gamma, beta_upper) -> float:
    if beta_upper <= 0:
        raise GanInvError("beta_upper must be positive")
    return gamma / beta_upper


def gap_report(p_samples, q_samples, beta_upper, classes=("P", "Q")) -> ManifoldGapReport:
    gamma = manifold_gap(p_samples, q_samples)
    return ManifoldGapReport(
        gamma=gamma,
        latent_gap_bound=latent_gap_bound(gamma, beta_upper),
        beta_upper=beta_upper,
        classes=tuple(classes),
        counts=(len(p_samples), len(q_samples)),
    )


def gap_bound_violations(report: LipschitzReport, gamma) -> tuple[int, int]:
    """``(checked, violations)`` of ``|z1 - z2| >= gamma / beta_upper``.

    Only pairs whose images are at least ``gamma`` apart are checked.
    """
    bound = latent_gap_bound(gamma, report.beta_upper)
    mask = report.image_dist >= gamma
    return int(mask.sum()), int(np.sum(report.latent_dist[mask] < bound))


def interpolate(generator: Model, classifier: Model, z1, z2, steps, discriminator=None):
    """Evenly spaced straight-line walk from ``z1`` to ``z2`` in latent space."""
    if steps < 2:
        raise ConfigError("steps must be >= 2")
    k = generator.spec.latent_dim
    z1 = np.asarray(z1, dtype=np.float64).reshape(-1)
    z2 = np.asarray(z2, dtype=np.float64).reshape(-1)
    if z1.shape != (k,) or z2.shape != (k,):
        raise ShapeError(f"endpoints must have latent dimension {k}")
    if generator.spec.n_out != classifier.spec.n_in:
        raise ShapeError("generator output does not match classifier input")
    latents, images, probs, scores = [], [], [], []
    for i in range(steps):
        t = i / (steps - 1)
        z = (1.0 - t) * z1 + t * z2
        x = infer(generator, z[None, :])
        latents.append(z)
        images.append(x[0])
        probs.append(infer(classifier, x)[0])
        if discriminator is not None:
            scores.append(infer(discriminator, x)[0, 0])
    return InterpolationTrace(
        z1=z1,
        z2=z2,
        steps=steps,
        latents=np.array(latents),
        images=np.array(images),
        confidences=np.array(probs),
        disc_scores=np.array(scores) if discriminator is not None else None,
    )


def max_step_ratio(trace: InterpolationTrace) -> float:
    """Largest ``|G(z_{k+1}) - G(z_k)| / |z_{k+1} - z_k|`` along a trace."""
    dz = np.linalg.norm(np.diff(trace.latents, axis=0), axis=1)
    dx = np.linalg.norm(np.diff(trace.images, axis=0), axis=1)
    keep = dz > 0
    return float(np.max(dx[keep] / dz[keep])) if keep.any() else 0.0
