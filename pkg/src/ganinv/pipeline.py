"""Experiment plumbing shared by the command line and the acceptance tests.

Everything here turns a :class:`RunConfig` into datasets, model specs and
training/attack configs, and writes the artifacts of each pipeline stage.
Written files never contain timings, so identical inputs give identical
bytes.
"""

from __future__ import annotations

import logging
import os

import numpy as np

from ganinv import artifacts, modelio
from ganinv.config import FASHION_NAMES, RunConfig
from ganinv.data import Dataset, load_idx, merge, subset_classes, synth_glyphs
from ganinv.errors import ConfigError, DataError
from ganinv.inversion import AttackConfig, InversionResult, config_echo, invert
from ganinv.manifold import estimate_lipschitz, gap_bound_violations, gap_report, interpolate, lipschitz_upper, max_step_ratio
from ganinv.nn import ModelSpec
from ganinv.trainers import OptimizerConfig, TrainConfig, train_classifier, train_gan

log = logging.getLogger(__name__)


class MissingInputError(DataError):
    """A required corpus or model file is absent."""


# -------------------------------------------------------------------- data


CORPUS_HINT = (
    "Place the IDX files there (raw or gzipped), point data.images/data.labels at them,"
    " or use --experiment synthetic / --set data.corpus=synthetic."
)
MODEL_HINT = "Run train-target / train-gan with the same --out first, or pass the model path."


def _require(paths, hint):
    missing = [str(p) for p in paths if not os.path.exists(p)]
    if missing:
        raise MissingInputError(f"missing input file(s): {', '.join(missing)}. {hint}")


def _idx(images, labels, names=None):
    _require((images, labels), CORPUS_HINT)
    return load_idx(images, labels, names)


def primary_corpus(cfg: RunConfig) -> Dataset:
    """The full corpus the target's classes are drawn from."""
    kind = cfg.get("data", "corpus")
    if kind == "synthetic":
        return synth_glyphs(
            10, cfg.int("data", "glyph_per_class"), cfg.int("data", "glyph_size"), cfg.int("data", "glyph_seed")
        )
    if kind == "idx":
        images = cfg.get("data", "images")
        names = FASHION_NAMES if "fashion" in images.lower() else None
        return _idx(images, cfg.get("data", "labels"), names)
    raise ConfigError(f"data.corpus must be synthetic or idx, got {kind!r}")


def extra_corpus(cfg: RunConfig, primary: Dataset) -> Dataset:
    """Second corpus merged in for the GAN; glyph shapes 10-19 when synthetic."""
    images = cfg.get("data", "extra_images")
    if images == "synthetic":
        return synth_glyphs(
            10,
            cfg.int("data", "glyph_per_class"),
            primary.image_shape[0],
            cfg.int("data", "extra_glyph_seed"),
            first_shape=10,
        )
    return _idx(images, cfg.get("data", "extra_labels"))


def target_data(cfg: RunConfig, primary: Dataset) -> Dataset:
    return subset_classes(primary, cfg.ints("data", "keep"))


def gan_data(cfg: RunConfig, primary: Dataset) -> Dataset:
    which = cfg.get("data", "gan_corpus")
    if which == "primary":
        return primary
    if which == "merged":
        return merge(primary, extra_corpus(cfg, primary))
    raise ConfigError(f"data.gan_corpus must be merged or primary, got {which!r}")


# ------------------------------------------------------------------ models


def target_spec(cfg: RunConfig, data: Dataset) -> ModelSpec:
    sizes = [data.n_features, *cfg.ints("target", "hidden"), data.n_classes]
    return ModelSpec.dense(sizes, hidden=cfg.get("target", "activation"))


def gan_specs(cfg: RunConfig, data: Dataset):
    k = cfg.int("gan", "latent_dim")
    gen = ModelSpec.dense(
        [k, *cfg.ints("gan", "gen_hidden"), data.n_features],
        hidden=cfg.get("gan", "gen_activation"),
        role="generator",
    )
    disc = ModelSpec.dense(
        [data.n_features, *cfg.ints("gan", "disc_hidden"), 1],
        hidden=cfg.get("gan", "disc_activation"),
        role="discriminator",
    )
    return gen, disc


def target_train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.int("target", "epochs"),
        batch_size=cfg.int("target", "batch_size"),
        seed=cfg.int("run", "seed"),
        optimizer=OptimizerConfig(lr=cfg.float("target", "lr")),
    )


def gan_train_config(cfg: RunConfig) -> TrainConfig:
    b1, b2 = cfg.float("gan", "beta1"), cfg.float("gan", "beta2")
    return TrainConfig(
        epochs=cfg.int("gan", "epochs"),
        batch_size=cfg.int("gan", "batch_size"),
        seed=cfg.int("run", "seed"),
        optimizer=OptimizerConfig(lr=cfg.float("gan", "gen_lr"), beta1=b1, beta2=b2),
        disc_optimizer=OptimizerConfig(lr=cfg.float("gan", "disc_lr"), beta1=b1, beta2=b2),
        d_steps=cfg.int("gan", "d_steps"),
        gen_loss=cfg.get("gan", "gen_loss"),
        prior=cfg.get("gan", "prior"),
        latent_dim=cfg.int("gan", "latent_dim"),
    )


def attack_config(cfg: RunConfig, mode=None, target=None, p="config") -> AttackConfig:
    return AttackConfig(
        target=cfg.int("attack", "class") if target is None else target,
        mode=cfg.get("attack", "mode") if mode is None else mode,
        lam=cfg.float("attack", "lam"),
        p=cfg.optional_int("attack", "p") if p == "config" else p,
        optimizer=cfg.get("attack", "optimizer"),
        lr=cfg.float("attack", "lr"),
        max_iter=cfg.int("attack", "max_iter"),
        tol=cfg.float("attack", "tol"),
        patience=cfg.int("attack", "patience"),
        restarts=cfg.int("attack", "restarts"),
        seed=cfg.int("run", "seed"),
        refine=cfg.bool("attack", "refine"),
        cg_tol=cfg.float("attack", "cg_tol"),
        cg_max_iter=cfg.int("attack", "cg_max_iter"),
        damping=cfg.float("attack", "damping"),
        regularize_image=cfg.bool("attack", "regularize_image"),
    )


def load_model(path):
    _require((path,), MODEL_HINT)
    return modelio.load(path)


# ---------------------------------------------------------------- writers


def write_config_echo(out, name, cfg: RunConfig, extra=None):
    lines = [f"# resolved configuration for: {name}"]
    for k, v in (extra or {}).items():
        lines.append(f"# {k} = {v}")
    with open(os.path.join(out, f"{name}.config.ini"), "w") as fh:
        fh.write("\n".join(lines) + "\n" + cfg.text())


def write_train_report(path, report):
    artifacts.write_csv(path, report.columns, report.rows)


def write_result(out, stem, result: InversionResult, image_shape, extra=None):
    """PGM + trace CSV + summary for one attack; returns the written paths."""
    pgm, trace, summary = (os.path.join(out, stem + ext) for ext in (".pgm", ".trace.csv", ".summary.txt"))
    artifacts.write_image_grid(result.x[None, :], 1, pgm, image_shape)
    artifacts.write_csv(trace, ("iteration", "loss", "confidence"), result.trace_rows())
    metrics = {
        "loss": result.loss,
        "confidence": result.confidence,
        "winning_restart": result.restart,
        "iterations": len(result.trace),
        "nearest_distance": result.nearest_distance,
        "distance_metric": "rms pixel distance to nearest training image of the class",
    }
    sections = {"attack": config_echo(result.config), "result": metrics}
    sections["restarts"] = {
        f"restart.{i}": ("error: " + err) if err else loss for i, loss, err in result.restarts
    }
    if result.refine is not None:
        sections["refine"] = vars(result.refine)
    if extra:
        sections.update(extra)
    artifacts.write_summary(summary, sections)
    return pgm, trace, summary


# ---------------------------------------------------------------- stages


def run_train_target(cfg: RunConfig, out):
    primary = primary_corpus(cfg)
    data = target_data(cfg, primary)
    log.info("training target on %d images, %d classes", len(data), data.n_classes)
    model, report = train_classifier(data, target_spec(cfg, data), target_train_config(cfg))
    modelio.save(model, os.path.join(out, "target.model"))
    write_train_report(os.path.join(out, "target_train.csv"), report)
    log.info("target accuracy %.4f", report.rows[-1][2] if report.rows else float("nan"))
    return model, report, data


def run_train_gan(cfg: RunConfig, out):
    primary = primary_corpus(cfg)
    data = gan_data(cfg, primary)
    gen_spec, disc_spec = gan_specs(cfg, data)
    log.info("training GAN on %d images, %d classes", len(data), data.n_classes)
    gen, disc, report = train_gan(data, gen_spec, disc_spec, gan_train_config(cfg))
    modelio.save(gen, os.path.join(out, "generator.model"))
    modelio.save(disc, os.path.join(out, "discriminator.model"))
    write_train_report(os.path.join(out, "gan_train.csv"), report)
    return gen, disc, report


def attack_all(cfg: RunConfig, target, generator, data: Dataset, workers=1):
    """Both modes for every class: ``[(class, direct result, latent result)]``."""
    rows = []
    for k in range(data.n_classes):
        ref = data.of_class(k)
        pair = []
        for mode in ("direct", "latent"):
            log.info("class %d/%d %s attack", k + 1, data.n_classes, mode)
            pair.append(invert(target, attack_config(cfg, mode, k), generator, reference=ref, workers=workers))
        rows.append((k, *pair))
    return rows


REPORT_COLUMNS = (
    "class",
    "name",
    "orig_label",
    "direct_confidence",
    "direct_distance",
    "latent_confidence",
    "latent_distance",
    "distance_ratio",
    "latent_closer",
)


def report_rows(data: Dataset, attacks):
    keep = [int(data.orig_labels[data.labels == k][0]) for k in range(data.n_classes)]
    rows = []
    for k, direct, latent in attacks:
        ratio = latent.nearest_distance / direct.nearest_distance if direct.nearest_distance else None
        rows.append(
            (
                k,
                data.class_names[k],
                keep[k],
                direct.confidence,
                direct.nearest_distance,
                latent.confidence,
                latent.nearest_distance,
                ratio,
                int(latent.nearest_distance < direct.nearest_distance),
            )
        )
    return rows


def analyze(cfg: RunConfig, generator, target, data: Dataset):
    """Lipschitz estimate, class gap and its latent bound; returns summary sections."""
    seed = cfg.int("run", "seed")
    lip = estimate_lipschitz(generator, cfg.int("analysis", "pairs"), seed)
    a, b = cfg.int("analysis", "class_a"), cfg.int("analysis", "class_b")
    n = cfg.int("analysis", "gap_samples")
    for c in (a, b):
        if not 0 <= c < data.n_classes:
            raise ConfigError(f"analysis class {c} outside 0..{data.n_classes - 1}")
    gap = gap_report(data.of_class(a)[:n], data.of_class(b)[:n], lip.beta_upper, (a, b))
    checked, violations = gap_bound_violations(lip, gap.gamma)
    sections = {
        "lipschitz": lip.summary(),
        "gap": gap.summary(),
        "gap_check": {
            "pairs_with_image_distance_at_least_gamma": checked,
            "violations": violations,
            "consistent": int(lip.beta_empirical <= lip.beta_upper * (1 + 1e-9) and violations == 0),
        },
        "assumptions": {
            "norms": "euclidean in latent and image space",
            "latent_support": f"{generator.provenance.get('prior', 'normal')} prior samples",
            "class_clouds": f"first {min(n, gap.counts[0])} and {min(n, gap.counts[1])} training images of the two classes",
        },
    }
    return lip, gap, sections


def run_interpolate(cfg: RunConfig, target, generator, discriminator, out, workers=1, z_pair=None):
    a, b = cfg.int("analysis", "class_a"), cfg.int("analysis", "class_b")
    if z_pair is None:
        z_pair = [invert(target, attack_config(cfg, "latent", c), generator, workers=workers).z for c in (a, b)]
    trace = interpolate(generator, target, z_pair[0], z_pair[1], cfg.int("analysis", "interp_steps"), discriminator)
    classes = target.spec.n_out
    header = ("step", "argmax", "max_confidence", "disc_score", *(f"p{k}" for k in range(classes)))
    artifacts.write_csv(os.path.join(out, "interpolate.csv"), header, trace.rows())
    side = int(round(np.sqrt(generator.spec.n_out)))
    if side * side == generator.spec.n_out:
        artifacts.write_image_grid(trace.images, trace.steps, os.path.join(out, "interpolate.pgm"))
    beta = lipschitz_upper(generator)[0]
    flips = int(np.sum(np.diff([r[1] for r in trace.rows()]) != 0))
    artifacts.write_summary(
        os.path.join(out, "interpolate.txt"),
        {
            "interpolate": {
                "class_a": a,
                "class_b": b,
                "steps": trace.steps,
                "argmax_changes": flips,
                "max_step_ratio": max_step_ratio(trace),
                "beta_upper": beta,
                "within_lipschitz_bound": int(max_step_ratio(trace) <= beta * (1 + 1e-9)),
            }
        },
    )
    return trace


def run_reproduce(cfg: RunConfig, out, workers=1):
    """Full pipeline; returns the per-class report rows."""
    target, _, data = run_train_target(cfg, out)
    gen, disc, _ = run_train_gan(cfg, out)
    attacks = attack_all(cfg, target, gen, data, workers)
    rows = report_rows(data, attacks)
    artifacts.write_csv(os.path.join(out, "report.csv"), REPORT_COLUMNS, rows)

    tiles = []
    for k, direct, latent in attacks:
        ref = data.of_class(k)
        nearest = ref[np.argmin(np.sum((ref - latent.x) ** 2, axis=1))]
        tiles += [latent.x, direct.x, nearest]
    artifacts.write_image_grid(np.array(tiles), 3, os.path.join(out, "report.pgm"), data.image_shape)
    for k, direct, latent in attacks:
        write_result(out, f"class{k}_direct", direct, data.image_shape)
        write_result(out, f"class{k}_latent", latent, data.image_shape)

    lip, gap, sections = analyze(cfg, gen, target, data)
    run_interpolate(cfg, target, gen, disc, out, workers, [attacks[gap.classes[0]][2].z, attacks[gap.classes[1]][2].z])
    artifacts.write_summary(os.path.join(out, "manifold.txt"), sections)

    latent_ok = sum(r[5] >= 0.9 for r in rows)
    closer = sum(r[8] for r in rows)
    summary = {
        "experiment": {
            "classes": data.n_classes,
            "class_names": " ".join(data.class_names),
            "direct_attacks": len(attacks),
            "latent_attacks": len(attacks),
            "iteration_budget": cfg.int("attack", "max_iter"),
            "restarts": cfg.int("attack", "restarts"),
        },
        "outcome": {
            "latent_confidence_at_least_0.9": latent_ok,
            "latent_closer_than_direct": closer,
            "min_latent_confidence": min(r[5] for r in rows),
            "min_direct_confidence": min(r[3] for r in rows),
            "grid_layout": "one row per class: latent result, direct result, nearest training image",
        },
        "manifold": {
            "beta_empirical": lip.beta_empirical,
            "beta_upper": lip.beta_upper,
            "gamma": gap.gamma,
            "latent_gap_bound": gap.latent_gap_bound,
        },
    }
    artifacts.write_summary(os.path.join(out, "report.txt"), summary)
    return rows
