"""``ganinv`` command line.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error (missing
or unreadable files, corrupt model files), 4 numeric failure (non-finite
losses, diverged training).  Progress goes to stderr; results go to files
under ``--out``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from ganinv import artifacts, pipeline
from ganinv.config import PRESETS, RunConfig
from ganinv.errors import ConfigError, DataError, NumericError, ShapeError, SpecError
from ganinv.inversion import SWEEP_COLUMNS, config_echo, invert, sweep_p, sweep_rows
from ganinv.modelio import ModelFileError
from ganinv.trainers import TrainingDiverged, sample

log = logging.getLogger("ganinv")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, _):
        pass


def _setup_logging(level):
    log.handlers[:] = [_StderrHandler()]
    log.handlers[0].setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.setLevel(level)
    log.propagate = False


def _common(p):
    p.add_argument("--config", help="config file (sections of key = value)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one key")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="shorthand for --set run.seed=N")
    p.add_argument("--parallel", type=int, help="concurrent restarts/sweep cells")
    p.add_argument("--experiment", choices=sorted(PRESETS), help="apply an experiment preset before --config")
    p.add_argument("-q", "--quiet", action="store_true", help="only warnings on stderr")


def _models(p, *names):
    for name in names:
        p.add_argument(f"--{name}-model", dest=f"{name}_model", help=f"{name} model file (default: OUT/{name}.model)")


def build_parser():
    parser = _Parser(prog="ganinv", description="Model inversion through a GAN's latent space.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    p = sub.add_parser("print-config", help="print the resolved configuration (all defaults)")
    _common(p)

    p = sub.add_parser("train-target", help="train the target classifier on the kept classes")
    _common(p)
    p = sub.add_parser("train-gan", help="train the GAN on the superset corpus")
    _common(p)

    p = sub.add_parser("invert", help="recover a representative image of one class")
    _common(p)
    p.add_argument("--mode", choices=("direct", "latent"))
    p.add_argument("--class", dest="target", type=int, help="target class index of the classifier")
    _models(p, "target", "generator")

    p = sub.add_parser("sweep-p", help="latent attack once per regularizer norm order")
    _common(p)
    p.add_argument("--class", dest="target", type=int)
    _models(p, "target", "generator")

    p = sub.add_parser("analyze-manifold", help="Lipschitz estimate, class gap and latent gap bound")
    _common(p)
    _models(p, "target", "generator")

    p = sub.add_parser("interpolate", help="walk the latent line between two class inversions")
    _common(p)
    _models(p, "target", "generator", "discriminator")

    p = sub.add_parser("render", help="write a PGM grid of generator samples or training images")
    _common(p)
    p.add_argument("--source", choices=("generator", "data"), default="generator")
    p.add_argument("--count", type=int, default=36)
    p.add_argument("--cols", type=int, default=6)
    _models(p, "generator")

    p = sub.add_parser("reproduce", help="run the whole pipeline for one experiment")
    _common(p)
    p.set_defaults(experiment="synthetic")
    return parser


def _resolve(args):
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.parallel is not None:
        overrides.append(f"run.parallel={args.parallel}")
    if getattr(args, "mode", None):
        overrides.append(f"attack.mode={args.mode}")
    if getattr(args, "target", None) is not None:
        overrides.append(f"attack.class={args.target}")
    return RunConfig(args.config, overrides, getattr(args, "experiment", None))


def _model_path(args, name):
    return getattr(args, f"{name}_model", None) or os.path.join(args.out, f"{name}.model")


def _target_reference(cfg, target_class):
    data = pipeline.target_data(cfg, pipeline.primary_corpus(cfg))
    return data, data.of_class(target_class) if target_class < data.n_classes else None


def _run(args, cfg: RunConfig):
    out = args.out
    os.makedirs(out, exist_ok=True)
    workers = cfg.int("run", "parallel")
    cmd = args.command
    if cmd == "reproduce":
        out = os.path.join(out, args.experiment)
        os.makedirs(out, exist_ok=True)
    pipeline.write_config_echo(out, cmd, cfg, {"experiment": getattr(args, "experiment", None) or "none"})

    if cmd == "train-target":
        pipeline.run_train_target(cfg, out)
    elif cmd == "train-gan":
        pipeline.run_train_gan(cfg, out)
    elif cmd == "invert":
        target = pipeline.load_model(_model_path(args, "target"))
        acfg = pipeline.attack_config(cfg)
        generator = pipeline.load_model(_model_path(args, "generator")) if acfg.mode == "latent" else None
        data, ref = _target_reference(cfg, acfg.target)
        result = invert(target, acfg, generator, reference=ref, workers=workers)
        pipeline.write_result(out, f"invert_{acfg.mode}_class{acfg.target}", result, data.image_shape)
        log.info("confidence %.4f, nearest distance %s", result.confidence, result.nearest_distance)
    elif cmd == "sweep-p":
        target = pipeline.load_model(_model_path(args, "target"))
        generator = pipeline.load_model(_model_path(args, "generator"))
        base = pipeline.attack_config(cfg, "latent", p=None)
        ps = cfg.p_values()
        for p in ps:
            pipeline.attack_config(cfg, "latent", p=p)  # reject bad p before any attack
        data, ref = _target_reference(cfg, base.target)
        table = sweep_p(target, generator, base, ps, reference=ref, workers=workers)
        artifacts.write_csv(os.path.join(out, "sweep_p.csv"), SWEEP_COLUMNS, sweep_rows(table))
        images = [r.x for r in table.values() if not isinstance(r, Exception)]
        if images:
            artifacts.write_image_grid(np.array(images), len(images), os.path.join(out, "sweep_p.pgm"), data.image_shape)
        artifacts.write_summary(os.path.join(out, "sweep_p.txt"), {"base": config_echo(base)})
    elif cmd == "analyze-manifold":
        target = pipeline.load_model(_model_path(args, "target"))
        generator = pipeline.load_model(_model_path(args, "generator"))
        data = pipeline.target_data(cfg, pipeline.primary_corpus(cfg))
        lip, _, sections = pipeline.analyze(cfg, generator, target, data)
        artifacts.write_summary(os.path.join(out, "manifold.txt"), sections)
        artifacts.write_csv(
            os.path.join(out, "lipschitz_pairs.csv"),
            ("pair", "latent_distance", "image_distance"),
            zip(range(len(lip.latent_dist)), lip.latent_dist, lip.image_dist),
        )
    elif cmd == "interpolate":
        target = pipeline.load_model(_model_path(args, "target"))
        generator = pipeline.load_model(_model_path(args, "generator"))
        disc_path = _model_path(args, "discriminator")
        disc = pipeline.load_model(disc_path) if os.path.exists(disc_path) or args.discriminator_model else None
        pipeline.run_interpolate(cfg, target, generator, disc, out, workers)
    elif cmd == "render":
        if args.count < 1 or args.cols < 1:
            raise ConfigError("--count and --cols must be positive")
        if args.source == "generator":
            generator = pipeline.load_model(_model_path(args, "generator"))
            images = sample(generator, args.count, cfg.int("run", "seed"))
            shape = None
        else:
            data = pipeline.target_data(cfg, pipeline.primary_corpus(cfg))
            images, shape = data.images[: args.count], data.image_shape
        artifacts.write_image_grid(images, args.cols, os.path.join(out, f"render_{args.source}.pgm"), shape)
    elif cmd == "reproduce":
        rows = pipeline.run_reproduce(cfg, out, workers)
        for r in rows:
            log.info(
                "class %d (%s): direct conf %.3f dist %.3f | latent conf %.3f dist %.3f",
                r[0], r[1], r[3], r[4], r[5], r[6],
            )  # fmt: skip
    log.info("artifacts written to %s", out)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    _setup_logging(logging.WARNING if args.quiet else logging.INFO)
    try:
        cfg = _resolve(args)
        if args.command == "print-config":
            sys.stdout.write(cfg.text())
            return EXIT_OK
        _run(args, cfg)
    except (ConfigError, SpecError, ShapeError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except ModelFileError as exc:
        log.error("bad model file: %s", exc)
        return EXIT_IO
    except (DataError, OSError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    return EXIT_OK


def run(argv) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
