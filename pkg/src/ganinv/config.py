"""Run configuration: sectioned ``key = value`` files with typed accessors.

Every key has a default (see :data:`DEFAULTS`, printed by ``ganinv
print-config``).  Values come from, in increasing priority: defaults, an
experiment preset, an optional config file, ``--set section.key=value``.
"""

from __future__ import annotations

import configparser
import io

from ganinv.errors import ConfigError

DEFAULTS = {
    "run": {
        "seed": "0",
        "parallel": "1",
    },
    "data": {
        # synthetic | idx
        "corpus": "synthetic",
        "images": "data/mnist/train-images-idx3-ubyte",
        "labels": "data/mnist/train-labels-idx1-ubyte",
        # second corpus merged in for the GAN; "synthetic" draws glyphs instead
        "extra_images": "synthetic",
        "extra_labels": "",
        # merged: primary + second corpus, primary: primary corpus, all classes
        "gan_corpus": "merged",
        "keep": "0,1,3,5,6,9",
        "glyph_size": "16",
        "glyph_per_class": "100",
        "glyph_seed": "1",
        "extra_glyph_seed": "2",
    },
    "target": {
        "hidden": "256",
        "activation": "relu",
        "epochs": "10",
        "batch_size": "32",
        "lr": "0.001",
    },
    "gan": {
        "latent_dim": "64",
        "gen_hidden": "256",
        "gen_activation": "relu",
        "disc_hidden": "256",
        "disc_activation": "tanh",
        "epochs": "150",
        "batch_size": "64",
        "gen_lr": "0.0002",
        "disc_lr": "0.0001",
        "beta1": "0.5",
        "beta2": "0.999",
        "d_steps": "1",
        "gen_loss": "non-saturating",
        "prior": "normal",
    },
    "attack": {
        "mode": "latent",
        "class": "0",
        "lam": "0.01",
        "p": "none",
        "optimizer": "adam",
        "lr": "0.05",
        "max_iter": "2000",
        "tol": "1e-6",
        "patience": "50",
        "restarts": "8",
        "refine": "false",
        "cg_tol": "1e-6",
        "cg_max_iter": "100",
        "damping": "0.001",
        "regularize_image": "false",
    },
    "sweep": {
        "p_values": "none,1,2,3,4,5,6",
    },
    "analysis": {
        "pairs": "10000",
        "gap_samples": "500",
        "class_a": "0",
        "class_b": "1",
        "interp_steps": "11",
    },
}

PRESETS = {
    "synthetic": {"data.corpus": "synthetic", "data.keep": "0,1,3,5,6,9", "data.gan_corpus": "merged"},
    "synthetic-5of10": {"data.corpus": "synthetic", "data.keep": "0,1,4,7,8", "data.gan_corpus": "primary"},
    "mnist-6of10": {
        "data.corpus": "idx",
        "data.images": "data/mnist/train-images-idx3-ubyte",
        "data.labels": "data/mnist/train-labels-idx1-ubyte",
        "data.keep": "0,1,3,5,6,9",
        "data.gan_corpus": "merged",
    },
    "fashion-5of10": {
        "data.corpus": "idx",
        "data.images": "data/fashion/train-images-idx3-ubyte",
        "data.labels": "data/fashion/train-labels-idx1-ubyte",
        "data.keep": "0,1,4,7,8",
        "data.gan_corpus": "primary",
    },
}

FASHION_NAMES = (
    "tshirt", "trouser", "pullover", "dress", "coat",
    "sandal", "shirt", "sneaker", "bag", "boot",
)  # fmt: skip


class RunConfig:
    def __init__(self, path=None, overrides=(), preset=None):
        self.parser = configparser.ConfigParser(interpolation=None)
        self.parser.read_dict(DEFAULTS)
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown experiment {preset!r}; choose from {sorted(PRESETS)}")
            for key, value in PRESETS[preset].items():
                self.set(key, value)
        if path is not None:
            try:
                with open(path) as fh:
                    self.parser.read_file(fh)
            except configparser.Error as exc:
                raise ConfigError(f"cannot parse config {path}: {exc}") from exc
            self._check_known()
        for item in overrides:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} is not section.key=value")
            self.set(key.strip(), value.strip())

    def _check_known(self):
        for section in self.parser.sections():
            if section not in DEFAULTS:
                raise ConfigError(f"unknown config section [{section}]")
            for key in self.parser[section]:
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")

    def set(self, dotted, value):
        section, _, key = dotted.partition(".")
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise ConfigError(f"unknown config key {dotted!r}")
        self.parser[section][key] = str(value)

    def get(self, section, key) -> str:
        return self.parser[section][key]

    def int(self, section, key) -> int:
        try:
            return int(self.get(section, key))
        except ValueError:
            raise ConfigError(f"{section}.{key} must be an integer") from None

    def float(self, section, key) -> float:
        try:
            return float(self.get(section, key))
        except ValueError:
            raise ConfigError(f"{section}.{key} must be a number") from None

    def bool(self, section, key) -> bool:
        try:
            return self.parser.getboolean(section, key)
        except ValueError:
            raise ConfigError(f"{section}.{key} must be true/false") from None

    def ints(self, section, key) -> list[int]:
        raw = self.get(section, key).strip()
        if not raw:
            return []
        try:
            return [int(v) for v in raw.split(",")]
        except ValueError:
            raise ConfigError(f"{section}.{key} must be a comma-separated integer list") from None

    def optional_int(self, section, key):
        raw = self.get(section, key).strip().lower()
        return None if raw in ("none", "") else self.int(section, key)

    def p_values(self) -> list:
        out = []
        for v in self.get("sweep", "p_values").split(","):
            v = v.strip().lower()
            try:
                out.append(None if v == "none" else int(v))
            except ValueError:
                raise ConfigError(f"sweep.p_values entry {v!r} is not an integer or none") from None
        return out

    def text(self) -> str:
        buf = io.StringIO()
        self.parser.write(buf)
        return buf.getvalue()


def defaults_text() -> str:
    return RunConfig().text()
