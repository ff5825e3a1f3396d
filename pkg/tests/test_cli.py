import csv

import numpy as np
import pytest

from ganinv import artifacts, modelio
from ganinv.cli import main
from ganinv.config import DEFAULTS, RunConfig, defaults_text
from ganinv.errors import ConfigError
from ganinv.nn import Model, ModelSpec, build

TINY = """
[data]
glyph_size = 8
glyph_per_class = 12
[target]
hidden = 16
epochs = 3
batch_size = 16
[gan]
latent_dim = 4
gen_hidden = 16
disc_hidden = 16
epochs = 2
batch_size = 32
[attack]
restarts = 2
max_iter = 30
[analysis]
pairs = 200
gap_samples = 12
interp_steps = 4
"""


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY)
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    cfg = out / "tiny.ini"
    cfg.write_text(TINY)
    common = ["--config", str(cfg), "--out", str(out), "-q"]
    assert main(["train-target", *common]) == 0
    assert main(["train-gan", *common]) == 0
    return out, common


# ------------------------------------------------------------------ config


def test_defaults_cover_every_section():
    text = defaults_text()
    for section, keys in DEFAULTS.items():
        assert f"[{section}]" in text
        for key in keys:
            assert f"\n{key} = " in text


def test_priority_order(tiny):
    cfg = RunConfig(tiny, ["target.epochs=7"], preset="synthetic-5of10")
    assert cfg.int("target", "epochs") == 7  # override beats file
    assert cfg.int("data", "glyph_size") == 8  # file beats default
    assert cfg.ints("data", "keep") == [0, 1, 4, 7, 8]  # preset applied


@pytest.mark.parametrize("bad", ["nokey", "target.unknown=1", "nosection.x=1"])
def test_bad_override(bad):
    with pytest.raises(ConfigError):
        RunConfig(overrides=[bad])


def test_typed_getters_reject_garbage():
    cfg = RunConfig(overrides=["target.epochs=ten", "sweep.p_values=none,x"])
    with pytest.raises(ConfigError):
        cfg.int("target", "epochs")
    with pytest.raises(ConfigError):
        cfg.p_values()


# ------------------------------------------------------------- exit codes


def test_no_arguments_prints_usage(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_and_command(capsys):
    assert main(["invert", "--bogus"]) == 2
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_print_config(capsys):
    assert main(["print-config", "--set", "attack.lam=0.5"]) == 0
    out = capsys.readouterr().out
    assert "[attack]" in out and "lam = 0.5" in out


def test_unknown_config_key_in_file(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[attack]\nlamda = 1\n")
    assert main(["print-config", "--config", str(path)]) == 2


def test_unreadable_config(tmp_path):
    assert main(["print-config", "--config", str(tmp_path / "nope.ini")]) == 3


def test_missing_model_file(tmp_path, capsys):
    assert main(["invert", "--out", str(tmp_path)]) == 3
    assert "target.model" in capsys.readouterr().err


def test_missing_corpus_names_files(tmp_path, capsys):
    assert main(["reproduce", "--experiment", "mnist-6of10", "--out", str(tmp_path)]) == 3
    err = capsys.readouterr().err
    assert "train-images-idx3-ubyte" in err and "train-labels-idx1-ubyte" in err


def test_corrupt_model_file(tmp_path):
    (tmp_path / "target.model").write_bytes(b"not a model at all")
    assert main(["invert", "--mode", "direct", "--out", str(tmp_path)]) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit_code(tmp_path, tiny):
    spec = ModelSpec.dense([64, 4, 6])
    m = build(spec, 0)
    huge = Model(spec, [(np.full_like(w, 1e308), b) for w, b in m.weights])
    modelio.save(huge, tmp_path / "target.model")
    args = ["invert", "--mode", "direct", "--config", str(tiny), "--out", str(tmp_path), "-q"]
    assert main(args) == 4


def test_bad_class_is_usage_error(trained):
    out, common = trained
    assert main(["invert", "--class", "6", *common]) == 2


# --------------------------------------------------------------- commands


def test_train_outputs(trained):
    out, _ = trained
    for name in ("target.model", "generator.model", "discriminator.model", "train-target.config.ini"):
        assert (out / name).exists()
    rows = list(csv.reader(open(out / "target_train.csv")))
    assert rows[0] == ["epoch", "loss", "accuracy"] and len(rows) == 4
    assert modelio.load(out / "generator.model").spec.latent_dim == 4


def test_invert_latent_writes_result(trained):
    out, common = trained
    assert main(["invert", "--mode", "latent", "--class", "3", *common]) == 0
    stem = out / "invert_latent_class3"
    grid = artifacts.read_pgm(f"{stem}.pgm")
    assert grid.shape == (8, 8)
    trace = list(csv.reader(open(f"{stem}.trace.csv")))
    assert trace[0] == ["iteration", "loss", "confidence"] and 1 < len(trace) <= 31
    summary = open(f"{stem}.summary.txt").read()
    assert "[attack]" in summary and "mode = latent" in summary and "confidence = " in summary
    assert "target = 3" in summary


def test_sweep_has_seven_rows(trained):
    out, common = trained
    assert main(["sweep-p", *common]) == 0
    rows = list(csv.reader(open(out / "sweep_p.csv")))
    assert len(rows) == 8
    assert [r[0] for r in rows[1:]] == ["none", "1", "2", "3", "4", "5", "6"]


def test_sweep_rejects_p7(trained):
    _, common = trained
    assert main(["sweep-p", *common, "--set", "sweep.p_values=none,7"]) == 2


def test_analysis_commands(trained):
    out, common = trained
    assert main(["analyze-manifold", *common]) == 0
    text = open(out / "manifold.txt").read()
    assert "violations = 0" in text and "consistent = 1" in text
    assert main(["interpolate", *common]) == 0
    rows = list(csv.reader(open(out / "interpolate.csv")))
    assert len(rows) == 5 and rows[0][:4] == ["step", "argmax", "max_confidence", "disc_score"]
    assert artifacts.read_pgm(out / "interpolate.pgm").shape == (8, 4 * 8 + 3)


def test_render(trained):
    out, common = trained
    assert main(["render", "--count", "6", "--cols", "3", *common]) == 0
    assert artifacts.read_pgm(out / "render_generator.pgm").shape == (2 * 8 + 1, 3 * 8 + 2)
    assert main(["render", "--source", "data", "--count", "4", *common]) == 0


def test_inputs_are_not_mutated(trained):
    out, common = trained
    before = (out / "target.model").read_bytes()
    assert main(["invert", "--mode", "direct", "--class", "0", *common]) == 0
    assert (out / "target.model").read_bytes() == before
