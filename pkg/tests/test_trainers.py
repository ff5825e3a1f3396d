import numpy as np
import pytest

from ganinv.autodiff import Tensor, grad
from ganinv.data import Dataset, subset_classes, synth_glyphs, synth_modes
from ganinv.errors import ConfigError, DataError
from ganinv.nn import ModelSpec, build, infer
from ganinv.trainers import (
    LOG_CLAMP,
    OptimizerConfig,
    TrainConfig,
    gan_objective,
    sample,
    smoothed_loss_ok,
    train_classifier,
    train_gan,
)

LOG2 = np.log(2.0)


def test_objective_at_half():
    d_loss, g_loss = gan_objective(np.full(4, 0.5), np.full(4, 0.5))
    assert d_loss.item() == pytest.approx(2 * LOG2, abs=1e-12)
    assert g_loss.item() == pytest.approx(LOG2, abs=1e-12)


def test_objective_minimax_mode():
    _, g_loss = gan_objective(np.full(3, 0.5), np.full(3, 0.25), "minimax")
    assert g_loss.item() == pytest.approx(np.log(0.75), abs=1e-12)


def test_perfect_discriminator_loss_vanishes():
    d_loss, _ = gan_objective(np.full(3, 1 - 1e-12), np.full(3, 1e-12))
    assert 0 <= d_loss.item() < 1e-6


def test_clamp_keeps_saturated_values_finite():
    d_loss, g_loss = gan_objective(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
    assert np.isfinite(d_loss.item()) and np.isfinite(g_loss.item())
    assert d_loss.item() <= -2 * np.log(LOG_CLAMP)


def test_objective_grid_minimizers():
    grid = np.linspace(0.01, 0.99, 99)
    fake = [gan_objective(np.full(1, 0.5), np.full(1, v))[0].item() for v in grid]
    real = [gan_objective(np.full(1, v), np.full(1, 0.5))[0].item() for v in grid]
    assert np.argmin(fake) == 0 and np.argmin(real) == len(grid) - 1
    assert np.all(np.diff(fake) > 0) and np.all(np.diff(real) < 0)


def test_objective_is_differentiable():
    d_fake = Tensor(np.array([0.3, 0.6]), requires_grad=True)
    _, g_loss = gan_objective(np.array([0.5, 0.5]), d_fake)
    (g,) = grad(g_loss, [d_fake])
    np.testing.assert_allclose(g.data, -1 / (2 * d_fake.data))


def test_smoothed_loss_rule():
    assert smoothed_loss_ok([5, 4, 3, 2, 1, 1, 1, 1])
    assert smoothed_loss_ok([1.0, 1.02, 0.98, 1.01, 0.97, 0.99, 1.0])
    assert not smoothed_loss_ok([1, 1, 1, 1, 1, 3, 3, 3, 3, 3])


# ------------------------------------------------------------- classifier


@pytest.fixture(scope="module")
def glyphs():
    return synth_glyphs(10, 60, size=16, seed=1)


def test_classifier_trains_on_glyph_subset(glyphs):
    data = subset_classes(glyphs, [0, 1, 3, 5, 6, 9])
    model, report = train_classifier(data, ModelSpec.dense([256, 64, 6]), TrainConfig(epochs=10, batch_size=32))
    assert report.columns == ("epoch", "loss", "accuracy")
    assert len(report.rows) == 10
    assert report.rows[-1][2] >= 0.99
    assert smoothed_loss_ok(report.column("loss"))
    assert model.provenance["train_seed"] == 0


def test_single_class_trains_trivially(glyphs):
    data = subset_classes(glyphs, [4])
    _, report = train_classifier(data, ModelSpec.dense([256, 16, 1]), TrainConfig(epochs=3, batch_size=16))
    assert report.rows[-1][1] == pytest.approx(0.0, abs=1e-12)
    assert report.rows[-1][2] == 1.0


def test_class_count_mismatch(glyphs):
    data = subset_classes(glyphs, [0, 1, 2, 3, 4, 5])
    with pytest.raises(DataError):
        train_classifier(data, ModelSpec.dense([256, 16, 5]), TrainConfig(epochs=1))


def test_empty_dataset_rejected():
    empty = Dataset(np.zeros((0, 4)), np.zeros(0, np.int64), ("a", "b"), (2, 2))
    with pytest.raises(DataError):
        train_classifier(empty, ModelSpec.dense([4, 3, 2]), TrainConfig(epochs=1, batch_size=1))


def test_batch_larger_than_dataset(glyphs):
    data = subset_classes(glyphs, [0, 1])
    with pytest.raises(ConfigError):
        train_classifier(data, ModelSpec.dense([256, 8, 2]), TrainConfig(epochs=1, batch_size=10_000))


def test_classifier_bit_reproducible(glyphs):
    data = subset_classes(glyphs, [2, 7])
    spec = ModelSpec.dense([256, 16, 2])
    a, ra = train_classifier(data, spec, TrainConfig(epochs=2, batch_size=16, seed=3))
    b, rb = train_classifier(data, spec, TrainConfig(epochs=2, batch_size=16, seed=3))
    assert ra.rows == rb.rows
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.parameters(), b.parameters()))


# -------------------------------------------------------------------- GAN


def mode_specs(latent=8, width=64):
    gen = ModelSpec.dense([latent, width, width, 2], role="generator", value_range="real")
    disc = ModelSpec.dense([2, width, width, 1], role="discriminator")
    return gen, disc


def test_zero_epochs_returns_initial_models():
    data = synth_modes([(-1, 0), (1, 0)], 64, 0.05, seed=0)
    gen_spec, disc_spec = mode_specs()
    g, d, report = train_gan(data, gen_spec, disc_spec, TrainConfig(epochs=0, batch_size=16, latent_dim=8, seed=4))
    assert report.rows == []
    for x, y in zip(g.parameters(), build(gen_spec, 4).parameters()):
        assert x.tobytes() == y.tobytes()
    for x, y in zip(d.parameters(), build(disc_spec, 5).parameters()):
        assert x.tobytes() == y.tobytes()


def test_gan_reproducible_and_records_prior():
    data = synth_modes([(-1, 0), (1, 0)], 128, 0.05, seed=0)
    gen_spec, disc_spec = mode_specs(4, 16)
    cfg = TrainConfig(epochs=2, batch_size=32, latent_dim=4, prior="uniform", seed=2)
    g1, _, r1 = train_gan(data, gen_spec, disc_spec, cfg)
    g2, _, r2 = train_gan(data, gen_spec, disc_spec, cfg)
    assert r1.rows == r2.rows and len(r1.rows) == 2
    assert sample(g1, 5, 0).tobytes() == sample(g2, 5, 0).tobytes()
    assert g1.provenance["prior"] == "uniform"
    assert r1.columns == ("epoch", "d_loss", "g_loss", "d_real", "d_fake", "clamped")


def test_generator_output_stays_in_unit_box(glyphs):
    gen = build(ModelSpec.dense([8, 32, 256], role="generator"), 0)
    x = sample(gen, 500, 1)
    assert x.min() >= 0 and x.max() <= 1


def test_gan_width_mismatch_rejected():
    data = synth_modes([(-1, 0), (1, 0)], 32, 0.05)
    gen_spec = ModelSpec.dense([4, 8, 3], role="generator", value_range="real")
    disc_spec = ModelSpec.dense([2, 8, 1], role="discriminator")
    with pytest.raises(DataError):
        train_gan(data, gen_spec, disc_spec, TrainConfig(epochs=1, batch_size=8, latent_dim=4))


def test_union_corpus_discriminator_near_equilibrium(desk_run):
    # the default desk-scale GAN, trained on the merged 20-class glyph corpus
    g, d = desk_run.model("generator"), desk_run.model("discriminator")
    score = float(infer(d, sample(g, 1000, 9)).mean())
    assert 0.2 < score < 0.8
    assert len(g.provenance["dataset"]) == 2
