import numpy as np
import pytest

from ganinv.errors import ConfigError, GanInvError, ShapeError
from ganinv.manifold import (
    estimate_lipschitz,
    gap_bound_violations,
    gap_report,
    interpolate,
    latent_gap_bound,
    lipschitz_upper,
    manifold_gap,
    max_step_ratio,
    spectral_norm,
)
from ganinv.nn import Model, ModelSpec, build, infer


def linear_generator(w):
    d_in, d_out = w.shape
    spec = ModelSpec.dense([d_in, d_out], role="generator", value_range="real")
    return Model(spec, [(np.asarray(w, float), np.zeros(d_out))])


def test_spectral_norm_matches_svd():
    rng = np.random.default_rng(0)
    for shape in [(5, 5), (20, 7), (3, 30)]:
        w = rng.normal(size=shape)
        assert spectral_norm(w, iters=1000, tol=1e-14) == pytest.approx(np.linalg.svd(w, compute_uv=False)[0], rel=1e-8)


def test_identity_generator_constant_is_one():
    rep = estimate_lipschitz(linear_generator(np.eye(6)), pairs=500, seed=1)
    assert rep.beta_upper == pytest.approx(1.0, abs=1e-12)
    assert rep.beta_empirical == pytest.approx(1.0, abs=1e-9)


def test_doubling_generator_constant_is_two():
    rep = estimate_lipschitz(linear_generator(2 * np.eye(4)), pairs=500, seed=1)
    assert rep.beta_upper == pytest.approx(2.0, abs=1e-12)
    assert rep.beta_empirical == pytest.approx(2.0, abs=1e-9)


def test_sigmoid_layer_uses_quarter_slope():
    g = build(ModelSpec.dense([4, 8, 6], role="generator"), 0)
    bound, norms = lipschitz_upper(g)
    assert bound == pytest.approx(norms[0] * norms[1] * 0.25)


def test_empirical_below_upper_on_random_generator():
    g = build(ModelSpec.dense([8, 32, 32, 20], role="generator", hidden="tanh"), 3)
    rep = estimate_lipschitz(g, pairs=2000, seed=2)
    assert 0 < rep.beta_empirical <= rep.beta_upper * (1 + 1e-9)
    assert len(rep.latent_dist) == 2000 and (rep.latent_dist > 0).all()


def test_pairs_must_be_positive():
    with pytest.raises(ConfigError):
        estimate_lipschitz(linear_generator(np.eye(2)), pairs=0)


def test_uniform_prior_pairs_are_distinct():
    g = linear_generator(np.eye(1))
    g = Model(g.spec, g.weights, {"prior": "uniform"})
    rep = estimate_lipschitz(g, pairs=5000, seed=0)
    assert (rep.latent_dist > 0).all()
    assert "uniform" in rep.sampling


# -------------------------------------------------------------------- gap


def test_gap_examples():
    assert manifold_gap([[0, 0]], [[3, 4]]) == 5.0
    assert manifold_gap([[0, 0], [1, 1]], [[1, 1], [7, 7]]) == 0.0


def test_gap_is_symmetric_and_order_invariant():
    rng = np.random.default_rng(0)
    p, q = rng.normal(size=(500, 16)), rng.normal(2.0, size=(500, 16))
    gamma = manifold_gap(p, q)
    assert manifold_gap(q, p) == gamma
    assert manifold_gap(rng.permutation(p), rng.permutation(q)) == gamma
    # independent brute force re-scan
    brute = min(np.sqrt(((q - row) ** 2).sum(axis=1)).min() for row in p)
    assert gamma == pytest.approx(brute, rel=1e-12)


def test_gap_errors():
    with pytest.raises(ShapeError):
        manifold_gap(np.zeros((2, 3)), np.zeros((2, 4)))
    with pytest.raises(ShapeError):
        manifold_gap(np.zeros((0, 3)), np.zeros((2, 3)))


def test_latent_gap_bound():
    assert latent_gap_bound(5.0, 2.0) == 2.5
    assert latent_gap_bound(0.0, 3.0) == 0.0
    with pytest.raises(GanInvError):
        latent_gap_bound(1.0, 0.0)


def test_gap_report_divides_exactly():
    rep = gap_report([[0.0, 0.0]], [[3.0, 4.0]], 3.0, (0, 1))
    assert rep.gamma == 5.0 and rep.latent_gap_bound == 5.0 / 3.0
    assert rep.summary()["class_b"] == 1


def test_gap_bound_has_no_violations():
    g = build(ModelSpec.dense([6, 24, 10], role="generator", hidden="relu"), 4)
    rep = estimate_lipschitz(g, pairs=3000, seed=0)
    gamma = float(np.median(rep.image_dist))
    checked, violations = gap_bound_violations(rep, gamma)
    assert checked > 1000 and violations == 0


# ---------------------------------------------------------- interpolation


@pytest.fixture(scope="module")
def pair():
    g = build(ModelSpec.dense([4, 16, 9], role="generator"), 1)
    f = build(ModelSpec.dense([9, 8, 3]), 2)
    d = build(ModelSpec.dense([9, 8, 1], role="discriminator"), 3)
    return g, f, d


def test_two_steps_are_the_endpoints(pair):
    g, f, d = pair
    z1, z2 = np.zeros(4), np.ones(4)
    tr = interpolate(g, f, z1, z2, 2, d)
    assert tr.images[0].tobytes() == infer(g, z1[None])[0].tobytes()
    assert tr.images[1].tobytes() == infer(g, z2[None])[0].tobytes()
    assert tr.disc_scores.shape == (2,)


def test_equal_endpoints_give_constant_trace(pair):
    g, f, _ = pair
    z = np.full(4, 0.3)
    tr = interpolate(g, f, z, z, 6)
    assert all(img.tobytes() == tr.images[0].tobytes() for img in tr.images)
    assert tr.disc_scores is None


def test_steps_evenly_spaced_and_lipschitz(pair):
    g, f, d = pair
    rng = np.random.default_rng(0)
    tr = interpolate(g, f, rng.normal(size=4), rng.normal(size=4), 11, d)
    gaps = np.linalg.norm(np.diff(tr.latents, axis=0), axis=1)
    np.testing.assert_allclose(gaps, gaps[0], rtol=1e-9)
    assert max_step_ratio(tr) <= lipschitz_upper(g)[0]
    rows = list(tr.rows())
    assert len(rows) == 11 and len(rows[0]) == 4 + 3


def test_interpolation_errors(pair):
    g, f, _ = pair
    with pytest.raises(ConfigError):
        interpolate(g, f, np.zeros(4), np.ones(4), 1)
    with pytest.raises(ShapeError):
        interpolate(g, f, np.zeros(3), np.ones(4), 3)
    with pytest.raises(ShapeError):
        interpolate(g, build(ModelSpec.dense([10, 3]), 0), np.zeros(4), np.ones(4), 3)
