import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra.numpy import arrays
from hypothesis.strategies import floats

from poselift import (
    CvaeConfig,
    RngStream,
    SampleSet,
    baseline_gaussian_sample,
    baseline_regress,
    cvae_loss,
    gsnn_loss,
    hybrid_loss,
    kl_divergence,
    load_model,
    reparameterize,
    sample_candidates,
    save_model,
    train,
    train_baseline,
)
from poselift.datagen import stack_records
from poselift.errors import EmptyDataset, NonPositiveVariance, ShapeMismatch
from poselift.lifter import build_model, sample_candidates_batch
from poselift.nn.gradcheck import check_gradients

TINY = dict(latent_dim=4, hidden_dim=16, blocks_per_net=1, k_train=3, dropout=0.0,
            batch_size=32, epochs=2, base_lr=1e-3)


@pytest.fixture(scope="module")
def data(small_records):
    return stack_records(small_records)


def tiny_model(data, kind="cvae", seed=0, **kw):
    cfg = CvaeConfig(**{**TINY, **kw})
    return build_model(kind, cfg, *data, RngStream(seed))


def batch(model, data, n=8):
    p2, p3 = data
    return model._inputs(p2[:n]), model._targets(p3[:n])


def pin_output(linear, value):
    linear.weight.value[:] = 0.0
    linear.bias.value[:] = value


class TestConfig:
    def test_defaults(self):
        c = CvaeConfig()
        assert (c.lambda1, c.lambda2, c.alpha) == (10.0, 100.0, 0.5)
        assert (c.k_train, c.k_test, c.epochs, c.batch_size, c.base_lr) == (10, 200, 200, 256, 2.5e-4)

    def test_desk_preset(self):
        c = CvaeConfig.desk()
        assert (c.latent_dim, c.hidden_dim, c.blocks_per_net) == (16, 256, 1)
        assert c.epochs <= 50

    @pytest.mark.parametrize("bad", [dict(lambda2=0.0), dict(alpha=1.5), dict(alpha=-0.1),
                                     dict(k_train=0), dict(k_test=0)])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            CvaeConfig(**bad)

    def test_overrides_ignore_none(self):
        c = CvaeConfig().with_overrides(epochs=3, alpha=None)
        assert c.epochs == 3 and c.alpha == 0.5


class TestSampleSet:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            SampleSet(np.zeros((2, 17, 3)), weights=[0.5, 0.6])

    def test_needs_one_candidate(self):
        with pytest.raises(ShapeMismatch):
            SampleSet(np.zeros((0, 17, 3)))

    def test_prefix(self):
        s = SampleSet(np.arange(5 * 17 * 3.0).reshape(5, 17, 3))
        assert np.array_equal(s.prefix(2).candidates, s.candidates[:2])


class TestKl:
    def test_prior_is_zero(self):
        assert kl_divergence(np.zeros(7), np.zeros(7)) == 0.0

    @given(arrays(np.float64, 6, elements=floats(-5, 5)), arrays(np.float64, 6, elements=floats(-8, 8)))
    @settings(max_examples=300, deadline=None)
    def test_non_negative_and_zero_only_at_prior(self, mu, lv):
        kl = float(kl_divergence(mu, lv))
        assert kl >= 0.0
        if np.max(np.abs(mu)) > 1e-3 or np.max(np.abs(lv)) > 1e-3:
            assert kl > 1e-12


class TestReparameterize:
    def test_vanishing_variance(self):
        mu = np.array([0.3, -2.0])
        eps = RngStream(1).normal(2)
        z = reparameterize(mu, np.array([-50.0, -50.0]), RngStream(1))
        assert np.all(np.abs(z - mu) <= np.exp(-5.0) * np.abs(eps) + 1e-15)

    def test_deterministic(self):
        a = reparameterize(np.zeros(4), np.zeros(4), RngStream(8))
        b = reparameterize(np.zeros(4), np.zeros(4), RngStream(8))
        assert np.array_equal(a, b)


class TestLosses:
    def test_zero_when_decoder_exact_and_posterior_is_prior(self, data):
        model = tiny_model(data).astype(np.float64)
        x2, x3 = batch(model, data, 4)
        x3 = np.tile(x3[:1], (4, 1))
        pin_output(model.decoder.layers[-1], x3[0])
        pin_output(model.encoder.layers[-1], 0.0)
        loss, parts = cvae_loss(model, x2, x3, RngStream(0), backward=False)
        assert loss == 0.0 and parts["kl"] == 0.0
        assert gsnn_loss(model, x2, x3, RngStream(0), backward=False)[0] == 0.0

    def test_lambda1_zero_is_weighted_reconstruction(self, data):
        model = tiny_model(data, lambda1=0.0)
        x2, x3 = batch(model, data)
        loss, parts = cvae_loss(model, x2, x3, RngStream(0), backward=False)
        assert loss == pytest.approx(100.0 * parts["rec_posterior"], rel=1e-12)

    def test_shape_mismatch(self, data):
        model = tiny_model(data)
        x2, x3 = batch(model, data)
        with pytest.raises(ShapeMismatch):
            cvae_loss(model, x2[:, :-1], x3, RngStream(0))
        with pytest.raises(ShapeMismatch):
            gsnn_loss(model, x2, x3[:-1], RngStream(0))

    def test_gsnn_deterministic_and_decoder_only(self, data):
        model = tiny_model(data)
        x2, x3 = batch(model, data)
        model.zero_grad()
        a = gsnn_loss(model, x2, x3, RngStream(3))[0]
        assert all(np.all(p.grad == 0) for p in model.encoder.parameters())
        assert gsnn_loss(model, x2, x3, RngStream(3), backward=False)[0] == a

    def test_losses_non_negative(self, data):
        model = tiny_model(data)
        x2, x3 = batch(model, data)
        for fn in (cvae_loss, gsnn_loss, hybrid_loss):
            assert fn(model, x2, x3, RngStream(1), backward=False)[0] >= 0.0

    @pytest.mark.parametrize("alpha", [0.0, 0.3, 0.5, 1.0])
    def test_hybrid_is_affine_combination(self, data, alpha):
        model = tiny_model(data, alpha=alpha).astype(np.float64)
        x2, x3 = batch(model, data)
        lc = cvae_loss(model, x2, x3, RngStream(5), backward=False)[0]
        lg = gsnn_loss(model, x2, x3, RngStream(5), backward=False)[0]
        lh = hybrid_loss(model, x2, x3, RngStream(5), backward=False)[0]
        assert abs(lh - (alpha * lc + (1 - alpha) * lg)) < 1e-12 * max(1.0, lh)
        if alpha == 1.0:
            assert lh == lc
        if alpha == 0.0:
            assert lh == lg

    def test_hybrid_gradients_are_affine(self, data):
        model = tiny_model(data, alpha=0.3).astype(np.float64)
        for net in model.networks().values():
            net.set_running_stats_tracking(False)
        x2, x3 = batch(model, data)

        def grads(fn):
            model.zero_grad()
            fn(model, x2, x3, RngStream(5))
            return [p.grad.copy() for p in model.parameters()]

        gc, gg, gh = grads(cvae_loss), grads(gsnn_loss), grads(hybrid_loss)
        for c, g, h in zip(gc, gg, gh):
            assert np.allclose(h, 0.3 * c + 0.7 * g, rtol=1e-9, atol=1e-12)

    def test_hybrid_gradient_check(self, data):
        model = tiny_model(data, latent_dim=2, hidden_dim=8, k_train=2).astype(np.float64)
        for net in model.networks().values():
            net.set_running_stats_tracking(False)
        x2, x3 = batch(model, data, 4)

        def closure():
            model.zero_grad()
            return hybrid_loss(model, x2, x3, RngStream(2))[0]

        assert check_gradients(model.parameters(), closure, max_per_param=6) < 1e-4

    def test_log_var_clamp_stops_gradient(self, data):
        model = tiny_model(data).astype(np.float64)
        x2, x3 = batch(model, data)
        head = model.encoder.layers[-1]
        pin_output(head, np.r_[np.zeros(4), np.full(4, 30.0)])
        model.zero_grad()
        cvae_loss(model, x2, x3, RngStream(0))
        assert np.all(head.bias.grad[4:] == 0.0)


class TestTraining:
    def test_history_finite_and_eval_mode(self, data):
        model, hist = train(tiny_model(data), *data, RngStream(1))
        assert len(hist) == 2 and all(np.isfinite(r["loss"]) for r in hist)
        assert {"kl", "rec_posterior", "rec_prior"} <= set(hist[0])
        assert not model.encoder.training

    def test_empty_dataset(self, data):
        model = tiny_model(data)
        with pytest.raises(EmptyDataset):
            train(model, data[0][:0], data[1][:0], RngStream(1))

    def test_identical_runs_give_identical_checkpoints(self, data, tmp_path):
        for name in ("a", "b"):
            model, _ = train(tiny_model(data, dropout=0.3), *data, RngStream(4))
            save_model(tmp_path / name, model)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_baseline_training_reduces_loss(self, data):
        model, hist = train_baseline(tiny_model(data, "baseline", epochs=10), *data, RngStream(1))
        assert hist[-1]["loss"] < hist[0]["loss"]


@pytest.fixture(scope="module")
def trained(data):
    return train(tiny_model(data), *data, RngStream(2))[0]


class TestSampling:
    def test_k1_repeatable(self, trained, data):
        a = sample_candidates(trained, data[0][0], 1, RngStream(3))
        b = sample_candidates(trained, data[0][0], 1, RngStream(3))
        assert np.array_equal(a.candidates, b.candidates)

    def test_default_k(self, trained, data):
        s = sample_candidates(trained, data[0][0], CvaeConfig().k_test, RngStream(3))
        assert len(s) == 200 and np.all(np.isfinite(s.candidates))
        assert np.max(np.abs(s.candidates[:, 0])) < 1e-9

    def test_prefix_property(self, trained, data):
        long = sample_candidates(trained, data[0][5], 50, RngStream(6)).candidates
        short = sample_candidates(trained, data[0][5], 20, RngStream(6)).candidates
        assert np.array_equal(long[:20], short)

    def test_collapse_when_decoder_ignores_z(self, data):
        model = tiny_model(data)
        model.decoder.layers[0].weight.value[:, :4] = 0.0  # latent columns of the first layer
        model.eval()
        s = sample_candidates(model, data[0][0], 10, RngStream(1)).candidates
        assert np.all(s == s[0])

    def test_batch_matches_single(self, trained, data):
        streams = [RngStream(9).child(str(i)) for i in range(3)]
        many = sample_candidates_batch(trained, data[0][:3], 7, streams)
        for i in range(3):
            one = sample_candidates(trained, data[0][i], 7, RngStream(9).child(str(i)))
            assert np.allclose(many[i], one.candidates, atol=1e-4)


class TestBaseline:
    def test_regress_is_deterministic(self, data):
        model = tiny_model(data, "baseline").eval()
        a, b = baseline_regress(model, data[0][:4]), baseline_regress(model, data[0][:4])
        assert np.array_equal(a, b) and a.shape == (4, 17, 3)
        assert baseline_regress(model, data[0][0]).shape == (17, 3)

    def test_gaussian_sampling(self, rng):
        base = rng.normal(0, 200, (17, 3))
        base[0] = 0.0
        s = baseline_gaussian_sample(base, 1e-12, 50, RngStream(1)).candidates
        assert np.max(np.abs(s - base)) < 1e-4
        assert np.all(s[:, 0] == 0.0)

    @pytest.mark.parametrize("variance", [0.0, -1.0])
    def test_non_positive_variance(self, variance):
        with pytest.raises(NonPositiveVariance):
            baseline_gaussian_sample(np.zeros((17, 3)), variance, 3, RngStream(0))


class TestPersistence:
    @pytest.mark.parametrize("kind", ["cvae", "baseline"])
    def test_round_trip(self, data, tmp_path, kind):
        model = tiny_model(data, kind, dropout=0.2)
        fit = train if kind == "cvae" else train_baseline
        model, _ = fit(model, *data, RngStream(0))
        save_model(tmp_path / "m", model)
        back = load_model(tmp_path / "m")
        assert back.kind == kind and back.config == model.config
        if kind == "cvae":
            a = sample_candidates(model, data[0][0], 5, RngStream(1)).candidates
            b = sample_candidates(back, data[0][0], 5, RngStream(1)).candidates
        else:
            a, b = baseline_regress(model, data[0][:5]), baseline_regress(back, data[0][:5])
        assert np.array_equal(a, b)
