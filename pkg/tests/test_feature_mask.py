import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swad import nn
from swad.autoencoder import TrainReport, build
from swad.feature_mask import (
    FeatureMask,
    FmModule,
    build_fm,
    build_learn_net,
    fm_forward,
    read_mask,
    select_top_k,
    stage2_loss_and_grads,
    train_stage2,
    write_mask,
)
from swad.numerics import Rng, ShapeError


def uniform_latents(rng_seed, rows, latent):
    return np.random.default_rng(rng_seed).uniform(0.05, 0.95, (rows, latent))


class TestFmForward:
    def test_zero_network_gives_uniform_mask(self):
        latent = 5
        fm = FmModule([nn.DenseLayer(np.zeros((latent, latent)), np.zeros((1, latent)))])
        mask = fm_forward(fm, uniform_latents(0, 1, latent))
        np.testing.assert_allclose(mask, np.full((1, latent), 1.0 / latent), rtol=1e-15)

    @given(st.integers(min_value=1, max_value=24), st.integers(min_value=2, max_value=12),
           st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=60, deadline=None)
    def test_simplex_properties(self, rows, latent, seed):
        fm = build_fm(latent, Rng(seed))
        mask = fm_forward(fm, uniform_latents(seed, rows, latent))
        assert mask.shape == (1, latent)
        assert np.all(mask >= 0.0) and np.all(mask <= 1.0)
        assert abs(mask.sum() - 1.0) <= 1e-9

    def test_batch_permutation_invariance(self):
        latent = 6
        fm = build_fm(latent, Rng(3))
        z = uniform_latents(4, 17, latent)
        base = fm_forward(fm, z)
        for seed in range(3):
            perm = np.random.default_rng(seed).permutation(z.shape[0])
            np.testing.assert_allclose(fm_forward(fm, z[perm]), base, atol=1e-15)

    def test_dimension_mismatch(self):
        fm = build_fm(4, Rng(0))
        with pytest.raises(ShapeError):
            fm_forward(fm, uniform_latents(0, 3, 5))

    def test_empty_batch_rejected(self):
        fm = build_fm(4, Rng(0))
        with pytest.raises(ShapeError):
            fm_forward(fm, np.zeros((0, 4)))

    def test_deep_variant_also_on_simplex(self):
        fm = build_fm(6, Rng(1), hidden=(8, 5))
        mask = fm_forward(fm, uniform_latents(2, 9, 6))
        assert abs(mask.sum() - 1.0) <= 1e-9


class TestFeatureMaskRanking:
    def test_ranking_sorted_by_value(self):
        mask = FeatureMask.from_values(np.array([0.1, 0.5, 0.4]))
        assert mask.ranking.tolist() == [1, 2, 0]

    def test_tie_break_prefers_lower_index(self):
        mask = FeatureMask.from_values(np.array([0.25, 0.5, 0.25, 0.5]))
        assert mask.ranking.tolist() == [1, 3, 0, 2]


class TestSelectTopK:
    def test_k_equals_l(self):
        mask = FeatureMask.from_values(np.array([0.2, 0.3, 0.5]))
        assert sorted(select_top_k(mask, 3).tolist()) == [0, 1, 2]

    def test_argmax_case(self):
        mask = FeatureMask.from_values(np.array([0.1, 0.5, 0.4]))
        assert select_top_k(mask, 1).tolist() == [1]

    def test_all_equal_tie_break(self):
        mask = FeatureMask.from_values(np.full(4, 0.25))
        assert select_top_k(mask, 2).tolist() == [0, 1]

    def test_out_of_range(self):
        mask = FeatureMask.from_values(np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            select_top_k(mask, 0)
        with pytest.raises(ValueError):
            select_top_k(mask, 3)

    @given(st.lists(st.integers(0, 100), min_size=2, max_size=20))
    @settings(max_examples=60, deadline=None)
    def test_nesting(self, raw):
        values = np.array(raw, dtype=float) / 100.0
        mask = FeatureMask.from_values(values)
        previous: set[int] = set()
        for k in range(1, values.size + 1):
            current = set(select_top_k(mask, k).tolist())
            assert previous <= current
            assert len(current) == k
            previous = current


def numeric_grad(loss_fn, param, h=1e-5):
    grad = np.zeros_like(param)
    it = np.nditer(param, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = param[idx]
        param[idx] = orig + h
        up = loss_fn()
        param[idx] = orig - h
        down = loss_fn()
        param[idx] = orig
        grad[idx] = (up - down) / (2.0 * h)
    return grad


class TestStage2Gradients:
    @pytest.mark.parametrize("fm_hidden", [(), (7,)])
    def test_matches_finite_differences(self, fm_hidden):
        latent, d_out = 4, 5
        rng = Rng(12)
        fm = build_fm(latent, rng.split("fm"), hidden=fm_hidden)
        g = build_learn_net(latent, 6, d_out, rng.split("g"))
        z = uniform_latents(3, 6, latent)
        x = np.random.default_rng(4).uniform(-1, 1, (6, d_out))

        loss, fm_grads, g_grads = stage2_loss_and_grads(fm, g, z, x)
        assert np.isfinite(loss)

        def loss_fn():
            return stage2_loss_and_grads(fm, g, z, x)[0]

        for layer, (dw, db) in zip(fm.mask_net, fm_grads):
            np.testing.assert_allclose(dw, numeric_grad(loss_fn, layer.weights),
                                       rtol=1e-6, atol=1e-8)
            np.testing.assert_allclose(db, numeric_grad(loss_fn, layer.bias),
                                       rtol=1e-6, atol=1e-8)
        for layer, (dw, db) in zip(g.layers, g_grads):
            np.testing.assert_allclose(dw, numeric_grad(loss_fn, layer.weights),
                                       rtol=1e-6, atol=1e-8)
            np.testing.assert_allclose(db, numeric_grad(loss_fn, layer.bias),
                                       rtol=1e-6, atol=1e-8)


def informative_noise_problem(latent=6, noise_dims=(5,), rows=256, d_out=8, seed=0):
    """Latents where some dims drive the targets and the rest are pure noise."""
    rng = np.random.default_rng(seed)
    factor = rng.uniform(0.1, 0.9, (rows, 1))
    z = np.zeros((rows, latent))
    informative = [j for j in range(latent) if j not in noise_dims]
    for rank, j in enumerate(informative):
        z[:, j] = np.clip(factor[:, 0] ** (1 + 0.5 * rank), 0.02, 0.98)
    for j in noise_dims:
        z[:, j] = rng.uniform(0.02, 0.98, rows)
    mix = rng.uniform(-1, 1, (len(informative), d_out))
    x = z[:, informative] @ mix
    return z, x, informative


class TestTrainStage2:
    def test_zero_epochs_returns_valid_initial_mask(self):
        z, x, _ = informative_noise_problem()
        rng = Rng(1)
        fm = build_fm(6, rng.split("fm"))
        g = build_learn_net(6, 8, 8, rng.split("g"))
        mask, report = train_stage2(fm, g, z, x, max_epochs=0)
        assert report == TrainReport()
        assert np.all(mask.values >= 0) and np.all(mask.values <= 1)
        assert abs(mask.values.sum() - 1.0) <= 1e-9

    def test_loss_never_worse_than_initialization(self):
        z, x, _ = informative_noise_problem()
        rng = Rng(2)
        fm = build_fm(6, rng.split("fm"))
        g = build_learn_net(6, 8, 8, rng.split("g"))
        initial = stage2_loss_and_grads(fm, g, z, x)[0]
        _, report = train_stage2(fm, g, z, x, batch_size=64, max_epochs=40, rng=Rng(3))
        assert report.train_loss[-1] <= initial

    def test_noise_feature_ranked_outside_top_half(self):
        z, x, informative = informative_noise_problem()
        rng = Rng(4)
        fm = build_fm(6, rng.split("fm"))
        g = build_learn_net(6, 8, 8, rng.split("g"))
        mask, _ = train_stage2(fm, g, z, x, batch_size=64, max_epochs=80, rng=Rng(5))
        noise_position = mask.ranking.tolist().index(5)
        assert noise_position >= 3

    def test_mask_on_simplex_after_training(self):
        z, x, _ = informative_noise_problem()
        rng = Rng(6)
        fm = build_fm(6, rng.split("fm"))
        g = build_learn_net(6, 8, 8, rng.split("g"))
        mask, _ = train_stage2(fm, g, z, x, batch_size=64, max_epochs=10, rng=Rng(7))
        assert np.all(mask.values >= 0) and np.all(mask.values <= 1)
        assert abs(mask.values.sum() - 1.0) <= 1e-9

    def test_row_mismatch_rejected(self):
        rng = Rng(0)
        fm = build_fm(3, rng.split("fm"))
        g = build_learn_net(3, 4, 5, rng.split("g"))
        with pytest.raises(ShapeError):
            train_stage2(fm, g, np.zeros((4, 3)), np.zeros((5, 5)))

    def test_empty_input_rejected(self):
        rng = Rng(0)
        fm = build_fm(3, rng.split("fm"))
        g = build_learn_net(3, 4, 5, rng.split("g"))
        with pytest.raises(ValueError):
            train_stage2(fm, g, np.zeros((0, 3)), np.zeros((0, 5)))

    def test_stage1_parameters_untouched(self):
        model = build(8, 4, hidden=8, rng=Rng(9))
        x = np.random.default_rng(1).uniform(0, 1, (64, 8))
        z = model.encode(x)
        before = model.snapshot()
        rng = Rng(10)
        fm = build_fm(4, rng.split("fm"))
        g = build_learn_net(4, 8, 8, rng.split("g"))
        train_stage2(fm, g, z, x, batch_size=32, max_epochs=10, rng=Rng(11))
        for p, b in zip(model.params(), before):
            assert np.array_equal(p, b)

    def test_monitored_mode_early_stops_and_restores(self):
        z, x, _ = informative_noise_problem()
        rng = Rng(12)
        fm = build_fm(6, rng.split("fm"))
        g = build_learn_net(6, 8, 8, rng.split("g"))
        calls = []

        def scorer(mask):
            # Deterministic fabricated score peaking at the third call.
            calls.append(1)
            return 1.0 - abs(len(calls) - 3) * 0.1

        mask, report = train_stage2(fm, g, z, x, batch_size=64, max_epochs=50,
                                    patience=4, rng=Rng(13), val_scorer=scorer)
        assert report.best_epoch == 2
        assert report.epochs_run == 2 + 4 + 1
        assert np.argmax(report.val_auc) == report.best_epoch

    def test_unmonitored_mode_runs_full_budget(self):
        z, x, _ = informative_noise_problem()
        rng = Rng(14)
        fm = build_fm(6, rng.split("fm"))
        g = build_learn_net(6, 8, 8, rng.split("g"))
        _, report = train_stage2(fm, g, z, x, batch_size=64, max_epochs=12,
                                 patience=1, rng=Rng(15))
        assert report.epochs_run == 12
        assert report.val_auc == []

    def test_deterministic_given_seeds(self):
        z, x, _ = informative_noise_problem()
        masks = []
        for _ in range(2):
            rng = Rng(16)
            fm = build_fm(6, rng.split("fm"))
            g = build_learn_net(6, 8, 8, rng.split("g"))
            mask, _ = train_stage2(fm, g, z, x, batch_size=64, max_epochs=8, rng=Rng(17))
            masks.append(mask)
        assert np.array_equal(masks[0].values, masks[1].values)
        assert np.array_equal(masks[0].ranking, masks[1].ranking)


def test_mask_text_roundtrip(tmp_path):
    mask = FeatureMask.from_values(np.array([0.125, 0.5, 0.375]))
    path = tmp_path / "mask.txt"
    write_mask(path, mask)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("1 ")  # best feature first
    loaded = read_mask(path)
    assert np.array_equal(loaded.values, mask.values)
    assert np.array_equal(loaded.ranking, mask.ranking)
