from types import SimpleNamespace

import numpy as np
import pytest

from swad import nn
from swad.autoencoder import TrainReport, build, decode, encode, train_stage1
from swad.numerics import Rng, ShapeError, TrainingDivergedError

from conftest import make_synthetic_arrays


def rank1_problem(seed=5, n=128, d=8):
    rng = Rng(seed)
    v = rng.uniform(1, d, 0.2, 1.0)
    c = rng.uniform(n, 1, 0.3, 1.0)
    x = c @ v
    cv = rng.uniform(24, 1, 0.3, 1.0)
    val = SimpleNamespace(
        val_x=np.vstack([cv @ v, rng.uniform(24, d, 0.0, 1.0)]),
        val_y=np.array([0] * 24 + [1] * 24),
    )
    return x, val


def image_problem(seed=11):
    x, y = make_synthetic_arrays(n_per_class=120, classes=2, seed=seed)
    features = x.astype(np.float64) / 255.0
    train = features[y == 0]
    val_norm = features[y == 0][:30]
    val_ab = features[y == 1][:30]
    val = SimpleNamespace(
        val_x=np.vstack([val_norm, val_ab]),
        val_y=np.array([0] * 30 + [1] * 30),
    )
    return train, val


class TestBuild:
    def test_reference_architecture_shapes(self):
        model = build(784, 128, hidden=256, rng=Rng(0))
        shapes = [l.weights.shape for l in model.encoder_layers + model.decoder_layers]
        assert shapes == [(784, 256), (256, 128), (128, 256), (256, 784)]

    def test_small_shapes(self):
        model = build(4, 2, hidden=3, rng=Rng(0))
        shapes = [l.weights.shape for l in model.encoder_layers + model.decoder_layers]
        assert shapes == [(4, 3), (3, 2), (2, 3), (3, 4)]

    def test_same_seed_identical_weights(self):
        a = build(6, 3, hidden=5, rng=Rng(9))
        b = build(6, 3, hidden=5, rng=Rng(9))
        for pa, pb in zip(a.params(), b.params()):
            assert np.array_equal(pa, pb)

    def test_zero_dims_rejected(self):
        with pytest.raises(ValueError):
            build(0, 2, hidden=3, rng=Rng(0))
        with pytest.raises(ValueError):
            build(4, 0, hidden=3, rng=Rng(0))

    def test_activation_layout(self):
        model = build(4, 2, hidden=3, rng=Rng(0))
        acts = [l.activation for l in model.encoder_layers + model.decoder_layers]
        assert acts == [nn.LEAKY_RELU, nn.SIGMOID, nn.LEAKY_RELU, nn.LEAKY_RELU]

    def test_linear_output_switch(self):
        model = build(4, 2, hidden=3, rng=Rng(0), output_activation=nn.LINEAR)
        assert model.decoder_layers[-1].activation == nn.LINEAR


class TestEncodeDecode:
    def setup_method(self):
        self.model = build(5, 3, hidden=4, rng=Rng(2))
        self.x = np.random.default_rng(0).uniform(-2, 2, (7, 5))

    def test_encode_strictly_inside_unit_interval(self):
        z = encode(self.model, self.x)
        assert z.shape == (7, 3)
        assert z.min() > 0.0
        assert z.max() < 1.0

    def test_round_trip_shape(self):
        assert decode(self.model, encode(self.model, self.x)).shape == self.x.shape

    def test_encode_is_pure(self):
        assert np.array_equal(encode(self.model, self.x), encode(self.model, self.x))

    def test_decode_zero_codes_gives_constant_rows(self):
        out = decode(self.model, np.zeros((4, 3)))
        for row in out[1:]:
            assert np.array_equal(row, out[0])

    def test_decode_accepts_codes_outside_unit_interval(self):
        out = decode(self.model, np.array([[-3.0, 0.5, 7.0]]))
        assert out.shape == (1, 5)
        assert np.all(np.isfinite(out))

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            encode(self.model, np.zeros((2, 9)))
        with pytest.raises(ShapeError):
            decode(self.model, np.zeros((2, 9)))


class TestTrainStage1:
    def test_rank1_data_reaches_tiny_loss(self):
        # Minibatch Adam needs ~2000 epochs here; full batch stalls around 6e-4.
        x, val = rank1_problem()
        model = build(8, 1, hidden=16, rng=Rng(3))
        report = train_stage1(model, x, val, batch_size=32, max_epochs=2000,
                              patience=2000, rng=Rng(4))
        assert report.train_loss[-1] < 1e-4

    def test_zero_epochs_is_a_no_op(self):
        x, val = rank1_problem()
        model = build(8, 1, hidden=16, rng=Rng(3))
        before = model.snapshot()
        report = train_stage1(model, x, val, max_epochs=0)
        assert report == TrainReport()
        for p, b in zip(model.params(), before):
            assert np.array_equal(p, b)

    def test_empty_training_set_rejected(self):
        _, val = rank1_problem()
        model = build(8, 1, hidden=16, rng=Rng(3))
        with pytest.raises(ValueError, match="empty"):
            train_stage1(model, np.zeros((0, 8)), val)

    def test_divergence_reported(self):
        _, val = rank1_problem()
        model = build(8, 1, hidden=16, rng=Rng(3))
        huge = np.full((16, 8), 1e200)
        with np.errstate(over="ignore"), pytest.raises(TrainingDivergedError):
            train_stage1(model, huge, val, max_epochs=1)

    def test_loss_halves_on_image_data(self):
        train, val = image_problem()
        model = build(train.shape[1], 4, hidden=16, rng=Rng(6))
        initial = nn.mse_loss(model.reconstruct(train), train)
        report = train_stage1(model, train, val, batch_size=64, max_epochs=30,
                              patience=30, rng=Rng(7))
        assert report.train_loss[-1] < 0.5 * initial

    def test_best_epoch_is_earliest_argmax(self):
        train, val = image_problem()
        model = build(train.shape[1], 4, hidden=16, rng=Rng(6))
        report = train_stage1(model, train, val, batch_size=64, max_epochs=15,
                              patience=15, rng=Rng(7))
        aucs = np.array(report.val_auc)
        assert report.best_epoch == int(np.argmax(aucs))
        assert report.best_epoch <= report.epochs_run - 1

    def test_best_epoch_weights_restored(self):
        train, val = image_problem()
        model = build(train.shape[1], 4, hidden=16, rng=Rng(6))
        report = train_stage1(model, train, val, batch_size=64, max_epochs=15,
                              patience=15, rng=Rng(7))
        # The restored model reproduces the loss recorded at the best epoch.
        restored_loss = nn.mse_loss(model.reconstruct(train), train)
        assert restored_loss == report.train_loss[report.best_epoch]

    def test_patience_stops_early(self):
        train, val = image_problem()
        model = build(train.shape[1], 4, hidden=16, rng=Rng(6))
        report = train_stage1(model, train, val, batch_size=64, max_epochs=200,
                              patience=3, rng=Rng(7))
        assert report.epochs_run < 200
        assert report.epochs_run - 1 - report.best_epoch >= 3

    def test_deterministic_given_seeds(self):
        train, val = image_problem()
        runs = []
        for _ in range(2):
            model = build(train.shape[1], 4, hidden=16, rng=Rng(6))
            report = train_stage1(model, train, val, batch_size=64, max_epochs=8,
                                  patience=8, rng=Rng(7))
            runs.append((report, model.snapshot()))
        assert runs[0][0] == runs[1][0]
        for a, b in zip(runs[0][1], runs[1][1]):
            assert np.array_equal(a, b)
