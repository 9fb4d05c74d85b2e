import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowcast.errors import DegenerateScalerError, DivergenceError, EmptyDatasetError, InvalidInputError
from flowcast.neuralnet import (
    LstmModel,
    MinMaxScaler,
    TrainConfig,
    gradient_check,
    load_checkpoint,
    lstm_forward,
    lstm_hidden_states,
    lstm_predict,
    lstm_train,
    make_windows,
    mse,
    save_checkpoint,
)


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


class TestWindows:
    def test_enumeration(self):
        ds = make_windows([1, 2, 3, 4, 5], window=3, horizon=1, scaler=MinMaxScaler(np.array([0.0]), np.array([1.0])))
        assert ds.inputs[:, :, 0].tolist() == [[1, 2, 3], [2, 3, 4]]
        assert ds.targets.tolist() == [4, 5]
        assert ds.target_index.tolist() == [3, 4]

    def test_default_window_is_three(self):
        assert make_windows(np.arange(10.0)).window == 3

    def test_horizon_two(self):
        ds = make_windows(np.arange(8.0), window=3, horizon=2)
        raw = ds.scaler.inverse(ds.targets)
        np.testing.assert_allclose(raw, [4, 5, 6, 7])
        np.testing.assert_allclose(ds.scaler.inverse(ds.inputs[0, :, 0]), [0, 1, 2])

    def test_window_too_long(self):
        with pytest.raises(EmptyDatasetError):
            make_windows([1.0, 2.0, 3.0], window=3)

    def test_constant_series(self):
        with pytest.raises(DegenerateScalerError):
            make_windows(np.full(10, 4.0))

    def test_scaler_example(self):
        s = MinMaxScaler.fit([0.0, 5.0, 10.0])
        np.testing.assert_array_equal(s.transform([0.0, 5.0, 10.0], feature=0), [0.0, 0.5, 1.0])
        np.testing.assert_array_equal(s.inverse([0.0, 0.5, 1.0]), [0.0, 5.0, 10.0])

    @given(st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=2, max_size=50).filter(lambda v: max(v) > min(v)))
    def test_scaler_round_trip(self, values):
        s = MinMaxScaler.fit(values)
        back = s.inverse(s.transform(values, feature=0))
        np.testing.assert_allclose(back, values, rtol=1e-9, atol=1e-9 * max(1.0, max(abs(v) for v in values)))

    def test_test_windows_reach_into_history(self):
        x = np.arange(20.0)
        train = make_windows(x[:15])
        test = make_windows(x, scaler=train.scaler, targets_from=15)
        assert test.target_index.tolist() == [15, 16, 17, 18, 19]
        np.testing.assert_allclose(train.scaler.inverse(test.inputs[0, :, 0]), [12, 13, 14])


class TestForward:
    def test_zero_weights_predict_zero(self):
        model = LstmModel.zeros(input_dim=1, hidden_dim=4)
        assert lstm_forward(model, [[0.3], [0.9], [-2.0]]) == 0.0

    def test_one_scalar_per_sequence(self):
        model = LstmModel.init(1, 8, seed=0)
        assert isinstance(lstm_forward(model, [0.1, 0.2, 0.3]), float)
        assert lstm_predict(model, np.zeros((5, 3, 1))).shape == (5,)

    def test_hidden_one_matches_scalar_arithmetic(self):
        model = LstmModel.zeros(1, 1)
        # rows f, i, o, g; columns x, h
        model.W[:] = [[0.5, -0.3], [0.8, 0.2], [-0.4, 0.6], [1.1, -0.7]]
        model.b[:] = [0.1, -0.2, 0.3, 0.05]
        model.W_y[:] = [1.7]
        model.b_y = -0.25
        seq = [0.4, -1.2, 0.9]

        h = c = 0.0
        for x in seq:
            f = sigmoid(0.5 * x - 0.3 * h + 0.1)
            i = sigmoid(0.8 * x + 0.2 * h - 0.2)
            o = sigmoid(-0.4 * x + 0.6 * h + 0.3)
            g = math.tanh(1.1 * x - 0.7 * h + 0.05)
            c = f * c + i * g
            h = o * math.tanh(c)
        want = 1.7 * h - 0.25
        assert lstm_forward(model, seq) == pytest.approx(want, abs=1e-14)

    def test_dimension_mismatch(self):
        model = LstmModel.init(2, 4)
        with pytest.raises(InvalidInputError):
            lstm_forward(model, [[1.0], [2.0]])

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_states_bounded(self, seed):
        rng = np.random.default_rng(seed)
        model = LstmModel.init(2, 6, seed=seed)
        model.W *= 20
        _, _ = lstm_hidden_states(model, rng.standard_normal((8, 2)) * 10)
        hs, _ = lstm_hidden_states(model, rng.standard_normal((8, 2)))
        assert np.all(np.abs(hs) < 1)

    def test_init_range(self):
        model = LstmModel.init(3, 16, seed=4)
        bound = 1 / math.sqrt(16)
        assert np.all(np.abs(model.W) <= bound)
        assert np.all(np.abs(model.W_y) <= bound)


def _sine_windows(n=400, period=40):
    return make_windows(np.sin(2 * np.pi * np.arange(n) / period))


class TestTraining:
    def test_zero_epochs_is_noop(self):
        model = LstmModel.init(1, 4, seed=1)
        out, history = lstm_train(model, _sine_windows(), TrainConfig(epochs=0))
        assert history == []
        np.testing.assert_array_equal(out.W, model.W)
        assert out is not model

    def test_ramp_loss_decreases(self):
        ds = make_windows(np.arange(200.0))
        _, history = lstm_train(LstmModel.init(1, 8, seed=0), ds, TrainConfig(learning_rate=0.05, batch_size=16, epochs=20))
        assert history[-1] < history[0]

    def test_sine_converges(self):
        ds = _sine_windows()
        model, history = lstm_train(LstmModel.init(1, 16, seed=0), ds, TrainConfig(learning_rate=0.5, batch_size=32, epochs=200))
        assert len(history) == 200
        assert mse(model, ds) < 1e-3

    def test_deterministic(self):
        ds = _sine_windows(200)
        cfg = TrainConfig(learning_rate=0.1, batch_size=8, epochs=5, seed=3)
        _, a = lstm_train(LstmModel.init(1, 4, seed=2), ds, cfg)
        _, b = lstm_train(LstmModel.init(1, 4, seed=2), ds, cfg)
        assert a == b

    def test_batch_capped_at_dataset_size(self):
        ds = _sine_windows(60)
        cfg = TrainConfig(batch_size=1024, epochs=3)
        _, history = lstm_train(LstmModel.init(1, 4), ds, cfg)
        assert len(history) == 3

    def test_divergence_names_epoch(self):
        model = LstmModel.init(1, 4)
        model.W_y[:] = 1e308
        with pytest.raises(DivergenceError) as info:
            lstm_train(model, _sine_windows(60), TrainConfig(epochs=2))
        assert info.value.epoch == 0

    def test_feature_count_mismatch(self):
        with pytest.raises(InvalidInputError):
            lstm_train(LstmModel.init(2, 4), _sine_windows(60), TrainConfig(epochs=1))


class TestGradientCheck:
    @pytest.mark.parametrize("seed", range(10))
    def test_random_models(self, seed):
        rng = np.random.default_rng(seed)
        model = LstmModel.init(2, 3, seed=seed)
        model.b += rng.normal(0, 0.5, model.b.shape)
        sample = (rng.standard_normal((3, 2)), rng.standard_normal())
        assert gradient_check(model, sample) < 1e-4

    def test_zero_loss_output_gradient(self):
        from flowcast.neuralnet import _backward

        model = LstmModel.init(1, 3, seed=5)
        x = np.array([[0.2], [0.5], [0.1]])
        y = lstm_forward(model, x)
        _, grads = _backward(model, x[None], np.array([y]))
        assert np.all(grads["W_y"] == 0) and grads["b_y"][0] == 0

    def test_repeatable(self):
        model = LstmModel.init(1, 2, seed=9)
        sample = (np.array([0.3, -0.1, 0.8]), 0.4)
        assert gradient_check(model, sample) == gradient_check(model, sample)


def test_checkpoint_round_trip(tmp_path):
    model = LstmModel.init(2, 5, seed=7)
    scaler = MinMaxScaler.fit(np.array([[0.0, 1.0], [4.0, 3.0]]))
    path = tmp_path / "m.json"
    save_checkpoint(path, model, scaler, window=3)
    loaded, loaded_scaler, payload = load_checkpoint(path)
    np.testing.assert_array_equal(loaded.W, model.W)
    assert loaded.b_y == model.b_y
    np.testing.assert_array_equal(loaded_scaler.high, scaler.high)
    assert payload["window"] == 3
    x = np.random.default_rng(0).standard_normal((4, 3, 2))
    np.testing.assert_array_equal(lstm_predict(loaded, x), lstm_predict(model, x))


def test_checkpoint_rejects_foreign_json(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(InvalidInputError):
        load_checkpoint(path)
