import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowcast.errors import InvalidPackError, TuningFailedError
from flowcast.gwo import (
    FIRST_WOLF,
    Dim,
    SearchSpace,
    WolfPack,
    _decode_lstm,
    default_lstm_space,
    gwo_optimize,
    gwo_step,
    tune_lstm,
)
from flowcast.neuralnet import LstmModel, TrainConfig, lstm_train, make_windows, mse


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


def rastrigin(x):
    x = np.asarray(x)
    return float(10 * x.size + np.sum(x * x - 10 * np.cos(2 * np.pi * x)))


def box(dim, lo, hi):
    return SearchSpace([Dim(f"x{i}", lo, hi) for i in range(dim)])


class TestStep:
    def test_fixed_point(self):
        x = np.array([[0.3, -1.25, 7.0]] * 4)
        pack = WolfPack(x, np.zeros(4), -10, 10, t=3, T=10, seed=5)
        # C = 1 makes every distance zero; A stays random
        out = gwo_step(pack, r2=0.5)
        np.testing.assert_array_equal(out.positions, x)

    def test_end_of_schedule_moves_to_leader_mean(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-5, 5, (6, 2))
        fit = np.arange(6.0)
        pack = WolfPack(x, fit, -10, 10, t=10, T=10)
        assert pack.convergence_factor == 0.0
        out = gwo_step(pack, r2=0.5)
        np.testing.assert_allclose(out.positions, np.tile(x[:3].mean(axis=0), (6, 1)), atol=1e-14)

    def test_pinned_random_hand_arithmetic(self):
        # 1-D, a = 1 at t = T/2; r1 = r2 = 0.5 gives A = 0 and C = 1
        x = np.array([[1.0], [2.0], [4.0], [10.0]])
        pack = WolfPack(x, np.array([0.0, 1.0, 2.0, 3.0]), -100, 100, t=5, T=10)
        out = gwo_step(pack, r1=0.5, r2=0.5)
        np.testing.assert_allclose(out.positions[:, 0], [7 / 3] * 4, atol=1e-14)

        # r1 = 1, r2 = 0.25 gives A = a = 1, C = 0.5
        out = gwo_step(pack, r1=1.0, r2=0.25)
        want = []
        for xi in x[:, 0]:
            moves = [lead - 1.0 * abs(0.5 * lead - xi) for lead in (1.0, 2.0, 4.0)]
            want.append(sum(moves) / 3)
        np.testing.assert_allclose(out.positions[:, 0], want, atol=1e-13)

    def test_zero_a_unit_c_distances(self):
        x = np.array([[0.0], [3.0], [-2.0], [5.0]])
        pack = WolfPack(x, np.array([2.0, 0.0, 1.0, 3.0]), -10, 10, t=4, T=4)
        out = gwo_step(pack, r2=0.5)
        lead = x[[1, 2, 0], 0]
        assert out.positions[3, 0] == pytest.approx(lead.mean())

    def test_too_few_wolves(self):
        with pytest.raises(InvalidPackError):
            WolfPack(np.zeros((2, 1)), np.zeros(2), -1, 1)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(0, 20))
    def test_positions_stay_in_bounds(self, seed, t):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1, 1, (7, 3))
        pack = WolfPack(x, rng.random(7), -1, 1, t=t, T=20, seed=seed)
        out = gwo_step(pack)
        assert np.all(out.positions >= -1) and np.all(out.positions <= 1)

    def test_non_finite_fitness_ranks_last(self):
        pack = WolfPack(np.arange(12.0).reshape(4, 3), np.array([np.nan, 3.0, np.inf, 1.0]), -50, 50)
        assert pack.leaders().tolist() == [3, 1, 0]


class TestOptimize:
    def test_sphere(self):
        res = gwo_optimize(sphere, box(2, -5.12, 5.12), pack_size=30, T=100, seed=0)
        assert res.best_fitness < 1e-3

    def test_rastrigin(self):
        res = gwo_optimize(rastrigin, box(2, -5.12, 5.12), pack_size=30, T=200, seed=0)
        assert res.best_fitness < 1.0

    @pytest.mark.parametrize("seed", range(3))
    def test_best_ever_non_increasing(self, seed):
        res = gwo_optimize(rastrigin, box(3, -5.12, 5.12), pack_size=10, T=40, seed=seed)
        best = [h["best_fitness"] for h in res.history]
        assert all(b <= a for a, b in zip(best, best[1:]))
        assert best[-1] == res.best_fitness

    def test_constant_fitness(self):
        space = box(2, -1, 1)
        res = gwo_optimize(lambda x: 4.0, space, pack_size=5, T=10, seed=1)
        assert res.best_fitness == 4.0
        assert np.all(res.best_position >= -1) and np.all(res.best_position <= 1)

    def test_failing_fitness_is_worst(self):
        def f(x):
            if x[0] > 0:
                raise FloatingPointError("boom")
            return float("nan") if x[0] < -0.5 else sphere(x)

        res = gwo_optimize(f, box(1, -1, 1), pack_size=8, T=5, seed=2)
        assert math.isfinite(res.best_fitness)

    def test_deterministic(self):
        a = gwo_optimize(sphere, box(2, -3, 3), pack_size=6, T=15, seed=4)
        b = gwo_optimize(sphere, box(2, -3, 3), pack_size=6, T=15, seed=4)
        assert a.history == b.history

    def test_convergence_factor_schedule(self):
        res = gwo_optimize(sphere, box(1, -1, 1), pack_size=3, T=4, seed=0)
        assert [h["a"] for h in res.history] == [2.0, 1.5, 1.0, 0.5]


class TestSearchSpace:
    def test_decode_rounds_integers(self):
        space = SearchSpace([Dim("lr", -3, 0), Dim("hidden", 8, 64, integer=True)])
        assert space.decode([-2.0, 31.6]) == {"lr": -2.0, "hidden": 32}

    def test_round_trip_dict(self):
        space = SearchSpace([Dim("lr", -3, 0), Dim("hidden", 8, 64, integer=True)])
        assert SearchSpace.from_dict(space.to_dict()) == space


def _series_windows(n=300, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    x = np.sin(2 * np.pi * t / 24) + 0.1 * rng.standard_normal(n)
    cut = int(0.8 * n)
    train = make_windows(x[:cut])
    val = make_windows(x, scaler=train.scaler, targets_from=cut)
    return train, val


class TestTuneLstm:
    def test_collapsed_space(self):
        train, val = _series_windows(120)
        space = SearchSpace([Dim("log10_lr", -1.0, -1.0), Dim("hidden_dim", 4, 4, integer=True)])
        res = tune_lstm(train, val, space, budget=2, pack_size=3, warm_epochs=2, base=TrainConfig(epochs=3))
        config, model = res
        assert config.learning_rate == pytest.approx(0.1)
        assert model.hidden_dim == 4

    def test_first_wolf_is_anchored(self):
        seen = []

        def spy(position):
            seen.append(position)
            return 0.0

        space = default_lstm_space()
        gwo_optimize(spy, space, pack_size=3, T=1, initial=space.encode(FIRST_WOLF))
        assert space.decode(seen[0]) == {"log10_lr": -2.0, "hidden_dim": 32, "log2_batch": 10}
        assert _decode_lstm(space, seen[0], TrainConfig())[1:] == (0.01, 32, 1024)

    def test_beats_fixed_large_learning_rate(self):
        train, val = _series_windows(300, seed=1)
        base = TrainConfig(batch_size=32, epochs=30)
        res = tune_lstm(train, val, budget=3, pack_size=4, warm_epochs=10, seed=0, base=base)
        fixed, _ = lstm_train(LstmModel.init(1, 32, seed=0), train, TrainConfig(0.5, 32, 30, 0))
        assert res.val_mse <= mse(fixed, val)

    def test_all_divergent(self):
        train, val = _series_windows(80)
        bad = np.full((train.inputs.shape[0], 3, 1), np.nan)
        train.inputs = bad
        with pytest.raises(TuningFailedError) as info:
            tune_lstm(train, val, budget=2, pack_size=3, warm_epochs=1, base=TrainConfig(epochs=1))
        assert len(info.value.history) == 2
