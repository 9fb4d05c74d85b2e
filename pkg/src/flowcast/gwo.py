"""Grey wolf optimizer and its use as an LSTM hyperparameter tuner.

The three fittest wolves (alpha, beta, delta) each propose a move for every
wolf; the new position is the mean of the three proposals. The convergence
factor ``a`` falls linearly from 2 to 0 over the run, shrinking the random
coefficient ``A = 2 a r1 - a`` from exploration (|A| > 1) to exploitation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InvalidInputError, InvalidPackError, TuningFailedError
from .neuralnet import LstmModel, TrainConfig, lstm_train, mse

logger = logging.getLogger(__name__)

WORST = math.inf


@dataclass(frozen=True)
class Dim:
    name: str
    low: float
    high: float
    integer: bool = False


@dataclass
class SearchSpace:
    """Named box constraints; integer dims are rounded only when decoded."""

    dims: list

    def __post_init__(self):
        if not self.dims:
            raise InvalidInputError("search space needs at least one dimension")
        for d in self.dims:
            if d.low > d.high:
                raise InvalidInputError(f"dimension {d.name}: low > high")

    @property
    def low(self):
        return np.array([d.low for d in self.dims], dtype=float)

    @property
    def high(self):
        return np.array([d.high for d in self.dims], dtype=float)

    def __len__(self):
        return len(self.dims)

    def clip(self, position):
        return np.clip(position, self.low, self.high)

    def decode(self, position):
        out = {}
        for d, v in zip(self.dims, position):
            out[d.name] = int(round(v)) if d.integer else float(v)
        return out

    def encode(self, values):
        """Position vector from a name->value mapping; missing dims take the box centre."""
        pos = [float(values.get(d.name, 0.5 * (d.low + d.high))) for d in self.dims]
        return self.clip(np.array(pos))

    def to_dict(self):
        return {"dims": [vars(d) for d in self.dims]}

    @classmethod
    def from_dict(cls, d):
        return cls([Dim(x["name"], float(x["low"]), float(x["high"]), bool(x.get("integer", False)))
                    for x in d["dims"]])


def default_lstm_space():
    return SearchSpace([
        Dim("log10_lr", -3.0, 0.0),
        Dim("hidden_dim", 8, 64, integer=True),
        Dim("log2_batch", 4, 10, integer=True),
    ])


@dataclass
class WolfPack:
    positions: np.ndarray
    fitness: np.ndarray
    low: np.ndarray
    high: np.ndarray
    t: int = 0
    T: int = 1
    seed: int = 0

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.fitness = np.asarray(self.fitness, dtype=float)
        self.low = np.broadcast_to(np.asarray(self.low, dtype=float), self.positions.shape[1:]).copy()
        self.high = np.broadcast_to(np.asarray(self.high, dtype=float), self.positions.shape[1:]).copy()
        if self.positions.shape[0] < 3:
            raise InvalidPackError("a pack needs at least 3 wolves")
        if self.fitness.shape != (self.positions.shape[0],):
            raise InvalidPackError("one fitness value per wolf is required")
        if self.T < 1:
            raise InvalidPackError("T must be >= 1")

    @property
    def convergence_factor(self):
        return 2.0 * (1.0 - min(self.t, self.T) / self.T)

    def leaders(self):
        """Indices of alpha, beta and delta; unevaluated wolves rank last."""
        fit = np.where(np.isfinite(self.fitness), self.fitness, WORST)
        return np.argsort(fit, kind="stable")[:3]


def gwo_step(pack, r1=None, r2=None):
    """Move every wolf towards the three leaders.

    ``r1`` and ``r2`` default to uniform draws keyed on ``(seed, t)``,
    independent per leader, wolf and dimension; pass scalars or arrays
    broadcastable to ``(3, wolves, dims)`` to pin them.
    """
    n, dims = pack.positions.shape
    if n < 3:
        raise InvalidPackError("a pack needs at least 3 wolves")
    shape = (3, n, dims)
    if r1 is None or r2 is None:
        rng = np.random.default_rng([int(pack.seed), 1, int(pack.t)])
        draw1, draw2 = rng.random(shape), rng.random(shape)
        r1 = draw1 if r1 is None else r1
        r2 = draw2 if r2 is None else r2
    r1 = np.broadcast_to(np.asarray(r1, dtype=float), shape)
    r2 = np.broadcast_to(np.asarray(r2, dtype=float), shape)
    a = pack.convergence_factor
    x = pack.positions
    lead = pack.positions[pack.leaders()]
    moves = []
    for j in range(3):
        A = 2.0 * a * r1[j] - a
        C = 2.0 * r2[j]
        D = np.abs(C * lead[j] - x)
        moves.append(lead[j] - A * D)
    # mean of the three proposals, written so identical proposals give back exactly the same position
    new = moves[0] + ((moves[1] - moves[0]) + (moves[2] - moves[0])) / 3.0
    new = np.clip(new, pack.low, pack.high)
    return WolfPack(new, np.full(n, np.nan), pack.low, pack.high, pack.t + 1, pack.T, pack.seed)


@dataclass
class GwoResult:
    best_position: np.ndarray
    best_fitness: float
    history: list = field(default_factory=list)


def _safe(value):
    try:
        value = float(value)
    except (TypeError, ValueError):
        return WORST
    return value if math.isfinite(value) else WORST


def gwo_optimize(fitness, space, pack_size=30, T=100, seed=0, initial=None, keyed=False):
    """Minimise ``fitness`` over ``space`` with an elitist grey wolf search.

    Runs ``T`` rounds of evaluate, rank, step. Non-finite or failing
    evaluations rank as worst. ``initial`` optionally fixes the first rows of
    the starting pack. With ``keyed=True`` the fitness is called as
    ``fitness(x, (t, i))`` so callers can derive per-wolf seeds.
    """
    if T < 1:
        raise InvalidInputError("T must be >= 1")
    if pack_size < 3:
        raise InvalidPackError("pack_size must be >= 3")
    low, high = space.low, space.high
    rng = np.random.default_rng([int(seed), 0])
    positions = low + (high - low) * rng.random((pack_size, len(space)))
    if initial is not None:
        initial = np.atleast_2d(np.asarray(initial, dtype=float))[:pack_size]
        positions[: initial.shape[0]] = np.clip(initial, low, high)
    pack = WolfPack(positions, np.full(pack_size, np.nan), low, high, 0, T, seed)
    best_x, best_f = positions[0].copy(), WORST
    history = []
    for t in range(T):
        values = []
        for i, x in enumerate(pack.positions):
            try:
                v = fitness(x, (t, i)) if keyed else fitness(x)
            except (ArithmeticError, FloatingPointError, DivergenceError):
                v = WORST
            values.append(_safe(v))
        pack.fitness = np.array(values)
        lead = pack.leaders()
        if pack.fitness[lead[0]] < best_f:
            best_f = float(pack.fitness[lead[0]])
            best_x = pack.positions[lead[0]].copy()
        history.append({
            "iteration": t,
            "best_fitness": best_f,
            "round_best": float(pack.fitness[lead[0]]),
            "leaders": pack.positions[lead].tolist(),
            "a": pack.convergence_factor,
        })
        logger.debug("gwo round %d best %.6g", t, best_f)
        pack = gwo_step(pack)
    return GwoResult(best_x, best_f, history)


@dataclass
class TuningResult:
    config: TrainConfig
    model: LstmModel
    hyperparameters: dict
    val_mse: float
    history: list

    def __iter__(self):
        return iter((self.config, self.model))


def _decode_lstm(space, position, base):
    hp = space.decode(position)
    lr = 10.0 ** hp["log10_lr"] if "log10_lr" in hp else hp.get("learning_rate", base.learning_rate)
    hidden = int(hp.get("hidden_dim", 32))
    if "log2_batch" in hp:
        batch = 2 ** int(hp["log2_batch"])
    else:
        batch = int(hp.get("batch_size", base.batch_size))
    return hp, lr, max(1, hidden), max(1, batch)


# learning rate 0.01, 32 hidden units, batch 1024
FIRST_WOLF = {"log10_lr": -2.0, "hidden_dim": 32, "log2_batch": 10}


def tune_lstm(train, val, space=None, budget=5, seed=0, pack_size=6, warm_epochs=40,
              base=None, anchor_first=True):
    """Pick LSTM hyperparameters by GWO on validation MSE.

    Each wolf trains a freshly initialised LSTM for ``warm_epochs`` with a
    seed keyed on ``(seed, iteration, wolf)``; its fitness is the validation
    MSE. The first wolf starts at learning rate 0.01, 32 hidden units and
    batch 1024 when ``anchor_first`` is set. The winner is retrained for ``base.epochs``.
    """
    space = space or default_lstm_space()
    base = base or TrainConfig()
    input_dim = train.inputs.shape[2]

    def fitness(position, key):
        t, i = key
        _, lr, hidden, batch = _decode_lstm(space, position, base)
        wolf_seed = int(np.random.default_rng([int(seed), 2, t, i]).integers(2**31))
        model = LstmModel.init(input_dim, hidden, seed=wolf_seed)
        cfg = TrainConfig(lr, batch, warm_epochs, wolf_seed, base.clip_norm)
        model, _ = lstm_train(model, train, cfg)
        return mse(model, val)

    initial = space.encode(FIRST_WOLF) if anchor_first else None
    result = gwo_optimize(fitness, space, pack_size, budget, seed, initial=initial, keyed=True)
    if not math.isfinite(result.best_fitness):
        raise TuningFailedError("every candidate diverged", result.history)
    hp, lr, hidden, batch = _decode_lstm(space, result.best_position, base)
    config = TrainConfig(lr, batch, base.epochs, int(seed), base.clip_norm)
    model = LstmModel.init(input_dim, hidden, seed=int(seed))
    try:
        model, _ = lstm_train(model, train, config)
    except DivergenceError as exc:
        raise TuningFailedError(f"final training diverged: {exc}", result.history) from exc
    model.meta.update({"learning_rate": lr, "hidden_dim": hidden, "batch_size": batch})
    return TuningResult(config, model, hp, mse(model, val), result.history)
