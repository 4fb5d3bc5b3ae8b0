"""Small feedforward ReLU regressor trained with Adam on squared error.

Stands in for an attentive tabular network as the second ensemble member.
Inputs are z-scored with a supplied (mean, std) pair, optionally after a
log1p on flagged columns, and targets are scaled to unit variance
internally; all scalings are stored on the model so prediction only needs
raw features.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

MODEL_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple[int, ...] = (128, 64)
    activation: str = "relu"
    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden sizes must be positive")
        if self.activation != "relu":
            raise ValueError("only the rectifier activation is supported")


@dataclass(eq=False)
class MlpModel:
    weights: list[np.ndarray]  # (fan_in, fan_out) per layer
    biases: list[np.ndarray]
    input_mean: np.ndarray
    input_std: np.ndarray
    target_mean: float = 0.0
    target_std: float = 1.0
    config: MlpConfig = field(default_factory=MlpConfig)
    history: list[float] = field(default_factory=list)
    input_log: np.ndarray | None = None  # bool per column: log1p before z-scoring

    def __post_init__(self):
        if self.input_log is None:
            self.input_log = np.zeros(self.input_mean.shape[0], dtype=bool)
        self.input_log = np.asarray(self.input_log, dtype=bool)
        if self.input_log.shape != self.input_mean.shape:
            raise ValueError("input_log must flag every input column")
        prev = self.input_mean.shape[0]
        for W, b in zip(self.weights, self.biases):
            if W.shape[0] != prev or b.shape != (W.shape[1],):
                raise ValueError("layer shapes do not chain")
            prev = W.shape[1]
        if prev != 1:
            raise ValueError("last layer must have one output")

    @property
    def n_features(self) -> int:
        return int(self.input_mean.shape[0])

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "MlpModel":
        return MlpModel([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                        self.input_mean.copy(), self.input_std.copy(), self.target_mean,
                        self.target_std, self.config, list(self.history), self.input_log.copy())

    def to_json(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "kind": "mlp",
            "config": asdict(self.config),
            "shapes": [list(W.shape) for W in self.weights],
            "weights": [W.ravel().tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "input_mean": self.input_mean.tolist(),
            "input_std": self.input_std.tolist(),
            "input_log": self.input_log.tolist(),
            "target_mean": self.target_mean,
            "target_std": self.target_std,
            "history": self.history,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj) -> "MlpModel":
        if obj.get("kind") != "mlp" or obj.get("version") != MODEL_VERSION:
            raise ValueError("not a version-1 mlp model")
        cfg = dict(obj["config"])
        cfg["hidden"] = tuple(cfg["hidden"])
        return cls(
            [np.asarray(w, dtype=np.float64).reshape(s) for w, s in zip(obj["weights"], obj["shapes"])],
            [np.asarray(b, dtype=np.float64) for b in obj["biases"]],
            np.asarray(obj["input_mean"], dtype=np.float64),
            np.asarray(obj["input_std"], dtype=np.float64),
            float(obj["target_mean"]),
            float(obj["target_std"]),
            MlpConfig(**cfg),
            list(obj.get("history", [])),
            np.asarray(obj["input_log"], dtype=bool),
        )


def init_mlp(n_features: int, cfg: MlpConfig, rng: np.random.Generator,
             input_mean=None, input_std=None, input_log=None) -> MlpModel:
    sizes = [n_features, *cfg.hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / fan_in) if fan_in > 0 else 0.0
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    mean = np.zeros(n_features) if input_mean is None else np.asarray(input_mean, dtype=np.float64)
    std = np.ones(n_features) if input_std is None else np.asarray(input_std, dtype=np.float64)
    log = np.zeros(n_features, dtype=bool) if input_log is None else np.array(input_log, dtype=bool)
    return MlpModel(weights, biases, mean.copy(), std.copy(), config=cfg, input_log=log)


def _forward(weights, biases, Z):
    acts = [Z]
    a = Z
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        a = a @ W + b
        if i < last:
            a = np.maximum(a, 0.0)
        acts.append(a)
    return acts


def _loss_grads(weights, biases, Z, t, scale: float = 1.0):
    """Mean of ``(scale * net(Z) - t)**2`` and its gradients (weights, biases)."""
    acts = _forward(weights, biases, Z)
    out = acts[-1][:, 0]
    resid = scale * out - t
    n = Z.shape[0]
    loss = float(np.mean(resid ** 2))
    delta = (2.0 * scale / n) * resid[:, None]
    gW = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gW[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * (acts[i] > 0.0)
    return loss, gW, gb


def _standardize_inputs(model: MlpModel, X: np.ndarray) -> np.ndarray:
    if model.input_log.any():
        X = X.copy()
        cols = model.input_log
        X[:, cols] = np.log1p(np.maximum(X[:, cols], 0.0))
    return (X - model.input_mean) / model.input_std


def fit_mlp(X, y, cfg: MlpConfig | None = None, input_mean=None, input_std=None,
            init: MlpModel | None = None, record_history: bool = False,
            input_log=None) -> MlpModel:
    """Train with mini-batch Adam; batch order is shuffled from ``cfg.seed``.

    ``init`` overrides the random initialization (its scalings are kept).
    With ``record_history`` the full-data training MSE after every epoch is
    appended to ``model.history``.
    """
    cfg = cfg or MlpConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty training data")
    if y.shape != (X.shape[0],):
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite training data")

    rng = np.random.default_rng(cfg.seed)
    if init is not None:
        if init.n_features != X.shape[1]:
            raise ValueError("init model has the wrong input width")
        model = init.copy()
        model.config = cfg
        model.history = []
    else:
        model = init_mlp(X.shape[1], cfg, rng, input_mean, input_std, input_log)
        model.target_mean = float(y.mean())
        sd = float(y.std())
        model.target_std = sd if sd > 1e-12 else 1.0

    Z = _standardize_inputs(model, X)
    t = (y - model.target_mean) / model.target_std
    params = model.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, gW, gb = _loss_grads(model.weights, model.biases, Z[idx], t[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            step += 1
            grads = [g for pair in zip(gW, gb) for g in pair]
            c1 = 1.0 - cfg.beta1 ** step
            c2 = 1.0 - cfg.beta2 ** step
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= cfg.beta1
                mi += (1.0 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1.0 - cfg.beta2) * g * g
                p -= cfg.learning_rate * (mi / c1) / (np.sqrt(vi / c2) + cfg.eps)
        if record_history:
            full = _forward(model.weights, model.biases, Z)[-1][:, 0]
            model.history.append(float(np.mean((model.target_mean + model.target_std * full - y) ** 2)))
    return model


def predict_mlp(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} columns, got shape {X.shape}")
    out = _forward(model.weights, model.biases, _standardize_inputs(model, X))[-1][:, 0]
    return model.target_mean + model.target_std * out


def mlp_loss_and_grads(model: MlpModel, X, y):
    """Mean squared error of ``predict_mlp`` on (X, y) with analytic gradients.

    Gradients come back in ``model.params()`` order (W0, b0, W1, b1, ...).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    Z = _standardize_inputs(model, X)
    t = y - model.target_mean
    loss, gW, gb = _loss_grads(model.weights, model.biases, Z, t, model.target_std)
    return loss, [g for pair in zip(gW, gb) for g in pair]


def _mse(model: MlpModel, X, y) -> float:
    return float(np.mean((predict_mlp(model, X) - y) ** 2))


def grad_check(model: MlpModel, X, y, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] > 10:
        raise ValueError("grad_check takes at most 10 rows")
    probe = model.copy()
    _, analytic = mlp_loss_and_grads(probe, X, y)
    worst = 0.0
    for p, g in zip(probe.params(), analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = _mse(probe, X, y)
            flat[i] = orig - h
            down = _mse(probe, X, y)
            flat[i] = orig
            fd = (up - down) / (2.0 * h)
            err = abs(gflat[i] - fd) / max(1e-8, abs(gflat[i]) + abs(fd))
            worst = max(worst, err)
    return worst
