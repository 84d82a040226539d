"""Classifiers behind policies and inverse dynamics models.

Both learners are scikit-learn estimators over a fixed action set
``0..n_actions-1`` so they clone, grid-search and pipeline like any other
classifier.  ``MLPClassifier`` is a small numpy ReLU network trained with
Adam that keeps the parameters of the epoch with the lowest validation loss.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import train_test_split
from sklearn.utils.validation import check_array, check_X_y

CHECKPOINT_FORMAT = "bcostar-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class FeedforwardSpec:
    input_dim: int
    n_actions: int
    hidden_dims: tuple[int, ...] = (300, 200)

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if not self.hidden_dims or min(self.hidden_dims) < 1:
            raise ValueError("need at least one hidden layer of positive width")
        if self.input_dim < 1 or self.n_actions < 1:
            raise ValueError("input_dim and n_actions must be positive")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim, *self.hidden_dims, self.n_actions]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 1e-3
    validation_fraction: float = 0.3
    seed: int = 0
    patience: int | None = None

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    def estimator_params(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "validation_fraction": self.validation_fraction,
            "random_state": self.seed,
            "patience": self.patience,
        }


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_error: list[float] = field(default_factory=list)
    best_epoch: int = 0
    n_train: int = 0
    n_val: int = 0

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1] if self.val_loss else float("nan")


# --- network primitives ------------------------------------------------------


def init_params(sizes, rng, dtype=np.float64) -> list[np.ndarray]:
    """He-uniform weights (bound ``sqrt(6 / fan_in)``), zero biases."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
        params.append(np.zeros(fan_out, dtype=dtype))
    return params


def forward(params, X):
    """Logits and the per-layer activations needed for backprop."""
    acts = [X]
    h = X
    n_layers = len(params) // 2
    for i in range(n_layers):
        z = h @ params[2 * i] + params[2 * i + 1]
        h = np.maximum(z, 0.0) if i < n_layers - 1 else z
        acts.append(h)
    return h, acts


def log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(params, X, y) -> float:
    logits, _ = forward(params, X)
    return float(-log_softmax(logits)[np.arange(len(y)), y].mean())


def loss_and_grads(params, X, y):
    """Mean cross-entropy and its gradient with respect to every parameter."""
    logits, acts = forward(params, X)
    logp = log_softmax(logits)
    n = len(y)
    loss = -logp[np.arange(n), y].mean()
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(params)
    for i in reversed(range(len(params) // 2)):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params[2 * i].T) * (acts[i] > 0)
    return float(loss), grads


GRAD_CHECK_FLOOR = 1e-6


def _loss_and_pattern(params, X, y):
    logits, acts = forward(params, X)
    pattern = np.concatenate([(a > 0).ravel() for a in acts[1:-1]]) if len(acts) > 2 else np.zeros(0, bool)
    return float(-log_softmax(logits)[np.arange(len(y)), y].mean()), pattern


def gradient_check(spec: FeedforwardSpec, X, y, seed: int = 0, params=None, step: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    The denominator is floored at ``GRAD_CHECK_FLOOR``: central differences
    at step 1e-5 carry roughly 1e-11 of rounding noise, which would swamp a
    purely relative comparison of near-zero entries.  Entries whose probe
    flips a ReLU on or off are skipped, since the loss has a kink between
    the two probe points.  Without ``params`` the check runs at a random
    point with nonzero biases: with zero biases a dead layer puts the next
    layer exactly on the kink.
    """
    X = np.asarray(X, dtype=np.float64).reshape(-1, spec.input_dim)
    y = np.asarray(y, dtype=int).reshape(-1)
    if params is None:
        rng = np.random.default_rng(seed)
        params = init_params(spec.layer_sizes, rng)
        for b in params[1::2]:
            b[:] = rng.uniform(-0.5, 0.5, size=b.shape)
    params = [p.astype(np.float64).copy() for p in params]
    _, grads = loss_and_grads(params, X, y)
    _, base = _loss_and_pattern(params, X, y)
    worst = 0.0
    for p, g in zip(params, grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up, pat_up = _loss_and_pattern(params, X, y)
            flat[j] = orig - step
            down, pat_down = _loss_and_pattern(params, X, y)
            flat[j] = orig
            if not (np.array_equal(pat_up, base) and np.array_equal(pat_down, base)):
                continue
            numeric = (up - down) / (2 * step)
            scale = max(abs(numeric), abs(gflat[j]), GRAD_CHECK_FLOOR)
            worst = max(worst, abs(numeric - gflat[j]) / scale)
    return worst


# --- estimators --------------------------------------------------------------


def _split(n, y, fraction, seed):
    n_val = min(max(1, int(round(fraction * n))), n - 1)
    idx = np.arange(n)
    counts = np.bincount(y)
    counts = counts[counts > 0]
    stratify = y if counts.min() >= 2 and n_val >= len(counts) and n - n_val >= len(counts) else None
    return train_test_split(idx, test_size=n_val, random_state=seed, stratify=stratify)


def _check_actions(y, n_actions):
    y = np.asarray(y, dtype=int)
    if y.size and (y.min() < 0 or y.max() >= n_actions):
        raise ValueError(f"action labels must lie in 0..{n_actions - 1}")
    return y


class MLPClassifier(ClassifierMixin, BaseEstimator):
    """ReLU network with a softmax head over ``n_actions`` actions.

    Parameters
    ----------
    n_actions : int
        Size of the action set; ``classes_`` is always ``arange(n_actions)``.
    hidden_dims : tuple of int
        Widths of the hidden layers.
    epochs, batch_size, learning_rate : training schedule for Adam.
    validation_fraction : float
        Share of samples held out (stratified by action when possible) for
        checkpoint selection.
    patience : int or None
        Stop once validation loss has not improved for this many epochs.
    one_hot_sizes : tuple of int or None
        Treat every input column as a category id with that many values and
        one-hot encode it (integer gridworld states).
    standardize : bool
        Scale inputs to zero mean / unit variance using training statistics.
    warm_start : bool
        Continue from the current weights on repeated ``fit`` calls.
    """

    def __init__(
        self,
        n_actions=2,
        hidden_dims=(300, 200),
        epochs=50,
        batch_size=128,
        learning_rate=1e-3,
        validation_fraction=0.3,
        random_state=0,
        patience=None,
        one_hot_sizes=None,
        standardize=True,
        warm_start=False,
        dtype="float32",
    ):
        self.n_actions = n_actions
        self.hidden_dims = hidden_dims
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.patience = patience
        self.one_hot_sizes = one_hot_sizes
        self.standardize = standardize
        self.warm_start = warm_start
        self.dtype = dtype

    def _encode(self, X):
        X = np.asarray(X, dtype=float)
        if self.one_hot_sizes is not None:
            sizes = list(self.one_hot_sizes)
            if X.shape[1] != len(sizes):
                raise ValueError(f"expected {len(sizes)} categorical columns, got {X.shape[1]}")
            blocks = []
            for j, k in enumerate(sizes):
                col = X[:, j].astype(int)
                block = np.zeros((len(X), k))
                ok = (col >= 0) & (col < k)
                block[np.flatnonzero(ok), col[ok]] = 1.0
                blocks.append(block)
            X = np.hstack(blocks)
        return X

    def _transform(self, X):
        Z = self._encode(X)
        if self.standardize:
            Z = (Z - self.mean_) / self.scale_
        return Z.astype(self.dtype)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=None)
        y = _check_actions(y, self.n_actions)
        if len(y) < 2:
            raise ValueError("need at least two samples to split off validation data")
        self.classes_ = np.arange(self.n_actions)
        self.n_features_in_ = X.shape[1]
        rng = np.random.default_rng(self.random_state)
        tr, va = _split(len(y), y, self.validation_fraction, self.random_state)
        Z = self._encode(X)
        if not (self.warm_start and hasattr(self, "params_")):
            if self.standardize:
                self.mean_ = Z[tr].mean(axis=0)
                scale = Z[tr].std(axis=0)
                self.scale_ = np.where(scale > 1e-12, scale, 1.0)
            sizes = [Z.shape[1], *self.hidden_dims, self.n_actions]
            self.params_ = init_params(sizes, rng, np.dtype(self.dtype))
        Zs = self._transform(X)
        Xtr, ytr, Xva, yva = Zs[tr], y[tr], Zs[va], y[va]

        params = self.params_
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        b1, b2, eps = 0.9, 0.999, 1e-8
        step = 0
        report = TrainReport(n_train=len(tr), n_val=len(va))
        best = (np.inf, None)
        since_best = 0
        for epoch in range(1, self.epochs + 1):
            order = rng.permutation(len(ytr))
            total, count = 0.0, 0
            for start in range(0, len(order), self.batch_size):
                batch = order[start : start + self.batch_size]
                loss, grads = loss_and_grads(params, Xtr[batch], ytr[batch])
                step += 1
                lr_t = self.learning_rate * np.sqrt(1 - b2**step) / (1 - b1**step)
                for p, g, mi, vi in zip(params, grads, m, v):
                    mi *= b1
                    mi += (1 - b1) * g
                    vi *= b2
                    vi += (1 - b2) * g * g
                    p -= (lr_t * mi / (np.sqrt(vi) + eps)).astype(p.dtype)
                total += loss * len(batch)
                count += len(batch)
            logits, _ = forward(params, Xva)
            val_loss = float(-log_softmax(logits)[np.arange(len(yva)), yva].mean())
            report.train_loss.append(total / count)
            report.val_loss.append(val_loss)
            report.val_error.append(float(np.mean(logits.argmax(axis=1) != yva)))
            if val_loss < best[0]:
                best = (val_loss, [p.copy() for p in params])
                report.best_epoch = epoch
                since_best = 0
            else:
                since_best += 1
                if self.patience is not None and since_best >= self.patience:
                    break
        self.params_ = best[1]
        self.report_ = report
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("MLPClassifier is not fitted yet")

    def predict_proba(self, X):
        self._check_fitted()
        X = check_array(X, dtype=None)
        logits, _ = forward(self.params_, self._transform(X))
        return np.exp(log_softmax(logits.astype(np.float64)))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def _state(self):
        state = {"params": [p.tolist() for p in self.params_], "classes": self.classes_.tolist()}
        if self.standardize:
            state["mean"] = self.mean_.tolist()
            state["scale"] = self.scale_.tolist()
        state["n_features_in"] = int(self.n_features_in_)
        return state

    def _load_state(self, state):
        self.params_ = [np.asarray(p, dtype=self.dtype) for p in state["params"]]
        self.classes_ = np.asarray(state["classes"], dtype=int)
        if self.standardize:
            self.mean_ = np.asarray(state["mean"])
            self.scale_ = np.asarray(state["scale"])
        self.n_features_in_ = state["n_features_in"]


class TabularClassifier(ClassifierMixin, BaseEstimator):
    """Count table keyed on the exact input row, with Laplace smoothing.

    ``predict_proba`` returns ``(counts + smoothing) / (total + smoothing *
    n_actions)``; keys never seen (or seen with zero smoothing and no counts)
    map to the uniform distribution.  The table is built from every sample.
    When ``validation_fraction`` is set, the report also carries the held-out
    log-loss of a table built from the training portion only.
    """

    def __init__(self, n_actions=2, smoothing=1.0, validation_fraction=None, random_state=0):
        self.n_actions = n_actions
        self.smoothing = smoothing
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    @staticmethod
    def _keys(X):
        return [tuple(row) for row in np.asarray(X).tolist()]

    def _count(self, keys, y):
        table = {}
        for k, a in zip(keys, y):
            row = table.get(k)
            if row is None:
                row = table[k] = np.zeros(self.n_actions)
            row[a] += 1
        return table

    def _proba(self, table, keys):
        out = np.empty((len(keys), self.n_actions))
        uniform = np.full(self.n_actions, 1.0 / self.n_actions)
        for i, k in enumerate(keys):
            row = table.get(k)
            if row is None:
                out[i] = uniform
                continue
            total = row.sum() + self.smoothing * self.n_actions
            out[i] = (row + self.smoothing) / total if total > 0 else uniform
        return out

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=None)
        y = _check_actions(y, self.n_actions)
        if len(y) == 0:
            raise ValueError("cannot fit on an empty dataset")
        self.classes_ = np.arange(self.n_actions)
        self.n_features_in_ = X.shape[1]
        keys = self._keys(X)
        report = TrainReport(n_train=len(y), n_val=0, best_epoch=1)
        if self.validation_fraction is not None and len(y) >= 2:
            tr, va = _split(len(y), y, self.validation_fraction, self.random_state)
            sub = self._count([keys[i] for i in tr], y[tr])
            p = self._proba(sub, [keys[i] for i in va])
            p_true = np.clip(p[np.arange(len(va)), y[va]], 1e-12, None)
            report.val_loss = [float(-np.log(p_true).mean())]
            report.val_error = [float(np.mean(p.argmax(axis=1) != y[va]))]
            report.n_train, report.n_val = len(tr), len(va)
        self.table_ = self._count(keys, y)
        p = self._proba(self.table_, keys)
        report.train_loss = [float(-np.log(np.clip(p[np.arange(len(y)), y], 1e-12, None)).mean())]
        self.report_ = report
        return self

    def predict_proba(self, X):
        if not hasattr(self, "table_"):
            raise NotFittedError("TabularClassifier is not fitted yet")
        X = check_array(X, dtype=None)
        return self._proba(self.table_, self._keys(X))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def _state(self):
        return {
            "classes": self.classes_.tolist(),
            "n_features_in": int(self.n_features_in_),
            "table": [[list(k), row.tolist()] for k, row in self.table_.items()],
        }

    def _load_state(self, state):
        self.classes_ = np.asarray(state["classes"], dtype=int)
        self.n_features_in_ = state["n_features_in"]
        self.table_ = {tuple(k): np.asarray(row) for k, row in state["table"]}


LEARNERS = {"MLPClassifier": MLPClassifier, "TabularClassifier": TabularClassifier}


def make_learner(kind: str, n_actions: int, **params):
    try:
        cls = LEARNERS[{"mlp": "MLPClassifier", "tabular": "TabularClassifier"}.get(kind, kind)]
    except KeyError:
        raise ValueError(f"unknown learner {kind!r}") from None
    return cls(n_actions=n_actions, **params)


def _jsonable(v):
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def checkpoint_dict(estimator) -> dict:
    """Versioned JSON-ready snapshot of a fitted learner (hyperparameters + state)."""
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "class": type(estimator).__name__,
        "params": {k: _jsonable(v) for k, v in estimator.get_params().items()},
        "state": estimator._state(),
        "report": asdict(estimator.report_) if hasattr(estimator, "report_") else None,
    }


def estimator_from_checkpoint(data: dict):
    if data.get("format") != CHECKPOINT_FORMAT or data.get("version") != CHECKPOINT_VERSION:
        raise ValueError("not a supported checkpoint")
    params = dict(data["params"])
    for key in ("hidden_dims", "one_hot_sizes"):
        if params.get(key) is not None:
            params[key] = tuple(params[key])
    est = LEARNERS[data["class"]](**params)
    est._load_state(data["state"])
    if data.get("report") is not None:
        est.report_ = TrainReport(**data["report"])
    return est


def save_checkpoint(estimator, path) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(estimator)))


def load_checkpoint(path):
    return estimator_from_checkpoint(json.loads(Path(path).read_text()))


def fit(classifier, inputs, labels, config: TrainConfig | None = None):
    """Fit a copy of ``classifier`` under ``config``; returns ``(fitted, report)``."""
    est = copy.deepcopy(classifier)
    if config is not None:
        valid = est.get_params()
        est.set_params(**{k: v for k, v in config.estimator_params().items() if k in valid})
    X = np.asarray(inputs)
    if len(X) == 0:
        raise ValueError("cannot fit on an empty dataset")
    est.fit(X, labels)
    return est, est.report_
