"""Behavioral cloning, BCO with a random pre-training phase, and BCO*.

Learners are passed as unfitted scikit-learn classifiers; every fit works on
a clone so templates can be shared.  Policies returned here are fitted
classifiers over state features; inverse models wrap a classifier over the
concatenated ``(s, s')`` row.
"""

from __future__ import annotations

import copy
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import clone

from .experts import UniformRandomPolicy
from .learners import TrainConfig
from .mdp import ConfigurationError, Dataset, Trajectory, as_features, exact_policy_cost
from .rollout import as_seed_sequence, collect_episodes, collect_transitions

log = logging.getLogger(__name__)


class UsageError(ValueError):
    pass


class RolloutFailure(RuntimeError):
    """Environment error during BCO* rollouts; ``records`` holds the iterations so far."""

    def __init__(self, message, records):
        super().__init__(message)
        self.records = records


def _fit(template, X, y, config: TrainConfig | None, warm_from=None):
    if warm_from is not None:
        est = copy.deepcopy(warm_from)
        est.set_params(warm_start=True)
    else:
        est = clone(template)
    if config is not None:
        valid = est.get_params()
        est.set_params(**{k: v for k, v in config.estimator_params().items() if k in valid})
    return est.fit(X, y)


def _val_loss(est) -> float:
    report = getattr(est, "report_", None)
    return report.best_val_loss if report is not None and report.val_loss else float("nan")


class InverseModel:
    """``P(a | s, s')`` backed by a classifier on the row ``[s, s']``."""

    def __init__(self, classifier):
        self.classifier = classifier

    @staticmethod
    def encode(states, next_states) -> np.ndarray:
        return np.hstack([as_features(states), as_features(next_states)])

    def predict_proba(self, states, next_states):
        return self.classifier.predict_proba(self.encode(states, next_states))

    def predict(self, states, next_states):
        return np.argmax(self.predict_proba(states, next_states), axis=1)

    @property
    def report_(self):
        return self.classifier.report_


def behavioral_cloning(demos: Dataset, learner, train_config: TrainConfig | None = None):
    """Fit ``learner`` on the (state, action) pairs of every labeled trajectory."""
    if not demos.labeled:
        raise UsageError("behavioral cloning needs a labeled dataset")
    X, y = demos.state_action_arrays()
    if len(y) == 0:
        raise UsageError("no (state, action) pairs to clone")
    return _fit(learner, X, y, train_config)


def train_inverse_model(transitions: Dataset, learner, train_config: TrainConfig | None = None) -> InverseModel:
    if not transitions.labeled:
        raise UsageError("inverse model training needs labeled transitions")
    S, S2, y = transitions.transition_arrays()
    if len(y) == 0:
        raise UsageError("no transitions to learn from")
    return InverseModel(_fit(learner, InverseModel.encode(S, S2), y, train_config))


def _fit_inverse_arrays(learner, S, S2, y, config, warm_from=None) -> InverseModel:
    warm = None if warm_from is None else warm_from.classifier
    return InverseModel(_fit(learner, InverseModel.encode(S, S2), y, config, warm))


@dataclass
class LabelingResult:
    dataset: Dataset
    accuracy: float | None
    skipped: int


def label_demonstrations(model: InverseModel, demos: Dataset, ground_truth: Dataset | None = None) -> LabelingResult:
    """Assign the inverse model's argmax action to every adjacent state pair.

    ``ground_truth`` is the same demonstrations with their true actions; when
    given, the fraction of matching pseudo-labels is reported.
    """
    kept, skipped = [], 0
    for traj in demos.trajectories:
        if len(traj.states) < 2:
            skipped += 1
            continue
        kept.append(traj)
    if skipped:
        warnings.warn(f"skipped {skipped} trajectories shorter than two states", RuntimeWarning)
    if not kept:
        return LabelingResult(Dataset([], labeled=True), None, skipped)
    S = as_features([s for t in kept for s in t.states[:-1]])
    S2 = as_features([s for t in kept for s in t.states[1:]])
    labels = model.predict(S, S2)
    out, i = [], 0
    for traj in kept:
        n = len(traj.states) - 1
        out.append(Trajectory(traj.states, labels[i : i + n]))
        i += n
    accuracy = None
    if ground_truth is not None:
        truth = np.array(
            [a for t in ground_truth.trajectories if len(t.states) >= 2 for a in t.actions]
        )
        if truth.shape != labels.shape:
            raise ConfigurationError("ground-truth labels do not align with the demonstrations")
        accuracy = float(np.mean(truth == labels))
    return LabelingResult(Dataset(out, labeled=True), accuracy, skipped)


# --- evaluation --------------------------------------------------------------


@dataclass(frozen=True)
class Baselines:
    random_mean: float
    expert_mean: float

    def normalize(self, mean_return: float) -> float:
        denom = self.expert_mean - self.random_mean
        if denom == 0:
            raise ConfigurationError("expert and random baselines coincide")
        return (mean_return - self.random_mean) / denom


def mean_return(env, policy, n_episodes: int, seed=0, mode: str = "greedy") -> float:
    return float(collect_episodes(env, policy, n_episodes, seed, mode).returns.mean())


def exact_mean_return(env, policy) -> float:
    """``-J`` of the greedy version of ``policy`` on a tabular environment."""
    mdp = env.mdp
    states = as_features(np.arange(mdp.n_states))
    # policies with their own noise (act) are evaluated as distributions
    pi = policy.predict_proba(states) if hasattr(policy, "act") else policy.predict(states)
    return -exact_policy_cost(mdp, np.asarray(pi))


def compute_baselines(env, expert, n_episodes: int = 100, seed=12345, exact: bool = False) -> Baselines:
    """Mean returns of the uniform random policy and ``expert``."""
    random_policy = UniformRandomPolicy(env.n_actions)
    if exact:
        return Baselines(exact_mean_return(env, random_policy), exact_mean_return(env, expert))
    ss = as_seed_sequence(seed).spawn(2)
    return Baselines(
        mean_return(env, random_policy, n_episodes, ss[0]),
        mean_return(env, expert, n_episodes, ss[1]),
    )


def normalized_reward(env, policy, n_episodes, random_mean, expert_mean, seed=0, exact=False) -> float:
    """``(mean_return - random_mean) / (expert_mean - random_mean)``, unclamped."""
    baselines = Baselines(random_mean, expert_mean)
    if expert_mean == random_mean:
        raise ConfigurationError("expert and random baselines coincide")
    ret = exact_mean_return(env, policy) if exact else mean_return(env, policy, n_episodes, seed)
    return baselines.normalize(ret)


# --- BCO ---------------------------------------------------------------------


@dataclass
class IterationRecord:
    iter: int
    env_interactions: int
    inverse_val_loss: float
    policy_val_loss: float
    pseudo_label_accuracy: float
    normalized_reward: float
    mean_return: float = float("nan")
    wall_time: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def bco_original(
    env,
    demos: Dataset,
    n_random_interactions: int,
    policy_learner,
    inverse_learner,
    policy_train: TrainConfig | None = None,
    inverse_train: TrainConfig | None = None,
    baselines: Baselines | None = None,
    eval_episodes: int = 25,
    seed=0,
    ground_truth: Dataset | None = None,
    exact_eval: bool = False,
):
    """Random-policy pre-training, then one pass of labeling and cloning."""
    if n_random_interactions < 1:
        raise UsageError("n_random_interactions must be at least 1")
    start = time.perf_counter()
    ss = as_seed_sequence(seed).spawn(2)
    random_data = collect_transitions(env, UniformRandomPolicy(env.n_actions), n_random_interactions, ss[0])
    model = train_inverse_model(random_data.dataset(), inverse_learner, inverse_train)
    labeled = label_demonstrations(model, demos, ground_truth)
    policy = behavioral_cloning(labeled.dataset, policy_learner, policy_train)
    record = IterationRecord(
        iter=0,
        env_interactions=random_data.n_steps,
        inverse_val_loss=_val_loss(model.classifier),
        policy_val_loss=_val_loss(policy),
        pseudo_label_accuracy=float("nan") if labeled.accuracy is None else labeled.accuracy,
        normalized_reward=float("nan"),
    )
    if baselines is not None:
        ret = exact_mean_return(env, policy) if exact_eval else mean_return(env, policy, eval_episodes, ss[1])
        record.mean_return = ret
        record.normalized_reward = baselines.normalize(ret)
    record.wall_time = time.perf_counter() - start
    return policy, record


@dataclass
class BcoStarConfig:
    rollouts_per_iter: int = 25
    buffer_size: int | None = None
    max_iters: int = 10
    stop_patience: int = 3
    init_mode: str = "bc"
    seed: int = 0
    rollout_mode: str = "greedy"
    fine_tune: bool = False
    exact_eval: bool = False
    initial_train: TrainConfig | None = None
    policy_train: TrainConfig | None = None
    inverse_train: TrainConfig | None = None

    def __post_init__(self):
        if self.rollouts_per_iter < 0:
            raise ValueError("rollouts_per_iter must be non-negative")
        if self.rollouts_per_iter == 0 and not self.exact_eval:
            raise ValueError("rollouts_per_iter must be at least 1 unless evaluation is exact")
        if self.init_mode not in ("bc", "bco"):
            raise ValueError("init_mode must be 'bc' or 'bco'")
        if self.stop_patience < 1 or self.max_iters < 0:
            raise ValueError("stop_patience must be >= 1 and max_iters >= 0")
        if self.buffer_size is not None and self.buffer_size < 1:
            raise ValueError("buffer_size must be positive or None")


@dataclass
class BcoStarResult:
    policy: object
    records: list[IterationRecord]
    best_iter: int
    final_policy: object
    inverse_model: InverseModel | None = None
    policies: list = field(default_factory=list)


class _Buffer:
    """Transition buffer ``D``; oldest rows drop first once ``size`` is exceeded."""

    def __init__(self, size: int | None):
        self.size = size
        self.S = self.S2 = self.A = None

    def append(self, dataset: Dataset):
        S, S2, A = dataset.transition_arrays()
        if self.S is None:
            self.S, self.S2, self.A = S, S2, A
        else:
            self.S = np.vstack([self.S, S])
            self.S2 = np.vstack([self.S2, S2])
            self.A = np.concatenate([self.A, A])
        if self.size is not None and len(self.A) > self.size:
            self.S, self.S2, self.A = self.S[-self.size :], self.S2[-self.size :], self.A[-self.size :]

    def __len__(self):
        return 0 if self.A is None else len(self.A)


def bco_star(
    env,
    demos: Dataset,
    d0: Dataset,
    config: BcoStarConfig,
    policy_learner,
    inverse_learner,
    baselines: Baselines,
    ground_truth: Dataset | None = None,
    callback=None,
) -> BcoStarResult:
    """Concurrent inverse-model and policy training from observation.

    Iteration 0 builds the initial policy from ``d0`` (cloning it directly, or
    through an inverse model when ``init_mode='bco'``) and rolls it out.  A
    record's ``env_interactions`` counts the ``d0`` transitions plus every
    rollout step collected before that iteration's policy was trained.  Each
    later iteration refits the inverse model on the buffer, relabels
    ``demos``, refits the policy and rolls it out, appending the executed
    transitions to the buffer.  Rollout returns double as the evaluation
    unless ``exact_eval`` is set (tabular environments).  Stops after
    ``max_iters`` iterations or once the normalized reward has not beaten its
    best for ``stop_patience`` iterations; returns the best-scoring policy
    (latest on ties).
    """
    if not d0.labeled or d0.n_transitions == 0:
        raise UsageError("d0 must be a nonempty labeled dataset")
    if demos.n_transitions == 0:
        raise UsageError("demos must contain at least one transition")
    seeds = as_seed_sequence(config.seed).spawn(config.max_iters + 1)
    buffer = _Buffer(config.buffer_size)
    buffer.append(d0)
    interactions = d0.n_transitions
    records: list[IterationRecord] = []
    policies = []
    best = (-np.inf, None, -1)
    since_best = 0
    model = policy = None

    for it in range(config.max_iters + 1):
        start = time.perf_counter()
        first = it == 0
        train_p = config.initial_train if first and config.initial_train else config.policy_train
        train_m = config.initial_train if first and config.initial_train else config.inverse_train
        accuracy = float("nan")
        if first and config.init_mode == "bc":
            policy = behavioral_cloning(d0, policy_learner, train_p)
            inv_loss = float("nan")
        else:
            warm_m = model if config.fine_tune and model is not None else None
            model = _fit_inverse_arrays(inverse_learner, buffer.S, buffer.S2, buffer.A, train_m, warm_m)
            labeled = label_demonstrations(model, demos, ground_truth)
            if labeled.accuracy is not None:
                accuracy = labeled.accuracy
            X, y = labeled.dataset.state_action_arrays()
            warm_p = policy if config.fine_tune and policy is not None and not first else None
            policy = _fit(policy_learner, X, y, train_p, warm_p)
            inv_loss = _val_loss(model.classifier)

        # interactions consumed to produce this iteration's policy
        used = interactions
        ret = float("nan")
        if config.rollouts_per_iter > 0:
            try:
                batch = collect_episodes(env, policy, config.rollouts_per_iter, seeds[it], config.rollout_mode)
            except Exception as exc:
                records.append(
                    IterationRecord(it, used, inv_loss, _val_loss(policy), accuracy, float("nan"))
                )
                raise RolloutFailure(f"rollout failed in iteration {it}: {exc}", records) from exc
            interactions += batch.n_steps
            buffer.append(batch.dataset())
            ret = float(batch.returns.mean())
        if config.exact_eval:
            ret = exact_mean_return(env, policy)
        score = baselines.normalize(ret)
        rec = IterationRecord(
            iter=it,
            env_interactions=used,
            inverse_val_loss=inv_loss,
            policy_val_loss=_val_loss(policy),
            pseudo_label_accuracy=accuracy,
            normalized_reward=score,
            mean_return=ret,
            wall_time=time.perf_counter() - start,
        )
        records.append(rec)
        policies.append(policy)
        log.info("iter %d: interactions=%d reward=%.3f acc=%.3f", it, used, score, accuracy)
        if callback is not None:
            callback(rec)
        since_best = 0 if score > best[0] else since_best + 1
        if score >= best[0]:
            best = (score, policy, it)
        if not first and since_best >= config.stop_patience:
            break

    return BcoStarResult(
        policy=best[1],
        records=records,
        best_iter=best[2],
        final_policy=policy,
        inverse_model=model,
        policies=policies,
    )
