"""Config-driven experiment runs, aggregation, plotting and theory tables.

A run directory ``<output_dir>/<experiment_id>_seed<seed>/`` holds::

    config.json         resolved config, seed, baselines and package versions
    metrics.csv         one row per iteration (see METRICS_HEADER)
    run.json            final evaluation and wall-clock timings
    best_policy.json    learner checkpoints (see learners.checkpoint_dict)
    final_policy.json
    inverse_model.json  (BCO / BCO* only)

Experiment configs are YAML; unknown keys are rejected.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import platform
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .algorithms import (
    Baselines,
    BcoStarConfig,
    IterationRecord,
    _val_loss,
    bco_original,
    bco_star,
    behavioral_cloning,
    compute_baselines,
    exact_mean_return,
    mean_return,
)
from .envs import GridworldEnv, make_env
from .experts import (
    DemoRequest,
    epsilon_expert_wrap,
    generate_demonstrations,
    mountain_car_scripted_expert,
    value_iteration,
)
from .learners import TrainConfig, checkpoint_dict, make_learner
from .mdp import ConfigurationError
from .rollout import as_seed_sequence

log = logging.getLogger(__name__)

METRICS_HEADER = [
    "iter",
    "env_interactions",
    "inverse_val_loss",
    "policy_val_loss",
    "pseudo_label_accuracy",
    "normalized_reward",
]
AGGREGATE_HEADER = [
    "iter",
    "n_runs",
    "env_interactions_mean",
    "normalized_reward_mean",
    "normalized_reward_std",
    "pseudo_label_accuracy_mean",
]


class ConfigError(ConfigurationError):
    pass


# --- config schema -----------------------------------------------------------


def _build(cls, data, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class EnvSection:
    kind: str = "mountain_car"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("mountain_car", "gridworld"):
            raise ValueError(f"unknown env kind {self.kind!r}")


@dataclass
class ExpertSection:
    kind: str = "auto"
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind not in ("auto", "scripted", "value_iteration"):
            raise ValueError(f"unknown expert kind {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")


@dataclass
class AlgorithmSection:
    name: str = "bco_star"
    rollouts_per_iter: int = 25
    buffer_size: int | None = None
    max_iters: int = 5
    stop_patience: int = 3
    init_mode: str = "bc"
    rollout_mode: str = "greedy"
    fine_tune: bool = False
    n_random_interactions: int = 1000

    def __post_init__(self):
        if self.name not in ("bc", "bco", "bco_star"):
            raise ValueError(f"unknown algorithm {self.name!r}")
        if self.rollout_mode not in ("greedy", "sample"):
            raise ValueError("rollout_mode must be 'greedy' or 'sample'")
        if self.n_random_interactions < 1:
            raise ValueError("n_random_interactions must be at least 1")


@dataclass
class LearnerSection:
    kind: str = "mlp"
    hidden_dims: list = field(default_factory=lambda: [300, 200])
    smoothing: float = 1.0

    def __post_init__(self):
        if self.kind not in ("mlp", "tabular"):
            raise ValueError(f"unknown learner kind {self.kind!r}")

    def make(self, n_actions: int, one_hot_sizes=None):
        if self.kind == "tabular":
            return make_learner("tabular", n_actions, smoothing=self.smoothing)
        return make_learner(
            "mlp", n_actions, hidden_dims=tuple(self.hidden_dims), one_hot_sizes=one_hot_sizes
        )


@dataclass
class LearnersSection:
    policy: LearnerSection = field(default_factory=LearnerSection)
    inverse: LearnerSection = field(default_factory=LearnerSection)


@dataclass
class TrainSection:
    initial: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=5000))
    iteration: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=50))
    # inverse-model override: used by bco, and by BCO* after iteration 0
    inverse: TrainConfig | None = None


@dataclass
class BaselineSection:
    episodes: int = 100
    seed: int = 12345
    exact: bool | None = None


@dataclass
class EvaluationSection:
    episodes: int = 25
    final_episodes: int = 500


@dataclass
class ExperimentConfig:
    experiment_id: str
    env: EnvSection = field(default_factory=EnvSection)
    expert: ExpertSection = field(default_factory=ExpertSection)
    algorithm: AlgorithmSection = field(default_factory=AlgorithmSection)
    learners: LearnersSection = field(default_factory=LearnersSection)
    train: TrainSection = field(default_factory=TrainSection)
    n_demos: int = 30
    n_labeled_d0: int = 2
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "runs"
    baselines: BaselineSection = field(default_factory=BaselineSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if self.n_demos < 1 or self.n_labeled_d0 < 1:
            raise ValueError("n_demos and n_labeled_d0 must be at least 1")
        if not str(self.experiment_id).strip():
            raise ValueError("experiment_id must be nonempty")

    @property
    def exact_eval(self) -> bool:
        if self.baselines.exact is not None:
            return self.baselines.exact
        return self.env.kind == "gridworld"

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    data = dict(data)
    sections = {
        "env": EnvSection,
        "expert": ExpertSection,
        "algorithm": AlgorithmSection,
        "baselines": BaselineSection,
        "evaluation": EvaluationSection,
    }
    for key, cls in sections.items():
        if key in data:
            data[key] = _build(cls, data[key], key)
    if "learners" in data:
        raw = data["learners"] or {}
        if not isinstance(raw, dict) or set(raw) - {"policy", "inverse"}:
            raise ConfigError("learners: allowed keys are ['inverse', 'policy']")
        data["learners"] = LearnersSection(
            **{k: _build(LearnerSection, v, f"learners.{k}") for k, v in raw.items()}
        )
    if "train" in data:
        raw = data["train"] or {}
        if not isinstance(raw, dict) or set(raw) - {"initial", "iteration", "inverse"}:
            raise ConfigError("train: allowed keys are ['initial', 'inverse', 'iteration']")
        data["train"] = TrainSection(
            **{k: None if v is None and k == "inverse" else _build(TrainConfig, v, f"train.{k}") for k, v in raw.items()}
        )
    cfg = _build(ExperimentConfig, data, "config")
    try:
        make_env(cfg.env.kind, cfg.env.params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"env.params: {exc}") from exc
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return config_from_dict(data)


# --- one seed ----------------------------------------------------------------


def build_expert(cfg: ExperimentConfig, env):
    kind = cfg.expert.kind
    if kind == "auto":
        kind = "value_iteration" if isinstance(env, GridworldEnv) else "scripted"
    if kind == "value_iteration":
        if not hasattr(env, "mdp"):
            raise ConfigError("value_iteration experts need a tabular environment")
        base, _ = value_iteration(env.mdp)
    else:
        if isinstance(env, GridworldEnv):
            raise ConfigError("the scripted expert only exists for mountain car")
        base = mountain_car_scripted_expert()
    if cfg.expert.epsilon == 0:
        return base
    return epsilon_expert_wrap(base, cfg.expert.epsilon, env.n_actions)


def _learners(cfg: ExperimentConfig, env):
    one_hot_policy = one_hot_inverse = None
    if isinstance(env, GridworldEnv):
        S = env.mdp.n_states
        one_hot_policy, one_hot_inverse = (S,), (S, S)
    policy = cfg.learners.policy.make(env.n_actions, one_hot_policy)
    inverse = cfg.learners.inverse.make(env.n_actions, one_hot_inverse)
    return policy, inverse


def _with_seed(tc: TrainConfig, seed: int) -> TrainConfig:
    return TrainConfig(**{**asdict(tc), "seed": int(seed)})


def experiment_baselines(cfg: ExperimentConfig) -> Baselines:
    env = make_env(cfg.env.kind, cfg.env.params)
    expert = build_expert(cfg, env)
    return compute_baselines(
        env, expert, cfg.baselines.episodes, cfg.baselines.seed, exact=cfg.exact_eval
    )


@dataclass
class RunRecord:
    seed: int
    run_dir: str
    records: list[IterationRecord]
    final: dict
    config: dict


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def metrics_csv(records: list[IterationRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in records:
        w.writerow([_fmt(getattr(r, k)) for k in METRICS_HEADER])
    return buf.getvalue()


def run_seed(cfg: ExperimentConfig, seed: int, baselines: Baselines, output_dir=None) -> RunRecord:
    """Run one seed end to end and write its run directory."""
    out_root = Path(output_dir or cfg.output_dir)
    run_dir = out_root / f"{cfg.experiment_id}_seed{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    env = make_env(cfg.env.kind, cfg.env.params)
    expert = build_expert(cfg, env)
    demo_seed, d0_seed, algo_seed, eval_seed = as_seed_sequence([int(seed), 7]).spawn(4)
    truth = generate_demonstrations(expert, env, DemoRequest(cfg.n_demos, True, demo_seed))
    d0 = generate_demonstrations(expert, env, DemoRequest(cfg.n_labeled_d0, True, d0_seed))
    demos = truth.strip_actions()
    policy_learner, inverse_learner = _learners(cfg, env)
    initial = _with_seed(cfg.train.initial, seed)
    iteration = _with_seed(cfg.train.iteration, seed)
    inverse = None if cfg.train.inverse is None else _with_seed(cfg.train.inverse, seed)
    algo = cfg.algorithm
    exact = cfg.exact_eval
    inverse_model = None

    if algo.name == "bc":
        policy = behavioral_cloning(truth, policy_learner, initial)
        ret = exact_mean_return(env, policy) if exact else mean_return(env, policy, cfg.evaluation.episodes, algo_seed)
        records = [
            IterationRecord(
                0, 0, float("nan"), _val_loss(policy), float("nan"), baselines.normalize(ret), ret,
            )
        ]
        best = final = policy
    elif algo.name == "bco":
        policy, rec = bco_original(
            env, demos, algo.n_random_interactions, policy_learner, inverse_learner,
            policy_train=initial, inverse_train=inverse or initial, baselines=baselines,
            eval_episodes=cfg.evaluation.episodes, seed=algo_seed, ground_truth=truth, exact_eval=exact,
        )
        records = [rec]
        best = final = policy
    else:
        bcfg = BcoStarConfig(
            rollouts_per_iter=algo.rollouts_per_iter,
            buffer_size=algo.buffer_size,
            max_iters=algo.max_iters,
            stop_patience=algo.stop_patience,
            init_mode=algo.init_mode,
            seed=algo_seed,
            rollout_mode=algo.rollout_mode,
            fine_tune=algo.fine_tune,
            exact_eval=exact,
            initial_train=initial,
            policy_train=iteration,
            inverse_train=inverse or iteration,
        )
        result = bco_star(env, demos, d0, bcfg, policy_learner, inverse_learner, baselines, ground_truth=truth)
        records = result.records
        best, final = result.policy, result.final_policy
        inverse_model = result.inverse_model

    if exact:
        final_return = exact_mean_return(env, best)
    else:
        final_return = mean_return(env, best, cfg.evaluation.final_episodes, eval_seed)
    final_metrics = {
        "final_mean_return": final_return,
        "final_normalized_reward": baselines.normalize(final_return),
        "final_eval_episodes": None if exact else cfg.evaluation.final_episodes,
        "iterations": len(records),
    }
    snapshot = {
        "config": cfg.to_dict(),
        "seed": int(seed),
        "baselines": asdict(baselines),
        "versions": {
            "bcostar": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    (run_dir / "config.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n")
    (run_dir / "metrics.csv").write_text(metrics_csv(records))
    (run_dir / "run.json").write_text(
        json.dumps(
            {"final": final_metrics, "wall_time": [r.wall_time for r in records]}, indent=2
        )
        + "\n"
    )
    (run_dir / "best_policy.json").write_text(json.dumps(checkpoint_dict(best)))
    (run_dir / "final_policy.json").write_text(json.dumps(checkpoint_dict(final)))
    if inverse_model is not None:
        (run_dir / "inverse_model.json").write_text(json.dumps(checkpoint_dict(inverse_model.classifier)))
    return RunRecord(int(seed), str(run_dir), records, final_metrics, snapshot)


def _run_seed_job(args):
    cfg_dict, seed, baselines, output_dir = args
    cfg = config_from_dict(cfg_dict)
    try:
        return run_seed(cfg, seed, Baselines(**baselines), output_dir), None
    except Exception as exc:  # surfaced per seed; the CLI maps it to exit code 3
        log.exception("seed %s failed", seed)
        return None, f"seed {seed}: {type(exc).__name__}: {exc}"


@dataclass
class ExperimentResult:
    runs: list[RunRecord]
    failures: list[str]
    aggregate_path: str | None
    baselines: Baselines


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, seed_offset: int = 0, output_dir=None) -> ExperimentResult:
    """Run every seed of ``cfg`` and write ``aggregate.csv`` next to the run directories."""
    out = Path(output_dir or cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    baselines = experiment_baselines(cfg)
    (out / "baselines.json").write_text(json.dumps(asdict(baselines), indent=2) + "\n")
    seeds = [int(s) + seed_offset for s in cfg.seeds]
    jobs_args = [(cfg.to_dict(), s, asdict(baselines), str(out)) for s in seeds]
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_seed_job, jobs_args))
    else:
        results = [_run_seed_job(a) for a in jobs_args]
    runs = [r for r, err in results if r is not None]
    failures = [err for _, err in results if err is not None]
    agg_path = None
    if runs:
        table = aggregate([r.run_dir for r in runs])
        agg_path = out / "aggregate.csv"
        write_aggregate(table, agg_path)
    return ExperimentResult(runs, failures, None if agg_path is None else str(agg_path), baselines)


# --- aggregation and plots ---------------------------------------------------


def read_metrics(run_dir) -> list[dict]:
    path = Path(run_dir) / "metrics.csv"
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: float(v) for k, v in row.items()} for row in rows]


def _mean(values) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return math.fsum(vals) / len(vals) if vals else float("nan")


def _std(values) -> float:
    vals = [v for v in values if not math.isnan(v)]
    if not vals:
        return float("nan")
    m = math.fsum(vals) / len(vals)
    return math.sqrt(math.fsum((v - m) ** 2 for v in vals) / len(vals))


def aggregate(run_dirs) -> list[dict]:
    """Per-iteration mean and (population) standard deviation across runs.

    Runs of different length are aligned on their common prefix.  Sums use
    ``math.fsum`` so the result does not depend on run order.
    """
    runs = [read_metrics(d) for d in run_dirs]
    if not runs:
        raise ValueError("need at least one completed run")
    lengths = {len(r) for r in runs}
    n = min(lengths)
    if len(lengths) > 1:
        warnings.warn(f"runs have {sorted(lengths)} iterations; aggregating the first {n}", RuntimeWarning)
    table = []
    for i in range(n):
        rows = [r[i] for r in runs]
        table.append(
            {
                "iter": int(rows[0]["iter"]),
                "n_runs": len(rows),
                "env_interactions_mean": _mean(r["env_interactions"] for r in rows),
                "normalized_reward_mean": _mean(r["normalized_reward"] for r in rows),
                "normalized_reward_std": _std(r["normalized_reward"] for r in rows),
                "pseudo_label_accuracy_mean": _mean(r["pseudo_label_accuracy"] for r in rows),
            }
        )
    return table


def write_aggregate(table: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_HEADER)
        for row in table:
            w.writerow([_fmt(row[k]) for k in AGGREGATE_HEADER])


def read_aggregate(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def plot(summary, path, x: str = "iter", title: str | None = None) -> str:
    """Line chart of mean normalized reward with standard-deviation error bars, as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if isinstance(summary, (str, Path)):
        summary = read_aggregate(summary)
    xkey = {"iter": "iter", "interactions": "env_interactions_mean"}.get(x, x)
    xs = [row[xkey] for row in summary]
    ys = [row["normalized_reward_mean"] for row in summary]
    err = [row["normalized_reward_std"] for row in summary]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(xs, ys, yerr=err, marker="o", capsize=3)
    ax.set_xlabel("iteration" if xkey == "iter" else "environment interactions")
    ax.set_ylabel("normalized reward")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    plt.rcParams["svg.hashsalt"] = "bcostar"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return str(path)


# --- theory report -----------------------------------------------------------


def _grid_lists(section: dict, keys: dict) -> dict:
    out = {}
    for key, default in keys.items():
        value = section.get(key, default)
        out[key] = list(value) if isinstance(value, (list, tuple)) else [value]
    unknown = sorted(set(section) - set(keys))
    if unknown:
        raise ConfigError(f"unknown keys {unknown}")
    return out


def theory_report(grid: dict, output_dir) -> dict:
    """Tabulate bounds, the recurrence/ODE comparison and the eps0 divergence sweep.

    Writes ``bounds.csv``, ``recurrence.csv``, ``trajectory.csv``,
    ``divergence.csv`` and ``theory.svg`` into ``output_dir``; returns the
    tables keyed by name.  Non-recurrent grid points are kept and flagged.
    """
    from itertools import product

    from . import theory as th

    if not isinstance(grid, dict) or set(grid) - {"bounds", "recurrence", "divergence"}:
        raise ConfigError("theory grid: allowed sections are bounds, recurrence, divergence")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables = {}

    b = _grid_lists(
        grid.get("bounds") or {},
        {"u": [0.0, 1.0, 2.0], "epsilon": [0.1, 0.25], "K": [1.0], "delta": [0.05], "n": [100],
         "epsilon1": [0.1], "d0": [0.0], "K_policy": [1.0]},
    )
    rows = []
    for u, eps, K, delta, n, eps1, d0, Kp in product(*b.values()):
        params = th.TheoryParams(u=u, epsilon=eps, K=K, delta=delta)
        row = {"u": u, "epsilon": eps, "K": K, "delta": delta, "n": n, "epsilon1": eps1, "d0": d0,
               "recurrent": params.recurrent,
               "generalization_bound": th.generalization_bound(K, delta, n),
               "d0_bound": th.d0_bound(K, delta, eps1)}
        if params.recurrent:
            d1 = th.d1_bound(params, eps, eps1, d0)
            row.update(sample_ratio=th.sample_ratio_bound(params), d1_bound=d1,
                       d1_bound_asymptotic=th.d1_bound_asymptotic(params, eps, eps1),
                       bc_equivalent=th.bc_equivalent_samples(d0, d1, params, Kp, K) if K > 0 else float("nan"))
        else:
            row.update(sample_ratio=float("nan"), d1_bound=float("nan"),
                       d1_bound_asymptotic=float("nan"), bc_equivalent=float("nan"))
        rows.append(row)
    tables["bounds"] = rows

    r = grid.get("recurrence") or {}
    unknown = sorted(set(r) - {"N0", "u", "K", "t", "alpha"})
    if unknown:
        raise ConfigError(f"recurrence: unknown keys {unknown}")
    N0, u, K, t_end = r.get("N0", 8.0), r.get("u", 2.0), r.get("K", 1.0), r.get("t", 50.0)
    alphas = list(r.get("alpha", [1.0, 0.1, 0.01]))
    rec_rows, traj = [], {}
    N_end = th.ode_solution(t_end, N0, u, K)
    for a in alphas:
        steps = int(round(t_end / a))
        tr = th.integrate_discrete_recurrence(N0, a, u, K, steps)
        rec_rows.append({"alpha": a, "steps": steps, "N_discrete": tr.N[-1], "N_ode": N_end,
                         "rel_gap": abs(tr.N[-1] - N_end) / N_end})
        traj[a] = tr
    tables["recurrence"] = rec_rows
    ts = np.linspace(0.0, t_end, 51)
    traj_rows = []
    for t in ts:
        row = {"t": float(t), "N_ode": th.ode_solution(float(t), N0, u, K)}
        for a, tr in traj.items():
            row[f"N_alpha_{a:g}"] = float(np.interp(t, tr.t, tr.N))
        traj_rows.append(row)
    tables["trajectory"] = traj_rows

    d = grid.get("divergence") or {}
    unknown = sorted(set(d) - {"u", "K", "epsilon", "k"})
    if unknown:
        raise ConfigError(f"divergence: unknown keys {unknown}")
    du, dK, deps = d.get("u", 2.0), d.get("K", 1.0), d.get("epsilon", 0.01)
    div_rows = []
    for k in d.get("k", list(range(1, 9))):
        eps0 = (1.0 - 10.0 ** (-k)) / du
        div_rows.append({"k": k, "epsilon0": eps0, "neg_log_gap": -math.log(1.0 / du - eps0),
                         "n": th.sample_complexity_asymptotic(deps, eps0, du, dK)})
    tables["divergence"] = div_rows

    for name, tab in tables.items():
        with open(out / f"{name}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(tab[0]), lineterminator="\n")
            w.writeheader()
            for row in tab:
                w.writerow({k: _fmt(v) if not isinstance(v, bool) else str(v) for k, v in row.items()})

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(ts, [row["N_ode"] for row in traj_rows], "k-", label="ODE")
    for a, tr in traj.items():
        ax1.plot(tr.t, tr.N, "--", label=f"recurrence alpha={a:g}")
    ax1.set_xlabel("t")
    ax1.set_ylabel("N")
    ax1.legend(fontsize=7)
    ax2.plot([row["neg_log_gap"] for row in div_rows], [row["n"] for row in div_rows], "o-")
    ax2.set_xlabel("-log(1/u - eps0)")
    ax2.set_ylabel("samples to reach eps")
    fig.tight_layout()
    plt.rcParams["svg.hashsalt"] = "bcostar"
    fig.savefig(out / "theory.svg", format="svg", metadata={"Date": None})
    plt.close(fig)
    return tables
