"""Adam with weight decay, the reconstruction training loop, and random search."""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from uagnn.autodiff import NonFiniteError
from uagnn.graph import EdgeSplit, Graph, dense_adjacency
from uagnn.kmeans import kmeans
from uagnn.metrics import HIGHER_IS_BETTER, conductance, macro_f1, nmi
from uagnn.model import (
    DivergenceError,
    HyperParams,
    ModelParams,
    embeddings,
    init_params,
    loss_and_grads,
    propagation_operator,
)

log = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8
MIN_DELTA = 1e-6

SEARCH_SPACE: dict[str, tuple] = {
    "layers": (1, 2, 3, 5, 10, 20, 30),
    "hidden_dim": (32, 64, 128),
    "gamma": (0.0001, 0.001, 0.01, 0.1, 1.0),
    "epsilon": (0.0001, 0.001, 0.01, 0.1, 1.0),
    "aggregation": ("phi1", "phi2"),
    "learning_rate": (0.05, 0.01, 0.005, 0.001, 0.0005, 0.0001),
    "weight_decay": (0.05, 0.005, 0.0005, 0.0),
}
DEFAULT_SEEDS = (42, 24, 976, 12345, 8765, 7, 856, 90, 672, 785)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> AdamState:
        arrays = params.as_dict()
        return cls({k: np.zeros_like(a) for k, a in arrays.items()},
                   {k: np.zeros_like(a) for k, a in arrays.items()})


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState,
              lr: float, wd: float = 0.0) -> tuple[ModelParams, AdamState]:
    """One Adam update with L2 weight decay folded into the gradient."""
    t = state.t + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, theta in params.as_dict().items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != theta.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {theta.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name}")
        g = g + wd * theta
        m = BETA1 * state.m[name] + (1 - BETA1) * g
        v = BETA2 * state.v[name] + (1 - BETA2) * g * g
        m_hat = m / (1 - BETA1 ** t)
        v_hat = v / (1 - BETA2 ** t)
        new_params[name] = theta - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        new_m[name], new_v[name] = m, v
    return ModelParams(**new_params), AdamState(new_m, new_v, t)


@dataclass
class TrainResult:
    params: ModelParams
    history: list[float]
    best_epoch: int
    wall_time: float
    seed: int
    hp: HyperParams

    @property
    def final_loss(self) -> float:
        return self.history[self.best_epoch]

    @property
    def epochs_run(self) -> int:
        return len(self.history)


def train(g: Graph, split: EdgeSplit, hp: HyperParams, seed: int) -> TrainResult:
    """Fit encoder and decoders by reconstructing the training edges and features.

    Returns the parameters from the epoch with the lowest recorded loss.
    Raises DivergenceError when the loss goes non-finite.
    """
    if len(split.train) == 0:
        raise ValueError("training edge set is empty")
    start = time.perf_counter()
    op = propagation_operator(g, split.train, hp.aggregation)
    A_target = dense_adjacency(g, split.train)
    X = g.features
    params = init_params(g.feature_dim, hp.hidden_dim, g.n, seed)
    state = AdamState.zeros_like(params)
    history: list[float] = []
    best_params, best_loss, best_epoch = params, np.inf, 0
    plateau_ref, waited = np.inf, 0
    for epoch in range(hp.max_epochs):
        try:
            loss, grads = loss_and_grads(params, op, X, A_target, hp)
            if not np.isfinite(loss):
                raise DivergenceError(f"loss {loss} at epoch {epoch}")
            history.append(loss)
            if loss < best_loss:
                best_params, best_loss, best_epoch = params, loss, epoch
            if loss < plateau_ref - MIN_DELTA:
                plateau_ref, waited = loss, 0
            else:
                waited += 1
                if waited >= hp.patience:
                    break
            params, state = adam_step(params, grads, state, hp.learning_rate, hp.weight_decay)
        except NonFiniteError as exc:
            raise DivergenceError(f"training diverged at epoch {epoch}: {exc}") from exc
    return TrainResult(best_params, history, best_epoch, time.perf_counter() - start, seed, hp)


def cluster(params: ModelParams, g: Graph, edges, hp: HyperParams, k: int, seed: int,
            n_init: int = 20):
    """Encode with the operator built from ``edges`` and run k-means."""
    op = propagation_operator(g, edges, hp.aggregation)
    Z = embeddings(params, op, g.features, hp)
    return kmeans(Z, k, n_init=n_init, seed=seed)


def score(metric: str, pred, g: Graph, edges) -> float:
    if metric == "f1":
        return macro_f1(pred, g.labels)
    if metric == "nmi":
        return nmi(pred, g.labels)
    if metric == "conductance":
        return conductance(pred, g, edges)
    raise ValueError(f"unknown metric {metric!r}")


@dataclass
class Trial:
    index: int
    hp: HyperParams
    per_seed: dict[int, float | None]
    mean: float | None
    wall_time: float
    failed: bool = False

    def to_record(self) -> dict:
        return {"trial": self.index, "hp": self.hp.to_dict(),
                "per_seed": {str(s): v for s, v in self.per_seed.items()},
                "mean": self.mean, "wall_time": self.wall_time, "failed": self.failed}

    @classmethod
    def from_record(cls, rec: dict) -> Trial:
        return cls(rec["trial"], HyperParams.from_dict(rec["hp"]),
                   {int(s): v for s, v in rec["per_seed"].items()},
                   rec["mean"], rec["wall_time"], rec.get("failed", False))


@dataclass
class SweepResult:
    trials: list[Trial]
    metric: str
    budget: int
    best: HyperParams | None = field(init=False, default=None)
    best_trial: Trial | None = field(init=False, default=None)

    def __post_init__(self) -> None:
        self.best_trial = best_trial(self.trials, self.metric)
        self.best = self.best_trial.hp if self.best_trial else None

    @property
    def budget_used(self) -> int:
        return len(self.trials)


def best_trial(trials: Iterable[Trial], metric: str) -> Trial | None:
    ok = [t for t in trials if not t.failed and t.mean is not None]
    if not ok:
        return None
    sign = 1.0 if HIGHER_IS_BETTER[metric] else -1.0
    # first trial wins ties
    return max(ok, key=lambda t: (sign * t.mean, -t.index))


def sample_grid(space: dict[str, tuple], budget: int, rng_seed: int) -> list[dict]:
    """Uniform samples from the grid product, without replacement while possible.

    The sequence for a larger budget extends the one for a smaller budget,
    so a resumed search continues where the earlier run stopped.
    """
    keys = list(space)
    sizes = [len(space[k]) for k in keys]
    total = int(np.prod(sizes))
    rng = np.random.default_rng(rng_seed)
    picks = list(rng.permutation(total)[:budget])
    if budget > total:
        picks += list(rng.integers(total, size=budget - total))
    out = []
    for flat in picks:
        idx = np.unravel_index(int(flat), sizes)
        out.append({k: space[k][i] for k, i in zip(keys, idx)})
    return out


def random_search(g: Graph, split: EdgeSplit, metric: str, budget: int, seeds,
                  rng_seed: int = 0, space: dict[str, tuple] | None = None,
                  fixed: dict | None = None, start: int = 0, n_init: int = 20,
                  on_trial: Callable[[Trial], None] | None = None) -> SweepResult:
    """Random search over the hyperparameter grid.

    Each sampled point is trained once per seed on ``split.train``, clustered
    with the train+validation operator, and scored on ``metric``. ``start``
    skips the first samples of the deterministic sequence (for resuming).
    """
    metric = metric.lower()
    if metric not in HIGHER_IS_BETTER:
        raise ValueError(f"unknown metric {metric!r}")
    if g.labels is None:
        raise ValueError("random search needs labels for the validation metric")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    fixed = fixed or {}
    k = g.num_classes
    val_edges = split.cumulative("val")
    trials = []
    for index, point in enumerate(sample_grid(space or SEARCH_SPACE, budget, rng_seed)):
        if index < start:
            continue
        hp = HyperParams(**{**fixed, **point})
        tic = time.perf_counter()
        per_seed: dict[int, float | None] = {}
        for s in seeds:
            try:
                result = train(g, split, hp, s)
                pred = cluster(result.params, g, val_edges, hp, k, s, n_init)
                per_seed[s] = score(metric, pred, g, val_edges)
            except DivergenceError as exc:
                log.warning("trial %d seed %d failed: %s", index, s, exc)
                per_seed[s] = None
        failed = any(v is None for v in per_seed.values())
        mean = None if failed else float(np.mean(list(per_seed.values())))
        trial = Trial(index, hp, per_seed, mean, time.perf_counter() - tic, failed)
        trials.append(trial)
        if on_trial:
            on_trial(trial)
    result = SweepResult(trials, metric, budget)
    if start == 0 and result.best is None:
        raise RuntimeError("every trial failed")
    return result


def grid_product(space: dict[str, tuple]) -> Iterable[dict]:
    keys = list(space)
    for combo in itertools.product(*(space[k] for k in keys)):
        yield dict(zip(keys, combo))
