"""Command-line entry point: generate | train | sweep | diagnose."""

from __future__ import annotations

import argparse
import fcntl
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from uagnn.graph import (
    Graph,
    GraphFormatError,
    generate_sbm,
    homophily,
    load_graph,
    path_graph,
    save_graph,
    split_edges,
)
from uagnn.metrics import evaluate_all, metric_report
from uagnn.model import DivergenceError, HyperParams, ModelParams, init_params
from uagnn.stability import classify_regime, effective_spectrum, sensitivity_profile
from uagnn.training import (
    DEFAULT_SEEDS,
    SEARCH_SPACE,
    Trial,
    best_trial,
    cluster,
    random_search,
    train,
)

log = logging.getLogger("uagnn")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
TRAIN_KEYS = ("f1", "nmi", "conductance", "loss_final", "epochs_run")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str | None = None
    generator: dict | None = None
    fractions: tuple[float, float, float] = (0.64, 0.16, 0.20)
    split_seed: int | None = None
    hp: dict = field(default_factory=dict)
    metric: str = "nmi"
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    out: str = "runs"
    budget: int = 60
    rng_seed: int = 0
    space: dict | None = None
    fixed: dict = field(default_factory=dict)
    kmeans_inits: int = 20
    params: str | None = None
    source: int = 0
    method: str = "autodiff"
    tol: float = 1e-6

    def __post_init__(self) -> None:
        if (self.dataset is None) == (self.generator is None):
            raise ConfigError("exactly one of 'dataset' or 'generator' must be given")
        if not self.seeds:
            raise ConfigError("'seeds' must be non-empty")
        self.metric = self.metric.lower()
        if self.metric not in ("f1", "nmi", "conductance"):
            raise ConfigError(f"unknown metric {self.metric!r}")
        self.fractions = tuple(float(f) for f in self.fractions)

    @classmethod
    def from_dict(cls, doc: dict) -> RunConfig:
        doc = dict(doc)
        split = doc.pop("split", {}) or {}
        sweep = doc.pop("sweep", {}) or {}
        diagnose = doc.pop("diagnose", {}) or {}
        kwargs = {}
        if "fractions" in split:
            kwargs["fractions"] = split["fractions"]
        if "seed" in split:
            kwargs["split_seed"] = split["seed"]
        for key in ("budget", "rng_seed", "space", "fixed"):
            if key in sweep:
                kwargs[key] = sweep[key]
        for key in ("params", "source", "method", "tol"):
            if key in diagnose:
                kwargs[key] = diagnose[key]
        known = {"dataset", "generator", "hp", "metric", "seeds", "out", "kmeans_inits"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        kwargs.update(doc)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def build_graph(cfg: RunConfig) -> Graph:
    if cfg.dataset is not None:
        return load_graph(cfg.dataset)
    gen = dict(cfg.generator)
    kind = gen.pop("type", "sbm")
    if kind == "sbm":
        try:
            return generate_sbm(**gen)
        except TypeError as exc:
            raise ConfigError(f"bad generator settings: {exc}") from None
    if kind == "path":
        return path_graph(int(gen.get("n", 30)), int(gen.get("feature_dim", 4)),
                          int(gen.get("seed", 0)), float(gen.get("feature_scale", 0.0)))
    raise ConfigError(f"unknown generator type {kind!r}")


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _summary_stats(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    std = float(np.std(arr, ddof=1)) if len(arr) > 1 else None
    return {"mean": float(arr.mean()) if len(arr) else None, "std": std, "count": len(arr)}


def cmd_generate(gen: dict, out_dir) -> Path:
    """Write an SBM dataset plus manifest.json; nothing is written on bad input."""
    gen = dict(gen)
    gen.pop("type", None)
    try:
        g = generate_sbm(**gen)
    except TypeError as exc:
        raise ConfigError(f"bad generator settings: {exc}") from None
    root = save_graph(g, out_dir)
    manifest = {"n": g.n, "d": g.feature_dim, "k": g.num_classes, "edges": g.num_edges,
                "homophily": homophily(g), "seed": gen.get("seed", 0), "generator": gen}
    _write_json(root / "manifest.json", manifest)
    return root


def run_seed(g: Graph, cfg: RunConfig, hp: HyperParams, seed: int) -> dict:
    split = split_edges(g, cfg.fractions, seed)
    result = train(g, split, hp, seed)
    pred = cluster(result.params, g, g.edges, hp, g.num_classes, seed, cfg.kmeans_inits)
    metrics = evaluate_all(pred, g)
    return {**metrics, "loss_final": result.final_loss, "epochs_run": result.epochs_run}


def cmd_train(cfg: RunConfig) -> dict:
    g = build_graph(cfg)
    if g.labels is None:
        raise ConfigError("train needs labels to set k and score the partition")
    hp = HyperParams.from_dict(cfg.hp)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    reports, failed = {}, []
    records = []
    for seed in cfg.seeds:
        try:
            report = run_seed(g, cfg, hp, seed)
        except DivergenceError as exc:
            log.warning("seed %d diverged: %s", seed, exc)
            failed.append(seed)
            _write_json(out / f"seed_{seed}.json", {"failed": True, "error": str(exc)})
            continue
        reports[seed] = report
        _write_json(out / f"seed_{seed}.json", report)
        records += [metric_report(m, report[m], seed, "test", g.num_classes)
                    for m in ("f1", "nmi", "conductance")]
    (out / "metrics.jsonl").write_text("".join(r + "\n" for r in records))
    summary = {
        "dataset": g.name,
        "hp": hp.to_dict(),
        "seeds": list(cfg.seeds),
        "failed_seeds": failed,
        "partial": bool(failed),
        "metrics": {m: _summary_stats([r[m] for r in reports.values()]) for m in TRAIN_KEYS},
    }
    _write_json(out / "summary.json", summary)
    if not reports:
        raise RuntimeError("every seed diverged")
    return summary


def _append_line(path: Path, line: str) -> None:
    with open(path, "a") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            fh.write(line + "\n")
            fh.flush()
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def read_trials(path: Path) -> list[Trial]:
    if not path.is_file():
        return []
    return [Trial.from_record(json.loads(line))
            for line in path.read_text().splitlines() if line.strip()]


def cmd_sweep(cfg: RunConfig) -> dict:
    """Resumable random search; trial lines already in the log are not rerun."""
    g = build_graph(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "trials.jsonl"
    done = len(read_trials(log_path))
    split_seed = cfg.split_seed if cfg.split_seed is not None else cfg.seeds[0]
    split = split_edges(g, cfg.fractions, split_seed)
    space = {k: tuple(v) for k, v in cfg.space.items()} if cfg.space else SEARCH_SPACE
    if done < cfg.budget:
        random_search(g, split, cfg.metric, cfg.budget, cfg.seeds, cfg.rng_seed,
                      space=space, fixed=cfg.fixed, start=done, n_init=cfg.kmeans_inits,
                      on_trial=lambda t: _append_line(log_path, json.dumps(t.to_record())))
    trials = read_trials(log_path)
    best = best_trial(trials, cfg.metric)
    if best is None:
        raise RuntimeError("budget exhausted with zero successful trials")
    doc = {"metric": cfg.metric, "trial": best.index, "mean": best.mean,
           "hp": best.hp.to_dict(), "budget_used": len(trials)}
    _write_json(out / "best_hp.json", doc)
    return doc


def cmd_diagnose(cfg: RunConfig) -> dict:
    g = build_graph(cfg)
    hp = HyperParams.from_dict(cfg.hp)
    if cfg.params:
        try:
            params = ModelParams.load(cfg.params)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"malformed parameters file {cfg.params}: {exc}") from None
        if params.dims != (g.feature_dim, hp.hidden_dim, g.n):
            raise ConfigError(f"parameters {params.dims} do not fit graph/hp "
                              f"{(g.feature_dim, hp.hidden_dim, g.n)}")
    else:
        params = init_params(g.feature_dim, hp.hidden_dim, g.n, cfg.seeds[0])
    spectrum = effective_spectrum(params.W, hp.gamma)
    regime = classify_regime(spectrum, cfg.tol)
    profile = sensitivity_profile(params, g, hp, cfg.source, method=cfg.method)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"spectrum": spectrum.to_dict(), "regime": regime.value,
              "sensitivity": profile.to_dict(), "hp": hp.to_dict()}
    _write_json(out / "diagnose.json", report)
    (out / "sensitivity.csv").write_text(profile.to_csv())
    return report


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uagnn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seeds", type=_parse_seeds, help="comma-separated seeds")
    common.add_argument("--metric", choices=("f1", "nmi", "conductance"))
    common.add_argument("--dataset", help="dataset directory")

    gen = sub.add_parser("generate", parents=[common], help="write a synthetic SBM dataset")
    gen.add_argument("--n", type=int)
    gen.add_argument("--k", type=int)
    gen.add_argument("--p-in", type=float)
    gen.add_argument("--p-out", type=float)
    gen.add_argument("--feature-dim", type=int)
    gen.add_argument("--feature-shift", type=float)
    gen.add_argument("--seed", type=int)

    sub.add_parser("train", parents=[common], help="train and evaluate on every seed")
    sweep = sub.add_parser("sweep", parents=[common], help="random hyperparameter search")
    sweep.add_argument("--budget", type=int)
    diag = sub.add_parser("diagnose", parents=[common], help="spectrum and sensitivity report")
    diag.add_argument("--params", help="trained parameters JSON")
    diag.add_argument("--source", type=int)
    return parser


def _load_config(args) -> dict:
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    if args.out:
        doc["out"] = args.out
    if args.seeds:
        doc["seeds"] = args.seeds
    if args.metric:
        doc["metric"] = args.metric
    if args.dataset:
        doc["dataset"] = args.dataset
        doc.pop("generator", None)
    return doc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        doc = _load_config(args)
        if args.command == "generate":
            gen = dict(doc.get("generator") or {})
            for key in ("n", "k", "p_in", "p_out", "feature_dim", "feature_shift", "seed"):
                value = getattr(args, key)
                if value is not None:
                    gen[key] = value
            cmd_generate(gen, doc.get("out", "dataset"))
            return EXIT_OK
        if args.command == "sweep" and args.budget is not None:
            doc.setdefault("sweep", {})["budget"] = args.budget
        if args.command == "diagnose":
            diag = doc.setdefault("diagnose", {})
            if args.params:
                diag["params"] = args.params
            if args.source is not None:
                diag["source"] = args.source
        cfg = RunConfig.from_dict(doc)
        result = {"train": cmd_train, "sweep": cmd_sweep, "diagnose": cmd_diagnose}[args.command](cfg)
        print(json.dumps(result, indent=2, sort_keys=True, default=_json_default))
        return EXIT_OK
    except (ConfigError, GraphFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (RuntimeError, FloatingPointError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


if __name__ == "__main__":
    sys.exit(main())
