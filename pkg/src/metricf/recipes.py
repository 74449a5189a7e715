"""Repeated-split experiments: built-in recipes, baselines on the same splits,
threshold checks and parameter sweeps."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

from .baselines import SvdConfig, train_average, train_biased_svd, train_pop
from .dataset import Dataset, SplitSpec, binarize, random_split
from .errors import ConfigError, ShapeError
from .metrics import EvalReport, evaluate_ranking, evaluate_rating
from .ranking import RankingConfig, train_ranking
from .rating import RatingConfig, train_rating

log = logging.getLogger(__name__)

MODEL_NAME = "MetricF"
RATING_BASELINES = ("UserAverage", "ItemAverage", "BiasedSVD")
RANKING_BASELINES = ("POP",)


@dataclass(frozen=True)
class ShapeCheck:
    """Inclusive ranges for user, item and interaction counts."""

    users: tuple[int, int]
    items: tuple[int, int]
    interactions: tuple[int, int]

    def verify(self, ds: Dataset) -> None:
        got = {"users": ds.n_users, "items": ds.n_items, "interactions": len(ds)}
        for key, value in got.items():
            lo, hi = getattr(self, key)
            if not lo <= value <= hi:
                raise ShapeError(f"dataset has {value} {key}, recipe expects [{lo}, {hi}]")


@dataclass(frozen=True)
class Threshold:
    """``metric`` of the model compared against ``value``.

    With ``baseline`` set, the check is on the gap instead: model minus
    baseline when higher is better, baseline minus model otherwise, and it
    must reach ``value``.
    """

    metric: str
    value: float
    higher_is_better: bool
    baseline: str | None = None

    def label(self) -> str:
        if self.baseline is None:
            return f"{MODEL_NAME} {self.metric} {'>=' if self.higher_is_better else '<='} {self.value:g}"
        return f"{MODEL_NAME} {self.metric} gap over {self.baseline} >= {self.value:g}"

    def evaluate(self, reports: dict[str, EvalReport]) -> "CheckResult":
        mine = reports[MODEL_NAME].mean(self.metric)
        if self.baseline is None:
            ok = mine >= self.value if self.higher_is_better else mine <= self.value
            return CheckResult(self.label(), mine, ok)
        other = reports[self.baseline].mean(self.metric)
        gap = mine - other if self.higher_is_better else other - mine
        return CheckResult(self.label(), gap, gap >= self.value)


@dataclass(frozen=True)
class CheckResult:
    label: str
    observed: float
    passed: bool

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.label}  (observed {self.observed:.4f})"


@dataclass(frozen=True)
class Recipe:
    name: str
    task: str  # "rating" or "ranking"
    data_file: str  # relative to the data directory
    params: dict  # flat run config defaults
    shape: ShapeCheck | None = None
    thresholds: tuple[Threshold, ...] = ()


ML100K_RATING = Recipe(
    name="ml100k-rating",
    task="rating",
    data_file="ml-100k/u.data",
    params=dict(
        train_fraction=0.9, n_repeats=5, r_min=1.0, r_max=5.0,
        k=150, drop_rate=0.05, tau=0.9, l=1.0, lam=0.01, alpha=0.2, g_kind="absolute", eta=0.05,
        epochs=30, batch_size=256,
    ),
    shape=ShapeCheck((943, 943), (1682, 1682), (100000, 100000)),
    thresholds=(
        Threshold("RMSE", 0.905, higher_is_better=False),
        Threshold("MAE", 0.710, higher_is_better=False),
        Threshold("RMSE", 0.010, higher_is_better=False, baseline="BiasedSVD"),
    ),
)

FILMTRUST_RANKING = Recipe(
    name="filmtrust-ranking",
    task="ranking",
    data_file="filmtrust/ratings.txt",
    params=dict(
        train_fraction=0.8, n_repeats=5, r_min=0.5, r_max=4.0,
        k=200, a=2.25, z=0.0, alpha=4.0, eta=0.05, l=1.0, drop_rate=0.0, epochs=30, batch_size=64,
    ),
    # counts are only known rounded (1.5K users, 2.1K items, 35.5K interactions)
    shape=ShapeCheck((1400, 1600), (2000, 2200), (34000, 37000)),
    thresholds=(
        Threshold("NDCG", 0.680, higher_is_better=True),
        Threshold("P@10", 0.350, higher_is_better=True),
        Threshold("R@10", 0.640, higher_is_better=True),
        Threshold("NDCG", 0.030, higher_is_better=True, baseline="POP"),
    ),
)

RECIPES = {r.name: r for r in (ML100K_RATING, FILMTRUST_RANKING)}


def get_recipe(name: str) -> Recipe:
    try:
        return RECIPES[name]
    except KeyError:
        raise ConfigError(f"unknown recipe {name!r}; known: {', '.join(RECIPES)} (or 'custom')") from None


def _pick(cls, params: dict):
    names = {f.name for f in fields(cls)}
    return cls(**{k: v for k, v in params.items() if k in names})


def rating_config(params: dict) -> RatingConfig:
    return _pick(RatingConfig, params)


def ranking_config(params: dict) -> RankingConfig:
    return _pick(RankingConfig, params)


def svd_config(params: dict) -> SvdConfig:
    """SVD keys carry an ``svd_`` prefix; seed is shared."""
    sub = {k[4:]: v for k, v in params.items() if k.startswith("svd_")}
    if "seed" in params:
        sub["seed"] = params["seed"]
    return _pick(SvdConfig, sub)


@dataclass
class RepeatResult:
    metrics: dict[str, dict[str, float]]  # model name -> metric map
    history: list[dict]


def run_repeat(task: str, dataset: Dataset, params: dict, repeat: int, baselines: bool = True,
               progress: Callable[[str], None] | None = None) -> RepeatResult:
    """Split, train and evaluate every model on one repeat."""
    spec = SplitSpec(params.get("train_fraction", 0.9), params.get("seed", 0), params.get("n_repeats", 5))
    if task == "ranking":
        dataset = binarize(dataset)
    train, test = random_split(dataset, spec, repeat)
    out: dict[str, dict[str, float]] = {}
    if task == "rating":
        model = train_rating(train, rating_config(params), progress)
        out[MODEL_NAME] = evaluate_rating(model, test)
        if baselines:
            out["UserAverage"] = evaluate_rating(train_average(train, "user"), test)
            out["ItemAverage"] = evaluate_rating(train_average(train, "item"), test)
            out["BiasedSVD"] = evaluate_rating(train_biased_svd(train, svd_config(params)), test)
    elif task == "ranking":
        cutoffs = tuple(params.get("cutoffs", (5, 10)))
        model = train_ranking(train, ranking_config(params), progress)
        out[MODEL_NAME] = evaluate_ranking(model, train, test, cutoffs)
        if baselines:
            out["POP"] = evaluate_ranking(train_pop(train), train, test, cutoffs)
    else:
        raise ConfigError(f"task must be 'rating' or 'ranking', got {task!r}")
    return RepeatResult(out, model.history)


def _run_repeat_job(args):
    task, dataset, params, repeat, baselines = args
    return run_repeat(task, dataset, params, repeat, baselines)


@dataclass
class ExperimentResult:
    task: str
    params: dict
    reports: dict[str, EvalReport]
    histories: list[list[dict]]
    checks: list[CheckResult] = field(default_factory=list)
    sweep: dict = field(default_factory=dict)  # {"key": k, "values": [...], "reports": [EvalReport, ...]}
    seconds: float = 0.0

    def to_dict(self) -> dict:
        doc = {name: rep.summary() for name, rep in self.reports.items()}
        doc["config"] = dict(self.params)
        doc["n_repeats"] = next(iter(self.reports.values())).n_repeats
        doc["checks"] = [asdict(c) for c in self.checks]
        if self.sweep:
            doc["sweep"] = {
                "key": self.sweep["key"],
                "values": list(self.sweep["values"]),
                "results": [rep.summary() for rep in self.sweep["reports"]],
            }
        doc["seconds"] = round(self.seconds, 1)
        return doc


def run_experiment(task: str, dataset: Dataset, params: dict, baselines: bool = True, jobs: int = 1,
                   progress: Callable[[str], None] | None = None) -> ExperimentResult:
    """All repeats of one configuration; repeats are independent and may run in parallel."""
    start = time.time()
    n = int(params.get("n_repeats", 5))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_repeat_job, [(task, dataset, params, r, baselines) for r in range(n)]))
    else:
        results = []
        for r in range(n):
            if progress is not None:
                progress(f"repeat {r + 1}/{n}")
            results.append(run_repeat(task, dataset, params, r, baselines, progress))
    cutoffs = tuple(params.get("cutoffs", (5, 10))) if task == "ranking" else ()
    reports: dict[str, EvalReport] = {}
    for res in results:
        for name, metrics in res.metrics.items():
            reports.setdefault(name, EvalReport(cutoffs=cutoffs)).add(metrics)
    return ExperimentResult(task, dict(params), reports, [r.history for r in results], seconds=time.time() - start)


def run_recipe(recipe: Recipe, dataset: Dataset, overrides: dict | None = None, baselines: bool = True,
               sweep: tuple[str, list] | None = None, jobs: int = 1,
               progress: Callable[[str], None] | None = None) -> ExperimentResult:
    """Run a recipe (overrides win over its defaults) and score its thresholds.

    ``sweep=(key, values)`` additionally reruns the proposed model alone for
    each value of ``key`` on the same splits.
    """
    start = time.time()
    if recipe.shape is not None:
        recipe.shape.verify(dataset)
    params = {**recipe.params, **(overrides or {})}
    result = run_experiment(recipe.task, dataset, params, baselines, jobs, progress)
    result.checks = [t.evaluate(result.reports) for t in recipe.thresholds if t.baseline is None or t.baseline in result.reports]
    if sweep is not None:
        key, values = sweep
        reps = []
        for v in values:
            if progress is not None:
                progress(f"sweep {key}={v}")
            sub = run_experiment(recipe.task, dataset, {**params, key: v}, False, jobs, progress)
            reps.append(sub.reports[MODEL_NAME])
        result.sweep = {"key": key, "values": list(values), "reports": reps}
    result.seconds = time.time() - start
    return result


def custom_recipe(task: str, params: dict) -> Recipe:
    """Recipe without shape checks or thresholds, for other datasets."""
    if task not in ("rating", "ranking"):
        raise ConfigError(f"custom recipes need task 'rating' or 'ranking', got {task!r}")
    return Recipe(name="custom", task=task, data_file="", params=dict(params))
