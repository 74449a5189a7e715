"""Command-line interface: split, train, evaluate, predict, recommend, reproduce.

Settings come from an optional flat ``key = value`` file (``--config``) and
from flags named after the same keys (``--drop-rate 0.1`` sets
``drop_rate``); flags win over the file. Unknown keys are rejected.

Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import plotting
from .baselines import train_average, train_biased_svd, train_pop
from .dataset import (
    Dataset, SplitSpec, binarize, detect_delimiter, from_raw_with_index, load_dataset,
    load_interactions, random_split, write_interactions,
)
from .errors import ConfigError, MetricFError
from .metrics import EvalReport, evaluate_ranking, evaluate_rating, format_table
from .models import TASK_OF_MODE, load_model
from .ranking import top_n_from_scores, train_ranking
from .rating import train_rating
from .recipes import (
    custom_recipe, get_recipe, ranking_config, rating_config, run_recipe, svd_config,
)

log = logging.getLogger("metricf")

ALGOS = {"rating": ("metricf", "svd", "useravg", "itemavg"), "ranking": ("metricf", "pop")}


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


# key -> (parser, help)
KEYS: dict[str, tuple] = {
    "config": (str, "flat key = value settings file"),
    "task": (str, "rating or ranking"),
    "algo": (str, "metricf (default), svd, useravg, itemavg (rating) or pop (ranking)"),
    "recipe": (str, "ml100k-rating, filmtrust-ranking or custom"),
    "data": (str, "interaction file"),
    "train": (str, "training interaction file"),
    "test": (str, "held-out interaction file"),
    "model": (str, "model file"),
    "pairs": (str, "file of user item pairs to score"),
    "out": (str, "output file (or directory for split/reproduce)"),
    "r_min": (float, "lowest possible rating"),
    "r_max": (float, "highest possible rating"),
    "delimiter": (str, "field delimiter, or auto"),
    "dedup": (str, "keep-last, keep-first or error"),
    "train_fraction": (float, "share of interactions used for training"),
    "seed": (int, "split and initialization seed"),
    "n_repeats": (int, "number of random splits"),
    "k": (int, "embedding dimension"),
    "eta": (float, "Adagrad learning rate"),
    "alpha": (float, "confidence level"),
    "g_kind": (str, "rating confidence shape: absolute, square or log"),
    "lam": (float, "bias l2 penalty (rating)"),
    "tau": (float, "global-bias scale (rating)"),
    "l": (float, "max position norm"),
    "drop_rate": (float, "dimension dropout probability"),
    "epochs": (int, "training epochs"),
    "batch_size": (int, "ratings per batch (rating) or users per block (ranking)"),
    "init_std": (float, "std of the normal initializer"),
    "a": (float, "target distance of unobserved pairs (ranking)"),
    "z": (float, "target distance of observed pairs (ranking)"),
    "svd_k": (int, "BiasedSVD factor dimension"),
    "svd_eta": (float, "BiasedSVD learning rate"),
    "svd_lam": (float, "BiasedSVD l2 penalty"),
    "svd_epochs": (int, "BiasedSVD epochs"),
    "svd_batch_size": (int, "BiasedSVD batch size"),
    "svd_init_std": (float, "BiasedSVD initializer std"),
    "cutoffs": (_int_list, "ranking cutoffs, comma separated"),
    "n": (int, "list length for recommend"),
    "users": (_str_list, "raw user ids, comma separated (default: all)"),
    "sweep": (str, "key=v1,v2,... rerun the proposed model per value"),
    "jobs": (int, "repeats run in parallel"),
    "figures": (_bool, "write figures next to the report"),
    "baselines": (_bool, "also run the baselines"),
}

DATA_KEYS = ("r_min", "r_max", "delimiter", "dedup")
SPLIT_KEYS = ("train_fraction", "seed", "n_repeats")
MODEL_KEYS = (
    "k", "eta", "alpha", "g_kind", "lam", "tau", "l", "drop_rate", "epochs", "batch_size", "seed", "init_std",
    "a", "z", "svd_k", "svd_eta", "svd_lam", "svd_epochs", "svd_batch_size", "svd_init_std",
)

COMMANDS = {
    "split": ("write train/test files for every repeat", ("data", "out") + DATA_KEYS + SPLIT_KEYS),
    "train": ("fit a model and save it", ("task", "algo", "data", "model") + DATA_KEYS + MODEL_KEYS),
    "evaluate": ("score a saved model on held-out data", ("task", "model", "train", "test", "cutoffs", "out") + DATA_KEYS),
    "predict": ("predict ratings for user item pairs", ("model", "pairs", "out", "delimiter")),
    "recommend": ("top-n lists from a ranking model", ("model", "train", "users", "n", "out", "delimiter")),
    "reproduce": (
        "repeated-split experiment with baselines and threshold checks",
        ("recipe", "task", "data", "out", "cutoffs", "sweep", "jobs", "figures", "baselines")
        + DATA_KEYS + SPLIT_KEYS + MODEL_KEYS,
    ),
}

DEFAULTS = {
    "r_min": 1.0, "r_max": 5.0, "delimiter": "auto", "dedup": "keep-last",
    "train_fraction": 0.9, "seed": 0, "n_repeats": 5, "cutoffs": (5, 10), "n": 10,
    "jobs": 1, "figures": True, "baselines": True, "algo": "metricf",
}


def parse_value(key: str, text):
    if key not in KEYS:
        raise ConfigError(f"unknown key {key!r}")
    if not isinstance(text, str):
        return text
    try:
        return KEYS[key][0](text.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def read_config_file(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "config":
            raise ConfigError(f"{path}:{lineno}: config files cannot include other config files")
        out[key] = parse_value(key, value)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metricf", description="Metric factorization recommender.")
    parser.add_argument("-q", "--quiet", action="store_true", help="no progress output on stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, keys) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        for key in dict.fromkeys(("config",) + keys):
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar=key.upper(), help=KEYS[key][1])
    return parser


def resolve(args: argparse.Namespace) -> tuple[dict, set]:
    """Defaults, then the config file, then flags.

    Also returns the keys set by the file or flags, so recipes can keep
    their own defaults for everything else.
    """
    keys = COMMANDS[args.command][1]
    cfg = {k: v for k, v in DEFAULTS.items() if k in keys}
    explicit = set()
    if args.config:
        for key, value in read_config_file(args.config).items():
            if key in keys:
                cfg[key] = value
                explicit.add(key)
            else:
                log.warning("config key %r does not apply to %s; ignored", key, args.command)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = parse_value(key, value)
            explicit.add(key)
    return cfg, explicit


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError("missing required setting(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _existing(path: str) -> str:
    if not Path(path).exists():
        raise FileNotFoundError(f"{path}: no such file")
    return path


def _load(cfg: dict, key: str = "data") -> Dataset:
    return load_dataset(_existing(cfg[key]), cfg.get("r_min", 1.0), cfg.get("r_max", 5.0),
                        cfg.get("delimiter", "auto"), cfg.get("dedup", "keep-last"))


def _emit(text: str, out: str | None = None) -> None:
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _echo(cfg: dict) -> None:
    log.info("config %s", json.dumps(cfg, default=list, sort_keys=True))


def _progress(line: str) -> None:
    log.info(line)


def _model_keys(cfg: dict) -> dict:
    return {k: cfg[k] for k in MODEL_KEYS if k in cfg}


# commands


def cmd_split(cfg: dict, explicit: set) -> int:
    _require(cfg, "data", "out")
    spec = SplitSpec(cfg["train_fraction"], cfg["seed"], cfg["n_repeats"])
    ds = _load(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    for r in range(spec.n_repeats):
        train, test = random_split(ds, spec, r)
        write_interactions(train, out / f"split{r}.train.tsv")
        write_interactions(test, out / f"split{r}.test.tsv")
        print(f"split {r}\ttrain {len(train)}\ttest {len(test)}")
    (out / "split.json").write_text(json.dumps(cfg, indent=2, default=list))
    return 0


def cmd_train(cfg: dict, explicit: set) -> int:
    _require(cfg, "task", "data", "model")
    task, algo = cfg["task"], cfg["algo"]
    if task not in ALGOS:
        raise ConfigError(f"task must be rating or ranking, got {task!r}")
    if algo not in ALGOS[task]:
        raise ConfigError(f"algo {algo!r} is not available for task {task!r}; choose from {ALGOS[task]}")
    params = _model_keys(cfg)
    # validate hyperparameters before touching the data
    if algo == "metricf":
        model_cfg = rating_config(params) if task == "rating" else ranking_config(params)
    elif algo == "svd":
        model_cfg = svd_config(params)
    else:
        model_cfg = None
    _echo({**cfg, **({"model_config": asdict(model_cfg)} if model_cfg else {})})
    ds = _load(cfg)
    if task == "ranking":
        ds = binarize(ds)
    if algo == "metricf":
        model = (train_rating if task == "rating" else train_ranking)(ds, model_cfg, _progress)
    elif algo == "svd":
        model = train_biased_svd(ds, model_cfg)
        for h in model.history:
            _progress(f"epoch {h['epoch']} loss {h['loss']:.6f}")
    elif algo in ("useravg", "itemavg"):
        model = train_average(ds, algo[:-3])
    else:
        model = train_pop(ds)
    model.save(cfg["model"])
    print(f"saved {model.mode} model to {cfg['model']} ({ds.n_users} users, {ds.n_items} items, {len(ds)} interactions)")
    return 0


def _reference(model) -> Dataset:
    """Empty dataset carrying the model's index maps."""
    r_min, r_max = getattr(model, "r_min", 0.0), getattr(model, "r_max", 1.0)
    return Dataset([], [], [], model.user_ids, model.item_ids, r_min, r_max)


def _mapped(path: str, reference: Dataset, delimiter: str) -> tuple[Dataset, int]:
    rows = load_interactions(_existing(path), delimiter)
    ds = from_raw_with_index(rows, reference)
    return ds, len(rows) - len(ds)


def _model_task(model, requested: str | None) -> str:
    task = TASK_OF_MODE[model.mode]
    if requested is not None and requested != task:
        raise ConfigError(f"model mode {model.mode!r} answers the {task} task, not {requested!r}")
    return task


def cmd_evaluate(cfg: dict, explicit: set) -> int:
    _require(cfg, "model", "test")
    model = load_model(_existing(cfg["model"]))
    task = _model_task(model, cfg.get("task"))
    _echo(cfg)
    ref = _reference(model)
    test, skipped = _mapped(cfg["test"], ref, cfg["delimiter"])
    if task == "rating":
        metrics = evaluate_rating(model, test)
    else:
        _require(cfg, "train")
        train, _ = _mapped(cfg["train"], ref, cfg["delimiter"])
        metrics = evaluate_ranking(model, train, test, cfg["cutoffs"])
    report = EvalReport(cutoffs=cfg["cutoffs"] if task == "ranking" else ())
    report.add(metrics)
    print(format_table({model.mode: report}))
    if skipped:
        print(f"skipped {skipped} test rows with ids unknown to the model")
    if cfg.get("out"):
        doc = {**report.summary(), "config": cfg, "skipped_unknown": skipped}
        Path(cfg["out"]).write_text(json.dumps(doc, indent=2, default=list))
    return 0


def _read_pairs(path: str, delimiter: str) -> list[tuple[str, str]]:
    pairs = []
    for lineno, raw in enumerate(Path(_existing(path)).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        delim = detect_delimiter(line) if delimiter == "auto" else delimiter
        fields = line.split(delim) if delim else line.split()
        if len(fields) < 2:
            raise ConfigError(f"{path}:{lineno}: expected at least user and item")
        pairs.append((fields[0].strip(), fields[1].strip()))
    return pairs


def cmd_predict(cfg: dict, explicit: set) -> int:
    _require(cfg, "model", "pairs")
    model = load_model(_existing(cfg["model"]))
    _model_task(model, "rating")
    uidx = {r: n for n, r in enumerate(model.user_ids)}
    iidx = {r: n for n, r in enumerate(model.item_ids)}
    lines = []
    for u, i in _read_pairs(cfg["pairs"], cfg.get("delimiter", "auto")):
        if u in uidx and i in iidx:
            value = model.predict_rating(uidx[u], iidx[i])
        else:
            value = model.predict_raw(u, i)
        lines.append(f"{u}\t{i}\t{value:.6f}")
    _emit("\n".join(lines), cfg.get("out"))
    return 0


def cmd_recommend(cfg: dict, explicit: set) -> int:
    _require(cfg, "model")
    model = load_model(_existing(cfg["model"]))
    _model_task(model, "ranking")
    n = cfg["n"]
    exclude = [np.zeros(0, dtype=np.int64)] * len(model.user_ids)
    if cfg.get("train"):
        train, _ = _mapped(cfg["train"], _reference(model), cfg.get("delimiter", "auto"))
        exclude = train.positives_by_user()
    index = {r: n for n, r in enumerate(model.user_ids)}
    users = cfg.get("users") or model.user_ids
    lines = []
    for raw in users:
        if raw not in index:
            raise ConfigError(f"user {raw!r} is unknown to the model")
        u = index[raw]
        scores = model.score_user(u)
        for rank, i in enumerate(top_n_from_scores(scores, n, exclude[u]), start=1):
            lines.append(f"{raw}\t{model.item_ids[i]}\t{rank}\t{scores[i]:.6f}")
    _emit("\n".join(lines), cfg.get("out"))
    return 0


def _parse_sweep(text: str) -> tuple[str, list]:
    if "=" not in text:
        raise ConfigError(f"sweep must look like key=v1,v2, got {text!r}")
    key, values = (s.strip() for s in text.split("=", 1))
    if key not in MODEL_KEYS:
        raise ConfigError(f"cannot sweep {key!r}; sweepable keys: {', '.join(MODEL_KEYS)}")
    parsed = [parse_value(key, v) for v in values.split(",") if v.strip()]
    if not parsed:
        raise ConfigError("sweep needs at least one value")
    return key, parsed


def default_data_dir() -> Path:
    return Path(os.environ.get("METRICF_DATA", "data"))


def cmd_reproduce(cfg: dict, explicit: set) -> int:
    _require(cfg, "recipe")
    name = cfg["recipe"]
    tunable = MODEL_KEYS + SPLIT_KEYS + DATA_KEYS + ("cutoffs",)
    if name == "custom":
        _require(cfg, "task", "data")
        recipe = custom_recipe(cfg["task"], {k: v for k, v in cfg.items() if k in tunable})
        overrides = {}
    else:
        recipe = get_recipe(name)
        if cfg.get("task") not in (None, recipe.task):
            raise ConfigError(f"recipe {name} is a {recipe.task} recipe, not {cfg['task']!r}")
        # the recipe's own defaults stand unless set explicitly
        overrides = {k: cfg[k] for k in tunable if k in explicit}
    sweep = _parse_sweep(cfg["sweep"]) if cfg.get("sweep") else None
    params = {**recipe.params, **overrides}
    # surface config errors before any data is read
    (rating_config if recipe.task == "rating" else ranking_config)(params)
    data = cfg.get("data") or str(default_data_dir() / recipe.data_file)
    if not Path(data).exists():
        hint = " (run scripts/fetch_data.py)" if "ml-100k" in data else ""
        raise FileNotFoundError(f"{data}: dataset not found{hint}")
    ds = load_dataset(data, params.get("r_min", 1.0), params.get("r_max", 5.0),
                      params.get("delimiter", "auto"), params.get("dedup", "keep-last"))
    _echo({**cfg, "data": data, "effective": params})
    result = run_recipe(recipe, ds, overrides, cfg["baselines"], sweep, cfg["jobs"], _progress)
    out = Path(cfg.get("out") or Path("reports") / recipe.name)
    write_report(result, out, recipe.name, {**cfg, "data": data}, cfg["figures"])
    return 0


def write_report(result, out: Path, title: str, cfg: dict, figures: bool = True) -> None:
    out.mkdir(parents=True, exist_ok=True)
    doc = result.to_dict()
    doc["run"] = cfg
    table = format_table(result.reports)
    lines = [table, ""]
    if result.checks:
        lines += [c.line() for c in result.checks] + [""]
    if result.sweep:
        metric = "RMSE" if result.task == "rating" else "NDCG"
        lines.append(f"sweep over {result.sweep['key']} ({metric}):")
        for v, rep in zip(result.sweep["values"], result.sweep["reports"]):
            s = rep.summary()[metric]
            lines.append(f"  {result.sweep['key']}={v}\t{s['mean']:.4f} +- {s['std']:.4f}")
        lines.append("")
    lines.append(f"{doc['n_repeats']} repeats in {result.seconds:.0f} s")
    text = "\n".join(lines)
    print(text)
    (out / "report.txt").write_text(text + "\n", encoding="utf-8")
    if figures:
        doc["figures"] = [str(p.name) for p in _figures(result, out, title)]
    (out / "report.json").write_text(json.dumps(doc, indent=2, default=list), encoding="utf-8")
    print(f"report written to {out}/")


def _figures(result, out: Path, title: str) -> list[Path]:
    paths = [
        plotting.metric_bars(result.reports, out / "metrics.png", title),
        plotting.training_curves(result.histories, out / "training_loss.png"),
    ]
    if result.task == "rating":
        paths.append(plotting.training_curves(result.histories, out / "training_rmse.png", key="rmse_train"))
    if result.sweep:
        metric = "RMSE" if result.task == "rating" else "NDCG"
        key = result.sweep["key"]
        paths.append(plotting.sensitivity(key, result.sweep["values"], result.sweep["reports"], metric,
                                          out / f"sensitivity_{key}.png"))
    return paths


HANDLERS = {
    "split": cmd_split, "train": cmd_train, "evaluate": cmd_evaluate,
    "predict": cmd_predict, "recommend": cmd_recommend, "reproduce": cmd_reproduce,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        cfg, explicit = resolve(args)
        return HANDLERS[args.command](cfg, explicit)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"metricf {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (MetricFError, OSError, ValueError) as exc:
        print(f"metricf {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
