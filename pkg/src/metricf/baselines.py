"""Reference models for relative comparisons: averages, popularity, biased SVD."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import Dataset
from .embeddings import (
    BiasTable, EmbeddingTable, load_id_maps, load_params, save_id_maps, save_params,
)
from .errors import ConfigError, DataFormatError, NumericError
from .optimizer import AdagradState, adagrad_update, sum_by_row
from .ranking import top_n_from_scores


def _means(index: np.ndarray, values: np.ndarray, size: int, fallback: float):
    sums = np.bincount(index, weights=values, minlength=size)
    counts = np.bincount(index, minlength=size)
    out = np.full(size, fallback)
    seen = counts > 0
    out[seen] = sums[seen] / counts[seen]
    return out


@dataclass
class AverageModel:
    """Predicts a user's (or item's) mean training rating."""

    by: str  # "user" or "item"
    means: np.ndarray
    global_mean: float
    r_min: float = 1.0
    r_max: float = 5.0
    user_ids: tuple = ()
    item_ids: tuple = ()

    @property
    def mode(self) -> str:
        return f"{self.by}avg"

    def predict_rating(self, u, i):
        idx = np.asarray(u if self.by == "user" else i)
        out = self.means[idx]
        return float(out) if out.ndim == 0 else out

    def predict_raw(self, user_raw: str, item_raw: str) -> float:
        ids = self.user_ids if self.by == "user" else self.item_ids
        key = user_raw if self.by == "user" else item_raw
        try:
            return float(self.means[ids.index(key)])
        except ValueError:
            return self.global_mean

    def save(self, path) -> None:
        M, N = len(self.user_ids), len(self.item_ids)
        b_u = self.means if self.by == "user" else np.zeros(M)
        b_i = self.means if self.by == "item" else np.zeros(N)
        emb = EmbeddingTable(np.zeros((M, 0)), np.zeros((N, 0)))
        save_params(path, self.mode, emb, BiasTable(b_u, b_i, self.global_mean, 1.0), self.r_min, self.r_max)
        save_id_maps(path, self.user_ids, self.item_ids)

    @classmethod
    def load(cls, path) -> "AverageModel":
        stored = load_params(path)
        if stored.mode not in ("useravg", "itemavg"):
            raise DataFormatError(f"{path} holds a {stored.mode!r} model, not an average model")
        side = load_id_maps(path)
        by = stored.mode[:-3]
        b = stored.biases
        means = b.b_u if by == "user" else b.b_i
        return cls(by, means, b.mu, stored.r_min, stored.r_max, tuple(side["user_ids"]), tuple(side["item_ids"]))


def train_average(train: Dataset, by: str = "user") -> AverageModel:
    if by not in ("user", "item"):
        raise ConfigError(f"average mode must be 'user' or 'item', got {by!r}")
    if len(train) == 0:
        raise DataFormatError("cannot fit averages on an empty dataset")
    g = float(np.mean(train.values))
    if by == "user":
        means = _means(train.users, train.values, train.n_users, g)
    else:
        means = _means(train.items, train.values, train.n_items, g)
    return AverageModel(by, means, g, train.r_min, train.r_max, train.user_ids, train.item_ids)


def average_predict(train: Dataset, mode: str, u: int, i: int) -> float:
    return train_average(train, mode).predict_rating(u, i)


@dataclass
class PopModel:
    counts: np.ndarray
    user_ids: tuple = ()
    item_ids: tuple = ()

    mode = "pop"

    def score_users(self, users) -> np.ndarray:
        # lower ranks first, so negate popularity
        return np.broadcast_to(-self.counts.astype(float), (len(users), len(self.counts)))

    def score_user(self, u: int) -> np.ndarray:
        return -self.counts.astype(float)

    def recommend_top_n(self, u: int, n: int, exclude=()) -> list[int]:
        return top_n_from_scores(self.score_user(u), n, exclude)

    def save(self, path) -> None:
        M, N = len(self.user_ids), len(self.counts)
        emb = EmbeddingTable(np.zeros((M, 0)), np.zeros((N, 0)))
        save_params(path, self.mode, emb, BiasTable(np.zeros(M), self.counts.astype(float)), 0.0, 1.0)
        save_id_maps(path, self.user_ids, self.item_ids)

    @classmethod
    def load(cls, path) -> "PopModel":
        stored = load_params(path)
        if stored.mode != cls.mode:
            raise DataFormatError(f"{path} holds a {stored.mode!r} model, not 'pop'")
        side = load_id_maps(path)
        counts = stored.biases.b_i.astype(np.int64)
        return cls(counts, tuple(side["user_ids"]), tuple(side["item_ids"]))


def train_pop(train: Dataset) -> PopModel:
    observed = train.values > 0
    counts = np.bincount(train.items[observed], minlength=train.n_items)
    return PopModel(counts, train.user_ids, train.item_ids)


def pop_rank(train: Dataset, u: int, n: int) -> list[int]:
    exclude = train.items[(train.users == u) & (train.values > 0)]
    return train_pop(train).recommend_top_n(u, n, exclude)


@dataclass
class SvdConfig:
    k: int = 50
    eta: float = 0.05
    lam: float = 0.1
    epochs: int = 30
    batch_size: int = 256
    seed: int = 0
    init_std: float = 0.01

    def __post_init__(self):
        if self.k < 1 or self.eta <= 0 or self.lam < 0 or self.batch_size < 1 or self.init_std <= 0:
            raise ConfigError("invalid biased-SVD configuration")


def svd_loss_and_grads(P, Q, b_u, b_i, mu, users, items, r, lam):
    """Squared error plus lam * (|p_u|^2 + |q_i|^2 + b_u^2 + b_i^2) per pair."""
    pu, qi = P[users], Q[items]
    bu, bi = b_u[users], b_i[items]
    resid = r - (mu + bu + bi + np.einsum("ij,ij->i", pu, qi))
    loss = float(
        np.dot(resid, resid)
        + lam * (np.sum(pu * pu) + np.sum(qi * qi) + np.dot(bu, bu) + np.dot(bi, bi))
    )
    d = -2.0 * resid
    gP = d[:, None] * qi + 2.0 * lam * pu
    gQ = d[:, None] * pu + 2.0 * lam * qi
    return loss, gP, gQ, d + 2.0 * lam * bu, d + 2.0 * lam * bi


@dataclass
class BiasedSvdModel:
    embeddings: EmbeddingTable
    biases: BiasTable  # mu holds the global mean rating, tau = 1
    config: SvdConfig
    r_min: float
    r_max: float
    user_ids: tuple = ()
    item_ids: tuple = ()
    history: list = field(default_factory=list)

    mode = "svd"

    def predict_rating(self, u, i):
        u, i = np.asarray(u), np.asarray(i)
        P, Q = self.embeddings.P, self.embeddings.Q
        out = self.biases.mu + self.biases.b_u[u] + self.biases.b_i[i] + (P[u] * Q[i]).sum(axis=-1)
        out = np.clip(out, self.r_min, self.r_max)
        return float(out) if out.ndim == 0 else out

    def predict_raw(self, user_raw: str, item_raw: str) -> float:
        """Raw-id prediction; unseen ids contribute no factor or bias term."""
        u = self.user_ids.index(user_raw) if user_raw in self.user_ids else None
        i = self.item_ids.index(item_raw) if item_raw in self.item_ids else None
        if u is not None and i is not None:
            return self.predict_rating(u, i)
        y = self.biases.mu
        y += self.biases.b_u[u] if u is not None else 0.0
        y += self.biases.b_i[i] if i is not None else 0.0
        return float(np.clip(y, self.r_min, self.r_max))

    def save(self, path) -> None:
        save_params(path, self.mode, self.embeddings, self.biases, self.r_min, self.r_max)
        save_id_maps(path, self.user_ids, self.item_ids, {"config": asdict(self.config)})

    @classmethod
    def load(cls, path) -> "BiasedSvdModel":
        stored = load_params(path)
        if stored.mode != cls.mode:
            raise DataFormatError(f"{path} holds a {stored.mode!r} model, not 'svd'")
        side = load_id_maps(path)
        return cls(stored.embeddings, stored.biases, SvdConfig(**side.get("config", {})),
                   stored.r_min, stored.r_max, tuple(side["user_ids"]), tuple(side["item_ids"]))


def train_biased_svd(train: Dataset, config: SvdConfig | None = None) -> BiasedSvdModel:
    """Mini-batch Adagrad on the regularized squared error, same loop shape as
    the metric model so comparisons isolate the dot product vs. distance."""
    config = config or SvdConfig()
    if len(train) == 0:
        raise DataFormatError("cannot train on an empty dataset")
    rng_init = np.random.default_rng(config.seed)
    M, N, k = train.n_users, train.n_items, config.k
    P = rng_init.normal(0.0, config.init_std, (M, k))
    Q = rng_init.normal(0.0, config.init_std, (N, k))
    b_u, b_i = np.zeros(M), np.zeros(N)
    mu = float(np.mean(train.values))
    model = BiasedSvdModel(EmbeddingTable(P, Q), BiasTable(b_u, b_i, mu, 1.0), config,
                           train.r_min, train.r_max, train.user_ids, train.item_ids)
    states = [AdagradState.like(x, config.eta, name=n) for x, n in ((P, "P"), (Q, "Q"), (b_u, "b_u"), (b_i, "b_i"))]
    rng = np.random.default_rng([config.seed, 1])
    users, items, r = train.users, train.items, train.values
    n = len(train)
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start : start + config.batch_size]
            bu_idx, bi_idx = users[idx], items[idx]
            loss, gP, gQ, gbu, gbi = svd_loss_and_grads(P, Q, b_u, b_i, mu, bu_idx, bi_idx, r[idx], config.lam)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            total += loss
            rows_u, g = sum_by_row(bu_idx, gP)
            adagrad_update(P, g, states[0], rows_u)
            rows_i, g = sum_by_row(bi_idx, gQ)
            adagrad_update(Q, g, states[1], rows_i)
            adagrad_update(b_u, sum_by_row(bu_idx, gbu)[1], states[2], rows_u)
            adagrad_update(b_i, sum_by_row(bi_idx, gbi)[1], states[3], rows_i)
        model.history.append({"epoch": epoch, "loss": total / n})
    return model


def svd_predict(model: BiasedSvdModel, u, i):
    return model.predict_rating(u, i)
