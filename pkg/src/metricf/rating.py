"""Metric factorization for explicit rating prediction.

Ratings become distances ``Y = r_max - r``; the model predicts

    Y_hat(u, i) = ||P_u - Q_i||^2 + b_u + b_i + tau * mu

and is fit with a confidence-weighted squared loss plus an l2 penalty on the
biases. Positions are kept inside the l2 ball of radius ``l`` by clipping
after every update instead of being regularized.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .dataset import Dataset
from .embeddings import (
    BiasTable, EmbeddingTable, clip_rows, init_params, load_id_maps,
    load_params, sample_mask, save_id_maps, save_params,
)
from .errors import ConfigError, DataFormatError, NumericError
from .optimizer import AdagradState, adagrad_update, sum_by_row

log = logging.getLogger(__name__)

G_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "absolute": np.abs,
    "square": np.square,
    "log": lambda x: np.log1p(np.abs(x)),
}


@dataclass
class RatingConfig:
    k: int = 150
    eta: float = 0.05
    alpha: float = 0.2
    g_kind: str = "absolute"
    lam: float = 0.01
    tau: float = 0.9
    l: float = 1.0
    drop_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 256
    seed: int = 0
    init_std: float = 0.01

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.l <= 0:
            raise ConfigError(f"l must be > 0, got {self.l}")
        if not 0.0 <= self.drop_rate < 1.0:
            raise ConfigError(f"drop_rate must lie in [0, 1), got {self.drop_rate}")
        if self.alpha < 0 or self.lam < 0:
            raise ConfigError("alpha and lam must be >= 0")
        if self.g_kind not in G_FUNCTIONS:
            raise ConfigError(f"unknown g_kind {self.g_kind!r}; expected one of {sorted(G_FUNCTIONS)}")
        if self.eta <= 0 or self.epochs < 0 or self.batch_size < 1 or self.init_std <= 0:
            raise ConfigError("eta, batch_size and init_std must be positive, epochs non-negative")


def rating_to_distance(r, r_max: float):
    r = np.asarray(r, dtype=float)
    if np.any(r > r_max):
        raise DataFormatError(f"rating above r_max={r_max}")
    out = r_max - r
    return float(out) if out.ndim == 0 else out


def distance_to_rating(y, r_min: float, r_max: float):
    out = np.clip(r_max - np.asarray(y, dtype=float), r_min, r_max)
    return float(out) if out.ndim == 0 else out


def rating_confidence(r, r_max: float, alpha: float, g_kind: str = "absolute"):
    """1 + alpha * g(r - r_max / 2): extreme ratings get more weight."""
    try:
        g = G_FUNCTIONS[g_kind]
    except KeyError:
        raise ConfigError(f"unknown g_kind {g_kind!r}") from None
    out = 1.0 + alpha * g(np.asarray(r, dtype=float) - r_max / 2.0)
    return float(out) if out.ndim == 0 else out


def rating_loss_and_grads(P, Q, b_u, b_i, global_term, users, items, Y, c, lam, weights=None):
    """Loss over a batch and per-pair gradients.

    ``weights`` is the per-dimension dropout multiplier (None = no dropout).
    Returns ``(loss, gP, gQ, gbu, gbi)`` where each gradient row belongs to
    the pair at the same position; rows repeat when a user or item occurs
    more than once in the batch.
    """
    diff = P[users] - Q[items]
    wdiff = diff if weights is None else diff * weights
    dist = np.einsum("ij,ij->i", wdiff, diff)
    bu, bi = b_u[users], b_i[items]
    resid = Y - (dist + bu + bi + global_term)
    loss = float(np.dot(c, resid * resid) + lam * (np.dot(bu, bu) + np.dot(bi, bi)))
    dY = -2.0 * c * resid  # dL / dY_hat
    gP = (2.0 * dY)[:, None] * wdiff
    return loss, gP, -gP, dY + 2.0 * lam * bu, dY + 2.0 * lam * bi


def rating_loss(P, Q, b_u, b_i, global_term, users, items, Y, c, lam, weights=None) -> float:
    return rating_loss_and_grads(P, Q, b_u, b_i, global_term, users, items, Y, c, lam, weights)[0]


def rating_gradients(P, Q, b_u, b_i, global_term, users, items, Y, c, lam, weights=None):
    """Dense gradients shaped like P, Q, b_u, b_i (for checking and tooling)."""
    loss, gP, gQ, gbu, gbi = rating_loss_and_grads(P, Q, b_u, b_i, global_term, users, items, Y, c, lam, weights)
    dP, dQ = np.zeros_like(P), np.zeros_like(Q)
    dbu, dbi = np.zeros_like(b_u), np.zeros_like(b_i)
    np.add.at(dP, users, gP)
    np.add.at(dQ, items, gQ)
    np.add.at(dbu, users, gbu)
    np.add.at(dbi, items, gbi)
    return loss, dP, dQ, dbu, dbi


@dataclass
class RatingModel:
    embeddings: EmbeddingTable
    biases: BiasTable
    config: RatingConfig
    r_min: float
    r_max: float
    user_ids: tuple = ()
    item_ids: tuple = ()
    history: list = field(default_factory=list)

    mode = "rating"

    @property
    def n_users(self) -> int:
        return self.embeddings.P.shape[0]

    @property
    def n_items(self) -> int:
        return self.embeddings.Q.shape[0]

    def _check(self, u, i):
        u, i = np.asarray(u), np.asarray(i)
        if np.any((u < 0) | (u >= self.n_users)) or np.any((i < 0) | (i >= self.n_items)):
            raise IndexError(f"user/item index outside [0, {self.n_users}) x [0, {self.n_items})")
        return u, i

    def predict_distance(self, u, i):
        u, i = self._check(u, i)
        diff = self.embeddings.P[u] - self.embeddings.Q[i]
        out = (diff * diff).sum(axis=-1) + self.biases.b_u[u] + self.biases.b_i[i] + self.biases.global_term
        return float(out) if np.ndim(out) == 0 else out

    def predict_rating(self, u, i):
        return distance_to_rating(self.predict_distance(u, i), self.r_min, self.r_max)

    @cached_property
    def _raw_index(self):
        return ({r: n for n, r in enumerate(self.user_ids)}, {r: n for n, r in enumerate(self.item_ids)})

    def predict_raw(self, user_raw: str, item_raw: str) -> float:
        """Predict for raw ids; unseen ids fall back to the bias terms that exist."""
        users, items = self._raw_index
        uidx, iidx = users.get(user_raw), items.get(item_raw)
        if uidx is not None and iidx is not None:
            return self.predict_rating(uidx, iidx)
        y = self.biases.global_term
        y += self.biases.b_u[uidx] if uidx is not None else 0.0
        y += self.biases.b_i[iidx] if iidx is not None else 0.0
        return distance_to_rating(y, self.r_min, self.r_max)

    def save(self, path) -> None:
        save_params(path, self.mode, self.embeddings, self.biases, self.r_min, self.r_max)
        save_id_maps(path, self.user_ids, self.item_ids, {"config": asdict(self.config)})

    @classmethod
    def load(cls, path) -> "RatingModel":
        stored = load_params(path)
        if stored.mode != cls.mode:
            raise DataFormatError(f"{path} holds a {stored.mode!r} model, not {cls.mode!r}")
        side = load_id_maps(path)
        return cls(
            stored.embeddings, stored.biases, RatingConfig(**side.get("config", {})),
            stored.r_min, stored.r_max, tuple(side["user_ids"]), tuple(side["item_ids"]),
        )


def _rmse(model: RatingModel, data: Dataset) -> float:
    err = model.predict_rating(data.users, data.items) - data.values
    return float(np.sqrt(np.mean(err * err)))


def train_rating(train: Dataset, config: RatingConfig | None = None, progress: Callable[[str], None] | None = None) -> RatingModel:
    """Mini-batch Adagrad over shuffled observed ratings.

    Every batch draws a fresh dropout mask, sums per-pair gradients onto the
    touched rows, takes one Adagrad step per parameter and clips the touched
    position rows back into the ball of radius ``l``. ``progress`` receives
    one ``"epoch <n> loss <v> rmse_train <v>"`` line per epoch.
    """
    config = config or RatingConfig()
    if len(train) == 0:
        raise DataFormatError("cannot train on an empty dataset")
    M, N, k = train.n_users, train.n_items, config.k
    emb, biases = init_params(M, N, k, config.seed, config.init_std)
    users, items = train.users, train.items
    Y = rating_to_distance(train.values, train.r_max)
    c = rating_confidence(train.values, train.r_max, config.alpha, config.g_kind)
    biases.mu = float(np.mean(Y))
    biases.tau = config.tau
    model = RatingModel(emb, biases, config, train.r_min, train.r_max, train.user_ids, train.item_ids)

    P, Q, b_u, b_i = emb.P, emb.Q, biases.b_u, biases.b_i
    states = {
        "P": AdagradState.like(P, config.eta, name="P"),
        "Q": AdagradState.like(Q, config.eta, name="Q"),
        "b_u": AdagradState.like(b_u, config.eta, name="b_u"),
        "b_i": AdagradState.like(b_i, config.eta, name="b_i"),
    }
    rng = np.random.default_rng([config.seed, 1])
    n, bs = len(train), config.batch_size
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, bs)):
            idx = perm[start : start + bs]
            mask = sample_mask(k, config.drop_rate, rng)
            weights = None if config.drop_rate == 0.0 else mask.weights()
            bu_idx, bi_idx = users[idx], items[idx]
            loss, gP, gQ, gbu, gbi = rating_loss_and_grads(
                P, Q, b_u, b_i, biases.global_term, bu_idx, bi_idx, Y[idx], c[idx], config.lam, weights
            )
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            total += loss
            rows, g = sum_by_row(bu_idx, gP)
            adagrad_update(P, g, states["P"], rows)
            clip_rows(P, config.l, rows)
            rows_i, g = sum_by_row(bi_idx, gQ)
            adagrad_update(Q, g, states["Q"], rows_i)
            clip_rows(Q, config.l, rows_i)
            adagrad_update(b_u, sum_by_row(bu_idx, gbu)[1], states["b_u"], rows)
            adagrad_update(b_i, sum_by_row(bi_idx, gbi)[1], states["b_i"], rows_i)
        record = {"epoch": epoch, "loss": total / n, "rmse_train": _rmse(model, train)}
        model.history.append(record)
        line = f"epoch {epoch} loss {record['loss']:.6f} rmse_train {record['rmse_train']:.6f}"
        log.debug(line)
        if progress is not None:
            progress(line)
    return model
