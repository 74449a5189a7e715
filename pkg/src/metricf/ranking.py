"""Metric factorization for implicit-feedback top-N ranking.

Every (user, item) cell is supervised: observed pairs are pulled to distance
``z`` and unobserved ones pushed to ``a`` (``a > z``), with observed pairs
weighted by ``1 + alpha``. No bias terms; positions are clipped to the l2
ball of radius ``l``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .dataset import Dataset
from .embeddings import (
    EmbeddingTable, clip_rows, init_params, load_id_maps, load_params,
    pairwise_sq_distances, sample_mask, save_id_maps, save_params,
)
from .errors import ConfigError, DataFormatError, NumericError
from .optimizer import AdagradState, adagrad_update

log = logging.getLogger(__name__)


@dataclass
class RankingConfig:
    k: int = 200
    eta: float = 0.05
    alpha: float = 4.0
    a: float = 2.25
    z: float = 0.0
    l: float = 1.0
    drop_rate: float = 0.0
    epochs: int = 30
    batch_size: int = 64  # users per block; each block covers all items
    seed: int = 0
    init_std: float = 0.01

    def __post_init__(self):
        if not self.a > self.z >= 0:
            raise ConfigError(f"need a > z >= 0, got a={self.a}, z={self.z}")
        if self.k < 1 or self.l <= 0:
            raise ConfigError(f"need k >= 1 and l > 0, got k={self.k}, l={self.l}")
        if not 0.0 <= self.drop_rate < 1.0:
            raise ConfigError(f"drop_rate must lie in [0, 1), got {self.drop_rate}")
        if self.alpha < 0 or self.eta <= 0 or self.batch_size < 1 or self.epochs < 0 or self.init_std <= 0:
            raise ConfigError("alpha >= 0, eta > 0, batch_size >= 1, epochs >= 0 and init_std > 0 required")


def implicit_to_distance(r, a: float, z: float):
    if not a > z:
        raise ConfigError(f"need a > z, got a={a}, z={z}")
    r = np.asarray(r, dtype=float)
    out = a * (1.0 - r) + z * r
    return float(out) if out.ndim == 0 else out


def implicit_confidence(w, alpha: float):
    out = 1.0 + alpha * np.asarray(w, dtype=float)
    return float(out) if out.ndim == 0 else out


def interaction_block(train: Dataset, users: np.ndarray) -> np.ndarray:
    """Dense 0/1 rows of the interaction matrix for ``users``."""
    R = np.zeros((len(users), train.n_items))
    pos = np.full(train.n_users, -1)
    pos[users] = np.arange(len(users))
    sel = pos[train.users] >= 0
    R[pos[train.users[sel]], train.items[sel]] = 1.0
    return R


def ranking_loss_and_grads(P_b, Q, R_b, a, z, alpha, weights=None):
    """Weighted square loss over a users-by-all-items block.

    Returns ``(loss, gP_b, gQ)`` with ``gP_b`` shaped like ``P_b`` and ``gQ``
    like ``Q``.
    """
    D = pairwise_sq_distances(P_b, Q, weights)
    Y = a * (1.0 - R_b) + z * R_b
    C = 1.0 + alpha * R_b
    resid = Y - D
    loss = float(np.sum(C * resid * resid))
    W = -2.0 * C * resid  # dL / dD
    w = 1.0 if weights is None else weights
    gP = 2.0 * w * (W.sum(axis=1)[:, None] * P_b - W @ Q)
    gQ = 2.0 * w * (W.sum(axis=0)[:, None] * Q - W.T @ P_b)
    return loss, gP, gQ


def ranking_loss(P, Q, train: Dataset, a, z, alpha, block_size: int | None = None) -> float:
    """Full-grid objective, optionally accumulated over user blocks."""
    M = P.shape[0]
    block_size = block_size or M
    total = 0.0
    for start in range(0, M, block_size):
        users = np.arange(start, min(start + block_size, M))
        total += ranking_loss_and_grads(P[users], Q, interaction_block(train, users), a, z, alpha)[0]
    return total


@dataclass
class RankingModel:
    embeddings: EmbeddingTable
    config: RankingConfig
    user_ids: tuple = ()
    item_ids: tuple = ()
    history: list = field(default_factory=list)

    mode = "ranking"

    @property
    def n_users(self) -> int:
        return self.embeddings.P.shape[0]

    @property
    def n_items(self) -> int:
        return self.embeddings.Q.shape[0]

    def score_user(self, u: int) -> np.ndarray:
        """Squared distance from user ``u`` to every item (lower is better)."""
        if not 0 <= u < self.n_users:
            raise IndexError(f"user index {u} outside [0, {self.n_users})")
        diff = self.embeddings.Q - self.embeddings.P[u]
        return np.einsum("ij,ij->i", diff, diff)

    def score_users(self, users) -> np.ndarray:
        return pairwise_sq_distances(self.embeddings.P[np.asarray(users)], self.embeddings.Q)

    def recommend_top_n(self, u: int, n: int, exclude=()) -> list[int]:
        return top_n_from_scores(self.score_user(u), n, exclude)

    def save(self, path) -> None:
        save_params(path, self.mode, self.embeddings, None, 0.0, 1.0)
        save_id_maps(path, self.user_ids, self.item_ids, {"config": asdict(self.config)})

    @classmethod
    def load(cls, path) -> "RankingModel":
        stored = load_params(path)
        if stored.mode != cls.mode:
            raise DataFormatError(f"{path} holds a {stored.mode!r} model, not {cls.mode!r}")
        side = load_id_maps(path)
        return cls(stored.embeddings, RankingConfig(**side.get("config", {})),
                   tuple(side["user_ids"]), tuple(side["item_ids"]))


def top_n_from_scores(scores: np.ndarray, n: int, exclude=()) -> list[int]:
    """Ascending score, ties by item index, skipping ``exclude``."""
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    order = np.argsort(scores, kind="stable")
    exclude = set(int(x) for x in exclude)
    out = []
    for i in order.tolist():
        if i in exclude:
            continue
        out.append(i)
        if len(out) == n:
            break
    return out


def train_ranking(train: Dataset, config: RankingConfig | None = None, progress: Callable[[str], None] | None = None) -> RankingModel:
    """Adagrad over the full interaction grid in shuffled user blocks.

    Each epoch visits every (user, item) cell exactly once: users are
    shuffled and cut into blocks of ``batch_size``, and each block is scored
    against all items. ``train`` values are read as 0/1 (binarize first).
    """
    config = config or RankingConfig()
    if len(train) == 0:
        raise DataFormatError("cannot train on an empty dataset")
    if np.any((train.values != 0.0) & (train.values != 1.0)):
        raise DataFormatError("ranking training data must be binarized")
    M, N, k = train.n_users, train.n_items, config.k
    emb, _ = init_params(M, N, k, config.seed, config.init_std)
    P, Q = emb.P, emb.Q
    model = RankingModel(emb, config, train.user_ids, train.item_ids)
    sP = AdagradState.like(P, config.eta, name="P")
    sQ = AdagradState.like(Q, config.eta, name="Q")
    rng = np.random.default_rng([config.seed, 1])
    observed = train.subset(np.flatnonzero(train.values > 0))
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(M)
        total = 0.0
        for b, start in enumerate(range(0, M, config.batch_size)):
            users = np.sort(perm[start : start + config.batch_size])
            mask = sample_mask(k, config.drop_rate, rng)
            weights = None if config.drop_rate == 0.0 else mask.weights()
            loss, gP, gQ = ranking_loss_and_grads(
                P[users], Q, interaction_block(observed, users), config.a, config.z, config.alpha, weights
            )
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            total += loss
            adagrad_update(P, gP, sP, users)
            clip_rows(P, config.l, users)
            adagrad_update(Q, gQ, sQ)
            clip_rows(Q, config.l)
        record = {"epoch": epoch, "loss": total / (M * N)}
        model.history.append(record)
        line = f"epoch {epoch} loss {record['loss']:.6f}"
        log.debug(line)
        if progress is not None:
            progress(line)
    return model
