"""User/item positions, biases, the masked distance kernel and norm clipping.

Persisted model layout (one file)::

    METRICF v1 <mode> <M> <N> <k> <r_min> <r_max> <tau> <mu>\\n
    P (M*k) | Q (N*k) | b_u (M or 0) | b_i (N or 0)

all as row-major little-endian float64. Bias arrays are either both present
or both empty.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError, ShapeError

MAGIC = "METRICF"
VERSION = "v1"
MODES = ("rating", "ranking", "svd", "useravg", "itemavg", "pop")
_F64 = np.dtype("<f8")


@dataclass
class EmbeddingTable:
    P: np.ndarray  # M x k user positions
    Q: np.ndarray  # N x k item positions

    @property
    def k(self) -> int:
        return self.P.shape[1]


@dataclass
class BiasTable:
    b_u: np.ndarray
    b_i: np.ndarray
    mu: float = 0.0
    tau: float = 1.0

    @property
    def global_term(self) -> float:
        return self.tau * self.mu


@dataclass(frozen=True)
class DropoutMask:
    kept: np.ndarray

    def __post_init__(self):
        kept = np.asarray(self.kept, dtype=bool)
        if kept.sum() < 1:
            raise ConfigError("a dropout mask must keep at least one dimension")
        object.__setattr__(self, "kept", kept)

    @property
    def keep_count(self) -> int:
        return int(self.kept.sum())

    @property
    def scale(self) -> float:
        """Inverted-dropout factor k / keep_count."""
        return len(self.kept) / self.keep_count

    def weights(self) -> np.ndarray:
        """Per-dimension multiplier: ``scale`` where kept, 0 where dropped."""
        return self.kept * self.scale


def init_params(M: int, N: int, k: int, seed: int, std: float = 0.01):
    """Draw P, Q, b_u, b_i (in that order) i.i.d. from Normal(0, std^2)."""
    if min(M, N, k) < 1:
        raise ConfigError(f"M, N, k must be >= 1, got {M}, {N}, {k}")
    if std <= 0:
        raise ConfigError(f"init std must be > 0, got {std}")
    rng = np.random.default_rng(seed)
    P = rng.normal(0.0, std, size=(M, k))
    Q = rng.normal(0.0, std, size=(N, k))
    b_u = rng.normal(0.0, std, size=M)
    b_i = rng.normal(0.0, std, size=N)
    return EmbeddingTable(P, Q), BiasTable(b_u, b_i, 0.0)


def squared_distance(p, q, mask: DropoutMask | None = None) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise ShapeError(f"vectors must share a 1-d shape, got {p.shape} and {q.shape}")
    diff2 = (p - q) ** 2
    if mask is None:
        return float(diff2.sum())
    if mask.kept.shape != p.shape:
        raise ShapeError(f"mask length {mask.kept.shape[0]} != vector length {p.shape[0]}")
    return float(mask.scale * diff2[mask.kept].sum())


def pairwise_sq_distances(P: np.ndarray, Q: np.ndarray, weights: np.ndarray | None = None):
    """Squared distances between every row of ``P`` and every row of ``Q``.

    ``weights`` is an optional per-dimension multiplier (see
    :meth:`DropoutMask.weights`).
    """
    if weights is None:
        pp = np.einsum("ij,ij->i", P, P)
        qq = np.einsum("ij,ij->i", Q, Q)
        D = pp[:, None] + qq[None, :] - 2.0 * (P @ Q.T)
    else:
        Pw = P * weights
        pp = np.einsum("ij,ij->i", Pw, P)
        qq = np.einsum("ij,ij->i", Q * weights, Q)
        D = pp[:, None] + qq[None, :] - 2.0 * (Pw @ Q.T)
    # expansion can dip a hair below zero
    np.maximum(D, 0.0, out=D)
    return D


def clip_norm(v, l: float) -> np.ndarray:
    if l <= 0:
        raise ConfigError(f"clip value must be > 0, got {l}")
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm <= l:
        return v.copy()
    return v * (l / norm)


def clip_rows(M: np.ndarray, l: float, rows=None) -> None:
    """In-place clip_norm on ``M[rows]`` (all rows when ``rows`` is None)."""
    block = M if rows is None else M[rows]
    norms = np.sqrt(np.einsum("ij,ij->i", block, block))
    over = norms > l
    if not over.any():
        return
    factors = np.ones_like(norms)
    factors[over] = l / norms[over]
    if rows is None:
        M *= factors[:, None]
    else:
        M[rows] = block * factors[:, None]


def sample_mask(k: int, drop_rate: float, rng: np.random.Generator) -> DropoutMask:
    if not 0.0 <= drop_rate < 1.0:
        raise ConfigError(f"drop_rate must lie in [0, 1), got {drop_rate}")
    if drop_rate == 0.0:
        return DropoutMask(np.ones(k, dtype=bool))
    while True:
        kept = rng.random(k) >= drop_rate
        if kept.any():
            return DropoutMask(kept)


def save_params(
    path, mode: str, emb: EmbeddingTable, biases: BiasTable | None,
    r_min: float, r_max: float,
) -> None:
    if mode not in MODES:
        raise ConfigError(f"unknown model mode {mode!r}")
    M, k = emb.P.shape
    N = emb.Q.shape[0]
    tau, mu = (biases.tau, biases.mu) if biases is not None else (0.0, 0.0)
    header = f"{MAGIC} {VERSION} {mode} {M} {N} {k} {float(r_min)!r} {float(r_max)!r} {float(tau)!r} {float(mu)!r}\n"
    parts = [emb.P, emb.Q]
    if biases is not None:
        parts += [biases.b_u, biases.b_i]
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for arr in parts:
            fh.write(np.ascontiguousarray(arr, dtype=_F64).tobytes())


@dataclass
class StoredParams:
    mode: str
    embeddings: EmbeddingTable
    biases: BiasTable | None
    r_min: float
    r_max: float


def load_params(path) -> StoredParams:
    blob = Path(path).read_bytes()
    nl = blob.find(b"\n")
    if nl < 0:
        raise DataFormatError(f"{path}: missing header line")
    fields = blob[:nl].decode("ascii", errors="replace").split()
    if len(fields) != 10 or fields[0] != MAGIC or fields[1] != VERSION:
        raise DataFormatError(f"{path}: not a {MAGIC} {VERSION} model file")
    mode = fields[2]
    M, N, k = (int(x) for x in fields[3:6])
    r_min, r_max, tau, mu = (float(x) for x in fields[6:10])
    data = np.frombuffer(blob, dtype=_F64, offset=nl + 1)
    n_pos = (M + N) * k
    if data.size not in (n_pos, n_pos + M + N):
        raise DataFormatError(f"{path}: payload has {data.size} floats, header implies {n_pos} or {n_pos + M + N}")
    data = data.copy()
    P = data[: M * k].reshape(M, k)
    Q = data[M * k : n_pos].reshape(N, k)
    biases = None
    if data.size > n_pos:
        biases = BiasTable(data[n_pos : n_pos + M], data[n_pos + M :], mu=mu, tau=tau)
    return StoredParams(mode, EmbeddingTable(P, Q), biases, r_min, r_max)


def id_sidecar(path) -> Path:
    return Path(str(path) + ".ids.json")


def save_id_maps(path, user_ids, item_ids, extra: dict | None = None) -> None:
    """Write raw ids (and any extra metadata) next to a model file."""
    doc = {"user_ids": list(user_ids), "item_ids": list(item_ids)}
    if extra:
        doc.update(extra)
    id_sidecar(path).write_text(json.dumps(doc))


def load_id_maps(path) -> dict:
    side = id_sidecar(path)
    if not side.exists():
        raise DataFormatError(f"{side} not found; it is written alongside every saved model")
    return json.loads(side.read_text())
