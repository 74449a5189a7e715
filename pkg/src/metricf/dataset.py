"""Interaction files, contiguous index spaces, random splits and binarization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataFormatError

DEDUP_POLICIES = ("keep-last", "keep-first", "error")


@dataclass(frozen=True)
class Interaction:
    user_raw: str
    item_raw: str
    value: float
    timestamp: int | None = None

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DataFormatError(f"non-finite interaction value {self.value!r}")


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.9
    seed: int = 0
    n_repeats: int = 5

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.n_repeats < 1:
            raise ConfigError(f"n_repeats must be >= 1, got {self.n_repeats}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed (user, item, value) triplets over contiguous index spaces.

    ``user_ids[u]`` is the raw id of user index ``u`` (same for items). Arrays
    are made read-only on construction; the two halves of a split share the
    id lists, so ``n_users``/``n_items`` always cover the full index space.
    """

    users: np.ndarray
    items: np.ndarray
    values: np.ndarray
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    r_min: float = 1.0
    r_max: float = 5.0
    _user_index: dict = field(default=None, repr=False, compare=False)
    _item_index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for name, dtype in (("users", np.int64), ("items", np.int64), ("values", np.float64)):
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.users) == len(self.items) == len(self.values)):
            raise DataFormatError("users, items and values must have equal length")
        object.__setattr__(self, "user_ids", tuple(self.user_ids))
        object.__setattr__(self, "item_ids", tuple(self.item_ids))
        if self._user_index is None:
            object.__setattr__(self, "_user_index", {r: i for i, r in enumerate(self.user_ids)})
        if self._item_index is None:
            object.__setattr__(self, "_item_index", {r: i for i, r in enumerate(self.item_ids)})

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def __len__(self) -> int:
        return len(self.values)

    def user_index(self, raw: str) -> int:
        return self._user_index[raw]

    def item_index(self, raw: str) -> int:
        return self._item_index[raw]

    def triplets(self) -> list[tuple[int, int, float]]:
        return list(zip(self.users.tolist(), self.items.tolist(), self.values.tolist()))

    def subset(self, rows: np.ndarray) -> "Dataset":
        """Triplets at ``rows`` over the same index space."""
        return Dataset(
            self.users[rows], self.items[rows], self.values[rows],
            self.user_ids, self.item_ids, self.r_min, self.r_max,
            self._user_index, self._item_index,
        )

    def positives_by_user(self) -> list[np.ndarray]:
        """Sorted item indices observed for every user index."""
        order = np.lexsort((self.items, self.users))
        counts = np.bincount(self.users, minlength=self.n_users)
        return np.split(self.items[order], np.cumsum(counts)[:-1])


def detect_delimiter(line: str) -> str | None:
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    if "::" in line:
        return "::"
    # whitespace fallback covers space separated files such as FilmTrust
    return None


def parse_line(line: str, delimiter: str | None, lineno: int = 0) -> Interaction:
    fields = line.split(delimiter) if delimiter is not None else line.split()
    fields = [f.strip() for f in fields]
    if len(fields) < 3:
        raise DataFormatError(f"line {lineno}: expected at least 3 fields, got {len(fields)}")
    try:
        value = float(fields[2])
    except ValueError:
        raise DataFormatError(f"line {lineno}: non-numeric value {fields[2]!r}") from None
    if not math.isfinite(value):
        raise DataFormatError(f"line {lineno}: non-finite value {fields[2]!r}")
    timestamp = None
    if len(fields) > 3 and fields[3]:
        try:
            timestamp = int(float(fields[3]))
        except ValueError:
            raise DataFormatError(f"line {lineno}: bad timestamp {fields[3]!r}") from None
    return Interaction(fields[0], fields[1], value, timestamp)


def load_interactions(path: str | Path, delimiter: str | None = "auto") -> list[Interaction]:
    """Read one interaction per line, in file order.

    ``delimiter="auto"`` picks tab, comma or ``::`` (in that order) from the
    first data line, falling back to runs of whitespace. Blank lines and lines
    starting with ``#`` are skipped.
    """
    out = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if delimiter == "auto":
                delimiter = detect_delimiter(line)
            out.append(parse_line(line, delimiter, lineno))
    return out


def build_dataset(
    interactions: Iterable[Interaction],
    r_min: float = 1.0,
    r_max: float = 5.0,
    dedup: str = "keep-last",
) -> Dataset:
    """Assign contiguous indices in first-appearance order and resolve duplicates."""
    if not r_min < r_max:
        raise ConfigError(f"r_min must be < r_max, got {r_min} >= {r_max}")
    if dedup not in DEDUP_POLICIES:
        raise ConfigError(f"unknown dedup policy {dedup!r}; expected one of {DEDUP_POLICIES}")
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    pairs: dict[tuple[int, int], float] = {}
    for it in interactions:
        if not r_min <= it.value <= r_max:
            raise DataFormatError(
                f"value {it.value} for ({it.user_raw}, {it.item_raw}) outside [{r_min}, {r_max}]"
            )
        u = user_index.setdefault(it.user_raw, len(user_index))
        i = item_index.setdefault(it.item_raw, len(item_index))
        if (u, i) in pairs:
            if dedup == "error":
                raise DataFormatError(f"duplicate pair ({it.user_raw}, {it.item_raw})")
            if dedup == "keep-first":
                continue
        pairs[(u, i)] = it.value
    if pairs:
        ui = np.array(list(pairs.keys()), dtype=np.int64)
        users, items = ui[:, 0], ui[:, 1]
    else:
        users = items = np.zeros(0, dtype=np.int64)
    return Dataset(
        users, items, np.fromiter(pairs.values(), dtype=np.float64, count=len(pairs)),
        tuple(user_index), tuple(item_index), float(r_min), float(r_max),
    )


def load_dataset(path, r_min=1.0, r_max=5.0, delimiter="auto", dedup="keep-last") -> Dataset:
    return build_dataset(load_interactions(path, delimiter), r_min, r_max, dedup)


def split_rng(seed: int, repeat_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, repeat_index])


def random_split(dataset: Dataset, spec: SplitSpec, repeat_index: int = 0) -> tuple[Dataset, Dataset]:
    if not 0 <= repeat_index < spec.n_repeats:
        raise ConfigError(f"repeat_index {repeat_index} outside [0, {spec.n_repeats})")
    n = len(dataset)
    if n == 0:
        raise DataFormatError("cannot split an empty dataset")
    perm = split_rng(spec.seed, repeat_index).permutation(n)
    n_train = int(math.floor(spec.train_fraction * n + 0.5))
    train_rows = np.sort(perm[:n_train])
    test_rows = np.sort(perm[n_train:])
    return dataset.subset(train_rows), dataset.subset(test_rows)


def binarize(dataset: Dataset) -> Dataset:
    """Every observed pair becomes 1; unobserved pairs stay implicit zeros."""
    if len(dataset) == 0:
        raise DataFormatError("cannot binarize an empty dataset")
    return Dataset(
        dataset.users, dataset.items, np.ones(len(dataset)),
        dataset.user_ids, dataset.item_ids, 0.0, 1.0,
        dataset._user_index, dataset._item_index,
    )


def write_interactions(dataset: Dataset, path: str | Path, delimiter: str = "\t") -> None:
    """Persist triplets with raw ids, readable again by :func:`load_interactions`."""
    uids, iids = dataset.user_ids, dataset.item_ids
    with open(path, "w", encoding="utf-8") as fh:
        for u, i, r in zip(dataset.users.tolist(), dataset.items.tolist(), dataset.values.tolist()):
            fh.write(f"{uids[u]}{delimiter}{iids[i]}{delimiter}{r!r}\n")


def from_raw_with_index(
    interactions: Sequence[Interaction], reference: Dataset, skip_unknown: bool = True
) -> Dataset:
    """Index ``interactions`` with ``reference``'s maps (e.g. a held-out file).

    Pairs whose user or item is unknown to ``reference`` are dropped when
    ``skip_unknown`` is set, otherwise they raise ``KeyError``.
    """
    users, items, values = [], [], []
    for it in interactions:
        try:
            u, i = reference.user_index(it.user_raw), reference.item_index(it.item_raw)
        except KeyError:
            if skip_unknown:
                continue
            raise
        users.append(u)
        items.append(i)
        values.append(it.value)
    return Dataset(
        users, items, values, reference.user_ids, reference.item_ids,
        reference.r_min, reference.r_max, reference._user_index, reference._item_index,
    )
