"""Implicit-feedback dataset loading, validation, and splitting.

The on-disk format is the usual benchmark text layout: one line per user,
whitespace-separated 0-indexed integers, first token the user id and the
rest the items that user interacted with.  A data directory holds
``train.txt`` and ``test.txt``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class DatasetFormatError(ValueError):
    """Raised when an interaction file cannot be parsed or fails validation."""


@dataclass(frozen=True)
class InteractionDataset:
    """Sparse user-item implicit-feedback store with train/test partitions.

    ``train_positives[u]`` and ``test_positives[u]`` are sorted, duplicate-free
    int64 arrays of item indices.  Instances are immutable and safe to share
    across threads.
    """

    num_users: int
    num_items: int
    train_positives: list[np.ndarray]
    test_positives: list[np.ndarray]
    item_popularity: np.ndarray = field(repr=False)

    @property
    def train_interactions(self) -> int:
        return sum(len(a) for a in self.train_positives)

    @property
    def test_interactions(self) -> int:
        return sum(len(a) for a in self.test_positives)

    def train_pairs(self) -> np.ndarray:
        """All (user, item) training interactions as an (n, 2) int64 array."""
        users = np.repeat(
            np.arange(self.num_users), [len(a) for a in self.train_positives]
        )
        items = np.concatenate(self.train_positives) if self.train_interactions else np.empty(0, dtype=np.int64)
        return np.column_stack([users, items]).astype(np.int64)

    def train_matrix(self, max_items: int | None = None) -> np.ndarray:
        """Dense binary interaction matrix (num_users x num_items).

        Refuses catalogs above ``max_items`` when given; the dense form is
        meant for the closed-form linear solvers, not large-scale data.
        """
        if max_items is not None and self.num_items > max_items:
            raise ValueError(
                f"dense matrix refused: {self.num_items} items exceeds budget {max_items}"
            )
        X = np.zeros((self.num_users, self.num_items))
        for u, items in enumerate(self.train_positives):
            X[u, items] = 1.0
        return X

    def validate(self) -> None:
        """Check all structural invariants; raise DatasetFormatError on violation."""
        if len(self.train_positives) != self.num_users or len(self.test_positives) != self.num_users:
            raise DatasetFormatError("per-user list count does not match num_users")
        for u in range(self.num_users):
            for name, items in (("train", self.train_positives[u]), ("test", self.test_positives[u])):
                if len(items) and (items.min() < 0 or items.max() >= self.num_items):
                    raise DatasetFormatError(f"user {u}: {name} item index out of range")
                if np.any(np.diff(items) <= 0):
                    raise DatasetFormatError(f"user {u}: {name} list not strictly sorted")
            if len(np.intersect1d(self.train_positives[u], self.test_positives[u])):
                raise DatasetFormatError(f"user {u}: train and test lists overlap")
        pop = np.zeros(self.num_items, dtype=np.int64)
        for items in self.train_positives:
            pop[items] += 1
        if not np.array_equal(pop, self.item_popularity):
            raise DatasetFormatError("item_popularity inconsistent with train lists")


@dataclass(frozen=True)
class DatasetStats:
    """Summary counts for an interaction dataset.

    ``interaction_count`` covers train plus test (the convention benchmark
    tables use); the two partitions are also reported separately.
    """

    user_count: int
    item_count: int
    train_interactions: int
    test_interactions: int
    interaction_count: int
    density: float
    max_items_per_user: int
    min_items_per_user: int


def _parse_interaction_file(path: Path) -> tuple[dict[int, list[int]], int]:
    """Parse one file into {user: raw item list}; returns (mapping, dup count)."""
    per_user: dict[int, list[int]] = {}
    duplicates = 0
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                values = [int(t) for t in tokens]
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: malformed token ({exc})") from None
            u, items = values[0], values[1:]
            if u < 0 or any(i < 0 for i in items):
                raise DatasetFormatError(f"{path}:{lineno}: negative index")
            bucket = per_user.setdefault(u, [])
            bucket.extend(items)
    for u, items in per_user.items():
        unique = sorted(set(items))
        duplicates += len(items) - len(unique)
        per_user[u] = unique
    return per_user, duplicates


def load_dataset(train_path: str | Path, test_path: str | Path) -> InteractionDataset:
    """Load a train/test pair of interaction files.

    Users and items appearing only in the test file are still allocated
    indices; the item universe is max index + 1 over both files.  Duplicate
    (user, item) pairs are dropped with a logged count.  Items found in both
    partitions for the same user are rejected.
    """
    train_path, test_path = Path(train_path), Path(test_path)
    for p in (train_path, test_path):
        if not p.exists():
            raise FileNotFoundError(f"interaction file not found: {p}")
    train_raw, train_dups = _parse_interaction_file(train_path)
    test_raw, test_dups = _parse_interaction_file(test_path)
    if not any(train_raw.values()):
        raise DatasetFormatError(f"{train_path}: no training interactions")
    if train_dups or test_dups:
        log.warning("removed %d duplicate train and %d duplicate test pairs", train_dups, test_dups)

    num_users = max(max(train_raw, default=-1), max(test_raw, default=-1)) + 1
    max_item = -1
    for raw in (train_raw, test_raw):
        for items in raw.values():
            if items:
                max_item = max(max_item, items[-1])
    num_items = max_item + 1

    train = [np.asarray(train_raw.get(u, []), dtype=np.int64) for u in range(num_users)]
    test = [np.asarray(test_raw.get(u, []), dtype=np.int64) for u in range(num_users)]
    pop = np.zeros(num_items, dtype=np.int64)
    for items in train:
        pop[items] += 1
    ds = InteractionDataset(num_users, num_items, train, test, pop)
    ds.validate()
    return ds


def save_dataset(ds: InteractionDataset, train_path: str | Path, test_path: str | Path) -> None:
    """Write a dataset back to the text format (inverse of load_dataset)."""
    for path, lists in ((train_path, ds.train_positives), (test_path, ds.test_positives)):
        with open(path, "w") as f:
            for u in range(ds.num_users):
                f.write(" ".join([str(u), *map(str, lists[u].tolist())]).rstrip() + "\n")


def dataset_stats(ds: InteractionDataset) -> DatasetStats:
    train_n, test_n = ds.train_interactions, ds.test_interactions
    lengths = [len(a) for a in ds.train_positives]
    return DatasetStats(
        user_count=ds.num_users,
        item_count=ds.num_items,
        train_interactions=train_n,
        test_interactions=test_n,
        interaction_count=train_n + test_n,
        density=(train_n + test_n) / (ds.num_users * ds.num_items),
        max_items_per_user=max(lengths) if lengths else 0,
        min_items_per_user=min(lengths) if lengths else 0,
    )


def make_validation_split(
    ds: InteractionDataset, fraction: float = 0.1, seed: int = 0
) -> tuple[InteractionDataset, list[np.ndarray]]:
    """Hold out ceil(fraction * |train_u|) items per user as a validation list.

    A user with at least two train items always retains at least one; users
    with a single item keep it.  Deterministic for a fixed seed.  Returns the
    reduced dataset and the per-user held-out lists.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    reduced: list[np.ndarray] = []
    held_out: list[np.ndarray] = []
    for items in ds.train_positives:
        n = len(items)
        n_hold = min(math.ceil(fraction * n), n - 1) if n >= 1 else 0
        if n_hold <= 0:
            reduced.append(items)
            held_out.append(np.empty(0, dtype=np.int64))
            continue
        chosen = rng.choice(n, size=n_hold, replace=False)
        mask = np.zeros(n, dtype=bool)
        mask[chosen] = True
        reduced.append(items[~mask])
        held_out.append(items[mask])
    pop = np.zeros(ds.num_items, dtype=np.int64)
    for items in reduced:
        pop[items] += 1
    out = InteractionDataset(ds.num_users, ds.num_items, reduced, ds.test_positives, pop)
    return out, held_out
