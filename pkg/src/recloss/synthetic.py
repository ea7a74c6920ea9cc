"""Synthetic interaction generators with recoverable structure.

The planted-block construction partitions users and items into aligned
groups; users interact mostly inside their own block plus uniform noise.
Any reasonable model should push in-block test items to the top of the
ranking, which gives integration tests a target that is demanding but not
seed-brittle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import InteractionDataset
from .sampling import substream


@dataclass
class PlantedBlocks:
    dataset: InteractionDataset
    user_blocks: np.ndarray
    item_blocks: np.ndarray

    def ideal_scorer(self) -> "BlockScorer":
        return BlockScorer(self.user_blocks, self.item_blocks)


class BlockScorer:
    """Oracle that scores 1 for in-block items, 0 elsewhere."""

    def __init__(self, user_blocks: np.ndarray, item_blocks: np.ndarray):
        self.user_blocks = user_blocks
        self.item_blocks = item_blocks

    def score_all(self, u: int) -> np.ndarray:
        return (self.item_blocks == self.user_blocks[u]).astype(float)


def make_planted_blocks(
    num_users: int = 200,
    num_items: int = 300,
    num_blocks: int = 5,
    in_block_p: float = 0.8,
    noise_p: float = 0.05,
    test_fraction: float = 0.2,
    seed: int = 0,
) -> PlantedBlocks:
    if num_items % num_blocks or num_users % num_blocks:
        raise ValueError("num_users and num_items must divide evenly into blocks")
    rng = substream(seed, "splits")
    user_blocks = np.repeat(np.arange(num_blocks), num_users // num_blocks)
    item_blocks = np.repeat(np.arange(num_blocks), num_items // num_blocks)

    train, test = [], []
    for u in range(num_users):
        in_block = item_blocks == user_blocks[u]
        p = np.where(in_block, in_block_p, noise_p)
        liked = np.flatnonzero(rng.random(num_items) < p)
        if len(liked) < 2:
            # guarantee at least one train and one test item per user
            liked = np.sort(rng.choice(np.flatnonzero(in_block), size=2, replace=False))
        n_test = max(1, int(round(test_fraction * len(liked))))
        n_test = min(n_test, len(liked) - 1)
        test_items = np.sort(rng.choice(liked, size=n_test, replace=False))
        train_items = np.setdiff1d(liked, test_items)
        train.append(train_items.astype(np.int64))
        test.append(test_items.astype(np.int64))

    popularity = np.zeros(num_items, dtype=np.int64)
    for items in train:
        popularity[items] += 1
    ds = InteractionDataset(num_users, num_items, train, test, popularity)
    ds.validate()
    return PlantedBlocks(dataset=ds, user_blocks=user_blocks, item_blocks=item_blocks)


def make_random_dataset(
    num_users: int,
    num_items: int,
    density: float = 0.1,
    test_fraction: float = 0.2,
    seed: int = 0,
) -> InteractionDataset:
    """Unstructured uniform interactions; useful for smoke tests only."""
    rng = substream(seed, "splits")
    train, test = [], []
    for _ in range(num_users):
        liked = np.flatnonzero(rng.random(num_items) < density)
        if len(liked) == 0:
            liked = rng.integers(0, num_items, size=1)
        n_test = int(round(test_fraction * len(liked)))
        n_test = min(n_test, len(liked) - 1)
        test_items = (
            np.sort(rng.choice(liked, size=n_test, replace=False))
            if n_test > 0
            else np.empty(0, dtype=np.int64)
        )
        train.append(np.setdiff1d(liked, test_items).astype(np.int64))
        test.append(test_items.astype(np.int64))
    popularity = np.zeros(num_items, dtype=np.int64)
    for items in train:
        popularity[items] += 1
    ds = InteractionDataset(num_users, num_items, train, test, popularity)
    ds.validate()
    return ds
