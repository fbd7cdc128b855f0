"""Seeded k-fold cross-validation over song identifiers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if set(self.train_ids) & set(self.test_ids):
            raise ValueError("train and test ids must be disjoint")


def kfold_split(ids: list[str], k: int, seed: int) -> list[FoldSplit]:
    """Shuffle ids by seed and partition into k near-equal test chunks; the
    test chunks are pairwise disjoint and cover every id."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if len(ids) < k:
        raise ValueError(f"need at least {k} ids for {k} folds")
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    chunks = np.array_split(np.arange(len(shuffled)), k)
    folds = []
    for fold_index, chunk in enumerate(chunks):
        test = tuple(shuffled[i] for i in chunk)
        train = tuple(x for x in shuffled if x not in set(test))
        folds.append(FoldSplit(fold_index, train, test))
    return folds
