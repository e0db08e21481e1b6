from itertools import permutations
from typing import Tuple

import numpy as np

from utils.errors import SignalShapeError

MAX_EXHAUSTIVE = 8


def exhaustive_assignment(cost: np.ndarray) -> Tuple[Tuple[int, ...], float]:
    """
    Minimum-cost assignment of rows to columns by full enumeration.

    Returns (permutation, total) where permutation[i] is the column assigned
    to row i. Permutations are visited in lexicographic order and only a
    strictly smaller total replaces the incumbent, so ties resolve to the
    lexicographically smallest permutation.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise SignalShapeError(f"cost matrix must be square, got shape {cost.shape}")
    size = cost.shape[0]
    if size > MAX_EXHAUSTIVE:
        raise SignalShapeError(f"exhaustive assignment supports at most {MAX_EXHAUSTIVE} sources, got {size}")

    rows = np.arange(size)
    best_perm = tuple(range(size))
    best_total = np.inf
    for perm in permutations(range(size)):
        total = float(cost[rows, perm].sum())
        if total < best_total:
            best_total = total
            best_perm = perm
    return tuple(int(p) for p in best_perm), best_total
