from itertools import permutations

import numpy as np
import pytest

from utils.assignment import MAX_EXHAUSTIVE, exhaustive_assignment
from utils.errors import SignalShapeError
from utils.utils import compute_hash, derive_seed, frame_anchors, frame_count, normalize_rows, safe_db, sliding_frames


def test_derive_seed_is_stable_and_part_sensitive():
    assert derive_seed(0, "scene", 1) == derive_seed(0, "scene", 1)
    assert derive_seed(0, "scene", 1) != derive_seed(0, "scene", 2)
    assert 0 <= derive_seed("x") < 2 ** 63


def test_compute_hash_ignores_key_order():
    assert compute_hash({"a": 1, "b": [1, 2]}) == compute_hash({"b": [1, 2], "a": 1})
    assert compute_hash(np.zeros(3)) != compute_hash(np.ones(3))


def test_safe_db_caps_both_ends():
    assert safe_db(1.0, 0.0) == 100.0
    assert safe_db(0.0, 1.0) == -100.0
    assert safe_db(10.0, 1.0) == pytest.approx(10.0)
    assert safe_db(1e30, 1.0) == 100.0


def test_frames_cover_expected_samples():
    x = np.arange(1024, dtype=np.float64)
    frames = sliding_frames(x, 256, 128)
    assert frames.shape == (frame_count(1024, 256, 128), 256)
    assert frames.shape[0] == 7
    assert frames[2, 0] == 256 and frames[2, -1] == 511
    np.testing.assert_array_equal(frame_anchors(3, 256, 128), [128.0, 256.0, 384.0])


def test_frames_keep_trailing_axes():
    x = np.ones((600, 3))
    assert sliding_frames(x, 256, 128).shape == (3, 256, 3)


def test_frame_count_rejects_short_signal():
    with pytest.raises(SignalShapeError):
        frame_count(100, 256, 128)


def test_normalize_rows_leaves_zero_rows_zero():
    out = normalize_rows(np.array([[3.0, 4.0, 0.0], [0.0, 0.0, 0.0]]))
    np.testing.assert_allclose(out, [[0.6, 0.8, 0.0], [0.0, 0.0, 0.0]])


def test_exhaustive_assignment_matches_brute_force(rng):
    cost = rng.uniform(size=(4, 4))
    perm, total = exhaustive_assignment(cost)
    best = min(sum(cost[i, p[i]] for i in range(4)) for p in permutations(range(4)))
    assert total == pytest.approx(best)
    assert sorted(perm) == [0, 1, 2, 3]


def test_exhaustive_assignment_size_limit():
    with pytest.raises(SignalShapeError):
        exhaustive_assignment(np.zeros((MAX_EXHAUSTIVE + 1, MAX_EXHAUSTIVE + 1)))
