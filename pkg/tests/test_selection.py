import numpy as np
import pytest

from seltrain.errors import ConfigError
from seltrain.numerics import RandomStream
from seltrain.scoring import ENTROPY, LOSS, MMS, ScoredPool
from seltrain.selection import SelectionResult, Strategy, mean_mms_telemetry, select


def make_pool(scores, kind=MMS):
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0]
    return ScoredPool(
        kind=kind,
        scores=scores,
        predicted=np.zeros(n, dtype=np.int64),
        top2=np.zeros((n, 2), dtype=np.int64),
    )


def sort_oracle(scores, b, direction):
    """Full lexicographic sort on (score, index); the reference selector."""
    key = (lambda i: (scores[i], i)) if direction == "smallest" else (lambda i: (-scores[i], i))
    return sorted(sorted(range(len(scores)), key=key)[: min(b, len(scores))])


class TestSelect:
    def test_smallest_two_with_tie(self):
        result = select(make_pool([0.3, 0.1, 0.5, 0.1]), Strategy("mms"), b=2)
        assert result.indices.tolist() == [1, 3]

    def test_b_at_least_pool_returns_everything(self):
        result = select(make_pool([0.3, 0.1, 0.5]), Strategy("mms"), b=7)
        assert result.indices.tolist() == [0, 1, 2]

    def test_matches_full_sort_oracle(self):
        scores = RandomStream(11).uniform(1000)
        result = select(make_pool(scores), Strategy("mms"), b=64)
        assert result.indices.tolist() == sort_oracle(scores, 64, "smallest")
        assert sorted(scores[result.indices].tolist()) == sorted(
            np.sort(scores)[:64].tolist()
        )

    def test_largest_direction_for_loss_and_entropy(self):
        scores = RandomStream(12).uniform(200)
        for kind, name in ((LOSS, "hnm"), (ENTROPY, "entropy")):
            result = select(make_pool(scores, kind=kind), Strategy(name), b=16)
            assert result.indices.tolist() == sort_oracle(scores, 16, "largest")

    def test_duplicated_scores_resolve_to_lower_indices(self):
        scores = np.array([0.2, 0.2, 0.2, 0.2, 0.2, 0.1])
        result = select(make_pool(scores), Strategy("mms"), b=3)
        assert result.indices.tolist() == [0, 1, 5]

    def test_infinite_sentinels_selected_last(self):
        scores = np.array([np.inf, 0.4, np.inf, 0.2])
        result = select(make_pool(scores), Strategy("mms"), b=3)
        assert result.indices.tolist() == [0, 1, 3]

    def test_zero_batch_rejected(self):
        with pytest.raises(ConfigError):
            select(make_pool([0.1]), Strategy("mms"), b=0)

    def test_uniform_is_reproducible(self):
        pool = make_pool(RandomStream(13).uniform(100))
        a = select(pool, Strategy("uniform"), b=10, stream=RandomStream(99, 5))
        b = select(pool, Strategy("uniform"), b=10, stream=RandomStream(99, 5))
        assert np.array_equal(a.indices, b.indices)
        assert len(set(a.indices.tolist())) == 10

    def test_uniform_needs_stream(self):
        with pytest.raises(ConfigError):
            select(make_pool([0.1, 0.2]), Strategy("uniform"), b=1)

    def test_idempotent_on_selected_subpool(self):
        scores = RandomStream(14).uniform(50)
        first = select(make_pool(scores), Strategy("mms"), b=12)
        sub = make_pool(scores[first.indices])
        second = select(sub, Strategy("mms"), b=12)
        assert second.indices.tolist() == list(range(12))

    def test_order_invariance(self):
        scores = RandomStream(15).uniform(80)
        perm = RandomStream(16).permutation(80)
        direct = select(make_pool(scores), Strategy("mms"), b=9)
        permuted = select(make_pool(scores[perm]), Strategy("mms"), b=9)
        assert set(perm[permuted.indices].tolist()) == set(direct.indices.tolist())

    def test_unknown_strategy_rejected(self):
        with pytest.raises(ConfigError):
            Strategy("nearest")


class TestMeanMmsTelemetry:
    def test_constant_scores(self):
        pool = make_pool(np.full(30, 0.5))
        result = select(pool, Strategy("mms"), b=10)
        assert mean_mms_telemetry(pool, result) == pytest.approx(0.5, abs=0)

    def test_fewer_than_ten_uses_all(self):
        pool = make_pool([1.0, 2.0, 3.0, 4.0])
        result = select(pool, Strategy("mms"), b=4)
        assert mean_mms_telemetry(pool, result) == pytest.approx(2.5, abs=0)

    def test_matches_sort_and_average_oracle(self):
        scores = RandomStream(17).uniform(500)
        pool = make_pool(scores)
        result = select(pool, Strategy("mms"), b=64)
        oracle = float(np.mean(sorted(scores[result.indices])[:10]))
        assert mean_mms_telemetry(pool, result) == pytest.approx(oracle, abs=0)

    def test_select_fills_telemetry_for_mms_pools(self):
        scores = RandomStream(18).uniform(100)
        pool = make_pool(scores)
        result = select(pool, Strategy("mms"), b=20)
        assert result.mean_mms_10 == pytest.approx(mean_mms_telemetry(pool, result), abs=0)

    def test_non_mms_pool_rejected(self):
        pool = make_pool([0.1, 0.2], kind=LOSS)
        result = SelectionResult(indices=np.array([0], dtype=np.int64))
        with pytest.raises(ConfigError):
            mean_mms_telemetry(pool, result)

    def test_empty_selection_rejected(self):
        pool = make_pool([0.1, 0.2])
        with pytest.raises(ConfigError):
            mean_mms_telemetry(pool, SelectionResult(indices=np.array([], dtype=np.int64)))
