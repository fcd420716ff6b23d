"""Per-step batch selection: pick the training batch out of a scored pool.

Score-based strategies take the b most extreme scores in the strategy's
direction (smallest for mms, largest for loss/entropy) with ties broken by
lower pool index; the uniform strategy draws b indices from the run's
selection stream.  Returned indices are normalized to increasing pool order
so batch row order never depends on score order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .numerics import RandomStream
from .scoring import MMS, ScoredPool

SMALLEST = "smallest"
LARGEST = "largest"

_DIRECTIONS = {
    "uniform": None,
    "mms": SMALLEST,
    "hnm": LARGEST,
    "entropy": LARGEST,
}


@dataclass(frozen=True)
class Strategy:
    """Selection policy; direction is fixed per kind."""

    kind: str

    def __post_init__(self):
        if self.kind not in _DIRECTIONS:
            raise ConfigError(f"unknown strategy {self.kind!r}")

    @property
    def direction(self) -> str | None:
        return _DIRECTIONS[self.kind]


@dataclass(frozen=True)
class SelectionResult:
    """Chosen pool indices (strictly increasing) plus mean-MMS telemetry."""

    indices: np.ndarray  # int64, strictly increasing
    mean_mms_10: float = float("nan")


def select(
    pool: ScoredPool, strategy: Strategy, b: int, stream: RandomStream | None = None
) -> SelectionResult:
    """Pick min(b, pool_size) samples from the pool under the strategy.

    Deterministic for score-based strategies: (score, index) lexicographic
    order, so duplicated scores resolve toward lower pool indices and +inf
    sentinel scores sort last.  The uniform strategy consumes draws from
    ``stream``.
    """
    if b < 1:
        raise ConfigError(f"batch size must be >= 1, got {b}")
    n = pool.pool_size
    if n == 0:
        raise ConfigError("cannot select from an empty pool")
    k = min(b, n)

    if strategy.direction is None:
        if stream is None:
            raise ConfigError("uniform selection needs a random stream")
        chosen = stream.sample_without_replacement(n, k)
    else:
        keys = pool.scores if strategy.direction == SMALLEST else -pool.scores
        # stable sort on the keys alone == (score, index) lexicographic order
        chosen = np.argsort(keys, kind="stable")[:k]

    indices = np.sort(chosen.astype(np.int64))
    result = SelectionResult(indices=indices)
    if pool.kind == MMS:
        result = SelectionResult(indices=indices, mean_mms_10=mean_mms_telemetry(pool, result))
    return result


def mean_mms_telemetry(pool: ScoredPool, result: SelectionResult) -> float:
    """Mean of the 10 smallest MMS values among the selected samples.

    With fewer than 10 selected, averages all of them.  The pool must carry
    MMS scores; for non-MMS strategies the caller scores the same pool with
    :func:`seltrain.scoring.mms_scores` first, which is what makes mean-MMS
    traces comparable across strategies.
    """
    if pool.kind != MMS:
        raise ConfigError(f"telemetry needs an mms-scored pool, got {pool.kind!r}")
    if result.indices.shape[0] == 0:
        raise ConfigError("telemetry of an empty selection is undefined")
    if result.indices.max() >= pool.pool_size:
        raise DimensionError("selection indices exceed the pool")
    picked = np.sort(pool.scores[result.indices])
    return float(picked[: min(10, picked.shape[0])].mean())
