"""Experiment engine: per-step pool draw -> forward -> score -> select -> SGD.

Seed discipline: one master seed derives fixed substreams (param init,
synthetic train/test splits, pool draws, uniform selection), so switching the
selection strategy never perturbs the data stream and paired comparisons stay
paired.  Runs are bit-for-bit reproducible; the metrics file is the
determinism surface and therefore carries no wall-clock fields (timings live
on the in-memory records and in a sidecar written by the CLI).

Step accounting is the whole point of selective sampling: each step forwards
B pool rows and back-propagates only the b selected rows; the gradient reuses
the pool forward, so no row is forwarded twice.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from bisect import bisect_right
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, PoolSampler, PoolSpec, gen_gaussian_mixture, load_csv, load_idx, standardize
from .errors import ConfigError, SelTrainError
from .model import (
    ArchSpec,
    ForwardResult,
    NetworkParams,
    forward,
    grad_from_forward,
    init_params,
    sgd_step,
)
from .numerics import RandomStream, log_softmax_rows
from .scoring import entropy_scores, hnm_scores, mms_scores
from .selection import SelectionResult, Strategy, mean_mms_telemetry, select

log = logging.getLogger(__name__)

# substream tags derived from the master seed
STREAM_INIT = 1
STREAM_DATA_TRAIN = 2
STREAM_DATA_TEST = 3
STREAM_POOL = 4
STREAM_SELECT = 5


@dataclass(frozen=True)
class LrSchedule:
    """Piecewise-constant schedule: rates[j] applies while step < milestones[j];
    at a milestone step the new rate already applies."""

    rates: tuple[float, ...]
    milestones: tuple[int, ...] = ()

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        milestones = tuple(int(m) for m in self.milestones)
        if len(rates) != len(milestones) + 1:
            raise ConfigError(
                f"need len(rates) == len(milestones) + 1, got {len(rates)} and {len(milestones)}"
            )
        if any(r <= 0 for r in rates):
            raise ConfigError("all rates must be > 0")
        if any(b <= a for a, b in zip(milestones, milestones[1:])):
            raise ConfigError("milestones must be strictly increasing")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "milestones", milestones)


LR_PRESETS = {
    "cifar10-early": LrSchedule(
        rates=(0.1, 0.01, 0.001, 0.0001), milestones=(24992, 27335, 29678)
    ),
    "cifar100-early": LrSchedule(
        rates=(0.1, 0.02, 0.004, 0.0008), milestones=(39050, 41393, 43736)
    ),
}


def lr_preset(name: str) -> LrSchedule:
    """Resolve a named preset or ``const:x`` into a schedule."""
    if name in LR_PRESETS:
        return LR_PRESETS[name]
    if name.startswith("const:"):
        try:
            return LrSchedule(rates=(float(name[6:]),))
        except ValueError as e:
            raise ConfigError(f"bad constant rate in {name!r}") from e
    raise ConfigError(f"unknown lr preset {name!r}")


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Rate in effect at ``step`` (>= 0)."""
    if step < 0:
        raise ConfigError(f"step must be >= 0, got {step}")
    return schedule.rates[bisect_right(schedule.milestones, step)]


@dataclass(frozen=True)
class DataSource:
    """Where the train/test splits come from.

    ``gauss`` synthesizes a mixture from the run's data substreams; ``csv``
    and ``idx`` load `train`/`test` files from ``path`` and standardize
    per-feature with train statistics unless disabled.
    """

    kind: str  # gauss | csv | idx
    path: str | None = None
    n_classes: int = 10
    dim: int = 32
    per_class: int = 1000
    per_class_test: int = 200
    separation: float = 3.0
    standardize: bool = True

    def __post_init__(self):
        if self.kind not in ("gauss", "csv", "idx"):
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.kind in ("csv", "idx") and not self.path:
            raise ConfigError(f"dataset kind {self.kind!r} needs a data path")


@dataclass(frozen=True)
class RunConfig:
    source: DataSource
    arch: str = "linear"  # "linear" or "mlp:<hidden_dim>"
    strategy: str = "uniform"
    pool_size: int = 320  # B
    batch_size: int = 32  # b
    total_steps: int = 1000
    eval_every: int = 100
    schedule: LrSchedule = field(default_factory=lambda: LrSchedule(rates=(0.1,)))
    seed: int = 0
    threshold: float | None = None
    pool_policy: str = "fresh"
    early_stop_target: float | None = None
    early_stop_patience: int = 3
    checkpoint_steps: tuple[int, ...] = ()
    trace_steps: tuple[int, ...] = ()

    def __post_init__(self):
        if self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        Strategy(self.strategy)  # validates the name
        parse_arch(self.arch, input_dim=1, n_classes=2)  # validates the tag syntax
        PoolSpec(self.pool_size, self.batch_size, self.pool_policy)  # validates B >= b

    def to_json_dict(self) -> dict:
        d = {
            "source": vars(self.source).copy(),
            "arch": self.arch,
            "strategy": self.strategy,
            "pool_size": self.pool_size,
            "batch_size": self.batch_size,
            "total_steps": self.total_steps,
            "eval_every": self.eval_every,
            "lr_rates": list(self.schedule.rates),
            "lr_milestones": list(self.schedule.milestones),
            "seed": self.seed,
            "threshold": self.threshold,
            "pool_policy": self.pool_policy,
            "early_stop_target": self.early_stop_target,
            "early_stop_patience": self.early_stop_patience,
        }
        return d


def parse_arch(arch: str, input_dim: int, n_classes: int) -> ArchSpec:
    """Resolve an architecture tag against dataset dimensions."""
    if arch == "linear":
        return ArchSpec(input_dim=input_dim, n_classes=n_classes)
    if arch.startswith("mlp:"):
        try:
            hidden = int(arch[4:])
        except ValueError as e:
            raise ConfigError(f"bad hidden size in arch {arch!r}") from e
        return ArchSpec(input_dim=input_dim, n_classes=n_classes, hidden_dim=hidden)
    raise ConfigError(f"unknown arch {arch!r} (want 'linear' or 'mlp:<H>')")


@dataclass
class MetricsRecord:
    """One training-step log row.

    ``wall_ms`` is measured wall time and deliberately excluded from the
    serialized metrics line so identical configs produce identical files.
    """

    step: int
    lr: float
    train_loss_batch: float
    train_err_batch: float
    test_err: float | None
    mean_mms_10: float
    selected_count: int
    wall_ms: float

    def to_json(self) -> str:
        d = {
            "step": self.step,
            "lr": self.lr,
            "train_loss_batch": self.train_loss_batch,
            "train_err_batch": self.train_err_batch,
        }
        if self.test_err is not None:
            d["test_err"] = self.test_err
        d["mean_mms_10"] = self.mean_mms_10
        d["selected_count"] = self.selected_count
        return json.dumps(d)


@dataclass
class StepTrace:
    """Offline-audit capture of one step's selection (requested via trace_steps)."""

    step: int
    pool_indices: np.ndarray
    scores: np.ndarray
    selected: np.ndarray  # positions within the pool


@dataclass
class RunResult:
    records: list[MetricsRecord]
    params: NetworkParams
    pool_checksum: str
    updates: int
    pool_draws: int
    forward_rows: int
    backward_rows: int
    early_stopped: bool
    checkpoints: dict[int, NetworkParams]
    traces: dict[int, StepTrace]

    @property
    def final_test_err(self) -> float | None:
        for rec in reversed(self.records):
            if rec.test_err is not None:
                return rec.test_err
        return None

    def steps_to_threshold(self, threshold: float) -> int | None:
        for rec in self.records:
            if rec.test_err is not None and rec.test_err <= threshold:
                return rec.step
        return None


def load_splits(config: RunConfig) -> tuple[Dataset, Dataset]:
    """Materialize the train/test splits for a run configuration."""
    src = config.source
    if src.kind == "gauss":
        train = gen_gaussian_mixture(
            src.n_classes,
            src.dim,
            src.per_class,
            src.separation,
            RandomStream(config.seed, STREAM_DATA_TRAIN),
            split="train",
        )
        test = gen_gaussian_mixture(
            src.n_classes,
            src.dim,
            src.per_class_test,
            src.separation,
            RandomStream(config.seed, STREAM_DATA_TEST),
            split="test",
        )
        return train, test
    base = src.path
    if src.kind == "csv":
        train = load_csv(f"{base}/train.csv", src.n_classes)
        test = replace(load_csv(f"{base}/test.csv", src.n_classes), split="test")
    else:
        train = load_idx(f"{base}/train-images-idx3-ubyte", f"{base}/train-labels-idx1-ubyte")
        test = replace(
            load_idx(f"{base}/test-images-idx3-ubyte", f"{base}/test-labels-idx1-ubyte"),
            split="test",
        )
        if train.n_classes != test.n_classes:
            n = max(train.n_classes, test.n_classes)
            train = replace(train, n_classes=n)
            test = replace(test, n_classes=n)
    if src.standardize:
        train, test = standardize(train, test)
    return train, test


def evaluate(params: NetworkParams, ds: Dataset) -> tuple[float, float]:
    """Whole-split error fraction and mean cross-entropy loss."""
    fr = forward(params, ds.features)
    pred = np.argmax(fr.logits, axis=1)
    err = float((pred != ds.labels).mean())
    logp = log_softmax_rows(fr.logits)
    loss = float(-logp[np.arange(ds.num_samples), ds.labels].mean())
    return err, loss


def _score_pool(strategy: Strategy, fr: ForwardResult, labels, mms_pool):
    if strategy.kind in ("mms", "uniform"):
        return mms_pool
    if strategy.kind == "hnm":
        return hnm_scores(fr, labels)
    return entropy_scores(fr)


def train(config: RunConfig, metrics_sink=None) -> RunResult:
    """Run Algorithm-1-style selective training for config.total_steps updates.

    Per step: draw a B-sized pool, forward it, score it, select b samples,
    back-propagate on exactly those, apply one SGD update, log one record.
    When ``metrics_sink`` is given, records stream to it as JSON lines and the
    sink is flushed on every evaluation step.
    """
    train_ds, test_ds = load_splits(config)
    arch = parse_arch(config.arch, train_ds.input_dim, train_ds.n_classes)
    params = init_params(arch, RandomStream(config.seed, STREAM_INIT))
    spec = PoolSpec(config.pool_size, config.batch_size, config.pool_policy)
    sampler = PoolSampler(train_ds, spec, RandomStream(config.seed, STREAM_POOL))
    select_stream = RandomStream(config.seed, STREAM_SELECT)
    strategy = Strategy(config.strategy)
    schedule = config.schedule

    checksum = hashlib.sha256()
    records: list[MetricsRecord] = []
    checkpoints: dict[int, NetworkParams] = {}
    traces: dict[int, StepTrace] = {}
    forward_rows = backward_rows = pool_draws = updates = 0
    hits_in_a_row = 0
    early_stopped = False

    for t in range(1, config.total_steps + 1):
        t0 = time.perf_counter()
        try:
            pool_idx = sampler.next_pool()
            pool_draws += 1
            checksum.update(pool_idx.astype("<i8").tobytes())

            x_pool = train_ds.features[pool_idx]
            y_pool = train_ds.labels[pool_idx]
            fr = forward(params, x_pool)
            forward_rows += x_pool.shape[0]

            mms_pool = mms_scores(fr, params.head)
            sel_pool = _score_pool(strategy, fr, y_pool, mms_pool)
            result = select(sel_pool, strategy, config.batch_size, select_stream)
            result = replace(result, mean_mms_10=mean_mms_telemetry(mms_pool, result))

            if t in config.trace_steps:
                traces[t] = StepTrace(
                    step=t,
                    pool_indices=pool_idx.copy(),
                    scores=sel_pool.scores.copy(),
                    selected=result.indices.copy(),
                )
            if t in config.checkpoint_steps:
                checkpoints[t] = params  # pre-update snapshot

            pos = result.indices
            x_b = x_pool[pos]
            y_b = y_pool[pos]
            fr_b = ForwardResult(features=fr.features[pos], logits=fr.logits[pos])
            loss_b, grad = grad_from_forward(params, x_b, fr_b, y_b)
            err_b = float((np.argmax(fr_b.logits, axis=1) != y_b).mean())
            backward_rows += x_b.shape[0]

            lr = lr_at(schedule, t)
            params = sgd_step(params, grad, lr)
            updates += 1

            test_err = None
            is_eval = t % config.eval_every == 0 or t == config.total_steps
            if is_eval:
                test_err, _ = evaluate(params, test_ds)
        except SelTrainError as e:
            raise type(e)(f"step {t}: {e}") from e

        rec = MetricsRecord(
            step=t,
            lr=lr,
            train_loss_batch=loss_b,
            train_err_batch=err_b,
            test_err=test_err,
            mean_mms_10=result.mean_mms_10,
            selected_count=int(pos.shape[0]),
            wall_ms=(time.perf_counter() - t0) * 1000.0,
        )
        records.append(rec)
        if metrics_sink is not None:
            metrics_sink.write(rec.to_json() + "\n")
            if is_eval:
                metrics_sink.flush()

        if config.early_stop_target is not None and test_err is not None:
            hits_in_a_row = hits_in_a_row + 1 if test_err <= config.early_stop_target else 0
            if hits_in_a_row >= config.early_stop_patience:
                early_stopped = True
                log.info("early stop at step %d: test_err %.4f", t, test_err)
                break

    return RunResult(
        records=records,
        params=params,
        pool_checksum=checksum.hexdigest(),
        updates=updates,
        pool_draws=pool_draws,
        forward_rows=forward_rows,
        backward_rows=backward_rows,
        early_stopped=early_stopped,
        checkpoints=checkpoints,
        traces=traces,
    )
