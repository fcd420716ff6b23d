"""Selective-sampling SGD training toolkit.

Trains multiclass classifiers while choosing, at every step, the candidate
samples closest to the decision boundary (minimal margin score), or by
hard-negative / entropy criteria, out of a larger forward-passed pool.
"""

from .data import Dataset, PoolSpec, draw_pool, gen_gaussian_mixture, load_csv, load_idx
from .errors import (
    ConfigError,
    DataFormatError,
    DimensionError,
    NumericError,
    SelTrainError,
)
from .model import (
    ArchSpec,
    ForwardResult,
    HiddenLayer,
    LinearHead,
    NetworkParams,
    forward,
    init_params,
    load_params,
    loss_and_grad,
    save_params,
    sgd_step,
)
from .numerics import RandomStream, l2_norm, matmul, softmax
from .scoring import ScoredPool, boundary_displacement, entropy_scores, hnm_scores, mms_scores
from .selection import SelectionResult, Strategy, mean_mms_telemetry, select
from .trainer import (
    DataSource,
    LrSchedule,
    MetricsRecord,
    RunConfig,
    RunResult,
    evaluate,
    lr_at,
    lr_preset,
    train,
)

__version__ = "0.1.0"
