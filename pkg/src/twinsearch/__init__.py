"""twinsearch: validation-free learning-rate / weight-decay search.

Grid-search trials over log-spaced (LR, WD) pairs, log training loss and
parameter norm, segment the loss landscape, and pick the lowest-norm
configuration inside the best-fitting region. Baselines and an evaluation
harness score the pick against train-loss-only and oracle selection.
"""

from .grid import GridCell, HyperGrid, build_log_grid, cell_params, nearest_cell, slice_grid
from .matrices import (
    LogMatrices,
    MetricSurfaces,
    NormalizedLoss,
    assemble,
    build_metric_surfaces,
    normalize_invert,
    summarize_loss,
    zscore_outlier_mask,
)
from .quickshift import (
    QuickshiftParams,
    SegmentLabels,
    compute_density,
    default_params,
    label_segments,
    link_parents,
    quickshift,
)
from .scheduler import Decision, Schedule, SchedulerPolicy, ScheduleError, init_schedule
from .search import TaskSpec, execute_search, run_and_store, select_from_records, slice_records
from .selector import (
    EvalReport,
    Selection,
    baseline_select,
    evaluate,
    region_stats,
    twin_pipeline,
    twin_select,
)
from .tasks import SyntheticTask, make_synthetic_task
from .trainer import (
    ArchSpec,
    TrainerConfig,
    TrialRecord,
    TrialRunner,
    cosine_lr,
    param_l2_norm,
    run_trial,
    sgdm_step,
)

__version__ = "0.1.0"
