"""End-to-end search orchestration.

Drives every grid cell's trial in lockstep epoch rounds: each round advances
all alive trials by one epoch (optionally on a thread pool; every trial owns
its state, so worker count never changes the numbers), then feeds the
scheduler in cell order. Rung outcomes therefore always resolve within the
round, and trial lines are appended with their final per-epoch status.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .grid import GridCell, HyperGrid, cell_params
from .matrices import LogMatrices, assemble, zscore_outlier_mask
from .quickshift import QuickshiftParams, default_params
from .runstore import RunStore, TrialLine
from .scheduler import Schedule, SchedulerPolicy, init_schedule
from .selector import TwinArtifacts, twin_pipeline
from .tasks import SyntheticTask, make_synthetic_task
from .trainer import (
    STATUS_COMPLETED,
    STATUS_DIVERGED,
    STATUS_STOPPED_EARLY,
    ArchSpec,
    TrainerConfig,
    TrialRecord,
    TrialRunner,
)

__all__ = ["TaskSpec", "SearchResult", "execute_search", "run_and_store", "select_from_records", "slice_records"]


@dataclass(frozen=True)
class TaskSpec:
    """Reproducible recipe for the built-in synthetic task."""

    seed: int = 0
    n_train: int = 150
    n_val: int = 30
    n_test: int = 2000
    n_classes: int = 3
    input_dim: int = 16
    class_separation: float = 2.5
    label_noise: float = 0.15

    def make(self) -> SyntheticTask:
        return make_synthetic_task(
            self.seed,
            self.n_train,
            self.n_val,
            self.n_test,
            self.n_classes,
            self.input_dim,
            self.class_separation,
            self.label_noise,
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "n_test": self.n_test,
            "n_classes": self.n_classes,
            "input_dim": self.input_dim,
            "class_separation": self.class_separation,
            "label_noise": self.label_noise,
        }


@dataclass
class SearchResult:
    records: dict[GridCell, TrialRecord]
    schedule: Schedule
    matrices: LogMatrices | None = None
    artifacts: TwinArtifacts | None = None


def _trial_config(base: TrainerConfig, lr: float, wd: float) -> TrainerConfig:
    return TrainerConfig(
        lr=lr,
        wd=wd,
        momentum=base.momentum,
        epochs=base.epochs,
        batch_size=base.batch_size,
        lr_schedule=base.lr_schedule,
        init_seed=base.init_seed,
    )


def execute_search(
    grid: HyperGrid,
    policy: SchedulerPolicy,
    task: SyntheticTask,
    arch: ArchSpec,
    base_config: TrainerConfig,
    jobs: int = 1,
    store: RunStore | None = None,
    run_id: str | None = None,
) -> SearchResult:
    """Train every grid cell under the policy; optionally persist as it goes."""
    schedule = init_schedule(policy, grid.n_trials)
    runners: dict[GridCell, TrialRunner] = {}
    for cell in grid.cells():
        lr, wd = cell_params(grid, cell)
        runners[cell] = TrialRunner(task, arch, _trial_config(base_config, lr, wd), cell)

    records: dict[GridCell, TrialRecord] = {cell: r.record for cell, r in runners.items()}
    alive = sorted(runners)
    pool = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
    decisions_written = 0
    try:
        while alive:
            if pool is not None:
                list(pool.map(lambda c: runners[c].step_epoch(), alive))
            else:
                for cell in alive:
                    runners[cell].step_epoch()

            for cell in alive:
                rec = records[cell]
                if rec.status == STATUS_DIVERGED:
                    schedule.mark_diverged(cell, rec.epochs_run)
                else:
                    schedule.decide(cell, rec.epochs_run, rec.epochs[-1].train_loss)

            still_alive = []
            for cell in alive:
                rec = records[cell]
                if rec.status == STATUS_DIVERGED:
                    pass
                elif not schedule.is_alive(cell):
                    runners[cell].finish(
                        STATUS_COMPLETED
                        if rec.epochs_run == policy.epoch_budget
                        else STATUS_STOPPED_EARLY
                    )
                else:
                    still_alive.append(cell)
                if store is not None and run_id is not None:
                    entry = rec.epochs[-1]
                    store.append_trial_line(
                        run_id,
                        TrialLine(
                            row=cell.row,
                            col=cell.col,
                            epoch=entry.epoch,
                            train_loss=entry.train_loss,
                            param_norm=entry.param_norm,
                            val_acc=entry.val_metric,
                            test_acc=entry.test_metric,
                            status=rec.status,
                        ),
                    )
            if store is not None and run_id is not None:
                new = schedule.decision_log[decisions_written:]
                if new:
                    store.append_decisions(run_id, new)
                    decisions_written += len(new)
            alive = still_alive
    finally:
        if pool is not None:
            pool.shutdown()

    return SearchResult(records=records, schedule=schedule)


def select_from_records(
    records: dict[GridCell, TrialRecord],
    grid: HyperGrid,
    params: QuickshiftParams | None = None,
) -> tuple[LogMatrices, TwinArtifacts]:
    """Assemble matrices and run the full selection pipeline."""
    mats = assemble(records.values(), grid)
    artifacts = twin_pipeline(mats, grid, params or default_params(grid))
    return mats, artifacts


def slice_records(
    records: dict[GridCell, TrialRecord],
    grid: HyperGrid,
    lr_stride: int,
    wd_stride: int,
) -> tuple[dict[GridCell, TrialRecord], HyperGrid]:
    """Subset a finished run to every stride-th grid line, reindexing cells."""
    from .grid import slice_grid

    sub_grid = slice_grid(grid, lr_stride, wd_stride)
    sub_records: dict[GridCell, TrialRecord] = {}
    for row in range(sub_grid.n_wd):
        for col in range(sub_grid.n_lr):
            src = GridCell(row * wd_stride, col * lr_stride)
            rec = records[src]
            new_cell = GridCell(row, col)
            sub_records[new_cell] = TrialRecord(
                cell=new_cell, epochs=list(rec.epochs), status=rec.status
            )
    return sub_records, sub_grid


def run_and_store(
    store: RunStore,
    run_id: str,
    grid: HyperGrid,
    policy: SchedulerPolicy,
    task_spec: TaskSpec,
    arch: ArchSpec,
    base_config: TrainerConfig,
    quickshift_params: QuickshiftParams | None = None,
    jobs: int = 1,
) -> SearchResult:
    """Full pipeline with persistence: manifest, trials, decisions, matrices, selection."""
    manifest = {
        "grid": grid.to_dict(),
        "scheduler": policy.to_dict(),
        "task": task_spec.to_dict(),
        "arch": arch.to_dict(),
        "trainer": {
            "momentum": base_config.momentum,
            "epochs": base_config.epochs,
            "batch_size": base_config.batch_size,
            "lr_schedule": base_config.lr_schedule,
        },
        "seeds": {"init_seed": base_config.init_seed, "task_seed": task_spec.seed},
    }
    store.create_run(run_id, manifest)
    result = execute_search(
        grid, policy, task_spec.make(), arch, base_config, jobs=jobs, store=store, run_id=run_id
    )
    result.matrices, result.artifacts = select_from_records(
        result.records, grid, quickshift_params
    )
    outliers = zscore_outlier_mask(result.matrices.psi, result.matrices.valid_mask)
    store.write_matrices(run_id, result.matrices, grid, outlier_mask=outliers)
    store.write_selection(run_id, result.artifacts)
    return result
