"""Loss/norm matrix assembly, outlier filtering, and normalization.

``psi`` holds the summarized training loss per grid cell (mean of the last
five logged epochs), ``theta`` the parameter norm at the last logged epoch.
Cells with non-finite entries are invalid; the z-score filter additionally
masks statistical outliers before the loss surface is normalized, inverted
(lowest loss -> 1) and segmented.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .grid import GridCell, HyperGrid
from .trainer import TrialRecord

__all__ = [
    "LogMatrices",
    "NormalizedLoss",
    "MetricSurfaces",
    "summarize_loss",
    "assemble",
    "zscore_outlier_mask",
    "normalize_invert",
    "build_metric_surfaces",
]

LAST_K = 5  # epochs averaged into the loss summary


@dataclass
class LogMatrices:
    psi: np.ndarray  # (n_wd, n_lr) summarized train loss
    theta: np.ndarray  # (n_wd, n_lr) final parameter norm
    valid_mask: np.ndarray  # True where both entries are finite
    epochs_run: np.ndarray  # (n_wd, n_lr) ints

    def __post_init__(self) -> None:
        shapes = {self.psi.shape, self.theta.shape, self.valid_mask.shape, self.epochs_run.shape}
        if len(shapes) != 1:
            raise ValueError(f"matrix shapes disagree: {shapes}")
        finite = np.isfinite(self.psi) & np.isfinite(self.theta)
        if np.any(self.valid_mask & ~finite):
            raise ValueError("valid_mask must be false wherever psi or theta is non-finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.psi.shape


@dataclass
class NormalizedLoss:
    """Minmax-normalized, inverted loss surface; masked cells carry NaN."""

    values: np.ndarray
    outlier_mask: np.ndarray  # True = excluded (z-score outlier or invalid)


@dataclass
class MetricSurfaces:
    """Per-cell selection metrics for the baselines.

    Summaries follow the baseline convention: last-epoch value under FIFO,
    mean of the last five logged epochs under early stopping. NaN where a
    metric was never logged.
    """

    train_loss: np.ndarray
    val_acc: np.ndarray
    test_acc: np.ndarray


def summarize_loss(record: TrialRecord, scheduler_kind: str | None = None) -> float:
    """Mean train loss over the last ``min(5, epochs_run)`` epochs.

    Scheduler-independent by design: early-stopped trials summarize the same
    way as full runs (``scheduler_kind`` is accepted for interface parity).
    """
    if record.epochs_run == 0:
        raise ValueError(f"trial {record.cell} has no logged epochs")
    losses = record.train_losses()
    return float(np.mean(losses[-LAST_K:]))


def _records_by_cell(records: Iterable[TrialRecord], grid: HyperGrid) -> dict[GridCell, TrialRecord]:
    expected = set(grid.cells())
    by_cell: dict[GridCell, TrialRecord] = {}
    duplicates = []
    for rec in records:
        if rec.cell in by_cell:
            duplicates.append(rec.cell)
        by_cell[rec.cell] = rec
    unknown = sorted(set(by_cell) - expected)
    missing = sorted(expected - set(by_cell))
    if duplicates:
        raise ValueError(f"duplicate records for cells {sorted(set(duplicates))}")
    if unknown:
        raise ValueError(f"records for cells outside the grid: {unknown}")
    if missing:
        raise ValueError(f"missing records for cells {missing}")
    return by_cell


def assemble(records: Iterable[TrialRecord], grid: HyperGrid) -> LogMatrices:
    """Build the loss/norm matrices from exactly one record per grid cell."""
    by_cell = _records_by_cell(records, grid)
    shape = grid.shape
    psi = np.full(shape, np.nan)
    theta = np.full(shape, np.nan)
    epochs_run = np.zeros(shape, dtype=np.int64)
    for cell, rec in by_cell.items():
        if rec.epochs_run == 0:
            raise ValueError(f"trial {cell} has no logged epochs")
        psi[cell.row, cell.col] = summarize_loss(rec)
        theta[cell.row, cell.col] = rec.epochs[-1].param_norm
        epochs_run[cell.row, cell.col] = rec.epochs_run
    valid = np.isfinite(psi) & np.isfinite(theta)
    return LogMatrices(psi=psi, theta=theta, valid_mask=valid, epochs_run=epochs_run)


def zscore_outlier_mask(psi: np.ndarray, valid_mask: np.ndarray) -> np.ndarray:
    """Mask cells whose |z| exceeds 2 over the valid population, plus invalid cells.

    Population standard deviation; strict inequality; a constant surface
    (sigma = 0) has no outliers.
    """
    if not np.any(valid_mask):
        raise ValueError("no trainable configuration: all grid cells are invalid")
    values = psi[valid_mask]
    mean = float(np.mean(values))
    std = float(np.std(values))
    outliers = np.zeros_like(valid_mask)
    if std > 0:
        z = np.abs(psi - mean) / std
        outliers = valid_mask & (z > 2.0)
    return outliers | ~valid_mask


def normalize_invert(psi: np.ndarray, outlier_mask: np.ndarray) -> NormalizedLoss:
    """Minmax-scale the loss over non-masked cells, then invert: lowest loss -> 1."""
    keep = ~outlier_mask
    if not np.any(keep):
        raise ValueError("no trainable configuration: all grid cells are masked")
    values = np.full(psi.shape, np.nan)
    kept = psi[keep]
    lo, hi = float(np.min(kept)), float(np.max(kept))
    if hi == lo:
        values[keep] = 0.5  # degenerate flat landscape stays segmentable
    else:
        values[keep] = 1.0 - (psi[keep] - lo) / (hi - lo)
    return NormalizedLoss(values=values, outlier_mask=outlier_mask)


def _summarize_metric(values: list[float | None], kind: str) -> float:
    logged = [v for v in values if v is not None]
    if not logged:
        return math.nan
    if kind == "fifo":
        return float(logged[-1])
    return float(np.mean(logged[-LAST_K:]))


def build_metric_surfaces(
    records: Iterable[TrialRecord], grid: HyperGrid, scheduler_kind: str
) -> MetricSurfaces:
    """Baseline metric matrices from the same records the loss matrices use."""
    if scheduler_kind not in ("fifo", "hb"):
        raise ValueError(f"scheduler_kind must be 'fifo' or 'hb', got {scheduler_kind!r}")
    by_cell = _records_by_cell(records, grid)
    shape = grid.shape
    train_loss = np.full(shape, np.nan)
    val_acc = np.full(shape, np.nan)
    test_acc = np.full(shape, np.nan)
    for cell, rec in by_cell.items():
        r, c = cell.row, cell.col
        train_loss[r, c] = _summarize_metric([e.train_loss for e in rec.epochs], scheduler_kind)
        val_acc[r, c] = _summarize_metric([e.val_metric for e in rec.epochs], scheduler_kind)
        test_acc[r, c] = _summarize_metric([e.test_metric for e in rec.epochs], scheduler_kind)
    return MetricSurfaces(train_loss=train_loss, val_acc=val_acc, test_acc=test_acc)
