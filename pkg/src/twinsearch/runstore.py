"""Durable, replayable run persistence.

Directory layout (the public contract for external training systems):

    runs/<run_id>/
        manifest.json        grid, scheduler policy, trainer/arch/task specs, seeds
        trials/<row>_<col>.jsonl   one line per epoch, append-only
        decisions.jsonl      scheduler decision log (rung outcomes + terminal stops)
        matrices.json        psi/theta/masks/epochs_run, row-major
        selection.json       the twin pick with full provenance
        baselines.json       baseline picks (written by the baseline command)
        eval_report.json     method-vs-oracle errors

Plain JSON cannot carry non-finite floats, so they are encoded as the
strings "NaN"/"Inf"/"-Inf". Field order is fixed and floats use Python's
shortest-round-trip repr, which makes write/load cycles bit-exact. A torn
final trial line (crash mid-append) is dropped with a warning on load;
corruption anywhere else is an error.
"""

from __future__ import annotations

import json
import math
import os
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .grid import GridCell, HyperGrid
from .scheduler import SchedulerPolicy, rung_levels
from .trainer import (
    STATUS_RUNNING,
    TERMINAL_STATUSES,
    EpochLog,
    TrialRecord,
)

__all__ = [
    "TrialLine",
    "RunStore",
    "RunStoreError",
    "RunNotFoundError",
    "encode_json",
    "decode_json",
    "resume_plan",
]

TOOL_VERSION = "0.1.0"

_TRIAL_FILE_RE = re.compile(r"^(\d+)_(\d+)\.jsonl$")


class RunStoreError(RuntimeError):
    pass


class RunNotFoundError(RunStoreError):
    pass


def _encode(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "NaN"
        if math.isinf(obj):
            return "Inf" if obj > 0 else "-Inf"
        return obj
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    return obj


def _decode_float(value):
    if value is None:
        return None
    if isinstance(value, str):
        if value == "NaN":
            return math.nan
        if value == "Inf":
            return math.inf
        if value == "-Inf":
            return -math.inf
        raise RunStoreError(f"not a float encoding: {value!r}")
    return float(value)


def encode_json(obj, indent: int | None = 2) -> str:
    """Canonical JSON text: insertion order kept, non-finite floats as strings."""
    if indent is None:
        return json.dumps(_encode(obj), separators=(",", ":"))
    return json.dumps(_encode(obj), indent=indent)


def decode_json(text: str):
    return json.loads(text)


@dataclass(frozen=True)
class TrialLine:
    """One epoch of one trial, as persisted."""

    row: int
    col: int
    epoch: int
    train_loss: float
    param_norm: float
    val_acc: float | None = None
    test_acc: float | None = None
    status: str = STATUS_RUNNING

    def to_json(self) -> str:
        payload = {
            "row": self.row,
            "col": self.col,
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "param_norm": self.param_norm,
            "val_acc": self.val_acc,
            "test_acc": self.test_acc,
            "status": self.status,
        }
        return encode_json(payload, indent=None)

    @classmethod
    def from_dict(cls, d: dict) -> "TrialLine":
        required = ("row", "col", "epoch", "train_loss", "param_norm", "status")
        for key in required:
            if key not in d:
                raise RunStoreError(f"trial line missing field {key!r}")
        for key in ("row", "col", "epoch"):
            if not isinstance(d[key], int) or d[key] < 0:
                raise RunStoreError(f"trial line field {key!r} must be a non-negative integer")
        if d["status"] not in TERMINAL_STATUSES and d["status"] != STATUS_RUNNING:
            raise RunStoreError(f"trial line field 'status' has unknown value {d['status']!r}")
        return cls(
            row=d["row"],
            col=d["col"],
            epoch=d["epoch"],
            train_loss=_decode_float(d["train_loss"]),
            param_norm=_decode_float(d["param_norm"]),
            val_acc=_decode_float(d.get("val_acc")),
            test_acc=_decode_float(d.get("test_acc")),
            status=d["status"],
        )


class RunStore:
    """All reads and writes for one store root (default ./runs)."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self._manifest_cache: dict[str, dict] = {}
        self._epoch_cache: dict[tuple[str, int, int], int] = {}

    def run_dir(self, run_id: str) -> Path:
        return self.root / run_id

    # -- writing ----------------------------------------------------------

    def create_run(self, run_id: str, manifest: dict) -> Path:
        run_dir = self.run_dir(run_id)
        if run_dir.exists():
            raise RunStoreError(f"run {run_id!r} already exists at {run_dir}")
        (run_dir / "trials").mkdir(parents=True)
        payload = {"run_id": run_id, "tool_version": TOOL_VERSION, **manifest}
        self._write_text(run_dir / "manifest.json", encode_json(payload) + "\n")
        return run_dir

    def append_trial_line(self, run_id: str, line: TrialLine) -> None:
        run_dir = self.run_dir(run_id)
        if run_id not in self._manifest_cache:
            if not (run_dir / "manifest.json").exists():
                raise RunStoreError(f"run {run_id!r} has no manifest; create the run first")
            self._manifest_cache[run_id] = self.load_manifest(run_id)
        shape = _grid_shape(self._manifest_cache[run_id])
        if not (0 <= line.row < shape[0] and 0 <= line.col < shape[1]):
            raise RunStoreError(f"cell ({line.row}, {line.col}) outside grid of shape {shape}")
        path = run_dir / "trials" / f"{line.row}_{line.col}.jsonl"
        key = (run_id, line.row, line.col)
        if key not in self._epoch_cache:
            last = self._last_epoch(path)
            self._epoch_cache[key] = -1 if last is None else last
        if line.epoch <= self._epoch_cache[key]:
            raise RunStoreError(
                f"epoch {line.epoch} not after last logged epoch {self._epoch_cache[key]} "
                f"for cell ({line.row}, {line.col})"
            )
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line.to_json() + "\n")
            fh.flush()
        self._epoch_cache[key] = line.epoch

    def append_decisions(self, run_id: str, decisions: Iterable[dict]) -> None:
        path = self.run_dir(run_id) / "decisions.jsonl"
        with open(path, "a", encoding="utf-8") as fh:
            for d in decisions:
                fh.write(encode_json(d, indent=None) + "\n")
            fh.flush()

    def write_matrices(self, run_id: str, matrices, grid: HyperGrid, outlier_mask=None) -> None:
        payload = {
            "shape": list(grid.shape),
            "layout": "row-major",
            "psi": [float(v) for v in matrices.psi.ravel()],
            "theta": [float(v) for v in matrices.theta.ravel()],
            "valid_mask": [bool(v) for v in matrices.valid_mask.ravel()],
            "epochs_run": [int(v) for v in matrices.epochs_run.ravel()],
        }
        if outlier_mask is not None:
            payload["outlier_mask"] = [bool(v) for v in outlier_mask.ravel()]
        self._write_text(self.run_dir(run_id) / "matrices.json", encode_json(payload) + "\n")

    def load_matrices(self, run_id: str):
        import numpy as np

        from .matrices import LogMatrices

        path = self.run_dir(run_id) / "matrices.json"
        if not path.exists():
            raise RunStoreError(f"missing artifact: {path}")
        d = decode_json(path.read_text(encoding="utf-8"))
        shape = tuple(d["shape"])
        psi = np.array([_decode_float(v) for v in d["psi"]]).reshape(shape)
        theta = np.array([_decode_float(v) for v in d["theta"]]).reshape(shape)
        valid = np.array(d["valid_mask"], dtype=bool).reshape(shape)
        epochs = np.array(d["epochs_run"], dtype=np.int64).reshape(shape)
        return LogMatrices(psi=psi, theta=theta, valid_mask=valid, epochs_run=epochs)

    def write_selection(self, run_id: str, artifacts) -> None:
        sel = artifacts.selection
        payload = {
            "selection": sel.to_dict(),
            "quickshift_params": artifacts.params.to_dict(),
            "region_means": [float(v) for v in artifacts.region_means],
            "labels": [int(v) for v in artifacts.segments.labels.ravel()],
            "outlier_mask": [bool(v) for v in artifacts.normalized.outlier_mask.ravel()],
            "shape": list(artifacts.segments.labels.shape),
            "layout": "row-major",
        }
        self._write_text(self.run_dir(run_id) / "selection.json", encode_json(payload) + "\n")

    def write_baselines(self, run_id: str, selections: Iterable) -> None:
        payload = {"selections": [s.to_dict() for s in selections]}
        self._write_text(self.run_dir(run_id) / "baselines.json", encode_json(payload) + "\n")

    def write_eval_report(self, run_id: str, report) -> None:
        self._write_text(
            self.run_dir(run_id) / "eval_report.json", encode_json(report.to_dict()) + "\n"
        )

    # -- loading ----------------------------------------------------------

    def load_manifest(self, run_id: str) -> dict:
        path = self.run_dir(run_id) / "manifest.json"
        if not path.exists():
            raise RunNotFoundError(f"run {run_id!r} has no manifest at {path}")
        return decode_json(path.read_text(encoding="utf-8"))

    def load_run(self, run_id: str) -> tuple[dict, dict[GridCell, TrialRecord], list[dict]]:
        """Manifest, per-cell records (partial trials included), decision log."""
        manifest = self.load_manifest(run_id)
        run_dir = self.run_dir(run_id)
        records: dict[GridCell, TrialRecord] = {}
        trials_dir = run_dir / "trials"
        if trials_dir.exists():
            for name in sorted(os.listdir(trials_dir)):
                m = _TRIAL_FILE_RE.match(name)
                if not m:
                    continue
                cell = GridCell(int(m.group(1)), int(m.group(2)))
                records[cell] = self._load_trial_file(trials_dir / name, cell)
        decisions = []
        decisions_path = run_dir / "decisions.jsonl"
        if decisions_path.exists():
            for i, raw in enumerate(self._read_jsonl(decisions_path), start=1):
                decisions.append(raw)
        return manifest, records, decisions

    def _load_trial_file(self, path: Path, cell: GridCell) -> TrialRecord:
        record = TrialRecord(cell=cell)
        last_epoch = -1
        for d in self._read_jsonl(path):
            line = TrialLine.from_dict(d)
            if (line.row, line.col) != (cell.row, cell.col):
                raise RunStoreError(f"{path}: line for cell ({line.row}, {line.col}) in wrong file")
            if line.epoch != last_epoch + 1:
                raise RunStoreError(
                    f"{path}: epoch {line.epoch} breaks contiguity after {last_epoch}"
                )
            last_epoch = line.epoch
            record.epochs.append(
                EpochLog(line.epoch, line.train_loss, line.param_norm, line.val_acc, line.test_acc)
            )
            if line.status in TERMINAL_STATUSES:
                record.status = line.status
        return record

    def _read_jsonl(self, path: Path) -> list[dict]:
        raw = path.read_bytes()
        out = []
        chunks = raw.split(b"\n")
        torn_tail = chunks[-1] != b""  # no trailing newline: final append was cut short
        lines = [c for c in chunks if c != b""]
        for i, chunk in enumerate(lines, start=1):
            try:
                out.append(json.loads(chunk.decode("utf-8")))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                if i == len(lines):
                    warnings.warn(f"{path}: dropping torn final line {i}: {exc}")
                    return out
                raise RunStoreError(f"{path}: corrupt line {i}: {exc}") from exc
        if torn_tail and lines:
            # parsed fine but unterminated: treat as torn, the writer always ends lines
            warnings.warn(f"{path}: dropping unterminated final line {len(lines)}")
            return out[:-1]
        return out

    def list_runs(self) -> list[str]:
        if not self.root.exists():
            return []
        return sorted(p.name for p in self.root.iterdir() if (p / "manifest.json").exists())

    @staticmethod
    def _last_epoch(path: Path) -> int | None:
        if not path.exists():
            return None
        last = None
        with open(path, "rb") as fh:
            for chunk in fh.read().split(b"\n"):
                if not chunk:
                    continue
                try:
                    last = json.loads(chunk.decode("utf-8")).get("epoch", last)
                except (json.JSONDecodeError, UnicodeDecodeError):
                    continue  # torn tail; load_run reports it
        return last

    @staticmethod
    def _write_text(path: Path, text: str) -> None:
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)


def _grid_shape(manifest: dict) -> tuple[int, int]:
    g = manifest.get("grid")
    if not g:
        raise RunStoreError("manifest has no grid")
    return (len(g["wd_values"]), len(g["lr_values"]))


def resume_plan(
    manifest: dict,
    records: dict[GridCell, TrialRecord],
    decisions: Iterable[dict] = (),
) -> list[tuple[GridCell, int]]:
    """Cells still owed epochs under the manifest's policy, with the epoch to resume at.

    A cell is finished when its record carries a terminal status or the
    decision log shows a stop for it; everything else resumes at its next
    epoch index. Cells with no record at all start from epoch 0.
    """
    policy = SchedulerPolicy.from_dict(manifest["scheduler"])
    shape = _grid_shape(manifest)
    stopped = {
        GridCell(d["row"], d["col"]) for d in decisions if d.get("decision") == "stop"
    }
    plan: list[tuple[GridCell, int]] = []
    for row in range(shape[0]):
        for col in range(shape[1]):
            cell = GridCell(row, col)
            rec = records.get(cell)
            if rec is not None and rec.status in TERMINAL_STATUSES:
                continue
            if cell in stopped:
                continue
            done = rec.epochs_run if rec is not None else 0
            if done >= policy.epoch_budget:
                continue
            plan.append((cell, done))
    return plan
