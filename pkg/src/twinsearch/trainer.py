"""Mini-batch momentum-SGD trainer for small ReLU MLPs.

Gradients are hand-coded (softmax cross-entropy backprop) so they can be
checked against central finite differences. Parameters live in one flat
float64 vector; the L2 term enters the update as grad + wd * theta, and the
logged train loss is the plain cross-entropy (mean of the epoch's batch
means). The logged norm covers all trainable parameters, biases included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridCell
from .tasks import SyntheticTask

__all__ = [
    "ArchSpec",
    "TrainerConfig",
    "EpochLog",
    "TrialRecord",
    "MLP",
    "TrialRunner",
    "cosine_lr",
    "schedule_lr",
    "sgdm_step",
    "param_l2_norm",
    "run_trial",
    "STATUS_COMPLETED",
    "STATUS_STOPPED_EARLY",
    "STATUS_DIVERGED",
    "STATUS_RUNNING",
]

STATUS_RUNNING = "running"
STATUS_COMPLETED = "completed"
STATUS_STOPPED_EARLY = "stopped_early"
STATUS_DIVERGED = "diverged"
TERMINAL_STATUSES = frozenset({STATUS_COMPLETED, STATUS_STOPPED_EARLY, STATUS_DIVERGED})

LR_SCHEDULES = ("cosine", "piecewise", "constant")


@dataclass(frozen=True)
class ArchSpec:
    """Hidden-layer widths of the MLP; input/output sizes come from the task."""

    hidden: tuple[int, ...] = (32,)

    def __post_init__(self) -> None:
        if any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden widths must be positive, got {self.hidden}")

    def to_dict(self) -> dict:
        return {"hidden": list(self.hidden)}


@dataclass(frozen=True)
class TrainerConfig:
    lr: float
    wd: float
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 32
    lr_schedule: str = "cosine"
    init_seed: int = 0

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.wd < 0:
            raise ValueError(f"wd must be non-negative, got {self.wd}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {LR_SCHEDULES}, got {self.lr_schedule!r}")

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "wd": self.wd,
            "momentum": self.momentum,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr_schedule": self.lr_schedule,
            "init_seed": self.init_seed,
        }


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    param_norm: float
    val_metric: float | None = None
    test_metric: float | None = None


@dataclass
class TrialRecord:
    """Per-epoch log of one trial; the source of the loss/norm matrices."""

    cell: GridCell
    epochs: list[EpochLog] = field(default_factory=list)
    status: str = STATUS_RUNNING

    @property
    def epochs_run(self) -> int:
        return len(self.epochs)

    def train_losses(self) -> np.ndarray:
        return np.array([e.train_loss for e in self.epochs], dtype=np.float64)


def cosine_lr(lr0: float, t: int, epochs: int) -> float:
    """Per-epoch cosine decay: lr0 * 0.5 * (1 + cos(pi * t / epochs))."""
    if not 0 <= t < epochs:
        raise ValueError(f"epoch index {t} outside [0, {epochs})")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * t / epochs))


def schedule_lr(config: TrainerConfig, t: int) -> float:
    if config.lr_schedule == "cosine":
        return cosine_lr(config.lr, t, config.epochs)
    if config.lr_schedule == "piecewise":
        # step decay: x0.1 at 50% of the budget, x0.01 at 75%
        if t >= 0.75 * config.epochs:
            return config.lr * 0.01
        if t >= 0.5 * config.epochs:
            return config.lr * 0.1
        return config.lr
    return config.lr


def sgdm_step(
    theta: np.ndarray,
    velocity: np.ndarray,
    grad: np.ndarray,
    lr_t: float,
    wd: float,
    momentum: float,
) -> tuple[np.ndarray, np.ndarray]:
    """One momentum-SGD update with L2-coupled decay.

    g = grad + wd * theta; v' = momentum * v + g; theta' = theta - lr_t * v'.
    """
    g = grad + wd * theta
    velocity = momentum * velocity + g
    return theta - lr_t * velocity, velocity


def param_l2_norm(theta: np.ndarray) -> float:
    """Euclidean norm over the full parameter vector."""
    return float(np.linalg.norm(theta))


class MLP:
    """ReLU MLP over a flat parameter vector, with exact backprop gradients."""

    def __init__(self, input_dim: int, hidden: tuple[int, ...], n_classes: int):
        self.sizes = [input_dim, *hidden, n_classes]
        self._slices: list[tuple[slice, slice, int, int]] = []
        offset = 0
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            w = slice(offset, offset + n_in * n_out)
            offset += n_in * n_out
            b = slice(offset, offset + n_out)
            offset += n_out
            self._slices.append((w, b, n_in, n_out))
        self.n_params = offset

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        theta = np.zeros(self.n_params)
        for w, _b, n_in, n_out in self._slices:
            theta[w] = rng.standard_normal(n_in * n_out) * math.sqrt(2.0 / n_in)
        return theta

    def _layers(self, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        return [
            (theta[w].reshape(n_in, n_out), theta[b])
            for w, b, n_in, n_out in self._slices
        ]

    def logits(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
        a = x
        layers = self._layers(theta)
        for wm, bv in layers[:-1]:
            a = np.maximum(a @ wm + bv, 0.0)
        wm, bv = layers[-1]
        return a @ wm + bv

    def loss(self, theta: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        z = self.logits(theta, x)
        z = z - z.max(axis=1, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=1))
        return float(np.mean(lse - z[np.arange(len(y)), y]))

    def loss_and_grad(
        self, theta: np.ndarray, x: np.ndarray, y: np.ndarray
    ) -> tuple[float, np.ndarray]:
        layers = self._layers(theta)
        pre: list[np.ndarray] = []
        acts = [x]
        a = x
        for wm, bv in layers[:-1]:
            z = a @ wm + bv
            pre.append(z)
            a = np.maximum(z, 0.0)
            acts.append(a)
        wm, bv = layers[-1]
        z = a @ wm + bv

        zs = z - z.max(axis=1, keepdims=True)
        expz = np.exp(zs)
        probs = expz / expz.sum(axis=1, keepdims=True)
        n = len(y)
        loss = float(np.mean(np.log(expz.sum(axis=1)) - zs[np.arange(n), y]))

        grad = np.zeros_like(theta)
        delta = probs
        delta[np.arange(n), y] -= 1.0
        delta /= n
        for i in range(len(layers) - 1, -1, -1):
            w_sl, b_sl, n_in, n_out = self._slices[i]
            grad[w_sl] = (acts[i].T @ delta).ravel()
            grad[b_sl] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ layers[i][0].T) * (pre[i - 1] > 0.0)
        return loss, grad

    def accuracy(self, theta: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.logits(theta, x).argmax(axis=1) == y))


class TrialRunner:
    """Owns one trial's model state and advances it one epoch at a time.

    Batch order and initialization derive from (init_seed, cell), so every
    trial is an independent, replayable stream.
    """

    def __init__(
        self,
        task: SyntheticTask,
        arch: ArchSpec,
        config: TrainerConfig,
        cell: GridCell = GridCell(0, 0),
    ):
        self.task = task
        self.config = config
        self.cell = cell
        self.model = MLP(task.input_dim, arch.hidden, task.n_classes)
        self.rng = np.random.default_rng(
            np.random.SeedSequence([config.init_seed, cell.row, cell.col])
        )
        self.theta = self.model.init_params(self.rng)
        self.velocity = np.zeros_like(self.theta)
        self.record = TrialRecord(cell=cell)

    @property
    def done(self) -> bool:
        return self.record.status in TERMINAL_STATUSES

    def finish(self, status: str) -> TrialRecord:
        if status not in TERMINAL_STATUSES:
            raise ValueError(f"not a terminal status: {status!r}")
        if not self.done:
            self.record.status = status
        return self.record

    def step_epoch(self) -> EpochLog:
        """Run one epoch; logs metrics and flags divergence on non-finite values."""
        if self.done:
            raise RuntimeError(f"trial {self.cell} already finished ({self.record.status})")
        epoch = self.record.epochs_run
        if epoch >= self.config.epochs:
            raise RuntimeError(f"trial {self.cell} exhausted its {self.config.epochs}-epoch budget")
        lr_t = schedule_lr(self.config, epoch)
        x, y = self.task.train_inputs, self.task.train_labels
        order = self.rng.permutation(len(y))
        batch_losses = []
        with np.errstate(over="ignore", invalid="ignore", under="ignore", divide="ignore"):
            for start in range(0, len(y), self.config.batch_size):
                idx = order[start : start + self.config.batch_size]
                loss, grad = self.model.loss_and_grad(self.theta, x[idx], y[idx])
                self.theta, self.velocity = sgdm_step(
                    self.theta, self.velocity, grad, lr_t, self.config.wd, self.config.momentum
                )
                batch_losses.append(loss)
            train_loss = float(np.mean(batch_losses))
            norm = param_l2_norm(self.theta)
            val_metric = test_metric = None
            if math.isfinite(train_loss) and math.isfinite(norm):
                if self.task.n_val:
                    val_metric = self.model.accuracy(self.theta, self.task.val_inputs, self.task.val_labels)
                if self.task.n_test:
                    test_metric = self.model.accuracy(self.theta, self.task.test_inputs, self.task.test_labels)
        entry = EpochLog(epoch, train_loss, norm, val_metric, test_metric)
        self.record.epochs.append(entry)
        if not (math.isfinite(train_loss) and math.isfinite(norm)):
            self.record.status = STATUS_DIVERGED
        elif epoch + 1 == self.config.epochs:
            self.record.status = STATUS_COMPLETED
        return entry


def run_trial(
    task: SyntheticTask,
    arch: ArchSpec,
    config: TrainerConfig,
    stop_signal=None,
    cell: GridCell = GridCell(0, 0),
) -> TrialRecord:
    """Train one (lr, wd) trial to completion, divergence, or external stop.

    ``stop_signal`` is anything with ``is_set()`` (e.g. threading.Event),
    polled between epochs only.
    """
    runner = TrialRunner(task, arch, config, cell)
    while not runner.done:
        if stop_signal is not None and stop_signal.is_set():
            return runner.finish(STATUS_STOPPED_EARLY)
        runner.step_epoch()
    return runner.record
