"""
Hierarchical task learning scheduler.

Each task's loss weight follows w_i(t) = (t / T) ** (1 - alpha_i(t)), where
alpha_i is the product of the learning situations ls_j of the task's
pre-tasks. A task whose pre-tasks have converged ramps up immediately; one
whose pre-tasks are still moving ramps linearly.
"""
import logging
import math
from collections import deque
from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter

import numpy as np

from .choices import LossMode
from .exceptions import DomainError, HTLGraphError
from .training import compose_total_loss

logger = logging.getLogger(__name__)

STAGE_2D = ('heatmap', 'offset_2d', 'size_2d')
STAGE_3D = ('angle', 'offset_3d', 'size_3d')

DEFAULT_TASK_GRAPH = {
    'heatmap': set(),
    'offset_2d': set(),
    'size_2d': set(),
    'angle': set(STAGE_2D),
    'offset_3d': set(STAGE_2D),
    'size_3d': set(STAGE_2D),
    'depth': set(STAGE_2D) | {'size_3d'},
}


def htl_weight(t, T, alpha):
    if not 0 <= t <= T:
        raise DomainError(f'Epoch {t} outside [0, {T}]')
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f'alpha must lie in [0, 1], got {alpha}')
    return (t / T) ** (1.0 - alpha)


def _trend(values):
    """Mean absolute first difference of a loss window"""
    return float(np.mean(np.abs(np.diff(np.asarray(values, dtype=float)))))


def _clamp_situation(ls):
    if ls < 0 or ls > 1:
        logger.warning(f'Learning situation {ls:.4f} clamped to [0, 1]')
    return min(max(ls, 0.0), 1.0)


def learning_situation(history, K, t):
    """
    Scale-invariant convergence indicator in [0, 1].

    Compares the mean absolute loss change over the last K epochs up to ``t``
    with the same quantity over the first K epochs. Before epoch K there is no
    reference trend yet and the indicator is 0.
    """
    if K < 1:
        raise DomainError(f'Trend window K must be at least 1, got {K}')
    if t >= len(history):
        raise DomainError(f'History covers {len(history)} epochs, cannot query epoch {t}')
    if t < K:
        return 0.0
    initial = _trend(history[:K + 1])
    if initial == 0:
        return 1.0
    current = _trend(history[t - K:t + 1])
    return _clamp_situation((initial - current) / initial)


class TaskHistory:
    """Loss history keeping the first K+1 values and a ring buffer of the last K+1"""

    def __init__(self, window):
        self.window = window
        self.head = []
        self.recent = deque(maxlen=window + 1)
        self.count = 0

    def append(self, loss):
        loss = float(loss)
        if not math.isfinite(loss):
            raise DomainError(f'Non-finite loss {loss} in HTL history')
        if len(self.head) < self.window + 1:
            self.head.append(loss)
        self.recent.append(loss)
        self.count += 1

    @property
    def last(self):
        return self.recent[-1]

    def learning_situation(self):
        t = self.count - 1
        if t < self.window:
            return 0.0
        initial = _trend(self.head)
        if initial == 0:
            return 1.0
        return _clamp_situation((initial - _trend(list(self.recent))) / initial)


@dataclass(frozen=True)
class HTLRecord:
    epoch: int
    task: str
    loss: float
    ls: float
    alpha: float
    weight: float


class HTLState:
    """
    Scheduler state for one training run.

    ``step`` is called once per epoch with every task's loss; it records the
    losses as epoch t (0-based) and returns the task weights for that epoch.
    """

    def __init__(self, graph=None, total_epochs=100, window=5):
        graph = {task: set(pre) for task, pre in (graph or DEFAULT_TASK_GRAPH).items()}
        unknown = {pre for pres in graph.values() for pre in pres} - set(graph)
        if unknown:
            raise HTLGraphError(f'Unknown pre-tasks: {sorted(unknown)}')
        try:
            self.order = tuple(TopologicalSorter(graph).static_order())
        except CycleError as exc:
            raise HTLGraphError(f'Task graph has a cycle: {exc.args[1]}') from exc
        if total_epochs < 1:
            raise DomainError(f'Total epochs must be positive, got {total_epochs}')
        if window < 1:
            raise DomainError(f'Trend window must be at least 1, got {window}')
        self.graph = graph
        self.total_epochs = total_epochs
        self.window = window
        self.histories = {task: TaskHistory(window) for task in graph}
        self.epoch = -1

    def step(self, losses):
        missing = set(self.graph) - set(losses)
        if missing:
            raise DomainError(f'Missing losses for tasks: {sorted(missing)}')
        self.epoch += 1
        if self.epoch > self.total_epochs:
            raise DomainError(f'Epoch {self.epoch} exceeds the scheduled {self.total_epochs} epochs')
        for task in self.order:
            self.histories[task].append(losses[task])

        situations = {task: history.learning_situation() for task, history in self.histories.items()}
        records = []
        for task in self.order:
            alpha = math.prod(situations[pre] for pre in self.graph[task])
            weight = htl_weight(self.epoch, self.total_epochs, alpha)
            records.append(HTLRecord(
                epoch=self.epoch,
                task=task,
                loss=self.histories[task].last,
                ls=situations[task],
                alpha=alpha,
                weight=weight,
            ))
        return records

    def weights(self, records):
        return {record.task: record.weight for record in records}


def htl_step(state, losses):
    """Advance ``state`` by one epoch and return {task: weight}"""
    return state.weights(state.step(losses))


def synthetic_loss_curves(tasks, total_epochs, seed, noise=0.01):
    """
    Exponentially converging loss curves, one per task.

    Tasks are ordered by stage; later stages start higher and converge more
    slowly, which is the situation the scheduler is designed for.
    """
    rng = np.random.default_rng(seed)
    epochs = np.arange(total_epochs + 1)
    curves = {}
    for rank, task in enumerate(tasks):
        scale = 1.0 + 0.5 * rank
        tau = 3.0 + 2.0 * rank
        floor = 0.1 * scale
        clean = floor + scale * np.exp(-epochs / tau)
        curves[task] = clean * (1.0 + noise * rng.standard_normal(epochs.size))
    return curves


def run_schedule(state, curves):
    """Feed pre-computed loss curves through ``state``; returns all records"""
    length = min(len(curve) for curve in curves.values())
    records = []
    for epoch in range(min(length, state.total_epochs + 1)):
        records.extend(state.step({task: curves[task][epoch] for task in state.graph}))
    return records


@dataclass(frozen=True)
class EpochTotal:
    epoch: int
    total_sum: float
    total_htl: float


def epoch_totals(records):
    """Plain and HTL-weighted total loss for every epoch covered by ``records``"""
    by_epoch = {}
    for record in records:
        by_epoch.setdefault(record.epoch, []).append(record)
    totals = []
    for epoch, group in sorted(by_epoch.items()):
        losses = {record.task: record.loss for record in group}
        weights = {record.task: record.weight for record in group}
        totals.append(EpochTotal(
            epoch=epoch,
            total_sum=compose_total_loss(losses, mode=LossMode.SUM),
            total_htl=compose_total_loss(losses, weights, LossMode.HTL),
        ))
    return totals
