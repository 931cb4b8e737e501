"""Minibatch SGD training, per-goal fine-tuning, and the recommender adapter."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..baselines import Recommender
from ..corpus import SequenceExample, Vocabulary
from .config import ModelConfig, TrainConfig
from .losses import dlogits_ce, dlogits_combined, loss_ce, loss_combined
from .network import backward, forward, init_parameters

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Loss went non-finite."""


@dataclass
class EncodedExamples:
    """Windows as id matrices ready for the network.

    targets hold dense data-command positions (row indices of goal_defs /
    dense output), not vocabulary ids.
    """

    ids: np.ndarray      # (N, T) int64
    targets: np.ndarray  # (N,) int64
    goals: np.ndarray    # (N,) int64, -1 when unassigned

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, index: np.ndarray) -> "EncodedExamples":
        return EncodedExamples(self.ids[index], self.targets[index], self.goals[index])


def encode_examples(examples: Sequence[SequenceExample], vocabulary: Vocabulary) -> EncodedExamples:
    if not examples:
        raise ValueError("no examples to encode")
    lengths = {len(ex.window) for ex in examples}
    if len(lengths) != 1:
        raise ValueError(f"examples have mixed window lengths {sorted(lengths)}")
    ids = np.asarray([[cmd.id for cmd in ex.window] for ex in examples], dtype=np.int64)
    targets = np.asarray([vocabulary.dc_pos(ex.target.id) for ex in examples], dtype=np.int64)
    goals = np.asarray([-1 if ex.goal is None else ex.goal for ex in examples], dtype=np.int64)
    return EncodedExamples(ids, targets, goals)


def _decayed(name: str) -> bool:
    return name != "embed" and not name.endswith("_b")


def _accuracy_on(params: dict, config: ModelConfig, data: EncodedExamples,
                 batch_size: int = 256) -> float:
    hits = 0
    for start in range(0, len(data), batch_size):
        batch = data.subset(np.arange(start, min(start + batch_size, len(data))))
        goals = batch.goals if config.needs_goal else None
        probs, _ = forward(params, config, batch.ids, goals, train_mode=False)
        hits += int(np.sum(probs.argmax(axis=1) == batch.targets))
    return hits / len(data)


def _run_sgd(params: dict, config: ModelConfig, train_config: TrainConfig,
             train_data: EncodedExamples, val_data: EncodedExamples | None,
             q_rows: np.ndarray | None, frozen: frozenset[str],
             keep_best_val: bool = True) -> dict:
    """The shared optimization loop.

    q_rows, when given, is (N, dc_count) of per-example reference
    distributions and switches the loss from pure cross entropy to the
    alpha-combined form. With keep_best_val the parameters of the best
    validation-accuracy epoch are returned (the final epoch otherwise, which
    is what combined-loss fine-tuning wants: accuracy selection would undo
    the KL pull).
    """
    rng = np.random.default_rng(train_config.seed)
    velocity = {name: np.zeros_like(p) for name, p in params.items()}
    best_acc = -1.0
    best_params = None
    n = len(train_data)
    alpha = train_config.loss_alpha

    for epoch in range(train_config.epochs):
        order = rng.permutation(n)
        for batch_no, start in enumerate(range(0, n, train_config.batch_size)):
            index = order[start:start + train_config.batch_size]
            batch = train_data.subset(index)
            goals = batch.goals if config.needs_goal else None
            probs, cache = forward(params, config, batch.ids, goals,
                                   train_mode=True, rng=rng)
            if q_rows is None:
                losses = loss_ce(probs, batch.targets)
                dlogits = dlogits_ce(probs, batch.targets)
            else:
                q = q_rows[index]
                losses = loss_combined(probs, batch.targets, q, alpha)
                dlogits = dlogits_combined(probs, batch.targets, q, alpha)
            mean_loss = float(losses.mean())
            if not np.isfinite(mean_loss):
                raise TrainingDiverged(
                    f"non-finite loss in epoch {epoch}, batch {batch_no}")
            grads = backward(params, config, cache, dlogits / len(index))
            for name, p in params.items():
                if name in frozen:
                    continue
                v = velocity[name]
                v *= train_config.momentum
                v -= train_config.learning_rate * grads[name]
                if train_config.weight_decay > 0.0 and _decayed(name):
                    p *= 1.0 - train_config.learning_rate * train_config.weight_decay
                p += v
        if val_data is not None and len(val_data) > 0:
            acc = _accuracy_on(params, config, val_data)
            log.info("epoch %d: validation accuracy %.4f", epoch, acc)
            if keep_best_val and acc > best_acc:
                best_acc = acc
                best_params = {name: p.copy() for name, p in params.items()}
    if best_params is not None:
        return best_params
    return params


def train(config: ModelConfig, train_config: TrainConfig,
          train_data: EncodedExamples, val_data: EncodedExamples | None = None,
          params: dict | None = None) -> dict:
    """Train from scratch (or given init) on cross entropy."""
    config.validate()
    train_config.validate()
    if len(train_data) == 0:
        raise ValueError("empty training set")
    if params is None:
        params = init_parameters(config)
    else:
        params = {name: p.copy() for name, p in params.items()}
    frozen = frozenset(["embed"]) if train_config.freeze_embeddings else frozenset()
    return _run_sgd(params, config, train_config, train_data, val_data, None, frozen)


def fine_tune(params: dict, config: ModelConfig, goal: int, goal_def: np.ndarray,
              train_data: EncodedExamples, val_data: EncodedExamples | None,
              train_config: TrainConfig) -> dict:
    """Specialize a trained model to one goal.

    Starts from the given parameters, freezes the embedding matrix, and
    optimizes the combined cross-entropy + KL loss against the goal's
    data-command distribution on that goal's examples only.
    """
    config.validate()
    train_config.validate()
    if goal_def.shape != (config.dc_count,):
        raise ValueError(f"goal_def must have shape ({config.dc_count},), "
                         f"got {goal_def.shape}")
    if np.any(goal_def <= 0.0):
        raise ValueError("goal_def must be strictly positive")
    params = {name: p.copy() for name, p in params.items()}
    if train_config.epochs == 0 or len(train_data) == 0:
        return params
    q_rows = np.tile(goal_def, (len(train_data), 1))
    goals = np.full(len(train_data), goal, dtype=np.int64)
    data = EncodedExamples(train_data.ids, train_data.targets, goals)
    return _run_sgd(params, config, train_config, data, val_data, q_rows,
                    frozen=frozenset(["embed"]), keep_best_val=False)


class NeuralRecommender(Recommender):
    """Recommender-interface adapter around (parameters, config)."""

    def __init__(self, params: dict, config: ModelConfig, dc_ids: np.ndarray):
        super().__init__(dc_ids)
        self.params = params
        self.config = config

    def predict_dist(self, window, goal=None) -> np.ndarray:
        if not window:
            raise ValueError("window must be non-empty")
        ids = np.asarray([[cmd.id for cmd in window]], dtype=np.int64)
        goals = None
        if self.config.needs_goal:
            if goal is None:
                raise ValueError(f"variant {self.config.variant} requires a goal")
            goals = np.asarray([goal], dtype=np.int64)
        probs, _ = forward(self.params, self.config, ids, goals, train_mode=False)
        return probs[0]

    def batch_top1(self, data: EncodedExamples, goal_override: int | None = None,
                   batch_size: int = 256) -> np.ndarray:
        """Dense target positions of the top-1 prediction per example."""
        out = np.empty(len(data), dtype=np.int64)
        for start in range(0, len(data), batch_size):
            stop = min(start + batch_size, len(data))
            batch = data.subset(np.arange(start, stop))
            goals = None
            if self.config.needs_goal:
                if goal_override is not None:
                    goals = np.full(stop - start, goal_override, dtype=np.int64)
                else:
                    goals = batch.goals
            probs, _ = forward(self.params, self.config, batch.ids, goals,
                               train_mode=False)
            out[start:stop] = probs.argmax(axis=1)
        return out
