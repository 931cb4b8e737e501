"""Accuracy, goal-orientation scoring, and the cross-goal stress protocol.

The goal-orientation score combines top-1 accuracy with the mean
goal-definition mass of the predicted commands, harmonic-mean style: a model
scores high only when it is both right and recommending commands that belong
to the stated goal.
"""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from .baselines import Recommender
from .corpus import SequenceExample
from .goals import GoalModel


def go1(accuracy: float, p_bar: float) -> float:
    """2ap / (a + p), defined as 0 when both are 0."""
    if not (0.0 <= accuracy <= 1.0 and 0.0 <= p_bar <= 1.0):
        raise ValueError("accuracy and p_bar must lie in [0, 1]")
    if accuracy + p_bar == 0.0:
        return 0.0
    return 2.0 * accuracy * p_bar / (accuracy + p_bar)


def accuracy(model: Recommender, examples: Sequence[SequenceExample]) -> float:
    """Fraction of examples whose top-1 recommendation equals the target."""
    if not examples:
        raise ValueError("empty test set")
    hits = sum(1 for ex in examples
               if model.top1(ex.window, ex.goal) == ex.target.id)
    return hits / len(examples)


def _predictions(model: Recommender, examples: Sequence[SequenceExample],
                 goal_override: int | None = None) -> list[int]:
    """Top-1 vocabulary ids; goal_override replaces each example's own goal."""
    return [model.top1(ex.window, goal_override if goal_override is not None else ex.goal)
            for ex in examples]


def evaluate(model: Recommender, examples: Sequence[SequenceExample],
             goal_model: GoalModel) -> dict:
    """Per-goal and overall accuracy, mean goal mass of predictions, and GO1.

    Overall numbers are micro-averaged over examples; the aggregation is
    recorded in the block so a macro variant is self-describing.
    """
    if not examples:
        raise ValueError("empty test set")
    for ex in examples:
        if ex.goal is None:
            raise ValueError("every example needs an assigned goal")
    preds = _predictions(model, examples)
    hits = np.asarray([int(p == ex.target.id) for p, ex in zip(preds, examples)])
    masses = np.asarray([goal_model.goal_def_of(p, ex.goal)
                         for p, ex in zip(preds, examples)])
    goals_present = sorted({ex.goal for ex in examples})
    per_goal = {}
    for g in goals_present:
        idx = [i for i, ex in enumerate(examples) if ex.goal == g]
        acc_g = float(hits[idx].mean())
        pbar_g = float(masses[idx].mean())
        per_goal[str(g)] = {"examples": len(idx), "accuracy": acc_g,
                            "p_bar": pbar_g, "go1": go1(acc_g, pbar_g)}
    acc = float(hits.mean())
    pbar = float(masses.mean())
    missing = [g for g in range(goal_model.k) if g not in goals_present]
    return {
        "overall": {"examples": len(examples), "accuracy": acc,
                    "p_bar": pbar, "go1": go1(acc, pbar)},
        "per_goal": per_goal,
        "aggregation": "micro",
        "goals_without_examples": missing,
    }


def adversarial_eval(fine_tuned: dict[int, Recommender], control: Recommender,
                     examples: Sequence[SequenceExample],
                     goal_model: GoalModel) -> dict:
    """Feed each goal's model only data assigned to *other* goals.

    For goal G: every test example whose goal differs from G goes through
    G's fine-tuned model with goal input G. Accuracy is against the true
    targets; the goal-mass term is measured against G's own definition, so
    the score reflects whether recommendations stay on-goal under
    distribution shift. The non-fine-tuned goal-informed model runs the same
    protocol as control.
    """
    if goal_model.k < 2:
        raise ValueError("cross-goal protocol needs at least 2 goals")
    for ex in examples:
        if ex.goal is None:
            raise ValueError("every example needs an assigned goal")
    block: dict[str, dict] = {}
    for g in sorted(fine_tuned):
        mismatched = [ex for ex in examples if ex.goal != g]
        if not mismatched:
            raise ValueError(f"no examples with goal differing from {g}")
        entry = {}
        for name, model in (("fine_tuned", fine_tuned[g]), ("control", control)):
            preds = _predictions(model, mismatched, goal_override=g)
            acc = float(np.mean([int(p == ex.target.id)
                                 for p, ex in zip(preds, mismatched)]))
            pbar = float(np.mean([goal_model.goal_def_of(p, g) for p in preds]))
            entry[name] = {"examples": len(mismatched), "accuracy": acc,
                           "p_bar": pbar, "go1": go1(acc, pbar)}
        block[str(g)] = entry
    return block


def report_to_json(report: dict) -> str:
    """Canonical serialization: sorted keys, two-space indent, newline-terminated."""
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
