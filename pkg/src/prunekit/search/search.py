"""On-device adaptation pipeline: baseline accuracy on the deployment
subset, short finetuning, then a binary search over the pruning-level
grid where each probed level is pruned out of the finetuned checkpoint,
retrained and accepted iff it matches the baseline.

Bisection rule: start at the configured level; on success move to the
grid midpoint of (current, high] rounded up, on failure to the midpoint
of [low, current) rounded down. Levels are never retrained twice; the
search stops when the next level to probe does not change or was already
probed, and returns the largest level that succeeded.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from prunekit.deps import compute_dependencies
from prunekit.errors import EmptySplitError, InfeasibleTargetError
from prunekit.ir import ModelGraph, cost_report, infer_shapes
from prunekit.pruning import PrunePlan, build_plan, score_filters, shrink_graph, transfer_weights
from prunekit.runtime import (
    LrPolicy,
    LrSchedule,
    TrainConfig,
    WeightStore,
    evaluate,
    split_train_val,
    train,
)
from prunekit.search.config import SearchConfig, SubsetSpec, round_down_to_grid, round_up_to_grid

Split = tuple[np.ndarray, np.ndarray]


@dataclass
class SubsetData:
    """Deployment-subset samples in the model's original label space."""

    spec: SubsetSpec
    train: Split
    test: Split


@dataclass
class TrialResult:
    level: float
    achieved_level: float
    val_accuracy: float
    test_accuracy: float
    success: bool
    wall_seconds: float
    peak_memory_bytes: int
    weights_digest: str = ""
    parent_digest: str = ""
    plan: PrunePlan | None = None
    graph: ModelGraph | None = None
    weights: WeightStore | None = None


@dataclass
class TraceEntry:
    iteration: int
    level: float
    achieved_level: float
    val_accuracy: float
    test_accuracy: float
    success: bool
    wall_seconds: float
    peak_memory_bytes: int
    weights_digest: str = ""
    parent_digest: str = ""


@dataclass
class SearchResult:
    converged_level: float | None
    baseline_accuracy: float
    trace: list[TraceEntry] = field(default_factory=list)
    best_plan: PrunePlan | None = None
    best_graph: ModelGraph | None = None
    best_weights: WeightStore | None = None
    evaluations: int = 0


def weights_digest(weights: WeightStore) -> str:
    h = hashlib.sha256()
    for name in weights.names():
        h.update(name.encode())
        h.update(np.ascontiguousarray(weights[name], dtype="<f4").tobytes())
    return h.hexdigest()[:16]


def estimate_train_memory(graph: ModelGraph, batch_size: int) -> int:
    """Rough training footprint: weights, gradients and momentum buffers
    plus one set of activations and activation gradients per batch."""
    report = cost_report(graph)
    act = sum(shape.numel() for shape in infer_shapes(graph).values())
    return 4 * (3 * report.total_params + 2 * batch_size * act)


def subset_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)).generate_state(1)[0])


def baseline_accuracy(
    graph: ModelGraph,
    weights: WeightStore,
    subset: SubsetData,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> float:
    """Validation accuracy of the deployed model restricted to the subset."""
    if len(subset.train[0]) == 0:
        raise EmptySplitError(f"subset '{subset.spec.name}' has no samples")
    _, val_split = split_train_val(*subset.train, val_fraction, seed)
    acc, _ = evaluate(graph, weights, val_split)
    return acc


def finetune(
    graph: ModelGraph,
    weights: WeightStore,
    subset: SubsetData,
    n_f: int,
    lr_policy: LrPolicy,
    train_config: TrainConfig,
    seed: int = 0,
) -> WeightStore:
    """n_f epochs on the subset at the final learning rate of the original
    training; returns the best-validation checkpoint."""
    if n_f == 0:
        return weights.copy()
    config = _derived_config(train_config, epochs=n_f, seed=seed,
                             schedule=LrSchedule(initial=lr_policy.final_lr, decay_epochs=[], gamma=lr_policy.gamma))
    best, _ = train(graph, weights, subset.train, config)
    return best


def retrain_schedule(lr_policy: LrPolicy) -> LrSchedule:
    """Post-pruning schedule: second-highest original rate, decayed at
    epochs 15 and 25 (1-indexed within the retraining call)."""
    return LrSchedule(initial=lr_policy.second_lr, decay_epochs=[15, 25], gamma=lr_policy.gamma)


def _derived_config(base: TrainConfig, epochs: int, seed: int, schedule: LrSchedule) -> TrainConfig:
    return TrainConfig(
        epochs=epochs,
        lr_schedule=schedule,
        batch_size=base.batch_size,
        momentum=base.momentum,
        weight_decay=base.weight_decay,
        seed=seed,
        augment=base.augment,
        val_fraction=base.val_fraction,
    )


def make_trial_runner(
    graph: ModelGraph,
    finetuned: WeightStore,
    subset: SubsetData,
    search_config: SearchConfig,
    train_config: TrainConfig,
    lr_policy: LrPolicy,
    baseline: float,
    seed: int = 0,
) -> Callable[[float, int], TrialResult]:
    """The real prune-retrain-evaluate step of the search. Every trial
    starts from the finetuned checkpoint, never from another level's
    retrained weights."""
    depmap = compute_dependencies(graph, search_config.residual_policy)
    scores = score_filters(graph, finetuned, depmap)
    split = split_train_val(*subset.train, train_config.val_fraction, seed)
    parent = weights_digest(finetuned)
    schedule = retrain_schedule(lr_policy)

    def runner(level: float, trial_index: int) -> TrialResult:
        start = time.perf_counter()
        try:
            plan = build_plan(graph, depmap, scores, level, search_config.ranking_scope)
        except InfeasibleTargetError as exc:
            return TrialResult(
                level=level, achieved_level=exc.max_achievable,
                val_accuracy=float("nan"), test_accuracy=float("nan"), success=False,
                wall_seconds=time.perf_counter() - start, peak_memory_bytes=0,
                parent_digest=parent,
            )
        shrunk, remap = shrink_graph(graph, plan)
        transferred = transfer_weights(finetuned, plan, remap)
        config = _derived_config(
            train_config, epochs=search_config.retrain_epochs,
            seed=subset_seed(seed, 101, trial_index), schedule=schedule,
        )
        best, _ = train(shrunk, transferred, None, config, split=split)
        val_acc, _ = evaluate(shrunk, best, split[1])
        test_acc, _ = evaluate(shrunk, best, subset.test)
        return TrialResult(
            level=level,
            achieved_level=plan.achieved_level,
            val_accuracy=val_acc,
            test_accuracy=test_acc,
            success=val_acc >= baseline,
            wall_seconds=time.perf_counter() - start,
            peak_memory_bytes=estimate_train_memory(shrunk, train_config.batch_size),
            weights_digest=weights_digest(best),
            parent_digest=parent,
            plan=plan,
            graph=shrunk,
            weights=best,
        )

    return runner


def dapr_search(
    graph: ModelGraph,
    weights: WeightStore,
    subset: SubsetData,
    search_config: SearchConfig,
    train_config: TrainConfig,
    lr_policy: LrPolicy,
    seed: int = 0,
    runner: Callable[[float, int], TrialResult] | None = None,
) -> SearchResult:
    """Binary search for the largest pruning level whose retrained model
    still reaches the baseline accuracy on the deployment subset."""
    grid = search_config.grid()
    if search_config.acceptance == "explicit_target":
        baseline = float(search_config.explicit_target)
    elif runner is None:
        baseline = baseline_accuracy(graph, weights, subset, train_config.val_fraction, seed)
    else:
        baseline = float("nan")  # an injected runner owns the acceptance decision

    if runner is None:
        finetuned = finetune(
            graph, weights, subset, search_config.finetune_epochs, lr_policy,
            train_config, seed=subset_seed(seed, 97),
        )
        runner = make_trial_runner(
            graph, finetuned, subset, search_config, train_config, lr_policy, baseline, seed,
        )

    lo, hi, cur = search_config.level_low, search_config.level_high, search_config.level_start
    results: dict[float, TrialResult] = {}
    trace: list[TraceEntry] = []
    iteration = 0
    while True:
        iteration += 1
        outcome = results.get(cur)
        if outcome is None:
            outcome = runner(cur, iteration)
            results[cur] = outcome
            trace.append(TraceEntry(
                iteration=iteration, level=cur,
                achieved_level=outcome.achieved_level,
                val_accuracy=outcome.val_accuracy,
                test_accuracy=outcome.test_accuracy,
                success=outcome.success,
                wall_seconds=outcome.wall_seconds,
                peak_memory_bytes=outcome.peak_memory_bytes,
                weights_digest=outcome.weights_digest,
                parent_digest=outcome.parent_digest,
            ))
        if outcome.success:
            lo = cur
            nxt = round_up_to_grid(grid, (cur + hi) / 2.0)
        else:
            hi = cur
            nxt = round_down_to_grid(grid, (lo + cur) / 2.0)
        if nxt == cur or nxt in results:
            break
        cur = nxt

    successes = [lvl for lvl, res in results.items() if res.success]
    converged = max(successes) if successes else None
    best = results.get(converged) if converged is not None else None
    return SearchResult(
        converged_level=converged,
        baseline_accuracy=baseline,
        trace=trace,
        best_plan=best.plan if best else None,
        best_graph=best.graph if best else None,
        best_weights=best.weights if best else None,
        evaluations=len(results),
    )
