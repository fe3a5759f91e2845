"""Exhaustive level sweep charting the accuracy/cost tradeoff.

Three modes: ``subset_aware`` finetunes on the deployment subset, prunes
the finetuned checkpoint and retrains on the subset; ``subset_agnostic``
prunes the deployed weights directly and retrains on the full dataset
for the combined epoch budget; ``unpruned`` is the deployed model as-is.
All accuracies are measured on the subset's test samples.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass

from prunekit.deps import compute_dependencies
from prunekit.errors import InfeasibleTargetError, ValidationError
from prunekit.ir import ModelGraph, cost_report
from prunekit.pruning import build_plan, score_filters, shrink_graph, transfer_weights
from prunekit.runtime import LrPolicy, TrainConfig, WeightStore, bench_inference, evaluate, train
from prunekit.search.config import SearchConfig
from prunekit.search.search import (
    SubsetData,
    _derived_config,
    finetune,
    retrain_schedule,
    subset_seed,
)

SWEEP_MODES = ("subset_aware", "subset_agnostic", "unpruned")

CSV_COLUMNS = (
    "mode", "target_level", "achieved_level", "test_acc", "val_acc",
    "giga_ops", "latency_ms", "params", "wall_seconds",
)


@dataclass
class SweepRow:
    mode: str
    target_level: float
    achieved_level: float
    test_acc: float
    val_acc: float
    giga_ops: float
    latency_ms: float
    params: int
    wall_seconds: float


def oracle_sweep(
    graph: ModelGraph,
    weights: WeightStore,
    full_train,
    subset: SubsetData,
    search_config: SearchConfig,
    train_config: TrainConfig,
    lr_policy: LrPolicy,
    modes: tuple[str, ...] = SWEEP_MODES,
    levels: list[float] | None = None,
    seed: int = 0,
    bench_batch: int = 32,
) -> list[SweepRow]:
    for mode in modes:
        if mode not in SWEEP_MODES:
            raise ValidationError(f"unknown sweep mode '{mode}'")
    if levels is None:
        levels = search_config.grid()
    rows: list[SweepRow] = []

    if "unpruned" in modes:
        start = time.perf_counter()
        report = cost_report(graph)
        test_acc, _ = evaluate(graph, weights, subset.test)
        from prunekit.search.search import baseline_accuracy

        val_acc = baseline_accuracy(graph, weights, subset, train_config.val_fraction, seed)
        bench = bench_inference(graph, weights, batch_size=bench_batch, seed=seed)
        rows.append(SweepRow(
            mode="unpruned", target_level=0.0, achieved_level=0.0,
            test_acc=test_acc, val_acc=val_acc,
            giga_ops=report.total_giga_ops, latency_ms=bench.per_image_ms,
            params=report.total_params, wall_seconds=time.perf_counter() - start,
        ))

    if "subset_aware" in modes:
        finetuned = finetune(
            graph, weights, subset, search_config.finetune_epochs, lr_policy,
            train_config, seed=subset_seed(seed, 97),
        )
        rows.extend(_pruned_rows(
            mode="subset_aware", graph=graph, source_weights=finetuned,
            retrain_data=subset.train, epochs=search_config.retrain_epochs,
            subset=subset, search_config=search_config, train_config=train_config,
            lr_policy=lr_policy, levels=levels, seed=subset_seed(seed, 1), bench_batch=bench_batch,
        ))

    if "subset_agnostic" in modes:
        rows.extend(_pruned_rows(
            mode="subset_agnostic", graph=graph, source_weights=weights,
            retrain_data=full_train,
            epochs=search_config.finetune_epochs + search_config.retrain_epochs,
            subset=subset, search_config=search_config, train_config=train_config,
            lr_policy=lr_policy, levels=levels, seed=subset_seed(seed, 2), bench_batch=bench_batch,
        ))
    return rows


def _pruned_rows(
    mode, graph, source_weights, retrain_data, epochs, subset,
    search_config, train_config, lr_policy, levels, seed, bench_batch,
) -> list[SweepRow]:
    depmap = compute_dependencies(graph, search_config.residual_policy)
    scores = score_filters(graph, source_weights, depmap)
    schedule = retrain_schedule(lr_policy)
    rows = []
    for i, level in enumerate(levels):
        start = time.perf_counter()
        try:
            plan = build_plan(graph, depmap, scores, level, search_config.ranking_scope)
        except InfeasibleTargetError as exc:
            rows.append(SweepRow(
                mode=mode, target_level=level, achieved_level=exc.max_achievable,
                test_acc=float("nan"), val_acc=float("nan"),
                giga_ops=float("nan"), latency_ms=float("nan"), params=0,
                wall_seconds=time.perf_counter() - start,
            ))
            continue
        shrunk, remap = shrink_graph(graph, plan)
        transferred = transfer_weights(source_weights, plan, remap)
        config = _derived_config(train_config, epochs=epochs, seed=subset_seed(seed, i), schedule=schedule)
        best, history = train(shrunk, transferred, retrain_data, config)
        val_acc = max((h["val_accuracy"] for h in history), default=float("nan"))
        test_acc, _ = evaluate(shrunk, best, subset.test)
        report = cost_report(shrunk)
        bench = bench_inference(shrunk, best, batch_size=bench_batch, seed=seed)
        rows.append(SweepRow(
            mode=mode, target_level=level, achieved_level=plan.achieved_level,
            test_acc=test_acc, val_acc=val_acc,
            giga_ops=report.total_giga_ops, latency_ms=bench.per_image_ms,
            params=report.total_params, wall_seconds=time.perf_counter() - start,
        ))
    return rows


def rows_to_csv(rows: list[SweepRow], lineage: dict | None = None) -> str:
    buf = io.StringIO()
    if lineage is not None:
        import json

        buf.write("# lineage=" + json.dumps(lineage, sort_keys=True) + "\n")
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow(asdict(row))
    return buf.getvalue()


def csv_to_rows(text: str) -> tuple[list[SweepRow], dict | None]:
    lineage = None
    lines = text.splitlines()
    if lines and lines[0].startswith("# lineage="):
        import json

        lineage = json.loads(lines[0][len("# lineage="):])
        lines = lines[1:]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    rows = []
    for rec in reader:
        rows.append(SweepRow(
            mode=rec["mode"],
            target_level=float(rec["target_level"]),
            achieved_level=float(rec["achieved_level"]),
            test_acc=float(rec["test_acc"]),
            val_acc=float(rec["val_acc"]),
            giga_ops=float(rec["giga_ops"]),
            latency_ms=float(rec["latency_ms"]),
            params=int(rec["params"]),
            wall_seconds=float(rec["wall_seconds"]),
        ))
    return rows, lineage
