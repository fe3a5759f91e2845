"""Implementation of the CLI commands. Commands communicate only through
on-disk artifacts (model documents, weight containers, plan/result
documents, sweep CSVs), so the expensive stages compose and resume."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from prunekit.cli.config import RunConfig
from prunekit.cli.lineage import digest_file, digest_obj
from prunekit.cli.report import render_report
from prunekit.data import to_arrays, subset as subset_op
from prunekit.deps import compute_dependencies, validate_plan_against_deps
from prunekit.errors import ValidationError
from prunekit.ir import cost_report, load_model, save_model
from prunekit.pruning import PrunePlan, build_plan, score_filters, shrink_graph, transfer_weights
from prunekit.runtime import (
    LrPolicy,
    bench_inference,
    init_weights,
    load_weights,
    save_weights,
    train,
)
from prunekit.search import (
    SubsetData,
    TrialResult,
    csv_to_rows,
    dapr_search,
    filter_divergence,
    oracle_sweep,
    pairwise_divergence,
    rows_to_csv,
    subset_seed,
)


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_model_weights(config: RunConfig):
    graph = load_model(config.model_path)
    if config.weights_path is not None:
        weights = load_weights(config.weights_path)
    else:
        weights = init_weights(graph, seed=subset_seed(config.seed, 3))
    return graph, weights


def _base_lineage(config: RunConfig) -> dict:
    lineage = {"model": digest_file(config.model_path)}
    if config.weights_path is not None:
        lineage["weights"] = digest_file(config.weights_path)
    if config.dataset:
        lineage["dataset"] = digest_obj({**config.dataset, "seed": config.seed})
    return lineage


def _subset_data(config: RunConfig, dataset) -> SubsetData:
    spec = config.resolve_subset(dataset)
    sub = subset_op(dataset, spec)
    return SubsetData(
        spec=spec,
        train=to_arrays(sub.train, dataset.mean, dataset.std),
        test=to_arrays(sub.test, dataset.mean, dataset.std),
    )


def cmd_train(config: RunConfig, args) -> dict:
    graph, weights = _load_model_weights(config)
    dataset = config.load_dataset()
    data = to_arrays(dataset.train, dataset.mean, dataset.std)
    if getattr(args, "on_subset", False):
        data = _subset_data(config, dataset).train
    best, history = train(graph, weights, data, config.train)
    weights_out = config.output_dir / "trained.weights"
    save_weights(best, weights_out)
    _write_json(config.output_dir / "history.json", {
        "history": history,
        "dataset_summary": dataset.summary(),
        "lineage": _base_lineage(config),
    })
    return {"weights": str(weights_out), "epochs": len(history),
            "best_val_accuracy": max((h["val_accuracy"] for h in history), default=None)}


def cmd_analyze(config: RunConfig, args) -> dict:
    graph = load_model(config.model_path)
    policy = getattr(args, "residual_policy", None) or config.search.residual_policy
    depmap = compute_dependencies(graph, policy)
    doc = {
        "model": graph.name,
        "residual_policy": policy,
        "sets": [
            {
                "members": dep.sorted_members(),
                "coupling": dep.coupling,
                "group_id": dep.group_id,
            }
            for dep in depmap.sets
        ],
        "unprunable": sorted(depmap.unprunable),
        "lineage": {"model": digest_file(config.model_path)},
    }
    out = config.output_dir / "analyze.json"
    _write_json(out, doc)
    return {"report": str(out), "sets": len(depmap.sets)}


def cmd_prune(config: RunConfig, args) -> dict:
    graph, weights = _load_model_weights(config)
    scope = getattr(args, "scope", None) or config.search.ranking_scope
    policy = getattr(args, "residual_policy", None) or config.search.residual_policy
    depmap = compute_dependencies(graph, policy)
    plan_path = getattr(args, "plan", None)
    if plan_path:
        plan = PrunePlan.from_document(Path(plan_path).read_text(encoding="utf-8"))
        violations = validate_plan_against_deps(depmap, plan)
        if violations:
            v = violations[0]
            raise ValidationError(
                f"plan violates dependencies: filter {v.filter_index} of {v.members} ({v.kind})"
            )
    else:
        level = float(getattr(args, "level", None) if getattr(args, "level", None) is not None else 50.0)
        scores = score_filters(graph, weights, depmap)
        plan = build_plan(graph, depmap, scores, level, scope)
    shrunk, remap = shrink_graph(graph, plan)
    transferred = transfer_weights(weights, plan, remap)

    plan_path = config.output_dir / "plan.json"
    model_path = config.output_dir / "pruned_model.json"
    weights_path = config.output_dir / "pruned.weights"
    plan_path.write_text(plan.to_document(lineage=_base_lineage(config)), encoding="utf-8")
    save_model(shrunk, model_path)
    save_weights(transferred, weights_path)
    return {
        "plan": str(plan_path),
        "model": str(model_path),
        "weights": str(weights_path),
        "achieved_level": plan.achieved_level,
    }


def _synthetic_oracle(threshold: float):
    def runner(level: float, iteration: int) -> TrialResult:
        ok = level <= threshold
        return TrialResult(
            level=level, achieved_level=level,
            val_accuracy=1.0 if ok else 0.0, test_accuracy=1.0 if ok else 0.0,
            success=ok, wall_seconds=0.0, peak_memory_bytes=0,
        )
    return runner


def cmd_search(config: RunConfig, args) -> dict:
    graph, weights = _load_model_weights(config)
    runner = None
    subset_data = None
    lr_policy = LrPolicy.from_schedule(config.train.lr_schedule, config.train.epochs)
    if config.synthetic_oracle_threshold is not None:
        runner = _synthetic_oracle(config.synthetic_oracle_threshold)
    else:
        dataset = config.load_dataset()
        subset_data = _subset_data(config, dataset)
    result = dapr_search(
        graph, weights, subset_data, config.search, config.train, lr_policy,
        seed=config.seed, runner=runner,
    )
    doc = {
        "converged_level": result.converged_level,
        "baseline_accuracy": result.baseline_accuracy,
        "evaluations": result.evaluations,
        "trace": [asdict(entry) for entry in result.trace],
        "lineage": _base_lineage(config),
    }
    out = config.output_dir / "search_result.json"
    _write_json(out, doc)
    emitted = {"result": str(out), "converged_level": result.converged_level}
    if result.best_graph is not None:
        best_model = config.output_dir / "best_model.json"
        best_weights = config.output_dir / "best.weights"
        best_plan = config.output_dir / "best_plan.json"
        save_model(result.best_graph, best_model)
        save_weights(result.best_weights, best_weights)
        best_plan.write_text(result.best_plan.to_document(lineage=_base_lineage(config)), encoding="utf-8")
        emitted.update({"model": str(best_model), "weights": str(best_weights), "plan": str(best_plan)})
    return emitted


def cmd_sweep(config: RunConfig, args) -> dict:
    graph, weights = _load_model_weights(config)
    dataset = config.load_dataset()
    subset_data = _subset_data(config, dataset)
    full_train = to_arrays(dataset.train, dataset.mean, dataset.std)
    lr_policy = LrPolicy.from_schedule(config.train.lr_schedule, config.train.epochs)
    modes = tuple(getattr(args, "mode", None) or ("subset_aware", "subset_agnostic", "unpruned"))
    levels = [float(v) for v in args.levels] if getattr(args, "levels", None) else None
    rows = oracle_sweep(
        graph, weights, full_train, subset_data, config.search, config.train,
        lr_policy, modes=modes, levels=levels, seed=config.seed,
    )
    out = config.output_dir / "sweep.csv"
    out.write_text(rows_to_csv(rows, lineage=_base_lineage(config)), encoding="utf-8")
    return {"sweep": str(out), "rows": len(rows)}


def cmd_divergence(config: RunConfig, args) -> dict:
    paths = [Path(p) for p in args.plans]
    plans = [PrunePlan.from_document(p.read_text(encoding="utf-8")) for p in paths]
    report = pairwise_divergence(plans) if len(plans) > 2 else filter_divergence(*plans)
    doc = {
        "per_layer": report.per_layer,
        "overall": report.overall,
        "pair_count": report.pair_count,
        "lineage": {p.name: digest_file(p) for p in paths},
    }
    out = config.output_dir / "divergence.json"
    _write_json(out, doc)
    return {"report": str(out), "overall": report.overall, "pair_count": report.pair_count}


def cmd_bench(config: RunConfig, args) -> dict:
    graph, weights = _load_model_weights(config)
    result = bench_inference(
        graph, weights,
        batch_size=getattr(args, "batch_size", None) or 32,
        repetitions=getattr(args, "repetitions", None) or 10,
        seed=config.seed,
    )
    report = cost_report(graph)
    doc = {
        "mean_ms": result.mean_ms,
        "std_ms": result.std_ms,
        "per_image_ms": result.per_image_ms,
        "samples_ms": result.samples_ms,
        "batch_size": result.batch_size,
        "giga_ops": report.total_giga_ops,
        "params": report.total_params,
        "memory_bytes": report.memory_bytes,
        "lineage": _base_lineage(config),
    }
    out = config.output_dir / "bench.json"
    _write_json(out, doc)
    return {"report": str(out), "per_image_ms": result.per_image_ms}


def cmd_report(config: RunConfig, args) -> dict:
    all_rows = []
    lineages = []
    for path in args.sweeps:
        rows, lineage = csv_to_rows(Path(path).read_text(encoding="utf-8"))
        all_rows.extend(rows)
        lineages.append(lineage)
    known = [l for l in lineages if l is not None]
    if known and any(l != known[0] for l in known[1:]):
        raise ValidationError("sweep CSVs carry mismatched lineages; refusing to combine them")
    summary = render_report(all_rows, config.output_dir, buckets=getattr(args, "buckets", None) or 6)
    summary["lineage"] = known[0] if known else None
    _write_json(config.output_dir / "report.json", summary)
    return summary
