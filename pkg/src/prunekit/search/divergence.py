"""Filter-selection divergence: how differently two equally sized prune
plans choose their filters. Per layer the difference is
100 * (1 - |A intersect B| / |A|) over the removed-index sets; the
overall figure pools the counts. The denominator equals the per-level
selection size, so the metric is symmetric and bounded in [0, 100]."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

from prunekit.errors import PlanMismatchError
from prunekit.pruning import PrunePlan


@dataclass
class DivergenceReport:
    per_layer: dict[str, float]
    overall: float
    pair_count: int


def _check_comparable(a: PrunePlan, b: PrunePlan) -> None:
    if a.original_params != b.original_params:
        raise PlanMismatchError(
            f"plans target different graphs ({a.original_params} vs {b.original_params} params)"
        )
    if set(a.removals) != set(b.removals):
        missing = set(a.removals) ^ set(b.removals)
        raise PlanMismatchError(f"plans prune different layers: {sorted(missing)}")
    for layer in a.removals:
        if len(a.removals[layer]) != len(b.removals[layer]):
            raise PlanMismatchError(
                f"layer '{layer}': {len(a.removals[layer])} vs {len(b.removals[layer])} removals"
            )


def filter_divergence(plan_a: PrunePlan, plan_b: PrunePlan) -> DivergenceReport:
    _check_comparable(plan_a, plan_b)
    per_layer: dict[str, float] = {}
    common_total = 0
    size_total = 0
    for layer in sorted(plan_a.removals):
        a = set(plan_a.removals[layer])
        b = set(plan_b.removals[layer])
        common = len(a & b)
        per_layer[layer] = 100.0 * (1.0 - common / len(a))
        common_total += common
        size_total += len(a)
    overall = 100.0 * (1.0 - common_total / size_total) if size_total else 0.0
    return DivergenceReport(per_layer=per_layer, overall=overall, pair_count=1)


def pairwise_divergence(plans: list[PrunePlan]) -> DivergenceReport:
    """Mean divergence over all unordered pairs of the given plans."""
    if len(plans) < 2:
        raise PlanMismatchError("need at least 2 plans to compare")
    reports = [filter_divergence(a, b) for a, b in combinations(plans, 2)]
    layers = reports[0].per_layer.keys()
    per_layer = {
        layer: sum(r.per_layer[layer] for r in reports) / len(reports) for layer in layers
    }
    overall = sum(r.overall for r in reports) / len(reports)
    return DivergenceReport(per_layer=per_layer, overall=overall, pair_count=len(reports))
