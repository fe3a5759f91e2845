"""Prune-plan construction: remove ranked filters one by one until the
requested share of parameter memory is gone.

The running census after each removal is recomputed with the same
formulas as the cost report (integer arithmetic), so the achieved level
is exact by construction: removing a filter sheds its own weights, its
BN slice, the matching input channels of every consumer and the
flatten-expanded Linear columns.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from prunekit.deps import DependencyMap, channel_sources
from prunekit.errors import InfeasibleTargetError, ValidationError
from prunekit.ir import INPUT_ID, ModelGraph
from prunekit.pruning.scoring import FilterScore

RANKING_SCOPES = ("global", "per_layer")


@dataclass
class PrunePlan:
    removals: dict[str, list[int]]
    target_level: float
    achieved_level: float
    ranking_scope: str
    original_params: int
    surviving_params: int
    # ordered removal units: (member ids, filter index), for tightness analysis
    removal_order: list[tuple[tuple[str, ...], int]] = field(default_factory=list)

    def to_document(self, lineage: dict | None = None) -> str:
        doc = {
            "target_level": self.target_level,
            "achieved_level": self.achieved_level,
            "ranking_scope": self.ranking_scope,
            "removals": {k: list(v) for k, v in sorted(self.removals.items())},
            "census": {
                "original_params": self.original_params,
                "surviving_params": self.surviving_params,
            },
            "removal_order": [{"members": list(m), "index": i} for m, i in self.removal_order],
        }
        if lineage is not None:
            doc["lineage"] = lineage
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_document(cls, text: str) -> "PrunePlan":
        doc = json.loads(text)
        return cls(
            removals={k: sorted(v) for k, v in doc["removals"].items()},
            target_level=doc["target_level"],
            achieved_level=doc["achieved_level"],
            ranking_scope=doc["ranking_scope"],
            original_params=doc["census"]["original_params"],
            surviving_params=doc["census"]["surviving_params"],
            removal_order=[(tuple(e["members"]), e["index"]) for e in doc.get("removal_order", [])],
        )


class SurvivorCensus:
    """Tracks surviving filters per conv and recounts total parameters of
    the virtually shrunk graph. A channel position survives when every
    conv filter that defines it survives."""

    def __init__(self, graph: ModelGraph):
        self.graph = graph
        self.sources = channel_sources(graph)
        self.removed: dict[str, set[int]] = {
            n.id: set() for n in graph.nodes if n.kind == "Conv"
        }
        self.n_total = {n.id: n.out_channels for n in graph.nodes if n.kind == "Conv"}

    def survivors(self, layer_id: str) -> int:
        return self.n_total[layer_id] - len(self.removed[layer_id])

    def remove(self, layers: tuple[str, ...], index: int) -> None:
        for layer in layers:
            self.removed[layer].add(index)

    def restore(self, layers: tuple[str, ...], index: int) -> None:
        for layer in layers:
            self.removed[layer].discard(index)

    def _live_count(self, node_id: str) -> int:
        if node_id == INPUT_ID:
            return self.graph.input_shape.channels
        count = 0
        for entries in self.sources[node_id]:
            if all(src not in self.removed or idx not in self.removed[src] for src, idx in entries):
                count += 1
        return count

    def total_params(self) -> int:
        total = 0
        for node in self.graph.nodes:
            if node.kind == "Conv":
                n = self.survivors(node.id)
                m = self._live_count(node.inputs[0])
                per_filter_in = 1 if node.groups > 1 else m
                total += n * per_filter_in * node.kernel ** 2
                if node.has_bias:
                    total += n
            elif node.kind == "BatchNorm":
                total += 4 * self._live_count(node.inputs[0])
            elif node.kind == "Linear":
                total += self._live_count(node.inputs[0]) * node.params["out_features"]
                total += node.params["out_features"]
        return total


def _sorted_units(scores: list[FilterScore]) -> list[FilterScore]:
    return sorted(scores, key=lambda s: (s.score, s.layer_id, s.filter_index))


def _check_coverage(graph: ModelGraph, depmap: DependencyMap, scores: list[FilterScore]) -> None:
    covered: set[tuple[str, int]] = set()
    for unit in scores:
        for layer in unit.layers():
            covered.add((layer, unit.filter_index))
    for node in graph.nodes:
        if node.kind != "Conv" or node.id in depmap.unprunable:
            continue
        for idx in range(node.out_channels):
            if (node.id, idx) not in covered:
                raise ValidationError(f"scores do not cover filter {idx} of layer '{node.id}'")


def build_plan(
    graph: ModelGraph,
    depmap: DependencyMap,
    scores: list[FilterScore],
    target_level: float,
    scope: str = "global",
) -> PrunePlan:
    if not 0 <= target_level < 100:
        raise ValidationError(f"target_level must be in [0, 100), got {target_level}")
    if scope not in RANKING_SCOPES:
        raise ValidationError(f"unknown ranking scope '{scope}'")
    _check_coverage(graph, depmap, scores)

    census = SurvivorCensus(graph)
    original = census.total_params()
    if target_level == 0:
        return PrunePlan({}, 0.0, 0.0, scope, original, original)

    if scope == "global":
        order = _remove_global(census, _sorted_units(scores), target_level, original)
    else:
        order = _remove_per_layer(census, _sorted_units(scores), target_level)

    surviving = census.total_params()
    achieved = 100.0 * (original - surviving) / original
    removals = {
        layer: sorted(indices) for layer, indices in census.removed.items() if indices
    }
    return PrunePlan(removals, target_level, achieved, scope, original, surviving, order)


def _remove_global(
    census: SurvivorCensus,
    units: list[FilterScore],
    target: float,
    original: int,
) -> list[tuple[tuple[str, ...], int]]:
    order: list[tuple[tuple[str, ...], int]] = []
    for unit in units:
        layers = unit.layers()
        if any(census.survivors(layer) <= 1 for layer in layers):
            continue
        census.remove(layers, unit.filter_index)
        order.append((layers, unit.filter_index))
        current = census.total_params()
        if 100.0 * (original - current) / original >= target:
            return order
    achieved = 100.0 * (original - census.total_params()) / original
    raise InfeasibleTargetError(
        f"target level {target}% unreachable; maximum achievable is {achieved:.2f}%",
        max_achievable=achieved,
    )


def _remove_per_layer(
    census: SurvivorCensus,
    units: list[FilterScore],
    target: float,
) -> list[tuple[tuple[str, ...], int]]:
    """Round-robin over layers until each has shed >= target percent of its
    own conv memory. Every removed filter weighs the same within a layer,
    so the per-layer quota is ceil(n * target / 100) filters."""
    per_layer: dict[str, list[FilterScore]] = {}
    for unit in units:
        for layer in unit.layers():
            per_layer.setdefault(layer, []).append(unit)

    quotas: dict[str, int] = {}
    removed_count: dict[str, int] = {}
    for layer in per_layer:
        n = census.n_total[layer]
        quota = math.ceil(n * target / 100.0)
        if quota > n - 1:
            raise InfeasibleTargetError(
                f"per-layer target {target}% needs {quota}/{n} filters of '{layer}'; "
                f"at most {n - 1} may be removed",
                max_achievable=100.0 * (n - 1) / n,
            )
        quotas[layer] = quota
        removed_count[layer] = 0

    consumed: set[int] = set()
    order: list[tuple[tuple[str, ...], int]] = []
    layer_order = sorted(per_layer)
    while any(removed_count[l] < quotas[l] for l in layer_order):
        progress = False
        for layer in layer_order:
            if removed_count[layer] >= quotas[layer]:
                continue
            unit = next(
                (
                    u for u in per_layer[layer]
                    if id(u) not in consumed
                    and all(census.survivors(m) > 1 for m in u.layers())
                ),
                None,
            )
            if unit is None:
                continue
            consumed.add(id(unit))
            layers = unit.layers()
            census.remove(layers, unit.filter_index)
            order.append((layers, unit.filter_index))
            for member in layers:
                removed_count[member] += 1
            progress = True
        if not progress:
            raise InfeasibleTargetError(
                f"per-layer target {target}% unreachable under the one-survivor guard",
                max_achievable=0.0,
            )
    return order
