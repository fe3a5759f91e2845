"""L1-norm filter ranking.

Each prunable conv filter gets the sum of absolute values over its
(m/groups)*k*k weight slice, bias excluded. Filters coupled by a
dependency set collapse to a single score, the mean of the member norms,
reported under the lexicographically smallest member id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from prunekit.deps import DependencyMap, DependencySet
from prunekit.ir import ModelGraph
from prunekit.runtime.weights import WeightStore, validate_weights


@dataclass(frozen=True)
class FilterScore:
    layer_id: str
    filter_index: int
    score: float
    group: DependencySet | None = None

    def layers(self) -> tuple[str, ...]:
        if self.group is None:
            return (self.layer_id,)
        return tuple(self.group.sorted_members())


def filter_l1_norms(graph: ModelGraph, weights: WeightStore) -> dict[str, np.ndarray]:
    """Per-conv vector of filter L1 norms, accumulated in float64."""
    norms: dict[str, np.ndarray] = {}
    for node in graph.nodes:
        if node.kind == "Conv":
            w = weights[f"{node.id}.weight"].astype(np.float64)
            norms[node.id] = np.abs(w).sum(axis=(1, 2, 3))
    return norms


def score_filters(graph: ModelGraph, weights: WeightStore, depmap: DependencyMap) -> list[FilterScore]:
    validate_weights(graph, weights)
    norms = filter_l1_norms(graph, weights)
    grouped = {m for dep in depmap.sets for m in dep.members}
    scores: list[FilterScore] = []
    for dep in depmap.sets:
        members = dep.sorted_members()
        if any(m in depmap.unprunable for m in members):
            continue
        stacked = np.stack([norms[m] for m in members])
        for idx, value in enumerate(stacked.mean(axis=0)):
            scores.append(FilterScore(members[0], idx, float(value), dep))
    for node in graph.nodes:
        if node.kind != "Conv" or node.id in grouped or node.id in depmap.unprunable:
            continue
        for idx, value in enumerate(norms[node.id]):
            scores.append(FilterScore(node.id, idx, float(value)))
    scores.sort(key=lambda s: (s.layer_id, s.filter_index))
    return scores
