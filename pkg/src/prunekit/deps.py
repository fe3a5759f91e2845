"""Pruning dependency analysis.

Derives, from graph structure, the groups of conv layers whose output
filters must be pruned with identical indices, plus the map from every
producer channel to the input channels of downstream weight-bearing
consumers. Two coupling causes exist:

* residual: an Add node sums two branches, so every conv that defines the
  channels of either branch must drop the same filter indices;
* depthwise: a depthwise conv owns one filter per incoming feature map,
  so its filters must match the filters of whatever feeds it.

Annotations never create dependencies; they only name roles (which conv
is the group's final/down conv) and are cross-checked against the
structure so mislabeled models are rejected instead of silently pruned.
"""

from __future__ import annotations

from dataclasses import dataclass

from prunekit.errors import DependencyError
from prunekit.ir import INPUT_ID, ModelGraph, infer_shapes, topo_sort

# A source is (defining node id, channel index); INPUT_ID marks raw input channels.
Source = tuple[str, int]


@dataclass(frozen=True)
class DependencySet:
    members: frozenset[str]
    coupling: str  # "residual" | "depthwise"
    group_id: int | None = None

    def sorted_members(self) -> list[str]:
        return sorted(self.members)


@dataclass
class DependencyMap:
    sets: list[DependencySet]
    consumer_map: dict[Source, list[Source]]
    unprunable: frozenset[str] = frozenset()

    def set_for(self, layer_id: str) -> DependencySet | None:
        for dep in self.sets:
            if layer_id in dep.members:
                return dep
        return None


@dataclass
class PlanViolation:
    kind: str  # "coupling" | "unprunable"
    filter_index: int
    members: tuple[str, ...]
    removed_in: tuple[str, ...] = ()
    retained_in: tuple[str, ...] = ()


def channel_sources(graph: ModelGraph) -> dict[str, list[frozenset[Source]]]:
    """For every node, the set of (conv, filter) pairs defining each output
    channel position. Flatten expands each channel into H*W feature slots."""
    shapes = infer_shapes(graph)
    c_in = graph.input_shape.channels
    sources: dict[str, list[frozenset[Source]]] = {
        INPUT_ID: [frozenset({(INPUT_ID, c)}) for c in range(c_in)]
    }
    for node in topo_sort(graph.nodes):
        ins = [sources[i] for i in node.inputs]
        if node.kind == "Conv":
            out = [frozenset({(node.id, i)}) for i in range(node.out_channels)]
        elif node.kind in ("BatchNorm", "ReLU", "MaxPool", "GlobalAvgPool"):
            out = ins[0]
        elif node.kind == "Add":
            out = [a | b for a, b in zip(ins[0], ins[1])]
        elif node.kind == "Concat":
            out = [entry for branch in ins for entry in branch]
        elif node.kind == "Flatten":
            dims = shapes[node.inputs[0]].dims
            repeat = dims[1] * dims[2] if len(dims) == 3 else 1
            out = [entry for entry in ins[0] for _ in range(repeat)]
        elif node.kind == "Linear":
            out = [frozenset({(node.id, j)}) for j in range(node.params["out_features"])]
        else:  # pragma: no cover - kinds are closed
            raise DependencyError(f"no source rule for kind {node.kind}")
        sources[node.id] = out
    return sources


def _identity_aligned(positions: list[frozenset[Source]], context: str) -> set[str]:
    """Collect defining conv ids, requiring source filter index == position.

    Offset-coupled structures (e.g. a Concat output summed by an Add, or a
    depthwise conv fed through a Concat) cannot be pruned with identical
    indices and are rejected.
    """
    definers: set[str] = set()
    for position, entries in enumerate(positions):
        for src_id, src_idx in entries:
            if src_idx != position:
                raise DependencyError(
                    f"{context}: channel {position} is defined by '{src_id}' filter {src_idx}; "
                    "offset-coupled structures are unsupported"
                )
            definers.add(src_id)
    return definers


def _merge_groups(raw_groups: list[tuple[set[str], str]]) -> list[tuple[set[str], str]]:
    """Transitive union of overlapping member sets. A merged set keeps the
    'depthwise' label only if every constituent was depthwise."""
    merged: list[tuple[set[str], set[str]]] = []
    for members, coupling in raw_groups:
        members = set(members)
        couplings = {coupling}
        while True:
            hit = next((g for g in merged if g[0] & members), None)
            if hit is None:
                break
            merged.remove(hit)
            members |= hit[0]
            couplings |= hit[1]
        merged.append((members, couplings))
    return [(m, "residual" if "residual" in c else "depthwise") for m, c in merged]


def compute_dependencies(graph: ModelGraph, policy: str = "tie_group") -> DependencyMap:
    if policy not in ("tie_group", "skip_final"):
        raise ValueError(f"unknown residual policy '{policy}'")
    for node in graph.nodes:
        if node.kind == "Conv" and node.groups > 1 and not node.is_depthwise():
            raise DependencyError(f"node '{node.id}': grouped convolutions other than depthwise are unsupported")

    sources = channel_sources(graph)
    raw_groups: list[tuple[set[str], str]] = []
    for node in graph.nodes:
        if node.kind == "Add":
            definers = set()
            for branch in node.inputs:
                definers |= _identity_aligned(sources[branch], f"Add '{node.id}'")
            raw_groups.append((definers, "residual"))
        elif node.kind == "Conv" and node.is_depthwise():
            feeder = graph.node(node.inputs[0]) if node.inputs[0] != INPUT_ID else None
            if feeder is not None and feeder.kind == "Concat":
                raise DependencyError(f"depthwise conv '{node.id}' fed by Concat '{feeder.id}'")
            definers = _identity_aligned(sources[node.inputs[0]], f"depthwise conv '{node.id}'")
            raw_groups.append((definers | {node.id}, "depthwise"))

    merged = _merge_groups(raw_groups)
    sets: list[DependencySet] = []
    unprunable: set[str] = set()
    for members, coupling in merged:
        if INPUT_ID in members:
            # coupled to raw input channels: nothing in the set may be pruned
            unprunable |= members - {INPUT_ID}
            continue
        gid = _annotation_group_id(graph, members, coupling)
        sets.append(DependencySet(frozenset(members), coupling, gid))

    _cross_check_annotations(graph, sets)
    _check_member_widths(graph, sets)

    if policy == "skip_final":
        kept = []
        for dep in sets:
            if dep.coupling == "residual":
                unprunable |= dep.members
            else:
                kept.append(dep)
        sets = kept

    sets.sort(key=lambda d: min(d.members))
    return DependencyMap(
        sets=sets,
        consumer_map=_build_consumer_map(graph, sources),
        unprunable=frozenset(unprunable),
    )


def _annotation_group_id(graph: ModelGraph, members: set[str], coupling: str) -> int | None:
    gids = {graph.node(m).residual_group() for m in members} - {None}
    if len(gids) > 1:
        raise DependencyError(
            f"dependency set {sorted(members)} spans residual groups {sorted(gids)}"
        )
    if gids and coupling != "residual":
        raise DependencyError(
            f"residual_group tag on depthwise-coupled set {sorted(members)}"
        )
    return gids.pop() if gids else None


def _cross_check_annotations(graph: ModelGraph, sets: list[DependencySet]) -> None:
    """Tags must agree with the structurally derived sets."""
    by_gid: dict[int, dict[str, set[str]]] = {}
    for node in graph.nodes:
        gid = node.residual_group()
        if gid is None:
            continue
        entry = by_gid.setdefault(gid, {"final": set(), "down": set()})
        if "residual_final" in node.annotations:
            entry["final"].add(node.id)
        if "residual_down" in node.annotations:
            entry["down"].add(node.id)

    set_of = {m: dep for dep in sets for m in dep.members}
    for gid, entry in sorted(by_gid.items()):
        tagged = entry["final"] | entry["down"]
        if not entry["down"]:
            raise DependencyError(f"residual group {gid} has no residual_down conv")
        if not entry["final"]:
            raise DependencyError(
                f"residual_down {sorted(entry['down'])} has no residual_final in group {gid}"
            )
        deps = {id(set_of[m]) for m in tagged if m in set_of}
        if len(deps) != 1 or any(m not in set_of for m in tagged):
            raise DependencyError(
                f"residual group {gid} tags {sorted(tagged)} do not form one structural dependency set"
            )


def _check_member_widths(graph: ModelGraph, sets: list[DependencySet]) -> None:
    for dep in sets:
        widths = {graph.node(m).out_channels for m in dep.members}
        if len(widths) != 1:
            raise DependencyError(
                f"dependency set {dep.sorted_members()} mixes output widths {sorted(widths)}"
            )


def _build_consumer_map(
    graph: ModelGraph, sources: dict[str, list[frozenset[Source]]]
) -> dict[Source, list[Source]]:
    consumer_map: dict[Source, list[Source]] = {}
    for node in graph.nodes:
        if node.kind == "Conv":
            for i in range(node.out_channels):
                consumer_map[(node.id, i)] = []
    for node in graph.nodes:
        if node.kind not in ("Conv", "Linear"):
            continue
        for position, entries in enumerate(sources[node.inputs[0]]):
            for src_id, src_idx in entries:
                if (src_id, src_idx) in consumer_map:
                    consumer_map[(src_id, src_idx)].append((node.id, position))
    return consumer_map


def validate_plan_against_deps(depmap: DependencyMap, plan) -> list[PlanViolation]:
    """Empty list means the plan respects every dependency. Violations are
    data, not failures: one entry per (set, index) removed in some member
    but retained in another, plus entries for removals on unprunable layers."""
    removals: dict[str, list[int]] = getattr(plan, "removals", plan)
    violations: list[PlanViolation] = []
    for dep in depmap.sets:
        per_member = {m: set(removals.get(m, ())) for m in dep.sorted_members()}
        union = set().union(*per_member.values())
        for idx in sorted(union):
            removed = tuple(m for m in dep.sorted_members() if idx in per_member[m])
            retained = tuple(m for m in dep.sorted_members() if idx not in per_member[m])
            if retained:
                violations.append(
                    PlanViolation(
                        kind="coupling",
                        filter_index=idx,
                        members=tuple(dep.sorted_members()),
                        removed_in=removed,
                        retained_in=retained,
                    )
                )
    for layer in sorted(depmap.unprunable):
        for idx in sorted(removals.get(layer, ())):
            violations.append(PlanViolation(kind="unprunable", filter_index=idx, members=(layer,)))
    return violations
