from __future__ import annotations

import numpy as np
import pytest

from prunekit.fixtures import FIXTURE_NAMES, load_fixture
from prunekit.ir import LayerNode, ModelGraph, TensorShape
from prunekit.runtime import init_weights

ALL_FIXTURES = list(FIXTURE_NAMES)


def make_node(nid, kind, inputs, annotations=(), **params):
    return LayerNode(
        id=nid, kind=kind, inputs=tuple(inputs), params=params,
        annotations=frozenset(annotations),
    )


def conv(nid, src, n, m, k=3, stride=1, padding=1, groups=1, bias=True, tags=()):
    return make_node(
        nid, "Conv", [src], annotations=tags,
        out_channels=n, in_channels=m, kernel=k, stride=stride,
        padding=padding, groups=groups, has_bias=bias,
    )


@pytest.fixture(params=ALL_FIXTURES)
def fixture_graph(request):
    return load_fixture(request.param)


@pytest.fixture
def tiny_resnet():
    return load_fixture("tiny-resnet")


@pytest.fixture
def tiny_alexnet():
    return load_fixture("tiny-alexnet")


@pytest.fixture
def tiny_mobilenet():
    return load_fixture("tiny-mobilenetv2")


@pytest.fixture
def tiny_squeezenet():
    return load_fixture("tiny-squeezenet")


def seeded_weights(graph, seed=0, randomize_bn=True):
    """Init weights and, optionally, give BN tensors non-trivial values so
    equivalence tests do not pass by accident."""
    weights = init_weights(graph, seed=seed)
    if randomize_bn:
        rng = np.random.default_rng(seed + 1000)
        for node in graph.nodes:
            if node.kind == "BatchNorm":
                c = node.params["channels"]
                weights[f"{node.id}.gamma"] = (0.5 + rng.random(c)).astype(np.float32)
                weights[f"{node.id}.beta"] = rng.normal(0, 0.3, c).astype(np.float32)
                weights[f"{node.id}.running_mean"] = rng.normal(0, 0.5, c).astype(np.float32)
                weights[f"{node.id}.running_var"] = (0.5 + rng.random(c)).astype(np.float32)
    return weights


def toy2_graph():
    """Two convs, a pool and a classifier head with hand-checkable sizes."""
    nodes = (
        conv("c1", "input", 4, 2, k=3, padding=1),
        make_node("r1", "ReLU", ["c1"]),
        conv("c2", "r1", 3, 4, k=3, padding=0),
        make_node("r2", "ReLU", ["c2"]),
        make_node("gap", "GlobalAvgPool", ["r2"]),
        make_node("fl", "Flatten", ["gap"]),
        make_node("fc", "Linear", ["fl"], in_features=3, out_features=2),
    )
    return ModelGraph("toy2", TensorShape((2, 8, 8)), 2, nodes)


def random_batch(graph, n=4, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, *graph.input_shape.dims)).astype(np.float32)


def random_respecting_plan(graph, depmap, rng):
    """Random removals per coupled set / free conv, leaving >= 1 survivor."""
    removals = {}
    grouped = {m for dep in depmap.sets for m in dep.members}
    for dep in depmap.sets:
        width = graph.node(next(iter(dep.members))).out_channels
        k = int(rng.integers(0, width))
        if k:
            idx = sorted(int(i) for i in rng.choice(width, size=k, replace=False))
            for member in dep.members:
                removals[member] = idx
    for node in graph.nodes:
        if node.kind != "Conv" or node.id in grouped or node.id in depmap.unprunable:
            continue
        k = int(rng.integers(0, node.out_channels))
        if k:
            removals[node.id] = sorted(
                int(i) for i in rng.choice(node.out_channels, size=k, replace=False)
            )
    return removals


def corrupt_plan(graph, depmap, plan, rng, mode):
    """Break one dependency set: drop an index from one member (count
    mismatch) or shift one member's index (equal counts, misaligned)."""
    plan = {k: list(v) for k, v in plan.items()}
    dep = depmap.sets[int(rng.integers(0, len(depmap.sets)))]
    members = dep.sorted_members()
    victim = members[int(rng.integers(0, len(members)))]
    width = graph.node(victim).out_channels
    current = plan.get(victim, [])
    if mode == "count":
        if current:
            plan[victim] = current[:-1]
            if not plan[victim]:
                del plan[victim]
        else:
            plan[victim] = [int(rng.integers(0, width))]
    else:  # permute one index
        if not current:
            return None
        free = [i for i in range(width) if i not in current]
        if not free:
            return None
        plan[victim] = sorted(current[:-1] + [free[0]])
    return plan


def mask_weights(graph, weights, removals):
    """Oracle-side masking: zero removed filters (weights and bias) and the
    gamma/beta of BN layers normalizing those channels, so the masked model
    computes exactly what the shrunk one does."""
    masked = weights.copy()
    for node in graph.nodes:
        if node.kind != "Conv" or node.id not in removals:
            continue
        idx = list(removals[node.id])
        masked[f"{node.id}.weight"][idx] = 0.0
        if node.has_bias:
            masked[f"{node.id}.bias"][idx] = 0.0
        for consumer in graph.consumers(node.id):
            if consumer.kind == "BatchNorm":
                masked[f"{consumer.id}.gamma"][idx] = 0.0
                masked[f"{consumer.id}.beta"][idx] = 0.0
    return masked


def finite_difference_check(graph, seed=0, batch_n=3, h=1e-5, rtol=1e-4, atol=1e-7):
    """Central-difference check of every returned gradient in 64-bit mode.

    Asserts |analytic - numeric| <= rtol*max(|a|,|n|) + atol per coordinate
    and returns the worst observed ratio against that bound.
    """
    from prunekit.runtime import loss_and_gradients

    rng = np.random.default_rng(seed)
    weights = init_weights(graph, seed=seed).astype(np.float64)
    for name in weights.names():
        if name.endswith((".bias", ".beta")):
            weights[name] = rng.normal(0, 0.3, weights[name].shape)
        elif name.endswith(".gamma"):
            weights[name] = 0.7 + 0.6 * rng.random(weights[name].shape)
        elif name.endswith(".running_mean"):
            weights[name] = rng.normal(0, 0.2, weights[name].shape)
    batch = rng.normal(0, 1, (batch_n, *graph.input_shape.dims))
    labels = rng.integers(0, graph.num_classes, batch_n)

    def loss_only():
        loss, _ = loss_and_gradients(graph, weights, batch, labels,
                                     dtype=np.float64, update_running=False)
        return loss

    _, grads = loss_and_gradients(graph, weights, batch, labels,
                                  dtype=np.float64, update_running=False)
    worst = 0.0
    for name, grad in sorted(grads.tensors.items()):
        flat_w = weights[name].ravel()
        flat_g = grad.ravel()
        for i in range(flat_w.size):
            orig = flat_w[i]
            flat_w[i] = orig + h
            up = loss_only()
            flat_w[i] = orig - h
            down = loss_only()
            flat_w[i] = orig
            numeric = (up - down) / (2 * h)
            bound = rtol * max(abs(numeric), abs(flat_g[i])) + atol
            err = abs(numeric - flat_g[i])
            worst = max(worst, err / bound if bound else 0.0)
            assert err <= bound, (
                f"{name}[{i}]: analytic {flat_g[i]:.3e} vs numeric {numeric:.3e}"
            )
    return worst
