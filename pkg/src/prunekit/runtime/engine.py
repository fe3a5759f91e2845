"""Graph execution: forward inference, loss with reverse-mode gradients,
and split evaluation.

Activations are plain (N, C, H, W) float32 arrays; pass dtype=np.float64
for the verification mode used by gradient checks. Train-mode forwards
use batch statistics in BatchNorm layers and, when requested, write the
updated running statistics back into the weight store.
"""

from __future__ import annotations

import numpy as np

from prunekit.errors import EmptySplitError, NonFiniteError, ShapeMismatchError
from prunekit.ir import INPUT_ID, ModelGraph, topo_sort
from prunekit.runtime import kernels
from prunekit.runtime.weights import WeightStore

LEARNABLE_SUFFIXES = (".weight", ".bias", ".gamma", ".beta")


def _check_batch(graph: ModelGraph, batch: np.ndarray) -> None:
    if batch.ndim != 4 or tuple(batch.shape[1:]) != graph.input_shape.dims:
        raise ShapeMismatchError(
            f"batch shape {tuple(batch.shape)} does not match input shape {graph.input_shape.dims}"
        )


def _run_forward(
    graph: ModelGraph,
    weights: WeightStore,
    batch: np.ndarray,
    mode: str,
    dtype,
    update_running: bool,
):
    _check_batch(graph, batch)
    order = topo_sort(graph.nodes)
    acts: dict[str, np.ndarray] = {INPUT_ID: batch.astype(dtype, copy=False)}
    caches: dict[str, object] = {}

    def tensor(name: str) -> np.ndarray:
        return weights[name].astype(dtype, copy=False)

    for node in order:
        ins = [acts[i] for i in node.inputs]
        if node.kind == "Conv":
            bias = tensor(f"{node.id}.bias") if node.has_bias else None
            out, cache = kernels.conv2d_forward(
                ins[0], tensor(f"{node.id}.weight"), bias,
                node.params["stride"], node.params["padding"], node.groups,
            )
        elif node.kind == "BatchNorm":
            out, cache, new_stats = kernels.batchnorm_forward(
                ins[0],
                tensor(f"{node.id}.gamma"), tensor(f"{node.id}.beta"),
                tensor(f"{node.id}.running_mean"), tensor(f"{node.id}.running_var"),
                node.params["epsilon"], node.params["momentum"], mode,
            )
            if mode == "train" and update_running:
                weights[f"{node.id}.running_mean"] = new_stats[0].astype(np.float32)
                weights[f"{node.id}.running_var"] = new_stats[1].astype(np.float32)
        elif node.kind == "ReLU":
            out = np.maximum(ins[0], 0)
            cache = ins[0] > 0
        elif node.kind == "MaxPool":
            out, cache = kernels.maxpool_forward(ins[0], node.params["kernel"], node.params["stride"])
        elif node.kind == "GlobalAvgPool":
            out, cache = kernels.global_avgpool_forward(ins[0])
        elif node.kind == "Add":
            out, cache = ins[0] + ins[1], None
        elif node.kind == "Concat":
            out = np.concatenate(ins, axis=1)
            cache = [a.shape[1] for a in ins]
        elif node.kind == "Flatten":
            out = ins[0].reshape(ins[0].shape[0], -1)
            cache = ins[0].shape
        elif node.kind == "Linear":
            out, cache = kernels.linear_forward(ins[0], tensor(f"{node.id}.weight"), tensor(f"{node.id}.bias"))
        else:  # pragma: no cover
            raise ShapeMismatchError(f"no kernel for kind {node.kind}")
        acts[node.id] = out
        caches[node.id] = cache
    return acts, caches, order


def forward(
    graph: ModelGraph,
    weights: WeightStore,
    batch: np.ndarray,
    mode: str = "eval",
    dtype=np.float32,
) -> np.ndarray:
    """Logits of shape (N, num_classes). Train mode updates BN running
    statistics in place with each layer's configured momentum."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    acts, _, _ = _run_forward(graph, weights, batch, mode, dtype, update_running=(mode == "train"))
    return acts[graph.output_node().id]


def loss_and_gradients(
    graph: ModelGraph,
    weights: WeightStore,
    batch: np.ndarray,
    labels: np.ndarray,
    dtype=np.float32,
    update_running: bool = True,
) -> tuple[float, WeightStore]:
    """Mean softmax cross-entropy in train mode plus gradients for every
    learnable tensor (same keys and shapes as the weight store)."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or len(labels) != len(batch):
        raise ShapeMismatchError("labels must be one integer per batch sample")
    if labels.size and (labels.min() < 0 or labels.max() >= graph.num_classes):
        raise ShapeMismatchError("label out of range")

    acts, caches, order = _run_forward(graph, weights, batch, "train", dtype, update_running)
    out_id = graph.output_node().id
    loss, dlogits = kernels.softmax_cross_entropy(acts[out_id], labels)
    if not np.isfinite(loss):
        raise NonFiniteError("loss is not finite")

    grads = WeightStore()
    dact: dict[str, np.ndarray] = {out_id: dlogits}

    def accumulate(node_id: str, value: np.ndarray) -> None:
        if node_id in dact:
            dact[node_id] = dact[node_id] + value
        else:
            dact[node_id] = value

    def wtensor(name: str) -> np.ndarray:
        return weights[name].astype(dtype, copy=False)

    for node in reversed(order):
        dout = dact.pop(node.id, None)
        if dout is None:
            continue
        cache = caches[node.id]
        if node.kind == "Conv":
            dx, dw, db = kernels.conv2d_backward(dout, wtensor(f"{node.id}.weight"), cache)
            grads[f"{node.id}.weight"] = dw
            if node.has_bias:
                grads[f"{node.id}.bias"] = db
            accumulate(node.inputs[0], dx)
        elif node.kind == "BatchNorm":
            dx, dgamma, dbeta = kernels.batchnorm_backward(dout, cache)
            grads[f"{node.id}.gamma"] = dgamma
            grads[f"{node.id}.beta"] = dbeta
            accumulate(node.inputs[0], dx)
        elif node.kind == "ReLU":
            accumulate(node.inputs[0], dout * cache)
        elif node.kind == "MaxPool":
            accumulate(node.inputs[0], kernels.maxpool_backward(dout, cache))
        elif node.kind == "GlobalAvgPool":
            accumulate(node.inputs[0], kernels.global_avgpool_backward(dout, cache))
        elif node.kind == "Add":
            accumulate(node.inputs[0], dout)
            accumulate(node.inputs[1], dout)
        elif node.kind == "Concat":
            offset = 0
            for producer, width in zip(node.inputs, cache):
                accumulate(producer, dout[:, offset:offset + width])
                offset += width
        elif node.kind == "Flatten":
            accumulate(node.inputs[0], dout.reshape(cache))
        elif node.kind == "Linear":
            dx, dw, db = kernels.linear_backward(dout, wtensor(f"{node.id}.weight"), cache)
            grads[f"{node.id}.weight"] = dw
            grads[f"{node.id}.bias"] = db
            accumulate(node.inputs[0], dx)

    for name, grad in grads.tensors.items():
        if not np.isfinite(grad).all():
            raise NonFiniteError(f"gradient '{name}' is not finite")
    return loss, grads


def evaluate(
    graph: ModelGraph,
    weights: WeightStore,
    split: tuple[np.ndarray, np.ndarray],
    batch_size: int = 256,
) -> tuple[float, np.ndarray]:
    """Top-1 accuracy plus a per-class vector (NaN for classes absent from
    the split)."""
    x, y = split
    if len(x) == 0:
        raise EmptySplitError("cannot evaluate an empty split")
    correct = np.zeros(graph.num_classes, dtype=np.int64)
    counts = np.zeros(graph.num_classes, dtype=np.int64)
    for start in range(0, len(x), batch_size):
        xb = x[start:start + batch_size]
        yb = y[start:start + batch_size]
        pred = forward(graph, weights, xb, mode="eval").argmax(axis=1)
        for cls in np.unique(yb):
            mask = yb == cls
            counts[cls] += mask.sum()
            correct[cls] += (pred[mask] == cls).sum()
    with np.errstate(invalid="ignore"):
        per_class = np.where(counts > 0, correct / np.maximum(counts, 1), np.nan)
    return float(correct.sum() / counts.sum()), per_class
