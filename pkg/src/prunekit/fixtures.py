"""Bundled tiny architectures covering the four structural modules:
plain sequential stacks, residual groups with a downsampling 1x1 conv,
inverted-bottleneck blocks with depthwise convs, and squeeze/expand
modules joined by Concat. All are sized for 32x32 inputs.

The canonical JSON documents under ``fixtures/`` are generated from the
builders here (``python -m prunekit.fixtures``); a test guards against
drift between the two.
"""

from __future__ import annotations

import importlib.resources

from prunekit.ir import LayerNode, ModelGraph, TensorShape, parse_model, serialize_model

FIXTURE_NAMES = ("tiny-alexnet", "tiny-resnet", "tiny-mobilenetv2", "tiny-squeezenet")


def _conv(nid, src, n, m, k, stride=1, padding=0, groups=1, bias=True, tags=()):
    return LayerNode(
        id=nid,
        kind="Conv",
        inputs=(src,),
        params={
            "out_channels": n,
            "in_channels": m,
            "kernel": k,
            "stride": stride,
            "padding": padding,
            "groups": groups,
            "has_bias": bias,
        },
        annotations=frozenset(tags),
    )


def _bn(nid, src, channels):
    return LayerNode(
        id=nid, kind="BatchNorm", inputs=(src,),
        params={"channels": channels, "epsilon": 1e-5, "momentum": 0.1},
    )


def _relu(nid, src):
    return LayerNode(id=nid, kind="ReLU", inputs=(src,), params={})


def _maxpool(nid, src, k=2, s=2):
    return LayerNode(id=nid, kind="MaxPool", inputs=(src,), params={"kernel": k, "stride": s})


def _linear(nid, src, m, n):
    return LayerNode(id=nid, kind="Linear", inputs=(src,), params={"in_features": m, "out_features": n})


def tiny_alexnet(num_classes: int = 10) -> ModelGraph:
    nodes = [
        _conv("conv1", "input", 16, 3, 3, padding=1, tags=("plain",)),
        _relu("relu1", "conv1"),
        _maxpool("pool1", "relu1"),
        _conv("conv2", "pool1", 32, 16, 3, padding=1, tags=("plain",)),
        _relu("relu2", "conv2"),
        _maxpool("pool2", "relu2"),
        _conv("conv3", "pool2", 64, 32, 3, padding=1, tags=("plain",)),
        _relu("relu3", "conv3"),
        _maxpool("pool3", "relu3"),
        LayerNode(id="flatten", kind="Flatten", inputs=("pool3",), params={}),
        _linear("fc", "flatten", 64 * 4 * 4, num_classes),
    ]
    return ModelGraph("tiny-alexnet", TensorShape((3, 32, 32)), num_classes, tuple(nodes))


def tiny_resnet(num_classes: int = 10) -> ModelGraph:
    widths = (8, 16, 32)
    nodes = [
        _conv("stem", "input", widths[0], 3, 3, padding=1, bias=False),
        _bn("stem_bn", "stem", widths[0]),
        _relu("stem_relu", "stem_bn"),
    ]
    src = "stem_relu"
    in_ch = widths[0]
    for gid, width in enumerate(widths):
        for block in range(2):
            prefix = f"g{gid}b{block}"
            stride = 2 if (gid > 0 and block == 0) else 1
            gtag = f"residual_group:{gid}"
            nodes += [
                _conv(f"{prefix}_conv1", src, width, in_ch, 3, stride=stride, padding=1, bias=False),
                _bn(f"{prefix}_bn1", f"{prefix}_conv1", width),
                _relu(f"{prefix}_relu1", f"{prefix}_bn1"),
                _conv(f"{prefix}_conv2", f"{prefix}_relu1", width, width, 3, padding=1,
                      bias=False, tags=("residual_final", gtag)),
                _bn(f"{prefix}_bn2", f"{prefix}_conv2", width),
            ]
            if block == 0:
                nodes += [
                    _conv(f"g{gid}_down", src, width, in_ch, 1, stride=stride,
                          bias=False, tags=("residual_down", gtag)),
                    _bn(f"g{gid}_down_bn", f"g{gid}_down", width),
                ]
                skip = f"g{gid}_down_bn"
            else:
                skip = src
            nodes += [
                LayerNode(id=f"{prefix}_add", kind="Add", inputs=(f"{prefix}_bn2", skip), params={}),
                _relu(f"{prefix}_out", f"{prefix}_add"),
            ]
            src = f"{prefix}_out"
            in_ch = width
    nodes += [
        LayerNode(id="gap", kind="GlobalAvgPool", inputs=(src,), params={}),
        LayerNode(id="flatten", kind="Flatten", inputs=("gap",), params={}),
        _linear("fc", "flatten", widths[-1], num_classes),
    ]
    return ModelGraph("tiny-resnet", TensorShape((3, 32, 32)), num_classes, tuple(nodes))


def tiny_mobilenetv2(num_classes: int = 10) -> ModelGraph:
    nodes = [
        _conv("stem", "input", 8, 3, 3, padding=1, bias=False),
        _bn("stem_bn", "stem", 8),
        _relu("stem_relu", "stem_bn"),
    ]
    src = "stem_relu"
    in_ch = 8
    # (out_channels, expansion, stride); stride-1 blocks with in == out gain a skip Add
    blocks = [(12, 2, 1), (12, 2, 1), (16, 2, 2), (16, 2, 1)]
    for i, (out_ch, expansion, stride) in enumerate(blocks):
        prefix = f"b{i}"
        hidden = in_ch * expansion
        block_in = src
        nodes += [
            _conv(f"{prefix}_expand", src, hidden, in_ch, 1, bias=False),
            _bn(f"{prefix}_expand_bn", f"{prefix}_expand", hidden),
            _relu(f"{prefix}_expand_relu", f"{prefix}_expand_bn"),
            _conv(f"{prefix}_dw", f"{prefix}_expand_relu", hidden, hidden, 3, stride=stride,
                  padding=1, groups=hidden, bias=False, tags=("depthwise",)),
            _bn(f"{prefix}_dw_bn", f"{prefix}_dw", hidden),
            _relu(f"{prefix}_dw_relu", f"{prefix}_dw_bn"),
            _conv(f"{prefix}_project", f"{prefix}_dw_relu", out_ch, hidden, 1, bias=False),
            _bn(f"{prefix}_project_bn", f"{prefix}_project", out_ch),
        ]
        src = f"{prefix}_project_bn"
        if stride == 1 and in_ch == out_ch:
            nodes.append(LayerNode(id=f"{prefix}_add", kind="Add", inputs=(src, block_in), params={}))
            src = f"{prefix}_add"
        in_ch = out_ch
    nodes += [
        LayerNode(id="gap", kind="GlobalAvgPool", inputs=(src,), params={}),
        LayerNode(id="flatten", kind="Flatten", inputs=("gap",), params={}),
        _linear("fc", "flatten", 16, num_classes),
    ]
    return ModelGraph("tiny-mobilenetv2", TensorShape((3, 32, 32)), num_classes, tuple(nodes))


def tiny_squeezenet(num_classes: int = 10) -> ModelGraph:
    nodes = [
        _conv("stem", "input", 16, 3, 3, padding=1),
        _relu("stem_relu", "stem"),
        _maxpool("pool1", "stem_relu"),
    ]
    src = "pool1"
    in_ch = 16
    # (squeeze, expand) channel counts per fire module; expands concat to 2x expand
    fires = [(8, 16), (8, 16), (12, 24)]
    for i, (squeeze, expand) in enumerate(fires):
        prefix = f"fire{i + 1}"
        nodes += [
            _conv(f"{prefix}_squeeze", src, squeeze, in_ch, 1, tags=("fire_squeeze",)),
            _relu(f"{prefix}_squeeze_relu", f"{prefix}_squeeze"),
            _conv(f"{prefix}_e1", f"{prefix}_squeeze_relu", expand, squeeze, 1, tags=("fire_expand",)),
            _relu(f"{prefix}_e1_relu", f"{prefix}_e1"),
            _conv(f"{prefix}_e3", f"{prefix}_squeeze_relu", expand, squeeze, 3, padding=1,
                  tags=("fire_expand",)),
            _relu(f"{prefix}_e3_relu", f"{prefix}_e3"),
            LayerNode(id=f"{prefix}_cat", kind="Concat",
                      inputs=(f"{prefix}_e1_relu", f"{prefix}_e3_relu"), params={}),
        ]
        src = f"{prefix}_cat"
        in_ch = 2 * expand
        if i == 1:
            nodes.append(_maxpool("pool2", src))
            src = "pool2"
    nodes += [
        LayerNode(id="gap", kind="GlobalAvgPool", inputs=(src,), params={}),
        LayerNode(id="flatten", kind="Flatten", inputs=("gap",), params={}),
        _linear("fc", "flatten", in_ch, num_classes),
    ]
    return ModelGraph("tiny-squeezenet", TensorShape((3, 32, 32)), num_classes, tuple(nodes))


_BUILDERS = {
    "tiny-alexnet": tiny_alexnet,
    "tiny-resnet": tiny_resnet,
    "tiny-mobilenetv2": tiny_mobilenetv2,
    "tiny-squeezenet": tiny_squeezenet,
}


def build_fixture(name: str, num_classes: int = 10) -> ModelGraph:
    return _BUILDERS[name](num_classes)


def fixture_text(name: str) -> str:
    """Canonical document text of a bundled fixture, as shipped."""
    path = importlib.resources.files("prunekit") / "fixtures" / f"{name.replace('-', '_')}.json"
    return path.read_text(encoding="utf-8")


def load_fixture(name: str) -> ModelGraph:
    return parse_model(fixture_text(name))


def write_fixture_files(directory) -> None:
    from pathlib import Path

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name, builder in _BUILDERS.items():
        path = out / f"{name.replace('-', '_')}.json"
        path.write_text(serialize_model(builder()), encoding="utf-8")


if __name__ == "__main__":
    import pathlib

    write_fixture_files(pathlib.Path(__file__).parent / "fixtures")
