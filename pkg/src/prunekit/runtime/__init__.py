from prunekit.runtime.augment import AugmentConfig, augment
from prunekit.runtime.bench import BenchResult, bench_inference
from prunekit.runtime.engine import evaluate, forward, loss_and_gradients
from prunekit.runtime.train import LrPolicy, LrSchedule, TrainConfig, split_train_val, train
from prunekit.runtime.weights import (
    WeightStore,
    expected_tensor_shapes,
    init_weights,
    load_weights,
    save_weights,
    validate_weights,
)

__all__ = [
    "AugmentConfig",
    "BenchResult",
    "LrPolicy",
    "LrSchedule",
    "TrainConfig",
    "WeightStore",
    "augment",
    "bench_inference",
    "evaluate",
    "expected_tensor_shapes",
    "forward",
    "init_weights",
    "load_weights",
    "loss_and_gradients",
    "save_weights",
    "split_train_val",
    "train",
    "validate_weights",
]
