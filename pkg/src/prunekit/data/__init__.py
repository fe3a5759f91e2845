from prunekit.data.cifar import ingest_cifar, parse_records, serialize_records
from prunekit.data.dataset import Dataset, SplitData, normalization_stats, to_arrays
from prunekit.data.subset import CIFAR100_COARSE_NAMES, coarse_to_fine, resolve_subset, subset
from prunekit.data.synthetic import generate_synthetic

__all__ = [
    "CIFAR100_COARSE_NAMES",
    "Dataset",
    "SplitData",
    "coarse_to_fine",
    "generate_synthetic",
    "ingest_cifar",
    "normalization_stats",
    "parse_records",
    "resolve_subset",
    "serialize_records",
    "subset",
    "to_arrays",
]
