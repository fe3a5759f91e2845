import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prunekit.data import generate_synthetic, subset, to_arrays
from prunekit.errors import PlanMismatchError, ValidationError
from prunekit.pruning import PrunePlan
from prunekit.runtime import AugmentConfig, LrPolicy, LrSchedule, TrainConfig, evaluate, split_train_val
from prunekit.search import (
    SearchConfig,
    SubsetData,
    SubsetSpec,
    TrialResult,
    baseline_accuracy,
    dapr_search,
    filter_divergence,
    finetune,
    pairwise_divergence,
    round_down_to_grid,
    round_up_to_grid,
)

from conftest import seeded_weights


def oracle_runner(threshold):
    def runner(level, iteration):
        ok = level <= threshold
        return TrialResult(
            level=level, achieved_level=level,
            val_accuracy=1.0 if ok else 0.0, test_accuracy=1.0 if ok else 0.0,
            success=ok, wall_seconds=0.0, peak_memory_bytes=0,
        )
    return runner


class TestSearchConfig:
    def test_default_grid_has_19_levels(self):
        assert len(SearchConfig().grid()) == 19

    def test_grid_contents(self):
        grid = SearchConfig().grid()
        assert grid[0] == 5.0 and grid[-1] == 95.0
        assert all(b - a == 5.0 for a, b in zip(grid, grid[1:]))

    def test_start_must_be_on_grid(self):
        with pytest.raises(ValidationError):
            SearchConfig(level_start=52.0)

    def test_span_divisibility(self):
        with pytest.raises(ValidationError):
            SearchConfig(level_low=5.0, level_high=94.0)

    def test_ordering(self):
        with pytest.raises(ValidationError):
            SearchConfig(level_low=60.0, level_start=50.0)

    def test_rounding_helpers(self):
        grid = SearchConfig().grid()
        assert round_up_to_grid(grid, 72.5) == 75.0
        assert round_down_to_grid(grid, 27.5) == 25.0
        assert round_up_to_grid(grid, 95.0) == 95.0
        assert round_down_to_grid(grid, 5.0) == 5.0


class TestBisection:
    def exhaustive(self, grid, threshold):
        passed = [g for g in grid if g <= threshold]
        return max(passed) if passed else None

    @given(st.floats(min_value=0.0, max_value=100.0))
    @settings(max_examples=200, deadline=None)
    def test_monotone_oracle_equivalence(self, threshold):
        cfg = SearchConfig()
        result = dapr_search(None, None, None, cfg, None, None, runner=oracle_runner(threshold))
        assert result.converged_level == self.exhaustive(cfg.grid(), threshold)
        assert result.evaluations <= math.ceil(math.log2(len(cfg.grid()))) + 2

    def test_all_fail_descends_from_start(self):
        result = dapr_search(None, None, None, SearchConfig(), None, None, runner=oracle_runner(-1))
        assert result.converged_level is None
        levels = [e.level for e in result.trace]
        assert levels[0] == 50.0 and levels[-1] == 5.0
        assert levels == sorted(levels, reverse=True)

    def test_all_pass_converges_at_high(self):
        result = dapr_search(None, None, None, SearchConfig(), None, None, runner=oracle_runner(200))
        assert result.converged_level == 95.0

    def test_trace_levels_on_grid(self):
        cfg = SearchConfig()
        grid = set(cfg.grid())
        for threshold in (0, 12, 37, 50, 63, 88, 95):
            result = dapr_search(None, None, None, cfg, None, None, runner=oracle_runner(threshold))
            assert {e.level for e in result.trace} <= grid

    @given(st.integers(0, 2 ** 19 - 1))
    @settings(max_examples=100, deadline=None)
    def test_non_monotone_returns_a_tried_success(self, mask):
        cfg = SearchConfig()
        grid = cfg.grid()
        outcome = {level: bool(mask >> i & 1) for i, level in enumerate(grid)}

        def runner(level, iteration):
            ok = outcome[level]
            return TrialResult(level=level, achieved_level=level, val_accuracy=float(ok),
                               test_accuracy=float(ok), success=ok, wall_seconds=0.0,
                               peak_memory_bytes=0)

        result = dapr_search(None, None, None, cfg, None, None, runner=runner)
        tried = {e.level for e in result.trace}
        if result.converged_level is not None:
            assert result.converged_level in tried
            assert outcome[result.converged_level]
        else:
            assert not any(outcome[level] for level in tried)

    def test_custom_grid(self):
        cfg = SearchConfig(level_low=20.0, level_high=80.0, level_step=20.0, level_start=60.0)
        result = dapr_search(None, None, None, cfg, None, None, runner=oracle_runner(45))
        assert result.converged_level == 40.0


def desk_setup(seed=0, classes=frozenset({0, 1, 2})):
    dataset = generate_synthetic(6, 40, 10, seed=seed)
    from prunekit.fixtures import load_fixture

    graph = load_fixture("tiny-squeezenet")
    weights = seeded_weights(graph, seed=seed, randomize_bn=False)
    spec = SubsetSpec("sub", classes)
    sub = subset(dataset, spec)
    data = SubsetData(
        spec=spec,
        train=to_arrays(sub.train, dataset.mean, dataset.std),
        test=to_arrays(sub.test, dataset.mean, dataset.std),
    )
    schedule = LrSchedule(initial=0.02, decay_epochs=[2], gamma=0.5)
    config = TrainConfig(epochs=2, lr_schedule=schedule, batch_size=32, seed=seed,
                         augment=AugmentConfig(crop_pad=None, horizontal_flip=False))
    return graph, weights, data, config, LrPolicy.from_schedule(schedule, 2)


class TestPipelinePieces:
    def test_baseline_matches_filter_then_evaluate(self):
        graph, weights, data, config, _ = desk_setup()
        a_star = baseline_accuracy(graph, weights, data, config.val_fraction, seed=3)
        _, val_split = split_train_val(*data.train, config.val_fraction, 3)
        direct, _ = evaluate(graph, weights, val_split)
        assert a_star == direct

    def test_finetune_zero_epochs_identity(self):
        graph, weights, data, config, policy = desk_setup()
        out = finetune(graph, weights, data, 0, policy, config)
        assert out.allclose(weights)

    def test_finetune_lr_constant_at_final(self):
        graph, weights, data, config, policy = desk_setup()
        schedule = LrSchedule(initial=policy.final_lr, decay_epochs=[], gamma=policy.gamma)
        assert [schedule.lr_at(e) for e in (1, 2, 3, 4, 5)] == [policy.final_lr] * 5

    def test_real_search_runs_and_traces_provenance(self):
        graph, weights, data, config, policy = desk_setup()
        cfg = SearchConfig(
            level_low=20.0, level_high=80.0, level_step=20.0, level_start=40.0,
            finetune_epochs=1, retrain_epochs=1,
        )
        result = dapr_search(graph, weights, data, cfg, config, policy, seed=1)
        assert result.trace, "search evaluated no levels"
        parents = {e.parent_digest for e in result.trace}
        assert len(parents) == 1 and parents != {""}
        digests = [e.weights_digest for e in result.trace if e.weights_digest]
        assert len(set(digests)) == len(digests)
        for entry in result.trace:
            assert entry.level in cfg.grid()
            assert entry.peak_memory_bytes > 0
        if result.converged_level is not None:
            assert result.best_graph is not None
            assert result.best_weights is not None


def make_plan(removals, original=1000):
    return PrunePlan(
        removals={k: sorted(v) for k, v in removals.items()},
        target_level=10.0, achieved_level=10.0, ranking_scope="global",
        original_params=original, surviving_params=original,
    )


class TestDivergence:
    def test_identical_plans_zero(self):
        plan = make_plan({"a": [1, 2, 3], "b": [0, 4]})
        report = filter_divergence(plan, make_plan({"a": [1, 2, 3], "b": [0, 4]}))
        assert report.overall == 0.0
        assert all(v == 0.0 for v in report.per_layer.values())
        assert report.pair_count == 1

    def test_disjoint_layer_is_100(self):
        a = make_plan({"a": [0, 1, 2, 3]})
        b = make_plan({"a": [4, 5, 6, 7]})
        report = filter_divergence(a, b)
        assert report.per_layer["a"] == 100.0
        assert report.overall == 100.0

    def test_partial_overlap_by_hand(self):
        a = make_plan({"a": [0, 1, 2, 3], "b": [0, 1]})
        b = make_plan({"a": [2, 3, 4, 5], "b": [0, 1]})
        report = filter_divergence(a, b)
        assert report.per_layer["a"] == 50.0
        assert report.per_layer["b"] == 0.0
        assert report.overall == pytest.approx(100.0 * (1 - 4 / 6))

    def test_mismatched_cardinality(self):
        with pytest.raises(PlanMismatchError):
            filter_divergence(make_plan({"a": [0, 1]}), make_plan({"a": [0]}))

    def test_mismatched_layers(self):
        with pytest.raises(PlanMismatchError):
            filter_divergence(make_plan({"a": [0]}), make_plan({"b": [0]}))

    def test_mismatched_graphs(self):
        with pytest.raises(PlanMismatchError):
            filter_divergence(make_plan({"a": [0]}, original=10), make_plan({"a": [0]}, original=20))

    @given(st.sets(st.integers(0, 15), min_size=1, max_size=8), st.data())
    @settings(max_examples=60, deadline=None)
    def test_symmetry_property(self, removed_a, data):
        pool = list(range(16))
        removed_b = data.draw(
            st.lists(st.sampled_from(pool), min_size=len(removed_a), max_size=len(removed_a),
                     unique=True)
        )
        a = make_plan({"layer": sorted(removed_a)})
        b = make_plan({"layer": sorted(removed_b)})
        assert filter_divergence(a, b).overall == filter_divergence(b, a).overall

    def test_pairwise_five_plans_ten_pairs(self):
        rng = np.random.default_rng(0)
        plans = [make_plan({"a": sorted(rng.choice(12, size=4, replace=False).tolist())})
                 for _ in range(5)]
        report = pairwise_divergence(plans)
        assert report.pair_count == 10

    def test_pairwise_matches_enumeration(self):
        rng = np.random.default_rng(1)
        plans = [make_plan({"a": sorted(rng.choice(10, size=3, replace=False).tolist()),
                            "b": sorted(rng.choice(6, size=2, replace=False).tolist())})
                 for _ in range(4)]
        report = pairwise_divergence(plans)
        from itertools import combinations

        singles = [filter_divergence(x, y) for x, y in combinations(plans, 2)]
        assert report.overall == pytest.approx(sum(s.overall for s in singles) / len(singles))
        for layer in ("a", "b"):
            assert report.per_layer[layer] == pytest.approx(
                sum(s.per_layer[layer] for s in singles) / len(singles)
            )

    def test_two_identical_plans_pair_count_one(self):
        plan = make_plan({"a": [0, 1]})
        report = pairwise_divergence([plan, make_plan({"a": [0, 1]})])
        assert report.pair_count == 1
        assert report.overall == 0.0
