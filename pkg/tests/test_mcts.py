"""Tests for the expansion search: proposals, bookkeeping, determinism."""

import json

import numpy as np
import pytest

from melodylab.expansion import ACTION_BLEND, ConceptualExpansion
from melodylab.mcts import (
    FitnessCache,
    SearchConfig,
    evaluate_selected,
    fitness,
    mcts_search,
    propose_actions,
    write_trace,
)
from melodylab.vae import Dims, EmptyDataset, init_params, reconstruction_accuracy

import test_vae

SMALL = Dims(hidden=8, latent=4)


@pytest.fixture(scope="module")
def setup():
    params = init_params(77, SMALL)
    split = test_vae.random_dataset(np.random.default_rng(5), 12)
    return params, split


FAST = SearchConfig(
    iterations=2,
    rollouts_per_iteration=3,
    rollout_depth=2,
    branching_limit=3,
    seed=13,
)


# ---------------------------------------------------------------------------
# fitness
# ---------------------------------------------------------------------------


class TestFitness:
    def test_identity_equals_zero_shot_train_accuracy(self, setup):
        params, split = setup
        ce = ConceptualExpansion.identity(params)
        assert fitness(ce, params, split) == reconstruction_accuracy(params, split)

    def test_in_unit_interval(self, setup):
        params, split = setup
        assert 0.0 <= fitness(ConceptualExpansion.identity(params), params, split) <= 1.0

    def test_memoized_call_bit_equal(self, setup):
        params, split = setup
        cache = FitnessCache(params, split)
        ce = ConceptualExpansion.identity(params)
        first = cache.fitness(ce)
        again = cache.fitness(ce)
        assert first == again
        assert cache.queries == 2 and cache.misses == 1

    def test_empty_split_rejected(self, setup):
        params, _ = setup
        with pytest.raises(EmptyDataset):
            FitnessCache(params, [])
        with pytest.raises(EmptyDataset):
            mcts_search(params, [], FAST)


# ---------------------------------------------------------------------------
# proposals
# ---------------------------------------------------------------------------


class TestProposeActions:
    def test_exact_count_and_valid_indices(self, setup):
        params, _ = setup
        state = ConceptualExpansion.identity(params)
        cfg = SearchConfig(branching_limit=8)
        actions = propose_actions(state, np.random.default_rng(1), cfg)
        assert len(actions) == 8
        counts = dict(zip(state.layers, state.row_counts))
        for a in actions:
            assert a.row < counts[a.layer]

    def test_deterministic_per_rng(self, setup):
        params, _ = setup
        state = ConceptualExpansion.identity(params)
        cfg = SearchConfig(branching_limit=8)
        a = propose_actions(state, np.random.default_rng(2), cfg)
        b = propose_actions(state, np.random.default_rng(2), cfg)
        assert a == b

    def test_blend_fraction_near_mixture_weight(self, setup):
        params, _ = setup
        state = ConceptualExpansion.identity(params)
        cfg = SearchConfig(branching_limit=8)
        rng = np.random.default_rng(3)
        kinds = []
        while len(kinds) < 10_000:
            kinds.extend(a.kind for a in propose_actions(state, rng, cfg))
        frac = sum(k == ACTION_BLEND for k in kinds[:10_000]) / 10_000
        assert abs(frac - 0.7) <= 0.02


# ---------------------------------------------------------------------------
# search bookkeeping
# ---------------------------------------------------------------------------


class TestSearch:
    def test_minimal_budget_two_evaluations(self, setup):
        params, split = setup
        cfg = SearchConfig(
            iterations=1, rollouts_per_iteration=1, rollout_depth=0,
            branching_limit=1, seed=0,
        )
        result = mcts_search(params, split, cfg)
        assert result.simulations == 1
        assert result.evaluations == 2  # root + one child
        assert result.trace[0]["new_evaluations"] == 1

    def test_budget_formula(self, setup):
        params, split = setup
        result = mcts_search(params, split, FAST)
        sims = FAST.iterations * FAST.rollouts_per_iteration
        assert result.simulations == sims
        assert result.evaluations == 1 + sum(
            r["new_evaluations"] for r in result.trace
        )
        # per simulation: at most the untried pool (greedy) plus the rollout
        assert result.evaluations <= 1 + sims * (
            FAST.branching_limit + FAST.rollout_depth
        )
        for r in result.trace:
            assert r["new_evaluations"] <= FAST.branching_limit + FAST.rollout_depth

    def test_invariants_checked_during_search(self, setup):
        params, split = setup
        result = mcts_search(params, split, FAST)  # check_invariants=True
        assert result.simulations == 6

    def test_top1_never_below_identity(self, setup):
        params, split = setup
        result = mcts_search(params, split, FAST)
        assert result.top[0][1] >= result.root_fitness

    def test_identity_returned_when_unbeaten(self, setup):
        params, split = setup
        # zero rollout depth + epsilon 1 keeps edits random; identity stays
        # in the table regardless of whether anything beats it
        result = mcts_search(params, split, FAST)
        keys = [ce.key for ce, _ in result.top]
        if result.top[0][1] == result.root_fitness:
            assert () in keys or result.top[0][1] > result.root_fitness

    def test_deterministic_trace(self, setup, tmp_path):
        params, split = setup
        a = mcts_search(params, split, FAST)
        b = mcts_search(params, split, FAST)
        pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_trace(a.trace, pa)
        write_trace(b.trace, pb)
        assert pa.read_bytes() == pb.read_bytes()
        assert [f for _, f in a.top] == [f for _, f in b.top]
        assert [ce.key for ce, _ in a.top] == [ce.key for ce, _ in b.top]

    def test_trace_is_json_lines(self, setup, tmp_path):
        params, split = setup
        result = mcts_search(params, split, FAST)
        path = tmp_path / "trace.jsonl"
        write_trace(result.trace, path)
        lines = path.read_text().splitlines()
        assert len(lines) == result.simulations
        record = json.loads(lines[0])
        assert {"sim", "action", "value", "best_fitness"} <= set(record)

    def test_top_k_distinct_states(self, setup):
        params, split = setup
        result = mcts_search(params, split, FAST)
        keys = [ce.key for ce, _ in result.top]
        assert len(keys) == len(set(keys))
        fits = [f for _, f in result.top]
        assert fits == sorted(fits, reverse=True)


# ---------------------------------------------------------------------------
# selected-model evaluation
# ---------------------------------------------------------------------------


class TestEvaluateSelected:
    def test_identical_expansions_mean_is_single(self, setup):
        params, split = setup
        ce = ConceptualExpansion.identity(params)
        mean, each = evaluate_selected([ce, ce, ce], params, split)
        assert mean == each[0] == each[1] == each[2]

    def test_arithmetic_mean(self):
        assert abs(np.mean([0.9, 0.8, 0.7]) - 0.8) < 1e-15

    def test_mean_within_min_max(self, setup):
        params, split = setup
        result = mcts_search(params, split, FAST)
        mean, each = evaluate_selected(
            [ce for ce, _ in result.top], params, split
        )
        assert min(each) <= mean <= max(each)
