"""Monte Carlo tree search over conceptual expansions.

Each simulation runs selection (UCB1 descent through fully expanded
nodes), epsilon-greedy expansion of one untried action, a random rollout
whose maximum fitness is the simulation value, and backpropagation.
Fitness is the train-split reconstruction accuracy of the expanded model,
memoized by edit history; a global table of every evaluated state (tree
nodes and rollout states) yields the top-k models.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .codec import MelodySequence, batch_tokens
from .expansion import (
    ACTION_BLEND,
    ACTION_RESET,
    ACTION_SCALE,
    DEFAULT_EXPANSION_LAYERS,
    ConceptualExpansion,
    ExpansionAction,
    apply_expansion,
)
from .vae import EmptyDataset, ModelParams, reconstruction_accuracy
from .vae.training import accuracy_counts_fixed_mu, encode_dataset_mu

# action-kind mixture: mostly small blends, some row scaling, rare resets
KIND_WEIGHTS = ((ACTION_BLEND, 0.7), (ACTION_SCALE, 0.2), (ACTION_RESET, 0.1))


@dataclass(frozen=True)
class SearchConfig:
    iterations: int = 10
    rollouts_per_iteration: int = 10
    rollout_depth: int = 5  # L
    epsilon: float = 0.5
    ucb_exploration: float = 1.414
    branching_limit: int = 8  # B
    blend_sigma: float = 0.1
    scale_low: float = 0.5
    scale_high: float = 2.0
    top_k: int = 3
    seed: int = 0
    check_invariants: bool = True

    def __post_init__(self) -> None:
        counts = (
            self.iterations,
            self.rollouts_per_iteration,
            self.branching_limit,
            self.top_k,
        )
        if min(counts) < 1 or self.rollout_depth < 0:
            raise ValueError("search counts must be positive")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0 < self.scale_low <= self.scale_high:
            raise ValueError("scale range must be positive and ordered")


class SearchNode:
    __slots__ = (
        "state",
        "parent",
        "children",
        "untried",
        "visit_count",
        "value_sum",
        "best_fitness",
        "fitness",
    )

    def __init__(
        self,
        state: ConceptualExpansion,
        parent: "SearchNode | None",
        fitness: float,
    ):
        self.state = state
        self.parent = parent
        self.children: list[SearchNode] = []
        self.untried: list[ExpansionAction] = []
        self.visit_count = 0
        self.value_sum = 0.0
        self.best_fitness = fitness
        self.fitness = fitness

    @property
    def mean_fitness(self) -> float:
        return self.value_sum / self.visit_count if self.visit_count else 0.0


class FitnessCache:
    """Memoized train-split fitness of expansions, keyed by edit history.

    Expansions over decoder tensors leave the encoder untouched, so the
    posterior means of the split are computed once and reused for every
    candidate; the resulting accuracies are bit-identical to the full pass."""

    def __init__(self, pretrained: ModelParams, train_split: list[MelodySequence]):
        if not train_split:
            raise EmptyDataset("fitness needs a non-empty train split")
        self.pretrained = pretrained
        self.train_split = train_split
        self.values: dict[tuple, float] = {}
        self.states: dict[tuple, ConceptualExpansion] = {}
        self.queries = 0
        self.misses = 0
        self._targets = batch_tokens(train_split)
        self._total = self._targets.size
        self._mu: np.ndarray | None = None

    def _evaluate(self, ce: ConceptualExpansion) -> float:
        model = apply_expansion(self.pretrained, ce)
        if any(layer.startswith("enc_") for layer in ce.layers):
            return reconstruction_accuracy(model, self.train_split)
        if self._mu is None:
            self._mu = encode_dataset_mu(self.pretrained, self.train_split)
        return accuracy_counts_fixed_mu(model, self._mu, self._targets) / self._total

    def fitness(self, ce: ConceptualExpansion) -> float:
        self.queries += 1
        key = ce.key
        if key not in self.values:
            self.misses += 1
            self.values[key] = self._evaluate(ce)
            self.states[key] = ce
        return self.values[key]

    def top(self, k: int) -> list[tuple[ConceptualExpansion, float]]:
        """Best k distinct states by fitness; ties favor earlier discovery."""
        order = sorted(
            enumerate(self.values.items()), key=lambda item: (-item[1][1], item[0])
        )
        return [(self.states[key], fit) for _, (key, fit) in order[:k]]


def fitness(
    ce: ConceptualExpansion,
    pretrained: ModelParams,
    train_split: list[MelodySequence],
) -> float:
    """Train-split reconstruction accuracy of the expanded model."""
    if not train_split:
        raise EmptyDataset("fitness needs a non-empty train split")
    return reconstruction_accuracy(apply_expansion(pretrained, ce), train_split)


def _sample_action(
    state: ConceptualExpansion, rng: np.random.Generator, cfg: SearchConfig
) -> ExpansionAction:
    roll = rng.random()
    kind = KIND_WEIGHTS[-1][0]
    acc = 0.0
    for candidate, weight in KIND_WEIGHTS:
        acc += weight
        if roll < acc:
            kind = candidate
            break
    which = int(rng.integers(len(state.layers)))
    layer = state.layers[which]
    n = state.row_counts[which]
    row = int(rng.integers(n))
    if kind == ACTION_BLEND:
        source = int(rng.integers(n - 1))
        if source >= row:
            source += 1
        return ExpansionAction(
            kind, layer, row, source, float(rng.normal(0.0, cfg.blend_sigma))
        )
    if kind == ACTION_SCALE:
        return ExpansionAction(
            kind, layer, row, amount=float(rng.uniform(cfg.scale_low, cfg.scale_high))
        )
    return ExpansionAction(kind, layer, row)


def propose_actions(
    state: ConceptualExpansion, rng: np.random.Generator, cfg: SearchConfig
) -> list[ExpansionAction]:
    """Sample branching_limit distinct candidate actions for a node."""
    out: list[ExpansionAction] = []
    seen: set[ExpansionAction] = set()
    attempts = 0
    while len(out) < cfg.branching_limit:
        attempts += 1
        if attempts > 100 * cfg.branching_limit:
            raise RuntimeError("action space too small for branching limit")
        action = _sample_action(state, rng, cfg)
        if action not in seen:
            seen.add(action)
            out.append(action)
    return out


@dataclass
class SearchResult:
    top: list[tuple[ConceptualExpansion, float]]
    trace: list[dict] = field(default_factory=list)
    simulations: int = 0
    evaluations: int = 0  # distinct states constructed (cache misses)
    fitness_queries: int = 0
    root_fitness: float = 0.0


def _check_tree(node: SearchNode, is_root: bool = True) -> None:
    child_visits = sum(c.visit_count for c in node.children)
    own = 0 if is_root else 1
    assert node.visit_count == child_visits + own, (
        f"visit bookkeeping broken: {node.visit_count} != "
        f"{child_visits} + {own}"
    )
    for child in node.children:
        assert node.best_fitness >= child.best_fitness, "best-fitness monotonicity broken"
        _check_tree(child, is_root=False)


def mcts_search(
    pretrained: ModelParams,
    train_split: list[MelodySequence],
    cfg: SearchConfig = SearchConfig(),
    layers: tuple[str, ...] = DEFAULT_EXPANSION_LAYERS,
) -> SearchResult:
    """Run iterations x rollouts_per_iteration simulations from the identity
    root and return the top_k expansions by train fitness.

    Expansion picks a uniformly random untried action with probability
    epsilon, otherwise the untried action with the highest one-step fitness
    (each candidate evaluated through the memo cache). The root is always
    evaluated first, so the top-1 fitness can never fall below the
    zero-shot train accuracy. Deterministic per cfg.seed.
    """
    cache = FitnessCache(pretrained, train_split)
    rng = np.random.default_rng(cfg.seed)
    root_state = ConceptualExpansion.identity(pretrained, layers)
    root = SearchNode(root_state, None, cache.fitness(root_state))
    root.untried = propose_actions(root_state, rng, cfg)

    trace: list[dict] = []
    sim = 0
    for iteration in range(cfg.iterations):
        for rollout in range(cfg.rollouts_per_iteration):
            sim += 1
            misses_before = cache.misses

            # selection: descend while fully expanded
            node = root
            path: list[int] = []
            while not node.untried and node.children:
                best = node.children[0]
                best_score = _ucb(best, node, cfg.ucb_exploration)
                for child in node.children[1:]:
                    score = _ucb(child, node, cfg.ucb_exploration)
                    if score > best_score:
                        best, best_score = child, score
                path.append(node.children.index(best))
                node = best

            # expansion: epsilon-greedy over the untried pool
            greedy = rng.random() >= cfg.epsilon
            if greedy:
                candidate_fitness = [
                    cache.fitness(node.state.child(a)) for a in node.untried
                ]
                pick = int(np.argmax(candidate_fitness))
            else:
                pick = int(rng.integers(len(node.untried)))
            action = node.untried.pop(pick)
            child_state = node.state.child(action)
            child = SearchNode(child_state, node, cache.fitness(child_state))
            child.untried = propose_actions(child_state, rng, cfg)
            node.children.append(child)

            # rollout: random edits, crediting the best state discovered
            value = child.fitness
            rollout_fitness: list[float] = []
            state = child_state
            for _ in range(cfg.rollout_depth):
                state = state.child(_sample_action(state, rng, cfg))
                f = cache.fitness(state)
                rollout_fitness.append(f)
                value = max(value, f)

            # backpropagation
            walker: SearchNode | None = child
            while walker is not None:
                walker.visit_count += 1
                walker.value_sum += value
                walker.best_fitness = max(walker.best_fitness, value)
                walker = walker.parent

            if cfg.check_invariants:
                _check_tree(root)

            trace.append(
                {
                    "sim": sim,
                    "iteration": iteration,
                    "rollout": rollout,
                    "path": path,
                    "greedy": greedy,
                    "action": asdict(action),
                    "child_fitness": child.fitness,
                    "rollout_fitness": rollout_fitness,
                    "value": value,
                    "new_evaluations": cache.misses - misses_before,
                    "best_fitness": root.best_fitness,
                }
            )

    return SearchResult(
        top=cache.top(cfg.top_k),
        trace=trace,
        simulations=sim,
        evaluations=cache.misses,
        fitness_queries=cache.queries,
        root_fitness=root.fitness,
    )


def _ucb(child: SearchNode, parent: SearchNode, exploration: float) -> float:
    return child.mean_fitness + exploration * math.sqrt(
        math.log(parent.visit_count) / child.visit_count
    )


def evaluate_selected(
    expansions: list[ConceptualExpansion],
    pretrained: ModelParams,
    test_split: list[MelodySequence],
) -> tuple[float, list[float]]:
    """Apply each selected expansion and report (mean, individual) test
    reconstruction accuracies."""
    accuracies = [
        reconstruction_accuracy(apply_expansion(pretrained, ce), test_split)
        for ce in expansions
    ]
    return float(np.mean(accuracies)), accuracies


def write_trace(trace: list[dict], path) -> None:
    """One JSON record per simulation, newline-delimited."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in trace:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
