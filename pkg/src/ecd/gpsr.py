"""Genetic-programming symbolic regression over expression trees.

The generational loop is select -> crossover -> mutate with elitism, tournament
selection, and an MSE-plus-parsimony fitness. All randomness flows from one
seed through a documented stream-splitting scheme (one substream for
initialization, one per breeding generation), so runs are reproducible across
platforms and restarts.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .dataio import Dataset
from .errors import (
    EmptyDataset,
    EmptyPopulation,
    InvalidConfig,
    MalformedTree,
    MissingVariable,
)
from .exprcore import (
    OPERATORS,
    ExpressionTree,
    Node,
    Operator,
    const_node,
    dependency_set,
    evaluate_batch,
    node_depth,
    replace_at,
    subtree_at,
    tree_from_json,
    tree_to_json,
    var_node,
)

# Substitute fitness for trees whose predictions overflow or degenerate;
# large enough to lose every tournament, finite so orderings stay total.
PENALTY_MSE = 1e300

# Probability that grow-mode tree generation stops at a terminal early.
GROW_TERMINAL_PROB = 0.3

STAGNATION_WINDOW = 10
STAGNATION_EPS = 1e-12

HISTORY_COLUMNS = ("generation", "min_fitness", "mean_fitness", "diversity", "best_expression")

MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GpConfig:
    """Hyperparameters for one evolution run. Defaults are desk-scale."""

    population_size: int = 2000
    generations: int = 30
    crossover_prob: float = 0.5
    mutation_prob: float = 0.1
    tournament_size: int = 7
    max_depth: int = 8
    init_depth_range: tuple[int, int] = (2, 5)
    parsimony_coeff: float = 0.001
    elitism_count: int = 1
    constant_range: tuple[float, float] = (-5.0, 5.0)
    seed: int = 0
    fitness_threshold: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "init_depth_range", tuple(self.init_depth_range))
        object.__setattr__(self, "constant_range", tuple(self.constant_range))

    def validate(self) -> None:
        if self.population_size < 2:
            raise InvalidConfig("population_size must be at least 2")
        if self.generations < 1:
            raise InvalidConfig("generations must be at least 1")
        for name in ("crossover_prob", "mutation_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1], got {p}")
        if self.tournament_size < 1:
            raise InvalidConfig("tournament_size must be at least 1")
        if not 0 <= self.elitism_count < self.population_size:
            raise InvalidConfig("elitism_count must be in [0, population_size)")
        lo, hi = self.init_depth_range
        if not (1 <= lo <= hi <= self.max_depth):
            raise InvalidConfig(
                f"init_depth_range {self.init_depth_range} must satisfy "
                f"1 <= min <= max <= max_depth ({self.max_depth})"
            )
        if self.parsimony_coeff < 0:
            raise InvalidConfig("parsimony_coeff must be nonnegative")
        if self.fitness_threshold < 0:
            raise InvalidConfig("fitness_threshold must be nonnegative")
        clo, chi = self.constant_range
        if not clo <= chi:
            raise InvalidConfig("constant_range must satisfy lo <= hi")


# Large-scale settings from published experiments; opt-in, not defaults.
PRESETS: dict[str, GpConfig] = {
    "synthetic-large": GpConfig(
        population_size=50_000, generations=30, crossover_prob=0.5, mutation_prob=0.1
    ),
    "ehr-large": GpConfig(
        population_size=100_000, generations=30, crossover_prob=0.6, mutation_prob=0.2
    ),
}


def preset(name: str, **overrides) -> GpConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise InvalidConfig(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        ) from None
    return replace(base, **overrides) if overrides else base


@dataclass
class Individual:
    """One candidate expression. fitness/raw_mse are None until evaluated."""

    tree: ExpressionTree
    fitness: float | None = None
    raw_mse: float | None = None


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    min_fitness: float
    mean_fitness: float
    diversity: float
    best_expression: str


class Termination(enum.Enum):
    MAX_GENERATIONS = "max_generations"
    FITNESS_THRESHOLD = "fitness_threshold"
    STAGNATION = "stagnation"


@dataclass(frozen=True)
class FitResult:
    best: Individual
    history: tuple[GenerationStats, ...]
    terminated_by: Termination


def _rng_streams(config: GpConfig) -> list[np.random.Generator]:
    """Stream 0 seeds initialization; stream t >= 1 breeds generation t."""
    seqs = np.random.SeedSequence(config.seed).spawn(config.generations + 1)
    return [np.random.Generator(np.random.PCG64(s)) for s in seqs]


def _random_leaf(rng: np.random.Generator, variables: Sequence[str], constant_range) -> Node:
    # Constants occupy one slot alongside the variables.
    pick = int(rng.integers(0, len(variables) + 1))
    if pick == len(variables):
        return const_node(float(rng.uniform(*constant_range)))
    return var_node(variables[pick])


def _random_operator(rng: np.random.Generator) -> Operator:
    return OPERATORS[int(rng.integers(0, len(OPERATORS)))]


def _random_tree(
    rng: np.random.Generator,
    variables: Sequence[str],
    constant_range,
    target_depth: int,
    min_depth: int,
    full: bool,
) -> Node:
    def build(level: int) -> Node:
        if level >= target_depth:
            return _random_leaf(rng, variables, constant_range)
        if level >= min_depth and not full and rng.random() < GROW_TERMINAL_PROB:
            return _random_leaf(rng, variables, constant_range)
        operator = _random_operator(rng)
        return Node(operator, tuple(build(level + 1) for _ in range(operator.arity)))

    return build(0)


def init_population(
    config: GpConfig, variables: Iterable[str], rng: np.random.Generator
) -> list[Individual]:
    """Ramped half-and-half: depth targets cycle over init_depth_range while
    full and grow construction alternate."""
    config.validate()
    names = sorted(set(variables))
    if not names:
        raise InvalidConfig("at least one variable is required")
    lo, hi = config.init_depth_range
    depths = list(range(lo, hi + 1))
    population = []
    for i in range(config.population_size):
        target = depths[(i // 2) % len(depths)]
        root = _random_tree(
            rng, names, config.constant_range, target, lo, full=(i % 2 == 0)
        )
        population.append(Individual(ExpressionTree(root)))
    return population


def fitness(
    tree: ExpressionTree, data: Dataset, response: str, parsimony_coeff: float
) -> tuple[float, float]:
    """(fitness, raw_mse) against the response column.

    Overflowing or otherwise non-finite predictions are clamped to PENALTY_MSE
    so every fitness stays finite and comparable.
    """
    if data.n_rows == 0:
        raise EmptyDataset("cannot score against an empty dataset")
    target = data.column(response)
    predictions = evaluate_batch(tree, data)
    raw_mse = float(np.mean((predictions - target) ** 2))
    if not math.isfinite(raw_mse):
        raw_mse = PENALTY_MSE
    return raw_mse + parsimony_coeff * tree.size, raw_mse


def select(
    population: Sequence[Individual], tournament_size: int, rng: np.random.Generator
) -> Individual:
    """Tournament of uniformly sampled entrants, with replacement. Ties fall to
    smaller trees, then to the earlier population index."""
    if not population:
        raise EmptyPopulation("cannot select from an empty population")
    entrants = rng.integers(0, len(population), size=tournament_size)
    best = None
    best_key = None
    for idx in entrants:
        idx = int(idx)
        ind = population[idx]
        key = (ind.fitness, ind.tree.size, idx)
        if best_key is None or key < best_key:
            best, best_key = ind, key
    return best


def crossover(
    parent_a: ExpressionTree,
    parent_b: ExpressionTree,
    max_depth: int,
    rng: np.random.Generator,
) -> tuple[ExpressionTree, ExpressionTree]:
    """Swap uniformly chosen subtrees. A child exceeding max_depth is replaced
    by a copy of its corresponding parent."""
    point_a = int(rng.integers(0, parent_a.size))
    point_b = int(rng.integers(0, parent_b.size))
    sub_a = subtree_at(parent_a.root, point_a)
    sub_b = subtree_at(parent_b.root, point_b)
    root_a = replace_at(parent_a.root, point_a, sub_b)
    root_b = replace_at(parent_b.root, point_b, sub_a)
    child_a = parent_a if node_depth(root_a) > max_depth else ExpressionTree(root_a)
    child_b = parent_b if node_depth(root_b) > max_depth else ExpressionTree(root_b)
    return child_a, child_b


def _point_mutation(
    tree: ExpressionTree, variables: Sequence[str], config: GpConfig, rng: np.random.Generator
) -> ExpressionTree:
    idx = int(rng.integers(0, tree.size))
    node = subtree_at(tree.root, idx)
    if isinstance(node.payload, Operator):
        alternatives = [op for op in OPERATORS if op is not node.payload]
        if not alternatives:
            return tree
        swapped = alternatives[int(rng.integers(0, len(alternatives)))]
        new_node = Node(swapped, node.children)
    else:
        new_node = _random_leaf(rng, variables, config.constant_range)
    return ExpressionTree(replace_at(tree.root, idx, new_node))


def mutate(
    tree: ExpressionTree,
    variables: Sequence[str],
    config: GpConfig,
    rng: np.random.Generator,
) -> ExpressionTree:
    """Half the time replace a subtree with a fresh grow tree of depth <= 2,
    otherwise point-mutate one node. max_depth is always respected; subtree
    replacement falls back to point mutation after 10 oversized attempts."""
    names = sorted(set(variables))
    if rng.random() < 0.5:
        for _ in range(10):
            idx = int(rng.integers(0, tree.size))
            fresh = _random_tree(
                rng, names, config.constant_range, target_depth=2, min_depth=0, full=False
            )
            root = replace_at(tree.root, idx, fresh)
            if node_depth(root) <= config.max_depth:
                return ExpressionTree(root)
    return _point_mutation(tree, names, config, rng)


def diversity(population: Sequence[Individual]) -> float:
    """Fraction of the population occupied by distinct expressions, rescaled
    so one unique form gives 0.0 and all-distinct gives 1.0."""
    if not population:
        raise EmptyPopulation("diversity of an empty population is undefined")
    if len(population) == 1:
        return 0.0
    distinct = len({ind.tree.infix for ind in population})
    return (distinct - 1) / (len(population) - 1)


def evolve(data: Dataset, response: str, config: GpConfig) -> FitResult:
    """Run the generational loop and return the best individual ever seen.

    Stops at the generation budget, when best fitness reaches
    fitness_threshold, or after STAGNATION_WINDOW generations without
    improvement beyond STAGNATION_EPS.
    """
    config.validate()
    if response not in data.columns:
        raise MissingVariable(response)
    if data.n_rows < 2:
        raise EmptyDataset("evolution needs at least 2 rows")
    variables = sorted(n for n in data.names if n != response)
    if not variables:
        raise InvalidConfig("dataset provides no predictor columns")

    streams = _rng_streams(config)
    population = init_population(config, variables, streams[0])

    cache: dict[str, tuple[float, float]] = {}

    def score(ind: Individual) -> None:
        if ind.fitness is not None:
            return
        key = ind.tree.infix
        hit = cache.get(key)
        if hit is None:
            hit = fitness(ind.tree, data, response, config.parsimony_coeff)
            cache[key] = hit
        ind.fitness, ind.raw_mse = hit

    best: Individual | None = None
    history: list[GenerationStats] = []
    terminated_by = Termination.MAX_GENERATIONS
    flat_generations = 0

    for generation in range(config.generations):
        for ind in population:
            score(ind)

        order = sorted(
            range(len(population)),
            key=lambda i: (population[i].fitness, population[i].tree.size, i),
        )
        gen_best = population[order[0]]
        previous = best.fitness if best is not None else None
        if best is None or gen_best.fitness < best.fitness:
            best = Individual(gen_best.tree, gen_best.fitness, gen_best.raw_mse)

        fitness_values = [ind.fitness for ind in population]
        history.append(
            GenerationStats(
                generation=generation,
                min_fitness=gen_best.fitness,
                mean_fitness=float(np.mean(fitness_values)),
                diversity=diversity(population),
                best_expression=gen_best.tree.infix,
            )
        )

        if best.fitness <= config.fitness_threshold:
            terminated_by = Termination.FITNESS_THRESHOLD
            break
        if previous is not None:
            if previous - best.fitness > STAGNATION_EPS:
                flat_generations = 0
            else:
                flat_generations += 1
            if flat_generations >= STAGNATION_WINDOW:
                terminated_by = Termination.STAGNATION
                break
        if generation == config.generations - 1:
            break

        rng = streams[generation + 1]
        offspring: list[Individual] = [population[i] for i in order[: config.elitism_count]]
        while len(offspring) < config.population_size:
            parent = select(population, config.tournament_size, rng)
            tree = parent.tree
            if rng.random() < config.crossover_prob:
                mate = select(population, config.tournament_size, rng)
                tree, _ = crossover(tree, mate.tree, config.max_depth, rng)
            if rng.random() < config.mutation_prob:
                tree = mutate(tree, variables, config, rng)
            if tree is parent.tree:
                offspring.append(Individual(tree, parent.fitness, parent.raw_mse))
            else:
                offspring.append(Individual(tree))
        population = offspring

    return FitResult(best=best, history=tuple(history), terminated_by=terminated_by)


def history_to_csv(history: Iterable[GenerationStats], path) -> None:
    """Write the per-generation log with full-precision numerics."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(HISTORY_COLUMNS)
        for stats in history:
            writer.writerow(
                [
                    stats.generation,
                    repr(stats.min_fitness),
                    repr(stats.mean_fitness),
                    repr(stats.diversity),
                    stats.best_expression,
                ]
            )


def model_document(best: Individual, variables: Sequence[str], config: GpConfig) -> dict:
    """JSON-ready description of a fitted model: the tree as nested nodes plus
    the operator set, variable universe, and the config that produced it."""
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "operators": [op.value for op in OPERATORS],
        "variables": sorted(variables),
        "tree": tree_to_json(best.tree),
        "expression": best.tree.infix,
        "fitness": best.fitness,
        "raw_mse": best.raw_mse,
        "config": asdict(config),
        "seed": config.seed,
    }
    doc["config"]["init_depth_range"] = list(config.init_depth_range)
    doc["config"]["constant_range"] = list(config.constant_range)
    return doc


def model_from_document(doc: dict) -> tuple[ExpressionTree, tuple[str, ...]]:
    """Load (tree, variables) back from a model document.

    The tree may reference only declared variables; anything else means the
    document was hand-edited or truncated.
    """
    try:
        tree = tree_from_json(doc["tree"])
        variables = tuple(str(v) for v in doc["variables"])
    except KeyError as exc:
        raise MalformedTree(f"model document lacks required key: {exc}") from None
    extra = dependency_set(tree) - set(variables)
    if extra:
        raise MissingVariable(sorted(extra)[0])
    return tree, variables
