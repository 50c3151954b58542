"""Generational loop: evaluate, select, vary, keep the elite.

The loop owns the population and its RNG; fitness evaluations are pure per
genome and may run on a thread pool without affecting determinism (results
are assigned back by index).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import genome as gn
from .errors import ConfigError

OPERATOR_NAMES = ("cx_chrom", "cx_gene", "mut_chrom", "mut_gene")


@dataclass
class GpParams:
    generations: int = 30
    population: int = 30
    p_cx_chrom: float = 0.4
    p_cx_gene: float = 0.4
    p_mut_chrom: float = 0.1
    p_mut_gene: float = 0.1
    dynamic_max_depth: int = 7
    real_max_depth: int = 9
    tournament_size: int = 5
    elitism: bool = True
    acceptance_threshold: float = 0.99
    rng_seed: int = 0

    def operator_probs(self):
        probs = (self.p_cx_chrom, self.p_cx_gene, self.p_mut_chrom, self.p_mut_gene)
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigError(f"operator probabilities must sum to 1, got {probs}")
        return probs


@dataclass
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_nodes: int
    mean_nodes: float
    dynamic_max_depth: int
    evaluations: int


@dataclass
class EvolutionResult:
    best: gn.Genome
    population: list
    history: list = field(default_factory=list)
    params: GpParams | None = None
    seed: int = 0
    generations_run: int = 0
    stopped_early: bool = False

    def log_dict(self) -> dict:
        return {
            "seed": self.seed,
            "params": asdict(self.params) if self.params else None,
            "generations_run": self.generations_run,
            "stopped_early": self.stopped_early,
            "best_fitness": self.best.fitness,
            "best_total_nodes": self.best.total_nodes,
            "best_genome_hash": self.best.digest(),
            "history": [asdict(h) for h in self.history],
        }

    def log_json(self) -> str:
        return json.dumps(self.log_dict(), indent=2, sort_keys=True)


def _evaluate(population, fitness_fn, workers):
    """Fill in missing fitnesses; returns how many evaluations ran."""
    todo = [(i, g) for i, g in enumerate(population) if g.fitness is None]
    if not todo:
        return 0
    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda item: fitness_fn(item[1]), todo))
        for (i, g), fit in zip(todo, results):
            g.fitness = float(fit)
    else:
        for _, g in todo:
            g.fitness = float(fitness_fn(g))
    return len(todo)


def _best_index(population):
    best = 0
    for i in range(1, len(population)):
        g, b = population[i], population[best]
        if g.fitness > b.fitness or (g.fitness == b.fitness and g.total_nodes < b.total_nodes):
            best = i
    return best


def evolve(fitness_fn, params: GpParams, rng=None, workers: int = 1,
           on_generation=None) -> EvolutionResult:
    """Run the evolutionary loop against an arbitrary fitness callable.

    ``fitness_fn(genome) -> float in [0, 1]``. One genetic operator is drawn
    per offspring from the (0.4, 0.4, 0.1, 0.1) choice distribution. The best
    individual survives unchanged (elitism), so the best fitness is
    non-decreasing. Offspring deeper than the dynamic depth cap are kept only
    if they beat the best fitness so far, which also raises the cap to their
    depth; otherwise the first parent survives in their place.
    """
    if rng is None:
        rng = np.random.default_rng(params.rng_seed)
    probs = np.asarray(params.operator_probs())
    dyn_depth = params.dynamic_max_depth

    population = gn.ramped_population(params.population, rng, dyn_depth)
    result = EvolutionResult(best=population[0], population=population,
                             params=params, seed=params.rng_seed)
    evals = _evaluate(population, fitness_fn, workers)
    best = population[_best_index(population)].clone()
    result.best = best

    def record(gen_idx, n_evals):
        fits = [g.fitness for g in population]
        nodes = [g.total_nodes for g in population]
        stats = GenerationStats(
            generation=gen_idx,
            best_fitness=float(best.fitness),
            mean_fitness=float(np.mean(fits)),
            best_nodes=best.total_nodes,
            mean_nodes=float(np.mean(nodes)),
            dynamic_max_depth=dyn_depth,
            evaluations=n_evals,
        )
        result.history.append(stats)
        if on_generation:
            on_generation(stats)

    record(0, evals)

    for gen in range(1, params.generations + 1):
        if best.fitness >= params.acceptance_threshold:
            result.stopped_early = True
            break

        offspring = []
        parents_of = []
        while len(offspring) < params.population - (1 if params.elitism else 0):
            op = int(rng.choice(4, p=probs))
            p1 = gn.select_parent(population, params.tournament_size, rng)
            if op == 0:
                p2 = gn.select_parent(population, params.tournament_size, rng)
                c1, c2 = gn.crossover_chromosome(p1, p2, rng)
                pairs = [(c1, p1), (c2, p2)]
            elif op == 1:
                p2 = gn.select_parent(population, params.tournament_size, rng)
                c1, c2 = gn.crossover_gene(p1, p2, rng)
                pairs = [(c1, p1), (c2, p2)]
            elif op == 2:
                pairs = [(gn.mutate_chromosome(p1, rng, dyn_depth), p1)]
            else:
                pairs = [(gn.mutate_gene(p1, rng, dyn_depth), p1)]
            for child, parent in pairs:
                if len(offspring) < params.population - (1 if params.elitism else 0):
                    offspring.append(child)
                    parents_of.append(parent)

        evals = _evaluate(offspring, fitness_fn, workers)

        # dynamic depth rule: oversized offspring survive only when they set
        # a new best, which raises the cap to their depth
        next_pop = [best.clone()] if params.elitism else []
        for child, parent in zip(offspring, parents_of):
            if child.max_depth > dyn_depth:
                if child.fitness > best.fitness:
                    dyn_depth = child.max_depth
                    next_pop.append(child)
                else:
                    next_pop.append(parent.clone())
            else:
                next_pop.append(child)
        population = next_pop
        result.population = population

        gen_best = population[_best_index(population)]
        if gen_best.fitness > best.fitness or (
                gen_best.fitness == best.fitness and gen_best.total_nodes < best.total_nodes):
            best = gen_best.clone()
        result.best = best
        result.generations_run = gen
        record(gen, evals)

    result.best = best
    return result
