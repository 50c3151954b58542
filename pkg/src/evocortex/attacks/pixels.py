"""Black-box multi-pixel attack driven by differential evolution.

Each DE genome is a length-5d real vector: d blocks of (x, y, r, g, b) with
coordinates bounded by the image and colors by [0, 255]. Fitness is the
true-class probability of the perturbed image (minimized); targeted mode
maximizes the target-class probability instead. The classify callback must
be pure: ``callback(raster) -> (label, confidence of that label)``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from . import AdversarialExample


@dataclass
class DeParams:
    population: int = 50
    generations: int = 30
    crossover_prob: float = 0.9
    differential_weight: float = 0.5
    budget: int = 1  # d: number of pixels the genome may touch

    def __post_init__(self):
        if self.budget < 1:
            raise ConfigError("pixel budget d must be >= 1")
        if self.population < 4:
            raise ConfigError("DE rand/1/bin needs population >= 4")


@dataclass
class PixelAttackResult:
    example: AdversarialExample
    success: bool
    final_label: int
    final_confidence: float
    best_fitness: float
    history: list


def apply_pixels(raster: np.ndarray, genome: np.ndarray) -> np.ndarray:
    """Overwrite the genome's pixel sites; later blocks win on duplicates."""
    out = raster.copy()
    h, w = raster.shape[:2]
    blocks = genome.reshape(-1, 5)
    xs = np.clip(np.rint(blocks[:, 0]), 0, w - 1).astype(int)
    ys = np.clip(np.rint(blocks[:, 1]), 0, h - 1).astype(int)
    rgb = np.clip(np.rint(blocks[:, 2:5]), 0, 255).astype(np.uint8)
    out[ys, xs] = rgb
    return out


def _true_prob(callback, raster, label):
    pred, conf = callback(raster)
    return conf if pred == label else 1.0 - conf


def de_pixel_attack(callback, raster: np.ndarray, true_label: int,
                    params: DeParams, rng, target: int | None = None,
                    workers: int = 1) -> PixelAttackResult:
    """DE rand/1/bin over pixel positions and colors.

    Untargeted (default): minimize the probability of ``true_label``.
    Targeted: pass ``target`` to minimize 1 - P(target) instead. Runs the
    full generation budget and returns the best survivor; success means the
    final prediction differs from ``true_label`` (equals ``target`` when
    targeted).
    """
    h, w = raster.shape[:2]
    d = params.budget
    dim = 5 * d
    lo = np.tile([0.0, 0.0, 0.0, 0.0, 0.0], d)
    hi = np.tile([w - 1.0, h - 1.0, 255.0, 255.0, 255.0], d)

    def fitness_of(genome):
        img = apply_pixels(raster, genome)
        if target is None:
            return _true_prob(callback, img, true_label)
        return 1.0 - _true_prob(callback, img, target)

    def eval_many(genomes):
        if workers > 1 and len(genomes) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return np.array(list(pool.map(fitness_of, genomes)))
        return np.array([fitness_of(g) for g in genomes])

    np_ = params.population
    pop = lo + rng.random((np_, dim)) * (hi - lo)
    fit = eval_many(list(pop))
    history = [float(fit.min())]

    F, CR = params.differential_weight, params.crossover_prob
    for _ in range(params.generations):
        trials = np.empty_like(pop)
        for i in range(np_):
            candidates = [j for j in range(np_) if j != i]
            a, b, c = rng.choice(candidates, size=3, replace=False)
            mutant = np.clip(pop[a] + F * (pop[b] - pop[c]), lo, hi)
            cross = rng.random(dim) < CR
            cross[int(rng.integers(dim))] = True
            trials[i] = np.where(cross, mutant, pop[i])
        trial_fit = eval_many(list(trials))
        better = trial_fit <= fit
        pop[better] = trials[better]
        fit[better] = trial_fit[better]
        history.append(float(fit.min()))

    best = int(fit.argmin())
    adv = apply_pixels(raster, pop[best])
    example = AdversarialExample(raster, adv, "pixels", {"budget": d}).check_budget()
    label, conf = callback(adv)
    success = (label == target) if target is not None else (label != true_label)
    return PixelAttackResult(example=example, success=bool(success),
                             final_label=int(label), final_confidence=float(conf),
                             best_fitness=float(fit[best]), history=history)
