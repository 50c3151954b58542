"""Multi-tree genomes and the four genetic operators.

A genome is three fixed-dimension visual-operator trees (orientation, color,
shape) followed by 1..9 mental trees, for 4 to 12 trees in total. Crossover
at the chromosome level swaps tree-list tails; at the gene level it swaps
subtrees between corresponding trees. Both respect the positional typing and
the depth caps.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from . import trees
from .errors import DataError, FormatError
from .trees import COLOR, MENTAL, ORIENTATION, SHAPE, REAL_MAX_DEPTH, SyntaxTree

MIN_TREES, MAX_TREES = 4, 12
MAX_MENTAL = MAX_TREES - 3

GENOME_HEADER = "evocortex-genome v1"


@dataclass
class Genome:
    vo_orientation: SyntaxTree
    vo_color: SyntaxTree
    vo_shape: SyntaxTree
    mm_trees: list
    fitness: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 1 <= len(self.mm_trees) <= MAX_MENTAL:
            raise DataError(f"genome needs 1..{MAX_MENTAL} mental trees")

    @property
    def all_trees(self):
        return [self.vo_orientation, self.vo_color, self.vo_shape, *self.mm_trees]

    @property
    def total_nodes(self):
        return sum(t.nodes for t in self.all_trees)

    @property
    def max_depth(self):
        return max(t.depth for t in self.all_trees)

    def clone(self, keep_fitness=True) -> "Genome":
        g = Genome(
            self.vo_orientation.clone(),
            self.vo_color.clone(),
            self.vo_shape.clone(),
            [t.clone() for t in self.mm_trees],
        )
        if keep_fitness:
            g.fitness = self.fitness
        return g

    def validate(self):
        expected = [ORIENTATION, COLOR, SHAPE] + [MENTAL] * len(self.mm_trees)
        for tree, dim in zip(self.all_trees, expected):
            if tree.dimension != dim:
                raise DataError(f"tree of dimension {tree.dimension!r} in a {dim!r} slot")
            trees.validate_tree(tree)

    def to_text(self) -> str:
        lines = [GENOME_HEADER]
        lines.extend(trees.tree_to_line(t) for t in self.all_trees)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Genome":
        lines = [ln for ln in (s.strip() for s in text.splitlines()) if ln and not ln.startswith(";")]
        if not lines or lines[0] != GENOME_HEADER:
            raise FormatError(f"missing genome header {GENOME_HEADER!r}")
        parsed = [trees.tree_from_line(ln) for ln in lines[1:]]
        if len(parsed) < MIN_TREES:
            raise FormatError("genome file has fewer than 4 trees")
        dims = [t.dimension for t in parsed]
        if dims[:3] != [ORIENTATION, COLOR, SHAPE] or any(d != MENTAL for d in dims[3:]):
            raise FormatError(f"unexpected tree layout {dims}")
        g = cls(parsed[0], parsed[1], parsed[2], parsed[3:])
        g.validate()
        return g

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _from_tree_list(tree_list):
    return Genome(tree_list[0], tree_list[1], tree_list[2], list(tree_list[3:]))


def random_genome(rng, max_depth: int, method: str = None) -> Genome:
    """One random individual; mental-tree count ~ U{1..9}."""
    def make(dim):
        m = method or ("full" if rng.random() < 0.5 else "grow")
        depth = int(rng.integers(2, max_depth + 1))
        return trees.random_tree(dim, m, depth, rng)

    n_mm = int(rng.integers(1, MAX_MENTAL + 1))
    return Genome(make(ORIENTATION), make(COLOR), make(SHAPE), [make(MENTAL) for _ in range(n_mm)])


def ramped_population(size: int, rng, max_depth: int) -> list:
    """Ramped half-and-half initial population (alternating grow/full, ramped depths)."""
    pop = []
    for i in range(size):
        method = "full" if i % 2 == 0 else "grow"
        pop.append(random_genome(rng, max_depth, method=method))
    return pop


def _compatible_cuts(ca, cb):
    # tail swap keeps positional typing iff the suffix type patterns line up
    return (ca == cb and ca <= 3) or (ca >= 3 and cb >= 3)


def crossover_chromosome(a: Genome, b: Genome, rng, max_tries: int = 10):
    """Cut-and-splice: swap the tree-list tails beyond one cut point per parent.

    Cut-point pairs are resampled until both children keep the 3 VO + 1..9
    mental layout; after ``max_tries`` the parents are returned unchanged.
    """
    ta, tb = a.all_trees, b.all_trees
    for _ in range(max_tries):
        ca = int(rng.integers(1, len(ta)))
        cb = int(rng.integers(1, len(tb)))
        if not _compatible_cuts(ca, cb):
            continue
        child1 = ta[:ca] + tb[cb:]
        child2 = tb[:cb] + ta[ca:]
        if MIN_TREES <= len(child1) <= MAX_TREES and MIN_TREES <= len(child2) <= MAX_TREES:
            c1 = _from_tree_list([t.clone() for t in child1])
            c2 = _from_tree_list([t.clone() for t in child2])
            return c1, c2
    return a.clone(keep_fitness=False), b.clone(keep_fitness=False)


def _pick_node(tree: SyntaxTree, rng):
    """Uniformly pick (node, parent, child_index, depth_of_node)."""
    entries = []
    depths = {}
    for node, parent, idx in tree.iter_nodes():
        depth = 1 if parent is None else depths[id(parent)] + 1
        depths[id(node)] = depth
        entries.append((node, parent, idx, depth))
    return entries[int(rng.integers(len(entries)))]


def _replace_child(tree: SyntaxTree, parent, idx, new_node):
    if parent is None:
        return SyntaxTree(new_node, tree.dimension)
    children = list(parent.children)
    children[idx] = new_node
    parent.children = tuple(children)
    return SyntaxTree(tree.root, tree.dimension)


def crossover_gene(a: Genome, b: Genome, rng, max_tries: int = 10):
    """Swap one random subtree between the corresponding trees of two parents.

    Retries (then degrades to copy-through) whenever a child tree would
    exceed the hard depth cap.
    """
    c1, c2 = a.clone(keep_fitness=False), b.clone(keep_fitness=False)
    n_pos = min(len(c1.all_trees), len(c2.all_trees))
    pos = int(rng.integers(n_pos))
    for _ in range(max_tries):
        t1, t2 = c1.all_trees[pos], c2.all_trees[pos]
        n1, p1, i1, d1 = _pick_node(t1, rng)
        n2, p2, i2, d2 = _pick_node(t2, rng)
        # depth of the would-be children
        new1 = d1 - 1 + trees.node_depth(n2)
        new2 = d2 - 1 + trees.node_depth(n1)
        if new1 > REAL_MAX_DEPTH or new2 > REAL_MAX_DEPTH:
            continue
        s1, s2 = n1.clone(), n2.clone()
        new_t1 = _replace_child(t1, p1, i1, s2)
        new_t2 = _replace_child(t2, p2, i2, s1)
        _set_tree(c1, pos, new_t1)
        _set_tree(c2, pos, new_t2)
        break
    return c1, c2


def _set_tree(g: Genome, pos: int, tree: SyntaxTree):
    if pos == 0:
        g.vo_orientation = tree
    elif pos == 1:
        g.vo_color = tree
    elif pos == 2:
        g.vo_shape = tree
    else:
        g.mm_trees[pos - 3] = tree


def mutate_chromosome(g: Genome, rng, max_depth: int) -> Genome:
    """Replace one uniformly chosen tree with a fresh random tree of its dimension."""
    out = g.clone(keep_fitness=False)
    pos = int(rng.integers(len(out.all_trees)))
    dim = out.all_trees[pos].dimension
    depth = int(rng.integers(2, max_depth + 1))
    _set_tree(out, pos, trees.random_tree(dim, "grow", depth, rng))
    return out


def mutate_gene(g: Genome, rng, max_depth: int,
                k_perturb_prob: float = 0.1, max_tries: int = 10) -> Genome:
    """Replace one random subtree with a fresh grow subtree; jiggle constants.

    Constants inside the mutated tree are perturbed by +-U(0, 0.1) with
    probability ``k_perturb_prob`` each, clamped to [0, 1].
    """
    out = g.clone(keep_fitness=False)
    pos = int(rng.integers(len(out.all_trees)))
    for _ in range(max_tries):
        tree = out.all_trees[pos]
        node, parent, idx, depth = _pick_node(tree, rng)
        budget = min(max_depth, REAL_MAX_DEPTH - depth + 1)
        sub = trees.random_subtree(tree.dimension, budget, rng)
        candidate = _replace_child(tree, parent, idx, sub)
        if candidate.depth <= REAL_MAX_DEPTH:
            _set_tree(out, pos, candidate)
            break
        # undo and retry
        if parent is not None:
            children = list(parent.children)
            children[idx] = node
            parent.children = tuple(children)
    mutated = out.all_trees[pos]
    for n, _, _ in mutated.iter_nodes():
        if n.constant is not None and rng.random() < k_perturb_prob:
            n.constant = float(min(1.0, max(0.0, n.constant + rng.uniform(-0.1, 0.1))))
    return out


def select_parent(population: list, tournament_size: int, rng) -> Genome:
    """Tournament selection with lexicographic parsimony pressure.

    Highest fitness wins; equal fitness prefers fewer total nodes; remaining
    ties go to the lower population index.
    """
    if not population:
        raise DataError("cannot select from an empty population")
    if any(g.fitness is None for g in population):
        raise DataError("select_parent requires all fitnesses to be set")
    k = min(tournament_size, len(population))
    picks = rng.choice(len(population), size=k, replace=False)
    best = None
    for i in sorted(int(p) for p in picks):
        g = population[i]
        if best is None:
            best = (g.fitness, g.total_nodes, i, g)
            continue
        if (g.fitness > best[0]) or (g.fitness == best[0] and g.total_nodes < best[1]):
            best = (g.fitness, g.total_nodes, i, g)
    return best[3]
