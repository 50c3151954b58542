"""Typed syntax trees for the four feature dimensions.

Each dimension (orientation, color, shape, mental) has its own function and
terminal vocabulary. Trees evaluate over a terminal environment that lazily
binds channel maps (or a conspicuity map) and their derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import primitives
from .errors import EvaluationError, FormatError
from .imagery import CHANNEL_KEYS

ORIENTATION, COLOR, SHAPE, MENTAL = "orientation", "color", "shape", "mental"
DIMENSIONS = (ORIENTATION, COLOR, SHAPE, MENTAL)

_DERIVS = ("dx", "dy", "dxx", "dyy", "dxy")

FUNCTION_SETS = {
    ORIENTATION: (
        "add", "sub", "mul", "div", "k_add", "k_sub", "k_mul", "div_k",
        "abs", "abs_add", "abs_sub", "log", "square", "sqrt",
        "round", "floor", "ceil", "inf", "sup",
        "gauss1", "gauss2", "dx", "dy", "thr",
    ),
    COLOR: (
        "add", "sub", "mul", "div", "k_add", "k_sub", "k_mul", "div_k",
        "log", "exp", "square", "sqrt", "complement",
        "round", "floor", "ceil", "thr",
    ),
    SHAPE: (
        "add", "sub", "mul", "div", "k_add", "k_sub", "k_mul", "div_k",
        "round", "floor", "ceil", "thr",
        "dilate_disk", "dilate_square", "dilate_diamond",
        "erode_disk", "erode_square", "erode_diamond",
        "open_square", "close_square", "skeleton", "perimeter",
        "hitmiss_disk", "hitmiss_square", "hitmiss_diamond",
        "tophat", "bothat",
    ),
    MENTAL: (
        "add", "sub", "mul", "div", "abs_add", "abs_sub",
        "log", "square", "sqrt", "gauss1", "gauss2", "dx", "dy",
    ),
}

_CHANNEL_TERMS = tuple(f"i_{c}" for c in CHANNEL_KEYS)

TERMINAL_SETS = {
    ORIENTATION: _CHANNEL_TERMS + tuple(
        f"{d}_i_{c}" for d in _DERIVS for c in CHANNEL_KEYS
    ),
    COLOR: _CHANNEL_TERMS + ("op_rg", "op_by"),
    SHAPE: _CHANNEL_TERMS,
    MENTAL: ("cm",) + tuple(f"{d}_cm" for d in _DERIVS),
}

REAL_MAX_DEPTH = 9


@dataclass
class Node:
    """One tree node: a function symbol with children, or a bare terminal."""

    symbol: str
    children: tuple = ()
    constant: float | None = None

    @property
    def is_terminal(self):
        return not self.children and self.symbol not in primitives.FUNCTIONS

    def clone(self) -> "Node":
        return Node(self.symbol, tuple(c.clone() for c in self.children), self.constant)


def node_depth(node: Node) -> int:
    if not node.children:
        return 1
    return 1 + max(node_depth(c) for c in node.children)


def node_count(node: Node) -> int:
    return 1 + sum(node_count(c) for c in node.children)


@dataclass
class SyntaxTree:
    """A typed tree with cached depth/node counts kept in sync on construction."""

    root: Node
    dimension: str
    depth: int = field(default=0)
    nodes: int = field(default=0)

    def __post_init__(self):
        self.depth = node_depth(self.root)
        self.nodes = node_count(self.root)

    def clone(self) -> "SyntaxTree":
        return SyntaxTree(self.root.clone(), self.dimension)

    def iter_nodes(self):
        """Pre-order traversal yielding (node, parent, child_index)."""
        stack = [(self.root, None, 0)]
        while stack:
            node, parent, idx = stack.pop()
            yield node, parent, idx
            for i, child in enumerate(reversed(node.children)):
                stack.append((child, node, len(node.children) - 1 - i))


class TerminalEnv:
    """Lazy terminal bindings for one evaluation.

    Base maps are given up front; derivative terminals are computed on first
    use and cached for the lifetime of the environment (shared across the
    mental trees of one dimension, in particular).
    """

    def __init__(self, base_maps: dict):
        self._maps = dict(base_maps)

    def get(self, symbol: str) -> np.ndarray:
        got = self._maps.get(symbol)
        if got is not None:
            return got
        for d in _DERIVS:
            prefix = d + "_"
            if symbol.startswith(prefix):
                src = self.get(symbol[len(prefix):])
                out = primitives.deriv(src, d[1:])
                self._maps[symbol] = out
                return out
        raise EvaluationError(f"unbound terminal {symbol!r}")


def env_for_colorset(cs, dimension: str, opponency: str = "diff") -> TerminalEnv:
    """Terminal environment for a VO tree over a ColorSet.

    ``opponency`` selects the red-green / blue-yellow terminal semantics:
    signed difference (default) or pointwise max.
    """
    base = {f"i_{key}": cs[key] for key in CHANNEL_KEYS}
    if dimension == COLOR:
        if opponency == "diff":
            base["op_rg"] = cs["r"] - cs["g"]
            base["op_by"] = cs["b"] - cs["y"]
        elif opponency == "max":
            base["op_rg"] = np.maximum(cs["r"], cs["g"])
            base["op_by"] = np.maximum(cs["b"], cs["y"])
        else:
            raise ValueError(f"unknown opponency mode {opponency!r}")
    return TerminalEnv(base)


def env_for_cm(cm: np.ndarray) -> TerminalEnv:
    return TerminalEnv({"cm": cm})


def eval_node(node: Node, env: TerminalEnv, shape=None) -> np.ndarray:
    if node.is_terminal:
        out = env.get(node.symbol)
    else:
        args = [eval_node(c, env, shape) for c in node.children]
        out = primitives.apply_function(node.symbol, node.constant, args)
    if shape is not None:
        # type closure: every intermediate is a same-sized real map
        assert out.shape == shape, f"{node.symbol} produced shape {out.shape}, want {shape}"
    return out


def eval_tree(tree: SyntaxTree, env: TerminalEnv) -> np.ndarray:
    """Interpret a tree over the environment, returning one real map."""
    shape = None
    if __debug__:
        first = tree.root
        while first.children:
            first = first.children[0]
        shape = env.get(first.symbol).shape
    return eval_node(tree.root, env, shape)


def random_tree(dimension: str, method: str, max_depth: int, rng,
                min_depth: int = 2) -> SyntaxTree:
    """Grow/full random tree for one dimension.

    ``full`` places functions down to max_depth-1 so every leaf sits exactly
    at max_depth; ``grow`` picks function vs terminal with probability 0.5
    below the root. Constants attached to k-functions are drawn ~ U(0, 1)
    and frozen.
    """
    if method not in ("grow", "full"):
        raise ValueError(f"unknown init method {method!r}")
    if not min_depth <= max_depth <= REAL_MAX_DEPTH:
        raise ValueError(f"max_depth must be in [{min_depth}, {REAL_MAX_DEPTH}]")
    funcs = FUNCTION_SETS[dimension]
    terms = TERMINAL_SETS[dimension]

    def build(depth):
        at_cap = depth >= max_depth
        force_function = depth < min_depth
        if at_cap:
            pick_function = False
        elif force_function or method == "full":
            pick_function = True
        else:
            pick_function = rng.random() < 0.5
        if not pick_function:
            return Node(terms[rng.integers(len(terms))])
        symbol = funcs[rng.integers(len(funcs))]
        k = float(rng.uniform(0.0, 1.0)) if primitives.uses_constant(symbol) else None
        children = tuple(build(depth + 1) for _ in range(primitives.arity(symbol)))
        return Node(symbol, children, k)

    return SyntaxTree(build(1), dimension)


def random_subtree(dimension: str, max_depth: int, rng) -> Node:
    """Grow-style subtree that is allowed to be a bare terminal (depth 1)."""
    if max_depth <= 1:
        return Node(TERMINAL_SETS[dimension][rng.integers(len(TERMINAL_SETS[dimension]))])
    return random_tree(dimension, "grow", max_depth, rng, min_depth=1).root


def validate_tree(tree: SyntaxTree) -> None:
    """Raise if any node uses a symbol outside its dimension's vocabulary."""
    funcs = set(FUNCTION_SETS[tree.dimension])
    terms = set(TERMINAL_SETS[tree.dimension])
    for node, _, _ in tree.iter_nodes():
        if node.is_terminal:
            if node.symbol not in terms:
                raise EvaluationError(
                    f"terminal {node.symbol!r} not in {tree.dimension} terminal set")
        else:
            if node.symbol not in funcs:
                raise EvaluationError(
                    f"function {node.symbol!r} not in {tree.dimension} function set")
            if len(node.children) != primitives.arity(node.symbol):
                raise EvaluationError(f"arity mismatch at {node.symbol!r}")
            if primitives.uses_constant(node.symbol) != (node.constant is not None):
                raise EvaluationError(f"constant mismatch at {node.symbol!r}")
    if tree.depth > REAL_MAX_DEPTH:
        raise EvaluationError(f"tree depth {tree.depth} exceeds {REAL_MAX_DEPTH}")


def to_sexpr(node: Node) -> str:
    if node.is_terminal:
        return node.symbol
    parts = [node.symbol]
    if node.constant is not None:
        parts.append(repr(node.constant))
    parts.extend(to_sexpr(c) for c in node.children)
    return "(" + " ".join(parts) + ")"


def tree_to_line(tree: SyntaxTree) -> str:
    return f"{tree.dimension}: {to_sexpr(tree.root)}"


def _tokenize(text):
    return text.replace("(", " ( ").replace(")", " ) ").split()


def _parse_tokens(tokens, pos):
    if pos >= len(tokens):
        raise FormatError("unexpected end of s-expression")
    tok = tokens[pos]
    if tok == "(":
        pos += 1
        symbol = tokens[pos]
        pos += 1
        constant = None
        if primitives.uses_constant(symbol):
            constant = float(tokens[pos])
            pos += 1
        children = []
        while tokens[pos] != ")":
            child, pos = _parse_tokens(tokens, pos)
            children.append(child)
        return Node(symbol, tuple(children), constant), pos + 1
    if tok == ")":
        raise FormatError("unbalanced s-expression")
    return Node(tok), pos + 1


def tree_from_line(line: str) -> SyntaxTree:
    """Parse ``dimension: (sexpr)`` back into a validated tree."""
    if ":" not in line:
        raise FormatError(f"missing dimension tag in {line!r}")
    dim, _, body = line.partition(":")
    dim = dim.strip()
    if dim not in DIMENSIONS:
        raise FormatError(f"unknown dimension tag {dim!r}")
    tokens = _tokenize(body.strip())
    root, pos = _parse_tokens(tokens, 0)
    if pos != len(tokens):
        raise FormatError(f"trailing tokens in {line!r}")
    tree = SyntaxTree(root, dim)
    validate_tree(tree)
    return tree
