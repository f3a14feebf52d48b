"""Uniform-arity tree partitions of [0, 1] and step functions on their leaves.

A tree of arity ``a`` and depth ``d`` has ``a**m`` cells on level ``m``; cell
``(m, i)`` is the interval ``[i / a**m, (i + 1) / a**m]``. Cell endpoints and
measures are exact fractions, leaf values are floats. The model stands in for
a general non-atomic probability space; the family is truncated at ``depth``,
so the vanishing-diameter condition only holds along the family of trees as
``depth`` grows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterator, NamedTuple

import numpy as np

from .errors import DomainError, ResourceError

DEFAULT_LEAF_BUDGET = 2**22


class Node(NamedTuple):
    level: int
    index: int


@dataclass(frozen=True)
class TreePartition:
    arity: int
    depth: int

    def __post_init__(self):
        if self.arity < 2:
            raise DomainError(f"arity must be >= 2, got {self.arity}")
        if self.depth < 1:
            raise DomainError(f"depth must be >= 1, got {self.depth}")

    @property
    def root(self) -> Node:
        return Node(0, 0)

    @cached_property
    def n_leaves(self) -> int:
        return self.arity**self.depth

    @property
    def leaf_mass(self) -> Fraction:
        return Fraction(1, self.n_leaves)

    def level_size(self, level: int) -> int:
        return self.arity**level

    def check_node(self, node: Node) -> None:
        level, index = node
        if not 0 <= level <= self.depth or not 0 <= index < self.arity**level:
            raise DomainError(f"{node} is not a node of a tree with arity {self.arity} and depth {self.depth}")

    def nodes(self, level: int | None = None) -> Iterator[Node]:
        levels = range(self.depth + 1) if level is None else (level,)
        for m in levels:
            for i in range(self.arity**m):
                yield Node(m, i)

    def children(self, node: Node) -> list[Node]:
        if node.level == self.depth:
            return []
        first = node.index * self.arity
        return [Node(node.level + 1, first + j) for j in range(self.arity)]

    def parent(self, node: Node) -> Node | None:
        if node.level == 0:
            return None
        return Node(node.level - 1, node.index // self.arity)

    def ancestors(self, node: Node) -> list[Node]:
        """Chain from ``node`` up to the root, both included."""
        out = [node]
        while out[-1].level > 0:
            out.append(self.parent(out[-1]))
        return out

    def leaves_per_node(self, node: Node) -> int:
        return self.arity ** (self.depth - node.level)

    def leaf_slice(self, node: Node) -> slice:
        width = self.leaves_per_node(node)
        return slice(node.index * width, (node.index + 1) * width)

    def interval(self, node: Node) -> tuple[Fraction, Fraction]:
        size = self.arity**node.level
        return Fraction(node.index, size), Fraction(node.index + 1, size)

    def measure(self, node: Node) -> Fraction:
        return Fraction(1, self.arity**node.level)

    def leaf_node(self, leaf: int) -> Node:
        return Node(self.depth, leaf)

    def contains(self, outer: Node, inner: Node) -> bool:
        if inner.level < outer.level:
            return False
        return inner.index // self.arity ** (inner.level - outer.level) == outer.index


def build_tree(arity: int, depth: int, leaf_budget: int = DEFAULT_LEAF_BUDGET) -> TreePartition:
    if arity < 2 or depth < 1:
        raise DomainError(f"need arity >= 2 and depth >= 1, got arity={arity}, depth={depth}")
    # compare in log space so absurd depths don't allocate a huge int first
    if depth * math.log(arity) > math.log(leaf_budget) + 1e-12:
        raise ResourceError(f"{arity}**{depth} leaves exceeds the leaf budget of {leaf_budget}")
    return TreePartition(arity, depth)


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Nonnegative function constant on the leaves of ``partition``."""

    partition: TreePartition
    leaf_values: np.ndarray

    def __post_init__(self):
        values = np.array(self.leaf_values, dtype=float)
        if values.shape != (self.partition.n_leaves,):
            raise DomainError(
                f"expected {self.partition.n_leaves} leaf values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("leaf values must be finite")
        if np.any(values < 0):
            raise DomainError("leaf values must be nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "leaf_values", values)

    @classmethod
    def constant(cls, tree: TreePartition, c: float) -> "StepFunction":
        return cls(tree, np.full(tree.n_leaves, float(c)))

    def __mul__(self, c: float) -> "StepFunction":
        return StepFunction(self.partition, self.leaf_values * c)

    __rmul__ = __mul__

    def to_json(self) -> str:
        return json.dumps(
            {
                "arity": self.partition.arity,
                "depth": self.partition.depth,
                "values": [float(v) for v in self.leaf_values],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "StepFunction":
        data = json.loads(text)
        tree = build_tree(int(data["arity"]), int(data["depth"]))
        return cls(tree, np.asarray(data["values"], dtype=float))


def integral(phi: StepFunction) -> float:
    return math.fsum(phi.leaf_values) / phi.partition.n_leaves


def node_average(phi: StepFunction, node: Node) -> float:
    tree = phi.partition
    tree.check_node(node)
    block = phi.leaf_values[tree.leaf_slice(node)]
    return math.fsum(block) / block.size


def level_averages(phi: StepFunction, level: int) -> np.ndarray:
    """Averages of ``phi`` over every node on ``level``, left to right."""
    tree = phi.partition
    return phi.leaf_values.reshape(tree.arity**level, -1).mean(axis=1)


def average_smooth(phi: StepFunction, node: Node) -> StepFunction:
    """Replace ``phi`` on ``node`` by its average there."""
    values = phi.leaf_values.copy()
    values[phi.partition.leaf_slice(node)] = node_average(phi, node)
    return StepFunction(phi.partition, values)


def check_tree(tree: TreePartition) -> None:
    """Exhaustively verify the nesting and measure conditions of ``tree``."""
    if tree.measure(tree.root) != 1:
        raise AssertionError("root measure must be 1")
    for node in tree.nodes():
        mu = tree.measure(node)
        if mu <= 0:
            raise AssertionError(f"{node} has non-positive measure")
        kids = tree.children(node)
        if not kids:
            continue
        if sum(tree.measure(c) for c in kids) != mu:
            raise AssertionError(f"children of {node} do not sum to its measure")
        lo, hi = tree.interval(node)
        ends = [tree.interval(c) for c in kids]
        if ends[0][0] != lo or ends[-1][1] != hi:
            raise AssertionError(f"children of {node} do not cover it")
        for (_, right), (left, _) in zip(ends, ends[1:]):
            if right != left:
                raise AssertionError(f"children of {node} overlap or leave a gap")
