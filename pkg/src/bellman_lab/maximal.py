"""The maximal operator of a tree and its level sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvariantViolation
from .partition import Node, StepFunction, TreePartition

WEAK_TYPE_RTOL = 1e-12


def _level_sums(values: np.ndarray, tree: TreePartition) -> list[np.ndarray]:
    """Sums over the nodes of every level, index 0 = root. Works on (..., n) arrays."""
    sums = [values]
    for _ in range(tree.depth):
        last = sums[-1]
        sums.append(last.reshape(*last.shape[:-1], -1, tree.arity).sum(axis=-1))
    return sums[::-1]


def level_averages_all(values: np.ndarray, tree: TreePartition) -> list[np.ndarray]:
    out = []
    for m, s in enumerate(_level_sums(values, tree)):
        out.append(s * (tree.arity**m / tree.n_leaves))
    return out


@dataclass(frozen=True, eq=False)
class MaximalResult:
    values: StepFunction
    argmax_level: np.ndarray

    @property
    def tree(self) -> TreePartition:
        return self.values.partition

    def argmax_node(self, leaf: int) -> Node:
        level = int(self.argmax_level[leaf])
        return Node(level, leaf // self.tree.arity ** (self.tree.depth - level))


def maximal_function(phi: StepFunction) -> MaximalResult:
    """Leafwise sup of node averages over all ancestors, root and leaf included.

    One top-down pass: each level's running max is the elementwise max of
    its parent's running max and the node's own average. Ties keep the
    coarsest attaining ancestor.
    """
    tree = phi.partition
    avgs = level_averages_all(phi.leaf_values, tree)
    run = avgs[0]
    where = np.zeros(1, dtype=np.int64)
    for m in range(1, tree.depth + 1):
        run = np.repeat(run, tree.arity)
        where = np.repeat(where, tree.arity)
        better = avgs[m] > run
        run = np.where(better, avgs[m], run)
        where = np.where(better, m, where)
    return MaximalResult(StepFunction(tree, run), where)


def batch_maximal(rows: np.ndarray, tree: TreePartition) -> np.ndarray:
    """Maximal function of each row of leaf values."""
    avgs = level_averages_all(rows, tree)
    run = avgs[0]
    for m in range(1, tree.depth + 1):
        run = np.maximum(np.repeat(run, tree.arity, axis=-1), avgs[m])
    return run


def distribution_at(result: MaximalResult, lam: float, strict: bool = False) -> float:
    """mu({M phi >= lam}), or mu({M phi > lam}) with ``strict``."""
    if not lam > 0:
        raise DomainError(f"lambda must be > 0, got {lam}")
    m = result.values.leaf_values
    hits = np.count_nonzero(m > lam if strict else m >= lam)
    return hits / result.tree.n_leaves


def distribution_curve(result: MaximalResult) -> list[tuple[float, float]]:
    """(lambda, mu({M phi >= lambda})) at every distinct value of M phi, decreasing lambda."""
    m = result.values.leaf_values
    levels, counts = np.unique(m, return_counts=True)
    levels, counts = levels[::-1], counts[::-1]
    measures = np.cumsum(counts) / result.tree.n_leaves
    return [(float(a), float(b)) for a, b in zip(levels, measures) if a > 0]


def level_set_nodes(phi: StepFunction, lam: float, strict: bool = False) -> list[Node]:
    """Maximal tree nodes J with Av_J(phi) >= lam; their union is {M phi >= lam}."""
    tree = phi.partition
    avgs = level_averages_all(phi.leaf_values, tree)
    covered = np.zeros(1, dtype=bool)
    out = []
    for m in range(tree.depth + 1):
        if m:
            covered = np.repeat(covered, tree.arity)
        hit = (avgs[m] > lam if strict else avgs[m] >= lam) & ~covered
        out.extend(Node(m, int(i)) for i in np.flatnonzero(hit))
        covered |= hit
    return out


def weak_type_check(phi: StepFunction, lam: float, strict: bool = False) -> dict:
    """Check mu(E) <= (1/lam) * integral of phi over E for E = {M phi >= lam}."""
    result = maximal_function(phi)
    m = result.values.leaf_values
    mask = m > lam if strict else m >= lam
    n = phi.partition.n_leaves
    lhs = np.count_nonzero(mask) / n
    rhs = math.fsum(phi.leaf_values[mask]) / n / lam
    report = {"lambda": lam, "measure": lhs, "bound": rhs}
    if lhs > rhs * (1 + WEAK_TYPE_RTOL) + 1e-300:
        raise InvariantViolation("weak type (1,1) inequality failed", report)
    return report
