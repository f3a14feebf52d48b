"""Decreasing rearrangements and equal-average subset selection.

Subsets are described by per-piece fractions: a piece (a leaf, or a segment
of a rearrangement) contributes ``fraction * mass`` of measure and
``fraction * mass * value`` of integral. Only measures and integrals matter
downstream, so sub-leaf geometry is never materialised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError, NumericError
from .partition import Node, StepFunction, TreePartition

OFFSET_TOL = 1e-12
MAX_BISECTIONS = 200


@dataclass(frozen=True, eq=False)
class Rearrangement:
    """Pairs (value, mass) sorted strictly decreasing by value."""

    values: np.ndarray
    masses: np.ndarray
    total_mass: float = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        if values.shape != masses.shape or values.ndim != 1:
            raise DomainError("values and masses must be 1-d arrays of equal length")
        if np.any(masses <= 0):
            raise DomainError("masses must be positive")
        if np.any(np.diff(values) >= 0):
            raise DomainError("values must be strictly decreasing")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "masses", masses)
        if self.total_mass is None:
            object.__setattr__(self, "total_mass", math.fsum(masses))

    @classmethod
    def from_pieces(cls, values, masses) -> "Rearrangement":
        """Sort arbitrary (value, mass) pieces and merge equal values."""
        values = np.asarray(values, dtype=float)
        masses = np.asarray(masses, dtype=float)
        keep = masses > 0
        values, masses = values[keep], masses[keep]
        order = np.argsort(-values, kind="stable")
        values, masses = values[order], masses[order]
        uniq, start = np.unique(-values, return_index=True)
        merged = np.add.reduceat(masses, start) if values.size else masses
        return cls(-uniq, merged, math.fsum(masses))

    @property
    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.masses.tolist()))

    def integral(self) -> float:
        return math.fsum(self.values * self.masses)

    def average(self) -> float:
        return self.integral() / self.total_mass

    def distribution(self, t: float) -> float:
        """Measure of the set where the function exceeds ``t``."""
        return math.fsum(self.masses[self.values > t])


@dataclass(frozen=True, eq=False)
class SubsetCertificate:
    """A subset described by fractions of consecutive pieces.

    ``node`` is the tree node the pieces live under (``None`` when the pieces
    are segments of a bare rearrangement); piece ``i`` has value
    ``piece_values[i]`` and mass ``piece_masses[i]``.
    """

    node: Node | None
    beta: float
    offset: float
    target_average: float
    fractions: np.ndarray
    piece_values: np.ndarray
    piece_masses: np.ndarray

    @property
    def measure(self) -> float:
        return math.fsum(self.fractions * self.piece_masses)

    @property
    def integral(self) -> float:
        return math.fsum(self.fractions * self.piece_masses * self.piece_values)

    @property
    def average(self) -> float:
        return self.integral / self.measure

    def pieces(self) -> tuple[np.ndarray, np.ndarray]:
        """(value, mass) pieces making up the subset, zero-mass pieces dropped."""
        m = self.fractions * self.piece_masses
        keep = m > 0
        return self.piece_values[keep], m[keep]

    def to_dict(self) -> dict:
        nz = np.flatnonzero(self.fractions)
        return {
            "node": None if self.node is None else list(self.node),
            "beta": self.beta,
            "offset": self.offset,
            "target_average": self.target_average,
            "achieved_average": self.average,
            "fractions": {int(i): float(self.fractions[i]) for i in nz},
        }


def decreasing_rearrangement(phi: StepFunction, node: Node | None = None) -> Rearrangement:
    tree = phi.partition
    node = tree.root if node is None else node
    tree.check_node(node)
    values = phi.leaf_values[tree.leaf_slice(node)]
    masses = np.full(values.size, 1.0 / tree.n_leaves)
    out = Rearrangement.from_pieces(values, masses)
    return Rearrangement(out.values, out.masses, float(tree.measure(node)))


def _cumulative(values: np.ndarray, masses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cm = np.concatenate(([0.0], np.cumsum(masses)))
    ci = np.concatenate(([0.0], np.cumsum(values * masses)))
    return cm, ci


def window_average(cm: np.ndarray, ci: np.ndarray, r: float, beta: float) -> float:
    """Average of the rearranged function over ``[r, r + beta]``."""
    return float(np.interp(r + beta, cm, ci) - np.interp(r, cm, ci)) / beta


def solve_offset(values: np.ndarray, masses: np.ndarray, beta: float, s: float) -> float:
    """Find r with the window average over [r, r + beta] equal to ``s``.

    The window average is continuous and non-increasing in r. Bisection narrows
    the bracket until no breakpoint of either window end lies inside it; the
    map is then linear and is solved exactly.
    """
    cm, ci = _cumulative(values, masses)
    total = cm[-1]
    lo, hi = 0.0, max(total - beta, 0.0)
    inner = cm[1:-1]
    h_lo = window_average(cm, ci, lo, beta)
    h_hi = window_average(cm, ci, hi, beta)
    if h_lo <= s:
        return lo
    if h_hi >= s:
        return hi
    for _ in range(MAX_BISECTIONS):
        crosses = np.any((inner > lo) & (inner < hi)) or np.any(
            (inner - beta > lo) & (inner - beta < hi)
        )
        if not crosses or hi - lo < OFFSET_TOL:
            if h_lo == h_hi:
                return lo
            r = lo + (h_lo - s) / (h_lo - h_hi) * (hi - lo)
            return min(max(r, lo), hi)
        mid = 0.5 * (lo + hi)
        h_mid = window_average(cm, ci, mid, beta)
        if h_mid >= s:
            lo, h_lo = mid, h_mid
        else:
            hi, h_hi = mid, h_mid
    raise NumericError(f"offset bisection did not converge in {MAX_BISECTIONS} steps (bracket {lo}, {hi})")


def window_overlap(masses: np.ndarray, r: float, beta: float) -> np.ndarray:
    """Measure of each piece lying inside the window ``[r, r + beta]``."""
    cm = np.concatenate(([0.0], np.cumsum(masses)))
    return np.clip(np.minimum(cm[1:], r + beta) - np.maximum(cm[:-1], r), 0.0, None)


def equal_average_subset(phi: StepFunction, node: Node, beta: float) -> SubsetCertificate:
    """Subset of ``node`` with measure ``beta`` and the same average as the node."""
    tree = phi.partition
    tree.check_node(node)
    mu = float(tree.measure(node))
    if not 0 < beta <= mu * (1 + 1e-15):
        raise DomainError(f"beta must lie in (0, {mu}], got {beta}")
    beta = min(beta, mu)
    values = phi.leaf_values[tree.leaf_slice(node)]
    leaf_mass = 1.0 / tree.n_leaves
    order = np.argsort(-values, kind="stable")
    sorted_vals = values[order]
    masses = np.full(values.size, leaf_mass)
    s = math.fsum(values) / values.size
    r = solve_offset(sorted_vals, masses, beta, s)
    fractions = np.empty(values.size)
    fractions[order] = window_overlap(masses, r, beta) / leaf_mass
    return SubsetCertificate(node, beta, r, s, np.clip(fractions, 0.0, 1.0), values.copy(), masses)


def nodes_for_leaf_count(tree: TreePartition, node: Node, count: int) -> list[Node]:
    """Greedy coarse-to-fine choice of disjoint nodes under ``node`` covering ``count`` leaves."""
    total = tree.leaves_per_node(node)
    if not 0 <= count <= total:
        raise DomainError(f"cannot select {count} leaves under a node with {total}")
    if count == total:
        return [node]
    chosen = []
    current, remaining = node, count
    while remaining:
        kids = tree.children(current)
        width = tree.leaves_per_node(kids[0])
        take, remaining = divmod(remaining, width)
        chosen.extend(kids[:take])
        if remaining:
            current = kids[take]
    return chosen


def select_subfamily(tree: TreePartition, node: Node, a, snap: str | None = None) -> list[Node]:
    """Disjoint tree nodes under ``node`` with total measure ``(1 - a) * mu(node)``.

    On a finite tree only multiples of the leaf mass are reachable. Unless
    ``snap`` is ``"down"`` or ``"nearest"``, a target off the grid is an error.
    """
    tree.check_node(node)
    if not 0 < a < 1:
        raise DomainError(f"a must lie in (0, 1), got {a}")
    width = tree.leaves_per_node(node)
    if isinstance(a, (int, Fraction)):
        exact = (1 - Fraction(a)) * width
        count = math.floor(exact) if snap == "down" else round(exact)
        on_grid = exact.denominator == 1
    else:
        exact = (1.0 - a) * width
        count = math.floor(exact + 1e-9) if snap == "down" else round(exact)
        on_grid = abs(exact - round(exact)) <= 1e-9 * max(1.0, width)
    if not on_grid and snap is None:
        lo, hi = math.floor(exact), math.ceil(exact)
        raise DomainError(
            f"target measure {float(exact) / tree.n_leaves} is not a multiple of the leaf mass; "
            f"nearest representable measures are "
            f"{Fraction(lo, tree.n_leaves)} and {Fraction(hi, tree.n_leaves)}"
        )
    count = min(max(count, 0), width)
    return nodes_for_leaf_count(tree, node, count)


def partition_equal_average(rearr: Rearrangement, masses) -> list[SubsetCertificate]:
    """Split a rearrangement into disjoint sets of the given measures, all with its average.

    Each set is cut out of the current remainder as a window; cutting a window
    of average ``s`` out of a set of average ``s`` leaves the average unchanged,
    so the procedure can be repeated.
    """
    masses = [float(m) for m in masses]
    if not masses or any(m <= 0 for m in masses):
        raise DomainError("masses must be a non-empty list of positive reals")
    total = rearr.total_mass
    if abs(math.fsum(masses) - total) > 1e-9 * max(1.0, total):
        raise DomainError(f"masses sum to {math.fsum(masses)}, expected {total}")
    seg_values, seg_masses = rearr.values, rearr.masses
    s = rearr.average()
    vals, mass, origin = seg_values.copy(), seg_masses.copy(), np.arange(seg_values.size)
    sliver = 1e-14 * total
    out = []
    for j, beta in enumerate(masses):
        if j == len(masses) - 1:
            overlap, r = mass, 0.0
            beta = math.fsum(mass)
        else:
            local_s = math.fsum(vals * mass) / math.fsum(mass)
            r = solve_offset(vals, mass, beta, local_s)
            overlap = window_overlap(mass, r, beta)
        fractions = np.zeros(seg_values.size)
        np.add.at(fractions, origin, overlap)
        fractions = np.clip(fractions / seg_masses, 0.0, 1.0)
        out.append(SubsetCertificate(None, beta, r, s, fractions, seg_values, seg_masses))
        if j == len(masses) - 1:
            break
        cm = np.concatenate(([0.0], np.cumsum(mass)))
        left = np.clip(np.minimum(cm[1:], r) - cm[:-1], 0.0, None)
        right = np.clip(cm[1:] - np.maximum(cm[:-1], r + beta), 0.0, None)
        keep_l, keep_r = left > sliver, right > sliver
        vals = np.concatenate((vals[keep_l], vals[keep_r]))
        origin = np.concatenate((origin[keep_l], origin[keep_r]))
        mass = np.concatenate((left[keep_l], right[keep_r]))
    return out
