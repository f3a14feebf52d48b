"""Closed-form Bellman functions B, B1, B2 and their extremal functions on trees.

All constructions work at F = 1 and are scaled back: if psi is extremal for
(f / F, F = 1, lambda / F) then F * psi is extremal for (f, F, lambda), since
the integral, both norms and the maximal operator are 1-homogeneous.

Every construction has the same shape. A set of tree nodes of total measure
K (snapped down to the leaf grid) is filled with a decreasing "top" profile
cut into pieces of equal average, one piece per node, so each node averages
at least lambda. The remaining leaves are filled, left to right, with the
cell averages of a "rest" profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import quad

from .errors import DomainError, NumericError
from .maximal import distribution_at, maximal_function, weak_type_check
from .norms import conjugate_factor, equiv_norm, quasi_norm
from .partition import Node, StepFunction, TreePartition, integral
from .profiles import ContinuousProfile, Piece, concat, constant
from .rearrange import Rearrangement, nodes_for_leaf_count, partition_equal_average

FUNCTIONALS = ("B", "B1", "B2")
DOMAIN_RTOL = 1e-12


@dataclass(frozen=True)
class BellmanQuery:
    p: float
    f: float
    F: float
    lam: float
    functional: str = "B"

    def __post_init__(self):
        if self.functional not in FUNCTIONALS:
            raise DomainError(f"functional must be one of {FUNCTIONALS}, got {self.functional!r}")
        if not self.p > 1:
            raise DomainError(f"p must be > 1, got {self.p}")
        if not (self.f > 0 and self.F > 0 and self.lam > 0):
            raise DomainError("f, F and lambda must be positive")
        cap = self.k * self.F if self.functional == "B1" else self.F
        if self.f > cap * (1 + DOMAIN_RTOL):
            bound = "(p/(p-1))*F" if self.functional == "B1" else "F"
            raise DomainError(f"{self.functional} requires 0 < f <= {bound} = {cap}, got f = {self.f}")

    @property
    def k(self) -> float:
        return conjugate_factor(self.p)

    @property
    def power_constant(self) -> float:
        """Constant c in the power term (c F)^p / lambda^p."""
        return self.k if self.functional == "B1" else 1.0

    @property
    def power_threshold(self) -> float:
        c = self.power_constant
        return ((c * self.F) ** self.p / self.f) ** (1.0 / (self.p - 1.0))

    def normalized(self) -> "BellmanQuery":
        return BellmanQuery(self.p, self.f / self.F, 1.0, self.lam / self.F, self.functional)

    def to_dict(self) -> dict:
        return {"functional": self.functional, "p": self.p, "f": self.f, "F": self.F, "lambda": self.lam}


def closed_form(q: BellmanQuery) -> tuple[float, str]:
    """(value, active branch) of min(1, f/lambda, (cF)^p/lambda^p), c = 1 or k.

    Branch boundaries: for B and B2 the value is 1 on
    lambda <= f, f/lambda up to and including the power threshold; for B1 it
    is 1 on lambda < f and the power term from the threshold on.
    """
    c = q.power_constant
    value = min(1.0, q.f / q.lam, (c * q.F) ** q.p / q.lam**q.p)
    thr = q.power_threshold
    if q.functional == "B1":
        branch = "one" if q.lam < q.f else "f_over_lambda" if q.lam < thr else "power"
    else:
        branch = "one" if q.lam <= q.f else "f_over_lambda" if q.lam <= thr else "power"
    return value, branch


def thresholds(q: BellmanQuery) -> dict:
    return {"one_to_f_over_lambda": q.f, "f_over_lambda_to_power": q.power_threshold}


def corollary_norm_sup(p: float, f: float, F: float, functional: str) -> float:
    """sup of the weak-L^p quasi-norm of M phi: F for B, k F for B1."""
    q = BellmanQuery(p, f, F, 1.0, functional)
    return q.k * F if functional == "B1" else F


# ---------------------------------------------------------------------------
# continuous profiles at F = 1


def b_power_profile(p: float, f: float, lam: float, flat: float | None = None):
    """Top and rest profiles for the B power branch with flat measure ``flat``.

    Rest is (1 - 1/p)(u + flat)^(-1/p) on [0, A) and 0 after, where A makes
    the total integral f. With flat = lambda^-p this is the profile
    from the first extremal problem, A = f^(p/(p-1)) - lambda^-p.
    """
    q = 1.0 / p
    flat = lam**-p if flat is None else flat
    rest_int = f - lam * flat
    A = (rest_int + flat ** (1 - q)) ** (p / (p - 1)) - flat
    top = constant(lam, flat, tag="flat_top")
    rest = _fit_rest("b_rest", Piece(0.0, A, a=1 - q, shift=flat, e=q), rest_int, 1.0 - flat,
                     {"A": A, "flat": flat})
    return top, rest


def b1_power_profile(p: float, f: float, lam: float, flat: float | None = None):
    """Top t^(-1/p) on [0, flat]; rest (u + flat)^(-1/p) on [0, A1] and 0 after."""
    q = 1.0 / p
    k = conjugate_factor(p)
    flat = k**p / lam**p if flat is None else flat
    A1 = (f / k) ** (p / (p - 1)) - flat
    top = ContinuousProfile("power_top", (Piece(0.0, flat, a=1.0, e=q),), {"flat": flat})
    rest_int = f - k * flat ** (1 - q)
    rest = _fit_rest("b1_rest", Piece(0.0, max(A1, 0.0), a=1.0, shift=flat, e=q), rest_int,
                     1.0 - flat, {"A1": A1, "flat": flat})
    return top, rest


def _fit_rest(tag: str, piece: Piece, mass: float, room: float, params: dict) -> ContinuousProfile:
    """The rest profile, cut to the room left beside the flat set.

    Snapping the flat measure down can push the support past ``room`` when
    the integral sits at its upper limit; the piece is then truncated and a
    constant (of the order of the snap deficit) restores the integral.
    """
    if piece.end <= room:
        return ContinuousProfile(tag, (piece,), params)
    cut = replace(piece, end=room)
    lift = max(mass - float(cut.integral(0.0, room)), 0.0) / room
    return ContinuousProfile(tag, (replace(cut, c0=cut.c0 + lift),), {**params, "lift": lift})


def middle_profile(p: float, f: float, length: float) -> ContinuousProfile:
    """A strictly decreasing, convex G on [0, length] with integral f and G <= t^(-1/p).

    Near 0 it behaves like t^(-1/p), so |{G > t}| t^p -> 1. Two families:

    * t^(-1/p) - c, when the subtracted constant keeps G >= 0 on the interval;
    * max(t^(-1/p) - b^(-1/p), 0) + eps (length - t) otherwise, eps small.
    """
    q = 1.0 / p
    k = conjugate_factor(p)
    L = length
    full = k * L ** (1 - q)
    if not 0 < f < full:
        raise NumericError(
            f"no G exists: need 0 < f < k*length^(1-1/p) = {full}, got f = {f}, length = {L}"
        )
    if (k - 1.0) * L ** (1 - q) <= f:
        c = (full - f) / L
        pieces = (Piece(0.0, L, a=1.0, e=q, c0=-c),)
        return ContinuousProfile("G_shifted", pieces, {"c": c, "length": L})
    eps = 0.02 * f / (L * L)
    b = ((f - 0.5 * eps * L * L) / (k - 1.0)) ** (p / (p - 1))
    if not 0 < b < L or eps * L > b**-q:
        raise NumericError(f"G construction infeasible for p={p}, f={f}, length={L}")
    pieces = (
        Piece(0.0, b, a=1.0, e=q, c0=eps * L - b**-q, c1=-eps),
        Piece(b, L, c0=eps * L, c1=-eps),
    )
    return ContinuousProfile("G_truncated", pieces, {"b": b, "eps": eps, "length": L})


def check_middle_profile(G: ContinuousProfile, p: float, f: float, lam: float,
                         grid_points: int = 10_000) -> dict:
    """Check the conditions on G independently of its antiderivative.

    Integral by adaptive quadrature, domination and monotonicity on a uniform
    grid, convexity through difference quotients, and |{G > t}| t^p at
    t = 10^3, 10^4, 10^6 times lambda.
    """
    q = 1.0 / p
    L = G.support
    breaks = sorted({pc.end for pc in G.pieces[:-1]})
    val, err = quad(lambda t: float(G.value(np.array([t]))[0]), 0.0, L,
                    points=breaks or None, limit=500, epsabs=1e-13, epsrel=1e-13)
    t = np.linspace(0.0, L, grid_points + 1)[1:]
    g = G.value(t)
    slopes = np.diff(g) / np.diff(t)
    tail = {m: G.distribution(m * lam) * (m * lam) ** p for m in (1e3, 1e4, 1e6)}
    return {
        "quadrature_integral": val,
        "quadrature_error": err,
        "integral_gap": abs(val - f),
        "dominated": bool(np.all(g <= t**-q * (1 + 1e-12))),
        "strictly_decreasing": bool(np.all(np.diff(g) < 0)),
        "convex": bool(np.all(np.diff(slopes) >= -1e-9 * (np.abs(slopes[:-1]) + 1.0))),
        "nonnegative": bool(np.all(g >= 0)),
        "tail": tail,
    }


# ---------------------------------------------------------------------------
# discretisation


def fill_nodes(tree: TreePartition, nodes: list[Node], top_cells: np.ndarray, values: np.ndarray) -> None:
    """Write equal-average pieces of the decreasing ``top_cells`` into ``nodes``.

    ``top_cells`` holds one value per leaf-sized cell; the cells are split by
    ``partition_equal_average`` into one piece per node, and each node gets
    the cell averages of its piece's rearrangement.
    """
    if not nodes:
        return
    h = 1.0 / tree.n_leaves
    rearr = Rearrangement.from_pieces(top_cells, np.full(top_cells.size, h))
    masses = [float(tree.measure(nd)) for nd in nodes]
    certs = partition_equal_average(rearr, masses)
    for node, cert in zip(nodes, certs):
        vals, m = cert.pieces()
        order = np.argsort(-vals, kind="stable")
        vals, m = vals[order], m[order]
        width = tree.leaves_per_node(node)
        m = m * (width * h / math.fsum(m))
        cm = np.concatenate(([0.0], np.cumsum(m)))
        ci = np.concatenate(([0.0], np.cumsum(vals * m)))
        cm[-1] = width * h
        edges = np.arange(width + 1) * h
        values[tree.leaf_slice(node)] = np.diff(np.interp(edges, cm, ci)) / h


def assemble(tree: TreePartition, top: ContinuousProfile | None, top_leaves: int,
             rest: ContinuousProfile | None) -> tuple[np.ndarray, list[Node]]:
    n = tree.n_leaves
    h = 1.0 / n
    values = np.zeros(n)
    nodes = nodes_for_leaf_count(tree, tree.root, top_leaves) if top_leaves else []
    if top_leaves:
        fill_nodes(tree, nodes, top.cell_averages(top_leaves, h), values)
    in_top = np.zeros(n, dtype=bool)
    for nd in nodes:
        in_top[tree.leaf_slice(nd)] = True
    n_rest = n - top_leaves
    if n_rest and rest is not None:
        values[~in_top] = rest.cell_averages(n_rest, h)
    return np.maximum(values, 0.0), nodes


def snap_down(measure: float, tree: TreePartition) -> int:
    """Number of leaves in the largest grid measure not exceeding ``measure``."""
    return int(math.floor(measure * tree.n_leaves * (1 + 1e-15)))


# ---------------------------------------------------------------------------
# recipes


@dataclass
class ExtremalRecipe:
    query: BellmanQuery
    construction: str
    profile: ContinuousProfile
    step: StepFunction
    flat_nodes: list[Node]
    flat_measure: float
    target_flat_measure: float
    eps_d: float
    continuous: dict = field(default_factory=dict)
    achieved: dict = field(default_factory=dict)
    parts: dict = field(default_factory=dict)

    @property
    def snap_deficit(self) -> float:
        return self.target_flat_measure - self.flat_measure

    def to_dict(self, with_values: bool = False) -> dict:
        tree = self.step.partition
        out = {
            "query": self.query.to_dict(),
            "construction": self.construction,
            "profile": {"tag": self.profile.tag, "params": _plain(self.profile.params)},
            "tree": {"arity": tree.arity, "depth": tree.depth},
            "flat_nodes": [list(nd) for nd in self.flat_nodes],
            "flat_measure": self.flat_measure,
            "target_flat_measure": self.target_flat_measure,
            "snap_deficit": self.snap_deficit,
            "eps_d": self.eps_d,
            "scale": self.query.F,
            "continuous": _plain(self.continuous),
            "achieved": _plain(self.achieved),
        }
        if with_values:
            out["values"] = [float(v) for v in self.step.leaf_values]
        return out


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def grid_slack(tree: TreePartition) -> float:
    """Discretisation slack eps_d: the leaf mass arity^-depth."""
    return 1.0 / tree.n_leaves


def _finish(q: BellmanQuery, tree: TreePartition, construction: str, profile: ContinuousProfile,
            values: np.ndarray, nodes: list[Node], target_flat: float, norm_name: str) -> ExtremalRecipe:
    F = q.F
    step = StepFunction(tree, values * F)
    flat = sum(float(tree.measure(nd)) for nd in nodes)
    eps = grid_slack(tree)
    p = q.p
    scaled = profile.scaled(F)
    cq, cq_at = scaled.quasi_norm(p)
    ce, ce_at = scaled.equiv_norm(p)
    continuous = {
        "integral": scaled.integral(),
        "quasi_norm": cq,
        "quasi_norm_witness": cq_at,
        "equiv_norm": ce,
        "equiv_norm_witness": ce_at,
        "constrained_norm": norm_name,
    }
    M = maximal_function(step)
    achieved = {
        "integral": integral(step),
        "quasi_norm": quasi_norm(step, p).value,
        "equiv_norm": equiv_norm(step, p).value,
        "distribution_at_lambda": distribution_at(M, q.lam),
        "distribution_at_lambda_slack": distribution_at(M, q.lam * (1 - eps)),
        "closed_form": closed_form(q)[0],
    }
    weak_type_check(step, q.lam * (1 - eps))
    return ExtremalRecipe(q, construction, scaled, step, nodes, flat, target_flat, eps, continuous, achieved)


def extremal_B(q: BellmanQuery, tree: TreePartition) -> ExtremalRecipe:
    """Power-branch extremal function for B (and B2): value lambda on ~lambda^-p of the space."""
    if q.functional == "B1":
        raise DomainError("extremal_B applies to B or B2 queries")
    nq = q.normalized()
    _, branch = closed_form(q)
    if branch != "power":
        raise DomainError(
            f"extremal_B needs lambda > (F^p/f)^(1/(p-1)) = {q.power_threshold}, got {q.lam}"
        )
    p, f, lam = nq.p, nq.f, nq.lam
    target = lam**-p
    count = snap_down(target, tree)
    if count == 0:
        raise DomainError(f"flat measure {target} is below one leaf ({1 / tree.n_leaves}); deepen the tree")
    flat = count / tree.n_leaves
    top, rest = b_power_profile(p, f, lam, flat)
    values, nodes = assemble(tree, top, count, rest)
    ptop, prest = b_power_profile(p, f, lam)
    profile = concat(ptop, prest, tag="B_power")
    profile = ContinuousProfile(profile.tag, profile.pieces, {"A": prest.params["A"], "flat": target})
    return _finish(q, tree, "B_power", profile, values, nodes, target, "equiv")


def extremal_B1_power(q: BellmanQuery, tree: TreePartition) -> ExtremalRecipe:
    """Power-branch extremal function for B1: a t^(-1/p) profile cut into pieces averaging lambda."""
    if q.functional != "B1":
        raise DomainError("extremal_B1_power applies to B1 queries")
    nq = q.normalized()
    _, branch = closed_form(q)
    if branch != "power":
        raise DomainError(
            f"extremal_B1_power needs lambda >= (k^p F^p/f)^(1/(p-1)) = {q.power_threshold}, got {q.lam}"
        )
    p, f, lam = nq.p, nq.f, nq.lam
    k = nq.k
    target = k**p / lam**p
    if target >= 1:
        raise DomainError(f"need k^p/lambda^p < 1, got {target}")
    count = snap_down(target, tree)
    if count == 0:
        raise DomainError(f"flat measure {target} is below one leaf ({1 / tree.n_leaves}); deepen the tree")
    top, rest = b1_power_profile(p, f, lam, count / tree.n_leaves)
    values, nodes = assemble(tree, top, count, rest)
    ptop, prest = b1_power_profile(p, f, lam)
    profile = concat(ptop, prest, tag="B1_power")
    profile = ContinuousProfile(profile.tag, profile.pieces, {"A1": prest.params["A1"], "flat": target})
    recipe = _finish(q, tree, "B1_power", profile, values, nodes, target, "quasi")
    recipe.parts["top"] = ptop.scaled(q.F)
    recipe.parts["rest"] = prest.scaled(q.F)
    return recipe


def extremal_B1_middle(q: BellmanQuery, tree: TreePartition) -> ExtremalRecipe:
    """Middle-branch extremal function for B1: G cut into pieces averaging >= lambda on ~f/lambda."""
    if q.functional != "B1":
        raise DomainError("extremal_B1_middle applies to B1 queries")
    _, branch = closed_form(q)
    if branch != "f_over_lambda":
        raise DomainError(
            f"extremal_B1_middle needs f <= lambda < (k^p F^p/f)^(1/(p-1)) = {q.power_threshold}"
        )
    nq = q.normalized()
    p, f, lam = nq.p, nq.f, nq.lam
    target = f / lam
    count = snap_down(target, tree)
    if count == 0:
        raise DomainError(f"measure f/lambda = {target} is below one leaf; deepen the tree")
    G_snapped = middle_profile(p, f, count / tree.n_leaves)
    values, nodes = assemble(tree, G_snapped, count, None)
    G = middle_profile(p, f, target)
    recipe = _finish(q, tree, "B1_middle", G, values, nodes, target, "quasi")
    recipe.parts["G"] = G
    return recipe


def extremal_B_middle(q: BellmanQuery, tree: TreePartition) -> ExtremalRecipe:
    """Middle-branch witness for B: the constant f/K on nodes of measure K ~ f/lambda.

    Its equivalent norm is f K^(1/p - 1), which stays <= F exactly on the
    middle branch.
    """
    if q.functional == "B1":
        raise DomainError("extremal_B_middle applies to B or B2 queries")
    _, branch = closed_form(q)
    if branch != "f_over_lambda":
        raise DomainError("extremal_B_middle needs f < lambda <= (F^p/f)^(1/(p-1))")
    nq = q.normalized()
    f, lam = nq.f, nq.lam
    target = f / lam
    count = snap_down(target, tree)
    if count == 0:
        raise DomainError(f"measure f/lambda = {target} is below one leaf; deepen the tree")
    K = count / tree.n_leaves
    values, nodes = assemble(tree, constant(f / K, K), count, None)
    return _finish(q, tree, "B_middle", constant(lam, target, tag="block"), values, nodes, target, "equiv")


def extremal_trivial(q: BellmanQuery, tree: TreePartition) -> ExtremalRecipe:
    """Any phi with integral f >= lambda has M phi >= lambda everywhere (root average).

    The rest profile with an empty flat part is used so that the constrained
    norm equals F on the continuous profile.
    """
    nq = q.normalized()
    if q.functional == "B1":
        _, rest = b1_power_profile(nq.p, nq.f, nq.lam, 0.0)
        norm_name = "quasi"
    else:
        _, rest = b_power_profile(nq.p, nq.f, nq.lam, 0.0)
        norm_name = "equiv"
    values, _ = assemble(tree, None, 0, rest)
    return _finish(q, tree, "trivial", rest, values, [], 1.0, norm_name)


def extremal(q: BellmanQuery, tree: TreePartition) -> ExtremalRecipe:
    """Pick the construction matching the active branch of ``q``."""
    _, branch = closed_form(q)
    if branch == "one":
        return extremal_trivial(q, tree)
    if q.functional == "B1":
        return extremal_B1_power(q, tree) if branch == "power" else extremal_B1_middle(q, tree)
    return extremal_B(q, tree) if branch == "power" else extremal_B_middle(q, tree)
