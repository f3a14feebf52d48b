"""Random sampling and local search over feasible step functions.

Feasible means: nonnegative leaf values with integral f and the norm
constraint of the functional (|||phi||| <= F for B, ||phi|| = F for B1,
|||phi||| = F for B2). Samples are projected onto the constraint by mixing
with a comonotone target, phi_s = (1 - s) phi + s g:

* g = the constant f (or, for the quasi-norm with f > F, the largest
  grid function t^(-1/p) scaled to integral f) when the norm is too big;
* g = a spike of height f n on the leaf where phi is largest when the norm
  is too small.

g has the same ordering as phi, so the decreasing rearrangement of phi_s is
the mix of the rearrangements. Both norms are a max of terms linear in s,
so the mixing weight has a closed form on presorted rows, and the integral
is preserved exactly for every s.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .bellman import BellmanQuery, closed_form, extremal
from .errors import DomainError, NumericError, SamplingError
from .maximal import batch_maximal
from .norms import batch_quasi_norm
from .partition import StepFunction, TreePartition, build_tree

CONSTRAINT_FOR = {"B": "norm_le_F", "B1": "norm_eq_F_quasi", "B2": "norm_eq_F_equiv"}
OPTIMIZERS = ("random", "coordinate_ascent", "anneal")
BOUND_TOL = 1e-12
LE_RTOL = 1e-12
EQ_RTOL = 1e-6
MAX_ATTEMPTS = 8
ROW_BUDGET = 2**22
MAXIMIZE_TAG = 0x6D6178


@dataclass(frozen=True)
class SearchConfig:
    query: BellmanQuery
    arity: int = 2
    depth: int = 10
    trials: int = 1000
    seed: int = 0
    optimizer: str = "coordinate_ascent"
    constraint: str | None = None
    moves: int = 50_000

    def __post_init__(self):
        if self.trials < 1:
            raise DomainError("trials must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise DomainError(f"optimizer must be one of {OPTIMIZERS}")
        if self.constraint is None:
            object.__setattr__(self, "constraint", CONSTRAINT_FOR[self.query.functional])
        if self.constraint not in CONSTRAINT_FOR.values():
            raise DomainError(f"unknown constraint mode {self.constraint!r}")

    @property
    def tree(self) -> TreePartition:
        return build_tree(self.arity, self.depth)

    def to_dict(self) -> dict:
        return {
            "query": self.query.to_dict(),
            "arity": self.arity,
            "depth": self.depth,
            "trials": self.trials,
            "seed": self.seed,
            "optimizer": self.optimizer,
            "constraint": self.constraint,
            "moves": self.moves,
        }


@dataclass
class SearchReport:
    best: float
    target: float
    violations: int
    certificate: StepFunction
    stats: dict = field(default_factory=dict)
    offending: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.target - self.best

    def to_dict(self) -> dict:
        return {
            "best": self.best,
            "target": self.target,
            "gap": self.gap,
            "violations": self.violations,
            "stats": self.stats,
            "offending": [json_values(v) for v in self.offending],
        }


def json_values(phi: StepFunction) -> dict:
    return {"arity": phi.partition.arity, "depth": phi.partition.depth,
            "values": [float(v) for v in phi.leaf_values]}


# ---------------------------------------------------------------------------
# raw samples


def _block_permute(values: np.ndarray, tree: TreePartition, rng: np.random.Generator) -> np.ndarray:
    level = int(rng.integers(0, tree.depth + 1))
    blocks = values.reshape(tree.arity**level, -1)
    return blocks[rng.permutation(blocks.shape[0])].ravel()


@functools.cache
def _cascade_index(arity: int, depth: int) -> np.ndarray:
    """Row m holds, for every leaf, the position of its depth-(m+1) ancestor's weight."""
    leaves = np.arange(arity**depth)
    offsets = np.cumsum([0] + [arity**m for m in range(1, depth)])
    return np.stack([offsets[m - 1] + leaves // arity ** (depth - m) for m in range(1, depth + 1)])


def raw_sample(rng: np.random.Generator, tree: TreePartition) -> np.ndarray:
    """A nonnegative, not identically zero leaf vector from a random family."""
    n = tree.n_leaves
    kind = int(rng.integers(0, 5))
    if kind == 0:
        out = rng.exponential(size=n) ** rng.uniform(0.5, 4.0)
    elif kind == 1:
        out = rng.uniform(0.0, 0.2) * rng.random(n)
        idx = rng.choice(n, size=min(n, int(rng.integers(1, 9))), replace=False)
        out[idx] += rng.exponential(size=idx.size) * rng.uniform(1.0, 100.0)
    elif kind == 2:
        # constant on a random set of equal-size nodes
        level = int(rng.integers(0, tree.depth + 1))
        width = tree.arity**level
        frac = math.exp(rng.uniform(math.log(1.0 / n), 0.0))
        count = min(width, max(1, round(frac * width)))
        chosen = rng.choice(width, size=count, replace=False)
        mask = np.zeros(width)
        mask[chosen] = 1.0
        out = np.repeat(mask, n // width)
        if rng.random() < 0.5:
            out = out + rng.uniform(0.0, 0.05) * rng.random(n)
    elif kind == 3:
        alpha = rng.uniform(0.05, 0.95)
        support = max(1, int(rng.uniform(0.02, 1.0) * n))
        out = np.zeros(n)
        out[:support] = ((np.arange(support) + 0.5) / n) ** -alpha
        out = _block_permute(out, tree, rng)
    else:
        # multiplicative cascade; larger powers give rougher splits
        a = tree.arity
        w = rng.standard_exponential(size=((n - 1) // (a - 1), a)) ** rng.uniform(0.3, 4.0) + 1e-12
        w *= a / w.sum(axis=1, keepdims=True)
        out = np.prod(w.ravel()[_cascade_index(a, tree.depth)], axis=0)
    if not np.any(out > 0):
        out[int(rng.integers(0, n))] = 1.0
    return out


# ---------------------------------------------------------------------------
# projection


def _norm_terms(sorted_rows: np.ndarray, p: float, constraint: str) -> np.ndarray:
    """Per-boundary terms whose row max is the constrained norm; linear in the rows."""
    n = sorted_rows.shape[-1]
    s = np.arange(1, n + 1) / n
    if constraint == "norm_eq_F_quasi":
        return sorted_rows * s ** (1.0 / p)
    return np.cumsum(sorted_rows, axis=-1) / n * s ** (1.0 / p - 1.0)


def _low_target(n: int, f: float, F: float, p: float, constraint: str) -> np.ndarray | None:
    """Sorted-decreasing target of integral f whose constrained norm is <= F, or None."""
    if f <= F:
        return np.full(n, f)
    if constraint == "norm_eq_F_quasi":
        g = (np.arange(1, n + 1) / n) ** (-1.0 / p)
        g *= f / g.mean()
        if batch_quasi_norm(g[None, :], p)[0] <= F:
            return g
    return None


def _crossing(A: np.ndarray, C: np.ndarray, F: float, high: bool) -> np.ndarray:
    """Mixing weight where max_j (1 - s) A_j + s C_j meets F.

    The row max is convex and piecewise linear in s. Going down from above
    F, the first s with every term <= F is the largest single-term crossing;
    going up from below, the first s with some term >= F is the smallest.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = (F - A) / (C - A)
    if high:
        cross = np.where(C > F, cross, np.inf)
        return np.clip(cross.min(axis=1), 0.0, 1.0)
    cross = np.where(A > F, cross, 0.0)
    return np.clip(cross.max(axis=1), 0.0, 1.0)


def project_rows(rows: np.ndarray, q: BellmanQuery, constraint: str) -> tuple[np.ndarray, np.ndarray]:
    """Project rows (integral already f) onto the constraint; returns (rows, ok mask)."""
    B, n = rows.shape
    p, f, F = q.p, q.f, q.F
    order = np.argsort(-rows, axis=1)
    S = np.take_along_axis(rows, order, axis=1)
    terms = _norm_terms(S, p, constraint)
    e0 = terms.max(axis=1)
    low = _low_target(n, f, F, p, constraint)
    spike = np.zeros(n)
    spike[0] = f * n
    spike_norm = f * n ** (1.0 - 1.0 / p)

    if constraint == "norm_le_F":
        go_low = e0 > F * (1 + LE_RTOL)
        go_high = np.zeros(B, dtype=bool)
    else:
        go_low = e0 > F
        go_high = e0 < F
    ok = np.ones(B, dtype=bool)
    if low is None:
        ok &= ~go_low
    if spike_norm < F:
        ok &= ~go_high

    out = rows.copy()
    out_sorted = S.copy()
    for high, sel in ((False, go_low & ok), (True, go_high & ok)):
        idx = np.flatnonzero(sel)
        if idx.size == 0:
            continue
        g = spike if high else low
        g_terms = _norm_terms(g[None, :], p, constraint)
        s = _crossing(terms[idx], np.broadcast_to(g_terms, (idx.size, n)), F, high)[:, None]
        out_sorted[idx] = np.maximum((1.0 - s) * S[idx] + s * g, 0.0)
        mixed = np.empty((idx.size, n))
        np.put_along_axis(mixed, order[idx], out_sorted[idx], axis=1)
        out[idx] = mixed
    final = _norm_terms(out_sorted, p, constraint).max(axis=1)
    if constraint == "norm_le_F":
        ok &= final <= F * (1 + LE_RTOL)
    else:
        ok &= np.abs(final - F) <= EQ_RTOL * F
    return out, ok


def _trial_rng(seed: int, trial: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial, attempt]))


def sample_batch(config: SearchConfig, trials: range) -> tuple[np.ndarray, np.ndarray, int]:
    """Feasible samples for the given trial indices.

    Returns (rows, trial indices kept, rejections). Each trial's stream is
    derived from (seed, trial, attempt) only, so results do not depend on
    batching.
    """
    tree = config.tree
    q = config.query
    n = tree.n_leaves
    pending = list(trials)
    attempt = 0
    kept_rows, kept_idx = [], []
    rejected = 0
    while pending and attempt < MAX_ATTEMPTS:
        raw = np.empty((len(pending), n))
        for r, t in enumerate(pending):
            raw[r] = raw_sample(_trial_rng(config.seed, t, attempt), tree)
        raw *= q.f / raw.mean(axis=1, keepdims=True)
        rows, ok = project_rows(raw, q, config.constraint)
        kept_rows.append(rows[ok])
        kept_idx.extend(t for t, good in zip(pending, ok) if good)
        rejected += int(np.count_nonzero(~ok))
        pending = [t for t, good in zip(pending, ok) if not good]
        attempt += 1
    rows = np.concatenate(kept_rows) if kept_rows else np.empty((0, n))
    idx = np.asarray(kept_idx, dtype=np.int64)
    order = np.argsort(idx, kind="stable")
    return rows[order], idx[order], rejected


def sample_feasible(config: SearchConfig, rng: np.random.Generator) -> StepFunction:
    """One feasible sample drawn from ``rng``; raises SamplingError after MAX_ATTEMPTS rejections."""
    tree = config.tree
    q = config.query
    for _ in range(MAX_ATTEMPTS):
        raw = raw_sample(rng, tree)
        raw *= q.f / raw.mean()
        rows, ok = project_rows(raw[None, :], q, config.constraint)
        if ok[0]:
            return StepFunction(tree, rows[0])
    raise SamplingError(f"no feasible sample in {MAX_ATTEMPTS} attempts for {q}")


# ---------------------------------------------------------------------------
# verification and search


def _objective_rows(rows: np.ndarray, tree: TreePartition, lam: float) -> tuple[np.ndarray, np.ndarray]:
    M = batch_maximal(rows, tree)
    return np.count_nonzero(M >= lam, axis=1) / tree.n_leaves, M


def _batches(total: int, n_leaves: int) -> list[range]:
    size = max(1, ROW_BUDGET // n_leaves)
    return [range(a, min(a + size, total)) for a in range(0, total, size)]


def verify_upper_bound(config: SearchConfig) -> SearchReport:
    """Check mu({M phi >= lambda}) <= closed form over ``trials`` feasible samples.

    Also records, per sample, the weak type (1,1) inequality and the weak-L^p
    quasi-norm of M phi against F (B, B2) or k F (B1).
    """
    tree = config.tree
    q = config.query
    target, branch = closed_form(q)
    norm_cap = q.k * q.F if q.functional == "B1" else q.F
    n = tree.n_leaves
    best, best_row = -1.0, None
    violations = weak_violations = norm_violations = 0
    offending = []
    total_kept = total_rejected = 0
    obj_sum = 0.0
    max_mnorm = 0.0
    for trials in _batches(config.trials, n):
        rows, idx, rejected = sample_batch(config, trials)
        total_rejected += rejected
        if rows.shape[0] == 0:
            continue
        total_kept += rows.shape[0]
        obj, M = _objective_rows(rows, tree, q.lam)
        obj_sum += float(obj.sum())
        bad = obj > target + BOUND_TOL
        violations += int(np.count_nonzero(bad))
        for r in np.flatnonzero(bad)[: 5 - len(offending)]:
            offending.append(StepFunction(tree, rows[r]))
        mask = M >= q.lam
        lhs = np.count_nonzero(mask, axis=1) / n
        rhs = np.where(mask, rows, 0.0).sum(axis=1) / n / q.lam
        weak_violations += int(np.count_nonzero(lhs > rhs * (1 + 1e-12)))
        mnorm = batch_quasi_norm(np.sort(M, axis=1)[:, ::-1], q.p)
        max_mnorm = max(max_mnorm, float(mnorm.max()))
        norm_violations += int(np.count_nonzero(mnorm > norm_cap + 1e-9))
        i = int(np.argmax(obj))
        if obj[i] > best:
            best, best_row = float(obj[i]), rows[i]
    if best_row is None:
        raise SamplingError(f"all {config.trials} trials were rejected")
    stats = {
        "branch": branch,
        "accepted": total_kept,
        "rejected": total_rejected,
        "mean_objective": obj_sum / total_kept,
        "weak_type_violations": weak_violations,
        "max_maximal_quasi_norm": max_mnorm,
        "maximal_quasi_norm_cap": norm_cap,
        "maximal_quasi_norm_violations": norm_violations,
    }
    return SearchReport(best, target, violations, StepFunction(tree, best_row), stats, offending)


def _project_one(values: np.ndarray, q: BellmanQuery, constraint: str) -> np.ndarray | None:
    rows, ok = project_rows(values[None, :], q, constraint)
    return rows[0] if ok[0] else None


def _concentrate_within(values: np.ndarray, tree: TreePartition, node, q: BellmanQuery,
                        constraint: str) -> np.ndarray | None:
    """Raise the norm to F by mixing inside one node toward a spike on its first leaf.

    The node's mass is preserved, so its average (and every level set that
    contains it whole) is unchanged. The norm is continuous in the mixing
    weight, so bisection finds the crossing.
    """
    sl = tree.leaf_slice(node)
    part = values[sl]
    spike = np.zeros_like(part)
    spike[0] = part.sum()

    def norm_at(s):
        row = values.copy()
        row[sl] = (1.0 - s) * part + s * spike
        return _norm_terms(np.sort(row)[None, ::-1], q.p, constraint).max(), row

    if not norm_at(0.0)[0] < q.F < norm_at(1.0)[0]:
        return None
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if norm_at(mid)[0] < q.F:
            lo = mid
        else:
            hi = mid
    value, row = norm_at(hi)
    return row if abs(value - q.F) <= EQ_RTOL * q.F else None


def _recipe_start(q: BellmanQuery, tree: TreePartition, constraint: str):
    """The discretized extremal function moved onto the constraint, or None."""
    try:
        recipe = extremal(q, tree)
    except (DomainError, NumericError):
        return None, None
    values = recipe.step.leaf_values
    if constraint != "norm_le_F" and recipe.flat_nodes:
        current = _norm_terms(np.sort(values)[None, ::-1], q.p, constraint).max()
        if current < q.F:
            raised = _concentrate_within(values, tree, recipe.flat_nodes[0], q, constraint)
            if raised is not None:
                return recipe.construction, raised
    return recipe.construction, _project_one(values, q, constraint)


def _propose(values: np.ndarray, tree: TreePartition, rng: np.random.Generator,
             q: BellmanQuery, constraint: str) -> np.ndarray | None:
    n = tree.n_leaves
    kind = rng.random()
    new = values.copy()
    if kind < 0.3:
        i, j = rng.integers(0, n, size=2)
        new[i], new[j] = new[j], new[i]
        return new
    if kind < 0.5:
        level = int(rng.integers(1, tree.depth + 1))
        width = n // tree.arity**level
        a, b = rng.integers(0, tree.arity**level, size=2)
        sa, sb = slice(a * width, (a + 1) * width), slice(b * width, (b + 1) * width)
        new[sa], new[sb] = values[sb], values[sa]
        return new
    if kind < 0.8:
        i, j = rng.integers(0, n, size=2)
        delta = rng.random() * new[i]
        new[i] -= delta
        new[j] += delta
    else:
        level = int(rng.integers(1, tree.depth + 1))
        width = n // tree.arity**level
        a = int(rng.integers(0, tree.arity**level))
        sl = slice(a * width, (a + 1) * width)
        new[sl] = new[sl].mean()
    return _project_one(new, q, constraint)


def _local_search(start: np.ndarray, config: SearchConfig, moves: int, rng: np.random.Generator,
                  target: float) -> tuple[np.ndarray, float, list[float]]:
    tree = config.tree
    q = config.query
    cur = start
    cur_obj = float(_objective_rows(cur[None, :], tree, q.lam)[0][0])
    best, best_obj = cur, cur_obj
    history = [best_obj]
    temp = target / 10.0
    anneal = config.optimizer == "anneal"
    for step in range(1, moves + 1):
        if best_obj >= target:
            break
        cand = _propose(cur, tree, rng, q, config.constraint)
        if cand is not None:
            obj = float(_objective_rows(cand[None, :], tree, q.lam)[0][0])
            delta = obj - cur_obj
            if delta >= 0 or (anneal and rng.random() < math.exp(delta / temp)):
                cur, cur_obj = cand, obj
                if obj > best_obj:
                    best, best_obj = cand, obj
        if anneal and step % 100 == 0:
            temp *= 0.95
        if step % 1000 == 0:
            history.append(best_obj)
    history.append(best_obj)
    return best, best_obj, history


def maximize(config: SearchConfig) -> SearchReport:
    """Approach the Bellman value from below.

    Starts from the best random sample and, when a construction exists for
    the active branch and can be projected onto the constraint, from the
    discretized extremal function. The move budget is split between starts.
    """
    if config.optimizer == "random":
        raise DomainError("maximize needs optimizer coordinate_ascent or anneal")
    q = config.query
    tree = config.tree
    target, branch = closed_form(q)
    sampled = verify_upper_bound(config)
    starts = [("random", sampled.certificate.leaf_values)]
    name, projected = _recipe_start(q, tree, config.constraint)
    if projected is not None:
        starts.append((name, projected))
    budget = config.moves // len(starts)
    best_obj, best_row, per_start = -1.0, None, {}
    for k, (name, row) in enumerate(starts):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, MAXIMIZE_TAG, k]))
        row, obj, history = _local_search(row, config, budget, rng, target)
        per_start[name] = {"best": obj, "history": history}
        if obj > best_obj:
            best_obj, best_row = obj, row
    violations = int(best_obj > target + BOUND_TOL) + sampled.violations
    stats = {
        "branch": branch,
        "sampling": sampled.stats,
        "sampling_best": sampled.best,
        "starts": per_start,
        "moves_per_start": budget,
    }
    return SearchReport(best_obj, target, violations, StepFunction(tree, best_row), stats, sampled.offending)
