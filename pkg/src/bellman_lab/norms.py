"""Weak-L^p quasi-norm and the equivalent norm for step functions.

Both quantities depend only on the decreasing rearrangement, so every routine
accepts either a ``StepFunction`` or a ``Rearrangement``. The sup over sets in
the equivalent norm reduces to prefixes of the rearrangement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvariantViolation
from .rearrange import Rearrangement, decreasing_rearrangement

SANDWICH_RTOL = 1e-12


@dataclass(frozen=True)
class NormResult:
    value: float
    witness: float


def _as_rearrangement(phi) -> Rearrangement:
    if isinstance(phi, Rearrangement):
        return phi
    return decreasing_rearrangement(phi)


def _check_p(p: float) -> None:
    if not p > 1:
        raise DomainError(f"p must be > 1, got {p}")


def conjugate_factor(p: float) -> float:
    """k = p / (p - 1)."""
    return p / (p - 1.0)


def quasi_norm(phi, p: float) -> NormResult:
    """sup over levels t of t * mu({phi > t})**(1/p).

    For a step function the sup is approached as t rises to a level value v,
    where the measure is mu({phi >= v}); the witness is that level.
    """
    _check_p(p)
    r = _as_rearrangement(phi)
    pos = r.values > 0
    if not np.any(pos):
        return NormResult(0.0, 0.0)
    cum = np.cumsum(r.masses)[pos]
    cand = r.values[pos] * cum ** (1.0 / p)
    i = int(np.argmax(cand))
    return NormResult(float(cand[i]), float(r.values[pos][i]))


def equiv_norm(phi, p: float) -> NormResult:
    """sup over s in (0, total] of s**(1/p - 1) * integral of the rearrangement over [0, s].

    On segment i the prefix integral is a + v*s with a >= 0, so the objective is
    s**(q-1) * (a + v*s), q = 1/p. Its only critical point,
    s = a (1 - q) / (v q), is checked along with the segment endpoints.
    """
    _check_p(p)
    r = _as_rearrangement(phi)
    if r.values.size == 0 or r.values[0] <= 0:
        return NormResult(0.0, 0.0)
    q = 1.0 / p
    cm = np.concatenate(([0.0], np.cumsum(r.masses)))
    ci = np.concatenate(([0.0], np.cumsum(r.values * r.masses)))
    v = r.values
    # prefix integral on segment i is intercept[i] + v[i] * s
    intercept = np.maximum(ci[:-1] - v * cm[:-1], 0.0)

    s_cand = [cm[1:]]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        crit = intercept * (1.0 - q) / (v * q)
    inside = (v > 0) & (crit > cm[:-1]) & (crit < cm[1:])
    s_cand.append(crit[inside])
    a_cand = [intercept, intercept[inside]]
    v_cand = [v, v[inside]]
    s = np.concatenate(s_cand)
    g = s ** (q - 1.0) * (np.concatenate(a_cand) + np.concatenate(v_cand) * s)
    i = int(np.argmax(g))
    return NormResult(float(g[i]), float(s[i]))


def norm_comparison_check(phi, p: float) -> dict:
    """Check quasi <= equiv <= k * quasi and report (equiv / quasi, k * quasi / equiv)."""
    k = conjugate_factor(p)
    qn = quasi_norm(phi, p).value
    en = equiv_norm(phi, p).value
    report = {"p": p, "k": k, "quasi_norm": qn, "equiv_norm": en, "ratios": None}
    if qn == 0.0 and en == 0.0:
        return report
    report["ratios"] = (en / qn, k * qn / en)
    if qn > en * (1 + SANDWICH_RTOL) or en > k * qn * (1 + SANDWICH_RTOL):
        raise InvariantViolation("norm sandwich quasi <= equiv <= k*quasi failed", report)
    return report


def batch_quasi_norm(sorted_rows: np.ndarray, p: float) -> np.ndarray:
    """Quasi-norm of each row of equal-mass leaf values already sorted decreasingly."""
    n = sorted_rows.shape[-1]
    s = np.arange(1, n + 1) / n
    return np.max(sorted_rows * s ** (1.0 / p), axis=-1)


def batch_equiv_norm(sorted_rows: np.ndarray, p: float) -> np.ndarray:
    """Equivalent norm of each row of equal-mass leaf values already sorted decreasingly.

    With equal masses every segment boundary is a leaf boundary and the
    per-segment maximum sits at an endpoint, so checking all leaf boundaries
    is exact.
    """
    n = sorted_rows.shape[-1]
    s = np.arange(1, n + 1) / n
    return np.max(np.cumsum(sorted_rows, axis=-1) / n * s ** (1.0 / p - 1.0), axis=-1)
