"""Continuous decreasing profiles on [0, 1] with closed-form antiderivatives.

A profile is a list of contiguous pieces starting at 0; piece values are
``a * (t + shift)**(-e) + c0 + c1 * t`` and the profile is 0 after the last
piece. Every profile built here is nonincreasing, so it is its own
decreasing rearrangement and its norms and level sets come straight from
the pieces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import DomainError


@dataclass(frozen=True)
class Piece:
    start: float
    end: float
    a: float = 0.0
    shift: float = 0.0
    e: float = 0.0
    c0: float = 0.0
    c1: float = 0.0

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = self.c0 + self.c1 * t
        if self.a:
            with np.errstate(divide="ignore"):
                out = out + self.a * (t + self.shift) ** (-self.e)
        return out

    def antiderivative(self, t):
        t = np.asarray(t, dtype=float)
        out = self.c0 * t + 0.5 * self.c1 * t * t
        if self.a:
            out = out + self.a * (t + self.shift) ** (1.0 - self.e) / (1.0 - self.e)
        return out

    def integral(self, lo, hi):
        return self.antiderivative(hi) - self.antiderivative(lo)

    def crossing(self, theta: float) -> float:
        """Point in [start, end] where the (decreasing) piece falls to ``theta``."""
        if self.a and not self.c1 and theta > self.c0:
            t = (self.a / (theta - self.c0)) ** (1.0 / self.e) - self.shift
            return min(max(t, self.start), self.end)
        lo = self.start if self.value(self.start) < math.inf else self.start + 1e-300
        return brentq(lambda t: float(self.value(t)) - theta, lo, self.end, xtol=1e-15, rtol=1e-15)


@dataclass(frozen=True)
class ContinuousProfile:
    tag: str
    pieces: tuple[Piece, ...]
    params: dict = field(default_factory=dict)

    @property
    def support(self) -> float:
        return self.pieces[-1].end if self.pieces else 0.0

    def scaled(self, c: float) -> "ContinuousProfile":
        pieces = tuple(replace(pc, a=pc.a * c, c0=pc.c0 * c, c1=pc.c1 * c) for pc in self.pieces)
        return replace(self, pieces=pieces, params={**self.params, "scale": c})

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        last = len(self.pieces) - 1
        for i, pc in enumerate(self.pieces):
            mask = (t >= pc.start) & ((t < pc.end) if i < last else (t <= pc.end))
            if np.any(mask):
                out[mask] = pc.value(t[mask])
        return out

    def cumulative(self, s):
        """Integral of the profile over [0, s]."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for pc in self.pieces:
            hi = np.clip(s, pc.start, pc.end)
            part = np.where(hi > pc.start, pc.antiderivative(hi) - pc.antiderivative(pc.start), 0.0)
            out = out + part
        return out

    def integral(self) -> float:
        return math.fsum(float(pc.integral(pc.start, pc.end)) for pc in self.pieces)

    def cell_averages(self, n_cells: int, cell_mass: float) -> np.ndarray:
        """Averages over [i h, (i + 1) h] for i < n_cells, h = cell_mass."""
        edges = np.arange(n_cells + 1) * cell_mass
        return np.diff(self.cumulative(edges)) / cell_mass

    def distribution(self, theta: float) -> float:
        """Lebesgue measure of {profile > theta}."""
        for pc in self.pieces:
            right = float(pc.value(np.nextafter(pc.end, pc.start)))
            if right > theta:
                continue
            left = float(pc.value(pc.start))
            if left <= theta:
                return pc.start
            return pc.crossing(theta)
        return self.support if theta >= 0 else 1.0

    def _sup(self, objective, p: float) -> tuple[float, float]:
        best_val, best_t = 0.0, 0.0
        for pc in self.pieces:
            lo = max(pc.start, 1e-300)
            hi = pc.end
            if hi <= lo:
                continue
            grid = np.unique(np.concatenate((
                np.geomspace(max(lo, hi * 1e-14), hi, 512),
                np.linspace(lo, hi, 513)[1:],
            )))
            vals = objective(pc, grid)
            i = int(np.argmax(vals))
            if vals[i] > best_val:
                best_val, best_t = float(vals[i]), float(grid[i])
            a = grid[max(i - 1, 0)]
            b = grid[min(i + 1, grid.size - 1)]
            if b > a:
                res = minimize_scalar(lambda t: -float(objective(pc, np.array([t]))[0]),
                                      bounds=(a, b), method="bounded",
                                      options={"xatol": 1e-15 * max(b, 1e-300)})
                if -res.fun > best_val:
                    best_val, best_t = float(-res.fun), float(res.x)
        return best_val, best_t

    def _limit_at_zero(self, p: float, cumulative: bool) -> float:
        """Limit of profile(t) t^(1/p) (or cumulative(t) t^(1/p - 1)) as t -> 0+."""
        if not self.pieces:
            return 0.0
        pc = self.pieces[0]
        if pc.start != 0 or pc.shift != 0 or not pc.a or pc.e < 1.0 / p:
            return 0.0
        if pc.e > 1.0 / p:
            return math.inf
        return pc.a / (1.0 - pc.e) if cumulative else pc.a

    def quasi_norm(self, p: float) -> tuple[float, float]:
        """sup over t of profile(t-) * t**(1/p), with the maximising t (0 for a limit at 0+)."""
        if p <= 1:
            raise DomainError("p must be > 1")
        best = self._sup(lambda pc, t: pc.value(t) * t ** (1.0 / p), p)
        lim = self._limit_at_zero(p, cumulative=False)
        return (lim, 0.0) if lim >= best[0] else best

    def equiv_norm(self, p: float) -> tuple[float, float]:
        """sup over s of s**(1/p - 1) * cumulative(s), with the maximising s (0 for a limit at 0+)."""
        if p <= 1:
            raise DomainError("p must be > 1")
        best = self._sup(lambda pc, t: self.cumulative(t) * t ** (1.0 / p - 1.0), p)
        lim = self._limit_at_zero(p, cumulative=True)
        return (lim, 0.0) if lim >= best[0] else best


def constant(level: float, length: float, tag: str = "flat") -> ContinuousProfile:
    return ContinuousProfile(tag, (Piece(0.0, length, c0=level),), {"level": level, "length": length})


def concat(*profiles: ContinuousProfile, tag: str) -> ContinuousProfile:
    """Place profiles one after another; each piece is shifted to its new start."""
    pieces, offset = [], 0.0
    for prof in profiles:
        for pc in prof.pieces:
            pieces.append(replace(
                pc,
                start=pc.start + offset,
                end=pc.end + offset,
                shift=pc.shift - offset,
                c0=pc.c0 - pc.c1 * offset,
            ))
        offset += prof.support
    return ContinuousProfile(tag, tuple(pieces))
