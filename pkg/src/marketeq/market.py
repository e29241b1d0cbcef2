"""Multi-commodity two-sided market model.

Each commodity ``s`` has traders offering ``x_is`` in ``[lower, upper]`` at
price ``g_is(w)`` and buyers bidding ``y_js`` in ``[lower, upper]`` at price
``h_js(w)``, tied by the balance ``sum(x) - sum(y) = b_s``.  A point is an
equilibrium when some per-commodity price separates the active bounds; the
same points solve the variational inequality evaluated by
:func:`vi_residual`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "INF",
    "Participant",
    "CommodityBlock",
    "Point",
    "MarketProblem",
    "PriceInterval",
    "Violation",
    "EquilibriumReport",
    "InfeasibleBlockError",
    "active_tolerance",
    "project_to_block",
    "vi_residual",
    "verify_equilibrium",
]

INF = math.inf


class InfeasibleBlockError(ValueError):
    """The balance equation cannot be met inside the participant boxes."""


def active_tolerance(bound: float) -> float:
    """Distance within which a variable counts as sitting on ``bound``."""
    return 1e-8 * (1.0 + abs(bound))


@dataclass(frozen=True)
class Participant:
    lower: float = 0.0
    upper: float = INF
    label: str = ""

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("participant bounds must not be NaN")
        if self.lower == -INF:
            raise ValueError("lower bounds must be finite")
        if self.lower > self.upper:
            raise ValueError(f"{self.label or 'participant'}: lower bound {self.lower} "
                             f"exceeds upper bound {self.upper}")


@dataclass(frozen=True)
class CommodityBlock:
    """Traders and buyers of one commodity plus its external excess demand."""

    traders: tuple[Participant, ...]
    buyers: tuple[Participant, ...]
    excess_demand: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "traders", tuple(self.traders))
        object.__setattr__(self, "buyers", tuple(self.buyers))
        lo = sum(p.lower for p in self.traders) - sum(p.upper for p in self.buyers)
        hi = sum(p.upper for p in self.traders) - sum(p.lower for p in self.buyers)
        b = self.excess_demand
        if not (lo <= b <= hi):
            raise InfeasibleBlockError(
                f"balance sum(x) - sum(y) = {b} unreachable; attainable range [{lo}, {hi}]")

    @property
    def size(self) -> tuple[int, int]:
        return len(self.traders), len(self.buyers)

    def bounds(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        xl = np.array([p.lower for p in self.traders], dtype=float)
        xu = np.array([p.upper for p in self.traders], dtype=float)
        yl = np.array([p.lower for p in self.buyers], dtype=float)
        yu = np.array([p.upper for p in self.buyers], dtype=float)
        return xl, xu, yl, yu


@dataclass
class Point:
    """Offers ``x`` and bids ``y`` as flat arrays (commodity-major order)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)

    def copy(self) -> Point:
        return Point(self.x.copy(), self.y.copy())

    def __add__(self, other: Point) -> Point:
        return Point(self.x + other.x, self.y + other.y)

    def __sub__(self, other: Point) -> Point:
        return Point(self.x - other.x, self.y - other.y)

    def __mul__(self, t: float) -> Point:
        return Point(self.x * t, self.y * t)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.sqrt(self.x @ self.x + self.y @ self.y))

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> Point:
        return cls(data["x"], data["y"])


PriceEvaluator = Callable[[Point], "tuple[np.ndarray, np.ndarray]"]


@dataclass(frozen=True)
class MarketProblem:
    """Commodity blocks and a price evaluator ``w -> (g, h)``.

    ``prices`` receives the full point and returns trader prices and buyer
    prices as flat arrays aligned with :class:`Point`.
    """

    blocks: tuple[CommodityBlock, ...]
    prices: PriceEvaluator = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @cached_property
    def trader_offsets(self) -> np.ndarray:
        return np.cumsum([0] + [len(b.traders) for b in self.blocks])

    @cached_property
    def buyer_offsets(self) -> np.ndarray:
        return np.cumsum([0] + [len(b.buyers) for b in self.blocks])

    @property
    def n_traders(self) -> int:
        return int(self.trader_offsets[-1])

    @property
    def n_buyers(self) -> int:
        return int(self.buyer_offsets[-1])

    def block_slices(self, s: int) -> tuple[slice, slice]:
        return (slice(self.trader_offsets[s], self.trader_offsets[s + 1]),
                slice(self.buyer_offsets[s], self.buyer_offsets[s + 1]))

    def check_dims(self, w: Point) -> None:
        if w.x.shape != (self.n_traders,) or w.y.shape != (self.n_buyers,):
            raise ValueError(f"point has shape x{w.x.shape}, y{w.y.shape}; problem expects "
                             f"x({self.n_traders},), y({self.n_buyers},)")

    @classmethod
    def separable(cls, blocks: Sequence[CommodityBlock], trader_prices: Sequence,
                  buyer_prices: Sequence) -> MarketProblem:
        """Build a problem whose prices depend on each participant's own volume."""
        gs, hs = list(trader_prices), list(buyer_prices)

        def prices(w: Point):
            g = np.array([float(f(v)) for f, v in zip(gs, w.x)])
            h = np.array([float(f(v)) for f, v in zip(hs, w.y)])
            return g, h

        problem = cls(tuple(blocks), prices)
        if len(gs) != problem.n_traders or len(hs) != problem.n_buyers:
            raise ValueError("one price function per participant is required")
        return problem


def project_to_block(block: CommodityBlock, candidate: Point) -> Point:
    """Euclidean projection onto the block's feasible set.

    The minimizer has the form ``x = clip(cx - nu)``, ``y = clip(cy + nu)``
    for one balance multiplier ``nu``.  The residual of the balance equation
    is piecewise linear and non-increasing in ``nu``; we bisect over its
    breakpoints and solve the final linear piece exactly.
    """
    xl, xu, yl, yu = block.bounds()
    cx, cy = candidate.x, candidate.y
    if cx.shape != xl.shape or cy.shape != yl.shape:
        raise ValueError("candidate does not match block dimensions")
    b = block.excess_demand

    def residual(nu):
        nu = np.asarray(nu, dtype=float)[..., None]
        x = np.clip(cx - nu, xl, xu)
        y = np.clip(cy + nu, yl, yu)
        return x.sum(-1) - y.sum(-1) - b

    def free_count(nu):
        fx = (cx - nu > xl) & (cx - nu < xu)
        fy = (cy + nu > yl) & (cy + nu < yu)
        return int(fx.sum() + fy.sum())

    bps = np.concatenate([cx - xu, cx - xl, yl - cy, yu - cy])
    bps = np.unique(bps[np.isfinite(bps)])
    if bps.size == 0:
        return Point(cx.copy(), cy.copy())
    r = residual(bps)
    hit = np.flatnonzero(r == 0.0)
    if hit.size:
        nu = bps[hit[0]]
    else:
        k = int(np.searchsorted(-r, 0.0))  # first breakpoint with r < 0
        if k == 0:
            ref = bps[0]
            nu = ref + r[0] / max(free_count(ref - 1.0), 1)
        elif k == bps.size:
            ref = bps[-1]
            nu = ref + r[-1] / max(free_count(ref + 1.0), 1)
        else:
            a, c = bps[k - 1], bps[k]
            nu = a + r[k - 1] * (c - a) / (r[k - 1] - r[k])
    return Point(np.clip(cx - nu, xl, xu), np.clip(cy + nu, yl, yu))


def vi_residual(problem: MarketProblem, w: Point, probe: Point) -> float:
    """Left-hand side of the market variational inequality at ``w`` against ``probe``."""
    problem.check_dims(w)
    problem.check_dims(probe)
    g, h = problem.prices(w)
    return float(g @ (probe.x - w.x) - h @ (probe.y - w.y))


@dataclass(frozen=True)
class PriceInterval:
    lo: float
    hi: float

    def is_empty(self, tol: float = 0.0) -> bool:
        return self.lo > self.hi + tol

    def __contains__(self, price: float) -> bool:
        return self.lo <= price <= self.hi

    @property
    def price(self) -> float:
        """A representative price: the midpoint, or the finite end."""
        if math.isfinite(self.lo) and math.isfinite(self.hi):
            return 0.5 * (self.lo + self.hi)
        return self.lo if math.isfinite(self.lo) else self.hi


@dataclass(frozen=True)
class Violation:
    commodity: int
    kind: str
    margin: float
    lo_label: str = ""
    hi_label: str = ""
    message: str = ""


@dataclass(frozen=True)
class EquilibriumReport:
    """Outcome of an equilibrium check.

    ``intervals`` holds the recovered price interval per commodity (possibly
    empty); ``violation`` is the first failed condition, if any.
    """

    ok: bool
    intervals: tuple[PriceInterval, ...] = ()
    violation: Violation | None = None
    form: str = "kkt"

    def __bool__(self) -> bool:
        return self.ok

    @property
    def prices(self) -> np.ndarray:
        return np.array([iv.price for iv in self.intervals])


def _feasibility_violation(problem: MarketProblem, w: Point, tol: float) -> Violation | None:
    for s, block in enumerate(problem.blocks):
        sx, sy = problem.block_slices(s)
        xl, xu, yl, yu = block.bounds()
        x, y = w.x[sx], w.y[sy]
        lows = np.concatenate([xl - x, yl - y])
        highs = np.concatenate([x - xu, y - yu])
        box = max(lows.max(initial=-INF), highs.max(initial=-INF))
        if box > tol:
            return Violation(s, "box", float(box), message="variable outside its bounds")
        scale = 1.0 + abs(block.excess_demand) + x.sum() + y.sum()
        bal = abs(x.sum() - y.sum() - block.excess_demand)
        if bal > tol * scale:
            return Violation(s, "balance", float(bal), message="balance equation violated")
    return None


def verify_equilibrium(problem: MarketProblem, w: Point, tol: float = 1e-8,
                       active_tol: float | None = None) -> EquilibriumReport:
    """Recover the per-commodity price intervals and test the equilibrium conditions.

    Parameters
    ----------
    problem : MarketProblem
    w : Point
        Candidate point, feasible up to ``tol``.
    tol : float
        Slack allowed between the largest lower price bound and the smallest
        upper one.
    active_tol : float, optional
        Distance at which a variable counts as sitting on a bound.  Defaults
        to ``1e-8 * (1 + |bound|)``.

    Returns
    -------
    EquilibriumReport
        ``ok`` is true when every interval is nonempty up to ``tol``.
    """
    problem.check_dims(w)
    bad = _feasibility_violation(problem, w, max(tol, 1e-10))
    if bad is not None:
        return EquilibriumReport(False, (), bad)
    g, h = problem.prices(w)
    intervals: list[PriceInterval] = []
    first: Violation | None = None

    def near(v, bound):
        if not math.isfinite(bound):
            return False
        atol = active_tolerance(bound) if active_tol is None else max(active_tol,
                                                                      active_tolerance(bound))
        return abs(v - bound) <= atol

    for s, block in enumerate(problem.blocks):
        sx, sy = problem.block_slices(s)
        lo, hi = -INF, INF
        lo_lab = hi_lab = ""
        for i, p in enumerate(block.traders):
            v, price = w.x[sx][i], g[sx][i]
            at_lo, at_hi = near(v, p.lower), near(v, p.upper)
            if at_lo and at_hi:
                continue
            if not at_lo and price > lo:      # g <= price at upper bound / interior
                lo, lo_lab = price, p.label
            if not at_hi and price < hi:      # g >= price at lower bound / interior
                hi, hi_lab = price, p.label
        for j, p in enumerate(block.buyers):
            v, price = w.y[sy][j], h[sy][j]
            at_lo, at_hi = near(v, p.lower), near(v, p.upper)
            if at_lo and at_hi:
                continue
            if not at_hi and price > lo:      # h <= price at lower bound / interior
                lo, lo_lab = price, p.label
            if not at_lo and price < hi:      # h >= price at upper bound / interior
                hi, hi_lab = price, p.label
        iv = PriceInterval(float(lo), float(hi))
        intervals.append(iv)
        if first is None and iv.is_empty(tol):
            first = Violation(s, "price", float(lo - hi), lo_lab, hi_lab,
                              f"commodity {s}: price must be >= {lo:.6g} ({lo_lab}) "
                              f"and <= {hi:.6g} ({hi_lab})")
    return EquilibriumReport(first is None, tuple(intervals), first)
