"""Wireless resource allocation as a single-commodity two-sided market.

Providers offer ``x_i`` in ``[0, cap_i]`` at price
``g_i(x) = b_i(x_i) + l_i(x)``, where ``l_i`` is the congestion dis-utility
of joint consumption.  User classes bid ``y_j`` in ``[0, cap_j]`` with
dis-utility ``h_j(y_j)``; total offer equals total bid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .costs import CostVector, ScalarCostFn
from .market import INF, CommodityBlock, MarketProblem, Participant, Point

__all__ = [
    "Provider",
    "UserClass",
    "WirelessProblem",
    "PenaltyConfig",
    "to_market",
    "penalized_gradient",
    "penalty_value",
    "constraint_violation",
]


@dataclass(frozen=True)
class Provider:
    price: ScalarCostFn
    cap: float = INF


@dataclass(frozen=True)
class UserClass:
    disutility: ScalarCostFn
    cap: float


@dataclass(frozen=True)
class WirelessProblem:
    """Providers, user classes and a congestion term.

    ``congestion`` is either a scalar ``c`` giving ``l_i(x) = c * sum(x)``
    for every provider, or a callable returning the vector ``l(x)``.  The
    scalar form is the gradient of ``(c / 2) * sum(x) ** 2``; a callable
    needs a matching ``potential`` (with ``l = grad potential``) before the
    descent solvers accept it.
    """

    providers: tuple[Provider, ...]
    users: tuple[UserClass, ...]
    congestion: float | Callable[[np.ndarray], np.ndarray] = 0.0
    potential: Callable[[np.ndarray], float] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "providers", tuple(self.providers))
        object.__setattr__(self, "users", tuple(self.users))
        if not self.providers or not self.users:
            raise ValueError("need at least one provider and one user class")
        for u in self.users:
            if not (0 <= u.cap < INF):
                raise ValueError("user class caps must be finite and nonnegative")
        for p in self.providers:
            if not p.cap >= 0:
                raise ValueError("provider caps must be nonnegative")

    @property
    def n_providers(self) -> int:
        return len(self.providers)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def integrable(self) -> bool:
        return not callable(self.congestion) or self.potential is not None

    @cached_property
    def base_prices(self) -> CostVector:
        return CostVector([p.price for p in self.providers])

    @cached_property
    def demand_fns(self) -> CostVector:
        return CostVector([u.disutility for u in self.users])

    @cached_property
    def provider_caps(self) -> np.ndarray:
        return np.array([p.cap for p in self.providers], dtype=float)

    @cached_property
    def caps(self) -> np.ndarray:
        return np.array([u.cap for u in self.users], dtype=float)

    def congestion_terms(self, x: np.ndarray) -> np.ndarray:
        if callable(self.congestion):
            return np.asarray(self.congestion(x), dtype=float)
        return np.full(x.shape, float(self.congestion) * x.sum())

    def prices(self, x: np.ndarray) -> np.ndarray:
        """Provider prices ``g_i(x) = b_i(x_i) + l_i(x)``."""
        return self.base_prices(x) + self.congestion_terms(x)

    def potential_value(self, x: np.ndarray) -> float:
        """``mu(x)`` whose gradient is :meth:`prices`."""
        base = float(self.base_prices.integral(x).sum())
        if callable(self.congestion):
            if self.potential is None:
                raise ValueError("non-integrable congestion: supply a potential")
            return base + float(self.potential(x))
        return base + 0.5 * float(self.congestion) * float(x.sum()) ** 2

    def zero_point(self) -> Point:
        return Point(np.zeros(self.n_providers), np.zeros(self.n_users))

    def check_dims(self, w: Point) -> None:
        if w.x.shape != (self.n_providers,) or w.y.shape != (self.n_users,):
            raise ValueError(f"point has shape x{w.x.shape}, y{w.y.shape}; expected "
                             f"x({self.n_providers},), y({self.n_users},)")

    def feasibility_error(self, w: Point, enforce_provider_caps: bool = True) -> float:
        self.check_dims(w)
        errs = [abs(w.x.sum() - w.y.sum()), (-w.x).max(initial=0.0),
                (-w.y).max(initial=0.0), (w.y - self.caps).max(initial=0.0)]
        if enforce_provider_caps:
            errs.append((w.x - self.provider_caps).max(initial=0.0))
        return float(max(errs))


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty schedule and stopping rule.

    Attributes
    ----------
    taus
        Strictly increasing penalty weights.
    max_violation
        Largest acceptable ``max_i (x_i - cap_i)``.
    gap_factor
        Stage ``t`` aims for a gap of ``max(accuracy, gap_factor / tau_t)``.
    stage_budget
        Block iterations allowed per stage; ``None`` lets a stage use
        whatever is left of the overall budget.  A stage that runs out of
        its own budget hands its point to the next ``tau``.
    """

    taus: tuple[float, ...] = tuple(10.0 ** t for t in range(1, 7))
    max_violation: float = 1e-3
    gap_factor: float = 0.0
    stage_budget: int | None = None

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        object.__setattr__(self, "taus", taus)
        if not taus or taus[0] <= 0 or any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError("penalty schedule must be positive and strictly increasing")
        if not self.max_violation >= 0 or not self.gap_factor >= 0:
            raise ValueError("max_violation and gap_factor must be nonnegative")
        if self.stage_budget is not None and self.stage_budget < 1:
            raise ValueError("stage_budget must be positive")


def to_market(problem: WirelessProblem) -> MarketProblem:
    """Single commodity: providers trade on ``[0, cap_i]``, users bid on ``[0, cap_j]``."""
    traders = tuple(Participant(0.0, p.cap, f"provider[{i}]")
                    for i, p in enumerate(problem.providers))
    buyers = tuple(Participant(0.0, u.cap, f"user[{j}]") for j, u in enumerate(problem.users))

    def prices(w: Point):
        return problem.prices(w.x), problem.demand_fns(w.y)

    return MarketProblem((CommodityBlock(traders, buyers, 0.0),), prices)


def constraint_violation(problem: WirelessProblem, x: np.ndarray) -> float:
    """``max_i max(x_i - cap_i, 0)``."""
    return float(np.maximum(x - problem.provider_caps, 0.0).max(initial=0.0))


def penalty_value(problem: WirelessProblem, x: np.ndarray) -> float:
    """``0.5 * sum_i max(x_i - cap_i, 0) ** 2``."""
    excess = np.maximum(x - problem.provider_caps, 0.0)
    return 0.5 * float(excess @ excess)


def penalized_gradient(problem: WirelessProblem, x: np.ndarray, tau: float) -> np.ndarray:
    """Provider prices with the offer caps replaced by a quadratic penalty.

    Returns ``g_i(x) + tau * max(x_i - cap_i, 0)``, the gradient of
    ``mu(x) + tau * penalty_value(x)``.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    excess = np.maximum(x - problem.provider_caps, 0.0)
    return problem.prices(x) + tau * excess
