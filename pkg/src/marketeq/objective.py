"""Potential (objective) of integrable network and wireless problems.

The solvers minimize ``f(w) = mu(x) + eta(y)`` where ``mu`` is the smooth
cost potential and ``eta(y) = -sum_j int_0^{y_j} h_j`` is the convex demand
part.  Reports may quote the demand benefit ``sum_j int h_j`` instead; that
is ``-eta``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .costs import MonotonicityError, check_monotone
from .market import Point
from .network import NetworkProblem, arc_flows, path_costs
from .wireless import WirelessProblem, penalized_gradient, penalty_value

__all__ = [
    "ObjectiveValue",
    "objective",
    "block_gradient",
    "line_decrease",
    "validate_for_solver",
    "SolverInputError",
]


class SolverInputError(ValueError):
    """The problem lacks a property the descent solvers rely on."""


@dataclass(frozen=True)
class ObjectiveValue:
    total: float
    mu: float
    eta: float

    @property
    def demand_benefit(self) -> float:
        """``sum_j int_0^{y_j} h_j``, the quantity subtracted from ``mu``."""
        return -self.eta


def objective(problem, w: Point, tau: float | None = None) -> ObjectiveValue:
    """Objective value at ``w``.

    For a network: ``sum_a int_0^{f_a} c_a - sum_j int_0^{y_j} h_j``.  For a
    wireless problem: ``mu(x) - sum_j int_0^{y_j} h_j``, plus
    ``tau * 0.5 * sum_i max(x_i - cap_i, 0)**2`` when ``tau`` is given.
    """
    if isinstance(problem, NetworkProblem):
        problem.check_dims(w)
        if not problem.network.separable:
            raise SolverInputError("joint arc costs have no potential")
        f = arc_flows(problem, w)
        mu = float(problem.network.cost_vector.integral(f).sum())
        eta = -float(problem.demand_fns.integral(w.y).sum())
    elif isinstance(problem, WirelessProblem):
        problem.check_dims(w)
        mu = problem.potential_value(w.x)
        if tau is not None:
            mu += tau * penalty_value(problem, w.x)
        eta = -float(problem.demand_fns.integral(w.y).sum())
    else:
        raise TypeError(f"unsupported problem type {type(problem).__name__}")
    return ObjectiveValue(mu + eta, mu, eta)


def block_gradient(problem, w: Point, s: int = 0, tau: float | None = None) -> Point:
    """Gradient of ``mu`` with respect to block ``s``.

    The ``x`` part holds path costs (network) or provider prices (wireless);
    the ``y`` part is zero because demand enters only through ``eta``.
    """
    if isinstance(problem, NetworkProblem):
        sx, sy = problem.block_slices(s)
        return Point(path_costs(problem, w)[sx], np.zeros(sy.stop - sy.start))
    if isinstance(problem, WirelessProblem):
        if s != 0:
            raise IndexError("a wireless problem has a single block")
        g = problem.prices(w.x) if tau is None else penalized_gradient(problem, w.x, tau)
        return Point(g, np.zeros(problem.n_users))
    raise TypeError(f"unsupported problem type {type(problem).__name__}")


def line_decrease(problem, w: Point, p: Point, tau: float | None = None,
                  flows: np.ndarray | None = None) -> Callable[[float], float]:
    """Return ``t -> f(w + t p) - f(w)``, evaluated without cancellation.

    Each integral term is computed over ``[v, v + t dv]`` directly rather
    than as a difference of two primitives, which keeps the Armijo test
    meaningful when the decrease is many orders below ``|f|``.
    """
    ny = np.flatnonzero(p.y)
    y0, dy = w.y[ny], p.y[ny]

    if isinstance(problem, NetworkProblem):
        hfun = problem.demand_fns
        cfun = problem.network.cost_vector
        f0 = arc_flows(problem, w) if flows is None else flows
        df = problem.incidence.T @ p.x
        na = np.flatnonzero(df)
        f0, df = f0[na], df[na]

        def decrease(t: float) -> float:
            mu = cfun.integral_between(f0, f0 + t * df, na).sum()
            eta = hfun.integral_between(y0 + t * dy, y0, ny).sum()
            return float(mu + eta)
        return decrease

    if isinstance(problem, WirelessProblem):
        hfun = problem.demand_fns
        bfun = problem.base_prices
        nx = np.flatnonzero(p.x)
        x0, dx = w.x[nx], p.x[nx]
        S, D = float(w.x.sum()), float(p.x.sum())
        caps = problem.provider_caps[nx]

        def decrease(t: float) -> float:
            mu = bfun.integral_between(x0, x0 + t * dx, nx).sum()
            if callable(problem.congestion):
                mu += problem.potential(w.x + t * p.x) - problem.potential(w.x)
            else:
                mu += 0.5 * float(problem.congestion) * t * D * (2.0 * S + t * D)
            if tau is not None:
                e0 = np.maximum(x0 - caps, 0.0)
                e1 = np.maximum(x0 + t * dx - caps, 0.0)
                mu += 0.5 * tau * float(((e1 - e0) * (e1 + e0)).sum())
            eta = hfun.integral_between(y0 + t * dy, y0, ny).sum()
            return float(mu + eta)
        return decrease

    raise TypeError(f"unsupported problem type {type(problem).__name__}")


def validate_for_solver(problem, penalized: bool = False) -> None:
    """Check the assumptions of the partial-linearization solvers.

    Raises :class:`SolverInputError` (or :class:`MonotonicityError`) when
    caps are infinite, costs are non-separable or non-integrable, or arc
    costs / dis-utilities have the wrong monotonicity on the feasible range.
    """
    if isinstance(problem, NetworkProblem):
        if not problem.network.separable:
            raise SolverInputError("solvers need separable arc costs")
        if not np.all(np.isfinite(problem.caps)):
            raise SolverInputError("solvers need finite buyer caps")
        total = float(problem.caps.sum())
        for a, c in enumerate(problem.network.costs):
            check_monotone(c, 0.0, total, increasing=True, label=f"arc {a} cost")
        for j, b in enumerate(problem.buyers):
            check_monotone(b.disutility, 0.0, b.cap, increasing=False,
                           label=f"buyer {j} dis-utility")
    elif isinstance(problem, WirelessProblem):
        if not problem.integrable:
            raise SolverInputError("congestion terms need a matching potential")
        if not penalized and np.any(np.isfinite(problem.provider_caps)):
            raise SolverInputError("finite provider caps need the penalized solver")
        total = float(problem.caps.sum())
        for i, p in enumerate(problem.providers):
            check_monotone(p.price, 0.0, total, increasing=True, label=f"provider {i} price")
        for j, u in enumerate(problem.users):
            check_monotone(u.disutility, 0.0, u.cap, increasing=False,
                           label=f"user {j} dis-utility")
        if not callable(problem.congestion) and problem.congestion < 0:
            raise MonotonicityError("congestion coefficient must be nonnegative")
    else:
        raise SolverInputError(f"no descent solver for {type(problem).__name__}")
