"""Exact solutions of the partially linearized block subproblems.

With path costs (or provider prices) frozen at the current point, a block
subproblem sends all offer to the cheapest path/provider at price
``lam``, and each buyer independently settles where its dis-utility meets
``lam``:

* ``h(0) <= lam``   -> no demand;
* ``h(cap) >= lam`` -> demand at its cap;
* otherwise        -> the root of ``h(y) = lam`` inside ``(0, cap)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import CostVector, ScalarCostFn
from .market import Point
from .network import NetworkProblem, path_costs
from .wireless import WirelessProblem, penalized_gradient

__all__ = [
    "BlockDirection",
    "scalar_root",
    "buyer_response",
    "block_direction",
    "solve_block_network",
    "solve_block_wireless",
    "NO_DEMAND",
    "AT_CAP",
    "INTERIOR",
]

NO_DEMAND, AT_CAP, INTERIOR = 1, 2, 3

ROOT_RTOL = 1e-10
ROOT_MAXITER = 200


@dataclass(frozen=True)
class BlockDirection:
    """Subproblem solution ``v`` of one block and its gap.

    ``x`` and ``y`` hold the block's offers and bids at the subproblem
    optimum; ``selected`` is the global index of the cheapest path or
    provider and ``price`` its cost.
    """

    block: int
    x: np.ndarray
    y: np.ndarray
    gap: float
    selected: int
    price: float
    cases: np.ndarray


def scalar_root(h: ScalarCostFn, target: float, cap: float, full_output: bool = False):
    """Solve ``h(y) = target`` on ``[0, cap]`` for non-increasing ``h``.

    Requires ``h(0) >= target >= h(cap)``.  Affine ``h`` is solved in closed
    form; otherwise bisection runs until ``|h(y) - target| <= 1e-10 (1 + |target|)``
    or the bracket collapses.

    Returns
    -------
    float, or (float, int) with ``full_output``
        The root, and the number of bisection steps taken.
    """
    h0, hc = float(h(0.0)), float(h(cap))
    tol = ROOT_RTOL * (1.0 + abs(target))
    if not (h0 + tol >= target >= hc - tol):
        raise ValueError(f"target {target} not bracketed by h(0)={h0}, h({cap})={hc}")
    if h0 <= target:
        root, it = 0.0, 0
    elif hc >= target:
        root, it = float(cap), 0
    elif h.is_affine:
        c0, c1 = h.params["c0"], h.params["c1"]
        root, it = min(max((target - c0) / c1, 0.0), cap), 0
    else:
        lo, hi = 0.0, float(cap)
        root, it = 0.5 * (lo + hi), 0
        while it < ROOT_MAXITER:
            it += 1
            root = 0.5 * (lo + hi)
            val = float(h(root))
            if abs(val - target) <= tol or hi - lo <= 4 * np.finfo(float).eps * max(hi, 1.0):
                break
            if val > target:
                lo = root
            else:
                hi = root
    return (root, it) if full_output else root


def buyer_response(fns: CostVector, idx: np.ndarray, caps: np.ndarray, price: float
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Optimal demands of buyers ``idx`` facing ``price``, and which case applied."""
    caps = caps[idx]
    h0 = fns(np.zeros(len(idx)), idx)
    hc = fns(caps, idx)
    cases = np.where(h0 <= price, NO_DEMAND, np.where(hc >= price, AT_CAP, INTERIOR))
    y = np.where(cases == AT_CAP, caps, 0.0)
    inner = np.flatnonzero(cases == INTERIOR)
    if inner.size:
        if fns.affine:
            k = idx[inner]
            y[inner] = np.clip((price - fns.c0[k]) / fns.c1[k], 0.0, caps[inner])
        else:
            for i in inner:
                y[i] = scalar_root(fns.fns[idx[i]], price, caps[i])
    return y, cases


def block_direction(fns: CostVector, caps: np.ndarray, s: int, g: np.ndarray, x: np.ndarray,
                    y: np.ndarray, x_start: int, y_idx: np.ndarray) -> BlockDirection:
    """Solve one linearized block given its frozen prices ``g``.

    Shared by the network and wireless oracles: offers ``x`` and bids ``y``
    of the block, buyers ``y_idx`` of ``fns``/``caps``, and ``x_start`` the
    global index of the block's first offer.
    """
    q = int(np.argmin(g))
    price = float(g[q])
    ybar, cases = buyer_response(fns, y_idx, caps, price)
    xbar = np.zeros_like(x)
    xbar[q] = ybar.sum()
    # gap = <x - xbar, g> + eta(y) - eta(ybar), with eta(y) - eta(ybar) = int_y^ybar h
    gap = float(g @ (x - xbar)) + float(fns.integral_between(y, ybar, y_idx).sum())
    return BlockDirection(s, xbar, ybar, max(gap, 0.0), x_start + q, price, cases)


def solve_block_network(problem: NetworkProblem, w: Point, s: int,
                        costs: np.ndarray | None = None) -> BlockDirection:
    """Solve the linearized subproblem of O/D pair ``s``.

    ``costs`` may carry precomputed path costs for the whole network (or
    just this block) to skip re-evaluating arc costs.
    """
    sx, sy = problem.block_slices(s)
    caps = problem.caps
    if not np.all(np.isfinite(caps[sy])):
        raise ValueError(f"O/D pair {s} has an uncapped buyer; the subproblem is unbounded")
    if costs is None:
        costs = path_costs(problem, w)
    g = costs[sx] if costs.shape[0] == problem.n_paths else costs
    return block_direction(problem.demand_fns, caps, s, g, w.x[sx], w.y[sy], sx.start,
                           np.arange(sy.start, sy.stop))


def solve_block_wireless(problem: WirelessProblem, w: Point, tau: float | None = None,
                         prices: np.ndarray | None = None) -> BlockDirection:
    """Solve the linearized allocation subproblem.

    With ``tau`` the provider prices carry the penalty term for offers
    above their caps; without it every cap must be infinite.
    """
    if tau is None and np.any(np.isfinite(problem.provider_caps)):
        raise ValueError("finite provider caps require the penalized prices (pass tau)")
    if prices is None:
        prices = problem.prices(w.x) if tau is None else penalized_gradient(problem, w.x, tau)
    return block_direction(problem.demand_fns, problem.caps, 0, prices, w.x, w.y, 0,
                           np.arange(problem.n_users))
