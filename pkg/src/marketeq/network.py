"""Elastic-demand network equilibrium with several buyer pairs per O/D pair.

Path flows ``x_p`` load arcs through the 0/1 path-arc incidence; each O/D
pair's path flows must sum to the demands ``y_j`` of its buyers.  Path cost
is the sum of arc costs along the path, and each buyer's willingness to pay
is a dis-utility ``h_j(y_j)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Hashable

import numpy as np
from scipy import sparse

from .costs import CostVector, ScalarCostFn
from .market import (INF, CommodityBlock, EquilibriumReport, MarketProblem, Participant,
                     Point, PriceInterval, Violation, verify_equilibrium)

__all__ = [
    "Network",
    "Buyer",
    "OdPair",
    "NetworkProblem",
    "FlowPoint",
    "arc_flows",
    "path_costs",
    "buyer_prices",
    "check_equilibrium",
    "to_market",
    "network_vi_residual",
    "EQUILIBRIUM_FORMS",
]

FlowPoint = Point

EQUILIBRIUM_FORMS = ("kkt", "complementarity", "implication")


@dataclass(frozen=True)
class Network:
    """Directed (multi)graph with per-arc cost functions.

    ``costs`` holds separable costs ``c_a(f_a)``.  A non-separable model can
    instead pass ``joint_cost``, mapping the whole arc-flow vector to arc
    costs; such networks can be checked but not solved.
    """

    nodes: tuple[Hashable, ...]
    arcs: tuple[tuple[Hashable, Hashable], ...]
    costs: tuple[ScalarCostFn, ...] = ()
    joint_cost: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "arcs", tuple(tuple(a) for a in self.arcs))
        object.__setattr__(self, "costs", tuple(self.costs))
        known = set(self.nodes)
        for k, (u, v) in enumerate(self.arcs):
            if u not in known or v not in known:
                raise ValueError(f"arc {k} ({u!r}, {v!r}) references an unknown node")
        if self.joint_cost is None and len(self.costs) != len(self.arcs):
            raise ValueError("one cost function per arc is required")

    @property
    def separable(self) -> bool:
        return self.joint_cost is None

    @cached_property
    def cost_vector(self) -> CostVector:
        return CostVector(self.costs)

    def arc_costs(self, f: np.ndarray) -> np.ndarray:
        if self.joint_cost is not None:
            return np.asarray(self.joint_cost(f), dtype=float)
        return self.cost_vector(f)


@dataclass(frozen=True)
class Buyer:
    disutility: ScalarCostFn
    cap: float = INF


@dataclass(frozen=True)
class OdPair:
    origin: Hashable
    destination: Hashable
    paths: tuple[tuple[int, ...], ...]
    buyers: tuple[Buyer, ...]

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(tuple(int(a) for a in p) for p in self.paths))
        object.__setattr__(self, "buyers", tuple(self.buyers))
        if not self.paths:
            raise ValueError(f"O/D pair {self.origin!r}->{self.destination!r} has no path")
        if not self.buyers:
            raise ValueError(f"O/D pair {self.origin!r}->{self.destination!r} has no buyer")
        for b in self.buyers:
            if not b.cap >= 0:
                raise ValueError("buyer caps must be nonnegative")


@dataclass(frozen=True)
class NetworkProblem:
    """A network plus its O/D pairs.

    Paths are numbered globally in O/D order, as are buyers; a
    :class:`FlowPoint` stores path flows in ``x`` and demands in ``y``.
    """

    network: Network
    od_pairs: tuple[OdPair, ...]

    def __post_init__(self):
        object.__setattr__(self, "od_pairs", tuple(self.od_pairs))
        arcs = self.network.arcs
        for s, od in enumerate(self.od_pairs):
            for p in od.paths:
                node = od.origin
                for a in p:
                    if not 0 <= a < len(arcs):
                        raise ValueError(f"O/D pair {s}: arc id {a} out of range")
                    if arcs[a][0] != node:
                        raise ValueError(f"O/D pair {s}: path {list(p)} is not a walk "
                                         f"(arc {a} does not leave {node!r})")
                    node = arcs[a][1]
                if node != od.destination:
                    raise ValueError(f"O/D pair {s}: path {list(p)} ends at {node!r}, "
                                     f"not {od.destination!r}")

    @property
    def n_blocks(self) -> int:
        return len(self.od_pairs)

    @cached_property
    def path_offsets(self) -> np.ndarray:
        return np.cumsum([0] + [len(od.paths) for od in self.od_pairs])

    @cached_property
    def buyer_offsets(self) -> np.ndarray:
        return np.cumsum([0] + [len(od.buyers) for od in self.od_pairs])

    @property
    def n_paths(self) -> int:
        return int(self.path_offsets[-1])

    @property
    def n_buyers(self) -> int:
        return int(self.buyer_offsets[-1])

    @property
    def n_arcs(self) -> int:
        return len(self.network.arcs)

    @cached_property
    def paths(self) -> tuple[tuple[int, ...], ...]:
        return tuple(p for od in self.od_pairs for p in od.paths)

    @cached_property
    def buyers(self) -> tuple[Buyer, ...]:
        return tuple(b for od in self.od_pairs for b in od.buyers)

    @cached_property
    def incidence(self) -> sparse.csr_matrix:
        """Path-by-arc 0/1 matrix; a walk repeating an arc counts it each time."""
        rows, cols = [], []
        for k, p in enumerate(self.paths):
            rows.extend([k] * len(p))
            cols.extend(p)
        data = np.ones(len(rows))
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n_paths, self.n_arcs))

    @cached_property
    def block_incidence(self) -> tuple[sparse.csr_matrix, ...]:
        A = self.incidence
        return tuple(A[self.path_offsets[s]:self.path_offsets[s + 1]]
                     for s in range(self.n_blocks))

    @cached_property
    def demand_fns(self) -> CostVector:
        return CostVector([b.disutility for b in self.buyers])

    @cached_property
    def caps(self) -> np.ndarray:
        return np.array([b.cap for b in self.buyers], dtype=float)

    def block_slices(self, s: int) -> tuple[slice, slice]:
        return (slice(self.path_offsets[s], self.path_offsets[s + 1]),
                slice(self.buyer_offsets[s], self.buyer_offsets[s + 1]))

    def path_label(self, k: int) -> str:
        return f"path[{k}]"

    def buyer_label(self, k: int) -> str:
        return f"buyer[{k}]"

    def zero_point(self) -> FlowPoint:
        return Point(np.zeros(self.n_paths), np.zeros(self.n_buyers))

    def check_dims(self, w: FlowPoint) -> None:
        if w.x.shape != (self.n_paths,) or w.y.shape != (self.n_buyers,):
            raise ValueError(f"flow point has shape x{w.x.shape}, y{w.y.shape}; expected "
                             f"x({self.n_paths},), y({self.n_buyers},)")

    def balance_residual(self, w: FlowPoint) -> np.ndarray:
        """Per O/D pair ``sum(x_p) - sum(y_j)``."""
        xs = np.add.reduceat(w.x, self.path_offsets[:-1]) if self.n_paths else np.zeros(0)
        ys = np.add.reduceat(w.y, self.buyer_offsets[:-1]) if self.n_buyers else np.zeros(0)
        return xs - ys

    def feasibility_error(self, w: FlowPoint) -> float:
        """Largest box or balance violation of ``w``."""
        self.check_dims(w)
        errs = [np.abs(self.balance_residual(w)).max(initial=0.0),
                (-w.x).max(initial=0.0), (-w.y).max(initial=0.0),
                (w.y - self.caps).max(initial=0.0)]
        return float(max(errs))


def arc_flows(problem: NetworkProblem, w: FlowPoint) -> np.ndarray:
    """Arc flows ``f_a = sum_p alpha_pa x_p``."""
    problem.check_dims(w)
    return problem.incidence.T @ w.x


def path_costs(problem: NetworkProblem, w: FlowPoint, flows: np.ndarray | None = None
               ) -> np.ndarray:
    """Path costs ``g_p = sum_a alpha_pa c_a(f)``."""
    if flows is None:
        flows = arc_flows(problem, w)
    c = problem.network.arc_costs(flows)
    bad = np.flatnonzero(~np.isfinite(c))
    if bad.size:
        raise FloatingPointError(f"arc cost of arc {int(bad[0])} is not finite "
                                 f"at flow {flows[bad[0]]}")
    return problem.incidence @ c


def buyer_prices(problem: NetworkProblem, w: FlowPoint) -> np.ndarray:
    return problem.demand_fns(w.y)


def to_market(problem: NetworkProblem) -> MarketProblem:
    """One commodity per O/D pair: paths trade on ``[0, inf)``, buyers bid on ``[0, cap]``."""
    blocks = []
    for s, od in enumerate(problem.od_pairs):
        sx, sy = problem.block_slices(s)
        traders = tuple(Participant(0.0, INF, problem.path_label(k))
                        for k in range(sx.start, sx.stop))
        buyers = tuple(Participant(0.0, problem.buyers[k].cap, problem.buyer_label(k))
                       for k in range(sy.start, sy.stop))
        blocks.append(CommodityBlock(traders, buyers, 0.0))

    def prices(w: Point):
        return path_costs(problem, w), buyer_prices(problem, w)

    return MarketProblem(tuple(blocks), prices)


def network_vi_residual(problem: NetworkProblem, w: FlowPoint, probe: FlowPoint) -> float:
    """``sum_p g_p(x)(x'_p - x_p) - sum_j h_j(y)(y'_j - y_j)`` in network terms."""
    g = path_costs(problem, w)
    h = buyer_prices(problem, w)
    return float(g @ (probe.x - w.x) - h @ (probe.y - w.y))


def check_equilibrium(problem: NetworkProblem, w: FlowPoint, tol: float = 1e-8,
                      form: str = "kkt") -> EquilibriumReport:
    """Test whether ``w`` is a network equilibrium.

    ``form`` selects the characterization:

    ``"kkt"``
        a per-pair price separating path costs and buyer dis-utilities by
        which bounds are active (delegates to the market verifier);
    ``"complementarity"``
        pairwise: ``g_p - h_j = 0`` when both ``x_p`` and ``y_j`` exceed
        ``tol``, and ``g_p - h_j >= -tol`` otherwise;
    ``"implication"``
        pairwise: ``g_p - h_j > tol`` forces ``x_p <= tol`` or ``y_j <= tol``,
        and ``g_p - h_j >= -tol`` for every pair.

    All three agree when no buyer is capped.
    """
    if form not in EQUILIBRIUM_FORMS:
        raise ValueError(f"form must be one of {EQUILIBRIUM_FORMS}, got {form!r}")
    problem.check_dims(w)
    if form == "kkt":
        report = verify_equilibrium(to_market(problem), w, tol, active_tol=tol)
        return EquilibriumReport(report.ok, report.intervals, report.violation, "kkt")

    scale = 1.0 + float(np.abs(w.y).sum())
    err = problem.feasibility_error(w)
    if err > max(tol, 1e-10) * scale:
        return EquilibriumReport(False, (), Violation(-1, "feasibility", err,
                                                      message="point is infeasible"), form)
    g = path_costs(problem, w)
    h = buyer_prices(problem, w)
    intervals = []
    first = None
    for s in range(problem.n_blocks):
        sx, sy = problem.block_slices(s)
        gs, hs = g[sx], h[sy]
        xpos, ypos = w.x[sx] > tol, w.y[sy] > tol
        diff = gs[:, None] - hs[None, :]
        both = xpos[:, None] & ypos[None, :]
        if form == "complementarity":
            bad = np.where(both, np.abs(diff) > tol, diff < -tol)
        else:
            forced = (diff > tol) & both          # '>' must imply a zero side
            bad = forced | (diff < -tol)
        # [max h_j, min g_p]; a single point when some pair carries flow
        lo = float(hs.max(initial=-INF))
        hi = float(gs.min(initial=INF))
        intervals.append(PriceInterval(lo, hi))
        if first is None and bad.any():
            p, j = np.argwhere(bad)[0]
            kp, kj = sx.start + int(p), sy.start + int(j)
            first = Violation(s, form, float(diff[p, j]), problem.path_label(kp),
                              problem.buyer_label(kj),
                              f"O/D pair {s}: g({problem.path_label(kp)}) - "
                              f"h({problem.buyer_label(kj)}) = {diff[p, j]:.6g}")
    return EquilibriumReport(first is None, tuple(intervals), first, form)
