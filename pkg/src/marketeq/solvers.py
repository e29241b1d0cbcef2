"""Partial-linearization descent for integrable equilibrium problems.

``solve_pl`` linearizes the cost potential over all blocks at once and
takes one Armijo step along ``v - w``.  ``solve_cpl`` sweeps the blocks
cyclically, stepping only on blocks whose gap reaches the current tolerance
``delta_l``; after ``n`` consecutive skips the tolerance is tightened
(a restart).  Work is counted in block iterations: one per block on which a
line search runs.
"""
from __future__ import annotations

import json
import math
from array import array
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

import numpy as np

from .directions import BlockDirection, block_direction, solve_block_wireless
from .market import (CommodityBlock, EquilibriumReport, MarketProblem, Participant, Point,
                     project_to_block, verify_equilibrium)
from .network import NetworkProblem, check_equilibrium, to_market as network_market
from .objective import line_decrease, objective, validate_for_solver
from .wireless import (PenaltyConfig, WirelessProblem, constraint_violation,
                       penalized_gradient, to_market as wireless_market)

__all__ = [
    "SolverConfig",
    "SolveTrace",
    "SolveResult",
    "PenaltyResult",
    "LineSearchError",
    "armijo_step",
    "backtrack",
    "delta_schedule",
    "solve_pl",
    "solve_cpl",
    "solve_penalized",
    "initial_point",
]

DELTA_RULES = ("halve", "harmonic")
ENGINES = ("auto", "python", "compiled")

CONVERGED = "converged"
BUDGET = "budget_exhausted"
VIOLATION = "violation_above_threshold"

# trace row kinds
ITERATE, STEP, RESTART, STAGE = 0, 1, 2, 3
KIND_NAMES = {ITERATE: "iterate", STEP: "step", RESTART: "restart", STAGE: "stage"}

FLOW_REFRESH = 1024


class LineSearchError(RuntimeError):
    """No Armijo step was accepted within the trial budget."""


@dataclass(frozen=True)
class SolverConfig:
    """Parameters shared by the PL and CPL methods.

    ``accuracy`` is the target on the total gap ``sum_s phi_s``;
    ``delta_rule`` is ``"halve"`` (``delta_{l+1} = delta_l / 2``) or
    ``"harmonic"`` (``delta_l = delta_0 / l``).  ``engine`` picks the loop
    implementation: ``"compiled"`` runs networks with affine costs in
    compiled code, ``"python"`` always uses the interpreted loop, and
    ``"auto"`` compiles whenever the problem allows it and no callback
    is given.
    """

    beta: float = 0.5
    theta: float = 0.5
    delta0: float = 10.0
    delta_rule: str = "harmonic"
    accuracy: float = 1e-6
    max_block_iters: int = 1_000_000
    max_armijo: int = 60
    engine: str = "auto"

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if not self.delta0 > 0:
            raise ValueError("delta0 must be positive")
        if self.delta_rule not in DELTA_RULES:
            raise ValueError(f"delta_rule must be one of {DELTA_RULES}")
        if not self.accuracy >= 0:
            raise ValueError("accuracy must be nonnegative")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        if self.max_block_iters < 0 or self.max_armijo < 1:
            raise ValueError("iteration budgets must be positive")


def delta_schedule(delta0: float, rule: str) -> Iterator[float]:
    """Yield ``delta_1, delta_2, ...``; ``delta_1 = delta0`` for both rules."""
    level = 1
    delta = delta0
    while True:
        yield delta if rule == "halve" else delta0 / level
        level += 1
        delta /= 2.0


def backtrack(decrease: Callable[[float], float], phi: float, beta: float = 0.5,
              theta: float = 0.5, max_trials: int = 60) -> tuple[float, float]:
    """Smallest ``j >= 0`` with ``decrease(theta**j) <= -beta * theta**j * phi``.

    Returns ``(step, decrease(step))``.
    """
    if not phi > 0:
        raise ValueError("line search needs a positive gap")
    step = 1.0
    for _ in range(max_trials):
        change = decrease(step)
        if change <= -beta * step * phi:
            return step, change
        step *= theta
    raise LineSearchError(f"no Armijo step within {max_trials} trials (gap {phi:.3e}); "
                          "the objective is not convex along the direction or the "
                          "gradient is inconsistent with it")


def armijo_step(f: Callable, w, p, phi: float, beta: float = 0.5, theta: float = 0.5,
                max_trials: int = 60):
    """Armijo step from ``w`` along ``p`` given the gap ``phi``.

    ``f`` evaluates the objective at a point; ``w`` and ``p`` may be arrays
    or :class:`~marketeq.market.Point` values.

    Returns
    -------
    (float, point)
        The accepted step ``theta**j`` and ``w + step * p``.
    """
    f0 = f(w)
    step, _ = backtrack(lambda t: f(w + t * p) - f0, phi, beta, theta, max_trials)
    return step, w + step * p


class SolveTrace:
    """Columnar log of a solve.

    Rows are iterates (PL), block steps (CPL), restarts (CPL) and penalty
    stages.  ``accuracy`` is the total gap where it was evaluated and NaN
    elsewhere.
    """

    COLUMNS = ("kind", "block_iters", "block", "gap", "step", "objective", "accuracy",
               "level", "tolerance")

    def __init__(self, method: str):
        self.method = method
        self.status = ""
        self.message = ""
        self._cols = {
            "kind": array("b"), "block_iters": array("q"), "block": array("l"),
            "gap": array("d"), "step": array("d"), "objective": array("d"),
            "accuracy": array("d"), "level": array("l"), "tolerance": array("d"),
        }

    def add(self, kind: int, block_iters: int, block: int = -1, gap: float = math.nan,
            step: float = math.nan, objective: float = math.nan, accuracy: float = math.nan,
            level: int = 0, tolerance: float = math.nan) -> None:
        c = self._cols
        c["kind"].append(kind)
        c["block_iters"].append(block_iters)
        c["block"].append(block)
        c["gap"].append(gap)
        c["step"].append(step)
        c["objective"].append(objective)
        c["accuracy"].append(accuracy)
        c["level"].append(level)
        c["tolerance"].append(tolerance)

    def __len__(self) -> int:
        return len(self._cols["kind"])

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self._cols[name])

    def rows(self, kind: int | None = None) -> Iterator[dict]:
        kinds = self._cols["kind"]
        for i in range(len(self)):
            if kind is None or kinds[i] == kind:
                yield {"kind": KIND_NAMES[kinds[i]],
                       **{k: self._cols[k][i] for k in self.COLUMNS[1:]}}

    @property
    def block_iterations(self) -> int:
        b = self._cols["block_iters"]
        return int(b[-1]) if len(b) else 0

    def first_reaching(self, threshold: float) -> int | None:
        """Block iterations spent when the total gap first fell to ``threshold``."""
        acc = self.column("accuracy")
        hit = np.flatnonzero(acc <= threshold)
        if not hit.size:
            return None
        return int(self._cols["block_iters"][hit[0]])

    def extend_rows(self, rows: np.ndarray) -> None:
        """Append rows given as an ``(m, 9)`` float array in column order."""
        for k, name in enumerate(self.COLUMNS):
            target = self._cols[name]
            col = np.ascontiguousarray(rows[:, k], dtype=np.dtype(target.typecode))
            target.frombytes(col.tobytes())

    def extend(self, other: SolveTrace, offset: int = 0) -> None:
        for name in self.COLUMNS:
            col = other._cols[name]
            if name == "block_iters":
                col = array("q", (v + offset for v in col))
            self._cols[name].extend(col)

    def write_jsonl(self, fp) -> None:
        """One JSON object per row, then a status line."""
        for row in self.rows():
            fp.write(json.dumps({k: _jsonable(v) for k, v in row.items()}) + "\n")
        fp.write(json.dumps({"kind": "status", "method": self.method, "status": self.status,
                             "message": self.message,
                             "block_iters": self.block_iterations}) + "\n")


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


@dataclass
class SolveResult:
    point: Point
    trace: SolveTrace
    status: str
    accuracy: float
    block_iterations: int
    report: EquilibriumReport | None = None

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def prices(self) -> np.ndarray:
        """Recovered per-commodity equilibrium prices."""
        return self.report.prices if self.report is not None else np.array([])


@dataclass
class PenaltyResult(SolveResult):
    stages: list = field(default_factory=list)
    violation: float = math.nan


# --------------------------------------------------------------------------- models

class _NetworkModel:
    """Block oracle and line search for a network problem with cached arc flows."""

    def __init__(self, problem: NetworkProblem):
        validate_for_solver(problem)
        self.problem = problem
        self.n_blocks = problem.n_blocks
        self.A = problem.incidence
        self.AT = problem.incidence.T.tocsr()
        self.blocks_A = problem.block_incidence
        self.blocks_AT = tuple(B.T.tocsr() for B in problem.block_incidence)
        self.costs = problem.network.cost_vector
        self.slices = [problem.block_slices(s) for s in range(self.n_blocks)]
        self.buyer_idx = [np.arange(sy.start, sy.stop) for _, sy in self.slices]
        self.flows = None
        self._steps = 0

    def start(self, w: Point) -> None:
        self.flows = self.AT @ w.x

    def all_directions(self, w: Point) -> list[BlockDirection]:
        g = self.A @ self.costs(self.flows)
        return [self._solve(w, s, g[self.slices[s][0]]) for s in range(self.n_blocks)]

    def direction(self, w: Point, s: int) -> BlockDirection:
        return self._solve(w, s, self.blocks_A[s] @ self.costs(self.flows))

    def _solve(self, w: Point, s: int, g: np.ndarray) -> BlockDirection:
        sx, sy = self.slices[s]
        return block_direction(self.problem.demand_fns, self.problem.caps, s, g, w.x[sx],
                               w.y[sy], sx.start, self.buyer_idx[s])

    def full_direction(self, w: Point, dirs: list[BlockDirection]) -> Point:
        return Point(np.concatenate([d.x for d in dirs]) - w.x,
                     np.concatenate([d.y for d in dirs]) - w.y)

    def block_direction(self, w: Point, d: BlockDirection) -> tuple[slice, slice, Point]:
        sx, sy = self.problem.block_slices(d.block)
        return sx, sy, Point(d.x - w.x[sx], d.y - w.y[sy])

    def line(self, w: Point, p: Point, block: int | None = None):
        if block is None:
            df = self.AT @ p.x
        else:
            df = self.blocks_AT[block] @ p.x
        na = np.flatnonzero(df)
        arcs = self.costs.ray(self.flows[na], df[na], na)
        if block is None:
            demand = self.problem.demand_fns.ray(w.y, p.y)
        else:
            ny = self.buyer_idx[block]
            demand = self.problem.demand_fns.ray(w.y[ny], p.y, ny)

        def decrease(t):
            return arcs(t) - demand(t)

        return decrease, df

    def moved(self, w: Point, df: np.ndarray, step: float) -> None:
        self._steps += 1
        if self._steps % FLOW_REFRESH == 0:
            self.start(w)
        else:
            self.flows = self.flows + step * df

    def objective(self, w: Point) -> float:
        return objective(self.problem, w).total

    def verify(self, w: Point, tol: float) -> EquilibriumReport:
        return check_equilibrium(self.problem, w, tol, "kkt")

    def initial_point(self) -> Point:
        return initial_point(self.problem)


class _WirelessModel:
    """Single-block oracle for the allocation problem, optionally penalized."""

    n_blocks = 1

    def __init__(self, problem: WirelessProblem, tau: float | None = None):
        validate_for_solver(problem, penalized=tau is not None)
        self.problem = problem
        self.tau = tau

    def start(self, w: Point) -> None:
        pass

    def _prices(self, w: Point) -> np.ndarray:
        if self.tau is None:
            return self.problem.prices(w.x)
        return penalized_gradient(self.problem, w.x, self.tau)

    def all_directions(self, w: Point) -> list[BlockDirection]:
        return [self.direction(w, 0)]

    def direction(self, w: Point, s: int) -> BlockDirection:
        return solve_block_wireless(self.problem, w, self.tau, self._prices(w))

    def full_direction(self, w: Point, dirs: list[BlockDirection]) -> Point:
        return Point(dirs[0].x - w.x, dirs[0].y - w.y)

    def block_direction(self, w: Point, d: BlockDirection):
        return slice(None), slice(None), Point(d.x - w.x, d.y - w.y)

    def line(self, w: Point, p: Point, block: int | None = None):
        return line_decrease(self.problem, w, p, self.tau), None

    def moved(self, w: Point, df, step: float) -> None:
        pass

    def objective(self, w: Point) -> float:
        return objective(self.problem, w, self.tau).total

    def verify(self, w: Point, tol: float) -> EquilibriumReport:
        market = wireless_market(self.problem)
        if self.tau is not None:
            blk = market.blocks[0]
            traders = tuple(Participant(p.lower, math.inf, p.label) for p in blk.traders)
            tau, problem = self.tau, self.problem

            def prices(v: Point):
                return penalized_gradient(problem, v.x, tau), problem.demand_fns(v.y)
            market = MarketProblem((CommodityBlock(traders, blk.buyers, 0.0),), prices)
        return verify_equilibrium(market, w, tol, active_tol=tol)

    def initial_point(self) -> Point:
        return self.problem.zero_point()


def _model(problem, tau=None):
    if isinstance(problem, NetworkProblem):
        if tau is not None:
            raise ValueError("penalty applies to wireless problems only")
        return _NetworkModel(problem)
    if isinstance(problem, WirelessProblem):
        return _WirelessModel(problem, tau)
    raise TypeError(f"no solver for {type(problem).__name__}")


def initial_point(problem) -> Point:
    """Projection of the zero point onto the feasible set."""
    if isinstance(problem, NetworkProblem):
        market = network_market(problem)
    else:
        market = wireless_market(problem)
    zero = Point(np.zeros(market.n_traders), np.zeros(market.n_buyers))
    parts = [project_to_block(b, Point(zero.x[sx], zero.y[sy]))
             for b, (sx, sy) in ((b, market.block_slices(s))
                                 for s, b in enumerate(market.blocks))]
    return Point(np.concatenate([p.x for p in parts]), np.concatenate([p.y for p in parts]))


def _verification_tol(accuracy: float) -> float:
    # a violation of size e at distance d from a bound costs at least e * d in gap
    return max(1e-8, 10.0 * math.sqrt(max(accuracy, 0.0)))


def _finish(model, w, trace, status, accuracy, block_iters, message=""):
    trace.status = status
    trace.message = message
    report = model.verify(w, _verification_tol(accuracy))
    return SolveResult(w, trace, status, accuracy, block_iters, report)


# --------------------------------------------------------------------------- compiled loops

TRACE_CHUNK = 1 << 16


def _compilable(problem) -> bool:
    if isinstance(problem, NetworkProblem):
        return (problem.network.separable and problem.network.cost_vector.affine
                and problem.demand_fns.affine)
    if isinstance(problem, WirelessProblem):
        return (not callable(problem.congestion) and problem.base_prices.affine
                and problem.demand_fns.affine)
    return False


def _use_compiled(problem, config: SolverConfig, callback) -> bool:
    if config.engine == "python":
        return False
    ok = _compilable(problem) and callback is None
    if config.engine == "compiled" and not ok:
        raise ValueError("the compiled engine needs affine costs and dis-utilities, constant "
                         "congestion, and no callback")
    return ok


@dataclass(frozen=True)
class _Layout:
    """A problem as blocks of paths over arcs, the form the compiled loops take."""

    pptr: np.ndarray
    bptr: np.ndarray
    aptr: np.ndarray
    aidx: np.ndarray
    c0: np.ndarray
    c1: np.ndarray
    alpha: np.ndarray
    h0: np.ndarray
    h1: np.ndarray
    caps: np.ndarray

    @classmethod
    def build(cls, problem) -> _Layout:
        demand = problem.demand_fns
        if isinstance(problem, NetworkProblem):
            paths = problem.paths
            arcs = problem.network.cost_vector
            c0, c1 = arcs.c0, arcs.c1
            alpha = np.full(problem.n_arcs, math.inf)
            pptr, bptr = problem.path_offsets, problem.buyer_offsets
        else:
            # provider i is a path over its own arc plus a shared congestion arc
            m = problem.n_providers
            base = problem.base_prices
            paths = [(i, m) for i in range(m)]
            c0 = np.append(base.c0, 0.0)
            c1 = np.append(base.c1, float(problem.congestion))
            alpha = np.append(problem.provider_caps, math.inf)
            pptr, bptr = [0, m], [0, problem.n_users]
        lengths = [len(p) for p in paths]
        aptr = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        aidx = np.fromiter((a for p in paths for a in p), dtype=np.int64, count=int(aptr[-1]))
        return cls(np.asarray(pptr, np.int64), np.asarray(bptr, np.int64), aptr, aidx,
                   np.asarray(c0, float), np.asarray(c1, float), np.asarray(alpha, float),
                   np.asarray(demand.c0, float), np.asarray(demand.c1, float),
                   np.asarray(problem.caps, float))


def _run_compiled(problem, config: SolverConfig, w: Point, method: str,
                  tau: float | None = None) -> SolveResult:
    from . import _kernels as K

    model = _model(problem, tau)
    model.start(w)
    lay = _Layout.build(problem)
    x, y = w.x.copy(), w.y.copy()
    flows = np.zeros(lay.c0.shape[0])
    K._refresh_flows(lay.aptr, lay.aidx, x, flows)
    common = (lay.pptr, lay.bptr, lay.aptr, lay.aidx, lay.c0, lay.c1, lay.alpha,
              0.0 if tau is None else float(tau), lay.h0, lay.h1, lay.caps, x, y, flows)
    istate = np.zeros(5, np.int64)
    fstate = np.zeros(2)
    fstate[K.F_OBJECTIVE] = model.objective(w)
    trace = SolveTrace(method)
    buf = np.empty((TRACE_CHUNK, len(SolveTrace.COLUMNS)))
    if method == "cpl":
        gap0 = float(sum(d.gap for d in model.all_directions(w)))
        trace.add(RESTART, 0, gap=gap0, objective=fstate[K.F_OBJECTIVE], accuracy=gap0,
                  level=0)
        if gap0 <= config.accuracy:
            return _finish(model, w, trace, CONVERGED, gap0, 0)
        istate[K.I_LEVEL] = 1
        skip_gaps = np.zeros(model.n_blocks)
    while True:
        if method == "pl":
            code, rows = K.pl_loop(*common, istate, fstate, config.beta, config.theta,
                                   config.max_armijo, config.accuracy, config.max_block_iters,
                                   FLOW_REFRESH, buf)
        else:
            code, rows = K.cpl_loop(*common, istate, fstate, skip_gaps, config.beta,
                                    config.theta, config.max_armijo, config.accuracy,
                                    config.max_block_iters, FLOW_REFRESH, config.delta0,
                                    config.delta_rule == "halve", buf)
        trace.extend_rows(buf[:rows])
        if code != K.BUFFER_FULL:
            break
    if code == K.LINE_SEARCH_FAILED:
        raise LineSearchError(f"no Armijo step within {config.max_armijo} trials "
                              f"(gap {fstate[K.F_FAILED_GAP]:.3e})")
    w = Point(x, y)
    accuracy = float(trace.column("accuracy")[-1])
    iters = int(istate[K.I_ITERS])
    if code == K.DONE_CONVERGED:
        return _finish(model, w, trace, CONVERGED, accuracy, iters)
    return _finish(model, w, trace, BUDGET, accuracy, iters,
                   f"block-iteration budget {config.max_block_iters} exhausted")


# --------------------------------------------------------------------------- methods

def solve_pl(problem, config: SolverConfig = SolverConfig(), start: Point | None = None,
             callback: Callable | None = None, tau: float | None = None) -> SolveResult:
    """Partial-linearization method with Armijo steps.

    Every iteration solves all block subproblems at ``w^k`` (counted as
    ``n`` block iterations), stops once ``Delta_k = sum_s phi_s(w^k)``
    reaches ``config.accuracy``, and otherwise steps along ``v^k - w^k``.

    ``callback(w, info)`` is called after each accepted step with a dict
    holding ``step``, ``gap``, ``decrease``, ``block``.
    """
    w = (initial_point(problem) if start is None else start).copy()
    if _use_compiled(problem, config, callback):
        return _run_compiled(problem, config, w, "pl", tau)
    model = _model(problem, tau)
    model.start(w)
    trace = SolveTrace("pl")
    n = model.n_blocks
    f = model.objective(w)
    iters = 0
    while True:
        dirs = model.all_directions(w)
        gap = float(sum(d.gap for d in dirs))
        if gap <= config.accuracy:
            trace.add(ITERATE, iters, gap=gap, objective=f, accuracy=gap)
            return _finish(model, w, trace, CONVERGED, gap, iters)
        if iters + n > config.max_block_iters:
            trace.add(ITERATE, iters, gap=gap, objective=f, accuracy=gap)
            return _finish(model, w, trace, BUDGET, gap, iters,
                           f"block-iteration budget {config.max_block_iters} exhausted")
        p = model.full_direction(w, dirs)
        decrease, df = model.line(w, p)
        step, change = backtrack(decrease, gap, config.beta, config.theta, config.max_armijo)
        trace.add(ITERATE, iters, gap=gap, step=step, objective=f, accuracy=gap)
        w = Point(w.x + step * p.x, w.y + step * p.y)
        model.moved(w, df, step)
        f += change
        iters += n
        if callback is not None:
            callback(w, {"step": step, "gap": gap, "decrease": change, "block": -1})


def solve_cpl(problem, config: SolverConfig = SolverConfig(), start: Point | None = None,
              callback: Callable | None = None) -> SolveResult:
    """Adaptive cyclic partial-linearization method.

    Blocks are visited in order ``0, 1, ..., n-1, 0, ...``.  A block whose
    gap is at least ``delta_l`` gets an Armijo step (one block iteration);
    ``n`` consecutive skips mean every block gap at the current point is
    below ``delta_l``, so their sum is the exact total gap there.  That
    restart either stops (sum within ``config.accuracy``) or moves to
    ``delta_{l+1}`` and restarts the sweep at block 0.

    The total gap is also evaluated once at the start so an already
    converged point costs no block iterations.
    """
    w = (initial_point(problem) if start is None else start).copy()
    if _use_compiled(problem, config, callback):
        return _run_compiled(problem, config, w, "cpl")
    model = _model(problem)
    model.start(w)
    trace = SolveTrace("cpl")
    n = model.n_blocks
    f = model.objective(w)
    gap0 = float(sum(d.gap for d in model.all_directions(w)))
    trace.add(RESTART, 0, gap=gap0, objective=f, accuracy=gap0, level=0)
    if gap0 <= config.accuracy:
        return _finish(model, w, trace, CONVERGED, gap0, 0)

    deltas = delta_schedule(config.delta0, config.delta_rule)
    level, delta = 1, next(deltas)
    iters = 0
    skipped = 0
    skip_gaps = np.zeros(n)
    s = 0
    while True:
        d = model.direction(w, s)
        if d.gap >= delta and d.gap > 0:
            if iters >= config.max_block_iters:
                total = float(sum(x.gap for x in model.all_directions(w)))
                trace.add(RESTART, iters, objective=f, accuracy=total, level=level,
                          tolerance=delta)
                return _finish(model, w, trace, BUDGET, total, iters,
                               f"block-iteration budget {config.max_block_iters} exhausted")
            sx, sy, pb = model.block_direction(w, d)
            decrease, df = model.line(w, pb, d.block)
            step, change = backtrack(decrease, d.gap, config.beta, config.theta,
                                     config.max_armijo)
            w = Point(w.x.copy(), w.y.copy())
            w.x[sx] += step * pb.x
            w.y[sy] += step * pb.y
            model.moved(w, df, step)
            f += change
            iters += 1
            skipped = 0
            trace.add(STEP, iters, s, d.gap, step, f, level=level, tolerance=delta)
            if callback is not None:
                callback(w, {"step": step, "gap": d.gap, "decrease": change, "block": s})
        else:
            skip_gaps[s] = d.gap
            skipped += 1
            if skipped == n:
                total = float(skip_gaps.sum())
                trace.add(RESTART, iters, objective=f, accuracy=total, level=level,
                          tolerance=delta)
                if total <= config.accuracy:
                    return _finish(model, w, trace, CONVERGED, total, iters)
                level, delta = level + 1, next(deltas)
                skipped = 0
                s = 0
                continue
        s = (s + 1) % n


def solve_penalized(problem: WirelessProblem, config: SolverConfig = SolverConfig(),
                    penalty: PenaltyConfig = PenaltyConfig(),
                    start: Point | None = None) -> PenaltyResult:
    """Penalty loop for finite provider caps.

    For each ``tau`` in the schedule, runs :func:`solve_pl` on the problem
    with caps replaced by ``tau * 0.5 * sum max(x_i - cap_i, 0)**2``, to a
    gap of ``max(config.accuracy, gap_factor / tau)``, warm-started from the
    previous stage.  Stops once a stage meets its gap target with the cap
    violation within ``penalty.max_violation``.

    Status is ``"converged"`` in that case, ``"budget_exhausted"`` when the
    overall budget runs out or the schedule ends with the violation met but
    the last gap target missed, and ``"violation_above_threshold"`` when the
    schedule ends with the caps still violated.
    """
    w = problem.zero_point() if start is None else start.copy()
    trace = SolveTrace("pl-penalty")
    stages = []
    iters = 0
    result = None
    violation = math.nan
    status = None
    for t, tau in enumerate(penalty.taus, start=1):
        target = max(config.accuracy, penalty.gap_factor / tau)
        budget = max(config.max_block_iters - iters, 0)
        if penalty.stage_budget is not None:
            budget = min(budget, penalty.stage_budget)
        inner_cfg = replace(config, accuracy=target, max_block_iters=budget)
        result = solve_pl(problem, inner_cfg, start=w, tau=tau)
        trace.extend(result.trace, offset=iters)
        iters += result.block_iterations
        w = result.point
        violation = constraint_violation(problem, w.x)
        stages.append({"tau": tau, "violation": violation, "accuracy": result.accuracy,
                       "target": target, "block_iters": iters, "status": result.status})
        trace.add(STAGE, iters, objective=objective(problem, w, tau).total,
                  accuracy=result.accuracy, level=t, tolerance=tau)
        if result.converged and violation <= penalty.max_violation:
            status = CONVERGED
            break
        if iters >= config.max_block_iters:
            status = BUDGET
            break
    if status is None:
        status = VIOLATION if violation > penalty.max_violation else BUDGET
    trace.status = status
    tol = max(_verification_tol(result.accuracy), 2.0 * violation)
    report = verify_equilibrium(wireless_market(problem), w, tol, active_tol=tol)
    return PenaltyResult(w, trace, status, result.accuracy, iters, report, stages, violation)
