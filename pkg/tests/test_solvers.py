import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marketeq import (INF, Buyer, Network, NetworkProblem, OdPair, PenaltyConfig, Point,
                      SolverConfig, affine, armijo_step, check_equilibrium, objective, power,
                      solve_cpl, solve_penalized, solve_pl)
from marketeq import solvers
from marketeq.instances import generate_network
from marketeq.solvers import (BUDGET, CONVERGED, RESTART, STEP, VIOLATION, LineSearchError,
                              backtrack, delta_schedule, initial_point)

from models import W1_X, W1_Y, random_small_network, t1, t1_twice, w1
from oracles import RawNetwork, t1_kkt

seeds = st.integers(0, 2**32 - 1)
EQ = t1_kkt()
PY = SolverConfig(engine="python")


def trace_text(res) -> str:
    buf = io.StringIO()
    res.trace.write_jsonl(buf)
    return buf.getvalue()


# --------------------------------------------------------------------------- configuration

@pytest.mark.parametrize("kwargs", [
    {"beta": 0.0}, {"beta": 1.0}, {"theta": 1.5}, {"delta0": 0.0}, {"delta_rule": "cubic"},
    {"accuracy": -1.0}, {"engine": "gpu"}, {"max_armijo": 0}, {"max_block_iters": -1},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_defaults():
    cfg = SolverConfig()
    assert (cfg.beta, cfg.theta, cfg.delta0, cfg.max_armijo) == (0.5, 0.5, 10.0, 60)


def test_delta_schedules():
    it = delta_schedule(10.0, "harmonic")
    assert [next(it) for _ in range(3)] == pytest.approx([10.0, 5.0, 10 / 3], rel=1e-15)
    it = delta_schedule(10.0, "halve")
    assert [next(it) for _ in range(4)] == [10.0, 5.0, 2.5, 1.25]


# --------------------------------------------------------------------------- Armijo

def test_armijo_t1_first_step_halves():
    prob = t1()

    def f(w):
        return objective(prob, w).total

    w0 = prob.zero_point()
    p = Point([9.0, 0.0], [9.0])
    # brute-force line scan of the rule: f(t) = -81 t + 81 t^2
    for j, ok in [(0, False), (1, True)]:
        t = 0.5 ** j
        assert (f(w0 + t * p) <= f(w0) - 0.5 * t * 40.5) is ok
    step, w = armijo_step(f, w0, p, 40.5)
    assert step == 0.5
    assert w.x.tolist() == [4.5, 0.0] and w.y.tolist() == [4.5]


def test_armijo_full_step_on_flat_quadratic():
    phi, eps = 2.0, 1e-3
    step, new = armijo_step(lambda t: -phi * t + eps * t * t, 0.0, 1.0, phi)
    assert step == 1.0 and new == 1.0


def test_armijo_contract_and_failure():
    with pytest.raises(ValueError):
        backtrack(lambda t: -t, 0.0)
    with pytest.raises(LineSearchError, match="no Armijo step"):
        backtrack(lambda t: t, 1.0, max_trials=5)


@pytest.mark.parametrize("engine", ["python", "compiled"])
def test_too_few_armijo_trials_is_an_error(engine):
    with pytest.raises(LineSearchError):
        solve_pl(t1(), SolverConfig(max_armijo=1, engine=engine))


# --------------------------------------------------------------------------- PL

def test_pl_t1_reaches_the_analytic_solution():
    """Per-op example: Delta <= 1e-6 gives the T1 solution within 1e-4."""
    res = solve_pl(t1(), SolverConfig(accuracy=1e-6, max_block_iters=10**8))
    assert res.converged
    assert np.abs(res.point.x - EQ["x"]).max() <= 1e-4
    assert abs(res.point.y[0] - EQ["y"][0]) <= 1e-4
    assert abs(res.prices[0] - EQ["lam"]) <= 1e-4


@pytest.mark.parametrize("method", [solve_pl, solve_cpl])
def test_t1_solution_verifies_at_gap_tied_tolerance(method):
    res = method(t1(), SolverConfig(accuracy=1e-4))
    assert res.converged and res.accuracy <= 1e-4
    assert res.report.ok
    tol = 10 * math.sqrt(res.accuracy)
    assert abs(res.prices[0] - 13 / 3) <= tol
    assert np.abs(res.point.x - EQ["x"]).max() <= tol


@pytest.mark.parametrize("method", [solve_pl, solve_cpl])
@pytest.mark.parametrize("engine", ["python", "compiled"])
def test_start_at_solution_costs_nothing(method, engine):
    start = Point(EQ["x"], EQ["y"])
    res = method(t1(), SolverConfig(engine=engine), start=start)
    assert res.converged and res.block_iterations == 0
    assert res.accuracy <= 1e-12


def test_pl_w1_matches_the_grid_oracle():
    res = solve_pl(w1(), SolverConfig(accuracy=2e-6, max_block_iters=10**7))
    assert res.converged
    # the demand split converges like sqrt(gap); provider offers much faster
    tol = 10 * math.sqrt(res.accuracy)
    assert np.abs(res.point.x - W1_X).max() < 1e-3
    assert np.abs(res.point.y - W1_Y).max() < tol
    assert res.prices[0] == pytest.approx(5.0, abs=tol)


def test_budget_exhaustion_returns_flagged_iterate():
    for method in (solve_pl, solve_cpl):
        res = method(t1(), SolverConfig(accuracy=0.0, max_block_iters=50))
        assert res.status == BUDGET and not res.converged
        assert res.block_iterations <= 50
        assert "budget" in res.trace.message
        assert t1().feasibility_error(res.point) <= 1e-10


def test_compiled_engine_rejects_custom_forms():
    net = Network(("o", "d"), (("o", "d"),), (power(1, 1, 2),))
    prob = NetworkProblem(net, (OdPair("o", "d", ((0,),), (Buyer(affine(9, -1), 9.0),)),))
    with pytest.raises(ValueError, match="compiled engine"):
        solve_pl(prob, SolverConfig(engine="compiled"))
    res = solve_pl(prob, SolverConfig(accuracy=1e-8))
    assert res.converged and res.report.ok
    # cost 1 + f^2 meets 9 - y at f = y: f^2 + f - 8 = 0
    assert res.point.y[0] == pytest.approx((-1 + math.sqrt(33)) / 2, abs=1e-3)


def test_infinite_caps_rejected_by_solvers():
    net = Network(("o", "d"), (("o", "d"),), (affine(1, 1),))
    prob = NetworkProblem(net, (OdPair("o", "d", ((0,),), (Buyer(affine(9, -1), INF),)),))
    with pytest.raises(ValueError, match="finite buyer caps"):
        solve_pl(prob)


# --------------------------------------------------------------------------- CPL

@pytest.mark.parametrize("engine", ["python", "compiled"])
def test_cpl_on_one_block_takes_the_pl_steps(engine):
    cfg = SolverConfig(accuracy=1e-3, engine=engine)
    pl, cpl = solve_pl(t1(), cfg), solve_cpl(t1(), cfg)
    steps_pl = pl.trace.column("step")[~np.isnan(pl.trace.column("step"))]
    kinds = cpl.trace.column("kind")
    steps_cpl = cpl.trace.column("step")[kinds == STEP]
    assert np.array_equal(steps_pl, steps_cpl)
    assert pl.block_iterations == cpl.block_iterations
    assert np.array_equal(pl.point.x, cpl.point.x)


def test_cpl_solves_independent_copies_separately():
    cfg = SolverConfig(accuracy=1e-5)
    res = solve_cpl(t1_twice(), cfg)
    assert res.converged and res.report.ok
    single = solve_cpl(t1(), cfg)
    # error scales like sqrt(gap) on this instance
    tol = 10 * math.sqrt(1e-5)
    for s in range(2):
        xs = res.point.x[2 * s:2 * s + 2]
        assert np.abs(xs - EQ["x"]).max() < tol
        assert abs(res.point.y[s] - EQ["y"][0]) < tol
        assert np.abs(xs - single.point.x).max() < tol


def test_cpl_restarts_follow_the_harmonic_rule():
    res = solve_cpl(t1_twice(), SolverConfig(accuracy=1e-3))
    kinds = res.trace.column("kind")
    levels = res.trace.column("level")[kinds == RESTART][1:]
    tols = res.trace.column("tolerance")[kinds == RESTART][1:]
    assert np.allclose(tols, 10.0 / levels, rtol=1e-15)


def test_cpl_restart_correctness(monkeypatch):
    """At every restart, each block's last check in the sweep was a skip below delta."""
    checks = []
    original = solvers._NetworkModel.direction

    def spy(self, w, s):
        d = original(self, w, s)
        checks.append((s, d.gap))
        return d

    monkeypatch.setattr(solvers._NetworkModel, "direction", spy)
    prob = generate_network(3, nodes=6, arcs=14, od_pairs=3, paths_per_pair=3)
    res = solve_cpl(prob, SolverConfig(accuracy=1e-4, engine="python"))
    assert res.converged
    n = prob.n_blocks
    rows = list(res.trace.rows())
    restarts = [r for r in rows if r["kind"] == "restart"][1:]
    assert restarts
    # replay: walk the checks, cutting the log at every run of n skips
    k = 0
    for r in restarts:
        delta = r["tolerance"]
        run = []
        while len(run) < n:
            s, gap = checks[k]
            k += 1
            run = run + [(s, gap)] if gap < delta or gap == 0 else []
        assert sorted(s for s, _ in run) == list(range(n))
        assert all(g < delta for _, g in run)
        assert r["accuracy"] == pytest.approx(sum(g for _, g in run), rel=1e-12, abs=1e-15)


# --------------------------------------------------------------------------- invariants

def collect(method, prob, cfg):
    seen = []
    res = method(prob, cfg, callback=lambda w, info: seen.append((w.copy(), dict(info))))
    return res, seen


@settings(max_examples=15, deadline=None)
@given(seeds, st.sampled_from(["pl", "cpl"]))
def test_descent_feasibility_and_accounting(seed, method):
    rng = np.random.default_rng(seed)
    prob = generate_network(int(rng.integers(100)), nodes=6, arcs=14, od_pairs=3,
                            paths_per_pair=3)
    raw = RawNetwork.of(prob)
    fn = solve_pl if method == "pl" else solve_cpl
    res, seen = collect(fn, prob, SolverConfig(accuracy=1e-3, max_block_iters=3000))
    assert seen
    start = initial_point(prob)

    def f(w):
        return raw.potential(np.split(w.x, prob.path_offsets[1:-1]),
                             np.split(w.y, prob.buyer_offsets[1:-1]))

    prev = f(start)
    for w, info in seen:
        cur = f(w)
        assert info["gap"] > 0
        assert cur <= prev - 0.5 * info["step"] * info["gap"] + 1e-11 * (1 + abs(prev))
        assert prob.feasibility_error(w) <= 1e-10
        prev = cur
    gaps = res.trace.column("gap")
    assert np.all(gaps[~np.isnan(gaps)] >= 0)
    iters = res.trace.column("block_iters")
    kinds = res.trace.column("kind")
    if method == "pl":
        assert np.all(np.diff(iters) == prob.n_blocks)
    else:
        assert np.array_equal(iters[kinds == STEP], np.arange(1, (kinds == STEP).sum() + 1))
    obj = res.trace.column("objective")
    assert np.all(np.diff(obj[~np.isnan(obj)]) <= 1e-12 * (1 + np.abs(obj).max()))


def test_zero_gap_means_equilibrium():
    net = Network(("o", "d"), (("o", "d"), ("o", "d")), (affine(12, 1), affine(15, 1)))
    prob = NetworkProblem(net, (OdPair("o", "d", ((0,), (1,)), (Buyer(affine(10, -1), 10),)),))
    for method in (solve_pl, solve_cpl):
        res = method(prob, SolverConfig(accuracy=0.0))
        assert res.accuracy == 0.0 and res.converged
        assert check_equilibrium(prob, res.point, 1e-8).ok


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_small_gap_means_near_equilibrium(seed):
    rng = np.random.default_rng(seed)
    prob = random_small_network(rng, 2, 2)
    res = solve_pl(prob, SolverConfig(accuracy=1e-3, max_block_iters=10**7))
    assert res.converged
    # prices move like sqrt(gap) near the solution
    assert check_equilibrium(prob, res.point, 10 * math.sqrt(max(res.accuracy, 1e-12))).ok


@pytest.mark.parametrize("method", ["pl", "cpl"])
def test_traces_are_deterministic(method):
    fn = solve_pl if method == "pl" else solve_cpl
    prob = generate_network(11, nodes=8, arcs=20, od_pairs=3, paths_per_pair=5)
    cfg = SolverConfig(accuracy=1e-3)
    assert trace_text(fn(prob, cfg)) == trace_text(fn(prob, cfg))


@pytest.mark.parametrize("method", ["pl", "cpl"])
@pytest.mark.parametrize("rule", ["harmonic", "halve"])
def test_engines_agree(method, rule):
    fn = solve_pl if method == "pl" else solve_cpl
    prob = generate_network(5, nodes=8, arcs=20, od_pairs=3, paths_per_pair=5)
    base = SolverConfig(accuracy=1e-3, delta_rule=rule)
    a = fn(prob, SolverConfig(**{**base.__dict__, "engine": "python"}))
    b = fn(prob, SolverConfig(**{**base.__dict__, "engine": "compiled"}))
    assert a.block_iterations == b.block_iterations
    assert np.array_equal(a.trace.column("step"), b.trace.column("step"), equal_nan=True)
    assert np.allclose(a.trace.column("gap"), b.trace.column("gap"), rtol=1e-9, atol=1e-12,
                       equal_nan=True)
    assert np.allclose(a.point.x, b.point.x, rtol=1e-9, atol=1e-12)


# --------------------------------------------------------------------------- penalty loop

def test_inactive_caps_take_one_stage():
    res = solve_penalized(w1(alpha1=10.0), SolverConfig(accuracy=2e-6, max_block_iters=10**7))
    assert res.status == CONVERGED and len(res.stages) == 1
    assert res.violation == 0.0
    assert np.abs(res.point.x - W1_X).max() < 1e-3


def test_short_schedule_flags_the_violation():
    res = solve_penalized(w1(alpha1=1.0), SolverConfig(accuracy=1e-4),
                          PenaltyConfig(taus=(10.0,), max_violation=1e-6))
    assert res.status == VIOLATION
    assert res.violation > 1e-2
    assert res.trace.status == VIOLATION


def test_penalty_budget_is_shared():
    res = solve_penalized(w1(alpha1=1.0), SolverConfig(accuracy=1e-12, max_block_iters=500),
                          PenaltyConfig(max_violation=0.0))
    assert res.status == BUDGET
    assert res.block_iterations <= 500


def test_penalty_stages_record_targets():
    res = solve_penalized(w1(alpha1=1.0), SolverConfig(accuracy=1e-4),
                          PenaltyConfig(gap_factor=0.1, stage_budget=10_000, max_violation=0.0))
    targets = [s["target"] for s in res.stages]
    taus = [s["tau"] for s in res.stages]
    assert targets == [max(1e-4, 0.1 / t) for t in taus]
    iters = [s["block_iters"] for s in res.stages]
    assert iters == sorted(iters)
