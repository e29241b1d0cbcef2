import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marketeq import (Buyer, Network, NetworkProblem, OdPair, Point, Provider, UserClass,
                      WirelessProblem, affine, block_gradient, check_equilibrium, custom,
                      objective, verify_equilibrium)
from marketeq.costs import MonotonicityError
from marketeq.instances import generate_network
from marketeq.objective import SolverInputError, line_decrease, validate_for_solver
from marketeq.wireless import to_market as wireless_market

from models import random_small_network, random_small_wireless, t1, w1
from oracles import (RawNetwork, RawWireless, central_gradient, grid_network_single,
                     grid_wireless, qp_network, t1_kkt)

seeds = st.integers(0, 2**32 - 1)


def split(prob, v):
    return np.split(v, prob.path_offsets[1:-1])


def test_zero_point_has_zero_objective():
    val = objective(t1(), t1().zero_point())
    assert (val.total, val.mu, val.eta) == (0.0, 0.0, 0.0)


def test_t1_corner_value():
    val = objective(t1(), Point([9.0, 0.0], [9.0]))
    assert val.mu == pytest.approx(9 + 40.5)
    assert val.demand_benefit == pytest.approx(90 - 40.5)
    assert val.total == pytest.approx(0.0, abs=1e-12)
    assert val.total == val.mu + val.eta


def test_t1_equilibrium_value_is_the_qp_minimum():
    raw = RawNetwork.of(t1())
    xs, ys = qp_network(raw)
    qp_min = raw.potential(xs, ys)
    eq = t1_kkt()
    val = objective(t1(), Point(eq["x"], eq["y"]))
    assert val.total == pytest.approx(qp_min, abs=1e-8)
    assert val.total == pytest.approx(raw.potential([eq["x"]], [eq["y"]]), rel=1e-14)


def test_wireless_objective_with_penalty():
    prob = w1(alpha1=1.0)
    w = Point([3.0, 1.0], [2.0, 2.0])
    raw = RawWireless.of(prob)
    base = float(raw.potential(w.x[:, None], w.y[:, None])[0])
    assert objective(prob, w).total == pytest.approx(base, rel=1e-14)
    assert objective(prob, w, tau=10.0).total == pytest.approx(base + 10 * 0.5 * 4, rel=1e-14)


def test_block_gradient_examples():
    g = block_gradient(t1(), t1().zero_point())
    assert g.x.tolist() == [1.0, 2.0] and g.y.tolist() == [0.0]
    x = np.array([1.0, 3.0])
    gw = block_gradient(w1(), Point(x, [2.0, 2.0]))
    assert gw.x == pytest.approx([1 + 1 + 0.25 * 4, 1.5 + 0.75 + 0.25 * 4])
    with pytest.raises(IndexError):
        block_gradient(w1(), Point(x, [2.0, 2.0]), s=1)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_network_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    prob = generate_network(int(rng.integers(50)), nodes=6, arcs=14, od_pairs=3,
                            paths_per_pair=4)
    raw = RawNetwork.of(prob)
    x = rng.uniform(0, 5, prob.n_paths)
    w = Point(x, np.zeros(prob.n_buyers))

    def mu(z):
        return raw.potential(split(prob, z), [np.zeros(len(h)) for h in raw.h0])

    fd = central_gradient(mu, x, 1e-5)
    got = np.concatenate([block_gradient(prob, w, s).x for s in range(prob.n_blocks)])
    assert np.all(np.abs(got - fd) <= 1e-6 * np.abs(fd))


@settings(max_examples=50, deadline=None)
@given(seeds, st.floats(0, 1))
def test_objective_is_convex_along_segments(seed, t):
    rng = np.random.default_rng(seed)
    prob = random_small_network(rng, 2, 2)
    caps = prob.caps

    def feasible():
        y = rng.uniform(0, 1, 2) * caps
        share = rng.random()
        return Point([share * y.sum(), (1 - share) * y.sum()], y)

    a, b = feasible(), feasible()
    mid = t * a + (1 - t) * b
    fa, fb, fm = (objective(prob, v).total for v in (a, b, mid))
    assert fm <= t * fa + (1 - t) * fb + 1e-9 * (1 + abs(fa) + abs(fb))


@settings(max_examples=50, deadline=None)
@given(seeds, st.floats(0, 1))
def test_line_decrease_matches_objective_difference(seed, t):
    rng = np.random.default_rng(seed)
    prob = random_small_wireless(rng, 2, 2, cap_first=True)
    w = Point(rng.uniform(0, 3, 2), np.zeros(2))
    w.y[:] = w.x.sum() / 2
    v = Point(rng.uniform(0, 3, 2), np.zeros(2))
    v.y[:] = v.x.sum() / 2
    p = v - w
    tau = 100.0
    dec = line_decrease(prob, w, p, tau)(t)
    direct = objective(prob, w + t * p, tau).total - objective(prob, w, tau).total
    assert dec == pytest.approx(direct, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_grid_minimizer_satisfies_equilibrium_conditions(seed):
    rng = np.random.default_rng(seed)
    if seed % 2:
        prob = random_small_network(rng, 2, 2)
        x, y = grid_network_single(RawNetwork.of(prob))
        rep = check_equilibrium(prob, Point(x, y), 1e-3)
    else:
        prob = random_small_wireless(rng, 2, 2)
        x, y = grid_wireless(RawWireless.of(prob))
        rep = verify_equilibrium(wireless_market(prob), Point(x, y), 1e-3, active_tol=1e-3)
    assert rep.ok, rep.violation


def test_validation_for_solvers():
    net = Network(("o", "d"), (("o", "d"),), (affine(1, 1),))
    uncapped = NetworkProblem(net, (OdPair("o", "d", ((0,),), (Buyer(affine(9, -1)),)),))
    with pytest.raises(SolverInputError, match="finite buyer caps"):
        validate_for_solver(uncapped)
    wavy = Network(("o", "d"), (("o", "d"),), (custom(lambda f: 5 - f),))
    bad = NetworkProblem(wavy, (OdPair("o", "d", ((0,),), (Buyer(affine(9, -1), 9.0),)),))
    with pytest.raises(MonotonicityError, match="arc 0"):
        validate_for_solver(bad)
    rising = NetworkProblem(net, (OdPair("o", "d", ((0,),), (Buyer(affine(9, 1), 9.0),)),))
    with pytest.raises(MonotonicityError, match="buyer 0"):
        validate_for_solver(rising)
    joint = NetworkProblem(Network(("o", "d"), (("o", "d"),), joint_cost=lambda f: f),
                           (OdPair("o", "d", ((0,),), (Buyer(affine(9, -1), 9.0),)),))
    with pytest.raises(SolverInputError, match="separable"):
        validate_for_solver(joint)
    with pytest.raises(SolverInputError, match="penalized"):
        validate_for_solver(w1(alpha1=1.0))
    validate_for_solver(w1(alpha1=1.0), penalized=True)
    nonint = WirelessProblem((Provider(affine(1, 1)),), (UserClass(affine(9, -1), 9.0),),
                             lambda x: x)
    with pytest.raises(SolverInputError, match="potential"):
        validate_for_solver(nonint)
    neg = WirelessProblem((Provider(affine(1, 1)),), (UserClass(affine(9, -1), 9.0),), -1.0)
    with pytest.raises(MonotonicityError, match="congestion"):
        validate_for_solver(neg)
    with pytest.raises(SolverInputError):
        validate_for_solver(object())
