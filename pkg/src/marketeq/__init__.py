"""Partial-linearization solvers for two-sided market equilibrium problems."""
from .costs import ScalarCostFn, affine, bpr, custom, power
from .market import (INF, CommodityBlock, EquilibriumReport, MarketProblem, Participant, Point,
                     PriceInterval, project_to_block, verify_equilibrium, vi_residual)
from .network import (Buyer, FlowPoint, Network, NetworkProblem, OdPair, arc_flows,
                      check_equilibrium, path_costs)
from .wireless import PenaltyConfig, Provider, UserClass, WirelessProblem, penalized_gradient
from .objective import ObjectiveValue, block_gradient, objective
from .directions import BlockDirection, scalar_root, solve_block_network, solve_block_wireless
from .solvers import (PenaltyResult, SolveResult, SolverConfig, SolveTrace, armijo_step,
                      solve_cpl, solve_penalized, solve_pl)
from .instances import generate_network, generate_wireless, load, save
from .experiment import ExperimentSpec, MethodRun, run_experiment

__version__ = "0.1.0"
