"""Block iterations to reach each accuracy on a 20-node random network.

The instance has 114 arcs and 10 origin/destination pairs with up to 50
paths each.  Every pair has two buyers with dis-utilities ``30 - 0.5y`` and
``28 - 0.3y``.  PL updates every pair in each sweep; CPL skips pairs whose
gap is below the current tolerance and tightens the tolerance when all of
them are skipped.

Run with ``python demos/benchmark_table.py`` (under a minute).
"""
from marketeq import MethodRun, SolverConfig, generate_network, run_experiment
from marketeq.experiment import ExperimentSpec

problem = generate_network(1, benchmark_buyers=True)
print(f"{problem.n_paths} paths, {problem.n_buyers} buyers, {problem.n_blocks} pairs")

cfg = SolverConfig(max_block_iters=10**7)
spec = ExperimentSpec(problem,
                      (MethodRun("pl", "pl", cfg),
                       MethodRun("cpl", "cpl", cfg),
                       MethodRun("cpl", "cpl-halve", SolverConfig(delta_rule="halve",
                                                                  max_block_iters=10**7))),
                      thresholds=(1.0, 0.5, 0.2, 0.1, 0.05))
result = run_experiment(spec)
print(result.format())
