"""Accuracy-threshold benchmarks: block iterations needed per method.

An experiment spec is a JSON document::

    {"instance": "net.json",                 # path, inline instance, or
                                             # {"generate": {"kind": "network", ...}}
     "thresholds": [0.2, 0.1, 0.05],         # strictly decreasing
     "config": {"max_block_iters": 5000000}, # shared SolverConfig fields
     "methods": ["pl",
                 {"method": "cpl", "label": "cpl-halve",
                  "config": {"delta_rule": "halve"}}]}

Every run stops at the smallest threshold (or its budget).  The table has
one row per threshold and one column per run, holding the cumulative block
iterations at the first iterate whose total gap is within the threshold.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import instances
from .solvers import SolverConfig, SolveResult, solve_cpl, solve_pl

__all__ = ["MethodRun", "ExperimentSpec", "ExperimentResult", "run_experiment",
           "load_spec"]

SOLVERS = {"pl": solve_pl, "cpl": solve_cpl}
CONFIG_FIELDS = {f.name for f in fields(SolverConfig)}


@dataclass(frozen=True)
class MethodRun:
    method: str
    label: str
    config: SolverConfig = SolverConfig()


@dataclass(frozen=True)
class ExperimentSpec:
    """A problem, the runs to compare, and the accuracy thresholds."""

    problem: object
    runs: tuple[MethodRun, ...]
    thresholds: tuple[float, ...]

    def __post_init__(self):
        th = tuple(float(t) for t in self.thresholds)
        object.__setattr__(self, "thresholds", th)
        if not th:
            raise ValueError("need at least one threshold")
        if any(t < 0 for t in th) or any(b >= a for a, b in zip(th, th[1:])):
            raise ValueError("thresholds must be nonnegative and strictly decreasing")
        if not self.runs:
            raise ValueError("need at least one method")
        labels = [r.label for r in self.runs]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate run labels in {labels}")
        for r in self.runs:
            if r.method not in SOLVERS:
                raise ValueError(f"unknown method {r.method!r}; expected one of {sorted(SOLVERS)}")


@dataclass
class ExperimentResult:
    thresholds: tuple[float, ...]
    labels: tuple[str, ...]
    counts: dict = field(default_factory=dict)   # label -> [int | None per threshold]
    results: dict = field(default_factory=dict)  # label -> SolveResult

    @property
    def complete(self) -> bool:
        return all(c is not None for row in self.counts.values() for c in row)

    def incomplete_runs(self, k: int) -> list[str]:
        return [lab for lab in self.labels if self.counts[lab][k] is None]

    def to_csv(self) -> str:
        """``accuracy,<run>...,unreached``; unreached cells are empty."""
        out = io.StringIO()
        wr = csv.writer(out, lineterminator="\n")
        wr.writerow(["accuracy", *self.labels, "unreached"])
        for k, t in enumerate(self.thresholds):
            cells = ["" if self.counts[lab][k] is None else self.counts[lab][k]
                     for lab in self.labels]
            wr.writerow([repr(t), *cells, " ".join(self.incomplete_runs(k))])
        return out.getvalue()

    def format(self) -> str:
        width = max(10, *(len(lab) + 2 for lab in self.labels))
        lines = ["accuracy".rjust(10) + "".join(lab.rjust(width) for lab in self.labels)]
        for k, t in enumerate(self.thresholds):
            cells = ["-" if self.counts[lab][k] is None else str(self.counts[lab][k])
                     for lab in self.labels]
            lines.append(f"{t:>10g}" + "".join(c.rjust(width) for c in cells))
        return "\n".join(lines)


def run_experiment(spec: ExperimentSpec, trace_dir=None) -> ExperimentResult:
    """Run every method and tabulate block iterations per threshold.

    With ``trace_dir`` each run's trace is written to ``<label>.jsonl``.
    """
    target = spec.thresholds[-1]
    out = ExperimentResult(spec.thresholds, tuple(r.label for r in spec.runs))
    for run in spec.runs:
        cfg = replace(run.config, accuracy=target)
        res: SolveResult = SOLVERS[run.method](spec.problem, cfg)
        out.results[run.label] = res
        out.counts[run.label] = [res.trace.first_reaching(t) for t in spec.thresholds]
        if trace_dir is not None:
            Path(trace_dir).mkdir(parents=True, exist_ok=True)
            with open(Path(trace_dir) / f"{run.label}.jsonl", "w") as fp:
                res.trace.write_jsonl(fp)
    return out


def _config(data: dict, base: SolverConfig = SolverConfig()) -> SolverConfig:
    unknown = set(data) - CONFIG_FIELDS
    if unknown:
        raise ValueError(f"unknown solver settings {sorted(unknown)}")
    return replace(base, **data)


def _problem(ref, base_dir: Path):
    if isinstance(ref, str):
        path = Path(ref)
        return instances.load(path if path.is_absolute() else base_dir / path)
    if isinstance(ref, dict) and "generate" in ref:
        params = dict(ref["generate"])
        kind = params.pop("kind", "network")
        gen = {"network": instances.generate_network,
               "wireless": instances.generate_wireless}.get(kind)
        if gen is None:
            raise ValueError(f"cannot generate instances of kind {kind!r}")
        return gen(**params)
    if isinstance(ref, dict):
        return instances.from_dict(ref)
    raise ValueError("instance must be a path, an inline instance or a generate block")


def spec_from_dict(doc: dict, base_dir=".") -> ExperimentSpec:
    base = _config(doc.get("config", {}))
    runs = []
    for m in doc.get("methods", ["pl", "cpl"]):
        if isinstance(m, str):
            m = {"method": m}
        runs.append(MethodRun(m["method"], m.get("label", m["method"]),
                              _config(m.get("config", {}), base)))
    return ExperimentSpec(_problem(doc["instance"], Path(base_dir)), tuple(runs),
                          tuple(doc["thresholds"]))


def load_spec(path) -> ExperimentSpec:
    """Read a spec file; relative instance paths resolve against its directory."""
    path = Path(path)
    return spec_from_dict(json.loads(path.read_text()), path.parent)
