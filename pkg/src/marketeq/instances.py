"""Instance files and random generators.

An instance file is one JSON document::

    {"kind": "network",
     "nodes": [...], "arcs": [[u, v], ...],
     "arc_costs": [{"form": "affine", "c0": 1.0, "c1": 1.0}, ...],
     "od_pairs": [{"origin": u, "destination": v,
                   "paths": [[arc ids], ...],
                   "buyers": [{"disutility": {...}, "cap": 60.0}, ...]}, ...],
     "generator": {"seed": 7, ...}}

``kind`` may also be ``"wireless"`` (``providers``, ``users``,
``congestion``) or ``"market"`` (``commodities`` with separable
participant prices).  Infinite caps are written as ``null``.
"""
from __future__ import annotations

import json
from collections import deque
from pathlib import Path
from typing import Any

import numpy as np

from . import costs as _costs
from .costs import affine
from .market import INF, CommodityBlock, MarketProblem, Participant
from .network import Buyer, Network, NetworkProblem, OdPair
from .wireless import Provider, UserClass, WirelessProblem

__all__ = [
    "GenerationError",
    "enumerate_paths",
    "generate_network",
    "generate_wireless",
    "to_dict",
    "from_dict",
    "dumps",
    "loads",
    "save",
    "load",
    "BENCHMARK_DISUTILITIES",
]

# the two buyer dis-utilities attached to every O/D pair in the benchmark runs
BENCHMARK_DISUTILITIES = ((30.0, 0.5), (28.0, 0.3))


class GenerationError(RuntimeError):
    pass


def enumerate_paths(arcs, origin, destination, limit: int = 50) -> list[tuple[int, ...]]:
    """Simple paths (as arc-id tuples) from ``origin`` to ``destination``.

    Paths come out in breadth-first order: by number of arcs, then in the
    order arcs are listed.  At most ``limit`` paths are returned.
    """
    out_arcs: dict[Any, list[int]] = {}
    for k, (u, _) in enumerate(arcs):
        out_arcs.setdefault(u, []).append(k)
    found: list[tuple[int, ...]] = []
    queue = deque([(origin, (), frozenset([origin]))])
    while queue and len(found) < limit:
        node, path, seen = queue.popleft()
        for a in out_arcs.get(node, ()):
            nxt = arcs[a][1]
            if nxt == destination:
                found.append(path + (a,))
                if len(found) == limit:
                    break
            elif nxt not in seen:
                queue.append((nxt, path + (a,), seen | {nxt}))
    return found


def _random_digraph(rng: np.random.Generator, nodes: int, arcs: int) -> list[tuple[int, int]]:
    if arcs < nodes:
        raise GenerationError("a strongly connected digraph needs at least as many arcs as nodes")
    if arcs > nodes * (nodes - 1):
        raise GenerationError("too many arcs for a simple digraph")
    order = rng.permutation(nodes)
    # a Hamiltonian cycle makes every node reach every other
    chosen = [(int(order[i]), int(order[(i + 1) % nodes])) for i in range(nodes)]
    taken = set(chosen)
    candidates = [(u, v) for u in range(nodes) for v in range(nodes)
                  if u != v and (u, v) not in taken]
    extra = rng.choice(len(candidates), size=arcs - nodes, replace=False)
    chosen += [candidates[i] for i in sorted(extra)]
    return chosen


def generate_network(seed: int, nodes: int = 20, arcs: int = 114, od_pairs: int = 10,
                     paths_per_pair: int = 50, buyers_per_pair: int = 2,
                     benchmark_buyers: bool = False, unit_arcs: bool = False,
                     max_tries: int = 20) -> NetworkProblem:
    """Random strongly connected network with elastic demand.

    Arc costs are ``c0 + c1 f`` with ``c0 ~ U[1, 10]``, ``c1 ~ U[0.5, 2]``
    (or ``1 + f`` with ``unit_arcs``).  Buyers get ``h(y) = h0 - h1 y`` with
    ``h0 ~ U[20, 40]``, ``h1 ~ U[0.1, 1]``; with ``benchmark_buyers`` each pair
    instead gets ``30 - 0.5 y`` and ``28 - 0.3 y`` (needs two buyers).  Each
    buyer's cap is ``h0 / h1``, the demand at which its dis-utility hits zero.
    """
    if benchmark_buyers and buyers_per_pair != 2:
        raise ValueError("the benchmark dis-utility pair needs buyers_per_pair == 2")
    if od_pairs > nodes * (nodes - 1):
        raise GenerationError("more O/D pairs than ordered node pairs")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        arc_list = _random_digraph(rng, nodes, arcs)
        flat = rng.choice(nodes * nodes, size=nodes * nodes, replace=False)
        pairs = [(int(k // nodes), int(k % nodes)) for k in flat if k // nodes != k % nodes]
        pairs = pairs[:od_pairs]
        path_sets = [enumerate_paths(arc_list, o, d, paths_per_pair) for o, d in pairs]
        if all(path_sets):
            break
    else:
        raise GenerationError(f"could not connect all O/D pairs after {max_tries} tries")
    if unit_arcs:
        arc_costs = [affine(1.0, 1.0) for _ in arc_list]
    else:
        c0 = rng.uniform(1.0, 10.0, len(arc_list))
        c1 = rng.uniform(0.5, 2.0, len(arc_list))
        arc_costs = [affine(a, b) for a, b in zip(c0, c1)]
    ods = []
    for (o, d), paths in zip(pairs, path_sets):
        if benchmark_buyers:
            coeffs = BENCHMARK_DISUTILITIES
        else:
            coeffs = list(zip(rng.uniform(20.0, 40.0, buyers_per_pair),
                              rng.uniform(0.1, 1.0, buyers_per_pair)))
        buyers = tuple(Buyer(affine(h0, -h1), h0 / h1) for h0, h1 in coeffs)
        ods.append(OdPair(o, d, tuple(paths), buyers))
    net = Network(tuple(range(nodes)), tuple(arc_list), tuple(arc_costs))
    return NetworkProblem(net, tuple(ods))


def generate_wireless(seed: int, providers: int = 3, users: int = 4,
                      congestion: float | None = None, capped: bool = False) -> WirelessProblem:
    """Random allocation problem with affine prices and dis-utilities.

    Provider base prices ``b_i(x) = b0 + b1 x`` with ``b0 ~ U[1, 5]``,
    ``b1 ~ U[0.2, 1]``; users ``h_j(y) = h0 - h1 y`` with ``h0 ~ U[15, 30]``,
    ``h1 ~ U[0.2, 1]`` and cap ``h0 / h1``.  With ``capped`` every provider
    gets a finite cap drawn from ``U[1, 10]``.
    """
    rng = np.random.default_rng(seed)
    b0 = rng.uniform(1.0, 5.0, providers)
    b1 = rng.uniform(0.2, 1.0, providers)
    h0 = rng.uniform(15.0, 30.0, users)
    h1 = rng.uniform(0.2, 1.0, users)
    c = float(rng.uniform(0.0, 0.2)) if congestion is None else float(congestion)
    caps = rng.uniform(1.0, 10.0, providers) if capped else np.full(providers, INF)
    return WirelessProblem(
        tuple(Provider(affine(a, b), float(k)) for a, b, k in zip(b0, b1, caps)),
        tuple(UserClass(affine(a, -b), a / b) for a, b in zip(h0, h1)),
        c,
    )


# --------------------------------------------------------------------------- serialization

def _num(v: float):
    return None if v == INF else float(v)


def _cap(v) -> float:
    return INF if v is None else float(v)


def _cost(fn) -> dict:
    if fn.form not in _costs.CUSTOM_FORMS:
        raise ValueError(f"cost form {fn.form!r} has no file representation")
    return fn.to_dict()


def to_dict(problem, generator: dict | None = None) -> dict:
    """Plain-data form of a problem (see the module docstring)."""
    if isinstance(problem, NetworkProblem):
        net = problem.network
        if not net.separable:
            raise ValueError("joint arc costs cannot be serialized")
        doc = {
            "kind": "network",
            "nodes": list(net.nodes),
            "arcs": [list(a) for a in net.arcs],
            "arc_costs": [_cost(c) for c in net.costs],
            "od_pairs": [{
                "origin": od.origin,
                "destination": od.destination,
                "paths": [list(p) for p in od.paths],
                "buyers": [{"disutility": _cost(b.disutility), "cap": _num(b.cap)}
                           for b in od.buyers],
            } for od in problem.od_pairs],
        }
    elif isinstance(problem, WirelessProblem):
        if callable(problem.congestion):
            raise ValueError("callable congestion cannot be serialized")
        doc = {
            "kind": "wireless",
            "providers": [{"price": _cost(p.price), "cap": _num(p.cap)}
                          for p in problem.providers],
            "users": [{"disutility": _cost(u.disutility), "cap": _num(u.cap)}
                      for u in problem.users],
            "congestion": float(problem.congestion),
        }
    else:
        raise TypeError(f"cannot serialize {type(problem).__name__}")
    if generator is not None:
        doc["generator"] = dict(generator)
    return doc


def _market_from_dict(doc: dict) -> MarketProblem:
    blocks, gs, hs = [], [], []
    for c in doc["commodities"]:
        traders = tuple(Participant(float(t.get("lower", 0.0)), _cap(t.get("upper")),
                                    t.get("label", f"trader[{len(gs) + i}]"))
                        for i, t in enumerate(c["traders"]))
        buyers = tuple(Participant(float(b.get("lower", 0.0)), _cap(b.get("upper")),
                                   b.get("label", f"buyer[{len(hs) + j}]"))
                       for j, b in enumerate(c["buyers"]))
        gs += [_costs.from_dict(t["price"]) for t in c["traders"]]
        hs += [_costs.from_dict(b["price"]) for b in c["buyers"]]
        blocks.append(CommodityBlock(traders, buyers, float(c.get("excess_demand", 0.0))))
    return MarketProblem.separable(blocks, gs, hs)


def from_dict(doc: dict):
    """Inverse of :func:`to_dict`; ``"market"`` documents give a :class:`MarketProblem`."""
    kind = doc.get("kind")
    if kind == "network":
        net = Network(tuple(doc["nodes"]), tuple(tuple(a) for a in doc["arcs"]),
                      tuple(_costs.from_dict(c) for c in doc["arc_costs"]))
        ods = tuple(OdPair(od["origin"], od["destination"],
                           tuple(tuple(p) for p in od["paths"]),
                           tuple(Buyer(_costs.from_dict(b["disutility"]), _cap(b.get("cap")))
                                 for b in od["buyers"]))
                    for od in doc["od_pairs"])
        return NetworkProblem(net, ods)
    if kind == "wireless":
        return WirelessProblem(
            tuple(Provider(_costs.from_dict(p["price"]), _cap(p.get("cap")))
                  for p in doc["providers"]),
            tuple(UserClass(_costs.from_dict(u["disutility"]), _cap(u["cap"]))
                  for u in doc["users"]),
            float(doc.get("congestion", 0.0)),
        )
    if kind == "market":
        return _market_from_dict(doc)
    raise ValueError(f"unknown instance kind {kind!r}")


def dumps(problem, generator: dict | None = None) -> str:
    return json.dumps(to_dict(problem, generator), indent=1, sort_keys=True)


def loads(text: str):
    return from_dict(json.loads(text))


def save(problem, path, generator: dict | None = None) -> None:
    Path(path).write_text(dumps(problem, generator) + "\n")


def load(path):
    return loads(Path(path).read_text())
