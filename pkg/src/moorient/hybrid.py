"""The selection/routing loop: an evolutionary engine proposes city subsets,
the trained routing policy orders each subset, and the resulting circuit
length feeds the budget constraint (and, in mixed/three-objective settings,
the final objective). Also hosts the pure-evolutionary baselines that work
directly on permutation codings.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import moea
from . import pointer_net as pn
from .instances import Instance
from .metrics import hypervolume, pareto_filter
from .objectives import EvaluatedSolution, evaluate


@dataclass
class HybridConfig:
    pop_size: int = 100
    max_generations: int = 20
    engine: str = "nsga2"  # nsga2 | nsga3
    seed: int = 0
    include_length: bool = True  # False restricts search objectives to the profits
    ref: tuple[float, ...] | None = None  # hypervolume reference, optional
    track_hv: bool = False  # record the per-generation hypervolume trace


@dataclass
class RunResult:
    objectives: np.ndarray  # feasible non-dominated vectors (maximization)
    routes: list[tuple[int, ...]]
    selections: list[tuple[int, ...]]
    hv: float | None
    hv_trace: list[float]
    wall_time: float
    evaluated: int  # pop_size * (generations + 1): initial population included

    def sorted_rows(self) -> list[tuple[tuple[float, ...], tuple[int, ...]]]:
        rows = [
            (tuple(float(v) for v in obj), route)
            for obj, route in zip(self.objectives, self.routes)
        ]
        rows.sort(key=lambda r: ([-v for v in r[0]], r[1]))
        return rows


def _search_objectives(sol: EvaluatedSolution, include_length: bool, k_profits: int) -> np.ndarray:
    return sol.objectives if include_length else sol.objectives[:k_profits]


def rotate_to_depot(subset: np.ndarray, order: np.ndarray) -> list[int]:
    """Map decoded positions back to city ids, rotated to start at the depot."""
    cities = subset[order]
    at = int(np.flatnonzero(cities == 0)[0])
    rotated = np.concatenate([cities[at:], cities[:at]])
    return [int(c) for c in rotated[1:]]


class RouteCache:
    """Greedy-decoded routes keyed by the selection bit pattern."""

    def __init__(self, inst: Instance, actor: pn.ActorParams):
        self.inst = inst
        self.actor = actor
        self._cache: dict[bytes, EvaluatedSolution] = {}

    def evaluate_genome(self, bits: np.ndarray) -> EvaluatedSolution:
        key = np.packbits(bits).tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        sol = route_selection(self.inst, bits, self.actor)
        self._cache[key] = sol
        return sol


def route_selection(inst: Instance, bits: np.ndarray, actor: pn.ActorParams) -> EvaluatedSolution:
    """Decode a circuit for {depot} + selected cities and evaluate it."""
    selected = np.flatnonzero(bits) + 1
    if selected.size == 0:
        return evaluate(inst, [0], [])
    subset = np.concatenate([[0], selected])
    try:
        decoded = pn.decode_tour(actor, inst.coords[subset], mode="greedy")
    except Exception as exc:  # pragma: no cover - decode is total by construction
        raise RuntimeError(f"route decoding failed for selection {selected.tolist()}: {exc}") from exc
    tour = rotate_to_depot(subset, decoded.order)
    return evaluate(inst, [0] + tour, tour)


def evaluate_population(
    inst: Instance, genomes: list[np.ndarray], actor: pn.ActorParams, *, include_length: bool = True, cache: RouteCache | None = None
) -> list[moea.Individual]:
    cache = cache or RouteCache(inst, actor)
    out = []
    for bits in genomes:
        sol = cache.evaluate_genome(bits)
        out.append(
            moea.Individual(
                genome=bits,
                objectives=_search_objectives(sol, include_length, inst.k_profits),
                cv=sol.cv,
                solution=sol,
            )
        )
    return out


def _feasible_front(population: list[moea.Individual]) -> list[moea.Individual]:
    feasible = [ind for ind in population if ind.cv == 0.0]
    if not feasible:
        return []
    objs = np.asarray([ind.objectives for ind in feasible])
    cvs = np.zeros(len(feasible))
    ranks = moea.nondominated_sort(objs, cvs)
    front = [feasible[i] for i in np.flatnonzero(ranks == 0)]
    seen: set[tuple] = set()
    unique = []
    for ind in front:
        key = tuple(ind.objectives.tolist())
        if key not in seen:
            seen.add(key)
            unique.append(ind)
    return unique


def _front_hv(population: list[moea.Individual], ref: tuple[float, ...] | None) -> float | None:
    if ref is None:
        return None
    front = _feasible_front(population)
    if not front:
        return 0.0
    return hypervolume(np.asarray([ind.objectives for ind in front]), np.asarray(ref))


def _finish(population, ref, t0, evaluated, n_obj) -> RunResult:
    front = _feasible_front(population)
    objectives = np.asarray([ind.objectives for ind in front]) if front else np.zeros((0, n_obj))
    return RunResult(
        objectives=objectives,
        routes=[ind.solution.tour for ind in front],
        selections=[ind.solution.selection for ind in front],
        hv=_front_hv(population, ref),
        hv_trace=[],
        wall_time=time.perf_counter() - t0,
        evaluated=evaluated,
    )


def run_moea_drl(inst: Instance, config: HybridConfig, actor: pn.ActorParams) -> RunResult:
    """Greedy-seeded selection search with learned routing, per the fixed budget."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    cache = RouteCache(inst, actor)
    genomes = moea.greedy_initialize(inst, config.pop_size, rng)
    population = evaluate_population(inst, genomes, actor, include_length=config.include_length, cache=cache)
    n_obj = len(population[0].objectives)
    engine = moea.Engine.create(config.engine, config.pop_size, n_obj)

    def evaluator(children):
        return evaluate_population(inst, children, actor, include_length=config.include_length, cache=cache)

    trace_ref = config.ref if config.track_hv else None
    trace = [_front_hv(population, trace_ref)]
    for _ in range(config.max_generations):
        population = moea.moea_generation(engine, population, evaluator, moea.vary_binary, rng)
        trace.append(_front_hv(population, trace_ref))
    result = _finish(population, config.ref, t0, config.pop_size * (config.max_generations + 1), n_obj)
    result.hv_trace = [t for t in trace if t is not None]
    return result


def run_pure_moea(inst: Instance, config: HybridConfig, coding: str = "single") -> RunResult:
    """Direct evolutionary baseline on permutation codings (no routing model)."""
    if coding not in ("single", "double"):
        raise ValueError(f"unknown coding {coding!r}")
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)

    if coding == "single":
        genomes = moea.random_permutations(inst, config.pop_size, rng)
        decode = lambda g: moea.decode_single_chromosome(inst, g)
        vary = moea.vary_permutation
    else:
        genomes = moea.random_double_genomes(inst, config.pop_size, rng)
        decode = lambda g: moea.decode_double_chromosome(inst, g[0], g[1])
        vary = moea.vary_double

    def evaluator(children):
        out = []
        for g in children:
            sol = decode(g)
            out.append(
                moea.Individual(
                    genome=g,
                    objectives=_search_objectives(sol, config.include_length, inst.k_profits),
                    cv=sol.cv,
                    solution=sol,
                )
            )
        return out

    population = evaluator(genomes)
    n_obj = len(population[0].objectives)
    engine = moea.Engine.create(config.engine, config.pop_size, n_obj)
    trace_ref = config.ref if config.track_hv else None
    trace = [_front_hv(population, trace_ref)]
    for _ in range(config.max_generations):
        population = moea.moea_generation(engine, population, evaluator, vary, rng)
        trace.append(_front_hv(population, trace_ref))
    result = _finish(population, config.ref, t0, config.pop_size * (config.max_generations + 1), n_obj)
    result.hv_trace = [t for t in trace if t is not None]
    return result
