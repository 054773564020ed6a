"""NSGA-II / NSGA-III machinery over binary and permutation genomes.

Objectives are maximization vectors throughout. Constraint handling is the
feasibility-first rule everywhere: any feasible solution dominates any
infeasible one, lower violation dominates among the infeasible, and Pareto
dominance applies among the feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .instances import Instance, distance_matrix
from .objectives import EvaluatedSolution, evaluate


# ---------------------------------------------------------------------------
# dominance and sorting


def dominates(obj_a: np.ndarray, cv_a: float, obj_b: np.ndarray, cv_b: float) -> bool:
    """Feasibility-first dominance between two maximization vectors."""
    if cv_a == 0.0 and cv_b > 0.0:
        return True
    if cv_a > 0.0 and cv_b == 0.0:
        return False
    if cv_a > 0.0 and cv_b > 0.0:
        return cv_a < cv_b
    return bool(np.all(obj_a >= obj_b) and np.any(obj_a > obj_b))


def dominance_matrix(objs: np.ndarray, cvs: np.ndarray) -> np.ndarray:
    """dom[i, j] is True when solution i dominates solution j."""
    objs = np.asarray(objs, dtype=np.float64)
    cvs = np.asarray(cvs, dtype=np.float64)
    feas = cvs == 0.0
    ge = np.all(objs[:, None, :] >= objs[None, :, :], axis=2)
    gt = np.any(objs[:, None, :] > objs[None, :, :], axis=2)
    pareto = ge & gt
    dom = (feas[:, None] & ~feas[None, :]) | (~feas[:, None] & ~feas[None, :] & (cvs[:, None] < cvs[None, :]))
    dom |= feas[:, None] & feas[None, :] & pareto
    return dom


def nondominated_sort(objs: np.ndarray, cvs: np.ndarray) -> np.ndarray:
    """Rank of every solution (0 = best front) under feasibility-first dominance."""
    n = len(cvs)
    dom = dominance_matrix(objs, cvs)
    counts = dom.sum(axis=0)
    ranks = np.full(n, -1, dtype=np.intp)
    current = np.flatnonzero(counts == 0)
    rank = 0
    remaining = counts.astype(np.int64)
    while current.size:
        ranks[current] = rank
        remaining[current] = -1
        released = dom[current].sum(axis=0)
        remaining -= released
        current = np.flatnonzero(remaining == 0)
        rank += 1
    return ranks


def fronts_from_ranks(ranks: np.ndarray) -> list[np.ndarray]:
    return [np.flatnonzero(ranks == r) for r in range(int(ranks.max()) + 1)]


def crowding_distance(objs: np.ndarray) -> np.ndarray:
    """NSGA-II crowding distances for the members of a single front.

    Boundary points get infinity; a constant objective column contributes
    nothing; sorting ties break by index for determinism.
    """
    objs = np.asarray(objs, dtype=np.float64)
    n, m = objs.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for k in range(m):
        order = np.lexsort((np.arange(n), objs[:, k]))
        col = objs[order, k]
        span = col[-1] - col[0]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        if span > 0:
            gaps = (col[2:] - col[:-2]) / span
            interior = order[1:-1]
            finite = np.isfinite(dist[interior])
            dist[interior[finite]] += gaps[finite]
    return dist


# ---------------------------------------------------------------------------
# NSGA-III reference directions and niching


def das_dennis_directions(n_obj: int, divisions: int) -> np.ndarray:
    """Simplex-lattice reference directions with the given number of divisions."""
    if divisions < 1:
        raise ValueError("divisions must be >= 1")
    points: list[list[float]] = []

    def rec(prefix: list[int], left: int, depth: int) -> None:
        if depth == n_obj - 1:
            points.append([v / divisions for v in prefix + [left]])
            return
        for v in range(left + 1):
            rec(prefix + [v], left - v, depth + 1)

    rec([], divisions, 0)
    return np.asarray(points, dtype=np.float64)


def divisions_for_population(pop_size: int, n_obj: int) -> int:
    """Largest division count whose lattice has at most pop_size points."""
    p = 1
    while math.comb(p + n_obj, n_obj - 1) <= pop_size:
        p += 1
    return p


def _normalize(objs: np.ndarray) -> np.ndarray:
    """Standard NSGA-III normalization (internally in minimization form)."""
    f = -np.asarray(objs, dtype=np.float64)  # to minimization
    ideal = f.min(axis=0)
    t = f - ideal
    m = f.shape[1]
    weights = np.full((m, m), 1e-6) + np.eye(m)
    extremes = np.array([int(np.argmin(np.max(t / weights[k], axis=1))) for k in range(m)])
    intercepts = None
    try:
        plane = np.linalg.solve(t[extremes], np.ones(m))
        if np.all(plane > 1e-12) and np.isfinite(plane).all():
            intercepts = 1.0 / plane
    except np.linalg.LinAlgError:
        intercepts = None
    if intercepts is None or np.any(intercepts < 1e-12):
        intercepts = t.max(axis=0)
    intercepts = np.where(intercepts < 1e-12, 1.0, intercepts)
    return t / intercepts


def _associate(norm: np.ndarray, ref_dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest reference line per point, by perpendicular distance."""
    unit = ref_dirs / np.linalg.norm(ref_dirs, axis=1, keepdims=True)
    proj = norm @ unit.T  # (n, r) scalar projections
    sq = (norm**2).sum(axis=1, keepdims=True)
    perp = np.sqrt(np.maximum(sq - proj**2, 0.0))
    niche = np.argmin(perp, axis=1)
    return niche, perp[np.arange(len(norm)), niche]


def nsga3_survival(
    objs: np.ndarray, cvs: np.ndarray, target: int, ref_dirs: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Indices of the surviving solutions under reference-direction niching."""
    n = len(cvs)
    if n <= target:
        return np.arange(n)
    ranks = nondominated_sort(objs, cvs)
    fronts = fronts_from_ranks(ranks)
    chosen: list[int] = []
    last = None
    for front in fronts:
        if len(chosen) + len(front) <= target:
            chosen.extend(front.tolist())
            if len(chosen) == target:
                return np.asarray(chosen, dtype=np.intp)
        else:
            last = front
            break
    pool = np.asarray(chosen + last.tolist(), dtype=np.intp)
    norm = _normalize(np.asarray(objs)[pool])
    niche, perp = _associate(norm, ref_dirs)
    n_chosen = len(chosen)
    counts = np.zeros(len(ref_dirs), dtype=np.int64)
    for j in niche[:n_chosen]:
        counts[j] += 1
    pending = {int(i) for i in range(n_chosen, len(pool))}
    active = np.ones(len(ref_dirs), dtype=bool)
    need = target - n_chosen
    picked: list[int] = []
    while need > 0:
        live = np.flatnonzero(active)
        jmin = live[counts[live] == counts[live].min()]
        j = int(rng.choice(jmin))
        members = sorted(i for i in pending if niche[i] == j)
        if not members:
            active[j] = False
            continue
        if counts[j] == 0:
            pick = min(members, key=lambda i: (perp[i], i))
        else:
            pick = int(members[rng.integers(len(members))])
        pending.remove(pick)
        picked.append(pick)
        counts[j] += 1
        need -= 1
    return np.asarray(chosen + [int(pool[i]) for i in picked], dtype=np.intp)


def nsga2_survival(objs: np.ndarray, cvs: np.ndarray, target: int) -> np.ndarray:
    """Indices surviving rank-then-crowding truncation."""
    n = len(cvs)
    if n <= target:
        return np.arange(n)
    ranks = nondominated_sort(objs, cvs)
    chosen: list[int] = []
    for front in fronts_from_ranks(ranks):
        if len(chosen) + len(front) <= target:
            chosen.extend(front.tolist())
            if len(chosen) == target:
                break
        else:
            crowd = crowding_distance(np.asarray(objs)[front])
            order = np.lexsort((front, -crowd))
            chosen.extend(front[order][: target - len(chosen)].tolist())
            break
    return np.asarray(chosen, dtype=np.intp)


# ---------------------------------------------------------------------------
# genomes, initialization and variation


def _stable_softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def density_probabilities(profit_sums: np.ndarray, dist_from_current: np.ndarray) -> np.ndarray:
    """Softmax of profit-to-distance ratios; the greedy initializer's sampler."""
    dens = profit_sums / np.maximum(dist_from_current, 1e-12)
    return _stable_softmax(dens)


def greedy_initialize(inst: Instance, pop_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Build selection bit-vectors by sampling profit-dense nearby cities.

    Each individual grows a path from the depot, sampling the next city from
    the softmax of profit densities, and stops as soon as the sampled
    insertion would push the closed circuit over the budget (return leg
    included).
    """
    if pop_size < 1:
        raise ValueError("pop_size must be >= 1")
    dists = distance_matrix(inst)
    profit_sums = inst.profits.sum(axis=1) if inst.k_profits else np.zeros(inst.n_cities)
    population = []
    for _ in range(pop_size):
        bits = np.zeros(inst.n_cities - 1, dtype=bool)
        unvisited = list(range(1, inst.n_cities))
        current = 0
        path_len = 0.0
        while unvisited:
            cand = np.asarray(unvisited)
            probs = density_probabilities(profit_sums[cand], dists[current, cand])
            pick = int(cand[np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right").clip(0, len(cand) - 1)])
            if path_len + dists[current, pick] + dists[pick, 0] > inst.t_max:
                break
            path_len += dists[current, pick]
            bits[pick - 1] = True
            unvisited.remove(pick)
            current = pick
        population.append(bits)
    return population


def random_permutations(inst: Instance, pop_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    return [rng.permutation(np.arange(1, inst.n_cities)) for _ in range(pop_size)]


def random_double_genomes(inst: Instance, pop_size: int, rng: np.random.Generator) -> list[tuple]:
    return [
        (rng.random(inst.n_cities - 1) < 0.5, rng.permutation(np.arange(1, inst.n_cities)))
        for _ in range(pop_size)
    ]


def two_point_crossover(a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    length = len(a)
    i, j = sorted(rng.integers(0, length + 1, size=2))
    child_a = a.copy()
    child_b = b.copy()
    child_a[i:j] = b[i:j]
    child_b[i:j] = a[i:j]
    return child_a, child_b


def bit_flip(bits: np.ndarray, rng: np.random.Generator, rate: float | None = None) -> np.ndarray:
    rate = 1.0 / len(bits) if rate is None else rate
    flips = rng.random(len(bits)) < rate
    return np.where(flips, ~bits, bits)


def vary_binary(
    parents: Sequence[np.ndarray], rng: np.random.Generator, *, p_crossover: float = 0.7, flip_rate: float | None = None
) -> list[np.ndarray]:
    """Two-point crossover then per-bit flips at the default 1/L rate."""
    if len(parents) % 2:
        raise ValueError("vary_binary needs an even number of parents")
    offspring: list[np.ndarray] = []
    for a, b in zip(parents[::2], parents[1::2]):
        if rng.random() < p_crossover:
            ca, cb = two_point_crossover(a, b, rng)
        else:
            ca, cb = a.copy(), b.copy()
        offspring.append(bit_flip(ca, rng, flip_rate))
        offspring.append(bit_flip(cb, rng, flip_rate))
    return offspring


def order_crossover(a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    length = len(a)
    i, j = sorted(rng.integers(0, length + 1, size=2))

    def ox(keep: np.ndarray, other: np.ndarray) -> np.ndarray:
        child = np.empty(length, dtype=keep.dtype)
        child[i:j] = keep[i:j]
        held = set(keep[i:j].tolist())
        filler = [c for c in other if c not in held]
        child[:i] = filler[:i]
        child[j:] = filler[i:]
        return child

    return ox(a, b), ox(b, a)


def inversion_mutation(perm: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    length = len(perm)
    out = perm.copy()
    if length < 2:
        return out
    i, j = sorted(rng.choice(length, size=2, replace=False))
    out[i : j + 1] = out[i : j + 1][::-1]
    return out


def vary_permutation(
    parents: Sequence[np.ndarray], rng: np.random.Generator, *, p_crossover: float = 0.7, p_inversion: float = 0.1
) -> list[np.ndarray]:
    """Order crossover plus inversion mutation; children stay permutations."""
    if len(parents) % 2:
        raise ValueError("vary_permutation needs an even number of parents")
    offspring: list[np.ndarray] = []
    for a, b in zip(parents[::2], parents[1::2]):
        if rng.random() < p_crossover:
            ca, cb = order_crossover(a, b, rng)
        else:
            ca, cb = a.copy(), b.copy()
        for child in (ca, cb):
            if rng.random() < p_inversion:
                child = inversion_mutation(child, rng)
            offspring.append(child)
    return offspring


def vary_double(parents: Sequence[tuple], rng: np.random.Generator) -> list[tuple]:
    """Vary both chromosomes: binary operators on bits, order-based on perms."""
    bits_children = vary_binary([p[0] for p in parents], rng)
    perm_children = vary_permutation([p[1] for p in parents], rng)
    return list(zip(bits_children, perm_children))


# ---------------------------------------------------------------------------
# chromosome decodings for the pure-MOEA baselines


def decode_single_chromosome(inst: Instance, perm: np.ndarray) -> EvaluatedSolution:
    """Visit the permutation prefix that fits the budget; feasible by construction.

    Walking the permutation, a city is appended only while the closed circuit
    through the accepted cities plus the return leg stays within the budget;
    the walk stops at the first violation.
    """
    coords = inst.coords
    tour: list[int] = []
    current = 0
    path_len = 0.0
    for city in perm:
        city = int(city)
        step = float(np.hypot(*(coords[city] - coords[current])))
        back = float(np.hypot(*(coords[city] - coords[0])))
        if path_len + step + back > inst.t_max:
            break
        path_len += step
        tour.append(city)
        current = city
    return evaluate(inst, [0] + tour, tour)


def decode_double_chromosome(inst: Instance, bits: np.ndarray, perm: np.ndarray) -> EvaluatedSolution:
    """Tour the selected cities in permutation order; no feasibility repair."""
    tour = [int(c) for c in perm if bits[int(c) - 1]]
    return evaluate(inst, [0] + tour, tour)


# ---------------------------------------------------------------------------
# one full generation


@dataclass
class Individual:
    genome: object
    objectives: np.ndarray  # search objectives, maximization
    cv: float
    solution: EvaluatedSolution


@dataclass
class Engine:
    """Survival policy: 'nsga2' crowding truncation or 'nsga3' niching."""

    kind: str
    pop_size: int
    ref_dirs: np.ndarray | None = None

    @classmethod
    def create(cls, kind: str, pop_size: int, n_obj: int) -> "Engine":
        if kind not in ("nsga2", "nsga3"):
            raise ValueError(f"unknown engine {kind!r}")
        dirs = None
        if kind == "nsga3":
            dirs = das_dennis_directions(n_obj, divisions_for_population(pop_size, n_obj))
        return cls(kind=kind, pop_size=pop_size, ref_dirs=dirs)

    def survive(self, objs: np.ndarray, cvs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "nsga2":
            return nsga2_survival(objs, cvs, self.pop_size)
        return nsga3_survival(objs, cvs, self.pop_size, self.ref_dirs, rng)


def _tournament(ranks, crowd, rng) -> int:
    i, j = rng.integers(len(ranks)), rng.integers(len(ranks))
    if ranks[i] != ranks[j]:
        return int(i if ranks[i] < ranks[j] else j)
    if crowd[i] != crowd[j]:
        return int(i if crowd[i] > crowd[j] else j)
    return int(i if rng.random() < 0.5 else j)


def moea_generation(
    engine: Engine,
    population: list[Individual],
    evaluator: Callable[[list], list[Individual]],
    vary: Callable[[list, np.random.Generator], list],
    rng: np.random.Generator,
) -> list[Individual]:
    """Binary-tournament mating, variation, evaluation, (mu + lambda) survival."""
    objs = np.asarray([ind.objectives for ind in population])
    cvs = np.asarray([ind.cv for ind in population])
    ranks = nondominated_sort(objs, cvs)
    crowd = np.zeros(len(population))
    for front in fronts_from_ranks(ranks):
        crowd[front] = crowding_distance(objs[front])
    n_parents = engine.pop_size + (engine.pop_size % 2)
    parents = [population[_tournament(ranks, crowd, rng)].genome for _ in range(n_parents)]
    offspring = evaluator(vary(parents, rng)[: engine.pop_size])
    combined = population + offspring
    all_objs = np.asarray([ind.objectives for ind in combined])
    all_cvs = np.asarray([ind.cv for ind in combined])
    survivors = engine.survive(all_objs, all_cvs, rng)
    return [combined[int(i)] for i in survivors]
