"""Objective vectors, tour length and feasibility for budgeted touring.

A solution selects a city subset S (always containing the depot) and orders
the non-depot part of S into a closed circuit depot -> ... -> depot. The
objective vector is kept in uniform maximization orientation: the k profit
sums followed by the negated circuit length.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .instances import Instance


@dataclass(frozen=True)
class EvaluatedSolution:
    selection: tuple[int, ...]  # sorted, includes the depot
    tour: tuple[int, ...]  # ordering of selection minus depot
    objectives: np.ndarray  # (k_profits + 1,) maximization: profits, -length
    cv: float  # max(0, length - t_max)

    @property
    def length(self) -> float:
        return -float(self.objectives[-1])

    @property
    def feasible(self) -> bool:
        return self.cv == 0.0


def _check_tour(inst: Instance, tour: Sequence[int]) -> np.ndarray:
    arr = np.asarray(tour, dtype=np.intp)
    if arr.size == 0:
        return arr
    if arr.min() < 1 or arr.max() >= inst.n_cities:
        raise ValueError(f"tour contains out-of-range or depot index: {tour}")
    if len(set(arr.tolist())) != arr.size:
        raise ValueError(f"tour contains duplicate cities: {tour}")
    return arr


def tour_length(inst: Instance, tour: Sequence[int]) -> float:
    """Length of the closed circuit depot -> tour[0] -> ... -> tour[-1] -> depot."""
    arr = _check_tour(inst, tour)
    if arr.size == 0:
        return 0.0
    path = inst.coords[np.concatenate(([0], arr, [0]))]
    legs = np.sqrt(((path[1:] - path[:-1]) ** 2).sum(axis=1))
    return float(legs.sum())


def profit_objectives(inst: Instance, selection: Iterable[int]) -> np.ndarray:
    """Per-criterion profit sums over the selected non-depot cities."""
    sel = set(int(c) for c in selection)
    if 0 not in sel:
        raise ValueError("selection must contain the depot (city 0)")
    idx = sorted(sel - {0})
    if any(c < 0 or c >= inst.n_cities for c in idx):
        raise ValueError(f"selection contains out-of-range city: {sorted(sel)}")
    if not idx:
        return np.zeros(inst.k_profits)
    return inst.profits[idx].sum(axis=0)


def evaluate(inst: Instance, selection: Iterable[int], tour: Sequence[int]) -> EvaluatedSolution:
    """Full evaluation of a (selection, tour) pair against the length budget."""
    sel = set(int(c) for c in selection)
    profits = profit_objectives(inst, sel)
    arr = _check_tour(inst, tour)
    if set(arr.tolist()) != sel - {0}:
        raise ValueError("tour must be a permutation of the selection minus the depot")
    length = tour_length(inst, arr)
    objectives = np.concatenate([profits, [-length]])
    cv = max(0.0, length - inst.t_max)
    return EvaluatedSolution(
        selection=tuple(sorted(sel)),
        tour=tuple(int(c) for c in arr),
        objectives=objectives,
        cv=cv,
    )
