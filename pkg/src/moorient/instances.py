"""Random orienteering/TSP instances on the unit square, with JSON persistence.

All randomness for instance data comes from SplitMix64 in counter mode, so a
given (n_cities, k_profits, seed) triple regenerates bit-identical data on any
platform, independent of numpy's own generators.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


class InstanceFormatError(ValueError):
    """Raised when an instance file is missing or corrupts a field."""


def splitmix64_uniforms(seed: int, count: int) -> np.ndarray:
    """First `count` doubles in [0, 1) of the SplitMix64 stream for `seed`.

    Draw i mixes the state seed + (i+1) * golden-ratio increment, which makes
    the stream a pure function of (seed, i) and lets it vectorize. Doubles use
    the usual top-53-bits construction.
    """
    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(seed & _MASK64) + idx * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True, eq=False)
class Instance:
    """One problem instance: city coordinates, per-city profits, length budget.

    City 0 is the depot. Its profit row is generated like any other city's but
    is ignored by all objective computations.
    """

    name: str
    n_cities: int
    k_profits: int
    coords: np.ndarray  # (n_cities, 2) in [0, 1]^2
    profits: np.ndarray  # (n_cities, k_profits) in [0, 1]
    t_max: float
    seed: int
    depot: int = 0

    def __post_init__(self):
        self.coords.setflags(write=False)
        self.profits.setflags(write=False)

    def equals(self, other: "Instance") -> bool:
        return (
            self.name == other.name
            and self.n_cities == other.n_cities
            and self.k_profits == other.k_profits
            and self.t_max == other.t_max
            and self.seed == other.seed
            and self.depot == other.depot
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.profits, other.profits)
        )


def generate_instance(
    n_cities: int, k_profits: int, t_max: float, seed: int, name: str | None = None
) -> Instance:
    """Draw coordinates and profits i.i.d. uniform on [0, 1] from `seed`.

    Stream layout is fixed: 2*n coordinate values row-major, then n*k profit
    values row-major.
    """
    if n_cities < 2:
        raise ValueError(f"n_cities must be >= 2 (got {n_cities}): need at least one non-depot city")
    if k_profits < 0:
        raise ValueError(f"k_profits must be >= 0 (got {k_profits})")
    if t_max < 0:
        raise ValueError(f"t_max must be >= 0 (got {t_max})")
    draws = splitmix64_uniforms(seed, 2 * n_cities + n_cities * k_profits)
    coords = draws[: 2 * n_cities].reshape(n_cities, 2)
    profits = draws[2 * n_cities :].reshape(n_cities, k_profits)
    if name is None:
        name = f"op-n{n_cities}-k{k_profits}-s{seed}"
    return Instance(
        name=name,
        n_cities=n_cities,
        k_profits=k_profits,
        coords=coords,
        profits=profits,
        t_max=float(t_max),
        seed=int(seed),
    )


def distance_matrix(inst: Instance) -> np.ndarray:
    """Full symmetric Euclidean distance matrix of the instance's cities."""
    return pairwise_distances(inst.coords)


def pairwise_distances(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


_SCHEMA = {
    "name": str,
    "n_cities": int,
    "k_profits": int,
    "t_max": (int, float),
    "depot": int,
    "seed": int,
    "coords": list,
    "profits": list,
}


def save_instance(inst: Instance, path: str | Path) -> None:
    doc = {
        "name": inst.name,
        "n_cities": inst.n_cities,
        "k_profits": inst.k_profits,
        "t_max": inst.t_max,
        "depot": inst.depot,
        "seed": inst.seed,
        "coords": [[float(x), float(y)] for x, y in inst.coords],
        "profits": [[float(p) for p in row] for row in inst.profits],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_instance(path: str | Path) -> Instance:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InstanceFormatError(f"{path}: expected a JSON object at top level")
    for key, typ in _SCHEMA.items():
        if key not in doc:
            raise InstanceFormatError(f"{path}: missing field '{key}'")
        if not isinstance(doc[key], typ) or isinstance(doc[key], bool):
            raise InstanceFormatError(f"{path}: field '{key}' has wrong type {type(doc[key]).__name__}")
    n, k = doc["n_cities"], doc["k_profits"]
    if n < 2:
        raise InstanceFormatError(f"{path}: field 'n_cities' must be >= 2")
    if doc["depot"] != 0:
        raise InstanceFormatError(f"{path}: field 'depot' must be 0")
    coords = np.asarray(doc["coords"], dtype=np.float64)
    if coords.shape != (n, 2):
        raise InstanceFormatError(f"{path}: field 'coords' must be {n} pairs, got shape {coords.shape}")
    profits = np.asarray(doc["profits"], dtype=np.float64)
    profits = profits.reshape(n, k) if profits.size == n * k else profits
    if profits.shape != (n, k):
        raise InstanceFormatError(f"{path}: field 'profits' must be {n}x{k}, got shape {profits.shape}")
    return Instance(
        name=doc["name"],
        n_cities=n,
        k_profits=k,
        coords=coords,
        profits=profits,
        t_max=float(doc["t_max"]),
        seed=doc["seed"],
        depot=doc["depot"],
    )
