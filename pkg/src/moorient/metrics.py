"""Pareto filtering and exact hypervolume in 2 and 3 dimensions.

Everything here works on maximization vectors. Hypervolume is the Lebesgue
measure of the union of boxes spanned between the reference point and each
front point that strictly dominates it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def pareto_filter(points: np.ndarray) -> np.ndarray:
    """Rows not dominated by any other row; exact duplicates collapse to one."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.size == 0:
        return pts.reshape(0, pts.shape[1] if pts.ndim == 2 else 0)
    pts = np.unique(pts, axis=0)
    n = len(pts)
    ge = np.all(pts[:, None, :] >= pts[None, :, :], axis=2)
    gt = np.any(pts[:, None, :] > pts[None, :, :], axis=2)
    dominated = (ge & gt).any(axis=0)
    return pts[~dominated]


def hypervolume(front: np.ndarray, ref: np.ndarray) -> float:
    """Exact dominated hypervolume of a 2-d or 3-d maximization front."""
    ref = np.asarray(ref, dtype=np.float64)
    front = np.atleast_2d(np.asarray(front, dtype=np.float64))
    if front.size == 0:
        return 0.0
    if front.shape[1] != ref.shape[0]:
        raise ValueError(f"front dimension {front.shape[1]} does not match reference {ref.shape[0]}")
    if ref.shape[0] == 2:
        return _hv2d(front, ref)
    if ref.shape[0] == 3:
        return _hv3d(front, ref)
    raise ValueError(f"hypervolume supports 2 or 3 objectives, got {ref.shape[0]}")


def _hv2d(front: np.ndarray, ref: np.ndarray) -> float:
    pts = front[np.all(front > ref, axis=1)]
    if len(pts) == 0:
        return 0.0
    # sweep right-to-left; each point adds the slab above the best y so far
    pts = pts[np.lexsort((pts[:, 1], -pts[:, 0]))]
    best_y = ref[1]
    vol = 0.0
    for x, y in pts:
        if y > best_y:
            vol += (x - ref[0]) * (y - best_y)
            best_y = y
    return float(vol)


def _hv3d(front: np.ndarray, ref: np.ndarray) -> float:
    pts = front[np.all(front > ref, axis=1)]
    if len(pts) == 0:
        return 0.0
    # slice along z: between consecutive z levels the area is a 2-d hypervolume
    order = np.argsort(-pts[:, 2], kind="stable")
    pts = pts[order]
    levels = np.unique(pts[:, 2])[::-1]
    vol = 0.0
    active: list[np.ndarray] = []
    idx = 0
    for li, z in enumerate(levels):
        while idx < len(pts) and pts[idx, 2] >= z:
            active.append(pts[idx, :2])
            idx += 1
        z_next = levels[li + 1] if li + 1 < len(levels) else ref[2]
        vol += _hv2d(np.asarray(active), ref[:2]) * (z - z_next)
    return float(vol)


def hypervolume_monte_carlo(
    front: np.ndarray, ref: np.ndarray, n_samples: int, rng: np.random.Generator
) -> float:
    """Sampling estimate of the same measure; the test oracle for the exact code."""
    ref = np.asarray(ref, dtype=np.float64)
    front = np.atleast_2d(np.asarray(front, dtype=np.float64))
    pts = front[np.all(front > ref, axis=1)]
    if len(pts) == 0:
        return 0.0
    hi = pts.max(axis=0)
    box = np.prod(hi - ref)
    samples = rng.random((n_samples, ref.shape[0])) * (hi - ref) + ref
    covered = np.zeros(n_samples, dtype=bool)
    for p in pts:
        covered |= np.all(samples < p, axis=1)
    return float(box * covered.mean())


@dataclass(frozen=True)
class RefPreset:
    """Named reference point plus the objective layout it applies to."""

    name: str
    ref: tuple[float, ...]
    include_length: bool  # False: search/report profit objectives only


_SIZES_TMAX = {20: 2.0, 50: 3.0, 100: 4.0, 200: 6.0, 500: 10.0, 1000: 15.0}

REF_PRESETS: dict[str, RefPreset] = {}
for _n, _t in _SIZES_TMAX.items():
    REF_PRESETS[f"mixed-{_n}"] = RefPreset(f"mixed-{_n}", (0.0, -_t), True)
    REF_PRESETS[f"three-{_n}"] = RefPreset(f"three-{_n}", (0.0, 0.0, -_t), True)
REF_PRESETS["profits"] = RefPreset("profits", (0.0, 0.0), False)


def ref_preset(name: str) -> RefPreset:
    try:
        return REF_PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown reference preset {name!r}; choose from {sorted(REF_PRESETS)}") from None
