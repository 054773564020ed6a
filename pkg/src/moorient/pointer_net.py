"""Pointer-style routing policy: shared static/dynamic encoders, GRU decoder.

The policy consumes raw city coordinates and emits a permutation one city per
step. A per-step "dynamic" channel encodes normalized distances from the last
visited city; masking removes already-visited cities from the final softmax.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .instances import pairwise_distances


@dataclass
class ActorParams:
    """All trainable tensors of the routing policy, width d_h."""

    d_h: int
    w_static: Tensor  # (2, d_h) coordinate encoder
    b_static: Tensor  # (d_h,)
    w_dynamic: Tensor  # (1, d_h) distance-feature encoder
    b_dynamic: Tensor  # (d_h,)
    w_ir: Tensor  # GRU input->reset (d_h, d_h)
    w_iz: Tensor
    w_in: Tensor
    b_ir: Tensor
    b_iz: Tensor
    b_in: Tensor
    w_hr: Tensor  # GRU hidden->reset (d_h, d_h)
    w_hz: Tensor
    w_hn: Tensor
    b_hr: Tensor
    b_hz: Tensor
    b_hn: Tensor
    w_att: Tensor  # (3 d_h, d_h) attention projection
    v_att: Tensor  # (d_h, 1)
    w_ctx: Tensor  # (2 d_h, d_h) output projection over [embedding; context]
    v_ctx: Tensor  # (d_h, 1)

    def named(self) -> dict[str, Tensor]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "d_h"}

    @staticmethod
    def shapes(d_h: int) -> dict[str, tuple[int, ...]]:
        s: dict[str, tuple[int, ...]] = {"w_static": (2, d_h), "b_static": (d_h,), "w_dynamic": (1, d_h), "b_dynamic": (d_h,)}
        for gate in ("r", "z", "n"):
            s[f"w_i{gate}"] = (d_h, d_h)
            s[f"w_h{gate}"] = (d_h, d_h)
            s[f"b_i{gate}"] = (d_h,)
            s[f"b_h{gate}"] = (d_h,)
        s.update({"w_att": (3 * d_h, d_h), "v_att": (d_h, 1), "w_ctx": (2 * d_h, d_h), "v_ctx": (d_h, 1)})
        return s

    @classmethod
    def init_random(cls, d_h: int, rng: np.random.Generator) -> "ActorParams":
        # uniform [-1, 1] on every leaf
        tensors = {name: ad.parameter(rng.uniform(-1.0, 1.0, shape)) for name, shape in cls.shapes(d_h).items()}
        return cls(d_h=d_h, **tensors)


@dataclass
class DecoderState:
    h: Tensor  # (1, d_h) memory after the latest recurrence tick
    visited: np.ndarray  # bool per input city
    last: int | None  # index of the most recently selected city
    log_prob: float


@dataclass
class DecodedTour:
    order: np.ndarray  # permutation of input city positions
    step_log_probs: np.ndarray  # log-probability of each chosen city
    log_prob: float  # their sum
    log_prob_tensor: Tensor | None  # graph node, only when decoded with gradients on


def static_embed(actor: ActorParams, coords: np.ndarray) -> Tensor:
    """Shared pointwise map of every city's (x, y) into d_h channels."""
    return ad.linear(ad.constant(np.asarray(coords, dtype=np.float64)), actor.w_static, actor.b_static)


def dynamic_feature(dist_row: np.ndarray) -> np.ndarray:
    """Normalize a distance row so the nearest city maps to 1, farthest to 0.

    A constant row (including the single-city case) maps to all zeros.
    """
    dist_row = np.asarray(dist_row, dtype=np.float64)
    hi = dist_row.max()
    lo = dist_row.min()
    if hi == lo:
        return np.zeros_like(dist_row)
    return (hi - dist_row) / (hi - lo)


def dynamic_embed(actor: ActorParams, feature: np.ndarray) -> Tensor:
    return ad.linear(ad.constant(feature.reshape(-1, 1)), actor.w_dynamic, actor.b_dynamic)


def _gru_step(actor: ActorParams, x: Tensor, h: Tensor) -> Tensor:
    r = ad.sigmoid(ad.add(ad.linear(x, actor.w_ir, actor.b_ir), ad.linear(h, actor.w_hr, actor.b_hr)))
    z = ad.sigmoid(ad.add(ad.linear(x, actor.w_iz, actor.b_iz), ad.linear(h, actor.w_hz, actor.b_hz)))
    n = ad.tanh(ad.add(ad.linear(x, actor.w_in, actor.b_in), ad.mul(r, ad.linear(h, actor.w_hn, actor.b_hn))))
    ones = ad.constant(np.ones_like(h.data))
    return ad.add(ad.mul(ad.sub(ones, z), n), ad.mul(z, h))


def initial_state(actor: ActorParams, n: int) -> DecoderState:
    return DecoderState(
        h=ad.constant(np.zeros((1, actor.d_h))),
        visited=np.zeros(n, dtype=bool),
        last=None,
        log_prob=0.0,
    )


def decode_step(
    actor: ActorParams,
    state: DecoderState,
    s_bar: Tensor,
    d_bar: Tensor,
    *,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """One decoding step: recurrence tick, attention, masked output softmax.

    Returns (new memory state, probability column, log-probability column)
    over the input cities; the caller records the chosen city in the state.
    """
    n = s_bar.data.shape[0]
    if state.visited.all():
        raise ValueError("decode_step: every city is already visited")
    if state.last is None:
        x = ad.linear(ad.constant(np.zeros((1, 2))), actor.w_static, actor.b_static)
    else:
        x = ad.take_row(s_bar, state.last)
    h = _gru_step(actor, x, state.h)
    h_att = ad.dropout(h, dropout_rate, rng) if dropout_rate > 0.0 else h
    att_in = ad.concat([s_bar, d_bar, ad.repeat_rows(h_att, n)], axis=1)
    scores = ad.matmul(ad.tanh(ad.matmul(att_in, actor.w_att)), actor.v_att)
    attention = ad.softmax(scores, axis=0)
    context = ad.matmul(ad.transpose(attention), s_bar)
    out_in = ad.concat([s_bar, ad.repeat_rows(context, n)], axis=1)
    logits = ad.matmul(ad.tanh(ad.matmul(out_in, actor.w_ctx)), actor.v_ctx)
    masked = ad.masked_fill(logits, state.visited.reshape(-1, 1))
    return h, ad.softmax(masked, axis=0), ad.log_softmax(masked, axis=0)


def _sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    cum = np.cumsum(probs)
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right").clip(0, probs.size - 1))


def decode_tour(
    actor: ActorParams,
    coords: np.ndarray,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
    *,
    dropout_rate: float = 0.0,
    use_dynamic: bool = True,
    forced: Sequence[int] | None = None,
    with_graph: bool = False,
) -> DecodedTour:
    """Decode a complete permutation of `coords`.

    greedy picks the argmax each step (ties to the lowest index), sample draws
    from the step distribution, forced replays a given permutation. Pass
    `with_graph=True` during training to keep the log-probability graph.
    """
    if mode not in ("greedy", "sample", "forced"):
        raise ValueError(f"unknown decode mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs an rng")
    if mode == "forced" and forced is None:
        raise ValueError("forced mode needs the tour to replay")
    if with_graph:
        return _decode_tour(actor, coords, mode, rng, dropout_rate, use_dynamic, forced)
    with ad.no_grad():
        return _decode_tour(actor, coords, mode, rng, dropout_rate, use_dynamic, forced)


def _decode_tour(actor, coords, mode, rng, dropout_rate, use_dynamic, forced) -> DecodedTour:
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    dists = pairwise_distances(coords)
    s_bar = static_embed(actor, coords)
    state = initial_state(actor, n)
    zero_feature = np.zeros(n)
    order = np.empty(n, dtype=np.intp)
    step_logs = np.empty(n)
    log_terms: list[Tensor] = []
    for t in range(n):
        if use_dynamic and state.last is not None:
            feature = dynamic_feature(dists[state.last])
        else:
            feature = zero_feature
        d_bar = dynamic_embed(actor, feature)
        h, probs, logps = decode_step(actor, state, s_bar, d_bar, dropout_rate=dropout_rate, rng=rng)
        if mode == "greedy":
            choice = int(np.argmax(probs.data[:, 0]))
        elif mode == "sample":
            choice = _sample_index(probs.data[:, 0], rng)
        else:
            choice = int(forced[t])
            if state.visited[choice]:
                raise ValueError(f"forced tour revisits city {choice}")
        order[t] = choice
        step_logs[t] = logps.data[choice, 0]
        if ad.grad_enabled():
            log_terms.append(ad.pick(logps, (choice, 0)))
        state = DecoderState(
            h=h,
            visited=_mark(state.visited, choice),
            last=choice,
            log_prob=state.log_prob + float(step_logs[t]),
        )
    total = None
    if log_terms:
        total = log_terms[0]
        for term in log_terms[1:]:
            total = ad.add(total, term)
    return DecodedTour(order=order, step_log_probs=step_logs, log_prob=float(step_logs.sum()), log_prob_tensor=total)


def _mark(visited: np.ndarray, i: int) -> np.ndarray:
    out = visited.copy()
    out[i] = True
    return out


def cycle_length(coords: np.ndarray, order: Sequence[int]) -> float:
    """Length of the closed circuit visiting `coords` in `order`."""
    pts = np.asarray(coords, dtype=np.float64)[np.asarray(order, dtype=np.intp)]
    if pts.shape[0] < 2:
        return 0.0
    legs = np.sqrt(((np.roll(pts, -1, axis=0) - pts) ** 2).sum(axis=1))
    return float(legs.sum())


def nearest_neighbor_tour(coords: np.ndarray, start: int = 0) -> np.ndarray:
    """Greedy nearest-unvisited-city circuit; the usual cheap TSP yardstick."""
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    dists = pairwise_distances(coords)
    order = [start]
    visited = np.zeros(n, dtype=bool)
    visited[start] = True
    cur = start
    for _ in range(n - 1):
        row = np.where(visited, np.inf, dists[cur])
        cur = int(np.argmin(row))
        visited[cur] = True
        order.append(cur)
    return np.asarray(order, dtype=np.intp)
