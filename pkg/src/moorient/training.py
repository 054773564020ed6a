"""Policy-gradient training of the routing policy with a learned baseline.

Each batch samples fresh TSP instances, rolls the policy out in sampling
mode, scores tours by closed-circuit length (the quantity being minimized),
and takes one Adam step on the actor and one on the critic. The critic reads
the per-city encoder embeddings as fixed inputs, so no gradient crosses
between the two networks.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import pointer_net as pn
from .autodiff import AdamState, Tensor

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class CriticParams:
    """Three shared pointwise layers (2*d_h -> 20 -> 20 -> 1), summed over cities."""

    d_h: int
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w3: Tensor
    b3: Tensor

    def named(self) -> dict[str, Tensor]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "d_h"}

    @staticmethod
    def shapes(d_h: int) -> dict[str, tuple[int, ...]]:
        return {"w1": (2 * d_h, 20), "b1": (20,), "w2": (20, 20), "b2": (20,), "w3": (20, 1), "b3": (1,)}

    @classmethod
    def init_random(cls, d_h: int, rng: np.random.Generator) -> "CriticParams":
        tensors = {name: ad.parameter(rng.uniform(-1.0, 1.0, shape)) for name, shape in cls.shapes(d_h).items()}
        return cls(d_h=d_h, **tensors)


@dataclass
class TrainConfig:
    n_cities: int = 20
    d_h: int = 128
    n_epochs: int = 10
    instances_per_epoch: int = 1_280_000
    batch_size: int = 64
    lr: float = 1e-4
    dropout: float = 0.1
    seed: int = 1234
    use_dynamic: bool = True  # ablation switch: zero the distance features when False
    val_size: int = 64
    val_every: int = 50
    log_path: str | None = None

    def batches_per_epoch(self) -> int:
        return max(1, self.instances_per_epoch // self.batch_size)


def desk_config(**overrides) -> TrainConfig:
    """Small-budget preset: 20-city tours, 200 batches of 128, minutes not hours.

    Narrower width and a larger step size compensate for the short schedule;
    dropout is off because the regularization only pays over long schedules.
    """
    cfg = TrainConfig(
        n_cities=20,
        d_h=64,
        n_epochs=1,
        instances_per_epoch=200 * 128,
        batch_size=128,
        lr=3e-3,
        dropout=0.0,
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


@dataclass
class Checkpoint:
    version: int
    d_h: int
    train_city_count: int
    seed: int
    epochs_seen: int
    actor: dict[str, np.ndarray]
    critic: dict[str, np.ndarray]
    optimizer: dict | None = None
    metadata: dict = field(default_factory=dict)

    def build_actor(self) -> pn.ActorParams:
        tensors = {name: ad.parameter(arr.copy()) for name, arr in self.actor.items()}
        return pn.ActorParams(d_h=self.d_h, **tensors)

    def build_critic(self) -> CriticParams:
        tensors = {name: ad.parameter(arr.copy()) for name, arr in self.critic.items()}
        return CriticParams(d_h=self.d_h, **tensors)


def critic_input(coords: np.ndarray, actor: pn.ActorParams) -> np.ndarray:
    """Per-city critic features: static embedding next to the step-0 dynamic one.

    Computed without graph recording; the critic sees them as constants.
    """
    with ad.no_grad():
        s_bar = pn.static_embed(actor, coords).data
        d_bar = pn.dynamic_embed(actor, np.zeros(len(coords))).data
    return np.concatenate([s_bar, d_bar], axis=1)


def critic_value(critic: CriticParams, coords: np.ndarray, actor: pn.ActorParams) -> Tensor:
    x = ad.constant(critic_input(coords, actor))
    h = ad.relu(ad.linear(x, critic.w1, critic.b1))
    h = ad.relu(ad.linear(h, critic.w2, critic.b2))
    per_city = ad.linear(h, critic.w3, critic.b3)
    return ad.sum_all(per_city)


@dataclass
class BatchStats:
    mean_reward: float
    mean_baseline: float
    actor_loss: float
    critic_loss: float


def reinforce_batch(
    actor: pn.ActorParams,
    critic: CriticParams,
    batch: list[np.ndarray],
    rng: np.random.Generator,
    actor_opt: AdamState,
    critic_opt: AdamState,
    *,
    dropout: float = 0.0,
    use_dynamic: bool = True,
) -> BatchStats:
    """Sample one tour per instance and apply one Adam step to each network.

    Actor gradient: mean over the batch of (reward - baseline) * grad log-prob,
    with the baseline treated as a constant. Critic gradient: mean squared
    prediction error against the realized rewards.
    """
    if not batch:
        raise ValueError("reinforce_batch: empty batch")
    m = len(batch)
    actor_terms: list[Tensor] = []
    critic_terms: list[Tensor] = []
    rewards = np.empty(m)
    baselines = np.empty(m)
    for i, coords in enumerate(batch):
        decoded = pn.decode_tour(
            actor, coords, mode="sample", rng=rng, dropout_rate=dropout, use_dynamic=use_dynamic, with_graph=True
        )
        rewards[i] = pn.cycle_length(coords, decoded.order)
        value = critic_value(critic, coords, actor)
        baselines[i] = value.item()
        advantage = rewards[i] - baselines[i]
        actor_terms.append(ad.scale(decoded.log_prob_tensor, advantage / m))
        critic_terms.append(ad.scale(ad.squared_error(value, ad.constant(rewards[i])), 1.0 / m))
    actor_loss = actor_terms[0]
    critic_loss = critic_terms[0]
    for term in actor_terms[1:]:
        actor_loss = ad.add(actor_loss, term)
    for term in critic_terms[1:]:
        critic_loss = ad.add(critic_loss, term)
    stats = BatchStats(
        mean_reward=float(rewards.mean()),
        mean_baseline=float(baselines.mean()),
        actor_loss=actor_loss.item(),
        critic_loss=critic_loss.item(),
    )
    if not (math.isfinite(stats.actor_loss) and math.isfinite(stats.critic_loss)):
        raise TrainingDivergedError(f"non-finite loss: {stats}")
    ad.backward(actor_loss)
    ad.backward(critic_loss)
    adam_step_checked(actor.named(), actor_opt)
    adam_step_checked(critic.named(), critic_opt)
    return stats


def adam_step_checked(params: dict[str, Tensor], state: AdamState) -> None:
    for name, p in params.items():
        if p.grad is not None and not np.isfinite(p.grad).all():
            raise TrainingDivergedError(f"non-finite gradient in parameter '{name}'")
    ad.adam_step(params, state)


def validation_cost(actor: pn.ActorParams, val_set: list[np.ndarray], *, use_dynamic: bool = True) -> float:
    """Mean greedy-decode circuit length over a held-out instance list."""
    costs = [
        pn.cycle_length(coords, pn.decode_tour(actor, coords, mode="greedy", use_dynamic=use_dynamic).order)
        for coords in val_set
    ]
    return float(np.mean(costs))


def train(config: TrainConfig) -> Checkpoint:
    """Run the full schedule from a fresh uniform [-1, 1] initialization.

    Writes a CSV cost log to config.log_path when given (columns batch,
    mean_reward, critic_loss, validation_cost). Deterministic for a fixed
    config, including the seed.
    """
    streams = np.random.SeedSequence(config.seed).spawn(4)
    init_rng = np.random.default_rng(streams[0])
    data_rng = np.random.default_rng(streams[1])
    rollout_rng = np.random.default_rng(streams[2])
    val_rng = np.random.default_rng(streams[3])

    actor = pn.ActorParams.init_random(config.d_h, init_rng)
    critic = CriticParams.init_random(config.d_h, init_rng)
    actor_opt = AdamState(lr=config.lr)
    critic_opt = AdamState(lr=config.lr)
    val_set = [val_rng.random((config.n_cities, 2)) for _ in range(config.val_size)]

    log_rows: list[dict] = []
    batch_index = 0
    val = validation_cost(actor, val_set, use_dynamic=config.use_dynamic)
    log_rows.append({"batch": 0, "mean_reward": "", "critic_loss": "", "validation_cost": val})
    for _ in range(config.n_epochs):
        for _ in range(config.batches_per_epoch()):
            batch_index += 1
            batch = [data_rng.random((config.n_cities, 2)) for _ in range(config.batch_size)]
            stats = reinforce_batch(
                actor,
                critic,
                batch,
                rollout_rng,
                actor_opt,
                critic_opt,
                dropout=config.dropout,
                use_dynamic=config.use_dynamic,
            )
            row = {
                "batch": batch_index,
                "mean_reward": stats.mean_reward,
                "critic_loss": stats.critic_loss,
                "validation_cost": "",
            }
            if config.val_every and batch_index % config.val_every == 0:
                row["validation_cost"] = validation_cost(actor, val_set, use_dynamic=config.use_dynamic)
            log_rows.append(row)
    if log_rows[-1]["validation_cost"] == "" and batch_index > 0:
        log_rows[-1]["validation_cost"] = validation_cost(actor, val_set, use_dynamic=config.use_dynamic)
    if config.log_path:
        write_training_log(config.log_path, log_rows)
    return Checkpoint(
        version=CHECKPOINT_VERSION,
        d_h=config.d_h,
        train_city_count=config.n_cities,
        seed=config.seed,
        epochs_seen=config.n_epochs,
        actor={name: t.data.copy() for name, t in actor.named().items()},
        critic={name: t.data.copy() for name, t in critic.named().items()},
        metadata={
            "batches": batch_index,
            "use_dynamic": config.use_dynamic,
            "initial_validation_cost": log_rows[0]["validation_cost"],
            "final_validation_cost": log_rows[-1]["validation_cost"],
        },
    )


def write_training_log(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["batch", "mean_reward", "critic_loss", "validation_cost"])
        writer.writeheader()
        writer.writerows(rows)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Atomic write (temp file + rename) of the JSON checkpoint document."""
    doc = {
        "version": ckpt.version,
        "d_h": ckpt.d_h,
        "train_city_count": ckpt.train_city_count,
        "seed": ckpt.seed,
        "epochs_seen": ckpt.epochs_seen,
        "actor": {name: arr.reshape(-1).tolist() for name, arr in ckpt.actor.items()},
        "critic": {name: arr.reshape(-1).tolist() for name, arr in ckpt.critic.items()},
        "optimizer": ckpt.optimizer,
        "metadata": ckpt.metadata,
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc), encoding="utf-8")
    os.replace(tmp, path)


def load_checkpoint(path: str | Path, expected_d_h: int | None = None) -> Checkpoint:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint: {exc}") from exc
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path}: expected a JSON object")
    for key in ("version", "d_h", "train_city_count", "seed", "actor", "critic"):
        if key not in doc:
            raise CheckpointError(f"{path}: missing field '{key}'")
    if doc["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: version {doc['version']} not supported (want {CHECKPOINT_VERSION})")
    d_h = int(doc["d_h"])
    want_d_h = expected_d_h if expected_d_h is not None else d_h
    actor = _load_block(path, "actor", doc["actor"], pn.ActorParams.shapes(want_d_h))
    critic = _load_block(path, "critic", doc["critic"], CriticParams.shapes(want_d_h))
    return Checkpoint(
        version=doc["version"],
        d_h=want_d_h,
        train_city_count=int(doc["train_city_count"]),
        seed=int(doc["seed"]),
        epochs_seen=int(doc.get("epochs_seen", 0)),
        actor=actor,
        critic=critic,
        optimizer=doc.get("optimizer"),
        metadata=doc.get("metadata", {}),
    )


def _load_block(path, block: str, raw: dict, shapes: dict[str, tuple[int, ...]]) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for name, shape in shapes.items():
        if name not in raw:
            raise CheckpointError(f"{path}: {block} block missing tensor '{name}'")
        flat = np.asarray(raw[name], dtype=np.float64)
        if flat.size != int(np.prod(shape)):
            raise CheckpointError(
                f"{path}: tensor '{block}.{name}' has {flat.size} values, expected shape {shape}"
            )
        out[name] = flat.reshape(shape)
    return out
