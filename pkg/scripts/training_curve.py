"""Train the routing policy twice (with and without the dynamic distance
channel) at desk scale and write a combined cost-curve CSV for plotting.

Usage:
  python scripts/training_curve.py --out runs/curve --batches 200 --seed 7
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

from moorient.training import desk_config, save_checkpoint, train


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=str, default="runs/curve")
    parser.add_argument("--batches", type=int, default=200)
    parser.add_argument("--batch", type=int, default=128)
    parser.add_argument("--cities", type=int, default=20)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    curves = {}
    for label, use_dynamic in (("dynamic", True), ("ablated", False)):
        cfg = desk_config(
            seed=args.seed,
            n_cities=args.cities,
            instances_per_epoch=args.batches * args.batch,
            batch_size=args.batch,
            use_dynamic=use_dynamic,
            val_every=10,
            log_path=str(out / f"log_{label}.csv"),
        )
        print(f"training {label} model: {args.batches} batches x {args.batch} on {args.cities}-city tours")
        ckpt = train(cfg)
        save_checkpoint(ckpt, out / f"checkpoint_{label}.json")
        with open(cfg.log_path, newline="") as fh:
            curves[label] = {int(r["batch"]): r["mean_reward"] for r in csv.DictReader(fh)}
        print(
            f"  held-out cost {ckpt.metadata['initial_validation_cost']:.3f} -> "
            f"{ckpt.metadata['final_validation_cost']:.3f}"
        )

    batches = sorted(set(curves["dynamic"]) | set(curves["ablated"]))
    with open(out / "curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["batch", "mean_cost_dynamic", "mean_cost_ablated"])
        for b in batches:
            writer.writerow([b, curves["dynamic"].get(b, ""), curves["ablated"].get(b, "")])
    print(f"wrote {out / 'curve.csv'}")


if __name__ == "__main__":
    main()
