"""Desk-scale solver comparison: hybrid selection+routing vs pure permutation
evolution on one mixed-type instance, repeated over seeds.

Generates the instance, trains (or reuses) a desk checkpoint, then tabulates
median/mean hypervolume per solver. A rough small-budget analogue of the
full 31-seed study.

Usage:
  python scripts/desk_benchmark.py --out runs/desk --cities 200 --seeds 11
"""

from __future__ import annotations

import argparse
from pathlib import Path

from moorient.cli import main as cli_main
from moorient.instances import generate_instance, save_instance
from moorient.training import desk_config, save_checkpoint, train

TMAX = {20: 2.0, 50: 3.0, 100: 4.0, 200: 6.0, 500: 10.0, 1000: 15.0}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=str, default="runs/desk")
    parser.add_argument("--cities", type=int, default=200, choices=sorted(TMAX))
    parser.add_argument("--seeds", type=int, default=11)
    parser.add_argument("--baseline-gens", type=int, default=500)
    parser.add_argument("--checkpoint", type=str, default=None, help="reuse an existing checkpoint")
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    inst = generate_instance(args.cities, 1, TMAX[args.cities], seed=12345, name=f"mixed-{args.cities}")
    inst_path = out / f"{inst.name}.json"
    save_instance(inst, inst_path)

    ckpt_path = args.checkpoint
    if ckpt_path is None:
        print("training desk checkpoint (200 batches x 128 on 20-city tours)")
        ckpt = train(desk_config(seed=7, log_path=str(out / "training_log.csv")))
        ckpt_path = out / "checkpoint.json"
        save_checkpoint(ckpt, ckpt_path)

    cli_main(
        [
            "benchmark",
            "--instance", str(inst_path),
            "--solver", "hybrid-nsga2",
            "--solver", "hybrid-nsga3",
            "--solver", f"nsga2-single-{args.baseline_gens}",
            "--solver", f"nsga2-double-{args.baseline_gens}",
            "--checkpoint", str(ckpt_path),
            "--pop", "100",
            "--gens", "20",
            "--seeds", str(args.seeds),
            "--seed-base", "0",
            "--jobs", str(args.jobs),
            "--ref-preset", f"mixed-{args.cities}",
            "--out", str(out),
        ]
    )


if __name__ == "__main__":
    main()
