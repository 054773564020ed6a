"""Command-line surface: instance generation, training, solving, benchmarks.

Every command writes a manifest JSON capturing its resolved configuration;
`moorient rerun MANIFEST` replays the command and reproduces its outputs
byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .hybrid import HybridConfig, RunResult, run_moea_drl, run_pure_moea
from .instances import Instance, generate_instance, load_instance, save_instance
from .metrics import REF_PRESETS, hypervolume, ref_preset
from .training import TrainConfig, load_checkpoint, save_checkpoint, train

GRID_SIZES = {20: 2.0, 50: 3.0, 100: 4.0, 200: 6.0, 500: 10.0, 1000: 15.0}
DEFAULT_INSTANCE_SEED = 12345


class CommandError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# output helpers


def _fmt(value: float) -> str:
    return repr(float(value))


def write_front_csv(result: RunResult, path: Path) -> None:
    rows = result.sorted_rows()
    n_obj = len(rows[0][0]) if rows else result.objectives.shape[1]
    header = [f"obj{i}" for i in range(n_obj)] + ["route"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for objs, route in rows:
            writer.writerow([_fmt(v) for v in objs] + [";".join(str(c) for c in route)])


def read_front_csv(path: Path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_obj = sum(1 for h in header if h.startswith("obj"))
        rows = [[float(v) for v in row[:n_obj]] for row in reader]
    return np.asarray(rows) if rows else np.zeros((0, n_obj))


def write_manifest(out_dir: Path, command: str, config: dict, artifacts: dict, wall_time: float) -> Path:
    doc = {
        "command": command,
        "config": config,
        "seeds": config.get("seed_base"),
        "artifacts": {k: str(v) for k, v in artifacts.items()},
        "versions": {"moorient": __version__, "numpy": np.__version__, "python": sys.version.split()[0]},
        "wall_time_s": wall_time,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_ref(args, inst: Instance) -> tuple[tuple[float, ...] | None, bool]:
    """Reference point and objective layout from --ref-preset, if given."""
    if args.ref_preset is None:
        return None, True
    preset = ref_preset(args.ref_preset)
    expect = len(preset.ref) - (1 if preset.include_length else 0)
    if expect != inst.k_profits:
        raise CommandError(
            f"preset '{preset.name}' expects {expect} profit objectives, instance has {inst.k_profits}"
        )
    return preset.ref, preset.include_length


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> dict:
    out = _out_dir(args)
    written = {}
    if args.cities is not None:
        if args.profits is None or args.tmax is None:
            raise CommandError("--cities needs --profits and --tmax for a single instance")
        inst = generate_instance(args.cities, args.profits, args.tmax, args.seed_base)
        path = out / f"{inst.name}.json"
        save_instance(inst, path)
        written[inst.name] = path
    else:
        # the full benchmark grid: mixed (one profit) and two-profit instances per size
        for n, tmax in GRID_SIZES.items():
            for kind, k in (("mixed", 1), ("profits", 2)):
                inst = generate_instance(n, k, tmax, args.seed_base, name=f"{kind}-{n}")
                path = out / f"{kind}-{n}.json"
                save_instance(inst, path)
                written[inst.name] = path
    for name, path in sorted(written.items()):
        print(f"wrote {path}")
    return {"instances": [str(p) for p in written.values()]}


def cmd_train(args) -> dict:
    out = _out_dir(args)
    config = TrainConfig(
        n_cities=args.cities if args.cities is not None else 20,
        d_h=args.hidden,
        n_epochs=args.epochs,
        instances_per_epoch=args.batches * args.batch,
        batch_size=args.batch,
        lr=args.lr,
        dropout=args.dropout,
        seed=args.seed_base,
        use_dynamic=not args.ablate_dynamic,
        log_path=str(out / "training_log.csv"),
    )
    ckpt = train(config)
    ckpt_path = out / "checkpoint.json"
    save_checkpoint(ckpt, ckpt_path)
    print(
        f"trained {config.n_epochs} epoch(s) x {config.batches_per_epoch()} batches; "
        f"held-out cost {ckpt.metadata['initial_validation_cost']:.3f} -> {ckpt.metadata['final_validation_cost']:.3f}"
    )
    print(f"wrote {ckpt_path}")
    return {"checkpoint": str(ckpt_path), "training_log": config.log_path}


def _load_inst(args) -> Instance:
    if args.instance is None:
        raise CommandError("--instance is required")
    path = Path(args.instance)
    if not path.exists():
        raise CommandError(f"instance file not found: {path}")
    return load_instance(path)


def _load_actor(args):
    if args.checkpoint is None:
        raise CommandError("--checkpoint is required")
    path = Path(args.checkpoint)
    if not path.exists():
        raise CommandError(f"checkpoint file not found: {path}")
    return load_checkpoint(path).build_actor()


def cmd_solve(args) -> dict:
    out = _out_dir(args)
    inst = _load_inst(args)
    actor = _load_actor(args)
    ref, include_length = _resolve_ref(args, inst)
    config = HybridConfig(
        pop_size=args.pop,
        max_generations=args.gens,
        engine=args.engine,
        seed=args.seed_base,
        include_length=include_length,
        ref=ref,
        track_hv=args.ref_preset is not None,
    )
    result = run_moea_drl(inst, config, actor)
    front_path = out / "front.csv"
    write_front_csv(result, front_path)
    read_front_csv(front_path)  # validate what was written before reporting success
    _print_result(inst.name, f"hybrid-{args.engine}", result)
    return {"front": str(front_path), "hv": result.hv, "evaluated": result.evaluated}


def cmd_baseline(args) -> dict:
    out = _out_dir(args)
    inst = _load_inst(args)
    ref, include_length = _resolve_ref(args, inst)
    config = HybridConfig(
        pop_size=args.pop,
        max_generations=args.gens,
        engine=args.engine,
        seed=args.seed_base,
        include_length=include_length,
        ref=ref,
    )
    result = run_pure_moea(inst, config, coding=args.coding)
    front_path = out / "front.csv"
    write_front_csv(result, front_path)
    read_front_csv(front_path)
    _print_result(inst.name, f"{args.engine}-{args.coding}-{args.gens}", result)
    return {"front": str(front_path), "hv": result.hv, "evaluated": result.evaluated}


def _print_result(instance: str, solver: str, result: RunResult) -> None:
    hv = "n/a" if result.hv is None else f"{result.hv:.4f}"
    print(
        f"{instance} {solver}: {len(result.objectives)} non-dominated solutions, "
        f"HV {hv}, {result.evaluated} evaluations, {result.wall_time:.1f}s"
    )


def _benchmark_one(job: dict) -> dict:
    inst = load_instance(job["instance"])
    solver = job["solver"]
    config = HybridConfig(
        pop_size=job["pop"],
        max_generations=job["gens"],
        engine=job["engine"],
        seed=job["seed"],
        include_length=job["include_length"],
        ref=tuple(job["ref"]) if job["ref"] else None,
    )
    if solver.startswith("hybrid"):
        actor = load_checkpoint(job["checkpoint"]).build_actor()
        result = run_moea_drl(inst, config, actor)
    else:
        result = run_pure_moea(inst, config, coding=job["coding"])
    return {
        "instance": inst.name,
        "solver": solver,
        "run": job["run"],
        "seed": job["seed"],
        "hv": result.hv,
        "time_s": result.wall_time,
        "solutions": len(result.objectives),
        "evaluated": result.evaluated,
    }


def parse_solver(spec: str, default_gens: int) -> dict:
    """Solver specs: hybrid-nsga2, hybrid-nsga3, nsga2-single-500, nsga3-double-2000."""
    parts = spec.split("-")
    if parts[0] == "hybrid":
        if len(parts) != 2 or parts[1] not in ("nsga2", "nsga3"):
            raise CommandError(f"bad solver spec '{spec}': want hybrid-nsga2 or hybrid-nsga3")
        return {"solver": spec, "engine": parts[1], "coding": None, "gens": default_gens}
    if len(parts) != 3 or parts[0] not in ("nsga2", "nsga3") or parts[1] not in ("single", "double"):
        raise CommandError(f"bad solver spec '{spec}': want ENGINE-CODING-GENS, e.g. nsga2-single-500")
    try:
        gens = int(parts[2])
    except ValueError:
        raise CommandError(f"bad solver spec '{spec}': generation count must be an integer") from None
    return {"solver": spec, "engine": parts[0], "coding": parts[1], "gens": gens}


def cmd_benchmark(args) -> dict:
    out = _out_dir(args)
    if not args.instance:
        raise CommandError("--instance is required (repeatable)")
    if not args.solver:
        raise CommandError("--solver is required (repeatable)")
    jobs = []
    for inst_path in args.instance:
        inst = _load_inst(argparse.Namespace(instance=inst_path))
        ref, include_length = _resolve_ref(args, inst)
        for spec in args.solver:
            solver = parse_solver(spec, args.gens)
            if solver["solver"].startswith("hybrid") and args.checkpoint is None:
                raise CommandError(f"solver '{spec}' needs --checkpoint")
            for run in range(args.seeds):
                jobs.append(
                    {
                        "instance": str(inst_path),
                        "pop": args.pop,
                        "seed": args.seed_base + run,
                        "run": run,
                        "include_length": include_length,
                        "ref": list(ref) if ref else None,
                        "checkpoint": args.checkpoint,
                        **solver,
                    }
                )
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_benchmark_one, jobs))
    else:
        records = [_benchmark_one(job) for job in jobs]
    records.sort(key=lambda r: (r["instance"], r["solver"], r["run"]))
    runs_path = out / "benchmark_runs.csv"
    with open(runs_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["instance", "solver", "run", "seed", "hv", "time_s", "solutions", "evaluated"])
        writer.writeheader()
        writer.writerows(records)
    summary = summarize_benchmark(records)
    table_path = out / "benchmark_table.csv"
    with open(table_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["instance", "solver", "runs", "hv_median", "hv_mean", "time_mean_s", "evaluated"])
        writer.writeheader()
        writer.writerows(summary)
    for row in summary:
        print(
            f"{row['instance']:>12} {row['solver']:>18}: median HV {row['hv_median']:.4f} "
            f"mean HV {row['hv_mean']:.4f} over {row['runs']} runs ({row['time_mean_s']:.1f}s avg)"
        )
    return {"runs": str(runs_path), "table": str(table_path)}


def summarize_benchmark(records: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for rec in records:
        groups.setdefault((rec["instance"], rec["solver"]), []).append(rec)
    out = []
    for (instance, solver), recs in sorted(groups.items()):
        hvs = np.asarray([r["hv"] for r in recs], dtype=np.float64)
        out.append(
            {
                "instance": instance,
                "solver": solver,
                "runs": len(recs),
                "hv_median": float(np.median(hvs)),
                "hv_mean": float(hvs.mean()),
                "time_mean_s": float(np.mean([r["time_s"] for r in recs])),
                "evaluated": recs[0]["evaluated"],
            }
        )
    return out


def cmd_hv(args) -> dict:
    if args.front is None:
        raise CommandError("--front is required")
    if args.ref_preset is None:
        raise CommandError("--ref-preset is required")
    preset = ref_preset(args.ref_preset)
    front = read_front_csv(Path(args.front))
    if front.size and front.shape[1] != len(preset.ref):
        raise CommandError(
            f"front has {front.shape[1]} objectives but preset '{preset.name}' is {len(preset.ref)}-dimensional"
        )
    value = hypervolume(front, np.asarray(preset.ref))
    print(_fmt(value))
    return {"hv": value}


def cmd_rerun(args) -> dict:
    path = Path(args.manifest)
    if not path.exists():
        raise CommandError(f"manifest not found: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    argv = doc["config"]["argv"]
    return main(argv)


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moorient", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--seed-base", type=int, default=DEFAULT_INSTANCE_SEED, metavar="K")
        if out:
            p.add_argument("--out", type=str, default="runs/out", metavar="DIR")

    g = sub.add_parser("generate", help="write instance files (full grid, or one via --cities)")
    g.add_argument("--cities", type=int, default=None, metavar="N")
    g.add_argument("--profits", type=int, default=None, metavar="K")
    g.add_argument("--tmax", type=float, default=None, metavar="X")
    common(g)

    t = sub.add_parser("train", help="train a routing checkpoint")
    t.add_argument("--cities", type=int, default=20, metavar="N")
    t.add_argument("--epochs", type=int, default=1, metavar="N")
    t.add_argument("--batches", type=int, default=200, metavar="N", help="batches per epoch")
    t.add_argument("--batch", type=int, default=128, metavar="N")
    t.add_argument("--lr", type=float, default=3e-3, metavar="X")
    t.add_argument("--dropout", type=float, default=0.0, metavar="X")
    t.add_argument("--hidden", type=int, default=64, metavar="N")
    t.add_argument("--ablate-dynamic", action="store_true", help="zero the distance features (ablation)")
    common(t)

    s = sub.add_parser("solve", help="run the hybrid solver on one instance")
    s.add_argument("--instance", type=str, metavar="PATH")
    s.add_argument("--checkpoint", type=str, metavar="PATH")
    s.add_argument("--engine", choices=("nsga2", "nsga3"), default="nsga2")
    s.add_argument("--pop", type=int, default=100, metavar="N")
    s.add_argument("--gens", type=int, default=20, metavar="N")
    s.add_argument("--ref-preset", type=str, default=None, metavar="NAME")
    common(s)

    b = sub.add_parser("baseline", help="run a pure evolutionary baseline")
    b.add_argument("--instance", type=str, metavar="PATH")
    b.add_argument("--engine", choices=("nsga2", "nsga3"), default="nsga2")
    b.add_argument("--coding", choices=("single", "double"), default="single")
    b.add_argument("--pop", type=int, default=100, metavar="N")
    b.add_argument("--gens", type=int, default=500, metavar="N")
    b.add_argument("--ref-preset", type=str, default=None, metavar="NAME")
    common(b)

    k = sub.add_parser("benchmark", help="repeat solvers over seeds and tabulate HV")
    k.add_argument("--instance", action="append", default=[], metavar="PATH")
    k.add_argument("--solver", action="append", default=[], metavar="SPEC")
    k.add_argument("--checkpoint", type=str, default=None, metavar="PATH")
    k.add_argument("--pop", type=int, default=100, metavar="N")
    k.add_argument("--gens", type=int, default=20, metavar="N", help="generations for hybrid solvers")
    k.add_argument("--seeds", type=int, default=11, metavar="N")
    k.add_argument("--jobs", type=int, default=1, metavar="N")
    k.add_argument("--ref-preset", type=str, default=None, metavar="NAME")
    common(k)

    h = sub.add_parser("hv", help="recompute hypervolume from a front CSV")
    h.add_argument("--front", type=str, metavar="PATH")
    h.add_argument("--ref-preset", type=str, metavar="NAME")

    r = sub.add_parser("rerun", help="replay a command from its manifest")
    r.add_argument("manifest", type=str)

    return parser


_HANDLERS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "solve": cmd_solve,
    "baseline": cmd_baseline,
    "benchmark": cmd_benchmark,
    "hv": cmd_hv,
    "rerun": cmd_rerun,
}


def main(argv: list[str] | None = None) -> dict:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        artifacts = _HANDLERS[args.command](args)
    except (CommandError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(1) from exc
    if hasattr(args, "out") and args.command != "rerun":
        config = {k: v for k, v in vars(args).items() if k != "command"}
        config["argv"] = [args.command] + _restore_argv(args)
        write_manifest(Path(args.out), args.command, config, artifacts, time.perf_counter() - t0)
    return artifacts


def _restore_argv(args) -> list[str]:
    """Rebuild a flag list equivalent to the parsed arguments."""
    argv: list[str] = []
    for key, value in vars(args).items():
        if key in ("command", "manifest") or value is None:
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                argv.append(flag)
        elif isinstance(value, list):
            for item in value:
                argv.extend([flag, str(item)])
        else:
            argv.extend([flag, str(value)])
    return argv


if __name__ == "__main__":
    main()
