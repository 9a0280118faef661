"""Command-line entry point.

Subcommands: ``gen-data``, ``train``, ``eval``, ``ablate``, ``bench-decode``.
Exit codes: 0 success, 2 usage error, 3 data or schema error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .archive import ArchiveError
from .config import VARIANTS, Config, load_config
from .world.scenarios import SCENARIOS, UnknownScenarioError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
METRICS_SCHEMA = 1

log = logging.getLogger("futureplan")


class UsageError(Exception):
    pass


def _write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps({"schema_version": METRICS_SCHEMA, **doc}, indent=2, sort_keys=True) + "\n")


def _config(args) -> Config:
    cfg = load_config(args.config) if getattr(args, "config", None) else Config()
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "variant", None):
        over["variant"] = args.variant
    return cfg.replace(**over) if over else cfg


def _parse_mix(text: str):
    from .world.dataset import parse_scenario_mix

    try:
        return parse_scenario_mix(text)
    except (UnknownScenarioError, ValueError) as exc:
        raise UsageError(f"invalid --scenarios {text!r}: {exc}; known scenarios: {', '.join(SCENARIOS)}") from None


def cmd_gen_data(args) -> int:
    from .world.dataset import generate_dataset, save_dataset

    mix = _parse_mix(args.scenarios)
    if args.episodes < 0:
        raise UsageError("--episodes must be >= 0")
    ds = generate_dataset(mix, args.episodes, args.seed, workers=args.workers)
    save_dataset(args.out, ds, extra={"seed": args.seed, "mix": mix, "recovery_noise": True})
    log.info("wrote %d episodes to %s", len(ds), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    from .training import train
    from .world.dataset import load_dataset

    if args.workers > 1:
        log.warning("multi-worker training is not bit-reproducible; training runs single-process")
    ds = load_dataset(args.data)
    if args.checkpoint:
        res = train(ds, None if not args.config else _config(args), out_dir=args.out, resume=args.checkpoint)
    else:
        cfg = _config(args)
        train_set, _ = ds.split(cfg.holdout, cfg.seed)
        res = train(train_set, cfg, out_dir=args.out)
    log.info("trained to step %d; checkpoint %s", res.step, res.checkpoint)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .evaluation import evaluate_closed_loop, evaluate_open_loop, mix_jobs, template_emission_rate
    from .world.closed_loop import oracle_policy
    from .world.dataset import load_dataset

    doc: dict = {"mode": args.mode}
    if args.policy == "oracle":
        model = None
        if args.mode != "closed":
            raise UsageError("--policy oracle requires --mode closed")
    else:
        if not args.checkpoint:
            raise UsageError("--checkpoint is required unless --policy oracle")
        ck = load_checkpoint(args.checkpoint)
        model = ck.model.eval()
        doc.update({"checkpoint": str(args.checkpoint), "step": ck.step, "variant": model.cfg.variant})
    if args.mode == "open":
        if not args.data:
            raise UsageError("--mode open requires --data")
        ds = load_dataset(args.data)
        doc["open_loop"] = evaluate_open_loop(model, ds)
        if args.template_check:
            doc["template_emission_rate"] = template_emission_rate(model, ds)
    else:
        jobs = mix_jobs(_parse_mix(args.scenarios), args.episodes, args.seed)
        res = evaluate_closed_loop(model, jobs, policy=oracle_policy if model is None else None)
        doc["policy"] = args.policy
        doc["closed_loop"] = res
    _write_json(args.out, doc)
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .ablation import closed_loop_seeds, run_ablation
    from .evaluation import mix_jobs
    from .world.dataset import load_dataset

    cfg = _config(args)
    variants = args.variant_list.split(",") if args.variant_list else list(VARIANTS)
    for v in variants:
        if v not in VARIANTS:
            raise UsageError(f"unknown variant {v!r}; choose from {VARIANTS}")
    ds = load_dataset(args.data)
    train_set, holdout = ds.split(cfg.holdout, 0)
    seeds = [cfg.seed + i for i in range(args.num_seeds)]
    jobs = mix_jobs(_parse_mix(args.scenarios), args.episodes, closed_loop_seeds(1)[0]) if args.episodes else []
    run_ablation(train_set, holdout, cfg, variants, seeds, jobs, out_csv=args.out)
    return EXIT_OK


def cmd_bench_decode(args) -> int:
    from .bench import bench_decode
    from .checkpoint import load_checkpoint
    from .training import build_model
    from .world.core import WorldConfig

    if args.checkpoint:
        model = load_checkpoint(args.checkpoint).model
    else:
        model = build_model(_config(args), WorldConfig())
    report = bench_decode(model, reps=args.reps, seed=args.seed or 0)
    _write_json(args.out, report)
    print(json.dumps({k: report[k] for k in ("prefill_median_s", "autoregressive_median_s",
                                             "baseline_median_s", "ar_over_prefill")}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="futureplan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate an episode dataset archive")
    g.add_argument("--scenarios", default="all", help="'all' or 'name[:weight],...'")
    g.add_argument("--episodes", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model (or resume from --checkpoint)")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--seed", type=int)
    t.add_argument("--variant", choices=VARIANTS)
    t.add_argument("--checkpoint", help="resume from this checkpoint")
    t.add_argument("--workers", type=int, default=1)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="open- or closed-loop evaluation")
    e.add_argument("--checkpoint")
    e.add_argument("--mode", choices=("open", "closed"), default="open")
    e.add_argument("--data", help="dataset archive for open-loop mode")
    e.add_argument("--scenarios", default="all")
    e.add_argument("--episodes", type=int, default=10, help="closed-loop runs")
    e.add_argument("--seed", type=int, default=900_000, help="first closed-loop scene seed")
    e.add_argument("--policy", choices=("model", "oracle"), default="model")
    e.add_argument("--template-check", action="store_true", help="also measure greedy template emission")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="train and evaluate variants over seeds")
    a.add_argument("--config")
    a.add_argument("--data", required=True)
    a.add_argument("--variant", dest="variant_list", help="comma-separated subset of " + ",".join(VARIANTS))
    a.add_argument("--seed", type=int)
    a.add_argument("--num-seeds", type=int, default=5)
    a.add_argument("--scenarios", default="all", help="closed-loop scenario mix")
    a.add_argument("--episodes", type=int, default=0, help="closed-loop runs per model")
    a.add_argument("--out", required=True, help="CSV table")
    a.set_defaults(func=cmd_ablate)

    b = sub.add_parser("bench-decode", help="time prefilled vs autoregressive decoding")
    b.add_argument("--checkpoint")
    b.add_argument("--config")
    b.add_argument("--seed", type=int)
    b.add_argument("--reps", type=int, default=30)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench_decode)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    from .training import NumericalAbort

    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ArchiveError, OSError, KeyError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
