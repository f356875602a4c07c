"""Command-line pipeline: generate -> pseudolabel -> solve -> eval.

Every command takes one JSON config (see config.py); flags override the
config's paths, seed, and parallelism. Exit codes: 0 success, 1 usage or
config error, 2 runtime failure. Sample failures during solve are isolated:
the batch continues and the command exits 2 at the end if anything failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__, config, dataset, evalkit, pseudolabel, solver, synthgen
from .imgcore import read_png
from .solver import STAGE_NAMES

# Spacing between per-sample seed blocks; views use base..base+N-1 and the
# procedural origin uses base + _ORIGIN_OFFSET inside each block.
_SAMPLE_SEED_STRIDE = 1_000_003
_ORIGIN_OFFSET = 500_000


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; usage errors are 1 here
        raise _UsageError(message)


def sample_seed(global_seed: int, index: int) -> int:
    return global_seed + (index + 1) * _SAMPLE_SEED_STRIDE


def _load_config(args) -> config.PipelineConfig:
    cfg = config.load(args.config) if args.config else config.PipelineConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise _UsageError("--seed must be a non-negative integer")
        overrides["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    if getattr(args, "dataset", None):
        overrides["dataset_root"] = str(args.dataset)
    if getattr(args, "out", None):
        overrides["output_root"] = str(args.out)
    if getattr(args, "stages", None):
        stages = tuple(s.strip() for s in args.stages.split(",") if s.strip())
        unknown = set(stages) - set(STAGE_NAMES)
        if unknown or not stages:
            raise _UsageError(f"--stages must be a comma-separated subset of {','.join(STAGE_NAMES)}")
        overrides["solver"] = dataclasses.replace(cfg.solver, stages=stages)
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    if cfg.dataset_root is None:
        raise _UsageError("a dataset path is required (--dataset or config dataset_root)")
    return cfg


def _map_samples(fn, work, jobs: int):
    if jobs <= 1 or len(work) <= 1:
        return [fn(item) for item in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, work))


def _generate_one(item) -> str:
    cfg, index, origin_path = item
    seed = sample_seed(cfg.seed, index)
    gen = cfg.generator
    if origin_path is None:
        origin = synthgen.procedural_origin(seed + _ORIGIN_OFFSET, gen.height, gen.width)
    else:
        origin = read_png(origin_path)
    sample = synthgen.generate_sequence(origin, seed, gen)
    dataset.save_sample(Path(cfg.dataset_root), f"{index:04d}", sample, config.config_hash(cfg), __version__)
    return f"{index:04d}"


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    count = args.count if args.count is not None else 1
    if count < 1:
        raise _UsageError("--count must be at least 1")
    origin_files = None
    if args.origins:
        origin_files = sorted(Path(args.origins).glob("*.png"))
        if not origin_files:
            raise _UsageError(f"no PNG files found in {args.origins}")
    Path(cfg.dataset_root).mkdir(parents=True, exist_ok=True)
    work = [
        (cfg, i, origin_files[i % len(origin_files)] if origin_files else None)
        for i in range(count)
    ]
    ids = _map_samples(_generate_one, work, cfg.jobs)
    print(f"generated {len(ids)} samples under {cfg.dataset_root}")
    return 0


def _label_one(item) -> str:
    cfg, sid = item
    sample = dataset.load_sample(Path(cfg.dataset_root), sid)
    labels = pseudolabel.label_sequence(sample.origin, sample.views, cfg.pseudolabel)
    dataset.save_labels(Path(cfg.dataset_root), sid, labels)
    return sid


def cmd_pseudolabel(args) -> int:
    cfg = _load_config(args)
    ids = dataset.list_sample_ids(Path(cfg.dataset_root))
    if not ids:
        raise RuntimeError(f"no samples found under {cfg.dataset_root}")
    _map_samples(_label_one, [(cfg, sid) for sid in ids], cfg.jobs)
    print(f"labeled {len(ids)} samples under {cfg.dataset_root}")
    return 0


def _solve_one(item) -> tuple[str, str | None]:
    cfg, sid = item
    try:
        root = Path(cfg.dataset_root)
        sample = dataset.load_sample(root, sid)
        if dataset.has_labels(root, sid, sample.n_views):
            labels = dataset.load_labels(root, sid, sample.n_views)
        else:
            labels = pseudolabel.label_sequence(sample.origin, sample.views, cfg.pseudolabel)
        result, trace = solver.solve(sample, cfg.solver, labels)
        payload = {
            "schema_version": 1,
            "sample_id": sid,
            "config_hash": config.config_hash(cfg),
            "seed": cfg.seed,
            "tool_version": __version__,
        }
        payload.update(trace.to_dict())
        dataset.save_solution(Path(cfg.output_root), sid, result, payload)
        return sid, None
    except Exception:
        return sid, traceback.format_exc()


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    if cfg.output_root is None:
        raise _UsageError("solve needs an output path (--out or config output_root)")
    ids = dataset.list_sample_ids(Path(cfg.dataset_root))
    if not ids:
        raise RuntimeError(f"no samples found under {cfg.dataset_root}")
    results = _map_samples(_solve_one, [(cfg, sid) for sid in ids], cfg.jobs)
    failures = [(sid, err) for sid, err in results if err is not None]
    for sid, err in failures:
        print(f"sample {sid} failed:\n{err}", file=sys.stderr)
    print(f"solved {len(ids) - len(failures)}/{len(ids)} samples into {cfg.output_root}")
    return 2 if failures else 0


def _eval_one(item) -> evalkit.SampleRecord:
    cfg, sid = item
    sample = dataset.load_sample(Path(cfg.dataset_root), sid)
    oi, shadings, recons, masks = dataset.load_solution_rasters(Path(cfg.output_root), sid, sample.n_views)
    return evalkit.evaluate_rasters(
        sid, sample.origin, sample.views, sample.gt_occ_mask, oi, shadings, recons, masks
    )


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    if cfg.output_root is None:
        raise _UsageError("eval needs the results path (--out or config output_root)")
    ids = dataset.list_sample_ids(Path(cfg.dataset_root))
    if not ids:
        raise RuntimeError(f"no samples found under {cfg.dataset_root}")
    records = _map_samples(_eval_one, [(cfg, sid) for sid in ids], cfg.jobs)
    origins = [dataset.load_sample(Path(cfg.dataset_root), sid).origin for sid in ids]
    report = evalkit.build_report(records, origins=origins, baseline_seed=cfg.seed)
    json_path, csv_path = dataset.write_report(
        Path(cfg.output_root), report, config.config_hash(cfg), cfg.seed, __version__
    )
    print(f"wrote {json_path} and {csv_path}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="seqdecomp", description=__doc__)
    parser.add_argument("--version", action="version", version=f"seqdecomp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=False):
        p.add_argument("--config", type=Path, help="pipeline config JSON")
        p.add_argument("--dataset", type=Path, help="dataset root directory")
        p.add_argument("--seed", type=int, help="global seed override")
        p.add_argument("--jobs", type=int, help="parallel workers over samples")
        if out:
            p.add_argument("--out", type=Path, help="results root directory")

    p_gen = sub.add_parser("generate", help="write synthetic samples with ground truth")
    common(p_gen)
    p_gen.add_argument("--count", type=int, help="number of samples (default 1)")
    p_gen.add_argument("--origins", type=Path, help="directory of origin PNGs (default: procedural)")
    p_gen.set_defaults(fn=cmd_generate)

    p_lab = sub.add_parser("pseudolabel", help="write pseudo-label targets for every sample")
    common(p_lab)
    p_lab.set_defaults(fn=cmd_pseudolabel)

    p_solve = sub.add_parser("solve", help="recover decompositions per sample")
    common(p_solve, out=True)
    p_solve.add_argument("--stages", type=str, help="comma-separated subset of sl,occ,joint")
    p_solve.set_defaults(fn=cmd_solve)

    p_eval = sub.add_parser("eval", help="score results and write report.json/report.csv")
    common(p_eval, out=True)
    p_eval.set_defaults(fn=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help / --version
        return int(exc.code or 0)
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
