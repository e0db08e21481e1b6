"""
Command line surface.

    python cli.py gen --out data/ --seed 0 [--config dataset_config.json]
    python cli.py run data/manifest.json --out runs/ [--components oracle] [--rounds 2]
    python cli.py eval runs/ --report runs/summary.json [--plot]
    python cli.py metrics est.wav ref.wav [--mixture mix.wav]

Errors are reported as one line on stderr, `error=<Class> message="..."`.
"""
import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import List, Optional

from configs.gen_sep_cfs import (ComponentNames, ConfigGenerator, DatasetConfig, EvalConfig, RunConfig,
                                 config_hash)
from evaluation.evaluator_batch import BatchEvaluator
from evaluation.metrics import sdr_db, si_snr_db, si_snr_improvement_db, snr_db, snr_improvement_db
from provenance.ledger import ProvenanceLedger, provenance_record
from separation.pipeline_batch import BatchPipelineRunner
from simulation.dataset_generator_batch import BatchDatasetGenerator
from storage.reports import save_json
from storage.wav_io import read_mono
from utils.errors import ConfigError, SeparationError

COMPONENT_KINDS = ("envelope", "tracker", "extractor", "refiner")


def parse_components(spec: str, base: Optional[ComponentNames] = None) -> ComponentNames:
    """
    "oracle" selects one name for every kind; "tracker=oracle,extractor=steered"
    overrides individual kinds.
    """
    names = asdict(base if base is not None else ComponentNames())
    if "=" not in spec:
        return ComponentNames(**{kind: spec for kind in COMPONENT_KINDS})
    for item in spec.split(","):
        kind, _, name = item.partition("=")
        kind = kind.strip()
        if kind not in COMPONENT_KINDS:
            raise ConfigError(f"unknown component kind '{kind}' (expected one of {', '.join(COMPONENT_KINDS)})")
        names[kind] = name.strip()
    return ComponentNames(**names)


def _config_loader(path: str) -> ConfigGenerator:
    return ConfigGenerator(str(Path(path).parent))


def _record(args, info: str, payload: dict) -> None:
    ledger = ProvenanceLedger(args.ledger)
    ledger.append(payload, info=info)


def cmd_gen(args) -> int:
    if args.config:
        config = _config_loader(args.config).load_dataset_config(args.config)
    else:
        if not args.out:
            raise ConfigError("gen needs --out or --config")
        config = DatasetConfig(out_dir=args.out)
    if args.out:
        config = replace(config, out_dir=args.out)
    if args.seed is not None:
        config = replace(config, master_seed=args.seed)
    if args.n_scenes is not None:
        config = replace(config, n_scenes=args.n_scenes)
    if args.c_max is not None:
        config = replace(config, sampling=replace(config.sampling, c_max=args.c_max))

    manifest, result = BatchDatasetGenerator(config, args.parallelism).process()
    _record(args, "gen", provenance_record(config_hash(config), config.master_seed,
                                           generated=result.generated_scenes, failed=result.failed_scenes))
    print(f"manifest={result.manifest_path} scenes={result.generated_scenes}/{result.total_scenes}")
    return 0


def cmd_run(args) -> int:
    if args.config:
        config = _config_loader(args.config).load_run_config(args.config)
    else:
        if not (args.manifest and args.out):
            raise ConfigError("run needs a manifest and --out, or --config")
        config = RunConfig(manifest_path=args.manifest, out_dir=args.out)
    if args.manifest:
        config = replace(config, manifest_path=args.manifest)
    if args.out:
        config = replace(config, out_dir=args.out)
    if args.components:
        config = replace(config, components=parse_components(args.components, config.components))
    pipeline = config.pipeline
    if args.rounds is not None:
        pipeline = replace(pipeline, rounds=args.rounds)
    if args.c_max is not None:
        pipeline = replace(pipeline, c_max=args.c_max)
    if args.threshold is not None:
        pipeline = replace(pipeline, count_threshold=args.threshold)
    config = replace(config, pipeline=pipeline)
    if args.seed is not None:
        config = replace(config, oracle=replace(config.oracle, seed=args.seed))
    if args.parallelism is not None:
        config = replace(config, parallelism=args.parallelism)

    result = BatchPipelineRunner(config).process()
    _record(args, "run", provenance_record(config_hash(config), config.oracle.seed, asdict(config.components),
                                           processed=result.processed_scenes, failed=result.failed_scenes))
    print(f"results={config.out_dir} scenes={result.processed_scenes}/{result.total_scenes}")
    return 0 if not result.failed_scenes else 2


def cmd_eval(args) -> int:
    if args.config:
        config = _config_loader(args.config).load_eval_config(args.config)
    else:
        if not args.run_dir:
            raise ConfigError("eval needs a run directory or --config")
        report = args.report or str(Path(args.run_dir) / "summary.json")
        config = EvalConfig(run_dir=args.run_dir, report_path=report)
    if args.run_dir:
        config = replace(config, run_dir=args.run_dir)
    if args.report:
        config = replace(config, report_path=args.report)
    if args.plot:
        config = replace(config, plot=True)

    report = BatchEvaluator(config).process()
    _record(args, "eval", provenance_record(config_hash(config), None, n_scenes=report.n_scenes,
                                            failed=report.failed_scenes))
    print(report.render_table())
    return 0


def cmd_metrics(args) -> int:
    est = read_mono(args.estimate)
    trg = read_mono(args.target)
    values = {"snr_db": snr_db(est, trg), "si_snr_db": si_snr_db(est, trg),
              "sdr_db": sdr_db(est, trg, min(args.filter_len, est.shape[0]))}
    if args.mixture:
        mix = read_mono(args.mixture)
        values["snr_improvement_db"] = snr_improvement_db(est, trg, mix)
        values["si_snr_improvement_db"] = si_snr_improvement_db(est, trg, mix)
    if args.report:
        save_json(values, args.report)
    print(json.dumps(values, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="separation", description="Trajectory-aided separation of moving sources")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--ledger", default="provenance/database/ledger.json", help="provenance ledger file")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="render a simulated dataset")
    gen.add_argument("--config")
    gen.add_argument("--out")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--n-scenes", type=int)
    gen.add_argument("--c-max", type=int)
    gen.add_argument("--parallelism", type=int)
    gen.set_defaults(func=cmd_gen)

    run = sub.add_parser("run", help="run the separation pipeline on a dataset manifest")
    run.add_argument("manifest", nargs="?")
    run.add_argument("--config")
    run.add_argument("--out")
    run.add_argument("--seed", type=int, help="seed of the oracle corruptions")
    run.add_argument("--rounds", type=int)
    run.add_argument("--components", help="'oracle' or 'envelope=...,tracker=...,extractor=...,refiner=...'")
    run.add_argument("--c-max", type=int)
    run.add_argument("--threshold", type=float)
    run.add_argument("--parallelism", type=int)
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="score pipeline results and aggregate")
    ev.add_argument("run_dir", nargs="?")
    ev.add_argument("--config")
    ev.add_argument("--report")
    ev.add_argument("--plot", action="store_true")
    ev.set_defaults(func=cmd_eval)

    met = sub.add_parser("metrics", help="metrics between two audio files (channel 0)")
    met.add_argument("estimate")
    met.add_argument("target")
    met.add_argument("--mixture")
    met.add_argument("--report")
    met.add_argument("--filter-len", type=int, default=512)
    met.set_defaults(func=cmd_metrics)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except SeparationError as e:
        message = str(e).replace("\n", " ").replace('"', "'")
        print(f'error={type(e).__name__} message="{message}"', file=sys.stderr)
        return 2
    except Exception as e:
        message = str(e).replace("\n", " ").replace('"', "'")
        print(f'error={type(e).__name__} message="{message}"', file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
