# app.py

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from agents.dependence_analyzer import DependenceAnalyzer
from agents.equivalence_oracle import EquivalenceOracle
from agents.experiment_runner import ExperimentRunner, load_transforms, write_transforms
from agents.report_writer import FORMATS, ReportWriter, write_atomic
from agents.transform_engine import TransformEngine
from utils.config import Config
from utils.corpus import convert_humaneval, load_corpus
from utils.errors import ToolkitError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_ANOMALIES = 2


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )


def build_config(args: argparse.Namespace) -> Config:
    """Config file first, then command-line overrides."""
    config = Config.from_file(args.config) if getattr(args, "config", None) else Config()
    overrides = {
        "provider": getattr(args, "provider", None),
        "model_id": getattr(args, "model", None),
        "language": getattr(args, "language", None),
        "seed": getattr(args, "seed", None),
        "runs_dir": getattr(args, "runs_dir", None),
        "cache_path": getattr(args, "cache", None),
        "replay_path": getattr(args, "replay", None),
        "mock_mode": getattr(args, "mock_mode", None),
    }
    for key, value in overrides.items():
        if value is not None:
            config.set(key, value)
    for flag, key in (("own_code", "own_code_only"), ("validate", "validate_in_run"),
                      ("exclude_anomalies", "exclude_anomalies"), ("mask_name", "mask_method_name"),
                      ("transitive", "transitive_control"), ("randomized", "randomized_sites")):
        if getattr(args, flag, False):
            config.set(key, True)
    return config


def _split(value: Optional[str]) -> Optional[List[str]]:
    """Comma-separated ids; `all` (or nothing) means every registered id."""
    if not value or value.strip() == "all":
        return None
    return [v.strip() for v in value.split(",") if v.strip()]


def cmd_transform(args, config: Config) -> int:
    units = load_corpus(args.corpus or config.SAMPLE_CORPUS, config.LANGUAGE).units
    engine = TransformEngine(config=config)
    outcomes = engine.transform_corpus(units, _split(args.operators), config.SEED)
    if args.out:
        paths = write_transforms(args.out, outcomes)
        logger.info(f"💾 Wrote {len(paths)} operator files to {args.out}")
    else:
        for items in outcomes.values():
            for o in items:
                print(json.dumps(o.to_dict(), ensure_ascii=False))
    return EXIT_OK


def cmd_validate(args, config: Config) -> int:
    runner = ExperimentRunner(config, args.corpus)
    units = runner.load_units().units
    outcomes = load_transforms(args.transforms)
    verdicts = runner.validate(units, outcomes)
    ordered = sorted(verdicts.values(), key=lambda v: (v.operator_id, v.unit_id))
    text = json.dumps([v.to_dict() for v in ordered], indent=2) + "\n"
    if args.report:
        write_atomic(args.report, text)
    else:
        print(text, end="")
    anomalies = [v for v in ordered if v.anomaly]
    for v in anomalies:
        logger.warning(f"🚩 {v.semantic_class} {v.operator_id} on {v.unit_id}: {v.label.value}")
    logger.info(f"📊 {len(ordered)} verdicts, {len(anomalies)} anomalies")
    return EXIT_ANOMALIES if anomalies else EXIT_OK


def cmd_deps(args, config: Config) -> int:
    units = load_corpus(args.corpus or config.SAMPLE_CORPUS, config.LANGUAGE).units
    analyzer = DependenceAnalyzer(config=config)
    lines = []
    for unit, graph in zip(units, analyzer.analyze_corpus(units)):
        record = graph.to_dict()
        if args.lines:
            record["control"] = [list(p) for p in sorted(graph.as_lines(unit, "control"))]
            record["data"] = [list(p) for p in sorted(graph.as_lines(unit, "data"))]
        lines.append(json.dumps(record))
    if args.out:
        write_atomic(args.out, "".join(line + "\n" for line in lines))
        logger.info(f"💾 Wrote {len(lines)} dependence graphs to {args.out}")
    else:
        print("\n".join(lines))
    return EXIT_OK


def cmd_run(args, config: Config) -> int:
    runner = ExperimentRunner(config, args.corpus)
    if args.rq == "4":
        results = [runner.run_rq4(granularity=args.granularity)]
    elif args.rq in ("1", "2", "3"):
        method = {"1": runner.run_rq1, "2": runner.run_rq2, "3": runner.run_rq3}[args.rq]
        results = [method(_split(args.transforms), _split(args.tasks))]
    else:
        results = runner.run(args.rq)
    for result in results:
        print(result.run_dir)
    return EXIT_ANOMALIES if any(r.anomalies for r in results) else EXIT_OK


def cmd_report(args, config: Config) -> int:
    run_dir = args.run
    if not os.path.isdir(run_dir):
        run_dir = os.path.join(config.RUNS_DIR, args.run)
    writer = ReportWriter(os.path.join(run_dir, "reports"))
    text = writer.render_run(args.format, _split(args.tables))
    if args.output:
        write_atomic(args.output, text)
    else:
        print(text, end="")
    return EXIT_OK


def cmd_convert_humaneval(args, config: Config) -> int:
    count = convert_humaneval(args.input, args.output)
    logger.info(f"✅ Converted {count} problems into {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app.py", description="Code-semantics evaluation toolkit for code LLMs")
    parser.add_argument("--config", help="TOML or JSON config file")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def corpus_args(p):
        p.add_argument("--corpus", help="corpus JSONL (default: the bundled sample)")
        p.add_argument("--language", choices=["python", "java", "both"])
        p.add_argument("--seed", type=int)

    p = sub.add_parser("transform", help="apply transformation operators")
    corpus_args(p)
    p.add_argument("--operators", default="all", help="comma-separated operator ids or 'all'")
    p.add_argument("--randomized", action="store_true", help="seeded random site selection")
    p.add_argument("--out", help="directory receiving one <operator_id>.jsonl per operator")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("validate", help="judge transform outcomes by executing tests")
    corpus_args(p)
    p.add_argument("--transforms", required=True, help="directory written by 'transform --out'")
    p.add_argument("--report", help="verdicts JSON (default: stdout)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("deps", help="compute control/data dependence pairs")
    corpus_args(p)
    p.add_argument("--transitive", action="store_true")
    p.add_argument("--lines", action="store_true", help="report pairs as line numbers (signature = 1)")
    p.add_argument("--out", help="dependence graphs JSONL (default: stdout)")
    p.set_defaults(func=cmd_deps)

    p = sub.add_parser("run", help="run a research question end to end")
    corpus_args(p)
    p.add_argument("--rq", choices=["1", "2", "3", "4", "all"], required=True)
    p.add_argument("--transforms", help="comma-separated operator ids or 'all'")
    p.add_argument("--tasks", help="comma-separated: summarize,method_name,output_predict")
    p.add_argument("--provider", choices=["openai", "ollama", "mock", "replay"])
    p.add_argument("--model")
    p.add_argument("--mock-mode", dest="mock_mode", choices=["echo", "constant", "empty", "oracle"])
    p.add_argument("--replay", help="recorded exchanges JSONL for the replay provider")
    p.add_argument("--cache")
    p.add_argument("--runs-dir", dest="runs_dir")
    p.add_argument("--own-code", dest="own_code", action="store_true")
    p.add_argument("--validate", action="store_true", help="execute tests on transforms during the run")
    p.add_argument("--exclude-anomalies", dest="exclude_anomalies", action="store_true")
    p.add_argument("--mask-name", dest="mask_name", action="store_true")
    p.add_argument("--transitive", action="store_true")
    p.add_argument("--randomized", action="store_true")
    p.add_argument("--granularity", choices=["line", "statement"], default="line")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render a completed run's reports")
    p.add_argument("--run", required=True, help="run directory or run id")
    p.add_argument("--format", choices=FORMATS, default="md")
    p.add_argument("--tables", help="comma-separated table names")
    p.add_argument("--output")
    p.add_argument("--runs-dir", dest="runs_dir")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("convert-humaneval", help="convert HumanEval problems into corpus JSONL")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_convert_humaneval)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        config = build_config(args)
        return args.func(args, config)
    except ToolkitError as e:
        logger.error(f"❌ {type(e).__name__}: {e}", exc_info=args.verbose)
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
