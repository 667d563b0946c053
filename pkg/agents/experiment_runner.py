# agents/experiment_runner.py
import json
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import xxhash

from agents.dependence_analyzer import CONTROL, DATA, DependenceAnalyzer, DependenceGraph
from agents.equivalence_oracle import EquivalenceOracle, ExecutionVerdict
from agents.metrics import (
    STRATUM_ALL, STRATUM_CORRECT, STRATUM_INCORRECT, DependenceScore, MetricReport, aggregate_dependence,
    dependence_scores, report_sort_key, score_operator, with_aggregates,
)
from agents.prompt_harness import (
    UNDERSTANDING_TASKS, ModelExchange, PromptHarness, QueryJob, load_templates, render_prompt,
)
from agents.report_writer import ReportWriter, write_atomic
from agents.transform_engine import OPERATORS, TransformEngine, TransformOutcome, get_operator
from utils.code_model import FunctionUnit
from utils.config import Config
from utils.corpus import CorpusLoad, corpus_digest, load_corpus, read_records
from utils.errors import CorpusError, MissingCorrectnessFlags, ToolkitError
from utils.exchange_cache import ExchangeCache
from utils.llm_client import CONTROL_DEPS, DATA_DEPS, OUTPUT_PREDICT, create_embedder, create_provider

ORIGINAL = "original"
DEPENDENCE_KINDS = ((CONTROL, CONTROL_DEPS), (DATA, DATA_DEPS))


def write_transforms(directory: str, outcomes: Dict[str, List[TransformOutcome]]) -> List[str]:
    """One `<operator_id>.jsonl` of outcomes per operator."""
    paths = []
    for op_id, items in outcomes.items():
        path = os.path.join(directory, f"{op_id}.jsonl")
        write_atomic(path, "".join(json.dumps(o.to_dict(), ensure_ascii=False) + "\n" for o in items))
        paths.append(path)
    return paths


def load_transforms(directory: str) -> Dict[str, List[TransformOutcome]]:
    """Read back a directory written by `write_transforms`, in operator registry order."""
    if not os.path.isdir(directory):
        raise CorpusError(f"Transform directory not found: {directory}")
    order = {op.id: i for i, op in enumerate(OPERATORS)}
    outcomes: Dict[str, List[TransformOutcome]] = {}
    for name in sorted(os.listdir(directory), key=lambda n: (order.get(n[:-len(".jsonl")], len(order)), n)):
        if not name.endswith(".jsonl"):
            continue
        path = os.path.join(directory, name)
        items = []
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    items.append(TransformOutcome.from_dict(json.loads(line)))
                except (ValueError, KeyError, TypeError) as e:
                    raise CorpusError(f"{path}:{lineno}: not a transform outcome ({e})") from e
        outcomes[name[:-len(".jsonl")]] = items
    if not outcomes:
        raise CorpusError(f"No transform outcomes in {directory}")
    return outcomes


@dataclass
class RunManifest:
    run_id: str
    rq: str
    config: Dict[str, Any]
    corpus_path: str
    corpus_digest: str
    operators: List[Dict[str, Any]]
    models: List[Dict[str, Any]]
    tasks: List[str]
    started_at: str
    finished_at: str = ""
    artifacts: Dict[str, str] = field(default_factory=dict)
    failed_models: Dict[str, str] = field(default_factory=dict)
    anomalies: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run_id": self.run_id,
            "rq": self.rq,
            "config": self.config,
            "corpus": {"path": self.corpus_path, "digest": self.corpus_digest},
            "operators": self.operators,
            "models": self.models,
            "tasks": self.tasks,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "artifacts": self.artifacts,
            "failed_models": self.failed_models,
            "anomalies": self.anomalies,
        }


@dataclass
class RunResult:
    manifest: RunManifest
    run_dir: str
    tables: Dict[str, List[Dict[str, Any]]]

    @property
    def anomalies(self) -> int:
        return self.manifest.anomalies


class ExperimentRunner:
    """
    End-to-end pipeline: corpus -> transforms -> (validation) -> model queries
    -> metrics -> reports, with every artifact under runs/<run_id>/.
    """

    def __init__(self, config=None, corpus_path: Optional[str] = None):
        self.config = config or Config()
        self.logger = logging.getLogger(__name__)
        self.corpus_path = corpus_path or self.config.SAMPLE_CORPUS
        self.engine = TransformEngine(config=self.config)
        self.oracle = EquivalenceOracle(config=self.config)
        self.analyzer = DependenceAnalyzer(config=self.config)
        self.templates = load_templates(self.config.PROMPT_TEMPLATES)
        self.embedder = create_embedder(self.config)

    # -------------------- models & corpus --------------------

    def model_specs(self, sweep: bool = False) -> List[Dict[str, Any]]:
        if sweep and self.config.MODELS:
            specs = [dict(m) for m in self.config.MODELS]
        else:
            specs = [{"provider": self.config.PROVIDER, "model_id": self.config.MODEL_ID}]
        for spec in specs:
            spec.setdefault("provider", self.config.PROVIDER)
            spec.setdefault("model_id", self.config.MODEL_ID)
            spec.setdefault("name", spec["model_id"])
        return specs

    def load_units(self, model_id: Optional[str] = None) -> CorpusLoad:
        own = model_id if self.config.OWN_CODE_ONLY else None
        return load_corpus(self.corpus_path, self.config.LANGUAGE, own_code_of=own)

    def _run_id(self, rq: str, digest: str, operator_ids: Sequence[str], specs: Sequence[Dict], tasks: Sequence[str]) -> str:
        settings = {
            k: getattr(self.config, k) for k in (
                "SEED", "TEMPERATURE", "RANDOMIZED_SITES", "TRANSITIVE_CONTROL", "EXCLUDE_ANOMALIES",
                "MASK_METHOD_NAME", "OWN_CODE_ONLY", "LANGUAGE", "OUTPUT_TESTS_PER_UNIT",
            )
        }
        payload = json.dumps([rq, digest, list(operator_ids), list(specs), list(tasks), settings], sort_keys=True, default=str)
        return f"rq{rq}-{xxhash.xxh3_128_hexdigest(payload.encode('utf-8'))[:16]}"

    def _start(self, rq: str, operator_ids: Sequence[str], specs: List[Dict], tasks: Sequence[str]) -> Tuple[RunManifest, str]:
        digest = corpus_digest(read_records(self.corpus_path))
        run_id = self._run_id(rq, digest, operator_ids, specs, tasks)
        run_dir = os.path.join(self.config.RUNS_DIR, run_id)
        os.makedirs(run_dir, exist_ok=True)
        snapshot = self.config.snapshot() if isinstance(self.config, Config) else Config().snapshot()
        manifest = RunManifest(
            run_id=run_id,
            rq=rq,
            config=snapshot,
            corpus_path=self.corpus_path,
            corpus_digest=digest,
            operators=[{"id": op_id, "seed": self.config.SEED} for op_id in operator_ids],
            models=specs,
            tasks=list(tasks),
            started_at=self.config.get_current_date(),
        )
        self.logger.info(f"🚀 Starting run {run_id} in {run_dir}")
        return manifest, run_dir

    def _finish(self, manifest: RunManifest, run_dir: str, tables: Dict[str, List[Dict[str, Any]]],
                exchanges: List[ModelExchange]) -> RunResult:
        reports_dir = os.path.join(run_dir, "reports")
        paths = ReportWriter(reports_dir).write_tables(tables)
        if exchanges:
            records = sorted((e.to_record() for e in exchanges if e.provider_error is None),
                             key=lambda r: (r["model_id"], r["unit_id"], r["task"], r["variant"], r["cache_key"]))
            unique, seen = [], set()
            for record in records:
                if record["cache_key"] not in seen:
                    seen.add(record["cache_key"])
                    unique.append(record)
            path = os.path.join(run_dir, "exchanges.jsonl")
            write_atomic(path, "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in unique))
            manifest.artifacts["exchanges"] = path
        manifest.artifacts["reports"] = reports_dir
        manifest.artifacts.update({os.path.basename(p): p for p in paths})
        manifest.finished_at = self.config.get_current_date()
        write_atomic(os.path.join(run_dir, "manifest.json"), json.dumps(manifest.to_dict(), indent=2, default=str) + "\n")
        self.logger.info(f"🎉 Run {manifest.run_id} completed ({manifest.anomalies} anomalies)")
        return RunResult(manifest=manifest, run_dir=run_dir, tables=tables)

    def _harness(self, spec: Dict[str, Any]) -> PromptHarness:
        provider = create_provider(self.config, spec)
        return PromptHarness(provider, ExchangeCache(self.config.CACHE_PATH), self.config)

    # -------------------- stages --------------------

    def transform(self, units: List[FunctionUnit], operator_ids: Sequence[str],
                  run_dir: Optional[str] = None) -> Dict[str, List[TransformOutcome]]:
        outcomes = self.engine.transform_corpus(units, list(operator_ids), self.config.SEED)
        if run_dir:
            write_transforms(os.path.join(run_dir, "transforms"), outcomes)
        return outcomes

    def validate(self, units: List[FunctionUnit], outcomes: Dict[str, List[TransformOutcome]],
                 run_dir: Optional[str] = None) -> Dict[Tuple[str, str], ExecutionVerdict]:
        by_id = {u.id: u for u in units}
        applied = [o for items in outcomes.values() for o in items if o.applied]
        missing = sorted({o.unit_id for o in applied} - set(by_id))
        if missing:
            raise CorpusError(f"Transforms refer to units not in the corpus: {', '.join(missing)}")
        pairs = [(by_id[o.unit_id], o) for o in applied]
        verdicts = self.oracle.judge_many(pairs)
        if run_dir:
            ordered = sorted(verdicts, key=lambda v: (v.operator_id, v.unit_id))
            write_atomic(os.path.join(run_dir, "verdicts.json"),
                         json.dumps([v.to_dict() for v in ordered], indent=2) + "\n")
        return {(v.unit_id, v.operator_id): v for v in verdicts}

    def applicability(self, units: List[FunctionUnit], outcomes: Dict[str, List[TransformOutcome]]) -> List[Dict[str, Any]]:
        language = {u.id: u.language for u in units}
        counts: Dict[Tuple[str, str], List[int]] = defaultdict(lambda: [0, 0])
        for op_id, items in outcomes.items():
            for o in items:
                counts[(language[o.unit_id], op_id)][0 if o.applied else 1] += 1
        order = {op.id: i for i, op in enumerate(OPERATORS)}
        rows = []
        for (lang, op_id), (applied, not_applicable) in sorted(counts.items(), key=lambda kv: (kv[0][0], order[kv[0][1]])):
            total = applied + not_applicable
            rows.append({
                "language": lang,
                "operator": op_id,
                "semantic_class": get_operator(op_id).semantic_class.value,
                "applied": applied,
                "not_applicable": not_applicable,
                "applicability": applied / total if total else 0.0,
            })
        return rows

    def _output_tests(self, unit: FunctionUnit) -> List[int]:
        return list(range(min(len(unit.tests), max(1, int(self.config.OUTPUT_TESTS_PER_UNIT)))))

    def understanding_jobs(self, units: List[FunctionUnit], outcomes: Dict[str, List[TransformOutcome]],
                           tasks: Sequence[str]) -> List[QueryJob]:
        """Original prompts once per unit, plus one prompt per applied outcome, per task."""
        mask = bool(self.config.MASK_METHOD_NAME)
        jobs: List[QueryJob] = []
        by_id = {u.id: u for u in units}
        for unit in units:
            for task in tasks:
                for k in (self._output_tests(unit) if task == OUTPUT_PREDICT else [None]):
                    test = unit.tests[k] if k is not None else None
                    variant = ORIGINAL if k is None else f"{ORIGINAL}#t{k}"
                    prompt = render_prompt(task, unit, test, templates=self.templates, mask_name=mask)
                    jobs.append(QueryJob(unit.id, variant, prompt))
        for op_id, items in outcomes.items():
            for outcome in items:
                if not outcome.applied:
                    continue
                unit = by_id[outcome.unit_id]
                tests = outcome.tests or unit.tests
                for task in tasks:
                    for k in (self._output_tests(unit) if task == OUTPUT_PREDICT else [None]):
                        test = tests[k] if k is not None else None
                        variant = op_id if k is None else f"{op_id}#t{k}"
                        prompt = render_prompt(task, unit, test, source=outcome.transformed_source,
                                               templates=self.templates, mask_name=mask)
                        jobs.append(QueryJob(unit.id, variant, prompt))
        return jobs

    def score_understanding(self, model_id: str, units: List[FunctionUnit], outcomes: Dict[str, List[TransformOutcome]],
                            exchanges: List[ModelExchange], tasks: Sequence[str],
                            verdicts: Optional[Dict[Tuple[str, str], ExecutionVerdict]] = None,
                            strata: Optional[Dict[str, str]] = None) -> List[MetricReport]:
        """
        Pair each transformed answer with the original answer of the same unit,
        task and test. NotApplicable outcomes never form pairs; anomalies are
        dropped when EXCLUDE_ANOMALIES is on.
        """
        answers = {(e.unit_id, e.task, e.variant): e.parsed for e in exchanges}
        by_id = {u.id: u for u in units}
        grouped: Dict[Tuple[str, str, str, str], List] = defaultdict(list)
        for op_id, items in outcomes.items():
            for outcome in items:
                if not outcome.applied:
                    continue
                if self.config.EXCLUDE_ANOMALIES and verdicts is not None:
                    verdict = verdicts.get((outcome.unit_id, op_id))
                    if verdict is not None and verdict.anomaly:
                        continue
                stratum = STRATUM_ALL if strata is None else strata.get(outcome.unit_id)
                if stratum is None:
                    continue
                for task in tasks:
                    suffixes = [""]
                    if task == OUTPUT_PREDICT:
                        suffixes = [f"#t{k}" for k in self._output_tests(by_id[outcome.unit_id])]
                    for suffix in suffixes:
                        original = answers.get((outcome.unit_id, task, ORIGINAL + suffix))
                        transformed = answers.get((outcome.unit_id, task, op_id + suffix))
                        if original is None or transformed is None:
                            continue
                        grouped[(by_id[outcome.unit_id].language, task, op_id, stratum)].append((original, transformed))

        reports = []
        for (lang, task, op_id, stratum), pairs in grouped.items():
            op = get_operator(op_id)
            reports.append(score_operator(model_id, lang, task, op_id, op.semantic_class.value, pairs,
                                          embedder=self.embedder, stratum=stratum))
        return with_aggregates(reports)

    def correctness_flags(self, units: List[FunctionUnit]) -> Dict[str, bool]:
        """pass@1 per unit: executed tests first, the corpus flag otherwise."""
        flags: Dict[str, bool] = {}
        for unit in units:
            executed = self.oracle.correctness(unit)
            flag = executed if executed is not None else unit.correctness
            if flag is None:
                self.logger.warning(f"⚠️ {unit.id}: no correctness flag, left out of strata")
                continue
            flags[unit.id] = bool(flag)
        if units and not flags:
            raise MissingCorrectnessFlags("No unit has a correctness flag and none could be derived by execution")
        return flags

    # -------------------- research questions --------------------

    def _understanding_run(self, rq: str, operator_ids: Optional[Sequence[str]], tasks: Optional[Sequence[str]],
                           sweep: bool = False, stratify: bool = False) -> RunResult:
        operator_ids = list(operator_ids or [op.id for op in OPERATORS])
        tasks = list(tasks or UNDERSTANDING_TASKS)
        specs = self.model_specs(sweep)
        manifest, run_dir = self._start(rq, operator_ids, specs, tasks)
        tables: Dict[str, List[Dict[str, Any]]] = {}
        rows: List[MetricReport] = []
        all_exchanges: List[ModelExchange] = []
        pass_rows: List[Dict[str, Any]] = []
        strata_rows: List[Dict[str, Any]] = []
        transformed_once = False

        for spec in specs:
            model_id = spec["model_id"]
            try:
                # Step 1: corpus (own-code runs filter per model)
                units = self.load_units(model_id).units
                self.logger.info(f"Step 1: {len(units)} units for {spec['name']}")

                # Step 2: transforms
                outcomes = self.transform(units, operator_ids, run_dir if not transformed_once else None)
                if not transformed_once:
                    tables["applicability"] = self.applicability(units, outcomes)
                    transformed_once = True

                # Step 3: optional validation
                verdicts = None
                if self.config.VALIDATE_IN_RUN or self.config.EXCLUDE_ANOMALIES:
                    self.logger.info("Step 3: Validating transformations...")
                    verdicts = self.validate(units, outcomes, run_dir)
                    manifest.anomalies += sum(1 for v in verdicts.values() if v.anomaly)

                strata = None
                if stratify:
                    flags = self.correctness_flags(units)
                    strata = {uid: STRATUM_CORRECT if ok else STRATUM_INCORRECT for uid, ok in flags.items()}
                    pass_rows.extend(self._pass_at_1(model_id, units, flags))
                    strata_rows.extend(self._strata_sizes(model_id, units, strata))

                # Step 4: model queries
                self.logger.info(f"Step 4: Querying {spec['name']} on {len(tasks)} tasks...")
                harness = self._harness(spec)
                exchanges = harness.query_many(self.understanding_jobs(units, outcomes, tasks))
                all_exchanges.extend(exchanges)

                # Step 5: metrics
                self.logger.info("Step 5: Scoring Robustness and Sensitivity...")
                rows.extend(self.score_understanding(model_id, units, outcomes, exchanges, tasks, verdicts, strata))
            except ToolkitError as e:
                if len(specs) == 1:
                    raise
                self.logger.error(f"❌ Model {spec['name']} failed: {e}", exc_info=True)
                manifest.failed_models[spec["name"]] = f"{type(e).__name__}: {e}"

        rows.sort(key=report_sort_key)
        tables["understanding"] = [r.to_row() for r in rows]
        if sweep:
            tables["model_size"] = [r.to_row() for r in rows if r.operator_id == "ALL"]
        if stratify:
            tables["pass_at_1"] = pass_rows
            tables["strata"] = strata_rows
        return self._finish(manifest, run_dir, tables, all_exchanges)

    @staticmethod
    def _pass_at_1(model_id: str, units: List[FunctionUnit], flags: Dict[str, bool]) -> List[Dict[str, Any]]:
        rows = []
        for lang in sorted({u.language for u in units}):
            ids = [u.id for u in units if u.language == lang and u.id in flags]
            correct = sum(1 for i in ids if flags[i])
            rows.append({"model": model_id, "language": lang, "n": len(ids), "correct": correct,
                         "pass_at_1": correct / len(ids) if ids else 0.0})
        return rows

    def _strata_sizes(self, model_id: str, units: List[FunctionUnit], strata: Dict[str, str]) -> List[Dict[str, Any]]:
        rows = []
        for lang in sorted({u.language for u in units}):
            for stratum in (STRATUM_CORRECT, STRATUM_INCORRECT):
                n = sum(1 for u in units if u.language == lang and strata.get(u.id) == stratum)
                if n == 0:
                    self.logger.warning(f"⚠️ {model_id}/{lang}: {stratum} stratum is empty")
                rows.append({"model": model_id, "language": lang, "stratum": stratum, "n_units": n, "empty": n == 0})
        return rows

    def run_rq1(self, operator_ids: Optional[Sequence[str]] = None, tasks: Optional[Sequence[str]] = None) -> RunResult:
        return self._understanding_run("1", operator_ids, tasks)

    def run_rq2(self, operator_ids: Optional[Sequence[str]] = None, tasks: Optional[Sequence[str]] = None) -> RunResult:
        return self._understanding_run("2", operator_ids, tasks, sweep=True)

    def run_rq3(self, operator_ids: Optional[Sequence[str]] = None, tasks: Optional[Sequence[str]] = None) -> RunResult:
        return self._understanding_run("3", operator_ids, tasks, stratify=True)

    def run_rq4(self, granularity: str = "line") -> RunResult:
        specs = self.model_specs(sweep=True)
        tasks = [CONTROL_DEPS, DATA_DEPS]
        manifest, run_dir = self._start("4", [], specs, tasks)
        all_exchanges: List[ModelExchange] = []
        summary_rows: List[Dict[str, Any]] = []
        unit_rows: List[Dict[str, Any]] = []

        for spec in specs:
            model_id = spec["model_id"]
            try:
                units = self.load_units(model_id).units
                self.logger.info(f"Step 1: Analyzing {len(units)} units...")
                graphs = {g.unit_id: g for g in self.analyzer.analyze_corpus(units)}

                jobs = []
                for unit in units:
                    graph = graphs[unit.id]
                    for kind, task in DEPENDENCE_KINDS:
                        truth = self._truth(graph, unit, kind, granularity)
                        answer = "\n".join(f"({a}, {b})" for a, b in sorted(truth)) or "none"
                        prompt = render_prompt(task, unit, templates=self.templates)
                        jobs.append(QueryJob(unit.id, ORIGINAL, prompt, oracle_answer=answer))

                self.logger.info(f"Step 2: Probing {spec['name']} for dependencies...")
                exchanges = self._harness(spec).query_many(jobs)
                all_exchanges.extend(exchanges)
                answers = {(e.unit_id, e.task): e.parsed for e in exchanges}

                self.logger.info("Step 3: Scoring predicted pairs...")
                scores: Dict[Tuple[str, str], List[DependenceScore]] = defaultdict(list)
                for unit in units:
                    for kind, task in DEPENDENCE_KINDS:
                        score = dependence_scores(answers[(unit.id, task)], graphs[unit.id], kind,
                                                  unit if granularity == "line" else None, granularity)
                        unit_rows.append({
                            "model": model_id, "language": unit.language, "kind": kind, "unit_id": unit.id,
                            "n_truth": score.n_truth, "n_predicted": score.n_predicted,
                            "precision": score.precision, "recall": score.recall, "f1": score.f1,
                            "empty_prediction": score.empty_prediction, "empty_truth": score.empty_truth,
                        })
                        # A unit with no dependence of this kind has nothing to recall
                        if not score.empty_truth:
                            scores[(unit.language, kind)].append(score)
                for (lang, kind) in sorted(scores):
                    summary_rows.append(aggregate_dependence(model_id, lang, kind, scores[(lang, kind)]).to_row())
            except ToolkitError as e:
                if len(specs) == 1:
                    raise
                self.logger.error(f"❌ Model {spec['name']} failed: {e}", exc_info=True)
                manifest.failed_models[spec["name"]] = f"{type(e).__name__}: {e}"

        tables = {
            "dependence": sorted(summary_rows, key=lambda r: (r["model"], r["language"], r["kind"])),
            "dependence_units": sorted(unit_rows, key=lambda r: (r["model"], r["language"], r["kind"], r["unit_id"])),
        }
        return self._finish(manifest, run_dir, tables, all_exchanges)

    @staticmethod
    def _truth(graph: DependenceGraph, unit: FunctionUnit, kind: str, granularity: str):
        return graph.as_lines(unit, kind) if granularity == "line" else graph.pairs(kind)

    def run(self, rq: str) -> List[RunResult]:
        runners = {"1": self.run_rq1, "2": self.run_rq2, "3": self.run_rq3, "4": self.run_rq4}
        if rq == "all":
            return [runners[k]() for k in sorted(runners)]
        if rq not in runners:
            raise ToolkitError(f"Unknown research question: {rq}")
        return [runners[rq]()]
