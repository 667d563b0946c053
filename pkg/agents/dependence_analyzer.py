# agents/dependence_analyzer.py
import concurrent.futures
import json
import logging
from collections import deque
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

from utils.code_model import PARAMS_INDEX, FunctionUnit, StatementKind, StatementNode, extract_def_use
from utils.config import Config

Pair = Tuple[int, int]
EXIT = -1
CONTROL = "control"
DATA = "data"


@dataclass(frozen=True)
class DependenceGraph:
    unit_id: str
    control_pairs: FrozenSet[Pair]
    data_pairs: FrozenSet[Pair]
    n_statements: int

    def pairs(self, kind: str) -> FrozenSet[Pair]:
        return self.control_pairs if kind == CONTROL else self.data_pairs

    def as_lines(self, unit: FunctionUnit, kind: str) -> FrozenSet[Pair]:
        """Pairs in line space: signature line is 1 and parameters live on it."""
        line = {PARAMS_INDEX: 1}
        line.update({s.index: s.line for s in unit.statements})
        return frozenset((line[a], line[b]) for a, b in self.pairs(kind))

    def to_dict(self) -> Dict:
        return {
            "unit_id": self.unit_id,
            "control": [list(p) for p in sorted(self.control_pairs)],
            "data": [list(p) for p in sorted(self.data_pairs)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _next_after(unit: FunctionUnit, stmt: StatementNode) -> int:
    """Where control goes when `stmt` completes normally."""
    siblings = [s for s in unit.statements if s.parent == stmt.parent and s.branch == stmt.branch]
    later = [s for s in siblings if s.index > stmt.index]
    if later:
        return later[0].index
    if stmt.parent is None:
        return EXIT
    parent = unit.statement(stmt.parent)
    if parent.kind == StatementKind.LOOP:
        return parent.index
    return _next_after(unit, parent)


def _first_in(unit: FunctionUnit, parent: Optional[int], branch: Optional[str]) -> Optional[int]:
    for s in unit.statements:
        if s.parent == parent and s.branch == branch:
            return s.index
    return None


def _enclosing_loop(unit: FunctionUnit, stmt: StatementNode) -> Optional[StatementNode]:
    for index in unit.ancestors(stmt.index):
        if unit.statement(index).kind == StatementKind.LOOP:
            return unit.statement(index)
    return None


def build_cfg(unit: FunctionUnit) -> Dict[int, Set[int]]:
    """Statement-level CFG. Node 0 is the entry (parameter definitions), EXIT is -1."""
    succ: Dict[int, Set[int]] = {PARAMS_INDEX: set(), EXIT: set()}
    first = _first_in(unit, None, None)
    succ[PARAMS_INDEX].add(first if first is not None else EXIT)

    for stmt in unit.statements:
        out: Set[int] = set()
        if stmt.jump in ("return", "raise"):
            out.add(EXIT)
        elif stmt.jump in ("break", "continue"):
            loop = _enclosing_loop(unit, stmt)
            if loop is None:
                out.add(EXIT)
            elif stmt.jump == "continue":
                out.add(loop.index)
            else:
                out.add(_next_after(unit, loop))
        elif stmt.kind == StatementKind.IF:
            for branch in ("then", "else"):
                target = _first_in(unit, stmt.index, branch)
                out.add(target if target is not None else _next_after(unit, stmt))
        elif stmt.kind == StatementKind.LOOP:
            body = _first_in(unit, stmt.index, "body")
            out.add(body if body is not None else stmt.index)
            out.add(_next_after(unit, stmt))
        else:
            out.add(_next_after(unit, stmt))
        succ[stmt.index] = out
    return succ


def reaching_definitions(unit: FunctionUnit, cfg: Optional[Dict[int, Set[int]]] = None
                         ) -> Dict[int, Set[Tuple[int, str]]]:
    """IN sets of (defining statement, variable) per statement, by worklist iteration."""
    cfg = cfg or build_cfg(unit)
    table = extract_def_use(unit)
    preds: Dict[int, Set[int]] = {n: set() for n in cfg}
    for n, targets in cfg.items():
        for t in targets:
            preds.setdefault(t, set()).add(n)

    def transfer(node: int, flow_in: Set[Tuple[int, str]]) -> Set[Tuple[int, str]]:
        if node == EXIT:
            return flow_in
        defs = table[node][0]
        return {(node, v) for v in defs} | {(d, v) for d, v in flow_in if v not in defs}

    flow_in: Dict[int, Set[Tuple[int, str]]] = {n: set() for n in preds}
    flow_out: Dict[int, Set[Tuple[int, str]]] = {n: transfer(n, set()) for n in preds}
    work = deque(sorted(preds))
    while work:
        node = work.popleft()
        merged: Set[Tuple[int, str]] = set()
        for p in preds[node]:
            merged |= flow_out[p]
        flow_in[node] = merged
        new_out = transfer(node, merged)
        if new_out != flow_out[node]:
            flow_out[node] = new_out
            for t in sorted(cfg.get(node, ())):
                if t not in work:
                    work.append(t)
    return flow_in


class DependenceAnalyzer:
    """Reference intraprocedural control/data dependence over the statement IR."""

    def __init__(self, transitive_control: Optional[bool] = None, config=None):
        self.config = config or Config
        self.logger = logging.getLogger(__name__)
        self.transitive_control = (self.config.TRANSITIVE_CONTROL if transitive_control is None
                                   else transitive_control)

    def control_dependence(self, unit: FunctionUnit) -> Set[Pair]:
        pairs: Set[Pair] = set()
        for stmt in unit.statements:
            if stmt.parent is None:
                continue
            if self.transitive_control:
                pairs.update((a, stmt.index) for a in unit.ancestors(stmt.index))
            else:
                pairs.add((stmt.parent, stmt.index))
        return pairs

    def data_dependence(self, unit: FunctionUnit) -> Set[Pair]:
        cfg = build_cfg(unit)
        flow_in = reaching_definitions(unit, cfg)
        pairs: Set[Pair] = set()
        for stmt in unit.statements:
            for d, v in flow_in.get(stmt.index, set()):
                if v in stmt.uses:
                    pairs.add((d, stmt.index))
        return pairs

    def analyze(self, unit: FunctionUnit) -> DependenceGraph:
        graph = DependenceGraph(
            unit_id=unit.id,
            control_pairs=frozenset(self.control_dependence(unit)),
            data_pairs=frozenset(self.data_dependence(unit)),
            n_statements=len(unit.statements),
        )
        self.logger.debug(f"{unit.id}: {len(graph.control_pairs)} control, {len(graph.data_pairs)} data pairs")
        return graph

    def analyze_corpus(self, units: List[FunctionUnit]) -> List[DependenceGraph]:
        self.logger.info(f"🔗 Computing dependence graphs for {len(units)} units...")
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.config.MAX_CONCURRENCY) as executor:
            return list(executor.map(self.analyze, units))
