# agents/transform_engine.py
import concurrent.futures
import logging
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from tree_sitter import Node

from utils.code_model import (
    DefUseScanner, FunctionUnit, SpanEdit, StatementKind, StatementNode, TestCase, parse_function, serialize,
)
from utils.config import Config
from utils.errors import ParseRegression, ToolkitError, UnknownOperator
from utils.syntax import COMMENT_TYPES, JAVA, PYTHON, SyntaxTree, keywords, parse_expression


class SemanticClass(str, Enum):
    SP = "SP"
    SNP = "SNP"


class DependenceAxis(str, Enum):
    CONTROL = "Control"
    DATA = "Data"


class TransformStatus(str, Enum):
    APPLIED = "Applied"
    NOT_APPLICABLE = "NotApplicable"


@dataclass(frozen=True)
class TransformOperator:
    id: str
    semantic_class: SemanticClass
    dependence_axis: DependenceAxis
    description: str

    def to_dict(self) -> Dict[str, str]:
        return {
            "id": self.id,
            "semantic_class": self.semantic_class.value,
            "dependence_axis": self.dependence_axis.value,
            "description": self.description,
        }


OPERATORS: Tuple[TransformOperator, ...] = (
    TransformOperator("sp.rename_var", SemanticClass.SP, DependenceAxis.DATA,
                      "Rename one local variable or parameter to a fresh v<k> identifier"),
    TransformOperator("sp.reorder_params", SemanticClass.SP, DependenceAxis.DATA,
                      "Permute leading parameters and every call site consistently"),
    TransformOperator("sp.swap_branches_negate", SemanticClass.SP, DependenceAxis.CONTROL,
                      "Negate an if/else guard and swap its branches"),
    TransformOperator("sp.for_to_while", SemanticClass.SP, DependenceAxis.CONTROL,
                      "Rewrite a counted for loop as an equivalent while loop"),
    TransformOperator("snp.negate_condition", SemanticClass.SNP, DependenceAxis.CONTROL,
                      "Negate the relational guard of a conditional"),
    TransformOperator("snp.remove_conditional", SemanticClass.SNP, DependenceAxis.CONTROL,
                      "Delete a guard, promote its then-branch and drop any else-branch"),
    TransformOperator("snp.swap_noncommutative_operands", SemanticClass.SNP, DependenceAxis.DATA,
                      "Swap the operands of a -, / or % expression"),
    TransformOperator("snp.rewire_variable_use", SemanticClass.SNP, DependenceAxis.DATA,
                      "Replace one variable read with another variable defined at that point"),
)
_BY_ID = {op.id: op for op in OPERATORS}


def list_operators(semantic_class: Optional[SemanticClass] = None) -> List[TransformOperator]:
    return [op for op in OPERATORS if semantic_class is None or op.semantic_class == semantic_class]


def get_operator(operator_id: str) -> TransformOperator:
    try:
        return _BY_ID[operator_id]
    except KeyError:
        raise UnknownOperator(f"Unknown operator: {operator_id}") from None


@dataclass
class TransformOutcome:
    unit_id: str
    operator: str
    semantic_class: str
    status: TransformStatus
    seed: int
    transformed_source: Optional[str] = None
    edit_log: List[SpanEdit] = field(default_factory=list)
    # Only set when the operator rewrote the unit's test call sites
    tests: Optional[Tuple[TestCase, ...]] = None
    reason: str = ""

    @property
    def applied(self) -> bool:
        return self.status == TransformStatus.APPLIED

    def to_dict(self) -> Dict:
        return {
            "unit_id": self.unit_id,
            "operator": self.operator,
            "semantic_class": self.semantic_class,
            "status": self.status.value,
            "seed": self.seed,
            "transformed_source": self.transformed_source,
            "edit_log": [e.to_dict() for e in self.edit_log],
            "tests": [t.to_dict() for t in self.tests] if self.tests is not None else None,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "TransformOutcome":
        tests = data.get("tests")
        return cls(
            unit_id=data["unit_id"],
            operator=data["operator"],
            semantic_class=data["semantic_class"],
            status=TransformStatus(data["status"]),
            seed=int(data.get("seed", 0)),
            transformed_source=data.get("transformed_source"),
            edit_log=[SpanEdit(e["span"][0], e["span"][1], e["before"], e["after"]) for e in data.get("edit_log", [])],
            tests=tuple(TestCase(**t) for t in tests) if tests is not None else None,
            reason=data.get("reason", ""),
        )


class _NotApplicable(Exception):
    pass


_PY_NEGATIONS = {"<": ">=", "<=": ">", ">": "<=", ">=": "<", "==": "!=", "!=": "==", "in": "not in", "is": "is not"}
_JAVA_NEGATIONS = {"<": ">=", "<=": ">", ">": "<=", ">=": "<", "==": "!=", "!=": "=="}
_PY_COMPOUND_OPERANDS = {"binary_operator", "boolean_operator", "comparison_operator", "not_operator",
                         "conditional_expression", "lambda", "unary_operator", "named_expression"}
_JAVA_COMPOUND_OPERANDS = {"binary_expression", "ternary_expression", "assignment_expression", "lambda_expression",
                           "instanceof_expression", "unary_expression", "cast_expression"}
_PLAIN_PY_PARAMS = {"identifier", "typed_parameter"}


class _Site:
    """Per-application view of one unit: tree, statement nodes, and site selection."""

    def __init__(self, unit: FunctionUnit, rng: Optional[random.Random]):
        self.unit = unit
        self.lang = unit.language
        self.tree = SyntaxTree(unit.source, unit.language)
        self.fn = self.tree.find_function(unit.entry_point)
        self.rng = rng
        self._nodes: Dict[Tuple[int, int], Node] = {}
        stack = [self.fn]
        while stack:
            node = stack.pop()
            # A one-statement Python block shares its statement's span
            if node.type != "block":
                self._nodes.setdefault(self.tree.span(node), node)
            stack.extend(reversed(node.children))

    def node(self, stmt: StatementNode) -> Node:
        return self._nodes[stmt.span]

    def pick(self, candidates: Sequence, what: str):
        if not candidates:
            raise _NotApplicable(what)
        if self.rng is None:
            return candidates[0]
        return candidates[self.rng.randrange(len(candidates))]

    def fresh_names(self) -> Iterable[str]:
        taken = self.tree.all_identifier_names() | keywords(self.lang) | {self.unit.entry_point}
        k = 0
        while True:
            name = f"v{k}"
            if name not in taken:
                taken.add(name)
                yield name
            k += 1

    def edit(self, node_or_span, after: str) -> SpanEdit:
        start, end = node_or_span if isinstance(node_or_span, tuple) else self.tree.span(node_or_span)
        return SpanEdit(start, end, self.tree.slice(start, end), after)

    def on_own_line(self, offset: int) -> bool:
        line_start = self.tree.data.rfind(b"\n", 0, offset) + 1
        return not self.tree.data[line_start:offset].strip()

    def body_statements(self, index: int) -> List[StatementNode]:
        return [s for s in self.unit.statements if index in self.unit.ancestors(s.index)]

    def contains(self, outer: Node, inner: Node) -> bool:
        return outer.start_byte <= inner.start_byte and inner.end_byte <= outer.end_byte

    def descendants(self, node: Node, node_type: str) -> List[Node]:
        out = []
        stack = [node]
        while stack:
            cur = stack.pop()
            if cur.type == node_type:
                out.append(cur)
            stack.extend(cur.children)
        return out


def _reindent(text: str, old: str, new: str) -> str:
    lines = text.split("\n")
    for i in range(1, len(lines)):
        if lines[i].startswith(old):
            lines[i] = new + lines[i][len(old):]
    return "\n".join(lines)


class TransformEngine:
    """
    Applies the eight semantic-aware operators. Every operator works on the
    unit's original bytes through span edits and the result is re-parsed
    before it is reported as Applied.
    """

    def __init__(self, randomized: Optional[bool] = None, max_workers: Optional[int] = None, config=None):
        self.config = config or Config
        self.logger = logging.getLogger(__name__)
        self.randomized = self.config.RANDOMIZED_SITES if randomized is None else randomized
        self.max_workers = max_workers or self.config.MAX_CONCURRENCY
        self._handlers: Dict[str, Callable[[_Site], Tuple[List[SpanEdit], Optional[Tuple[TestCase, ...]]]]] = {
            "sp.rename_var": self._rename_var,
            "sp.reorder_params": self._reorder_params,
            "sp.swap_branches_negate": self._swap_branches_negate,
            "sp.for_to_while": self._for_to_while,
            "snp.negate_condition": self._negate_condition,
            "snp.remove_conditional": self._remove_conditional,
            "snp.swap_noncommutative_operands": self._swap_operands,
            "snp.rewire_variable_use": self._rewire_variable_use,
        }

    # -------------------- public API --------------------

    def apply(self, unit: FunctionUnit, operator_id: str, seed: int = 0) -> TransformOutcome:
        op = get_operator(operator_id)
        outcome = TransformOutcome(unit.id, op.id, op.semantic_class.value, TransformStatus.NOT_APPLICABLE, seed)
        rng = random.Random(f"{seed}:{unit.id}:{op.id}") if self.randomized else None
        try:
            site = _Site(unit, rng)
            edits, tests = self._handlers[op.id](site)
            transformed = serialize(unit.edited(*edits))
            self._reparse(unit, transformed)
        except _NotApplicable as e:
            outcome.reason = str(e)
            self.logger.debug(f"{unit.id} {op.id}: not applicable ({e})")
            return outcome
        except ParseRegression as e:
            outcome.reason = f"parse regression: {e}"
            self.logger.warning(f"⚠️ {unit.id} {op.id}: transformed source does not re-parse, dropped ({e})")
            return outcome

        outcome.status = TransformStatus.APPLIED
        outcome.transformed_source = transformed
        outcome.edit_log = sorted(edits, key=lambda e: e.start)
        outcome.tests = tests
        return outcome

    def apply_all(self, unit: FunctionUnit, seed: int = 0) -> List[TransformOutcome]:
        return [self.apply(unit, op.id, seed) for op in OPERATORS]

    def transform_corpus(self, units: List[FunctionUnit], operator_ids: Optional[List[str]] = None,
                         seed: int = 0) -> Dict[str, List[TransformOutcome]]:
        """All (unit, operator) outcomes grouped by operator, in corpus order."""
        ids = operator_ids or [op.id for op in OPERATORS]
        for op_id in ids:
            get_operator(op_id)
        self.logger.info(f"🔧 Transforming {len(units)} units with {len(ids)} operators...")
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            futures = {op_id: [executor.submit(self.apply, u, op_id, seed) for u in units] for op_id in ids}
            results = {op_id: [f.result() for f in fs] for op_id, fs in futures.items()}
        for op_id, outcomes in results.items():
            applied = sum(1 for o in outcomes if o.applied)
            self.logger.info(f"✅ {op_id}: applied to {applied}/{len(outcomes)} units")
        return results

    def _reparse(self, unit: FunctionUnit, transformed: str) -> FunctionUnit:
        try:
            return parse_function(transformed, unit.language, unit.entry_point, unit_id=unit.id)
        except ToolkitError as e:
            raise ParseRegression(str(e)) from e

    # -------------------- shared helpers --------------------

    def _if_sites(self, site: _Site, include_elif: bool = True) -> List[Tuple[StatementNode, Node]]:
        out = []
        for stmt in site.unit.statements:
            if stmt.kind != StatementKind.IF:
                continue
            node = site.node(stmt)
            if not include_elif and node.type == "elif_clause":
                continue
            if not include_elif and site.lang == JAVA and self._is_else_if(node):
                continue
            out.append((stmt, node))
        return out

    @staticmethod
    def _is_else_if(node: Node) -> bool:
        parent = node.parent
        if parent is None or parent.type != "if_statement":
            return False
        alt = parent.child_by_field_name("alternative")
        return alt is not None and alt.start_byte == node.start_byte

    def _negated(self, site: _Site, cond: Node) -> str:
        """Logical negation of a guard; unwraps an existing negation."""
        tree = site.tree
        if site.lang == PYTHON:
            if cond.type == "not_operator":
                arg = cond.child_by_field_name("argument")
                if arg.type == "parenthesized_expression" and arg.named_children:
                    return tree.text(arg.named_children[0])
                return tree.text(arg)
            if cond.type == "parenthesized_expression":
                return f"not {tree.text(cond)}"
            return f"not ({tree.text(cond)})"
        inner = cond.named_children[0] if cond.type == "parenthesized_expression" else cond
        op = inner.child_by_field_name("operator") if inner.type == "unary_expression" else None
        if op is not None and tree.text(op) == "!":
            operand = inner.child_by_field_name("operand")
            if operand.type == "parenthesized_expression" and operand.named_children:
                return f"({tree.text(operand.named_children[0])})"
            return f"({tree.text(operand)})"
        return f"(!({tree.text(inner)}))"

    def _operand_text(self, site: _Site, node: Node) -> str:
        compound = _PY_COMPOUND_OPERANDS if site.lang == PYTHON else _JAVA_COMPOUND_OPERANDS
        text = site.tree.text(node)
        return f"({text})" if node.type in compound else text

    # -------------------- sp.rename_var --------------------

    def _rename_var(self, site: _Site):
        unit, tree = site.unit, site.tree
        order: List[str] = list(unit.params)
        for stmt in unit.statements:
            for name in sorted(stmt.defs, key=lambda n: unit.source.find(n, stmt.span[0])):
                if name not in order:
                    order.append(name)
        keyword_args = set()
        for test in unit.tests:
            keyword_args |= set(re.findall(r"(\w+)\s*=(?!=)", test.expression))
        candidates = [n for n in order if n not in keyword_args and n != unit.entry_point]
        name = site.pick(candidates, "no local variable to rename")
        fresh = next(site.fresh_names())
        edits = [site.edit(ident, fresh) for ident in tree.variable_occurrences(site.fn, name)]
        if site.lang == PYTHON:
            # `f(name=...)` in a recursive call keeps naming the parameter
            for call in tree.calls_to(site.fn, unit.entry_point):
                for arg in tree.call_arguments(call):
                    if arg.type == "keyword_argument" and tree.text(arg.child_by_field_name("name")) == name:
                        edits.append(site.edit(arg.child_by_field_name("name"), fresh))
        if not edits:
            raise _NotApplicable(f"no occurrences of {name}")
        return edits, None

    # -------------------- sp.reorder_params --------------------

    def _reorder_params(self, site: _Site):
        unit, tree = site.unit, site.tree
        leading = []
        for p in tree.parameter_nodes(site.fn):
            if site.lang == PYTHON and p.type in _PLAIN_PY_PARAMS:
                leading.append(p)
            elif site.lang == JAVA and p.type == "formal_parameter":
                leading.append(p)
            else:
                break
        k = len(leading)
        if k < 2:
            raise _NotApplicable("fewer than two reorderable parameters")

        perm = list(range(k))
        if site.rng is not None:
            site.rng.shuffle(perm)
        if perm == list(range(k)):
            perm[0], perm[1] = perm[1], perm[0]

        edits = [site.edit(leading[i], tree.text(leading[perm[i]])) for i in range(k)]

        calls = tree.calls_to(site.fn, unit.entry_point)
        self._check_call_arity(tree, calls, k)
        for call in self._outermost(calls):
            edits.append(site.edit(call, self._render_call(tree, call, calls, perm)))

        tests = []
        for test in unit.tests:
            etree, expr, base = parse_expression(test.expression, site.lang)
            if expr is None:
                raise _NotApplicable(f"test expression does not parse: {test.expression}")
            tcalls = etree.calls_to(expr, unit.entry_point)
            if not tcalls:
                raise _NotApplicable(f"test does not call {unit.entry_point}: {test.expression}")
            self._check_call_arity(etree, tcalls, k)
            end = base + len(test.expression.encode("utf-8"))
            expression = self._render(etree, base, end, tcalls, perm)
            suffix = ";" if site.lang == JAVA else ""
            tests.append(TestCase(expression, test.expected, f"assert {expression} == {test.expected}{suffix}"))
        return edits, tuple(tests)

    @staticmethod
    def _check_call_arity(tree: SyntaxTree, calls: List[Node], k: int) -> None:
        for call in calls:
            args = tree.call_arguments(call)
            if len(args) < k:
                raise _NotApplicable("a call passes fewer positional arguments than the permuted parameters")
            for arg in args[:k]:
                if arg.type in ("keyword_argument", "list_splat", "dictionary_splat"):
                    raise _NotApplicable("a call passes permuted parameters by keyword or splat")

    @staticmethod
    def _outermost(calls: List[Node]) -> List[Node]:
        out = []
        for call in calls:
            if not any(o.start_byte <= call.start_byte and call.end_byte <= o.end_byte for o in out):
                out.append(call)
        return out

    def _render(self, tree: SyntaxTree, start: int, end: int, calls: List[Node], perm: List[int]) -> str:
        """Source text of [start, end) with every call in `calls` inside it argument-permuted."""
        out = []
        cursor = start
        for call in calls:
            cs, ce = tree.span(call)
            if cs < cursor or ce > end:
                continue
            out.append(tree.slice(cursor, cs))
            out.append(self._render_call(tree, call, calls, perm))
            cursor = ce
        out.append(tree.slice(cursor, end))
        return "".join(out)

    def _render_call(self, tree: SyntaxTree, call: Node, calls: List[Node], perm: List[int]) -> str:
        slots = tree.call_arguments(call)[:len(perm)]
        cs, ce = tree.span(call)
        out = []
        cursor = cs
        for i, slot in enumerate(slots):
            ss, se = tree.span(slot)
            out.append(tree.slice(cursor, ss))
            out.append(self._render(tree, *tree.span(slots[perm[i]]), calls, perm))
            cursor = se
        out.append(self._render(tree, cursor, ce, calls, perm))
        return "".join(out)

    # -------------------- sp.swap_branches_negate --------------------

    def _swap_branches_negate(self, site: _Site):
        candidates = []
        for stmt, node in self._if_sites(site):
            if site.lang == PYTHON:
                if node.type != "if_statement":
                    continue
                alts = node.children_by_field_name("alternative")
                if len(alts) != 1 or alts[0].type != "else_clause":
                    continue
                then_body = node.child_by_field_name("consequence")
                else_body = alts[0].child_by_field_name("body")
                if not (site.on_own_line(site.tree.span(then_body)[0])
                        and site.on_own_line(site.tree.span(else_body)[0])):
                    continue
            else:
                else_body = node.child_by_field_name("alternative")
                if else_body is None or else_body.type == "if_statement":
                    continue
                then_body = node.child_by_field_name("consequence")
            candidates.append((node, then_body, else_body))
        node, then_body, else_body = site.pick(candidates, "no if/else without elif")
        tree = site.tree
        cond = node.child_by_field_name("condition")
        if site.lang == PYTHON:
            then_indent = tree.indent_of(tree.span(then_body)[0])
            else_indent = tree.indent_of(tree.span(else_body)[0])
            new_then = _reindent(tree.text(else_body), else_indent, then_indent)
            new_else = _reindent(tree.text(then_body), then_indent, else_indent)
        else:
            new_then = self._braced(tree, else_body)
            new_else = self._braced(tree, then_body)
        return [site.edit(cond, self._negated(site, cond)), site.edit(then_body, new_then),
                site.edit(else_body, new_else)], None

    @staticmethod
    def _braced(tree: SyntaxTree, node: Node) -> str:
        return tree.text(node) if node.type == "block" else "{ " + tree.text(node) + " }"

    # -------------------- sp.for_to_while --------------------

    def _for_to_while(self, site: _Site):
        candidates = []
        for stmt in site.unit.statements:
            if stmt.kind != StatementKind.LOOP:
                continue
            node = site.node(stmt)
            if node.type != "for_statement":
                continue
            if site.descendants(node.child_by_field_name("body"), "continue_statement"):
                continue
            if site.lang == PYTHON and self._py_range_loop(site, stmt, node) is None:
                continue
            candidates.append((stmt, node))
        stmt, node = site.pick(candidates, "no counted for loop without continue")
        if site.lang == PYTHON:
            return self._py_for_to_while(site, stmt, node), None
        return self._java_for_to_while(site, node), None

    def _py_range_loop(self, site: _Site, stmt: StatementNode, node: Node) -> Optional[Tuple[str, List[Node], int]]:
        tree = site.tree
        left = node.child_by_field_name("left")
        right = node.child_by_field_name("right")
        if left is None or left.type != "identifier" or right is None or right.type != "call":
            return None
        fn = right.child_by_field_name("function")
        if fn is None or tree.text(fn) != "range":
            return None
        args = tree.call_arguments(right)
        if not 1 <= len(args) <= 3 or any(a.type in ("keyword_argument", "list_splat", "dictionary_splat")
                                          for a in args):
            return None
        step = 1
        if len(args) == 3:
            try:
                step = int(tree.text(args[2]).replace("_", "").replace(" ", ""), 0)
            except ValueError:
                return None
            if step == 0:
                return None
        var = tree.text(left)
        if any(var in s.defs for s in site.body_statements(stmt.index)):
            return None
        # The loop variable must not be observed outside the loop
        for occurrence in tree.variable_occurrences(site.fn, var):
            if not site.contains(node, occurrence):
                return None
        body = node.child_by_field_name("body")
        if not site.on_own_line(tree.span(body)[0]):
            return None
        return var, args, step

    def _py_for_to_while(self, site: _Site, stmt: StatementNode, node: Node) -> List[SpanEdit]:
        tree = site.tree
        var, args, step = self._py_range_loop(site, stmt, node)
        start = "0" if len(args) == 1 else tree.text(args[0])
        stop_node = args[0] if len(args) == 1 else args[1]
        stop = tree.text(stop_node)
        body_defs = set()
        for s in site.body_statements(stmt.index):
            body_defs |= s.defs
        indent = tree.indent_of(tree.span(node)[0])
        body = node.child_by_field_name("body")
        body_start, body_end = tree.span(body)
        body_indent = tree.indent_of(body_start)

        header = f"{var} = {start}\n{indent}"
        hoist_needed = not (stop_node.type == "integer"
                            or (stop_node.type == "identifier" and stop not in body_defs and stop != var))
        if hoist_needed:
            bound = next(site.fresh_names())
            header += f"{bound} = {stop}\n{indent}"
        else:
            bound = stop
        cmp = "<" if step > 0 else ">"
        header += f"while {var} {cmp} {bound}:\n{body_indent}"
        update = f"{var} += {step}" if step > 0 else f"{var} -= {-step}"
        node_start = tree.span(node)[0]
        return [
            SpanEdit(node_start, body_start, tree.slice(node_start, body_start), header),
            SpanEdit(body_end, body_end, "", f"\n{body_indent}{update}"),
        ]

    def _java_for_to_while(self, site: _Site, node: Node) -> List[SpanEdit]:
        tree = site.tree
        inits = node.children_by_field_name("init")
        if len(inits) == 1 and inits[0].type == "local_variable_declaration":
            init = tree.text(inits[0])
        elif inits:
            init = ", ".join(tree.text(i) for i in inits) + ";"
        else:
            init = ""
        cond = node.child_by_field_name("condition")
        cond_text = tree.text(cond) if cond is not None else "true"
        updates = [tree.text(u) + ";" for u in node.children_by_field_name("update")]

        indent = tree.indent_of(tree.span(node)[0])
        inner = indent + "    "
        body_indent = inner + "    "
        body = node.child_by_field_name("body")
        if body.type == "block":
            stmts = [c for c in body.named_children]
            if stmts:
                first_start = tree.span(stmts[0])[0]
                body_text = tree.slice(first_start, tree.span(stmts[-1])[1])
                body_text = _reindent(body_text, tree.indent_of(first_start), body_indent)
            else:
                body_text = ""
        else:
            body_text = tree.text(body)

        lines = ["{"]
        if init:
            lines.append(f"{inner}{init}")
        lines.append(f"{inner}while ({cond_text}) {{")
        if body_text:
            lines.append(f"{body_indent}{body_text}")
        lines.extend(f"{body_indent}{u}" for u in updates)
        lines.append(f"{inner}}}")
        lines.append(f"{indent}}}")
        return [site.edit(node, "\n".join(lines))]

    # -------------------- snp.negate_condition --------------------

    def _negate_condition(self, site: _Site):
        _, node = site.pick(self._if_sites(site), "no conditional")
        tree = site.tree
        cond = node.child_by_field_name("condition")
        inner = cond
        while inner.type == "parenthesized_expression" and inner.named_children:
            inner = inner.named_children[0]
        if site.lang == PYTHON and inner.type == "comparison_operator" and len(inner.children) == 3:
            op = inner.children[1]
            flipped = _PY_NEGATIONS.get(tree.text(op))
            if flipped:
                return [site.edit(op, flipped)], None
        if site.lang == JAVA and inner.type == "binary_expression":
            op = inner.child_by_field_name("operator")
            flipped = _JAVA_NEGATIONS.get(tree.text(op)) if op is not None else None
            if flipped:
                return [site.edit(op, flipped)], None
        if site.lang == PYTHON:
            text = tree.text(cond)
            after = f"not {text}" if cond.type == "parenthesized_expression" else f"not ({text})"
        else:
            after = f"(!({tree.text(cond.named_children[0])}))"
        return [site.edit(cond, after)], None

    # -------------------- snp.remove_conditional --------------------

    def _remove_conditional(self, site: _Site):
        tree = site.tree
        candidates = []
        for stmt, node in self._if_sites(site, include_elif=False):
            then_body = node.child_by_field_name("consequence")
            if site.lang == JAVA and self._java_would_orphan(node, then_body):
                continue
            candidates.append(node)
        node = site.pick(candidates, "no removable conditional")
        then_body = node.child_by_field_name("consequence")
        text = tree.text(then_body)
        if site.lang == PYTHON and site.on_own_line(tree.span(then_body)[0]):
            text = _reindent(text, tree.indent_of(tree.span(then_body)[0]), tree.indent_of(tree.span(node)[0]))
        return [site.edit(node, text)], None

    def _java_would_orphan(self, node: Node, then_body: Node) -> bool:
        """True when promoting `then_body` would leave unreachable statements behind it."""
        parent = node.parent
        if parent is None or parent.type not in ("block", "constructor_body"):
            return False
        nxt = node.next_named_sibling
        while nxt is not None and nxt.type in COMMENT_TYPES:
            nxt = nxt.next_named_sibling
        return nxt is not None and self._cannot_complete(then_body)

    def _cannot_complete(self, node: Node) -> bool:
        if node.type in ("return_statement", "throw_statement", "break_statement", "continue_statement"):
            return True
        if node.type == "block":
            stmts = [c for c in node.named_children if c.type not in COMMENT_TYPES]
            return bool(stmts) and self._cannot_complete(stmts[-1])
        if node.type == "if_statement":
            alt = node.child_by_field_name("alternative")
            return alt is not None and self._cannot_complete(node.child_by_field_name("consequence")) \
                and self._cannot_complete(alt)
        return False

    # -------------------- snp.swap_noncommutative_operands --------------------

    def _swap_operands(self, site: _Site):
        tree = site.tree
        node_type = "binary_operator" if site.lang == PYTHON else "binary_expression"
        ops = {"-", "/", "//", "%"} if site.lang == PYTHON else {"-", "/", "%"}
        body = site.fn.child_by_field_name("body")
        candidates = []
        for node in sorted(site.descendants(body, node_type), key=lambda n: n.start_byte):
            op = node.child_by_field_name("operator")
            left = node.child_by_field_name("left")
            right = node.child_by_field_name("right")
            if op is None or tree.text(op) not in ops or left is None or right is None:
                continue
            if left.type in ("string", "string_literal", "concatenated_string"):
                continue
            if tree.text(left) == tree.text(right):
                continue
            candidates.append((node, left, right))
        node, left, right = site.pick(candidates, "no non-commutative binary expression")
        between = tree.slice(tree.span(left)[1], tree.span(right)[0])
        after = self._operand_text(site, right) + between + self._operand_text(site, left)
        return [site.edit(node, after)], None

    # -------------------- snp.rewire_variable_use --------------------

    def _rewire_variable_use(self, site: _Site):
        unit, tree = site.unit, site.tree
        local_names = unit.locals
        types = dict(unit.var_types)
        order = list(unit.params)
        for stmt in unit.statements:
            for name in sorted(stmt.defs):
                if name not in order:
                    order.append(name)

        candidates: List[Tuple[Node, str]] = []
        for stmt in unit.statements:
            defined = self._definitely_defined(unit, stmt)
            for ident in self._reads(site, stmt):
                v = tree.text(ident)
                if v not in local_names:
                    continue
                options = [w for w in order if w != v and w in defined]
                if site.lang == JAVA:
                    options = [w for w in options if types.get(w) is not None and types.get(w) == types.get(v)]
                else:
                    same_role = [w for w in options if (w in unit.params) == (v in unit.params)]
                    options = same_role or options
                for w in options:
                    candidates.append((ident, w))
                    if site.rng is None:
                        break
            if candidates and site.rng is None:
                break
        ident, w = site.pick(candidates, "no variable read with a same-kind alternative in scope")
        return [site.edit(ident, w)], None

    def _reads(self, site: _Site, stmt: StatementNode) -> List[Node]:
        node = site.node(stmt)
        tree = site.tree
        if stmt.kind in (StatementKind.IF, StatementKind.LOOP):
            regions = [node.child_by_field_name(f) for f in ("condition", "right", "value")]
            regions += node.children_by_field_name("init") + node.children_by_field_name("update")
        else:
            regions = [node]
        reads: List[Node] = []
        scanner = DefUseScanner(tree, reads)
        for region in regions:
            if region is not None:
                scanner.scan(region, set(), set())
        return sorted(reads, key=lambda n: n.start_byte)

    @staticmethod
    def _definitely_defined(unit: FunctionUnit, stmt: StatementNode) -> set:
        """Names certainly bound whenever `stmt` executes."""
        # ancestor index -> the arm of that ancestor which holds `stmt`
        arm_of = {}
        cur = stmt
        while cur.parent is not None:
            arm_of[cur.parent] = cur.branch
            cur = unit.statement(cur.parent)
        names = set(unit.params)
        for earlier in unit.statements[:stmt.index - 1]:
            if earlier.kind == StatementKind.LOOP and earlier.index not in arm_of:
                # Loop targets only count inside their own loop
                continue
            if earlier.parent is None or arm_of.get(earlier.parent, "?") == earlier.branch:
                names |= earlier.defs
        return names


_default_engine: Optional[TransformEngine] = None


def _engine() -> TransformEngine:
    global _default_engine
    if _default_engine is None:
        _default_engine = TransformEngine()
    return _default_engine


def apply(unit: FunctionUnit, operator_id: str, seed: int = 0) -> TransformOutcome:
    return _engine().apply(unit, operator_id, seed)


def apply_all(unit: FunctionUnit, seed: int = 0) -> List[TransformOutcome]:
    return _engine().apply_all(unit, seed)
