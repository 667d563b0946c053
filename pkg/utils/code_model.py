# utils/code_model.py
"""
Statement-indexed intermediate representation shared by every other component.

A FunctionUnit is immutable: parsing builds it once, and IR edits are recorded
as span replacements (`SpanEdit`) that `serialize` applies to the original
bytes, so everything outside an edited span is preserved byte-for-byte.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

from tree_sitter import Node

from utils.errors import MissingEntryPoint, SerializationError, SourceSyntaxError, UnsupportedConstruct
from utils.syntax import COMMENT_TYPES, JAVA, PYTHON, SyntaxTree

logger = logging.getLogger(__name__)

Span = Tuple[int, int]
PARAMS_INDEX = 0


class StatementKind(str, Enum):
    ASSIGN = "Assign"
    RETURN = "Return"
    IF = "If"
    LOOP = "Loop"
    CALL = "Call"
    DECL = "Decl"
    OTHER = "Other"


@dataclass(frozen=True)
class StatementNode:
    index: int
    kind: StatementKind
    span: Span
    defs: FrozenSet[str]
    uses: FrozenSet[str]
    parent: Optional[int] = None
    # then | else | body: which arm of the parent this statement sits in
    branch: Optional[str] = None
    guard: Optional[Span] = None
    # return | raise | break | continue
    jump: Optional[str] = None
    # 1-based, the function signature line is line 1
    line: int = 1


@dataclass(frozen=True)
class TestCase:
    expression: str
    expected: str
    raw: str

    def to_dict(self) -> Dict[str, str]:
        return {"expression": self.expression, "expected": self.expected, "raw": self.raw}


@dataclass(frozen=True)
class SpanEdit:
    start: int
    end: int
    before: str
    after: str

    def to_dict(self) -> Dict:
        return {"span": [self.start, self.end], "before": self.before, "after": self.after}


@dataclass(frozen=True)
class FunctionUnit:
    id: str
    language: str
    source: str
    entry_point: str
    statements: Tuple[StatementNode, ...]
    params: Tuple[str, ...]
    function_span: Span
    tests: Tuple[TestCase, ...] = ()
    correctness: Optional[bool] = None
    generated_by: Optional[str] = None
    # Java only: declared type text per variable name
    var_types: Tuple[Tuple[str, str], ...] = ()
    edits: Tuple[SpanEdit, ...] = field(default=(), compare=False)

    @property
    def function_source(self) -> str:
        start, end = self.function_span
        return self.source.encode("utf-8")[start:end].decode("utf-8")

    @property
    def locals(self) -> FrozenSet[str]:
        names: Set[str] = set(self.params)
        for stmt in self.statements:
            names |= stmt.defs
        return frozenset(names)

    def statement(self, index: int) -> StatementNode:
        return self.statements[index - 1]

    def children(self, parent: Optional[int], branch: Optional[str] = None) -> List[StatementNode]:
        return [
            s for s in self.statements
            if s.parent == parent and (branch is None or s.branch == branch)
        ]

    def ancestors(self, index: int) -> List[int]:
        out = []
        parent = self.statement(index).parent
        while parent is not None:
            out.append(parent)
            parent = self.statement(parent).parent
        return out

    def line_count(self) -> int:
        return self.function_source.count("\n") + 1

    def edited(self, *edits: SpanEdit) -> "FunctionUnit":
        return replace(self, edits=self.edits + tuple(edits))

    def with_tests(self, tests: Tuple[TestCase, ...]) -> "FunctionUnit":
        return replace(self, tests=tuple(tests))


# ============================================================
# Def/use scanning
# ============================================================

_PY_COMPREHENSIONS = {"list_comprehension", "set_comprehension", "dictionary_comprehension", "generator_expression"}
_PY_TARGET_GROUPS = {"pattern_list", "tuple_pattern", "list_pattern", "tuple", "list", "parenthesized_expression",
                     "list_splat_pattern", "list_splat"}
_STRING_PARTS = {"string_start", "string_content", "string_end", "escape_sequence"}


class DefUseScanner:
    """Collects raw (unfiltered) variable definitions and uses of one syntax region."""

    def __init__(self, tree: SyntaxTree, reads: Optional[List[Node]] = None):
        self.tree = tree
        # When given, every identifier counted as a read is appended here
        self.reads = reads

    def scan(self, node: Optional[Node], defs: Set[str], uses: Set[str], bound: FrozenSet[str] = frozenset()) -> None:
        if node is None:
            return
        if self.tree.language == PYTHON:
            self._scan_py(node, defs, uses, bound)
        else:
            self._scan_java(node, defs, uses, bound)

    def _use(self, ident: Node, uses: Set[str], bound: FrozenSet[str]) -> None:
        name = self.tree.text(ident)
        if name not in bound and not self.tree.is_name_position(ident):
            uses.add(name)
            if self.reads is not None:
                self.reads.append(ident)

    def _root_name(self, node: Node) -> Optional[str]:
        while node is not None and node.type != "identifier":
            node = (node.child_by_field_name("value") or node.child_by_field_name("object")
                    or node.child_by_field_name("array"))
        return self.tree.text(node) if node is not None else None

    # -------------------- Python --------------------

    def _scan_py(self, node: Node, defs: Set[str], uses: Set[str], bound: FrozenSet[str]) -> None:
        t = node.type
        if t == "identifier":
            self._use(node, uses, bound)
        elif t in COMMENT_TYPES or t in _STRING_PARTS or t == "type":
            return
        elif t == "assignment":
            self._py_target(node.child_by_field_name("left"), defs, uses, bound, also_use=False)
            self.scan(node.child_by_field_name("right"), defs, uses, bound)
        elif t == "augmented_assignment":
            self._py_target(node.child_by_field_name("left"), defs, uses, bound, also_use=True)
            self.scan(node.child_by_field_name("right"), defs, uses, bound)
        elif t == "named_expression":
            name = self.tree.text(node.child_by_field_name("name"))
            if name not in bound:
                defs.add(name)
            self.scan(node.child_by_field_name("value"), defs, uses, bound)
        elif t == "keyword_argument":
            self.scan(node.child_by_field_name("value"), defs, uses, bound)
        elif t == "attribute":
            self.scan(node.child_by_field_name("object"), defs, uses, bound)
        elif t == "lambda":
            params = node.child_by_field_name("parameters")
            names = {self.tree.text(i) for i in self.tree.identifiers(params)} if params else set()
            self.scan(node.child_by_field_name("body"), set(), uses, bound | names)
        elif t in _PY_COMPREHENSIONS:
            inner = set(bound)
            for clause in node.named_children:
                if clause.type == "for_in_clause":
                    left = clause.child_by_field_name("left")
                    inner |= {self.tree.text(i) for i in self.tree.identifiers(left)}
            inner_bound = frozenset(inner)
            for child in node.named_children:
                if child.type == "for_in_clause":
                    for part in child.children_by_field_name("right"):
                        self.scan(part, set(), uses, inner_bound)
                else:
                    self.scan(child, set(), uses, inner_bound)
        elif t == "function_definition":
            defs.add(self.tree.text(node.child_by_field_name("name")))
            params = node.child_by_field_name("parameters")
            names = set()
            for p in params.named_children if params else []:
                name = self.tree.parameter_name(p)
                if name:
                    names.add(name)
                default = p.child_by_field_name("value")
                if default is not None:
                    self.scan(default, set(), uses, bound)
            self.scan(node.child_by_field_name("body"), set(), uses, bound | names)
        elif t == "class_definition":
            defs.add(self.tree.text(node.child_by_field_name("name")))
        elif t in ("import_statement", "import_from_statement"):
            module = node.child_by_field_name("module_name")
            for child in node.named_children:
                if module is not None and child.start_byte == module.start_byte:
                    continue
                if child.type == "aliased_import":
                    defs.add(self.tree.text(child.child_by_field_name("alias")))
                elif child.type == "dotted_name":
                    defs.add(self.tree.text(child).split(".")[0])
        elif t in ("global_statement", "nonlocal_statement"):
            return
        else:
            for child in node.named_children:
                self._scan_py(child, defs, uses, bound)

    def _py_target(self, target: Optional[Node], defs: Set[str], uses: Set[str], bound: FrozenSet[str],
                   also_use: bool) -> None:
        if target is None:
            return
        if target.type == "identifier":
            name = self.tree.text(target)
            defs.add(name)
            if also_use:
                uses.add(name)
        elif target.type in _PY_TARGET_GROUPS:
            for child in target.named_children:
                self._py_target(child, defs, uses, bound, also_use)
        elif target.type in ("subscript", "attribute"):
            # Element-level writes define the whole container
            root = self._root_name(target)
            if root:
                defs.add(root)
            self.scan(target, defs, uses, bound)
        else:
            self.scan(target, defs, uses, bound)

    # -------------------- Java --------------------

    def _scan_java(self, node: Node, defs: Set[str], uses: Set[str], bound: FrozenSet[str]) -> None:
        t = node.type
        if t == "identifier":
            self._use(node, uses, bound)
        elif t in COMMENT_TYPES or t in ("class_body", "type_arguments"):
            return
        elif t == "local_variable_declaration":
            for declarator in node.children_by_field_name("declarator"):
                value = declarator.child_by_field_name("value")
                if value is not None:
                    defs.add(self.tree.text(declarator.child_by_field_name("name")))
                    self.scan(value, defs, uses, bound)
        elif t == "assignment_expression":
            op = node.child_by_field_name("operator")
            compound = op is not None and self.tree.text(op) != "="
            self._java_target(node.child_by_field_name("left"), defs, uses, bound, compound)
            self.scan(node.child_by_field_name("right"), defs, uses, bound)
        elif t == "update_expression":
            for child in node.named_children:
                self._java_target(child, defs, uses, bound, also_use=True)
        elif t == "method_invocation":
            self.scan(node.child_by_field_name("object"), defs, uses, bound)
            self.scan(node.child_by_field_name("arguments"), defs, uses, bound)
        elif t == "field_access":
            self.scan(node.child_by_field_name("object"), defs, uses, bound)
        elif t == "lambda_expression":
            params = node.child_by_field_name("parameters")
            names = {self.tree.text(i) for i in self.tree.identifiers(params)} if params else set()
            self.scan(node.child_by_field_name("body"), set(), uses, bound | names)
        elif t == "object_creation_expression":
            self.scan(node.child_by_field_name("arguments"), defs, uses, bound)
        elif t == "cast_expression":
            self.scan(node.child_by_field_name("value"), defs, uses, bound)
        elif t == "instanceof_expression":
            self.scan(node.child_by_field_name("left"), defs, uses, bound)
        else:
            for child in node.named_children:
                self._scan_java(child, defs, uses, bound)

    def _java_target(self, target: Optional[Node], defs: Set[str], uses: Set[str], bound: FrozenSet[str],
                     also_use: bool) -> None:
        if target is None:
            return
        if target.type == "identifier":
            name = self.tree.text(target)
            defs.add(name)
            if also_use:
                uses.add(name)
        elif target.type == "array_access":
            root = self._root_name(target)
            if root:
                defs.add(root)
            self.scan(target, defs, uses, bound)
        elif target.type == "parenthesized_expression":
            for child in target.named_children:
                self._java_target(child, defs, uses, bound, also_use)
        else:
            self.scan(target, defs, uses, bound)


# ============================================================
# Statement collection
# ============================================================

@dataclass
class _RawStatement:
    kind: StatementKind
    node: Node
    span: Span
    header: List[Node]
    parent: Optional[int]
    branch: Optional[str]
    guard: Optional[Span] = None
    jump: Optional[str] = None
    # Extra def regions (loop targets) that are not plain expressions
    targets: List[Node] = field(default_factory=list)


_PY_UNSUPPORTED = {"try_statement", "with_statement", "match_statement"}
_JAVA_UNSUPPORTED = {
    "do_statement", "try_statement", "try_with_resources_statement", "switch_expression", "switch_statement",
    "labeled_statement", "synchronized_statement", "local_class_declaration", "yield_statement",
    "class_declaration", "record_declaration", "interface_declaration", "enum_declaration",
}
_JUMPS = {
    "return_statement": "return", "raise_statement": "raise", "throw_statement": "raise",
    "break_statement": "break", "continue_statement": "continue",
}


class _StatementCollector:
    def __init__(self, tree: SyntaxTree):
        self.tree = tree
        self.out: List[_RawStatement] = []

    def _add(self, raw: _RawStatement) -> int:
        self.out.append(raw)
        return len(self.out)

    def _unsupported(self, node: Node) -> UnsupportedConstruct:
        line = self.tree.line_of(self.tree.span(node)[0])
        return UnsupportedConstruct(f"'{node.type}' at line {line} is outside the supported subset")

    # -------------------- Python --------------------

    def collect_py(self, block: Optional[Node], parent: Optional[int], branch: Optional[str]) -> None:
        if block is None:
            return
        for child in block.named_children:
            t = child.type
            if t in COMMENT_TYPES:
                continue
            if t in _PY_UNSUPPORTED:
                raise self._unsupported(child)
            if t == "if_statement":
                cond = child.child_by_field_name("condition")
                idx = self._add(_RawStatement(StatementKind.IF, child, self.tree.span(child), [cond], parent, branch,
                                              guard=self.tree.span(cond)))
                self.collect_py(child.child_by_field_name("consequence"), idx, "then")
                prev = idx
                for alt in child.children_by_field_name("alternative"):
                    if alt.type == "elif_clause":
                        econd = alt.child_by_field_name("condition")
                        prev = self._add(_RawStatement(StatementKind.IF, alt, self.tree.span(alt), [econd], prev,
                                                       "else", guard=self.tree.span(econd)))
                        self.collect_py(alt.child_by_field_name("consequence"), prev, "then")
                    else:
                        self.collect_py(alt.child_by_field_name("body"), prev, "else")
            elif t in ("for_statement", "while_statement"):
                if child.child_by_field_name("alternative") is not None:
                    raise self._unsupported(child.child_by_field_name("alternative"))
                if t == "for_statement":
                    right = child.child_by_field_name("right")
                    raw = _RawStatement(StatementKind.LOOP, child, self.tree.span(child), [right], parent, branch,
                                        guard=self.tree.span(right), targets=[child.child_by_field_name("left")])
                else:
                    cond = child.child_by_field_name("condition")
                    raw = _RawStatement(StatementKind.LOOP, child, self.tree.span(child), [cond], parent, branch,
                                        guard=self.tree.span(cond))
                idx = self._add(raw)
                self.collect_py(child.child_by_field_name("body"), idx, "body")
            elif t == "expression_statement":
                first = child.named_children[0] if child.named_children else None
                kind = StatementKind.OTHER
                if first is not None and first.type in ("assignment", "augmented_assignment"):
                    kind = StatementKind.ASSIGN
                elif first is not None and first.type == "call":
                    kind = StatementKind.CALL
                self._add(_RawStatement(kind, child, self.tree.span(child), [child], parent, branch))
            elif t == "return_statement":
                self._add(_RawStatement(StatementKind.RETURN, child, self.tree.span(child), [child], parent, branch,
                                        jump="return"))
            else:
                # pass/break/continue/raise/assert/import/nested def: opaque single statements
                self._add(_RawStatement(StatementKind.OTHER, child, self.tree.span(child), [child], parent, branch,
                                        jump=_JUMPS.get(t)))

    # -------------------- Java --------------------

    def collect_java(self, node: Optional[Node], parent: Optional[int], branch: Optional[str]) -> None:
        if node is None:
            return
        if node.type == "block":
            for child in node.named_children:
                if child.type not in COMMENT_TYPES:
                    self.collect_java(child, parent, branch)
            return
        t = node.type
        if t in _JAVA_UNSUPPORTED:
            raise self._unsupported(node)
        span = self.tree.span(node)
        if t == "if_statement":
            cond = node.child_by_field_name("condition")
            idx = self._add(_RawStatement(StatementKind.IF, node, span, [cond], parent, branch,
                                          guard=self.tree.span(cond)))
            self.collect_java(node.child_by_field_name("consequence"), idx, "then")
            self.collect_java(node.child_by_field_name("alternative"), idx, "else")
        elif t == "while_statement":
            cond = node.child_by_field_name("condition")
            idx = self._add(_RawStatement(StatementKind.LOOP, node, span, [cond], parent, branch,
                                          guard=self.tree.span(cond)))
            self.collect_java(node.child_by_field_name("body"), idx, "body")
        elif t == "for_statement":
            header = (node.children_by_field_name("init") + node.children_by_field_name("condition")
                      + node.children_by_field_name("update"))
            cond = node.child_by_field_name("condition")
            idx = self._add(_RawStatement(StatementKind.LOOP, node, span, header, parent, branch,
                                          guard=self.tree.span(cond) if cond is not None else None))
            self.collect_java(node.child_by_field_name("body"), idx, "body")
        elif t == "enhanced_for_statement":
            value = node.child_by_field_name("value")
            idx = self._add(_RawStatement(StatementKind.LOOP, node, span, [value], parent, branch,
                                          guard=self.tree.span(value), targets=[node.child_by_field_name("name")]))
            self.collect_java(node.child_by_field_name("body"), idx, "body")
        elif t == "local_variable_declaration":
            self._add(_RawStatement(StatementKind.DECL, node, span, [node], parent, branch))
        elif t == "expression_statement":
            first = node.named_children[0] if node.named_children else None
            if first is not None and first.type in _JAVA_UNSUPPORTED:
                raise self._unsupported(first)
            kind = StatementKind.OTHER
            if first is not None and first.type in ("assignment_expression", "update_expression"):
                kind = StatementKind.ASSIGN
            elif first is not None and first.type in ("method_invocation", "object_creation_expression"):
                kind = StatementKind.CALL
            self._add(_RawStatement(kind, node, span, [node], parent, branch))
        elif t == "return_statement":
            self._add(_RawStatement(StatementKind.RETURN, node, span, [node], parent, branch, jump="return"))
        else:
            self._add(_RawStatement(StatementKind.OTHER, node, span, [node], parent, branch, jump=_JUMPS.get(t)))


# ============================================================
# Public operations
# ============================================================

def _java_types(tree: SyntaxTree, fn: Node) -> Dict[str, str]:
    types: Dict[str, str] = {}

    def visit(node: Node) -> None:
        if node.type in ("formal_parameter", "spread_parameter", "enhanced_for_statement"):
            typ = node.child_by_field_name("type")
            name = node.child_by_field_name("name")
            if typ is not None and name is not None:
                types.setdefault(tree.text(name), tree.text(typ))
        elif node.type == "local_variable_declaration":
            typ = node.child_by_field_name("type")
            for declarator in node.children_by_field_name("declarator"):
                name = declarator.child_by_field_name("name")
                if typ is not None and name is not None:
                    types.setdefault(tree.text(name), tree.text(typ))
        elif node.type in ("lambda_expression", "class_body"):
            return
        for child in node.named_children:
            visit(child)

    visit(fn)
    return types


def parse_function(source: str, language: str, entry_point: str, unit_id: str = "",
                   tests: Tuple[TestCase, ...] = (), correctness: Optional[bool] = None,
                   generated_by: Optional[str] = None) -> FunctionUnit:
    """Parse one function into a FunctionUnit with per-statement defs/uses."""
    language = language.lower()
    if language not in (PYTHON, JAVA):
        raise UnsupportedConstruct(f"Language '{language}' is not supported")
    tree = SyntaxTree(source, language)
    if tree.has_error:
        raise SourceSyntaxError(f"{unit_id or entry_point}: source does not parse as {language}")
    fn = tree.find_function(entry_point)
    if fn is None:
        raise MissingEntryPoint(f"{unit_id or entry_point}: '{entry_point}' is not defined in source")

    fn_start, fn_end = tree.span(fn)
    params: List[str] = []
    for p in tree.parameter_nodes(fn):
        name = tree.parameter_name(p)
        if name:
            params.append(name)

    collector = _StatementCollector(tree)
    body = fn.child_by_field_name("body")
    if language == PYTHON:
        collector.collect_py(body, None, None)
    else:
        collector.collect_java(body, None, None)

    scanner = DefUseScanner(tree)
    raw_sets: List[Tuple[Set[str], Set[str]]] = []
    for raw in collector.out:
        defs: Set[str] = set()
        uses: Set[str] = set()
        for target in raw.targets:
            for ident in tree.identifiers(target):
                defs.add(tree.text(ident))
        for region in raw.header:
            scanner.scan(region, defs, uses)
        raw_sets.append((defs, uses))

    local_names: Set[str] = set(params)
    for defs, _ in raw_sets:
        local_names |= defs
    if language == JAVA:
        var_types = _java_types(tree, fn)
        local_names |= set(var_types)
    else:
        var_types = {}

    statements = []
    for i, (raw, (defs, uses)) in enumerate(zip(collector.out, raw_sets), start=1):
        statements.append(StatementNode(
            index=i,
            kind=raw.kind,
            span=raw.span,
            defs=frozenset(defs & local_names),
            uses=frozenset(uses & local_names),
            parent=raw.parent,
            branch=raw.branch,
            guard=raw.guard,
            jump=raw.jump,
            line=tree.line_of(raw.span[0], fn_start),
        ))

    logger.debug(f"Parsed {unit_id or entry_point}: {len(statements)} statements, params={params}")
    return FunctionUnit(
        id=unit_id,
        language=language,
        source=source,
        entry_point=entry_point,
        statements=tuple(statements),
        params=tuple(params),
        function_span=(fn_start, fn_end),
        tests=tuple(tests),
        correctness=correctness,
        generated_by=generated_by,
        var_types=tuple(sorted(var_types.items())),
    )


def serialize(unit: FunctionUnit) -> str:
    """Apply the unit's recorded span edits to its original source bytes."""
    data = unit.source.encode("utf-8")
    if not unit.edits:
        return unit.source
    out = []
    cursor = 0
    for edit in sorted(unit.edits, key=lambda e: (e.start, e.end)):
        if edit.start < cursor or edit.end < edit.start or edit.end > len(data):
            raise SerializationError(f"{unit.id}: overlapping or out-of-range edit at {edit.start}-{edit.end}")
        if data[edit.start:edit.end].decode("utf-8") != edit.before:
            raise SerializationError(f"{unit.id}: edit at {edit.start}-{edit.end} does not match source text")
        out.append(data[cursor:edit.start])
        out.append(edit.after.encode("utf-8"))
        cursor = edit.end
    out.append(data[cursor:])
    return b"".join(out).decode("utf-8")


def extract_def_use(unit: FunctionUnit) -> Dict[int, Tuple[FrozenSet[str], FrozenSet[str]]]:
    """Per-statement (defs, uses); parameters are definitions at virtual index 0."""
    table = {PARAMS_INDEX: (frozenset(unit.params), frozenset())}
    for stmt in unit.statements:
        table[stmt.index] = (stmt.defs, stmt.uses)
    return table
