# utils/syntax.py
"""
Thin tree-sitter front-end shared by the code model and the transform engine.

Java sources hold a single method (optionally preceded by import lines), which
is not a valid compilation unit on its own, so the method is parsed inside a
synthetic class and every span is mapped back to the original source bytes.
"""
import re
from typing import Iterator, List, Optional, Set, Tuple

import tree_sitter_java
import tree_sitter_python
from tree_sitter import Language, Node, Parser

PYTHON = "python"
JAVA = "java"
LANGUAGES = (PYTHON, JAVA)

_TS_LANGUAGES = {
    PYTHON: Language(tree_sitter_python.language()),
    JAVA: Language(tree_sitter_java.language()),
}

_JAVA_IMPORTS = re.compile(rb"\A(?:\s*(?:import\s+(?:static\s+)?[\w.]+(?:\.\*)?\s*;)|\s*//[^\n]*)*\s*")
_JAVA_CLASS_OPEN = b"class __Unit__ {\n"
_JAVA_CLASS_CLOSE = b"\n}\n"

PY_FUNCTION = "function_definition"
JAVA_METHOD = "method_declaration"

COMMENT_TYPES = {"comment", "line_comment", "block_comment"}

# Nodes whose `name`-like child is not a variable reference
_PY_NAME_FIELDS = {("attribute", "attribute"), ("keyword_argument", "name")}
_JAVA_NAME_FIELDS = {("method_invocation", "name"), ("field_access", "field"), ("method_reference", "name")}

PY_KEYWORDS = {
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield", "match", "case",
}
JAVA_KEYWORDS = {
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "final", "finally", "float",
    "for", "goto", "if", "implements", "import", "instanceof", "int", "interface", "long", "native",
    "new", "package", "private", "protected", "public", "return", "short", "static", "strictfp",
    "super", "switch", "synchronized", "this", "throw", "throws", "transient", "try", "void",
    "volatile", "while", "true", "false", "null", "var", "record", "yield",
}


def keywords(language: str) -> Set[str]:
    return PY_KEYWORDS if language == PYTHON else JAVA_KEYWORDS


def split_java_imports(source: str) -> Tuple[str, str]:
    """(import header, method text) of a Java unit source."""
    data = source.encode("utf-8")
    m = _JAVA_IMPORTS.match(data)
    cut = m.end() if m else 0
    return data[:cut].decode("utf-8"), data[cut:].decode("utf-8")


class SyntaxTree:
    """A parsed source with spans expressed in original-source bytes."""

    def __init__(self, source: str, language: str):
        if language not in _TS_LANGUAGES:
            raise ValueError(f"Unsupported language: {language}")
        self.language = language
        self.source = source
        self.data = source.encode("utf-8")
        self._split = 0
        self._shift = 0
        if language == JAVA:
            m = _JAVA_IMPORTS.match(self.data)
            self._split = m.end() if m else 0
            text = self.data[: self._split] + _JAVA_CLASS_OPEN + self.data[self._split:] + _JAVA_CLASS_CLOSE
            self._shift = len(_JAVA_CLASS_OPEN)
        else:
            text = self.data
        self.tree = Parser(_TS_LANGUAGES[language]).parse(text)
        self.root = self.tree.root_node

    # -------------------- spans --------------------

    def pos(self, wrapped: int) -> int:
        if wrapped >= self._split + self._shift:
            return wrapped - self._shift
        return min(wrapped, self._split)

    def span(self, node: Node) -> Tuple[int, int]:
        return self.pos(node.start_byte), self.pos(node.end_byte)

    def text(self, node: Node) -> str:
        start, end = self.span(node)
        return self.data[start:end].decode("utf-8")

    def slice(self, start: int, end: int) -> str:
        return self.data[start:end].decode("utf-8")

    def line_of(self, offset: int, origin: int = 0) -> int:
        """1-based line of `offset`, counting from the line holding `origin`."""
        return self.data.count(b"\n", origin, offset) + 1

    def column_of(self, offset: int) -> int:
        line_start = self.data.rfind(b"\n", 0, offset) + 1
        return offset - line_start

    def indent_of(self, offset: int) -> str:
        line_start = self.data.rfind(b"\n", 0, offset) + 1
        m = re.match(rb"[ \t]*", self.data[line_start:offset])
        return m.group(0).decode("utf-8") if m else ""

    # -------------------- structure --------------------

    @property
    def has_error(self) -> bool:
        return self.root.has_error

    def functions(self) -> List[Node]:
        """Top-level function definitions (Python) or methods of the synthetic class (Java)."""
        out = []
        if self.language == PYTHON:
            for child in self.root.named_children:
                if child.type == "decorated_definition":
                    child = child.child_by_field_name("definition")
                if child is not None and child.type == PY_FUNCTION:
                    out.append(child)
        else:
            for cls in self.root.named_children:
                if cls.type != "class_declaration":
                    continue
                body = cls.child_by_field_name("body")
                for member in body.named_children if body else []:
                    if member.type == JAVA_METHOD:
                        out.append(member)
        return out

    def find_function(self, name: str) -> Optional[Node]:
        for fn in self.functions():
            if self.text(fn.child_by_field_name("name")) == name:
                return fn
        return None

    def parameter_nodes(self, fn: Node) -> List[Node]:
        params = fn.child_by_field_name("parameters")
        return [p for p in params.named_children if p.type not in COMMENT_TYPES] if params else []

    def parameter_name(self, param: Node) -> Optional[str]:
        if param.type == "identifier":
            return self.text(param)
        name = param.child_by_field_name("name")
        if name is not None:
            return self.text(name)
        for child in param.named_children:
            if child.type == "identifier":
                return self.text(child)
        return None

    def identifiers(self, node: Node) -> Iterator[Node]:
        """Every identifier node under `node` in source order."""
        if node.type == "identifier":
            yield node
            return
        for child in node.children:
            yield from self.identifiers(child)

    def is_name_position(self, ident: Node) -> bool:
        """True when an identifier names a member/keyword/method rather than a variable."""
        parent = ident.parent
        if parent is None:
            return False
        fields = _PY_NAME_FIELDS if self.language == PYTHON else _JAVA_NAME_FIELDS
        for parent_type, field in fields:
            if parent.type == parent_type:
                named = parent.child_by_field_name(field)
                if named is not None and named.start_byte == ident.start_byte and named.end_byte == ident.end_byte:
                    return True
        return False

    def variable_occurrences(self, node: Node, name: str) -> List[Node]:
        return [
            ident for ident in self.identifiers(node)
            if self.text(ident) == name and not self.is_name_position(ident)
        ]

    def all_identifier_names(self) -> Set[str]:
        return {self.text(n) for n in self.identifiers(self.root)}

    def calls_to(self, node: Node, name: str) -> List[Node]:
        """Direct calls of `name` (recursive calls, test call sites) under `node`."""
        out = []
        stack = [node]
        while stack:
            cur = stack.pop()
            if self.language == PYTHON and cur.type == "call":
                fn = cur.child_by_field_name("function")
                if fn is not None and fn.type == "identifier" and self.text(fn) == name:
                    out.append(cur)
            elif self.language == JAVA and cur.type == "method_invocation":
                obj = cur.child_by_field_name("object")
                called = cur.child_by_field_name("name")
                if called is not None and self.text(called) == name and (obj is None or obj.type == "this"):
                    out.append(cur)
            stack.extend(reversed(cur.children))
        out.sort(key=lambda n: n.start_byte)
        return out

    def call_arguments(self, call: Node) -> List[Node]:
        args = call.child_by_field_name("arguments")
        if args is None:
            return []
        return [a for a in args.named_children if a.type not in COMMENT_TYPES]


def parse_expression(text: str, language: str) -> Tuple[SyntaxTree, Optional[Node], int]:
    """
    Parse a standalone expression. Returns the tree, the expression node, and the
    byte offset at which `text` starts inside the tree's source.
    """
    if language == PYTHON:
        tree = SyntaxTree(text, PYTHON)
        stmt = tree.root.named_children[0] if tree.root.named_children else None
        if stmt is None or stmt.type != "expression_statement" or not stmt.named_children:
            return tree, None, 0
        return tree, stmt.named_children[0], 0
    prefix = "void __probe__() { Object __e__ = "
    wrapper = prefix + text + "; }"
    tree = SyntaxTree(wrapper, JAVA)
    for fn in tree.functions():
        body = fn.child_by_field_name("body")
        decl = body.named_children[0] if body is not None and body.named_children else None
        if decl is not None and decl.type == "local_variable_declaration":
            declarator = decl.child_by_field_name("declarator")
            value = declarator.child_by_field_name("value") if declarator is not None else None
            return tree, value, len(prefix.encode("utf-8"))
    return tree, None, len(prefix.encode("utf-8"))
