import pytest

from utils.code_model import (
    PARAMS_INDEX, SpanEdit, StatementKind, extract_def_use, parse_function, serialize,
)
from utils.errors import MissingEntryPoint, SerializationError, SourceSyntaxError, UnsupportedConstruct

BELOW_ZERO = (
    "def below_zero(operations):\n"
    "    balance = 0\n"
    "    for op in operations:\n"
    "        balance += op\n"
    "        if balance < 0:\n"
    "            return True\n"
    "    return False\n"
)

FIND_INDEX_JAVA = (
    "public static int findIndex(int[] items, int target) {\n"
    "    int index = -1;\n"
    "    for (int i = 0; i < items.length; i++) {\n"
    "        if (items[i] == target) {\n"
    "            index = i;\n"
    "            break;\n"
    "        }\n"
    "    }\n"
    "    return index;\n"
    "}\n"
)


def test_python_statements_are_preorder_indexed():
    unit = parse_function(BELOW_ZERO, "python", "below_zero", unit_id="bz")
    kinds = [s.kind for s in unit.statements]
    assert kinds == [StatementKind.ASSIGN, StatementKind.LOOP, StatementKind.ASSIGN, StatementKind.IF,
                     StatementKind.RETURN, StatementKind.RETURN]
    assert [s.index for s in unit.statements] == [1, 2, 3, 4, 5, 6]
    assert [s.line for s in unit.statements] == [2, 3, 4, 5, 6, 7]
    assert unit.params == ("operations",)


def test_python_nesting_and_jumps():
    unit = parse_function(BELOW_ZERO, "python", "below_zero")
    assert unit.statement(3).parent == 2 and unit.statement(3).branch == "body"
    assert unit.statement(5).parent == 4 and unit.statement(5).branch == "then"
    assert unit.statement(5).jump == "return"
    assert unit.ancestors(5) == [4, 2]
    assert [s.index for s in unit.children(None)] == [1, 2, 6]


def test_python_defs_and_uses():
    unit = parse_function(BELOW_ZERO, "python", "below_zero")
    assert unit.statement(1).defs == {"balance"}
    assert unit.statement(2).defs == {"op"}
    assert unit.statement(2).uses == {"operations"}
    assert unit.statement(3).defs == {"balance"}
    assert unit.statement(3).uses == {"balance", "op"}
    assert unit.statement(4).uses == {"balance"}
    assert unit.locals == {"operations", "balance", "op"}


def test_extract_def_use_puts_parameters_at_index_zero():
    unit = parse_function(BELOW_ZERO, "python", "below_zero")
    table = extract_def_use(unit)
    assert table[PARAMS_INDEX] == (frozenset({"operations"}), frozenset())
    assert len(table) == len(unit.statements) + 1


def test_attribute_and_keyword_names_are_not_variables():
    source = "def f(s, key):\n    out = s.lower()\n    return sorted(out, key=key)\n"
    unit = parse_function(source, "python", "f")
    assert unit.statement(1).uses == {"s"}
    assert unit.statement(2).uses == {"out", "key"}


def test_comprehension_variables_stay_local_to_the_comprehension():
    source = "def f(xs):\n    ys = [x * 2 for x in xs]\n    return ys\n"
    unit = parse_function(source, "python", "f")
    assert unit.statement(1).defs == {"ys"}
    assert unit.statement(1).uses == {"xs"}


def test_java_method_is_parsed_inside_a_synthetic_class():
    unit = parse_function(FIND_INDEX_JAVA, "java", "findIndex", unit_id="fi")
    assert unit.params == ("items", "target")
    assert [s.kind for s in unit.statements] == [
        StatementKind.DECL, StatementKind.LOOP, StatementKind.IF, StatementKind.ASSIGN,
        StatementKind.OTHER, StatementKind.RETURN,
    ]
    assert unit.statement(5).jump == "break"
    assert unit.statement(2).defs == {"i"}
    assert unit.statement(2).uses == {"i", "items"}
    assert dict(unit.var_types)["index"] == "int"
    assert unit.statement(6).line == 9
    # Spans refer to the original source, not the wrapped text
    start, end = unit.function_span
    assert FIND_INDEX_JAVA.encode("utf-8")[start:end].decode("utf-8") == FIND_INDEX_JAVA.rstrip("\n")


def test_java_declaration_without_initializer_defines_nothing():
    source = "public static int f(int x) {\n    int y;\n    y = x + 1;\n    return y;\n}\n"
    unit = parse_function(source, "java", "f")
    assert unit.statement(1).defs == frozenset()
    assert unit.statement(2).defs == {"y"}


def test_unit_is_immutable():
    unit = parse_function(BELOW_ZERO, "python", "below_zero")
    with pytest.raises(Exception):
        unit.source = "x"


def test_serialize_without_edits_returns_the_source():
    unit = parse_function(BELOW_ZERO, "python", "below_zero")
    assert serialize(unit) == BELOW_ZERO


def test_serialize_applies_span_edits_and_keeps_the_rest():
    source = "def f(x):\n    # keep me\n    return x + 1\n"
    unit = parse_function(source, "python", "f")
    start = source.index("x + 1")
    edited = unit.edited(SpanEdit(start, start + 1, "x", "(x * 2)"))
    assert serialize(edited) == "def f(x):\n    # keep me\n    return (x * 2) + 1\n"
    # The original unit is untouched
    assert serialize(unit) == source


def test_serialize_rejects_inconsistent_edits():
    unit = parse_function("def f(x):\n    return x\n", "python", "f")
    with pytest.raises(SerializationError):
        serialize(unit.edited(SpanEdit(0, 3, "xyz", "abc")))
    with pytest.raises(SerializationError):
        serialize(unit.edited(SpanEdit(0, 3, "def", "a"), SpanEdit(1, 2, "e", "b")))


def test_syntax_error_is_reported():
    with pytest.raises(SourceSyntaxError):
        parse_function("def f(x:\n    return x\n", "python", "f")


def test_missing_entry_point():
    with pytest.raises(MissingEntryPoint):
        parse_function("def g(x):\n    return x\n", "python", "f")


@pytest.mark.parametrize("source", [
    "def f(x):\n    try:\n        return x\n    except Exception:\n        return 0\n",
    "def f(xs):\n    for x in xs:\n        pass\n    else:\n        return 1\n",
])
def test_unsupported_python_constructs(source):
    with pytest.raises(UnsupportedConstruct):
        parse_function(source, "python", "f")


def test_unsupported_java_switch():
    source = "public static int f(int x) {\n    switch (x) {\n        default: return 1;\n    }\n}\n"
    with pytest.raises(UnsupportedConstruct):
        parse_function(source, "java", "f")


def test_unknown_language():
    with pytest.raises(UnsupportedConstruct):
        parse_function("fn f() {}", "rust", "f")
