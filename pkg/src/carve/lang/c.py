"""C/C++ analysis for implicit mappings.

Nothing here is a real C parser.  The file is tokenized once (comments,
tag lines and the interiors of literals dropped, each preprocessor
directive collapsed into one token), brackets are paired, and every
question about a construct is answered by walking that token list.
"""

from __future__ import annotations

import enum
import re
from bisect import bisect_left, bisect_right
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass
from typing import NamedTuple

from carve.diagnostics import CarveError
from carve.mapping_syntax import DEFAULT_TAG

name = "c"

IDENT = "ident"
NUMBER = "number"
STRING = "string"
CHAR = "char"
PUNCT = "punct"
DIRECTIVE = "directive"

CONTROL = frozenset(
    "if else for while do switch return goto break continue case default try catch sizeof".split()
)
TERMINATORS = frozenset(("break", "return", "goto", "continue"))
_RECORD_KEYWORDS = frozenset(("struct", "union", "enum", "class"))
_CONDITIONAL_DIRECTIVES = frozenset(("#if", "#ifdef", "#ifndef", "#elif", "#else", "#endif"))

_TOKEN_RE = re.compile(
    r"""
    (?P<comment>//)
  | (?P<block>/\*)
  | (?P<string>(?:u8|[uUL])?"(?:[^"\\]|\\.)*")
  | (?P<char>(?:u8|[uUL])?'(?:[^'\\]|\\.)*')
  | (?P<bad>["'])
  | (?P<ident>[A-Za-z_$][\w$]*)
  | (?P<number>\.?\d(?:[eEpP][+-]|[\w.])*)
  | (?P<punct>::|->|==|!=|<=|>=|&&|\|\||<<=?|>>=?|[-+*/%&|^]=|\+\+|--|[^\s\w])
    """,
    re.VERBOSE,
)
_DIRECTIVE_NAME_RE = re.compile(r"#\s*(\w*)")


class AnalysisError(CarveError):
    code = "Unanalyzable"


class UnterminatedLiteral(AnalysisError):
    code = "UnterminatedLiteral"


class UnterminatedComment(AnalysisError):
    code = "UnterminatedComment"


class UnbalancedBraces(AnalysisError):
    code = "UnbalancedBraces"


class NothingToMap(AnalysisError):
    code = "NothingToMap"


class TextPos(NamedTuple):
    line: int
    col: int


class Extent(NamedTuple):
    start: TextPos
    end: TextPos  # inclusive


class Token(NamedTuple):
    kind: str
    text: str
    line: int
    col: int
    end_line: int
    end_col: int  # inclusive


class ConstructKind(enum.Enum):
    STATEMENT = "Statement"
    FUNCTION_DEF = "FunctionDef"
    STRUCT_DEF = "StructDef"
    SWITCH_CASE = "SwitchCase"
    IF_BRANCH = "IfBranch"
    ELSE_IF_BRANCH = "ElseIfBranch"
    ELSE_BRANCH = "ElseBranch"


CONDITIONAL_KINDS = frozenset(
    (ConstructKind.IF_BRANCH, ConstructKind.ELSE_IF_BRANCH, ConstructKind.ELSE_BRANCH)
)


@dataclass(frozen=True)
class WholeExtent:
    extent: Extent


@dataclass(frozen=True)
class LabelOnly:
    label: Extent


@dataclass(frozen=True)
class EmptyBody:
    # The braces themselves when ``braced``, otherwise the lone body statement.
    body: Extent
    braced: bool = True


RemovalPlan = WholeExtent | LabelOnly | EmptyBody


def tokenize(lines: Sequence[str], tag: str = DEFAULT_TAG) -> list[Token]:
    """Significant tokens of a C file.

    Raises UnterminatedLiteral / UnterminatedComment.
    """
    tokens: list[Token] = []
    append = tokens.append
    search = _TOKEN_RE.search
    in_block = None  # line where the open block comment started
    directive = None  # [first line, name] while inside a directive
    for lineno, line in enumerate(lines):
        pos = 0
        if in_block is not None:
            end = line.find("*/")
            if end < 0:
                continue
            pos = end + 2
            in_block = None
        elif directive is None:
            stripped = line.lstrip()
            if stripped.startswith(tag):
                continue
            if stripped.startswith("#"):
                m = _DIRECTIVE_NAME_RE.match(stripped)
                directive = [lineno, "#" + m.group(1)]
        sink = None if directive is not None else append
        while True:
            m = search(line, pos)
            if m is None:
                break
            kind = m.lastgroup
            if kind == "comment":
                break
            if kind == "block":
                end = line.find("*/", m.end())
                if end < 0:
                    in_block = lineno
                    break
                pos = end + 2
                continue
            pos = m.end()
            if sink is None:
                continue
            if kind == "bad":
                raise UnterminatedLiteral(f"unterminated {'string' if m.group() == chr(34) else 'character'} literal", lineno)
            start = m.start()
            append(Token(kind, m.group(), lineno, start, lineno, pos - 1))
        if directive is not None and not line.rstrip().endswith("\\"):
            first, dname = directive
            append(Token(DIRECTIVE, dname, first, len(lines[first]) - len(lines[first].lstrip()), lineno, max(len(line) - 1, 0)))
            directive = None
    if in_block is not None:
        raise UnterminatedComment("block comment is never closed", in_block)
    if directive is not None:
        first, dname = directive
        append(Token(DIRECTIVE, dname, first, 0, len(lines) - 1, max(len(lines[-1]) - 1, 0)))
    return tokens


class CSource:
    """A tokenized file with paired brackets, ready for construct queries."""

    def __init__(self, lines: Sequence[str], tag: str = DEFAULT_TAG):
        self.lines = lines
        self.tag = tag
        self.tokens = tokenize(lines, tag)
        self.texts = [t.text for t in self.tokens]
        self.starts = [(t.line, t.col) for t in self.tokens]
        self.tok_lines = [t.line for t in self.tokens]
        self._pair_brackets()

    def _pair_brackets(self):
        n = len(self.tokens)
        match = [-1] * n
        enclosing = [-1] * n
        stacks: dict[str, list[int]] = {"(": [], "[": [], "{": []}
        closers = {")": "(", "]": "[", "}": "{"}
        braces = stacks["{"]
        for i, tok in enumerate(self.tokens):
            if tok.kind != PUNCT:
                enclosing[i] = braces[-1] if braces else -1
                continue
            t = tok.text
            if t in stacks:
                enclosing[i] = braces[-1] if braces else -1
                stacks[t].append(i)
            elif t in closers:
                stack = stacks[closers[t]]
                if stack:
                    j = stack.pop()
                    match[i], match[j] = j, i
                enclosing[i] = braces[-1] if braces else -1
            else:
                enclosing[i] = braces[-1] if braces else -1
        self.match = match
        self.enclosing = enclosing

    def __len__(self):
        return len(self.tokens)

    def pos(self, i: int) -> TextPos:
        t = self.tokens[i]
        return TextPos(t.line, t.col)

    def endpos(self, i: int) -> TextPos:
        t = self.tokens[i]
        return TextPos(t.end_line, t.end_col)

    def index_at(self, pos: TextPos) -> int:
        i = bisect_left(self.starts, (pos[0], pos[1]))
        if i >= len(self.starts) or self.starts[i] != (pos[0], pos[1]):
            raise AnalysisError(f"no token starts at line {pos[0] + 1}, column {pos[1] + 1}", pos[0])
        return i

    def index_containing(self, pos: TextPos) -> int:
        return bisect_right(self.starts, (pos[0], pos[1])) - 1

    def first_after_line(self, line: int) -> int:
        return bisect_left(self.tok_lines, line + 1)

    def text(self, i: int) -> str:
        return self.texts[i] if 0 <= i < len(self.texts) else ""

    def close(self, i: int) -> int:
        m = self.match[i]
        if m < 0:
            raise UnbalancedBraces(f"no matching bracket for {self.texts[i]!r}", self.tokens[i].line)
        return m

    def paren_close(self, i: int) -> int:
        if self.text(i) != "(":
            line = self.tokens[min(i, len(self.tokens) - 1)].line if self.tokens else None
            raise AnalysisError(f"expected '(' but found {self.text(i)!r}", line)
        return self.close(i)

    def extent(self, i: int, j: int) -> Extent:
        return Extent(self.pos(i), self.endpos(j))

    def is_label(self, i: int) -> bool:
        t = self.texts[i]
        if self.tokens[i].kind != IDENT:
            return False
        if t == "case":
            return True
        return t == "default" and self.text(i + 1) == ":"


def as_source(src, tag: str = DEFAULT_TAG) -> CSource:
    return src if isinstance(src, CSource) else CSource(src, tag)


parse = CSource


# --- public scanning primitives -------------------------------------------------


def scan_code(
    lines, start: TextPos = TextPos(0, 0), until: Callable[[Token], bool] | None = None, tag: str = DEFAULT_TAG
) -> Iterator[Token]:
    """Yield significant tokens from ``start`` on, stopping after the first one ``until`` accepts."""
    src = as_source(lines, tag)
    i = bisect_left(src.starts, (start[0], start[1]))
    for tok in src.tokens[i:]:
        yield tok
        if until is not None and until(tok):
            return


def match_brace(lines, open_pos: TextPos, tag: str = DEFAULT_TAG) -> TextPos:
    src = as_source(lines, tag)
    i = src.index_at(open_pos)
    if src.texts[i] != "{":
        raise AnalysisError(f"no '{{' at line {open_pos[0] + 1}, column {open_pos[1] + 1}", open_pos[0])
    return src.pos(src.close(i))


# --- statement structure ------------------------------------------------------------


def _scan_header(src: CSource, i: int) -> tuple[int, bool]:
    """Walk from ``i`` to the first ``{ ; = }`` outside brackets.  Returns (index, saw parens)."""
    texts, tokens, n = src.texts, src.tokens, len(src.texts)
    saw_paren = False
    j = i
    while j < n:
        t = texts[j]
        if tokens[j].kind == PUNCT:
            if t == "(" or t == "[":
                saw_paren = saw_paren or t == "("
                j = src.close(j) + 1
                continue
            if t in ("{", ";", "=", "}"):
                return j, saw_paren
        j += 1
    return n, saw_paren


def _label_end(src: CSource, i: int) -> int:
    """Index of the ':' closing the case/default label at ``i``."""
    texts, n = src.texts, len(src.texts)
    pending_ternary = 0
    j = i + 1
    while j < n:
        t = texts[j]
        if t == "(" or t == "[":
            j = src.close(j) + 1
            continue
        if t == "?":
            pending_ternary += 1
        elif t == ":":
            if not pending_ternary:
                return j
            pending_ternary -= 1
        elif t in (";", "{", "}"):
            break
        j += 1
    raise AnalysisError("case label has no ':'", src.tokens[i].line)


def _is_expression_brace(src: CSource, j: int, first: int, saw_assign: bool) -> bool:
    if saw_assign or src.texts[first] == "return":
        return True
    prev = src.text(j - 1)
    if prev in ("(", ",", "=", "return", "{"):
        return True
    if prev == ")":
        # `(type){...}` compound literal vs `MACRO(args) {...}` block
        before = src.text(src.match[j - 1] - 1) if src.match[j - 1] > 0 else ""
        return not (before and (before[0].isalpha() or before[0] == "_") and before not in CONTROL)
    return False


def statement_end(src: CSource, i: int) -> int:
    """Index of the last token of the statement starting at ``i``."""
    texts, tokens, n = src.texts, src.tokens, len(src.texts)
    if i >= n:
        raise NothingToMap("statement runs past the end of the file", tokens[-1].line if tokens else None)
    tok = tokens[i]
    t = tok.text
    if tok.kind == DIRECTIVE:
        return i
    if t == "{":
        return src.close(i)
    if t == ";":
        return i
    if tok.kind == IDENT:
        if t == "if":
            end = statement_end(src, src.paren_close(i + 1) + 1)
            if src.text(end + 1) == "else":
                return statement_end(src, end + 2)
            return end
        if t in ("for", "while", "switch"):
            return statement_end(src, src.paren_close(i + 1) + 1)
        if t == "do":
            end = statement_end(src, i + 1)
            if src.text(end + 1) != "while":
                raise AnalysisError("do statement without while", tok.line)
            close = src.paren_close(end + 2)
            if src.text(close + 1) != ";":
                raise AnalysisError("do-while without ';'", tok.line)
            return close + 1
        if t == "else":
            return statement_end(src, i + 1)
        if src.is_label(i):
            return _label_end(src, i)
    saw_assign = False
    j = i
    while j < n:
        t = texts[j]
        if tokens[j].kind == PUNCT:
            if t == "(" or t == "[":
                j = src.close(j) + 1
                continue
            if t == "=":
                saw_assign = True
            elif t == "{":
                close = src.close(j)
                if _is_expression_brace(src, j, i, saw_assign):
                    j = close + 1
                    continue
                return close + 1 if src.text(close + 1) == ";" else close
            elif t == ";":
                return j
            elif t == "}":
                raise AnalysisError("statement has no terminating ';'", tok.line)
        j += 1
    raise AnalysisError("statement runs past the end of the file", tok.line)


def _clause_end(src: CSource, if_index: int) -> int:
    """End of one `if (...) body` clause, not including any `else`."""
    return statement_end(src, src.paren_close(if_index + 1) + 1)


def _kind_at(src: CSource, i: int) -> ConstructKind:
    tok = src.tokens[i]
    t = tok.text
    if tok.kind == DIRECTIVE:
        return ConstructKind.STATEMENT
    if tok.kind == IDENT:
        if src.is_label(i):
            return ConstructKind.SWITCH_CASE
        if t == "if":
            return ConstructKind.IF_BRANCH
        if t == "else":
            return ConstructKind.ELSE_IF_BRANCH if src.text(i + 1) == "if" else ConstructKind.ELSE_BRANCH
    if t == "}":
        raise NothingToMap("mapping is followed by a closing brace", tok.line)
    if t in CONTROL:
        return ConstructKind.STATEMENT
    stop, saw_paren = _scan_header(src, i)
    if src.text(stop) == "{":
        if t in ("namespace", "extern"):
            return ConstructKind.STATEMENT
        if saw_paren:
            return ConstructKind.FUNCTION_DEF
        if any(src.texts[k] in _RECORD_KEYWORDS for k in range(i, stop)):
            return ConstructKind.STRUCT_DEF
    return ConstructKind.STATEMENT


def code_gap(src, line: int, tag: str = DEFAULT_TAG) -> tuple[int, int]:
    """(last line of code before ``line``, first line of code after it); -1 / len(lines) at the edges."""
    src = as_source(src, tag)
    i = src.first_after_line(line)
    before = src.tokens[i - 1].end_line if i > 0 else -1
    after = src.tokens[i].line if i < len(src) else len(src.lines)
    return before, after


def classify_construct(src, mapping_line: int, tag: str = DEFAULT_TAG) -> tuple[ConstructKind, TextPos]:
    """Kind and first position of the construct an implicit mapping on ``mapping_line`` targets."""
    src = as_source(src, tag)
    i = src.first_after_line(mapping_line)
    if i >= len(src):
        raise NothingToMap("mapping is followed only by comments or blank lines", mapping_line)
    if src.texts[i] == "}" and src.text(i + 1) == "else":
        # K&R style `} else ...` on the line after the mapping
        i += 1
    return _kind_at(src, i), src.pos(i)


def construct_extent(src, kind: ConstructKind, anchor: TextPos, tag: str = DEFAULT_TAG) -> Extent:
    src = as_source(src, tag)
    i = src.index_at(anchor)
    if kind is ConstructKind.STATEMENT:
        end = statement_end(src, i)
    elif kind is ConstructKind.FUNCTION_DEF:
        stop, _ = _scan_header(src, i)
        end = src.close(stop)
    elif kind is ConstructKind.STRUCT_DEF:
        stop, _ = _scan_header(src, i)
        end = src.close(stop)
        j = end + 1
        while j < len(src) and src.texts[j] != ";":
            if src.texts[j] in ("(", "["):
                j = src.close(j)
            elif src.texts[j] in ("{", "}"):
                raise AnalysisError("record definition has no terminating ';'", src.tokens[i].line)
            j += 1
        if j >= len(src):
            raise AnalysisError("record definition has no terminating ';'", src.tokens[i].line)
        end = j
    elif kind is ConstructKind.IF_BRANCH:
        end = _clause_end(src, i)
    elif kind is ConstructKind.ELSE_IF_BRANCH:
        end = _clause_end(src, i + 1)
    elif kind is ConstructKind.ELSE_BRANCH:
        end = statement_end(src, i + 1)
    elif kind is ConstructKind.SWITCH_CASE:
        end = _case_body_end(src, i)
    else:  # pragma: no cover
        raise ValueError(kind)
    return src.extent(i, end)


# --- switch handling ------------------------------------------------------------------


def _switch_brace(src: CSource, label: int) -> int:
    brace = src.enclosing[label]
    if brace >= 1 and src.texts[brace - 1] == ")":
        open_paren = src.match[brace - 1]
        if open_paren >= 1 and src.texts[open_paren - 1] == "switch":
            return brace
    raise AnalysisError("case label is not directly inside a switch body", src.tokens[label].line)


def _labels(src: CSource, brace: int) -> list[int]:
    enclosing, texts = src.enclosing, src.texts
    return [
        j
        for j in range(brace + 1, src.close(brace))
        if enclosing[j] == brace and (texts[j] == "case" or texts[j] == "default") and src.is_label(j)
    ]


def _case_body_end(src: CSource, label: int) -> int:
    brace = _switch_brace(src, label)
    close = src.close(brace)
    enclosing = src.enclosing
    j = _label_end(src, label) + 1
    while j < close:
        if enclosing[j] == brace and src.is_label(j):
            break
        j += 1
    return j - 1


def enclosing_switch(src, anchor: TextPos, tag: str = DEFAULT_TAG) -> Extent:
    """Extent of the switch statement (keyword through closing brace) around a case label."""
    src = as_source(src, tag)
    brace = _switch_brace(src, src.index_at(anchor))
    return src.extent(src.match[brace - 1] - 1, src.close(brace))


def _has_terminator(src: CSource, start: int, stop: int) -> bool:
    """True if a top-level statement in [start, stop) unconditionally leaves the case."""
    texts, tokens = src.texts, src.tokens
    j = start
    while j < stop:
        t = texts[j]
        if tokens[j].kind == DIRECTIVE:
            j += 1
            continue
        if t in TERMINATORS:
            return True
        if t == "{":
            close = src.close(j)
            if _has_terminator(src, j + 1, close):
                return True
            j = close + 1
            continue
        try:
            j = statement_end(src, j) + 1
        except AnalysisError:
            # can't tell; assume it falls through, which keeps the code
            return False
    return False


def plan_switch_case(src, case_extent: Extent, switch: Extent, fired_labels, tag: str = DEFAULT_TAG) -> RemovalPlan:
    """LabelOnly if a kept label above can fall through into this case, else WholeExtent.

    ``fired_labels`` holds the positions of every label whose mapping fires.
    """
    src = as_source(src, tag)
    label = src.index_at(case_extent.start)
    sw = src.index_at(switch.start)
    brace = src.paren_close(sw + 1) + 1
    labels = _labels(src, brace)
    k = labels.index(label)
    label_extent = src.extent(label, _label_end(src, label))
    for idx in range(k - 1, -1, -1):
        above = labels[idx]
        if _has_terminator(src, _label_end(src, above) + 1, labels[idx + 1]):
            break
        if src.pos(above) not in fired_labels:
            return LabelOnly(label_extent)
    return WholeExtent(case_extent)


# --- conditionals ------------------------------------------------------------------------


def plan_conditional(src, kind: ConstructKind, extent: Extent, tag: str = DEFAULT_TAG) -> RemovalPlan:
    """EmptyBody when an `else` continues the chain, otherwise WholeExtent."""
    src = as_source(src, tag)
    if kind is ConstructKind.ELSE_BRANCH:
        return WholeExtent(extent)
    end = src.index_containing(extent.end)
    if src.text(end + 1) != "else":
        return WholeExtent(extent)
    i = src.index_at(extent.start)
    if kind is ConstructKind.ELSE_IF_BRANCH:
        i += 1
    body = src.paren_close(i + 1) + 1
    if src.text(body) == "{":
        return EmptyBody(src.extent(body, src.close(body)), braced=True)
    return EmptyBody(src.extent(body, statement_end(src, body)), braced=False)


_ACCESS = frozenset(("public", "private", "protected"))


def needs_placeholder(src, extent: Extent, tag: str = DEFAULT_TAG) -> bool:
    """True when deleting ``extent`` outright would leave a header or label without its statement.

    That is the unbraced body of if/else/for/while/do/switch, or the last
    statement after a label.
    """
    src = as_source(src, tag)
    i = src.index_at(extent.start)
    prev = src.text(i - 1)
    if prev in ("else", "do"):
        return True
    if prev == ")":
        o = src.match[i - 1]
        return o > 0 and src.texts[o - 1] in ("if", "while", "for", "switch")
    if prev == ":" and src.text(i - 2) not in _ACCESS:
        return src.text(src.index_containing(extent.end) + 1) == "}"
    return False


# --- metrics and lint helpers -------------------------------------------------------------


def _skip_initializer(src: CSource, j: int) -> int:
    texts, n = src.texts, len(src.texts)
    while j < n:
        t = texts[j]
        if t in ("(", "[", "{"):
            j = src.close(j) + 1
            continue
        if t == ";":
            return j + 1
        if t == "}":
            return j
        j += 1
    return n


def count_functions(src, tag: str = DEFAULT_TAG) -> int:
    """Number of function definitions at file scope (namespaces and extern blocks count as file scope)."""
    src = as_source(src, tag)
    texts, tokens, n = src.texts, src.tokens, len(src.texts)
    count = 0
    i = 0
    while i < n:
        t = texts[i]
        if tokens[i].kind == DIRECTIVE or t == ";" or t == "}":
            i += 1
            continue
        stop, saw_paren = _scan_header(src, i)
        if stop >= n:
            break
        s = texts[stop]
        if s == "{":
            if not saw_paren and (t in ("namespace", "extern") or (t == "inline" and src.text(i + 1) == "namespace")):
                i = stop + 1
                continue
            if saw_paren and t not in CONTROL:
                count += 1
            i = src.close(stop) + 1
        elif s == "=":
            i = _skip_initializer(src, stop)
        else:
            i = stop + 1
    return count


def conditional_directives(src, extent: Extent, tag: str = DEFAULT_TAG) -> list[Token]:
    """Preprocessor conditionals lying inside ``extent``."""
    src = as_source(src, tag)
    lo = bisect_left(src.starts, (extent.start[0], extent.start[1]))
    hi = bisect_right(src.starts, (extent.end[0], extent.end[1]))
    return [t for t in src.tokens[lo:hi] if t.kind == DIRECTIVE and t.text in _CONDITIONAL_DIRECTIVES]
