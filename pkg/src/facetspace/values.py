"""Immutable value algebra, pattern matching, and the canonical text rendering.

Values are the currency of everything that crosses the shared medium:
assertions, messages, and (encoded) interest patterns. They are deeply
immutable and hashable, so they can be shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Union


class MalformedPatternEncoding(ValueError):
    pass


class UnboundCapture(KeyError):
    pass


# ---------------------------------------------------------------------------
# Values

@dataclass(frozen=True)
class Symbol:
    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True)
class Integer:
    n: int

    def __repr__(self):
        return str(self.n)


@dataclass(frozen=True)
class Decimal:
    x: float

    def __repr__(self):
        return repr(self.x)


@dataclass(frozen=True)
class Text:
    s: str

    def __repr__(self):
        return '"%s"' % self.s


@dataclass(frozen=True)
class Boolean:
    b: bool

    def __repr__(self):
        return "#t" if self.b else "#f"


@dataclass(frozen=True)
class Sequence:
    items: tuple

    def __repr__(self):
        return "[%s]" % " ".join(map(render, self.items))


@dataclass(frozen=True)
class Record:
    label: Symbol
    fields: tuple

    def __repr__(self):
        return render(self)


@dataclass(frozen=True)
class Unique:
    serial: int

    def __repr__(self):
        return "#u%d" % self.serial


Value = Union[Symbol, Integer, Decimal, Text, Boolean, Sequence, Record, Unique]

# Record labels reserved for the runtime's pattern encoding.
OBSERVE = Symbol("observe")
WILDCARD_LABEL = Symbol("wildcard")
CAPTURE_LABEL = Symbol("capture")
MESSAGE = Symbol("message")

_VALUE_TYPES = (Symbol, Integer, Decimal, Text, Boolean, Sequence, Record, Unique)


def to_value(x) -> Value:
    """Convert a host datum to a Value. Bools before ints: bool is an int."""
    if isinstance(x, _VALUE_TYPES):
        return x
    if isinstance(x, bool):
        return Boolean(x)
    if isinstance(x, int):
        return Integer(x)
    if isinstance(x, float):
        return Decimal(x)
    if isinstance(x, str):
        return Text(x)
    if isinstance(x, (list, tuple)):
        return Sequence(tuple(to_value(i) for i in x))
    raise TypeError("cannot convert %r to a Value" % (x,))


def sym(name: str) -> Symbol:
    return Symbol(name)


def rec(label: Union[str, Symbol], *fields) -> Record:
    if isinstance(label, str):
        label = Symbol(label)
    return Record(label, tuple(to_value(f) for f in fields))


# ---------------------------------------------------------------------------
# Patterns

@dataclass(frozen=True)
class Wildcard:
    def __repr__(self):
        return "_"


WILDCARD = Wildcard()


@dataclass(frozen=True)
class Capture:
    name: str

    def __repr__(self):
        return "$" + self.name


@dataclass(frozen=True)
class Literal:
    v: Value

    def __repr__(self):
        return repr(self.v)


@dataclass(frozen=True)
class RecordPat:
    label: Symbol
    fields: tuple

    def __repr__(self):
        return "(%s)" % " ".join([self.label.name] + [repr(f) for f in self.fields])


@dataclass(frozen=True)
class SequencePat:
    items: tuple

    def __repr__(self):
        return "[%s]" % " ".join(repr(i) for i in self.items)


Pattern = Union[Wildcard, Capture, Literal, RecordPat, SequencePat]
_PATTERN_TYPES = (Wildcard, Capture, Literal, RecordPat, SequencePat)


def lit(x) -> Literal:
    return Literal(to_value(x))


def cap(name: str) -> Capture:
    return Capture(name)


def _to_pattern(x) -> Pattern:
    if isinstance(x, _PATTERN_TYPES):
        return x
    return Literal(to_value(x))


def rpat(label: Union[str, Symbol], *fields) -> Pattern:
    """Record pattern; collapses to a Literal when every field is ground.

    The collapse keeps patterns canonical, so that decode(encode(p)) = p.
    """
    if isinstance(label, str):
        label = Symbol(label)
    pats = tuple(_to_pattern(f) for f in fields)
    if all(isinstance(p, Literal) for p in pats):
        return Literal(Record(label, tuple(p.v for p in pats)))
    return RecordPat(label, pats)


def spat(*items) -> Pattern:
    pats = tuple(_to_pattern(i) for i in items)
    if all(isinstance(p, Literal) for p in pats):
        return Literal(Sequence(tuple(p.v for p in pats)))
    return SequencePat(pats)


def capture_names(p: Pattern) -> list:
    if isinstance(p, Capture):
        return [p.name]
    if isinstance(p, (RecordPat, SequencePat)):
        out = []
        for f in (p.fields if isinstance(p, RecordPat) else p.items):
            out.extend(capture_names(f))
        return out
    return []


def check_linear(p: Pattern):
    names = capture_names(p)
    if len(names) != len(set(names)):
        raise ValueError("non-linear pattern: repeated capture in %r" % (p,))


def match(p: Pattern, v: Value) -> Optional[dict]:
    """Match p against a ground value; returns bindings or None. Total."""
    if isinstance(p, Wildcard):
        return {}
    if isinstance(p, Capture):
        return {p.name: v}
    if isinstance(p, Literal):
        return {} if p.v == v else None
    if isinstance(p, RecordPat):
        if not isinstance(v, Record) or v.label != p.label:
            return None
        if len(v.fields) != len(p.fields):
            return None
        return _match_all(p.fields, v.fields)
    if isinstance(p, SequencePat):
        if not isinstance(v, Sequence) or len(v.items) != len(p.items):
            return None
        return _match_all(p.items, v.items)
    raise TypeError("not a pattern: %r" % (p,))


def _match_all(pats, vals) -> Optional[dict]:
    out = {}
    for sub_p, sub_v in zip(pats, vals):
        b = match(sub_p, sub_v)
        if b is None:
            return None
        out.update(b)
    return out


def instantiate(p: Pattern, b: dict) -> Pattern:
    """Replace each capture by the literal it is bound to; keep wildcards."""
    if isinstance(p, Capture):
        if p.name not in b:
            raise UnboundCapture(p.name)
        return Literal(b[p.name])
    if isinstance(p, RecordPat):
        return rpat(p.label, *[instantiate(f, b) for f in p.fields])
    if isinstance(p, SequencePat):
        return spat(*[instantiate(i, b) for i in p.items])
    return p


# ---------------------------------------------------------------------------
# Pattern <-> Value encoding: interests are themselves assertions.

def encode(p: Pattern) -> Value:
    if isinstance(p, Wildcard):
        return Record(WILDCARD_LABEL, ())
    if isinstance(p, Capture):
        return Record(CAPTURE_LABEL, (Text(p.name),))
    if isinstance(p, Literal):
        return p.v
    if isinstance(p, RecordPat):
        return Record(p.label, tuple(encode(f) for f in p.fields))
    if isinstance(p, SequencePat):
        return Sequence(tuple(encode(i) for i in p.items))
    raise TypeError("not a pattern: %r" % (p,))


def decode(v: Value) -> Pattern:
    """Invert encode. Ground values decode to Literal of themselves, so a
    plain assertion doubles as an exact-match pattern."""
    if isinstance(v, Record):
        if v.label == WILDCARD_LABEL:
            if v.fields:
                raise MalformedPatternEncoding(render(v))
            return WILDCARD
        if v.label == CAPTURE_LABEL:
            if len(v.fields) != 1 or not isinstance(v.fields[0], Text):
                raise MalformedPatternEncoding(render(v))
            return Capture(v.fields[0].s)
        return rpat(v.label, *[decode(f) for f in v.fields])
    if isinstance(v, Sequence):
        return spat(*[decode(i) for i in v.items])
    return Literal(v)


def observe(p: Pattern) -> Record:
    """The interest assertion for pattern p."""
    return Record(OBSERVE, (encode(p),))


def message_interest(p: Pattern) -> Record:
    """The interest assertion for messages matching p."""
    return Record(OBSERVE, (Record(MESSAGE, (encode(p),)),))


# ---------------------------------------------------------------------------
# Canonical text rendering and its parser (used for traces and script files).

def render(v: Value) -> str:
    if isinstance(v, Symbol):
        return v.name
    if isinstance(v, Integer):
        return str(v.n)
    if isinstance(v, Decimal):
        return repr(v.x)
    if isinstance(v, Text):
        return '"%s"' % v.s.replace("\\", "\\\\").replace('"', '\\"')
    if isinstance(v, Boolean):
        return "#t" if v.b else "#f"
    if isinstance(v, Sequence):
        return "[%s]" % " ".join(render(i) for i in v.items)
    if isinstance(v, Record):
        if v.fields:
            return "(%s %s)" % (v.label.name, " ".join(render(f) for f in v.fields))
        return "(%s)" % v.label.name
    if isinstance(v, Unique):
        return "#u%d" % v.serial
    raise TypeError("not a Value: %r" % (v,))


class ParseError(ValueError):
    pass


_DELIMS = set("()[]\" \t\n\r")


def _tokenize(text: str) -> Iterator[str]:
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\n\r":
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()[]":
            yield c
            i += 1
        elif c == '"':
            j = i + 1
            out = []
            while j < n and text[j] != '"':
                if text[j] == "\\" and j + 1 < n:
                    out.append(text[j + 1])
                    j += 2
                else:
                    out.append(text[j])
                    j += 1
            if j >= n:
                raise ParseError("unterminated string literal")
            yield '"' + "".join(out)
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in _DELIMS:
                j += 1
            yield text[i:j]
            i = j


def _parse_atom(tok: str) -> Value:
    if tok.startswith('"'):
        return Text(tok[1:])
    if tok == "#t":
        return Boolean(True)
    if tok == "#f":
        return Boolean(False)
    if tok.startswith("#u"):
        try:
            return Unique(int(tok[2:]))
        except ValueError:
            raise ParseError("bad unique literal: %s" % tok)
    try:
        return Integer(int(tok))
    except ValueError:
        pass
    try:
        return Decimal(float(tok))
    except ValueError:
        pass
    return Symbol(tok)


def _parse_one(tokens: list, pos: int):
    if pos >= len(tokens):
        raise ParseError("unexpected end of input")
    tok = tokens[pos]
    if tok == "(":
        pos += 1
        if (
            pos >= len(tokens)
            or tokens[pos] in "()[]"
            or not isinstance(_parse_atom(tokens[pos]), Symbol)
        ):
            raise ParseError("record must start with a symbol label")
        label = Symbol(tokens[pos])
        pos += 1
        fields = []
        while pos < len(tokens) and tokens[pos] != ")":
            f, pos = _parse_one(tokens, pos)
            fields.append(f)
        if pos >= len(tokens):
            raise ParseError("missing )")
        return Record(label, tuple(fields)), pos + 1
    if tok == "[":
        pos += 1
        items = []
        while pos < len(tokens) and tokens[pos] != "]":
            i, pos = _parse_one(tokens, pos)
            items.append(i)
        if pos >= len(tokens):
            raise ParseError("missing ]")
        return Sequence(tuple(items)), pos + 1
    if tok in ")]":
        raise ParseError("unexpected %s" % tok)
    return _parse_atom(tok), pos + 1


def parse(text: str) -> Value:
    tokens = list(_tokenize(text))
    v, pos = _parse_one(tokens, 0)
    if pos != len(tokens):
        raise ParseError("trailing input after value")
    return v


def parse_all(text: str) -> list:
    tokens = list(_tokenize(text))
    out, pos = [], 0
    while pos < len(tokens):
        v, pos = _parse_one(tokens, pos)
        out.append(v)
    return out
