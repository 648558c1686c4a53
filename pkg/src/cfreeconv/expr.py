"""Expression language for measures and convolutions.

Grammar::

    expr := call
    call := IDENT "(" args? ")"
    args := arg ("," arg)*
    arg  := NUMBER | expr

Leaves are the families ``delta, bernoulli, semicircle, arcsine, gaussian,
freepoisson``; ``cconv, bconv, fconv`` fold measures classically, booleanly
and freely, ``pair(mu, nu)`` builds a pair, ``cfconv`` folds pairs and
``affine(x, a, b)`` maps ``x`` to ``dx(a t + b)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .convolution import CFreePair, boolean_fold, cfree_fold, classical_conv, free_fold
from .errors import PreconditionError
from .measure import DEFAULT_GRID_N, AffineMap, make_family, push_affine

FAMILIES = ("delta", "bernoulli", "semicircle", "arcsine", "gaussian", "freepoisson")
# name -> (argument kinds, min count, max count); None for variadic
_SIGS = {
    "delta": ("num", 0, 1),
    "bernoulli": ("num", 0, 1),
    "semicircle": ("num", 0, 2),
    "arcsine": ("num", 0, 2),
    "gaussian": ("num", 0, 2),
    "freepoisson": ("num", 0, 2),
    "cconv": ("measure", 2, None),
    "bconv": ("measure", 2, None),
    "fconv": ("measure", 2, None),
    "cfconv": ("pair", 2, None),
    "pair": ("measure", 2, 2),
    "affine": ("affine", 3, 3),
}
IDENTS = tuple(_SIGS)


class ParseError(PreconditionError):
    def __init__(self, message: str, line: int, col: int, source: str = ""):
        super().__init__(f"line {line}, column {col}: {message}")
        self.message = message
        self.line = line
        self.col = col
        self.source = source

    def caret(self) -> str:
        lines = self.source.split("\n")
        if not 1 <= self.line <= len(lines):
            return ""
        return lines[self.line - 1] + "\n" + " " * (self.col - 1) + "^"


@dataclass(frozen=True)
class Num:
    value: float
    line: int
    col: int


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple
    line: int
    col: int

    @property
    def kind(self) -> str:
        return "pair" if self.name in ("pair", "cfconv") or (
            self.name == "affine" and self.args[0].kind == "pair") else "measure"


_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<punct>[(),])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1, src)
        kind = m.lastgroup
        text = m.group()
        if kind == "ws":
            for k, ch in enumerate(text):
                if ch == "\n":
                    line += 1
                    line_start = pos + k + 1
        else:
            toks.append(_Tok(kind if kind != "punct" else text, text, line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = tokenize(src)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        raise ParseError(msg, tok.line, tok.col, self.src)

    def expect(self, kind: str) -> _Tok:
        tok = self.peek()
        if tok.kind != kind:
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            self.error(f"expected {kind!r}, found {found}")
        self.i += 1
        return tok

    def call(self) -> Call:
        tok = self.peek()
        if tok.kind != "ident":
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            self.error(f"expected an identifier, found {found}")
        if tok.text not in _SIGS:
            self.error(f"unknown identifier {tok.text!r}")
        self.i += 1
        self.expect("(")
        args = []
        if self.peek().kind != ")":
            args.append(self.arg())
            while self.peek().kind == ",":
                self.i += 1
                args.append(self.arg())
        self.expect(")")
        node = Call(tok.text, tuple(args), tok.line, tok.col)
        _check_call(node, self.src)
        return node

    def arg(self):
        tok = self.peek()
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text), tok.line, tok.col)
        return self.call()

    def parse(self) -> Call:
        node = self.call()
        tok = self.peek()
        if tok.kind != "eof":
            self.error(f"unexpected {tok.text!r} after expression")
        return node


def _kind(a) -> str:
    return "num" if isinstance(a, Num) else a.kind


def _check_call(node: Call, src: str):
    want, lo, hi = _SIGS[node.name]
    n = len(node.args)
    if n < lo or (hi is not None and n > hi):
        span = f"{lo}" if lo == hi else f"{lo}..{hi}" if hi is not None else f"at least {lo}"
        raise ParseError(f"{node.name} takes {span} arguments, got {n}", node.line, node.col, src)
    if want == "affine":
        kinds = [("measure", "pair"), ("num",), ("num",)]
    else:
        kinds = [(want,)] * n
    for a, ok in zip(node.args, kinds):
        if _kind(a) not in ok:
            raise ParseError(f"{node.name} expects {' or '.join(ok)} here, got {_kind(a)}",
                             a.line, a.col, src)


def parse(src: str) -> Call:
    return _Parser(src).parse()


def _fmt_num(v: float) -> str:
    return repr(float(v))


def to_source(node) -> str:
    """Canonical text of a parsed expression; ``parse(to_source(e)) == e``
    up to positions."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    return f"{node.name}(" + ", ".join(to_source(a) for a in node.args) + ")"


def strip_positions(node):
    if isinstance(node, Num):
        return ("num", node.value)
    return (node.name, tuple(strip_positions(a) for a in node.args))


@dataclass(frozen=True)
class Settings:
    grid_n: int = DEFAULT_GRID_N


class EvaluationError(Exception):
    """Wraps a library error with the path of the failing subexpression."""

    def __init__(self, path: str, cause: Exception):
        super().__init__(f"in {path}: {cause}")
        self.path = path
        self.cause = cause


def evaluate(node: Call, settings: Settings = Settings()):
    """Measure or :class:`CFreePair` denoted by ``node``."""
    return _eval(node, settings, node.name)


def _groups(items):
    # identical subexpressions evaluate to one object and fold as one group
    seen: dict[int, list] = {}
    for it in items:
        seen.setdefault(id(it), [it, 0])[1] += 1
    return [tuple(v) for v in seen.values()]


def _eval(node: Call, s: Settings, path: str, cache=None):
    cache = {} if cache is None else cache
    key = strip_positions(node)
    if key in cache:
        return cache[key]
    args = []
    for k, a in enumerate(node.args):
        if isinstance(a, Num):
            args.append(a.value)
        else:
            args.append(_eval(a, s, f"{path}.{a.name}[{k}]", cache))
    try:
        out = _apply(node.name, args, s)
    except EvaluationError:
        raise
    except Exception as e:
        raise EvaluationError(f"{path} (line {node.line}, column {node.col})", e) from e
    cache[key] = out
    return out


def _apply(name: str, args: list, s: Settings):
    if name in FAMILIES:
        return make_family(name, args, s.grid_n)
    if name == "pair":
        return CFreePair(args[0], args[1])
    if name == "affine":
        x, a, b = args
        amap = AffineMap(a, b)
        if isinstance(x, CFreePair):
            return CFreePair(push_affine(x.mu, amap), push_affine(x.nu, amap))
        return push_affine(x, amap)
    if name == "cconv":
        out = args[0]
        for m in args[1:]:
            out = classical_conv(out, m)
        return out
    if name == "bconv":
        return boolean_fold(_groups(args), grid_n=s.grid_n)
    if name == "fconv":
        return free_fold(_groups(args), grid_n=s.grid_n)
    if name == "cfconv":
        groups = _groups(args)
        return cfree_fold([(p.mu, p.nu, n) for p, n in groups], grid_n=s.grid_n)
    raise PreconditionError(f"unknown identifier {name!r}")  # unreachable after parsing
