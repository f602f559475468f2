"""Litmus file format: declarations, PIMP thread bodies and expectations.

Example::

    litmus sb;
    mem { x = 0; y = 0; r0 = 0; r1 = 0; }
    shared rw { x; y; }
    owns P0 { r0; }
    owns P1 { r1; }
    thread P0 { [x]v := 1; fence; [r0] := [y]v; }
    thread P1 { [y]v := 1; fence; [r1] := [x]v; }
    observe { r0; r1; }
    forbidden vm (r0 == 0 && r1 == 0);

Addresses are numbered in declaration order of the `mem` block.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .core import BINOPS, Config, FrozenMap, GhostState, Memory, Thread, apply_binop, apply_unop, is_true
from .pimp import (
    CAS,
    NO_ADDRS,
    NO_ANN_EXPRS,
    SKIP,
    AddrSet,
    AnnExprs,
    Assign,
    Binop,
    Cond,
    Const,
    Mem,
    ProgramState,
    Seq,
    SFence,
    SGhost,
    Skip,
    Unop,
    While,
    seq,
)


class ParseError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


class DeclError(ValueError):
    """The header declarations break the ownership discipline."""


@dataclass(frozen=True)
class Expectation:
    kind: str  # "allowed" or "forbidden"
    machine: str  # "sb" or "vm"
    pred: object


@dataclass(frozen=True)
class LitmusFile:
    name: str
    names: tuple[str, ...]
    init: tuple[int, ...]
    shared_rw: frozenset = frozenset()
    shared_ro: frozenset = frozenset()
    owns: tuple[tuple[str, frozenset], ...] = ()
    threads: tuple[tuple[str, object], ...] = ()
    observe: tuple[int, ...] | None = None
    expect_safe: bool | None = None
    expect_sc: bool | None = None
    expectations: tuple[Expectation, ...] = ()

    def address(self, name: str) -> int:
        return self.names.index(name)

    def thread_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.threads)

    def observed(self) -> tuple[int, ...]:
        return self.observe if self.observe is not None else tuple(range(len(self.names)))

    def owned_by(self, thread: str) -> frozenset:
        for n, s in self.owns:
            if n == thread:
                return s
        return frozenset()

    def initial(self) -> Config:
        """Empty buffers, clean, nothing acquired, no temporaries, counter 0."""
        threads = tuple(
            Thread(ProgramState(body, 0), ghost=GhostState(False, self.owned_by(n), frozenset()))
            for n, body in self.threads
        )
        shared = FrozenMap({**{a: True for a in self.shared_rw}, **{a: False for a in self.shared_ro}})
        return Config(threads, shared, Memory(enumerate(self.init)))


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>//[^\n]*)"
    r"|(?P<int>\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>:=|->|==|!=|<=|>=|&&|\|\||[{}()\[\];,<>+\-*!=])"
)


@dataclass(frozen=True)
class Token:
    kind: str  # int, ident, op, eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out = []
    line, start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line, start = line + 1, m.end()
        elif kind in ("int", "ident", "op"):
            out.append(Token(kind, m.group(), line, pos - start + 1))
        pos = m.end()
    out.append(Token("eof", "", line, pos - start + 1))
    return out


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_LEVELS = (("||",), ("&&",), ("==", "!="), ("<", "<=", ">", ">="), ("+", "-"), ("*",))
KEYWORDS = {"if", "else", "while", "fence", "skip", "ghost", "cas", "addr"}


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.pos = 0
        self.names: list[str] = []
        self.addr_of: dict[str, int] = {}
        # when set, bare names denote observed values
        self.bare_names = False

    # -- token helpers ------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "ident") and self.tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.pos += 1
        return t

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            raise self.error(f"expected a name, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.pos += 1
        return t

    def integer(self) -> int:
        neg = self.accept("-")
        if self.tok.kind != "int":
            raise self.error("expected an integer")
        v = int(self.tok.text)
        self.pos += 1
        return -v if neg else v

    def addr(self, tok: Token) -> int:
        try:
            return self.addr_of[tok.text]
        except KeyError:
            raise ParseError(f"undeclared location {tok.text!r}", tok.line, tok.col) from None

    def name_list(self) -> list[Token]:
        """`{ a; b, c }`: names separated by ';' or ','."""
        self.expect("{")
        out = []
        while not self.accept("}"):
            out.append(self.ident())
            if not (self.accept(";") or self.accept(",")):
                self.expect("}")
                break
        return out

    # -- file ---------------------------------------------------------------

    def file(self) -> LitmusFile:
        name = ""
        if self.accept("litmus"):
            name = self.ident().text
            self.expect(";")
        init: list[int] = []
        rw: set[int] = set()
        ro: set[int] = set()
        owns: dict[str, frozenset] = {}
        owns_tok: dict[str, Token] = {}
        threads: list[tuple[str, object]] = []
        observe = None
        expect_safe = expect_sc = None
        exps: list[Expectation] = []
        while self.tok.kind != "eof":
            t = self.tok
            if self.accept("mem"):
                self.expect("{")
                while not self.accept("}"):
                    n = self.ident()
                    if n.text in self.addr_of:
                        raise ParseError(f"location {n.text!r} declared twice", n.line, n.col)
                    if n.text in KEYWORDS:
                        raise ParseError(f"{n.text!r} is reserved", n.line, n.col)
                    v = 0
                    if self.accept("="):
                        v = self.integer()
                    self.expect(";")
                    self.addr_of[n.text] = len(self.names)
                    self.names.append(n.text)
                    init.append(v)
            elif self.accept("shared"):
                mode = self.ident()
                if mode.text not in ("rw", "ro"):
                    raise ParseError("expected 'rw' or 'ro'", mode.line, mode.col)
                (rw if mode.text == "rw" else ro).update(self.addr(n) for n in self.name_list())
            elif self.accept("owns"):
                th = self.ident()
                if th.text in owns:
                    raise ParseError(f"ownership of {th.text!r} declared twice", th.line, th.col)
                owns[th.text] = frozenset(self.addr(n) for n in self.name_list())
                owns_tok[th.text] = th
            elif self.accept("thread"):
                th = self.ident()
                if th.text in dict(threads):
                    raise ParseError(f"thread {th.text!r} declared twice", th.line, th.col)
                threads.append((th.text, self.block()))
            elif self.accept("observe"):
                observe = tuple(self.addr(n) for n in self.name_list())
            elif self.accept("expect"):
                w = self.ident()
                table = {"safe": ("safe", True), "unsafe": ("safe", False), "sc": ("sc", True)}
                if w.text == "not":
                    self.expect("-")
                    self.expect("sc")
                    expect_sc = False
                elif w.text in table:
                    which, val = table[w.text]
                    if which == "safe":
                        expect_safe = val
                    else:
                        expect_sc = val
                else:
                    raise ParseError("expected safe, unsafe, sc or not-sc", w.line, w.col)
                self.expect(";")
            elif self.at("allowed") or self.at("forbidden"):
                kind = self.ident().text
                m = self.ident()
                if m.text not in ("sb", "vm"):
                    raise ParseError("expected machine 'sb' or 'vm'", m.line, m.col)
                self.expect("(")
                self.bare_names = True
                pred = self.expr()
                self.bare_names = False
                self.expect(")")
                self.expect(";")
                exps.append(Expectation(kind, m.text, pred))
            else:
                raise self.error(f"unexpected {t.text!r} at top level")
        for th, tok in owns_tok.items():
            if th not in dict(threads):
                raise DeclError(f"{tok.line}:{tok.col}: ownership declared for unknown thread {th!r}")
        lf = LitmusFile(
            name=name,
            names=tuple(self.names),
            init=tuple(init),
            shared_rw=frozenset(rw),
            shared_ro=frozenset(ro),
            owns=tuple((n, owns[n]) for n, _ in threads if n in owns),
            threads=tuple(threads),
            observe=observe,
            expect_safe=expect_safe,
            expect_sc=expect_sc,
            expectations=tuple(exps),
        )
        check_declarations(lf)
        return lf

    # -- statements ---------------------------------------------------------

    def block(self):
        self.expect("{")
        stmts = []
        while not self.accept("}"):
            stmts.append(self.stmt())
        return seq(*stmts)

    def target(self):
        self.expect("[")
        if self.accept("("):
            a = self.expr()
            self.expect(")")
        else:
            a = Const(self.addr(self.ident()))
        self.expect("]")
        return a, self.accept("v")

    def addr_set(self, allow_target: bool) -> AddrSet:
        lits, target = set(), False
        for n in self.name_list():
            if n.text == "addr":
                if not allow_target:
                    raise ParseError("'addr' is only meaningful on writes", n.line, n.col)
                target = True
            else:
                lits.add(self.addr(n))
        return AddrSet(frozenset(lits), target)

    def annotation(self) -> AnnExprs:
        if not self.accept("{"):
            return NO_ANN_EXPRS
        parts: dict[str, AddrSet] = {}
        while not self.accept("}"):
            k = self.ident()
            if k.text not in ("A", "L", "R", "W") or k.text in parts:
                raise ParseError("expected one of A, L, R, W (each at most once)", k.line, k.col)
            parts[k.text] = self.addr_set(True)
        return AnnExprs(*(parts.get(k, NO_ADDRS) for k in "ALRW"))

    def stmt(self):
        if self.at("{"):
            return self.block()
        if self.accept("skip"):
            self.expect(";")
            return SKIP
        if self.accept("fence"):
            self.expect(";")
            return SFence()
        if self.accept("ghost"):
            parts = {}
            while self.at("A") or self.at("L"):
                k = self.ident().text
                if k in parts:
                    raise self.error(f"{k} given twice")
                parts[k] = self.addr_set(False)
            self.expect(";")
            return SGhost(parts.get("A", NO_ADDRS), parts.get("L", NO_ADDRS))
        if self.accept("cas"):
            a, vol = self.target()
            if not vol:
                raise self.error("cas targets must be volatile, write [x]v")
            self.expect("(")
            c = self.expr()
            self.expect("->")
            s = self.expr()
            self.expect(")")
            ann = self.annotation()
            self.expect(";")
            return CAS(a, c, s, ann)
        if self.accept("if"):
            self.expect("(")
            c = self.expr()
            self.expect(")")
            then = self.block()
            orelse = self.block() if self.accept("else") else SKIP
            return Cond(c, then, orelse)
        if self.accept("while"):
            self.expect("(")
            c = self.expr()
            self.expect(")")
            return While(c, self.block())
        if self.at("["):
            a, vol = self.target()
            self.expect(":=")
            e = self.expr()
            ann = NO_ANN_EXPRS
            if self.at("{"):
                if not vol:
                    raise self.error("only volatile writes carry annotations")
                ann = self.annotation()
            self.expect(";")
            return Assign(vol, a, e, ann)
        raise self.error(f"expected a statement, found {self.tok.text or 'end of input'!r}")

    # -- expressions --------------------------------------------------------

    def expr(self, level: int = 0):
        if level == len(_LEVELS):
            return self.unary()
        left = self.expr(level + 1)
        while self.tok.kind == "op" and self.tok.text in _LEVELS[level]:
            op = self.tok.text
            self.pos += 1
            left = Binop(op, left, self.expr(level + 1))
        return left

    def unary(self):
        if self.at("-") and self.toks[self.pos + 1].kind == "int":
            return Const(self.integer())
        if self.at("-") or self.at("!"):
            op = self.tok.text
            self.pos += 1
            return Unop(op, self.unary())
        return self.primary()

    def primary(self):
        t = self.tok
        if t.kind == "int":
            self.pos += 1
            return Const(int(t.text))
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.at("[") and self.bare_names:
            raise self.error("predicates name locations directly, without brackets")
        if self.accept("["):
            a = self.addr(self.ident())
            self.expect("]")
            return Mem(self.accept("v"), a)
        if t.kind == "ident" and self.bare_names:
            self.pos += 1
            return Mem(False, self.addr(t))
        raise self.error(f"expected an expression, found {t.text or 'end of input'!r}")


def check_declarations(lf: LitmusFile) -> None:
    """Raise DeclError unless the initial ownership state follows the discipline."""
    seen: dict[int, str] = {}
    for th, owned in lf.owns:
        for a in sorted(owned):
            if a in seen:
                raise DeclError(f"{lf.names[a]} owned by both {seen[a]} and {th}")
            seen[a] = th
    both = lf.shared_rw & lf.shared_ro
    if both:
        raise DeclError(f"{_names(lf, both)} declared both rw and ro")
    owned_ro = lf.shared_ro & set(seen)
    if owned_ro:
        raise DeclError(f"read-only {_names(lf, owned_ro)} must not be owned")
    unowned = set(range(len(lf.names))) - set(seen) - lf.shared_rw - lf.shared_ro
    if unowned:
        raise DeclError(f"unowned {_names(lf, unowned)} must be shared")
    observed = set(lf.observed())
    for e in lf.expectations:
        bad = _pred_addrs(e.pred) - observed
        if bad:
            raise DeclError(f"predicate mentions unobserved {_names(lf, bad)}")


def _names(lf: LitmusFile, addrs) -> str:
    return ", ".join(lf.names[a] for a in sorted(addrs))


def _pred_addrs(e) -> set:
    if isinstance(e, Mem):
        return {e.addr}
    if isinstance(e, Unop):
        return _pred_addrs(e.arg)
    if isinstance(e, Binop):
        return _pred_addrs(e.left) | _pred_addrs(e.right)
    return set()


def parse_litmus(text: str) -> LitmusFile:
    return _Parser(text).file()


def eval_pred(e, values: Mapping[int, int]) -> int:
    """Evaluate a predicate; locations stand for their values in `values`."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Mem):
        return values[e.addr]
    if isinstance(e, Unop):
        return apply_unop(e.op, eval_pred(e.arg, values))
    if isinstance(e, Binop):
        return apply_binop(e.op, eval_pred(e.left, values), eval_pred(e.right, values))
    raise TypeError(f"not a predicate: {e!r}")


def pred_holds(e, observe: Sequence[int], outcome: Sequence[int]) -> bool:
    return is_true(eval_pred(e, dict(zip(observe, outcome))))


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------


@dataclass
class _Printer:
    names: Sequence[str]
    bare: bool = False
    lines: list[str] = field(default_factory=list)

    def expr(self, e) -> str:
        if isinstance(e, Const):
            return str(e.value)
        if isinstance(e, Mem):
            if self.bare:
                return self.names[e.addr]
            return f"[{self.names[e.addr]}]" + ("v" if e.volatile else "")
        if isinstance(e, Unop):
            return f"{e.op}({self.expr(e.arg)})"
        if isinstance(e, Binop):
            assert e.op in BINOPS
            return f"({self.expr(e.left)} {e.op} {self.expr(e.right)})"
        raise TypeError(f"cannot print {e!r}")

    def target(self, a, vol: bool) -> str:
        if isinstance(a, Const) and 0 <= a.value < len(self.names):
            s = f"[{self.names[a.value]}]"
        else:
            s = f"[({self.expr(a)})]"
        return s + ("v" if vol else "")

    def addr_set(self, s: AddrSet) -> str:
        items = [self.names[a] for a in sorted(s.lits)] + (["addr"] if s.target else [])
        return "{" + ", ".join(items) + "}"

    def annotation(self, ann: AnnExprs) -> str:
        parts = [f"{k}{self.addr_set(s)}" for k, s in zip("ALRW", (ann.acquire, ann.local, ann.release, ann.writable))
                 if s != NO_ADDRS]
        return " {" + " ".join(parts) + "}" if parts else ""

    def block(self, s, indent: int) -> None:
        items = []
        while isinstance(s, Seq):
            items.append(s.first)
            s = s.second
        if not isinstance(s, Skip) or items:
            items.append(s)
        for x in items:
            self.stmt(x, indent)

    def emit(self, indent: int, text: str) -> None:
        self.lines.append("    " * indent + text)

    def stmt(self, s, indent: int) -> None:
        if isinstance(s, Skip):
            self.emit(indent, "skip;")
        elif isinstance(s, SFence):
            self.emit(indent, "fence;")
        elif isinstance(s, SGhost):
            parts = [f"{k}{self.addr_set(x)}" for k, x in (("A", s.acquire), ("L", s.local)) if x != NO_ADDRS]
            self.emit(indent, " ".join(["ghost"] + parts) + ";")
        elif isinstance(s, Assign):
            self.emit(indent, f"{self.target(s.addr, s.volatile)} := {self.expr(s.expr)}{self.annotation(s.ann)};")
        elif isinstance(s, CAS):
            self.emit(indent, f"cas {self.target(s.addr, True)} ({self.expr(s.cmp)} -> {self.expr(s.swap)})"
                              f"{self.annotation(s.ann)};")
        elif isinstance(s, Seq):
            self.emit(indent, "{")
            self.block(s, indent + 1)
            self.emit(indent, "}")
        elif isinstance(s, Cond):
            self.emit(indent, f"if ({self.expr(s.cond)}) {{")
            self.block(s.then, indent + 1)
            if isinstance(s.orelse, Skip):
                self.emit(indent, "}")
            else:
                self.emit(indent, "} else {")
                self.block(s.orelse, indent + 1)
                self.emit(indent, "}")
        elif isinstance(s, While):
            self.emit(indent, f"while ({self.expr(s.cond)}) {{")
            self.block(s.body, indent + 1)
            self.emit(indent, "}")
        else:
            raise TypeError(f"cannot print {s!r}")


def format_pred(lf: LitmusFile, pred) -> str:
    return _Printer(lf.names, bare=True).expr(pred)


def print_litmus(lf: LitmusFile) -> str:
    p = _Printer(lf.names)
    out = p.lines

    def names(addrs) -> str:
        return " ".join(f"{lf.names[a]};" for a in addrs)

    if lf.name:
        out.append(f"litmus {lf.name};")
    out.append("mem { " + " ".join(f"{n} = {v};" for n, v in zip(lf.names, lf.init)) + " }")
    if lf.shared_rw:
        out.append(f"shared rw {{ {names(sorted(lf.shared_rw))} }}")
    if lf.shared_ro:
        out.append(f"shared ro {{ {names(sorted(lf.shared_ro))} }}")
    for th, owned in lf.owns:
        out.append(f"owns {th} {{ {names(sorted(owned))} }}")
    for th, body in lf.threads:
        out.append(f"thread {th} {{")
        p.block(body, 1)
        out.append("}")
    if lf.observe is not None:
        out.append(f"observe {{ {names(lf.observe)} }}")
    if lf.expect_safe is not None:
        out.append("expect safe;" if lf.expect_safe else "expect unsafe;")
    if lf.expect_sc is not None:
        out.append("expect sc;" if lf.expect_sc else "expect not-sc;")
    for e in lf.expectations:
        p.bare = True
        out.append(f"{e.kind} {e.machine} ({p.expr(e.pred)});")
        p.bare = False
    return "\n".join(out) + "\n"


def load_litmus(path) -> LitmusFile:
    with open(path, encoding="utf-8") as f:
        return parse_litmus(f.read())
