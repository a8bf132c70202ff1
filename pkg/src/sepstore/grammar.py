"""Concrete grammar: lexer, parser and pretty printer.

Lexemes: invariant extension is `(*)`, the later-rank modality is `<>`,
triples are `{P} e {Q}`, points-to is `|->`, separating conjunction `*`,
command quoting `'C'`.  `#` starts a line comment.

Precedence, loosest to tightest: `=>`, `\\/`, `/\\`, `*`, `(*)`, `<>`;
binary connectives associate to the left; quantifiers and `mu` extend
maximally to the right.  Inside assertions a top-level `*` always means
separating conjunction, so integer multiplication there must be
parenthesised, e.g. `(x * y) = z`.

Sugar expanded at parse time:
  e |-> _          ==  exists x. e |-> x          (fresh x)
  e |-> {A}_{B}    ==  exists k. e |-> k /\\ {A}k{B}   (fresh k)
"""

from __future__ import annotations

import re

from .syntax import (
    And, Assign, BinOp, Command, ContractivenessError, Diamond, Emp, EvalAt,
    Exists, Eq, FalseA, Forall, Free, If, Implies, IntLit, LetDeref, LetNew,
    Leq, Mu, Or, PointsTo, Quote, RelVar, Seq, Skip, Star, Tensor, Triple,
    TrueA, ValueLit, Var, contractive_in, free_vars, fresh_name,
)

KEYWORDS = {
    "skip", "let", "in", "eval", "new", "free", "if", "then", "else",
    "true", "false", "emp", "forall", "exists", "mu",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>\(\*\)|\|->|:=|<=|=>|<>|/\\|\\/|[;=()\[\]{},.'+\-*])
""", re.VERBOSE)


class ParseError(Exception):
    def __init__(self, position, expected, found=None):
        self.position = position
        self.expected = expected
        self.found = found
        what = f", found {found!r}" if found is not None else ""
        super().__init__(f"at offset {position}: expected {expected}{what}")


def tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(pos, "a token", text[pos])
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        tokens.append((m.lastgroup, m.group(), m.start()))
    tokens.append(("eof", "", n))
    return tokens


class Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0
        # every identifier in the input, so generated names never clash
        self.used_names = {t[1] for t in self.tokens if t[0] == "ident"}
        self._fresh_counter = 0

    # --- token plumbing

    def peek(self, ahead=0):
        i = min(self.pos + ahead, len(self.tokens) - 1)
        return self.tokens[i]

    def at(self, *texts):
        return self.peek()[1] in texts and self.peek()[0] != "eof"

    def at_kind(self, kind):
        return self.peek()[0] == kind

    def advance(self):
        tok = self.tokens[self.pos]
        if tok[0] != "eof":
            self.pos += 1
        return tok

    def expect(self, text):
        tok = self.peek()
        if tok[1] != text or tok[0] == "eof":
            raise ParseError(tok[2], repr(text), tok[1] or "end of input")
        return self.advance()

    def expect_ident(self):
        tok = self.peek()
        if tok[0] != "ident" or tok[1] in KEYWORDS or tok[1] == "_":
            raise ParseError(tok[2], "an identifier", tok[1] or "end of input")
        return self.advance()[1]

    def fresh(self):
        while True:
            name = f"_{self._fresh_counter}"
            self._fresh_counter += 1
            if name not in self.used_names:
                self.used_names.add(name)
                return name

    # --- expressions

    def parse_expr(self, allow_mul=True):
        left = self.parse_term(allow_mul)
        while self.at("+", "-"):
            op = self.advance()[1]
            left = BinOp(op, left, self.parse_term(allow_mul))
        return left

    def parse_term(self, allow_mul=True):
        left = self.parse_expr_atom()
        while allow_mul and self.at("*"):
            self.advance()
            left = BinOp("*", left, self.parse_expr_atom())
        return left

    def parse_expr_atom(self):
        tok = self.peek()
        if tok[0] == "int":
            self.advance()
            return IntLit(int(tok[1]))
        if tok[1] == "-":
            self.advance()
            inner = self.parse_expr_atom()
            if isinstance(inner, IntLit):
                return IntLit(-inner.value)
            return BinOp("-", IntLit(0), inner)
        if tok[0] == "ident" and tok[1] not in KEYWORDS and tok[1] != "_":
            self.advance()
            return Var(tok[1])
        if tok[1] == "'":
            self.advance()
            body = self.parse_cmd()
            self.expect("'")
            return Quote(body)
        if tok[1] == "(":
            self.advance()
            e = self.parse_expr(allow_mul=True)
            self.expect(")")
            return e
        raise ParseError(tok[2], "an expression", tok[1] or "end of input")

    # --- commands

    def parse_cmd(self):
        left = self.parse_cmd_atom()
        while self.at(";"):
            self.advance()
            left = Seq(left, self.parse_cmd_atom())
        return left

    def parse_cmd_atom(self):
        tok = self.peek()
        if tok[1] == "skip":
            self.advance()
            return Skip()
        if tok[1] == "[":
            self.advance()
            target = self.parse_expr()
            self.expect("]")
            self.expect(":=")
            return Assign(target, self.parse_expr())
        if tok[1] == "let":
            self.advance()
            var = self.expect_ident()
            self.expect("=")
            if self.at("["):
                self.advance()
                addr = self.parse_expr()
                self.expect("]")
                self.expect("in")
                return LetDeref(var, addr, self.parse_cmd())
            self.expect("new")
            inits = [self.parse_expr()]
            while self.at(","):
                self.advance()
                inits.append(self.parse_expr())
            self.expect("in")
            return LetNew(var, tuple(inits), self.parse_cmd())
        if tok[1] == "eval":
            self.advance()
            self.expect("[")
            addr = self.parse_expr()
            self.expect("]")
            return EvalAt(addr)
        if tok[1] == "free":
            self.advance()
            self.expect("(")
            addr = self.parse_expr()
            self.expect(")")
            return Free(addr)
        if tok[1] == "if":
            self.advance()
            self.expect("(")
            lhs = self.parse_expr()
            self.expect("=")
            rhs = self.parse_expr()
            self.expect(")")
            self.expect("then")
            then = self.parse_cmd_atom()
            self.expect("else")
            els = self.parse_cmd_atom()
            return If(lhs, rhs, then, els)
        if tok[1] == "(":
            self.advance()
            cmd = self.parse_cmd()
            self.expect(")")
            return cmd
        raise ParseError(tok[2], "a command", tok[1] or "end of input")

    # --- assertions

    def parse_asn(self):
        left = self.parse_or()
        while self.at("=>"):
            self.advance()
            left = Implies(left, self.parse_or())
        return left

    def parse_or(self):
        left = self.parse_and()
        while self.at("\\/"):
            self.advance()
            left = Or(left, self.parse_and())
        return left

    def parse_and(self):
        left = self.parse_star()
        while self.at("/\\"):
            self.advance()
            left = And(left, self.parse_star())
        return left

    def parse_star(self):
        left = self.parse_tensor()
        while self.at("*"):
            self.advance()
            left = Star(left, self.parse_tensor())
        return left

    def parse_tensor(self):
        left = self.parse_prefix()
        while self.at("(*)"):
            self.advance()
            left = Tensor(left, self.parse_prefix())
        return left

    def parse_prefix(self):
        if self.at("<>"):
            self.advance()
            return Diamond(self.parse_prefix())
        return self.parse_asn_atom()

    def parse_asn_atom(self):
        tok = self.peek()
        if tok[1] == "true":
            self.advance()
            return TrueA()
        if tok[1] == "false":
            self.advance()
            return FalseA()
        if tok[1] == "emp":
            self.advance()
            return Emp()
        if tok[1] in ("forall", "exists"):
            self.advance()
            var = self.expect_ident()
            self.expect(".")
            body = self.parse_asn()
            return (Forall if tok[1] == "forall" else Exists)(var, body)
        if tok[1] == "mu":
            self.advance()
            relvar = self.expect_ident()
            params = []
            if self.at("("):
                self.advance()
                params.append(self.expect_ident())
                while self.at(","):
                    self.advance()
                    params.append(self.expect_ident())
                self.expect(")")
            self.expect(".")
            body = self.parse_asn()
            args = tuple(Var(p) for p in params)
            return Mu(relvar, tuple(params), body, args)
        if tok[1] == "{":
            self.advance()
            pre = self.parse_asn()
            self.expect("}")
            code = self.parse_expr()
            self.expect("{")
            post = self.parse_asn()
            self.expect("}")
            return Triple(pre, code, post)
        if tok[0] == "ident" and tok[1] not in KEYWORDS and tok[1] != "_" \
                and self.peek(1)[1] == "(" and self.peek(1)[0] == "sym":
            # relation variable applied to arguments
            name = self.advance()[1]
            self.advance()
            args = [self.parse_expr()]
            while self.at(","):
                self.advance()
                args.append(self.parse_expr())
            self.expect(")")
            return RelVar(name, tuple(args))
        if tok[1] == "(":
            saved = self.pos
            try:
                self.advance()
                asn = self.parse_asn()
                self.expect(")")
            except ParseError:
                self.pos = saved
            else:
                if isinstance(asn, Mu) and asn.params \
                        and asn.args == tuple(Var(p) for p in asn.params) \
                        and self.at("("):
                    self.advance()
                    args = [self.parse_expr()]
                    while self.at(","):
                        self.advance()
                        args.append(self.parse_expr())
                    self.expect(")")
                    if len(args) != len(asn.params):
                        raise ParseError(
                            tok[2],
                            f"{len(asn.params)} arguments for mu "
                            f"{asn.relvar}", f"{len(args)} arguments")
                    return Mu(asn.relvar, asn.params, asn.body, tuple(args))
                if not self._continues_expr():
                    return asn
                self.pos = saved
        # an expression-headed atom: comparison, points-to, or relvar use
        e = self.parse_expr(allow_mul=False)
        if self.at("="):
            self.advance()
            return Eq(e, self.parse_expr(allow_mul=False))
        if self.at("<="):
            self.advance()
            return Leq(e, self.parse_expr(allow_mul=False))
        if self.at("|->"):
            self.advance()
            return self.parse_points_to_rhs(e)
        if isinstance(e, Var):
            return RelVar(e.name, ())
        raise ParseError(self.peek()[2], "'=', '<=' or '|->' after expression",
                         self.peek()[1] or "end of input")

    def _continues_expr(self):
        # after a successfully parsed parenthesised assertion, these tokens
        # mean the parens actually enclosed an arithmetic expression
        return self.at("=", "<=", "|->", "+", "-")

    def parse_points_to_rhs(self, addr):
        if self.at("_"):
            self.advance()
            x = self.fresh()
            return Exists(x, PointsTo(addr, Var(x)))
        if self.at("{"):
            self.advance()
            pre = self.parse_asn()
            self.expect("}")
            self.expect("_")
            self.expect("{")
            post = self.parse_asn()
            self.expect("}")
            k = self.fresh()
            return Exists(k, And(PointsTo(addr, Var(k)),
                                 Triple(pre, Var(k), post)))
        return PointsTo(addr, self.parse_expr(allow_mul=False))


def _check_contractive(ast, path=""):
    t = type(ast)
    if t is Mu:
        if not contractive_in(ast.body, ast.relvar):
            raise ContractivenessError(ast.relvar, ast.body)
    for name in getattr(t, "__dataclass_fields__", {}):
        child = getattr(ast, name)
        if hasattr(type(child), "__dataclass_fields__"):
            _check_contractive(child)
        elif isinstance(child, tuple):
            for c in child:
                if hasattr(type(c), "__dataclass_fields__"):
                    _check_contractive(c)


def _rename_apart(ast, seen, rseen):
    """Rename any binder that shadows an enclosing binder of the same name."""
    t = type(ast)
    if t in (LetDeref, LetNew, Forall, Exists):
        var = ast.var
        body = ast.body
        if var in seen:
            fv = free_vars(body)[0]
            new = fresh_name(var, seen | fv | {var})
            from .syntax import substitute
            body = substitute(body, {var: Var(new)})
            var = new
        body = _rename_apart(body, seen | {var}, rseen)
        if t is LetDeref:
            return LetDeref(var, _rename_apart(ast.addr, seen, rseen), body)
        if t is LetNew:
            inits = tuple(_rename_apart(e, seen, rseen) for e in ast.inits)
            return LetNew(var, inits, body)
        return t(var, body)
    if t is Mu:
        from .syntax import substitute
        relvar, params, body = ast.relvar, list(ast.params), ast.body
        if relvar in rseen:
            new = fresh_name(relvar, rseen | free_vars(body)[1] | {relvar})
            body = substitute(body, rel_map={
                relvar: (tuple(params), RelVar(new, tuple(Var(p) for p in params)))})
            relvar = new
        for i, p in enumerate(params):
            if p in seen:
                fv = free_vars(body)[0]
                new = fresh_name(p, seen | fv | set(params) | {p})
                body = substitute(body, {p: Var(new)})
                params[i] = new
        body = _rename_apart(body, seen | set(params), rseen | {relvar})
        args = tuple(_rename_apart(e, seen, rseen) for e in ast.args)
        return Mu(relvar, tuple(params), body, args)
    fields = getattr(t, "__dataclass_fields__", None)
    if not fields:
        return ast
    changed = {}
    for name in fields:
        child = getattr(ast, name)
        if hasattr(type(child), "__dataclass_fields__"):
            new = _rename_apart(child, seen, rseen)
            if new is not child:
                changed[name] = new
        elif isinstance(child, tuple):
            new = tuple(
                _rename_apart(c, seen, rseen)
                if hasattr(type(c), "__dataclass_fields__") else c
                for c in child)
            if new != child:
                changed[name] = new
    if changed:
        from dataclasses import replace
        return replace(ast, **changed)
    return ast


def parse(text: str, kind: str):
    """Parse a program, assertion or expression from concrete syntax."""
    p = Parser(text)
    if kind == "program":
        ast = p.parse_cmd()
    elif kind == "assertion":
        ast = p.parse_asn()
    elif kind == "expr":
        ast = p.parse_expr()
    else:
        raise ValueError(f"unknown kind {kind!r}")
    tok = p.peek()
    if tok[0] != "eof":
        raise ParseError(tok[2], "end of input", tok[1])
    _check_contractive(ast)
    return _rename_apart(ast, set(), set())


# ---------------------------------------------------------------------------
# printing


def pretty_expr(e, prec=0) -> str:
    t = type(e)
    if t is IntLit:
        return str(e.value)
    if t is Var:
        return e.name
    if t is BinOp:
        if e.op == "*":
            # inside assertions a bare * is separating conjunction, so
            # multiplication is always printed parenthesised
            return f"({pretty_expr(e.left, 2)} * {pretty_expr(e.right, 3)})"
        s = f"{pretty_expr(e.left, 1)} {e.op} {pretty_expr(e.right, 2)}"
        return f"({s})" if prec >= 2 else s
    if t is Quote:
        return f"'{pretty_cmd(e.body)}'"
    if t is ValueLit:
        from .interp import format_value
        return format_value(e.value)
    raise TypeError(f"not an expression: {e!r}")


def _cmd_atom(c, wrap_right_open=False) -> str:
    """Print a command in a position requiring a sequencing atom."""
    s = pretty_cmd(c)
    t = type(c)
    if t is Seq or (wrap_right_open and t in (LetDeref, LetNew, If)):
        return f"({s})"
    return s


def pretty_cmd(c) -> str:
    t = type(c)
    if t is Skip:
        return "skip"
    if t is Assign:
        return f"[{pretty_expr(c.target)}] := {pretty_expr(c.source)}"
    if t is LetDeref:
        return f"let {c.var} = [{pretty_expr(c.addr)}] in {pretty_cmd(c.body)}"
    if t is LetNew:
        inits = ", ".join(pretty_expr(e) for e in c.inits)
        return f"let {c.var} = new {inits} in {pretty_cmd(c.body)}"
    if t is EvalAt:
        return f"eval [{pretty_expr(c.addr)}]"
    if t is Free:
        return f"free({pretty_expr(c.addr)})"
    if t is Seq:
        return f"{_cmd_atom(c.first, wrap_right_open=True)} ; " \
               f"{_cmd_atom(c.second)}"
    if t is If:
        return f"if ({pretty_expr(c.lhs)} = {pretty_expr(c.rhs)}) " \
               f"then {_cmd_atom(c.then, wrap_right_open=True)} " \
               f"else {_cmd_atom(c.els)}"
    raise TypeError(f"not a command: {c!r}")


_BIN_PREC = {Implies: (1, "=>"), Or: (2, "\\/"), And: (3, "/\\"),
             Star: (4, "*"), Tensor: (5, "(*)")}


def pretty_asn(a, prec=0) -> str:
    t = type(a)
    if t is TrueA:
        return "true"
    if t is FalseA:
        return "false"
    if t is Emp:
        return "emp"
    if t in _BIN_PREC:
        p, sym = _BIN_PREC[t]
        s = f"{pretty_asn(a.left, p)} {sym} {pretty_asn(a.right, p + 1)}"
        return f"({s})" if prec > p else s
    if t in (Forall, Exists):
        head = "forall" if t is Forall else "exists"
        s = f"{head} {a.var}. {pretty_asn(a.body, 0)}"
        return f"({s})" if prec > 0 else s
    if t is Mu:
        params = f"({', '.join(a.params)})" if a.params else ""
        s = f"mu {a.relvar}{params}. {pretty_asn(a.body, 0)}"
        if a.args and a.args != tuple(Var(p) for p in a.params):
            args = ", ".join(pretty_expr(e) for e in a.args)
            return f"({s})({args})"
        return f"({s})" if prec > 0 else s
    if t is Diamond:
        return f"<> {pretty_asn(a.body, 6)}"
    if t is Eq:
        return f"{pretty_expr(a.left)} = {pretty_expr(a.right)}"
    if t is Leq:
        return f"{pretty_expr(a.left)} <= {pretty_expr(a.right)}"
    if t is PointsTo:
        return f"{pretty_expr(a.addr)} |-> {pretty_expr(a.value, 2)}"
    if t is Triple:
        return f"{{{pretty_asn(a.pre, 0)}}} {pretty_expr(a.code)} " \
               f"{{{pretty_asn(a.post, 0)}}}"
    if t is RelVar:
        if a.args:
            return f"{a.name}({', '.join(pretty_expr(e) for e in a.args)})"
        return a.name
    raise TypeError(f"not an assertion: {a!r}")


def pretty(ast) -> str:
    """Render an AST back to concrete syntax; parse(pretty(a)) == a."""
    t = type(ast)
    if t in (IntLit, Var, BinOp, Quote, ValueLit):
        return pretty_expr(ast)
    if t in (Assign, LetDeref, EvalAt, LetNew, Free, Skip, Seq, If):
        return pretty_cmd(ast)
    return pretty_asn(ast)
