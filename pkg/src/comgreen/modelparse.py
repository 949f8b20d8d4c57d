"""Textual model language for Hamiltonians and observables.

Expressions are classical polynomials in phase-space symbols (x, p in 1D;
x, y, px, py in 2D) with coefficients built from numbers, named parameters,
the time symbol t, the operators + - * / ^ and the calls sin, cos, tan,
exp, sqrt.  Operator ordering is imposed at lowering time: mixed x*p
monomials mean the symmetrized (Weyl) product, so `x*p` and `p*x` lower
identically.  Parameters are late bound: the lowered coefficients close
over the parameter mapping passed to ``lower``, so one model serves sweeps.

Grammar (precedence climbing, ^ binds tightest, then unary minus, then
* /, then + -; binary - and / associate left, ^ right):

    expr   := term (('+'|'-') term)*
    term   := unary (('*'|'/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'
"""

import math
import re
from dataclasses import dataclass
from typing import Optional, Union

from .errors import LoweringError, ModelSyntaxError, NonlinearityError, UnsupportedDegreeError
from .phasespace import LinearObservable, QuadraticHamiltonian, TimeScalar, ZERO

CALLS = ("sin", "cos", "tan", "exp", "sqrt")

PHASE_SYMBOLS_1D = {"x": 0, "p": 1}
PHASE_SYMBOLS_2D = {"x": 0, "y": 1, "px": 2, "py": 3, "p_x": 2, "p_y": 3}


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Bin:
    op: str
    lhs: "Node"
    rhs: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


Node = Union[Num, Sym, Neg, Bin, Call]


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            bad_at = len(text) - len(stripped)
            raise ModelSyntaxError(f"unexpected character {text[bad_at]!r}", bad_at)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, off = self.peek()
        if kind != "op" or val != op:
            raise ModelSyntaxError(f"expected {op!r}", off)
        return self.next()

    def parse(self):
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ModelSyntaxError(f"unexpected {val!r}", off)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                node = Bin(val, node, self.term())
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                node = Bin(val, node, self.unary())
            else:
                return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.next()
            return Neg(self.unary())
        if kind == "op" and val == "+":
            self.next()
            return self.unary()
        return self.power()

    def power(self):
        node = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.next()
            return Bin("^", node, self.unary())
        return node

    def atom(self):
        kind, val, off = self.next()
        if kind == "num":
            return Num(float(val))
        if kind == "ident":
            nkind, nval, noff = self.peek()
            if nkind == "op" and nval == "(":
                if val not in CALLS:
                    raise ModelSyntaxError(f"unknown function {val!r}", noff)
                self.next()
                arg = self.expr()
                self.expect_op(")")
                return Call(val, arg)
            return Sym(val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "end":
            raise ModelSyntaxError("unexpected end of input", off)
        raise ModelSyntaxError(f"unexpected {val!r}", off)


def parse(text: str) -> Node:
    """Parse an expression; raises ModelSyntaxError with a byte offset."""
    if not text or not text.strip():
        raise ModelSyntaxError("empty expression", 0)
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def print_ast(node: Node) -> str:
    """Canonical printer (minimal parentheses, single spaces around + and -)."""

    def go(n):
        if isinstance(n, Num):
            v = n.value
            return (repr(int(v)) if float(v).is_integer() and abs(v) < 1e16 else repr(v)), _PREC["atom"]
        if isinstance(n, Sym):
            return n.name, _PREC["atom"]
        if isinstance(n, Neg):
            s, p = go(n.arg)
            if p < _PREC["neg"]:
                s = f"({s})"
            return f"-{s}", _PREC["neg"]
        if isinstance(n, Call):
            s, _ = go(n.arg)
            return f"{n.fn}({s})", _PREC["atom"]
        if isinstance(n, Bin):
            lp = _PREC[n.op]
            ls, lq = go(n.lhs)
            rs, rq = go(n.rhs)
            # left associative except ^; right operand needs parens at equal
            # precedence for - / ^, and the left operand for ^.
            if lq < lp or (n.op == "^" and lq == lp):
                ls = f"({ls})"
            if rq < lp or (n.op in "-/" and rq == lp):
                rs = f"({rs})"
            sep = f" {n.op} " if n.op in "+-" else n.op
            return f"{ls}{sep}{rs}", lp
        raise TypeError(n)

    return go(node)[0]


# ---------------------------------------------------------------------------
# coefficient algebra (ASTs in t and parameters)


def _is_num(n, v=None):
    return isinstance(n, Num) and (v is None or n.value == v)


def ast_add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    return Bin("+", a, b)


def ast_mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    return Bin("*", a, b)


def ast_neg(a):
    if _is_num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def ast_div(a, b):
    if _is_num(a, 0.0):
        return Num(0.0)
    if _is_num(b, 1.0):
        return a
    return Bin("/", a, b)


def derivative_t(node: Node) -> Node:
    """Symbolic d/dt of a coefficient AST (no phase-space symbols inside)."""
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Sym):
        return Num(1.0) if node.name == "t" else Num(0.0)
    if isinstance(node, Neg):
        return ast_neg(derivative_t(node.arg))
    if isinstance(node, Bin):
        a, b = node.lhs, node.rhs
        da, db = derivative_t(a), derivative_t(b)
        if node.op == "+":
            return ast_add(da, db)
        if node.op == "-":
            return ast_add(da, ast_neg(db))
        if node.op == "*":
            return ast_add(ast_mul(da, b), ast_mul(a, db))
        if node.op == "/":
            num = ast_add(ast_mul(da, b), ast_neg(ast_mul(a, db)))
            return ast_div(num, Bin("^", b, Num(2.0)))
        if node.op == "^":
            if _contains_t(b):
                raise LoweringError("time-dependent exponents are not supported")
            down = Num(b.value - 1.0) if _is_num(b) else Bin("-", b, Num(1.0))
            return ast_mul(ast_mul(b, Bin("^", a, down)), da)
    if isinstance(node, Call):
        u, du = node.arg, derivative_t(node.arg)
        if node.fn == "sin":
            return ast_mul(Call("cos", u), du)
        if node.fn == "cos":
            return ast_neg(ast_mul(Call("sin", u), du))
        if node.fn == "tan":
            return ast_div(du, Bin("^", Call("cos", u), Num(2.0)))
        if node.fn == "exp":
            return ast_mul(Call("exp", u), du)
        if node.fn == "sqrt":
            return ast_div(du, ast_mul(Num(2.0), Call("sqrt", u)))
    raise TypeError(node)


def eval_ast(node: Node, t, params) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Sym):
        if node.name == "t":
            return float(t)
        try:
            return float(params[node.name])
        except KeyError:
            raise LoweringError(f"unknown parameter {node.name!r} (no value bound)") from None
    if isinstance(node, Neg):
        return -eval_ast(node.arg, t, params)
    if isinstance(node, Bin):
        a = eval_ast(node.lhs, t, params)
        b = eval_ast(node.rhs, t, params)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return a / b
        if node.op == "^":
            return a**b
    if isinstance(node, Call):
        u = eval_ast(node.arg, t, params)
        return getattr(math, node.fn)(u)
    raise TypeError(node)


def _contains_t(node):
    if isinstance(node, Sym):
        return node.name == "t"
    if isinstance(node, Neg):
        return _contains_t(node.arg)
    if isinstance(node, Bin):
        return _contains_t(node.lhs) or _contains_t(node.rhs)
    if isinstance(node, Call):
        return _contains_t(node.arg)
    return False


def collect_symbols(node, out=None):
    out = set() if out is None else out
    if isinstance(node, Sym):
        out.add(node.name)
    elif isinstance(node, Neg):
        collect_symbols(node.arg, out)
    elif isinstance(node, Bin):
        collect_symbols(node.lhs, out)
        collect_symbols(node.rhs, out)
    elif isinstance(node, Call):
        collect_symbols(node.arg, out)
    return out


# ---------------------------------------------------------------------------
# lowering: polynomial in phase-space symbols with coefficient ASTs


def _monomial_name(key, names):
    if not key:
        return "1"
    parts = []
    for idx in sorted(set(key)):
        count = key.count(idx)
        parts.append(names[idx] if count == 1 else f"{names[idx]}^{count}")
    return "*".join(parts)


class _Poly:
    """{sorted index tuple: coefficient AST}, degree capped at 2."""

    def __init__(self, terms=None):
        self.terms = dict(terms or {})

    @classmethod
    def coeff(cls, node):
        return cls({(): node})

    @classmethod
    def symbol(cls, idx):
        return cls({(idx,): Num(1.0)})

    def degree(self):
        return max((len(k) for k in self.terms), default=0)

    def is_coeff(self):
        return self.degree() == 0

    def scalar(self):
        return self.terms.get((), Num(0.0))

    def add(self, other, sign=1.0):
        out = dict(self.terms)
        for k, v in other.terms.items():
            incoming = v if sign > 0 else ast_neg(v)
            out[k] = ast_add(out[k], incoming) if k in out else incoming
        return _Poly(out)

    def neg(self):
        return _Poly({k: ast_neg(v) for k, v in self.terms.items()})

    def mul(self, other, names):
        out = {}
        for ka, va in self.terms.items():
            for kb, vb in other.terms.items():
                key = tuple(sorted(ka + kb))
                if len(key) > 2:
                    raise UnsupportedDegreeError(_monomial_name(key, names))
                prod = ast_mul(va, vb)
                out[key] = ast_add(out[key], prod) if key in out else prod
        return _Poly(out)

    def drop_zeros(self):
        self.terms = {k: v for k, v in self.terms.items() if not _is_num(v, 0.0)}
        return self


def _lower_node(node, phase, names):
    if isinstance(node, Num):
        return _Poly.coeff(node)
    if isinstance(node, Sym):
        if node.name in phase:
            return _Poly.symbol(phase[node.name])
        return _Poly.coeff(node)
    if isinstance(node, Neg):
        return _lower_node(node.arg, phase, names).neg()
    if isinstance(node, Call):
        inner = _lower_node(node.arg, phase, names)
        if not inner.is_coeff():
            raise NonlinearityError(
                f"phase-space symbol inside {node.fn}() makes the operator non-polynomial"
            )
        return _Poly.coeff(Call(node.fn, inner.scalar()))
    if isinstance(node, Bin):
        if node.op == "^":
            base = _lower_node(node.lhs, phase, names)
            exp_poly = _lower_node(node.rhs, phase, names)
            if not exp_poly.is_coeff():
                raise NonlinearityError("phase-space symbol in an exponent")
            exp_sc = exp_poly.scalar()
            if base.is_coeff():
                # coefficient power: any t-free or literal exponent is fine
                if _is_num(exp_sc, 1.0):
                    return base
                if _is_num(exp_sc, 0.0):
                    return _Poly.coeff(Num(1.0))
                return _Poly.coeff(Bin("^", base.scalar(), exp_sc))
            # phase-space power: exponent must be a nonnegative integer literal
            if not _is_num(exp_sc) or exp_sc.value < 0 or exp_sc.value != int(exp_sc.value):
                raise LoweringError(
                    "^ exponent on x or p must be a nonnegative integer literal"
                )
            out = _Poly.coeff(Num(1.0))
            for _ in range(int(exp_sc.value)):
                out = out.mul(base, names)
            return out
        a = _lower_node(node.lhs, phase, names)
        b = _lower_node(node.rhs, phase, names)
        if node.op == "+":
            return a.add(b)
        if node.op == "-":
            return a.add(b, sign=-1.0)
        if node.op == "*":
            return a.mul(b, names)
        if node.op == "/":
            if not b.is_coeff():
                raise NonlinearityError("division by an expression containing x or p")
            inv = {k: ast_div(v, b.scalar()) for k, v in a.terms.items()}
            return _Poly(inv)
    raise TypeError(node)


def infer_dim(symbols) -> int:
    """1 unless any 2D phase-space symbol appears."""
    if symbols & {"y", "px", "py", "p_x", "p_y"}:
        return 2
    return 1


def _coeff_timescalar(node, params) -> TimeScalar:
    if _is_num(node, 0.0):
        return ZERO
    dnode = derivative_t(node)
    return TimeScalar(
        value=lambda t, _n=node, _p=params: eval_ast(_n, t, _p),
        derivative=lambda t, _n=dnode, _p=params: eval_ast(_n, t, _p),
        description=print_ast(node),
        constant=not _contains_t(node),
    )


def lower(ast: Node, params=None, dim: Optional[int] = None, label=""):
    """Lower an expression to a LinearObservable or QuadraticHamiltonian.

    Unknown identifiers become parameters looked up in ``params`` at
    evaluation time (late binding).  Degree decides the result type; mixed
    x_a p_b monomials enter M with the Weyl (symmetrized) reading.
    """
    params = {} if params is None else params
    if dim is None:
        dim = infer_dim(collect_symbols(ast))
    phase = PHASE_SYMBOLS_1D if dim == 1 else PHASE_SYMBOLS_2D
    names = ["x", "p"] if dim == 1 else ["x", "y", "px", "py"]
    poly = _lower_node(ast, phase, names).drop_zeros()
    n2 = 2 * dim
    source = print_ast(ast)

    if poly.degree() <= 1:
        alpha = [Num(0.0)] * n2
        for key, coeff in poly.terms.items():
            if len(key) == 1:
                alpha[key[0]] = coeff
        return LinearObservable(
            dim=dim,
            alpha=tuple(_coeff_timescalar(a, params) for a in alpha),
            gamma=_coeff_timescalar(poly.scalar(), params),
            label=label or source,
            source=source,
        )

    M = [[Num(0.0)] * n2 for _ in range(n2)]
    v = [Num(0.0)] * n2
    for key, coeff in poly.terms.items():
        if len(key) == 2:
            a, b = key
            if a == b:
                M[a][a] = ast_add(M[a][a], ast_mul(Num(2.0), coeff))
            else:
                M[a][b] = ast_add(M[a][b], coeff)
                M[b][a] = ast_add(M[b][a], coeff)
        elif len(key) == 1:
            v[key[0]] = coeff
    return QuadraticHamiltonian(
        dim=dim,
        M=tuple(tuple(_coeff_timescalar(e, params) for e in row) for row in M),
        v=tuple(_coeff_timescalar(e, params) for e in v),
        c=_coeff_timescalar(poly.scalar(), params),
        label=label or source,
        source=source,
    )


def render(obj) -> str:
    """Canonical text form of an object that carries a source expression."""
    if getattr(obj, "source", None) is None:
        raise LoweringError(f"{obj!r} carries no source expression to render")
    return print_ast(parse(obj.source))


# ---------------------------------------------------------------------------
# model files


@dataclass
class ModelFile:
    params: dict
    hamiltonian_src: Optional[str]
    observables: dict  # name -> expression text, insertion ordered
    run: dict  # raw strings from the [run] section

    def dim(self) -> int:
        syms = set()
        if self.hamiltonian_src:
            syms |= collect_symbols(parse(self.hamiltonian_src))
        for src in self.observables.values():
            syms |= collect_symbols(parse(src))
        return infer_dim(syms)

    def lower_all(self, extra_params=None):
        params = dict(self.params)
        if extra_params:
            params.update(extra_params)
        dim = self.dim()
        H = None
        if self.hamiltonian_src:
            H = lower(parse(self.hamiltonian_src), params, dim=dim, label="hamiltonian")
            if isinstance(H, LinearObservable):
                raise LoweringError("the [hamiltonian] entry must be quadratic in (x, p)")
        obs = {
            name: lower(parse(src), params, dim=dim, label=name)
            for name, src in self.observables.items()
        }
        return H, obs, params


def load_model_text(text: str) -> ModelFile:
    """Parse the plain-text model format: [params], [hamiltonian],
    [observables] and an optional [run] section; '#' starts a comment."""
    section = None
    params, observables, run = {}, {}, {}
    hamiltonian = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("params", "hamiltonian", "observables", "run"):
                raise ModelSyntaxError(f"unknown section [{section}] (line {lineno})", 0)
            continue
        if section is None:
            raise ModelSyntaxError(f"content before any section (line {lineno})", 0)
        if section == "params":
            name, _, value = line.partition("=")
            if not _:
                raise ModelSyntaxError(f"expected name = value (line {lineno})", 0)
            try:
                params[name.strip()] = float(value.strip())
            except ValueError:
                raise ModelSyntaxError(f"parameter {name.strip()!r} is not a number "
                                       f"(line {lineno})", 0) from None
        elif section == "hamiltonian":
            if hamiltonian is not None:
                raise ModelSyntaxError(f"multiple [hamiltonian] entries (line {lineno})", 0)
            name, eq, value = line.partition("=")
            hamiltonian = value.strip() if eq else line
        elif section == "observables":
            name, eq, value = line.partition("=")
            if not eq:
                raise ModelSyntaxError(f"expected name = expression (line {lineno})", 0)
            observables[name.strip()] = value.strip()
        else:
            name, eq, value = line.partition("=")
            if not eq:
                raise ModelSyntaxError(f"expected key = value (line {lineno})", 0)
            run[name.strip()] = value.strip()
    return ModelFile(params=params, hamiltonian_src=hamiltonian,
                     observables=observables, run=run)


def load_model_file(path) -> ModelFile:
    with open(path, encoding="utf-8") as fh:
        return load_model_text(fh.read())
