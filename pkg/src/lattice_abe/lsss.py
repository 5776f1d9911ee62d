"""Access policies: parsing, LSSS compilation, sharing and reconstruction.

Policy text is a monotone boolean formula::

    expr   := term ('OR' term)*
    term   := factor ('AND' factor)*
    factor := ATTR | '(' expr ')'

with ``ATTR = [A-Za-z0-9_:.-]+``. Keywords are case-insensitive and AND binds
tighter than OR. Formulas compile to a share-generating matrix M with one row
per leaf: an OR node hands its label vector to both children, an AND node
with label v gives its children ``v || 1`` and ``0 || -1`` in a fresh column,
and the root is labelled ``(1)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Union

from .zq import (
    DimensionError, Modulus, NoSolution, ZqMatrix, ZqVector, concat_rows, mat_vec,
    solve_row_combination,
)

PAD_LABEL = "⊥"
_TOKEN = re.compile(r"(\()|(\))|([A-Za-z0-9_:.\-]+)")


class PolicySyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class Unauthorized(Exception):
    """The attribute set does not satisfy the policy."""


@dataclass(frozen=True)
class Leaf:
    attribute: str


@dataclass(frozen=True)
class And:
    left: "PolicyAst"
    right: "PolicyAst"


@dataclass(frozen=True)
class Or:
    left: "PolicyAst"
    right: "PolicyAst"


PolicyAst = Union[Leaf, And, Or]


# -- parsing -----------------------------------------------------------------

def _tokenize(text: str) -> list[tuple[str, str, int]]:
    """Tokens as (kind, value, byte offset); a final ('end', '', len) sentinel."""
    raw = text.encode("utf-8")
    out = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos == len(text):
            break
        mt = _TOKEN.match(text, pos)
        if mt is None or mt.end() == pos:
            raise PolicySyntaxError(f"unexpected character {text[pos]!r}",
                                    len(text[:pos].encode("utf-8")))
        start = mt.start(mt.lastindex)
        offset = len(text[:start].encode("utf-8"))
        if mt.group(1):
            out.append(("(", "(", offset))
        elif mt.group(2):
            out.append((")", ")", offset))
        else:
            word = mt.group(3)
            kind = word.upper() if word.upper() in ("AND", "OR") else "attr"
            out.append((kind, word, offset))
        pos = mt.end()
    out.append(("end", "", len(raw)))
    return out


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expr(self):
        node = self.term()
        while self.peek()[0] == "OR":
            self.next()
            node = Or(node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] == "AND":
            self.next()
            node = And(node, self.factor())
        return node

    def factor(self):
        kind, value, offset = self.next()
        if kind == "attr":
            return Leaf(value)
        if kind == "(":
            node = self.expr()
            kind, _, offset = self.next()
            if kind != ")":
                raise PolicySyntaxError("expected ')'", offset)
            return node
        what = "end of input" if kind == "end" else repr(value)
        raise PolicySyntaxError(f"expected attribute or '(' but found {what}", offset)


def parse_policy(text: str) -> PolicyAst:
    """Parse policy text into an AST; errors carry the byte offset of the problem."""
    if not text.strip():
        raise PolicySyntaxError("empty policy", 0)
    p = _Parser(_tokenize(text))
    node = p.expr()
    kind, value, offset = p.peek()
    if kind != "end":
        raise PolicySyntaxError(f"unexpected {value!r}", offset)
    return node


def evaluate(ast: PolicyAst, attrs: Iterable[str]) -> bool:
    attrs = set(attrs)
    if isinstance(ast, Leaf):
        return ast.attribute in attrs
    if isinstance(ast, And):
        return evaluate(ast.left, attrs) and evaluate(ast.right, attrs)
    return evaluate(ast.left, attrs) or evaluate(ast.right, attrs)


def leaves(ast: PolicyAst) -> list[str]:
    if isinstance(ast, Leaf):
        return [ast.attribute]
    return leaves(ast.left) + leaves(ast.right)


def format_policy(ast: PolicyAst) -> str:
    if isinstance(ast, Leaf):
        return ast.attribute
    op = "AND" if isinstance(ast, And) else "OR"
    return f"({format_policy(ast.left)} {op} {format_policy(ast.right)})"


# -- compilation -------------------------------------------------------------

@dataclass(frozen=True)
class SharePolicy:
    """Share-generating matrix M (l x n_cols) with row labels rho.

    Labels may repeat. Rows labelled PAD_LABEL are all-zero padding.
    """

    matrix_m: ZqMatrix
    rho: tuple[str, ...]

    def __post_init__(self):
        if self.matrix_m.nrows < 1:
            raise DimensionError("a policy needs at least one row")
        if len(self.rho) != self.matrix_m.nrows:
            raise DimensionError("every row needs exactly one label")

    @property
    def l(self) -> int:  # noqa: E743
        return self.matrix_m.nrows

    @property
    def n_cols(self) -> int:
        return self.matrix_m.ncols

    @property
    def modulus(self) -> Modulus:
        return self.matrix_m.modulus

    def rows_for(self, attrs: Iterable[str]) -> list[int]:
        attrs = set(attrs)
        return [i for i, a in enumerate(self.rho) if a in attrs and a != PAD_LABEL]

    def padded(self, cap_l: int) -> SharePolicy:
        """Pad with zero rows labelled PAD_LABEL up to exactly cap_l rows."""
        if self.l > cap_l:
            raise DimensionError(f"policy has {self.l} rows, more than the budget {cap_l}")
        if self.l == cap_l:
            return self
        pad = ZqMatrix.zeros(cap_l - self.l, self.n_cols, self.modulus)
        return SharePolicy(concat_rows(self.matrix_m, pad),
                           self.rho + (PAD_LABEL,) * (cap_l - self.l))


def compile_lsss(ast: PolicyAst, q: Modulus) -> SharePolicy:
    rows: list[tuple[list[int], str]] = []
    width = 1

    def walk(node, label: list[int]):
        nonlocal width
        if isinstance(node, Leaf):
            if node.attribute == PAD_LABEL:
                raise ValueError(f"{PAD_LABEL!r} is reserved")
            rows.append((label, node.attribute))
        elif isinstance(node, Or):
            walk(node.left, label)
            walk(node.right, label)
        else:
            col = width
            width += 1
            left = label + [0] * (col - len(label)) + [1]
            right = [0] * col + [-1]
            walk(node.left, left)
            walk(node.right, right)

    walk(ast, [1])
    mat = [r + [0] * (width - len(r)) for r, _ in rows]
    return SharePolicy(ZqMatrix.from_rows(mat, q, ncols=width), tuple(a for _, a in rows))


@dataclass(frozen=True)
class ShareVector:
    shares: ZqVector
    secret: int


def share_secret(policy: SharePolicy, secret: int, blinds: ZqVector,
                 q: Modulus | None = None) -> ShareVector:
    """Shares ``M v`` for ``v = (secret, blinds...)``."""
    q = q or policy.modulus
    if blinds.dim != policy.n_cols - 1:
        raise DimensionError(f"need {policy.n_cols - 1} blinds, got {blinds.dim}")
    v = (secret % q.q,) + blinds.entries
    return ShareVector(mat_vec(policy.matrix_m, v), secret % q.q)


def _unit_target(policy: SharePolicy) -> ZqVector:
    return ZqVector((1,) + (0,) * (policy.n_cols - 1), policy.modulus)


def find_reconstruction(policy: SharePolicy, attrs: Iterable[str]) -> dict[int, int]:
    """Constants w_i over the rows labelled by attrs with sum w_i M_i = (1, 0, ..., 0).

    Raises Unauthorized if no such combination exists.
    """
    idx = policy.rows_for(attrs)
    if not idx:
        raise Unauthorized("no policy row matches the attribute set")
    try:
        w = solve_row_combination(policy.matrix_m.select_rows(idx), _unit_target(policy))
    except NoSolution:
        raise Unauthorized("attribute set does not satisfy the policy") from None
    return dict(zip(idx, w.entries))


def is_authorized(policy: SharePolicy, attrs: Iterable[str]) -> bool:
    try:
        find_reconstruction(policy, attrs)
    except Unauthorized:
        return False
    return True
