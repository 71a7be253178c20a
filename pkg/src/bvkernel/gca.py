"""Graded-commutative algebra over Q with exact Koszul-sign arithmetic.

Conventions used throughout the package:
- generators of odd cohomological degree square to zero;
- a derivation D satisfies D(uv) = D(u)v + (-1)^{|D||u|} u D(v);
- the graded commutator is [D1,D2] = D1 D2 - (-1)^{|D1||D2|} D2 D1.

Elements are sparse dicts {monomial: Fraction}; a monomial is a tuple of
(generator_index, exponent) pairs with strictly increasing indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

Monomial = tuple[tuple[int, int], ...]

ONE: Monomial = ()


@dataclass(frozen=True)
class Generator:
    """A free algebra generator with its grading data.

    poly_degree: contribution to the polynomial-degree filtration (1 for base
    variables, 0 for fiber generators). weight: ghost/symmetric weight.
    dr_weight: de Rham form weight (1 for adjoined differential letters).
    """

    name: str
    degree: int
    weight: int = 0
    dr_weight: int = 0
    poly_degree: int = 0

    @property
    def is_odd(self) -> bool:
        return self.degree % 2 != 0


class Algebra:
    """A free graded-commutative Q-algebra on an ordered set of generators."""

    def __init__(self, gens: Sequence[Generator]):
        names = [g.name for g in gens]
        if len(set(names)) != len(names):
            raise ValueError("duplicate generator names: %r" % (names,))
        self.gens: tuple[Generator, ...] = tuple(gens)
        self._index: dict[str, int] = {g.name: i for i, g in enumerate(gens)}

    def index(self, name: str) -> int:
        if name not in self._index:
            raise KeyError("unknown generator %r" % name)
        return self._index[name]

    def has_gen(self, name: str) -> bool:
        return name in self._index

    def gen_by_name(self, name: str) -> Generator:
        return self.gens[self.index(name)]

    def extend(self, new_gens: Sequence[Generator]) -> "Algebra":
        return Algebra(self.gens + tuple(new_gens))

    # -- element constructors -------------------------------------------------

    def zero(self) -> "GradedElement":
        return GradedElement(self, {})

    def one(self) -> "GradedElement":
        return GradedElement(self, {ONE: Fraction(1)})

    def constant(self, c) -> "GradedElement":
        c = Fraction(c)
        return GradedElement(self, {ONE: c} if c else {})

    def el(self, name: str) -> "GradedElement":
        i = self.index(name)
        return GradedElement(self, {((i, 1),): Fraction(1)})

    def monomial(self, m: Monomial, coeff=1) -> "GradedElement":
        c = Fraction(coeff)
        return GradedElement(self, {m: c} if c else {})

    def parse(self, text: str) -> "GradedElement":
        return parse_element(self, text)

    # -- monomial grading -----------------------------------------------------

    def mono_degree(self, m: Monomial) -> int:
        return sum(self.gens[i].degree * e for i, e in m)

    def mono_weight(self, m: Monomial) -> int:
        return sum(self.gens[i].weight * e for i, e in m)

    def mono_dr_weight(self, m: Monomial) -> int:
        return sum(self.gens[i].dr_weight * e for i, e in m)

    def mono_poly_degree(self, m: Monomial) -> int:
        return sum(self.gens[i].poly_degree * e for i, e in m)

    def mono_parity(self, m: Monomial) -> int:
        return self.mono_degree(m) % 2

    def graded_lex_key(self, m: Monomial):
        """Sort key: fewer letters first, then higher power on earlier generators."""
        exps = [0] * len(self.gens)
        for i, e in m:
            exps[i] = e
        return (sum(e for _, e in m), tuple(-e for e in exps))

    def emit_monomial(self, m: Monomial) -> str:
        if not m:
            return "1"
        parts = []
        for i, e in m:
            nm = self.gens[i].name
            parts.append(nm if e == 1 else "%s^%d" % (nm, e))
        return "*".join(parts)

    def multiply_monomials(self, m1: Monomial, m2: Monomial):
        """Return (sign, product monomial) or None when the product vanishes."""
        sign = 1
        # Koszul sign: each odd letter of m2 crosses the odd letters of m1
        # that carry a strictly larger generator index.
        odd1 = [(i, e) for i, e in m1 if self.gens[i].degree % 2]
        for j, ej in m2:
            if self.gens[j].degree % 2:
                crossings = sum(e for i, e in odd1 if i > j)
                if crossings % 2:
                    sign = -sign
        merged: list[tuple[int, int]] = []
        a, b = 0, 0
        while a < len(m1) or b < len(m2):
            if b >= len(m2) or (a < len(m1) and m1[a][0] < m2[b][0]):
                merged.append(m1[a])
                a += 1
            elif a >= len(m1) or m2[b][0] < m1[a][0]:
                merged.append(m2[b])
                b += 1
            else:
                i = m1[a][0]
                e = m1[a][1] + m2[b][1]
                if self.gens[i].degree % 2 and e > 1:
                    return None
                merged.append((i, e))
                a += 1
                b += 1
        return sign, tuple(merged)


class GradedElement:
    """A finite Q-linear combination of monomials in a fixed algebra."""

    __slots__ = ("algebra", "coeffs")

    def __init__(self, algebra: Algebra, coeffs: Mapping[Monomial, Fraction]):
        self.algebra = algebra
        self.coeffs: dict[Monomial, Fraction] = {
            m: c for m, c in coeffs.items() if c
        }

    # -- basic structure ------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.coeffs

    def terms(self) -> list[tuple[Monomial, Fraction]]:
        return sorted(self.coeffs.items(), key=lambda t: self.algebra.graded_lex_key(t[0]))

    def copy_with(self, coeffs) -> "GradedElement":
        return GradedElement(self.algebra, coeffs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GradedElement):
            return NotImplemented
        return self.algebra is other.algebra and self.coeffs == other.coeffs

    def __hash__(self):
        raise TypeError("GradedElement is not hashable")

    def __repr__(self) -> str:
        return "<%s>" % emit_element(self)

    # -- arithmetic ------------------------------------------------------------

    def _check_same(self, other: "GradedElement"):
        if self.algebra is not other.algebra:
            raise ValueError("elements live in different algebras")

    def __add__(self, other: "GradedElement") -> "GradedElement":
        self._check_same(other)
        out = dict(self.coeffs)
        for m, c in other.coeffs.items():
            s = out.get(m, Fraction(0)) + c
            if s:
                out[m] = s
            else:
                out.pop(m, None)
        return GradedElement(self.algebra, out)

    def __neg__(self) -> "GradedElement":
        return GradedElement(self.algebra, {m: -c for m, c in self.coeffs.items()})

    def __sub__(self, other: "GradedElement") -> "GradedElement":
        return self + (-other)

    def scale(self, c) -> "GradedElement":
        c = Fraction(c)
        if not c:
            return self.algebra.zero()
        return GradedElement(self.algebra, {m: c * v for m, v in self.coeffs.items()})

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        if not isinstance(other, GradedElement):
            return NotImplemented
        self._check_same(other)
        alg = self.algebra
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self.coeffs.items():
            for m2, c2 in other.coeffs.items():
                prod = alg.multiply_monomials(m1, m2)
                if prod is None:
                    continue
                sign, m = prod
                s = out.get(m, Fraction(0)) + sign * c1 * c2
                if s:
                    out[m] = s
                else:
                    out.pop(m, None)
        return GradedElement(alg, out)

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return NotImplemented

    # -- grading ----------------------------------------------------------------

    def is_homogeneous(self) -> bool:
        degs = {self.algebra.mono_degree(m) for m in self.coeffs}
        return len(degs) <= 1

    def degree(self):
        """Common cohomological degree, or None for the zero element."""
        degs = {self.algebra.mono_degree(m) for m in self.coeffs}
        if not degs:
            return None
        if len(degs) > 1:
            raise ValueError("element is not degree-homogeneous: %s" % emit_element(self))
        return degs.pop()

    def split_by(self, grading: Callable[[Monomial], int]) -> dict[int, "GradedElement"]:
        parts: dict[int, dict[Monomial, Fraction]] = {}
        for m, c in self.coeffs.items():
            parts.setdefault(grading(m), {})[m] = c
        return {k: GradedElement(self.algebra, v) for k, v in sorted(parts.items())}

    def degree_part(self, k: int) -> "GradedElement":
        alg = self.algebra
        return GradedElement(alg, {m: c for m, c in self.coeffs.items() if alg.mono_degree(m) == k})

    def weight_part(self, w: int) -> "GradedElement":
        alg = self.algebra
        return GradedElement(alg, {m: c for m, c in self.coeffs.items() if alg.mono_weight(m) == w})

    def max_weight(self) -> int:
        alg = self.algebra
        return max((alg.mono_weight(m) for m in self.coeffs), default=0)

    def max_poly_degree(self) -> int:
        alg = self.algebra
        return max((alg.mono_poly_degree(m) for m in self.coeffs), default=0)


def promote(elem: GradedElement, target: Algebra) -> GradedElement:
    """Re-express an element in a larger algebra, matching generators by name."""
    src = elem.algebra
    if src is target:
        return elem
    mapping = []
    for g in src.gens:
        h = target.gen_by_name(g.name)
        if (h.degree, h.weight, h.dr_weight, h.poly_degree) != (
            g.degree,
            g.weight,
            g.dr_weight,
            g.poly_degree,
        ):
            raise ValueError("generator %r has different grading in target algebra" % g.name)
        mapping.append(target.index(g.name))
    out: dict[Monomial, Fraction] = {}
    for m, c in elem.coeffs.items():
        mm = tuple(sorted(((mapping[i], e) for i, e in m)))
        out[mm] = c
    return GradedElement(target, out)


def substitute(elem: GradedElement, target: Algebra, images: Mapping[str, GradedElement]) -> GradedElement:
    """Apply the algebra map sending each generator to images[name].

    Generators absent from `images` must exist in `target` with identical
    grading and map to themselves. Images must be homogeneous of the same
    cohomological degree as their source generator.
    """
    src = elem.algebra
    for name, img in images.items():
        g = src.gen_by_name(name)
        if img.algebra is not target:
            raise ValueError("image of %r lives in the wrong algebra" % name)
        if not img.is_zero() and img.degree() != g.degree:
            raise ValueError("image of %r is not degree-preserving" % name)
    out = target.zero()
    for m, c in elem.coeffs.items():
        acc = target.constant(c)
        for i, e in m:
            name = src.gens[i].name
            img = images.get(name)
            if img is None:
                img = target.el(name)
            for _ in range(e):
                acc = acc * img
                if acc.is_zero():
                    break
            if acc.is_zero():
                break
        out = out + acc
    return out


# -- partial derivatives -------------------------------------------------------


def partial_left(elem: GradedElement, name: str) -> GradedElement:
    """Left derivative: the generator is extracted across the prefix."""
    alg = elem.algebra
    gi = alg.index(name)
    g_odd = alg.gens[gi].is_odd
    out: dict[Monomial, Fraction] = {}
    for m, c in elem.coeffs.items():
        prefix_parity = 0
        for pos, (i, e) in enumerate(m):
            if i == gi:
                sign = -1 if (g_odd and prefix_parity % 2) else 1
                rest = m[:pos] + ((i, e - 1),) if e > 1 else m[:pos]
                rest = rest + m[pos + 1 :]
                s = out.get(rest, Fraction(0)) + sign * e * c
                if s:
                    out[rest] = s
                else:
                    out.pop(rest, None)
                break
            prefix_parity += alg.gens[i].degree * e
    return GradedElement(alg, out)


def partial_right(elem: GradedElement, name: str) -> GradedElement:
    """Right derivative: the generator is extracted across the suffix."""
    alg = elem.algebra
    gi = alg.index(name)
    g_odd = alg.gens[gi].is_odd
    out: dict[Monomial, Fraction] = {}
    for m, c in elem.coeffs.items():
        for pos, (i, e) in enumerate(m):
            if i == gi:
                suffix_parity = sum(alg.gens[j].degree * f for j, f in m[pos + 1 :])
                sign = -1 if (g_odd and suffix_parity % 2) else 1
                rest = m[:pos] + ((i, e - 1),) if e > 1 else m[:pos]
                rest = rest + m[pos + 1 :]
                s = out.get(rest, Fraction(0)) + sign * e * c
                if s:
                    out[rest] = s
                else:
                    out.pop(rest, None)
                break
    return GradedElement(alg, out)


# -- derivations -----------------------------------------------------------------


class Derivation:
    """A graded derivation given by its values on generators."""

    def __init__(self, algebra: Algebra, degree: int, images: Mapping[str, GradedElement], name: str = ""):
        self.algebra = algebra
        self.degree = degree
        self.name = name
        self.images: dict[int, GradedElement] = {}
        for gname, img in images.items():
            i = algebra.index(gname)
            if img.algebra is not algebra:
                raise ValueError("image of %r lives in a different algebra" % gname)
            if img.is_zero():
                continue
            if img.degree() != algebra.gens[i].degree + degree:
                raise ValueError(
                    "image of %r has degree %s, expected %d"
                    % (gname, img.degree(), algebra.gens[i].degree + degree)
                )
            self.images[i] = img

    @property
    def is_odd(self) -> bool:
        return self.degree % 2 != 0

    def image_of(self, name: str) -> GradedElement:
        return self.images.get(self.algebra.index(name), self.algebra.zero())

    def apply(self, elem: GradedElement) -> GradedElement:
        if elem.algebra is not self.algebra:
            raise ValueError("element lives in a different algebra")
        alg = self.algebra
        d_parity = self.degree % 2
        out = alg.zero()
        for m, c in elem.coeffs.items():
            prefix_parity = 0
            for pos, (i, e) in enumerate(m):
                img = self.images.get(i)
                gdeg = alg.gens[i].degree
                if img is not None:
                    # D(prefix * g^e * suffix) picks up (-1)^{|D||prefix|};
                    # within g^e even generators commute freely, odd ones have e=1.
                    sign = -1 if (d_parity and prefix_parity % 2) else 1
                    left = m[:pos] + ((i, e - 1),) if e > 1 else m[:pos]
                    suffix = m[pos + 1 :]
                    piece = alg.monomial(left, sign * e * c) * img * alg.monomial(suffix)
                    out = out + piece
                prefix_parity += gdeg * e
        return out

    def __call__(self, elem: GradedElement) -> GradedElement:
        return self.apply(elem)

    def restrict_images(self, keep: Callable[[Monomial], bool], name: str = "") -> "Derivation":
        """New derivation keeping only image monomials selected by `keep`."""
        alg = self.algebra
        images = {}
        for i, img in self.images.items():
            picked = {m: c for m, c in img.coeffs.items() if keep(m)}
            if picked:
                images[alg.gens[i].name] = GradedElement(alg, picked)
        return Derivation(alg, self.degree, images, name=name or self.name)

    def add(self, other: "Derivation", name: str = "") -> "Derivation":
        if other.algebra is not self.algebra or other.degree != self.degree:
            raise ValueError("can only add derivations of equal degree on the same algebra")
        alg = self.algebra
        images = {}
        for i in set(self.images) | set(other.images):
            g = alg.gens[i].name
            images[g] = self.image_of(g) + other.image_of(g)
        return Derivation(alg, self.degree, images, name=name)


def commutator(d1: Derivation, d2: Derivation, name: str = "") -> Derivation:
    """Graded commutator [d1,d2] = d1 d2 - (-1)^{|d1||d2|} d2 d1."""
    if d1.algebra is not d2.algebra:
        raise ValueError("derivations live in different algebras")
    alg = d1.algebra
    sign = -1 if (d1.degree % 2 and d2.degree % 2) else 1
    images = {}
    for g in alg.gens:
        e = alg.el(g.name)
        img = d1.apply(d2.apply(e)) - d2.apply(d1.apply(e)).scale(sign)
        if not img.is_zero():
            images[g.name] = img
    return Derivation(alg, d1.degree + d2.degree, images, name=name)


def check_square_zero(d: Derivation, bounds=None):
    """Return (True, None) if D∘D kills every generator, else (False, witness).

    Leibniz makes vanishing on generators sufficient. Only odd derivations are
    accepted: for even D the square is not computed by [D,D]/2.
    """
    if not d.is_odd:
        raise ValueError("square-zero check requires an odd-degree derivation")
    for g in d.algebra.gens:
        val = d.apply(d.apply(d.algebra.el(g.name)))
        if not val.is_zero():
            return False, g.name
    return True, None


# -- parsing ---------------------------------------------------------------------


class ParseError(ValueError):
    """Polynomial syntax or symbol error with 1-based position info."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__("%s (line %d, column %d)" % (message, line, col))
        self.message = message
        self.line = line
        self.col = col


_NAME_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_NAME_CONT = _NAME_START | set("0123456789")


def _tokenize(text: str):
    tokens = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        start_col = col
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(("num", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if ch in _NAME_START:
            j = i
            while j < n and text[j] in _NAME_CONT:
                j += 1
            tokens.append(("name", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if ch in "+-*/^()":
            tokens.append((ch, ch, line, start_col))
            i += 1
            col += 1
            continue
        raise ParseError("unexpected character %r" % ch, line, start_col)
    tokens.append(("end", "", line, col))
    return tokens


class _Parser:
    def __init__(self, algebra: Algebra, text: str):
        self.algebra = algebra
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok=None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(message, tok[2], tok[3])

    def parse(self) -> GradedElement:
        value = self.expr()
        if self.peek()[0] != "end":
            raise self.error("unexpected token %r" % self.peek()[1])
        return value

    def expr(self) -> GradedElement:
        sign = 1
        while self.peek()[0] in ("+", "-"):
            if self.advance()[0] == "-":
                sign = -sign
        value = self.term().scale(sign)
        while self.peek()[0] in ("+", "-"):
            sign = 1
            while self.peek()[0] in ("+", "-"):
                if self.advance()[0] == "-":
                    sign = -sign
            value = value + self.term().scale(sign)
        return value

    def term(self) -> GradedElement:
        value = self.factor()
        while True:
            kind = self.peek()[0]
            if kind == "*":
                self.advance()
                value = value * self.factor()
            elif kind == "/":
                tok = self.advance()
                divisor = self.factor()
                const = divisor.coeffs.get(ONE)
                if list(divisor.coeffs) != [ONE] or not const:
                    raise self.error("division is only defined by nonzero rational constants", tok)
                value = value.scale(Fraction(1) / const)
            elif kind in ("num", "name", "("):
                value = value * self.factor()
            else:
                return value

    def factor(self) -> GradedElement:
        value = self.primary()
        while self.peek()[0] == "^":
            tok = self.advance()
            if self.peek()[0] != "num":
                raise self.error("exponent must be a nonnegative integer literal")
            exp = int(self.advance()[1])
            result = self.algebra.one()
            for _ in range(exp):
                result = result * value
            value = result
        return value

    def primary(self) -> GradedElement:
        kind, text, line, col = self.peek()
        if kind == "num":
            self.advance()
            return self.algebra.constant(int(text))
        if kind == "name":
            self.advance()
            if not self.algebra.has_gen(text):
                raise ParseError("unknown generator %r" % text, line, col)
            return self.algebra.el(text)
        if kind == "(":
            self.advance()
            value = self.expr()
            if self.peek()[0] != ")":
                raise self.error("expected ')'")
            self.advance()
            return value
        raise self.error("expected a number, generator name, or '('")


def parse_element(algebra: Algebra, text: str) -> GradedElement:
    """Parse a polynomial in the algebra's generators.

    Grammar: rational coefficients (p/q), '*' optional between adjacent
    factors, '^' for nonnegative integer powers, parentheses. Names follow
    [A-Za-z_][A-Za-z0-9_]*. Errors carry 1-based line/column positions.
    """
    return _Parser(algebra, text).parse()


def emit_element(elem: GradedElement) -> str:
    """Deterministic textual form; parse_element round-trips it exactly."""
    if elem.is_zero():
        return "0"
    parts: list[str] = []
    for m, c in elem.terms():
        mono = elem.algebra.emit_monomial(m)
        if m == ONE:
            body = str(c if c > 0 else -c)
        else:
            a = c if c > 0 else -c
            body = mono if a == 1 else "%s*%s" % (a, mono)
        if not parts:
            parts.append(body if c > 0 else "-" + body)
        else:
            parts.append((" + " if c > 0 else " - ") + body)
    return "".join(parts)
