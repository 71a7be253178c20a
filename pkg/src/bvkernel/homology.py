"""Budget-truncated cohomology over Q and finite free complexes.

Two kinds of complexes are supported:
  * a graded algebra with an odd square-zero derivation (monomial basis), and
  * a finite free complex over such an algebra (basis = generator x monomial).

All computations are exact. Truncation semantics: within a degree, the basis
is every monomial (or pair) whose poly/weight/de-Rham gradings fit the
budgets; the differential is composed with the projection back onto that
span. When the differential preserves every budgeted grading the projection
is the identity and the reported dimensions are exact dimensions of the
multigraded window; this is the `certified` case. Otherwise the report still
describes the projected (quotient) complex exactly, but carries
certified=False plus the leaking monomials.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from . import linalg
from .gca import (
    Algebra,
    Derivation,
    GradedElement,
    Generator,
    Monomial,
    check_square_zero,
    emit_element,
)


class BudgetExceeded(Exception):
    """An iterative routine ran out of its configured budget."""


@dataclass(frozen=True)
class TruncationBounds:
    poly_degree_max: int | None = None
    coh_window: tuple[int, int] | None = None
    weight_max: int | None = None
    dr_weight_max: int | None = None
    order_max: int | None = None

    def __post_init__(self) -> None:
        if self.coh_window is not None and self.coh_window[0] > self.coh_window[1]:
            raise ValueError("coh_window lower bound exceeds upper bound")
        for name in ("poly_degree_max", "weight_max", "dr_weight_max", "order_max"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be nonnegative")

    def budgets(self) -> tuple[int | None, int | None, int | None]:
        return (self.poly_degree_max, self.weight_max, self.dr_weight_max)


_GRADING_NAMES = ("poly_degree", "weight", "dr_weight")


def _algebra_of(alg) -> Algebra:
    # accept a bare Algebra or anything carrying one (DgaPresentation etc.)
    return alg if isinstance(alg, Algebra) else alg.algebra


def _gen_cap(g: Generator, budgets: tuple[int | None, int | None, int | None]) -> int | None:
    caps = []
    for value, budget in zip((g.poly_degree, g.weight, g.dr_weight), budgets):
        if value > 0 and budget is not None:
            caps.append(budget // value)
    if g.is_odd:
        caps.append(1)
    return min(caps) if caps else None


def basis_enumerate(alg, coh_degree: int, bounds: TruncationBounds) -> list[Monomial]:
    """All normal-form monomials of the degree within budgets, graded-lex sorted.

    Terminates only if every even generator of nonnegative degree has a
    positive budgeted grading; even generators of negative degree are bounded
    through the degree itself.
    """
    algebra = _algebra_of(alg)
    budgets = bounds.budgets()
    gens = algebra.gens
    for g in gens:
        for value, budget in zip((g.poly_degree, g.weight, g.dr_weight), budgets):
            if budget is not None and value < 0:
                raise ValueError(
                    f"generator '{g.name}' has a negative budgeted grading")
        if not g.is_odd and g.degree >= 0 and _gen_cap(g, budgets) is None:
            raise ValueError(
                f"enumeration cannot terminate: generator '{g.name}' is even, "
                "has nonnegative degree, and no finite budget bounds it")

    n = len(gens)
    full_caps = [_gen_cap(g, budgets) for g in gens]
    # maximum degree the suffix starting at i can still contribute
    pos_rest = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        add = gens[i].degree * full_caps[i] if gens[i].degree > 0 else 0
        pos_rest[i] = pos_rest[i + 1] + add
    has_neg = [False] * (n + 1)
    for i in range(n - 1, -1, -1):
        has_neg[i] = has_neg[i + 1] or gens[i].degree < 0

    out: list[Monomial] = []

    def rec(i: int, deg: int, rem: tuple[int | None, ...], expo: list[tuple[int, int]]) -> None:
        if deg + pos_rest[i] < coh_degree:
            return
        if deg > coh_degree and not has_neg[i]:
            return
        if i == n:
            if deg == coh_degree:
                out.append(tuple(expo))
            return
        g = gens[i]
        cap = _gen_cap(g, rem)
        if g.degree < 0:
            dcap = (deg + pos_rest[i + 1] - coh_degree) // (-g.degree)
            dcap = max(dcap, 0)
            cap = dcap if cap is None else min(cap, dcap)
        for e in range(cap + 1):
            new_rem = tuple(
                None if b is None else b - e * v
                for b, v in zip(rem, (g.poly_degree, g.weight, g.dr_weight)))
            if any(b is not None and b < 0 for b in new_rem):
                break
            if e:
                expo.append((i, e))
            rec(i + 1, deg + e * g.degree, new_rem, expo)
            if e:
                expo.pop()

    rec(0, 0, budgets, [])
    return sorted(out, key=algebra.graded_lex_key)


def monomial_in_budgets(algebra: Algebra, m: Monomial, bounds: TruncationBounds) -> bool:
    values = (
        algebra.mono_poly_degree(m),
        algebra.mono_weight(m),
        algebra.mono_dr_weight(m),
    )
    return all(b is None or v <= b for v, b in zip(values, bounds.budgets()))


@dataclass
class DifferentialMatrix:
    """Projected matrix of a degree-raising map between budgeted bases.

    columns[j] is the image of sources[j] as {target_index: coefficient},
    after projecting away monomials outside the budgets. flagged lists the
    source indices whose unprojected image left the budgets.
    """

    sources: list
    targets: list
    columns: list[dict[int, Fraction]]
    flagged: list[int]

    def rank(self) -> int:
        rows: dict[int, linalg.Row] = {}
        for j, col in enumerate(self.columns):
            for i, v in col.items():
                rows.setdefault(i, {})[j] = v
        return linalg.rank(list(rows.values()), range(len(self.sources)))

    def kernel(self) -> list[dict[int, Fraction]]:
        return linalg.kernel_of_columns(self.columns, range(len(self.targets)))


def _matrix_between(engine, sources: list, targets: list) -> DifferentialMatrix:
    index = {k: i for i, k in enumerate(targets)}
    cols: list[dict[int, Fraction]] = []
    flagged: list[int] = []
    for j, s in enumerate(sources):
        row = engine.image_row(s)
        col: dict[int, Fraction] = {}
        leak = False
        for k, v in row.items():
            i = index.get(k)
            if i is None:
                leak = True
            else:
                col[i] = v
        cols.append(col)
        if leak:
            flagged.append(j)
    return DifferentialMatrix(sources, targets, cols, flagged)


def differential_matrix(d: Derivation, coh_degree: int, bounds: TruncationBounds) -> DifferentialMatrix:
    engine = _AlgebraEngine(d.algebra, d, bounds)
    return _matrix_between(engine, engine.basis(coh_degree),
                           engine.basis(coh_degree + d.degree))


@dataclass
class DegreeReport:
    degree: int
    dim: int
    certified: bool
    representatives: list
    kernel_dim: int
    boundary_rank: int
    leaking_sources: list
    leaking_cycles: bool

    def to_json(self, emit) -> dict:
        return {
            "degree": self.degree,
            "dim": self.dim,
            "certified": self.certified,
            "representatives": [emit(r) for r in self.representatives],
        }


@dataclass
class CohomologyReport:
    by_degree: dict[int, DegreeReport]

    def dim(self, degree: int) -> int:
        return self.by_degree[degree].dim

    def certified(self, degree: int) -> bool:
        return self.by_degree[degree].certified

    def to_json(self, emit) -> list[dict]:
        return [self.by_degree[k].to_json(emit) for k in sorted(self.by_degree)]


class _AlgebraEngine:
    """Monomial-basis complex of (algebra, odd derivation).

    `keep` optionally restricts the basis further (e.g. to a weight window);
    images falling outside the kept span are projected away and flagged like
    any other budget leak.
    """

    def __init__(self, algebra: Algebra, diff: Derivation, bounds: TruncationBounds,
                 keep=None):
        self.algebra = algebra
        self.diff = diff
        self.bounds = bounds
        self.keep = keep

    def basis(self, degree: int) -> list[Monomial]:
        monos = basis_enumerate(self.algebra, degree, self.bounds)
        if self.keep is not None:
            monos = [m for m in monos if self.keep(m)]
        return monos

    def image_row(self, m: Monomial) -> linalg.Row:
        return dict(self.diff.apply(self.algebra.monomial(m)).coeffs)

    def element_of(self, row: linalg.Row) -> GradedElement:
        out = self.algebra.zero()
        for m, c in row.items():
            out = out + self.algebra.monomial(m, c)
        return out

    def emit(self, el: GradedElement) -> str:
        return emit_element(el)


class _FreeComplexEngine:
    """Basis = (generator name, coefficient monomial) pairs."""

    def __init__(self, complex_: "FreeComplex", bounds: TruncationBounds):
        self.complex = complex_
        self.algebra = complex_.algebra
        self.bounds = bounds
        self._order = {name: i for i, (name, _) in enumerate(complex_.gens)}

    def basis(self, degree: int) -> list[tuple[str, Monomial]]:
        keys = []
        for name, gdeg in self.complex.gens:
            b = self.bounds
            off = self.complex.offsets.get(name, 0)
            if off and b.poly_degree_max is not None:
                cap = b.poly_degree_max - off
                if cap < 0:
                    continue
                b = dataclasses.replace(b, poly_degree_max=cap)
            for m in basis_enumerate(self.algebra, degree - gdeg, b):
                keys.append((name, m))
        keys.sort(key=lambda k: (self._order[k[0]], self.algebra.graded_lex_key(k[1])))
        return keys

    def image_row(self, key: tuple[str, Monomial]) -> linalg.Row:
        name, m = key
        vec = self.complex.apply({name: self.algebra.monomial(m)})
        row: linalg.Row = {}
        for gname, el in vec.items():
            for mono, c in el.coeffs.items():
                row[(gname, mono)] = row.get((gname, mono), Fraction(0)) + c
        return {k: v for k, v in row.items() if v}

    def element_of(self, row: linalg.Row) -> dict[str, GradedElement]:
        out: dict[str, GradedElement] = {}
        for (gname, mono), c in row.items():
            out[gname] = out.get(gname, self.algebra.zero()) + self.algebra.monomial(mono, c)
        return {g: e for g, e in out.items() if not e.is_zero()}

    def emit(self, vec: dict[str, GradedElement]) -> str:
        parts = [f"({emit_element(vec[g])})*{g}" for g, _ in self.complex.gens if g in vec]
        return " + ".join(parts) if parts else "0"


def _degree_report(engine, degree: int) -> DegreeReport:
    basis_k = engine.basis(degree)
    basis_next = engine.basis(degree + 1)
    mat_k = _matrix_between(engine, basis_k, basis_next)

    basis_prev = engine.basis(degree - 1)
    mat_prev = _matrix_between(engine, basis_prev, basis_k)

    kernel = mat_k.kernel()
    zrows: list[linalg.Row] = [
        {basis_k[j]: c for j, c in vec.items()} for vec in kernel
    ]
    brows: list[linalg.Row] = [
        {basis_k[i]: v for i, v in col.items()} for col in mat_prev.columns if col
    ]
    echelon = linalg.rref(brows, basis_k)
    reduced = [linalg.reduce_against(z, echelon) for z in zrows]
    final = linalg.rref(reduced, basis_k)

    leak_src = [mat_prev.sources[j] for j in mat_prev.flagged]
    return DegreeReport(
        degree=degree,
        dim=len(final),
        certified=not leak_src and not mat_k.flagged,
        representatives=[engine.element_of(row) for _, row in final],
        kernel_dim=len(kernel),
        boundary_rank=len(echelon),
        leaking_sources=leak_src,
        leaking_cycles=bool(mat_k.flagged),
    )


def cohomology(alg, bounds: TruncationBounds, degrees: Iterable[int] | None = None,
               differential: Derivation | None = None) -> CohomologyReport:
    """Cohomology report over the given degrees (default: the coh_window)."""
    algebra = _algebra_of(alg)
    diff = differential if differential is not None else alg.differential
    if diff.degree != 1:
        raise ValueError("cohomology requires a degree +1 differential")
    ok, witness = check_square_zero(diff)
    if not ok:
        raise ValueError(f"differential does not square to zero on '{witness}'")
    if degrees is None:
        if bounds.coh_window is None:
            raise ValueError("no degrees given and bounds carry no coh_window")
        lo, hi = bounds.coh_window
        degrees = range(lo, hi + 1)
    engine = _AlgebraEngine(algebra, diff, bounds)
    return CohomologyReport({k: _degree_report(engine, k) for k in degrees})


@dataclass
class FreeComplex:
    """Finite free complex over a dg algebra.

    d(g) = delta on coefficients + sum_h entries[g][h] * h, extended to
    coefficient vectors by the graded Leibniz rule (per-monomial parity sign
    when the differential passes a coefficient).
    """

    algebra: Algebra
    differential: Derivation
    gens: list[tuple[str, int]]
    entries: dict[str, dict[str, GradedElement]]
    # per-generator polynomial weight: a coefficient monomial of poly degree p
    # on generator g counts as p + offsets[g] against poly_degree_max, so a
    # map that preserves the combined grading never leaks out of the basis
    offsets: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        names = [n for n, _ in self.gens]
        if len(set(names)) != len(names):
            raise ValueError("duplicate module generator names")
        for n in self.offsets:
            if n not in set(names):
                raise ValueError(f"poly offset for unknown generator '{n}'")
        degs = dict(self.gens)
        for src, row in self.entries.items():
            if src not in degs:
                raise ValueError(f"entry row for unknown generator '{src}'")
            for dst, el in row.items():
                if dst not in degs:
                    raise ValueError(f"entry column for unknown generator '{dst}'")
                if el.is_zero():
                    continue
                want = degs[src] + 1 - degs[dst]
                if not el.is_homogeneous() or el.degree() != want:
                    raise ValueError(
                        f"entry {src}->{dst} must be homogeneous of degree {want}")

    def gen_degree(self, name: str) -> int:
        for n, d in self.gens:
            if n == name:
                return d
        raise KeyError(name)

    def entry(self, src: str, dst: str) -> GradedElement:
        return self.entries.get(src, {}).get(dst, self.algebra.zero())

    def apply(self, vector: dict[str, GradedElement]) -> dict[str, GradedElement]:
        out: dict[str, GradedElement] = {}

        def add(name: str, el: GradedElement) -> None:
            if el.is_zero():
                return
            out[name] = out.get(name, self.algebra.zero()) + el

        for gname, coeff in vector.items():
            add(gname, self.differential.apply(coeff))
            row = self.entries.get(gname)
            if not row:
                continue
            signed = self.algebra.zero()
            for m, c in coeff.coeffs.items():
                sign = -1 if self.algebra.mono_parity(m) else 1
                signed = signed + self.algebra.monomial(m, c * sign)
            for dst, a in row.items():
                add(dst, signed * a)
        return {g: e for g, e in out.items() if not e.is_zero()}

    def check_square(self) -> tuple[bool, str | None]:
        for name, _ in self.gens:
            once = self.apply({name: self.algebra.one()})
            twice = self.apply(once)
            if any(not e.is_zero() for e in twice.values()):
                return False, name
        return True, None

    def cohomology(self, bounds: TruncationBounds,
                   degrees: Iterable[int] | None = None) -> CohomologyReport:
        if degrees is None:
            if bounds.coh_window is None:
                raise ValueError("no degrees given and bounds carry no coh_window")
            lo, hi = bounds.coh_window
            degrees = range(lo, hi + 1)
        engine = _FreeComplexEngine(self, bounds)
        return CohomologyReport({k: _degree_report(engine, k) for k in degrees})


def eliminate_scalar_pairs(cx: FreeComplex) -> FreeComplex:
    """Split off generator pairs joined by a nonzero scalar entry until none
    remain (exact module-level Gaussian elimination; the result is homotopy
    equivalent to the input). An empty result proves the complex acyclic;
    a nonempty one whose entries all vanish at the origin proves it is not."""
    algebra = cx.algebra
    diff = cx.differential
    gens = list(cx.gens)
    entries = {g: dict(row) for g, row in cx.entries.items()}
    unit_key = next(iter(algebra.one().coeffs))

    def scalar_of(el: GradedElement):
        c = el.coeffs.get(unit_key)
        if c and len(el.coeffs) == 1:
            return c
        return None

    while True:
        pivot = None
        for a, row in entries.items():
            for b, el in row.items():
                u = scalar_of(el)
                if u is not None:
                    pivot = (a, b, u)
                    break
            if pivot:
                break
        if pivot is None:
            break
        a, b, u = pivot
        a_row = entries.get(a, {})
        for c, _ in gens:
            if c in (a, b):
                continue
            row = entries.get(c, {})
            v = row.get(b)
            if v is None or v.is_zero():
                continue
            # subtract (v/u) times the pivot row; components on the dropped
            # pair are absorbed by the basis change
            factor = v.scale(Fraction(1) / u)
            for dst, el in a_row.items():
                cur = row.get(dst, algebra.zero())
                row[dst] = cur - factor * el
            if not row.get(b, algebra.zero()).is_zero():
                raise ValueError("internal: pivot column failed to clear")
            entries[c] = {k: e for k, e in row.items() if not e.is_zero()}
        gens = [(n, d) for n, d in gens if n not in (a, b)]
        entries.pop(a, None)
        entries.pop(b, None)
        for cname in list(entries):
            entries[cname].pop(a, None)
            entries[cname].pop(b, None)
            if not entries[cname]:
                del entries[cname]
    reduced = FreeComplex(algebra, diff, gens, entries)
    ok, witness = reduced.check_square()
    if not ok:
        raise ValueError(f"internal: reduction broke d^2=0 at '{witness}'")
    return reduced


ChainMap = dict[str, dict[str, GradedElement]]


def chain_map_defect(phi: ChainMap, src: FreeComplex, dst: FreeComplex) -> tuple[str, str, GradedElement] | None:
    """First generator/slot where d_dst(phi(g)) differs from phi(d_src(g))."""

    def phi_apply(vec: dict[str, GradedElement]) -> dict[str, GradedElement]:
        out: dict[str, GradedElement] = {}
        for g, coeff in vec.items():
            for dst_name, a in phi.get(g, {}).items():
                add = coeff * a
                if not add.is_zero():
                    out[dst_name] = out.get(dst_name, dst.algebra.zero()) + add
        return {g: e for g, e in out.items() if not e.is_zero()}

    for g, _ in src.gens:
        lhs = dst.apply(phi_apply({g: src.algebra.one()}))
        rhs = phi_apply(src.apply({g: src.algebra.one()}))
        for name in set(lhs) | set(rhs):
            diff = lhs.get(name, dst.algebra.zero()) - rhs.get(name, dst.algebra.zero())
            if not diff.is_zero():
                return (g, name, diff)
    return None


def compose_maps(first: ChainMap, then: ChainMap, algebra: Algebra) -> ChainMap:
    out: ChainMap = {}
    for g, row in first.items():
        acc: dict[str, GradedElement] = {}
        for mid, a in row.items():
            for dst, b in then.get(mid, {}).items():
                prod = a * b
                if not prod.is_zero():
                    acc[dst] = acc.get(dst, algebra.zero()) + prod
        out[g] = {k: v for k, v in acc.items() if not v.is_zero()}
    return out


def square_total_complex(a: FreeComplex, b: FreeComplex, c: FreeComplex, d: FreeComplex,
                         top: ChainMap, left: ChainMap, right: ChainMap,
                         bottom: ChainMap) -> FreeComplex:
    """Totalization of a strictly commuting square (A top> B, A left> C,
    B right> D, C bottom> D): acyclic iff the square is homotopy Cartesian.

    Generators are prefixed a./b./c./d. with A shifted down and D shifted up;
    the connecting blocks carry the parity dressing that makes the total
    differential square to zero whenever the four complexes are complexes,
    the four maps are chain maps, and the square commutes strictly.
    """
    algebra = a.algebra
    gens: list[tuple[str, int]] = []
    gens += [("a." + n, deg - 1) for n, deg in a.gens]
    gens += [("b." + n, deg) for n, deg in b.gens]
    gens += [("c." + n, deg) for n, deg in c.gens]
    gens += [("d." + n, deg + 1) for n, deg in d.gens]
    offsets: dict[str, int] = {}
    for prefix, corner in (("a.", a), ("b.", b), ("c.", c), ("d.", d)):
        for n, off in corner.offsets.items():
            offsets[prefix + n] = off

    entries: dict[str, dict[str, GradedElement]] = {}

    def put(src: str, dst: str, el: GradedElement) -> None:
        if el.is_zero():
            return
        entries.setdefault(src, {})[dst] = entries.setdefault(src, {}).get(dst, algebra.zero()) + el

    for g, deg in a.gens:
        sign = -1 if deg % 2 else 1
        for h, el in a.entries.get(g, {}).items():
            put("a." + g, "a." + h, el)
        for h, el in top.get(g, {}).items():
            put("a." + g, "b." + h, el.scale(sign))
        for h, el in left.get(g, {}).items():
            put("a." + g, "c." + h, el.scale(sign))
    for g, deg in b.gens:
        sign = -1 if deg % 2 else 1
        for h, el in b.entries.get(g, {}).items():
            put("b." + g, "b." + h, el)
        for h, el in right.get(g, {}).items():
            put("b." + g, "d." + h, el.scale(sign))
    for g, deg in c.gens:
        sign = -1 if deg % 2 else 1
        for h, el in c.entries.get(g, {}).items():
            put("c." + g, "c." + h, el)
        for h, el in bottom.get(g, {}).items():
            put("c." + g, "d." + h, el.scale(-sign))
    for g, _ in d.gens:
        for h, el in d.entries.get(g, {}).items():
            put("d." + g, "d." + h, el)

    return FreeComplex(algebra, a.differential, gens, entries, offsets)


@dataclass
class CartesianReport:
    ok: bool
    commutes: bool
    defect_dims: dict[int, int]
    witness: str | None = None

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "commutes": self.commutes,
            "defect_dims": {str(k): v for k, v in sorted(self.defect_dims.items())},
            "witness": self.witness,
        }


def homotopy_cartesian_check(a: FreeComplex, b: FreeComplex, c: FreeComplex, d: FreeComplex,
                             top: ChainMap, left: ChainMap, right: ChainMap, bottom: ChainMap,
                             bounds: TruncationBounds) -> CartesianReport:
    """Certify a strictly commuting square homotopy Cartesian within bounds.

    Builds the totalization and reports its cohomology dimensions over the
    window; ok means every dimension is zero (the comparison map from the
    top-left corner to the shifted cone of B + C -> D is a quasi-isomorphism
    as far as the budgets can see).
    """
    for cx, label in ((a, "top-left"), (b, "top-right"), (c, "bottom-left"), (d, "bottom-right")):
        ok, w = cx.check_square()
        if not ok:
            raise ValueError(f"{label} complex differential fails d^2=0 on '{w}'")
    for phi, src, dst, label in ((top, a, b, "top"), (left, a, c, "left"),
                                 (right, b, d, "right"), (bottom, c, d, "bottom")):
        defect = chain_map_defect(phi, src, dst)
        if defect is not None:
            raise ValueError(f"{label} map is not a chain map at {defect[0]} -> {defect[1]}")

    via_b = compose_maps(top, right, a.algebra)
    via_c = compose_maps(left, bottom, a.algebra)
    for g, _ in a.gens:
        keys = set(via_b.get(g, {})) | set(via_c.get(g, {}))
        for k in keys:
            diff = via_b.get(g, {}).get(k, a.algebra.zero()) - via_c.get(g, {}).get(k, a.algebra.zero())
            if not diff.is_zero():
                raise ValueError(f"square does not commute at {g} -> {k}")

    total = square_total_complex(a, b, c, d, top, left, right, bottom)
    ok, w = total.check_square()
    if not ok:
        raise ValueError(f"internal: totalization differential fails d^2=0 on '{w}'")
    report = total.cohomology(bounds)
    dims = {k: r.dim for k, r in report.by_degree.items()}
    bad = [k for k, v in dims.items() if v]
    witness = None
    if bad:
        k = bad[0]
        engine = _FreeComplexEngine(total, bounds)
        witness = engine.emit(report.by_degree[k].representatives[0])
    return CartesianReport(not bad, True, dims, witness=witness)
