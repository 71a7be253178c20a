"""Differential forms on semi-free presentations.

Adjoins one exterior letter d<name> per generator, carrying de Rham weight
1. The exterior derivative sends each generator to its letter; the internal
differential extends by anticommuting with it. Weight-graded mixed
structures, window realizations, closed-form ladders, non-degeneracy of
2-forms, the two filtrations, and the classification of differentials by
their weight shifts all live here.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .gca import (
    Algebra,
    Derivation,
    Generator,
    GradedElement,
    Monomial,
    check_square_zero,
    emit_element,
    promote,
)
from . import linalg
from .critical_locus import DgaPresentation
from .homology import (
    CohomologyReport,
    FreeComplex,
    TruncationBounds,
    _AlgebraEngine,
    _degree_report,
    eliminate_scalar_pairs,
)


def d_letter(name: str) -> str:
    return "d" + name


@dataclass
class GradedMixedComplex:
    """A complex with an extra nonnegative weight grading and a family of
    degree +1 maps raising the weight by k >= 1, whose total sum with the
    internal differential squares to zero."""

    presentation: DgaPresentation
    mixed: dict[int, Derivation]
    weight_kind: str = "dr_weight"
    source: DgaPresentation | None = None

    def __post_init__(self) -> None:
        if self.weight_kind not in ("dr_weight", "weight"):
            raise ValueError("weight_kind must be 'dr_weight' or 'weight'")
        algebra = self.presentation.algebra
        for k, eps in self.mixed.items():
            if k < 1:
                raise ValueError("mixed maps are indexed by k >= 1")
            if eps.degree != 1:
                raise ValueError(f"mixed map at k={k} must have degree +1")
            for g in algebra.gens:
                img = eps.image_of(g.name)
                for m, _ in img.terms():
                    if self.mono_weight(m) - self.gen_weight(g) != k:
                        raise ValueError(
                            f"mixed map at k={k} shifts weight wrongly on '{g.name}'")

    @property
    def algebra(self) -> Algebra:
        return self.presentation.algebra

    def mono_weight(self, m: Monomial) -> int:
        if self.weight_kind == "dr_weight":
            return self.algebra.mono_dr_weight(m)
        return self.algebra.mono_weight(m)

    def gen_weight(self, g: Generator) -> int:
        return g.dr_weight if self.weight_kind == "dr_weight" else g.weight

    def total_differential(self) -> Derivation:
        algebra = self.algebra
        images = {}
        for g in algebra.gens:
            el = self.presentation.differential.image_of(g.name)
            for eps in self.mixed.values():
                el = el + eps.image_of(g.name)
            if not el.is_zero():
                images[g.name] = el
        return Derivation(algebra, 1, images, name="total differential")

    def mixed_square_check(self) -> dict:
        """Per weight jump k: sum over i+j=k of eps_i eps_j plus the
        anticommutator of the internal differential with eps_k, on every
        generator. Jump 0 is the internal square."""
        algebra = self.algebra
        d = self.presentation.differential
        report: dict = {}
        top = 2 * max(self.mixed.keys(), default=0)
        for k in range(top + 1):
            holds, witness = True, None
            for g in algebra.gens:
                acc = algebra.zero()
                if k == 0:
                    acc = d.apply(d.image_of(g.name))
                else:
                    ek = self.mixed.get(k)
                    if ek is not None:
                        acc = acc + d.apply(ek.image_of(g.name)) \
                            + ek.apply(d.image_of(g.name))
                    for i in range(1, k):
                        ei, ej = self.mixed.get(i), self.mixed.get(k - i)
                        if ei is not None and ej is not None:
                            acc = acc + ei.apply(ej.image_of(g.name))
                if not acc.is_zero():
                    holds, witness = False, f"on {g.name}: {emit_element(acc)}"
                    break
            report[k] = {"holds": holds, "witness": witness}
        report["valid"] = all(v["holds"] for k, v in report.items() if isinstance(k, int))
        return report


def de_rham(B: DgaPresentation) -> tuple[GradedMixedComplex, DgaPresentation]:
    """Exterior algebra on B: one letter d<name> per generator, total degree
    deg+1, de Rham weight one higher; the exterior derivative is the mixed
    map and the internal differential extends with d(d<name>) = -d_dR(d(name))
    so the two anticommute and the total squares to zero."""
    base_alg = B.algebra
    d_gens = []
    for g in base_alg.gens:
        if base_alg.has_gen(d_letter(g.name)):
            raise ValueError(f"name '{d_letter(g.name)}' already taken")
        d_gens.append(Generator(d_letter(g.name), g.degree + 1, weight=g.weight,
                                dr_weight=g.dr_weight + 1, poly_degree=g.poly_degree))
    algebra = base_alg.extend(d_gens)
    ddr = Derivation(algebra, 1,
                     {g.name: algebra.el(d_letter(g.name)) for g in base_alg.gens},
                     name="exterior derivative")
    images = {}
    for g in base_alg.gens:
        img = promote(B.differential.image_of(g.name), algebra)
        if not img.is_zero():
            images[g.name] = img
        d_img = ddr.apply(img).scale(-1)
        if not d_img.is_zero():
            images[d_letter(g.name)] = d_img
    internal = Derivation(algebra, 1, images, name="internal differential")
    pres = DgaPresentation(B.base_vars,
                           tuple(g for g in algebra.gens
                                 if g.name not in {v.name for v in B.base_vars}),
                           internal, "derham")
    gmc = GradedMixedComplex(pres, {1: ddr}, "dr_weight", source=B)
    ok, witness = check_square_zero(gmc.total_differential())
    if not ok:
        raise ValueError(f"internal: total differential fails on '{witness}'")
    return gmc, pres


def exterior_derivative(E: GradedMixedComplex) -> Derivation:
    eps = E.mixed.get(1)
    if eps is None:
        raise ValueError("no weight-1 mixed map present")
    return eps


def gmc_from_weight_split(pres: DgaPresentation,
                          weight_kind: str = "weight") -> GradedMixedComplex:
    """Split a presentation's differential by how much each generator-image
    monomial raises the chosen weight: the weight-preserving part becomes
    the internal differential, each jump k >= 1 a mixed map. Rejects
    weight-lowering differentials."""
    algebra = pres.algebra
    if weight_kind == "dr_weight":
        mono_w, gen_w = algebra.mono_dr_weight, lambda g: g.dr_weight
    else:
        mono_w, gen_w = algebra.mono_weight, lambda g: g.weight
    buckets: dict[int, dict[str, GradedElement]] = {}
    for g in algebra.gens:
        img = pres.differential.image_of(g.name)
        for w, part in img.split_by(mono_w).items():
            k = w - gen_w(g)
            if k < 0:
                raise ValueError(
                    f"differential lowers the weight on '{g.name}': {emit_element(part)}")
            buckets.setdefault(k, {})[g.name] = part
    internal = Derivation(algebra, 1, buckets.get(0, {}), name="weight-preserving part")
    inner = dataclasses.replace(pres, differential=internal)
    mixed = {k: Derivation(algebra, 1, images, name=f"weight jump {k}")
             for k, images in buckets.items() if k >= 1}
    return GradedMixedComplex(inner, mixed, weight_kind, source=pres)


# -- realization -------------------------------------------------------------------


@dataclass
class RealizedComplex:
    complex: GradedMixedComplex
    window: tuple[int, int]
    total: Derivation

    def keep(self, m: Monomial) -> bool:
        w = self.complex.mono_weight(m)
        return self.window[0] <= w <= self.window[1]

    def cohomology(self, bounds: TruncationBounds,
                   degrees: Iterable[int] | None = None) -> CohomologyReport:
        if degrees is None:
            if bounds.coh_window is None:
                raise ValueError("no degrees given and bounds carry no coh_window")
            lo, hi = bounds.coh_window
            degrees = range(lo, hi + 1)
        engine = _AlgebraEngine(self.complex.algebra, self.total, bounds,
                                keep=self.keep)
        return CohomologyReport({k: _degree_report(engine, k) for k in degrees})

    def basis(self, degree: int, bounds: TruncationBounds) -> list[Monomial]:
        engine = _AlgebraEngine(self.complex.algebra, self.total, bounds,
                                keep=self.keep)
        return engine.basis(degree)


def realization(E: GradedMixedComplex, window: tuple[int, int]) -> RealizedComplex:
    """Direct sum of the weight components over the window with the total
    differential; leakage past the window top shows up as uncertified
    degrees in the cohomology report."""
    lo, hi = window
    if lo > hi:
        raise ValueError("empty weight window")
    if lo < 0:
        raise ValueError("realization needs a nonnegative weight window")
    for g in E.algebra.gens:
        if E.gen_weight(g) < 0:
            raise ValueError(f"generator '{g.name}' carries negative weight")
    return RealizedComplex(E, window, E.total_differential())


# -- closed forms -------------------------------------------------------------------


@dataclass
class ClosedFormSequence:
    weight: int
    shift: int
    components: list[GradedElement]


@dataclass
class ClosedFormReport:
    ok: bool
    failing_index: int | None
    underlying_closed: bool

    def to_json(self) -> dict:
        return {"ok": self.ok, "failing_index": self.failing_index,
                "underlying_closed": self.underlying_closed}


def check_closed_form(E: GradedMixedComplex, omega: ClosedFormSequence) -> ClosedFormReport:
    """The ladder: the base component is closed for the internal
    differential and each exterior derivative is cancelled by the internal
    differential of the next component (with a trailing zero)."""
    if not omega.components:
        raise ValueError("empty component list")
    algebra = E.algebra
    p, n = omega.weight, omega.shift
    for i, w in enumerate(omega.components):
        if w.algebra is not algebra:
            raise ValueError("component lives in the wrong algebra")
        if w.is_zero():
            continue
        if not w.is_homogeneous() or w.degree() != n + p:
            raise ValueError(f"component {i} is not homogeneous of degree {n + p}")
        for m, _ in w.terms():
            if E.mono_weight(m) != p + i:
                raise ValueError(f"component {i} is not of weight {p + i}")
    delta = E.presentation.differential
    ddr = exterior_derivative(E)
    underlying = delta.apply(omega.components[0]).is_zero()
    if not underlying:
        return ClosedFormReport(False, -1, False)
    comps = list(omega.components) + [algebra.zero()]
    for i in range(len(omega.components)):
        if not (ddr.apply(comps[i]) + delta.apply(comps[i + 1])).is_zero():
            return ClosedFormReport(False, i, True)
    return ClosedFormReport(True, None, True)


# -- contraction and form/vector conversion ------------------------------------------


def contraction(E: GradedMixedComplex, X: Derivation) -> Derivation:
    """Interior product against a derivation of the underlying presentation:
    zero on every generator, and on d<name> the (parity-adjusted) value of
    the derivation. A derivation of degree deg(X) - 1."""
    algebra = E.algebra
    sign = -1 if X.degree % 2 == 0 else 1  # (-1)^(|X|+1)
    images = {}
    for g in algebra.gens:
        dn = d_letter(g.name)
        if not algebra.has_gen(dn):
            continue
        val = X.image_of(g.name) if X.algebra is algebra else \
            promote(X.image_of(g.name), algebra)
        if not val.is_zero():
            images[dn] = val.scale(sign)
    return Derivation(algebra, X.degree - 1, images,
                      name=f"contraction against {X.name or 'X'}")


def one_form_to_vector(E: GradedMixedComplex, el: GradedElement) -> dict[str, GradedElement]:
    """Read a de Rham weight-1 element as a coefficient vector on the
    letters: each monomial's single d<name> is moved to the right end
    (Koszul sign) and stripped."""
    algebra = E.algebra
    out: dict[str, GradedElement] = {}
    for m, c in el.terms():
        if algebra.mono_dr_weight(m) != 1:
            raise ValueError("element is not of de Rham weight 1")
        pos = None
        for idx, (i, e) in enumerate(m):
            if algebra.gens[i].dr_weight > 0:
                pos = idx
                break
        i, e = m[pos]
        name = algebra.gens[i].name[1:]
        rest = m[:pos] + m[pos + 1:]
        suffix_parity = sum(algebra.gens[j].degree * f for j, f in m[pos + 1:]) % 2
        d_parity = algebra.gens[i].degree % 2
        sign = -1 if (suffix_parity * d_parity) % 2 else 1
        cur = out.get(name, algebra.zero())
        out[name] = cur + algebra.monomial(rest, c * sign)
    return {k: v for k, v in out.items() if not v.is_zero()}


def vector_to_one_form(E: GradedMixedComplex, vec: Mapping[str, GradedElement]) -> GradedElement:
    algebra = E.algebra
    out = algebra.zero()
    for name, coeff in vec.items():
        out = out + promote(coeff, algebra) * algebra.el(d_letter(name))
    return out


# -- tangent and one-form complexes ---------------------------------------------------


def tangent_free_complex(E: GradedMixedComplex, names: Sequence[str] | None = None,
                         prefix: str = "t_") -> FreeComplex:
    """Free complex of coordinate derivations of the source presentation,
    with differential the commutator with the internal differential:
    t_<g> carries degree -deg(g) and maps to -(-1)^{deg g} sum over h of
    (d g-extraction of the differential of h) t_<h>."""
    from .gca import partial_left
    src = E.source if E.source is not None else E.presentation
    base_alg = src.algebra
    algebra = E.algebra
    chosen = [g for g in base_alg.gens if names is None or g.name in names]
    gens = [(prefix + g.name, -g.degree) for g in chosen]
    chosen_names = {g.name for g in chosen}
    entries: dict[str, dict[str, GradedElement]] = {}
    for g in chosen:
        sign = -1 if g.degree % 2 == 0 else 1  # -(-1)^{deg g}
        row = {}
        for h in chosen:
            coeff = partial_left(src.differential.image_of(h.name), g.name)
            if not coeff.is_zero():
                row[prefix + h.name] = promote(coeff, algebra).scale(sign)
        if row:
            entries[prefix + g.name] = row
    offsets = {prefix + g.name: -g.poly_degree for g in chosen}
    cx = FreeComplex(algebra, E.presentation.differential, gens, entries, offsets)
    ok, witness = cx.check_square()
    if not ok:
        raise ValueError(f"internal: tangent complex fails d^2=0 on '{witness}'")
    return cx


def one_form_free_complex(E: GradedMixedComplex, names: Sequence[str] | None = None,
                          prefix: str = "w_") -> FreeComplex:
    """Free complex spanned by the exterior letters of the source
    presentation (the de Rham weight-1 component), one generator w_<g> of
    degree deg(g)+1 with entries read off the internal differential."""
    src = E.source if E.source is not None else E.presentation
    base_alg = src.algebra
    algebra = E.algebra
    chosen = [g for g in base_alg.gens if names is None or g.name in names]
    gens = [(prefix + g.name, g.degree + 1) for g in chosen]
    entries: dict[str, dict[str, GradedElement]] = {}
    for g in chosen:
        img = E.presentation.differential.image_of(d_letter(g.name))
        vec = one_form_to_vector(E, img) if not img.is_zero() else {}
        row = {}
        for h, coeff in vec.items():
            row[prefix + h] = coeff
        if row:
            entries[prefix + g.name] = row
    offsets = {prefix + g.name: g.poly_degree for g in chosen}
    cx = FreeComplex(algebra, E.presentation.differential, gens, entries, offsets)
    ok, witness = cx.check_square()
    if not ok:
        raise ValueError(f"internal: one-form complex fails d^2=0 on '{witness}'")
    return cx


def mapping_cone(phi: Mapping[str, Mapping[str, GradedElement]], src: FreeComplex,
                 dst: FreeComplex, src_prefix: str = "s.", dst_prefix: str = "r.") -> FreeComplex:
    """Cone of a block map between free complexes over one algebra: the
    source shifted down, connected by the block as given (no implicit sign;
    the square-zero gate enforces graded compatibility with the two
    differentials)."""
    algebra = src.algebra
    gens = [(src_prefix + n, d - 1) for n, d in src.gens]
    gens += [(dst_prefix + n, d) for n, d in dst.gens]
    entries: dict[str, dict[str, GradedElement]] = {}
    for n, d in src.gens:
        row: dict[str, GradedElement] = {}
        for h, el in src.entries.get(n, {}).items():
            row[src_prefix + h] = el
        for h, el in phi.get(n, {}).items():
            if not el.is_zero():
                row[dst_prefix + h] = el
        if row:
            entries[src_prefix + n] = row
    for n, _ in dst.gens:
        row = {dst_prefix + h: el for h, el in dst.entries.get(n, {}).items()}
        if row:
            entries[dst_prefix + n] = row
    offsets = {src_prefix + n: off for n, off in src.offsets.items()}
    offsets.update({dst_prefix + n: off for n, off in dst.offsets.items()})
    cone = FreeComplex(algebra, src.differential, gens, entries, offsets)
    ok, witness = cone.check_square()
    if not ok:
        raise ValueError(f"internal: cone differential fails d^2=0 on '{witness}'")
    return cone


@dataclass
class NondegeneracyReport:
    ok: bool
    rank_defect: int
    residual_gens: list[tuple[str, int]]
    decided: bool
    witness: str | None = None

    def to_json(self) -> dict:
        return {"ok": self.ok, "rank_defect": self.rank_defect,
                "residual_gens": [list(g) for g in self.residual_gens],
                "decided": self.decided, "witness": self.witness}


def nondegeneracy_check(E: GradedMixedComplex, omega0: GradedElement,
                        bounds: TruncationBounds | None = None) -> NondegeneracyReport:
    """Pair coordinate derivations into the weight-1 letters through the
    2-form and decide whether the comparison map is a quasi-isomorphism:
    its cone is reduced by exact scalar-pair elimination, so an empty
    residual proves acyclicity and a residual with no constant entry terms
    disproves it. The form must be internally closed, of de Rham weight 2
    and total degree 1 (the shifted-symplectic bookkeeping this kernel
    uses)."""
    algebra = E.algebra
    if not omega0.is_zero():
        if not omega0.is_homogeneous() or omega0.degree() != 1:
            raise ValueError("the 2-form must be homogeneous of total degree 1")
        for m, _ in omega0.terms():
            if algebra.mono_dr_weight(m) != 2:
                raise ValueError("the 2-form must have de Rham weight 2")
    if not E.presentation.differential.apply(omega0).is_zero():
        raise ValueError("the 2-form is not closed for the internal differential")
    src = E.source if E.source is not None else E.presentation
    tangent = tangent_free_complex(E)
    forms = one_form_free_complex(E)
    phi: dict[str, dict[str, GradedElement]] = {}
    for g in src.algebra.gens:
        x = Derivation(algebra, -g.degree, {g.name: algebra.one()},
                       name=f"d/d{g.name}")
        pairing = contraction(E, x).apply(omega0)
        vec = one_form_to_vector(E, pairing) if not pairing.is_zero() else {}
        phi["t_" + g.name] = {"w_" + h: coeff for h, coeff in vec.items()}
    cone = mapping_cone(phi, tangent, forms)
    reduced = eliminate_scalar_pairs(cone)

    unit_key = next(iter(algebra.one().coeffs))
    src_names = [g.name for g in src.algebra.gens]
    rows = []
    for g in src_names:
        row = {h: el.coeffs.get(unit_key, Fraction(0))
               for h, el in phi.get("t_" + g, {}).items()}
        rows.append({h: c for h, c in row.items() if c})
    pairing_rank = linalg.rank(rows, ["w_" + h for h in src_names])
    rank_defect = len(src_names) - pairing_rank

    if not reduced.gens:
        return NondegeneracyReport(True, rank_defect, [], True)
    stalled = any(el.coeffs.get(unit_key) for row in reduced.entries.values()
                  for el in row.values())
    witness = (f"residual complex on {len(reduced.gens)} generators"
               if not stalled else
               "residual complex keeps constant entry terms; elimination inconclusive")
    return NondegeneracyReport(False, rank_defect, list(reduced.gens),
                               not stalled, witness)


# -- filtrations ------------------------------------------------------------------


@dataclass
class FiltrationComponent:
    complex: GradedMixedComplex
    level: int
    kind: str
    violations: list[tuple[str, str]] = field(default_factory=list)

    @property
    def stable(self) -> bool:
        return not self.violations

    def _mono_weight(self, m: Monomial) -> int:
        algebra = self.complex.algebra
        if self.kind == "deRham":
            return algebra.mono_dr_weight(m)
        return algebra.mono_weight(m)

    def contains(self, el: GradedElement) -> bool:
        return all(self._mono_weight(m) >= self.level for m, _ in el.terms())

    def basis(self, degree: int, bounds: TruncationBounds) -> list[Monomial]:
        from .homology import basis_enumerate
        return [m for m in basis_enumerate(self.complex.algebra, degree, bounds)
                if self._mono_weight(m) >= self.level]


def filtration_component(E: GradedMixedComplex, p: int, kind: str) -> FiltrationComponent:
    """Span of the monomials of de Rham weight >= p (kind 'deRham') or ghost
    weight >= p (kind 'CE'); stability under the total differential is
    checked generator-wise and failures are reported on the component."""
    if kind not in ("deRham", "CE"):
        raise ValueError("kind must be 'deRham' or 'CE'")
    algebra = E.algebra
    total = E.total_differential()
    comp = FiltrationComponent(E, p, kind)
    for g in algebra.gens:
        gw = g.dr_weight if kind == "deRham" else g.weight
        img = total.image_of(g.name)
        for m, c in img.terms():
            if comp._mono_weight(m) < gw:
                comp.violations.append(
                    (g.name, emit_element(algebra.monomial(m, c))))
    return comp


# -- classification of differentials ------------------------------------------------


@dataclass
class DifferentialClassification:
    shifts: dict[tuple[int, int], dict[str, GradedElement]]
    violations: list[tuple[tuple[int, int], str, str]]

    @property
    def clean(self) -> bool:
        return not self.violations

    def support(self) -> list[tuple[int, int]]:
        return sorted(self.shifts.keys())

    def component(self, algebra: Algebra, shift: tuple[int, int]) -> Derivation:
        images = self.shifts.get(shift, {})
        return Derivation(algebra, 1, images, name=f"component {shift}")


ALLOWED_SHIFTS_NOTE = "allowed: (0,1) exterior step and (k,0) for k >= 0"


def classify_differential(D: Derivation) -> DifferentialClassification:
    """Split a degree +1 derivation on a doubly weighted algebra by the
    (ghost-weight shift, de Rham-weight shift) of each generator-image
    monomial. Components outside {(0,1)} union {(k,0), k >= 0} are
    reported as violations."""
    algebra = D.algebra
    shifts: dict[tuple[int, int], dict[str, GradedElement]] = {}
    violations = []
    for g in algebra.gens:
        img = D.image_of(g.name)
        for m, c in img.terms():
            cs = algebra.mono_weight(m) - g.weight
            ds = algebra.mono_dr_weight(m) - g.dr_weight
            part = algebra.monomial(m, c)
            bucket = shifts.setdefault((cs, ds), {})
            cur = bucket.get(g.name, algebra.zero())
            bucket[g.name] = cur + part
            ok = (cs == 0 and ds == 1) or (cs >= 0 and ds == 0)
            if not ok:
                violations.append(((cs, ds), g.name, emit_element(part)))
    return DifferentialClassification(shifts, violations)
