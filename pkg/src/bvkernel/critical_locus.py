"""Derived critical loci over Q.

Builds Koszul presentations of Crit(f), resolves leftover negative
cohomology by iteratively adjoining antighost generators, validates
almost-critical extensions, and produces Hessian data and the two-term
tangent complex of the critical locus.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .gca import (
    Algebra,
    Derivation,
    Generator,
    GradedElement,
    check_square_zero,
    emit_element,
    parse_element,
    partial_left,
    promote,
)
from .homology import FreeComplex, TruncationBounds, cohomology

PROVENANCES = ("koszul", "koszul_tate", "almost_crit", "ce", "derham", "bv")

# provenances whose base variables must be closed (differential zero)
_STRICT_BASE = ("koszul", "koszul_tate", "almost_crit")


@dataclass
class DgaPresentation:
    base_vars: tuple[Generator, ...]
    extra_gens: tuple[Generator, ...]
    differential: Derivation
    provenance: str
    parent: "DgaPresentation | None" = None

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance '{self.provenance}'")
        if self.differential.degree != 1:
            raise ValueError("presentation differential must have degree +1")
        algebra = self.differential.algebra
        names = {g.name for g in algebra.gens}
        for g in tuple(self.base_vars) + tuple(self.extra_gens):
            if g.name not in names:
                raise ValueError(f"generator '{g.name}' missing from the algebra")
        if self.provenance in _STRICT_BASE:
            for g in self.base_vars:
                if g.degree != 0:
                    raise ValueError(f"base variable '{g.name}' must have degree 0")
                if not self.differential.image_of(g.name).is_zero():
                    raise ValueError(f"base variable '{g.name}' must be closed")

    @property
    def algebra(self) -> Algebra:
        return self.differential.algebra

    def parse(self, text: str) -> GradedElement:
        return self.algebra.parse(text)

    def validate_square_zero(self) -> None:
        ok, witness = check_square_zero(self.differential)
        if not ok:
            raise ValueError(f"differential does not square to zero on '{witness}'")


def polynomial_algebra(names: Sequence[str]) -> Algebra:
    return Algebra([Generator(n, 0, poly_degree=1) for n in names])


def _require_polynomial(f: GradedElement) -> None:
    for g in f.algebra.gens:
        if g.degree != 0 or g.is_odd or g.weight or g.dr_weight:
            raise ValueError("the functional must live in a plain polynomial algebra")


def koszul_complex(f: GradedElement) -> DgaPresentation:
    """Sym over the base of one odd degree -1 generator per variable, with the
    differential contracting against df.

    The odd generators carry poly grading deg(f) - 1 so that the differential
    preserves the poly grading whenever f is homogeneous; truncated
    cohomology is then certified.
    """
    _require_polynomial(f)
    base = f.algebra
    fiber_poly = max((base.mono_poly_degree(m) for m, _ in f.terms()), default=2) - 1
    fiber_poly = max(fiber_poly, 1)
    xis = [Generator("xi_" + g.name, -1, poly_degree=fiber_poly) for g in base.gens]
    algebra = base.extend(xis)
    images = {}
    for g in base.gens:
        images["xi_" + g.name] = promote(partial_left(f, g.name), algebra)
    diff = Derivation(algebra, 1, images, name="koszul differential")
    pres = DgaPresentation(tuple(base.gens), tuple(xis), diff, "koszul")
    pres.validate_square_zero()
    return pres


@dataclass
class KoszulTateResult:
    presentation: DgaPresentation
    log: list[dict]
    cleared: dict[int, bool]
    budget_exhausted: bool

    def log_json(self) -> list[dict]:
        return [dict(entry) for entry in self.log]


def _representative_key(algebra: Algebra, rep: GradedElement):
    lead, _ = rep.terms()[0]
    return (algebra.mono_poly_degree(lead), algebra.graded_lex_key(lead))


def koszul_tate(f: GradedElement, bounds: TruncationBounds,
                max_generators: int = 64) -> KoszulTateResult:
    """Kill negative truncated cohomology degree by degree.

    For k = -1 down to coh_window.lo + 1: while H^k is nonzero within bounds,
    adjoin one generator of degree k-1 whose differential is the
    graded-lex/poly minimal representative, then recompute. Names are
    c<|degree|>_<index>. Runs out of budget gracefully: the partial result
    reports which degrees were cleared.
    """
    if bounds.coh_window is None or bounds.coh_window[0] > -2:
        raise ValueError("koszul_tate needs coh_window.lo <= -2")
    pres = koszul_complex(f)
    log: list[dict] = []
    cleared: dict[int, bool] = {}
    budget_exhausted = False
    iteration = 0
    lo = bounds.coh_window[0]
    for k in range(-1, lo, -1):
        while True:
            report = cohomology(pres, bounds, degrees=[k])
            entry = report.by_degree[k]
            if entry.dim == 0:
                cleared[k] = True
                break
            if len(log) >= max_generators:
                budget_exhausted = True
                cleared[k] = False
                break
            algebra = pres.algebra
            rep = min(entry.representatives,
                      key=lambda r: _representative_key(algebra, r))
            iteration += 1
            index = 1 + sum(1 for e in log if e["degree"] == k - 1)
            name = f"c{-(k - 1)}_{index}"
            poly = max(algebra.mono_poly_degree(m) for m, _ in rep.terms())
            gen = Generator(name, k - 1, poly_degree=poly)
            new_algebra = algebra.extend([gen])
            images = {g.name: promote(pres.differential.image_of(g.name), new_algebra)
                      for g in algebra.gens}
            images[name] = promote(rep, new_algebra)
            diff = Derivation(new_algebra, 1, images, name="koszul-tate differential")
            pres = DgaPresentation(pres.base_vars,
                                   pres.extra_gens + (gen,),
                                   diff, "koszul_tate", parent=pres)
            pres.validate_square_zero()
            log.append({
                "name": name,
                "degree": k - 1,
                "differential": emit_element(rep),
                "iteration": iteration,
            })
        if budget_exhausted:
            break
    return KoszulTateResult(pres, log, cleared, budget_exhausted)


def almost_critical(f: GradedElement,
                    extra: Sequence[tuple[Generator, GradedElement | str]]) -> DgaPresentation:
    """Koszul presentation of f extended by validated antighost generators.

    Each extra generator must have degree <= -2 and a differential that is a
    cycle; the extended differential must square to zero. Generators with
    poly grading 0 are re-tagged with the top poly degree of their
    differential so the grading bookkeeping stays useful.
    """
    koszul = koszul_complex(f)
    for gen, _ in extra:
        if gen.degree >= -1:
            raise ValueError(
                f"extra generator '{gen.name}' has degree {gen.degree}; needs <= -2")
    algebra = koszul.algebra.extend([g for g, _ in extra])
    parsed: dict[str, GradedElement] = {}
    for gen, image in extra:
        el = algebra.parse(image) if isinstance(image, str) else promote(image, algebra)
        parsed[gen.name] = el
    fixed_gens = []
    for gen, _ in extra:
        el = parsed[gen.name]
        if gen.poly_degree == 0 and not el.is_zero():
            poly = max(algebra.mono_poly_degree(m) for m, _ in el.terms())
            fixed_gens.append(dataclasses.replace(gen, poly_degree=poly))
        else:
            fixed_gens.append(gen)
    if fixed_gens != [g for g, _ in extra]:
        # same generator names and order, only poly tags changed: the
        # monomial encoding carries over verbatim
        algebra = koszul.algebra.extend(fixed_gens)
        parsed = {name: GradedElement(algebra, dict(el.coeffs))
                  for name, el in parsed.items()}
    images = {g.name: promote(koszul.differential.image_of(g.name), algebra)
              for g in koszul.algebra.gens}
    images.update(parsed)
    diff = Derivation(algebra, 1, images, name="almost-critical differential")
    for gen in fixed_gens:
        img = diff.image_of(gen.name)
        residual = diff.apply(img)
        if not residual.is_zero():
            raise ValueError(
                f"differential of '{gen.name}' is not a cycle: "
                f"d({emit_element(img)}) = {emit_element(residual)}")
    pres = DgaPresentation(koszul.base_vars,
                           koszul.extra_gens + tuple(fixed_gens),
                           diff, "almost_crit", parent=koszul)
    pres.validate_square_zero()
    return pres


def evaluate_polynomial(elem: GradedElement, point: Mapping[str, Fraction | int]) -> Fraction:
    total = Fraction(0)
    for m, c in elem.terms():
        value = Fraction(c)
        for idx, e in m:
            name = elem.algebra.gens[idx].name
            if name not in point:
                raise ValueError(f"no value supplied for '{name}'")
            value *= Fraction(point[name]) ** e
        total += value
    return total


@dataclass
class HessianData:
    matrix: list[list[GradedElement]]
    evaluation_point: dict[str, Fraction]
    matrix_at_point: list[list[Fraction]]
    normal_rank: int


def hessian_form(f: GradedElement, point: Mapping[str, Fraction | int]) -> HessianData:
    """Symmetric second-partials matrix at a strict critical point."""
    _require_polynomial(f)
    base = f.algebra
    pt = {g.name: Fraction(point[g.name]) for g in base.gens}
    for g in base.gens:
        v = evaluate_polynomial(partial_left(f, g.name), pt)
        if v != 0:
            raise ValueError(
                f"point is not critical: d/d{g.name} evaluates to {v}")
    names = [g.name for g in base.gens]
    matrix = [[partial_left(partial_left(f, a), b) for b in names] for a in names]
    at_point = [[evaluate_polynomial(entry, pt) for entry in row] for row in matrix]
    rows = [{j: v for j, v in enumerate(row) if v} for row in at_point]
    from . import linalg
    rank = linalg.rank(rows, range(len(names)))
    return HessianData(matrix, pt, at_point, rank)


def tangent_complex_crit(f: GradedElement) -> FreeComplex:
    """Two-term tangent complex of Crit(f) over its Koszul presentation.

    Tangent directions v_<var> in degree 0, one-form directions w_<var> in
    degree 1, connecting map = the symbolic Hessian.
    """
    koszul = koszul_complex(f)
    algebra = koszul.algebra
    base = f.algebra
    names = [g.name for g in base.gens]
    gens = [("v_" + n, 0) for n in names] + [("w_" + n, 1) for n in names]
    entries: dict[str, dict[str, GradedElement]] = {}
    for a in names:
        row = {}
        for b in names:
            h = promote(partial_left(partial_left(f, a), b), algebra)
            if not h.is_zero():
                row["w_" + b] = h
        if row:
            entries["v_" + a] = row
    cx = FreeComplex(algebra, koszul.differential, gens, entries)
    ok, witness = cx.check_square()
    if not ok:
        raise ValueError(f"internal: tangent complex fails d^2=0 on '{witness}'")
    return cx
