"""Strict shifted-symplectic structure on a resolved critical locus.

The carrier is a graded-commutative algebra whose generators come in
pairs of total degree -1: base variables against their degree -1
conjugates, and every depth >= 2 resolution generator against a
positive-degree ghost. On top of the pairing this module provides the
constant two-form, the odd Poisson bracket with Hamiltonian vector
fields, the fiber-contraction retract of the exterior-letter complex
with its perturbation series, the construction of the degree-0 charge
generating a given differential, master-equation residual reports, and
a homotopy-Cartesian square comparing the tangent complex of the
resolution against its one-forms through the pairing.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping

from .algebroid import AlgebroidPresentation, validate_algebroid
from .critical_locus import DgaPresentation, KoszulTateResult, almost_critical, \
    koszul_complex, koszul_tate
from .derham import (
    GradedMixedComplex,
    classify_differential,
    contraction,
    d_letter,
    de_rham,
    exterior_derivative,
    one_form_free_complex,
    one_form_to_vector,
    tangent_free_complex,
)
from .gca import (
    Algebra,
    Derivation,
    Generator,
    GradedElement,
    Monomial,
    check_square_zero,
    emit_element,
    partial_left,
    partial_right,
    promote,
    substitute,
)
from .homology import (
    CartesianReport,
    ChainMap,
    FreeComplex,
    TruncationBounds,
    _gen_cap,
    basis_enumerate,
    homotopy_cartesian_check,
)
from .linalg import kernel_of_columns, rank, reduce_against, rref


def _momentum_side(degree: int) -> bool:
    # each pair holds exactly one generator of degree -1 or >= 1
    return degree == -1 or degree >= 1


def _pairs_of(algebra: Algebra, pairing: Mapping[str, str]) -> list[tuple[str, str]]:
    out = []
    for g in algebra.gens:
        if not _momentum_side(g.degree):
            out.append((g.name, pairing[g.name]))
    return out


@dataclass
class BvPresentation:
    """A resolved critical locus with ghosts and a degree -1 pairing.

    base_crit carries the resolution without ghosts; presentation carries
    the full differential on the algebra extended by the ghosts."""

    base_crit: DgaPresentation
    ghosts: tuple[Generator, ...]
    functional: GradedElement
    pairing: dict[str, str]
    presentation: DgaPresentation

    def __post_init__(self) -> None:
        if self.presentation.provenance != "bv":
            raise ValueError("the full presentation must carry provenance 'bv'")
        algebra = self.algebra
        for g in self.base_crit.algebra.gens:
            if not algebra.has_gen(g.name) or algebra.gen_by_name(g.name) != g:
                raise ValueError(
                    f"carrier is missing the resolution generator '{g.name}'")
        for name in self.pairing:
            if not algebra.has_gen(name):
                raise ValueError(f"pairing mentions unknown generator '{name}'")
        for g in algebra.gens:
            mate = self.pairing.get(g.name)
            if mate is None:
                raise ValueError(f"unpaired generator '{g.name}'")
            if mate == g.name or self.pairing.get(mate) != g.name:
                raise ValueError(f"pairing is not an involution at '{g.name}'")
            if g.degree + algebra.gen_by_name(mate).degree != -1:
                raise ValueError(
                    f"pair ({g.name}, {mate}) does not have total degree -1")
        ghost_names = {g.name for g in self.ghosts}
        for g in self.ghosts:
            if g.degree < 1 or g.weight != 1:
                raise ValueError(
                    f"ghost '{g.name}' must have positive degree and weight 1")
        for g in algebra.gens:
            if g.name not in ghost_names and g.weight != 0:
                raise ValueError(
                    f"non-ghost generator '{g.name}' must carry weight 0")
        deep = {self.pairing[g.name] for g in algebra.gens if g.degree <= -2}
        if deep != ghost_names:
            raise ValueError("ghosts must pair exactly with the degree <= -2 generators")
        f = self.functional
        if not f.is_zero() and (not f.is_homogeneous() or f.degree() != 0):
            raise ValueError("the functional must be homogeneous of degree 0")

    @property
    def algebra(self) -> Algebra:
        return self.presentation.algebra

    def partner(self, name: str) -> str:
        mate = self.pairing.get(name)
        if mate is None:
            raise ValueError(f"unpaired generator '{name}'")
        return mate

    def pairs(self) -> list[tuple[str, str]]:
        """(coordinate, momentum) pairs ordered by the coordinate's position."""
        return _pairs_of(self.algebra, self.pairing)


# -- bracket and Hamiltonian fields -------------------------------------------------


def _bracket(algebra: Algebra, pairs: list[tuple[str, str]],
             a: GradedElement, b: GradedElement) -> GradedElement:
    out = algebra.zero()
    for coord, mom in pairs:
        out = out + partial_right(a, coord) * partial_left(b, mom)
        out = out - partial_right(a, mom) * partial_left(b, coord)
    return out


def _to_carrier(bv: BvPresentation, el: GradedElement) -> GradedElement:
    return el if el.algebra is bv.algebra else promote(el, bv.algebra)


def shifted_poisson_bracket(bv: BvPresentation, a: GradedElement,
                            b: GradedElement) -> GradedElement:
    """Degree +1 odd bracket with value 1 on each (coordinate, momentum)
    pair, extended to products as a biderivation with Koszul signs."""
    return _bracket(bv.algebra, bv.pairs(), _to_carrier(bv, a), _to_carrier(bv, b))


def hamiltonian_vf(bv: BvPresentation, Q: GradedElement) -> Derivation:
    """The derivation {Q, -}, of degree deg(Q) + 1."""
    algebra = bv.algebra
    Q = _to_carrier(bv, Q)
    degree = 1 if Q.is_zero() else Q.degree() + 1
    pairs = bv.pairs()
    images = {}
    for g in algebra.gens:
        img = _bracket(algebra, pairs, Q, algebra.el(g.name))
        if not img.is_zero():
            images[g.name] = img
    return Derivation(algebra, degree, images, name="hamiltonian vector field")


def strict_symplectic(bv: BvPresentation,
                      E: GradedMixedComplex | None = None) -> GradedElement:
    """The constant pairing two-form: the sum over pairs of
    d<coordinate> * d<momentum>, of exterior weight 2 and total degree 1."""
    if E is None:
        E, _ = de_rham(bv.presentation)
    algebra = E.algebra
    out = algebra.zero()
    for coord, mom in bv.pairs():
        for name in (coord, mom):
            if not algebra.has_gen(d_letter(name)):
                raise ValueError(f"no exterior letter for generator '{name}'")
        out = out + algebra.el(d_letter(coord)) * algebra.el(d_letter(mom))
    return out


def _nominal_charge(algebra: Algebra, f: GradedElement,
                    eta_mu: list[tuple[str, GradedElement]]) -> GradedElement:
    q = promote(f, algebra)
    for eta, mu in eta_mu:
        q = q + algebra.el(eta) * promote(mu, algebra)
    return q


def _generated_presentation(base: DgaPresentation, algebra: Algebra,
                            pairing: dict[str, str], q: GradedElement,
                            failure: str) -> DgaPresentation:
    """Differential {q, -} on the extended carrier, gated on the master
    equation and on squaring to zero."""
    pairs = _pairs_of(algebra, pairing)
    residual = _bracket(algebra, pairs, q, q)
    if not residual.is_zero():
        raise ValueError(f"{failure}: master-equation residual {emit_element(residual)}")
    images = {}
    for g in algebra.gens:
        img = _bracket(algebra, pairs, q, algebra.el(g.name))
        if not img.is_zero():
            images[g.name] = img
    diff = Derivation(algebra, 1, images, name="pairing-generated differential")
    ok, witness = check_square_zero(diff)
    if not ok:
        raise ValueError(
            f"internal: generated differential fails to square to zero on '{witness}'")
    base_names = {v.name for v in base.base_vars}
    extra = tuple(g for g in algebra.gens if g.name not in base_names)
    return DgaPresentation(base.base_vars, extra, diff, "bv", parent=base)


def _close_master_equation(algebra: Algebra, pairing: dict[str, str],
                           q: GradedElement, ghost_names: set[str],
                           poly_max: int, rounds: int = 16) -> GradedElement:
    """Correct a nominal charge order by order in the ghost count until
    the master-equation residual vanishes exactly.

    At each round the lowest nonzero ghost-count component of {q, q} is
    cancelled by solving the exact linear system 2{q, u} = -residual for
    a degree-0 correction u of that ghost count within the polynomial
    budget; brackets never lower the ghost count of the correction, so
    the residual's lowest count strictly increases and the loop ends."""
    pairs = _pairs_of(algebra, pairing)
    ghost_idx = {algebra.index(n) for n in ghost_names}

    def count(m: Monomial) -> int:
        return sum(e for i, e in m if i in ghost_idx)

    for _ in range(rounds):
        residual = _bracket(algebra, pairs, q, q)
        if residual.is_zero():
            return q
        by_count = residual.split_by(count)
        m = min(by_count)
        if m < 2:
            raise ValueError(
                "the charge residual has a ghost-linear component; the input"
                " differential is not a resolution differential:"
                f" {emit_element(by_count[m])}")
        solve_bounds = TruncationBounds(poly_degree_max=poly_max, weight_max=m)
        unknowns = [w for w in basis_enumerate(algebra, 0, solve_bounds)
                    if count(w) == m]
        rows = []
        for j, w in enumerate(unknowns):
            img = _bracket(algebra, pairs, q, algebra.monomial(w)).scale(2)
            part = img.split_by(count).get(m)
            row = {} if part is None else {("m", k): v for k, v in part.coeffs.items()}
            row[("u", j)] = Fraction(1)
            rows.append(row)
        b_row = {("m", k): -v for k, v in by_count[m].coeffs.items()}
        mono_cols = sorted({k for row in rows for k in row if k[0] == "m"}
                           | set(b_row))
        cols = mono_cols + [("u", j) for j in range(len(unknowns))]
        red = reduce_against(b_row, rref(rows, cols))
        if any(k[0] == "m" for k in red):
            raise ValueError(
                "cannot close the master equation within the polynomial"
                f" budget {poly_max} at ghost count {m}")
        q = q + sum((algebra.monomial(unknowns[j], -v)
                     for (_, j), v in red.items()), algebra.zero())
    raise ValueError(f"master equation not closed after {rounds} rounds")


def bv_koszul_tate(f: GradedElement, bounds: TruncationBounds,
                   ghost_prefix: str = "eta_") -> tuple[BvPresentation, KoszulTateResult]:
    """Pair the resolution of f with ghosts: one per depth >= 2 generator,
    named by prefixing the generator, with the differential generated by
    the charge f + sum of ghost * resolved cycle, corrected at higher
    ghost order so the master equation holds exactly."""
    kt = koszul_tate(f, bounds)
    S = kt.presentation
    deep = [g for g in S.algebra.gens if g.degree <= -2]
    ghosts = tuple(Generator(ghost_prefix + g.name, -1 - g.degree, weight=1)
                   for g in deep)
    algebra = S.algebra.extend(list(ghosts))
    pairing = {}
    for v in S.base_vars:
        pairing[v.name] = "xi_" + v.name
        pairing["xi_" + v.name] = v.name
    for g in deep:
        pairing[g.name] = ghost_prefix + g.name
        pairing[ghost_prefix + g.name] = g.name
    q = _nominal_charge(algebra, f,
                        [(ghost_prefix + g.name, S.differential.image_of(g.name))
                         for g in deep])
    poly_max = bounds.poly_degree_max
    if poly_max is None:
        poly_max = 2 * max((algebra.mono_poly_degree(k) for k, _ in q.terms()),
                           default=1)
    try:
        q = _close_master_equation(algebra, pairing, q, {g.name for g in ghosts},
                                   poly_max)
    except ValueError as exc:
        if "cannot close the master equation" not in str(exc):
            raise
        # The tower continues past the window (the charge needs ghosts
        # that were not adjoined), so no exact charge exists on this
        # carrier. Fall back to the square-zero differential that
        # restricts to the resolution and acts on ghosts through the
        # antighost dependence of the nominal charge; charge-dependent
        # operations will report the failure themselves.
        pairs = _pairs_of(algebra, pairing)
        images = {g.name: promote(S.differential.image_of(g.name), algebra)
                  for g in S.algebra.gens}
        for g in ghosts:
            images[g.name] = _bracket(algebra, pairs, q, algebra.el(g.name))
        diff = Derivation(algebra, 1,
                          {n: el for n, el in images.items() if not el.is_zero()},
                          name="resolution-tower differential")
        ok, witness = check_square_zero(diff)
        if not ok:
            raise ValueError(
                f"internal: tower differential fails to square to zero on '{witness}'")
        base_names = {v.name for v in S.base_vars}
        extra = tuple(g for g in algebra.gens if g.name not in base_names)
        pres = DgaPresentation(S.base_vars, extra, diff, "bv", parent=S)
        return BvPresentation(S, ghosts, f, pairing, pres), kt
    failure = ("resolution tower ran out of budget and does not close"
               if kt.budget_exhausted else "internal: resolution tower does not close")
    pres = _generated_presentation(S, algebra, pairing, q, failure)
    return BvPresentation(S, ghosts, f, pairing, pres), kt


# -- the linear-fiber retract -------------------------------------------------------


@dataclass
class RetractData:
    """Contraction of the fiber letters of a split presentation.

    i includes the base exterior complex, p sets the fiber letters to
    zero, h replaces one exterior fiber letter by its plain letter
    (averaged over the fiber letter count). unperturbed is the
    fiber-count-preserving part of the total differential, delta the
    remainder."""

    total: DgaPresentation
    base: DgaPresentation
    complex: GradedMixedComplex
    base_complex: GradedMixedComplex
    fiber: tuple[str, ...]
    i: Callable[[GradedElement], GradedElement]
    p: Callable[[GradedElement], GradedElement]
    h: Callable[[GradedElement], GradedElement]
    unperturbed: Derivation
    delta: Derivation

    @property
    def algebra(self) -> Algebra:
        return self.complex.algebra

    @property
    def base_algebra(self) -> Algebra:
        return self.base_complex.algebra


def _trivial_base(B: DgaPresentation) -> DgaPresentation:
    algebra = Algebra(list(B.base_vars))
    return DgaPresentation(tuple(B.base_vars), (), Derivation(algebra, 1, {}), "koszul")


def retract_linear(B: DgaPresentation,
                   base: DgaPresentation | None = None) -> RetractData:
    if base is None:
        base = _trivial_base(B)
    algebra_B = B.algebra
    base_names = set()
    for g in base.algebra.gens:
        if not algebra_B.has_gen(g.name) or algebra_B.gen_by_name(g.name) != g:
            raise ValueError(
                f"non-split presentation: base generator '{g.name}' does not"
                " occur in the total algebra with the same grading")
        base_names.add(g.name)
    fiber = tuple(g.name for g in algebra_B.gens if g.name not in base_names)

    E_B, _ = de_rham(B)
    E_A, _ = de_rham(base)
    DRB, DRA = E_B.algebra, E_A.algebra

    fiber_idx = {DRB.index(n) for n in fiber} | {DRB.index(d_letter(n)) for n in fiber}

    def count(m: Monomial) -> int:
        return sum(e for i, e in m if i in fiber_idx)

    total = E_B.total_differential()
    same_imgs: dict[str, GradedElement] = {}
    delta_imgs: dict[str, GradedElement] = {}
    for g in DRB.gens:
        gcount = 1 if DRB.index(g.name) in fiber_idx else 0
        img = total.image_of(g.name)
        same = img.split_by(count).get(gcount, DRB.zero())
        rest = img - same
        if not same.is_zero():
            same_imgs[g.name] = same
        if not rest.is_zero():
            delta_imgs[g.name] = rest
    unperturbed = Derivation(DRB, 1, same_imgs, name="fiber-count-preserving part")
    delta = Derivation(DRB, 1, delta_imgs, name="fiber-count-shifting part")

    for g in base.algebra.gens:
        want = promote(base.differential.image_of(g.name), DRB)
        got = unperturbed.image_of(g.name) - DRB.el(d_letter(g.name))
        if not (got - want).is_zero():
            raise ValueError(
                f"non-split presentation: the differential of '{g.name}' does"
                " not restrict to the base")

    lift = Derivation(DRB, -1, {d_letter(n): DRB.el(n) for n in fiber},
                      name="one exterior fiber letter to plain")

    def i(el: GradedElement) -> GradedElement:
        return promote(el, DRB)

    zero_images = {n: DRA.zero() for n in fiber}
    zero_images.update({d_letter(n): DRA.zero() for n in fiber})

    def p(el: GradedElement) -> GradedElement:
        return substitute(el, DRA, zero_images)

    def h(el: GradedElement) -> GradedElement:
        out = DRB.zero()
        for n, part in el.split_by(count).items():
            if n:
                out = out + lift.apply(part).scale(Fraction(1, n))
        return out

    return RetractData(B, base, E_B, E_A, fiber, i, p, h, unperturbed, delta)


@dataclass
class SdrReport:
    ok: bool
    identity: str | None
    witness: str | None
    words_checked: int

    def to_json(self) -> dict:
        return {"ok": self.ok, "identity": self.identity,
                "witness": self.witness, "words_checked": self.words_checked}


def _degree_range(algebra: Algebra, bounds: TruncationBounds) -> range:
    budgets = bounds.budgets()
    lo = hi = 0
    for g in algebra.gens:
        if g.degree == 0:
            continue
        cap = _gen_cap(g, budgets)
        if cap is None:
            raise ValueError(
                f"generator '{g.name}' has no finite budget; cannot enumerate words")
        if g.degree < 0:
            lo += cap * g.degree
        else:
            hi += cap * g.degree
    return range(lo, hi + 1)


def verify_sdr(r: RetractData, bounds: TruncationBounds) -> SdrReport:
    """Check the five retract identities on every monomial within bounds:
    p i = id and h i = 0 on base words; [D', h] = id - i p, p h = 0 and
    h h = 0 on total words, with D' the unperturbed differential."""
    checked = 0

    def fail(identity: str, algebra: Algebra, word: Monomial) -> SdrReport:
        return SdrReport(False, identity, emit_element(algebra.monomial(word)), checked)

    DRA, DRB = r.base_algebra, r.algebra
    for degree in _degree_range(DRA, bounds):
        for word in basis_enumerate(DRA, degree, bounds):
            checked += 1
            a = DRA.monomial(word)
            if not (r.p(r.i(a)) - a).is_zero():
                return fail("p i = id", DRA, word)
            if not r.h(r.i(a)).is_zero():
                return fail("h i = 0", DRA, word)
    D = r.unperturbed
    for degree in _degree_range(DRB, bounds):
        for word in basis_enumerate(DRB, degree, bounds):
            checked += 1
            w = DRB.monomial(word)
            hw = r.h(w)
            if not (D.apply(hw) + r.h(D.apply(w)) - (w - r.i(r.p(w)))).is_zero():
                return fail("[D', h] = id - i p", DRB, word)
            if not r.p(hw).is_zero():
                return fail("p h = 0", DRB, word)
            if not r.h(hw).is_zero():
                return fail("h h = 0", DRB, word)
    return SdrReport(True, None, None, checked)


# -- perturbation of the retract ----------------------------------------------------


@dataclass
class PerturbedRetract:
    retract: RetractData
    order_max: int
    i_inf: Callable[[GradedElement], GradedElement]
    p_inf: Callable[[GradedElement], GradedElement]
    h_inf: Callable[[GradedElement], GradedElement]
    d_inf: Derivation


def perturb(r: RetractData, order_max: int | None = None) -> PerturbedRetract:
    """Sum the geometric series of the homotopy against the
    count-shifting part of the differential. Requires every component of
    the shift to raise the ghost weight, so the series of any element
    ends after finitely many steps; the projection and the induced base
    differential are then untouched."""
    if order_max is None:
        order_max = 64
    cls = classify_differential(r.delta)
    for cs, ds in cls.support():
        if cs < 1:
            raise ValueError(
                "the perturbation does not raise the ghost weight: found a"
                f" component with shift ({cs}, {ds})")
    for g in r.algebra.gens:
        if not r.p(r.delta.image_of(g.name)).is_zero():
            raise ValueError(
                f"internal: perturbation image of '{g.name}' survives the projection")

    def series(first: GradedElement) -> GradedElement:
        total = r.algebra.zero()
        cur = first
        for _ in range(order_max + 1):
            if cur.is_zero():
                return total
            total = total + cur
            cur = r.h(r.delta.apply(cur)).scale(-1)
        raise ValueError(f"series did not terminate within order {order_max}")

    def i_inf(el: GradedElement) -> GradedElement:
        return series(r.i(el))

    def h_inf(el: GradedElement) -> GradedElement:
        return series(r.h(el))

    return PerturbedRetract(r, order_max, i_inf, r.p, h_inf,
                            r.base_complex.total_differential())


# -- charge and master equation -----------------------------------------------------


def bv_charge(bv: BvPresentation, delta_ce: Derivation | None = None,
              order_max: int | None = None) -> GradedElement:
    """The degree-0 element whose bracket generates the differential:
    include the functional through the perturbed section and add the
    perturbed homotopy of the contraction of the differential into the
    pairing two-form."""
    pres = bv.presentation
    if delta_ce is not None and delta_ce is not pres.differential:
        pres = dataclasses.replace(pres, differential=delta_ce)
    delta = pres.differential
    r = retract_linear(pres, bv.base_crit)
    omega = strict_symplectic(bv, r.complex)
    T = contraction(r.complex, delta).apply(omega)

    f_base = promote(bv.functional, r.base_algebra)
    want = exterior_derivative(r.base_complex).apply(f_base)
    if not (r.p(T) - want).is_zero():
        raise ValueError(
            "the contraction of the differential into the two-form does not"
            " project onto the derivative of the functional; the"
            " differential is not Hamiltonian for this pairing")

    pert = perturb(r, order_max)
    q_forms = pert.i_inf(f_base) + pert.h_inf(T)
    Q = substitute(q_forms, bv.algebra, {})

    ham = hamiltonian_vf(bv, Q)
    for g in bv.algebra.gens:
        if not (ham.image_of(g.name) - delta.image_of(g.name)).is_zero():
            raise ValueError(
                f"internal: the charge does not generate the differential on"
                f" '{g.name}'")
    return Q


@dataclass
class CmeReport:
    ok: bool
    residual: GradedElement
    ham_square_ok: bool
    witness: str | None

    def to_json(self) -> dict:
        return {"ok": self.ok, "residual": emit_element(self.residual),
                "ham_square_ok": self.ham_square_ok, "witness": self.witness}


def cme_check(bv: BvPresentation, Q: GradedElement) -> CmeReport:
    """The master-equation residual {Q, Q}, plus whether {Q, -} squares
    to zero on every generator."""
    Q = _to_carrier(bv, Q)
    if not Q.is_zero() and (not Q.is_homogeneous() or Q.degree() != 0):
        raise ValueError("the charge must be homogeneous of degree 0")
    residual = shifted_poisson_bracket(bv, Q, Q)
    ham = hamiltonian_vf(bv, Q)
    square_ok, witness = True, None
    for g in bv.algebra.gens:
        val = ham.apply(ham.image_of(g.name))
        if not val.is_zero():
            square_ok = False
            witness = f"on {g.name}: {emit_element(val)}"
            break
    return CmeReport(residual.is_zero(), residual, square_ok, witness)


# -- the equivariant construction ---------------------------------------------------


# relative sign of the ghost-ghost-antighost cubic term against the
# ghost * cycle couplings; pinned by the master equation on nonabelian
# examples
def equivariant_bv(f: GradedElement, a: AlgebroidPresentation,
                   antighost_names: Mapping[str, str] | None = None,
                   ghost_names: Mapping[str, str] | None = None) -> BvPresentation:
    """Resolve the critical locus of an invariant functional along its
    symmetries: one antighost per module generator killing the
    anchor-image cycle, one ghost conjugate to it, and the differential
    generated by the charge f + sum of ghost * cycle, corrected at
    higher ghost order (the structure-constant terms) when the
    brackets are nonzero."""
    report = validate_algebroid(a)
    if report.failures:
        raise ValueError("algebroid fails validation: "
                         + report.failures[0]["witness"])
    base_alg = a.base.algebra
    for g in base_alg.gens:
        if not a.base.differential.image_of(g.name).is_zero():
            raise ValueError("only symmetries of a plain polynomial base are"
                             " supported by the charge construction")
    for e in a.module_gens:
        if e.degree != 0:
            raise ValueError("only module generators of degree 0 are supported"
                             " by the charge construction")
    if a.higher_brackets or a.internal:
        raise ValueError("internal differentials and higher bracket tables are"
                         " not supported by the charge construction")
    known = {g.name for g in a.module_gens}
    for names in ((antighost_names or {}), (ghost_names or {})):
        for n in names:
            if n not in known:
                raise ValueError(f"name override for unknown module generator '{n}'")
    f0 = promote(f, base_alg)
    for e in a.module_gens:
        moved = a.anchor_of_gen(e.name)(f0)
        if not moved.is_zero():
            raise ValueError(
                f"functional is not invariant: the symmetry '{e.name}' moves"
                f" it by {emit_element(moved)}")

    c_names = {e.name: (antighost_names or {}).get(e.name, "c_" + e.name)
               for e in a.module_gens}
    eta_names = {e.name: (ghost_names or {}).get(e.name, "eta_" + e.name)
                 for e in a.module_gens}
    kz = koszul_complex(f0)
    extra = []
    for e in a.module_gens:
        img = kz.algebra.zero()
        for v in base_alg.gens:
            moved = a.anchor_of_gen(e.name)(base_alg.el(v.name))
            if not moved.is_zero():
                img = img + promote(moved, kz.algebra) * kz.algebra.el("xi_" + v.name)
        extra.append((Generator(c_names[e.name], e.degree - 2), img))
    S = almost_critical(f0, extra)

    ghosts = tuple(Generator(eta_names[e.name], 1 - e.degree, weight=1)
                   for e in a.module_gens)
    algebra = S.algebra.extend(list(ghosts))
    pairing = {}
    for v in base_alg.gens:
        pairing[v.name] = "xi_" + v.name
        pairing["xi_" + v.name] = v.name
    for e in a.module_gens:
        pairing[c_names[e.name]] = eta_names[e.name]
        pairing[eta_names[e.name]] = c_names[e.name]

    q = _nominal_charge(algebra, f0,
                        [(eta_names[e.name], S.differential.image_of(c_names[e.name]))
                         for e in a.module_gens])
    poly_max = 2 * max((algebra.mono_poly_degree(m) for m, _ in q.terms()),
                       default=1)
    try:
        q = _close_master_equation(algebra, pairing, q,
                                   set(eta_names.values()), poly_max)
    except ValueError as exc:
        raise ValueError(f"the symmetry data does not close: {exc}") from exc
    pres = _generated_presentation(S, algebra, pairing, q,
                                   "the symmetry data does not close")
    return BvPresentation(S, ghosts, f0, pairing, pres)


# -- the correspondence square ------------------------------------------------------


@dataclass
class LagrangianReport:
    ok: bool
    stage: str
    forms_equal: bool
    square: CartesianReport | None
    witness: str | None

    def to_json(self) -> dict:
        return {"ok": self.ok, "stage": self.stage, "forms_equal": self.forms_equal,
                "square": self.square.to_json() if self.square else None,
                "witness": self.witness}


def _pairing_map(E: GradedMixedComplex, source_alg: Algebra,
                 omega: GradedElement) -> dict[str, dict[str, GradedElement]]:
    """Contract each coordinate derivation into the two-form and read the
    result as a one-form coefficient row, dressed with the parity of the
    tangent slot so the blocks interlock as chain maps."""
    out: dict[str, dict[str, GradedElement]] = {}
    for g in source_alg.gens:
        xg = Derivation(E.algebra, -g.degree, {g.name: E.algebra.one()},
                        name=f"d/d{g.name}")
        paired = contraction(E, xg).apply(omega)
        vec = one_form_to_vector(E, paired) if not paired.is_zero() else {}
        sign = -1 if g.degree % 2 else 1
        out["t_" + g.name] = {h: coeff.scale(sign) for h, coeff in vec.items()}
    return out


def _corner_conditions(cx: FreeComplex, dst: FreeComplex,
                       down: ChainMap) -> dict[tuple, Fraction]:
    """Square-zero defect of cx together with the chain-map defect of the
    downward leg, flattened into one sparse vector keyed by
    (kind, source, target, monomial)."""
    alg = cx.algebra
    out: dict[tuple, Fraction] = {}

    def down_apply(vec: dict[str, GradedElement]) -> dict[str, GradedElement]:
        res: dict[str, GradedElement] = {}
        for g, coeff in vec.items():
            for name, a in down.get(g, {}).items():
                add = coeff * a
                if not add.is_zero():
                    res[name] = res.get(name, alg.zero()) + add
        return res

    for g, _ in cx.gens:
        once = cx.apply({g: alg.one()})
        for tgt, el in cx.apply(once).items():
            for m, c in el.coeffs.items():
                if c:
                    out[("sq", g, tgt, m)] = c
        lhs = dst.apply(down_apply({g: alg.one()}))
        rhs = down_apply(once)
        for tgt in set(lhs) | set(rhs):
            el = lhs.get(tgt, alg.zero()) - rhs.get(tgt, alg.zero())
            for m, c in el.coeffs.items():
                if c:
                    out[("bm", g, tgt, m)] = c
    return out


def _complete_ghost_rows(cx: FreeComplex, dst: FreeComplex, down: ChainMap,
                         ghost_sources: set[str]) -> FreeComplex:
    """Fill in the ghost rows the reduction to the resolution cannot see.

    Setting the ghosts to zero in the carrier's tangent complex forgets the
    entries sourced at ghost tangent directions (the non-linear parts of the
    carrier differential). They are recovered as the grading-homogeneous
    corrections, one unknown per admissible monomial slot, that make the
    downward pairing leg a chain map and the corrected differential square to
    zero; both defects are affine in the slots (slot-slot compositions vanish
    because every slot leaves the ghost rows), so a single exact linear solve
    decides. Carriers whose rows already satisfy both conditions come back
    unchanged."""
    alg = cx.algebra
    base = _corner_conditions(cx, dst, down)
    slots: list[tuple[str, str, Monomial]] = []
    for src, sdeg in cx.gens:
        if src not in ghost_sources:
            continue
        for tgt, tdeg in cx.gens:
            if tgt in ghost_sources:
                continue
            want_poly = cx.offsets.get(src, 0) - cx.offsets.get(tgt, 0)
            if want_poly < 0:
                continue
            b = TruncationBounds(poly_degree_max=want_poly, weight_max=0,
                                 dr_weight_max=0)
            for m in basis_enumerate(alg, sdeg + 1 - tdeg, b):
                if alg.mono_poly_degree(m) == want_poly:
                    slots.append((src, tgt, m))
    if not base and not slots:
        return cx

    def with_slot(entries, src, tgt, el):
        row = entries.setdefault(src, {})
        new = row.get(tgt, alg.zero()) + el
        if new.is_zero():
            row.pop(tgt, None)
        else:
            row[tgt] = new

    cols: list[dict[tuple, Fraction]] = []
    for src, tgt, m in slots:
        entries = {g: dict(row) for g, row in cx.entries.items()}
        with_slot(entries, src, tgt, alg.monomial(m))
        probe = dataclasses.replace(cx, entries=entries)
        cond = _corner_conditions(probe, dst, down)
        col = {}
        for k in set(cond) | set(base):
            v = cond.get(k, Fraction(0)) - base.get(k, Fraction(0))
            if v:
                col[k] = v
        cols.append(col)
    cols.append(dict(base))

    keys = sorted({k for col in cols for k in col}, key=repr)
    index = {k: i for i, k in enumerate(keys)}
    numbered = [{index[k]: v for k, v in col.items()} for col in cols]
    kern = kernel_of_columns(numbered, range(len(keys)))
    free = len(slots)
    pick = next((v for v in kern if v.get(free)), None)
    if pick is None:
        raise ValueError(
            "the tangent corner admits no square-zero completion compatible"
            " with the pairing leg inside the budget")
    scale = Fraction(1) / pick[free]
    entries = {g: dict(row) for g, row in cx.entries.items()}
    for j, (src, tgt, m) in enumerate(slots):
        lam = pick.get(j)
        if lam:
            with_slot(entries, src, tgt, alg.monomial(m, lam * scale))
    return dataclasses.replace(cx, entries=entries)


def lagrangian_correspondence_check(bv: BvPresentation, bounds: TruncationBounds,
                                    drop_ghost_pairing: bool = False) -> LagrangianReport:
    """Compare the tangent complex of the resolution with its one-forms
    through the pairing, over the exterior algebra of the resolution.

    Stages: the constant block of the two-form pairs every letter of the
    full carrier with a conjugate (non-degeneracy); the two-form
    restricts to the two-form of the resolution (form-pullback); and the
    square with the
    resolution's tangent complex on the top left, the shallow one-forms
    (base letters and their degree -1 conjugates) on the top right, the
    ghost-free reduction of the full carrier's tangent complex on the
    bottom left and all one-forms on the bottom right is homotopy
    Cartesian, with inclusions for the vertical maps and contraction
    into the two-form for the horizontal ones. drop_ghost_pairing
    removes the ghost summands from the two-form, which the
    non-degeneracy stage must catch."""
    S = bv.base_crit
    E_S, _ = de_rham(S)
    E_BV, _ = de_rham(bv.presentation)
    DRS = E_S.algebra
    DRB = E_BV.algebra
    ghost_names = {g.name for g in bv.ghosts}

    reduce_images = {}
    for n in ghost_names:
        reduce_images[n] = DRS.zero()
        reduce_images[d_letter(n)] = DRS.zero()

    def reduced(el: GradedElement) -> GradedElement:
        return substitute(el, DRS, reduce_images)

    omega_bv = DRB.zero()
    for coord, mom in bv.pairs():
        if drop_ghost_pairing and (coord in ghost_names or mom in ghost_names):
            continue
        omega_bv = omega_bv + DRB.el(d_letter(coord)) * DRB.el(d_letter(mom))
    raw_bottom = _pairing_map(E_BV, bv.algebra, omega_bv)

    # the constant block of the pairing must reach every letter, else some
    # tangent direction pairs to nothing and the comparison map cannot be an
    # equivalence
    unit_key = next(iter(DRB.one().coeffs))
    names = [g.name for g in bv.algebra.gens]
    scalar_rows = [{h: c for h, el in raw_bottom["t_" + g].items()
                    if (c := el.coeffs.get(unit_key, Fraction(0)))}
                   for g in names]
    defect = len(names) - rank(scalar_rows, names)
    if defect:
        return LagrangianReport(False, "non-degeneracy", False, None,
                                f"rank defect {defect}: the constant pairing"
                                " block misses some letters")

    omega_s = DRS.zero()
    for coord, mom in bv.pairs():
        if coord not in ghost_names and mom not in ghost_names:
            omega_s = omega_s + DRS.el(d_letter(coord)) * DRS.el(d_letter(mom))
    pulled = reduced(omega_bv)
    if not (pulled - omega_s).is_zero():
        return LagrangianReport(False, "form-pullback", False, None,
                                emit_element(pulled - omega_s))

    # polynomial weights making every leg weight-preserving for a
    # quasi-homogeneous functional: a tangent letter counts as its
    # pairing partner, a one-form letter as itself; ghosts count as the
    # complement of their antighost so the pairing stays balanced
    polyf = max((bv.functional.algebra.mono_poly_degree(m)
                 for m, _ in bv.functional.terms()), default=0)

    def eff_poly(g: Generator) -> int:
        if g.name in ghost_names:
            return polyf - bv.algebra.gen_by_name(bv.pairing[g.name]).poly_degree
        return g.poly_degree

    a_cx = tangent_free_complex(E_S)
    a_cx = dataclasses.replace(
        a_cx, offsets={"t_" + g.name: polyf - g.poly_degree for g in S.algebra.gens})
    d_cx = one_form_free_complex(E_S)
    shallow = [g.name for g in S.algebra.gens if g.degree >= -1]
    b_cx = one_form_free_complex(E_S, names=shallow)

    bv_tan = tangent_free_complex(E_BV)
    c_entries: dict[str, dict[str, GradedElement]] = {}
    for n, _deg in bv_tan.gens:
        row = {}
        for h, el in bv_tan.entries.get(n, {}).items():
            red = reduced(el)
            if not red.is_zero():
                row[h] = red
        if row:
            c_entries[n] = row
    c_cx = FreeComplex(DRS, E_S.presentation.differential, list(bv_tan.gens), c_entries,
                       {"t_" + g.name: polyf - eff_poly(g) for g in bv.algebra.gens})

    raw_top = _pairing_map(E_S, S.algebra, omega_s)
    top: ChainMap = {name: {"w_" + h: coeff for h, coeff in row.items()}
                     for name, row in raw_top.items()}
    left: ChainMap = {"t_" + g.name: {"t_" + g.name: DRS.one()}
                      for g in S.algebra.gens}
    right: ChainMap = {n: {n: DRS.one()} for n, _ in b_cx.gens}
    bottom: ChainMap = {}
    for g in bv.algebra.gens:
        row = {}
        if not (drop_ghost_pairing and g.name in ghost_names):
            for h, coeff in raw_bottom["t_" + g.name].items():
                if h in ghost_names:
                    continue
                red = reduced(coeff)
                if not red.is_zero():
                    row["w_" + h] = red
        bottom["t_" + g.name] = row

    try:
        report = homotopy_cartesian_check(a_cx, b_cx, c_cx, d_cx,
                                          top, left, right, bottom, bounds)
    except ValueError as exc:
        return LagrangianReport(False, "chain-map", True, None, str(exc))
    return LagrangianReport(report.ok, "square", True, report, report.witness)
