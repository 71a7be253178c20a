"""Lie and homotopy Lie algebroids over polynomial or semi-free bases.

Module elements are dicts mapping module generator names to coefficients in
the base algebra. Binary brackets are stored on canonically ordered pairs
with antisymmetry synthesized; higher brackets are coefficient-linear and
stored on strictly increasing tuples. The dual ghost construction produces a
differential graded algebra with a ghost-count weight grading.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

from .gca import (
    Algebra,
    Derivation,
    Generator,
    GradedElement,
    check_square_zero,
    commutator,
    emit_element,
    partial_left,
    promote,
    substitute,
)
from .critical_locus import DgaPresentation
from .homology import TruncationBounds

# coefficients attached to module generators, name -> base algebra element
ModuleElement = dict[str, GradedElement]


def polynomial_presentation(names: Sequence[str]) -> DgaPresentation:
    from .critical_locus import polynomial_algebra
    algebra = polynomial_algebra(names)
    zero = Derivation(algebra, 1, {})
    return DgaPresentation(tuple(algebra.gens), (), zero, "koszul")


def module_add(u: ModuleElement, v: ModuleElement) -> ModuleElement:
    out = dict(u)
    for k, el in v.items():
        cur = out.get(k)
        s = el if cur is None else cur + el
        if s.is_zero():
            out.pop(k, None)
        else:
            out[k] = s
    return out


def module_scale(f: GradedElement, v: ModuleElement) -> ModuleElement:
    out = {}
    for k, el in v.items():
        s = f * el
        if not s.is_zero():
            out[k] = s
    return out


def module_is_zero(v: ModuleElement) -> bool:
    return all(el.is_zero() for el in v.values())


def _emit_module(v: ModuleElement) -> str:
    parts = [f"({emit_element(el)})*{k}" for k, el in sorted(v.items()) if not el.is_zero()]
    return " + ".join(parts) if parts else "0"


def _perm_sign(items: Sequence[tuple[str, int]], order: Mapping[str, int]) -> int:
    """Koszul antisymmetric sign for sorting (name, parity) pairs by `order`.

    Each adjacent swap of entries u, v contributes -(-1)^(p_u p_v).
    """
    arr = list(items)
    sign = 1
    for i in range(len(arr)):
        for j in range(len(arr) - 1, i, -1):
            if order[arr[j - 1][0]] > order[arr[j][0]]:
                pu, pv = arr[j - 1][1], arr[j][1]
                sign *= -1 if (pu * pv) % 2 == 0 else 1
                arr[j - 1], arr[j] = arr[j], arr[j - 1]
    return sign


@dataclass
class AlgebroidPresentation:
    base: DgaPresentation
    module_gens: tuple[Generator, ...]
    anchor: dict[str, Derivation]
    brackets: dict[tuple[str, str], ModuleElement] = field(default_factory=dict)
    higher_brackets: dict[int, dict[tuple[str, ...], ModuleElement]] = field(default_factory=dict)
    internal: dict[str, ModuleElement] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.module_gens = tuple(self.module_gens)
        names = [g.name for g in self.module_gens]
        if len(set(names)) != len(names):
            raise ValueError("duplicate module generator names")
        base_names = {g.name for g in self.base.algebra.gens}
        self._order = {n: i for i, n in enumerate(names)}
        self._byname = {g.name: g for g in self.module_gens}
        for g in self.module_gens:
            if g.degree > 0:
                raise ValueError(f"module generator '{g.name}' must have degree <= 0")
            if g.name in base_names:
                raise ValueError(f"module generator '{g.name}' clashes with a base generator")
        for n, d in self.anchor.items():
            if n not in self._byname:
                raise ValueError(f"anchor given for unknown generator '{n}'")
            if d.algebra is not self.base.algebra:
                raise ValueError(f"anchor of '{n}' is not a derivation of the base")
            if d.degree != self._byname[n].degree:
                raise ValueError(f"anchor of '{n}' has degree {d.degree}, "
                                 f"expected {self._byname[n].degree}")
        for (na, nb), val in self.brackets.items():
            if na not in self._byname or nb not in self._byname:
                raise ValueError(f"bracket on unknown pair ({na}, {nb})")
            if self._order[na] > self._order[nb]:
                raise ValueError(f"bracket key ({na}, {nb}) is not canonically ordered")
            if na == nb and not self._byname[na].is_odd:
                raise ValueError(
                    f"diagonal bracket [{na}, {na}] must vanish for an even-parity generator")
            self._check_value_degrees((na, nb), val)
        for arity, table in self.higher_brackets.items():
            if arity < 3:
                raise ValueError("higher bracket tables start at arity 3")
            for key, val in table.items():
                if len(key) != arity:
                    raise ValueError(f"key {key} does not have arity {arity}")
                idx = [self._order.get(n) for n in key]
                if None in idx:
                    raise ValueError(f"higher bracket on unknown generators {key}")
                if any(idx[i] >= idx[i + 1] for i in range(len(idx) - 1)):
                    raise ValueError(f"higher bracket key {key} must be strictly increasing")
                self._check_value_degrees(key, val)
        for n, val in self.internal.items():
            if n not in self._byname:
                raise ValueError(f"internal differential on unknown generator '{n}'")
            src = self._byname[n].degree
            for c, el in val.items():
                if el.is_zero():
                    continue
                if not el.is_homogeneous() or el.degree() + self._byname[c].degree != src + 1:
                    raise ValueError(f"internal differential of '{n}' breaks degree bookkeeping")

    def _check_value_degrees(self, key: Sequence[str], val: ModuleElement) -> None:
        want = sum(self._byname[n].degree for n in key) + 2 - len(key)
        for c, el in val.items():
            if c not in self._byname:
                raise ValueError(f"bracket value on {key} mentions unknown generator '{c}'")
            if el.algebra is not self.base.algebra:
                raise ValueError(f"bracket value on {key} has coefficients outside the base")
            if el.is_zero():
                continue
            if not el.is_homogeneous() or el.degree() + self._byname[c].degree != want:
                raise ValueError(f"bracket value on {key} breaks degree bookkeeping")

    # -- lookups ---------------------------------------------------------------

    def gen(self, name: str) -> Generator:
        return self._byname[name]

    def anchor_of_gen(self, name: str) -> Derivation:
        d = self.anchor.get(name)
        if d is None:
            return Derivation(self.base.algebra, self._byname[name].degree, {})
        return d

    def bracket_of(self, na: str, nb: str) -> ModuleElement:
        if (na, nb) in self.brackets:
            return dict(self.brackets[(na, nb)])
        if (nb, na) in self.brackets:
            pa = self._byname[na].degree
            pb = self._byname[nb].degree
            s = -1 if (pa * pb) % 2 == 0 else 1
            return {c: el.scale(s) for c, el in self.brackets[(nb, na)].items()}
        return {}

    def higher_of(self, names: Sequence[str]) -> tuple[int, ModuleElement]:
        """Antisymmetric lookup; returns (sign, stored value)."""
        table = self.higher_brackets.get(len(names), {})
        if len(set(names)) != len(names):
            # repeated entries are supported only as zero (strictly
            # increasing storage)
            return 1, {}
        items = [(n, self._byname[n].degree % 2) for n in names]
        sign = _perm_sign(items, self._order)
        key = tuple(sorted(names, key=self._order.get))
        val = table.get(key, {})
        return sign, dict(val)


# -- bracket evaluation on module elements ------------------------------------


def _split_homogeneous(el: GradedElement) -> list[tuple[int, GradedElement]]:
    if el.is_zero():
        return []
    return [(k, part) for k, part in sorted(el.split_by(el.algebra.mono_degree).items())]


def anchor_of_element(a: AlgebroidPresentation, u: ModuleElement,
                      arg: GradedElement) -> GradedElement:
    """rho(u)(arg) = sum_a f_a * rho_a(arg) for u = sum f_a e_a."""
    out = a.base.algebra.zero()
    for n, f in u.items():
        out = out + f * a.anchor_of_gen(n)(arg)
    return out


def bracket_elements(a: AlgebroidPresentation, u: ModuleElement,
                     v: ModuleElement) -> ModuleElement:
    """Binary bracket extended by the Leibniz rule in both slots."""
    out: ModuleElement = {}
    for na, fa_full in u.items():
        pa = a.gen(na).degree % 2
        for fdeg, fa in _split_homogeneous(fa_full):
            pf = fdeg % 2
            for nb, gb_full in v.items():
                pb = a.gen(nb).degree % 2
                for gdeg, gb in _split_homogeneous(gb_full):
                    pg = gdeg % 2
                    # [fa e_a, gb e_b] =
                    #   (-1)^{pg(pf+pa)} ( gb fa [e_a,e_b]
                    #       - (-1)^{(pf+pa)pb} gb rho_b(fa) e_a )
                    #   + fa rho_a(gb) e_b
                    s_front = -1 if (pg * ((pf + pa) % 2)) % 2 else 1
                    table = a.bracket_of(na, nb)
                    coeff = (gb * fa).scale(s_front)
                    for c, el in table.items():
                        out = module_add(out, {c: coeff * el})
                    s_rho = -1 if (((pf + pa) % 2) * pb) % 2 else 1
                    rb = a.anchor_of_gen(nb)(fa)
                    term = (gb * rb).scale(-s_front * s_rho)
                    if not term.is_zero():
                        out = module_add(out, {na: term})
                    ra = a.anchor_of_gen(na)(gb)
                    term = fa * ra
                    if not term.is_zero():
                        out = module_add(out, {nb: term})
    return {k: el for k, el in out.items() if not el.is_zero()}


def higher_bracket_elements(a: AlgebroidPresentation, args: Sequence[ModuleElement],
                            arity: int) -> ModuleElement:
    """Coefficient-linear bracket of arity >= 3."""
    out: ModuleElement = {}
    def rec(i: int, names: list[str], coeff: GradedElement, parity_prefix: int):
        nonlocal out
        if i == len(args):
            sign, val = a.higher_of(names)
            for c, el in val.items():
                out = module_add(out, {c: (coeff * el).scale(sign)})
            return
        for n, f_full in args[i].items():
            pa = a.gen(n).degree % 2
            for fdeg, f in _split_homogeneous(f_full):
                # move the coefficient left across the generators before it
                s = -1 if ((fdeg % 2) * parity_prefix) % 2 else 1
                rec(i + 1, names + [n], (coeff * f).scale(s), (parity_prefix + pa) % 2)
    rec(0, [], a.base.algebra.one(), 0)
    return {k: el for k, el in out.items() if not el.is_zero()}


def internal_of_element(a: AlgebroidPresentation, u: ModuleElement) -> ModuleElement:
    out: ModuleElement = {}
    for n, f in u.items():
        val = a.internal.get(n, {})
        for c, el in val.items():
            out = module_add(out, {c: f * el})
    return {k: el for k, el in out.items() if not el.is_zero()}


# -- Chevalley-Eilenberg construction ------------------------------------------


def default_ghost_name(gen_name: str) -> str:
    return "eta_" + gen_name


def ce_algebra(a: AlgebroidPresentation, ghost_names: Mapping[str, str] | None = None,
               validate: bool = True) -> DgaPresentation:
    """Dual-generator model: one ghost per module generator, in degree
    1 - deg(e), carrying weight 1 (ghost count).

    The differential acts on base generators as the base differential plus
    the anchor paired with ghosts, and on ghosts as minus the dual of the
    internal differential and brackets, dressed with the parity signs that
    make the square vanish exactly when the structure identities hold.
    """
    if validate:
        report = validate_algebroid(a)
        if report.failures:
            raise ValueError("algebroid fails validation: "
                             + report.failures[0]["witness"])
    names = {g.name: (ghost_names or {}).get(g.name, default_ghost_name(g.name))
             for g in a.module_gens}
    base_alg = a.base.algebra
    ghosts = [Generator(names[g.name], 1 - g.degree, weight=1)
              for g in a.module_gens]
    algebra = base_alg.extend(ghosts)

    def lift(el: GradedElement) -> GradedElement:
        return promote(el, algebra)

    images: dict[str, GradedElement] = {}
    for g in base_alg.gens:
        img = lift(a.base.differential.image_of(g.name))
        for e in a.module_gens:
            rho = a.anchor_of_gen(e.name)(base_alg.el(g.name))
            if not rho.is_zero():
                img = img + lift(rho) * algebra.el(names[e.name])
        images[g.name] = img

    mod_names = [g.name for g in a.module_gens]
    ghost_images: dict[str, GradedElement] = {names[n]: algebra.zero() for n in mod_names}
    # arity 1: dual of the internal differential
    for n in mod_names:
        for c, el in a.internal.get(n, {}).items():
            ghost_images[names[c]] = ghost_images[names[c]] \
                - lift(el) * algebra.el(names[n])
    # arity >= 2: minus 1/k! the dressed structure constants on ordered tuples
    tables: list[tuple[int, Sequence[tuple[str, ...]]]] = [(2, list(a.brackets.keys()))]
    for arity, table in sorted(a.higher_brackets.items()):
        tables.append((arity, list(table.keys())))
    import itertools
    import math
    for arity, keys in tables:
        for key in keys:
            seen = set()
            for perm in itertools.permutations(range(arity)):
                tup = tuple(key[i] for i in perm)
                if tup in seen:
                    continue
                seen.add(tup)
                if arity == 2:
                    val = a.bracket_of(tup[0], tup[1])
                else:
                    sign, stored = a.higher_of(tup)
                    val = {c: el.scale(sign) for c, el in stored.items()}
                if not val or module_is_zero(val):
                    continue
                dress = sum((arity - 1 - i) * a.gen(tup[i]).degree for i in range(arity)) % 2
                s = -1 if dress else 1
                eta_mono = algebra.one()
                for n in tup:
                    eta_mono = eta_mono * algebra.el(names[n])
                scale = Fraction(-s, math.factorial(arity))
                for c, el in val.items():
                    ghost_images[names[c]] = ghost_images[names[c]] \
                        + (lift(el) * eta_mono).scale(scale)
    images.update(ghost_images)
    diff = Derivation(algebra, 1, images, name="ce differential")
    pres = DgaPresentation(a.base.base_vars,
                           tuple(g for g in algebra.gens
                                 if g.name not in {v.name for v in a.base.base_vars}),
                           diff, "ce")
    if validate:
        ok, witness = check_square_zero(diff)
        if not ok:
            raise ValueError(f"ce differential does not square to zero on '{witness}'")
    return pres


def ce_weight_split(ce: DgaPresentation) -> list[Derivation]:
    """Split the differential into parts raising the ghost weight by exactly k."""
    algebra = ce.algebra
    parts: dict[int, dict[str, GradedElement]] = {}
    top = 0
    for g in algebra.gens:
        img = ce.differential.image_of(g.name)
        for m, c in img.terms():
            k = algebra.mono_weight(m) - g.weight
            if k < 0:
                raise ValueError(f"differential lowers weight on '{g.name}'")
            parts.setdefault(k, {}).setdefault(g.name, algebra.zero())
            parts[k][g.name] = parts[k][g.name] + algebra.monomial(m, c)
            top = max(top, k)
    return [Derivation(algebra, 1, parts.get(k, {}), name=f"weight+{k} part")
            for k in range(top + 1)]


# -- validation -----------------------------------------------------------------


@dataclass
class AlgebroidReport:
    failures: list[dict]

    @property
    def valid(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {"valid": self.valid, "failures": list(self.failures)}


def validate_algebroid(a: AlgebroidPresentation,
                       bounds: TruncationBounds | None = None) -> AlgebroidReport:
    """Checks anchor-is-a-morphism on every generator pair, the Jacboi-type
    identities via the square of the dual differential, and consistency of
    the Leibniz extension computed through either slot first."""
    failures: list[dict] = []
    base_alg = a.base.algebra
    mod_names = [g.name for g in a.module_gens]
    # anchor morphism on pairs
    for i, na in enumerate(mod_names):
        for nb in mod_names[i:]:
            if na == nb and not a.gen(na).is_odd:
                continue
            lhs = commutator(a.anchor_of_gen(na), a.anchor_of_gen(nb))
            rhs_el = a.bracket_of(na, nb)
            for g in base_alg.gens:
                want = base_alg.zero()
                for c, f in rhs_el.items():
                    want = want + f * a.anchor_of_gen(c)(base_alg.el(g.name))
                got = lhs(base_alg.el(g.name))
                if not (got - want).is_zero():
                    failures.append({
                        "identity": "anchor_morphism",
                        "witness": f"[{na}, {nb}] on {g.name}: "
                                   f"{emit_element(got)} != {emit_element(want)}",
                    })
                    break
    # Leibniz consistency: expanding [x*e_a, e_b] directly vs via antisymmetry
    for i, na in enumerate(mod_names):
        for nb in mod_names[i:]:
            for g in a.base.base_vars:
                f = base_alg.el(g.name)
                u = {na: f}
                v = {nb: base_alg.one()}
                path1 = bracket_elements(a, u, v)
                pa = (a.gen(na).degree + f.degree()) % 2
                pb = a.gen(nb).degree % 2
                s = -1 if (pa * pb) % 2 == 0 else 1
                path2 = {k: el.scale(s) for k, el in bracket_elements(a, v, u).items()}
                diff = module_add(path1, {k: el.scale(-1) for k, el in path2.items()})
                if not module_is_zero(diff):
                    failures.append({
                        "identity": "leibniz",
                        "witness": f"[{g.name}*{na}, {nb}] expands inconsistently: "
                                   f"{_emit_module(diff)}",
                    })
                    break
    # Jacobi and all higher coherences: square of the dual differential
    try:
        ce = ce_algebra(a, validate=False)
        ok, witness = check_square_zero(ce.differential)
        if not ok:
            img = ce.differential.apply(ce.differential.image_of(witness))
            failures.append({
                "identity": "jacobi",
                "witness": f"dual differential squared on {witness}: {emit_element(img)}",
            })
    except ValueError as e:
        failures.append({"identity": "degree_bookkeeping", "witness": str(e)})
    return AlgebroidReport(failures)


# -- action algebroids -----------------------------------------------------------


def action_algebroid(lie_gens: Sequence[Generator],
                     lie_brackets: Mapping[tuple[str, str], Mapping[str, Fraction | int]],
                     action: Mapping[str, Derivation],
                     base: DgaPresentation | None = None) -> AlgebroidPresentation:
    """Constant-section algebroid of a Lie algebra acting by vector fields.

    The action must be a Lie algebra morphism into derivations of the base;
    offenders are rejected with the failing pair.
    """
    if base is None:
        for d in action.values():
            base_alg = d.algebra
            break
        else:
            raise ValueError("need an explicit base when the action is empty")
        base = DgaPresentation(tuple(base_alg.gens), (), Derivation(base_alg, 1, {}),
                               "koszul")
    base_alg = base.algebra
    order = {g.name: i for i, g in enumerate(lie_gens)}
    brackets: dict[tuple[str, str], ModuleElement] = {}
    for (na, nb), row in lie_brackets.items():
        if order[na] > order[nb]:
            raise ValueError(f"bracket key ({na}, {nb}) is not canonically ordered")
        brackets[(na, nb)] = {c: base_alg.constant(v) for c, v in row.items()
                              if Fraction(v) != 0}
    pres = AlgebroidPresentation(base, tuple(lie_gens),
                                 {n: action[n] for n in action}, brackets)
    # morphism check: commutators of action fields match the bracket table
    names = [g.name for g in lie_gens]
    for i, na in enumerate(names):
        for nb in names[i:]:
            if na == nb and not pres.gen(na).is_odd:
                continue
            lhs = commutator(pres.anchor_of_gen(na), pres.anchor_of_gen(nb))
            want = pres.bracket_of(na, nb)
            for g in base_alg.gens:
                rhs = base_alg.zero()
                for c, f in want.items():
                    rhs = rhs + f * pres.anchor_of_gen(c)(base_alg.el(g.name))
                got = lhs(base_alg.el(g.name))
                if not (got - rhs).is_zero():
                    raise ValueError(
                        f"action is not a morphism: [{na}, {nb}] on {g.name} gives "
                        f"{emit_element(got)}, table expects {emit_element(rhs)}")
    return pres


# -- base change ------------------------------------------------------------------


@dataclass
class RingMap:
    source: DgaPresentation
    target: DgaPresentation
    images: dict[str, GradedElement]

    def __post_init__(self) -> None:
        tgt = self.target.algebra
        fixed: dict[str, GradedElement] = {}
        for n, el in self.images.items():
            self.source.algebra.gen_by_name(n)
            fixed[n] = tgt.parse(el) if isinstance(el, str) else promote(el, tgt)
        self.images = fixed

    def apply(self, el: GradedElement) -> GradedElement:
        covered = dict(self.images)
        for g in self.source.algebra.gens:
            if g.name not in covered:
                covered[g.name] = self.target.algebra.el(g.name)
        return substitute(el, self.target.algebra, covered)

    def validate(self) -> None:
        for g in self.source.algebra.gens:
            lhs = self.apply(self.source.differential.image_of(g.name))
            rhs = self.target.differential.apply(self.apply(self.source.algebra.el(g.name)))
            if not (lhs - rhs).is_zero():
                raise ValueError(
                    f"ring map does not respect differentials on '{g.name}': "
                    f"{emit_element(lhs)} != {emit_element(rhs)}")


def base_change_ce(a: AlgebroidPresentation, ring_map: RingMap,
                   ghost_names: Mapping[str, str] | None = None,
                   extra_anchor_images: Mapping[str, Mapping[str, GradedElement | str]] | None = None,
                   ) -> DgaPresentation:
    """CE algebra of the module pulled back along a differential-respecting
    map to a semi-free target.

    Anchor transport: target generators named like source generators receive
    the mapped anchor value; odd conormal generators 'xi_<var>' receive the
    negative-Jacobian lift; anything else must be covered by
    extra_anchor_images (generator name absent there defaults to zero, which
    is validated by the square-zero gate).
    """
    if a.base.algebra is not ring_map.source.algebra:
        raise ValueError("ring map source must present the algebroid base")
    ring_map.validate()
    tgt = ring_map.target
    tgt_alg = tgt.algebra
    src_alg = a.base.algebra
    src_names = {g.name for g in src_alg.gens}
    overrides = extra_anchor_images or {}

    new_anchor: dict[str, Derivation] = {}
    for e in a.module_gens:
        rho = a.anchor_of_gen(e.name)
        images: dict[str, GradedElement] = {}
        for g in tgt_alg.gens:
            if e.name in overrides and g.name in overrides[e.name]:
                el = overrides[e.name][g.name]
                images[g.name] = tgt_alg.parse(el) if isinstance(el, str) \
                    else promote(el, tgt_alg)
            elif g.name in src_names:
                images[g.name] = ring_map.apply(rho(src_alg.el(g.name)))
            elif g.name.startswith("xi_") and g.name[3:] in src_names:
                # Jacobian lift to the odd conormal directions; the sign is
                # pinned by the square-zero gate below
                var = g.name[3:]
                img = tgt_alg.zero()
                for h in src_alg.gens:
                    xi_h = "xi_" + h.name
                    if not tgt_alg.has_gen(xi_h):
                        continue
                    coeff = partial_left(rho(src_alg.el(h.name)), var)
                    if not coeff.is_zero():
                        img = img + ring_map.apply(coeff) * tgt_alg.el(xi_h)
                images[g.name] = img
            # anything else defaults to zero
        new_anchor[e.name] = Derivation(tgt_alg, e.degree, images,
                                        name=f"transported anchor {e.name}")

    new_brackets = {key: {c: ring_map.apply(el) for c, el in val.items()}
                    for key, val in a.brackets.items()}
    new_higher = {ar: {key: {c: ring_map.apply(el) for c, el in val.items()}
                       for key, val in table.items()}
                  for ar, table in a.higher_brackets.items()}
    new_internal = {n: {c: ring_map.apply(el) for c, el in val.items()}
                    for n, val in a.internal.items()}
    moved = AlgebroidPresentation(tgt, a.module_gens, new_anchor, new_brackets,
                                  new_higher, new_internal)
    ce = ce_algebra(moved, ghost_names=ghost_names, validate=False)
    ok, witness = check_square_zero(ce.differential)
    if not ok:
        raise ValueError(
            f"transported dual differential does not square to zero on '{witness}'; "
            "supply explicit anchor images for the uncovered generators")
    return ce


# -- representations up to homotopy ----------------------------------------------


@dataclass
class RepUpToHomotopy:
    algebroid: AlgebroidPresentation
    module: tuple[Generator, ...]
    connection: dict[str, dict[str, ModuleElement]]
    internal: dict[str, ModuleElement] = field(default_factory=dict)
    correction_forms: dict[int, dict[str, dict[str, GradedElement | str]]] = field(default_factory=dict)


def validate_rep_up_to_homotopy(r: RepUpToHomotopy,
                                bounds: TruncationBounds | None = None) -> dict:
    """Weight components of the square of d_internal + d_connection + sum of
    corrections; the component at weight i is the i-th compact equation."""
    from .homology import FreeComplex
    a = r.algebroid
    ce = ce_algebra(a, validate=True)
    algebra = ce.algebra
    ghost = {g.name: default_ghost_name(g.name) for g in a.module_gens}

    def lift(el: GradedElement) -> GradedElement:
        return promote(el, algebra)

    entries: dict[str, dict[str, GradedElement]] = {}
    def add_entry(src: str, dst: str, val: GradedElement) -> None:
        row = entries.setdefault(src, {})
        cur = row.get(dst)
        s = val if cur is None else cur + val
        if s.is_zero():
            row.pop(dst, None)
        else:
            row[dst] = s

    for v in r.module:
        for dst, el in r.internal.get(v.name, {}).items():
            add_entry(v.name, dst, lift(el))
        for e in a.module_gens:
            nabla = r.connection.get(e.name, {}).get(v.name, {})
            for dst, el in nabla.items():
                add_entry(v.name, dst, lift(el) * algebra.el(ghost[e.name]))
        for i, table in r.correction_forms.items():
            for dst, el in table.get(v.name, {}).items():
                parsed = algebra.parse(el) if isinstance(el, str) else promote(el, algebra)
                add_entry(v.name, dst, parsed)

    gens = [(v.name, v.degree) for v in r.module]
    cx = FreeComplex(algebra, ce.differential, gens, entries)
    weight_max = 2 + max(r.correction_forms.keys(), default=0)
    if bounds is not None and bounds.weight_max is not None:
        weight_max = max(weight_max, bounds.weight_max)
    equations: dict[int, dict] = {i: {"holds": True, "witness": None}
                                  for i in range(weight_max + 1)}
    for v in r.module:
        defect = cx.apply(cx.apply({v.name: algebra.one()}))
        for dst, el in defect.items():
            if el.is_zero():
                continue
            for w, part in el.split_by(el.algebra.mono_weight).items():
                if part.is_zero():
                    continue
                eq = equations.setdefault(w, {"holds": True, "witness": None})
                if eq["holds"]:
                    eq["holds"] = False
                    eq["witness"] = (f"on {v.name}, component {dst}: "
                                     f"{emit_element(part)}")
    equations["valid"] = all(v["holds"] for k, v in equations.items()
                             if isinstance(k, int))
    return equations


# -- homotopy transfer -------------------------------------------------------------


@dataclass
class ModuleRetract:
    """Deformation retract between free modules over the base: a small module
    with generators `small_gens` included into the algebroid's module."""
    small_gens: tuple[Generator, ...]
    include: dict[str, ModuleElement]
    project: dict[str, ModuleElement]
    homotopy: dict[str, ModuleElement]


def _apply_modmap(table: Mapping[str, ModuleElement], v: ModuleElement,
                  map_parity: int, gen_parity: Mapping[str, int]) -> ModuleElement:
    out: ModuleElement = {}
    for n, f in v.items():
        row = table.get(n, {})
        for fdeg, fh in _split_homogeneous(f):
            s = -1 if (map_parity * (fdeg % 2)) % 2 else 1
            for c, el in row.items():
                out = module_add(out, {c: (fh * el).scale(s)})
    return {k: el for k, el in out.items() if not el.is_zero()}


def transfer_linfty(retract: ModuleRetract, a: AlgebroidPresentation,
                    arity_max: int = 3) -> AlgebroidPresentation:
    """Transferred homotopy Lie algebroid structure through a module retract.

    Verifies the retract identities first, then computes the unary and
    binary brackets by conjugation and the ternary bracket from the
    single-homotopy trees. The result is gated by the weight-bounded square
    of its dual differential.
    """
    big_parity = {g.name: g.degree % 2 for g in a.module_gens}
    small_parity = {g.name: g.degree % 2 for g in retract.small_gens}
    parity = dict(big_parity)
    parity.update(small_parity)
    base_alg = a.base.algebra

    def inc(v: ModuleElement) -> ModuleElement:
        return _apply_modmap(retract.include, v, 0, parity)

    def proj(v: ModuleElement) -> ModuleElement:
        return _apply_modmap(retract.project, v, 0, parity)

    def hom(v: ModuleElement) -> ModuleElement:
        return _apply_modmap(retract.homotopy, v, 1, parity)

    def l1(v: ModuleElement) -> ModuleElement:
        return internal_of_element(a, v)

    one = base_alg.one()
    for g in retract.small_gens:
        got = proj(inc({g.name: one}))
        if not module_is_zero(module_add(got, {g.name: one.scale(-1)})):
            raise ValueError(f"retract fails p*i = id on '{g.name}'")
    for g in a.module_gens:
        v = {g.name: one}
        lhs = module_add(l1(hom(v)), hom(l1(v)))
        rhs = module_add(v, {k: el.scale(-1) for k, el in inc(proj(v)).items()})
        if not module_is_zero(module_add(lhs, {k: el.scale(-1) for k, el in rhs.items()})):
            raise ValueError(f"retract fails [d, h] = id - ip on '{g.name}'")
        if not module_is_zero(hom(hom(v))):
            raise ValueError(f"retract fails h*h = 0 on '{g.name}'")
        if not module_is_zero(proj(hom(v))):
            raise ValueError(f"retract fails p*h = 0 on '{g.name}'")
    for g in retract.small_gens:
        if not module_is_zero(hom(inc({g.name: one}))):
            raise ValueError(f"retract fails h*i = 0 on '{g.name}'")

    small_names = [g.name for g in retract.small_gens]
    new_internal: dict[str, ModuleElement] = {}
    new_anchor: dict[str, Derivation] = {}
    new_brackets: dict[tuple[str, str], ModuleElement] = {}
    new_higher: dict[int, dict[tuple[str, ...], ModuleElement]] = {}

    for n in small_names:
        val = proj(l1(inc({n: one})))
        if not module_is_zero(val):
            new_internal[n] = val
        iv = inc({n: one})
        images = {}
        for g in base_alg.gens:
            el = anchor_of_element(a, iv, base_alg.el(g.name))
            if not el.is_zero():
                images[g.name] = el
        new_anchor[n] = Derivation(base_alg, parity_degree(retract, n), images,
                                   name=f"transferred anchor {n}")

    for i, na in enumerate(small_names):
        for nb in small_names[i:]:
            if na == nb and small_parity[na] == 0:
                continue
            val = proj(bracket_elements(a, inc({na: one}), inc({nb: one})))
            if not module_is_zero(val):
                new_brackets[(na, nb)] = val

    if arity_max >= 3:
        table: dict[tuple[str, ...], ModuleElement] = {}
        for i, na in enumerate(small_names):
            for j in range(i + 1, len(small_names)):
                nb = small_names[j]
                for k in range(j + 1, len(small_names)):
                    nc = small_names[k]
                    term = proj(higher_bracket_elements(
                        a, [inc({na: one}), inc({nb: one}), inc({nc: one})], 3))
                    for (x, y, z, s) in _three_shuffles(na, nb, nc, small_parity):
                        inner = hom(bracket_elements(a, inc({x: one}), inc({y: one})))
                        outer = proj(bracket_elements(a, inner, inc({z: one})))
                        term = module_add(term,
                                          {kk: el.scale(s) for kk, el in outer.items()})
                    if not module_is_zero(term):
                        table[(na, nb, nc)] = term
        if table:
            new_higher[3] = table

    out = AlgebroidPresentation(a.base, retract.small_gens, new_anchor,
                                new_brackets, new_higher, new_internal)
    ce = ce_algebra(out, validate=False)
    weight_bound = arity_max - 1
    for g in ce.algebra.gens:
        defect = ce.differential.apply(ce.differential.image_of(g.name))
        for w, part in defect.split_by(ce.algebra.mono_weight).items():
            if w - g.weight <= weight_bound and not part.is_zero():
                raise ValueError(
                    f"transferred structure fails the dual square within weight "
                    f"{weight_bound} on '{g.name}': {emit_element(part)}")
    return out


def parity_degree(retract: ModuleRetract, name: str) -> int:
    for g in retract.small_gens:
        if g.name == name:
            return g.degree
    raise KeyError(name)


def _three_shuffles(na: str, nb: str, nc: str,
                    parity: Mapping[str, int]) -> list[tuple[str, str, str, int]]:
    """(2,1)-shuffles of (na, nb, nc) with antisymmetric Koszul signs."""
    pa, pb, pc = parity[na], parity[nb], parity[nc]
    s_xzy = -1 if (pb * pc) % 2 == 0 else 1
    # moving x past y and past z: two swaps, each -(-1)^{pp}
    s1 = -1 if (pa * pb) % 2 == 0 else 1
    s2 = -1 if (pa * pc) % 2 == 0 else 1
    return [(na, nb, nc, 1), (na, nc, nb, s_xzy), (nb, nc, na, s1 * s2)]
