"""Auxiliary constructions around the step: homogenization over a localized
base, the annihilator extension, lifting modulo a power of d, parameter
adjunction, and the resolution-chain orchestrator.

The orchestrator never invents step data (the intermediate D, its morphism,
or the approximate solution y'): that gap is an explicit input surface, and a
chain that runs out of supplied data reports `stalled` with its partial,
strictly increasing history intact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement

from .errors import (CannotClear, ChainNotIncreasing, NilpotencyUncertified,
                     NotDivisible, NotWellDefined, StepCheckFailed)
from .groebner import Ideal, ideals_equal
from .neron import Check, StepData, StepOutput, run_step, verify_step
from .poly import Context, Poly, format_poly
from .rings import (BaseRing, Elem, Morphism, Presentation, TargetRing,
                    format_elem)
from .smooth import elkik_ideal, minors_of


@dataclass
class HomogenizationData:
    base_pres: Presentation
    G: list[Poly]
    degrees: list[int]
    C: Presentation
    beta: Morphism
    scaling: Poly

    def describe(self):
        return {
            "homogenized": [format_poly(g) for g in self.G],
            "degrees": self.degrees,
            "scaling": format_poly(self.scaling),
            "C": self.C.describe(),
            "beta": self.beta.describe(),
        }


def homogenize(g: Poly, zvars: list[str], z0: str) -> tuple[Poly, int]:
    """Z0^c * g(Z/Z0) with c = deg_Z(g): the honest per-relation degree."""
    ctx = g.ctx
    c = max(0, g.degree_in(zvars))
    i0 = ctx.index[z0]
    zidx = [ctx.index[zz] for zz in zvars]
    out = {}
    for mono, coeff in g.terms.items():
        zdeg = sum(mono[i] for i in zidx)
        m = list(mono)
        m[i0] += c - zdeg
        out[tuple(m)] = coeff
    return Poly(ctx, out), c


def check_homogeneity(G: Poly, zvars: list[str], z0: str, c: int) -> bool:
    """G(lambda Z, lambda Z0) == lambda^c G(Z, Z0) for a fresh symbol lambda."""
    ext = G.ctx.extend(["lam_scale"])
    lam = Poly.var(ext, "lam_scale")
    images = {zz: Poly.var(ext, zz) * lam for zz in list(zvars) + [z0]}
    lhs = G.subs(images, ext)
    rhs = G.lift(ext) * lam ** c
    return lhs == rhs


def homogenize_and_clear(B: Presentation, g: list[Poly], zvars: list[str], z0: str,
                         v: Morphism, z_images: dict[str, Poly], a: Poly | None = None
                         ) -> HomogenizationData:
    """Homogenize the relations of a localized presentation and validate the
    extension of v by (Z, Z0) -> (a z, a z0) against the truncated target.
    """
    target: TargetRing = v.target
    Gs, degs = [], []
    for gj in g:
        Gj, c = homogenize(gj, zvars, z0)
        if not check_homogeneity(Gj, zvars, z0, c):
            raise CannotClear(f"homogenization of {format_poly(gj)} is not homogeneous")
        Gs.append(Gj)
        degs.append(c)
    scaling = a if a is not None else target.one()
    C = Presentation(B.base, tuple(B.vars) + tuple(zvars) + (z0,),
                     [q.lift(B.ctx.extend(list(zvars) + [z0])) for q in B.relations] + Gs)
    images = {yv: v.images[yv] for yv in B.vars}
    for zz in list(zvars) + [z0]:
        images[zz] = target.mul(scaling, target.trunc(z_images[zz]))
    try:
        beta = Morphism(C, target, images, base_images=dict(v.base_images),
                        precision=v.precision, name="beta")
    except NotWellDefined as exc:
        raise CannotClear(
            f"no scaling clears the residual at precision {target.N}: {exc}")
    return HomogenizationData(B, Gs, degs, C, beta, scaling)


@dataclass
class AnnihilatorExtension:
    E: Presentation
    delta: Morphism
    products: list[tuple[int, ...]]
    k: int
    witness: Poly
    checks: list[Check]

    def describe(self):
        return {
            "E": self.E.describe(),
            "delta": self.delta.describe(),
            "nilpotency_exponent": self.k,
            "witness": format_poly(self.witness),
            "checks": [c.as_dict() for c in self.checks],
        }


def annihilator_extension(B: Presentation, v: Morphism, zvars: list[str],
                          g: list[Poly], z_images: dict[str, Poly],
                          hb_gens: list[Poly], k: int, w_img: Poly
                          ) -> AnnihilatorExtension:
    """E = B[Z, U, V, W]/(g_j - sum U_i V_ij, W U_i) with U indexed by the
    degree-k products of the locus generators, and delta sending U to those
    products, V to 0 and W to the nilpotency witness.

    pre: w * (each degree-k product) == 0 at the target precision; the unit
    ideal is rejected (a unit power never becomes nilpotent).
    """
    target: TargetRing = v.target
    if k < 1:
        raise NilpotencyUncertified("nilpotency exponent must be >= 1")
    for gen in hb_gens:
        if target.is_unit(target.trunc(gen)):
            raise NilpotencyUncertified(
                f"locus generator {format_poly(gen)} is a unit; h_B = (1) never nilpotent")
    products = list(combinations_with_replacement(range(len(hb_gens)), k))
    prod_values = []
    for combo in products:
        val = target.one()
        for i in combo:
            val = target.mul(val, hb_gens[i])
        prod_values.append(val)
        if not target.mul(w_img, val).is_zero():
            raise NilpotencyUncertified(
                f"w * product{combo} nonzero at precision {target.N}")
    s_count = len(products)
    e_count = len(g)
    unames = [f"U{i + 1}" for i in range(s_count)]
    vnames = [f"V{i + 1}_{j + 1}" for i in range(s_count) for j in range(e_count)]
    wname = "W"
    ext_vars = tuple(B.vars) + tuple(zvars) + tuple(unames) + tuple(vnames) + (wname,)
    ctxE = B.base.ctx.extend(ext_vars)
    rels = [q.lift(ctxE) for q in B.relations]
    fs = []
    for j, gj in enumerate(g):
        f = gj.lift(ctxE)
        for i in range(s_count):
            f = f - Poly.var(ctxE, unames[i]) * Poly.var(ctxE, f"V{i + 1}_{j + 1}")
        fs.append(f)
    wrels = [Poly.var(ctxE, wname) * Poly.var(ctxE, u) for u in unames]
    E = Presentation(B.base, ext_vars, [])
    E.relations = rels + fs + wrels
    images = {yv: v.images[yv] for yv in B.vars}
    for zz in zvars:
        images[zz] = target.trunc(z_images[zz])
    for i, u in enumerate(unames):
        images[u] = prod_values[i]
    for name in vnames:
        images[name] = target.zero()
    images[wname] = target.trunc(w_img)
    delta = Morphism(E, target, images, base_images=dict(v.base_images),
                     precision=v.precision, name="delta")
    checks = [Check("delta_validated", True,
                    "all relations of E vanish under delta at working precision")]
    checks.append(_check_eu_localization(E, B, zvars, g, unames, vnames, wname))
    checks.append(_check_ew_roundtrip(E, B, zvars, g, unames, vnames, wname))
    return AnnihilatorExtension(E, delta, products, k, w_img, checks)


def _check_eu_localization(E, B, zvars, g, unames, vnames, wname) -> Check:
    """E_{U_1} is a polynomial algebra over B[U, U^-1]: W dies and each
    V_{1j} is solved by the relation f_j; checked by substitution round-trip.
    """
    loc, inv = E.localize(Elem(Poly.var(E.ctx, unames[0])), "Uinv")
    ideal = loc.relations_ideal()
    ok = True
    details = []
    # W must vanish in the localization
    rem, _ = ideal.normal_form(Poly.var(loc.ctx, wname))
    ok = ok and rem.is_zero()
    details.append(f"W -> {format_poly(rem)}")
    # V_{1j} - Uinv*(g_j - sum_{i>1} U_i V_ij) must vanish
    for j in range(len(g)):
        solved = g[j].lift(loc.ctx)
        for i in range(1, len(unames)):
            solved = solved - Poly.var(loc.ctx, unames[i]) * \
                Poly.var(loc.ctx, f"V{i + 1}_{j + 1}")
        expr = Poly.var(loc.ctx, f"V1_{j + 1}") - Poly.var(loc.ctx, inv) * solved
        rem, _ = ideal.normal_form(expr)
        ok = ok and rem.is_zero()
        details.append(f"V1_{j + 1} residual: {format_poly(rem)}")
    return Check("EU_polynomial_algebra", ok, "; ".join(details))


def _check_ew_roundtrip(E, B, zvars, g, unames, vnames, wname) -> Check:
    """E_W == C[V, W, W^-1] by mutual substitution: U -> 0 forward, identity
    back; the round-trip must fix every generator modulo the relations."""
    loc, winv = E.localize(Elem(Poly.var(E.ctx, wname)), "Winv")
    ideal = loc.relations_ideal()
    ok = True
    details = []
    for u in unames:
        rem, _ = ideal.normal_form(Poly.var(loc.ctx, u))
        ok = ok and rem.is_zero()
        details.append(f"{u} -> {format_poly(rem)}")
    # forward map: substituting U -> 0 into the f relations leaves exactly g
    images = {name: Poly.var(loc.ctx, name) for name in loc.vars}
    for u in unames:
        images[u] = Poly.zero(loc.ctx)
    for gj in g:
        img = gj.lift(loc.ctx).subs(images, loc.ctx)
        rem, _ = ideal.normal_form(img)
        ok = ok and rem.is_zero()
        details.append(f"g residual: {format_poly(rem)}")
    return Check("EW_roundtrip", ok, "; ".join(details))


@dataclass
class LiftData:
    D: Presentation
    omega: Morphism
    t_images: list[Poly]
    minor: Poly
    d_power: int
    checks: list[Check]

    def describe(self):
        return {
            "D": self.D.describe(),
            "omega": self.omega.describe(),
            "t_images": [format_poly(t) for t in self.t_images],
            "jacobian_minor": format_poly(self.minor),
            "d_power_in_locus": self.d_power,
            "checks": [c.as_dict() for c in self.checks],
        }


def lift_mod_power(base: BaseRing, target: TargetRing, g: list[Poly],
                   zvars: list[str], z_images: dict[str, Poly],
                   d: Elem, e: int) -> LiftData:
    """D = A[Z, T]/(f), f_i = g_i - d^(2e+1) T_i, with omega(Z, T) = (z, t)
    where t = g(z)/d^(2e+1) in the truncated target.

    Certifies d in the pre-radical locus ideal of D: the Jacobian of f in the
    T-block is -d^(2e+1) Id, so its minor exhibits a d-power directly.
    """
    k = 2 * e + 1
    tnames = [f"T{i + 1}" for i in range(len(g))]
    ctxD = base.ctx.extend(list(zvars) + tnames)
    d_lift = Elem(d.num.lift(ctxD), d.den.lift(ctxD))
    fs = []
    for i, gi in enumerate(g):
        fs.append((Elem(gi.lift(ctxD)) - (d_lift ** k) * Elem(Poly.var(ctxD, tnames[i]))).num)
    D = Presentation(base, tuple(zvars) + tuple(tnames), [])
    D.relations = fs
    u_dk = target.trunc(target.from_base(Elem(d.num.restrict(base.ctx),
                                              d.den.restrict(base.ctx))) ** k)
    t_imgs = []
    for gi in g:
        gz = target.trunc(gi.lift(ctxD).subs(
            {**{zz: target.trunc(z_images[zz]) for zz in zvars},
             **{tn: target.zero() for tn in tnames}},
            target.ctx))
        try:
            t_imgs.append(target.divide(gz, u_dk))
        except NotDivisible as exc:
            raise NotDivisible(f"g(z) not divisible by d^{k} at precision {target.N}: {exc}")
    images = {zz: target.trunc(z_images[zz]) for zz in zvars}
    images.update({tn: ti for tn, ti in zip(tnames, t_imgs)})
    omega = Morphism(D, target, images, name="omega_lift")
    minors = minors_of(fs, tnames, len(fs))
    diag_cols = tuple(range(len(fs)))
    minor = dict(minors)[diag_cols]
    expected = ((-(d_lift ** k).num) ** len(fs))
    scale = (d_lift ** k).den ** len(fs)
    checks = [Check("omega_validated", True, f"f(z, t) = 0 at precision {target.N}")]
    checks.append(Check("t_jacobian_minor", minor * scale == expected * Poly.const(ctxD, 1),
                        "det(df/dT) = (-d^(2e+1))^m exactly"))
    # reducing D modulo d^k and forgetting T reproduces the bar-presentation
    idl1 = Ideal(ctxD, fs + [(d_lift ** k).num], budget=base.budget, cache=base.cache)
    idl2 = Ideal(ctxD, [gi.lift(ctxD) for gi in g] + [(d_lift ** k).num],
                 budget=base.budget, cache=base.cache)
    checks.append(Check("reduction_isomorphism", ideals_equal(idl1, idl2),
                        "(f, d^(2e+1)) = (g, d^(2e+1)) as ideals: Abar x D = Dbar[T]"))
    if not all(c.passed for c in checks):
        raise StepCheckFailed("lift_mod_power", "; ".join(
            f"{c.name}: {c.detail}" for c in checks if not c.passed))
    return LiftData(D, omega, t_imgs, minor, len(fs) * k, checks)


def adjoin_parameters(B: Presentation, v: Morphism, znames: list[str],
                      z_images: dict[str, Poly]):
    """Polynomial extension B[Z] with v extended by Z -> z, revalidated.

    Regularity of the extended map is hypothesis metadata, recorded upstream;
    nothing about it is (or can be) checked here.
    """
    if not znames:
        return B, v
    ext = Presentation(B.base, tuple(B.vars) + tuple(znames),
                       [q.lift(B.base.ctx.extend(list(B.vars) + list(znames)))
                        for q in B.relations])
    target = v.target
    images = {yv: v.images[yv] for yv in B.vars}
    for zz in znames:
        images[zz] = target.trunc(z_images[zz])
    return ext, Morphism(ext, target, images, base_images=dict(v.base_images),
                         precision=v.precision, name=f"{v.name}_ext" if v.name else None)


# ---------------------------------------------------------------------------
# chain orchestration


@dataclass
class ChainIteration:
    index: int
    locus_images: list[Poly]
    status: str
    witness: dict | None = None
    step_checks: list[Check] = field(default_factory=list)
    verify_checks: list[Check] = field(default_factory=list)
    step_output: StepOutput | None = None

    def as_dict(self):
        out = {
            "iteration": self.index,
            "locus_image_generators": [format_poly(g) for g in self.locus_images],
            "status": self.status,
        }
        if self.witness is not None:
            out["witness"] = self.witness
        if self.step_checks:
            out["step_checks"] = [c.as_dict() for c in self.step_checks]
        if self.verify_checks:
            out["verify_checks"] = [c.as_dict() for c in self.verify_checks]
        return out


@dataclass
class ChainState:
    status: str
    iterations: list[ChainIteration]
    prime_regime: str
    unit_certificate: dict | None = None

    def as_dict(self):
        out = {
            "status": self.status,
            "prime_regime": self.prime_regime,
            "iterations": [it.as_dict() for it in self.iterations],
        }
        if self.unit_certificate is not None:
            out["unit_certificate"] = self.unit_certificate
        return out


def locus_images_for(pres: Presentation, morphism: Morphism,
                     max_systems: int = 20) -> list[Poly]:
    """Images in the target of the default pre-radical locus ideal generators."""
    res = elkik_ideal(pres, max_systems=max_systems)
    return [morphism.apply_poly(g) for g in res.ideal.gens]


def resolve_chain(B: Presentation, v: Morphism, step_provider,
                  max_iterations: int = 8, prime_regime: str = "maximal",
                  max_systems: int = 20) -> ChainState:
    """Iterate the step until the locus ideal hits the unit ideal.

    step_provider(i, pres, morphism) returns a StepData for iteration i or
    None when the supply is exhausted (status `stalled`, the documented
    non-constructive gap).  Strict growth is witnessed per accepted iteration
    by an element of the new pre-radical image ideal failing plain membership
    in the previous one; both membership chains are stored.
    """
    target: TargetRing = v.target
    iterations: list[ChainIteration] = []
    cur_pres, cur_map = B, v
    cur_images = locus_images_for(cur_pres, cur_map, max_systems)
    for i in range(max_iterations + 1):
        found = target.unit_in_ideal(cur_images)
        if found is not None:
            gi, inverse = found
            rec = ChainIteration(i, cur_images, "unit-ideal")
            iterations.append(rec)
            cert = {
                "generator": format_poly(cur_images[gi]),
                "inverse": format_poly(inverse),
                "product_check": format_poly(target.mul(cur_images[gi], inverse)),
            }
            return ChainState("resolved", iterations, prime_regime, cert)
        step_data = step_provider(i, cur_pres, cur_map)
        if step_data is None:
            iterations.append(ChainIteration(i, cur_images, "stalled: no step data"))
            return ChainState("stalled", iterations, prime_regime)
        out = run_step(step_data)
        vchecks = verify_step(out)
        new_images = out.h_bprime_images
        witness = None
        for cand in new_images:
            if cand.is_zero():
                continue
            in_old = target.ideal_membership(cand, cur_images)
            if in_old is None:
                ok_new, k_new, _ = target.radical_membership(cand, new_images)
                ok_old, k_old, _ = target.radical_membership(cand, cur_images)
                witness = {
                    "element": format_poly(cand),
                    "member_of_new": True,
                    "plain_member_of_previous": False,
                    "radical_member_of_new": ok_new,
                    "radical_member_of_previous": ok_old,
                }
                break
        if witness is None:
            raise ChainNotIncreasing(
                f"iteration {i}: every generator of the new locus ideal already "
                f"lies in the previous one")
        rec = ChainIteration(i, cur_images, "step-accepted", witness,
                             out.checks, vchecks, out)
        iterations.append(rec)
        cur_pres, cur_map = out.B_prime, out.w
        cur_images = new_images
    iterations.append(ChainIteration(max_iterations + 1, cur_images,
                                     "stalled: iteration budget"))
    return ChainState("stalled", iterations, prime_regime)
