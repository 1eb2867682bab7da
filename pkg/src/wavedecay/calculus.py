"""Exact-rational decay-exponent calculus.

A rate is a triple (a, b, c) read as <r>^-a <v>^-b <u>^-c.  Inside the
light cone (u > 1) we have <t> ~ <v>, so b doubles as the <t> exponent.
Every transformation of a rate goes through a named rule in ``RULES`` so
an ``IterationLog`` can be replayed entry by entry.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple

EXTERIOR = "exterior"
INTERIOR = "interior"
GLOBAL = "global"
_REGIONS = (EXTERIOR, INTERIOR, GLOBAL)

NUDGE = Fraction(1, 10**6)
MAX_STEPS = 10**4
SIGMA_CAP = Fraction(9, 10)   # reduced sigma used when sigma >= 1


class CalculusError(Exception):
    pass


class BoundaryCase(CalculusError):
    """Excluded endpoint of a conversion rule (a logarithm would appear)."""


class EtaAtOne(BoundaryCase):
    pass


class SumAtThree(BoundaryCase):
    pass


class PlateauBoundary(BoundaryCase):
    """The uniform gain lands exactly on the plateau exponent."""


class SumTooLarge(CalculusError):
    pass


class AlphaOutOfRange(CalculusError):
    pass


class AlphaOutOfRangeWarning(UserWarning):
    pass


class RegionMismatch(CalculusError):
    pass


class FormMismatch(CalculusError):
    pass


class NonTermination(CalculusError):
    pass


class GammaOutOfRange(CalculusError):
    pass


class GammaInsufficient(CalculusError):
    pass


class LowPowerNeedsHypothesis(CalculusError):
    pass


def q(x) -> Fraction:
    """Coerce to Fraction; floats go through their shortest repr (0.3 -> 3/10)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError("non-finite exponent")
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class DecayRate:
    a: Fraction = Fraction(0)
    b: Fraction = Fraction(0)
    c: Fraction = Fraction(0)
    region: str = GLOBAL
    zero: bool = False      # absorbing sentinel: the quantity vanishes

    def __post_init__(self):
        if self.region not in _REGIONS:
            raise ValueError(f"unknown region {self.region!r}")
        object.__setattr__(self, "a", q(self.a))
        object.__setattr__(self, "b", q(self.b))
        object.__setattr__(self, "c", q(self.c))

    @classmethod
    def vanishing(cls, region=GLOBAL):
        return cls(0, 0, 0, region, zero=True)

    def shift(self, da=0, db=0, dc=0) -> "DecayRate":
        if self.zero:
            return self
        return replace(self, a=self.a + q(da), b=self.b + q(db), c=self.c + q(dc))

    def scale(self, k) -> "DecayRate":
        if self.zero:
            return self
        k = q(k)
        return replace(self, a=k * self.a, b=k * self.b, c=k * self.c)

    def __add__(self, other: "DecayRate") -> "DecayRate":
        # product of two bounds
        if self.region != other.region:
            raise RegionMismatch(f"{self.region} vs {other.region}")
        if self.zero or other.zero:
            return DecayRate.vanishing(self.region)
        return replace(self, a=self.a + other.a, b=self.b + other.b, c=self.c + other.c)

    @property
    def total(self) -> Fraction:
        return self.a + self.b + self.c

    def triple(self) -> Tuple[Fraction, Fraction, Fraction]:
        return (self.a, self.b, self.c)

    def __str__(self):
        if self.zero:
            return "0"
        parts = []
        for name, e in (("r", self.a), ("v", self.b), ("u", self.c)):
            if e != 0:
                parts.append(f"<{name}>^({-e})")
        return " ".join(parts) or "1"

    def to_json(self):
        if self.zero:
            return {"zero": True, "region": self.region}
        return {"a": str(self.a), "b": str(self.b), "c": str(self.c), "region": self.region}

    @classmethod
    def from_json(cls, d):
        if d.get("zero"):
            return cls.vanishing(d["region"])
        return cls(Fraction(d["a"]), Fraction(d["b"]), Fraction(d["c"]), d["region"])


def rate(a, b, c, region=GLOBAL) -> DecayRate:
    return DecayRate(q(a), q(b), q(c), region)


# --- conversion rules --------------------------------------------------

def eta_tilde(eta) -> Fraction:
    eta = q(eta)
    if eta == 1:
        raise EtaAtOne("eta = 1 is the excluded logarithmic case")
    return eta - 2 if eta < 1 else Fraction(-1)


def convert_interior(r: DecayRate, *, warn=True) -> DecayRate:
    """Source <r>^-a <v>^-b <u>^-c  ->  solution <r>^-1 <u>^-(a+b+eta~-1)."""
    if r.zero:
        return DecayRate.vanishing(r.region)
    if r.c < Fraction(-1, 2):
        raise FormMismatch(f"eta = {r.c} < -1/2")
    if r.region == EXTERIOR and r.total == 3:
        raise SumAtThree("a+b+c = 3 in u < -1")
    if r.region == EXTERIOR and r.total < 3:
        raise FormMismatch("u < -1 branch needs a+b+c > 3; use convert_exterior")
    if warn and not (2 < r.a < 3 or r.a > 3):
        warnings.warn(f"alpha = {r.a} outside (2,3)u(3,inf)", AlphaOutOfRangeWarning, stacklevel=2)
    return DecayRate(1, 0, r.a + r.b + eta_tilde(r.c) - 1, r.region)


def convert_exterior(r: DecayRate) -> DecayRate:
    """Source with a+b+c < 3 in u < -1  ->  r^(2-(a+b+c))."""
    if r.zero:
        return DecayRate.vanishing(EXTERIOR)
    if r.region != EXTERIOR:
        raise RegionMismatch("convert_exterior acts in u < -1 only")
    if r.total == 3:
        raise SumAtThree("a+b+c = 3")
    if r.total > 3:
        raise SumTooLarge(f"a+b+c = {r.total} >= 3")
    return DecayRate(r.total - 2, 0, 0, EXTERIOR)


def convert_dt(r: DecayRate, *, strict=True) -> DecayRate:
    """Cone-supported d_t source <r>^-a <u>^-c  ->  <r>^-1 <u>^-(a+eta~)."""
    if r.zero:
        return DecayRate.vanishing(r.region)
    if r.b != 0:
        raise FormMismatch("d_t conversion takes no <v> weight")
    if r.c < Fraction(-1, 2):
        raise FormMismatch(f"eta = {r.c} < -1/2")
    if not (2 < r.a < 3):
        if strict:
            raise AlphaOutOfRange(f"alpha = {r.a} outside (2,3)")
        warnings.warn(f"alpha = {r.a} outside (2,3)", AlphaOutOfRangeWarning, stacklevel=2)
    return DecayRate(1, 0, r.a + eta_tilde(r.c), r.region)


@dataclass(frozen=True)
class MuWeighted:
    """A rate times cone_distance_weight^-1, <min(r, |t-r|)>^-1."""
    rate: DecayRate

    def specialize(self) -> DecayRate:
        r = self.rate
        if r.zero:
            return r
        if r.region == EXTERIOR:
            # |u| <= r there, so the weight is <u>
            return r.shift(dc=1)
        if r.region == INTERIOR:
            # <t> mu >= <r><u> for r <= t
            return r.shift(da=1, db=-1, dc=1)
        raise RegionMismatch("specialization needs an exterior or interior rate")


def derivative_gain(r: DecayRate) -> MuWeighted:
    return MuWeighted(r)


def weaken(r: DecayRate, s, kind: str) -> DecayRate:
    """Explicit absorption.  kind:
    'r_to_u'  exterior, <r>^-s <= <u>^-s  (s >= 0)
    't_to_u'  interior, <t>^-s <= <u>^-s  (s >= 0)
    't_to_r'  interior, <t>^-s <= <r>^-s  (s >= 0)
    'drop_u'  lower the <u> exponent by s (s >= 0), always valid
    'cone_r_to_t'  equivalence r ~ t on cone-supported quantities
    'r_to_v'  exterior equivalence r ~ v (u < -1)
    """
    s = q(s)
    if r.zero:
        return r
    if kind == "cone_r_to_t" or kind == "r_to_v":
        return r.shift(da=-s, db=s)
    if s < 0:
        raise FormMismatch(f"negative weakening {s}")
    if kind == "r_to_u":
        if r.region != EXTERIOR:
            raise RegionMismatch(kind)
        return r.shift(da=-s, dc=s)
    if kind == "t_to_u":
        if r.region != INTERIOR:
            raise RegionMismatch(kind)
        return r.shift(db=-s, dc=s)
    if kind == "t_to_r":
        if r.region != INTERIOR:
            raise RegionMismatch(kind)
        return r.shift(da=s, db=-s)
    if kind == "drop_u":
        return r.shift(dc=-s)
    raise ValueError(f"unknown weakening {kind!r}")


def absorb_u_growth(r: DecayRate) -> DecayRate:
    """Interior: raise eta to -1/2 by paying with <t> (needs <u> <= <t>)."""
    if r.zero or r.c >= Fraction(-1, 2):
        return r
    return weaken(r, Fraction(-1, 2) - r.c, "t_to_u")


def _offcone_dominates(g: DecayRate, h: DecayRate) -> bool:
    """Is h <= g away from the cone?"""
    if g.region == EXTERIOR:
        # r > 3t/2: <u> ~ <v> ~ <r>
        return h.total >= g.total
    # r < t/2: <u> ~ <v> ~ <t>, r ranges over [0, t/2]
    return h.b + h.c >= g.b + g.c and h.total >= g.total


@dataclass(frozen=True)
class SourceRates:
    g1: DecayRate
    g2: DecayRate        # G_2 itself, cone supported
    dt_g2: DecayRate     # d_t G_2 viewed as a source
    g3: DecayRate
    cone_supported: bool = True


def source_rates(phi_rate: DecayRate, deriv_rate: DecayRate, sigma, p: int,
                 phi3_rate: Optional[DecayRate] = None) -> SourceRates:
    """Envelopes of G_1, G_2, d_t G_2 and G_3 = phi^(p+1)."""
    sigma = q(sigma)
    if phi_rate.region != deriv_rate.region or (phi3_rate is not None and phi3_rate.region != phi_rate.region):
        raise RegionMismatch("source rates need matching regions")
    reg = phi_rate.region
    if phi_rate.zero:
        z = DecayRate.vanishing(reg)
        return SourceRates(z, z, z, z)
    g1 = phi_rate.shift(da=2 + sigma)
    off = deriv_rate.shift(da=1 + sigma)
    if not _offcone_dominates(g1, off):
        # weaken the phi term until the derivative term fits under it
        if reg == EXTERIOR:
            g1 = g1.shift(da=off.total - g1.total)
        else:
            g1 = g1.shift(db=min(off.b + off.c - g1.b - g1.c, off.total - g1.total))
    g2 = phi_rate.shift(da=1 + sigma)
    dt_g2 = deriv_rate.shift(da=1 + sigma)
    base = phi3_rate if phi3_rate is not None else phi_rate
    g3 = base.scale(p + 1)
    if reg == INTERIOR:
        g3 = absorb_u_growth(g3)
    return SourceRates(g1, g2, dt_g2, g3)


def interior_conversion(r: DecayRate, delta, prior: Optional[DecayRate] = None) -> DecayRate:
    """<r>^-1 <u>^-c with prior <t>^-1 <u>^-c' (0 < c-c' <= delta)  ->  <t>^-1 <u>^-c."""
    delta = q(delta)
    if prior is None:
        raise FormMismatch("base case comes from the global u/v bound, not this rule")
    if r.zero:
        return r
    if (r.a, r.b) != (1, 0):
        raise FormMismatch(f"expected <r>^-1 form, got {r}")
    if (prior.a, prior.b) != (0, 1):
        raise FormMismatch(f"expected <t>^-1 prior, got {prior}")
    gain = r.c - prior.c
    if not (0 < gain <= delta):
        raise FormMismatch(f"gain {gain} not in (0, {delta}]")
    return DecayRate(0, 1, r.c, r.region)


def rp_gain_rate(gamma) -> Tuple[DecayRate, DecayRate]:
    """phi_3 seeds from the r^gamma estimate: (interior, exterior)."""
    gamma = q(gamma)
    if gamma <= 0:
        raise GammaOutOfRange(f"gamma = {gamma}")
    inner = DecayRate(1, 0, gamma / 2 - Fraction(1, 2), INTERIOR)
    if gamma >= 1:
        outer = DecayRate(1, 0, (gamma - 1) / 2, EXTERIOR)
    else:
        outer = DecayRate(Fraction(1, 2) + gamma / 2, 0, 0, EXTERIOR)
    return inner, outer


def final_rate(sigma, p: int, low_power_hypothesis: bool = False) -> Tuple[Fraction, Fraction]:
    """(b_v, c_u) of <v>^-1 <u>^-(1+min(sigma, p-2))."""
    sigma = q(sigma)
    if p < 2:
        raise ValueError("p >= 2")
    if p in (2, 3) and not low_power_hypothesis:
        raise LowPowerNeedsHypothesis(f"p = {p} needs the extra-decay hypothesis")
    c_u = 1 + min(sigma, Fraction(p - 2))
    assert c_u == min(1 + sigma, Fraction(p - 1))
    return Fraction(1), c_u


# --- replayable log ----------------------------------------------------

def _pad_triple(r: DecayRate, da=0, db=0, dc=0):
    return r.shift(da, db, dc)


RULES: Dict[str, Callable] = {
    "seed": lambda *, value: DecayRate.from_json(value),
    "weaken": lambda r, *, s, kind: weaken(r, Fraction(s), kind),
    "absorb_u_growth": absorb_u_growth,
    "derivative_gain": lambda r: derivative_gain(r).specialize(),
    "shift": lambda r, *, da, db, dc: _pad_triple(r, Fraction(da), Fraction(db), Fraction(dc)),
    "power": lambda r, *, k: r.scale(Fraction(k)),
    "product": lambda r1, r2: r1 + r2,
    "g1": lambda phi, d, *, sigma: source_rates(phi, d, Fraction(sigma), 1).g1,
    "convert_exterior": convert_exterior,
    "convert_interior": convert_interior,
    "convert_dt": lambda r: convert_dt(r, strict=False),
    "plateau": lambda r, *, a, c: DecayRate(Fraction(a), 0, Fraction(c), r.region),
    "weakest": lambda *rs: _weakest(rs),
    "strongest": lambda *rs: _strongest(rs),
    "uniform_gain": lambda r, prev, *, gain, cap_a, cap_c: _uniform_gain(r, prev, Fraction(gain), cap_a, cap_c),
    "interior_conversion": lambda r, prior, *, delta: interior_conversion(r, Fraction(delta), prior),
}


def _weakest(rs) -> DecayRate:
    """Common envelope of same-form bounds (componentwise minimum)."""
    rs = [r for r in rs if not r.zero]
    if not rs:
        raise ValueError("all channels vanish")
    forms = {(r.region,) for r in rs}
    if len(forms) != 1:
        raise RegionMismatch("mixed regions")
    return DecayRate(min(r.a for r in rs), min(r.b for r in rs), min(r.c for r in rs), rs[0].region)


def _uniform_gain(r: DecayRate, prev: DecayRate, gain: Fraction, cap_a, cap_c) -> DecayRate:
    """Clamp to prev improved by exactly ``gain`` (a weakening of r), capped at the plateau."""
    if cap_a is not None:
        target = min(prev.a + gain, Fraction(cap_a))
        if target > r.a:
            raise GammaInsufficient(f"channel a = {r.a} below uniform target {target}")
        return replace(r, a=target)
    target = min(prev.c + gain, Fraction(cap_c))
    if target > r.c:
        raise GammaInsufficient(f"channel c = {r.c} below uniform target {target}")
    return replace(r, c=target)


def _params_json(params):
    out = {}
    for k, v in params.items():
        if isinstance(v, DecayRate):
            out[k] = v.to_json()
        elif isinstance(v, Fraction):
            out[k] = str(v)
        else:
            out[k] = v
    return out


@dataclass
class LogEntry:
    step: int
    component: str
    rule: str
    inputs: Tuple[DecayRate, ...]
    output: DecayRate
    params: dict = field(default_factory=dict)
    label: str = ""
    warning: str = ""

    def replay(self) -> DecayRate:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AlphaOutOfRangeWarning)
            return RULES[self.rule](*self.inputs, **self.params)

    def to_json(self):
        return {"step": self.step, "component": self.component, "rule": self.rule,
                "inputs": [r.to_json() for r in self.inputs], "output": self.output.to_json(),
                "params": _params_json(self.params), "label": self.label, "warning": self.warning}


@dataclass
class IterationLog:
    region: str
    sigma_original: Fraction
    sigma_reduced: Fraction
    gamma: Fraction
    gamma_reduced: Fraction
    p: int
    entries: List[LogEntry] = field(default_factory=list)
    milestones: Dict[str, Dict[str, DecayRate]] = field(default_factory=dict)
    r_phase_steps: int = 0
    u_phase_steps: int = 0
    nudged: bool = False
    phi3_route: str = "weakened"
    warnings: List[str] = field(default_factory=list)
    terminal: Optional[DecayRate] = None

    @property
    def sigma_prime(self) -> Fraction:
        return min(2 * self.gamma_reduced, self.sigma_reduced)

    def apply(self, step, component, rule, *inputs, label="", **params) -> DecayRate:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            out = RULES[rule](*inputs, **params)
        msg = "; ".join(str(w.message) for w in caught if issubclass(w.category, AlphaOutOfRangeWarning))
        if msg:
            self.warnings.append(f"step {step} {component}: AlphaOutOfRange {msg}")
        self.entries.append(LogEntry(step, component, rule, tuple(inputs), out, dict(params), label, msg))
        return out

    def mark(self, name, **rates):
        self.milestones[name] = dict(rates)

    def replay_ok(self) -> bool:
        return all(e.replay() == e.output for e in self.entries)

    def to_json(self):
        return {
            "region": self.region, "p": self.p,
            "sigma_original": str(self.sigma_original), "sigma_reduced": str(self.sigma_reduced),
            "gamma": str(self.gamma), "gamma_reduced": str(self.gamma_reduced),
            "sigma_prime": str(self.sigma_prime), "nudged": self.nudged,
            "phi3_route": self.phi3_route,
            "r_phase_steps": self.r_phase_steps, "u_phase_steps": self.u_phase_steps,
            "terminal": self.terminal.to_json() if self.terminal else None,
            "warnings": list(self.warnings),
            "milestones": {k: {n: r.to_json() for n, r in v.items()} for k, v in self.milestones.items()},
            "entries": [e.to_json() for e in self.entries],
        }

    def table(self) -> str:
        rows = [f"{'step':>4}  {'comp':<6} {'rule':<20} output"]
        for e in self.entries:
            tag = f"  [{e.label}]" if e.label else ""
            rows.append(f"{e.step:>4}  {e.component:<6} {e.rule:<20} {e.output}{tag}")
        return "\n".join(rows)


# --- iteration drivers -------------------------------------------------

def _check_power(p, gamma):
    if p < 2:
        raise ValueError("p >= 2")
    if p == 2 and gamma <= 1:
        raise GammaInsufficient("p = 2 needs the r^gamma gain with gamma > 1")
    if p == 3 and gamma <= Fraction(1, 2):
        raise GammaInsufficient("p = 3 needs the r^gamma gain with gamma > 1/2")
    if p >= 4 and not (0 < gamma < 1):
        raise GammaOutOfRange(f"gamma = {gamma} not in (0,1)")


def _reduce(sigma, gamma, nudges):
    s = sigma if sigma < 1 else SIGMA_CAP
    return s - nudges * NUDGE, gamma - nudges * NUDGE / 2


def _with_nudge(driver, sigma, gamma, p, nudge, **kw):
    sigma, gamma = q(sigma), q(gamma)
    if sigma <= 0:
        raise ValueError("sigma > 0")
    _check_power(p, gamma)
    for k in range(4 if nudge else 1):
        try:
            final, log = driver(sigma, gamma, p, k, **kw)
            log.nudged = log.nudged or k > 0
            return final, log
        except BoundaryCase:
            if not nudge or k == 3:
                raise
    raise AssertionError("unreachable")


def _channel_r_phase(log, step, comp, src):
    """Sub-critical conversion when the source sum is below 3, plateau <r>^-1 above."""
    if src.total < 3:
        return log.apply(step, comp, "convert_exterior", src)
    if src.total == 3:
        raise SumAtThree(f"{comp}: source sum exactly 3")
    return log.apply(step, comp, "plateau", src, a=Fraction(1), c=Fraction(0), label="sum > 3")


def _phi3_best(log, step, sources, convert, skip_boundary=False):
    """Convert each candidate phi_3 source; keep the strongest same-form output."""
    outs, first_err = [], None
    skip = (FormMismatch, SumTooLarge, BoundaryCase) if skip_boundary else (FormMismatch, SumTooLarge)
    for src in sources:
        try:
            outs.append((src, convert(src)))
        except skip as e:
            first_err = first_err or e
    if not outs:
        raise first_err
    if len(outs) == 1:
        return outs[0]
    best = log.apply(step, "phi3", "strongest", *[o for _, o in outs])
    for src, o in outs:
        if o == best:
            return src, o
    raise AssertionError("strongest output not among candidates")


def _strongest(rs) -> DecayRate:
    """Best of several valid bounds that differ in one exponent only."""
    r0 = rs[0]
    if all((r.a, r.b) == (r0.a, r0.b) for r in rs):
        return max(rs, key=lambda r: r.c)
    if all((r.b, r.c) == (r0.b, r0.c) for r in rs):
        return max(rs, key=lambda r: r.a)
    raise FormMismatch("bounds not comparable")


def _exterior(sigma, gamma, p, nudges, phi3_route="weakened"):
    s_red, g_red = _reduce(sigma, gamma, nudges)
    log = IterationLog(EXTERIOR, sigma, s_red, gamma, g_red, p, phi3_route=phi3_route)
    sp = log.sigma_prime
    one = Fraction(1)

    phi = log.apply(0, "phi", "seed", value=DecayRate(1, 0, Fraction(-1, 2), EXTERIOR).to_json(), label="seed")
    dphi = log.apply(0, "dphi", "derivative_gain", phi, label="seed")
    _, seed3 = rp_gain_rate(g_red)
    if g_red < 1:
        phi3 = log.apply(0, "phi3", "seed", value=DecayRate(1, 0, g_red / 2 - Fraction(1, 2), EXTERIOR).to_json(), label="seed")
    else:
        phi3 = log.apply(0, "phi3", "seed", value=seed3.to_json(), label="seed")
    log.mark("seed", phi=phi, dphi=dphi, phi3=phi3)

    phi = log.apply(0, "phi", "weaken", phi, s=Fraction(1, 2), kind="r_to_u", label="weakened")
    dphi = log.apply(0, "dphi", "weaken", dphi, s=Fraction(1, 2), kind="r_to_u", label="weakened")
    if phi3.c < 0:
        phi3 = log.apply(0, "phi3", "weaken", phi3, s=-phi3.c, kind="r_to_u", label="weakened")
    log.mark("weakened", phi=phi, dphi=dphi, phi3=phi3)

    # <r>-phase: uniform gain sigma' per round until the <r>^-1 plateau
    step = 0
    while phi.a < one:
        step += 1
        if step > MAX_STEPS:
            raise NonTermination("r-phase")
        h1 = log.apply(step, "phi1", "g1", phi, dphi, sigma=s_red)
        h2 = log.apply(step, "phi2", "shift", dphi, da=1 + s_red, db=0, dc=0, label="d_t H2")
        if step == 1:
            h3 = log.apply(step, "phi3", "power", phi3, k=p + 1)
            if p == 4 and phi3_route == "weakened" and g_red < 1:
                disp = h3
                h3 = log.apply(step, "phi3", "weaken", h3, s=Fraction(1, 2) + g_red / 2, kind="r_to_u")
                h3 = log.apply(step, "phi3", "weaken", h3, s=g_red / 2, kind="drop_u")
            else:
                disp = h3
            log.mark("sources_weakened", H1=h1, dtH2=h2, H3=disp, H3_used=h3)
        c1 = _channel_r_phase(log, step, "phi1", h1)
        c2 = _channel_r_phase(log, step, "phi2", h2)
        if step == 1:
            c3 = _channel_r_phase(log, step, "phi3", h3)
        else:
            cands = [log.apply(step, "phi3", "power", f, k=p + 1) for f in (phi, phi3)]
            h3, c3 = _phi3_best(log, step, cands, lambda src: _channel_r_phase(log, step, "phi3", src))
        if step == 1:
            log.mark("converted_weakened", phi1=c1, phi2=c2, phi3=c3)
        w = log.apply(step, "phi", "weakest", c1, c2, c3)
        if phi.a + sp == one:
            raise PlateauBoundary("1/(2 sigma') is an integer")
        prev = phi
        phi = log.apply(step, "phi", "uniform_gain", w, prev, gain=sp, cap_a=one, cap_c=None)
        dphi = log.apply(step, "dphi", "derivative_gain", phi)
        if phi.a < one:
            log.r_phase_steps += 1
            if step == 1:
                log.mark("gain", phi=phi, dphi=dphi)
        else:
            if step == 1:
                log.mark("gain", phi=phi, dphi=dphi)
            log.mark("plateau", phi=phi, dphi=dphi)

    phi, dphi = _u_phase(log, phi, dphi, step, s_red, p, phi3)
    final = log.milestones["terminal"]["phi"]
    log.terminal = final
    return final, log


def _u_phase_round(log, step, phi, dphi, sig, p, phi3_seed, strict_dt=True):
    reg = phi.region
    phi3_in = phi
    if phi.c == 1:
        # eta = 1 would land on the logarithmic case for phi_1, phi_2
        phi = log.apply(step, "phi", "weaken", phi, s=NUDGE, kind="drop_u", label="nudge")
        log.nudged = True
    h1 = log.apply(step, "phi1", "g1", phi, dphi, sigma=sig)
    if reg == EXTERIOR:
        h1v = log.apply(step, "phi1", "weaken", h1, s=1, kind="r_to_v")
    else:
        h1v = h1
    c1 = log.apply(step, "phi1", "convert_interior", h1v)
    g2 = log.apply(step, "phi2", "shift", phi, da=1 + sig, db=0, dc=0, label="H2")
    if reg == INTERIOR:
        g2 = log.apply(step, "phi2", "weaken", g2, s=g2.b, kind="t_to_r")
    if not strict_dt and not (2 < g2.a < 3):
        log.warnings.append(f"step {step} phi2: AlphaOutOfRange alpha = {g2.a} in final iterate")
    elif strict_dt:
        convert_dt(g2)   # raises on a range violation
    c2 = log.apply(step, "phi2", "convert_dt", g2)
    cands = [log.apply(step, "phi3", "power", f, k=p + 1) for f in (phi3_in, phi3_seed)]
    if reg == INTERIOR:
        cands = [log.apply(step, "phi3", "absorb_u_growth", h) for h in cands]
    h3, c3 = _phi3_best(log, step, cands, lambda src: log.apply(step, "phi3", "convert_interior", src),
                        skip_boundary=p <= 3)
    return h1, g2, h3, c1, c2, c3


def _u_phase(log, phi, dphi, step, s_red, p, phi3_seed):
    """<u>-phase from the plateau to a fixed point; last round uses the original sigma."""
    reg = log.region
    lab = "plateau" if reg == EXTERIOR else "interior_plateau"
    final_round = False
    while True:
        step += 1
        if step > MAX_STEPS:
            raise NonTermination("u-phase")
        sig = log.sigma_original if final_round else s_red
        h1, g2, h3, c1, c2, c3 = _u_phase_round(log, step, phi, dphi, sig, p, phi3_seed,
                                                strict_dt=not final_round)
        if "sources_" + lab not in log.milestones:
            log.mark("sources_" + lab, H1=h1, H2=g2, H3=h3)
            log.mark("converted_" + lab, phi1=c1, phi2=c2, phi3=c3)
        w = log.apply(step, "phi", "weakest", c1, c2, c3)
        log.u_phase_steps += 1
        if w.c < phi.c or (w.c == phi.c and not final_round and log.u_phase_steps == 1):
            raise GammaInsufficient("u-phase stalls")
        if w.c > phi.c:
            if reg == INTERIOR:
                w = log.apply(step, "phi", "interior_conversion", w, phi, delta=w.c - phi.c)
            phi = w
            dphi = log.apply(step, "dphi", "derivative_gain", phi)
        elif not final_round:
            final_round = True
            continue
        if final_round:
            log.mark("terminal_phi12", phi1=c1, phi2=c2)
            log.mark("terminal_phi3", phi3=c3)
            break
    term = DecayRate(0, 1, phi.c, INTERIOR) if reg == INTERIOR else phi
    log.mark("terminal", phi=term)
    return phi, dphi


def _interior(sigma, gamma, p, nudges, phi3_route="weakened"):
    s_red, g_red = _reduce(sigma, gamma, nudges)
    log = IterationLog(INTERIOR, sigma, s_red, gamma, g_red, p, phi3_route=phi3_route)
    sp = log.sigma_prime
    zero = Fraction(0)

    phi = log.apply(0, "phi", "seed", value=DecayRate(0, 1, Fraction(-1, 2), INTERIOR).to_json(), label="interior_seed")
    dphi = log.apply(0, "dphi", "derivative_gain", phi, label="interior_seed")
    phi3 = log.apply(0, "phi3", "seed", value=DecayRate(0, 1, g_red / 2 - Fraction(1, 2), INTERIOR).to_json(), label="interior_seed")
    log.mark("interior_seed", phi=phi, dphi=dphi, phi3=phi3)

    step = 0
    while phi.c < zero:
        step += 1
        if step > MAX_STEPS:
            raise NonTermination("interior growth phase")
        h1 = log.apply(step, "phi1", "g1", phi, dphi, sigma=s_red)
        h2 = log.apply(step, "phi2", "shift", dphi, da=1 + s_red, db=0, dc=0, label="d_t H2")
        if step == 1:
            h2disp = log.apply(step, "phi2", "weaken", h2, s=1, kind="cone_r_to_t", label="bound form")
            h3raw = log.apply(step, "phi3", "power", phi3, k=p + 1)
        c1 = log.apply(step, "phi1", "convert_interior", h1)
        c2 = log.apply(step, "phi2", "convert_interior", h2)
        conv3 = lambda src: log.apply(step, "phi3", "convert_interior", src)
        if step == 1:
            h3 = log.apply(step, "phi3", "absorb_u_growth", h3raw)
            log.mark("sources_interior_seed", H1=h1, dtH2=h2disp, dtH2_used=h2, H3_raw=h3raw, H3=h3)
            c3 = conv3(h3)
        else:
            cands = [log.apply(step, "phi3", "power", f, k=p + 1) for f in (phi, phi3)]
            cands = [log.apply(step, "phi3", "absorb_u_growth", h) for h in cands]
            h3, c3 = _phi3_best(log, step, cands, conv3)
        if step == 1:
            log.mark("converted_interior_seed", phi1=c1, phi2=c2, phi3=c3)
        w = log.apply(step, "phi", "weakest", c1, c2, c3)
        if phi.c + sp == zero:
            raise PlateauBoundary("1/(2 sigma') is an integer")
        prev = DecayRate(1, 0, phi.c, INTERIOR)
        wr = log.apply(step, "phi", "uniform_gain", w, prev, gain=sp, cap_a=None, cap_c=zero)
        phi_new = log.apply(step, "phi", "interior_conversion", wr, phi, delta=sp)
        phi = phi_new
        dphi = log.apply(step, "dphi", "derivative_gain", phi)
        if phi.c < zero:
            log.r_phase_steps += 1
            if step == 1:
                log.mark("interior_gain", phi=phi, dphi=dphi)
        else:
            if step == 1:
                log.mark("interior_gain", phi=phi, dphi=dphi)
            log.mark("interior_plateau", phi=phi, dphi=dphi)

    phi, dphi = _u_phase(log, phi, dphi, step, s_red, p, phi3)
    final = log.milestones["terminal"]["phi"]
    log.terminal = final
    return final, log


def iterate_exterior(sigma, gamma, p: int = 4, *, nudge=True, phi3_route="weakened"):
    """Iteration in u < -1; returns (terminal rate, log)."""
    return _with_nudge(_exterior, sigma, gamma, p, nudge, phi3_route=phi3_route)


def iterate_interior(sigma, gamma, p: int = 4, *, nudge=True, phi3_route="weakened"):
    """Iteration in u > 1; returns (terminal rate, log)."""
    return _with_nudge(_interior, sigma, gamma, p, nudge, phi3_route=phi3_route)


def step_count_law(sigma, gamma) -> int:
    sp = min(2 * q(gamma), q(sigma) if q(sigma) < 1 else SIGMA_CAP)
    return math.floor(1 / (2 * sp))


def predict(sigma, gamma, p: int = 4, region: str = INTERIOR, **kw):
    """Terminal rate and log for one region (cli entry point)."""
    if region == EXTERIOR:
        return iterate_exterior(sigma, gamma, p, **kw)
    if region == INTERIOR:
        return iterate_interior(sigma, gamma, p, **kw)
    raise ValueError(f"region must be {EXTERIOR!r} or {INTERIOR!r}")
