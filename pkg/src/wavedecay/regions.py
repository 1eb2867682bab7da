"""Dyadic spacetime regions, weighted norms over traces and inequality harnesses.

Every spatial integral is radial: dx = 4 pi r^2 dr.  Annuli are taken in r,
A_1 = {r < 2} and A_R = {R <= r < 2R} for dyadic R >= 2, so they partition
space exactly.  d_v denotes d_t + d_r.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .evolve import RadialState, SpacetimeTrace, psi_to_phi

FOUR_PI = 4.0 * np.pi

KINDS = ("Annulus_AR", "ConeSlab_CTR", "ConeDist_CTU", "Exterior_CRT", "BackCone_Dtr", "BackConeDyad_DtrR")


class RegionError(ValueError):
    pass


class SpanOutOfRange(RegionError):
    pass


class TooSparse(RegionError):
    pass


class GammaOutOfRange(RegionError):
    pass


class ApexOutOfRange(RegionError):
    pass


class RegionUnsupported(RegionError):
    pass


def bracket(x):
    return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)


# --- region descriptors --------------------------------------------------

@dataclass(frozen=True)
class RegionSpec:
    kind: str
    T: float = 1.0
    R: float = 1.0
    U: float = 1.0
    apex: Tuple[float, float] = (0.0, 0.0)   # (t, r)
    base: float = 2.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RegionError(f"unknown region kind {self.kind!r}")
        if min(self.T, self.R, self.U) < 1:
            raise RegionError("dyadic parameters are >= 1")
        if not (2.0 <= self.base <= 5.0):
            raise RegionError("dyadic base must lie in [2, 5]")
        if self.kind == "Exterior_CRT" and not self.R > self.T:
            raise RegionError("C_R^T requires R > T")

    def contains(self, t, r):
        """Membership of (t, r); for back-cone kinds (t, r) are (s, rho)."""
        t = np.asarray(t, dtype=float)
        r = np.asarray(r, dtype=float)
        T, R, U = self.T, self.R, self.U
        if self.kind == "Annulus_AR":
            return (r < 2) & (r >= 0) if R == 1 else (R <= r) & (r < 2 * R)
        if self.kind == "ConeSlab_CTR":
            return _in_CT(t, r, T) & (((0 < r) & (r < 2)) if R == 1 else ((R < r) & (r < 2 * R)))
        if self.kind == "ConeDist_CTU":
            d = np.abs(t - r)
            band = ((0 < d) & (d < 2)) if U == 1 else ((U < d) & (d < 2 * U))
            return (T <= t) & (t <= 2 * T) & band & (r >= 0)
        if self.kind == "Exterior_CRT":
            d = np.abs(r - t)
            return (r >= t) & (T <= t) & (t <= 2 * T) & (R <= r) & (r <= 2 * R) & (R <= d) & (d <= 2 * R)
        ta, ra = self.apex
        s, rho = t, r
        inside = ((s >= 0) & (rho >= 0) & (-(ta + ra) <= s - rho) & (s - rho <= ta - ra)
                  & (abs(ta - ra) <= s + rho) & (s + rho <= ta + ra))
        if self.kind == "BackCone_Dtr":
            return inside
        return inside & ((rho < 2) if R == 1 else ((R < rho) & (rho < 2 * R)))

    def box(self):
        """(t_lo, t_hi, r_lo, r_hi) containing the region."""
        T, R, U = self.T, self.R, self.U
        if self.kind == "Annulus_AR":
            return (0.0, np.inf, 0.0 if R == 1 else R, 2 * R)
        if self.kind == "ConeSlab_CTR":
            t0, t1 = (0.0, 2.0) if T == 1 else (T, 2 * T)
            return (t0, t1, 0.0 if R == 1 else R, min(2 * R, t1))
        if self.kind == "ConeDist_CTU":
            return (T, 2 * T, 0.0, 2 * T + 2 * U)
        if self.kind == "Exterior_CRT":
            return (T, 2 * T, R, 2 * R)
        ta, ra = self.apex
        return (0.0, ta, 0.0, ta + ra)


def _in_CT(t, r, T):
    if T == 1:
        return (0 < t) & (t < 2) & (r <= t) & (r >= 0)
    return (T <= t) & (t <= 2 * T) & (r <= t) & (r >= 0)


def dyadic_R(r_max):
    """Dyadic radii 1, 2, 4, ... whose annuli meet [0, r_max]."""
    out, R = [1.0], 2.0
    while R <= r_max:
        out.append(R)
        R *= 2
    return out


def u_levels(T, base=2.5):
    """U cells for C_T^U: the top level sits at 3T/8, lower levels divide by the base."""
    top = 3.0 * T / 8.0
    out = []
    U = top
    while U > 1:
        out.append(U)
        U /= base
    out.append(1.0)
    return out[::-1]


# --- norm plumbing -------------------------------------------------------

@dataclass
class NormReport:
    norm: str
    value: float
    err_est: float
    span: Tuple[float, float]
    region: str = "all"
    resolution: Dict[str, float] = field(default_factory=dict)

    def to_json(self):
        d = asdict(self)
        d["span"] = list(self.span)
        return d


@dataclass
class Field:
    """Samples F[k, i] at times[k], radii r[i] on a uniform radial grid."""
    times: np.ndarray
    r: np.ndarray
    values: np.ndarray

    @property
    def dr(self):
        return float(self.r[1] - self.r[0])


def field_of(trace: SpacetimeTrace, name="phi") -> Field:
    """phi, phi_t, phi_r, dphi (spacetime gradient size), dv_phi, d2phi."""
    phi = trace.phi
    tt = trace.times
    if name == "phi":
        return Field(tt, trace.r, phi)
    phi_t = trace.phi_t
    phi_r = np.gradient(phi, trace.dr, axis=1, edge_order=2)
    phi_r[:, 0] = 0.0
    vals = {"phi_t": lambda: phi_t, "phi_r": lambda: phi_r,
            "dphi": lambda: np.sqrt(phi_t ** 2 + phi_r ** 2),
            "dv_phi": lambda: phi_t + phi_r}
    if name in vals:
        return Field(tt, trace.r, vals[name]())
    if name == "d2phi":
        if len(tt) < 3:
            raise TooSparse("second time derivatives need three slices")
        ptt = np.gradient(phi_t, tt, axis=0, edge_order=2)
        ptr = np.gradient(phi_t, trace.dr, axis=1, edge_order=2)
        prr = np.gradient(phi_r, trace.dr, axis=1, edge_order=2)
        return Field(tt, trace.r, np.sqrt(ptt ** 2 + 2 * ptr ** 2 + prr ** 2))
    raise RegionError(f"unknown field {name!r}")


def _as_field(src, name="phi") -> Field:
    if isinstance(src, Field):
        return src
    if isinstance(src, SpacetimeTrace):
        return field_of(src, name)
    raise TypeError("expected a SpacetimeTrace or Field")


def _span_index(times, t0, t1):
    eps = 1e-9 * max(1.0, abs(t1))
    if t0 < times[0] - eps or t1 > times[-1] + eps or t1 < t0:
        raise SpanOutOfRange(f"[{t0}, {t1}] outside [{times[0]}, {times[-1]}]")
    m = (times >= t0 - eps) & (times <= t1 + eps)
    if m.sum() < 2:
        raise SpanOutOfRange("fewer than two slices in span")
    return m


def _trap(y, x, axis=-1):
    return np.trapezoid(y, x, axis=axis)


def _radial(G, r, lo, hi, stride=1):
    """Trapezoid of G[..., i] r_i^2 4 pi over lo <= r <= hi (nodes)."""
    m = (r >= lo - 1e-12) & (r <= hi + 1e-12)
    idx = np.nonzero(m)[0][::stride]
    if len(idx) < 2:
        return np.zeros(G.shape[:-1])
    return FOUR_PI * _trap(G[..., idx] * r[idx] ** 2, r[idx])


def _annulus_bounds(R, r_max):
    if R == 1:
        return 0.0, 2.0
    return R, min(2 * R, r_max)


def _weighted_annulus_norms(F: Field, t0, t1, weight_pow, stride=1):
    """||<r>^weight_pow F||_{L^2([t0,t1] x A_R)} for each dyadic R."""
    m = _span_index(F.times, t0, t1)
    tt = F.times[m][::stride]
    G = (bracket(F.r) ** (2 * weight_pow))[None, :] * F.values[m][::stride] ** 2
    out = []
    for R in dyadic_R(F.r[-1]):
        lo, hi = _annulus_bounds(R, F.r[-1])
        if hi <= lo:
            continue
        inner = _radial(G, F.r, lo, hi, stride)
        out.append((R, float(np.sqrt(max(_trap(inner, tt), 0.0)))))
    return out


def _report(name, fine, coarse, span, F: Field, region="all"):
    return NormReport(name, float(fine), float(abs(fine - coarse) / 3.0), (float(span[0]), float(span[1])),
                      region, {"dr": F.dr, "dt_slices": float(np.min(np.diff(F.times)))})


def le_norm(src, t0, t1, name="phi") -> NormReport:
    """sup_R ||<r>^(-1/2) F||_{L^2([t0,t1] x A_R)}."""
    F = _as_field(src, name)
    fine = max((v for _, v in _weighted_annulus_norms(F, t0, t1, -0.5)), default=0.0)
    coarse = max((v for _, v in _weighted_annulus_norms(F, t0, t1, -0.5, 2)), default=0.0)
    return _report("LE", fine, coarse, (t0, t1), F)


def le_star_norm(src, t0, t1, name="phi") -> NormReport:
    """sum_R ||<r>^(1/2) F||_{L^2([t0,t1] x A_R)}."""
    F = _as_field(src, name)
    fine = sum(v for _, v in _weighted_annulus_norms(F, t0, t1, 0.5))
    coarse = sum(v for _, v in _weighted_annulus_norms(F, t0, t1, 0.5, 2))
    return _report("LE*", fine, coarse, (t0, t1), F)


def le1_norm(trace: SpacetimeTrace, t0, t1) -> NormReport:
    """||d phi||_LE + ||<r>^-1 phi||_LE."""
    dphi = field_of(trace, "dphi")
    phi = field_of(trace, "phi")
    a = le_norm(dphi, t0, t1)
    w = Field(phi.times, phi.r, phi.values / bracket(phi.r)[None, :])
    b = le_norm(w, t0, t1)
    return NormReport("LE1", a.value + b.value, a.err_est + b.err_est, (t0, t1), "all", a.resolution)


def strichartz_norm(src, t0, t1, name="phi") -> NormReport:
    """(int (4 pi int |F|^10 r^2 dr)^(1/2) dt)^(1/5)."""
    F = _as_field(src, name)
    m = _span_index(F.times, t0, t1)
    tt = F.times[m]
    inner = np.sqrt(np.maximum(_radial(np.abs(F.values[m]) ** 10, F.r, 0.0, F.r[-1]), 0.0))
    fine = _trap(inner, tt)
    if len(tt) >= 5:
        coarse = _trap(inner[::2], tt[::2]) if (len(tt) - 1) % 2 == 0 else _trap(inner[:-1][::2], tt[:-1][::2]) + _trap(inner[-2:], tt[-2:])
        if fine > 0 and abs(fine - coarse) / fine > 0.03:
            raise TooSparse("slice cadence too coarse for the temporal L^5 quadrature")
    else:
        raise TooSparse("need at least five slices")
    val = max(fine, 0.0) ** 0.2
    cval = max(coarse, 0.0) ** 0.2
    return _report("L5L10", val, cval, (t0, t1), F)


# --- r^gamma quantities ---------------------------------------------------

def _check_gamma(gamma):
    if not (0 < gamma < 1):
        raise GammaOutOfRange("gamma must lie in (0, 1)")


def _egamma_parts(phi, phi_t, phi_r, r, gamma):
    rr = r[1:]
    good = phi_t[..., 1:] + phi_r[..., 1:] + phi[..., 1:] / (2 * rr)
    a = FOUR_PI * _trap(rr ** gamma * good ** 2 * rr ** 2, rr, axis=-1)
    b = FOUR_PI * _trap(rr ** gamma * (phi[..., 1:] / rr) ** 2 * rr ** 2, rr, axis=-1)
    return np.sqrt(a) + np.sqrt(b)


def rgamma_energy(state, gamma) -> NormReport:
    """E^gamma = (||r^(g/2)(d_v + 1/(2r)) phi|| + ||r^(g/2) phi / r||)^2; angular part vanishes."""
    _check_gamma(gamma)
    if isinstance(state, RadialState):
        r = state.r
        phi, phi_t = state.phi, state.phi_t
        t = state.t
    else:  # (r, phi, phi_t)
        r, phi, phi_t = (np.asarray(x, float) for x in state)
        t = 0.0
    dr = r[1] - r[0]
    phi_r = np.gradient(phi, dr, edge_order=2)
    phi_r[0] = 0.0
    fine = _egamma_parts(phi, phi_t, phi_r, r, gamma) ** 2
    coarse = _egamma_parts(phi[::2], phi_t[::2], phi_r[::2], r[::2], gamma) ** 2
    return NormReport("E_gamma", float(fine), float(abs(fine - coarse) / 3), (t, t), "all", {"dr": float(dr)})


def rgamma_bulk(trace: SpacetimeTrace, gamma, T1, T2) -> NormReport:
    """A_gamma = int int phi^2 r^(g-3) + (d_v phi)^2 r^(g-1) dx dt over [T1, T2]."""
    _check_gamma(gamma)
    phi = field_of(trace, "phi")
    dv = field_of(trace, "dv_phi")
    m = _span_index(phi.times, T1, T2)
    r = phi.r[1:]
    G = phi.values[m][:, 1:] ** 2 * r ** (gamma - 3) + dv.values[m][:, 1:] ** 2 * r ** (gamma - 1)

    def total(stride):
        inner = FOUR_PI * _trap(G[::stride, ::stride] * r[::stride] ** 2, r[::stride], axis=1)
        return _trap(inner, phi.times[m][::stride])

    fine, coarse = total(1), total(2)
    return NormReport("A_gamma", float(fine), float(abs(fine - coarse) / 3), (T1, T2), "all",
                      {"dr": phi.dr})


def bulk_density(gamma) -> Callable[[RadialState], float]:
    """Monitor: 4 pi int r^(gamma+1) phi^6 dr at one time (for the defocusing bulk integral)."""
    def fn(state: RadialState) -> float:
        r = state.r
        phi = state.phi
        return float(FOUR_PI * _trap(r ** (gamma + 1) * phi ** 6, r))
    return fn


def running_integral(times, density):
    """Cumulative trapezoid of a monitor series."""
    times = np.asarray(times, float)
    density = np.asarray(density, float)
    inc = 0.5 * (density[1:] + density[:-1]) * np.diff(times)
    return np.concatenate([[0.0], np.cumsum(inc)])


def rgamma_inequality_ratio(trace: SpacetimeTrace, gamma, T1, T2):
    """(A_gamma + E^gamma(T2)) / (E^gamma(T1) + ||d phi||_LE^2 + ||d^2 phi||_LE^2) on [T1, T2]."""
    slices = trace.slices
    i1 = int(np.argmin(np.abs(trace.times - T1)))
    i2 = int(np.argmin(np.abs(trace.times - T2)))
    e1 = rgamma_energy(slices[i1], gamma).value
    e2 = rgamma_energy(slices[i2], gamma).value
    a = rgamma_bulk(trace, gamma, trace.times[i1], trace.times[i2]).value
    d1 = le_norm(field_of(trace, "dphi"), trace.times[i1], trace.times[i2]).value
    d2 = le_norm(field_of(trace, "d2phi"), trace.times[i1], trace.times[i2]).value
    lhs = a + e2
    rhs = e1 + d1 ** 2 + d2 ** 2
    return lhs, rhs, lhs / rhs if rhs > 0 else 0.0


# --- backward cone integrals ---------------------------------------------

def _gl(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def cone_integral(trace: Optional[SpacetimeTrace], apex, weight, R: Optional[float] = None,
                  field_fn: Optional[Callable] = None, n: int = 48, pieces: int = 24) -> float:
    """int over D_tr (optionally D_tr^R) of weight(s, rho) [* field_fn(phi(s, rho), s, rho)] ds drho.

    Integrates in null coordinates alpha = s + rho, beta = s - rho with composite
    Gauss-Legendre on alpha pieces split at the corners of the domain.
    """
    t, r = float(apex[0]), float(apex[1])
    if t < 0 or r < 0:
        raise ApexOutOfRange("apex must have t, r >= 0")
    if trace is not None:
        if len(trace.times) == 0 or t > trace.times[-1] + 1e-9 or t + r > trace.r[-1]:
            raise ApexOutOfRange("backward cone leaves the trace span")
    u, v = t - r, t + r
    if R is None:
        rmin, rmax = 0.0, np.inf
    elif R == 1:
        rmin, rmax = 0.0, 2.0
    else:
        rmin, rmax = R, 2.0 * R
    a_lo, a_hi = abs(u), v
    if a_hi <= a_lo:
        return 0.0
    cuts = {a_lo, a_hi}
    for c in (rmax, 2 * rmax - v, u + 2 * rmin, rmin, 2 * rmin - v, u + 2 * rmax):
        if np.isfinite(c) and a_lo < c < a_hi:
            cuts.add(c)
    cuts = sorted(cuts)
    # refine geometrically inside each piece so <alpha>^-k weights resolve
    edges = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if a > 0:
            edges.extend(np.geomspace(a, b, pieces + 1)[:-1])
        else:
            edges.extend(np.linspace(a, b, pieces + 1)[:-1])
    edges.append(cuts[-1])
    xg, wg = _gl(n)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        alpha = 0.5 * (b - a) * xg + 0.5 * (b + a)
        wa = 0.5 * (b - a) * wg
        lo = np.maximum.reduce([np.full_like(alpha, -v), -alpha, alpha - 2 * rmax if np.isfinite(rmax) else np.full_like(alpha, -np.inf)])
        hi = np.minimum(np.full_like(alpha, u), alpha - 2 * rmin)
        L = np.maximum(hi - lo, 0.0)
        beta = 0.5 * L[:, None] * xg[None, :] + 0.5 * (hi + lo)[:, None]
        wb = 0.5 * L[:, None] * wg[None, :]
        A = alpha[:, None]
        s = 0.5 * (A + beta)
        rho = 0.5 * (A - beta)
        g = weight(s, rho)
        if field_fn is not None:
            g = g * field_fn(_sample_trace(trace, s, rho), s, rho)
        total += float(np.sum(wa[:, None] * wb * g)) * 0.5
    return total


def _sample_trace(trace: SpacetimeTrace, s, rho):
    """Linear in time, linear in radius interpolation of phi."""
    phi = trace.phi
    tt, dr = trace.times, trace.dr
    s = np.clip(s, tt[0], tt[-1])
    j = np.clip(np.searchsorted(tt, s, side="right") - 1, 0, len(tt) - 2)
    a = (s - tt[j]) / (tt[j + 1] - tt[j])
    x = np.clip(rho / dr, 0, phi.shape[1] - 1.000001)
    i = np.floor(x).astype(int)
    b = x - i
    f0 = (1 - b) * phi[j, i] + b * phi[j, i + 1]
    f1 = (1 - b) * phi[j + 1, i] + b * phi[j + 1, i + 1]
    return (1 - a) * f0 + a * f1


def v_plus_weight(power=-2):
    return lambda s, rho: bracket(s + rho) ** power


def v_plus_norm(apex, R) -> float:
    """||<s + rho>^-1||_{L^2(D_tr^R)}."""
    return float(np.sqrt(cone_integral(None, apex, v_plus_weight(-2), R=R)))


# --- Hardy and region Sobolev harnesses -------------------------------------

def hardy_sides(f, r, t):
    """lhs = int_{t/2}^{3t/2} <t-r>^-2 f^2 dx; rhs = int_{t/4}^{7t/4} |f_r|^2 dx + t^-2 (end pieces)."""
    r = np.asarray(r, float)
    f = np.asarray(f, float)
    dr = r[1] - r[0]
    if t < 4 * dr:
        raise RegionError("need t >= 4 dr")
    if r[-1] < 1.75 * t:
        raise SpanOutOfRange("grid must reach 7t/4")
    fr = np.gradient(f, dr, edge_order=2)
    lhs = _radial(bracket(t - r) ** -2 * f ** 2, r, t / 2, 3 * t / 2)
    rhs = (_radial(fr ** 2, r, t / 4, 7 * t / 4)
           + (_radial(f ** 2, r, t / 4, t / 2) + _radial(f ** 2, r, 3 * t / 2, 7 * t / 4)) / t ** 2)
    return float(lhs), float(rhs)


def hardy_check(slice_or_f, t, r=None):
    """(lhs, rhs, ratio) for phi of a slice, or for samples f on radii r."""
    if isinstance(slice_or_f, RadialState):
        f, r = slice_or_f.phi, slice_or_f.r
    else:
        f = slice_or_f
    lhs, rhs = hardy_sides(f, r, t)
    if rhs == 0:
        return lhs, rhs, 0.0 if lhs == 0 else np.inf
    return lhs, rhs, lhs / rhs


def hardy_family(t, n=50, seed=0, jitter=0.0):
    """Deterministic family of radial test functions on the Hardy window.

    The constant, then gaussians, plateaus and oscillations in x = r/t; a nonzero
    jitter perturbs every parameter multiplicatively by up to that fraction.
    """
    rng = np.random.default_rng(seed)
    fam = [lambda x: np.ones_like(x)]   # constants saturate the boundary terms
    k = 0
    while len(fam) < n:
        j = 1.0 + jitter * rng.uniform(-1, 1, 4) if jitter else np.ones(4)
        kind = k % 5
        c = (0.4 + 1.2 * ((k * 0.618034) % 1.0)) * j[0]
        w = (0.02 + 0.4 * ((k * 0.414214) % 1.0)) * j[1]
        m = 1 + (k % 7) * j[2]
        off = 0.3 * ((k * 0.732051) % 1.0) * j[3]
        if kind == 0:
            fam.append(lambda x, c=c, w=w: np.exp(-((x - c) / w) ** 2))
        elif kind == 1:
            fam.append(lambda x, c=c, w=w: 0.5 * (np.tanh((x - (c - w - 0.2)) / 0.05) - np.tanh((x - (c + w + 0.2)) / 0.05)))
        elif kind == 2:
            fam.append(lambda x, c=c, w=w, m=m, off=off: np.cos(2 * np.pi * m * x + off) * np.exp(-((x - c) / (3 * w + 0.1)) ** 2))
        elif kind == 3:
            fam.append(lambda x, c=c, w=w, off=off: 1.0 + off * np.sin(3 * x / max(w, 0.05)))
        else:
            fam.append(lambda x, c=c, w=w: np.exp(-np.abs(x - c) / (w + 0.02)))
        k += 1
    return fam


def hardy_constant(t, dr, family) -> float:
    r = dr * np.arange(int(np.ceil(2.0 * t / dr)) + 1)
    return max(hardy_check(f(r / t), t, r)[2] for f in family)


def sobolev_sides(w, wt, wr, tt, r, mask):
    """|R|^(-1/2) sum_{i<=1} (||S^i w|| + ||mu d S^i w||) over the masked region; returns (lhs, rhs)."""
    Tg, Rg = np.meshgrid(tt, r, indexing="ij")
    mu = bracket(np.minimum(Rg, np.abs(Tg - Rg)))
    S = Tg * wt + Rg * wr
    dt = tt[1] - tt[0]
    dr = r[1] - r[0]
    St = np.gradient(S, dt, axis=0, edge_order=2)
    Sr = np.gradient(S, dr, axis=1, edge_order=2)
    meas = FOUR_PI * Rg ** 2

    def l2(F):
        return np.sqrt(np.sum(F ** 2 * meas * mask) * dt * dr)

    vol = np.sum(meas * mask) * dt * dr
    if vol <= 0:
        raise RegionError("empty region sample")
    rhs = (l2(w) + l2(mu * np.sqrt(wt ** 2 + wr ** 2)) + l2(S) + l2(mu * np.sqrt(St ** 2 + Sr ** 2))) / np.sqrt(vol)
    lhs = float(np.max(np.abs(w[mask])))
    return lhs, float(rhs)


_SOBOLEV_KINDS = ("ConeSlab_CTR", "ConeDist_CTU", "Exterior_CRT")


def _check_sobolev_region(region: RegionSpec):
    if region.kind not in _SOBOLEV_KINDS:
        raise RegionUnsupported(f"{region.kind} is not covered by the region Sobolev bound")
    if region.kind == "ConeSlab_CTR" and region.R > 3 * region.T / 8:
        raise RegionUnsupported("C_T^R needs R <= 3T/8")
    if region.kind == "ConeDist_CTU" and region.U > 3 * region.T / 8:
        raise RegionUnsupported("C_T^U needs U <= 3T/8")


def region_sobolev_check(source, region: RegionSpec, n: int = 201):
    """(lhs, rhs, ratio) for w on a region.

    `source` is a SpacetimeTrace (w = phi) or a callable w(t, r) evaluated on an
    n x n sample grid over the region's box; derivatives by central differences.
    """
    _check_sobolev_region(region)
    t0, t1, r0, r1 = region.box()
    if isinstance(source, SpacetimeTrace):
        m = (source.times >= t0 - 1e-9) & (source.times <= t1 + 1e-9)
        k = (source.r <= r1 + 2 * source.dr)
        tt, r = source.times[m], source.r[k]
        if len(tt) < 3 or source.times[-1] < t1 - 1e-9:
            raise SpanOutOfRange("region outside the trace span")
        w = source.phi[m][:, k]
        wt = source.phi_t[m][:, k]
        wr = np.gradient(w, source.dr, axis=1, edge_order=2)
    else:
        pad_t = (t1 - t0) / (n - 1)
        pad_r = max(r1 - r0, 1e-9) / (n - 1)
        tt = np.linspace(t0, t1, n)
        r = np.linspace(max(r0 - 2 * pad_r, 0.0), r1 + 2 * pad_r, n + 4)
        Tg, Rg = np.meshgrid(tt, r, indexing="ij")
        w = source(Tg, Rg)
        wt = np.gradient(w, tt, axis=0, edge_order=2)
        wr = np.gradient(w, r, axis=1, edge_order=2)
    Tg, Rg = np.meshgrid(tt, r, indexing="ij")
    mask = region.contains(Tg, Rg)
    if not mask.any():
        raise RegionError("no samples inside the region")
    lhs, rhs = sobolev_sides(w, wt, wr, tt, r, mask)
    if rhs == 0:
        return lhs, rhs, 0.0
    return lhs, rhs, lhs / rhs


def sobolev_family(region: RegionSpec, n=50, seed=0, jitter=0.0):
    """The constant, then traveling bumps, gaussians and oscillations on the region's scales."""
    rng = np.random.default_rng(seed)
    t0, t1, r0, r1 = region.box()
    tc, rc = 0.5 * (t0 + t1), 0.5 * (r0 + r1)
    L = max(r1 - r0, 1.0)
    fam = [lambda t, r: np.ones_like(t)]
    for k in range(n - 1):
        j = 1.0 + jitter * rng.uniform(-1, 1, 3) if jitter else np.ones(3)
        a = ((k * 0.618034) % 1.0)
        b = ((k * 0.414214) % 1.0)
        width = (0.1 + 0.6 * b) * L * j[0]
        shift = (a - 0.5) * L * j[1]
        kind = k % 4
        if kind == 0:   # outgoing bump
            fam.append(lambda t, r, s=shift, w=width: np.exp(-((r - t + tc - rc - s) / w) ** 2))
        elif kind == 1:  # incoming bump
            fam.append(lambda t, r, s=shift, w=width: np.exp(-((r + t - tc - rc - s) / w) ** 2))
        elif kind == 2:  # standing gaussian
            fam.append(lambda t, r, s=shift, w=width: np.exp(-((r - rc - s) / w) ** 2 - ((t - tc) / (2 * w)) ** 2))
        else:            # slow oscillation
            m = (1 + k % 3) * j[2]
            fam.append(lambda t, r, m=m, s=shift: np.cos(np.pi * m * (r - rc - s) / L) * np.cos(np.pi * (t - tc) / (t1 - t0)))
    return fam


def sobolev_constant(region: RegionSpec, family, n=121) -> float:
    return max(region_sobolev_check(w, region, n)[2] for w in family)


# --- initial global decay harness -----------------------------------------

def uv_decay_ratios(trace: SpacetimeTrace, T_values: Sequence[float]):
    """For each dyadic T: sup_{[T,2T]} |phi| <v> <u>^(-1/2) divided by ||phi||_{LE^1[T,2T]}."""
    out = []
    phi = trace.phi
    r = trace.r
    for T in T_values:
        m = (trace.times >= T - 1e-9) & (trace.times <= 2 * T + 1e-9)
        if m.sum() < 2:
            continue
        tt = trace.times[m][:, None]
        w = np.abs(phi[m]) * bracket(tt + r[None, :]) * bracket(tt - r[None, :]) ** -0.5
        le1 = le1_norm(trace, float(trace.times[m][0]), float(trace.times[m][-1])).value
        out.append((T, float(w.max()), le1, float(w.max() / le1) if le1 > 0 else 0.0))
    return out
