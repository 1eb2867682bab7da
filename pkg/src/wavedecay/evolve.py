"""Spherically symmetric evolution of P phi = mu |phi|^p phi.

With psi = r phi, the radial equation reads

    psi_tt = (1+h) psi_rr + h_r (psi_r - psi/r) + B psi_t + V psi - mu r |phi|^p phi

on nodes r_i = i dr with psi_0 = 0.  Time stepping is Stormer-Verlet on
(psi, psi_t); the B psi_t term is treated implicitly in the closing half
kick, which is pointwise linear.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .coeffs import BackgroundProfile, eval_coefficients, eval_h_r, wave_speed_bound

MAGIC = b"WAVEDECAYTRACE01"
MIN_NODES = 16


class EvolveError(RuntimeError):
    pass


class CflViolation(EvolveError):
    pass


class NonFinite(EvolveError):
    def __init__(self, t, msg=None):
        self.t = float(t)
        super().__init__(msg or f"non-finite field at t = {self.t:.6g}")


class TooSparse(EvolveError):
    pass


class FocusingPowerUnsupported(EvolveError):
    pass


@dataclass(frozen=True)
class RadialState:
    t: float
    dr: float
    psi: np.ndarray
    psi_t: np.ndarray

    def __post_init__(self):
        if len(self.psi) != len(self.psi_t) or len(self.psi) < MIN_NODES:
            raise ValueError(f"psi and psi_t need equal length >= {MIN_NODES}")
        if self.psi[0] != 0.0:
            raise ValueError("psi[0] must vanish")

    @property
    def r(self):
        return self.dr * np.arange(len(self.psi))

    @property
    def phi(self):
        return psi_to_phi(self.psi, self.dr)

    @property
    def phi_t(self):
        return psi_to_phi(self.psi_t, self.dr)


def psi_to_phi(psi, dr):
    """phi = psi / r, with the origin value from psi = a r + b r^3."""
    psi = np.asarray(psi, dtype=float)
    out = np.empty_like(psi)
    r = dr * np.arange(psi.shape[-1])
    out[..., 1:] = psi[..., 1:] / r[1:]
    out[..., 0] = (8.0 * psi[..., 1] - psi[..., 2]) / (6.0 * dr)
    return out


# --- Cauchy data ---------------------------------------------------------

def bump(x):
    """Smooth compactly supported bump exp(1 - 1/(1-x^2)) on |x| < 1, peak 1."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = np.abs(x) < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - x[m] ** 2))
    return out


def gaussian(x):
    return np.exp(-np.asarray(x, dtype=float) ** 2)


PROFILES = {"bump": bump, "gaussian": gaussian, "zero": lambda x: np.zeros_like(np.asarray(x, float))}


@dataclass(frozen=True)
class CauchyData:
    """phi(0) = A f0((r - c0)/R0), phi_t(0) = A f1((r - c1)/R0)."""
    amplitude: float = 0.0
    radius: float = 3.0
    phi0: str = "zero"
    phi1: str = "bump"
    center0: float = 0.0
    center1: float = 0.0

    def __post_init__(self):
        for f in (self.phi0, self.phi1):
            if f not in PROFILES:
                raise ValueError(f"unknown data profile {f!r}")
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def support(self):
        """Radius beyond which the data vanish (gaussians cut at 8 widths)."""
        ext = {"bump": 1.0, "gaussian": 8.0, "zero": 0.0}
        s0 = self.center0 + ext[self.phi0] * self.radius
        s1 = self.center1 + ext[self.phi1] * self.radius
        return max(s0, s1)

    def initial_state(self, dr, r_max) -> RadialState:
        n = int(np.ceil(r_max / dr)) + 1
        r = dr * np.arange(n)
        p0 = self.amplitude * PROFILES[self.phi0]((r - self.center0) / self.radius)
        p1 = self.amplitude * PROFILES[self.phi1]((r - self.center1) / self.radius)
        return RadialState(0.0, dr, r * p0, r * p1)


def decay_data(amplitude=1e-3, radius=3.0) -> CauchyData:
    """phi0 = 0, phi1 = A bump(r/R0): nonzero integral, so the tail is generic."""
    return CauchyData(amplitude=amplitude, radius=radius, phi0="zero", phi1="bump")


# --- one step --------------------------------------------------------------

def _nonlinear_ok(profile: BackgroundProfile):
    if profile.mu_sign == -1 and profile.power_p not in (2, 4, 6):
        raise FocusingPowerUnsupported("focusing runs support p in {2, 4, 6}")


def _force(psi, t, dr, r, profile, coeff):
    """Everything in psi_tt except the B psi_t term."""
    h, hr, V = coeff
    a = np.zeros_like(psi)
    lap = (psi[2:] - 2.0 * psi[1:-1] + psi[:-2]) / dr ** 2
    a[1:-1] = lap
    if h is not None:
        dpsi = (psi[2:] - psi[:-2]) / (2.0 * dr)
        a[1:-1] = (1.0 + h[1:-1]) * lap + hr[1:-1] * (dpsi - psi[1:-1] / r[1:-1])
    if V is not None:
        a[1:-1] += V[1:-1] * psi[1:-1]
    mu, p = profile.mu_sign, profile.power_p
    if mu != 0:
        ps = psi[1:-1]
        phi = ps / r[1:-1]
        if p % 2 == 0:
            # repeated products are much cheaper than a float pow
            q = phi * phi
            w = q
            for _ in range(p // 2 - 1):
                w = w * q
        else:
            w = np.abs(phi) ** p
        a[1:-1] -= mu * w * ps
    return a


class _CoeffCache:
    """Coefficient arrays at time t; reused when a profile is static."""

    def __init__(self, profile, r):
        self.profile = profile
        self.r = r
        self.static = all(s.time_mod == "none" for s in (profile.h, profile.B, profile.V))
        self.has_h = profile.h.shape != "zero" and profile.h.amplitude != 0
        self.has_B = profile.B.shape != "zero" and profile.B.amplitude != 0
        self.has_V = profile.V.shape != "zero" and profile.V.amplitude != 0
        self._cached = None

    def __call__(self, t):
        if self.static and self._cached is not None:
            return self._cached
        h, B, V = eval_coefficients(self.profile, t, self.r)
        hr = eval_h_r(self.profile, t, self.r)
        out = ((h if self.has_h else None), (hr if self.has_h else None),
               (V if self.has_V else None), (B if self.has_B else None))
        if self.static:
            self._cached = out
        return out


def max_dt(dr, profile: BackgroundProfile) -> float:
    c_h = wave_speed_bound(profile)
    if c_h >= 1.0:
        raise CflViolation("metric perturbation amplitude must be below 1")
    return 0.5 * dr * (1.0 - c_h)


def _check_cfl(dt, dr, profile):
    if not dt > 0 or dt > max_dt(dr, profile) * (1 + 1e-12):
        raise CflViolation(f"dt = {dt} exceeds 0.5 dr (1 - c_h) = {max_dt(dr, profile)}")


def _verlet(psi, psi_t, t, dt, dr, r, profile, coeffs):
    h, hr, V, B = coeffs(t)
    a0 = _force(psi, t, dr, r, profile, (h, hr, V))
    if B is not None:
        a0 = a0 + B * psi_t
    half = psi_t + 0.5 * dt * a0
    psi_new = psi + dt * half
    psi_new[0] = 0.0
    h, hr, V, B = coeffs(t + dt)
    a1 = _force(psi_new, t + dt, dr, r, profile, (h, hr, V))
    num = half + 0.5 * dt * a1
    psi_t_new = num / (1.0 - 0.5 * dt * B) if B is not None else num
    psi_t_new[0] = 0.0
    # outer node is left untouched
    psi_new[-1] = psi[-1]
    psi_t_new[-1] = psi_t[-1]
    return psi_new, psi_t_new


def step(state: RadialState, profile: BackgroundProfile, dt: float) -> RadialState:
    _check_cfl(dt, state.dr, profile)
    _nonlinear_ok(profile)
    r = state.r
    with np.errstate(over="ignore", invalid="ignore"):
        psi, psi_t = _verlet(state.psi.copy(), state.psi_t.copy(), state.t, dt, state.dr, r,
                             profile, _CoeffCache(profile, r))
    if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(psi_t))):
        raise NonFinite(state.t + dt)
    return RadialState(state.t + dt, state.dr, psi, psi_t)


def discrete_energy(state: RadialState, mu_sign=0, p=4) -> float:
    """sum dr [psi_t^2/2 + (D+ psi)^2/2 + mu |psi|^(p+2)/((p+2) r^p)]."""
    dr = state.dr
    kin = 0.5 * np.sum(state.psi_t ** 2) * dr
    grad = 0.5 * np.sum(np.diff(state.psi) ** 2) / dr
    pot = 0.0
    if mu_sign:
        r = state.r[1:]
        pot = mu_sign * np.sum(np.abs(state.psi[1:]) ** (p + 2) / ((p + 2) * r ** p)) * dr
    return float(kin + grad + pot)


# --- observation ---------------------------------------------------------

@dataclass(frozen=True)
class CurveSpec:
    """kind "r": r = c; "u": t - r = c; "lambda": r = c t with c in (0, 1]."""
    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("r", "u", "lambda"):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if self.kind == "lambda" and not (0 < self.value <= 1):
            raise ValueError("lambda must lie in (0, 1]")
        if self.kind == "r" and self.value < 0:
            raise ValueError("r must be nonnegative")

    def radius(self, t):
        if self.kind == "r":
            return self.value if np.isscalar(t) else np.full(np.shape(t), self.value)
        if self.kind == "u":
            return t - self.value
        return self.value * t

    @property
    def label(self):
        return f"{self.kind}={self.value:g}"

    @classmethod
    def parse(cls, s):
        kind, val = s.split("=")
        return cls(kind.strip(), float(val))


@dataclass
class ObsPlan:
    curves: Sequence[CurveSpec] = ()
    k_store: int = 0                   # slice cadence in steps; 0 stores no slices
    curve_every: int = 1
    slice_rmax: Optional[float] = None  # truncate stored slices to r <= slice_rmax
    monitors: Dict[str, Callable[[RadialState], float]] = field(default_factory=dict)
    monitor_every: int = 1


CURVE_FIELDS = ("t", "r", "u", "v", "phi", "dphi_t", "dphi_r", "S_phi")


def _lagrange4(x):
    """Weights for nodes -1, 0, 1, 2 at fractional offset x in [0, 1)."""
    return np.array([-x * (x - 1) * (x - 2) / 6.0, (x + 1) * (x - 1) * (x - 2) / 2.0,
                     -(x + 1) * x * (x - 2) / 2.0, (x + 1) * x * (x - 1) / 6.0])


def _local_phi(arr, idx, dr):
    """phi = arr / r at integer node indices, even reflection through the origin."""
    j = np.abs(idx)
    out = np.empty(len(idx))
    for k, jj in enumerate(j):
        if jj == 0:
            out[k] = (8.0 * arr[1] - arr[2]) / (6.0 * dr)
        else:
            out[k] = arr[jj] / (jj * dr)
    return out


def sample_point(psi, psi_t, dr, t, rc):
    """(phi, phi_t, phi_r) at radius rc by 4-point interpolation of nodal values."""
    n = len(psi)
    i = int(np.floor(rc / dr))
    x = rc / dr - i
    if i + 3 >= n:
        raise EvolveError("curve point beyond the grid")
    nodes = np.arange(i - 2, i + 4)
    ph = _local_phi(psi, nodes, dr)
    pt = _local_phi(psi_t, nodes, dr)
    pr = (ph[2:] - ph[:-2]) / (2.0 * dr)  # nodes i-1..i+2
    w = _lagrange4(x)
    return float(w @ ph[1:5]), float(w @ pt[1:5]), float(w @ pr)


@dataclass
class SpacetimeTrace:
    dr: float
    times: np.ndarray                    # slice times
    psi: np.ndarray                      # (n_slices, n_nodes)
    psi_t: np.ndarray
    curves: Dict[CurveSpec, Dict[str, np.ndarray]]
    meta: Dict
    monitors: Dict[str, np.ndarray] = field(default_factory=dict)
    monitor_times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def r(self):
        return self.dr * np.arange(self.psi.shape[1])

    @property
    def phi(self):
        return psi_to_phi(self.psi, self.dr)

    @property
    def phi_t(self):
        return psi_to_phi(self.psi_t, self.dr)

    @property
    def slices(self) -> List[RadialState]:
        return [RadialState(float(t), self.dr, p, q) for t, p, q in zip(self.times, self.psi, self.psi_t)]

    def curve(self, spec):
        if isinstance(spec, str):
            spec = CurveSpec.parse(spec)
        return self.curves[spec]

    def to_csv(self, spec, path):
        c = self.curve(spec)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CURVE_FIELDS)
            for row in zip(*(c[k] for k in CURVE_FIELDS)):
                w.writerow([repr(float(x)) for x in row])

    def dump_binary(self, path):
        """Magic, then <u8 n_slices, <u8 n_nodes, <f8 dr, times, psi block, psi_t block."""
        ns, nn = self.psi.shape
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<QQd", ns, nn, self.dr))
            fh.write(np.asarray(self.times, "<f8").tobytes())
            fh.write(np.ascontiguousarray(self.psi, "<f8").tobytes())
            fh.write(np.ascontiguousarray(self.psi_t, "<f8").tobytes())


def load_binary(path):
    """(dr, times, psi, psi_t) from a dump_binary file."""
    with open(path, "rb") as fh:
        if fh.read(16) != MAGIC:
            raise ValueError("not a wavedecay trace dump")
        ns, nn, dr = struct.unpack("<QQd", fh.read(24))
        times = np.frombuffer(fh.read(8 * ns), "<f8")
        psi = np.frombuffer(fh.read(8 * ns * nn), "<f8").reshape(ns, nn)
        psi_t = np.frombuffer(fh.read(8 * ns * nn), "<f8").reshape(ns, nn)
    return dr, times.copy(), psi.copy(), psi_t.copy()


def default_rmax(data: CauchyData, t_final, dr):
    return data.support + t_final + 16 * dr


def evolve(data: CauchyData, profile: BackgroundProfile, t_final: float, obs: Optional[ObsPlan] = None,
           dr: float = 1 / 64, dt: Optional[float] = None, r_max: Optional[float] = None) -> SpacetimeTrace:
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    obs = obs or ObsPlan()
    _nonlinear_ok(profile)
    profile.warn_inert()
    dt = max_dt(dr, profile) if dt is None else dt
    _check_cfl(dt, dr, profile)
    r_max = default_rmax(data, t_final, dr) if r_max is None else r_max
    state = data.initial_state(dr, r_max)
    psi, psi_t = state.psi.copy(), state.psi_t.copy()
    r = state.r
    n_steps = int(np.ceil(t_final / dt - 1e-9))
    coeffs = _CoeffCache(profile, r)
    n_keep = len(r) if obs.slice_rmax is None else min(len(r), int(obs.slice_rmax / dr) + 1)
    n_keep = max(n_keep, MIN_NODES)

    times, ps, pts = [], [], []
    rows = {c: [] for c in obs.curves}
    mon_t, mon = [], {k: [] for k in obs.monitors}

    def record(n, t):
        if obs.k_store and n % obs.k_store == 0:
            times.append(t)
            ps.append(psi[:n_keep].copy())
            pts.append(psi_t[:n_keep].copy())
        if obs.curves and n % obs.curve_every == 0:
            for c in obs.curves:
                rc = c.radius(t)
                if rc < 0 or rc > r_max - 4 * dr:
                    continue
                f, ft, fr = sample_point(psi, psi_t, dr, t, rc)
                rows[c].append((t, rc, t - rc, t + rc, f, ft, fr, t * ft + rc * fr))
        if obs.monitors and n % obs.monitor_every == 0:
            st = RadialState(t, dr, psi, psi_t)
            mon_t.append(t)
            for k, fn in obs.monitors.items():
                mon[k].append(fn(st))

    t = 0.0
    record(0, t)
    check_every = 16
    for n in range(1, n_steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            psi, psi_t = _verlet(psi, psi_t, t, dt, dr, r, profile, coeffs)
        t = n * dt
        if n % check_every == 0 or n == n_steps:
            if not (np.isfinite(psi).all() and np.isfinite(psi_t).all()):
                raise NonFinite(t)
        record(n, t)

    curves = {c: {k: np.array([row[i] for row in rows[c]]) for i, k in enumerate(CURVE_FIELDS)}
              for c in obs.curves}
    meta = {"dr": dr, "dt": dt, "r_max": float(r[-1]), "n_nodes": len(r), "t_final": t,
            "n_steps": n_steps, "k_store": obs.k_store, "profile_digest": profile.digest(),
            "data": data.__dict__.copy()}
    shape = (0, n_keep)
    return SpacetimeTrace(dr, np.array(times), np.array(ps) if ps else np.zeros(shape),
                          np.array(pts) if pts else np.zeros(shape), curves, meta,
                          {k: np.array(v) for k, v in mon.items()}, np.array(mon_t))


# --- vector fields -------------------------------------------------------

def apply_vector_fields(trace: SpacetimeTrace, order: int = 2) -> SpacetimeTrace:
    """Add d_t, d_r, S and their order-2 compositions along every curve.

    Derivatives come from the stored slices by central differences in t and r;
    rotations vanish on radial fields and are recorded as zero.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if len(trace.times) < 3:
        raise TooSparse("need at least three stored slices")
    k_dt = float(np.min(np.diff(trace.times)))
    if k_dt > 2 * trace.dr * (1 + 1e-12):
        raise TooSparse(f"slice cadence {k_dt} exceeds 2 dr = {2 * trace.dr}")
    tt, r = trace.times, trace.r
    phi = trace.phi
    ft = np.gradient(phi, tt, axis=0, edge_order=2)
    fr = np.gradient(phi, trace.dr, axis=1, edge_order=2)
    fr[:, 0] = 0.0
    S = tt[:, None] * ft + r[None, :] * fr
    fields = {"dphi_t": ft, "dphi_r": fr, "S_phi": S}
    if order == 2:
        fields["dtt_phi"] = np.gradient(ft, tt, axis=0, edge_order=2)
        fields["dtr_phi"] = np.gradient(ft, trace.dr, axis=1, edge_order=2)
        fields["drr_phi"] = np.gradient(fr, trace.dr, axis=1, edge_order=2)
        St = np.gradient(S, tt, axis=0, edge_order=2)
        Sr = np.gradient(S, trace.dr, axis=1, edge_order=2)
        fields["SS_phi"] = tt[:, None] * St + r[None, :] * Sr
        fields["dt_S_phi"] = St
        fields["dr_S_phi"] = Sr
    out = {}
    for c, rec in trace.curves.items():
        new = dict(rec)
        ts, rs = rec["t"], rec["r"]
        ok = (ts >= tt[0]) & (ts <= tt[-1]) & (rs <= r[-1] - 2 * trace.dr)
        for name, F in fields.items():
            vals = np.full(len(ts), np.nan)
            vals[ok] = _bilinear_cubic(F, tt, trace.dr, ts[ok], rs[ok])
            new["slice_" + name] = vals
        new["Omega_phi"] = np.zeros(len(ts))
        out[c] = new
    return replace(trace, curves=out)


def _bilinear_cubic(F, tt, dr, ts, rs):
    """Linear in t between slices, 4-point Lagrange in r."""
    out = np.empty(len(ts))
    n = F.shape[1]
    for k, (t, rc) in enumerate(zip(ts, rs)):
        j = min(np.searchsorted(tt, t, side="right") - 1, len(tt) - 2)
        j = max(j, 0)
        a = (t - tt[j]) / (tt[j + 1] - tt[j])
        i = int(np.floor(rc / dr))
        x = rc / dr - i
        idx = np.abs(np.arange(i - 1, i + 3))
        idx = np.minimum(idx, n - 1)
        w = _lagrange4(x)
        out[k] = (1 - a) * (w @ F[j, idx]) + a * (w @ F[j + 1, idx])
    return out
