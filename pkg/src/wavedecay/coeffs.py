"""Background coefficient profiles for P = -d_t^2 + div((1+h) grad) + B d_t + V.

Spherical symmetry collapses the metric perturbation to one scalar h with
g^{ij} = (1+h) delta^{ij}; B multiplies d_t.  Every built-in shape is
a(t) * w(r) with |a| <= 1 and |w| <= amplitude * <r>^-power, so the
declared envelope holds pointwise.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional

import numpy as np

SHAPES = ("zero", "inverse_power", "oscillating", "compact")
TIME_MODS = ("none", "decay", "sin")


class ProfileError(ValueError):
    pass


class GridTooCoarse(ValueError):
    pass


class InertCoefficientWarning(UserWarning):
    pass


def bracket(r):
    """Japanese bracket <r> = sqrt(1 + r^2)."""
    return np.sqrt(1.0 + np.asarray(r, dtype=float) ** 2)


@dataclass(frozen=True)
class Shape:
    shape: str = "zero"
    amplitude: float = 0.0
    time_mod: str = "none"
    delta: float = 0.5          # (1+t)^-delta for time_mod="decay"
    omega: float = 0.1          # frequency for time_mod="sin"
    k: float = 1.0              # log-frequency for "oscillating"
    radius: float = 10.0        # support scale for "compact"

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ProfileError(f"unknown shape {self.shape!r}; choose from {SHAPES}")
        if self.time_mod not in TIME_MODS:
            raise ProfileError(f"unknown time_mod {self.time_mod!r}")
        if self.delta < 0 or self.radius <= 0:
            raise ProfileError("delta >= 0 and radius > 0 required")

    def time_factor(self, t):
        t = np.asarray(t, dtype=float)
        if self.time_mod == "decay":
            return (1.0 + t) ** (-self.delta)
        if self.time_mod == "sin":
            return (2.0 + np.sin(self.omega * t)) / 3.0
        return np.ones_like(t)

    def radial(self, r, power):
        """w(r) and w'(r)."""
        r = np.asarray(r, dtype=float)
        A = self.amplitude
        if self.shape == "zero" or A == 0.0:
            z = np.zeros_like(r)
            return z, z
        br = bracket(r)
        env = A * br ** (-power)
        denv = -power * A * r * br ** (-power - 2)
        if self.shape == "inverse_power":
            return env, denv
        if self.shape == "oscillating":
            # cos(k log<r>) keeps the symbol property: each d_r gains <r>^-1
            ph = self.k * np.log(br)
            c, s = np.cos(ph), np.sin(ph)
            return env * c, denv * c - env * s * self.k * r / br ** 2
        # compact: envelope times exp(-(r/R)^2), smooth and <= 1
        g = np.exp(-(r / self.radius) ** 2)
        dg = -2.0 * r / self.radius ** 2 * g
        return env * g, denv * g + env * dg

    def __call__(self, t, r, power):
        w, _ = self.radial(r, power)
        return self.time_factor(t) * w


@dataclass(frozen=True)
class BackgroundProfile:
    sigma: float = 1.0
    epsilon: float = 0.1
    h: Shape = field(default_factory=Shape)
    B: Shape = field(default_factory=Shape)
    V: Shape = field(default_factory=Shape)
    g_omega: float = 0.0        # angular coefficient, inert for radial fields
    mu_sign: int = 0
    power_p: int = 4

    def __post_init__(self):
        if not self.sigma > 0:
            raise ProfileError("sigma must be positive")
        if not self.epsilon > 0:
            raise ProfileError("epsilon must be positive")
        if self.mu_sign not in (-1, 0, 1):
            raise ProfileError("mu_sign must be -1, 0 or +1")
        if int(self.power_p) != self.power_p or self.power_p < 2:
            raise ProfileError("power_p must be an integer >= 2")

    # declared decay powers
    @property
    def h_power(self):
        return 1.0 + self.sigma

    @property
    def b_power(self):
        return 1.0 + self.sigma

    @property
    def v_power(self):
        return 2.0 + self.sigma

    def warn_inert(self):
        if self.g_omega != 0.0:
            warnings.warn("g_omega multiplies the angular Laplacian and has no effect on radial fields",
                          InertCoefficientWarning, stacklevel=2)

    def is_flat(self):
        return all(s.shape == "zero" or s.amplitude == 0.0 for s in (self.h, self.B, self.V))

    def to_json(self):
        d = {"sigma": self.sigma, "epsilon": self.epsilon, "mu_sign": self.mu_sign,
             "power_p": self.power_p, "g_omega": self.g_omega}
        for name in ("h", "B", "V"):
            d[name] = asdict(getattr(self, name))
        return d

    def digest(self):
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def profile_from_dict(d: Dict) -> BackgroundProfile:
    known = {"sigma", "epsilon", "mu_sign", "power_p", "g_omega", "h", "B", "V"}
    extra = set(d) - known
    if extra:
        raise ProfileError(f"unknown profile keys {sorted(extra)}")
    kw = {k: d[k] for k in ("sigma", "epsilon", "mu_sign", "power_p", "g_omega") if k in d}
    for name in ("h", "B", "V"):
        if name in d and d[name] is not None:
            sub = dict(d[name])
            bad = set(sub) - set(Shape.__dataclass_fields__)
            if bad:
                raise ProfileError(f"unknown keys in {name}: {sorted(bad)}")
            kw[name] = Shape(**sub)
    return BackgroundProfile(**kw)


def load_profile(path) -> BackgroundProfile:
    with open(path) as fh:
        return profile_from_dict(json.load(fh))


def flat(mu_sign=0, power_p=4) -> BackgroundProfile:
    return BackgroundProfile(mu_sign=mu_sign, power_p=power_p)


def potential(amplitude=0.05, sigma=1.0, mu_sign=0, epsilon=None, **kw) -> BackgroundProfile:
    """V = amplitude <r>^-(2+sigma), other coefficients zero."""
    eps = epsilon if epsilon is not None else max(4 * abs(amplitude), 1e-12)
    return BackgroundProfile(sigma=sigma, epsilon=eps, V=Shape("inverse_power", amplitude, **kw),
                             mu_sign=mu_sign)


def eval_coefficients(profile: BackgroundProfile, t, r):
    """(h, B, V) at (t, r); arrays broadcast."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(t < 0):
        raise ValueError("need r >= 0, t >= 0")
    return (profile.h(t, r, profile.h_power),
            profile.B(t, r, profile.b_power),
            profile.V(t, r, profile.v_power))


def eval_h_r(profile: BackgroundProfile, t, r):
    _, dw = profile.h.radial(r, profile.h_power)
    return profile.h.time_factor(t) * dw


def wave_speed_bound(profile: BackgroundProfile) -> float:
    """c_h: sup |h|, bounded by the amplitude since |a(t)| <= 1 and <r> >= 1."""
    return abs(profile.h.amplitude) if profile.h.shape != "zero" else 0.0


# --- flatness budget ---------------------------------------------------

@dataclass
class BudgetReport:
    sum_h: float
    sum_B: float
    sum_V: float
    sup_r2V: float
    epsilon: float
    j_max: int
    tail_bound: float
    tail_constant: float
    per_annulus: Dict[str, list] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return max(self.sum_h, self.sum_B, self.sum_V, self.sup_r2V) <= self.epsilon


def dyadic_grid(j_max, per_annulus=64):
    """Log-spaced radii covering A_0 .. A_jmax, closed annuli [2^j, 2^(j+1)]."""
    return np.unique(np.concatenate(
        [np.geomspace(2.0 ** j, 2.0 ** (j + 1), per_annulus) for j in range(j_max + 1)]))


def _field_on(shape, power, T, R):
    return shape.time_factor(T)[:, None] * shape.radial(R, power)[0][None, :]


def _derivs(F, t, r):
    Fr = np.gradient(F, r, axis=1)
    Frr = np.gradient(Fr, r, axis=1)
    if len(t) >= 3:
        Ft = np.gradient(F, t, axis=0)
        Ftt = np.gradient(Ft, t, axis=0)
        Ftr = np.gradient(Ft, r, axis=1)
    else:
        Ft = Ftt = Ftr = np.zeros_like(F)
    d1 = np.sqrt(Ft ** 2 + Fr ** 2)
    d2 = np.sqrt(Ftt ** 2 + 2 * Ftr ** 2 + Frr ** 2)
    return d1, d2


def check_flatness_budget(profile: BackgroundProfile, grid=None, j_max: int = 20,
                          times: Optional[np.ndarray] = None) -> BudgetReport:
    """Dyadic partial sums of the flatness budget, sup over the sampled time window."""
    r = dyadic_grid(j_max) if grid is None else np.asarray(grid, dtype=float)
    t = np.array([0.0]) if times is None else np.asarray(times, dtype=float)
    idx = []
    for j in range(j_max + 1):
        m = (r >= 2.0 ** j) & (r <= 2.0 ** (j + 1))
        if m.sum() < 8:
            raise GridTooCoarse(f"annulus A_{j} holds {int(m.sum())} samples (< 8)")
        idx.append(m)
    br = bracket(r)[None, :]

    h = _field_on(profile.h, profile.h_power, t, r)
    B = _field_on(profile.B, profile.b_power, t, r)
    V = _field_on(profile.V, profile.v_power, t, r)
    h1, h2 = _derivs(h, t, r)
    B1, _ = _derivs(B, t, r)
    terms = {
        "h": br ** 2 * h2 + br * h1 + np.abs(h),
        "B": br ** 2 * B1 + br * np.abs(B),
        "V": br ** 2 * np.abs(V),
    }
    per = {k: [float(v[:, m].max()) for m in idx] for k, v in terms.items()}
    sums = {k: float(np.sum(v)) for k, v in per.items()}
    sup_r2V = float((r[None, :] ** 2 * np.abs(V)).max())

    # geometric tail: term_j <= C0 A 2^(-j sigma)
    s = profile.sigma
    C = 0.0
    tail = 0.0
    for k, shp in (("h", profile.h), ("B", profile.B), ("V", profile.V)):
        A = abs(shp.amplitude)
        if A == 0.0:
            continue
        c0 = max(v / A * 2.0 ** (j * s) for j, v in enumerate(per[k]))
        ck = c0 / (2.0 ** s - 1.0)
        C = max(C, ck)
        tail = max(tail, A * 2.0 ** (-j_max * s) * ck)
    return BudgetReport(sums["h"], sums["B"], sums["V"], sup_r2V, profile.epsilon,
                        j_max, tail, C, per)
