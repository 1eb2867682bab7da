"""Empirical decay exponents from traces and comparison with predicted rates."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import numpy as np

from .calculus import DecayRate
from .evolve import CurveSpec, SpacetimeTrace

VARIABLES = ("t", "r", "u", "v")
MIN_SAMPLES = 20
FLAG_SLOPE_JUMP = 0.1


class FitError(ValueError):
    pass


class WindowTooShort(FitError):
    pass


class BelowNoiseFloor(FitError):
    pass


@dataclass
class ExponentFit:
    curve: str
    variable: str
    window: tuple
    slope: float
    stderr: float
    r2: float
    n: int
    resolution_diff: Optional[float] = None

    @property
    def flagged(self) -> bool:
        return self.resolution_diff is not None and abs(self.resolution_diff) > FLAG_SLOPE_JUMP

    def to_json(self):
        d = asdict(self)
        d["window"] = list(self.window)
        d["flagged"] = self.flagged
        return d


def _curve_arrays(source, curve):
    if isinstance(source, SpacetimeTrace):
        return source.curve(curve)
    return source


def late_window_start(support: float, r_obs: float) -> float:
    """First time after the pulse's last crossing of r_obs."""
    return 2.0 * (support + r_obs)


def curve_window_start(spec: CurveSpec, support: float) -> float:
    """Late-time window start for a canonical curve, twice its pulse-exit time."""
    if spec.kind == "r":
        return late_window_start(support, spec.value)
    if spec.kind == "u":
        return 2.0 * support
    return 2.0 * support / (1.0 - spec.value)


def noise_floor(control: Dict[str, np.ndarray], window) -> float:
    """Largest |phi| of a flat-background control run inside the window."""
    t = control["t"]
    m = (t >= window[0]) & (t <= window[1])
    return float(np.max(np.abs(control["phi"][m]))) if m.any() else 0.0


def _lsq(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope, icpt = coef
    resid = y - (slope * x + icpt)
    n = len(x)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    sxx = float(((x - x.mean()) ** 2).sum())
    stderr = np.sqrt(ss_res / (n - 2) / sxx) if n > 2 and sxx > 0 else float("inf")
    return float(slope), float(stderr), float(r2)


def fit_exponent(source, curve, variable: str = "t", window=(0.0, np.inf), floor: float = 0.0,
                 field_name: str = "phi", coarse=None) -> ExponentFit:
    """Least-squares slope of log|phi| against log<variable> over a time window.

    `coarse` optionally supplies the same curve at the next coarser resolution;
    the slope difference is stored and flags the fit when it exceeds 0.1.
    """
    if variable not in VARIABLES:
        raise FitError(f"variable must be one of {VARIABLES}")
    c = _curve_arrays(source, curve)
    t = np.asarray(c["t"])
    m = (t >= window[0]) & (t <= window[1])
    if m.sum() < MIN_SAMPLES:
        raise WindowTooShort(f"{int(m.sum())} samples in window (< {MIN_SAMPLES})")
    x = np.sqrt(1.0 + np.asarray(c[variable])[m] ** 2)
    if x.max() / x.min() < 10.0 * (1 - 1e-9):
        raise WindowTooShort(f"window spans {x.max() / x.min():.3g} < one decade in <{variable}>")
    y = np.abs(np.asarray(c[field_name])[m])
    if np.any(y <= 10.0 * floor) or np.any(y == 0):
        raise BelowNoiseFloor(f"|{field_name}| drops to {y.min():.3g}, floor {floor:.3g}")
    slope, se, r2 = _lsq(np.log(x), np.log(y))
    label = curve.label if isinstance(curve, CurveSpec) else str(curve)
    win = (float(t[m].min()), float(t[m].max()))
    diff = None
    if coarse is not None:
        other = fit_exponent(coarse, curve, variable, window, floor, field_name)
        diff = slope - other.slope
    return ExponentFit(label, variable, win, slope, se, r2, int(m.sum()), diff)


# --- reconciliation ------------------------------------------------------

def predicted_slope(rate: DecayRate, curve: str, variable: str = "t") -> float:
    """Slope of the bound <r>^-a <v>^-b <u>^-c along a canonical curve.

    r = const: v and u both grow like t, slope -(b + c).
    u = const: only v grows, slope -b.
    r = lambda t: all three grow, slope -(a + b + c).
    """
    kind = CurveSpec.parse(curve).kind if isinstance(curve, str) else curve.kind
    a, b, c = (float(x) for x in (rate.a, rate.b, rate.c))
    if kind == "r":
        return -(b + c)
    if kind == "u":
        return -b
    return -(a + b + c)


@dataclass
class CurveVerdict:
    curve: str
    predicted: float
    fitted: float
    stderr: float
    tol: float
    passed: bool


@dataclass
class ReconcileReport:
    prediction: str
    verdicts: List[CurveVerdict]
    missing: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.verdicts) and all(v.passed for v in self.verdicts)

    @property
    def complete(self) -> bool:
        return not self.missing

    def to_json(self):
        return {"prediction": self.prediction, "passed": self.passed, "complete": self.complete,
                "missing": list(self.missing), "verdicts": [asdict(v) for v in self.verdicts]}

    def markdown(self) -> str:
        rows = ["| curve | predicted | fitted | stderr | verdict |", "|---|---|---|---|---|"]
        for v in self.verdicts:
            rows.append(f"| {v.curve} | {v.predicted:.3f} | {v.fitted:.3f} | {v.stderr:.3f} | "
                        f"{'pass' if v.passed else 'FAIL'} |")
        return "\n".join(rows) + "\n"


def reconcile(fits: Sequence[ExponentFit], prediction: DecayRate, tol: float = 0.25) -> ReconcileReport:
    verdicts = []
    kinds = set()
    for f in fits:
        kinds.add(CurveSpec.parse(f.curve).kind)
        p = predicted_slope(prediction, f.curve, f.variable)
        ok = abs(f.slope - p) <= tol and not f.flagged
        verdicts.append(CurveVerdict(f.curve, p, f.slope, f.stderr, tol, bool(ok)))
    missing = [k for k in ("r", "u", "lambda") if k not in kinds]
    return ReconcileReport(str(prediction), verdicts, missing)


def target_rate(sigma) -> DecayRate:
    """<v>^-1 <u>^-(1 + min(sigma, 2)) as an interior-form rate."""
    from .calculus import INTERIOR, q
    kappa = min(q(sigma), Fraction(2))
    return DecayRate(Fraction(0), Fraction(1), 1 + kappa, INTERIOR)
