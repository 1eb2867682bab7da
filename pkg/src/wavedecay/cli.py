"""Command line entry point: simulate, norms, predict, verify, report.

All structured outputs are JSON with sorted keys so identical inputs give
byte-identical files; wall-clock data goes to a `<name>.stamp.json` sidecar.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import calculus as C
from . import coeffs as K
from . import evolve as E
from . import fit as Fm
from . import regions as G

EXIT_CONFIG = 1
EXIT_NONFINITE = 2
EXIT_VERIFY = 3

DEFAULTS = {
    "profile": {},
    "data": {"amplitude": 1e-3, "radius": 3.0, "phi0": "zero", "phi1": "bump"},
    "grid": {"dr": 1 / 64, "r_max": None, "t_final": 100.0, "k_store": 0, "coarse_check": False},
    "observations": {"curves": ["r=1", "u=10", "lambda=0.5"], "curve_every": 16, "norms": []},
    "calculus": {"sigma": 1, "gamma": "1/10", "p": 4, "region": C.INTERIOR},
    "tolerances": {"slope": 0.3, "constant": 2.0},
    "fit": {"window": None, "control": True},
    "out": "run",
}
CONFIG_KEYS = set(DEFAULTS)


class ConfigError(ValueError):
    pass


class VerificationFailed(RuntimeError):
    def __init__(self, report):
        super().__init__("verification failed")
        self.report = report


# --- config ------------------------------------------------------------------

def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: Optional[str], overrides: Optional[Dict] = None, base_dir: Optional[Path] = None) -> Dict:
    """Defaults, then the config file, then command line overrides."""
    raw = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        base_dir = p.parent
    extra = set(raw) - CONFIG_KEYS
    if extra:
        raise ConfigError(f"unknown config keys {sorted(extra)}")
    cfg = _merge(DEFAULTS, raw)
    cfg = _merge(cfg, overrides or {})
    prof = cfg["profile"]
    if isinstance(prof, str):
        pp = Path(prof) if base_dir is None or Path(prof).is_absolute() else base_dir / prof
        if not pp.is_file():
            raise ConfigError(f"profile file {prof} does not exist")
        cfg["profile"] = json.loads(pp.read_text())
    return cfg


def build_profile(cfg) -> K.BackgroundProfile:
    try:
        return K.profile_from_dict(cfg["profile"])
    except (K.ProfileError, TypeError, ValueError) as exc:
        raise ConfigError(f"profile: {exc}") from exc


def build_data(cfg) -> E.CauchyData:
    try:
        return E.CauchyData(**cfg["data"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"data: {exc}") from exc


def build_curves(cfg) -> List[E.CurveSpec]:
    try:
        return [E.CurveSpec.parse(s) for s in cfg["observations"]["curves"]]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"curves: {exc}") from exc


# --- output helpers ----------------------------------------------------------

def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path: Path, obj, started: Optional[float] = None):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    stamp = {"written": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    if started is not None:
        stamp["elapsed_s"] = time.time() - started
    path.with_name(path.stem + ".stamp.json").write_text(dumps(stamp))


def n_threads(jobs: int) -> int:
    env = os.environ.get("WAVEDECAY_THREADS")
    cap = int(env) if env and env.isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    return max(1, min(cap, jobs))


def _curve_file(label: str) -> str:
    return "curve_" + label.replace("=", "_") + ".csv"


def read_curve_csv(path) -> Dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], np.array(rows[1:], float).reshape(-1, len(rows[0]))
    return {k: body[:, i] for i, k in enumerate(head)}


# --- commands ----------------------------------------------------------------

def _run_one(job):
    name, data, profile, t_final, obs, dr, r_max = job
    return name, E.evolve(data, profile, t_final, obs, dr=dr, r_max=r_max)


def _save_trace(trace: E.SpacetimeTrace, d: Path, curves):
    d.mkdir(parents=True, exist_ok=True)
    trace.dump_binary(d / "trace.bin")
    for c in curves:
        trace.to_csv(c, d / _curve_file(c.label))
    meta = dict(trace.meta, curves=[c.label for c in curves], n_slices=int(len(trace.times)))
    write_json(d / "trace.json", meta)


def cmd_simulate(cfg) -> Dict:
    """Main run, plus the flat control and the coarse run when requested."""
    started = time.time()
    profile, data, curves = build_profile(cfg), build_data(cfg), build_curves(cfg)
    g, o = cfg["grid"], cfg["observations"]
    try:
        obs = E.ObsPlan(curves=curves, k_store=int(g["k_store"]), curve_every=int(o["curve_every"]))
        dr, tf = float(g["dr"]), float(g["t_final"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from exc
    jobs = [("main", data, profile, tf, obs, dr, g["r_max"])]
    if cfg["fit"].get("control"):
        flat = K.flat(mu_sign=profile.mu_sign, power_p=profile.power_p)
        jobs.append(("control", data, flat, tf, obs, dr, g["r_max"]))
    if g.get("coarse_check"):
        jobs.append(("coarse", data, profile, tf, obs, 2 * dr, g["r_max"]))
    out = Path(cfg["out"])
    with ThreadPoolExecutor(max_workers=n_threads(len(jobs))) as ex:
        results = dict(ex.map(_run_one, jobs))
    summary = {}
    for name, tr in results.items():
        d = out if name == "main" else out / name
        _save_trace(tr, d, curves)
        summary[name] = str(d)
    write_json(out / "simulate.json", {"runs": summary, "config": cfg}, started)
    return summary


def _load_trace(d: Path) -> E.SpacetimeTrace:
    if not (d / "trace.bin").is_file():
        raise ConfigError(f"no trace in {d}")
    dr, times, psi, psi_t = E.load_binary(d / "trace.bin")
    meta = json.loads((d / "trace.json").read_text())
    curves = {}
    for label in meta.get("curves", []):
        curves[E.CurveSpec.parse(label)] = read_curve_csv(d / _curve_file(label))
    return E.SpacetimeTrace(dr, times, psi, psi_t, curves, meta)


NORMS = {"le": G.le_norm, "le_star": G.le_star_norm, "strichartz": G.strichartz_norm}


def cmd_norms(cfg, trace_dir: Optional[str] = None) -> List[Dict]:
    started = time.time()
    d = Path(trace_dir or cfg["out"])
    tr = _load_trace(d)
    reps = []
    for item in cfg["observations"]["norms"]:
        kind = item.get("norm")
        t0, t1 = float(item.get("t0", tr.times[0])), float(item.get("t1", tr.times[-1]))
        if kind == "le1":
            rep = G.le1_norm(tr, t0, t1)
        elif kind in NORMS:
            rep = NORMS[kind](tr, t0, t1, item.get("field", "phi"))
        else:
            raise ConfigError(f"unknown norm {kind!r}")
        reps.append(rep.to_json())
    write_json(d / "norms.json", {"norms": reps}, started)
    return reps


def predict_json(sigma, gamma, p, region) -> Dict:
    try:
        rate, log = C.predict(Fraction(str(sigma)), Fraction(str(gamma)), int(p), region)
    except (C.CalculusError, ValueError) as exc:
        raise ConfigError(f"calculus: {exc}") from exc
    return {"sigma": str(C.q(Fraction(str(sigma)))), "gamma": str(C.q(Fraction(str(gamma)))), "p": int(p),
            "region": region, "rate": rate.to_json(), "bound": str(rate),
            "c_u": float(rate.c), "b_v": float(rate.b), "a_r": float(rate.a),
            "r_phase_steps": log.r_phase_steps, "u_phase_steps": log.u_phase_steps,
            "nudged": log.nudged, "warnings": list(log.warnings)}


def cmd_predict(cfg) -> Dict:
    c = cfg["calculus"]
    out = predict_json(c["sigma"], c["gamma"], c["p"], c["region"])
    if cfg.get("out"):
        write_json(Path(cfg["out"]) / "prediction.json", out)
    return out


def cmd_verify(cfg, trace_dir: Optional[str] = None) -> Fm.ReconcileReport:
    """Fit slopes on every curve and compare with the predicted rate for the profile's sigma."""
    started = time.time()
    d = Path(trace_dir or cfg["out"])
    tr = _load_trace(d)
    meta = tr.meta
    control = _load_trace(d / "control") if (d / "control" / "trace.bin").is_file() else None
    coarse = _load_trace(d / "coarse") if (d / "coarse" / "trace.bin").is_file() else None
    tol = float(cfg["tolerances"]["slope"])
    profile = build_profile(cfg)
    support = E.CauchyData(**meta["data"]).support
    fits = []
    problems = []
    for spec in tr.curves:
        var = "v" if spec.kind == "u" else "t"
        if cfg["fit"].get("window"):
            win = tuple(float(x) for x in cfg["fit"]["window"])
        else:
            win = (Fm.curve_window_start(spec, support), float(meta["t_final"]))
        # on a flat background the control is the run itself
        floor = 0.0
        if control is not None and not profile.is_flat():
            floor = Fm.noise_floor(control.curves[spec], win)
        try:
            f = Fm.fit_exponent(tr.curves[spec], spec, var, win, floor,
                                coarse=coarse.curves[spec] if coarse is not None else None)
            fits.append(f)
        except Fm.FitError as exc:
            problems.append({"curve": spec.label, "error": type(exc).__name__, "message": str(exc)})
    rep = Fm.reconcile(fits, Fm.target_rate(Fraction(str(profile.sigma))), tol)
    body = rep.to_json()
    body["fits"] = [f.to_json() for f in fits]
    body["fit_errors"] = problems
    write_json(d / "verify.json", body, started)
    (d / "verify.md").write_text(rep.markdown())
    if problems or not rep.passed:
        raise VerificationFailed(body)
    return rep


def cmd_report(run_dir: str) -> str:
    d = Path(run_dir)
    parts = ["# wavedecay run report", ""]
    sim = d / "simulate.json"
    if sim.is_file():
        s = json.loads(sim.read_text())
        g = s["config"]["grid"]
        parts += ["## Simulation", "", f"- dr = {g['dr']}, t_final = {g['t_final']}",
                  f"- runs: {', '.join(sorted(s['runs']))}", ""]
    tj = d / "trace.json"
    if tj.is_file():
        m = json.loads(tj.read_text())
        parts += [f"- profile digest {m['profile_digest']}, {m['n_steps']} steps, r_max = {m['r_max']:.3f}", ""]
    pj = d / "prediction.json"
    if pj.is_file():
        p = json.loads(pj.read_text())
        parts += ["## Prediction", "", f"- sigma = {p['sigma']}, gamma = {p['gamma']}, p = {p['p']}, "
                  f"region {p['region']}: {p['bound']}", ""]
    nj = d / "norms.json"
    if nj.is_file():
        rows = ["| norm | span | value | err est |", "|---|---|---|---|"]
        for n in json.loads(nj.read_text())["norms"]:
            rows.append(f"| {n['norm']} | {n['span'][0]:g}-{n['span'][1]:g} | {n['value']:.6g} | {n['err_est']:.2g} |")
        parts += ["## Norms", ""] + rows + [""]
    vj = d / "verify.json"
    if vj.is_file():
        v = json.loads(vj.read_text())
        parts += ["## Decay verification", "", f"Prediction: {v['prediction']}", "",
                  (d / "verify.md").read_text()]
        for e in v.get("fit_errors", []):
            parts.append(f"- {e['curve']}: {e['error']} ({e['message']})")
        parts += ["", f"Verdict: {'all pass' if v['passed'] and not v.get('fit_errors') else 'FAIL'}", ""]
    text = "\n".join(parts)
    (d / "report.md").write_text(text)
    return text


# --- argument parsing --------------------------------------------------------

def _parser():
    ap = argparse.ArgumentParser(prog="wavedecay")
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("simulate", "norms", "predict", "verify", "report"):
        sp = sub.add_parser(name)
        sp.add_argument("--config")
        sp.add_argument("--out")
        if name in ("simulate",):
            sp.add_argument("--dr", type=float)
            sp.add_argument("--t-final", type=float)
            sp.add_argument("--k-store", type=int)
            sp.add_argument("--amplitude", type=float)
            sp.add_argument("--curves", nargs="+")
        if name in ("norms", "verify"):
            sp.add_argument("--trace", help="trace directory (default: the config's out)")
        if name == "predict":
            sp.add_argument("--sigma")
            sp.add_argument("--gamma")
            sp.add_argument("--p", type=int)
            sp.add_argument("--region", choices=[C.INTERIOR, C.EXTERIOR])
        if name == "report":
            sp.add_argument("run_dir", nargs="?")
    return ap


def _overrides(a) -> Dict:
    o: Dict = {}
    if getattr(a, "out", None):
        o["out"] = a.out
    pairs = [("dr", "grid", "dr"), ("t_final", "grid", "t_final"), ("k_store", "grid", "k_store"),
             ("amplitude", "data", "amplitude"), ("curves", "observations", "curves"),
             ("sigma", "calculus", "sigma"), ("gamma", "calculus", "gamma"), ("p", "calculus", "p"),
             ("region", "calculus", "region")]
    for attr, sect, key in pairs:
        v = getattr(a, attr, None)
        if v is not None:
            o.setdefault(sect, {})[key] = v
    return o


def _fail(code, kind, message, **extra):
    sys.stderr.write(json.dumps(dict({"error": kind, "message": message}, **extra), sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    a = _parser().parse_args(argv)
    try:
        if a.cmd == "report":
            d = a.run_dir or (load_config(a.config)["out"] if a.config else None)
            if d is None or not Path(d).is_dir():
                raise ConfigError(f"run directory {d} does not exist")
            sys.stdout.write(cmd_report(d))
            return 0
        over = _overrides(a)
        if a.cmd == "predict" and not a.out:
            over["out"] = None
        cfg = load_config(a.config, over)
        if a.cmd == "simulate":
            out = cmd_simulate(cfg)
        elif a.cmd == "norms":
            out = cmd_norms(cfg, a.trace)
        elif a.cmd == "predict":
            out = cmd_predict(cfg)
        else:
            out = cmd_verify(cfg, a.trace).to_json()
        sys.stdout.write(dumps(out))
        return 0
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except (K.ProfileError, G.RegionError, E.FocusingPowerUnsupported, E.CflViolation) as exc:
        return _fail(EXIT_CONFIG, "config", f"{type(exc).__name__}: {exc}")
    except E.NonFinite as exc:
        return _fail(EXIT_NONFINITE, "nonfinite", str(exc), t=exc.t)
    except VerificationFailed as exc:
        return _fail(EXIT_VERIFY, "verification", "reconcile failed", report=exc.report)


if __name__ == "__main__":
    sys.exit(main())
