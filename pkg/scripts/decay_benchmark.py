"""Late-time decay benchmark: potential run, flat control, slope fits.

    python3 scripts/decay_benchmark.py --mu 0 --dr 0.0078125 --t-final 400 --out runs/bench
"""
import argparse
import json
import time
from pathlib import Path

from wavedecay import coeffs as K
from wavedecay import evolve as E
from wavedecay import fit as Fm


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mu", type=int, default=0)
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--amplitude", type=float, default=0.05, help="potential amplitude")
    ap.add_argument("--data-amplitude", type=float, default=1e-3)
    ap.add_argument("--dr", type=float, default=1 / 128)
    ap.add_argument("--t-final", type=float, default=400.0)
    ap.add_argument("--curves", nargs="+", default=["r=1", "u=10", "lambda=0.5"])
    ap.add_argument("--out", default="runs/bench")
    a = ap.parse_args()

    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    curves = [E.CurveSpec.parse(c) for c in a.curves]
    obs = E.ObsPlan(curves=curves, curve_every=16)
    data = E.decay_data(a.data_amplitude)
    t0 = time.time()
    run = E.evolve(data, K.potential(a.amplitude, sigma=a.sigma, mu_sign=a.mu), a.t_final, obs, dr=a.dr)
    ctrl = E.evolve(data, K.flat(), a.t_final, obs, dr=a.dr)
    print(f"evolved in {time.time() - t0:.0f}s")

    target = Fm.target_rate(a.sigma)
    fits = []
    for c in curves:
        run.to_csv(c, out / f"curve_{c.label.replace('=', '_')}.csv")
        win = (Fm.curve_window_start(c, data.support), a.t_final)
        var = "v" if c.kind == "u" else "t"
        try:
            f = Fm.fit_exponent(run, c, var, win, Fm.noise_floor(ctrl.curve(c), win))
        except Fm.FitError as exc:
            print(f"{c.label:>12}  {type(exc).__name__}: {exc}")
            continue
        fits.append(f)
        print(f"{c.label:>12}  slope {f.slope:+.3f}  predicted {Fm.predicted_slope(target, c.label):+.3f}")
    rep = Fm.reconcile(fits, target, tol=0.25)
    (out / "fits.json").write_text(json.dumps(rep.to_json(), indent=2, sort_keys=True))
    (out / "fits.md").write_text(rep.markdown())


if __name__ == "__main__":
    main()
