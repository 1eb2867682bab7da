"""Per-pair ratios for the weighted r^gamma inequality on one defocusing run.

    python3 scripts/rgamma_pairs.py --gamma 0.25 --dr 0.0625 --t-final 100
"""
import argparse

from wavedecay import coeffs as K
from wavedecay import evolve as E
from wavedecay import regions as G


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--gamma", type=float, default=0.25)
    ap.add_argument("--dr", type=float, default=1 / 16)
    ap.add_argument("--t-final", type=float, default=100.0)
    ap.add_argument("--amplitude", type=float, default=0.5)
    a = ap.parse_args()
    data = E.CauchyData(amplitude=a.amplitude, radius=2.0, phi0="bump", phi1="zero")
    k = max(1, int(round(0.125 / (0.5 * a.dr))))
    tr = E.evolve(data, K.potential(0.05, sigma=1, mu_sign=1), a.t_final, E.ObsPlan(k_store=k), dr=a.dr)
    print(f"{'T1':>6} {'T2':>6} {'lhs':>12} {'rhs':>12} {'ratio':>10}")
    best = 0.0
    for T1 in (0.0, 5.0, 10.0, 20.0, 30.0, 40.0):
        for d in (10.0, 30.0, 60.0):
            if T1 + d > a.t_final:
                continue
            lhs, rhs, q = G.rgamma_inequality_ratio(tr, a.gamma, T1, T1 + d)
            best = max(best, q)
            print(f"{T1:6g} {T1 + d:6g} {lhs:12.5g} {rhs:12.5g} {q:10.3e}")
    print(f"fitted constant (family supremum): {best:.4g}")


if __name__ == "__main__":
    main()
