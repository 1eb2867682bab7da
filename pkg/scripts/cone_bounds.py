"""Table of ||<s+rho>^-1||_{L^2(D_tr^R)} over dyadic R for one apex.

    python3 scripts/cone_bounds.py --t 300 --r 220
"""
import argparse

import numpy as np

from wavedecay import regions as G


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--t", type=float, default=300.0)
    ap.add_argument("--r", type=float, default=220.0)
    a = ap.parse_args()
    u, v = a.t - a.r, a.t + a.r
    print(f"apex (t, r) = ({a.t:g}, {a.r:g}), u = {u:g}, v = {v:g}")
    print(f"{'R':>8} {'piece':>6} {'norm':>10} {'norm/(<u>/R)^1/2':>18}")
    for R in G.dyadic_R(v):
        if R >= v:
            break
        val = G.v_plus_norm((a.t, a.r), R)
        piece = "R_1" if R < u / 8 else "R_2"
        print(f"{R:8g} {piece:>6} {val:10.5f} {val / np.sqrt(np.sqrt(1 + u * u) / R):18.5f}")


if __name__ == "__main__":
    main()
