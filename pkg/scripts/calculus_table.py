"""Print the decay-calculus iteration log for one (sigma, gamma, p).

    python3 scripts/calculus_table.py --sigma 3/10 --gamma 1/10 --p 4 --region exterior
"""
import argparse
from fractions import Fraction

from wavedecay import calculus as C


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sigma", type=Fraction, default=Fraction(3, 10))
    ap.add_argument("--gamma", type=Fraction, default=Fraction(1, 10))
    ap.add_argument("--p", type=int, default=4)
    ap.add_argument("--region", choices=[C.EXTERIOR, C.INTERIOR], default=C.EXTERIOR)
    a = ap.parse_args()
    final, log = C.predict(a.sigma, a.gamma, a.p, a.region)
    print(log.table())
    print(f"\nterminal {final}   sigma' = {log.sigma_prime}   r-phase steps {log.r_phase_steps}"
          f" (law {C.step_count_law(a.sigma, a.gamma)})   nudged {log.nudged}")
    for w in log.warnings:
        print("warning:", w)


if __name__ == "__main__":
    main()
