"""Emission probability and impurity versus pump power for the 26 ps, 640 ps-lifetime emitter.

Usage: python scripts/rabi_impurity.py [--gamma-d 0.2] [--p-max 4] [--n 81] [--out rabi_impurity.csv]
"""
import argparse
import math

import numpy as np

from wgsource.bloch import EmitterParams, PulseParams
from wgsource.device import (REFERENCE_BETA_C, REFERENCE_T_P, REFERENCE_XI_LOW_POWER, impurity_vs_power)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lifetime-ns", type=float, default=0.64)
    ap.add_argument("--gamma-d", type=float, default=0.2)
    ap.add_argument("--fwhm-ps", type=float, default=26.0)
    ap.add_argument("--p-max", type=float, default=4.0, help="largest power in units of P_pi")
    ap.add_argument("--n", type=int, default=81)
    ap.add_argument("--out", default="rabi_impurity.csv")
    args = ap.parse_args()

    em = EmitterParams.from_lifetime(args.lifetime_ns, args.gamma_d)
    pulse = PulseParams.from_fwhm(math.pi, args.fwhm_ps * 1e-3)
    beta_e = 2 * REFERENCE_T_P / (REFERENCE_XI_LOW_POWER * REFERENCE_BETA_C)
    powers = np.linspace(args.p_max / args.n, args.p_max, args.n)
    rows = impurity_vs_power(REFERENCE_T_P, beta_e, REFERENCE_BETA_C, em, pulse, powers)
    with open(args.out, "w") as f:
        f.write("P_over_P_pi,theta_over_pi,p_e,xi\n")
        for p, th, pe, xi in rows:
            f.write(f"{p!r},{th / math.pi!r},{pe!r},{xi!r}\n")
    best = max(rows, key=lambda r: r[2])
    at_pi = min(rows, key=lambda r: abs(r[0] - 1.0))
    print(f"max p_e = {best[2]:.4f} at P = {best[0]:.3f} P_pi")
    print(f"xi(P ~ P_pi) = {at_pi[3]:.4e}  (low power {REFERENCE_XI_LOW_POWER:.1e})")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
