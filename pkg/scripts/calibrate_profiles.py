"""Regenerate the default analytic mode-profile calibration.

Usage: python scripts/calibrate_profiles.py [--peak-beta-c 0.95] [--out PATH]
"""
import argparse
import json
from pathlib import Path

from wgsource.device import calibrate_analytic_profiles

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "wgsource" / "data" / "default_device.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--peak-beta-c", type=float, default=0.95)
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = ap.parse_args()

    cal = calibrate_analytic_profiles(B_C=args.peak_beta_c)
    cfg = {
        # T_p = (T_E T_Ef + T_C T_Cf) / 2 = 2e-5
        "T_E": 1.0,
        "T_C": 3.9e-5,
        "T_Ef": 1e-6,
        "T_Cf": 1.0,
        "width_nm": 450.0,
        **cal,
    }
    args.out.write_text(json.dumps(cfg, indent=2) + "\n")
    print(json.dumps(cfg, indent=2))


if __name__ == "__main__":
    main()
