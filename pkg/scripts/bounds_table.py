"""Tabulate the independent-port mean-RSI lower bound against the port count."""

import argparse
import math

from fas_sic import rsi_lower_bound


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kappa-db", type=float, default=30.0)
    ap.add_argument("--ports", type=int, nargs="*", default=[2, 4, 9, 16, 25, 36, 64, 100, 400, 900])
    args = ap.parse_args()
    kappa = 10 ** (args.kappa_db / 10)
    print(f"{'N':>6} {'bound':>12} {'bound_dB':>9} {'cancel_dB':>9}")
    for n in args.ports:
        b = rsi_lower_bound(n, kappa)
        print(f"{n:>6} {b:12.5f} {10 * math.log10(b):9.3f} {args.kappa_db - 10 * math.log10(b):9.3f}")


if __name__ == "__main__":
    main()
