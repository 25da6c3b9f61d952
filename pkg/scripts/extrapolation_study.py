"""Truncation study: lambda_L against L for the self-similar and constant-B families.

Prints lambda_L, the Aitken limit and its error bar, and writes a CSV.
"""
import argparse
import csv
import time

from growfrag.coefficients import power_coefficients
from growfrag.eigensolver import TruncationConfig, extrapolate

FAMILIES = {"selfsimilar": (1.0, 1.0), "constant": (0.0, 0.0), "gamma1": (0.0, 1.0)}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--family", choices=FAMILIES, default="selfsimilar")
    ap.add_argument("--L", type=float, nargs="+", default=[20.0, 40.0, 80.0])
    ap.add_argument("--N", type=int, nargs="+", default=[513, 1025, 2049])
    ap.add_argument("--x1", type=float, default=1e-6)
    ap.add_argument("--csv", default=None)
    a = ap.parse_args()
    c = power_coefficients(*FAMILIES[a.family])
    t0 = time.perf_counter()
    ex = extrapolate(c, TruncationConfig(max(a.L)), a.L, a.x1, N=a.N)
    secs = time.perf_counter() - t0
    for L, n, lam in zip(ex.Ls, a.N, ex.lams):
        print(f"L={L:8g} N={n:5d} lambda_L={lam:.10f}")
    print(f"lambda_inf={ex.lam_inf:.10f} +- {ex.error_bar:.2e}  ({secs:.1f}s)")
    for w in ex.warnings:
        print("warning:", w)
    if a.csv:
        with open(a.csv, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["L", "N", "lambda_L"])
            wr.writerows(zip(ex.Ls, a.N, ex.lams))


if __name__ == "__main__":
    main()
