"""Fitted log-log slope of G at large x across truncations and meshes.

The default sweep covers gamma = -1/2, where the slope approaches zero
slowly because of an x^gamma correction to the plateau.
"""
import argparse
import itertools

from growfrag import asymptotics as asy
from growfrag.coefficients import power_coefficients
from growfrag.eigensolver import TruncationConfig, solve_truncated
from growfrag.meshops import build_mesh


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--alpha", type=float, default=0.0)
    ap.add_argument("--gamma", type=float, default=-0.5)
    ap.add_argument("--L", type=float, nargs="+", default=[400.0, 1600.0])
    ap.add_argument("--N", type=int, nargs="+", default=[1025, 2049])
    a = ap.parse_args()
    c = power_coefficients(a.alpha, a.gamma)
    print(f"{'L':>8} {'N':>6} {'lambda_L':>14} {'slope':>9} {'window':>22} verdict")
    for L, N in itertools.product(a.L, a.N):
        tr = solve_truncated(c, TruncationConfig(L), build_mesh(L, N, 1e-6))
        r = asy.verify_G_at_infinity(tr)
        lo, hi = r.window
        print(f"{L:8g} {N:6d} {tr.lam:14.10f} {r.slope:+9.4f} [{lo:9.2f}, {hi:9.2f}] {r.verdict}")


if __name__ == "__main__":
    main()
