"""Run every built-in CLI scenario through all tasks and tabulate exit codes."""
import argparse
import time

from growfrag import cli


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out")
    ap.add_argument("--only", nargs="*", default=None)
    a = ap.parse_args()
    rows = []
    for name in a.only or cli.BUILTIN:
        t0 = time.perf_counter()
        code = cli.main(["all", "--config", name, "--out", a.out])
        rows.append((name, code, time.perf_counter() - t0))
    print()
    for name, code, secs in rows:
        print(f"{name:20s} exit={code} ({secs:.0f}s)")


if __name__ == "__main__":
    main()
