"""Run the acceptance tests and print only the criterion lines."""
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def main():
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", str(ROOT / "tests" / "test_acceptance.py")],
                          cwd=ROOT, capture_output=True, text=True)
    lines = [l for l in proc.stdout.splitlines() if l.startswith("criterion")]
    # the terminal summary repeats each line; keep the last copy
    seen = {}
    for l in lines:
        seen[l.split(":")[0]] = l
    for l in sorted(seen.values(), key=lambda s: int(s.split()[1].rstrip(":"))):
        print(l)
    return proc.returncode


if __name__ == "__main__":
    sys.exit(main())
