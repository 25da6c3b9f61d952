import functools

import pytest

from growfrag.coefficients import mitosis_fragments, power_coefficients
from growfrag.eigensolver import TruncationConfig, solve_truncated
from growfrag.meshops import build_mesh

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}

FAMILIES = {
    "selfsimilar": dict(alpha=1.0, gamma=1.0),
    "constant": dict(alpha=0.0, gamma=0.0),
    "gamma1": dict(alpha=0.0, gamma=1.0),
    "gamma_half": dict(alpha=0.0, gamma=-0.5),
    "mitosis": dict(alpha=0.0, gamma=1.0, fragments="mitosis"),
}


def family(name):
    kw = dict(FAMILIES[name])
    if kw.pop("fragments", None) == "mitosis":
        kw["fragments"] = mitosis_fragments()
    return power_coefficients(name=name, **kw)


@functools.lru_cache(maxsize=None)
def solved(name, L, N, x1=1e-6, dual_boundary="zero"):
    """Cached eigentriple; the cache is shared by every test module."""
    return solve_truncated(family(name), TruncationConfig(L, dual_boundary=dual_boundary),
                           build_mesh(L, N, x1))


@pytest.fixture(scope="session")
def small_triples():
    return {k: solved(k, 20.0, 257) for k in ("selfsimilar", "constant", "gamma1", "gamma_half")}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
