import sys

import pytest

from gkbm.kernel import Kernel
from gkbm.model import GkbmParams, sample


def tiny_instance(seed, n_max=10, lam=2.0, n=4, p=0.9, q=0.1, kernel=None):
    """First instance at or after ``seed`` whose node count is in [2, n_max]."""
    kernel = kernel or Kernel.indicator(1.0)
    # lam * n is the expected node count, so keep it near n_max
    s = seed
    while True:
        inst = sample(GkbmParams(lam, n, p, q, kernel, s))
        if 2 <= inst.node_count <= n_max and inst.pair_count > 0:
            return inst
        s += 10_000


@pytest.fixture
def small_params():
    return GkbmParams(2.0, 500, 0.9, 0.1, Kernel.indicator(1.0), 7)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])
