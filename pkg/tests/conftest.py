import numpy as np
import pytest

from effrank.kernels import sample_dataset
from effrank.ntk import MLPJacobians, MLPSpec, mlp_init

_ACCEPTANCE = []


@pytest.fixture
def record():
    """Record one acceptance line: record(number, passed, detail)."""

    def _record(number, passed, detail):
        _ACCEPTANCE.append((number, bool(passed), detail))

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {detail}")


def random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    A = rng.standard_normal((n, rank))
    return A @ A.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_net(d=3, m=16, L=2, C=3, n=64, seed=0, dist="gaussian"):
    spec = MLPSpec(d, m, L, C)
    params = mlp_init(spec, seed)
    D = sample_dataset(dist, n, d, seed)
    return MLPJacobians(params), params, D
