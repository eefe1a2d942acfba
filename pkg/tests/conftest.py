import functools

import numpy as np
import pytest
from hypothesis import strategies as st

from agr.compiler import compile_spec
from agr.domains.corridor import build_corridor
from agr.domains.gridmap import build_map
from agr.pomdp import TabularPOMDP


def random_model(seed, n_s=None, n_a=None, n_z=None, horizon=4, discount=0.9, sparsity=0.4):
    """Small random POMDP; some table entries are zeroed to exercise sparse paths."""
    rng = np.random.default_rng(seed)
    n_s = n_s or int(rng.integers(2, 6))
    n_a = n_a or int(rng.integers(1, 4))
    n_z = n_z or int(rng.integers(1, 4))

    def rows(n_rows, n_cols):
        m = rng.dirichlet(np.ones(n_cols), size=n_rows)
        m[rng.random(m.shape) < sparsity] = 0.0
        empty = m.sum(axis=1) == 0
        m[empty, rng.integers(0, n_cols, empty.sum())] = 1.0
        return m / m.sum(axis=1, keepdims=True)

    T = np.stack([rows(n_s, n_s) for _ in range(n_a)])
    O = np.stack([rows(n_s, n_z) for _ in range(n_a)])
    R = rng.uniform(-5, 5, size=(n_s, n_a)).round(3)
    b0 = rng.dirichlet(np.ones(n_s))
    return TabularPOMDP(T, R, O, b0, horizon=horizon, discount=discount)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@functools.lru_cache(maxsize=None)
def corridor(n=10, **kw):
    return compile_spec(build_corridor(n=n, **kw))


@functools.lru_cache(maxsize=None)
def default_map():
    return compile_spec(build_map(), reachable_only=True)


@pytest.fixture(scope="session")
def corridor10():
    return corridor(10)


@pytest.fixture(scope="session")
def corridor1():
    return corridor(1, horizon=6)


@pytest.fixture(scope="session")
def map_model():
    return default_map()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
