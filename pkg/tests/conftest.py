from __future__ import annotations

import functools

import pytest

from stableleaf.dynsys import builtin_catalog, make_map
from stableleaf.leaf import limit_leaf


ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: runs longer than a few seconds")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def catalog():
    return {m.name: m for m in builtin_catalog()}


@functools.lru_cache(maxsize=None)
def cached_limit(name: str, eta: float = 0.1, tol: float = 1e-9, h: float | None = None):
    """Limit leaf of a catalog map, shared across test modules."""
    fmap = make_map(name)
    return (fmap,) + limit_leaf(fmap, eta, tol, h)


@functools.lru_cache(maxsize=None)
def leaf_cache(name: str) -> dict:
    """Leaves at the default eta and h, keyed by order, shared across tests."""
    return {}


@pytest.fixture(scope="session")
def leaves_of():
    return leaf_cache


@pytest.fixture(scope="session")
def limit_of():
    return cached_limit
