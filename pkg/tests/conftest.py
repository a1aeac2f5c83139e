import functools

import numpy as np
import pytest

from toolforge import discovery, editor, tasks


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@functools.lru_cache(maxsize=None)
def source(family):
    return editor.make_source_tool(family, editor.default_dimensions(family))


@functools.lru_cache(maxsize=None)
def default_report(variant):
    """Discovery over every family feature with the stock config (cached per session)."""
    task = tasks.default_task(variant)
    src = source(task.family)
    return discovery.discover(task, src, list(src.features), discovery.DiscoveryConfig())


@pytest.fixture
def stick():
    return source("stick")


@pytest.fixture
def scoop():
    return source("scoop")


@pytest.fixture
def platform():
    return source("platform")
