"""Shared fixtures: charts, grids, and suite reports at the desk-scale
resolutions (sphere 24x48, cylinder 32x32, ring 64), built once per session."""

import numpy as np
import pytest

import cqop
from cqop.verify import run_suite

SEED = 7


@pytest.fixture(scope="session")
def sphere():
    chart = cqop.builtin_chart("sphere", 1.0)
    grid = cqop.build_grid(chart, 24, 48)
    return chart, grid


@pytest.fixture(scope="session")
def cylinder():
    chart = cqop.builtin_chart("cylinder", 1.0, Lz=10.0)
    grid = cqop.build_grid(chart, 32, 32)
    return chart, grid


@pytest.fixture(scope="session")
def ring():
    chart = cqop.builtin_chart("ring", 1.0)
    grid = cqop.build_grid(chart, 64, 1)
    return chart, grid


@pytest.fixture(scope="session")
def sphere_report(sphere):
    chart, grid = sphere
    return run_suite(chart, grid, SEED)


@pytest.fixture(scope="session")
def cylinder_report(cylinder):
    chart, grid = cylinder
    return run_suite(chart, grid, SEED)


@pytest.fixture(scope="session")
def ring_report(ring):
    chart, grid = ring
    return run_suite(chart, grid, SEED)


@pytest.fixture()
def rng():
    return np.random.default_rng(SEED)


def residual(report, check_id):
    for c in report.checks:
        if c.id == check_id:
            return c.residual
    raise KeyError(check_id)
