"""Shared fixtures; heavy discretization bundles are memoized per session."""

import numpy as np
import pytest

import polystokes as ps
from polystokes.spaces import DiscreteSpaces

_SPACES = {}
_LOCAL_OPS = {}
_LOCAL_PRODUCTS = {}


def _mesh_by_key(key):
    kind, arg = key
    if kind == "cartesian":
        return ps.generate_cartesian(arg)
    if kind == "hexagonal":
        return ps.generate_hexagonal(arg)
    if kind == "perturbed":
        return ps.perturb(ps.generate_cartesian(arg), 0.2, 1)
    raise KeyError(key)


def get_spaces(key, k):
    if (key, k) not in _SPACES:
        _SPACES[(key, k)] = DiscreteSpaces(_mesh_by_key(key), k)
    return _SPACES[(key, k)]


def get_local_ops(key, k):
    if (key, k) not in _LOCAL_OPS:
        from polystokes.operators import build_local_operators

        _LOCAL_OPS[(key, k)] = build_local_operators(get_spaces(key, k))
    return _LOCAL_OPS[(key, k)]


def get_local_products(key, k):
    if (key, k) not in _LOCAL_PRODUCTS:
        from polystokes.products import build_local_products

        _LOCAL_PRODUCTS[(key, k)] = build_local_products(get_local_ops(key, k))
    return _LOCAL_PRODUCTS[(key, k)]


@pytest.fixture(scope="session")
def mesh_cart2():
    return _mesh_by_key(("cartesian", 2))


@pytest.fixture(scope="session")
def mesh_cart4():
    return _mesh_by_key(("cartesian", 4))


@pytest.fixture(scope="session")
def mesh_pert4():
    return _mesh_by_key(("perturbed", 4))


@pytest.fixture(scope="session")
def mesh_hexa3():
    return _mesh_by_key(("hexagonal", 3))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(42)
