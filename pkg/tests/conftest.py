import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from maxwell_phjd.edgefem import assemble
from maxwell_phjd.hierarchy import build_hierarchy, build_subdomain_cover
from maxwell_phjd.mesh import DomainSpec, build_mesh

settings.register_profile(
    "repo", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@functools.lru_cache(maxsize=None)
def mesh_of(kind, res):
    return build_mesh(DomainSpec(kind), res)


@functools.lru_cache(maxsize=None)
def ops_of(kind, res):
    return assemble(mesh_of(kind, res))


@functools.lru_cache(maxsize=None)
def level(kind, coarse, r, ratio=None, layers=None):
    """(hierarchy, cover, fine ops, coarse ops), cached across tests."""
    hier = build_hierarchy(DomainSpec(kind), coarse, r)
    cover = build_subdomain_cover(hier, overlap_ratio=ratio, layers=layers)
    return hier, cover, assemble(hier.fine), assemble(hier.coarse)


def dense_schwarz(of, oc, hier, cover, lam):
    """C = P (K_H - lam M_H)^-1 P^T + sum_i E_i (K_i - lam M_i)^-1 E_i^T, formed densely."""
    K, M = of.K.toarray(), of.M.toarray()
    n = K.shape[0]
    C = np.zeros((n, n))
    if oc is not None:
        P = hier.P.toarray()
        A = oc.K.toarray() - lam * oc.M.toarray()
        C += P @ np.linalg.solve(A, P.T)
    for idx in cover.interior_edges:
        E = np.zeros((n, len(idx)))
        E[idx, np.arange(len(idx))] = 1.0
        Ai = E.T @ (K - lam * M) @ E
        C += E @ np.linalg.solve(Ai, E.T)
    return C


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
