import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from conftest import dense_schwarz, level, ops_of
from maxwell_phjd import oracle, schwarz
from maxwell_phjd.errors import ConfigurationError
from maxwell_phjd.solver import (SolverConfig, bordered_correction, correction_step, divergence, helmholtz_project,
                                 initial_guess, m_normalize, rayleigh_quotient, rayleigh_ritz, residual, run,
                                 run_plain_jd, start_state)

EX1 = ("rect2d", (8, 4), 2, 0.25)
EX2 = ("square2d", 2, 3, 0.125)


@pytest.fixture(scope="module")
def ex1():
    hier, cover, of, oc = level(*EX1)
    return hier, cover, of, oc, oracle.dense_reference(of)


@pytest.fixture(scope="module")
def ex2():
    hier, cover, of, oc = level(*EX2)
    return hier, cover, of, oc, oracle.dense_reference(of)


@pytest.fixture(scope="module")
def ex1_run(ex1):
    hier, cover, of, oc, _ = ex1
    return run(SolverConfig(), hier, cover, of, oc)


@pytest.fixture(scope="module")
def ex2_run(ex2):
    hier, cover, of, oc, _ = ex2
    return run(SolverConfig(), hier, cover, of, oc)


def test_config_defaults_by_dimension():
    two, three = SolverConfig().resolved(2), SolverConfig().resolved(3)
    assert (two.tol_dlambda, two.tol_resnorm) == (1e-8, 0.0)
    assert (three.tol_dlambda, three.tol_resnorm) == (0.0, 1e-5)
    explicit = SolverConfig(tol_resnorm=1e-4).resolved(2)
    assert (explicit.tol_dlambda, explicit.tol_resnorm) == (0.0, 1e-4)
    for bad in ({"method": "lobpcg"}, {"max_iterations": 0}, {"tol_resnorm": -1.0}, {"overlap_ratio": 0.0}):
        with pytest.raises(ConfigurationError):
            SolverConfig(**bad)


# initial guess

def test_initial_guess_square():
    hier, cover, of, oc = level("square2d", 2, 2, layers=1)
    lam1, u1, lam_h = initial_guess(hier, of, oc)
    ref_h = oracle.dense_reference(oc).lambda1h
    assert lam_h == pytest.approx(ref_h, rel=1e-10)
    assert lam1 >= oracle.dense_reference(of).lambda1h - 1e-12
    assert divergence(of, u1) <= 1e-10
    assert u1 @ (of.M @ u1) == pytest.approx(1.0, rel=1e-12)


def test_initial_guess_upper_bound(ex1):
    hier, cover, of, oc, ref = ex1
    lam1, _, lam_h = initial_guess(hier, of, oc)
    assert lam1 >= ref.lambda1h
    # nested spaces: the prolongated coarse mode keeps its Rayleigh quotient;
    # the projection then drops mass only, so the quotient can only rise
    c = oracle.dense_reference(oc, vectors=True)
    u = hier.P @ c.eigenvectors[:, c.zero_mode_count]
    assert rayleigh_quotient(of, u) == pytest.approx(lam_h, rel=1e-10)
    assert lam1 >= lam_h * (1 - 1e-12)


# residual

def test_residual_vanishes_on_eigenpair(ex2):
    of = ex2[2]
    full = oracle.dense_reference(of, vectors=True)
    x = full.eigenvectors[:, full.zero_mode_count]
    g, rn = residual(of, x, full.lambda1h)
    assert rn <= 1e-8 * full.lambda1h
    assert np.linalg.norm(g) <= 1e-9 * np.linalg.norm(of.K @ x)


def test_residual_orthogonal_at_rayleigh_quotient(rng):
    ops = ops_of("rect2d", (8, 4))
    x = rng.standard_normal(ops.n_dof)
    g, rn = residual(ops, x, rayleigh_quotient(ops, x))
    assert abs(g @ x) <= 1e-12 * np.linalg.norm(g) * np.linalg.norm(x)
    Minv_g = np.linalg.solve(ops.M.toarray(), g)
    assert rn == pytest.approx(math.sqrt(g @ Minv_g), rel=1e-9)


# correction step

def test_correction_zero_residual(ex1):
    hier, cover, of, oc, _ = ex1
    lam1, u1, _ = initial_guess(hier, of, oc)
    pc = schwarz.setup(of, oc, hier, cover, lam1)
    e, beta = correction_step(u1, pc, np.zeros(of.n_dof), of.M)
    assert beta == 0.0
    np.testing.assert_array_equal(e, 0)


def test_correction_is_m_orthogonal_and_matches_dense(rng):
    hier, cover, of, oc = level("rect2d", (2, 1), 1, layers=1)
    lam = 0.15
    pc = schwarz.setup(of, oc, hier, cover, lam)
    C = dense_schwarz(of, oc, hier, cover, lam)
    x = m_normalize(of, rng.standard_normal(of.n_dof))
    g, _ = residual(of, x, rayleigh_quotient(of, x))
    e, beta = correction_step(x, pc, g, of.M)
    Mx = of.M @ x
    assert abs(e @ Mx) <= 1e-12 * np.linalg.norm(e) * np.linalg.norm(Mx)
    cr, cu = C @ g, C @ Mx
    beta_ref = -(cr @ Mx) / (cu @ Mx)
    assert beta == pytest.approx(beta_ref, rel=1e-10)
    np.testing.assert_allclose(e, cr + beta_ref * cu, rtol=1e-9, atol=1e-12 * np.abs(e).max())


def test_correction_degenerate_denominator_warns():
    class Zero:
        def apply(self, g):
            return np.zeros_like(g)

    ops = ops_of("rect2d", (4, 2))
    warnings = []
    e, beta = correction_step(np.ones(ops.n_dof), Zero(), np.ones(ops.n_dof), ops.M, warnings)
    assert beta == 0.0 and warnings


# Helmholtz projection

@given(st.integers(0, 2**31 - 1))
def test_projection_kills_gradients(seed):
    ops = ops_of("rect2d", (8, 4))
    r = np.random.default_rng(seed)
    p = r.standard_normal(ops.G.shape[1])
    t, _ = helmholtz_project(ops, ops.G @ p)
    v = ops.G @ p
    assert math.sqrt(t @ (ops.M @ t)) <= 1e-8 * math.sqrt(v @ (ops.M @ v))


def test_projection_properties(rng):
    ops = ops_of("lshape2d", 4)
    e = rng.standard_normal(ops.n_dof)
    t, p = helmholtz_project(ops, e)
    assert divergence(ops, t) <= 1e-10
    gp = ops.G @ p
    # Pythagoras in the M inner product
    assert e @ (ops.M @ e) == pytest.approx(t @ (ops.M @ t) + gp @ (ops.M @ gp), rel=1e-10)
    t2, p2 = helmholtz_project(ops, t)
    np.testing.assert_allclose(t2, t, atol=1e-10 * np.abs(t).max())
    assert np.abs(p2).max() <= 1e-10 * np.abs(p).max()
    # curl part is untouched
    assert t @ (ops.K @ t) == pytest.approx(e @ (ops.K @ e), rel=1e-10)


# Rayleigh-Ritz

def test_rayleigh_ritz_cases(rng):
    ops = ops_of("rect2d", (8, 4))
    full = oracle.dense_reference(ops, vectors=True)
    z = full.zero_mode_count
    v1, v2 = full.eigenvectors[:, z], full.eigenvectors[:, z + 1]
    state = start_state(ops, rayleigh_quotient(ops, v2), v2)
    assert rayleigh_ritz(state, v1, ops)
    assert state.lam == pytest.approx(full.lambda1h, rel=1e-10)
    assert state.k == 2 and state.W.shape[1] == 2
    assert not rayleigh_ritz(state, 2.0 * v1 - v2, ops)
    assert state.k == 2

    X = rng.standard_normal((ops.n_dof, 3))
    state = start_state(ops, rayleigh_quotient(ops, X[:, 0]), X[:, 0])
    rayleigh_ritz(state, X[:, 1], ops)
    rayleigh_ritz(state, X[:, 2], ops)
    Kp, Mp = X.T @ (ops.K @ X), X.T @ (ops.M @ X)
    ref = scipy.linalg.eigh(Kp, Mp, eigvals_only=True)[0]
    assert state.lam == pytest.approx(ref, rel=1e-10)
    np.testing.assert_allclose(state.W.T @ (ops.M @ state.W), np.eye(3), atol=1e-12)


# full runs

@pytest.mark.parametrize("name", ["ex1", "ex2"])
def test_run_matches_oracle(name, request):
    *_, ref = request.getfixturevalue(name)
    rep = request.getfixturevalue(name + "_run")
    assert rep.converged
    assert abs(rep.lam - ref.lambda1h) <= 1e-6
    assert rep.iterations <= 10
    assert rep.dof == len(rep.x)


@pytest.mark.parametrize("name", ["ex1_run", "ex2_run"])
def test_trajectory_invariants(name, request):
    rep = request.getfixturevalue(name)
    ref = request.getfixturevalue(name[:3])[-1]
    lams = [h.lam for h in rep.history]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(lams, lams[1:]))
    assert min(lams) >= ref.lambda1h * (1 - 1e-12)
    assert max(h.divergence for h in rep.history) <= 1e-8
    assert [h.k for h in rep.history] == list(range(1, len(rep.history) + 1))
    assert rep.iterations == len(rep.history) - 1


def test_first_iterate_only():
    hier, cover, of, oc = level(*EX2)
    rep = run(SolverConfig(max_iterations=1), hier, cover, of, oc)
    lam1, _, _ = initial_guess(hier, of, oc)
    assert not rep.converged
    assert rep.iterations == 0
    assert rep.lam == lam1


def test_deterministic_across_threads(ex2_run):
    hier, cover, of, oc = level(*EX2)
    rep = run(SolverConfig(threads=4), hier, cover, of, oc)
    assert [h.lam for h in rep.history] == [h.lam for h in ex2_run.history]
    assert rep.x.tobytes() == ex2_run.x.tobytes()


def test_basis_cap_stops_with_warning():
    hier, cover, of, oc = level(*EX1)
    rep = run(SolverConfig(max_basis=3, tol_dlambda=1e-30), hier, cover, of, oc)
    assert not rep.converged
    assert any("max_basis" in w for w in rep.warnings)


# plain Jacobi-Davidson

def test_bordered_correction_constraint(rng):
    ops = ops_of("rect2d", (8, 4))
    x = m_normalize(ops, rng.standard_normal(ops.n_dof))
    lam = rayleigh_quotient(ops, x)
    g, _ = residual(ops, x, lam)
    e = bordered_correction(ops, x, lam, g)
    Mx = ops.M @ x
    assert abs(e @ Mx) <= 1e-10 * np.linalg.norm(e) * np.linalg.norm(Mx)
    # (K - lam M) e - g lies in span(M x)
    res = (ops.K - lam * ops.M) @ e - g
    mu = (res @ Mx) / (Mx @ Mx)
    assert np.linalg.norm(res - mu * Mx) <= 1e-9 * np.linalg.norm(g)


def test_plain_jd_exact_start():
    ops = ops_of("rect2d", (8, 4))
    full = oracle.dense_reference(ops, vectors=True)
    rep = run_plain_jd(SolverConfig(), ops, x0=full.eigenvectors[:, full.zero_mode_count])
    assert rep.converged and rep.iterations == 0
    assert rep.lam == pytest.approx(full.lambda1h, rel=1e-12)


def test_plain_jd_from_coarse_start():
    hier, cover, of, oc = level("rect2d", (2, 1), 1, layers=1)
    ref = oracle.dense_reference(of)
    _, u1, _ = initial_guess(hier, of, oc)
    rep = run_plain_jd(SolverConfig(), of, x0=u1)
    assert rep.converged
    assert abs(rep.lam - ref.lambda1h) <= 1e-8


def test_projection_off_drifts_into_kernel():
    ops = ops_of("rect2d", (8, 4))
    on = run_plain_jd(SolverConfig(max_iterations=8, tol_dlambda=1e-30), ops)
    off = run_plain_jd(SolverConfig(max_iterations=8, tol_dlambda=1e-30), ops, helmholtz_projection=False)
    assert max(h.divergence for h in on.history) <= 1e-8
    assert max(h.divergence for h in off.history) > 1e-3
    assert not off.converged


def test_empty_coarse_space_rejected():
    hier, cover, of, oc = level("box3d", (1, 2, 1), 1, layers=1)
    with pytest.raises(ConfigurationError):
        initial_guess(hier, of, oc)
