import math

import numpy as np
import pytest

from chainlab import (ChainSpec, NormedSpace, StepFunctions, TailCurve,
                      ValidationError, build_chain, center_and_normalize,
                      estimate_L, estimate_chain_sum, paulin_tail,
                      variance_statistics)
from chainlab.montecarlo import chain_sum_samples, default_threshold_grid

from conftest import averaging_kernel, identity_kernel

SCALAR = NormedSpace.lp(2, 1)


def scalar_family(values, centered=True, mu=None):
    """Scalar step functions from an (n, N) array, optionally centered."""
    arr = np.asarray(values, dtype=float)[..., None]
    f = StepFunctions(SCALAR, arr)
    if not centered:
        return f
    if mu is None:
        mu = np.full(arr.shape[1], 1.0 / arr.shape[1])
    return center_and_normalize(f, mu)


# ----------------------------------------------------------------------
# estimate_L
# ----------------------------------------------------------------------

def test_zero_family_has_zero_complexity():
    f = StepFunctions(SCALAR, np.zeros((2, 3, 1)), centered=True)
    est = estimate_L(f, np.full(3, 1.0 / 3.0), trials=50, seed=1)
    assert est.mean == 0.0
    assert est.stderr == 0.0


def test_single_step_scalar_half_normal_oracle():
    # n = 1: L = E|sum_v g_v x_v| with sum ~ N(0, sum mu_v x_v^2),
    # so L = sigma sqrt(2/pi) by the half-normal closed form
    mu = np.array([0.2, 0.3, 0.5])
    x = np.array([[0.4], [-0.8], [0.3]])[None, :, :]
    # the closed form is exact for any fixed table, centered or not
    f = StepFunctions(SCALAR, x, centered=True)
    sigma = math.sqrt(float(np.sum(mu * x[0, :, 0] ** 2)))
    oracle = sigma * math.sqrt(2.0 / math.pi)
    est = estimate_L(f, mu, trials=100_000, seed=7)
    assert abs(est.mean - oracle) <= 3 * est.stderr
    assert est.stderr < 0.01 * oracle + 1e-9


def test_matched_seed_homogeneity_exact_for_vector_norms():
    rng = np.random.default_rng(3)
    mu = np.full(4, 0.25)
    f = scalar_family(rng.uniform(-1, 1, (5, 4)), mu=mu)
    half = StepFunctions(SCALAR, f.table * 0.5, centered=True)
    a = estimate_L(f, mu, trials=500, seed=11)
    b = estimate_L(half, mu, trials=500, seed=11)
    assert b.mean == 0.5 * a.mean

    sp = NormedSpace.linf(3)
    g = center_and_normalize(StepFunctions(sp, rng.standard_normal((4, 4, 3))), mu)
    gh = StepFunctions(sp, g.table * 0.5, centered=True)
    a = estimate_L(g, mu, trials=300, seed=2)
    b = estimate_L(gh, mu, trials=300, seed=2)
    assert b.mean == 0.5 * a.mean


def test_matched_seed_homogeneity_matrices_near_exact():
    rng = np.random.default_rng(4)
    sp = NormedSpace.sym_matrix(3)
    mu = np.full(5, 0.2)
    raw = sp.random_elements(rng, 4 * 5).reshape(4, 5, 3, 3)
    f = center_and_normalize(StepFunctions(sp, raw), mu)
    half = StepFunctions(sp, f.table * 0.5, centered=True)
    a = estimate_L(f, mu, trials=200, seed=5)
    b = estimate_L(half, mu, trials=200, seed=5)
    assert abs(b.mean - 0.5 * a.mean) <= 1e-12 * a.mean


def test_stderr_shrinks_like_root_trials():
    rng = np.random.default_rng(9)
    mu = np.full(6, 1.0 / 6.0)
    f = scalar_family(rng.uniform(-1, 1, (3, 6)), mu=mu)
    small = estimate_L(f, mu, trials=1000, seed=21)
    big = estimate_L(f, mu, trials=4000, seed=21)
    ratio = small.stderr / big.stderr
    assert 1.5 <= ratio <= 2.5   # ideal ratio 2


def test_estimate_l_requires_centered():
    f = StepFunctions(SCALAR, np.ones((1, 2, 1)))
    with pytest.raises(ValidationError, match="centered"):
        estimate_L(f, np.array([0.5, 0.5]), trials=10, seed=0)


# ----------------------------------------------------------------------
# estimate_chain_sum
# ----------------------------------------------------------------------

def test_identity_chain_sum_matches_enumeration():
    # identity chain freezes the trajectory: value = ||n f(Y_1)||,
    # so the mean is exactly enumerable over the N start states
    mu = np.array([0.3, 0.3, 0.4])
    kernel = identity_kernel(3, mu)
    x = np.array([0.5, -0.2, -0.225])       # mu-mean zero
    n = 7
    f = StepFunctions(SCALAR, np.tile(x[None, :, None], (n, 1, 1)), centered=True)
    oracle = float(np.sum(mu * np.abs(n * x)))
    est, _ = estimate_chain_sum(f, kernel, trials=40_000, seed=3)
    assert abs(est.mean - oracle) <= 3 * est.stderr
    assert est.stderr <= 0.02 * oracle


def test_single_step_chain_sum_enumeration():
    mu = np.array([0.25, 0.25, 0.5])
    kernel = averaging_kernel(mu)
    x = np.array([1.0, -0.6, -0.2])          # mu-mean zero
    f = StepFunctions(SCALAR, x[None, :, None], centered=True)
    oracle = float(np.sum(mu * np.abs(x)))
    est, _ = estimate_chain_sum(f, kernel, trials=60_000, seed=5)
    assert abs(est.mean - oracle) <= 3 * est.stderr


def test_iid_chain_clt_half_normal_limit():
    # A = 1 mu^*: steps are i.i.d., so mean/sqrt(n) -> sigma sqrt(2/pi)
    mu = np.full(4, 0.25)
    kernel = averaging_kernel(mu)
    rng = np.random.default_rng(8)
    n = 4096
    x = rng.uniform(-1, 1, 4)
    x -= np.sum(mu * x)
    f = StepFunctions(SCALAR, np.tile(x[None, :, None], (n, 1, 1)), centered=True)
    sigma = math.sqrt(float(np.sum(mu * x ** 2)))
    limit = sigma * math.sqrt(2.0 / math.pi)
    est, _ = estimate_chain_sum(f, kernel, trials=4000, seed=13)
    assert abs(est.mean / math.sqrt(n) - limit) <= 0.05 * limit


def test_chain_sum_matched_seed_homogeneity():
    kernel = build_chain(ChainSpec.cycle(5, 0.5))
    rng = np.random.default_rng(12)
    f = scalar_family(rng.uniform(-1, 1, (6, 5)), mu=kernel.mu)
    half = StepFunctions(SCALAR, f.table * 0.5, centered=True)
    a = chain_sum_samples(f, kernel, trials=400, seed=31)
    b = chain_sum_samples(half, kernel, trials=400, seed=31)
    assert np.array_equal(b, 0.5 * a)


def test_chain_sum_determinism_and_mismatch():
    kernel = build_chain(ChainSpec.cycle(4, 0.5))
    rng = np.random.default_rng(13)
    f = scalar_family(rng.uniform(-1, 1, (3, 4)), mu=kernel.mu)
    a = chain_sum_samples(f, kernel, trials=100, seed=1)
    b = chain_sum_samples(f, kernel, trials=100, seed=1)
    assert np.array_equal(a, b)
    other = scalar_family(rng.uniform(-1, 1, (3, 5)))
    with pytest.raises(ValidationError, match="states"):
        chain_sum_samples(other, kernel, trials=10, seed=1)


def test_tail_curve_shape_and_monotonicity():
    kernel = build_chain(ChainSpec.cycle(6, 0.5))
    rng = np.random.default_rng(14)
    f = scalar_family(rng.uniform(-1, 1, (50, 6)), mu=kernel.mu)
    est, tail = estimate_chain_sum(f, kernel, trials=500, seed=2)
    assert len(tail.thresholds) == 32
    assert np.all(np.diff(tail.thresholds) > 0)
    assert np.all(np.diff(tail.probabilities) <= 1e-12)
    assert tail.thresholds[0] == pytest.approx(0.1 * est.mean)
    assert tail.thresholds[-1] == pytest.approx(10.0 * est.mean)


def test_tail_curve_validation():
    with pytest.raises(ValidationError):
        TailCurve(np.array([1.0, 0.5]), np.array([0.5, 0.5]), 10)
    with pytest.raises(ValidationError):
        TailCurve(np.array([0.5, 1.0]), np.array([0.2, 0.5]), 10)


def test_default_threshold_grid_degenerate_mean():
    grid = default_threshold_grid(0.0, count=8)
    assert len(grid) == 8
    assert np.all(np.diff(grid) > 0)


def test_empirical_tail_below_paulin_bound_small_case():
    # scaled-down version of the full acceptance run
    kernel = build_chain(ChainSpec.cycle(8, 0.5))
    rng = np.random.default_rng(15)
    f = scalar_family(rng.uniform(-1, 1, (500, 8)), mu=kernel.mu)
    sigma2, _ = variance_statistics(f, kernel.mu)
    est, tail = estimate_chain_sum(f, kernel, trials=2000, seed=77)
    for u, p in zip(tail.thresholds, tail.probabilities):
        bound = paulin_tail(float(u), sigma2, f.max_norm, kernel.lam).value
        se = math.sqrt(max(float(p) * (1 - float(p)), 0.0) / tail.trials)
        assert float(p) <= bound + 3 * se


# ----------------------------------------------------------------------
# variance_statistics
# ----------------------------------------------------------------------

def test_variance_statistics_zero_family():
    sp = NormedSpace.sym_matrix(2)
    f = StepFunctions(sp, np.zeros((2, 3, 2, 2)), centered=True)
    sigma2, vnorm = variance_statistics(f, np.full(3, 1.0 / 3.0))
    assert sigma2 == 0.0
    assert vnorm == 0.0


def test_variance_statistics_rademacher_diagonal():
    # f(v) = diag(+-1): f^2 = I, so both statistics equal 1
    sp = NormedSpace.sym_matrix(2)
    table = np.array([[np.diag([1.0, -1.0]), np.diag([-1.0, 1.0])]])
    f = StepFunctions(sp, table, centered=True)
    sigma2, vnorm = variance_statistics(f, np.array([0.5, 0.5]))
    assert sigma2 == 1.0
    assert vnorm == 1.0


def test_variance_statistics_scalar_enumeration():
    mu = np.full(3, 1.0 / 3.0)
    f = scalar_family(np.array([[-1.0, 0.0, 1.0]]), centered=True, mu=mu)
    sigma2, vnorm = variance_statistics(f, mu)
    assert abs(sigma2 - 2.0 / 3.0) <= 1e-15
    assert vnorm is None


def test_variance_statistics_matrix_form_on_vectors_rejected():
    f = scalar_family(np.array([[-1.0, 1.0]]), centered=True)
    with pytest.raises(ValidationError, match="vector space"):
        variance_statistics(f, np.array([0.5, 0.5]), matrix_form=True)
