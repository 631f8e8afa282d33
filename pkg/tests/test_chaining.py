import json
import math

import numpy as np
import pytest

from chainlab import (AdmissibleSequence, NormedSpace, StepFunctions,
                      ValidationError, WitnessProcess, build_chain,
                      build_witness_process, center_and_normalize, ChainSpec,
                      estimate_L, gamma1_analytic, gamma_upper, gaussian_sup_mc,
                      greedy_admissible_sequence, linf_two_stage_sequence,
                      load_witness_process, metric, sample_trajectory,
                      save_witness_process)
from conftest import random_reversible_kernel


def linf_family(k, n, n_states, seed, mu=None):
    sp = NormedSpace.linf(k)
    rng = np.random.default_rng(seed)
    raw = StepFunctions(sp, rng.standard_normal((n, n_states, k)))
    if mu is None:
        mu = np.full(n_states, 1.0 / n_states)
    return center_and_normalize(raw, mu), np.asarray(mu)


def two_point_process(t1):
    """{0, t1}: useful for closed-form greedy checks (not symmetric)."""
    t1 = np.asarray(t1, dtype=float)
    return WitnessProcess(np.stack([np.zeros_like(t1), t1]), "manual")


# ----------------------------------------------------------------------
# witness construction
# ----------------------------------------------------------------------

def test_linf_exact_has_2k_plus_1_points():
    for k in (1, 3, 8):
        f, mu = linf_family(k, 4, 5, seed=k)
        T = build_witness_process(f, "linf_exact")
        assert T.count == 2 * k + 1
        T.validate(mu=mu)


def test_zero_family_gives_zero_witnesses():
    sp = NormedSpace.linf(2)
    f = StepFunctions(sp, np.zeros((3, 4, 2)), centered=True)
    T = build_witness_process(f, "linf_exact")
    assert np.max(np.abs(T.points)) == 0.0


def test_linf_exact_sup_reproduces_norm():
    f, mu = linf_family(5, 6, 9, seed=2)
    kernel = random_reversible_kernel(9, seed=4)
    f, mu = linf_family(5, 6, 9, seed=2, mu=kernel.mu)
    T = build_witness_process(f, "linf_exact")
    for seed in range(20):
        traj = sample_trajectory(kernel, 6, seed=seed)
        total = f.table[np.arange(6), traj].sum(axis=0)
        assert abs(T.sup_pairing(traj) - float(np.max(np.abs(total)))) <= 1e-12


def test_linf_exact_requires_linf_space():
    sp = NormedSpace.lp(2, 3)
    f = StepFunctions(sp, np.zeros((1, 2, 3)), centered=True)
    with pytest.raises(ValidationError, match="l_inf"):
        build_witness_process(f, "linf_exact")


def test_dual_sample_structure_and_centering():
    kernel = random_reversible_kernel(7, seed=9)
    sp = NormedSpace.lp(3, 4)
    rng = np.random.default_rng(10)
    f = center_and_normalize(StepFunctions(sp, rng.standard_normal((5, 7, 4))), kernel.mu)
    T = build_witness_process(f, "dual_sample", count=6, seed=1)
    assert T.count == 13
    assert T.zero_index == 0
    T.validate(mu=kernel.mu)
    # dual witnesses are unit vectors of l_q with q = p/(p-1)
    q = sp.dual_exponent
    norms = np.linalg.norm(T.meta["duals"][1:], ord=q, axis=1)
    assert np.max(np.abs(norms - 1.0)) <= 1e-12


def test_dual_sample_lipschitz_in_dual_norm():
    # ||t_{x1} - t_{x2}||_inf <= ||x1 - x2||_q, since ||f_i(v)|| <= 1
    kernel = random_reversible_kernel(6, seed=12)
    sp = NormedSpace.lp(3, 5)
    rng = np.random.default_rng(11)
    f = center_and_normalize(StepFunctions(sp, rng.standard_normal((4, 6, 5))), kernel.mu)
    T = build_witness_process(f, "dual_sample", count=12, seed=3)
    duals = T.meta["duals"]
    for a in range(0, T.count, 3):
        for b in range(T.count):
            lhs = float(np.max(np.abs(T.points[a] - T.points[b])))
            rhs = sp.dual_norm(duals[a] - duals[b])
            assert lhs <= rhs + 1e-12


def test_matrix_pairs_structure_and_lipschitz():
    kernel = random_reversible_kernel(5, seed=13)
    sp = NormedSpace.sym_matrix(3)
    rng = np.random.default_rng(12)
    raw = sp.random_elements(rng, 4 * 5).reshape(4, 5, 3, 3)
    f = center_and_normalize(StepFunctions(sp, raw), kernel.mu)
    T = build_witness_process(f, "matrix_pairs", count=10, seed=5)
    assert T.count == 21
    T.validate(mu=kernel.mu)
    x, y = T.meta["x"], T.meta["y"]
    # ||t_{x,y} - t_{x',y'}||_inf <= ||x - x'||_2 + ||y - y'||_2
    for a in range(1, T.count, 4):
        for b in range(1, T.count, 3):
            lhs = float(np.max(np.abs(T.points[a] - T.points[b])))
            rhs = float(np.linalg.norm(x[a] - x[b]) + np.linalg.norm(y[a] - y[b]))
            assert lhs <= rhs + 1e-12


def test_matrix_pairs_requires_matrix_space():
    sp = NormedSpace.lp(2, 3)
    f = StepFunctions(sp, np.zeros((1, 2, 3)), centered=True)
    with pytest.raises(ValidationError, match="sym_matrix"):
        build_witness_process(f, "matrix_pairs", count=2, seed=0)
    spm = NormedSpace.sym_matrix(2)
    g = StepFunctions(spm, np.zeros((1, 2, 2, 2)), centered=True)
    with pytest.raises(ValidationError, match="matrix_pairs"):
        build_witness_process(g, "dual_sample", count=2, seed=0)


def test_witness_process_requires_zero():
    with pytest.raises(ValidationError, match="zero"):
        WitnessProcess(np.ones((2, 2, 2)), "manual")


# ----------------------------------------------------------------------
# metrics
# ----------------------------------------------------------------------

def test_metric_identity():
    s = np.arange(6.0).reshape(2, 3)
    mu = np.full(3, 1.0 / 3.0)
    for which in ("d1", "d2", "linf", "l2"):
        assert metric(s, s, which, lam=0.2, mu=mu) == 0.0


def test_metric_explicit_values():
    # |s - t| = 1 everywhere, uniform mu, lam = 0:
    # d1 = 40, d2 = sqrt(16 n) = 4 sqrt(n)
    for n in (1, 4, 9):
        s = np.ones((n, 5))
        t = np.zeros((n, 5))
        mu = np.full(5, 0.2)
        assert metric(s, t, "d1", lam=0.0, mu=mu) == 40.0
        assert abs(metric(s, t, "d2", lam=0.0, mu=mu) - 4.0 * math.sqrt(n)) <= 1e-12


def test_metric_gap_scaling():
    rng = np.random.default_rng(3)
    s, t = rng.standard_normal((2, 3, 4))
    mu = np.full(4, 0.25)
    # halving (1 - lam) doubles d1 and scales d2 by sqrt(2)
    d1a = metric(s, t, "d1", lam=0.0, mu=mu)
    d1b = metric(s, t, "d1", lam=0.5, mu=mu)
    assert abs(d1b - 2.0 * d1a) <= 1e-12 * max(1.0, d1a)
    d2a = metric(s, t, "d2", lam=0.0, mu=mu)
    d2b = metric(s, t, "d2", lam=0.5, mu=mu)
    assert abs(d2b - math.sqrt(2.0) * d2a) <= 1e-12 * max(1.0, d2a)


def test_metric_axioms_on_random_triples(rng):
    mu = rng.random(5) + 0.1
    mu /= mu.sum()
    for which in ("d1", "d2"):
        for _ in range(200):
            a, b, c = rng.standard_normal((3, 2, 5))
            dab = metric(a, b, which, lam=0.3, mu=mu)
            dba = metric(b, a, which, lam=0.3, mu=mu)
            dac = metric(a, c, which, lam=0.3, mu=mu)
            dcb = metric(c, b, which, lam=0.3, mu=mu)
            assert abs(dab - dba) <= 1e-10
            assert dab <= dac + dcb + 1e-10


def test_metric_rejects_vacuous_lambda():
    s = np.zeros((1, 2))
    with pytest.raises(ValidationError):
        metric(s, s, "d1", lam=1.0)


# ----------------------------------------------------------------------
# admissible sequences
# ----------------------------------------------------------------------

def test_singleton_process_sequence():
    T = WitnessProcess(np.zeros((1, 2, 3)), "manual")
    seq = greedy_admissible_sequence(T, which="linf", depth=3)
    assert all(level == (0,) for level in seq.levels)
    assert gamma_upper(T, seq, alpha=2, which="linf") == 0.0


def test_two_point_gamma_is_single_distance():
    t1 = np.full((2, 4), 0.5)
    T = two_point_process(t1)
    mu = np.full(4, 0.25)
    seq = greedy_admissible_sequence(T, which="l2", depth=4, mu=mu)
    assert seq.levels[0] == (0,)
    assert set(seq.levels[1]) == {0, 1}
    expected = metric(t1, np.zeros_like(t1), "l2", mu=mu)
    assert abs(gamma_upper(T, seq, alpha=2, which="l2", mu=mu) - expected) <= 1e-12


def test_greedy_deterministic_and_tie_broken_by_index():
    # four points all at pairwise-equal distances from zero: +-e_1, +-e_2
    pts = np.zeros((5, 1, 4))
    pts[1, 0, 0] = 1.0
    pts[2, 0, 0] = -1.0
    pts[3, 0, 1] = 1.0
    pts[4, 0, 1] = -1.0
    T = WitnessProcess(pts, "manual")
    a = greedy_admissible_sequence(T, which="linf", depth=2)
    b = greedy_admissible_sequence(T, which="linf", depth=2)
    assert a == b
    # first insertion after zero must be the lowest-index farthest point
    assert a.levels[1][1] == 1


def test_sequence_invariants_enforced():
    with pytest.raises(ValidationError, match="singleton"):
        AdmissibleSequence(levels=((0, 1), (0, 1)), depth=1)
    with pytest.raises(ValidationError, match="contain"):
        AdmissibleSequence(levels=((0,), (1, 2)), depth=1)
    with pytest.raises(ValidationError, match="cap"):
        AdmissibleSequence(levels=((0,), tuple(range(5))), depth=1)


def test_greedy_respects_caps_on_larger_sets(rng):
    f, mu = linf_family(20, 3, 6, seed=21)
    T = build_witness_process(f, "linf_exact")   # 41 points
    seq = greedy_admissible_sequence(T, which="l2", depth=3, mu=mu)
    assert len(seq.levels[0]) == 1
    assert len(seq.levels[1]) <= 4
    assert len(seq.levels[2]) <= 16
    assert len(seq.levels[3]) <= 41
    for small, large in zip(seq.levels, seq.levels[1:]):
        assert set(small) <= set(large)


def test_gamma_monotone_when_level_grows():
    f, mu = linf_family(6, 2, 5, seed=22)
    T = build_witness_process(f, "linf_exact")
    greedy = greedy_admissible_sequence(T, which="l2", depth=2, mu=mu)
    # shrink level 1 to its first two points, then compare
    small = AdmissibleSequence(levels=(greedy.levels[0], greedy.levels[1][:2],
                                       greedy.levels[2]), depth=2)
    v_small = gamma_upper(T, small, alpha=2, which="l2", mu=mu)
    v_big = gamma_upper(T, greedy, alpha=2, which="l2", mu=mu)
    assert v_big <= v_small + 1e-12


def test_two_stage_sequence_matches_analytic_budget():
    for k in (1, 2, 5, 16):
        f, mu = linf_family(k, 3, 4, seed=k + 30)
        T = build_witness_process(f, "linf_exact")
        seq = linf_two_stage_sequence(T)
        g1 = gamma_upper(T, seq, alpha=1, which="linf", mu=mu)
        assert g1 <= gamma1_analytic("linf", k) + 1e-9


def test_sequence_json_round_trip():
    seq = AdmissibleSequence(levels=((0,), (0, 2, 1)), depth=1)
    data = json.loads(json.dumps(seq.to_json_dict()))
    back = AdmissibleSequence.from_json_dict(data)
    assert back == seq


# ----------------------------------------------------------------------
# gaussian supremum
# ----------------------------------------------------------------------

def test_sup_of_zero_set_is_zero():
    T = WitnessProcess(np.zeros((1, 2, 3)), "manual")
    est = gaussian_sup_mc(T, np.full(3, 1.0 / 3.0), trials=100, seed=1)
    assert est.mean == 0.0


def test_sup_of_symmetric_pair_is_half_normal():
    rng = np.random.default_rng(40)
    t1 = rng.standard_normal((3, 4))
    mu = np.array([0.1, 0.2, 0.3, 0.4])
    pts = np.stack([np.zeros_like(t1), t1, -t1])
    T = WitnessProcess(pts, "manual")
    sigma = math.sqrt(float(np.einsum("iv,iv,v->", t1, t1, mu)))
    oracle = sigma * math.sqrt(2.0 / math.pi)
    est = gaussian_sup_mc(T, mu, trials=60_000, seed=41)
    assert abs(est.mean - oracle) <= 3 * est.stderr


def test_estimate_l_equals_sup_over_exact_witnesses():
    # with the exact l_inf witness set the two estimators see the same
    # Gaussian field, so matched seeds agree draw for draw
    kernel = random_reversible_kernel(8, seed=42)
    f, mu = linf_family(6, 5, 8, seed=43, mu=kernel.mu)
    T = build_witness_process(f, "linf_exact")
    a = estimate_L(f, mu, trials=500, seed=44)
    b = gaussian_sup_mc(T, mu, trials=500, seed=44)
    assert abs(a.mean - b.mean) <= 1e-12
    assert abs(a.stderr - b.stderr) <= 1e-12


def test_gamma2_vs_gaussian_sup_window():
    f, mu = linf_family(4, 4, 8, seed=45)
    T = build_witness_process(f, "linf_exact")
    seq = greedy_admissible_sequence(T, which="l2", depth=5, mu=mu)
    g2 = gamma_upper(T, seq, alpha=2, which="l2", mu=mu)
    es = gaussian_sup_mc(T, mu, trials=6000, seed=46)
    assert 1.0 <= g2 / es.mean <= 200.0


# ----------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------

def test_witness_file_round_trip(tmp_path):
    f, mu = linf_family(3, 2, 4, seed=50)
    T = build_witness_process(f, "linf_exact")
    path = tmp_path / "witness.txt"
    save_witness_process(path, T)
    back = load_witness_process(path)
    assert back.origin_kind == "linf_exact"
    assert np.array_equal(back.points, T.points)
    assert back.is_symmetric()


def test_witness_file_rejects_missing_tag(tmp_path):
    path = tmp_path / "witness.txt"
    path.write_text("1 1 2\n0.0 0.0\n")
    with pytest.raises(ValidationError, match="tag"):
        load_witness_process(path)


def test_two_point_witness_file(tmp_path):
    # an asymmetric two-point file still loads (symmetry is a separate check)
    path = tmp_path / "two.txt"
    path.write_text("witness manual\n2 1 2\n0.0 0.0\n0.6 -0.8\n")
    T = load_witness_process(path)
    assert T.count == 2
    assert not T.is_symmetric()
    with pytest.raises(ValidationError, match="negation"):
        T.validate()
