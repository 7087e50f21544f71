from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifpca.rareweak import (BoundaryError, GRID_HEADER, RareWeakConfig, alpha_star, cell_configs,
                            critical_tau, format_grid_csv, generate_instance, green_tau,
                            hamming_error, lemma1_check, nudge_beta, run_phase_grid, simulate_cell,
                            write_grid)
from ifpca.seeds import derive_seed, real_key


def test_zero_epsilon_gives_empty_support():
    inst = generate_instance(RareWeakConfig(500, 0.6, 0.5, 0.2, epsilon=0.0))
    assert inst.support.size == 0 and not inst.mu.any()


def test_support_size_binomial_mean():
    p, beta = 2000, 0.5
    sizes = [generate_instance(RareWeakConfig(p, 0.3, beta, 0.2, seed=s)).support.size
             for s in range(200)]
    eps = p ** -beta
    se = math.sqrt(p * eps * (1 - eps) / 200)
    assert abs(np.mean(sizes) - p * eps) < 4 * se


def test_sign_balance():
    signs = np.concatenate([np.sign(generate_instance(
        RareWeakConfig(2000, 0.3, 0.3, 0.2, seed=s)).mu) for s in range(30)])
    signs = signs[signs != 0]
    frac = np.mean(signs > 0)
    assert abs(frac - 0.5) < 4 * math.sqrt(0.25 / signs.size)


def test_instance_structure():
    cfg = RareWeakConfig(300, 0.6, 0.4, 0.3, seed=9)
    a, b = generate_instance(cfg), generate_instance(cfg)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.Y, b.Y)
    assert a.X.shape == (round(300 ** 0.6), 300)
    tau = 300 ** -0.3
    assert set(np.abs(a.mu[a.support]).round(12)) <= {round(tau, 12)}
    assert np.array_equal(a.support, np.flatnonzero(a.mu))
    Z = a.X - np.outer(a.Y, a.mu)
    assert abs(Z.mean()) < 0.05 and abs(Z.std() - 1) < 0.05
    assert set(a.labels.tolist()) <= {1, 2}


def test_support_size_override():
    inst = generate_instance(RareWeakConfig(400, 0.6, 0.5, 0.1, support_size=7, tau=1.5))
    assert inst.support.size == 7 and np.all(np.abs(inst.mu[inst.support]) == 1.5)


def test_config_validation():
    with pytest.raises(ValueError):
        RareWeakConfig(100, 1.2, 0.5, 0.2)
    with pytest.raises(ValueError):
        RareWeakConfig(100, 0.5, 0.5, -0.1)
    assert RareWeakConfig(100, 0.1, 0.5, 0.2).n_subjects == 2
    with pytest.raises(ValueError):
        RareWeakConfig(3, 0.1, 0.5, 0.2)  # round(3^0.1) = 1


def test_critical_tau_examples():
    assert round(critical_tau(1e4, 0.6, 0.6), 4) == 0.2512
    assert round(critical_tau(1e4, 0.6, 0.8), 4) == 0.3981


def test_alpha_star_examples():
    assert alpha_star(0.3, 0.6) == pytest.approx(0.25, abs=1e-15)
    assert alpha_star(0.6, 0.6) == pytest.approx(0.15, abs=1e-15)
    assert alpha_star(0.8, 0.6) == pytest.approx(0.10, abs=1e-15)


def test_boundaries_rejected():
    for fn in (lambda: critical_tau(1e4, 0.6, 0.5), lambda: alpha_star(0.7, 0.6),
               lambda: alpha_star(0.5, 0.2)):
        with pytest.raises(BoundaryError):
            fn()


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.02, 0.98))
def test_alpha_star_matches_critical_tau(theta, beta):
    if min(abs(beta - 0.5), abs(beta - (1 - theta / 2))) < 1e-6:
        return
    p = 1e6
    log_tau = math.log(critical_tau(p, theta, beta))
    assert abs(log_tau / math.log(p) + alpha_star(beta, theta)) < 1e-12


def test_alpha_star_continuous_across_boundaries():
    theta = 0.6
    for b in (0.5, 1 - theta / 2):
        assert abs(alpha_star(b - 1e-9, theta) - alpha_star(b + 1e-9, theta)) < 1e-8


def test_hamming_examples():
    y = np.array([1, 1, -1, -1])
    assert hamming_error(y, y) == 0.0
    assert hamming_error(-y, y) == 0.0
    assert hamming_error(np.array([1, -1, -1, -1]), y) == 0.25


def test_hamming_rejects_bad_input():
    with pytest.raises(ValueError):
        hamming_error([1, 0], [1, 1])
    with pytest.raises(ValueError):
        hamming_error([1, -1], [1])


pm_pairs = st.lists(st.tuples(st.sampled_from([-1, 1]), st.sampled_from([-1, 1])),
                    min_size=1, max_size=50)


@settings(max_examples=150, deadline=None)
@given(pm_pairs)
def test_hamming_symmetric_flip_invariant_bounded(pairs):
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    h = hamming_error(a, b)
    assert h == hamming_error(b, a) == hamming_error(-a, -b) == hamming_error(-a, b)
    assert 0 <= h <= 0.5


def test_derived_seeds_distinct():
    betas = np.round(np.arange(0.2, 0.9, 0.1), 10)
    alphas = np.round(np.arange(0.05, 0.45, 0.05), 10)
    seeds = [derive_seed(1, real_key(b), real_key(a), r)
             for b in betas for a in alphas for r in range(50)]
    assert len(set(seeds)) == len(seeds)


def test_real_key_absorbs_float_noise():
    assert real_key(0.1 + 0.2) == real_key(0.3)
    assert real_key(0.3) != real_key(0.300002)


def test_cell_configs_follow_derive_seed():
    cfgs = cell_configs(500, 0.6, 0.4, 0.2, 3, base_seed=5)
    assert [c.seed for c in cfgs] == [derive_seed(5, real_key(0.4), real_key(0.2), r)
                                      for r in range(3)]


def test_nudge():
    assert nudge_beta(0.5, 0.6) == 0.5 + 1e-6
    assert nudge_beta(0.7, 0.6) == pytest.approx(0.7 + 1e-6)
    assert nudge_beta(0.4, 0.6) == 0.4


def test_grid_skips_boundary_cells():
    cells = run_phase_grid(300, 0.6, [0.5], [0.3], ["simplified_pca"], reps=2)
    assert cells[0].beta == 0.5 + 1e-6


def test_grid_arity_order_and_outputs(tmp_path):
    cells = run_phase_grid(300, 0.6, [0.3, 0.6], [0.1, 0.3, 0.2],
                           ["simplified_ifpca", "simplified_pca"], reps=3, base_seed=2)
    assert len(cells) == 2 * 3 * 2
    keys = [(c.beta, c.alpha, c.method) for c in cells]
    assert keys == sorted(keys)
    for c in cells:
        assert c.reps == 3 and 0 <= c.hamming_mean <= 0.5 and len(c.hammings) == 3
        assert (c.select_exact_rate is None) == (c.method == "simplified_pca")
    out = tmp_path / "grid.csv"
    jpath = write_grid(cells, out, 300, 0.6, 2)
    rows = list(csv.reader(out.open()))
    assert tuple(rows[0]) == GRID_HEADER and len(rows) == 13
    meta = json.loads(open(jpath).read())
    assert meta["p"] == 300 and meta["theta"] == 0.6 and meta["base_seed"] == 2
    assert "software_version" in meta and meta["schema_version"] == 1


def test_grid_deterministic_and_jobs_independent():
    args = (300, 0.6, [0.3], [0.1, 0.25], ["simplified_pca", "simplified_ifpca"], 4)
    a = format_grid_csv(run_phase_grid(*args, base_seed=1))
    b = format_grid_csv(run_phase_grid(*args, base_seed=1, jobs=2))
    assert a == b
    assert a != format_grid_csv(run_phase_grid(*args, base_seed=2))


def test_grid_rejects_unknown_method():
    with pytest.raises(ValueError):
        run_phase_grid(300, 0.6, [0.3], [0.1], ["kmeans"], reps=1)


def test_cell_matches_grid():
    cell = simulate_cell(300, 0.6, 0.3, 0.1, ["simplified_pca"], reps=3, base_seed=4)[0]
    grid = run_phase_grid(300, 0.6, [0.3], [0.1], ["simplified_pca"], reps=3, base_seed=4)[0]
    assert cell.hammings == grid.hammings


def test_no_selection_scored_as_half():
    # tau = 0 leaves nothing above the threshold on most reps
    cell = simulate_cell(500, 0.6, 0.5, 0.1, ["simplified_ifpca"], reps=10, tau=0.0,
                         support_size=0)[0]
    assert cell.no_selection >= 1
    assert cell.hamming_mean <= 0.5


@pytest.mark.slow
def test_phase_column_monotone_in_alpha():
    # dense column beta = 0.3 at p = 2000: mean Hamming should not drop as alpha grows
    alphas = [0.05, 0.15, 0.25, 0.35, 0.45]
    cells = run_phase_grid(2000, 0.6, [0.3], alphas, ["simplified_pca"], reps=20, base_seed=0)
    h = [c.hamming_mean for c in sorted(cells, key=lambda c: c.alpha)]
    inversions = sum(h[i + 1] < h[i] - 1e-12 for i in range(len(h) - 1))
    assert inversions <= 1, h
    assert h[0] < 0.1 and h[-1] > 0.35


def test_strong_signal_if_step_recovers_support():
    p = 2000
    n = round(p ** 0.6)
    cell = simulate_cell(p, 0.6, 0.5, 0.1, ["simplified_ifpca"], reps=10,
                         support_size=10, tau=green_tau(p, n, 4.0))[0]
    assert cell.hamming_mean < 0.05


def test_green_tau_definition():
    t = green_tau(5000, 166)
    assert abs(math.sqrt(83) * t * t - 2 * math.sqrt(2 * math.log(5000))) < 1e-12


def test_lemma1_noiseless():
    r = lemma1_check(50, 120, mu_norm_sq=4.0, reps=3, noise_scale=0.0)
    assert r.max < 1e-12


def test_lemma1_argument_check():
    with pytest.raises(ValueError):
        lemma1_check(10, 10, reps=1)
    with pytest.raises(ValueError):
        lemma1_check(10, 10, mu_norm_sq=1.0, ratio=2.0, reps=1)


def test_lemma1_small_trend():
    med = [lemma1_check(100, 300, ratio=r, reps=10, seed=1).median for r in (5, 20, 80)]
    assert med[0] > med[1] > med[2]
