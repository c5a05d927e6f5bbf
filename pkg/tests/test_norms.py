import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import random_parametric_system, random_stable_lti
from hinfmin.errors import MaxIterExceeded
from hinfmin.model import DescriptorLTI
from hinfmin.norms import (LevelSetOptions, build_level_set_pencil, imaginary_eigenvalues,
                           linf_norm_dense, linf_norm_large, linf_norm_sweep)
from hinfmin.problems import SyntheticSpec, synthetic_build, synthetic_oracle_transfer

ONE_POLE = DescriptorLTI(np.ones((1, 1)), -np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)))


def test_one_pole_pencil_crossings():
    M, N = build_level_set_pencil(ONE_POLE, 1 / np.sqrt(2))
    assert np.allclose(imaginary_eigenvalues(M, N), [-1.0, 1.0], atol=1e-8)


def test_level_set_empty_above_norm():
    M, N = build_level_set_pencil(ONE_POLE, 1.5)
    assert imaginary_eigenvalues(M, N) == []


def test_gamma_must_be_positive():
    with pytest.raises(ValueError):
        build_level_set_pencil(ONE_POLE, 0.0)


def test_crossings_match_bisection_on_sweep(rng):
    lti = random_stable_lti(rng, 6)
    peak, _ = linf_norm_sweep(lti)
    gamma = 0.9 * peak
    M, N = build_level_set_pencil(lti, gamma)
    ws = imaginary_eigenvalues(M, N)
    grid = np.linspace(-60, 60, 200001)
    f = lti.sigma(grid) - gamma
    roots = [brentq(lambda w: lti.sigma([w])[0] - gamma, grid[i], grid[i + 1], xtol=1e-13)
             for i in np.nonzero(np.sign(f[:-1]) != np.sign(f[1:]))[0]]
    assert len(ws) == len(roots)
    assert np.allclose(ws, roots, atol=1e-8)


def test_imaginary_eigenvalues_against_dense_reference(rng):
    k = 8
    M = rng.standard_normal((k, k))
    M = M - M.T  # skew: purely imaginary spectrum
    N = np.eye(k)
    ref = np.sort(np.linalg.eigvals(M).imag)
    assert np.allclose(imaginary_eigenvalues(M, N), ref, atol=1e-10)


def test_no_imaginary_eigenvalues():
    assert imaginary_eigenvalues(-np.eye(3), np.eye(3)) == []


def test_one_pole_norm():
    r = linf_norm_dense(ONE_POLE)
    assert r.gamma == pytest.approx(1.0, abs=1e-12) and r.omega_star == 0.0
    assert not r.attained_at_infinity


def test_gamma_sequence_is_monotone(rng):
    for _ in range(5):
        r = linf_norm_dense(random_stable_lti(rng, 12, 2, 2))
        assert all(b >= a for a, b in zip(r.gammas, r.gammas[1:]))


def test_reported_gamma_is_sigma_at_omega_star(rng):
    lti = random_stable_lti(rng, 10, 2, 3)
    r = linf_norm_dense(lti)
    assert lti.sigma([r.omega_star])[0] == pytest.approx(r.gamma, rel=1e-12)


def test_synthetic_100_at_one():
    r = linf_norm_dense(synthetic_build(100).at([1.0]), LevelSetOptions(omega_max=2000))
    assert round(r.gamma, 6) == 0.317092
    assert r.gamma == pytest.approx(0.31709217127, rel=1e-10)


def test_dense_agrees_with_sweep_random(rng):
    for _ in range(10):
        k = int(rng.integers(2, 21))
        lti = random_stable_lti(rng, k, int(rng.integers(1, 3)), int(rng.integers(1, 3)),
                                descriptor=bool(rng.integers(2)))
        sweep, _ = linf_norm_sweep(lti)
        r = linf_norm_dense(lti)
        assert r.gamma >= sweep * (1 - 1e-9)
        assert abs(r.gamma - sweep) <= 1e-6 * sweep


def test_nonproper_feedthrough_at_infinity():
    # singular E: H(s) = 1 + 1/(s+1) tends to 1; the reduced-model case the cap handles
    E = np.diag([1.0, 0.0])
    A = np.diag([-1.0, -1.0])
    lti = DescriptorLTI(E, A, np.ones((2, 1)), np.ones((1, 2)))
    r = linf_norm_dense(lti)
    assert r.gamma == pytest.approx(2.0, rel=1e-10)
    # high-pass: |s/(s+1)| increases to 1 at infinity
    lti2 = DescriptorLTI(np.eye(1), -np.eye(1), np.ones((1, 1)), -np.ones((1, 1)))
    lti2.C = -np.ones((1, 1))
    hp = DescriptorLTI(np.diag([1.0, 0.0]), np.diag([-1.0, -1.0]), np.array([[1.0], [1.0]]),
                       np.array([[-1.0, 1.0]]))
    r2 = linf_norm_dense(hp)
    assert r2.attained_at_infinity and r2.gamma == pytest.approx(1.0, rel=1e-6)


def test_max_iter_exceeded():
    lti = random_stable_lti(np.random.default_rng(5), 10, 2, 2)
    with pytest.raises(MaxIterExceeded):
        linf_norm_dense(lti, LevelSetOptions(max_iter=1, rel_tol=1e-16))


def test_options_validation():
    with pytest.raises(ValueError):
        LevelSetOptions(rel_tol=0.0)
    assert LevelSetOptions(omega_max=1000).frequencies() == [0.0, 10.0, 100.0, 1000.0]


def test_large_path_self_consistency(rng):
    s = random_parametric_system(rng, n=25, m=2, p=2, d=1)
    mu = [1.0]
    dense = linf_norm_dense(s.at(mu))
    large = linf_norm_large(s, mu, opts=LevelSetOptions(omega_max=20.0))
    assert large.gamma == pytest.approx(dense.gamma, rel=1e-8)


@pytest.mark.parametrize("real", [True, False])
def test_large_path_reference_value_n10000(real):
    s = synthetic_build(10000)
    r = linf_norm_large(s, [0.112964], opts=LevelSetOptions(omega_max=2000.0), real=real)
    assert round(r.gamma, 4) == 20.3321
    assert r.gamma == pytest.approx(20.3321030, rel=1e-7)


def test_large_path_matches_closed_form_sweep():
    s = synthetic_build(2000)
    spec = s.synthetic
    rng = np.random.default_rng(11)
    for mu in rng.uniform(0.02, 1.0, 10):
        r = linf_norm_large(s, [mu], opts=LevelSetOptions(omega_max=2000.0))
        grid = np.linspace(0, 60, 6001)
        vals = np.abs(synthetic_oracle_transfer(spec, mu, grid))
        i = int(np.argmax(vals))
        fine = np.linspace(grid[max(i - 1, 0)], grid[i + 1], 2001)
        ref = np.max(np.abs(synthetic_oracle_transfer(spec, mu, fine)))
        assert r.gamma >= ref * (1 - 1e-9)
        assert r.gamma == pytest.approx(ref, rel=1e-6)


def test_real_system_reports_nonnegative_frequency():
    r = linf_norm_large(synthetic_build(100), [1.0], opts=LevelSetOptions(omega_max=2000.0),
                        real=False)
    assert r.omega_star >= 0


def test_evaluations_increase_basis(rng):
    s = random_parametric_system(rng, n=30, d=1)
    r = linf_norm_large(s, [1.0], opts=LevelSetOptions(omega_max=10.0))
    assert r.pair.k >= len(r.evaluations)
    assert r.gamma == max(r.evaluations.values())
