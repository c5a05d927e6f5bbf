import numpy as np
import pytest

from conftest import random_parametric_system, siso_one_pole
from hinfmin.driver import (IterationRecord, TerminationCriteria, convergence_diagnostics,
                            extra_directions, hinf_minimize, hinf_minimize_basic,
                            hinf_minimize_extended, initialization_points, initialize_subspaces,
                            termination_check, verify_interpolation)
from hinfmin.model import ParameterBox, eval_transfer
from hinfmin.projection import SubspacePair, project
from hinfmin.problems import SYNTHETIC_REFERENCE, synthetic_build


def test_initialization_points_synthetic_box():
    pts = initialization_points(ParameterBox([0.02], [1.0]), 1000.0)
    assert len(pts) == 10
    for j, (mu, w) in enumerate(pts):
        assert mu[0] == pytest.approx(0.02 + 0.098 * j)
        assert w == pytest.approx(100.0 * j)
    assert pts[0][1] == 0.0 and pts[-1][0][0] < 1.0


def test_initialization_points_validation():
    with pytest.raises(ValueError):
        initialization_points(ParameterBox([0], [1]), 0.0)
    with pytest.raises(ValueError):
        initialization_points(ParameterBox([0], [1]), 1.0, 0)


def test_initialize_subspaces_interpolates_every_point(rng):
    s = random_parametric_system(rng, n=40, m=1, p=2)
    points = []
    pair = initialize_subspaces(s, omega_max=10.0, num_points=5, points_out=points)
    assert len(points) == 5
    red = project(s, pair)
    for pt in points:
        H, Hr = eval_transfer(s, pt.mu, pt.omega), eval_transfer(red, pt.mu, pt.omega)
        assert np.linalg.norm(H - Hr) <= 1e-8 * (1 + np.linalg.norm(H))


def test_synthetic_initial_dimension_real_and_complex():
    s = synthetic_build(100)
    # real bases split each complex direction; omega = 0 contributes one column
    assert initialize_subspaces(s, omega_max=2000.0).k == 19
    assert initialize_subspaces(s, omega_max=2000.0, real=False).k == 10


def _hist(mus):
    return [np.atleast_1d(m) for m in mus]


def test_termination_examples():
    c = TerminationCriteria(eps1=1e-6, eps2=1e-6, k_max=20)
    assert termination_check([], c) is None
    assert termination_check(_hist([1.0]), c) is None
    assert termination_check(_hist([1.0, 1.0 + 1e-9]), c) == "mu_stagnation"
    assert termination_check(_hist([1.0, 0.5]), c) is None
    assert termination_check(_hist([1.0, 0.5]), c, reduced_norms=[2.0, 2.0 + 1e-8]) == \
        "norm_stagnation"
    assert termination_check(_hist([1.0, 0.5]), c, reduced_norms=[2.0, 2.1]) is None
    assert termination_check(_hist(np.linspace(0, 1, 21) + 1), c) == "k_max"


def test_termination_accepts_records():
    recs = [IterationRecord(k, np.array([m]), 0.0, 1.0, r, 3, 0.0)
            for k, (m, r) in enumerate([(0.3, 1.0), (0.6, 1.0)], 1)]
    assert termination_check(recs, TerminationCriteria()) == "norm_stagnation"


def test_criteria_validation():
    with pytest.raises(ValueError):
        TerminationCriteria(eps1=0)
    with pytest.raises(ValueError):
        TerminationCriteria(k_max=0)


def test_extra_directions():
    assert [e.tolist() for e in extra_directions(1)] == [[1.0]]
    dirs = extra_directions(2)
    assert len(dirs) == 3
    assert np.allclose(dirs[0], [1, 0]) and np.allclose(dirs[2], [0, 1])
    assert np.allclose(dirs[1], [2 ** -0.5, 2 ** -0.5])
    assert len(extra_directions(4)) == 10
    assert all(abs(np.linalg.norm(e) - 1) < 1e-15 for e in extra_directions(3))


def test_constant_norm_stops_by_stagnation():
    res = hinf_minimize_basic(siso_one_pole(), omega_max=10.0, num_init=2)
    assert res.norm_star == pytest.approx(1.0, abs=1e-10)
    assert res.termination_reason in ("norm_stagnation", "mu_stagnation")
    assert res.iterations <= 2


def test_basic_synthetic_100():
    res = hinf_minimize_basic(synthetic_build(100), omega_max=2000.0)
    mu_ref, norm_ref = SYNTHETIC_REFERENCE[100]
    assert res.mu_star[0] == pytest.approx(mu_ref, abs=1e-6)
    assert round(res.norm_star, 6) == round(norm_ref, 6)
    assert res.initial_dim == 19
    assert [p.kind for p in res.expansion_points[:10]] == ["init"] * 10
    assert res.history[-1].subspace_dim == res.pair.k
    # certified: every greedy point is interpolated by the final model
    for pt in res.expansion_points:
        assert verify_interpolation(synthetic_build(100), res.pair, pt.mu,
                                    pt.omega, tol=1e-6).passed


def test_best_so_far_is_minimum_of_full_norms(rng):
    s = random_parametric_system(rng, n=30, d=1)
    res = hinf_minimize_basic(s, omega_max=10.0, criteria=TerminationCriteria(k_max=4))
    fulls = [r.full_norm for r in res.history]
    assert res.norm_star == pytest.approx(min(fulls), rel=1e-8)
    assert res.termination_reason in ("mu_stagnation", "norm_stagnation", "k_max")


def test_k_max_cap(rng):
    s = random_parametric_system(rng, n=30, d=2)
    res = hinf_minimize_basic(s, omega_max=10.0,
                              criteria=TerminationCriteria(eps1=1e-300, eps2=1e-300, k_max=2))
    assert res.iterations == 2 and res.termination_reason == "k_max"


def test_extended_adds_extra_points(rng):
    s = random_parametric_system(rng, n=30, d=2)
    crit = TerminationCriteria(eps1=1e-300, eps2=1e-300, k_max=3)
    basic = hinf_minimize_basic(s, omega_max=10.0, criteria=crit)
    ext = hinf_minimize_extended(s, omega_max=10.0, criteria=crit, threads=2)
    assert basic.pair.k < ext.pair.k
    assert not ext.history[0].extra_points
    assert all(len(r.extra_points) <= 3 for r in ext.history[1:])
    assert any(p.kind == "extra" for p in ext.expansion_points)
    for pt in ext.expansion_points:
        if pt.kind != "init":
            assert verify_interpolation(s, ext.pair, pt.mu, pt.omega, tol=1e-6).passed


def test_dispatch_rejects_unknown_algorithm():
    with pytest.raises(ValueError):
        hinf_minimize(siso_one_pole(), algorithm="fancy", omega_max=1.0)


def test_omega_max_required():
    with pytest.raises(ValueError):
        hinf_minimize_basic(siso_one_pole())


@pytest.mark.parametrize("m,p", [(2, 2), (1, 7)])
def test_verify_identity_projection(rng, m, p):
    s = random_parametric_system(rng, n=10, m=m, p=p, d=2)
    pair = SubspacePair(np.eye(10), np.eye(10))
    rep = verify_interpolation(s, pair, [0.8, 1.1], 1.3)
    assert rep.passed and rep.sigma_residual < 1e-12
    assert rep.as_dict()["mu"] == [0.8, 1.1]


def test_verify_detects_missing_interpolation(rng):
    s = random_parametric_system(rng, n=20, m=1, p=1, d=1)
    pair = initialize_subspaces(s, omega_max=1.0, num_points=1)  # only (0.5, 0)
    assert not verify_interpolation(s, pair, [1.4], 7.0).passed


def test_convergence_diagnostics_geometric():
    mus = [1.0 + 0.5 ** k for k in range(1, 8)]
    rows = convergence_diagnostics(mus, mu_star_ref=1.0)
    assert rows[0]["ratio"] is None and rows[2]["ratio"] is not None
    assert all(r["drop"] == pytest.approx(2.0) for r in rows[1:])


def test_convergence_diagnostics_quadratic():
    errs = [1e-1, 1e-2, 1e-3, 1e-5, 1e-8]  # e_{k+1} = e_k e_{k-1}
    rows = convergence_diagnostics([2.0 + e for e in errs], mu_star_ref=2.0)
    assert all(r["ratio"] == pytest.approx(1.0, rel=1e-6) for r in rows[2:])
    rows = convergence_diagnostics([2.1, 2.0], mu_star_ref=2.0)
    assert rows[-1]["exact"] and rows[-1]["drop"] is None
    assert convergence_diagnostics([]) == []
