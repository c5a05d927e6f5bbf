import numpy as np
import pytest

from conftest import random_parametric_system
from hinfmin.model import eval_transfer, sigma_eval
from hinfmin.projection import (SubspacePair, check_reduced_regularity, expansion_directions,
                                extend_subspace, project)


def _orthonormal(rng, n, k, complex_=True):
    M = rng.standard_normal((n, k)) + (1j * rng.standard_normal((n, k)) if complex_ else 0)
    return np.linalg.qr(M)[0]


def _reduced_direct(system, V, W, mu, w):
    E, A, B, C = (np.asarray(M.toarray() if hasattr(M, "toarray") else M)
                  for M in system.matrices(mu))
    Wh = W.conj().T
    return (C @ V) @ np.linalg.solve(1j * w * (Wh @ E @ V) - Wh @ A @ V, Wh @ B)


def test_identity_projection_reproduces_system(rng):
    s = random_parametric_system(rng, n=8, m=2, p=2, d=2)
    I = np.eye(8)
    r = project(s, SubspacePair(I, I))
    for mu, w in [([0.6, 1.0], 0.3), ([1.2, 1.4], 5.0)]:
        assert np.allclose(eval_transfer(r, mu, w), eval_transfer(s, mu, w))


def test_coordinate_restriction(rng):
    s = random_parametric_system(rng, n=6, d=1)
    e1 = np.zeros((6, 1))
    e1[0] = 1
    r = project(s, SubspacePair(e1, e1))
    E, A, B, C = s.matrices([1.0])
    Er, Ar, Br, Cr = r.matrices([1.0])
    assert np.allclose(Er, E[0, 0]) and np.allclose(Ar, A[0, 0])
    assert np.allclose(Br, B[0]) and np.allclose(Cr, C[:, :1])


def test_projection_matches_direct_recomputation(rng):
    s = random_parametric_system(rng, n=12, m=2, p=2, d=2)
    V, W = _orthonormal(rng, 12, 3), _orthonormal(rng, 12, 3)
    r = project(s, SubspacePair(V, W))
    for _ in range(5):
        mu = rng.uniform(0.5, 1.5, 2)
        w = rng.uniform(-5, 5)
        assert np.allclose(eval_transfer(r, mu, w), _reduced_direct(s, V, W, mu, w), rtol=1e-10)


def test_rebasing_invariance(rng):
    s = random_parametric_system(rng, n=12, m=1, p=2, d=1)
    V, W = _orthonormal(rng, 12, 4), _orthonormal(rng, 12, 4)
    Q1, Q2 = _orthonormal(rng, 4, 4), _orthonormal(rng, 4, 4)
    r1 = project(s, SubspacePair(V, W))
    r2 = project(s, SubspacePair(V @ Q1, W @ Q2))
    H1, H2 = eval_transfer(r1, [0.9], 1.7), eval_transfer(r2, [0.9], 1.7)
    assert np.allclose(H1, H2, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("m,p", [(1, 1), (1, 7), (3, 2), (2, 2)])
def test_expansion_direction_widths(rng, m, p):
    s = random_parametric_system(rng, n=14, m=m, p=p, d=1)
    Vn, Wn = expansion_directions(s, [1.0], 0.8)
    assert Vn.shape == (14, min(m, p)) and Wn.shape == (14, min(m, p))


@pytest.mark.parametrize("m,p", [(1, 1), (1, 3), (3, 1), (2, 2), (2, 3)])
def test_expansion_interpolates(rng, m, p):
    s = random_parametric_system(rng, n=20, m=m, p=p, d=2)
    mu, w = np.array([0.8, 1.3]), 1.1
    pair = extend_subspace(SubspacePair.empty(20), *expansion_directions(s, mu, w))
    r = project(s, pair)
    H, Hr = eval_transfer(s, mu, w), eval_transfer(r, mu, w)
    assert np.linalg.norm(H - Hr) <= 1e-8 * (1 + np.linalg.norm(H))
    ev, evr = sigma_eval(s, mu, w), sigma_eval(r, mu, w)
    assert abs(ev.sigma - evr.sigma) <= 1e-8 * (1 + ev.sigma)
    assert np.allclose(ev.grad_sigma_mu, evr.grad_sigma_mu, rtol=1e-7, atol=1e-8)
    assert abs(ev.d_sigma_d_omega - evr.d_sigma_d_omega) <= 1e-7 * (1 + ev.sigma)


def test_real_splitting_also_interpolates_at_negative_frequency(rng):
    s = random_parametric_system(rng, n=16, m=1, p=2, d=1)
    pair = extend_subspace(SubspacePair.empty(16, float), *expansion_directions(s, [1.0], 2.0),
                           real=True)
    assert not np.iscomplexobj(pair.V) and pair.k == 2
    r = project(s, pair)
    for w in (2.0, -2.0):
        assert np.allclose(eval_transfer(r, [1.0], w), eval_transfer(s, [1.0], w), rtol=1e-9)


def test_adding_existing_column_is_idempotent(rng):
    V = _orthonormal(rng, 10, 3)
    W = _orthonormal(rng, 10, 3)
    pair = SubspacePair(V, W)
    out = extend_subspace(pair, V[:, :1] * 2.0, W[:, 1:2])
    assert out.k == 3


def test_orthonormal_growth_from_empty(rng):
    pair = SubspacePair.empty(30)
    X, Y = rng.standard_normal((30, 4)), rng.standard_normal((30, 4))
    out = extend_subspace(pair, X, Y)
    assert out.k == 4
    assert np.allclose(out.V.conj().T @ out.V, np.eye(4), atol=1e-12)
    assert np.allclose(out.W.conj().T @ out.W, np.eye(4), atol=1e-12)


def test_matched_pair_deflation(rng):
    V = _orthonormal(rng, 10, 2)
    W = _orthonormal(rng, 10, 2)
    new_w = rng.standard_normal((10, 1))
    out = extend_subspace(SubspacePair(V, W), V[:, :1], new_w)
    assert out.V.shape == out.W.shape == (10, 2)


def test_span_projector_after_random_expansions(rng):
    n = 30
    pair = SubspacePair.empty(n)
    Xs, Ys = [], []
    for _ in range(10):
        X = rng.standard_normal((n, 1)) + 1j * rng.standard_normal((n, 1))
        Y = rng.standard_normal((n, 1)) + 1j * rng.standard_normal((n, 1))
        Xs.append(X)
        Ys.append(Y)
        pair = extend_subspace(pair, X, Y)
    for basis, stack in [(pair.V, np.hstack(Xs)), (pair.W, np.hstack(Ys))]:
        U, sv, _ = np.linalg.svd(stack, full_matrices=False)
        r = int(np.sum(sv > 1e-10 * sv[0]))
        P_ref = U[:, :r] @ U[:, :r].conj().T
        assert np.allclose(basis @ basis.conj().T, P_ref, atol=1e-10)
        assert np.allclose(basis.conj().T @ basis, np.eye(basis.shape[1]), atol=1e-12)


def test_mismatched_widths_rejected(rng):
    with pytest.raises(ValueError):
        extend_subspace(SubspacePair.empty(5), np.ones((5, 2)), np.ones((5, 1)))


def test_pair_dimension_checked(rng):
    s = random_parametric_system(rng, n=8)
    with pytest.raises(ValueError):
        project(s, SubspacePair.empty(9))


def test_regularity_identity_is_well_conditioned(rng):
    s = random_parametric_system(rng, n=8)
    r = project(s, SubspacePair(np.eye(8), np.eye(8)))
    rep = check_reduced_regularity(r, [1.0], [0.0, 1.0, 10.0])
    assert not rep.irregular and rep.relative_min_singular_value > 1e-6


def test_regularity_zero_pencil_is_flagged(rng):
    s = random_parametric_system(rng, n=8)
    V = np.zeros((8, 1))
    V[0] = 1
    W = np.zeros((8, 1))
    W[1] = 1
    r = project(s, SubspacePair(V, W))
    # engineer W^H E_i V = W^H A_i V = 0 by zeroing the reduced terms
    for fam in (r.E, r.A):
        fam.terms = [(c, np.zeros_like(M)) for c, M in fam.terms]
    rep = check_reduced_regularity(r, [1.0], [0.0, 1.0])
    assert rep.irregular


def test_save_load_roundtrip(tmp_path, rng):
    pair = SubspacePair(_orthonormal(rng, 6, 2), _orthonormal(rng, 6, 2))
    pair.save(tmp_path / "p.npz")
    back = SubspacePair.load(tmp_path / "p.npz")
    assert np.array_equal(back.V, pair.V) and np.array_equal(back.W, pair.W)
