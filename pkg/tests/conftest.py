import sys

import numpy as np
import pytest
import scipy.sparse as sps

from hinfmin.model import (AffineMatrixFamily, Constant, Coordinate, DescriptorLTI, Monomial,
                           ParameterBox, ParametricDescriptorSystem)


def random_parametric_system(rng, n=12, m=1, p=1, d=1, sparse=False, complex_data=False):
    """Stable-ish random system on the box [0.5, 1.5]^d.

    ``A(mu) = A0 + sum_j mu_j A_j`` with a strongly negative diagonal shift,
    ``E(mu) = I + 0.1 mu_1 E1``, and ``B``/``C`` carrying one parameter term.
    """
    def mat(r, c, scale=1.0):
        M = rng.standard_normal((r, c))
        if complex_data:
            M = M + 1j * rng.standard_normal((r, c))
        return scale * M

    box = ParameterBox(np.full(d, 0.5), np.full(d, 1.5))
    A0 = mat(n, n, 1.0 / np.sqrt(n)) - 3.0 * np.eye(n)
    a_terms = [(Constant(1.0), A0)]
    for j in range(d):
        a_terms.append((Coordinate(j), mat(n, n, 0.3 / np.sqrt(n))))
    if d >= 2:
        exps = [0] * d
        exps[0], exps[1] = 1, 1
        a_terms.append((Monomial(tuple(exps), 0.5), mat(n, n, 0.2 / np.sqrt(n))))
    e_terms = [(Constant(1.0), np.eye(n)), (Coordinate(0), mat(n, n, 0.05 / np.sqrt(n)))]
    b_terms = [(Constant(1.0), mat(n, m)), (Coordinate(d - 1), mat(n, m, 0.3))]
    c_terms = [(Constant(1.0), mat(p, n)), (Coordinate(0), mat(p, n, 0.3))]
    if sparse:
        a_terms = [(c, sps.csc_matrix(M)) for c, M in a_terms]
        e_terms = [(c, sps.csc_matrix(M)) for c, M in e_terms]
    return ParametricDescriptorSystem(
        AffineMatrixFamily(e_terms), AffineMatrixFamily(a_terms),
        AffineMatrixFamily(b_terms), AffineMatrixFamily(c_terms), box, name="random")


def random_stable_lti(rng, k, m=1, p=1, descriptor=False):
    """Dense stable system with eigenvalues shifted into the left half plane."""
    A = rng.standard_normal((k, k))
    shift = np.max(np.linalg.eigvals(A).real) + 0.2 + rng.random()
    A = A - shift * np.eye(k)
    E = np.eye(k)
    if descriptor:
        Q = np.linalg.qr(rng.standard_normal((k, k)))[0]
        E, A = Q @ E, Q @ A
    return DescriptorLTI(E, A, rng.standard_normal((k, m)), rng.standard_normal((p, k)))


def siso_one_pole():
    """``H(s) = 1 / (s + 1)``, as a parameter-free system with d = 1."""
    one = np.ones((1, 1))
    return ParametricDescriptorSystem(one, -one, one, one, ParameterBox([0.0], [1.0]),
                                      name="one-pole")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
