"""Parameter-dependent descriptor systems with affine coefficient structure.

A system is given by four affine families

    E(mu) = sum_i f_i(mu) E_i,   A(mu) = sum_i g_i(mu) A_i,
    B(mu) = sum_i h_i(mu) B_i,   C(mu) = sum_i k_i(mu) C_i,

and its transfer function is ``H[mu](s) = C(mu) (s E(mu) - A(mu))^{-1} B(mu)``.
Everything here evaluates at ``s = i*omega`` on the imaginary axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as spla
import scipy.sparse as sps
import scipy.sparse.linalg as spsla

from .errors import NonSimple, SingularPencil

__all__ = [
    "Constant",
    "Coordinate",
    "Monomial",
    "Blackbox",
    "AffineMatrixFamily",
    "ParameterBox",
    "ParametricDescriptorSystem",
    "DescriptorLTI",
    "FrequencyResponse",
    "SigmaEvaluation",
    "assemble_matrices",
    "eval_transfer",
    "transfer_partial",
    "sigma_eval",
    "DEFAULT_GAP_TOL",
    "DENSE_CROSSOVER",
]

DEFAULT_GAP_TOL = 1e-8
# dense LU at or below this order, sparse LU above
DENSE_CROSSOVER = 500
SINGULAR_RCOND = 1e-13


# ---------------------------------------------------------------------------
# scalar coefficient functions


@dataclass(frozen=True)
class Constant:
    value: float = 1.0

    def __call__(self, mu):
        return float(self.value)

    def grad(self, mu):
        return np.zeros(len(mu))

    def describe(self):
        return repr(float(self.value))


@dataclass(frozen=True)
class Coordinate:
    """The ``index``-th parameter component (0-based)."""

    index: int

    def __call__(self, mu):
        return float(mu[self.index])

    def grad(self, mu):
        g = np.zeros(len(mu))
        g[self.index] = 1.0
        return g

    def describe(self):
        return f"mu{self.index + 1}"


@dataclass(frozen=True)
class Monomial:
    """``scale * prod_j mu_j**exponents[j]``."""

    exponents: tuple
    scale: float = 1.0

    def __post_init__(self):
        exps = tuple(int(e) for e in self.exponents)
        if any(e < 0 for e in exps):
            raise ValueError("monomial exponents must be non-negative")
        object.__setattr__(self, "exponents", exps)

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=float)
        return float(self.scale * np.prod(mu[: len(self.exponents)] ** self.exponents))

    def grad(self, mu):
        mu = np.asarray(mu, dtype=float)
        g = np.zeros(len(mu))
        exps = np.array(self.exponents)
        for j, e in enumerate(exps):
            if e == 0:
                continue
            lowered = exps.copy()
            lowered[j] -= 1
            g[j] = self.scale * e * np.prod(mu[: len(exps)] ** lowered)
        return g

    def describe(self):
        factors = [f"mu{j + 1}^{e}" if e > 1 else f"mu{j + 1}"
                   for j, e in enumerate(self.exponents) if e > 0]
        if self.scale != 1.0 or not factors:
            factors.insert(0, repr(float(self.scale)))
        return "*".join(factors)


@dataclass(frozen=True)
class Blackbox:
    """User-supplied coefficient with its gradient.

    The caller is responsible for ``fun`` being real-analytic on the
    parameter domain; nothing here can check that.
    """

    fun: Callable
    gradient: Callable
    label: str = "blackbox"

    def __call__(self, mu):
        return float(self.fun(np.asarray(mu, dtype=float)))

    def grad(self, mu):
        return np.asarray(self.gradient(np.asarray(mu, dtype=float)), dtype=float)

    def describe(self):
        return self.label


def _as_coefficient(c):
    if isinstance(c, (Constant, Coordinate, Monomial, Blackbox)):
        return c
    if np.isscalar(c):
        return Constant(float(c))
    raise TypeError(f"not a coefficient: {c!r}")


# ---------------------------------------------------------------------------
# affine families


def _is_real_matrix(M):
    if sps.issparse(M):
        return not np.iscomplexobj(M.data) or not np.any(M.data.imag)
    return not np.iscomplexobj(M) or not np.any(np.imag(M))


class AffineMatrixFamily:
    """``M(mu) = sum_i coef_i(mu) * M_i`` with dense or sparse ``M_i``."""

    def __init__(self, terms):
        terms = [(_as_coefficient(c), self._prepare(M)) for c, M in terms]
        if not terms:
            raise ValueError("an affine family needs at least one term")
        shape = terms[0][1].shape
        for c, M in terms:
            if M.shape != shape:
                raise ValueError(
                    f"inconsistent term shapes in affine family: {M.shape} vs {shape}")
        self.terms = terms
        self.shape = shape
        self.is_sparse = any(sps.issparse(M) for _, M in terms)
        self.is_real = all(_is_real_matrix(M) for _, M in terms)

    @staticmethod
    def _prepare(M):
        if sps.issparse(M):
            return sps.csc_matrix(M)
        M = np.asarray(M)
        if M.ndim == 1:
            M = M.reshape(-1, 1)
        return M

    @classmethod
    def constant(cls, M):
        return cls([(Constant(1.0), M)])

    @property
    def rows(self):
        return self.shape[0]

    @property
    def cols(self):
        return self.shape[1]

    def __len__(self):
        return len(self.terms)

    def coefficients(self, mu):
        return np.array([c(mu) for c, _ in self.terms])

    def coefficient_gradients(self, mu):
        """Array of shape ``(len(terms), d)``."""
        return np.array([c.grad(mu) for c, _ in self.terms]).reshape(len(self.terms), -1)

    def combine(self, weights):
        """``sum_i weights[i] * M_i`` (sparse stays sparse)."""
        out = None
        for w, (_, M) in zip(weights, self.terms):
            if w == 0:
                continue
            out = w * M if out is None else out + w * M
        if out is None:
            M0 = self.terms[0][1]
            out = sps.csc_matrix(M0.shape) if sps.issparse(M0) else np.zeros(M0.shape)
        if sps.issparse(out) and not all(sps.issparse(M) for _, M in self.terms):
            out = out.toarray()
        return out

    def evaluate(self, mu):
        return self.combine(self.coefficients(mu))

    def partial(self, mu, j):
        return self.combine(self.coefficient_gradients(mu)[:, j])

    def project(self, left=None, right=None):
        """Family of ``left^H M_i right``; ``None`` stands for the identity."""
        new_terms = []
        for c, M in self.terms:
            P = M @ right if right is not None else M
            if sps.issparse(P):
                P = P.toarray()
            if left is not None:
                P = left.conj().T @ P
            new_terms.append((c, np.asarray(P)))
        return AffineMatrixFamily(new_terms)

    def sandwich(self, y, x):
        """Per-term scalars ``y^H M_i x`` for vectors ``y``, ``x``."""
        yc = y.conj()
        return np.array([yc @ (M @ x) for _, M in self.terms])


@dataclass(frozen=True)
class ParameterBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have the same length")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self):
        return self.lower.size

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def diameter(self):
        return float(np.linalg.norm(self.width))

    def contains(self, mu, tol=0.0):
        mu = np.asarray(mu, dtype=float)
        slack = tol * np.maximum(1.0, self.width)
        return bool(np.all(mu >= self.lower - slack) and np.all(mu <= self.upper + slack))

    def clip(self, mu):
        return np.clip(np.asarray(mu, dtype=float), self.lower, self.upper)

    def vertices(self):
        d = self.d
        out = []
        for bits in range(2 ** d):
            out.append(np.array([self.upper[j] if bits >> j & 1 else self.lower[j]
                                 for j in range(d)]))
        return out


# ---------------------------------------------------------------------------
# the system


class ParametricDescriptorSystem:
    """Descriptor system with affine parameter dependence.

    Instances are treated as immutable once built and may be shared
    across threads.
    """

    def __init__(self, E, A, B, C, box, name=None, dense_crossover=DENSE_CROSSOVER):
        self.E, self.A, self.B, self.C = (
            f if isinstance(f, AffineMatrixFamily) else AffineMatrixFamily.constant(f)
            for f in (E, A, B, C))
        if not isinstance(box, ParameterBox):
            box = ParameterBox(*box)
        self.box = box
        self.name = name
        self.dense_crossover = dense_crossover
        n = self.E.rows
        problems = []
        if self.E.shape != (n, n):
            problems.append(f"E family is {self.E.shape}, expected square")
        if self.A.shape != (n, n):
            problems.append(f"A family is {self.A.shape}, expected {(n, n)}")
        if self.B.rows != n:
            problems.append(f"B family has {self.B.rows} rows, expected {n}")
        if self.C.cols != n:
            problems.append(f"C family has {self.C.cols} columns, expected {n}")
        if problems:
            raise ValueError("; ".join(problems))
        for fam in (self.E, self.A, self.B, self.C):
            for c, _ in fam.terms:
                if isinstance(c, Coordinate) and c.index >= box.d:
                    raise ValueError(f"coefficient {c.describe()} exceeds d={box.d}")
                if isinstance(c, Monomial) and len(c.exponents) > box.d:
                    raise ValueError(f"coefficient {c.describe()} exceeds d={box.d}")

    @property
    def n(self):
        return self.E.rows

    @property
    def m(self):
        return self.B.cols

    @property
    def p(self):
        return self.C.rows

    @property
    def d(self):
        return self.box.d

    @property
    def families(self):
        return self.E, self.A, self.B, self.C

    @property
    def is_real(self):
        return all(f.is_real for f in self.families)

    @property
    def use_dense(self):
        return self.n <= self.dense_crossover

    def matrices(self, mu):
        mu = np.asarray(mu, dtype=float)
        return tuple(f.evaluate(mu) for f in self.families)

    def at(self, mu):
        """Freeze the parameter: dense :class:`DescriptorLTI` (small systems only)."""
        E, A, B, C = self.matrices(mu)
        dense = [M.toarray() if sps.issparse(M) else np.asarray(M) for M in (E, A, B, C)]
        return DescriptorLTI(*dense)

    def frequency_response(self, mu, omega, singular_rcond=SINGULAR_RCOND):
        return FrequencyResponse(self, mu, omega, singular_rcond)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return (f"<ParametricDescriptorSystem{label} n={self.n} m={self.m} "
                f"p={self.p} d={self.d}>")


# ---------------------------------------------------------------------------
# linear solves


class _DenseSolver:
    def __init__(self, D, rcond_tol):
        self.lu, self.piv, info = spla.lapack.zgetrf(np.asarray(D, dtype=complex))
        if info > 0:
            raise SingularPencil("pencil is exactly singular")
        anorm = np.linalg.norm(D, 1)
        if anorm == 0:
            raise SingularPencil("pencil is zero")
        rcond, _ = spla.lapack.zgecon(self.lu, anorm, norm="1")
        if not np.isfinite(rcond) or rcond < rcond_tol:
            raise SingularPencil(f"pencil is numerically singular (rcond={rcond:.3e})")

    def solve(self, rhs, adjoint=False):
        x, info = spla.lapack.zgetrs(self.lu, self.piv, rhs, trans=2 if adjoint else 0)
        return x


class _SparseSolver:
    def __init__(self, D):
        try:
            self.lu = spsla.splu(sps.csc_matrix(D, dtype=complex))
        except RuntimeError as exc:
            raise SingularPencil(f"sparse LU failed: {exc}") from exc

    def solve(self, rhs, adjoint=False):
        if sps.issparse(rhs):
            rhs = rhs.toarray()
        rhs = np.asarray(rhs, dtype=complex)
        x = self.lu.solve(rhs, trans="H" if adjoint else "N")
        if not np.all(np.isfinite(x)):
            raise SingularPencil("sparse solve produced non-finite values")
        return x


def _dense(M):
    return M.toarray() if sps.issparse(M) else np.asarray(M)


class FrequencyResponse:
    """Factorized pencil ``D(mu, i omega)`` together with the solves every
    derived quantity needs: ``X = D^{-1} B``, ``Y = D^{-H} C^H`` and
    ``H = C X``."""

    def __init__(self, system, mu, omega, singular_rcond=SINGULAR_RCOND):
        self.system = system
        self.mu = np.asarray(mu, dtype=float)
        self.omega = float(omega)
        self.s = 1j * self.omega
        E, A, B, C = system.matrices(self.mu)
        self.E, self.A = E, A
        self.B = _dense(B).astype(complex)
        self.C = _dense(C).astype(complex)
        D = self.s * E - A
        try:
            if system.use_dense or not sps.issparse(D):
                self.solver = _DenseSolver(_dense(D), singular_rcond)
            else:
                self.solver = _SparseSolver(D)
        except SingularPencil as exc:
            raise SingularPencil(
                f"{exc} at mu={self.mu.tolist()}, omega={self.omega:g}",
                mu=self.mu, omega=self.omega) from None
        self.X = self.solver.solve(self.B)
        self.Y = self.solver.solve(self.C.conj().T, adjoint=True)
        self.H = self.C @ self.X

    def solve(self, rhs, adjoint=False):
        return self.solver.solve(rhs, adjoint=adjoint)

    def partial(self, which):
        """Full matrix ``dH/d(which)``; ``which`` is ``'omega'`` or a parameter index."""
        sys_ = self.system
        if which == "omega":
            EX = self.E @ self.X
            return -1j * (self.Y.conj().T @ EX)
        j = int(which)
        Ej = sys_.E.partial(self.mu, j)
        Aj = sys_.A.partial(self.mu, j)
        Bj = _dense(sys_.B.partial(self.mu, j))
        Cj = _dense(sys_.C.partial(self.mu, j))
        Dj = self.s * Ej - Aj
        Yh = self.Y.conj().T
        return Cj @ self.X - Yh @ (Dj @ self.X) + Yh @ Bj

    def directional(self, u, v):
        """``Re(u^H dH v)`` for ``omega`` and every parameter: returns
        ``(d/domega, gradient)`` without forming the full derivative matrices."""
        sys_ = self.system
        x = self.X @ v
        y = self.Y @ u
        d_omega = float(np.real(-1j * (y.conj() @ (self.E @ x))))
        mu = self.mu
        grad = np.zeros(sys_.d)
        if sys_.d:
            cE = sys_.E.sandwich(y, x)
            cA = sys_.A.sandwich(y, x)
            cB = np.array([y.conj() @ (_dense(M) @ v) for _, M in sys_.B.terms])
            cC = np.array([u.conj() @ (_dense(M) @ x) for _, M in sys_.C.terms])
            grad = (np.real(-self.s * cE) @ sys_.E.coefficient_gradients(mu)
                    + np.real(cA) @ sys_.A.coefficient_gradients(mu)
                    + np.real(cB) @ sys_.B.coefficient_gradients(mu)
                    + np.real(cC) @ sys_.C.coefficient_gradients(mu))
        return d_omega, np.asarray(grad, dtype=float)


# ---------------------------------------------------------------------------
# frozen-parameter dense system


@dataclass
class DescriptorLTI:
    """Dense descriptor system ``(E, A, B, C)`` at a fixed parameter value."""

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    _real: bool = field(default=None, repr=False)

    def __post_init__(self):
        self.B = np.atleast_2d(self.B)
        self.C = np.atleast_2d(self.C)
        if self.B.shape[0] != self.E.shape[0]:
            self.B = self.B.reshape(self.E.shape[0], -1)
        if self._real is None:
            self._real = all(_is_real_matrix(M) for M in (self.E, self.A, self.B, self.C))

    @property
    def order(self):
        return self.E.shape[0]

    @property
    def is_real(self):
        return self._real

    def transfer(self, omegas, chunk=256):
        """``H(i w)`` for each ``w``; array of shape ``(len(omegas), p, m)``."""
        omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        out = np.empty((omegas.size, self.C.shape[0], self.B.shape[1]), dtype=complex)
        for s0 in range(0, omegas.size, chunk):
            w = omegas[s0:s0 + chunk]
            D = 1j * w[:, None, None] * self.E[None] - self.A[None]
            X = np.linalg.solve(D, np.broadcast_to(self.B, (w.size,) + self.B.shape))
            out[s0:s0 + chunk] = self.C @ X
        return out

    def sigma(self, omegas):
        """Largest singular value of ``H(i w)`` for each ``w``."""
        Hs = self.transfer(omegas)
        if Hs.shape[1] == 1 or Hs.shape[2] == 1:
            return np.sqrt(np.sum(np.abs(Hs) ** 2, axis=(1, 2)))
        return np.linalg.svd(Hs, compute_uv=False)[:, 0]

    def sigma_and_slope(self, omega):
        """``(sigma, d sigma / d omega)`` at a single frequency."""
        D = 1j * omega * self.E - self.A
        lu = spla.lu_factor(D, check_finite=False)
        X = spla.lu_solve(lu, self.B, check_finite=False)
        H = self.C @ X
        U, s, Vh = np.linalg.svd(H)
        u, v = U[:, 0], Vh[0].conj()
        y = spla.lu_solve(lu, self.C.conj().T @ u, trans=2, check_finite=False)
        slope = float(np.real(-1j * (y.conj() @ (self.E @ (X @ v)))))
        return float(s[0]), slope

    def poles(self):
        try:
            ev = spla.eigvals(self.A, self.E)
        except (np.linalg.LinAlgError, ValueError):
            return np.array([], dtype=complex)
        return ev[np.isfinite(ev)]


# ---------------------------------------------------------------------------
# public operations


@dataclass
class SigmaEvaluation:
    sigma: float
    sigma2: float
    u: np.ndarray
    v: np.ndarray
    d_sigma_d_omega: float
    grad_sigma_mu: np.ndarray
    simple: bool
    H: np.ndarray = field(repr=False, default=None)


def assemble_matrices(system, mu):
    """``(E(mu), A(mu), B(mu), C(mu))`` as coefficient-weighted sums of the terms."""
    return system.matrices(mu)


def eval_transfer(system, mu, omega):
    """Transfer matrix ``H[mu](i omega)`` (``p x m``)."""
    return system.frequency_response(mu, omega).H


def transfer_partial(system, mu, omega, which):
    """Derivative of ``H[mu](i omega)`` with respect to ``omega`` (``which='omega'``)
    or the parameter component ``which`` (an integer index)."""
    return system.frequency_response(mu, omega).partial(which)


def sigma_eval(system, mu, omega, gap_tol=DEFAULT_GAP_TOL, require_simple=False,
               response=None):
    """Largest singular value of ``H[mu](i omega)`` with its analytic derivatives.

    Derivatives are ``Re(u^H (dH) v)`` with ``(u, v)`` the leading singular
    pair.  They are only meaningful when the largest singular value is
    simple, i.e. ``sigma - sigma2 > gap_tol * (1 + sigma)``; otherwise they
    are returned as NaN (or :class:`NonSimple` is raised when
    ``require_simple`` is set).
    """
    fr = response if response is not None else system.frequency_response(mu, omega)
    U, s, Vh = np.linalg.svd(fr.H)
    sigma = float(s[0])
    sigma2 = float(s[1]) if s.size > 1 else 0.0
    u, v = U[:, 0], Vh[0].conj()
    simple = sigma - sigma2 > gap_tol * (1.0 + sigma)
    if simple:
        d_omega, grad = fr.directional(u, v)
    else:
        if require_simple:
            raise NonSimple(
                f"sigma={sigma:.16g} and sigma2={sigma2:.16g} coalesce at "
                f"mu={np.asarray(mu).tolist()}, omega={omega:g}")
        d_omega, grad = float("nan"), np.full(system.d, np.nan)
    return SigmaEvaluation(sigma, sigma2, u, v, d_omega, grad, bool(simple), fr.H)
