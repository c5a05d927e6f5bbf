"""Two-sided (Petrov-Galerkin) projection and greedy subspace growth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ParametricDescriptorSystem

__all__ = [
    "SubspacePair",
    "ReducedSystem",
    "RegularityReport",
    "project",
    "expansion_directions",
    "extend_subspace",
    "check_reduced_regularity",
    "DEFLATION_TOL",
]

DEFLATION_TOL = 1e-10


@dataclass(frozen=True)
class SubspacePair:
    """Orthonormal bases ``V``, ``W`` (``n x k``) of the right and left subspaces."""

    V: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        if self.V.shape != self.W.shape:
            raise ValueError(f"V is {self.V.shape} but W is {self.W.shape}")

    @classmethod
    def empty(cls, n, dtype=complex):
        return cls(np.zeros((n, 0), dtype=dtype), np.zeros((n, 0), dtype=dtype))

    @property
    def n(self):
        return self.V.shape[0]

    @property
    def k(self):
        return self.V.shape[1]

    @property
    def is_real(self):
        return not np.iscomplexobj(self.V) or (
            not np.any(self.V.imag) and not np.any(self.W.imag))

    def save(self, path):
        np.savez(path, V=self.V, W=self.W)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            return cls(data["V"], data["W"])


class ReducedSystem(ParametricDescriptorSystem):
    """Projected system ``(W^H E_i V, W^H A_i V, W^H B_i, C_i V)`` sharing the
    coefficient functions of its parent."""

    def __init__(self, parent, pair):
        super().__init__(
            parent.E.project(pair.W, pair.V),
            parent.A.project(pair.W, pair.V),
            parent.B.project(pair.W, None),
            parent.C.project(None, pair.V),
            parent.box,
            name=f"{parent.name or 'system'} (reduced, k={pair.k})",
        )
        self.pair = pair
        self.parent = parent


def project(system, pair):
    """Petrov-Galerkin reduced system for the subspace pair."""
    if pair.n != system.n:
        raise ValueError(f"subspace pair has n={pair.n}, system has n={system.n}")
    return ReducedSystem(system, pair)


def expansion_directions(system, mu, omega, response=None):
    """Interpolation directions at ``(mu, omega)``.

    Returns ``(V_new, W_new)``, both with ``min(m, p)`` columns: the full
    solves ``D^{-1} B`` and ``D^{-H} C^H`` on the side with fewer columns,
    and the tangential product with ``H`` or ``H^H`` on the other side.
    """
    fr = response if response is not None else system.frequency_response(mu, omega)
    m, p = system.m, system.p
    if m == p:
        return fr.X, fr.Y
    if m < p:
        return fr.X, fr.Y @ fr.H
    return fr.X @ fr.H.conj().T, fr.Y


def _mgs2(Q, cols, x):
    """Orthogonalize ``x`` against ``Q[:, :cols]`` by modified Gram-Schmidt, twice."""
    for _ in range(2):
        for j in range(cols):
            q = Q[:, j]
            x = x - q * (q.conj() @ x)
    return x


def extend_subspace(pair, V_new, W_new, deflation_tol=DEFLATION_TOL, real=False):
    """Orthonormal bases of ``span(V) + span(V_new)`` and likewise for ``W``.

    A new column pair is dropped from both sides when either side's residual
    after orthogonalization falls below ``deflation_tol`` times the incoming
    column norm, so both subspaces keep the same dimension.  With
    ``real=True`` each complex direction is replaced by its real and
    imaginary parts, giving real bases of conjugation-closed subspaces.
    """
    V_new = np.atleast_2d(np.asarray(V_new))
    W_new = np.atleast_2d(np.asarray(W_new))
    if V_new.shape[1] != W_new.shape[1]:
        raise ValueError(
            f"direction blocks differ in width: {V_new.shape[1]} vs {W_new.shape[1]}")
    if real:
        vcols, wcols = [], []
        for j in range(V_new.shape[1]):
            vcols += [V_new[:, j].real, V_new[:, j].imag]
            wcols += [W_new[:, j].real, W_new[:, j].imag]
        V_new = np.column_stack(vcols) if vcols else V_new.real
        W_new = np.column_stack(wcols) if wcols else W_new.real
        dtype = float if pair.is_real else complex
    else:
        dtype = complex
    n, k = pair.V.shape
    extra = V_new.shape[1]
    V = np.zeros((n, k + extra), dtype=dtype)
    W = np.zeros((n, k + extra), dtype=dtype)
    V[:, :k] = pair.V
    W[:, :k] = pair.W
    cols = k
    for j in range(extra):
        x, y = V_new[:, j].astype(dtype), W_new[:, j].astype(dtype)
        nx, ny = np.linalg.norm(x), np.linalg.norm(y)
        if nx == 0 or ny == 0:
            continue
        rx = _mgs2(V, cols, x)
        ry = _mgs2(W, cols, y)
        nrx, nry = np.linalg.norm(rx), np.linalg.norm(ry)
        if nrx <= deflation_tol * nx or nry <= deflation_tol * ny:
            continue
        V[:, cols] = rx / nrx
        W[:, cols] = ry / nry
        cols += 1
    return SubspacePair(V[:, :cols].copy(), W[:, :cols].copy())


@dataclass
class RegularityReport:
    min_singular_value: float
    relative_min_singular_value: float
    scale: float
    irregular: bool
    worst_omega: float


def check_reduced_regularity(reduced, mu, omega_samples, threshold=1e-12):
    """Smallest singular value of ``i w E_r(mu) - A_r(mu)`` over the samples.

    ``irregular`` is set when it falls below ``threshold`` relative to
    ``||E_r|| + ||A_r||``.  Diagnostic only; no regularization is done.
    """
    lti = reduced.at(mu)
    scale = float(np.linalg.norm(lti.E, 2) + np.linalg.norm(lti.A, 2))
    best, worst_w = np.inf, float("nan")
    for w in np.atleast_1d(omega_samples):
        D = 1j * w * lti.E - lti.A
        smin = np.linalg.svd(D, compute_uv=False)[-1] if D.size else 0.0
        if smin < best:
            best, worst_w = float(smin), float(w)
    rel = best / scale if scale > 0 else 0.0
    return RegularityReport(best, rel, scale, bool(scale == 0 or rel < threshold), worst_w)
