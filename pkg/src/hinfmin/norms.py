"""L-infinity norms of transfer functions.

``linf_norm_dense`` is a level-set (Boyd-Balakrishnan / Bruinsma-Steinbuch)
iteration for small dense descriptor systems.  ``linf_norm_large`` handles
a large parametric system at a fixed parameter value by interpolatory
subspace growth, solving the small reduced problems with the dense method.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as spla
from scipy.optimize import brentq, minimize_scalar

from .errors import EigFailure, IrregularPencil, MaxIterExceeded, SingularPencil
from .model import DescriptorLTI
from .projection import SubspacePair, expansion_directions, extend_subspace

__all__ = [
    "LevelSetOptions",
    "NormResult",
    "build_level_set_pencil",
    "imaginary_eigenvalues",
    "linf_norm_dense",
    "linf_norm_sweep",
    "linf_norm_large",
    "default_init_frequencies",
]

log = logging.getLogger(__name__)


def default_init_frequencies(omega_max):
    return [0.0, omega_max / 100.0, omega_max / 10.0, omega_max]


@dataclass
class LevelSetOptions:
    rel_tol: float = 1e-10
    init_frequencies: tuple = ()
    max_iter: int = 60
    imag_eig_residual_tol: float = 1e-8
    omega_cap: float = None
    omega_max: float = None
    sweep_points: int = 4096
    seed_points: int = 8

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")

    def frequencies(self):
        freqs = list(self.init_frequencies)
        if not freqs and self.omega_max:
            freqs = default_init_frequencies(self.omega_max)
        return freqs

    def seed_frequencies(self):
        """Log-spaced ``omega_max / 1000 .. omega_max`` extra starting points for
        :func:`linf_norm_large`; they make a local peak capture less likely."""
        if not self.omega_max or self.seed_points <= 0:
            return []
        return list(np.logspace(np.log10(self.omega_max / 1000.0), np.log10(self.omega_max),
                                self.seed_points))


@dataclass
class NormResult:
    gamma: float
    omega_star: float
    iterations: int
    attained_at_infinity: bool = False
    fallback_used: bool = False
    converged: bool = True
    gammas: list = field(default_factory=list)
    pair: SubspacePair = field(default=None, repr=False)
    evaluations: dict = field(default_factory=dict, repr=False)


# ---------------------------------------------------------------------------
# dense level-set machinery


def build_level_set_pencil(lti, gamma):
    """Pencil ``(M, N)`` whose finite imaginary eigenvalues ``i w`` are exactly
    the frequencies at which ``gamma`` is a singular value of ``H(i w)``.

    ``M = [[A, BB^H/gamma], [-C^H C/gamma, -A^H]]``, ``N = diag(E, E^H)``.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    E, A, B, C = lti.E, lti.A, lti.B, lti.C
    if lti.is_real:
        E, A, B, C = E.real, A.real, B.real, C.real
    k = A.shape[0]
    dtype = complex if not lti.is_real else float
    M = np.zeros((2 * k, 2 * k), dtype=dtype)
    N = np.zeros((2 * k, 2 * k), dtype=dtype)
    M[:k, :k] = A
    M[:k, k:] = (B @ B.conj().T) / gamma
    M[k:, :k] = -(C.conj().T @ C) / gamma
    M[k:, k:] = -A.conj().T
    N[:k, :k] = E
    N[k:, k:] = E.conj().T
    return M, N


def imaginary_eigenvalues(M, N, residual_tol=1e-8):
    """Sorted ``w`` such that ``i w`` is a finite eigenvalue of ``(M, N)``
    with ``|Re| <= residual_tol * (1 + |lambda|)``."""
    try:
        alpha, beta = spla.eig(M, N, right=False, homogeneous_eigvals=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigFailure(str(exc)) from exc
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
        raise EigFailure("non-finite generalized eigenvalues")
    scale = np.maximum(np.abs(alpha), 1e-300)
    finite = np.abs(beta) > 1e3 * np.finfo(float).eps * scale
    lam = alpha[finite] / beta[finite]
    on_axis = np.abs(lam.real) <= residual_tol * (1.0 + np.abs(lam))
    ws = np.sort(lam[on_axis].imag)
    if ws.size < 2:
        return ws.tolist()
    keep = [ws[0]]
    for w in ws[1:]:
        if abs(w - keep[-1]) > 1e-12 * (1.0 + abs(w)):
            keep.append(w)
    return keep


def _safe_sigma(lti, omegas):
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    try:
        return lti.sigma(omegas)
    except np.linalg.LinAlgError:
        out = np.empty(omegas.size)
        for i, w in enumerate(omegas):
            try:
                out[i] = lti.sigma([w])[0]
            except np.linalg.LinAlgError:
                out[i] = np.inf
        return out


def _polish_peak(lti, omega, sigma):
    """Drive ``d sigma/d omega`` to zero near a located peak.

    Returns the improved ``(omega, sigma)``, or the input when no
    bracket is found or the root is not better.
    """
    try:
        s0, g0 = lti.sigma_and_slope(omega)
    except (np.linalg.LinAlgError, ValueError):
        return omega, sigma
    if g0 == 0.0 or not np.isfinite(g0):
        return omega, max(sigma, s0)

    def slope(w):
        return lti.sigma_and_slope(w)[1]

    r = 1e-7 * (1.0 + abs(omega))
    direction = 1.0 if g0 > 0 else -1.0
    other = None
    try:
        for _ in range(25):
            w = omega + direction * r
            if slope(w) * direction < 0:
                other = w
                break
            r *= 4.0
        if other is None:
            return omega, max(sigma, s0)
        lo, hi = sorted((omega, other))
        root = brentq(slope, lo, hi, xtol=1e-15 * (1.0 + abs(omega)), rtol=4e-16,
                      maxiter=200)
        s1 = lti.sigma_and_slope(root)[0]
    except (np.linalg.LinAlgError, ValueError, RuntimeError):
        return omega, max(sigma, s0)
    if s1 >= max(sigma, s0):
        return float(root), float(s1)
    return omega, max(sigma, s0)


def _frequency_scale(poles):
    if poles.size == 0:
        return 1.0
    return float(max(1.0, np.max(np.abs(poles))))


def linf_norm_sweep(lti, num=4096, omega_lo=None, omega_hi=None, refine=8):
    """Frequency sweep with golden-section refinement of the best peaks.

    Used when the eigenvalue route fails; it is slower and not certified.
    """
    poles = lti.poles()
    scale = _frequency_scale(poles)
    lo = omega_lo if omega_lo is not None else 1e-6 * scale
    hi = omega_hi if omega_hi is not None else 1e3 * scale
    grid = np.concatenate([[0.0], np.logspace(np.log10(lo), np.log10(hi), num)])
    if not lti.is_real:
        grid = np.concatenate([-grid[::-1], grid[1:]])
    vals = _safe_sigma(lti, grid)
    order = np.argsort(vals)[::-1]
    best_w, best_s = float(grid[order[0]]), float(vals[order[0]])
    seen = 0
    for i in order:
        if seen >= refine:
            break
        if 0 < i < grid.size - 1 and not (vals[i] >= vals[i - 1] and vals[i] >= vals[i + 1]):
            continue
        seen += 1
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        if a == b:
            continue
        res = minimize_scalar(lambda w: -_safe_sigma(lti, [w])[0], bounds=(a, b),
                              method="bounded", options={"xatol": 1e-12 * (1 + abs(grid[i]))})
        if -res.fun > best_s:
            best_s, best_w = float(-res.fun), float(res.x)
    return best_s, best_w


def linf_norm_dense(lti, opts=None, hints=()):
    """L-infinity norm of a small dense descriptor system.

    The lower bound ``gamma`` is the largest ``sigma`` seen so far; each step
    tests ``gamma (1 + 2 tol)`` with the level-set pencil and evaluates
    ``sigma`` at the midpoints of consecutive crossing frequencies.  The
    final peak is polished by solving ``d sigma / d omega = 0``.  The value
    at ``omega_cap`` stands in for ``omega = infinity``.
    """
    opts = opts or LevelSetOptions()
    if lti.order == 0:
        return NormResult(0.0, 0.0, 0)
    poles = lti.poles()
    real = lti.is_real
    scale = _frequency_scale(poles)
    cap = opts.omega_cap if opts.omega_cap is not None else 1e8 * scale

    cands = [0.0, *opts.frequencies(), *[h for h in hints if np.isfinite(h)]]
    if poles.size:
        cands += list(poles.imag) + list(np.abs(poles))
    cands = np.asarray(cands, dtype=float)
    cands = np.abs(cands) if real else np.concatenate([cands, -cands])
    cands = np.unique(cands)
    sig = _safe_sigma(lti, cands)
    if np.all(np.isinf(sig)):
        raise IrregularPencil("reduced pencil is singular at every probed frequency")
    if np.any(np.isinf(sig)):
        bad = cands[np.isinf(sig)][0]
        return NormResult(math.inf, float(bad), 0, converged=True)
    j = int(np.argmax(sig))
    gamma, omega = float(sig[j]), float(cands[j])
    gammas = [gamma]
    cap_sig = float(_safe_sigma(lti, [cap])[0])
    if not real:
        cap_sig = max(cap_sig, float(_safe_sigma(lti, [-cap])[0]))

    if gamma == 0.0:
        if cap_sig > 0:
            return NormResult(cap_sig, math.inf, 0, attained_at_infinity=True, gammas=[cap_sig])
        return NormResult(0.0, 0.0, 0, gammas=[0.0])

    converged = False
    fallback = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        M, N = build_level_set_pencil(lti, gamma * (1.0 + 2.0 * opts.rel_tol))
        try:
            ws = imaginary_eigenvalues(M, N, opts.imag_eig_residual_tol)
        except EigFailure as exc:
            log.warning("level-set eigensolver failed (%s); using sweep fallback", exc)
            s_sw, w_sw = linf_norm_sweep(lti, num=opts.sweep_points)
            if s_sw > gamma:
                gamma, omega = s_sw, w_sw
            fallback = True
            converged = True
            break
        if not ws:
            converged = True
            break
        ws = np.asarray(ws)
        pts = ws if ws.size == 1 else 0.5 * (ws[:-1] + ws[1:])
        vals = _safe_sigma(lti, pts)
        i = int(np.argmax(vals))
        if not vals[i] > gamma:
            # crossings detected but no midpoint improves: rounding level reached
            converged = True
            break
        gamma, omega = float(vals[i]), float(pts[i])
        gammas.append(gamma)
    else:
        raise MaxIterExceeded(f"level-set iteration did not converge in {opts.max_iter} steps")

    omega, gamma = _polish_peak(lti, omega, gamma)
    if real:
        omega = abs(omega)
    gammas.append(gamma)
    if cap_sig > gamma * (1.0 + opts.rel_tol):
        return NormResult(cap_sig, math.inf, it, attained_at_infinity=True,
                          fallback_used=fallback, converged=converged, gammas=gammas)
    return NormResult(gamma, omega, it, fallback_used=fallback, converged=converged,
                      gammas=gammas)


# ---------------------------------------------------------------------------
# large-scale fixed-parameter solver


def _frozen_reduction(mats, pair):
    E, A, B, C = mats
    V, W = pair.V, pair.W
    Wh = W.conj().T
    Er = Wh @ np.asarray(E @ V)
    Ar = Wh @ np.asarray(A @ V)
    Br = Wh @ np.asarray(B.toarray() if hasattr(B, "toarray") else B)
    Cr = np.asarray(C.toarray() if hasattr(C, "toarray") else C) @ V
    return DescriptorLTI(Er, Ar, Br, Cr)


def linf_norm_large(system, mu, omega_init=None, opts=None, pair=None, real=None):
    """``sup_w sigma(H[mu](i w))`` for a large system by subspace interpolation.

    Starting from ``pair`` (or an empty pair) extended by interpolation at
    the frequencies in ``omega_init`` (default: ``opts`` initial
    frequencies) and at the log-spaced seed frequencies, the method
    alternates between maximizing the reduced ``sigma`` with
    :func:`linf_norm_dense` and interpolating the full system at the
    reduced maximizer.  It stops once the maximizer moves by less than
    ``rel_tol * (1 + |w|)`` or the reduced norm stagnates.  The returned
    value is the largest full-system ``sigma`` actually evaluated.

    For real systems the bases are kept real by default (``real=None``)
    by splitting each direction into its real and imaginary parts, which
    keeps the reduced ``sigma`` even in ``omega``.
    """
    opts = opts or LevelSetOptions()
    mu = np.asarray(mu, dtype=float)
    symmetric = system.is_real
    real = symmetric if real is None else bool(real and symmetric)
    if omega_init is None:
        omega_init = opts.frequencies() or [0.0]
    omega_init = list(np.atleast_1d(omega_init)) + opts.seed_frequencies()
    omega_init = [float(w) for w in omega_init if np.isfinite(w)]
    if pair is None:
        pair = SubspacePair.empty(system.n, dtype=float if real else complex)
    elif real and not pair.is_real:
        real = False
    mats = system.matrices(mu)
    evaluations = {}

    def interpolate(w):
        nonlocal pair
        fr = system.frequency_response(mu, w)
        evaluations[w] = float(np.linalg.svd(fr.H, compute_uv=False)[0])
        Vn, Wn = expansion_directions(system, mu, w, response=fr)
        pair = extend_subspace(pair, Vn, Wn, real=real)

    for w in dict.fromkeys(abs(w) if symmetric else w for w in omega_init):
        try:
            interpolate(w)
        except SingularPencil as exc:
            log.warning("skipping initial frequency %g: %s", w, exc)
    if not evaluations:
        raise SingularPencil(f"no initial frequency could be evaluated at mu={mu.tolist()}")

    w_last = max(evaluations, key=evaluations.get)
    prev_gamma = None
    converged = False
    inner_opts = replace(opts, init_frequencies=tuple(evaluations))
    it = 0
    for it in range(1, opts.max_iter + 1):
        red = _frozen_reduction(mats, pair)
        try:
            nr = linf_norm_dense(red, inner_opts, hints=[w_last])
        except (EigFailure, MaxIterExceeded) as exc:
            log.warning("reduced norm failed at mu=%s: %s", mu.tolist(), exc)
            break
        if nr.attained_at_infinity or not np.isfinite(nr.omega_star):
            log.warning("reduced sigma maximal at infinity for mu=%s", mu.tolist())
            break
        w_new = abs(nr.omega_star) if real else nr.omega_star
        if abs(w_new - w_last) <= opts.rel_tol * (1.0 + abs(w_last)) or w_new in evaluations:
            converged = True
            break
        if prev_gamma is not None and abs(nr.gamma - prev_gamma) <= opts.rel_tol * nr.gamma \
                and abs(w_new - w_last) <= 1e-6 * (1.0 + abs(w_last)):
            converged = True
            break
        prev_gamma = nr.gamma
        try:
            interpolate(w_new)
        except SingularPencil as exc:
            log.warning("full pencil singular at reduced maximizer: %s", exc)
            break
        w_last = w_new
    else:
        log.warning("linf_norm_large hit max_iter=%d at mu=%s", opts.max_iter, mu.tolist())

    w_best = max(evaluations, key=evaluations.get)
    gamma = evaluations[w_best]
    if symmetric:
        w_best = abs(w_best)
    return NormResult(gamma, w_best, it, converged=converged, pair=pair,
                      evaluations=evaluations)
