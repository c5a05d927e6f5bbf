"""Greedy subspace frameworks for H-infinity norm minimization.

The basic method alternates between minimizing the reduced norm over the
parameter box, computing the full norm at the reduced minimizer, and
extending the projection subspaces by Hermite interpolation at the pair
``(mu, omega)`` found.  The extended method also interpolates at
``d (d + 1) / 2`` nearby points ``mu + h e_rq`` per iteration, where ``h``
is the length of the last step.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import HinfminError, IrregularPencil, SingularPencil
from .model import sigma_eval
from .norms import LevelSetOptions, linf_norm_large
from .optimize import OptimizerOptions, minimize_reduced_hinf
from .projection import (SubspacePair, check_reduced_regularity, expansion_directions,
                         extend_subspace, project)

__all__ = [
    "TerminationCriteria",
    "ExpansionPoint",
    "IterationRecord",
    "MinimizationResult",
    "InterpolationReport",
    "initialize_subspaces",
    "initialization_points",
    "extra_directions",
    "hinf_minimize_basic",
    "hinf_minimize_extended",
    "hinf_minimize",
    "termination_check",
    "verify_interpolation",
    "convergence_diagnostics",
]

log = logging.getLogger(__name__)

REASONS = ("mu_stagnation", "norm_stagnation", "k_max", "inner_failure")


@dataclass(frozen=True)
class TerminationCriteria:
    eps1: float = 1e-6
    eps2: float = 1e-6
    k_max: int = 20

    def __post_init__(self):
        if not (self.eps1 > 0 and self.eps2 > 0):
            raise ValueError("eps1 and eps2 must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")


@dataclass
class ExpansionPoint:
    mu: np.ndarray
    omega: float
    kind: str  # "init", "greedy" or "extra"
    iteration: int = 0
    full_norm: float = float("nan")


@dataclass
class IterationRecord:
    k: int
    mu: np.ndarray
    omega: float
    full_norm: float
    reduced_norm: float
    subspace_dim: int
    wall_time: float
    extra_points: list = field(default_factory=list)


@dataclass
class MinimizationResult:
    mu_star: np.ndarray
    omega_star: float
    norm_star: float
    history: list
    termination_reason: str
    expansion_points: list = field(default_factory=list)
    algorithm: str = "basic"
    optimizer: str = None
    problem: str = None
    iterations: int = 0
    wall_time: float = 0.0
    initial_dim: int = 0
    pair: SubspacePair = field(default=None, repr=False)
    message: str = ""

    @property
    def reduced_norms(self):
        return [r.reduced_norm for r in self.history]


# ---------------------------------------------------------------------------
# initialization


def initialization_points(box, omega_max, num_points=10):
    """``(mu_j, omega_j)`` at ``t_j = j / N``, ``j = 0..N-1``, on the segment from
    ``(box.lower, 0)`` to ``(box.upper, omega_max)``."""
    if not omega_max > 0:
        raise ValueError("omega_max must be positive")
    if num_points < 1:
        raise ValueError("num_points must be at least 1")
    ts = np.arange(num_points) / num_points
    return [(box.lower + t * box.width, float(t * omega_max)) for t in ts]


def _resolve_real(system, real):
    return system.is_real if real is None else bool(real and system.is_real)


def initialize_subspaces(system, box=None, omega_max=None, num_points=10, pair=None,
                         points_out=None, real=None):
    """Subspace pair interpolating the full system at the initialization points.

    Points where the pencil is singular are skipped with a warning; at
    least one has to succeed.  ``real`` selects real bases (default: when
    the system data is real), see :func:`~hinfmin.projection.extend_subspace`.
    """
    box = box or system.box
    real = _resolve_real(system, real)
    pair = pair if pair is not None else SubspacePair.empty(system.n, float if real else complex)
    ok = 0
    for mu, w in initialization_points(box, omega_max, num_points):
        try:
            Vn, Wn = expansion_directions(system, mu, w)
        except SingularPencil as exc:
            log.warning("skipping initialization point mu=%s omega=%g: %s", mu.tolist(), w, exc)
            continue
        pair = extend_subspace(pair, Vn, Wn, real=real)
        ok += 1
        if points_out is not None:
            points_out.append(ExpansionPoint(np.array(mu), w, "init", 0))
    if ok == 0:
        raise SingularPencil("every initialization point hit a singular pencil")
    return pair


# ---------------------------------------------------------------------------
# termination


def termination_check(history, criteria, reduced_norms=None):
    """``None`` to continue, otherwise the reason to stop.

    Stops when ``k > k_max``, when
    ``||mu_k - mu_{k-1}|| < eps1 * ||mu_k + mu_{k-1}|| / 2``, or when the
    last two reduced norms agree up to ``eps2`` relative to their mean.
    ``history`` is a list of :class:`IterationRecord` or of parameter
    vectors.
    """
    if not history:
        return None
    mus = [np.atleast_1d(np.asarray(h.mu if isinstance(h, IterationRecord) else h, dtype=float))
           for h in history]
    if reduced_norms is None:
        reduced_norms = [h.reduced_norm for h in history if isinstance(h, IterationRecord)]
    k = len(mus)
    if k > criteria.k_max:
        return "k_max"
    if k >= 2:
        a, b = mus[-1], mus[-2]
        if np.linalg.norm(a - b) < criteria.eps1 * 0.5 * np.linalg.norm(a + b):
            return "mu_stagnation"
    if len(reduced_norms) >= 2:
        f1, f0 = reduced_norms[-1], reduced_norms[-2]
        if abs(f1 - f0) < criteria.eps2 * 0.5 * abs(f1 + f0):
            return "norm_stagnation"
    return None


# ---------------------------------------------------------------------------
# the greedy loop


def extra_directions(d):
    """Unit vectors ``e_rq = (e_r + e_q) / sqrt(2)`` for ``r < q`` and ``e_rr = e_r``."""
    out = []
    for r in range(d):
        for q in range(r, d):
            e = np.zeros(d)
            if r == q:
                e[r] = 1.0
            else:
                e[r] = e[q] = 1.0 / math.sqrt(2.0)
            out.append(e)
    return out


def _level_set_options(opts, omega_max):
    return replace(opts or LevelSetOptions(), omega_max=omega_max)


def _full_norm(system, mu, level_opts, hint=None, real=None, pair=None):
    # warm start: the greedy subspace already approximates H near mu
    freqs = list(level_opts.frequencies())
    if hint is not None and np.isfinite(hint):
        freqs.append(float(hint))
    return linf_norm_large(system, mu, omega_init=freqs, opts=level_opts, real=real, pair=pair)


def _greedy(system, box, criteria, optimizer_opts, omega_max, extended, num_init=10,
            level_opts=None, threads=1, pair=None, problem=None, real=None, on_iteration=None):
    t0 = time.perf_counter()
    real = _resolve_real(system, real)
    box = box or system.box
    criteria = criteria or TerminationCriteria()
    optimizer_opts = optimizer_opts or OptimizerOptions()
    if omega_max is None:
        raise ValueError("omega_max is required")
    level_opts = _level_set_options(level_opts, omega_max)
    optimizer_opts = replace(optimizer_opts, level_set=level_opts)
    method = optimizer_opts.resolve(box.d)

    points = []
    if pair is None:
        pair = initialize_subspaces(system, box, omega_max, num_init, points_out=points,
                                    real=real)
    initial_dim = pair.k
    history = []
    best = None  # (norm, mu, omega)
    reason = None
    message = ""
    hints = [p.omega for p in points]

    for k in range(1, criteria.k_max + 2):
        if k > criteria.k_max:
            reason = "k_max"
            break
        reduced = project(system, pair)
        try:
            rm = minimize_reduced_hinf(reduced, box, optimizer_opts, hints=hints)
        except (HinfminError, np.linalg.LinAlgError) as exc:
            reason, message = "inner_failure", f"reduced minimization failed: {exc}"
            log.error(message)
            break
        mu_k = rm.mu
        try:
            nr = _full_norm(system, mu_k, level_opts, rm.omega, real, pair)
        except (HinfminError, np.linalg.LinAlgError) as exc:
            reason, message = "inner_failure", f"full norm failed at mu={mu_k.tolist()}: {exc}"
            log.error(message)
            break
        omega_k = nr.omega_star
        new_points = []
        if not np.isfinite(omega_k):
            reason, message = "inner_failure", "full norm attained at infinity"
            break
        new_points.append(ExpansionPoint(mu_k, omega_k, "greedy", k, nr.gamma))
        if best is None or nr.gamma < best[0]:
            best = (nr.gamma, mu_k, omega_k)

        extras = []
        if extended and k >= 2:
            h = float(np.linalg.norm(mu_k - history[-1].mu))
            cands = [mu_k + h * e for e in extra_directions(box.d)]

            def solve_extra(mu_e):
                try:
                    return _full_norm(system, mu_e, level_opts, omega_k, real, pair)
                except (HinfminError, np.linalg.LinAlgError) as exc:
                    log.warning("skipping extra point mu=%s: %s", mu_e.tolist(), exc)
                    return None

            if threads > 1 and len(cands) > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    results = list(pool.map(solve_extra, cands))
            else:
                results = [solve_extra(m) for m in cands]
            for mu_e, res in zip(cands, results):
                if res is None or not np.isfinite(res.omega_star):
                    continue
                pt = ExpansionPoint(mu_e, res.omega_star, "extra", k, res.gamma)
                extras.append(pt)
                new_points.append(pt)

        for pt in new_points:
            try:
                Vn, Wn = expansion_directions(system, pt.mu, pt.omega)
            except SingularPencil as exc:
                log.warning("cannot expand at mu=%s omega=%g: %s", pt.mu.tolist(), pt.omega, exc)
                continue
            pair = extend_subspace(pair, Vn, Wn, real=real)
            points.append(pt)
            hints.append(pt.omega)

        history.append(IterationRecord(k, mu_k, omega_k, nr.gamma, rm.value, pair.k,
                                       time.perf_counter() - t0, extras))
        if on_iteration is not None:
            on_iteration(history[-1], pair, list(points))
        log.info("k=%d mu=%s omega=%.6g full=%.10g reduced=%.10g dim=%d", k, mu_k.tolist(),
                 omega_k, nr.gamma, rm.value, pair.k)
        reason = termination_check(history, criteria)
        if reason == "k_max":
            # the cap is checked before starting the next iteration
            reason = None
        if reason:
            break

    if best is None:
        mu_star, omega_star, norm_star = None, float("nan"), float("nan")
    else:
        # best-so-far over all greedy iterates, then an independent final check
        norm_star, mu_star, omega_star = best
        try:
            ev = sigma_eval(system, mu_star, omega_star)
            norm_star = ev.sigma if ev.sigma > norm_star * (1.0 - 1e-8) else norm_star
        except SingularPencil:
            pass
    return MinimizationResult(
        mu_star=mu_star, omega_star=omega_star, norm_star=norm_star, history=history,
        termination_reason=reason or "k_max", expansion_points=points,
        algorithm="extended" if extended else "basic", optimizer=method,
        problem=problem or system.name, iterations=len(history),
        wall_time=time.perf_counter() - t0, initial_dim=initial_dim, pair=pair,
        message=message)


def hinf_minimize_basic(system, box=None, criteria=None, optimizer_opts=None, omega_max=None,
                        **kwargs):
    """Basic greedy method (one interpolation point per iteration).

    Parameters
    ----------
    system : ParametricDescriptorSystem
    box : ParameterBox, optional
        Defaults to ``system.box``.
    criteria : TerminationCriteria, optional
    optimizer_opts : OptimizerOptions, optional
    omega_max : float
        Upper end of the initialization frequency range.
    num_init : int, optional
        Initialization points (default 10).
    level_opts : LevelSetOptions, optional
    threads : int, optional
    pair : SubspacePair, optional
        Start from this pair instead of initializing.
    real : bool, optional
        Real bases for real systems (default).  ``False`` keeps complex
        bases, whose reduced models lose the symmetry in ``omega``.
    on_iteration : callable, optional
        Called as ``on_iteration(record, pair, points)`` after each
        expansion, with the expansion points accumulated so far.

    Returns
    -------
    MinimizationResult
    """
    return _greedy(system, box, criteria, optimizer_opts, omega_max, False, **kwargs)


def hinf_minimize_extended(system, box=None, criteria=None, optimizer_opts=None, omega_max=None,
                           **kwargs):
    """Extended greedy method: also interpolates at ``mu_k + h_k e_rq``.

    Same parameters as :func:`hinf_minimize_basic`.  The extra full norm
    solves of one iteration run on ``threads`` workers.
    """
    return _greedy(system, box, criteria, optimizer_opts, omega_max, True, **kwargs)


def hinf_minimize(system, algorithm="basic", **kwargs):
    if algorithm not in ("basic", "extended"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    fn = hinf_minimize_extended if algorithm == "extended" else hinf_minimize_basic
    return fn(system, **kwargs)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class InterpolationReport:
    mu: np.ndarray
    omega: float
    sigma_residual: float
    sigma2_residual: float
    gradient_residual: float
    omega_derivative_full: float
    omega_derivative_reduced: float
    simple: bool
    passed: bool
    scale: float

    def as_dict(self):
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.__dict__.items()}


def verify_interpolation(system, pair, mu_hat, omega_hat, tol=1e-6, check_stationarity=False):
    """Hermite interpolation residuals at an expansion point.

    Residuals are relative to ``1 + sigma``: ``sigma`` and, for square
    transfer functions, ``sigma_2``; the parameter gradient and
    ``sigma_omega`` when ``sigma`` is simple.  With ``check_stationarity``
    both ``sigma_omega`` values must also vanish, which holds at points
    where ``omega_hat`` maximizes ``sigma`` over frequency (greedy and
    extra points, not initialization points).
    """
    mu_hat = np.atleast_1d(np.asarray(mu_hat, dtype=float))
    full = sigma_eval(system, mu_hat, omega_hat)
    red_sys = project(system, pair)
    red = sigma_eval(red_sys, mu_hat, omega_hat)
    scale = 1.0 + full.sigma
    r_sigma = abs(full.sigma - red.sigma) / scale
    r_sigma2 = (abs(full.sigma2 - red.sigma2) / scale
                if system.m == system.p and system.m > 1 else 0.0)
    simple = full.simple and red.simple
    r_grad = 0.0
    dw_full = dw_red = 0.0
    if simple:
        r_grad = float(np.linalg.norm(full.grad_sigma_mu - red.grad_sigma_mu)) / scale
        dw_full, dw_red = full.d_sigma_d_omega, red.d_sigma_d_omega
    residuals = [r_sigma, r_sigma2, r_grad, abs(dw_full - dw_red) / scale]
    if check_stationarity and simple:
        residuals += [abs(dw_full) / scale, abs(dw_red) / scale]
    passed = bool(all(r <= tol for r in residuals))
    return InterpolationReport(mu_hat, float(omega_hat), r_sigma, r_sigma2, r_grad, dw_full,
                               dw_red, bool(simple), passed, scale)


def convergence_diagnostics(history, mu_star_ref=None, exact_tol=1e-14):
    """Errors ``e_k = ||mu_k - mu*||`` and ratios ``e_{k+1} / (e_k max(e_k, e_{k-1}))``.

    Returns a list of dict rows, one per iterate.  ``ratio`` is ``None``
    where it is undefined, and ``exact`` marks iterates with
    ``e_k <= exact_tol`` (the ratio's denominator of the next row would
    vanish).
    """
    mus = [np.atleast_1d(np.asarray(h.mu if isinstance(h, IterationRecord) else h, dtype=float))
           for h in history]
    if not mus:
        return []
    ref = np.atleast_1d(np.asarray(mu_star_ref if mu_star_ref is not None else mus[-1],
                                   dtype=float))
    errs = [float(np.linalg.norm(m - ref)) for m in mus]
    rows = []
    for k, e in enumerate(errs):
        ratio = None
        if k >= 2:
            denom = errs[k - 1] * max(errs[k - 1], errs[k - 2])
            if denom > exact_tol ** 2:
                ratio = e / denom
        rows.append({"k": k + 1, "error": e, "ratio": ratio, "exact": e <= exact_tol,
                     "drop": (errs[k - 1] / e if k >= 1 and e > 0 else None)})
    return rows
