"""Minimization of the reduced H-infinity norm over the parameter box.

Two methods are provided: a global 1-D method based on quadratic support
functions with a user-supplied lower bound on the curvature, and a
multistart box-constrained BFGS with a weak-Wolfe line search for
``d >= 2`` (usable for ``d = 1`` too).
"""

from __future__ import annotations

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .errors import IrregularPencil, NonSimple, SingularPencil
from .model import Constant, ParameterBox, sigma_eval
from .norms import LevelSetOptions, linf_norm_dense

__all__ = [
    "ObjectiveProbe",
    "OptimizerOptions",
    "OptimizeOutcome",
    "ReducedObjective",
    "ReducedMinimum",
    "support_minimize_1d",
    "projected_quasi_newton",
    "minimize_reduced_hinf",
    "default_starts",
]

log = logging.getLogger(__name__)

METHODS = ("auto", "support1d", "qn")


@dataclass
class ObjectiveProbe:
    value: float
    gradient: np.ndarray
    omega_at_value: float = float("nan")
    valid_gradient: bool = True
    failed: bool = False


@dataclass
class OptimizerOptions:
    """Settings for the inner (reduced) minimization.

    ``method`` is ``"support1d"`` (``d = 1`` only), ``"qn"`` or ``"auto"``
    (support functions for ``d = 1``, quasi-Newton otherwise).
    ``num_starts`` counts the box center plus uniform random points; box
    vertices are added on top when ``d <= 3``.
    """

    method: str = "auto"
    gamma_hessian_lower: float = -10000.0
    abs_tol: float = 1e-8
    stationarity_tol: float = 1e-12
    num_starts: int = 5
    max_evals: int = 3000
    max_iter: int = 200
    seed: int = 0
    threads: int = 1
    fd_step: float = 1e-7
    level_set: LevelSetOptions = field(default_factory=LevelSetOptions)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown optimizer method {self.method!r}; expected one of {METHODS}")
        if not (self.abs_tol > 0 and self.stationarity_tol > 0):
            raise ValueError("optimizer tolerances must be positive")
        if self.num_starts < 1:
            raise ValueError("num_starts must be at least 1")

    def resolve(self, d):
        if self.method == "auto":
            return "support1d" if d == 1 else "qn"
        if self.method == "support1d" and d != 1:
            raise ValueError(f"support1d needs a single parameter, problem has d={d}")
        return self.method


@dataclass
class OptimizeOutcome:
    x: np.ndarray
    value: float
    omega: float = float("nan")
    evaluations: int = 0
    converged: bool = True
    lower_bound: float = -math.inf
    failed: bool = False
    message: str = ""

    def __iter__(self):
        return iter((self.x, self.value))


def _probe(objective, x):
    out = objective(x)
    if isinstance(out, ObjectiveProbe):
        return out
    value, grad = out
    return ObjectiveProbe(float(value), np.atleast_1d(np.asarray(grad, dtype=float)))


def _better(v1, x1, v2, x2):
    """Strictly better value, ties broken by smaller lexicographic ``x``."""
    if v1 != v2:
        return v1 < v2
    return tuple(np.atleast_1d(x1)) < tuple(np.atleast_1d(x2))


# ---------------------------------------------------------------------------
# 1-D support functions


def _upper_hull(slopes, intercepts):
    """Indices of the lines on the upper envelope, in increasing slope order."""
    order = np.lexsort((intercepts, slopes))
    hull = []
    for i in order:
        if hull and slopes[hull[-1]] == slopes[i]:
            hull.pop()
        while len(hull) >= 2:
            j, k = hull[-2], hull[-1]
            # k is useless if line i overtakes j no later than k does
            lhs = (intercepts[i] - intercepts[j]) * (slopes[k] - slopes[j])
            rhs = (intercepts[k] - intercepts[j]) * (slopes[i] - slopes[j])
            if lhs >= rhs:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def _envelope_minimum(xs, fs, gs, gamma, a, b):
    """Minimize ``max_j q_j`` over ``[a, b]``; returns ``(x, value)``."""
    xs, fs, gs = map(np.asarray, (xs, fs, gs))
    alpha = gs - gamma * xs
    beta = fs - gs * xs + 0.5 * gamma * xs * xs
    hull = np.asarray(_upper_hull(alpha, beta))
    ha, hb = alpha[hull], beta[hull]
    # breakpoints increase along the hull; line i is active on [t_{i-1}, t_i]
    t = (hb[:-1] - hb[1:]) / (ha[1:] - ha[:-1])
    cands = [np.array([a, b]), t[(t > a) & (t < b)]]
    if gamma > 0:
        v = -ha / gamma
        cands.append(v[(v > a) & (v < b)])
    cands = np.concatenate(cands)
    active = np.searchsorted(t, cands)
    env = 0.5 * gamma * cands ** 2 + ha[active] * cands + hb[active]
    i = int(np.argmin(env))
    return float(cands[i]), float(env[i])


def support_minimize_1d(objective, interval, gamma, abs_tol=1e-8, max_evals=3000,
                        fd_step=1e-7):
    """Global minimizer of a 1-D function with curvature bounded below by ``gamma``.

    Every evaluated point ``x_j`` contributes the support quadratic
    ``f(x_j) + f'(x_j)(x - x_j) + gamma/2 (x - x_j)^2``.  Their maximum is
    a global under-estimator; its minimizer over ``[a, b]`` is the next
    evaluation point.  Stops once the best value exceeds that lower bound
    by less than ``abs_tol``.

    Parameters
    ----------
    objective : callable
        ``x -> ObjectiveProbe`` or ``x -> (value, derivative)``.
    interval : (float, float)
    gamma : float
        Lower bound on ``f''`` over the interval; validity is the caller's
        responsibility.
    abs_tol : float
    max_evals : int

    Returns
    -------
    OptimizeOutcome
        Unpacks as ``(x_star, value)``.
    """
    a, b = (float(v) for v in interval)
    if not (np.isfinite(a) and np.isfinite(b)) or a > b:
        raise ValueError(f"invalid interval [{a}, {b}]")
    xs, fs, gs, omegas = [], [], [], []

    def evaluate(x):
        p = _probe(objective, x)
        if p.failed or not np.isfinite(p.value):
            raise IrregularPencil(f"objective evaluation failed at x={x:.16g}")
        g = float(np.atleast_1d(p.gradient)[0]) if p.valid_gradient else float("nan")
        if not np.isfinite(g):
            h = fd_step * max(1.0, b - a)
            x2 = x + h if x + h <= b else x - h
            g = (_probe(objective, x2).value - p.value) / (x2 - x)
        xs.append(x)
        fs.append(p.value)
        gs.append(g)
        omegas.append(p.omega_at_value)

    if a == b:
        evaluate(a)
        return OptimizeOutcome(np.array([a]), fs[0], omegas[0], 1, True, fs[0])

    for x in (a, b, 0.5 * (a + b)):
        evaluate(x)
    converged = False
    lower = -math.inf
    while True:
        x_next, lower = _envelope_minimum(xs, fs, gs, gamma, a, b)
        best = min(fs)
        if best - lower < abs_tol:
            converged = True
            break
        if len(xs) >= max_evals:
            break
        if any(x_next == x for x in xs):
            # envelope touches an evaluated point: no further progress possible
            converged = True
            break
        evaluate(x_next)

    best_i = 0
    for i in range(1, len(xs)):
        if _better(fs[i], xs[i], fs[best_i], xs[best_i]):
            best_i = i
    msg = "" if converged else f"max_evals={max_evals} reached (gap {min(fs) - lower:.3e})"
    return OptimizeOutcome(np.array([xs[best_i]]), fs[best_i], omegas[best_i], len(xs),
                           converged, lower, message=msg)


# ---------------------------------------------------------------------------
# projected BFGS


def default_starts(box, num_starts=5, seed=0):
    """Box center, box vertices when ``d <= 3``, and ``num_starts - 1`` uniform points."""
    starts = [box.center]
    if box.d <= 3:
        starts += box.vertices()
    rng = np.random.default_rng(seed)
    for _ in range(num_starts - 1):
        starts.append(box.lower + rng.random(box.d) * box.width)
    return starts


class _Scaled:
    """Objective in unit-box coordinates ``x = (mu - lower) / width``."""

    def __init__(self, objective, box, fd_step):
        self.objective = objective
        self.box = box
        self.width = np.where(box.width > 0, box.width, 1.0)
        self.fixed = box.width == 0
        self.fd_step = fd_step
        self.evals = 0

    def to_mu(self, x):
        return self.box.clip(self.box.lower + x * self.width)

    def __call__(self, x):
        self.evals += 1
        p = _probe(self.objective, self.to_mu(x))
        if p.failed or not np.isfinite(p.value):
            return math.inf, None, p.omega_at_value
        g = np.asarray(p.gradient, dtype=float) * self.width if p.valid_gradient else None
        if g is None or not np.all(np.isfinite(g)):
            g = np.zeros(x.size)
            for i in range(x.size):
                if self.fixed[i]:
                    continue
                h = self.fd_step if x[i] + self.fd_step <= 1.0 else -self.fd_step
                e = x.copy()
                e[i] += h
                self.evals += 1
                g[i] = (_probe(self.objective, self.to_mu(e)).value - p.value) / h
        g[self.fixed] = 0.0
        return p.value, g, p.omega_at_value


def _free_mask(x, g):
    at_lo = (x <= 0.0) & (g > 0)
    at_hi = (x >= 1.0) & (g < 0)
    return ~(at_lo | at_hi)


def _weak_wolfe(fun, x, f, g, p, t_max, c1=1e-4, c2=0.9, max_steps=40):
    """Bisection/expansion search for a weak-Wolfe step in ``(0, t_max]``.

    A step that satisfies the sufficient decrease condition at ``t_max``
    (the box boundary) is accepted without the curvature condition.
    """
    slope = float(g @ p)
    lo, hi = 0.0, math.inf
    t = min(1.0, t_max)
    best = None
    for _ in range(max_steps):
        xt = np.clip(x + t * p, 0.0, 1.0)
        ft, gt, wt = fun(xt)
        if not np.isfinite(ft) or ft > f + c1 * t * slope:
            hi = t
        else:
            best = (t, xt, ft, gt, wt)
            if gt @ p >= c2 * slope or t >= t_max:
                return best
            lo = t
        if hi < math.inf:
            t = 0.5 * (lo + hi)
        else:
            t = min(2.0 * t, t_max)
        if hi - lo <= 1e-16 * max(1.0, t):
            break
    return best


def _qn_single(fun, x0, tol, max_iter):
    d = x0.size
    x = np.clip(x0, 0.0, 1.0)
    f, g, w = fun(x)
    if not np.isfinite(f):
        return x, f, w, False, "start point failed"
    Hinv = np.eye(d)
    for _ in range(max_iter):
        free = _free_mask(x, g)
        pg = np.where(free, g, 0.0)
        if np.linalg.norm(pg) <= tol * (1.0 + abs(f)):
            return x, f, w, True, "stationary"
        p = np.zeros(d)
        Hf = Hinv[np.ix_(free, free)]
        p[free] = -Hf @ pg[free]
        if not p @ g < 0:
            Hinv = np.eye(d)
            p = -pg
        with np.errstate(divide="ignore", invalid="ignore"):
            room = np.where(p > 0, (1.0 - x) / p, np.where(p < 0, -x / p, np.inf))
        t_max = float(np.min(room))
        if not t_max > 0:
            return x, f, w, True, "pinned at bounds"
        step = _weak_wolfe(fun, x, f, g, p, t_max)
        if step is None:
            return x, f, w, True, "line search failed"
        _, xn, fn, gn, wn = step
        s, y = xn - x, gn - g
        x, f, g, w = xn, fn, gn, wn
        if np.linalg.norm(s) <= 1e-15:
            return x, f, w, True, "step vanished"
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            V = np.eye(d) - rho * np.outer(s, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
    return x, f, w, False, "max_iter reached"


def projected_quasi_newton(objective, box, starts=None, stationarity_tol=1e-12, max_iter=200,
                           threads=1, fd_step=1e-7, seed=0, num_starts=5):
    """Multistart box-constrained BFGS.

    Runs in unit-box coordinates.  Components at an active bound whose
    gradient points outward are pinned; the line search step is capped at
    the box boundary.  Invalid gradients are replaced by one-sided finite
    differences.

    Parameters
    ----------
    objective : callable
        ``mu -> ObjectiveProbe`` or ``mu -> (value, gradient)``.
    box : ParameterBox
    starts : sequence of arrays, optional
        Default :func:`default_starts`.
    stationarity_tol : float
        Stop when the projected gradient norm is below ``tol (1 + |f|)``.

    Returns
    -------
    OptimizeOutcome
        ``failed`` is set when no start produced a finite value.
    """
    if not isinstance(box, ParameterBox):
        box = ParameterBox(*box)
    if starts is None:
        starts = default_starts(box, num_starts, seed)
    scaled = _Scaled(objective, box, fd_step)
    width = scaled.width
    xs0 = [np.clip((np.asarray(s, dtype=float) - box.lower) / width, 0.0, 1.0) for s in starts]

    def run(x0):
        return _qn_single(scaled, x0, stationarity_tol, max_iter)

    if threads > 1 and len(xs0) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(run, xs0))
    else:
        runs = [run(x0) for x0 in xs0]

    best = None
    for x, f, w, ok, msg in runs:
        mu = scaled.to_mu(x)
        if not np.isfinite(f):
            continue
        if best is None or _better(f, mu, best[1], best[0]):
            best = (mu, f, w, ok, msg)
    if best is None:
        return OptimizeOutcome(box.center, math.inf, float("nan"), scaled.evals, False,
                               failed=True, message="all starts failed")
    mu, f, w, ok, msg = best
    return OptimizeOutcome(mu, f, w, scaled.evals, ok, message=msg)


# ---------------------------------------------------------------------------
# reduced objective


class ReducedObjective:
    """``mu -> ||H_r[mu]||_Linf`` with its gradient, cached by the exact bits of ``mu``.

    A probe that hits a singular or irregular reduced pencil is retried
    once at ``mu + 1e-8 * diameter``; if that fails too it is reported as
    failed.
    """

    def __init__(self, reduced, level_set=None, hints=(), gap_tol=1e-8):
        self.reduced = reduced
        self.opts = level_set or LevelSetOptions()
        self.hints = tuple(hints)
        self.gap_tol = gap_tol
        self.cache = {}
        self._lock = threading.Lock()
        self.failures = 0
        self.last_omega = float("nan")

    def _compute(self, mu):
        lti = self.reduced.at(mu)
        # the last maximizer is a good guess for a nearby parameter
        nr = linf_norm_dense(lti, self.opts, hints=self.hints + (self.last_omega,))
        if np.isfinite(nr.omega_star):
            self.last_omega = nr.omega_star
        if not np.isfinite(nr.gamma):
            raise IrregularPencil(f"reduced norm is infinite at mu={mu.tolist()}")
        if nr.attained_at_infinity or not np.isfinite(nr.omega_star):
            return ObjectiveProbe(nr.gamma, np.full(mu.size, np.nan), math.inf, False)
        try:
            ev = sigma_eval(self.reduced, mu, nr.omega_star, self.gap_tol)
        except SingularPencil:
            return ObjectiveProbe(nr.gamma, np.full(mu.size, np.nan), nr.omega_star, False)
        return ObjectiveProbe(nr.gamma, ev.grad_sigma_mu, nr.omega_star, ev.simple)

    def __call__(self, mu):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        key = mu.tobytes()
        with self._lock:
            hit = self.cache.get(key)
        if hit is not None:
            return hit
        try:
            probe = self._compute(mu)
        except (IrregularPencil, SingularPencil, np.linalg.LinAlgError) as exc:
            box = self.reduced.box
            shift = 1e-8 * max(box.diameter, 1e-300)
            mu2 = mu + shift
            if not box.contains(mu2):
                mu2 = mu - shift
            log.debug("probe failed at mu=%s (%s); retrying at perturbed point", mu, exc)
            try:
                probe = self._compute(mu2)
            except (IrregularPencil, SingularPencil, np.linalg.LinAlgError):
                with self._lock:
                    self.failures += 1
                probe = ObjectiveProbe(math.inf, np.full(mu.size, np.nan), float("nan"),
                                       False, failed=True)
        with self._lock:
            self.cache[key] = probe
        return probe


@dataclass
class ReducedMinimum:
    mu: np.ndarray
    value: float
    omega: float
    evaluations: int
    converged: bool
    method: str
    message: str = ""

    def __iter__(self):
        return iter((self.mu, self.value, self.omega))


def _parameter_free(system):
    """True when every term that depends on ``mu`` has a zero matrix."""
    for fam in system.families:
        for c, M in fam.terms:
            if isinstance(c, Constant):
                continue
            if (M.count_nonzero() if sps.issparse(M) else np.count_nonzero(M)):
                return False
    return True


def minimize_reduced_hinf(reduced, box=None, opts=None, hints=()):
    """``argmin_{mu in box} ||H_r[mu]||_Hinf`` for a reduced system.

    Returns
    -------
    ReducedMinimum
        Unpacks as ``(mu_next, reduced_norm, omega_reduced)``.

    Raises
    ------
    IrregularPencil
        When the objective fails at a probe point and its perturbed retry
        (support method), or at every start (quasi-Newton).
    """
    opts = opts or OptimizerOptions()
    box = box or reduced.box
    method = opts.resolve(box.d)
    objective = ReducedObjective(reduced, opts.level_set, hints)
    if _parameter_free(reduced):
        mu = box.center
        p = objective(mu)
        if p.failed:
            raise IrregularPencil(f"reduced objective failed at mu={mu.tolist()}")
        return ReducedMinimum(mu, p.value, p.omega_at_value, 1, True, method)
    if method == "support1d":
        out = support_minimize_1d(lambda x: objective(np.array([x])),
                                  (box.lower[0], box.upper[0]), opts.gamma_hessian_lower,
                                  opts.abs_tol, opts.max_evals, opts.fd_step)
    else:
        out = projected_quasi_newton(objective, box, None, opts.stationarity_tol, opts.max_iter,
                                     opts.threads, opts.fd_step, opts.seed, opts.num_starts)
        if out.failed:
            raise IrregularPencil("reduced objective failed at every quasi-Newton start")
    if not out.converged:
        log.warning("reduced minimization (%s) did not converge: %s", method, out.message)
    return ReducedMinimum(np.asarray(out.x, dtype=float), float(out.value), float(out.omega),
                          out.evaluations, out.converged, method, out.message)
