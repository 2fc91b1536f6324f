"""Bounded-growth creep curve and its Levenberg-Marquardt fit.

The curve is creep(t) = a * (1 - exp(-b * t^c)): zero at t = 0, strictly
increasing, saturating at `a` for positive parameters. Fitting works in
log-parameter space (ln a, ln b, ln c) so positivity needs no constrained
solver, with damping that grows on rejected steps and shrinks on accepted
ones, plus a few perturbed restarts when a start fails to converge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class FitError(ValueError):
    """Curve fitting cannot proceed (degenerate data)."""


# Convergence thresholds and parameter box, shared by every start.
STEP_TOL = 1e-10
COST_REL_TOL = 1e-12
MAX_EVALS = 10_000
_LOG_BOUNDS = (
    (-50.0, 50.0),              # ln a
    (math.log(1e-8), math.log(1e3)),   # ln b
    (math.log(1e-2), math.log(2.0)),   # ln c  (c <= 2)
)


@dataclass
class CreepCurveParams:
    """Fitted (a, b, c) with fit diagnostics."""

    a: float
    b: float
    c: float
    r2: float
    n_evals: int
    converged: bool = True

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.a, self.b, self.c)


def creep_model_eval(params, t):
    """Evaluate the curve at time(s) t >= 0 (days); returns microstrain."""
    if isinstance(params, CreepCurveParams):
        a, b, c = params.as_tuple()
    else:
        a, b, c = params
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise ValueError("creep model is defined for t >= 0 only")
    value = a * (1.0 - np.exp(-b * np.power(t_arr, c)))
    return float(value) if np.isscalar(t) or t_arr.ndim == 0 else value


def _model_and_jac(theta: np.ndarray, t: np.ndarray):
    """Curve values and Jacobian w.r.t. (ln a, ln b, ln c)."""
    a, b, c = np.exp(theta)
    tc = np.power(t, c)
    decay = np.exp(-b * tc)
    y = a * (1.0 - decay)
    d_la = y
    d_lb = a * decay * b * tc
    with np.errstate(divide="ignore", invalid="ignore"):
        log_t = np.where(t > 0, np.log(t), 0.0)
    d_lc = d_lb * c * log_t  # t = 0 contributes nothing (tc = 0 there)
    return y, np.column_stack([d_la, d_lb, d_lc])


def _clip_theta(theta: np.ndarray) -> np.ndarray:
    out = theta.copy()
    for i, (lo, hi) in enumerate(_LOG_BOUNDS):
        out[i] = min(max(out[i], lo), hi)
    return out


def _lm_from_start(theta0, t, y, budget):
    """One damped least-squares descent; returns (theta, cost, evals, converged)."""
    theta = _clip_theta(np.asarray(theta0, dtype=np.float64))
    pred, jac = _model_and_jac(theta, t)
    evals = 1
    resid = y - pred
    cost = float(resid @ resid)
    lam = 1e-3
    converged = False
    while evals < budget:
        grad = jac.T @ resid
        hess = jac.T @ jac
        diag = np.clip(np.diag(hess), 1e-12, None)
        accepted = False
        while evals < budget:
            try:
                step = np.linalg.solve(hess + lam * np.diag(diag), grad)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                trial = _clip_theta(theta + step)
                pred_try, jac_try = _model_and_jac(trial, t)
                evals += 1
                resid_try = y - pred_try
                cost_try = float(resid_try @ resid_try)
                if np.isfinite(cost_try) and cost_try <= cost:
                    rel_drop = (cost - cost_try) / max(cost, 1e-300)
                    step_norm = float(np.linalg.norm(trial - theta))
                    theta, pred, jac, resid, cost = trial, pred_try, jac_try, resid_try, cost_try
                    lam = max(lam / 3.0, 1e-14)
                    accepted = True
                    if step_norm < STEP_TOL or rel_drop < COST_REL_TOL:
                        converged = True
                    break
            lam *= 3.0
            if lam > 1e14:
                break
        if converged or not accepted:
            break
    return theta, cost, evals, converged


def fit_creep_curve(times, creeps, max_evals: int = MAX_EVALS,
                    n_restarts: int = 3, seed: int = 0) -> CreepCurveParams:
    """Least-squares fit of (a, b, c) to a measured creep series.

    Needs at least 4 strictly-increasing time points. A fit that exhausts
    its evaluation budget without converging is returned flagged
    (converged=False) carrying the best parameters seen.
    """
    t = np.asarray(times, dtype=np.float64)
    y = np.asarray(creeps, dtype=np.float64)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError(f"times {t.shape} and creeps {y.shape} must be equal-length 1-d")
    if len(t) < 4:
        raise ValueError(f"need at least 4 points to fit 3 parameters, got {len(t)}")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    if np.any(t < 0):
        raise ValueError("times must be non-negative")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(t))):
        raise ValueError("times and creeps must be finite")
    y_max = float(y.max())
    if y_max <= 0:
        raise FitError("degenerate curve: no positive creep values to fit")

    theta0 = np.log([1.2 * y_max, 0.05, 1.0])
    rng = np.random.default_rng(seed)
    best = None
    total_evals = 0
    start = theta0
    for attempt in range(1 + n_restarts):
        remaining = max_evals - total_evals
        if remaining <= 1:
            break
        theta, cost, evals, converged = _lm_from_start(start, t, y, remaining)
        total_evals += evals
        if best is None or cost < best[1]:
            best = (theta, cost, converged)
        if best[2]:
            break
        start = theta0 + rng.normal(0.0, 0.5, size=3)  # perturbed restart

    theta, cost, converged = best
    a, b, c = np.exp(theta)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot <= 0.0:
        r2 = 1.0 if cost <= 1e-300 else float("-inf")
    else:
        r2 = 1.0 - cost / ss_tot
    return CreepCurveParams(float(a), float(b), float(c), r2, total_evals, converged)
