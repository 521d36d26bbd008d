# ******************
# MODULE DOCSTRING
# ******************

"""

nigrid: Lyapunov certificates
=====

Numerical evaluation of the Lur'e-Postnikov-like Lyapunov function of an
interconnection

    W = sum V_p + sum V_c - Yhat' Pi_cx(X_c) - sum_k int_0^{Yhat_k} g_c^k(xi) dxi

where Yhat = (Q' x I_m) Y_p for a network and Yhat = y_p for a single loop.
The integral is taken channel by channel with the composite trapezoid rule;
the panel count is the smallest power of two giving a step <= quad_step, so
halving quad_step doubles the panels exactly.

"""

# ****************
# MODULE IMPORTS
# ****************

import logging
from dataclasses import dataclass, asdict
from multiprocessing.pool import ThreadPool
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from .exceptions import DimensionError, InsufficientDataError, UnsupportedCheckError
from .network import FeedbackLoop
from .systems import PASS, FAIL, INCONCLUSIVE

__all__ = ['LyapunovEvaluation', 'DomainSampleReport', 'MonotonicityReport', 'SamplingPlan',
           'eval_lyapunov_single', 'eval_lyapunov_networked', 'lyapunov_series',
           'lyapunov_evaluator', 'sample_positive_definiteness', 'monitor_monotonicity',
           'integral_term', 'DEFAULT_QUAD_STEP']

DEFAULT_QUAD_STEP = 1e-4

# Upper bound on the number of integrand evaluations held in memory at once
_CHUNK = 2 * 10 ** 6


@dataclass(frozen=True)
class LyapunovEvaluation:
    value: float
    V_p: float
    V_c: float
    cross_term: float
    integral_term: float
    quadrature_error_bound: float

    def to_dict(self):
        return asdict(self)


def _panel_count(width, quad_step):
    # smallest power of two n with width / n <= quad_step
    ratio = np.abs(np.asarray(width, dtype=float)) / quad_step
    ratio = np.maximum(ratio * (1.0 - 1e-12), 1.0)
    return (2 ** np.ceil(np.log2(ratio))).astype(np.int64)


def _channel_integral(controller, k, upper, n):
    # int_0^upper g^k, n panels, upper may be negative
    xi = np.linspace(0.0, upper, int(n) + 1)
    return float(trapezoid(controller.channel_map(k, xi), xi))


def integral_term(controllers, upper, m, quad_step=DEFAULT_QUAD_STEP):
    """
    Sum over controllers and channels of int_0^{upper} g^k(xi) dxi

    Parameters
    ----------
    controllers : sequence of DynamicSystem
        edge controllers, one block of m channels each
    upper : array_like
        upper limits, length len(controllers) * m
    quad_step : float
        largest trapezoid step

    Returns
    -------
    value : float
        the integral sum
    error_bound : float
        Richardson estimate 4 |T(h) - T(h/2)| / 3 of the error of T(h),
        summed over channels

    """
    if quad_step <= 0.0:
        raise DimensionError(f'quad_step must be positive, got {quad_step}')
    upper = np.asarray(upper, dtype=float)
    total = 0.0
    bound = 0.0
    for l, c in enumerate(controllers):
        if not c.has_feedthrough:
            continue
        for k in range(m):
            w = upper[l * m + k]
            if w == 0.0:
                continue
            n = _panel_count(w, quad_step)
            coarse = _channel_integral(c, k, w, n)
            fine = _channel_integral(c, k, w, 2 * n)
            total += coarse
            bound += 4.0 * abs(coarse - fine) / 3.0
    return total, bound


def _evaluate(sys, X_p, X_c, quad_step):
    X_p, X_c = sys._check_states(X_p, X_c)
    for s in sys.node_plants + sys.edge_controllers:
        if not s.has_storage:
            raise UnsupportedCheckError(f'{s.label} has no storage function')

    upper = sys.upper_limits(sys._plant_outputs(X_p))
    V_p, V_c = sys.storage_terms(X_p, X_c)
    cross = float(upper @ sys.controller_state_outputs(X_c)) if sys.edge_count else 0.0
    integral, bound = integral_term(sys.edge_controllers, upper, sys.io_dim, quad_step)
    V_p, V_c = float(V_p), float(V_c)

    return LyapunovEvaluation(value=V_p + V_c - cross - integral, V_p=V_p, V_c=V_c,
                              cross_term=cross, integral_term=integral,
                              quadrature_error_bound=bound)


def eval_lyapunov_single(plant, controller, x_p, x_c, quad_step=DEFAULT_QUAD_STEP):
    """
    Lyapunov function of the single loop u_c = y_p, u_p = y_c

    W = V_p(x_p) + V_c(x_c) - h_p(x_p)'h_c(x_c) - sum_k int_0^{h_p^k} g_c^k

    Parameters
    ----------
    plant : DynamicSystem
        plant with a storage function and no feedthrough
    controller : DynamicSystem
        controller with a storage function (static controllers have V = 0)
    x_p, x_c : array_like
        plant and controller states
    quad_step : float
        largest trapezoid step

    Returns
    -------
    evaluation : LyapunovEvaluation

    """
    return _evaluate(FeedbackLoop(plant, controller), x_p, x_c, quad_step)


def eval_lyapunov_networked(sys, X_p, X_c, quad_step=DEFAULT_QUAD_STEP):
    """
    Networked Lyapunov function, with Yhat = (Q' x I_m)Y_p as upper limits

    Parameters
    ----------
    sys : InterconnectedSystem
        the interconnection
    X_p, X_c : array_like
        stacked plant and controller states

    Returns
    -------
    evaluation : LyapunovEvaluation

    """
    return _evaluate(sys, X_p, X_c, quad_step)


def lyapunov_series(sys, X_p, X_c, quad_step=DEFAULT_QUAD_STEP):
    """
    W over a batch of states (shape (S, n)), evaluated from scratch per sample

    The trapezoid panels follow the same rule as eval_lyapunov_networked, so
    entries equal the single-sample values.

    Returns
    -------
    W : numpy array of shape (S,)

    """
    X_p = np.atleast_2d(np.asarray(X_p, dtype=float))
    X_c = np.asarray(X_c, dtype=float).reshape(X_p.shape[0], -1)
    m = sys.io_dim

    upper = sys.upper_limits(sys._plant_outputs(X_p))
    V_p, V_c = sys.storage_terms(X_p, X_c)
    W = np.zeros(X_p.shape[0]) + V_p + V_c
    if sys.edge_count:
        W -= np.sum(upper * sys.controller_state_outputs(X_c), axis=1)

    for l, c in enumerate(sys.edge_controllers):
        if not c.has_feedthrough:
            continue
        for k in range(m):
            w = upper[:, l * m + k]
            n = _panel_count(w, quad_step)
            n[w == 0.0] = 0
            for panels in np.unique(n):
                if panels == 0:
                    continue
                idx = np.nonzero(n == panels)[0]
                s = np.linspace(0.0, 1.0, int(panels) + 1)
                step = max(1, _CHUNK // (int(panels) + 1))
                for start in range(0, len(idx), step):
                    sel = idx[start:start + step]
                    xi = w[sel, None] * s[None, :]
                    W[sel] -= trapezoid(c.channel_map(k, xi), xi, axis=1)
    return W


def lyapunov_evaluator(sys, quad_step=DEFAULT_QUAD_STEP):
    """
    Callable z -> W on the concatenated state z = (X_p, X_c)
    """
    def evaluator(z):
        X_p, X_c = sys.split_state(z)
        return _evaluate(sys, X_p, X_c, quad_step).value
    return evaluator


# ******************************
# Positive definiteness
# ******************************

@dataclass(frozen=True)
class SamplingPlan:
    """Points per axis of the deterministic grid plus a number of random samples"""
    grid_points: int = 5
    random_samples: int = 200


@dataclass(frozen=True)
class DomainSampleReport:
    samples: int
    rejected: int
    min_value: Optional[float]
    argmin: Optional[Tuple[float, ...]]
    origin_value: float
    verdict: str

    def to_dict(self):
        return asdict(self)


def sample_positive_definiteness(evaluator, domain_box, plan, seed=0, predicate=None, workers=1,
                                 origin_tolerance=1e-12):
    """
    Sample W over a box restricted to a domain predicate

    Parameters
    ----------
    evaluator : callable
        z -> W(z) on the concatenated state
    domain_box : sequence of (float, float)
        per-coordinate (low, high), must contain 0
    plan : SamplingPlan
        grid and random sample counts
    seed : int
        random seed
    predicate : callable or None
        z -> bool; samples where it is False are skipped
    workers : int
        evaluation threads; the reduction keeps the lowest sample index on ties

    Returns
    -------
    report : DomainSampleReport
        pass needs W(0) = 0 within origin_tolerance and W > 0 at every accepted
        nonzero sample; inconclusive if the predicate rejects all of them

    """
    box = np.asarray(domain_box, dtype=float).reshape(-1, 2)
    if np.any(box[:, 0] > 0.0) or np.any(box[:, 1] < 0.0):
        raise DimensionError('the domain box must contain the origin')
    if plan.grid_points < 0 or plan.random_samples < 0 or (plan.grid_points == 0 and plan.random_samples == 0):
        raise DimensionError('empty sampling plan')

    dim = box.shape[0]
    parts = []
    if plan.grid_points > 0:
        axes = [np.linspace(lo, hi, plan.grid_points) for lo, hi in box]
        parts.append(np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, dim))
    if plan.random_samples > 0:
        rng = np.random.default_rng(seed)
        parts.append(rng.uniform(box[:, 0], box[:, 1], size=(plan.random_samples, dim)))
    samples = np.concatenate(parts, axis=0)

    origin_value = float(evaluator(np.zeros(dim)))
    if abs(origin_value) > origin_tolerance:
        logging.info(f'W(0) = {origin_value:.3e} is not zero')
        return DomainSampleReport(samples=len(samples), rejected=0, min_value=origin_value,
                                  argmin=tuple([0.0] * dim), origin_value=origin_value, verdict=FAIL)

    keep = np.any(samples != 0.0, axis=1)
    if predicate is not None:
        keep &= np.array([bool(predicate(z)) for z in samples], dtype=bool)
    accepted = samples[keep]
    rejected = int(len(samples) - len(accepted))

    if len(accepted) == 0:
        logging.warning('The domain predicate rejected every nonzero sample')
        return DomainSampleReport(samples=len(samples), rejected=rejected, min_value=None, argmin=None,
                                  origin_value=origin_value, verdict=INCONCLUSIVE)

    if workers > 1:
        with ThreadPool(workers) as pool:
            values = np.array(pool.map(evaluator, list(accepted)))
    else:
        values = np.array([evaluator(z) for z in accepted])

    i = int(np.argmin(values))
    verdict = PASS if values[i] > 0.0 else FAIL
    logging.info(f'Positive definiteness: {len(accepted)} samples, min W = {values[i]:.6e} ({verdict})')

    return DomainSampleReport(samples=len(samples), rejected=rejected, min_value=float(values[i]),
                              argmin=tuple(accepted[i].tolist()), origin_value=origin_value, verdict=verdict)


# ******************************
# Monotonicity along trajectories
# ******************************

@dataclass(frozen=True)
class MonotonicityReport:
    samples: int
    max_step_increase: float
    max_increase_time: Optional[float]
    sharp_bound_max_violation: float
    w_initial: float
    w_final: float
    w_min: float
    w_max: float
    tolerance: float
    verdict: str

    def to_dict(self):
        return asdict(self)


def monitor_monotonicity(sys, trajectory, quad_step=DEFAULT_QUAD_STEP, tolerance=1e-8):
    """
    Check that W does not increase along a simulated trajectory

    The plain check is W(t_k+1) - W(t_k) <= tolerance. The sharper bound
    W(t_k+1) - W(t_k) <= -epsilon_min int |dY_p/dt|^2 dt is evaluated with the
    trapezoid rule on finite-difference rates and only reported.

    Parameters
    ----------
    sys : InterconnectedSystem or FeedbackLoop
        the simulated interconnection
    trajectory : Trajectory
        recorded run of sys; its w_hat is reused when present

    Returns
    -------
    report : MonotonicityReport

    """
    if trajectory.y_p is None:
        raise InsufficientDataError('trajectory lacks recorded outputs')
    if trajectory.samples < 2:
        raise InsufficientDataError('monotonicity needs at least 2 samples')

    if trajectory.w_hat is not None:
        W = np.asarray(trajectory.w_hat, dtype=float)
    else:
        W = lyapunov_series(sys, trajectory.x_p, trajectory.x_c, quad_step)
    dW = np.diff(W)

    dt = trajectory.dt
    rate = np.gradient(trajectory.y_p, dt, axis=0) if trajectory.samples > 2 else np.zeros_like(trajectory.y_p)
    q = np.sum(rate * rate, axis=1)
    dissipated = 0.5 * dt * (q[:-1] + q[1:])
    sharp = dW + sys.epsilon_min * dissipated

    k = int(np.argmax(dW))
    max_increase = float(dW[k])
    verdict = PASS if max_increase <= tolerance else FAIL
    if verdict == FAIL:
        logging.info(f'W increased by {max_increase:.3e} at t = {trajectory.times[k]:.6g}')

    return MonotonicityReport(samples=trajectory.samples,
                              max_step_increase=max_increase,
                              max_increase_time=float(trajectory.times[k]),
                              sharp_bound_max_violation=float(np.max(sharp)),
                              w_initial=float(W[0]), w_final=float(W[-1]),
                              w_min=float(np.min(W)), w_max=float(np.max(W)),
                              tolerance=float(tolerance), verdict=verdict)
