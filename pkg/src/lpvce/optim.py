"""Frank-Wolfe with adaptive (AFW), constant and decaying step sizes, an APGD
baseline for p in {1, 2, inf}, and best-of-restarts orchestration.

Objectives are callables ``f(x) -> (value, gradient)`` that are *maximized*.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgumentError, InvalidStateError, NumericalError, UnsupportedExponentError
from .geometry import (FeasibleRegion, is_inf, lmo_ball, lmo_box_ball,
                       project_box_ball, sample_feasible)

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]

METHODS = ("afw", "apgd", "fw-constant", "fw-decaying")

#: Checkpoint constants shared by AFW and APGD.
FIRST_CHECKPOINT = 0.22
CHECKPOINT_SHRINK = 0.03
MIN_CHECKPOINT_GAP = 0.06
SUCCESS_RATIO = 0.75
APGD_MOMENTUM = 0.75


@dataclass(frozen=True)
class StepSchedule:
    kind: str = "afw"
    gamma0: Optional[float] = None
    M0: float = 2.0
    decay_factor: float = 0.75
    rho: float = SUCCESS_RATIO

    def __post_init__(self):
        if self.kind == "afw":
            if not 0 < self.M0 <= 2:
                raise InvalidArgumentError("AFW needs 0 < M <= 2")
        elif self.kind == "constant":
            if self.gamma0 is None or not 0 < self.gamma0 <= 1:
                raise InvalidArgumentError("constant schedule needs gamma0 in (0, 1]")
        elif self.kind == "decaying":
            if self.gamma0 is None or not self.gamma0 > 0:
                raise InvalidArgumentError("decaying schedule needs gamma0 > 0")
        else:
            raise InvalidArgumentError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def afw(cls, **kw):
        return cls("afw", **kw)

    @classmethod
    def constant(cls, gamma0):
        return cls("constant", gamma0=gamma0)

    @classmethod
    def decaying(cls, gamma0):
        return cls("decaying", gamma0=gamma0)

    def step(self, k: int, M: Optional[float] = None) -> float:
        if self.kind == "afw":
            return (self.M0 if M is None else M) / (2.0 + math.sqrt(k))
        if self.kind == "constant":
            return self.gamma0
        return self.gamma0 / (self.gamma0 + k)


@dataclass
class RunResult:
    best_point: np.ndarray
    best_objective: float
    trace: list = field(default_factory=list)  # (iteration, objective, step_size)
    iterations_used: int = 0
    schedule_events: list = field(default_factory=list)  # (iteration, new M or eta)
    restart_objectives: list = field(default_factory=list)


def checkpoints(n_iter: int) -> list[int]:
    """Iterations at which the progress conditions are evaluated.

    Fractions p_0 = 0, p_1 = 0.22, p_{j+1} = p_j + max(p_j - p_{j-1} - 0.03, 0.06),
    scaled by the budget and rounded up.
    """
    fr = [0.0, FIRST_CHECKPOINT]
    while fr[-1] < 1.0:
        fr.append(fr[-1] + max(fr[-1] - fr[-2] - CHECKPOINT_SHRINK, MIN_CHECKPOINT_GAP))
    out = []
    for f in fr[1:]:
        w = math.ceil(f * n_iter - 1e-12)
        if 0 < w <= n_iter and (not out or w > out[-1]):
            out.append(w)
    return out


class _Checkpointer:
    """Condition 1 / Condition 2 bookkeeping over a run."""

    def __init__(self, n_iter, rho, start_value):
        self.points = checkpoints(n_iter)
        self.rho = rho
        self.prev = 0
        self.reduced_last = False
        # the first Condition 2 compares against the starting objective
        self.best_last = start_value

    def due(self, k):
        return k in self.points

    def should_reduce(self, k, values, best):
        # values[i] is the objective at the i-th iterate
        window = k - self.prev
        improved = sum(values[i + 1] > values[i] for i in range(self.prev, k))
        cond1 = improved < self.rho * window
        cond2 = (not self.reduced_last) and best <= self.best_last
        reduce = cond1 or cond2
        self.prev = k
        self.reduced_last = reduce
        self.best_last = best
        return reduce


def _evaluate(objective, x, k):
    value, grad = objective(x)
    value = float(value)
    grad = np.asarray(grad, dtype=np.float64).ravel()
    if not math.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite objective or gradient", iteration=k)
    return value, grad


def _vertex(gradient, region, lmo_mode):
    if lmo_mode == "intersection":
        return np.clip(region.center + lmo_box_ball(gradient, region).delta, 0.0, 1.0)
    if lmo_mode == "clip":
        # ball-only oracle followed by clipping, as in earlier FW attacks
        return np.clip(region.center + lmo_ball(gradient, region), 0.0, 1.0)
    raise InvalidArgumentError(f"unknown lmo_mode {lmo_mode!r}")


def fw_step(x_k, gradient, region: FeasibleRegion, gamma_k: float,
            lmo_mode: str = "intersection") -> np.ndarray:
    """One Frank-Wolfe update (1 - gamma) x_k + gamma s_k."""
    x_k = np.asarray(x_k, dtype=np.float64).ravel()
    if not region.contains(x_k):
        raise InvalidStateError("fw_step called with an infeasible iterate")
    if not 0.0 <= gamma_k <= 1.0:
        raise InvalidArgumentError(f"step size must lie in [0, 1], got {gamma_k}")
    return _combine(x_k, _vertex(gradient, region, lmo_mode), gamma_k)


def _combine(x, s, gamma):
    if gamma == 0.0:
        return x.copy()
    if gamma == 1.0:
        return s.copy()
    return np.clip((1.0 - gamma) * x + gamma * s, 0.0, 1.0)


def run_frank_wolfe(objective: Objective, region: FeasibleRegion, schedule: StepSchedule,
                    iterations: int, init=None, lmo_mode: str = "intersection",
                    callback=None) -> RunResult:
    """Maximize ``objective`` over the region with Frank-Wolfe.

    With an AFW schedule the scale M starts at ``schedule.M0`` and is multiplied
    by ``schedule.decay_factor`` at checkpoints where too few steps improved the
    objective or where neither M nor the best value changed since the previous
    checkpoint; the iterate then restarts from the best point seen so far.
    Returns the best point, not the last iterate.
    """
    if iterations < 1:
        raise InvalidArgumentError("iterations must be >= 1")
    x = region.center.copy() if init is None else np.asarray(init, dtype=np.float64).ravel()
    if not region.contains(x):
        raise InvalidStateError("initial point is infeasible")

    value, grad = _evaluate(objective, x, 0)
    best_x, best_val, best_grad = x.copy(), value, grad
    values = [value]
    trace = [(0, value, 0.0)]
    events = []
    M = schedule.M0
    ckpt = _Checkpointer(iterations, schedule.rho, value) if schedule.kind == "afw" else None
    if callback is not None:
        callback(0, x)

    for k in range(iterations):
        gamma = schedule.step(k, M)
        x = _combine(x, _vertex(grad, region, lmo_mode), gamma)
        value, grad = _evaluate(objective, x, k + 1)
        values.append(value)
        trace.append((k + 1, value, gamma))
        if value > best_val:
            best_x, best_val, best_grad = x.copy(), value, grad
        if ckpt is not None and ckpt.due(k + 1):
            if ckpt.should_reduce(k + 1, values, best_val):
                M *= schedule.decay_factor
                events.append((k + 1, M))
                x, grad = best_x.copy(), best_grad
        if callback is not None:
            callback(k + 1, x)

    return RunResult(best_point=best_x, best_objective=best_val, trace=trace,
                     iterations_used=iterations, schedule_events=events)


def _ascent_direction(grad, p):
    if is_inf(p):
        return np.sign(grad)
    n = np.linalg.norm(grad)
    return grad / n if n > 0 else np.zeros_like(grad)


def run_apgd(objective: Objective, region: FeasibleRegion, iterations: int, init=None,
             rho: float = SUCCESS_RATIO, callback=None) -> RunResult:
    """Momentum projected-gradient ascent with checkpoint step halving.

    The gradient is normalized (sign for p = inf, unit l2 otherwise) and the
    initial step is eps / 4.
    """
    p = region.p
    if not (p == 1 or p == 2 or is_inf(p)):
        raise UnsupportedExponentError(
            f"APGD needs an exact projection; p={p} is not in {{1, 2, inf}}")
    if iterations < 1:
        raise InvalidArgumentError("iterations must be >= 1")
    x = region.center.copy() if init is None else np.asarray(init, dtype=np.float64).ravel()
    if not region.contains(x):
        raise InvalidStateError("initial point is infeasible")

    def proj(z):
        return project_box_ball(z, region)

    eta = region.radius / 4.0
    value, grad = _evaluate(objective, x, 0)
    best_x, best_val, best_grad = x.copy(), value, grad
    values = [value]
    trace = [(0, value, 0.0)]
    events = []
    ckpt = _Checkpointer(iterations, rho, value)
    x_prev = x.copy()
    if callback is not None:
        callback(0, x)

    for k in range(iterations):
        alpha = 1.0 if k == 0 else APGD_MOMENTUM
        z = proj(x + eta * _ascent_direction(grad, p))
        x_new = proj(x + alpha * (z - x) + (1.0 - alpha) * (x - x_prev))
        x_prev, x = x, x_new
        value, grad = _evaluate(objective, x, k + 1)
        values.append(value)
        trace.append((k + 1, value, eta))
        if value > best_val:
            best_x, best_val, best_grad = x.copy(), value, grad
        if ckpt.due(k + 1) and ckpt.should_reduce(k + 1, values, best_val):
            eta /= 2.0
            events.append((k + 1, eta))
            x, grad = best_x.copy(), best_grad
            x_prev = x.copy()
        if callback is not None:
            callback(k + 1, x)

    return RunResult(best_point=best_x, best_objective=best_val, trace=trace,
                     iterations_used=iterations, schedule_events=events)


def make_schedule(method: str, gamma0=None) -> Optional[StepSchedule]:
    if method == "afw":
        return StepSchedule.afw()
    if method == "fw-constant":
        return StepSchedule.constant(gamma0)
    if method == "fw-decaying":
        return StepSchedule.decaying(gamma0)
    if method == "apgd":
        return None
    raise InvalidArgumentError(f"unknown method {method!r}; expected one of {METHODS}")


def run_method(objective, region, method, iterations, init=None, gamma0=None,
               lmo_mode="intersection", callback=None) -> RunResult:
    if method == "apgd":
        return run_apgd(objective, region, iterations, init=init, callback=callback)
    return run_frank_wolfe(objective, region, make_schedule(method, gamma0), iterations,
                           init=init, lmo_mode=lmo_mode, callback=callback)


def best_of_restarts(objective: Objective, region: FeasibleRegion, method: str = "afw",
                     iterations: int = 75, n_restarts: int = 5, seed: int = 0,
                     gamma0=None, workers: int = 1, lmo_mode: str = "intersection") -> RunResult:
    """Run ``n_restarts`` independent runs and keep the best one.

    Restart 0 starts at the region center, restart r >= 1 at
    ``sample_feasible(region, seed + r)``.
    """
    if n_restarts < 1:
        raise InvalidArgumentError("n_restarts must be >= 1")
    make_schedule(method, gamma0)  # validate before fanning out
    if method == "apgd" and not (region.p in (1, 2) or is_inf(region.p)):
        raise UnsupportedExponentError(f"APGD is not available for p={region.p}")
    inits = [region.center.copy()] + [sample_feasible(region, seed + r)
                                      for r in range(1, n_restarts)]

    def one(x0):
        return run_method(objective, region, method, iterations, init=x0,
                          gamma0=gamma0, lmo_mode=lmo_mode)

    if workers > 1 and n_restarts > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one, inits))
    else:
        runs = [one(x0) for x0 in inits]
    objs = [r.best_objective for r in runs]
    best = runs[int(np.argmax(objs))]
    best.restart_objectives = objs
    return best
