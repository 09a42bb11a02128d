"""Visual counterfactual explanations: maximize log p(k | x) over
B_p(x0, eps) ∩ [0, 1]^d, radius sweeps, difference maps and the penalized form."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError, UnsupportedExponentError
from .geometry import MIN_SMOOTH_EXPONENT, FeasibleRegion, is_inf, lp_norm, parse_exponent
from .model import MlpClassifier, log_prob
from .optim import METHODS, best_of_restarts

#: Defaults of the generation protocol.
DEFAULT_P = 1.5
DEFAULT_ITERATIONS = 75
DEFAULT_RESTARTS = 5
#: Reference radii at ImageNet resolution (224x224x3), by exponent.
IMAGENET_RADII = {1.0: 400.0, 1.5: 50.0, 2.0: 12.0}
IMAGENET_SWEEP_RADII = {1.5: (50.0, 75.0, 100.0)}
#: Reference l1.5 radius at CIFAR10 resolution.
CIFAR_RADIUS_P15 = 6.0


@dataclass
class VceRequest:
    image: np.ndarray
    target: int
    p: float = DEFAULT_P
    eps: float = 1.0
    method: str = "afw"
    iterations: int = DEFAULT_ITERATIONS
    restarts: int = DEFAULT_RESTARTS
    seed: int = 0
    gamma0: Optional[float] = None
    workers: int = 1

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64).ravel()
        self.p = parse_exponent(self.p)
        if np.any(self.image < 0) or np.any(self.image > 1):
            raise InvalidArgumentError("image values must lie in [0, 1]")
        if not self.eps > 0:
            raise InvalidArgumentError("eps must be positive")
        if self.method not in METHODS:
            raise InvalidArgumentError(f"unknown method {self.method!r}")
        if 1.0 < self.p < MIN_SMOOTH_EXPONENT:
            raise UnsupportedExponentError(f"p must be 1 or at least {MIN_SMOOTH_EXPONENT}")
        if self.method == "apgd" and not (self.p in (1.0, 2.0) or is_inf(self.p)):
            raise UnsupportedExponentError("apgd requires p in {1, 2, inf}")

    def region(self) -> FeasibleRegion:
        return FeasibleRegion(self.image, self.eps, self.p)


@dataclass
class VceResult:
    counterfactual: np.ndarray
    target: int
    p_initial: float
    p_end: float
    valid: bool
    best_objective: float
    restart_objectives: list = field(default_factory=list)
    eps: float = float("nan")
    p: float = float("nan")

    def to_dict(self) -> dict:
        return {"target": self.target, "p_initial": self.p_initial, "p_end": self.p_end,
                "valid": self.valid, "objective": self.best_objective,
                "restart_objectives": list(self.restart_objectives),
                "eps": self.eps, "p": "inf" if is_inf(self.p) else self.p}


def target_objective(model: MlpClassifier, k: int):
    """x -> (log p(k | x), gradient), for the maximizers in :mod:`lpvce.optim`."""
    model._check_class(k)
    return lambda x: model.value_and_grad(k, x)


def generate_vce(model: MlpClassifier, request: VceRequest) -> VceResult:
    region = request.region()
    run = best_of_restarts(target_objective(model, request.target), region,
                           method=request.method, iterations=request.iterations,
                           n_restarts=request.restarts, seed=request.seed,
                           gamma0=request.gamma0, workers=request.workers)
    cf = run.best_point
    p_init = math.exp(log_prob(model, request.target, request.image))
    pred = int(model.predict(cf[None, :])[0])
    return VceResult(counterfactual=cf, target=int(request.target), p_initial=p_init,
                     p_end=math.exp(run.best_objective), valid=pred == request.target,
                     best_objective=run.best_objective,
                     restart_objectives=list(run.restart_objectives),
                     eps=request.eps, p=request.p)


def radius_sweep(model: MlpClassifier, image, target: int, p, radii, method: str = "afw",
                 iterations: int = DEFAULT_ITERATIONS, restarts: int = DEFAULT_RESTARTS,
                 seed: int = 0, gamma0=None, workers: int = 1) -> list[VceResult]:
    radii = [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii):
        raise InvalidArgumentError("radii must be positive")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise InvalidArgumentError("radii must be strictly ascending")
    return [generate_vce(model, VceRequest(image, target, p, r, method, iterations, restarts,
                                           seed, gamma0, workers)) for r in radii]


def _as_image(a, shape):
    a = np.asarray(a, dtype=np.float64)
    if shape is not None:
        a = a.reshape(shape)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise InvalidArgumentError("images must be H x W or H x W x C (or flat with a shape)")
    return a


def channel_abs_diff(original, counterfactual, shape=None) -> np.ndarray:
    a, b = _as_image(original, shape), _as_image(counterfactual, shape)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch {a.shape} vs {b.shape}")
    return np.abs(a - b).sum(axis=2)


def difference_map(original, counterfactual, shape=None) -> np.ndarray:
    """Channel-summed absolute difference scaled to max 1 (zeros if identical)."""
    d = channel_abs_diff(original, counterfactual, shape)
    m = d.max()
    return d / m if m > 0 else np.zeros_like(d)


def penalized_objective(model: MlpClassifier, k: int, x0, x, lam: float, p):
    """-log p(k | x) + lam * ||x - x0||_p and its gradient (minimized)."""
    p = parse_exponent(p)
    if is_inf(p) or p <= 1:
        raise UnsupportedExponentError("the penalized gradient needs 1 < p < inf")
    if lam < 0:
        raise InvalidArgumentError("lambda must be nonnegative")
    x = np.asarray(x, dtype=np.float64).ravel()
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    lp, g = model.value_and_grad(k, x)
    d = x - x0
    n = lp_norm(d, p)
    value = -lp + lam * n
    if n > 0:
        grad_dist = np.sign(d) * (np.abs(d) / n) ** (p - 1)
    else:
        grad_dist = np.zeros_like(d)
    return value, -g + lam * grad_dist


def generate_penalized(model: MlpClassifier, image, target: int, lam: float, p,
                       steps: int = 200, lr: float = 0.05) -> VceResult:
    """Box-projected gradient descent on the penalized objective."""
    x0 = np.asarray(image, dtype=np.float64).ravel()
    x = x0.copy()
    best_x, best_v = x.copy(), penalized_objective(model, target, x0, x, lam, p)[0]
    for _ in range(steps):
        v, g = penalized_objective(model, target, x0, x, lam, p)
        if v < best_v:
            best_x, best_v = x.copy(), v
        x = np.clip(x - lr * g, 0.0, 1.0)
    v = penalized_objective(model, target, x0, x, lam, p)[0]
    if v < best_v:
        best_x, best_v = x.copy(), v
    lp_end = log_prob(model, target, best_x)
    pred = int(model.predict(best_x[None, :])[0])
    return VceResult(counterfactual=best_x, target=int(target),
                     p_initial=math.exp(log_prob(model, target, x0)), p_end=math.exp(lp_end),
                     valid=pred == target, best_objective=lp_end,
                     eps=lp_norm(best_x - x0, p), p=parse_exponent(p))
