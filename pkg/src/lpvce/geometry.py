"""Feasible regions B_p(x0, eps) ∩ [0, 1]^d, the exact linear maximization
oracle over them, and Euclidean projections for p in {1, 2, inf}.

All vectors are flat float64 numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, UnsupportedExponentError

#: Exponent value meaning the max-norm.
INF = math.inf

#: Relative slack of the membership test on the norm constraint.
FEASIBILITY_RTOL = 1e-9
#: Relative tolerance used when deciding the sign of f at a breakpoint.
BRACKET_RTOL = 1e-12
#: Smallest exponent served by the closed-form p > 1 oracle.
MIN_SMOOTH_EXPONENT = 1.0 + 1e-3


def is_inf(p) -> bool:
    return p == INF or (isinstance(p, str) and p.lower() in ("inf", "linf"))


def parse_exponent(p) -> float:
    """Normalize user input ("inf", 1.5, "2") to a float exponent."""
    if is_inf(p):
        return INF
    p = float(p)
    if math.isnan(p) or p < 1:
        raise UnsupportedExponentError(f"exponent must be >= 1, got {p}")
    return p


def lp_norm(x, p) -> float:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("lp_norm received non-finite input")
    p = parse_exponent(p)
    a = np.abs(x).ravel()
    if a.size == 0:
        return 0.0
    if is_inf(p):
        return float(a.max())
    if p == 1:
        return float(a.sum())
    if p == 2:
        return float(np.sqrt(np.dot(a, a)))
    m = a.max()
    if m == 0:
        return 0.0
    # scale to avoid overflow/underflow in a**p
    return float(m * np.sum((a / m) ** p) ** (1.0 / p))


@dataclass(frozen=True)
class FeasibleRegion:
    """The set {y : ||y - center||_p <= radius, 0 <= y <= 1}."""

    center: np.ndarray
    radius: float
    p: float
    lower: float = field(default=0.0, repr=False)
    upper: float = field(default=1.0, repr=False)

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).ravel()
        if not np.all(np.isfinite(c)):
            raise InvalidArgumentError("center must be finite")
        if np.any(c < self.lower) or np.any(c > self.upper):
            raise InvalidArgumentError("center must lie in the box [0, 1]^d")
        radius = float(self.radius)
        if not (radius > 0 and math.isfinite(radius)):
            raise InvalidArgumentError(f"radius must be positive and finite, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", radius)
        object.__setattr__(self, "p", parse_exponent(self.p))

    @property
    def dim(self) -> int:
        return self.center.size

    def contains(self, y, rtol: float | None = None) -> bool:
        if rtol is None:
            rtol = FEASIBILITY_RTOL
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.shape != self.center.shape or not np.all(np.isfinite(y)):
            return False
        if np.any(y < self.lower) or np.any(y > self.upper):
            return False
        return lp_norm(y - self.center, self.p) <= self.radius * (1 + rtol)

    def check_vector(self, w, name="w") -> np.ndarray:
        w = np.asarray(w, dtype=np.float64).ravel()
        if w.shape != self.center.shape:
            raise InvalidArgumentError(
                f"{name} has length {w.size}, region has dimension {self.dim}")
        if not np.all(np.isfinite(w)):
            raise InvalidArgumentError(f"{name} must be finite")
        return w


@dataclass
class OracleSolution:
    delta: np.ndarray
    mu_star: float
    objective: float
    saturated: np.ndarray  # indices i with delta_i == gamma_i * sign(w_i)


def box_room(center: np.ndarray, sign: np.ndarray) -> np.ndarray:
    """Distance to the box face in direction ``sign`` (0 where sign is 0)."""
    return np.maximum(-center * sign, (1.0 - center) * sign)


def _snap_to_box(center, delta):
    # center + (1 - center) can round above 1; keep the vertex inside the box
    y = np.clip(center + delta, 0.0, 1.0)
    return y - center


def lmo_box_ball(w, region: FeasibleRegion) -> OracleSolution:
    """Maximize <w, delta> over ||delta||_p <= eps, center + delta in [0, 1]^d.

    For p > 1 the maximizer is ``min(gamma_i, (|w_i| / (p mu))^(1/(p-1))) sign(w_i)``
    where ``mu`` is found exactly by sorting the breakpoints
    ``|w_i| / (p gamma_i^(p-1))`` (O(d log d)). For p = 1 the budget is filled
    greedily by decreasing |w_i|; for p = inf each coordinate moves
    ``min(gamma_i, eps)``.
    """
    w = region.check_vector(w)
    x, eps, p = region.center, region.radius, region.p
    sign = np.sign(w)
    gamma = box_room(x, sign)
    v = np.abs(w)
    active = (v > 0) & (gamma > 0)
    eta = np.zeros_like(w)
    mu = 0.0

    if is_inf(p):
        eta[active] = np.minimum(gamma[active], eps)
    elif p == 1:
        idx = np.flatnonzero(active)
        order = idx[np.argsort(-v[idx], kind="stable")]
        g = gamma[order]
        used_before = np.cumsum(g) - g
        eta[order] = np.clip(eps - used_before, 0.0, g)
        short = np.flatnonzero(eta[order] < g)
        if short.size:
            # budget ran out: the multiplier is the first |w_i| not fully used
            mu = float(v[order[short[0]]])
    elif p < MIN_SMOOTH_EXPONENT:
        raise UnsupportedExponentError(
            f"p={p} is too close to 1 for the closed-form oracle; use p=1")
    else:
        eta, mu = _eta_smooth(v, gamma, active, eps, p)

    delta = _snap_to_box(x, eta * sign)
    saturated = np.flatnonzero(active & (eta >= gamma))
    return OracleSolution(delta=delta, mu_star=float(mu),
                          objective=float(np.dot(w, delta)), saturated=saturated)


def _eta_smooth(v, gamma, active, eps, p):
    """Closed form for p > 1, evaluated in log space.

    Works on the normalized magnitudes v / max(v) so that v^(p/(p-1)) neither
    overflows nor underflows wholesale when p is close to 1.
    """
    eta = np.zeros_like(v)
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return eta, 0.0
    g = gamma[idx]
    eps_p = eps ** p
    g_p = g ** p
    if g_p.sum() - eps_p < 0:
        # the whole box corner lies inside the ball
        eta[idx] = g
        return eta, 0.0

    vmax = v[idx].max()
    log_v = np.log(v[idx] / vmax)
    log_g = np.log(g)
    q = p / (p - 1.0)
    # log(p * m_i) for each breakpoint m_i = v_i / (p gamma_i^(p-1))
    log_pm = log_v - (p - 1.0) * log_g
    order = np.argsort(log_pm, kind="stable")
    log_pm, log_v, g_p_sorted = log_pm[order], log_v[order], g_p[order]

    # last position of each tie group: I+(m_j) = {i : m_i <= m_j}
    last = np.searchsorted(log_pm, log_pm, side="right") - 1
    log_splus = np.logaddexp.accumulate(q * log_v)[last]
    suffix = np.concatenate([np.cumsum(g_p_sorted[::-1])[::-1], [0.0]])
    s_minus = suffix[last + 1]
    f = s_minus + np.exp(log_splus - q * log_pm) - eps_p
    ok = np.flatnonzero(f >= -BRACKET_RTOL * eps_p)
    # f(m_min) == f(0) >= 0, so the first breakpoint always qualifies
    j = ok[-1] if ok.size else 0
    rest = max(eps_p - s_minus[j], np.finfo(float).tiny)
    log_pmu = (log_splus[j] - math.log(rest)) / q
    ratio = np.exp((np.log(v[idx] / vmax) - log_pmu) / (p - 1.0))
    eta[idx] = np.minimum(g, ratio)
    mu = math.exp(log_pmu) * vmax / p
    return eta, mu


def lmo_ball(w, region: FeasibleRegion) -> np.ndarray:
    """Maximizer of <w, delta> over the lp-ball alone (box ignored)."""
    w = region.check_vector(w)
    eps, p = region.radius, region.p
    if not np.any(w):
        return np.zeros_like(w)
    if is_inf(p):
        return eps * np.sign(w)
    if p == 1:
        d = np.zeros_like(w)
        i = int(np.argmax(np.abs(w)))
        d[i] = eps * np.sign(w[i])
        return d
    q = p / (p - 1.0)
    a = np.abs(w) / np.abs(w).max()
    d = np.sign(w) * a ** (q - 1.0)
    return eps * d / lp_norm(d, p)


def project_box_ball(z, region: FeasibleRegion) -> np.ndarray:
    """Euclidean projection onto the region, for p in {1, 2, inf}."""
    z = region.check_vector(z, "z")
    x, eps, p = region.center, region.radius, region.p
    if is_inf(p):
        return np.clip(z, np.maximum(0.0, x - eps), np.minimum(1.0, x + eps))
    if p == 2:
        return _project_l2(z, x, eps)
    if p == 1:
        return _project_l1(z, x, eps)
    raise UnsupportedExponentError(
        f"no projection for p={p}; use the Frank-Wolfe path instead")


def _project_l2(z, x, eps):
    # y(t) = x + clip(t * d, lo, hi) for t = 1 / (1 + lambda) in (0, 1]
    d = z - x
    sign = np.sign(d)
    cap = box_room(x, sign)
    a = np.abs(d)
    y = np.clip(z, 0.0, 1.0)
    if np.dot(y - x, y - x) <= eps * eps:
        return y
    nz = np.flatnonzero(a > 0)
    a_nz, c_nz = a[nz], cap[nz]
    tau = c_nz / a_nz  # coordinate saturates for t >= tau
    order = np.argsort(tau, kind="stable")
    tau, a_nz, c_nz = tau[order], a_nz[order], c_nz[order]
    # g(tau_k) = sum_{tau_i <= tau_k} c_i^2 + tau_k^2 sum_{tau_i > tau_k} a_i^2
    last = np.searchsorted(tau, tau, side="right") - 1
    sat = np.cumsum(c_nz ** 2)[last]
    unsat = np.concatenate([np.cumsum((a_nz ** 2)[::-1])[::-1], [0.0]])[last + 1]
    g = sat + tau ** 2 * unsat
    below = np.flatnonzero(g <= eps * eps)
    if below.size:
        k = below[-1]
        fixed, free = sat[k], unsat[k]
    else:
        fixed, free = 0.0, float(np.dot(a_nz, a_nz))
    t = math.sqrt(max(eps * eps - fixed, 0.0) / free)
    y = x + np.clip(t * a, 0.0, cap) * sign
    y = np.clip(y, 0.0, 1.0)
    return _shrink_into_ball(y, x, eps, 2.0)


def _plus_sum(breaks_sorted, prefix, lam):
    """sum_i max(b_i - lam, 0) for ascending ``breaks_sorted`` (vectorized in lam)."""
    k = np.searchsorted(breaks_sorted, lam, side="right")
    n_above = breaks_sorted.size - k
    return (prefix[-1] - prefix[k]) - n_above * lam


def _project_l1(z, x, eps):
    # y(lam) - x = sign(d) * clip(|d| - lam, 0, cap); the l1 mass is piecewise
    # linear and non-increasing in lam with breakpoints |d| - cap and |d|.
    d = z - x
    sign = np.sign(d)
    cap = box_room(x, sign)
    a = np.abs(d)
    y = np.clip(z, 0.0, 1.0)
    if np.sum(np.abs(y - x)) <= eps:
        return y
    hi_b = np.sort(a)
    lo_b = np.sort(a - cap)
    hi_pre = np.concatenate([[0.0], np.cumsum(hi_b)])
    lo_pre = np.concatenate([[0.0], np.cumsum(lo_b)])

    cand = np.unique(np.concatenate([[0.0], a, a - cap]))
    cand = cand[cand >= 0]
    m = _plus_sum(hi_b, hi_pre, cand) - _plus_sum(lo_b, lo_pre, cand)
    k = np.flatnonzero(m >= eps)[-1]
    lam0, m0 = cand[k], m[k]
    if k + 1 < cand.size:
        lam1, m1 = cand[k + 1], m[k + 1]
        lam = lam0 + (m0 - eps) * (lam1 - lam0) / (m0 - m1) if m0 > m1 else lam0
    else:
        lam = lam0
    y = x + np.clip(a - lam, 0.0, cap) * sign
    y = np.clip(y, 0.0, 1.0)
    return _shrink_into_ball(y, x, eps, 1.0)


def _shrink_into_ball(y, x, eps, p):
    # absorb last-ulp overshoot of the norm constraint
    n = lp_norm(y - x, p)
    if n > eps:
        y = x + (y - x) * (eps / n)
    return y


def sample_feasible(region: FeasibleRegion, seed: int) -> np.ndarray:
    """Deterministic random feasible point center + t * lmo(u), t ~ U[0, 1]."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, size=region.dim)
    t = rng.uniform()
    if region.p != 1 and not is_inf(region.p) and region.p < MIN_SMOOTH_EXPONENT:
        delta = lmo_box_ball(u, FeasibleRegion(region.center, region.radius, 1.0)).delta
    else:
        delta = lmo_box_ball(u, region).delta
    return np.clip(region.center + t * delta, 0.0, 1.0)
