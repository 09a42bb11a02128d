"""Slow, independent reference solvers used to check the fast geometry code.

None of these share code paths with :mod:`lpvce.geometry` beyond the
``FeasibleRegion`` container: the closed-form oracle sorts breakpoints, here we
bisect on the multiplier directly, project a far-away point by nested
bisection, call an LP solver, or scan grids.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog


def _gamma(w, center):
    s = np.sign(w)
    return np.where(s > 0, 1.0 - center, np.where(s < 0, center, 0.0))


def lmo_bisection(w, center, eps, p, iters=400):
    """argmax <w, delta> over the lp-ball ∩ box via bisection on the multiplier.

    Returns the feasible delta on the safe side of the final bracket.
    """
    w = np.asarray(w, float)
    center = np.asarray(center, float)
    v, g = np.abs(w), _gamma(w, center)
    act = (v > 0) & (g > 0)
    eta = np.zeros_like(w)
    if not act.any():
        return eta
    v, g = v[act], g[act]
    if np.sum(g ** p) <= eps ** p:
        eta[act] = g
        return np.sign(w) * eta

    def eta_of(log_mu):
        # (v / (p mu))^(1/(p-1)) computed in logs
        with np.errstate(over="ignore"):
            r = np.exp((np.log(v) - math.log(p) - log_mu) / (p - 1.0))
        return np.minimum(g, r)

    lo, hi = -800.0, 800.0
    while np.sum(eta_of(hi) ** p) > eps ** p:
        hi *= 2
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.sum(eta_of(mid) ** p) > eps ** p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, abs(hi)):
            break
    eta[act] = eta_of(hi)
    return np.sign(w) * eta


def _project_eta(z, g, eps, p, outer=64, inner=64):
    """Projection of z >= 0 onto {0 <= eta <= g, sum eta^p <= eps^p} by nested bisection."""
    y = np.clip(z, 0.0, g)
    if np.sum(y ** p) <= eps ** p:
        return y
    top = np.minimum(g, z)

    def solve(lam):
        # root of eta - z + lam * p * eta^(p-1) on [0, top], increasing in eta
        lo = np.zeros_like(z)
        hi = top.copy()
        for _ in range(inner):
            mid = 0.5 * (lo + hi)
            pos = mid - z + lam * p * mid ** (p - 1.0) > 0
            hi = np.where(pos, mid, hi)
            lo = np.where(pos, lo, mid)
        return hi

    llo, lhi = -60.0, 60.0
    for _ in range(outer):
        mid = 0.5 * (llo + lhi)
        if np.sum(solve(math.exp(mid)) ** p) > eps ** p:
            llo = mid
        else:
            lhi = mid
    return solve(math.exp(lhi))


def project_bisection(z, center, eps, p):
    """Projection onto B_p(center, eps) ∩ [0, 1]^d for finite p >= 1.

    Folding signs about the center reduces it to projecting |z - center|
    onto {0 <= eta <= room, sum eta^p <= eps^p}, solved by nested bisection.
    """
    z = np.asarray(z, float)
    center = np.asarray(center, float)
    u = z - center
    room = np.where(u >= 0, 1.0 - center, center)
    return center + np.sign(u) * _project_eta(np.abs(u), room, eps, p)


def lmo_projected_ascent(w, center, eps, p, steps=(1e8,)):
    """Projected gradient ascent on the linear objective with growing steps.

    For a compact convex set K, P_K(y + t w) tends to argmax_K <w, .> as t grows;
    the sign-folded problem keeps everything in the nonnegative orthant.
    """
    w = np.asarray(w, float)
    center = np.asarray(center, float)
    v, g = np.abs(w), _gamma(w, center)
    act = (v > 0) & (g > 0)
    eta = np.zeros_like(w)
    if not act.any():
        return eta
    scale = v[act].max()
    e = np.zeros(act.sum())
    for t in steps:
        e = _project_eta(e + t * v[act] / scale, g[act], eps, p)
    eta[act] = e
    return np.sign(w) * eta


def lmo_linprog(w, center, eps):
    """p = 1 reference via an LP in split variables delta = a - b."""
    w = np.asarray(w, float)
    center = np.asarray(center, float)
    d = w.size
    c = np.concatenate([-w, w])
    a_ub = np.ones((1, 2 * d))
    bounds = [(0, 1 - ci) for ci in center] + [(0, ci) for ci in center]
    res = linprog(c, A_ub=a_ub, b_ub=[eps], bounds=bounds, method="highs")
    return res.x[:d] - res.x[d:]


def is_feasible(delta, center, eps, p, rtol=1e-9):
    y = center + delta
    if np.any(y < 0) or np.any(y > 1):
        return False
    if math.isinf(p):
        n = np.abs(delta).max()
    else:
        n = np.sum(np.abs(delta) ** p) ** (1 / p)
    return n <= eps * (1 + rtol)


def _zoom_1d(g, lo, hi, n=4001, levels=6):
    """Maximize a scalar function of one variable on [lo, hi] by repeated
    dense sampling, narrowing to two spacings around the best sample."""
    best_t, best_v = lo, -math.inf
    for _ in range(levels):
        ts = np.linspace(lo, hi, n)
        vals = g(ts)
        i = int(np.argmax(vals))
        if vals[i] > best_v:
            best_t, best_v = ts[i], vals[i]
        step = (hi - lo) / (n - 1)
        lo, hi = max(lo, best_t - 2 * step), min(hi, best_t + 2 * step)
        if hi <= lo:
            break
    return best_t, best_v


def _lp_norms(diff, p):
    return diff.max(axis=1) if math.isinf(p) else np.sum(diff ** p, axis=1) ** (1 / p)


def grid_argmax_2d(fun, center, eps, p, h0=1e-3, levels=5, window=30):
    """Maximize a concave ``fun`` over the 2-D region by brute force.

    ``fun`` takes an (n, 2) array and returns (n,) values. Three candidate
    families are searched and the best point wins: an interior grid that is
    zoomed level by level (``window`` previous spacings around the previous
    best, spacing shrinking 10x), the lp sphere through an exact-norm angle
    parametrization, and the four box edges, each by a 1-D zoom. Points
    outside the region get -inf.
    """
    center = np.asarray(center, float)
    box_lo = np.maximum(0.0, center - eps)
    box_hi = np.minimum(1.0, center + eps)

    def inside(pts):
        ok = np.all((pts >= box_lo - 1e-15) & (pts <= box_hi + 1e-15), axis=1)
        return ok & (_lp_norms(np.abs(pts - center), p) <= eps * (1 + 1e-12))

    def masked(pts):
        vals = np.asarray(fun(pts), float)
        return np.where(inside(pts), vals, -np.inf)

    candidates = []

    # interior grid
    lo, hi, h, best = box_lo, box_hi, h0, None
    for _ in range(levels):
        if best is not None:
            lo = np.maximum(box_lo, best - window * h * 10)
            hi = np.minimum(box_hi, best + window * h * 10)
        xs = np.append(np.arange(lo[0], hi[0], h), hi[0])
        ys = np.append(np.arange(lo[1], hi[1], h), hi[1])
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        pts = pts[inside(pts)]
        if best is not None:
            pts = np.vstack([pts, best])
        best = pts[int(np.argmax(fun(pts)))]
        h /= 10
    candidates.append(best)

    # the sphere ||y - c||_p = eps
    def sphere(theta):
        cs, sn = np.cos(theta), np.sin(theta)
        if math.isinf(p):
            m = np.maximum(np.abs(cs), np.abs(sn))
            u = np.stack([cs / m, sn / m], axis=1)
        else:
            u = np.stack([np.sign(cs) * np.abs(cs) ** (2 / p),
                          np.sign(sn) * np.abs(sn) ** (2 / p)], axis=1)
            u /= _lp_norms(np.abs(u), p)[:, None]
        return center + eps * u

    theta, val = _zoom_1d(lambda t: masked(sphere(t)), 0.0, 2 * math.pi, n=20001)
    if np.isfinite(val):
        candidates.append(sphere(np.array([theta]))[0])

    # the four box edges
    for axis in (0, 1):
        for fixed in (box_lo[1 - axis], box_hi[1 - axis]):
            def edge(t, axis=axis, fixed=fixed):
                pts = np.empty((len(t), 2))
                pts[:, axis] = t
                pts[:, 1 - axis] = fixed
                return pts
            t, val = _zoom_1d(lambda t: masked(edge(t)), box_lo[axis], box_hi[axis])
            if np.isfinite(val):
                candidates.append(edge(np.array([t]))[0])

    cand = np.array(candidates)
    return cand[int(np.argmax(masked(cand)))]


def project_grid_2d(z, center, eps, p, h0=1e-2, levels=3):
    """Projection onto the 2-D region as a brute-force maximization of -||y - z||^2."""
    z = np.asarray(z, float)
    return grid_argmax_2d(lambda y: -np.sum((y - z) ** 2, axis=1), center, eps, p,
                          h0=h0, levels=levels)


def random_instance(rng, d_range=(2, 8), exponents=(1.1, 1.5, 2.0, 3.0)):
    """A random (w, center, eps, p) with a mix of interior and face-pinned centers."""
    d = int(rng.integers(d_range[0], d_range[1] + 1))
    p = float(rng.choice(exponents))
    center = rng.uniform(0, 1, d)
    pin = rng.uniform(size=d) < 0.15
    center[pin] = rng.choice([0.0, 1.0], size=pin.sum())
    w = rng.normal(size=d)
    w[rng.uniform(size=d) < 0.1] = 0.0
    eps = float(np.exp(rng.uniform(np.log(0.05), np.log(3.0))))
    return w, center, eps, p


def run_oracle_check(trials=1000, seed=0, cross_check=True):
    """Compare the closed-form LMO and the projections against the references.

    Returns a dict of named pass counts plus ``trials``; deterministic in seed.
    """
    from .geometry import FeasibleRegion, lmo_box_ball, project_box_ball

    rng = np.random.default_rng(seed)
    counts = {"lmo_match": 0, "lmo_feasible": 0, "lmo_certificate": 0,
              "lmo_cross_check": 0, "projection_match": 0}
    for _ in range(trials):
        w, center, eps, p = random_instance(rng)
        region = FeasibleRegion(center, eps, p)
        sol = lmo_box_ball(w, region)
        ref = lmo_bisection(w, center, eps, p)
        opt = float(w @ ref)
        counts["lmo_match"] += bool(abs(sol.objective - opt) <= 1e-6 * (1 + abs(opt)))
        counts["lmo_feasible"] += bool(is_feasible(sol.delta, center, eps, p))
        # certificate against random feasible points of the same region
        pts = _random_feasible_points(rng, center, eps, p, 20)
        counts["lmo_certificate"] += bool(
            np.all(pts @ w <= sol.objective + 1e-9 * (1 + abs(sol.objective))))
        if cross_check:
            alt = lmo_projected_ascent(w, center, eps, p)
            counts["lmo_cross_check"] += bool(abs(float(w @ alt) - opt) <= 1e-6 * (1 + abs(opt)))
        else:
            counts["lmo_cross_check"] += 1

        pp = [1.0, 2.0, math.inf][int(rng.integers(3))]
        z = center + rng.normal(scale=eps, size=center.size)
        preg = FeasibleRegion(center, eps, pp)
        y = project_box_ball(z, preg)
        counts["projection_match"] += _projection_kkt_ok(y, z, center, eps, pp, rng)
    counts["trials"] = trials
    return counts


def _random_feasible_points(rng, center, eps, p, n):
    d = center.size
    out = []
    for _ in range(n):
        u = rng.normal(size=d)
        nu = np.abs(u).max() if math.isinf(p) else np.sum(np.abs(u) ** p) ** (1 / p)
        y = center + u / nu * eps * rng.uniform() ** (1 / d)
        y = np.clip(y, 0, 1)
        out.append(y - center)
    return np.array(out)


def _projection_kkt_ok(y, z, center, eps, p, rng, n=200):
    # y is the projection iff <z - y, s - y> <= 0 for all feasible s;
    # test against random feasible points and the ball/box extremes
    if not is_feasible(y - center, center, eps, p, rtol=1e-9):
        return False
    s = _random_feasible_points(rng, center, eps, p, n) + center
    viol = (s - y) @ (z - y)
    return bool(np.all(viol <= 1e-8 * (1 + np.linalg.norm(z - y))))
