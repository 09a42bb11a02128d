"""Localization metrics for changes, the step-schedule benchmark and the
LMO scaling probe."""
from __future__ import annotations

import csv
import io as _io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDistributionError, InvalidArgumentError
from .geometry import FeasibleRegion, lmo_box_ball
from .model import MlpClassifier, log_prob, pick_target_second
from .vce import VceRequest, channel_abs_diff, generate_vce

MASS_LEVEL = 0.95
CONSTANT_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
DECAYING_GRID = (1, 5, 10, 15, 20, 25, 50, 75, 100)
BUDGETS = (25, 75, 125)
CSV_HEADER = ("method", "gamma0", "budget", "mean_log_prob", "n")


@dataclass
class LocalizationReport:
    expected_distance: float
    mass_in_mask: float
    iou_at_095: float

    def to_dict(self):
        return {"expected_distance": self.expected_distance,
                "mass_in_mask": self.mass_in_mask, "iou_at_095": self.iou_at_095}


def change_distribution(original, counterfactual, shape=None) -> np.ndarray:
    """Channel-summed absolute change normalized to a distribution over pixels."""
    d = channel_abs_diff(original, counterfactual, shape)
    s = d.sum()
    if s == 0:
        raise DegenerateDistributionError("images are identical; no change distribution")
    return d / s


def distance_to_mask(mask) -> np.ndarray:
    """Euclidean pixel distance to the nearest mask pixel, by brute force."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise InvalidArgumentError("mask is empty")
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    gy, gx = np.mgrid[0:h, 0:w]
    out = np.full(h * w, np.inf)
    py, px = gy.ravel(), gx.ravel()
    for s in range(0, len(ys), 1024):
        dy = py[:, None] - ys[None, s:s + 1024]
        dx = px[:, None] - xs[None, s:s + 1024]
        out = np.minimum(out, np.sqrt(dy * dy + dx * dx).min(axis=1))
    return out.reshape(h, w)


def localization_metrics(p_dist, mask) -> LocalizationReport:
    p_dist = np.asarray(p_dist, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if p_dist.shape != mask.shape:
        raise InvalidArgumentError("distribution and mask shapes differ")
    if not mask.any():
        raise InvalidArgumentError("mask is empty")
    dist = distance_to_mask(mask)
    expected = float(np.sum(p_dist * dist))
    mass = float(p_dist[mask].sum())

    flat = p_dist.ravel()
    order = np.argsort(-flat, kind="stable")
    cum = np.cumsum(flat[order])
    n_take = int(np.searchsorted(cum, MASS_LEVEL * cum[-1] * (1 - 1e-12), side="left")) + 1
    active = np.zeros(flat.size, dtype=bool)
    active[order[:n_take]] = True
    m = mask.ravel()
    iou = float(np.sum(active & m) / np.sum(active | m))
    return LocalizationReport(expected, min(max(mass, 0.0), 1.0), iou)


def benchmark_schedules(model: MlpClassifier, images, p=1.5, eps=1.0, budgets=BUDGETS,
                        constant_grid=CONSTANT_GRID, decaying_grid=DECAYING_GRID,
                        restarts: int = 1, seed: int = 0, workers: int = 1) -> list[dict]:
    """Mean best target log-probability for AFW and each fixed FW schedule.

    Targets are the second most likely classes. The first row (method ``x0``,
    budget 0) holds the mean log-probability at the unperturbed images.
    """
    images = [np.asarray(x, dtype=np.float64).ravel() for x in images]
    if not images:
        raise InvalidArgumentError("benchmark needs at least one image")
    targets = [pick_target_second(model, x) for x in images]
    start = float(np.mean([log_prob(model, k, x) for x, k in zip(images, targets)]))
    rows = [{"method": "x0", "gamma0": "na", "budget": 0, "mean_log_prob": start,
             "n": len(images)}]
    methods = [("afw", None)] + [("fw-constant", g) for g in constant_grid] \
        + [("fw-decaying", g) for g in decaying_grid]
    cells = [(b, m, g) for b in budgets for m, g in methods]

    def cell(c):
        budget, method, g0 = c
        vals = [generate_vce(model, VceRequest(x, k, p, eps, method, budget, restarts,
                                               seed, g0)).best_objective
                for x, k in zip(images, targets)]
        return float(np.mean(vals))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            means = list(pool.map(cell, cells))
    else:
        means = [cell(c) for c in cells]
    for (budget, method, g0), mean in zip(cells, means):
        rows.append({"method": method, "gamma0": "na" if g0 is None else g0,
                     "budget": budget, "mean_log_prob": mean, "n": len(images)})
    return rows


def benchmark_csv(rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r["method"], r["gamma0"], r["budget"], repr(float(r["mean_log_prob"])), r["n"]])
    return buf.getvalue()


def read_benchmark_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(_io.StringIO(text)))
    for r in rows:
        r["budget"] = int(r["budget"])
        r["mean_log_prob"] = float(r["mean_log_prob"])
        r["n"] = int(r["n"])
    return rows


def afw_relative_gap(rows, budget) -> float:
    """1 - (AFW gain) / (best gain) over the start value, for one budget."""
    start = next(r["mean_log_prob"] for r in rows if r["method"] == "x0")
    at = [r for r in rows if r["budget"] == budget and r["method"] != "x0"]
    afw = next(r["mean_log_prob"] for r in at if r["method"] == "afw")
    best = max(r["mean_log_prob"] for r in at)
    gain = best - start
    return 0.0 if gain <= 0 else 1.0 - (afw - start) / gain


def lmo_scaling_probe(dims, trials: int = 5, p: float = 1.5, seed: int = 0) -> dict:
    """Median wall time of the oracle per dimension and the log-log slope."""
    dims = [int(d) for d in dims]
    if any(b <= a for a, b in zip(dims, dims[1:])):
        raise InvalidArgumentError("dims must be ascending")
    rng = np.random.default_rng(seed)
    rows = []
    for d in dims:
        times = []
        for _ in range(trials):
            x = rng.uniform(size=d)
            w = rng.normal(size=d)
            region = FeasibleRegion(x, 0.05 * d ** (1 / p), p)
            t0 = time.perf_counter()
            lmo_box_ball(w, region)
            times.append(time.perf_counter() - t0)
        rows.append({"d": d, "median_seconds": float(np.median(times))})
    slope = math.nan
    if len(rows) >= 2:
        slope = float(np.polyfit(np.log([r["d"] for r in rows]),
                                 np.log([r["median_seconds"] for r in rows]), 1)[0])
    return {"rows": rows, "slope": slope, "p": p, "trials": trials}
