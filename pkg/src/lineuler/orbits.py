"""Prime periods, long-orbit detection and the two-stagnation-point test."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import flow
from .errors import InvalidInputError
from .fields import find_stagnation_points, torus_delta, torus_distance, wrap


@dataclass
class PeriodEstimate:
    point: np.ndarray
    period: float              # prime period, math.inf when no return was seen
    return_distance: float
    horizon: float
    stagnation: bool = False


@dataclass
class LongOrbitScan:
    witness: object            # PeriodEstimate with period >= target, or None
    target: float
    sampled: list = field(default_factory=list)


@dataclass
class LongOrbitPredicate:
    value: bool
    stagnation_count: int
    provenance: str


def _hermite(p0, v0, p1, v1, h, s):
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s ** 2 * (3 - 2 * s)
    h11 = s ** 2 * (s - 1)
    return h00 * p0 + h10 * h * v0 + h01 * p1 + h11 * h * v1


def prime_period(u, x, horizon, tol=1e-8, step=1e-3, gate=0.5,
                 refine_tol=1e-10):
    """First return time of x through a transverse section, bisection-refined.

    The section is the line through x normal to u(x), gated to a torus
    neighborhood of x so distant sheet crossings are ignored.  Points inside
    the stagnation tolerance get the period-0 convention, flagged.
    """
    x = wrap(np.asarray(x, dtype=float))
    if horizon <= 0:
        raise InvalidInputError("horizon must be positive")
    u0 = u.velocity(x)
    speed0 = float(np.linalg.norm(u0))
    if speed0 < 1e-6 * u.max_speed():
        return PeriodEstimate(x, 0.0, 0.0, horizon, stagnation=True)
    d = u0 / speed0
    # the orbit must first leave this ball before returns count; scale-aware
    # so that tight orbits around centers are still detected
    r_escape = min(gate / 2.0, max(10.0 * speed0 * step, 100.0 * tol))

    block = 4000
    n_total = int(math.ceil(horizon / step))
    y = x.copy()
    t = 0.0
    escaped = False
    best_dist = math.inf
    rhs = flow._flow_rhs(u)
    for start in range(0, n_total, block):
        n = min(block, n_total - start)
        times = t + step * np.arange(n + 1)
        pts_raw = flow._rk4_record(rhs, y, times, step)
        pts = wrap(pts_raw)
        y = pts_raw[-1]
        delta = torus_delta(pts, x)
        g = delta @ d
        dist = np.linalg.norm(delta, axis=-1)
        inside = np.max(np.abs(delta), axis=-1) < gate
        if not escaped:
            out = np.nonzero(dist > r_escape)[0]
            if len(out) == 0:
                t = times[-1]
                continue
            first_out = out[0]
        else:
            first_out = 0
        escaped = True
        cross = np.nonzero((g[first_out:-1] <= 0.0) & (g[first_out + 1:] > 0.0)
                           & inside[first_out + 1:])[0] + first_out
        for i in cross:
            v0 = u.velocity(pts_raw[i])
            v1 = u.velocity(pts_raw[i + 1])
            a, b = 0.0, 1.0
            ga = g[i]
            for _ in range(60):
                m = 0.5 * (a + b)
                pm = _hermite(pts_raw[i], v0, pts_raw[i + 1], v1, step, m)
                gm = float(torus_delta(pm, x) @ d)
                if (ga <= 0.0) == (gm <= 0.0):
                    a, ga = m, gm
                else:
                    b = m
                if (b - a) * step < refine_tol:
                    break
            t_hit = times[i] + 0.5 * (a + b) * step
            p_hit = wrap(_hermite(pts_raw[i], v0, pts_raw[i + 1], v1, step,
                                  0.5 * (a + b)))
            r = float(torus_distance(p_hit, x))
            best_dist = min(best_dist, r)
            if r <= tol:
                return PeriodEstimate(x, float(t_hit), r, horizon)
        t = times[-1]
    return PeriodEstimate(x, math.inf,
                          best_dist if math.isfinite(best_dist) else math.nan,
                          horizon)


def _candidate_seeds(u, scan):
    """Deterministic near-stagnation seeds where periods blow up."""
    seeds = []
    for p in scan.points:
        y = p.location
        if p.kind == "hyperbolic":
            vals, vecs = np.linalg.eig(p.jacobian)
            vs = np.real(vecs[:, np.argmin(np.real(vals))])
            vu = np.real(vecs[:, np.argmax(np.real(vals))])
            bisec = vs / np.linalg.norm(vs) + vu / np.linalg.norm(vu)
            bisec = bisec / np.linalg.norm(bisec)
            # longest-period (closest to the separatrix) offsets first
            for delta in (1e-8, 1e-6, 1e-4, 1e-3, 1e-2):
                seeds.append(wrap(y + delta * bisec))
        else:
            for delta in (1e-2, 1e-3, 1e-4, 1e-6):
                seeds.append(wrap(y + delta * np.array([1.0, 0.0])))
                seeds.append(wrap(y + delta * np.array([0.0, 1.0])))
    return seeds


def longest_orbit_scan(u, target, seed_grid=12, horizon=None, step=2e-3,
                       tol=1e-6):
    """Search for a point whose prime period is at least `target`.

    Near-stagnation candidates are tried first (periods diverge there), then
    a seed grid.  No return within `target` time units certifies the witness.
    """
    if horizon is None:
        horizon = float(target)
    horizon = max(horizon, float(target))
    sampled = []
    try:
        scan = find_stagnation_points(u, seed_grid=32)
        seeds = _candidate_seeds(u, scan)
    except InvalidInputError:
        seeds = []
    g = np.linspace(0.0, 2.0 * np.pi, seed_grid, endpoint=False)
    grid = np.stack(np.meshgrid(g + np.pi / seed_grid, g + np.pi / seed_grid,
                                indexing="ij"), axis=-1).reshape(-1, 2)
    for seed in list(seeds) + list(grid):
        est = prime_period(u, seed, horizon=horizon, tol=tol, step=step)
        if est.stagnation:
            continue
        sampled.append(est)
        if est.period >= target:
            return LongOrbitScan(est, target, sampled)
    return LongOrbitScan(None, target, sampled)


def long_orbit_predicate(u):
    """Sufficient condition: two distinct stagnation points force long orbits."""
    if u.max_speed() < 1e-14:
        return LongOrbitPredicate(False, 0, "velocity field is identically zero")
    scan = find_stagnation_points(u, seed_grid=32)
    n = len(scan.points)
    if n >= 2:
        text = ("%d distinct stagnation points found; two or more imply "
                "arbitrarily long orbits (sufficient condition only)" % n)
        return LongOrbitPredicate(True, n, text)
    text = ("%d stagnation point(s) found; the two-point sufficient condition "
            "does not apply" % n)
    return LongOrbitPredicate(False, n, text)


def periods_to_csv(estimates, path):
    rows = ["x1,x2,period_or_inf,horizon"]
    for e in estimates:
        period = "inf" if not math.isfinite(e.period) else "%.17g" % e.period
        rows.append("%.17g,%.17g,%s,%.17g"
                    % (e.point[0], e.point[1], period, e.horizon))
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
