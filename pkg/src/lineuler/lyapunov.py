"""Lyapunov exponents of the flow, the ray-amplitude cocycle, and growth
rates of higher differentials of the flow map.

Exponent estimates are slopes of least-squares fits of log growth over the
last half of the time window; matrices are rescaled by their spectral norm on
a fixed cadence to keep the accumulation conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import flow
from .errors import InvalidInputError
from .fields import TWO_PI, find_stagnation_points, wrap


def fit_slope(times, values, window=0.5):
    """Least-squares slope of values vs times over the trailing window."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    t0 = times[0] + (1.0 - window) * (times[-1] - times[0])
    sel = times >= t0
    t = times[sel]
    v = values[sel]
    if len(t) < 2:
        return 0.0
    t = t - t.mean()
    denom = float(np.dot(t, t))
    if denom == 0.0:
        return 0.0
    return float(np.dot(t, v - v.mean()) / denom)


def _spectral_norm_2x2(M):
    """Largest singular value, closed form, batched over leading axes."""
    f = np.sum(M * M, axis=(-2, -1))
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    disc = np.maximum(f * f - 4.0 * det * det, 0.0)
    return np.sqrt(0.5 * (f + np.sqrt(disc)))


@dataclass
class ExponentEstimate:
    value: float               # lambda_1 (slope fit)
    horizon: float
    times: np.ndarray
    trace: np.ndarray          # running log growth (monotone re-accumulated)
    quotient: float            # t^-1 log growth evaluated at the horizon

    @property
    def lambda2(self):
        # area preservation forces the exponents to sum to zero
        return -self.value

    @property
    def running(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            r = self.trace / self.times
        r[self.times == 0] = 0.0
        return r


def _accumulated_log_norms(u, points, T, step, sample_dt):
    """log ||D phi_t|| at sample times for a batch of points, with rescaling."""
    pts = np.asarray(points, dtype=float)
    n_samples = max(2, int(round(abs(T) / sample_dt)) + 1)
    times = np.linspace(0.0, T, n_samples)
    y = flow._pack_tangent(pts)
    rhs = flow._tangent_rhs(u)
    logsum = np.zeros(pts.shape[:-1])
    out = np.zeros((n_samples,) + pts.shape[:-1])
    for i in range(1, n_samples):
        y = flow._rk4_span(rhs, y, times[i - 1], times[i], step)
        M = y[..., 2:6].reshape(pts.shape[:-1] + (2, 2))
        s = _spectral_norm_2x2(M)
        out[i] = logsum + np.log(s)
        y[..., 2:6] /= s[..., None]
        logsum = out[i]
    return times, out


def exponent_at(u, x0, T, step=flow.DEFAULT_STEP, sample_dt=0.5):
    """Top Lyapunov exponent estimate at one point."""
    if T <= 0:
        raise InvalidInputError("horizon must be positive")
    times, logs = _accumulated_log_norms(u, np.asarray(x0, float), T, step,
                                         sample_dt)
    value = fit_slope(times, logs)
    return ExponentEstimate(value, T, times, logs, float(logs[-1] / T))


@dataclass
class GlobalExponentEstimate:
    value: float
    grid_slope: float
    stagnation_sup: float
    provenance: str
    horizon: float
    times: np.ndarray
    trace: np.ndarray           # log max over the grid
    grid_points: np.ndarray
    grid_quotients: np.ndarray  # per-point t^-1 log ||D phi_T||


def global_exponent(u, T, grid_size=64, step=flow.DEFAULT_STEP, sample_dt=0.5):
    """Estimate of the top exponent over all invariant behavior.

    Combines the slope of log max_x ||D phi_t(x)|| over a grid (the aligned
    grid deliberately contains stagnation points and separatrix lines) with
    the exact exponents at detected hyperbolic stagnation points, returning
    the larger value with provenance.
    """
    if T <= 0 or grid_size < 4:
        raise InvalidInputError("need T > 0 and grid_size >= 4")
    g = np.linspace(0.0, TWO_PI, grid_size, endpoint=False)
    X = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    times, logs = _accumulated_log_norms(u, X, T, step, sample_dt)
    trace = logs.max(axis=1)
    grid_slope = fit_slope(times, trace)
    exps = stagnation_exponents(u)
    stag = max(exps) if exps else 0.0
    if stag >= grid_slope:
        value, prov = stag, "stagnation-point spectrum"
    else:
        value, prov = grid_slope, "grid cocycle growth"
    return GlobalExponentEstimate(value, grid_slope, stag, prov, T, times,
                                  trace, X, logs[-1] / T)


def stagnation_exponents(u):
    """Exponents contributed by stagnation points: {-lam, 0, lam} patterns."""
    try:
        scan = find_stagnation_points(u)
    except InvalidInputError:
        return []
    vals = []
    for p in scan.points:
        if p.kind == "hyperbolic":
            vals.extend([-p.exponent, p.exponent])
        else:
            vals.append(0.0)
    vals.sort()
    out = []
    for v in vals:
        if not out or abs(v - out[-1]) > 1e-10:
            out.append(v)
    return out


# ---------------------------------------------------------------------------
# ray-amplitude (bicharacteristic) system


def _ray_rhs(u):
    def rhs(y):
        shp = y.shape[:-1]
        x = y[..., 0:2]
        xi = y[..., 2:4]
        b = y[..., 4:6]
        J = u.jacobian(x)
        dxi = -np.einsum("...ji,...j->...i", J, xi)
        Jb = np.einsum("...ij,...j->...i", J, b)
        xi2 = np.sum(xi * xi, axis=-1, keepdims=True)
        db = -Jb + 2.0 * np.sum(Jb * xi, axis=-1, keepdims=True) * xi / xi2
        return np.concatenate([u.velocity(x), dxi, db], axis=-1)
    return rhs


@dataclass
class RayTrajectory:
    times: np.ndarray
    positions: np.ndarray
    xi: np.ndarray
    amplitude: np.ndarray
    first_integral_drift: float
    renormalizations: int = 0


def bas_trajectory(u, x0, xi0, b0, T, step=flow.DEFAULT_STEP, n_samples=201):
    """Integrate the ray-amplitude system from a unit, orthogonal frame.

    |b||xi| is conserved along solutions; the reported drift is the maximal
    relative deviation of that product over the sampled times.
    """
    xi0 = np.asarray(xi0, dtype=float)
    b0 = np.asarray(b0, dtype=float)
    if abs(np.linalg.norm(xi0) - 1) > 1e-9 or abs(np.linalg.norm(b0) - 1) > 1e-9:
        raise InvalidInputError("xi0 and b0 must be unit vectors")
    if abs(np.dot(xi0, b0)) > 1e-9:
        raise InvalidInputError("xi0 must be orthogonal to b0")
    y0 = np.concatenate([np.asarray(x0, float), xi0, b0])
    times = np.linspace(0.0, T, n_samples)
    ys = flow._rk4_record(_ray_rhs(u), y0, times, step)
    xi = ys[:, 2:4]
    b = ys[:, 4:6]
    prod = np.linalg.norm(xi, axis=-1) * np.linalg.norm(b, axis=-1)
    drift = float(np.max(np.abs(prod - prod[0])) / prod[0])
    return RayTrajectory(times, wrap(ys[:, 0:2]), xi, b, drift)


@dataclass
class RaySampleSpec:
    """Deterministic sample family for ray-amplitude exponent estimates."""

    n_samples: int = 50
    seed: int = 712
    include_stagnation: bool = True


def _ray_samples(u, spec):
    xs, xis, bs = [], [], []
    if spec.include_stagnation:
        try:
            scan = find_stagnation_points(u)
        except InvalidInputError:
            scan = None
        if scan is not None:
            for p in scan.hyperbolic():
                vals, vecs = np.linalg.eig(p.jacobian.T)
                order = np.argsort(np.real(vals))
                for pick, offs in ((order[-1], 0.0), (order[-1], 0.05)):
                    xi = np.real(vecs[:, pick])
                    xi = xi / np.linalg.norm(xi)
                    b = np.array([-xi[1], xi[0]])
                    xs.append(wrap(p.location + offs * (xi + b) / np.sqrt(2)))
                    xis.append(xi)
                    bs.append(b)
    rng = np.random.default_rng(spec.seed)
    while len(xs) < spec.n_samples:
        xs.append(rng.uniform(0.0, TWO_PI, size=2))
        th = rng.uniform(0.0, TWO_PI)
        xi = np.array([np.cos(th), np.sin(th)])
        xis.append(xi)
        bs.append(np.array([-xi[1], xi[0]]))
    n = spec.n_samples
    return (np.array(xs[:n]), np.array(xis[:n]), np.array(bs[:n]))


@dataclass
class RayExponentEstimate:
    value: float
    horizon: float
    times: np.ndarray
    trace: np.ndarray
    max_drift: float
    n_samples: int


def _ray_exponent(u, spec, T, step, sample_dt, weight_m):
    xs, xis, bs = _ray_samples(u, spec)
    y = np.concatenate([xs, xis, bs], axis=-1)
    n_samples = max(2, int(round(T / sample_dt)) + 1)
    times = np.linspace(0.0, T, n_samples)
    rhs = _ray_rhs(u)
    trace = np.zeros(n_samples)
    drift = 0.0
    prod0 = None
    for i, t in enumerate(times):
        if i > 0:
            y = flow._rk4_span(rhs, y, times[i - 1], t, step)
        xi = y[:, 2:4]
        b = y[:, 4:6]
        nb = np.linalg.norm(b, axis=-1)
        nxi = np.linalg.norm(xi, axis=-1)
        prod = nb * nxi
        if prod0 is None:
            prod0 = prod
        drift = max(drift, float(np.max(np.abs(prod - prod0) / prod0)))
        w = nb if weight_m == 0 else (1.0 + nxi ** 2) ** (weight_m / 2.0) * nb
        trace[i] = np.log(np.max(w))
    return RayExponentEstimate(fit_slope(times, trace), T, times, trace,
                               drift, len(xs))


def bas_max_exponent(u, spec=None, T=30.0, step=flow.DEFAULT_STEP,
                     sample_dt=0.5):
    """Max growth rate of the ray amplitude |b| over a sample family."""
    return _ray_exponent(u, spec or RaySampleSpec(), T, step, sample_dt, 0)


def weighted_b_exponent(u, m, spec=None, T=30.0, step=flow.DEFAULT_STEP,
                        sample_dt=0.5):
    """Growth rate of (1+|xi|^2)^(m/2) |b| over the same sample family."""
    if int(m) != m:
        raise InvalidInputError("weight index m must be an integer")
    return _ray_exponent(u, spec or RaySampleSpec(), T, step, sample_dt, int(m))


# ---------------------------------------------------------------------------
# growth of higher differentials


def _bilinear_norm(T2, n_angles=96):
    """Operator norm of 2x2x2 tensors: sup over unit v of sigma_1(T[:, :, .] v)."""
    th = np.linspace(0.0, np.pi, n_angles, endpoint=False)
    V = np.stack([np.cos(th), np.sin(th)], axis=-1)        # (a, 2)
    B = np.einsum("...ijl,al->a...ij", T2, V)
    return _spectral_norm_2x2(B).max(axis=0)


@dataclass
class GrowthEstimate:
    value: float       # trailing-window slope
    quotient: float    # t^-1 log max at the horizon
    horizon: float
    times: np.ndarray
    trace: np.ndarray


def higher_norm_growth(u, m, T, grid_size=32, step=flow.DEFAULT_STEP,
                       sample_dt=0.5):
    """Growth rate of max_x ||D^m phi_t(x)|| for m in {1, 2}.

    The second variational flow is the implemented ceiling; for m = 1 this
    reproduces the grid part of global_exponent.
    """
    if m not in (1, 2):
        raise InvalidInputError("m must be 1 or 2")
    if m == 1:
        est = global_exponent(u, T, grid_size=grid_size, step=step,
                              sample_dt=sample_dt)
        return GrowthEstimate(est.grid_slope, float(est.trace[-1] / T), T,
                              est.times, est.trace)
    g = np.linspace(0.0, TWO_PI, grid_size, endpoint=False)
    X = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    n_samples = max(2, int(round(T / sample_dt)) + 1)
    times = np.linspace(0.0, T, n_samples)
    y = flow._pack_second(X)
    rhs = flow._second_rhs(u)
    trace = np.zeros(n_samples)
    trace[0] = -np.inf
    for i in range(1, n_samples):
        y = flow._rk4_span(rhs, y, times[i - 1], times[i], step)
        T2 = y[:, 6:14].reshape(-1, 2, 2, 2)
        trace[i] = np.log(np.max(_bilinear_norm(T2)))
    trace[0] = min(trace[1] - sample_dt, 0.0)  # seed tensor is exactly zero
    return GrowthEstimate(fit_slope(times, trace), float(trace[-1] / T), T,
                          times, trace)


# ---------------------------------------------------------------------------
# CSV dumps


def exponent_field_to_csv(est, path):
    rows = ["x1,x2,lambda1"]
    for p, lam in zip(est.grid_points, est.grid_quotients):
        rows.append("%.17g,%.17g,%.17g" % (p[0], p[1], lam))
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def ray_to_csv(traj, path):
    rows = ["t,b1,b2,xi1,xi2,integral"]
    for i, t in enumerate(traj.times):
        prod = (np.linalg.norm(traj.amplitude[i]) * np.linalg.norm(traj.xi[i]))
        rows.append(",".join("%.17g" % v for v in
                             (t, traj.amplitude[i, 0], traj.amplitude[i, 1],
                              traj.xi[i, 0], traj.xi[i, 1], prod)))
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
