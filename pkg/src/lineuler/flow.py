"""Flow maps, variational cocycles and volume-preserving streamline charts.

Everything integrates with a classical fixed-step fourth-order scheme
(default step 1e-3); volume preservation is monitored, not enforced.
Backward time uses a negative step, which is algebraically identical to
integrating the reversed field.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import (ChartOverlapError, IntegrationError, PreconditionError,
                     StagnationProximityError)
from .fields import TWO_PI, torus_distance, wrap

DEFAULT_STEP = 1e-3


def _rk4_span(rhs, y, t0, t1, step):
    """Integrate y' = rhs(y) from t0 to t1 with |h| <= step; returns y(t1)."""
    dt = t1 - t0
    if dt == 0.0:
        return y
    n = max(1, int(np.ceil(abs(dt) / step)))
    h = dt / n
    for _ in range(n):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationError("state became non-finite", last_state=y,
                                   last_time=t0)
    return y


def _rk4_record(rhs, y0, times, step):
    """States at the given monotone time grid (first entry is the start)."""
    times = np.asarray(times, dtype=float)
    out = np.empty(times.shape + np.shape(y0), dtype=float)
    y = np.array(y0, dtype=float)
    out[0] = y
    for i in range(1, len(times)):
        y = _rk4_span(rhs, y, times[i - 1], times[i], step)
        out[i] = y
    return out


# ---------------------------------------------------------------------------
# right-hand sides


def _flow_rhs(u):
    return lambda y: u.velocity(y)


def _tangent_rhs(u):
    def rhs(y):
        x = y[..., 0:2]
        M = y[..., 2:6].reshape(y.shape[:-1] + (2, 2))
        J = u.jacobian(x)
        dM = np.einsum("...ij,...jk->...ik", J, M)
        return np.concatenate([u.velocity(x), dM.reshape(y.shape[:-1] + (4,))],
                              axis=-1)
    return rhs


def _second_rhs(u):
    def rhs(y):
        shp = y.shape[:-1]
        x = y[..., 0:2]
        M = y[..., 2:6].reshape(shp + (2, 2))
        T = y[..., 6:14].reshape(shp + (2, 2, 2))
        J = u.jacobian(x)
        H = u.hessian(x)
        dM = np.einsum("...ij,...jk->...ik", J, M)
        dT = (np.einsum("...ia,...ajl->...ijl", J, T)
              + np.einsum("...iab,...aj,...bl->...ijl", H, M, M))
        return np.concatenate([u.velocity(x),
                               dM.reshape(shp + (4,)),
                               dT.reshape(shp + (8,))], axis=-1)
    return rhs


def _pack_tangent(x):
    x = np.asarray(x, dtype=float)
    eye = np.broadcast_to(np.eye(2).reshape(4), x.shape[:-1] + (4,))
    return np.concatenate([x, eye], axis=-1)


def _pack_second(x):
    x = np.asarray(x, dtype=float)
    zero = np.zeros(x.shape[:-1] + (8,))
    return np.concatenate([_pack_tangent(x), zero], axis=-1)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """Sampled solution of x' = u(x) with a cubic Hermite interpolant."""

    times: np.ndarray        # (n,), monotone
    points: np.ndarray       # (n, 2), unwrapped for interpolation
    velocities: np.ndarray   # (n, 2)

    @property
    def endpoint(self):
        return wrap(self.points[-1])

    def at(self, t):
        """Interpolated (wrapped) position at times t inside the sampled span."""
        t = np.asarray(t, dtype=float)
        ts = self.times
        sign = 1.0 if ts[-1] >= ts[0] else -1.0
        key = sign * ts
        idx = np.clip(np.searchsorted(key, sign * t) - 1, 0, len(ts) - 2)
        t0, t1 = ts[idx], ts[idx + 1]
        h = t1 - t0
        s = np.where(h != 0, (t - t0) / np.where(h == 0, 1.0, h), 0.0)[..., None]
        p0, p1 = self.points[idx], self.points[idx + 1]
        v0, v1 = self.velocities[idx], self.velocities[idx + 1]
        h = h[..., None]
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s ** 2 * (3 - 2 * s)
        h11 = s ** 2 * (s - 1)
        return wrap(h00 * p0 + h10 * h * v0 + h01 * p1 + h11 * h * v1)


def advance(u, x0, t, step=DEFAULT_STEP, record_dt=None):
    """Trajectory from x0 over [0, t] (t may be negative), densely queryable."""
    x0 = np.asarray(x0, dtype=float)
    if record_dt is None:
        record_dt = max(step, abs(t) / 4000.0) if t != 0 else step
    n = max(1, int(np.ceil(abs(t) / record_dt)))
    times = np.linspace(0.0, t, n + 1)
    pts = _rk4_record(_flow_rhs(u), x0, times, step)
    return Trajectory(times, pts, u.velocity(pts))


def flow_map(u, x, t, step=DEFAULT_STEP):
    """Endpoints phi_t(x) for a batch of points x of shape (..., 2)."""
    y = _rk4_span(_flow_rhs(u), np.asarray(x, dtype=float), 0.0, t, step)
    return wrap(y)


@dataclass
class CocycleState:
    """Flow endpoint with first (and optionally second) variations."""

    position: np.ndarray
    matrix: np.ndarray                # D phi_t, shape (2, 2)
    time: float
    second: Optional[np.ndarray] = None   # D^2 phi_t, shape (2, 2, 2)

    @property
    def det(self):
        return float(np.linalg.det(self.matrix))


def tangent_flow(u, x0, t, step=DEFAULT_STEP):
    """Solve the variational system along the orbit of x0."""
    y = _rk4_span(_tangent_rhs(u), _pack_tangent(x0), 0.0, t, step)
    return CocycleState(wrap(y[0:2]), y[2:6].reshape(2, 2), t)


def tangent_map(u, x, t, step=DEFAULT_STEP):
    """Batch version: returns (positions, matrices) over x of shape (..., 2)."""
    y = _rk4_span(_tangent_rhs(u), _pack_tangent(x), 0.0, t, step)
    return wrap(y[..., 0:2]), y[..., 2:6].reshape(y.shape[:-1] + (2, 2))


def second_variation(u, x0, t, step=DEFAULT_STEP):
    """Variational system extended to the second differential of the flow."""
    y = _rk4_span(_second_rhs(u), _pack_second(x0), 0.0, t, step)
    return CocycleState(wrap(y[0:2]), y[2:6].reshape(2, 2), t,
                        second=y[6:14].reshape(2, 2, 2))


def second_variation_map(u, x, t, step=DEFAULT_STEP):
    """Batch second variation: (positions, matrices, second tensors)."""
    y = _rk4_span(_second_rhs(u), _pack_second(x), 0.0, t, step)
    shp = y.shape[:-1]
    return (wrap(y[..., 0:2]), y[..., 2:6].reshape(shp + (2, 2)),
            y[..., 6:14].reshape(shp + (2, 2, 2)))


# ---------------------------------------------------------------------------
# transverse flow


def _transverse_rhs(u, floor):
    def rhs(y):
        v = u.velocity(y)
        s2 = np.sum(v * v, axis=-1, keepdims=True)
        if np.any(s2 < floor * floor):
            raise StagnationProximityError(
                "transverse arc entered |u| < %.3g" % floor)
        return np.stack([-v[..., 1], v[..., 0]], axis=-1) / s2
    return rhs


def transverse_flow(u, x0, tau, step=1e-5, floor_fraction=1e-6):
    """Point reached by sliding distance tau across streamlines.

    The transverse field is u_perp / |u|^2, so stream-function level is
    advanced at unit rate; the arc must stay away from stagnation points.
    """
    floor = floor_fraction * u.max_speed()
    y = _rk4_span(_transverse_rhs(u, floor), np.asarray(x0, dtype=float),
                  0.0, tau, step)
    return wrap(y)


def transverse_path(u, x0, taus, step=1e-5, floor_fraction=1e-6):
    """Transverse points at every requested tau (grid must contain 0)."""
    taus = np.asarray(taus, dtype=float)
    if not np.any(np.isclose(taus, 0.0)):
        raise PreconditionError("transverse grid must contain tau = 0")
    floor = floor_fraction * u.max_speed()
    rhs = _transverse_rhs(u, floor)
    x0 = np.asarray(x0, dtype=float)
    out = np.empty(taus.shape + (2,))
    order = np.argsort(taus)
    sorted_taus = taus[order]
    zero_pos = int(np.argmin(np.abs(sorted_taus)))
    # integrate outward from 0 in both directions
    y = x0.copy()
    prev = 0.0
    for i in range(zero_pos, len(sorted_taus)):
        y = _rk4_span(rhs, y, prev, sorted_taus[i], step)
        prev = sorted_taus[i]
        out[order[i]] = y
    y = x0.copy()
    prev = 0.0
    for i in range(zero_pos - 1, -1, -1):
        y = _rk4_span(rhs, y, prev, sorted_taus[i], step)
        prev = sorted_taus[i]
        out[order[i]] = y
    return wrap(out)


# ---------------------------------------------------------------------------
# streamline charts


@dataclass
class StreamlineChart:
    """Volume-preserving chart (t, tau) -> phi_t(psi_tau(x0)) on a strip.

    Carries the sampled map H, the transported inverse-transpose Jacobian
    (from the closed adjugate formula, det = 1), u_perp at the image points,
    and an a-posteriori injectivity certificate.
    """

    base_point: np.ndarray
    half_length: float
    half_width: float
    t_grid: np.ndarray            # (nt,)
    tau_grid: np.ndarray          # (ntau,), contains 0
    H: np.ndarray                 # (nt, ntau, 2), wrapped
    DH_inv_T: np.ndarray          # (nt, ntau, 2, 2)
    uperp_H: np.ndarray           # (nt, ntau, 2)
    det_DH: np.ndarray            # (nt, ntau)
    injectivity_ok: bool
    collisions: list
    transport_identity_error: float   # max rel |DH^-T e2 - u_perp(H)|

    @property
    def axis_index(self):
        return int(np.argmin(np.abs(self.tau_grid)))

    def axis_speed(self):
        """|u| along the tau = 0 streamline (equals |u_perp|)."""
        return np.linalg.norm(self.uperp_H[:, self.axis_index, :], axis=-1)

    def quad_weights(self):
        """Trapezoid weights for the (t, tau) lattice."""
        return np.outer(_trapezoid_weights(self.t_grid),
                        _trapezoid_weights(self.tau_grid))


def _trapezoid_weights(grid):
    w = np.zeros_like(grid)
    d = np.diff(grid)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _line_collisions(line_pts, spacings, skip=2):
    """Self-coincidence pairs along one tau-line of the chart.

    Points are embedded in R^4 (chordal torus metric); a pair (i, j) with
    |i - j| > skip collides when its distance is below half the local sample
    spacing of both members.
    """
    emb = np.concatenate([np.cos(line_pts), np.sin(line_pts)], axis=-1)
    radii = 0.5 * spacings
    rmax = float(radii.max())
    if rmax == 0.0:
        return []
    tree = cKDTree(emb)
    pairs = tree.query_pairs(r=min(rmax, 1.0), output_type="ndarray")
    out = []
    for i, j in pairs:
        if abs(int(i) - int(j)) <= skip:
            continue
        d = torus_distance(line_pts[i], line_pts[j])
        if d < min(radii[i], radii[j]):
            out.append((int(i), int(j), float(d)))
    return out


def build_chart(u, x0, half_length, half_width, n_t=None, n_tau=40,
                tau_range=None, step=DEFAULT_STEP, tau_step=1e-5,
                period_check=True, period_margin=3.0):
    """Construct the streamline chart on [-N, N] x [tau_lo, tau_hi].

    The default transverse range is symmetric, [-s, s]; an asymmetric range
    (still containing 0) supports mean-matching partner strips.  When
    period_check is set, the base point must not return within
    period_margin * N time units.
    """
    x0 = np.asarray(x0, dtype=float)
    N = float(half_length)
    s = float(half_width)
    if N <= 0 or s <= 0:
        raise PreconditionError("half_length and half_width must be positive")
    if period_check:
        from . import orbits  # local import; orbits builds on this module
        est = orbits.prime_period(u, x0, horizon=period_margin * N,
                                  tol=1e-4, step=max(step, 2e-3))
        if est.stagnation:
            raise PreconditionError("chart base point is a stagnation point")
        if np.isfinite(est.period) and est.period <= period_margin * N:
            raise PreconditionError(
                "prime period %.3f of the base point is below %g * N"
                % (est.period, period_margin))
    if n_t is None:
        n_t = int(max(400, round(100 * N))) + 1
    lo, hi = (-s, s) if tau_range is None else map(float, tau_range)
    if not (lo <= 0.0 <= hi) or lo == hi:
        raise PreconditionError("tau range must contain 0")
    tau_grid = np.unique(np.concatenate([np.linspace(lo, hi, n_tau), [0.0]]))
    base_pts = transverse_path(u, x0, tau_grid, step=tau_step)

    t_grid = np.linspace(-N, N, n_t)
    nt, ntau = len(t_grid), len(tau_grid)
    H = np.empty((nt, ntau, 2))
    Dphi = np.empty((nt, ntau, 2, 2))
    i0 = int(np.argmin(np.abs(t_grid)))
    # the grid is symmetric, so t_grid[i0] is 0 up to rounding
    rhs = _tangent_rhs(u)
    y = _pack_tangent(base_pts)
    H[i0] = base_pts
    Dphi[i0] = np.eye(2)
    yf = y.copy()
    for i in range(i0 + 1, nt):
        yf = _rk4_span(rhs, yf, t_grid[i - 1], t_grid[i], step)
        H[i] = wrap(yf[:, 0:2])
        Dphi[i] = yf[:, 2:6].reshape(ntau, 2, 2)
    yb = y.copy()
    for i in range(i0 - 1, -1, -1):
        yb = _rk4_span(rhs, yb, t_grid[i + 1], t_grid[i], step)
        H[i] = wrap(yb[:, 0:2])
        Dphi[i] = yb[:, 2:6].reshape(ntau, 2, 2)

    # DH^-T = (adjugate of Dphi)^T . [u/|u|^2 : u_perp] at the base arc
    ub = u.velocity(base_pts)
    speed2 = np.sum(ub * ub, axis=-1)
    cols = np.empty((ntau, 2, 2))
    cols[:, :, 0] = ub / speed2[:, None]
    cols[:, 0, 1] = -ub[:, 1]
    cols[:, 1, 1] = ub[:, 0]
    adjT = np.empty_like(Dphi)
    adjT[..., 0, 0] = Dphi[..., 1, 1]
    adjT[..., 0, 1] = -Dphi[..., 1, 0]
    adjT[..., 1, 0] = -Dphi[..., 0, 1]
    adjT[..., 1, 1] = Dphi[..., 0, 0]
    DH_inv_T = np.einsum("tnij,njk->tnik", adjT, cols)

    uperp_H = u.perp(H)
    det_DH = Dphi[..., 0, 0] * Dphi[..., 1, 1] - Dphi[..., 0, 1] * Dphi[..., 1, 0]

    resid = DH_inv_T[..., 1] - uperp_H
    scale = np.maximum(np.linalg.norm(uperp_H, axis=-1), 1e-300)
    transport_err = float((np.linalg.norm(resid, axis=-1) / scale).max())

    # per-line self-coincidence certificate; distinct tau lines sit on
    # distinct stream levels and are separated structurally
    collisions = []
    for j in range(ntau):
        line = H[:, j, :]
        neighbor = np.empty(nt)
        d = torus_distance(line[1:], line[:-1])
        neighbor[0] = d[0]
        neighbor[-1] = d[-1]
        neighbor[1:-1] = np.minimum(d[:-1], d[1:])
        for (a, b, dist) in _line_collisions(line, neighbor):
            collisions.append((int(a), int(j), int(b), int(j), dist))
    return StreamlineChart(
        base_point=x0, half_length=N, half_width=s, t_grid=t_grid,
        tau_grid=tau_grid, H=H, DH_inv_T=DH_inv_T, uperp_H=uperp_H,
        det_DH=det_DH, injectivity_ok=not collisions, collisions=collisions,
        transport_identity_error=transport_err)


def require_injective(chart):
    if not chart.injectivity_ok:
        raise ChartOverlapError("chart overlaps itself at %d sample pairs"
                                % len(chart.collisions),
                                pairs=chart.collisions[:16])
    return chart


# ---------------------------------------------------------------------------
# CSV dumps


def trajectory_to_csv(u, traj, path, step_note=None):
    """Write 't,x1,x2,m11,m12,m21,m22,det' rows along a sampled trajectory."""
    rows = ["t,x1,x2,m11,m12,m21,m22,det"]
    y = _pack_tangent(traj.points[0])
    rhs = _tangent_rhs(u)
    for i, t in enumerate(traj.times):
        if i > 0:
            y = _rk4_span(rhs, y, traj.times[i - 1], t, DEFAULT_STEP)
        M = y[2:6].reshape(2, 2)
        p = wrap(y[0:2])
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        rows.append(",".join("%.17g" % v for v in
                             (t, p[0], p[1], M[0, 0], M[0, 1], M[1, 0],
                              M[1, 1], det)))
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def chart_to_csv(chart, path):
    rows = ["t,tau,h1,h2,detDH"]
    for i, t in enumerate(chart.t_grid):
        for j, tau in enumerate(chart.tau_grid):
            rows.append(",".join("%.17g" % v for v in
                                 (t, tau, chart.H[i, j, 0], chart.H[i, j, 1],
                                  chart.det_DH[i, j])))
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
