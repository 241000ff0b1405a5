"""Approximate eigenfunctions transported along streamlines, with residuals.

A profile F(t, tau) = e^{alpha t} gamma(t) beta(tau) on a thin strip is pushed
through the volume-preserving streamline chart onto the torus; the advection
operator then acts on it (up to the shift alpha) as differentiation in t, and
the measured residual of the linearized vorticity operator certifies an
approximate spectral point at z = -alpha.  Residual quotients are compared
against the closed trajectory-weighted bound on the profile.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import chebyshev
from scipy.spatial import cKDTree

from . import flow, operators
from .errors import (CertificateError, ChartOverlapError, InvalidInputError,
                     PreconditionError, StagnationProximityError,
                     SymmetrizationError)
from .fields import (TWO_PI, FourierScalarField, find_stagnation_points,
                     preset_flow, wrap)

# ---------------------------------------------------------------------------
# smoothing kernel (polynomial bump, closed-form antiderivatives)

_KC = 315.0 / 256.0


def _kernel_cdf(r):
    """CDF of the unit-mass bump c (1 - s^2)^4 on [-1, 1]."""
    r = np.clip(np.asarray(r, dtype=float), -1.0, 1.0)
    return 0.5 + _KC * (r - 4 * r ** 3 / 3 + 6 * r ** 5 / 5
                        - 4 * r ** 7 / 7 + r ** 9 / 9)


_PSI_OFFSET = 0.5 - _KC * (0.5 - 1.0 / 3 + 0.2 - 1.0 / 14 + 1.0 / 90)


def _kernel_cdf_integral(r):
    """Antiderivative of the CDF vanishing at -1; grows like r - const above 1."""
    r = np.asarray(r, dtype=float)
    rc = np.clip(r, -1.0, 1.0)
    core = (0.5 * rc + _KC * (rc ** 2 / 2 - rc ** 4 / 3 + rc ** 6 / 5
                              - rc ** 8 / 14 + rc ** 10 / 90)) + _PSI_OFFSET
    return core + np.where(r > 1.0, r - 1.0, 0.0)


def smoothed_tent(t, half_length, width):
    """Tent (1 - |t|/N) mollified at the kinks by a fixed polynomial bump."""
    if width == 0.0:
        return np.maximum(0.0, 1.0 - np.abs(t) / half_length)
    N, w = half_length, width
    t = np.asarray(t, dtype=float)
    return (w / N) * (_kernel_cdf_integral((t + N) / w)
                      - 2.0 * _kernel_cdf_integral(t / w)
                      + _kernel_cdf_integral((t - N) / w))


def smoothed_tent_derivative(t, half_length, width):
    if width == 0.0:
        t = np.asarray(t, dtype=float)
        inside = np.abs(t) < half_length
        return np.where(inside, -np.sign(t) / half_length, 0.0)
    N, w = half_length, width
    t = np.asarray(t, dtype=float)
    return (1.0 / N) * (_kernel_cdf((t + N) / w) - 2.0 * _kernel_cdf(t / w)
                        + _kernel_cdf((t - N) / w))


def _plateau_bump(sigma):
    """C-infinity bump supported on [-1, 1], identically 1 on [-1/2, 1/2]."""
    sigma = np.asarray(sigma, dtype=float)
    x = 2.0 * (1.0 - np.abs(sigma))  # >= 1 on the plateau, <= 0 outside

    def h(v):
        out = np.zeros_like(v)
        pos = v > 0
        out[pos] = np.exp(-1.0 / v[pos])
        return out

    xa = np.clip(x, 0.0, 1.0)
    num = h(xa)
    den = num + h(1.0 - xa)
    out = np.where(x >= 1.0, 1.0, np.where(x <= 0.0, 0.0, num / np.where(den == 0, 1.0, den)))
    return out


# ---------------------------------------------------------------------------
# profiles


@dataclass
class BumpProfile:
    """Longitudinal profile gamma and transverse cutoff beta with evaluators."""

    half_length: float
    half_width: float
    m: int
    variant: str                     # 'tent' | 'indicator' | 'monomial'
    smoothing_width: float
    monomial_report: dict = field(default_factory=dict)
    _beta_cheb: Optional[object] = None

    def gamma(self, t):
        return smoothed_tent(t, self.half_length, self.smoothing_width)

    def dgamma(self, t):
        return smoothed_tent_derivative(t, self.half_length, self.smoothing_width)

    def beta(self, tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        s = self.half_width
        if self.variant == "tent":
            return np.maximum(0.0, s - np.abs(tau))
        if self.variant == "indicator":
            return np.where(np.abs(tau) <= s, 1.0, 0.0)
        inside = np.abs(tau) <= s
        out = np.zeros_like(tau)
        out[inside] = (_plateau_bump(tau[inside] / s)
                       * tau[inside] ** self.m / math.factorial(self.m))
        return out

    def beta_derivative(self, k, tau):
        """k-th derivative of beta (a.e. for the kinked variants)."""
        tau = np.asarray(tau, dtype=float)
        s = self.half_width
        if k == 0:
            return self.beta(tau)
        if self.variant == "tent":
            if k == 1:
                inside = np.abs(tau) < s
                return np.where(inside, -np.sign(tau), 0.0)
            return np.zeros_like(tau)
        if self.variant == "indicator":
            return np.zeros_like(tau)
        if self._beta_cheb is None:
            self._beta_cheb = chebyshev.Chebyshev.interpolate(
                lambda x: self.beta(x), 400, domain=[-s, s])
        d = self._beta_cheb.deriv(k)
        inside = np.abs(tau) <= s
        out = np.zeros_like(tau)
        out[inside] = d(tau[inside])
        return out

    def quotient_exact_tent(self):
        """Closed-form int |gamma'|^2 / int |gamma|^2 for the unsmoothed tent."""
        return 3.0 / self.half_length ** 2


def make_profiles(half_length, half_width, m, variant="tent",
                  smoothing_width=None):
    """Profile pair with validated transverse construction.

    The monomial variant is beta(tau) = phi(tau/s) tau^m / m! with a fixed
    plateau bump phi; it must keep its m-th derivative above 1/2 near zero
    while the lower derivatives shrink like powers of s.
    """
    if half_length <= 0 or half_width <= 0:
        raise InvalidInputError("profile needs positive half length and width")
    if variant not in ("tent", "indicator", "monomial"):
        raise InvalidInputError("unknown profile variant %r" % (variant,))
    if variant == "monomial" and m < 1:
        raise InvalidInputError("monomial cutoff requires m >= 1")
    if smoothing_width is None:
        smoothing_width = 0.1 * min(1.0, half_length / 10.0)
    prof = BumpProfile(float(half_length), float(half_width), int(m), variant,
                       float(smoothing_width))
    if variant == "monomial":
        s = prof.half_width
        grid = np.linspace(-s, s, 2001)
        report = {}
        for k in range(m):
            sup = float(np.max(np.abs(prof.beta_derivative(k, grid))))
            report["sup_d%d" % k] = sup
            report["sup_d%d_scaled" % k] = sup / s ** (m - k)
        dm = prof.beta_derivative(m, grid)
        above = np.abs(dm) > 0.5
        center = len(grid) // 2
        c_hi = 0.0
        for i in range(center, len(grid)):
            lo_i = 2 * center - i
            if not (above[i] and above[lo_i]):
                break
            c_hi = abs(grid[i]) / s
        report["sup_dm"] = float(np.max(np.abs(dm)))
        report["plateau_fraction"] = c_hi
        prof.monomial_report = report
        if c_hi < 0.05:
            raise InvalidInputError(
                "monomial cutoff: |beta^(m)| fell to %.3g near 0; plateau "
                "fraction %.3g is too small"
                % (float(np.min(np.abs(dm[center - 5:center + 6]))), c_hi))
    return prof


# ---------------------------------------------------------------------------
# base points


def choose_base_point(u, stagnation_point, lam, delta):
    """Point at distance delta from a hyperbolic zero along the contracting
    direction (for lam > 0; the expanding one for lam < 0, by time reversal).

    When the ray through the eigenvector is an invariant line of the flow,
    tiny eigenvector components are snapped to keep the point exactly on it.
    """
    if stagnation_point.kind != "hyperbolic":
        raise InvalidInputError("base point selection needs a hyperbolic zero")
    if delta <= 0:
        raise InvalidInputError("delta must be positive")
    J = stagnation_point.jacobian
    vals, vecs = np.linalg.eig(J)
    vals = np.real(vals)
    target = -abs(lam) if lam > 0 else abs(lam)
    idx = int(np.argmin(np.abs(vals - target)))
    v = np.real(vecs[:, idx])
    v = v / np.linalg.norm(v)
    snapped = np.where(np.abs(v) < 1e-12, 0.0, v)
    if np.linalg.norm(snapped) > 0:
        cand = snapped / np.linalg.norm(snapped)
        line = stagnation_point.location + np.outer(
            np.linspace(-0.3, 0.3, 7), cand)
        uv = u.velocity(wrap(line))
        cross = uv[:, 0] * cand[1] - uv[:, 1] * cand[0]
        if np.max(np.abs(cross)) < 1e-10 * max(1.0, u.max_speed()):
            v = cand
    lead = np.argmax(np.abs(v))
    if v[lead] < 0:
        v = -v
    return wrap(stagnation_point.location + delta * v)


# ---------------------------------------------------------------------------
# strip profiles and synthesis


def build_F(alpha, profile, chart, tau_offset=0.0, beta_override=None):
    """Samples of F = e^{alpha t} gamma(t) beta(tau) and of the transported
    action F~ = e^{alpha t} gamma'(t) beta(tau) on the chart lattice."""
    t = chart.t_grid
    tau = chart.tau_grid - tau_offset
    beta_fn = beta_override if beta_override is not None else profile.beta
    envelope = np.exp(alpha * t)
    F = np.outer(envelope * profile.gamma(t), beta_fn(tau))
    Ft = np.outer(envelope * profile.dgamma(t), beta_fn(tau))
    return F, Ft


def synthesize_many(chart, F_list, mode_box, chunk=4096):
    """Quadrature Fourier coefficients of several strip profiles at once.

    Returns [(field, mean)] where mean is the (0,0) quadrature value removed
    from the field.  The chart Jacobian is identically one, so the weights are
    a plain trapezoid rule on the (t, tau) lattice.
    """
    W = chart.quad_weights()
    H1 = chart.H[..., 0].ravel()
    H2 = chart.H[..., 1].ravel()
    kr = np.arange(-mode_box, mode_box + 1)
    nk = len(kr)
    C_list = [(W * F).ravel() for F in F_list]
    acc = [np.zeros((nk, nk), dtype=complex) for _ in F_list]
    for lo in range(0, len(H1), chunk):
        hi = min(lo + chunk, len(H1))
        E1 = np.exp(-1j * np.outer(kr, H1[lo:hi]))
        E2 = np.exp(-1j * np.outer(H2[lo:hi], kr))
        for a, C in zip(acc, C_list):
            a += (E1 * C[lo:hi]) @ E2
    out = []
    for a in acc:
        a /= TWO_PI ** 2
        mean = complex(a[mode_box, mode_box])
        a[mode_box, mode_box] = 0.0
        out.append((FourierScalarField(a, copy=False), mean))
    return out


def synthesize(chart, F, mode_box, chunk=4096):
    """Single-profile version of synthesize_many."""
    flow.require_injective(chart)
    return synthesize_many(chart, [F], mode_box, chunk)[0]


# ---------------------------------------------------------------------------
# eigenfunction assembly


@dataclass
class ApproxEigenfunction:
    field: FourierScalarField        # H_m normalized, exactly mean-free
    m: int
    alpha: complex
    base_point: np.ndarray
    half_length: float
    half_width: float
    tail: float
    tail_ok: bool
    injectivity_ok: bool
    raw_norm: float                  # H_m norm before normalization
    partner_scale: complex
    partner_offset: float
    partner_halfwidth: float
    support_gap: float               # min distance between the two bands
    chart: object = None
    expected_action: np.ndarray = None   # strip samples of (A - alpha) f

    @property
    def valid(self):
        return self.tail_ok and self.injectivity_ok


def partner_profiles(alpha, profile, chart, partner_offset=None,
                     partner_halfwidth=None):
    """Strip samples (F, F~, F_partner, F_partner~) for a mean-matching pair."""
    s = profile.half_width
    if partner_offset is None:
        partner_offset = 2.0 * s
    if partner_halfwidth is None:
        partner_halfwidth = 0.5 * s
    sbar = partner_halfwidth
    tau_hi = chart.tau_grid.max()
    if partner_offset - sbar <= s:
        raise SymmetrizationError("partner band overlaps the main strip")
    if partner_offset + sbar > tau_hi + 1e-15:
        raise SymmetrizationError("partner band leaves the chart")

    def beta_partner(tau):
        return profile.beta(tau * (s / sbar))

    F, Ft = build_F(alpha, profile, chart)
    Fp, Fpt = build_F(alpha, profile, chart, tau_offset=partner_offset,
                      beta_override=beta_partner)
    return (F, Ft, Fp, Fpt), partner_offset, sbar


def build_eigenfunction(u, chart, profile, alpha, mode_box, m,
                        partner_offset=None, partner_halfwidth=None,
                        tail_threshold=1e-3, require_injective=False,
                        _precomputed=None):
    """Synthesize, mean-match against a disjoint partner strip, normalize.

    The partner profile lives on the same chart at a positive tau offset; its
    amplitude is scaled so the two quadrature means coincide, which removes
    the (0,0) coefficient exactly.
    """
    if require_injective:
        flow.require_injective(chart)
    s = profile.half_width
    (F, Ft, Fp, Fpt), partner_offset, sbar = partner_profiles(
        alpha, profile, chart, partner_offset, partner_halfwidth)
    if _precomputed is None:
        (g_main, mean_main), (g_part, mean_part) = synthesize_many(
            chart, [F, Fp], mode_box)
    else:
        (g_main, mean_main), (g_part, mean_part) = _precomputed
    if abs(mean_part) < 1e-300:
        raise SymmetrizationError("partner strip has zero mean")
    kappa = mean_main / mean_part
    combined = FourierScalarField(g_main.coef - kappa * g_part.coef, copy=False)

    # measure the support separation of the two tau bands on the torus
    main_sel = np.abs(chart.tau_grid) <= s + 1e-15
    part_sel = np.abs(chart.tau_grid - partner_offset) <= sbar + 1e-15
    a_pts = chart.H[::4, main_sel, :].reshape(-1, 2)
    b_pts = chart.H[::4, part_sel, :].reshape(-1, 2)
    emb_a = np.concatenate([np.cos(a_pts), np.sin(a_pts)], axis=-1)
    emb_b = np.concatenate([np.cos(b_pts), np.sin(b_pts)], axis=-1)
    gap = float(cKDTree(emb_a).query(emb_b, k=1)[0].min())

    expected = Ft - kappa * Fpt
    raw_norm = combined.norm(m)
    if raw_norm == 0.0:
        raise SymmetrizationError("synthesized field vanished")
    tail = combined.tail_mass(m)
    return ApproxEigenfunction(
        field=combined * (1.0 / raw_norm), m=m, alpha=complex(alpha),
        base_point=chart.base_point, half_length=profile.half_length,
        half_width=s, tail=tail, tail_ok=tail <= tail_threshold,
        injectivity_ok=chart.injectivity_ok, raw_norm=raw_norm,
        partner_scale=kappa, partner_offset=partner_offset,
        partner_halfwidth=sbar, support_gap=gap, chart=chart,
        expected_action=expected)


# ---------------------------------------------------------------------------
# residual measurement


@dataclass
class ResidualBreakdown:
    total: float                    # || (L - z) g ||_m for unit g
    advection_part: float           # || (-A - z) g ||_m
    coupling_part: float            # || K g ||_m
    m: int
    z: complex
    tail: float


def residual(u, z, g, m=None, mode_box=None, require_valid_tail=True):
    """H_m residual of the linearized vorticity operator, matrix-free.

    The decomposition reports the advection part (matched by the transported
    strip derivative) and the coupling part separately; the latter is the one
    that compactness sends to zero along shrinking strips.
    """
    if isinstance(g, ApproxEigenfunction):
        fld, mm, tail = g.field, g.m, g.tail
        if require_valid_tail and not g.tail_ok:
            raise CertificateError("tail mass %.3g exceeds the certificate "
                                   "threshold" % g.tail)
    else:
        fld = g
        mm = 0 if m is None else m
        tail = fld.tail_mass(mm)
    if m is not None:
        mm = m
    if mode_box is not None and mode_box != fld.mode_box:
        fld = fld.restricted(mode_box)
    nrm = fld.norm(mm)
    if nrm == 0:
        raise InvalidInputError("cannot measure the residual of a zero field")
    fld = fld * (1.0 / nrm)
    Ag = operators.apply_advection(u, fld)
    Kg = operators.apply_coupling(u, fld)
    adv = FourierScalarField(-Ag.coef - z * fld.coef, copy=False)
    res = FourierScalarField(adv.coef + Kg.coef, copy=False)
    return ResidualBreakdown(res.norm(mm), adv.norm(mm), Kg.norm(mm), mm,
                             complex(z), tail)


def action_identity_error(u, g, chunk=8192):
    """Relative strip-L2 error between spectral (A - alpha) g and the
    transported profile derivative."""
    if g.chart is None or g.expected_action is None:
        raise InvalidInputError("eigenfunction carries no chart data")
    fld = g.field
    Ag = operators.apply_advection(u, fld)
    h = FourierScalarField(Ag.coef - g.alpha * fld.coef, copy=False)
    pts = g.chart.H.reshape(-1, 2)
    vals = h.evaluate(pts, chunk=chunk).reshape(g.chart.H.shape[:2])
    expected = g.expected_action / g.raw_norm
    W = g.chart.quad_weights()
    num = np.sqrt(np.sum(W * np.abs(vals - expected) ** 2))
    den = np.sqrt(np.sum(W * np.abs(expected) ** 2))
    return float(num / den)


def predicted_bound(u, x0, lam, m, profile, n_t=None, step=flow.DEFAULT_STEP):
    """Trajectory-weighted profile quotient bounding the attainable residual.

    bound^2 = int |u(phi_t x0)|^{2m} e^{2 m lam t} |gamma'|^2 dt
            / int |u(phi_t x0)|^{2m} e^{2 m lam t} |gamma|^2 dt
    with the speed factors dropped for m = 0.  Integrates its own trajectory,
    so it is independent of the chart and synthesis pipeline.
    """
    N = profile.half_length
    if n_t is None:
        n_t = int(max(400, round(100 * N))) + 1
    t_grid = np.linspace(-N, N, n_t)
    i0 = int(np.argmin(np.abs(t_grid)))
    pts = np.empty((n_t, 2))
    pts[i0] = np.asarray(x0, dtype=float)
    rhs = flow._flow_rhs(u)
    y = np.asarray(x0, dtype=float).copy()
    for i in range(i0 + 1, n_t):
        y = flow._rk4_span(rhs, y, t_grid[i - 1], t_grid[i], step)
        pts[i] = y
    y = np.asarray(x0, dtype=float).copy()
    for i in range(i0 - 1, -1, -1):
        y = flow._rk4_span(rhs, y, t_grid[i + 1], t_grid[i], step)
        pts[i] = y
    speed = u.speed(wrap(pts))
    if m == 0:
        weight = np.ones_like(speed)
    else:
        weight = speed ** (2 * m) * np.exp(2 * m * lam * t_grid)
    w = flow._trapezoid_weights(t_grid)
    num = float(np.sum(w * weight * profile.dgamma(t_grid) ** 2))
    den = float(np.sum(w * weight * profile.gamma(t_grid) ** 2))
    return math.sqrt(num / den)


# ---------------------------------------------------------------------------
# scenario sweeps


@dataclass
class ResidualRow:
    scenario: str
    m: int
    lam: float
    xi: float
    half_length: float
    half_width: float
    residual: float
    predicted: float
    coupling_norm: float
    tail: float
    injectivity_ok: bool
    valid: bool
    z: complex
    advection_part: float = float("nan")
    action_error: float = float("nan")
    note: str = ""


@dataclass
class ResidualReport:
    scenario: str
    rows: list

    def by_xi(self):
        out = {}
        for r in self.rows:
            out.setdefault(r.xi, []).append(r)
        for rows in out.values():
            rows.sort(key=lambda r: r.half_length)
        return out

    def trends(self):
        """Per-xi monotone-decay verdicts of residuals in N."""
        verdicts = {}
        for xi, rows in sorted(self.by_xi().items()):
            vals = [r.residual for r in rows if np.isfinite(r.residual)]
            verdicts["xi=%.6g" % xi] = bool(
                len(vals) >= 2 and all(b < a for a, b in zip(vals, vals[1:])))
        return verdicts

    def to_csv(self, path):
        rows = ["scenario,m,lambda,xi,N,s,residual,predicted,kg_norm,tail,inj"]
        for r in self.rows:
            rows.append("%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d"
                        % (r.scenario, r.m, r.lam, r.xi, r.half_length,
                           r.half_width, r.residual, r.predicted,
                           r.coupling_norm, r.tail, int(r.injectivity_ok)))
        with open(path, "w") as fh:
            fh.write("\n".join(rows) + "\n")

    def summary(self):
        return {
            "scenario": self.scenario,
            "rows": len(self.rows),
            "trends_decreasing_in_N": self.trends(),
            "all_injective": all(r.injectivity_ok for r in self.rows),
            "all_tails_ok": all(r.valid for r in self.rows),
            "notes": sorted({r.note for r in self.rows if r.note}),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _shear_strip_parameters(N, s_requested, period_margin=3.25):
    """Orbit height and strip width for long straight-orbit charts.

    The transverse coordinate advances the cosine of the height at unit rate,
    so the whole strip (main band plus partner) must fit between the
    stagnation line and the height where the period drops to the margin.
    """
    sin_top = TWO_PI / (period_margin * N)
    if sin_top >= 1.0:
        base = 0.0
    else:
        base = math.sqrt(1.0 - sin_top ** 2)
    W = 1.0 - base
    s = min(s_requested, W / 4.5)
    cos_c = base + 2.5 * s + 0.5 * (W - 3.5 * s)
    return math.acos(cos_c), s


def _cellular_orbit_level(u, N, margin=3.3, levels=None):
    """Stream level inside the cell whose orbit period exceeds margin * N."""
    from . import orbits
    levels = levels or [0.2, 0.1, 0.05, 0.02, 0.01, 5e-3, 2e-3, 1e-3, 5e-4,
                        2e-4, 1e-4]
    for h in levels:
        x0 = np.array([np.pi / 2.0, math.asin(h)])
        est = orbits.prime_period(u, x0, horizon=margin * N + 1.0, tol=1e-4,
                                  step=2e-3)
        if est.period > margin * N:
            return h, x0, est.period
    raise PreconditionError("no sampled orbit exceeded the period target")


_SCENARIO_DEFAULTS = {
    "cellular-vertical-line": dict(flow="cellular", m=1, variant="tent",
                                   mode_box=256, delta=0.05),
    "shear-imaginary-axis": dict(flow="shear", m=0, variant="indicator",
                                 mode_box=128),
    "rigid-spectral-gap": dict(flow="rigid", m=0, variant="indicator",
                               mode_box=48),
    "cellular-long-orbit": dict(flow="cellular", m=1, variant="tent",
                                mode_box=192),
}


def sweep(scenario, N_list, s_list=None, xi_list=(0.0,), m=None,
          mode_box=None, lam=None, delta=None, step=flow.DEFAULT_STEP,
          n_tau=64, tail_threshold=1e-3):
    """Run one theorem scenario over strip lengths and frequencies.

    Failing rows (chart overlap, invalid tails, symmetrization trouble) are
    flagged in place, never dropped.  Returns a ResidualReport.
    """
    if scenario not in _SCENARIO_DEFAULTS:
        raise InvalidInputError("unknown scenario %r; expected one of %s"
                                % (scenario, sorted(_SCENARIO_DEFAULTS)))
    cfg = dict(_SCENARIO_DEFAULTS[scenario])
    u = preset_flow(cfg["flow"])
    m_eff = cfg["m"] if m is None else int(m)
    box = cfg["mode_box"] if mode_box is None else int(mode_box)
    if s_list is None:
        s_req = [None] * len(N_list)
    elif np.isscalar(s_list):
        s_req = [float(s_list)] * len(N_list)
    else:
        s_req = list(s_list)
        if len(s_req) != len(N_list):
            raise InvalidInputError("s list must match N list")

    rows = []
    for N, s_want in zip(N_list, s_req):
        note = ""
        lam_eff = 0.0
        try:
            if scenario == "cellular-vertical-line":
                scan = find_stagnation_points(u)
                stag = scan.hyperbolic()[0]
                lam_eff = float(lam if lam is not None else stag.exponent)
                d = cfg["delta"] if delta is None else delta
                x0 = choose_base_point(u, stag, lam_eff, d)
                s = s_want if s_want is not None else 0.06 / N
                chart = flow.build_chart(u, x0, N, s, n_tau=n_tau,
                                         tau_range=(-s, 2.5 * s), step=step)
            elif scenario == "shear-imaginary-axis":
                c, s = _shear_strip_parameters(N, s_want if s_want else 0.02)
                if s_want is not None and s < s_want:
                    note = "s reduced to %.3g for chart feasibility" % s
                x0 = np.array([0.0, c])
                chart = flow.build_chart(u, x0, N, s, n_tau=n_tau,
                                         tau_range=(-s, 2.5 * s), step=step)
            elif scenario == "rigid-spectral-gap":
                s = s_want if s_want is not None else 0.02
                x0 = np.array([0.0, np.pi / 2.0])
                chart = flow.build_chart(u, x0, N, s, n_tau=n_tau,
                                         tau_range=(-s, 2.5 * s), step=step,
                                         period_check=False)
                if not chart.injectivity_ok:
                    note = "chart wraps the 2*pi orbit (expected)"
            else:  # cellular-long-orbit
                h, x0, period = _cellular_orbit_level(u, N)
                s = min(s_want if s_want is not None else h / 8.0, h / 8.0)
                note = "level %.3g period %.3g" % (h, period)
                chart = flow.build_chart(u, x0, N, s, n_tau=n_tau,
                                         tau_range=(-s, 2.5 * s), step=step)
        except (PreconditionError, StagnationProximityError,
                IndexError) as exc:
            for xi in xi_list:
                rows.append(ResidualRow(scenario, m_eff, lam_eff, xi, N,
                                        float("nan"), float("nan"),
                                        float("nan"), float("nan"),
                                        float("nan"), False, False,
                                        complex("nan"),
                                        note="chart failed: %s" % exc))
            continue

        profile = make_profiles(N, s, m_eff, variant=cfg["variant"])
        # the phase matrices of the synthesis quadrature do not depend on
        # alpha, so all frequencies of this strip share one synthesis pass
        alphas = [m_eff * lam_eff + 1j * xi for xi in xi_list]
        stacked = []
        for alpha in alphas:
            (F, _, Fp, _), _, _ = partner_profiles(alpha, profile, chart)
            stacked.extend([F, Fp])
        synth = synthesize_many(chart, stacked, box)
        for idx, xi in enumerate(xi_list):
            alpha = alphas[idx]
            z = -alpha
            row_note = note
            try:
                g = build_eigenfunction(
                    u, chart, profile, alpha, box, m_eff,
                    tail_threshold=tail_threshold,
                    _precomputed=(synth[2 * idx], synth[2 * idx + 1]))
                br = residual(u, z, g, require_valid_tail=False)
                pred = predicted_bound(u, chart.base_point, lam_eff, m_eff,
                                       profile, step=step)
                act = action_identity_error(u, g) if g.valid else float("nan")
                if not g.tail_ok:
                    row_note = (row_note + "; " if row_note else "") + \
                        "tail %.2e above certificate threshold" % g.tail
                rows.append(ResidualRow(
                    scenario, m_eff, lam_eff, xi, N, s, br.total, pred,
                    br.coupling_part, g.tail, chart.injectivity_ok,
                    g.valid, z, advection_part=br.advection_part,
                    action_error=act, note=row_note))
            except (SymmetrizationError, CertificateError,
                    ChartOverlapError) as exc:
                rows.append(ResidualRow(
                    scenario, m_eff, lam_eff, xi, N, s, float("nan"),
                    float("nan"), float("nan"), float("nan"),
                    chart.injectivity_ok, False, z,
                    note=(row_note + "; " if row_note else "") + str(exc)))
    return ResidualReport(scenario, rows)
