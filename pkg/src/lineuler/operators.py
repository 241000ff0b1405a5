"""Fourier-Galerkin truncations of the linearized vorticity dynamics.

The vorticity-form operator splits into an advection part (skew-adjoint on
L2, banded by the Fourier support of the steady state) and a compact coupling
part that transports the background vorticity gradient with the velocity
recovered from the perturbation.  Truncation is a plain box projection; the
steady state is a trigonometric polynomial, so assembly is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from . import flow
from .errors import AliasingError, EigensolverError, InvalidInputError
from .fields import TWO_PI, FourierScalarField, wrap

DENSE_EIG_CEILING = 16


def box_modes(mode_box):
    """Lexicographic (k1, k2) list over the box without the zero mode."""
    kr = np.arange(-mode_box, mode_box + 1)
    K1, K2 = np.meshgrid(kr, kr, indexing="ij")
    modes = np.stack([K1.ravel(), K2.ravel()], axis=-1)
    keep = ~np.all(modes == 0, axis=1)
    return modes[keep]


def _index_table(mode_box):
    n = 2 * mode_box + 1
    table = -np.ones((n, n), dtype=int)
    modes = box_modes(mode_box)
    table[modes[:, 0] + mode_box, modes[:, 1] + mode_box] = np.arange(len(modes))
    return table


@dataclass
class GalerkinOperator:
    kind: str                  # 'advection' | 'coupling' | 'vorticity' | 'velocity'
    mode_box: int
    matrix: np.ndarray         # dense complex, unweighted (L2 coordinates)
    modes: np.ndarray          # (n, 2) int, row/column order
    sobolev_index: int = 0


def _mode_pairs(u):
    pairs = list(u.velocity_modes().items())
    pairs.sort(key=lambda kv: kv[0])
    return pairs


def assemble_advection(u, mode_box):
    """Matrix of w -> <u, grad> w; entry (k'+j, k') is i <u_j, k'>."""
    modes = box_modes(mode_box)
    table = _index_table(mode_box)
    n = len(modes)
    A = np.zeros((n, n), dtype=complex)
    mean = u.mean_flow
    if np.any(mean != 0.0):
        A[np.arange(n), np.arange(n)] = 1j * (modes @ mean)
    for (j1, j2), uhat in _mode_pairs(u):
        tgt = modes[:, 0] + j1 + mode_box, modes[:, 1] + j2 + mode_box
        ok = ((0 <= tgt[0]) & (tgt[0] < table.shape[0])
              & (0 <= tgt[1]) & (tgt[1] < table.shape[1]))
        rows = np.full(n, -1)
        rows[ok] = table[tgt[0][ok], tgt[1][ok]]
        ok &= rows >= 0
        sym = 1j * (uhat[0] * modes[:, 0] + uhat[1] * modes[:, 1])
        A[rows[ok], np.arange(n)[ok]] += sym[ok]
    return GalerkinOperator("advection", mode_box, A, modes)


def assemble_coupling(u, mode_box):
    """Matrix of w -> -<curl^-1 w, grad> curl u (finite rank profile)."""
    modes = box_modes(mode_box)
    table = _index_table(mode_box)
    n = len(modes)
    K = np.zeros((n, n), dtype=complex)
    norm2 = (modes[:, 0] ** 2 + modes[:, 1] ** 2).astype(float)
    curl_modes = sorted(u.curl_modes().items())
    for (j1, j2), c in curl_modes:
        tgt = modes[:, 0] + j1 + mode_box, modes[:, 1] + j2 + mode_box
        ok = ((0 <= tgt[0]) & (tgt[0] < table.shape[0])
              & (0 <= tgt[1]) & (tgt[1] < table.shape[1]))
        rows = np.full(n, -1)
        rows[ok] = table[tgt[0][ok], tgt[1][ok]]
        ok &= rows >= 0
        # <-i k'_perp / |k'|^2, i j> = (k'1 j2 - k'2 j1) / |k'|^2
        sym = -(modes[:, 0] * j2 - modes[:, 1] * j1) / norm2 * c
        K[rows[ok], np.arange(n)[ok]] += sym[ok]
    return GalerkinOperator("coupling", mode_box, K, modes)


def assemble_vorticity_operator(u, mode_box):
    """Linearized vorticity dynamics: minus advection plus coupling."""
    A = assemble_advection(u, mode_box)
    K = assemble_coupling(u, mode_box)
    return GalerkinOperator("vorticity", mode_box, -A.matrix + K.matrix, A.modes)


def assemble_velocity_operator(u, mode_box):
    """Velocity-form linearization on the divergence-free mode basis.

    Basis element for k: -i (k_perp / |k|^2) e^{i k.x}, whose scalar curl has
    coefficient exactly 1; the pressure gradient is removed with the spectral
    projection onto divergence-free fields.
    """
    modes = box_modes(mode_box)
    table = _index_table(mode_box)
    n = len(modes)
    L = np.zeros((n, n), dtype=complex)
    norm2 = (modes[:, 0] ** 2 + modes[:, 1] ** 2).astype(float)
    a_vec = np.stack([1j * modes[:, 1] / norm2, -1j * modes[:, 0] / norm2],
                     axis=-1)
    mean = u.mean_flow
    contributions = []
    if np.any(mean != 0.0):
        contributions.append(((0, 0), None, mean))
    for (j1, j2), uhat in _mode_pairs(u):
        contributions.append(((j1, j2), uhat, None))
    for (j1, j2), uhat, mean_part in contributions:
        k1 = modes[:, 0] + j1
        k2 = modes[:, 1] + j2
        tgt = k1 + mode_box, k2 + mode_box
        ok = ((0 <= tgt[0]) & (tgt[0] < table.shape[0])
              & (0 <= tgt[1]) & (tgt[1] < table.shape[1]))
        rows = np.full(n, -1)
        rows[ok] = table[tgt[0][ok], tgt[1][ok]]
        ok &= rows >= 0
        V = np.zeros((n, 2), dtype=complex)
        if mean_part is not None:
            adv = -1j * (modes @ mean_part)
            V += adv[:, None] * a_vec
        else:
            adv = -1j * (uhat[0] * modes[:, 0] + uhat[1] * modes[:, 1])
            V += adv[:, None] * a_vec
            stretch = -1j * (a_vec[:, 0] * j1 + a_vec[:, 1] * j2)
            V += stretch[:, None] * uhat[None, :]
        # spectral Leray projection, then the scalar curl coefficient
        kk = np.stack([k1, k2], axis=-1).astype(float)
        kn2 = np.maximum(np.sum(kk * kk, axis=-1), 1.0)
        V = V - kk * (np.sum(kk * V, axis=-1) / kn2)[:, None]
        curl_out = 1j * (k1 * V[:, 1] - k2 * V[:, 0])
        L[rows[ok], np.arange(n)[ok]] += curl_out[ok]
    return GalerkinOperator("velocity", mode_box, L, modes)


def assemble_velocity_operator_with_check(u, mode_box):
    """Velocity-form operator plus the max mismatch against the vorticity form.

    On the divergence-free basis the curl conjugation is the identity, so the
    two assemblies must agree; the mismatch is reported over interior modes
    (those whose convolution images stay inside the box).
    """
    opV = assemble_velocity_operator(u, mode_box)
    opL = assemble_vorticity_operator(u, mode_box)
    r = max((max(abs(k1), abs(k2)) for (k1, k2) in u.velocity_modes()),
            default=0)
    interior = np.max(np.abs(opV.modes), axis=1) <= mode_box - r
    D = np.abs(opV.matrix - opL.matrix)[np.ix_(interior, interior)]
    return opV, float(D.max()) if D.size else 0.0


def sobolev_norm(w, m):
    """Diagonal-weight Sobolev norm of a mean-zero scalar field."""
    return w.norm(m)


def spectrum(op, m=None, ceiling=DENSE_EIG_CEILING):
    """Dense eigenvalues of the operator in H_m coordinates, sorted."""
    if op.mode_box > ceiling:
        raise InvalidInputError("dense eigensolve limited to mode_box <= %d"
                                % ceiling)
    m = op.sobolev_index if m is None else m
    w = np.sqrt((op.modes[:, 0] ** 2 + op.modes[:, 1] ** 2).astype(float)) ** m
    B = (w[:, None] / w[None, :]) * op.matrix
    try:
        vals = scipy.linalg.eig(B, right=False)
    except Exception as exc:  # pragma: no cover - LAPACK failure path
        raise EigensolverError("eigensolve failed (cond estimate %.3g): %s"
                               % (np.linalg.cond(B), exc))
    order = np.lexsort((np.round(vals.imag, 12), np.round(vals.real, 12)))
    return vals[order]


def distinct_eigenvalues(vals, tol=1e-9):
    """Deduplicate a sorted eigenvalue list at the given tolerance."""
    out = []
    for v in vals:
        if not out or abs(v - out[-1]) > tol:
            out.append(complex(v))
    return out


# ---------------------------------------------------------------------------
# matrix-free application on dense coefficient arrays


def _shift_add(out, src, j1, j2):
    """out[a + j1, b + j2] += src[a, b] wherever indices stay in range."""
    n = out.shape[0]
    a_lo, a_hi = max(0, -j1), min(n, n - j1)
    b_lo, b_hi = max(0, -j2), min(n, n - j2)
    if a_lo >= a_hi or b_lo >= b_hi:
        return
    out[a_lo + j1:a_hi + j1, b_lo + j2:b_hi + j2] += src[a_lo:a_hi, b_lo:b_hi]


def apply_advection(u, w):
    """<u, grad> w on the mode box of w, matrix-free."""
    M = w.mode_box
    kr = np.arange(-M, M + 1, dtype=float)
    K1, K2 = np.meshgrid(kr, kr, indexing="ij")
    out = np.zeros_like(w.coef)
    mean = u.mean_flow
    if np.any(mean != 0.0):
        out += 1j * (mean[0] * K1 + mean[1] * K2) * w.coef
    for (j1, j2), uhat in _mode_pairs(u):
        src = 1j * (uhat[0] * K1 + uhat[1] * K2) * w.coef
        _shift_add(out, src, j1, j2)
    out[M, M] = 0.0
    return FourierScalarField(out, copy=False)


def apply_coupling(u, w):
    """-<curl^-1 w, grad> curl u on the mode box of w, matrix-free."""
    M = w.mode_box
    kr = np.arange(-M, M + 1, dtype=float)
    K1, K2 = np.meshgrid(kr, kr, indexing="ij")
    norm2 = K1 ** 2 + K2 ** 2
    norm2[M, M] = 1.0
    out = np.zeros_like(w.coef)
    for (j1, j2), c in sorted(u.curl_modes().items()):
        src = -(K1 * j2 - K2 * j1) / norm2 * c * w.coef
        _shift_add(out, src, j1, j2)
    out[M, M] = 0.0
    return FourierScalarField(out, copy=False)


def apply_vorticity_operator(u, w):
    return FourierScalarField(apply_coupling(u, w).coef
                              - apply_advection(u, w).coef, copy=False)


# ---------------------------------------------------------------------------
# composition (evolution) semigroup


@dataclass
class PushforwardDiagnostics:
    l2_input: float
    l2_grid: float             # quadrature L2 of the sampled composition
    l2_box: float              # L2 of the re-expanded box field
    tail_fraction: float       # grid-spectrum mass beyond 2/3 Nyquist
    grid_size: int
    warned: bool


def _grid_points(n):
    g = np.linspace(0.0, TWO_PI, n, endpoint=False)
    return np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)


def _reexpand(values, mode_box, m_weight=0):
    """Box coefficients and tail diagnostics from grid samples."""
    n = values.shape[0]
    F = np.fft.fft2(values) / (n * n)
    freqs = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    K1f, K2f = np.meshgrid(freqs, freqs, indexing="ij")
    weight = (K1f.astype(float) ** 2 + K2f.astype(float) ** 2) ** m_weight
    weight[0, 0] = 0.0
    mass = weight * np.abs(F) ** 2
    total = float(mass.sum())
    cut = (2.0 / 3.0) * (n // 2)
    outside = np.maximum(np.abs(K1f), np.abs(K2f)) > cut
    tail = float(mass[outside].sum() / total) if total > 0 else 0.0
    idx = np.arange(-mode_box, mode_box + 1) % n
    coef = F[np.ix_(idx, idx)].copy()
    coef[mode_box, mode_box] = 0.0
    return FourierScalarField(coef, copy=False), tail


def pushforward(w, u, t, grid_size=192, step=flow.DEFAULT_STEP,
                warn_tail=1e-2, m_monitor=0):
    """Composition of w with the time-t flow map, re-expanded on w's box.

    Samples w(phi_t(x)) on an n x n grid (exact evaluation of the band-limited
    w at exactly advected nodes) and projects back with the FFT; the monitor
    reports the grid-spectrum fraction beyond two thirds of the grid Nyquist.
    """
    if 3 * w.mode_box > grid_size:
        raise InvalidInputError("grid must oversample the box by 3x")
    X = _grid_points(grid_size)
    Y = flow.flow_map(u, X.reshape(-1, 2), t, step=step)
    vals = w.evaluate(Y).reshape(grid_size, grid_size)
    out, tail = _reexpand(vals, w.mode_box, m_weight=m_monitor)
    diag = PushforwardDiagnostics(
        l2_input=w.norm(0),
        l2_grid=float(np.sqrt(np.mean(np.abs(vals) ** 2))),
        l2_box=out.norm(0),
        tail_fraction=tail,
        grid_size=grid_size,
        warned=tail > warn_tail)
    return out, diag


@dataclass
class SemigroupGrowth:
    slope: float
    horizon: float
    times: np.ndarray
    log_norms: np.ndarray
    tails: np.ndarray
    valid: bool


def semigroup_growth(u, m, seed_field, T, grid_size=192, n_samples=17,
                     step=flow.DEFAULT_STEP, tail_limit=0.1, strict=True):
    """Fitted growth exponent of the H_m norm of the advected seed field.

    The fit uses the trailing half window.  When the grid-spectrum tail (in
    the H_m weighting) exceeds tail_limit at any sample, the estimate is
    invalid; with strict=True that raises AliasingError carrying diagnostics.
    """
    if 3 * seed_field.mode_box > grid_size:
        raise InvalidInputError("grid must oversample the box by 3x")
    times = np.linspace(0.0, T, n_samples)
    X = _grid_points(grid_size).reshape(-1, 2)
    pos = X.astype(float).copy()
    rhs = flow._flow_rhs(u)
    log_norms = np.empty(n_samples)
    tails = np.empty(n_samples)
    for i, t in enumerate(times):
        if i > 0:
            pos = flow._rk4_span(rhs, pos, times[i - 1], t, step)
        vals = seed_field.evaluate(wrap(pos)).reshape(grid_size, grid_size)
        out, tail = _reexpand(vals, seed_field.mode_box, m_weight=m)
        log_norms[i] = np.log(max(out.norm(m), 1e-300))
        tails[i] = tail
    valid = bool(np.all(tails <= tail_limit))
    from .lyapunov import fit_slope
    est = SemigroupGrowth(fit_slope(times, log_norms), T, times, log_norms,
                          tails, valid)
    if strict and not valid:
        raise AliasingError(
            "grid-spectrum tail exceeded %.3g (max %.3g); the advected field "
            "is no longer resolved" % (tail_limit, float(tails.max())),
            diagnostics=est)
    return est


def gaussian_bump(center, sigma, mode_box, normalize_m: Optional[int] = 0):
    """Band-limited Gaussian-like bump, mean-zero and real-valued."""
    kr = np.arange(-mode_box, mode_box + 1)
    K1, K2 = np.meshgrid(kr, kr, indexing="ij")
    c = np.asarray(center, dtype=float)
    coef = np.exp(-0.5 * sigma ** 2 * (K1 ** 2 + K2 ** 2)
                  - 1j * (K1 * c[0] + K2 * c[1]))
    coef[mode_box, mode_box] = 0.0
    f = FourierScalarField(coef, copy=False)
    if normalize_m is not None:
        f = f * (1.0 / f.norm(normalize_m))
    return f


# ---------------------------------------------------------------------------
# CSV dumps


def spectrum_to_csv(vals, path, notes=None):
    rows = ["re,im"]
    rows += ["%.17g,%.17g" % (v.real, v.imag) for v in vals]
    if notes:
        rows += ["# %s" % line for line in notes]
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def operator_to_csv(op, path, drop_tol=0.0):
    rows = ["k1,k2,k1p,k2p,re,im"]
    for r in range(op.matrix.shape[0]):
        for c in range(op.matrix.shape[1]):
            v = op.matrix[r, c]
            if abs(v) > drop_tol:
                rows.append("%d,%d,%d,%d,%.17g,%.17g"
                            % (op.modes[r, 0], op.modes[r, 1],
                               op.modes[c, 0], op.modes[c, 1], v.real, v.imag))
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
