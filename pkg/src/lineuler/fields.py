"""Steady flows and scalar fields on the 2-torus, represented spectrally.

Scalar fields are mean-zero trigonometric sums w(x) = sum_k w_k e^{i k.x}
stored on a square mode box |k1|,|k2| <= M.  The L2 norm is (sum |w_k|^2)^(1/2),
i.e. the measure on the torus is normalized by (2 pi)^-2.  Velocity fields used
as steady states are trigonometric polynomials derived from a stream function
psi via u = (-d2 psi, d1 psi), plus an optional constant mean flow; derivatives
up to second order are evaluated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

TWO_PI = 2.0 * np.pi


def wrap(x):
    """Reduce coordinates to [0, 2*pi). Idempotent."""
    return np.mod(x, TWO_PI)


def torus_delta(a, b):
    """Shortest wrapped displacement a - b, componentwise in (-pi, pi]."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return (d + np.pi) % TWO_PI - np.pi


def torus_distance(a, b):
    """Flat-torus distance between points (supports broadcasting)."""
    return np.linalg.norm(torus_delta(a, b), axis=-1)


# ---------------------------------------------------------------------------
# scalar fields


class FourierScalarField:
    """Mean-zero complex scalar field on a square Fourier mode box.

    coef[M + k1, M + k2] holds the coefficient of e^{i k.x}; the center entry
    (the mean) is identically zero.
    """

    def __init__(self, coef, copy=True):
        coef = np.array(coef, dtype=complex, copy=copy)
        if coef.ndim != 2 or coef.shape[0] != coef.shape[1] or coef.shape[0] % 2 != 1:
            raise InvalidInputError("coefficient array must be square with odd side")
        M = coef.shape[0] // 2
        if abs(coef[M, M]) > 1e-14 * (1.0 + np.abs(coef).max()):
            raise InvalidInputError("mean-zero field carries a (0,0) coefficient")
        coef[M, M] = 0.0
        self.coef = coef
        self.mode_box = M

    @classmethod
    def zeros(cls, mode_box):
        n = 2 * mode_box + 1
        return cls(np.zeros((n, n), dtype=complex), copy=False)

    @classmethod
    def from_modes(cls, modes, mode_box=None):
        """Build from a {(k1, k2): coefficient} mapping."""
        if mode_box is None:
            mode_box = max((max(abs(k1), abs(k2)) for (k1, k2) in modes), default=1)
        out = cls.zeros(mode_box)
        M = mode_box
        for (k1, k2), c in modes.items():
            if (k1, k2) == (0, 0):
                raise InvalidInputError("mean-zero field cannot store mode (0,0)")
            if max(abs(k1), abs(k2)) > M:
                raise InvalidInputError("mode (%d,%d) outside box %d" % (k1, k2, M))
            out.coef[M + k1, M + k2] = c
        return out

    def modes(self):
        """Iterate (k1, k2, coefficient) over nonzero entries, lexicographic."""
        M = self.mode_box
        idx = np.argwhere(self.coef != 0)
        for a, b in idx:
            yield (int(a) - M, int(b) - M, self.coef[a, b])

    def mode_grids(self):
        """Meshgrids K1, K2 matching the coefficient array layout."""
        kr = np.arange(-self.mode_box, self.mode_box + 1)
        return np.meshgrid(kr, kr, indexing="ij")

    def copy(self):
        return FourierScalarField(self.coef, copy=True)

    def is_real(self, tol=1e-12):
        """True when coefficients satisfy w_{-k} = conj(w_k)."""
        r = self.coef - np.conj(self.coef[::-1, ::-1])
        scale = 1.0 + np.abs(self.coef).max()
        return float(np.abs(r).max()) <= tol * scale

    def conj_symmetrize(self):
        """Project onto the real-valued subspace."""
        sym = 0.5 * (self.coef + np.conj(self.coef[::-1, ::-1]))
        return FourierScalarField(sym, copy=False)

    def norm(self, m=0):
        """Sobolev norm with diagonal weight ||k||^m (valid for negative m)."""
        K1, K2 = self.mode_grids()
        k2 = (K1.astype(float) ** 2 + K2.astype(float) ** 2)
        k2[self.mode_box, self.mode_box] = 1.0  # center coefficient is zero anyway
        return float(np.sqrt(np.sum(k2 ** m * np.abs(self.coef) ** 2)))

    def tail_mass(self, m=0, cut=2.0 / 3.0):
        """Fraction of the H_m norm squared beyond cut * mode_box (sup norm)."""
        K1, K2 = self.mode_grids()
        k2 = (K1.astype(float) ** 2 + K2.astype(float) ** 2)
        k2[self.mode_box, self.mode_box] = 1.0
        w = k2 ** m * np.abs(self.coef) ** 2
        total = float(np.sum(w))
        if total == 0.0:
            return 0.0
        outside = np.maximum(np.abs(K1), np.abs(K2)) > cut * self.mode_box
        return float(np.sum(w[outside]) / total)

    def evaluate(self, points, chunk=8192):
        """Evaluate the trigonometric sum at points of shape (..., 2)."""
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, 2)
        kr = np.arange(-self.mode_box, self.mode_box + 1)
        out = np.empty(flat.shape[0], dtype=complex)
        for lo in range(0, flat.shape[0], chunk):
            hi = min(lo + chunk, flat.shape[0])
            e1 = np.exp(1j * np.outer(flat[lo:hi, 0], kr))
            e2 = np.exp(1j * np.outer(flat[lo:hi, 1], kr))
            out[lo:hi] = np.einsum("pa,ab,pb->p", e1, self.coef, e2, optimize=True)
        return out.reshape(pts.shape[:-1])

    def restricted(self, mode_box):
        """Copy truncated or zero-padded to another box size."""
        out = FourierScalarField.zeros(mode_box)
        m = min(mode_box, self.mode_box)
        src = self.coef[self.mode_box - m:self.mode_box + m + 1,
                        self.mode_box - m:self.mode_box + m + 1]
        out.coef[mode_box - m:mode_box + m + 1, mode_box - m:mode_box + m + 1] = src
        return out

    def __add__(self, other):
        M = max(self.mode_box, other.mode_box)
        return FourierScalarField(self.restricted(M).coef + other.restricted(M).coef,
                                  copy=False)

    def __sub__(self, other):
        M = max(self.mode_box, other.mode_box)
        return FourierScalarField(self.restricted(M).coef - other.restricted(M).coef,
                                  copy=False)

    def __mul__(self, scalar):
        return FourierScalarField(self.coef * scalar, copy=False)

    __rmul__ = __mul__


class FourierVectorField:
    """Complex vector field on a mode box; coef has shape (n, n, 2)."""

    def __init__(self, coef, copy=True):
        coef = np.array(coef, dtype=complex, copy=copy)
        if coef.ndim != 3 or coef.shape[2] != 2 or coef.shape[0] != coef.shape[1]:
            raise InvalidInputError("vector coefficients must have shape (n, n, 2)")
        self.coef = coef
        self.mode_box = coef.shape[0] // 2

    def mode_grids(self):
        kr = np.arange(-self.mode_box, self.mode_box + 1)
        return np.meshgrid(kr, kr, indexing="ij")

    def divergence_max(self):
        """Max modulus of the divergence symbol i k . v_k."""
        K1, K2 = self.mode_grids()
        div = 1j * (K1 * self.coef[:, :, 0] + K2 * self.coef[:, :, 1])
        return float(np.abs(div).max())

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.coef) ** 2)))


def curl(v):
    """Scalar curl -d2 v1 + d1 v2 of a spectral vector field.

    Accepts a FourierVectorField or a TrigVelocityField (whose curl is the
    Laplacian of its stream function and is computed exactly).
    """
    if isinstance(v, TrigVelocityField):
        return v.curl_field()
    K1, K2 = v.mode_grids()
    w = 1j * (K1 * v.coef[:, :, 1] - K2 * v.coef[:, :, 0])
    return FourierScalarField(w, copy=False)


def curl_inverse(w):
    """Divergence-free velocity with the given scalar curl.

    v_k = -i ((-k2, k1)^T / ||k||^2) w_k for every mode of the mean-zero w;
    the -i makes curl(curl_inverse(w)) = w exact coefficientwise (the
    direction-of-k part of the symbol still decays like 1/||k||).
    """
    K1, K2 = w.mode_grids()
    M = w.mode_box
    k2 = (K1.astype(float) ** 2 + K2.astype(float) ** 2)
    k2[M, M] = 1.0
    coef = np.empty(w.coef.shape + (2,), dtype=complex)
    coef[:, :, 0] = 1j * K2 * w.coef / k2
    coef[:, :, 1] = -1j * K1 * w.coef / k2
    return FourierVectorField(coef, copy=False)


# ---------------------------------------------------------------------------
# steady velocity fields


class TrigVelocityField:
    """Divergence-free velocity u = mean + (-d2 psi, d1 psi).

    The stream function psi is a real trigonometric polynomial given by a
    small set of Fourier modes, so u, Du and D2u are evaluated exactly.
    """

    def __init__(self, stream_modes=None, mean_flow=(0.0, 0.0), name=None):
        stream_modes = dict(stream_modes or {})
        for (k1, k2), c in list(stream_modes.items()):
            if (k1, k2) == (0, 0):
                raise InvalidInputError("stream function must be mean-zero")
            partner = stream_modes.get((-k1, -k2))
            if partner is None or abs(np.conj(partner) - c) > 1e-12 * (1 + abs(c)):
                raise InvalidInputError("stream coefficients must be conjugate "
                                        "symmetric (real-valued psi)")
        self.stream_modes = stream_modes
        self.mean_flow = np.asarray(mean_flow, dtype=float)
        self.name = name
        self._build_tables()

    def _build_tables(self):
        # keep one representative per conjugate pair; evaluation uses 2*Re(.)
        half = sorted(k for k in self.stream_modes if k > (0, 0))
        self._K = np.array(half, dtype=float).reshape(-1, 2)
        psi = np.array([self.stream_modes[k] for k in half], dtype=complex)
        k1 = self._K[:, 0]
        k2 = self._K[:, 1]
        # u_k = (-i k2, i k1) psi_k
        uk = np.stack([-1j * k2 * psi, 1j * k1 * psi], axis=-1)  # (n, 2)
        tables = {}
        coef = uk  # order 0
        for order in range(3):
            # real-pair reduction: value = cos(phi) @ A + sin(phi) @ B
            tables[order] = (2.0 * coef.real.copy(), -2.0 * coef.imag.copy())
            ik = 1j * self._K  # multiply by i k_j for the next derivative index
            coef = coef[..., None] * ik.reshape((-1,) + (1,) * (coef.ndim - 1)
                                                + (2,))
        self._tables = tables
        self.stream_box = int(max((max(abs(int(a)), abs(int(b))) for a, b in half),
                                  default=0))
        self._max_speed = None

    def _phases(self, pts):
        return pts @ self._K.T  # (..., n_half)

    def _eval_order(self, points, order):
        pts = np.asarray(points, dtype=float)
        A, B = self._tables[order]
        if len(self._K) == 0:
            out = np.zeros(pts.shape[:-1] + A.shape[1:])
        else:
            ph = self._phases(pts)
            out = np.tensordot(np.cos(ph), A, axes=([-1], [0]))
            out += np.tensordot(np.sin(ph), B, axes=([-1], [0]))
        if order == 0:
            out = out + self.mean_flow
        return out

    def velocity(self, points):
        """u at points (..., 2) -> (..., 2)."""
        return self._eval_order(points, 0)

    def jacobian(self, points):
        """Du at points -> (..., 2, 2) with entries d u_i / d x_j."""
        return self._eval_order(points, 1)

    def hessian(self, points):
        """D2u at points -> (..., 2, 2, 2), entries d^2 u_i / d x_j d x_l."""
        return self._eval_order(points, 2)

    def evaluate(self, points, order=0):
        """Exact evaluation of u (order 0), Du (1) or D2u (2)."""
        if order not in (0, 1, 2):
            raise InvalidInputError("order must be 0, 1 or 2")
        return self._eval_order(points, order)

    def perp(self, points):
        """u-perp = (-u2, u1) at points."""
        u = self.velocity(points)
        return np.stack([-u[..., 1], u[..., 0]], axis=-1)

    def speed(self, points):
        return np.linalg.norm(self.velocity(points), axis=-1)

    def max_speed(self):
        """Upper estimate of max |u| (cached; 256^2 sample grid plus margin)."""
        if self._max_speed is None:
            g = np.linspace(0.0, TWO_PI, 256, endpoint=False)
            X = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
            bound = float(self.speed(X).max())
            self._max_speed = max(bound, 1e-300)
        return self._max_speed

    def velocity_modes(self):
        """Full {(k1,k2): (2,) complex} dictionary of nonzero velocity modes."""
        out = {}
        for (k1, k2), psi in self.stream_modes.items():
            out[(k1, k2)] = np.array([-1j * k2 * psi, 1j * k1 * psi])
        return out

    def curl_modes(self):
        """Modes of curl u = Laplacian(psi)."""
        return {k: -(k[0] ** 2 + k[1] ** 2) * c for k, c in self.stream_modes.items()}

    def stream_field(self, mode_box=None):
        box = mode_box or max(self.stream_box, 1)
        return FourierScalarField.from_modes(self.stream_modes, box)

    def curl_field(self, mode_box=None):
        box = mode_box or max(self.stream_box, 1)
        return FourierScalarField.from_modes(self.curl_modes(), box)


def velocity_from_stream(psi):
    """TrigVelocityField with u = (-d2 psi, d1 psi) for a real mean-zero psi."""
    if not psi.is_real():
        raise InvalidInputError("stream function must be real-valued "
                                "(conjugate-symmetric coefficients)")
    modes = {(k1, k2): c for (k1, k2, c) in psi.modes()}
    return TrigVelocityField(modes)


def preset_flow(name):
    """Named steady states: 'rigid', 'shear', 'cellular'."""
    if name == "rigid":
        return TrigVelocityField({}, mean_flow=(1.0, 0.0), name="rigid")
    if name == "shear":
        # psi = cos x2  ->  u = (sin x2, 0)
        return TrigVelocityField({(0, 1): 0.5, (0, -1): 0.5}, name="shear")
    if name == "cellular":
        # psi = sin x1 sin x2  ->  u = (-sin x1 cos x2, cos x1 sin x2)
        q = -0.25
        return TrigVelocityField({(1, 1): q, (-1, -1): q, (1, -1): -q, (-1, 1): -q},
                                 name="cellular")
    raise InvalidInputError("unknown preset flow %r" % (name,))


PRESETS = ("rigid", "shear", "cellular")


# ---------------------------------------------------------------------------
# stagnation points


@dataclass
class StagnationPoint:
    location: np.ndarray
    jacobian: np.ndarray
    kind: str          # 'hyperbolic' | 'center' | 'degenerate'
    exponent: float    # lambda >= 0 for hyperbolic points, else 0

    def __repr__(self):
        return ("StagnationPoint(%.6f, %.6f, %s, lambda=%.6g)"
                % (self.location[0], self.location[1], self.kind, self.exponent))


@dataclass
class StagnationScan:
    points: list
    degenerate_components: list = field(default_factory=list)
    unresolved_cells: list = field(default_factory=list)

    def hyperbolic(self):
        return [p for p in self.points if p.kind == "hyperbolic"]


def _classify(u, location, tol=1e-9):
    J = u.jacobian(location)
    det = float(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
    if det < -tol:
        lam = float(np.sqrt(-det))
        return StagnationPoint(location, J, "hyperbolic", lam)
    if det > tol:
        return StagnationPoint(location, J, "center", 0.0)
    return StagnationPoint(location, J, "degenerate", 0.0)


def find_stagnation_points(u, seed_grid=64, tol=1e-12, max_iter=80):
    """Zeros of u, Newton-refined from a seed grid and classified via Du.

    Isolated zeros are deduplicated on the torus and sorted lexicographically.
    Connected sets of zeros (lines) are reported as degenerate components with
    one representative point each.  Seed cells showing a sign change in both
    velocity components that no converged zero covers are listed as unresolved.
    """
    if u.max_speed() < 1e-14:
        raise InvalidInputError("velocity field is identically zero")
    g = np.linspace(0.0, TWO_PI, seed_grid, endpoint=False)
    X = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    pts = X.copy()
    # damped Gauss-Newton on |u|^2/2; the damping handles nilpotent Jacobians
    for _ in range(max_iter):
        U = u.velocity(pts)
        J = u.jacobian(pts)
        JTU = np.einsum("pij,pi->pj", J, U)
        JTJ = np.einsum("pij,pil->pjl", J, J)
        mu = 1e-12 + 1e-6 * np.einsum("pjj->p", JTJ)
        JTJ[:, 0, 0] += mu
        JTJ[:, 1, 1] += mu
        det = JTJ[:, 0, 0] * JTJ[:, 1, 1] - JTJ[:, 0, 1] * JTJ[:, 1, 0]
        step = np.empty_like(pts)
        step[:, 0] = (JTJ[:, 1, 1] * JTU[:, 0] - JTJ[:, 0, 1] * JTU[:, 1]) / det
        step[:, 1] = (JTJ[:, 0, 0] * JTU[:, 1] - JTJ[:, 1, 0] * JTU[:, 0]) / det
        nrm = np.linalg.norm(step, axis=-1, keepdims=True)
        cap = np.where(nrm > 0.5, 0.5 / np.maximum(nrm, 1e-300), 1.0)
        pts = pts - step * cap
    pts = wrap(pts)
    speed = u.speed(pts)
    converged = speed <= max(tol, 1e-12) * max(1.0, u.max_speed())
    zeros = pts[converged]

    # cluster converged zeros; the link radius chains samples of a zero line
    link = 1.5 * TWO_PI / seed_grid
    order = np.lexsort((zeros[:, 1], zeros[:, 0]))
    comp = []
    for i in order:
        placed = False
        for members in comp:
            d = torus_distance(zeros[i], zeros[members[-24:]])
            if np.min(d) < link:
                members.append(i)
                placed = True
                break
        if not placed:
            comp.append([i])

    points, degenerate_components = [], []
    for members in comp:
        group = zeros[members]
        ref = group[0]
        spread = float(np.max(torus_distance(group, ref))) if len(group) > 1 else 0.0
        if spread > 10.0 * link:
            # extended zero set: keep the lexicographically smallest sample
            key = np.lexsort((np.round(group[:, 1], 9), np.round(group[:, 0], 9)))
            rep = group[key[0]]
            sp = _classify(u, rep)
            sp = StagnationPoint(rep, sp.jacobian, "degenerate", 0.0)
            degenerate_components.append({
                "representative": rep, "n_samples": len(group), "extent": spread})
            points.append(sp)
        else:
            loc = group[np.argmin(u.speed(group))]
            points.append(_classify(u, loc))

    points.sort(key=lambda p: (round(p.location[0], 9), round(p.location[1], 9)))

    # cells with a sign change in both components but no nearby zero
    Ugrid = u.velocity(X.reshape(seed_grid, seed_grid, 2))
    unresolved = []
    s1 = np.sign(Ugrid[:, :, 0])
    s2 = np.sign(Ugrid[:, :, 1])
    flip1 = (s1 != np.roll(s1, -1, 0)) | (s1 != np.roll(s1, -1, 1))
    flip2 = (s2 != np.roll(s2, -1, 0)) | (s2 != np.roll(s2, -1, 1))
    cand = np.argwhere(flip1 & flip2)
    if len(cand) and len(points):
        locs = np.array([p.location for p in points])
        cell = TWO_PI / seed_grid
        centers = (cand + 0.5) * cell
        for c in centers:
            if np.min(torus_distance(locs, c)) > 2.0 * cell:
                unresolved.append(tuple(np.round(c, 6)))
    elif len(cand) and not len(points):
        unresolved = [tuple(np.round((c + 0.5) * TWO_PI / seed_grid, 6))
                      for c in cand]
    return StagnationScan(points, degenerate_components, sorted(set(unresolved)))


# ---------------------------------------------------------------------------
# exchange format and test helpers

FIELD_HEADER = "mode-coefficients v1"


def write_field(w, path):
    """Write 'k1,k2,re,im' records under the exchange-format header."""
    lines = [FIELD_HEADER]
    for k1, k2, c in w.modes():
        lines.append("%d,%d,%.17g,%.17g" % (k1, k2, c.real, c.imag))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field(path, mode_box=None):
    with open(path) as fh:
        header = fh.readline().strip()
        if header != FIELD_HEADER:
            raise InvalidInputError("expected header %r, got %r"
                                    % (FIELD_HEADER, header))
        modes = {}
        for line in fh:
            line = line.strip()
            if not line:
                continue
            k1, k2, re, im = line.split(",")
            modes[(int(k1), int(k2))] = float(re) + 1j * float(im)
    return FourierScalarField.from_modes(modes, mode_box)


def random_real_field(mode_box, rng, decay=0.0):
    """Random real-valued mean-zero field; decay>0 damps high modes."""
    n = 2 * mode_box + 1
    raw = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    raw[mode_box, mode_box] = 0.0
    f = FourierScalarField(raw, copy=False)
    if decay > 0:
        K1, K2 = f.mode_grids()
        f.coef *= np.exp(-decay * np.sqrt(K1 ** 2 + K2 ** 2))
    return f.conj_symmetrize()
