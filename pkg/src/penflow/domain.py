"""Prescribed moving fluid domain, interface quadrature and penalization masks.

The fluid region is ``Omega_t = X(t, Omega_0)``, where ``X`` is the flow of a
prescribed velocity ``V``.  Membership is decided by tracing the
characteristic through ``(t, x)`` back to ``s = 0`` with classical RK4 and
evaluating the initial level function there.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from skimage import measure

from .grid import Grid


class DomainConfigError(ValueError):
    """Raised for an inadmissible domain definition."""


class GeometryResolutionError(RuntimeError):
    """Raised when the interface cannot be located on the grid."""


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[0] != 1):
        x = x[None]
    if x.shape[0] != dim:
        raise ValueError(f"expected points with leading axis of length {dim}")
    return x


# ---------------------------------------------------------------------------
# initial shapes (signed distance, negative inside)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    a: float
    b: float
    dim: int = 1

    def __post_init__(self):
        if not self.a < self.b:
            raise DomainConfigError("interval needs a < b")

    def phi(self, x):
        x = x[0]
        return np.maximum(self.a - x, x - self.b)

    @property
    def min_feature(self):
        return self.b - self.a

    @property
    def perimeter(self):
        return 2.0


@dataclass(frozen=True)
class Disk:
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    dim: int = 2

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainConfigError("disk radius must be positive")

    def phi(self, x):
        return np.hypot(x[0] - self.center[0], x[1] - self.center[1]) - self.radius

    @property
    def min_feature(self):
        return 2.0 * self.radius

    @property
    def perimeter(self):
        return 2.0 * math.pi * self.radius


@dataclass(frozen=True)
class Rectangle:
    center: tuple = (0.0, 0.0)
    half_widths: tuple = (1.0, 1.0)
    dim: int = 2

    def __post_init__(self):
        if min(self.half_widths) <= 0:
            raise DomainConfigError("rectangle half-widths must be positive")

    def phi(self, x):
        qx = np.abs(x[0] - self.center[0]) - self.half_widths[0]
        qy = np.abs(x[1] - self.center[1]) - self.half_widths[1]
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        return outside + np.minimum(np.maximum(qx, qy), 0.0)

    @property
    def min_feature(self):
        return 2.0 * min(self.half_widths)

    @property
    def perimeter(self):
        return 4.0 * sum(self.half_widths)


# ---------------------------------------------------------------------------
# velocity fields
# ---------------------------------------------------------------------------


def _bump(s):
    """``exp(-1/(1-s^2))`` on ``|s| < 1`` and zero elsewhere, with derivative."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    q = np.where(inside, 1.0 - s * s, 1.0)
    b = np.where(inside, np.exp(-1.0 / q), 0.0)
    db = np.where(inside, b * (-2.0 * s / q**2), 0.0)
    return b, db


def smooth_cutoff(r, r_in: float, r_out: float):
    """C-infinity radial cutoff: 1 for ``r <= r_in`` and 0 for ``r >= r_out``."""
    r = np.asarray(r, dtype=float)
    if np.all(r <= r_in):
        return np.ones_like(r)
    tau = np.clip((r - r_in) / (r_out - r_in), 0.0, 1.0)

    def f(z):
        return np.where(z > 0, np.exp(-1.0 / np.where(z > 0, z, 1.0)), 0.0)

    return f(1.0 - tau) / (f(1.0 - tau) + f(tau))


@dataclass(frozen=True)
class ZeroVelocity:
    dim: int = 1
    kind: str = "zero"

    def __call__(self, t, x):
        return np.zeros_like(x)


@dataclass(frozen=True)
class RigidTranslation:
    """Uniform velocity inside ``r_in`` fading smoothly to rest at ``R``."""

    velocity: tuple
    r_in: float
    R: float
    kind: str = "translation"

    def __post_init__(self):
        if not 0 < self.r_in < self.R:
            raise DomainConfigError("translation cutoff needs 0 < r_in < R")

    @property
    def dim(self):
        return len(self.velocity)

    def __call__(self, t, x):
        r = np.sqrt(np.sum(x * x, axis=0))
        chi = smooth_cutoff(r, self.r_in, self.R)
        v = np.asarray(self.velocity, dtype=float).reshape((-1,) + (1,) * (x.ndim - 1))
        return v * chi


@dataclass(frozen=True)
class RigidRotation:
    """Rotation about the origin with angular speed ``omega``; divergence free."""

    omega: float
    r_in: float
    R: float
    dim: int = 2
    kind: str = "rotation"

    def __post_init__(self):
        if not 0 < self.r_in < self.R:
            raise DomainConfigError("rotation cutoff needs 0 < r_in < R")

    def __call__(self, t, x):
        r = np.hypot(x[0], x[1])
        chi = smooth_cutoff(r, self.r_in, self.R)
        return self.omega * chi * np.stack([-x[1], x[0]])


@dataclass(frozen=True)
class SmoothDeformation:
    """Straining flow from the stream function ``A x y b(r/R)``; divergence free."""

    amplitude: float
    R: float
    dim: int = 2
    kind: str = "deformation"

    def __call__(self, t, x):
        r = np.hypot(x[0], x[1])
        b, db = _bump(r / self.R)
        rs = np.where(r > 0, r, 1.0)
        # d/dx [x y b] = y b + x y b' x / (R r)
        dpsi_dx = self.amplitude * (x[1] * b + x[0] * x[1] * db * x[0] / (self.R * rs))
        dpsi_dy = self.amplitude * (x[0] * b + x[0] * x[1] * db * x[1] / (self.R * rs))
        return np.stack([dpsi_dy, -dpsi_dx])


def divergence(V, t, x, h=1e-5):
    """Central-difference divergence of a velocity field at points ``x``."""
    out = 0.0
    for k in range(x.shape[0]):
        e = np.zeros(x.shape[0]).reshape((-1,) + (1,) * (x.ndim - 1))
        e[k] = h
        out = out + (V(t, x + e)[k] - V(t, x - e)[k]) / (2 * h)
    return out


def velocity_gradient(V, t, x, h=1e-5):
    """``grad V[i, j] = dV_i/dx_j`` by central differences."""
    d = x.shape[0]
    cols = []
    for j in range(d):
        e = np.zeros(d).reshape((-1,) + (1,) * (x.ndim - 1))
        e[j] = h
        cols.append((V(t, x + e) - V(t, x - e)) / (2 * h))
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# moving domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MovingDomain:
    """Initial shape, prescribed velocity and back-tracking controls.

    ``R`` bounds the support of ``V``; the reference box has half-width
    ``2R``.  Characteristics are traced with RK4 substeps of length
    ``min(rk4_dt, 0.01 T)``; fewer than ``min_rk4_steps`` substeps over
    ``[0, T]`` is a configuration error.
    """

    geometry: object
    velocity: object
    R: float
    T: float = 1.0
    rk4_dt: float = 0.01
    min_rk4_steps: int = 10
    div_free_band: float = 0.2

    def __post_init__(self):
        if self.geometry.dim != self.velocity.dim:
            raise DomainConfigError("geometry and velocity dimensions differ")
        if not self.R > 0 or not self.T > 0:
            raise DomainConfigError("R and T must be positive")
        if self.n_substeps(self.T) < self.min_rk4_steps:
            raise DomainConfigError(
                f"RK4 back-tracking would use {self.n_substeps(self.T)} substeps over "
                f"[0, T], below the configured minimum {self.min_rk4_steps}")

    @property
    def dim(self) -> int:
        return self.geometry.dim

    @property
    def box_half_width(self) -> float:
        return 2.0 * self.R

    @property
    def frozen(self) -> bool:
        return isinstance(self.velocity, ZeroVelocity)

    def substep(self) -> float:
        return min(self.rk4_dt, 0.01 * self.T)

    def n_substeps(self, t: float) -> int:
        if t <= 0:
            return 0
        return max(1, math.ceil(t / self.substep() - 1e-9))

    def V(self, t, x):
        return self.velocity(t, _as_points(x, self.dim))


def _backtrack(t: float, x: np.ndarray, dom: MovingDomain) -> np.ndarray:
    n = dom.n_substeps(t)
    if n == 0 or dom.frozen:
        return x
    h = -t / n
    X = x.copy()
    s = t
    V = dom.velocity
    for _ in range(n):
        k1 = V(s, X)
        k2 = V(s + 0.5 * h, X + 0.5 * h * k1)
        k3 = V(s + 0.5 * h, X + 0.5 * h * k2)
        k4 = V(s + h, X + h * k3)
        X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        s += h
    return X


def is_inside(t: float, x, dom: MovingDomain):
    """Return ``(inside, level)`` where ``level = phi0(X(0; t, x))``.

    The level is a signed distance for rigid motions and a level value
    otherwise.  Points outside the support radius of ``V`` never move.
    """
    x = _as_points(x, dom.dim)
    level = dom.geometry.phi(x)
    if t > 0 and not dom.frozen:
        r = np.sqrt(np.sum(x * x, axis=0))
        near = r < dom.R * (1 + 1e-12)
        if np.any(near):
            X0 = _backtrack(t, x[:, near], dom)
            level = np.array(level, dtype=float)
            level[near] = dom.geometry.phi(X0)
    level = np.asarray(level, dtype=float)
    return level <= 0.0, level


# ---------------------------------------------------------------------------
# interface quadrature
# ---------------------------------------------------------------------------


@dataclass
class Quadrature:
    points: np.ndarray   # (m, d)
    weights: np.ndarray  # (m,)
    normals: np.ndarray  # (m, d), outward

    @property
    def size(self):
        return self.weights.shape[0]

    @property
    def length(self):
        return float(np.sum(self.weights))


def _level_gradient(t, pts, dom, h):
    """Central-difference gradient of the level function at points ``(m, d)``."""
    d = dom.dim
    m = pts.shape[0]
    shifts = np.concatenate([np.eye(d) * h, -np.eye(d) * h])
    stacked = (pts[None, :, :] + shifts[:, None, :]).reshape(-1, d).T
    lev = is_inside(t, stacked, dom)[1].reshape(2 * d, m)
    return ((lev[:d] - lev[d:]) / (2 * h)).T


def _bracketed_roots(t, dom, a, b, fa, fb, tol=1e-13, max_iter=60):
    """Vectorised Illinois regula falsi for the 1D level function."""
    a, b, fa, fb = (np.array(v, dtype=float) for v in (a, b, fa, fb))
    for _ in range(max_iter):
        if a.size == 0 or np.all(np.abs(b - a) <= tol * (1 + np.abs(a))):
            break
        c = np.where(fb != fa, b - fb * (b - a) / np.where(fb != fa, fb - fa, 1.0), 0.5 * (a + b))
        fc = is_inside(t, c[None], dom)[1]
        left = np.sign(fc) == np.sign(fa)
        exact = fc == 0.0
        # replace the endpoint with the same sign; halve the retained value
        a_new = np.where(left, c, a)
        fa_new = np.where(left, fc, np.where(exact, fa, fa * 0.5))
        b_new = np.where(left, b, c)
        fb_new = np.where(left, fb * 0.5, fc)
        a, fa, b, fb = a_new, fa_new, b_new, fb_new
        a = np.where(exact, c, a)
        b = np.where(exact, c, b)
        if np.all(np.minimum(np.abs(fa), np.abs(fb)) <= 1e-15):
            break
    return np.where(np.abs(fa) < np.abs(fb), a, b)


def interface_quadrature(t: float, grid: Grid, dom: MovingDomain,
                         node_level: np.ndarray | None = None) -> Quadrature:
    """Points, weights and outward normals on ``Gamma_t`` inside the box.

    1D roots are bracketed between grid nodes and refined by regula falsi;
    2D contours come from marching squares on the node levels.  An empty
    result is legitimate when the fluid fills the box; losing the fluid
    entirely is an error.
    """
    if grid.dim != dom.dim:
        raise DomainConfigError("grid and domain dimensions differ")
    if dom.geometry.min_feature < 4 * grid.dx:
        raise GeometryResolutionError(
            f"grid spacing {grid.dx:.3g} does not resolve the minimum feature "
            f"{dom.geometry.min_feature:.3g} with 4 cells")
    if node_level is None:
        node_level = is_inside(t, grid.nodes, dom)[1]
    if np.all(node_level > 0):
        raise GeometryResolutionError(f"no fluid cell found at t={t}")
    h = 1e-3 * grid.dx
    d = grid.dim
    if d == 1:
        xs = grid.axis_nodes
        idx = np.nonzero(np.sign(node_level[:-1]) != np.sign(node_level[1:]))[0]
        pts = _bracketed_roots(t, dom, xs[idx], xs[idx + 1], node_level[idx], node_level[idx + 1])
        pts = np.unique(pts).reshape(-1, 1)
        if pts.size == 0:
            return Quadrature(np.zeros((0, 1)), np.zeros(0), np.zeros((0, 1)))
        g = _level_gradient(t, pts, dom, h)
        return Quadrature(pts, np.ones(len(pts)), np.sign(g))
    # 2D marching squares on the node lattice
    segs = []
    for contour in measure.find_contours(node_level, 0.0):
        xy = grid.axis_nodes[0] + contour * grid.dx
        segs.append(np.stack([xy[:-1], xy[1:]], axis=1))
    if not segs:
        return Quadrature(np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2)))
    segs = np.concatenate(segs)
    mid = segs.mean(axis=1)
    w = np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1)
    keep = w > 0
    mid, w = mid[keep], w[keep]
    g = _level_gradient(t, mid, dom, h)
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    return Quadrature(mid, w, g / np.where(nrm > 0, nrm, 1.0))


# ---------------------------------------------------------------------------
# hat-kernel transfer between quadrature points and cells
# ---------------------------------------------------------------------------


def _cic(points: np.ndarray, grid: Grid):
    """Cloud-in-cell indices and weights for points ``(m, d)``.

    Returns a list of ``(flat_index, weight)`` arrays, one per stencil corner.
    """
    m, d = points.shape
    s = (points + grid.half_width) / grid.dx - 0.5
    i0 = np.floor(s).astype(int)
    f = s - i0
    out = []
    for corner in np.ndindex(*(2,) * d):
        idx = []
        w = np.ones(m)
        for k, c in enumerate(corner):
            ik = i0[:, k] + c
            w = w * (f[:, k] if c else 1.0 - f[:, k])
            idx.append(np.clip(ik, 0, grid.n - 1))
        out.append((np.ravel_multi_index(idx, grid.shape), w))
    return out


def smeared_delta(quad: Quadrature, grid: Grid):
    """Interface density ``delta_Gamma`` per cell and the kernel-averaged normal.

    ``sum(delta) * cell_volume`` equals the quadrature length exactly.
    """
    size = int(np.prod(grid.shape))
    delta = np.zeros(size)
    nsum = np.zeros((grid.dim, size))
    if quad.size:
        for idx, w in _cic(quad.points, grid):
            ww = w * quad.weights
            np.add.at(delta, idx, ww)
            for k in range(grid.dim):
                np.add.at(nsum[k], idx, ww * quad.normals[:, k])
    norm = np.sqrt(np.sum(nsum**2, axis=0))
    normal = np.where(norm > 0, nsum / np.where(norm > 0, norm, 1.0), 0.0)
    delta = delta / grid.cell_volume
    return delta.reshape(grid.shape), normal.reshape((grid.dim,) + grid.shape)


def interpolate_to_points(field: np.ndarray, quad: Quadrature, grid: Grid) -> np.ndarray:
    """Hat-kernel interpolation of a cell field (leading component axes allowed)."""
    lead = field.shape[: field.ndim - grid.dim]
    flat = field.reshape(lead + (-1,))
    out = np.zeros(lead + (quad.size,))
    if quad.size:
        for idx, w in _cic(quad.points, grid):
            out = out + flat[..., idx] * w
    return out


# ---------------------------------------------------------------------------
# masks
# ---------------------------------------------------------------------------


@dataclass
class Masks:
    t: float
    level: np.ndarray
    f_omega: np.ndarray
    chi_nu: np.ndarray
    chi_xi: np.ndarray
    inside: np.ndarray
    solid: np.ndarray
    face_open: list
    band_width: float
    omega: float
    quad: Quadrature | None = None
    delta: np.ndarray | None = None
    normal: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def dead(self) -> np.ndarray:
        """Cells all of whose faces lie outside the fluid region."""
        d = self.level.ndim
        dead = np.ones(self.level.shape, dtype=bool)
        for ax in range(d):
            op = self.face_open[ax]
            pad = [(0, 0)] * d
            pad[ax] = (1, 0)
            left = np.pad(op, pad, constant_values=False)
            pad[ax] = (0, 1)
            right = np.pad(op, pad, constant_values=False)
            dead &= ~left & ~right
        return dead & ~self.inside

    def f_omega_norm(self, cell_volume: float, q: float = 5.0 / 3.0) -> float:
        """Discrete ``L^q`` norm of ``f_omega`` over cells with centre outside."""
        outside = ~self.inside
        return float((np.sum(self.f_omega[outside] ** q) * cell_volume) ** (1.0 / q))


def build_masks(t: float, grid: Grid, dom: MovingDomain, params, with_quadrature: bool = True,
                node_level: np.ndarray | None = None) -> Masks:
    """Mask fields ``f_omega``, ``chi_nu`` and ``chi_xi`` at time ``t``.

    ``f_omega`` is 1 for cell centres in ``Omega_t``, exactly ``omega`` once
    the centre is at least half a cell diagonal outside, and follows a
    cosine ramp between.  ``chi_nu`` and ``chi_xi`` are sharp.
    """
    if grid.dim != dom.dim:
        raise DomainConfigError("grid and domain dimensions differ")
    d = grid.dim
    # evaluate centres, faces and nodes in one back-tracking pass
    groups = [grid.centers] + [grid.face_centers(ax) for ax in range(d)]
    if with_quadrature and node_level is None:
        groups.append(grid.nodes)
    flat = np.concatenate([g.reshape(d, -1) for g in groups], axis=1)
    _, lev = is_inside(t, flat, dom)
    parts, start = [], 0
    for g in groups:
        size = int(np.prod(g.shape[1:]))
        parts.append(lev[start:start + size].reshape(g.shape[1:]))
        start += size
    level = parts[0]
    face_open = [parts[1 + ax] <= 0.0 for ax in range(d)]
    if with_quadrature and node_level is None:
        node_level = parts[-1]

    w = 0.5 * math.sqrt(d) * grid.dx
    omega, nu, xi = params.omega, params.nu, params.xi
    inside = level <= 0.0
    solid = level >= w
    ramp = omega + (1.0 - omega) * 0.5 * (1.0 + np.cos(np.pi * np.clip(level / w, 0.0, 1.0)))
    f_omega = np.where(inside, 1.0, np.where(solid, omega, ramp))
    chi_nu = np.where(inside, 1.0, nu)
    chi_xi = np.where(inside, 1.0, xi)
    masks = Masks(t, level, f_omega, chi_nu, chi_xi, inside, solid, face_open, w, omega)
    if with_quadrature:
        quad = interface_quadrature(t, grid, dom, node_level=node_level)
        masks.quad = quad
        masks.delta, masks.normal = smeared_delta(quad, grid)
    return masks


def check_domain(dom: MovingDomain, grid: Grid, times, tol_div: float = 1e-8,
                 min_volume: float | None = None) -> dict:
    """Sampled checks of the domain invariants; returns name -> (ok, detail)."""
    out = {}
    rng = np.random.default_rng(0)
    d = dom.dim
    pts = rng.normal(size=(d, 400))
    pts *= (dom.R * (1.0 + rng.uniform(1e-3, 1.0, 400))) / np.linalg.norm(pts, axis=0)
    vmax = max(float(np.max(np.abs(dom.V(t, pts)))) for t in times)
    out["V=0 outside R"] = (vmax == 0.0, f"max |V|={vmax:.3e}")

    worst, vols = 0.0, []
    for t in times:
        _, lev = is_inside(t, grid.centers, dom)
        vols.append(float(np.sum(lev <= 0) * grid.cell_volume))
        quad = interface_quadrature(t, grid, dom)
        if quad.size:
            base = quad.points.T
            for off in np.linspace(-dom.div_free_band, dom.div_free_band, 5):
                p = base + off * quad.normals.T
                worst = max(worst, float(np.max(np.abs(divergence(dom.velocity, t, p)))))
    out["div V=0 near Gamma"] = (worst <= tol_div, f"max |div V|={worst:.3e}")
    m0 = min_volume if min_volume is not None else 0.5 * vols[0]
    out["|Omega_t|>=M0"] = (min(vols) >= m0, f"min volume={min(vols):.4g}, M0={m0:.4g}")
    if any(not ok for ok, _ in out.values()):
        warnings.warn("domain invariant check failed: "
                      + ", ".join(k for k, (ok, _) in out.items() if not ok))
    return out
