"""Controlled extensions of boundary maps and singular-set detection.

The sphere case extends into the Poincare ball through the conformal
averaging kernel (1-|z|^2)^m / |z-y|^{2m}; the flat-torus case extends
along the warped half-cylinder with a compact bump kernel.  Both are
renormalized in discretization, so constants extend to themselves exactly
and every value stays in the convex hull of the boundary values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import CoarseLatticeError, ResolutionError
from .geom import (SPHERE_MEASURE, MStarPoint, SphereMesh, TorusGrid)
from .maps import DiscreteMap, smoothstep
from .util import chunk_ranges

# chart scale of the torus bump kernel, in torus units
TORUS_CHART_SCALE = 0.25


# ---------------------------------------------------------------------------
# hyperharmonic extension into the ball
# ---------------------------------------------------------------------------

class ExtensionField:
    """Renormalized averaging extension of a sphere map into the unit ball.

    Calling the field on points z with |z| <= 0.9999 returns the kernel
    average of the boundary values; the raw kernel has unit mass
    analytically, and renormalization removes the remaining quadrature bias.
    """

    def __init__(self, f: DiscreteMap):
        if not isinstance(f.domain, SphereMesh):
            raise ValueError("hyperharmonic extension needs a sphere-domain map")
        self.map = f
        self.target = f.target
        self._spacing = f.domain.spacing()

    def __call__(self, points: np.ndarray, dominance_guard: bool = True) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        radii = np.linalg.norm(points, axis=1)
        if np.any(radii > 0.9999):
            raise ResolutionError("extension evaluated too close to the boundary "
                                  f"(|z| = {radii.max():.6f} > 0.9999)")
        verts = self.map.domain.vertices
        w = self.map.domain.weights
        vals = self.map.values
        m = self.map.domain.dim
        out = np.empty((len(points), self.target.nu))
        for i0, i1 in chunk_ranges(len(points), 2048):
            z = points[i0:i1]
            # |z - y|^2 = 1 + |z|^2 - 2 z.y for unit mesh vertices
            zz = np.einsum("ij,ij->i", z, z)
            dsq = np.maximum(1.0 + zz[:, None] - 2.0 * (z @ verts.T), 1e-300)
            ker = dsq ** (-float(m))
            ker *= w[None, :]
            mass = ker.sum(axis=1)
            if dominance_guard:
                top = ker.argmax(axis=1)
                dom = ker[np.arange(len(z)), top] / mass
                if np.any(dom > 0.99):
                    # aligned evaluations (inside the nearest vertex's own
                    # cell) legitimately converge to that vertex value
                    bad = dom > 0.99
                    zdir = z[bad] / np.maximum(radii[i0:i1][bad, None], 1e-30)
                    gap = np.linalg.norm(zdir - verts[top[bad]], axis=1)
                    if np.any(gap > self._spacing / 2.0):
                        raise ResolutionError(
                            "nearest-vertex dominance above 0.99 away from a vertex: "
                            "mesh cannot resolve this evaluation point")
            out[i0:i1] = (ker @ vals) / mass[:, None]
        return out


def hyperharmonic_extend(f: DiscreteMap, z: np.ndarray) -> np.ndarray:
    """Extension value at a single interior point of the ball."""
    return ExtensionField(f)(np.asarray(z, dtype=float)[None, :])[0]


def kernel_mass(mesh: SphereMesh, z: np.ndarray) -> float:
    """Raw quadrature mass of the extension kernel; 1 analytically.

    |mass - 1| quantifies mesh adequacy at the evaluation point (|z| <= 0.9).
    """
    z = np.asarray(z, dtype=float)
    r = np.linalg.norm(z)
    if r > 0.9:
        raise ResolutionError("kernel mass diagnostic limited to |z| <= 0.9")
    d = mesh.vertices - z[None, :]
    ker = np.einsum("ij,ij->i", d, d) ** (-float(mesh.dim))
    return float((1.0 - r * r) ** mesh.dim / SPHERE_MEASURE[mesh.dim]
                 * (mesh.weights @ ker))


def lipschitz_check(f: DiscreteMap, samples, step: float = 1e-4) -> float:
    """Max hyperbolic gradient norm of the extension over sample points.

    Central finite differences; the Euclidean Jacobian norm is rescaled by
    (1 - |z|^2)/2, the inverse conformal factor of the ball metric.
    """
    if step < 1e-12:
        raise ValueError("finite-difference step below float resolution")
    field = ExtensionField(f)
    pts = np.atleast_2d(np.asarray([p.z if hasattr(p, "z") else p for p in samples],
                                   dtype=float))
    if np.any(np.linalg.norm(pts, axis=1) > 0.99):
        raise ValueError("lipschitz samples must satisfy |z| <= 0.99")
    dim = pts.shape[1]
    plus = np.concatenate([pts + step * np.eye(dim)[k] for k in range(dim)])
    minus = np.concatenate([pts - step * np.eye(dim)[k] for k in range(dim)])
    fp = field(plus, dominance_guard=False)
    fm = field(minus, dominance_guard=False)
    n = len(pts)
    jac = np.stack([(fp[k * n:(k + 1) * n] - fm[k * n:(k + 1) * n]) / (2 * step)
                    for k in range(dim)], axis=2)  # (n, nu, dim)
    op_norm = np.linalg.norm(jac, ord=2, axis=(1, 2))
    conformal = (1.0 - np.einsum("ij,ij->i", pts, pts)) / 2.0
    return float(np.max(op_norm * conformal))


# ---------------------------------------------------------------------------
# singular-set detection on a hyperbolic lattice
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SingularSample:
    """Lattice point whose extension value left the retraction tube."""

    point: np.ndarray
    distance: float
    weight: float


@dataclass(frozen=True)
class LatticeSpec:
    """Hyperbolic-uniform sampling lattice: radial shells of equal spacing.

    spacing defaults to rho/2 where rho = delta*/(2 m diam N); r_max caps
    the sampled hyperbolic radius (resolution-limited by the mesh beyond
    2 asinh(1/h)).
    """

    spacing: float | None = None
    r_max: float | None = None


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = math.pi * (1.0 + math.sqrt(5.0)) * i
    z = 1.0 - 2.0 * i / n
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def _shell_directions(m: int, count: int) -> np.ndarray:
    if m == 1:
        ang = 2.0 * math.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return _fibonacci_sphere(count)


def build_lattice(m: int, spacing: float, r_max: float):
    """Hyperbolic lattice points with cell volume weights and shell indices."""
    points = [np.zeros(m + 1)]
    weights = [_shell_volume(m, 0.0, spacing / 2.0)]
    shells = [0]
    j = 1
    while j * spacing <= r_max:
        rho = j * spacing
        area = SPHERE_MEASURE[m] * math.sinh(rho) ** m
        count = max(6 if m == 1 else 12, int(math.ceil(area / spacing ** m)))
        dirs = _shell_directions(m, count)
        points.append(math.tanh(rho / 2.0) * dirs)
        vol = _shell_volume(m, max(rho - spacing / 2.0, 0.0), rho + spacing / 2.0)
        weights.append(np.full(count, vol / count))
        shells.append(np.full(count, j, dtype=int))
        j += 1
    pts = np.concatenate([np.atleast_2d(p) for p in points])
    w = np.concatenate([np.atleast_1d(x) for x in weights])
    sh = np.concatenate([np.atleast_1d(s) for s in shells])
    return pts, w, sh


def _shell_volume(m: int, r0: float, r1: float) -> float:
    val, _ = quad(lambda r: SPHERE_MEASURE[m] * math.sinh(r) ** m, r0, r1)
    return val


def default_lattice_spec(f: DiscreteMap, lattice: LatticeSpec | None) -> tuple[float, float]:
    m = f.domain.dim
    target = f.target
    rho_star = target.delta_star / (2.0 * m * target.diameter)
    spacing = lattice.spacing if lattice and lattice.spacing else (
        rho_star / 2.0 if m == 1 else 2.0 * rho_star)
    if spacing > 2.0 * rho_star:
        raise CoarseLatticeError(
            f"lattice spacing {spacing:.4g} too coarse for the covering radius "
            f"{rho_star:.4g}")
    h = f.domain.spacing()
    r_limit = 2.0 * math.asinh(1.0 / h)
    r_default = 5.0 if m == 1 else 2.2
    r_max = lattice.r_max if lattice and lattice.r_max else min(r_limit, r_default)
    return spacing, min(r_max, r_limit)


def detect_singular(f: DiscreteMap, delta: float,
                    lattice: LatticeSpec | None = None) -> list[SingularSample]:
    """All lattice points whose extension is at distance >= delta from the target.

    Weighted by hyperbolic cell volumes, so the weight total estimates the
    measure of the delta-singular set.  Raises if singular points reach the
    outer two shells (the lattice radius would truncate the set).
    """
    if delta > f.target.delta_star:
        raise ValueError("detection threshold must not exceed the tube radius")
    spacing, r_max = default_lattice_spec(f, lattice)
    pts, w, shells = build_lattice(f.domain.dim, spacing, r_max)
    field = ExtensionField(f)
    vals = field(pts, dominance_guard=False)
    dist = f.target.off_manifold(vals)
    mask = dist >= delta
    if np.any(mask & (shells >= shells.max() - 1)) and shells.max() >= 2:
        raise CoarseLatticeError(
            "singular samples reach the outer lattice shells; increase r_max")
    return [SingularSample(pts[i].copy(), float(dist[i]), float(w[i]))
            for i in np.where(mask)[0]]


@dataclass(frozen=True)
class MeasureBound:
    measure: float
    gap_bound: float
    ratio: float
    vacuous: bool


def measure_bound_check(f: DiscreteMap, delta: float, eps: float,
                        lattice: LatticeSpec | None = None,
                        threads: int = 1) -> MeasureBound:
    """Singular-set measure against its truncated-gap-potential bound.

    measure({dist(F, target) >= delta}) <= C/(delta - eps) * truncated gap
    potential at level eps (ambient distances).
    """
    from .energy import GapParams, gap_potential

    if delta <= eps:
        raise ValueError("need delta > eps")
    samples = detect_singular(f, delta, lattice)
    measure = float(sum(s.weight for s in samples))
    gap = gap_potential(f, GapParams(eps=eps, p=1.0, mode="ambient"),
                        threads=threads).value
    bound = gap / (delta - eps)
    if bound == 0.0:
        return MeasureBound(measure, bound, math.nan, measure == 0.0)
    return MeasureBound(measure, bound, measure / bound, False)


# ---------------------------------------------------------------------------
# warped-product extension over the flat torus
# ---------------------------------------------------------------------------

class MStarExtensionField:
    """Bump-kernel extension of a torus map along the height axis.

    The kernel is a compact smooth bump in d_M(y, x)^2 / t^2 below the chart
    scale, blending to the uniform kernel above it; renormalization keeps
    constants fixed and values in the convex hull.
    """

    def __init__(self, f: DiscreteMap, chart_scale: float = TORUS_CHART_SCALE):
        if not isinstance(f.domain, TorusGrid):
            raise ValueError("warped-product extension needs a flat-torus map")
        self.map = f
        self.target = f.target
        self.delta = chart_scale

    def __call__(self, point: MStarPoint) -> np.ndarray:
        f = self.map
        t = point.t
        h = f.domain.spacing()
        if t < 2.0 * self.delta / 3.0 and h > t / 3.0:
            raise ResolutionError(
                f"grid spacing {h:.4g} coarser than t/3 = {t / 3.0:.4g}")
        diff = f.domain.vertices - np.asarray(point.base, dtype=float)[None, :]
        diff -= np.round(diff)
        dsq = np.einsum("ij,ij->i", diff, diff)
        eta = smoothstep((t - self.delta / 3.0) / (self.delta / 3.0))
        ker = (1.0 - eta) * smoothstep(1.0 - dsq / t ** 2) + eta
        ker = ker * f.domain.weights
        mass = ker.sum()
        if mass <= 0:
            raise ResolutionError("empty kernel support at this height")
        return (ker @ f.values) / mass


def extend_mstar(f: DiscreteMap, point: MStarPoint) -> np.ndarray:
    """Warped-product extension value at one point of the half-cylinder."""
    return MStarExtensionField(f)(point)


def horosphere_residual(f: DiscreteMap, height: float) -> DiscreteMap:
    """Level map of the retracted extension at a fixed height.

    This is the residual descriptor emitted for torus domains; it is not
    classified beyond being a valid map into the target.
    """
    field = MStarExtensionField(f)
    vals = np.stack([field(MStarPoint(x, height)) for x in f.domain.vertices])
    return DiscreteMap(f.domain, f.target, f.target.retract(vals))
