"""Discrete maps into embedded targets and the explicit map constructions.

Supported targets are the unit spheres S^n, the Clifford torus in R^4 and
(as plumbing for flat-domain experiments) Euclidean space itself.  A
DiscreteMap stores one embedded value per domain vertex; all constructions
below return valid DiscreteMaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ResolutionError, TubeViolationError
from .geom import (PatchGrid, SphereMesh, TorusGrid, mercator,
                   mercator_coordinates, mesh_from_dict, mesh_to_dict)

_SQRT2 = math.sqrt(2.0)


def smoothstep(u):
    """C^1 monotone ramp 3u^2 - 2u^3 clamped to [0, 1]."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


# ---------------------------------------------------------------------------
# target manifolds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TargetManifold:
    """Embedded target descriptor: metric, retraction and tubular data."""

    kind: str           # "sphere" | "torus" | "euclidean"
    n: int              # intrinsic dimension
    nu: int             # embedding dimension
    delta_star: float   # tubular radius of the retraction
    diameter: float     # geodesic diameter
    injectivity: float  # injectivity radius

    # -- metric ------------------------------------------------------------

    def distance(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Geodesic distance, vectorized over matching leading shapes."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.kind == "sphere":
            dots = np.clip(np.einsum("...i,...i->...", p, q), -1.0, 1.0)
            return np.arccos(dots)
        if self.kind == "torus":
            th = self._angles(p) - self._angles(q)
            th = (th + math.pi) % (2.0 * math.pi) - math.pi
            return np.sqrt(np.einsum("...i,...i->...", th, th)) / _SQRT2
        d = p - q
        return np.sqrt(np.einsum("...i,...i->...", d, d))

    def off_manifold(self, y: np.ndarray) -> np.ndarray:
        """Euclidean distance from ambient points to the manifold."""
        y = np.asarray(y, dtype=float)
        if self.kind == "sphere":
            return np.abs(np.linalg.norm(y, axis=-1) - 1.0)
        if self.kind == "torus":
            u = np.linalg.norm(y[..., :2], axis=-1) - 1.0 / _SQRT2
            v = np.linalg.norm(y[..., 2:], axis=-1) - 1.0 / _SQRT2
            return np.hypot(u, v)
        return np.zeros(y.shape[:-1])

    def retract(self, y: np.ndarray) -> np.ndarray:
        """Nearest-point retraction, defined on the tube of radius delta_star.

        Raises TubeViolationError outside the tube; that error is the
        singular-set signal consumed by the extension module.
        """
        y = np.asarray(y, dtype=float)
        dist = self.off_manifold(y)
        worst = np.argmax(dist) if dist.ndim else None
        if np.any(dist >= self.delta_star):
            bad = y[worst] if worst is not None else y
            d = dist[worst] if worst is not None else dist
            raise TubeViolationError(bad, float(d), self.delta_star)
        if self.kind == "sphere":
            return y / np.linalg.norm(y, axis=-1, keepdims=True)
        if self.kind == "torus":
            u = y[..., :2] / np.linalg.norm(y[..., :2], axis=-1, keepdims=True)
            v = y[..., 2:] / np.linalg.norm(y[..., 2:], axis=-1, keepdims=True)
            return np.concatenate([u, v], axis=-1) / _SQRT2
        return y

    # -- charts ------------------------------------------------------------

    def _angles(self, p: np.ndarray) -> np.ndarray:
        """Factor angles of Clifford torus points."""
        return np.stack([np.arctan2(p[..., 1], p[..., 0]),
                         np.arctan2(p[..., 3], p[..., 2])], axis=-1)

    def from_angles(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.stack([np.cos(theta[..., 0]), np.sin(theta[..., 0]),
                         np.cos(theta[..., 1]), np.sin(theta[..., 1])],
                        axis=-1) / _SQRT2

    def log(self, b: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Inverse exponential at b; requires d(y, b) < injectivity radius."""
        if self.kind == "sphere":
            b = np.asarray(b, dtype=float)
            y = np.asarray(y, dtype=float)
            ct = np.clip(np.einsum("...i,...i->...", b, y), -1.0, 1.0)
            theta = np.arccos(ct)
            u = y - ct[..., None] * b
            nu = np.linalg.norm(u, axis=-1)
            safe = np.where(nu > 1e-15, nu, 1.0)
            return (theta / safe)[..., None] * u
        if self.kind == "torus":
            th = self._angles(y) - self._angles(b)
            th = (th + math.pi) % (2.0 * math.pi) - math.pi
            return th / _SQRT2
        return np.asarray(y, dtype=float) - np.asarray(b, dtype=float)

    def exp(self, b: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.kind == "sphere":
            b = np.asarray(b, dtype=float)
            v = np.asarray(v, dtype=float)
            nv = np.linalg.norm(v, axis=-1)
            safe = np.where(nv > 1e-15, nv, 1.0)
            return np.cos(nv)[..., None] * b + (np.sin(nv) / safe)[..., None] * v
        if self.kind == "torus":
            return self.from_angles(self._angles(b) + _SQRT2 * np.asarray(v))
        return np.asarray(b, dtype=float) + np.asarray(v, dtype=float)

    def interpolate(self, p: np.ndarray, q: np.ndarray, t) -> np.ndarray:
        """Geodesic interpolation from p (t = 0) to q (t = 1)."""
        t = np.asarray(t, dtype=float)
        return self.exp(p, t[..., None] * self.log(p, q))


def sphere_target(n: int) -> TargetManifold:
    # delta_star = 0.5: radial retraction valid for |y| in (0.5, 1.5)
    return TargetManifold("sphere", n, n + 1, 0.5, math.pi, math.pi)


def clifford_torus_target() -> TargetManifold:
    # delta_star = 0.25: factor normalization valid above 1/sqrt(2) - 0.25
    return TargetManifold("torus", 2, 4, 0.25, math.pi, math.pi / _SQRT2)


def euclidean_target(nu: int) -> TargetManifold:
    return TargetManifold("euclidean", nu, nu, math.inf, math.inf, math.inf)


def target_from_dict(spec: dict) -> TargetManifold:
    kind = spec["kind"]
    if kind == "sphere":
        return sphere_target(spec["nu"] - 1)
    if kind == "torus":
        return clifford_torus_target()
    return euclidean_target(spec["nu"])


# ---------------------------------------------------------------------------
# discrete maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteMap:
    """One embedded target value per domain vertex; immutable."""

    domain: object
    target: TargetManifold
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.domain.n_vertices, self.target.nu):
            raise ValueError("value count must equal vertex count")
        off = self.target.off_manifold(vals)
        if off.size and float(np.max(off)) > 1e-9:
            raise ValueError(
                f"map values must lie on the target within 1e-9 (max off {np.max(off):.3g})")

    @property
    def n_vertices(self) -> int:
        return self.domain.n_vertices


def map_to_dict(f: DiscreteMap) -> dict:
    d = mesh_to_dict(f.domain)
    d["target"] = {"kind": f.target.kind, "nu": f.target.nu}
    d["values"] = f.values.tolist()
    return d


def map_from_dict(spec: dict) -> DiscreteMap:
    return DiscreteMap(mesh_from_dict(spec), target_from_dict(spec["target"]),
                       np.asarray(spec["values"], dtype=float))


# ---------------------------------------------------------------------------
# evaluation at off-vertex points
# ---------------------------------------------------------------------------

class MapEvaluator:
    """Interpolating evaluator for a DiscreteMap at arbitrary domain points.

    S^1: geodesic interpolation between the bracketing vertices.
    S^2: barycentric combination over the containing triangle, retracted.
    S^3 / grids: nearest vertex.
    """

    def __init__(self, f: DiscreteMap):
        self.f = f
        dom = f.domain
        if isinstance(dom, SphereMesh) and dom.dim == 1:
            ang = np.arctan2(dom.vertices[:, 1], dom.vertices[:, 0]) % (2 * math.pi)
            order = np.argsort(ang)
            self._ang = ang[order]
            self._vals = f.values[order]
        elif isinstance(dom, SphereMesh) and dom.dim == 2 and dom.simplices.size:
            tri = dom.vertices[dom.simplices]
            self._tree = cKDTree(tri.mean(axis=1))
            self._tri = dom.simplices
        else:
            self._tree = cKDTree(np.asarray(dom.vertices, dtype=float))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        f, dom = self.f, self.f.domain
        if isinstance(dom, SphereMesh) and dom.dim == 1:
            return self._eval_circle(points)
        if isinstance(dom, SphereMesh) and dom.dim == 2 and dom.simplices.size:
            return self._eval_icosphere(points)
        _, idx = self._tree.query(points)
        return f.values[idx]

    def _eval_circle(self, points):
        ang = np.arctan2(points[:, 1], points[:, 0]) % (2 * math.pi)
        hi = np.searchsorted(self._ang, ang) % len(self._ang)
        lo = (hi - 1) % len(self._ang)
        a_lo, a_hi = self._ang[lo], self._ang[hi]
        span = (a_hi - a_lo) % (2 * math.pi)
        span = np.where(span < 1e-15, 1.0, span)
        t = ((ang - a_lo) % (2 * math.pi)) / span
        return self.f.target.interpolate(self._vals[lo], self._vals[hi], np.clip(t, 0, 1))

    def _eval_icosphere(self, points):
        k = min(24, len(self._tri))
        _, cand = self._tree.query(points, k=k)
        verts = self.f.domain.vertices
        out = np.empty((len(points), self.f.target.nu))
        for i, p in enumerate(points):
            w = None
            for t_idx in np.atleast_1d(cand[i]):
                a, b, c = verts[self._tri[t_idx]]
                try:
                    coef = np.linalg.solve(np.stack([a, b, c], axis=1), p)
                except np.linalg.LinAlgError:
                    continue
                ssum = coef.sum()
                if ssum <= 1e-12:
                    continue
                coef = coef / ssum
                if np.all(coef >= -1e-9):
                    w = (self._tri[t_idx], np.clip(coef, 0.0, None))
                    break
            if w is None:  # fall back to the nearest candidate triangle
                t_idx = np.atleast_1d(cand[i])[0]
                w = (self._tri[t_idx], np.full(3, 1.0 / 3.0))
            idx, coef = w
            y = coef @ self.f.values[idx]
            out[i] = self.f.target.retract(y[None, :])[0]
        return out


# ---------------------------------------------------------------------------
# map constructions
# ---------------------------------------------------------------------------

def _circle_angles(mesh: SphereMesh) -> np.ndarray:
    return np.arctan2(mesh.vertices[:, 1], mesh.vertices[:, 0])


def winding_map(k: int, mesh: SphereMesh) -> DiscreteMap:
    """Degree-k representative on the circle: angle theta -> k theta."""
    if mesh.dim != 1:
        raise ValueError("winding_map needs an S^1 mesh")
    theta = _circle_angles(mesh)
    vals = np.stack([np.cos(k * theta), np.sin(k * theta)], axis=1)
    return DiscreteMap(mesh, sphere_target(1), vals)


def power_map_s2(k: int, mesh: SphereMesh) -> DiscreteMap:
    """Longitude multiplication on S^2: (colatitude, phi) -> (colatitude, k phi).

    Brouwer degree k, Lipschitz constant |k|.
    """
    if mesh.dim != 2:
        raise ValueError("power_map_s2 needs an S^2 mesh")
    x, y, z = mesh.vertices.T
    rho = np.hypot(x, y)
    phi = np.arctan2(y, x)
    vals = np.stack([rho * np.cos(k * phi), rho * np.sin(k * phi), z], axis=1)
    return DiscreteMap(mesh, sphere_target(2), vals)


def constant_map(mesh, target: TargetManifold, value: np.ndarray) -> DiscreteMap:
    vals = np.tile(np.asarray(value, dtype=float), (mesh.n_vertices, 1))
    return DiscreteMap(mesh, target, vals)


def _orthonormal_frame(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal pair spanning the plane orthogonal to b."""
    b = np.asarray(b, dtype=float)
    probe = np.zeros_like(b)
    probe[int(np.argmin(np.abs(b)))] = 1.0
    e1 = probe - (probe @ b) * b
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(b, e1)
    return e1, e2


def bubble_map(inner, basepoint: np.ndarray, mesh: SphereMesh,
               target: TargetManifold | None = None) -> DiscreteMap:
    """Map constant outside disjoint caps, carrying a prescribed degree in each.

    inner : list of (cap center unit vector, cap geodesic radius, degree);
        for Clifford-torus targets the degree is a winding pair.
    The cap interior runs a radially compressed winding/longitude map, so
    the quotient-sphere class of cap i is exactly degree d_i.
    """
    basepoint = np.asarray(basepoint, dtype=float)
    if target is None:
        target = sphere_target(mesh.dim)
    h = mesh.spacing()
    centers = [np.asarray(c, dtype=float) for c, _, _ in inner]
    radii = [float(r) for _, r, _ in inner]
    for i in range(len(inner)):
        if radii[i] <= 3.0 * h:
            raise ValueError("cap radii must exceed 3x the mesh spacing")
        for j in range(i + 1, len(inner)):
            gap = math.acos(float(np.clip(centers[i] @ centers[j], -1, 1)))
            if gap <= radii[i] + radii[j]:
                raise ValueError("caps must be pairwise disjoint")
    values = np.tile(basepoint, (mesh.n_vertices, 1))
    for (c, rho, deg) in zip(centers, radii, (d for _, _, d in inner)):
        dots = np.clip(mesh.vertices @ c, -1.0, 1.0)
        r = np.arccos(dots)
        inside = r < rho
        if not np.any(inside):
            continue
        tau = smoothstep(1.0 - r[inside] / rho)  # 0 at the rim, 1 at the center
        if target.kind == "torus":
            d = np.asarray(deg, dtype=float)
            base_angles = target._angles(basepoint)
            ang = base_angles[None, :] + 2.0 * math.pi * tau[:, None] * d[None, :]
            values[inside] = target.from_angles(ang)
        elif mesh.dim == 1:
            base_angle = math.atan2(basepoint[1], basepoint[0])
            # signed position across the arc, monotone sweep of deg turns
            c_ang = math.atan2(c[1], c[0])
            v_ang = _circle_angles(mesh)[inside]
            off = (v_ang - c_ang + math.pi) % (2 * math.pi) - math.pi
            sweep = smoothstep((off + rho) / (2.0 * rho))
            ang = base_angle + 2.0 * math.pi * deg * sweep
            values[inside] = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        else:
            e1, e2 = _orthonormal_frame(basepoint)
            u1, u2 = _orthonormal_frame(c)
            v = mesh.vertices[inside]
            omega = np.arctan2(v @ u2, v @ u1)
            colat = math.pi * tau  # 0 at the rim (basepoint), pi at the center
            a = deg * omega
            values[inside] = (np.cos(colat)[:, None] * basepoint[None, :]
                              + np.sin(colat)[:, None]
                              * (np.cos(a)[:, None] * e1 + np.sin(a)[:, None] * e2))
    return DiscreteMap(mesh, target, values)


def _cutoff_eta(x):
    """Smooth monotone cutoff: 0 on (-inf, -2], 1 on [-1, +inf)."""
    return smoothstep(np.asarray(x, dtype=float) + 2.0)


def pinch(f: DiscreteMap, b: np.ndarray, lam: float) -> DiscreteMap:
    """Compose f with the map degenerating a neighbourhood of b to b.

    The composed map is constant b on {d(y, b) <= exp(-2/lam) inj} and
    untouched where d(f(x), b) >= inj; pairwise target distances grow by at
    most a factor 1 + O(lam).
    """
    if lam <= 0:
        raise ValueError("pinch scale must be positive")
    b = np.asarray(b, dtype=float)
    target = f.target
    inj = target.injectivity
    d = target.distance(f.values, b[None, :])
    out = f.values.copy()
    move = d < inj
    if np.any(move):
        y = f.values[move]
        u = target.log(b, y) / inj
        nu = np.linalg.norm(u, axis=-1)
        with np.errstate(divide="ignore"):
            scale = _cutoff_eta(lam * np.log(np.where(nu > 0, nu, 1e-300)))
        out[move] = target.exp(b, (inj * scale)[:, None] * u)
        core = nu <= math.exp(-2.0 / lam)
        if np.any(core):
            idx = np.where(move)[0][core]
            out[idx] = b
    return DiscreteMap(f.domain, target, out)


# ---------------------------------------------------------------------------
# cylinder gluing
# ---------------------------------------------------------------------------

def geodesic_path(target: TargetManifold, a: np.ndarray, b: np.ndarray,
                  n: int = 64) -> np.ndarray:
    """Sampled minimizing geodesic from a to b (n points, endpoints included)."""
    t = np.linspace(0.0, 1.0, n)
    return target.interpolate(np.asarray(a, dtype=float), np.asarray(b, dtype=float), t)


class _PathEval:
    """Evaluate a sampled path on [-1, 1], constant beyond the endpoints."""

    def __init__(self, target, samples):
        self.target = target
        self.samples = np.asarray(samples, dtype=float)

    def __call__(self, tau: np.ndarray) -> np.ndarray:
        tau = np.clip((np.asarray(tau, dtype=float) + 1.0) / 2.0, 0.0, 1.0)
        pos = tau * (len(self.samples) - 1)
        lo = np.minimum(pos.astype(int), len(self.samples) - 2)
        frac = pos - lo
        return self.target.interpolate(self.samples[lo], self.samples[lo + 1], frac)


def _constant_extent(f: DiscreteMap, c: np.ndarray, side: str, tol: float = 1e-7):
    """Largest Mercator coordinate range on which f equals c.

    side = "low": constant on (-inf, sigma]; side = "high": on [sigma, inf).
    Returns sigma, or None when f is globally constant.
    """
    dev = np.linalg.norm(f.values - c[None, :], axis=1)
    scoord = np.array([mercator_coordinates(v)[1] for v in f.domain.vertices])
    varying = scoord[dev > tol]
    if varying.size == 0:
        return None
    margin = 2.0 * math.pi / f.domain.n_vertices
    if side == "low":
        return float(np.min(varying)) - margin
    return float(np.max(varying)) + margin


def glue_cylinder(f_plus: DiscreteMap, f_minus: DiscreteMap, gamma: np.ndarray,
                  lam: float, mesh: SphereMesh) -> DiscreteMap:
    """Join two maps along the Mercator cylinder with a connecting path.

    f_plus must be constant near the south pole and f_minus near the north
    pole (arrange with `pinch`).  The result equals a shifted f_minus for
    s <= -2 lam, gamma(s/lam) across the band |s| <= 2 lam and a shifted
    f_plus for s >= 2 lam; for circle targets its degree is the sum of the
    two input degrees.
    """
    if lam <= 0:
        raise ValueError("gluing scale must be positive")
    target = f_plus.target
    gamma = np.asarray(gamma, dtype=float)
    c_minus = gamma[0]
    c_plus = gamma[-1]
    m = mesh.dim
    north = np.zeros(m + 1)
    north[-1] = 1.0
    ev_plus = MapEvaluator(f_plus)
    ev_minus = MapEvaluator(f_minus)
    if np.linalg.norm(ev_plus(-north[None, :])[0] - c_plus) > 1e-6:
        raise ValueError("gamma(1) must match the constant value of f_plus")
    if np.linalg.norm(ev_minus(north[None, :])[0] - c_minus) > 1e-6:
        raise ValueError("gamma(-1) must match the constant value of f_minus")
    sig_plus = _constant_extent(f_plus, c_plus, "low")
    sig_minus = _constant_extent(f_minus, c_minus, "high")
    path = _PathEval(target, gamma)

    values = np.empty((mesh.n_vertices, target.nu))
    coords = [mercator_coordinates(v) for v in mesh.vertices]
    s_arr = np.array([min(max(s, -40.0), 40.0) for _, s in coords])
    z_arr = np.array([z for z, _ in coords])

    lower = s_arr <= -2.0 * lam
    upper = s_arr >= 2.0 * lam
    band = ~(lower | upper)

    if np.any(band):
        values[band] = path(s_arr[band] / lam)
    if np.any(lower):
        if sig_minus is None:
            values[lower] = c_minus
        else:
            arg = s_arr[lower] + 2.0 * lam + sig_minus
            pts = np.stack([mercator(z, a) for z, a in zip(z_arr[lower], arg)])
            values[lower] = ev_minus(pts)
    if np.any(upper):
        if sig_plus is None:
            values[upper] = c_plus
        else:
            arg = s_arr[upper] - 2.0 * lam + sig_plus
            pts = np.stack([mercator(z, a) for z, a in zip(z_arr[upper], arg)])
            values[upper] = ev_plus(pts)

    out = DiscreteMap(mesh, target, target.retract(values))
    if m == 1 and target.kind == "sphere" and target.n == 1:
        ang = np.arctan2(out.values[:, 1], out.values[:, 0])
        gaps = np.abs((np.diff(np.concatenate([ang, ang[:1]])) + math.pi)
                      % (2 * math.pi) - math.pi)
        if float(np.max(gaps)) >= 0.95 * math.pi:
            raise ResolutionError(
                f"glued map unresolved at lam={lam:g}: adjacent gap {np.max(gaps):.3f}")
    return out


# ---------------------------------------------------------------------------
# oscillation
# ---------------------------------------------------------------------------

def oscillation(f: DiscreteMap) -> tuple[float, float]:
    """(geodesic, ambient-chord) diameter of the image of f."""
    vals = f.values
    n = len(vals)
    geo = amb = 0.0
    for start in range(0, n, 2048):
        blk = vals[start:start + 2048]
        d = blk[:, None, :] - vals[None, :, :]
        amb = max(amb, float(np.sqrt(np.einsum("ijk,ijk->ij", d, d)).max()))
        geo = max(geo, float(f.target.distance(blk[:, None, :], vals[None, :, :]).max()))
    return geo, amb
