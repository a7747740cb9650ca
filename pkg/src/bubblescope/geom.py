"""Meshes, projections and the three metric geometries of the toolkit.

Domains are the round spheres S^m (m = 1, 2, 3), the flat unit torus and
flat unit patches.  Ambient model geometries are the Poincare ball and the
warped half-cylinder over a compact base (base manifold times a height
axis, hyperbolic along fibers).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BubblescopeError
from .util import as_unit

SPHERE_MEASURE = {1: 2.0 * math.pi, 2: 4.0 * math.pi, 3: 2.0 * math.pi ** 2}


# ---------------------------------------------------------------------------
# domain meshes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphereMesh:
    """Oriented simplicial sampling of S^m with vertex quadrature weights.

    vertices : (N, m+1) unit vectors
    simplices : (F, m+1) vertex index tuples, consistently oriented
               (empty for m = 3 where only vertex quadrature is used)
    weights : (N,) vertex areas summing to |S^m|
    """

    dim: int
    vertices: np.ndarray
    simplices: np.ndarray
    weights: np.ndarray

    kind = "sphere"

    def __post_init__(self):
        norms = np.linalg.norm(self.vertices, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise ValueError("mesh vertices must be unit vectors within 1e-12")
        total = SPHERE_MEASURE[self.dim]
        if abs(self.weights.sum() - total) > 1e-6 * total:
            raise ValueError("vertex weights must sum to |S^m| within 1e-6 relative")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def spacing(self) -> float:
        """Typical nearest-neighbour chordal gap of the vertex set."""
        if self.dim == 1:
            return float(np.linalg.norm(self.vertices[1] - self.vertices[0]))
        if self.simplices.size:
            e = self.vertices[self.simplices[:, 0]] - self.vertices[self.simplices[:, 1]]
            return float(np.median(np.linalg.norm(e, axis=1)))
        # quadrature-only point sets: equal-area heuristic
        return float((SPHERE_MEASURE[self.dim] / self.n_vertices) ** (1.0 / self.dim))


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the flat unit torus [0,1)^m, unit total measure."""

    dim: int
    n: int
    vertices: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)

    kind = "torus"

    def __post_init__(self):
        axes = [np.arange(self.n) / self.n for _ in range(self.dim)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        object.__setattr__(self, "vertices", grid)
        object.__setattr__(self, "weights", np.full(len(grid), self.n ** (-self.dim)))

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def spacing(self) -> float:
        return 1.0 / self.n


@dataclass(frozen=True)
class PatchGrid:
    """Cell-centred grid on the convex flat patch [0,1]^m."""

    dim: int
    n: int
    vertices: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)

    kind = "patch"

    def __post_init__(self):
        axes = [(np.arange(self.n) + 0.5) / self.n for _ in range(self.dim)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        object.__setattr__(self, "vertices", grid)
        object.__setattr__(self, "weights", np.full(len(grid), self.n ** (-self.dim)))

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def spacing(self) -> float:
        return 1.0 / self.n


def torus_displacement(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Shortest wrapped displacement y - x on the unit torus, componentwise."""
    d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    return d - np.round(d)


def torus_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Exact geodesic distance on the flat unit torus."""
    return float(np.linalg.norm(torus_displacement(x, y)))


def domain_pair_distance(domain, pts_a: np.ndarray, pts_b: np.ndarray) -> np.ndarray:
    """Kernel distance between two point blocks of a domain.

    Chordal for spheres (the paper's |y - x|), wrapped geodesic for the
    torus, Euclidean for flat patches.
    """
    a = pts_a[:, None, :]
    b = pts_b[None, :, :]
    if domain.kind == "torus":
        d = a - b
        d -= np.round(d)
    else:
        d = a - b
    return np.sqrt(np.einsum("ijk,ijk->ij", d, d))


# ---------------------------------------------------------------------------
# sphere mesh construction
# ---------------------------------------------------------------------------

def signed_spherical_area(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Signed solid angle of spherical triangles on S^2 (vectorized).

    Tangent form of the angle-excess formula: the sign comes from the
    determinant det[a b c] in the numerator.  Degenerate triangles
    (antipodal vertex pairs: both numerator and denominator vanish)
    must be guarded by the caller; see `topo.degree_kronecker_s2`.
    """
    det = np.einsum("...i,...i->...", a, np.cross(b, c))
    denom = 1.0 + np.einsum("...i,...i->...", a, b) \
        + np.einsum("...i,...i->...", b, c) + np.einsum("...i,...i->...", c, a)
    return 2.0 * np.arctan2(det, denom)


_ICOSA_VERTS = None
_ICOSA_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


def _icosahedron():
    global _ICOSA_VERTS
    if _ICOSA_VERTS is None:
        phi = (1.0 + math.sqrt(5.0)) / 2.0
        raw = [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ]
        v = np.array(raw, dtype=float)
        _ICOSA_VERTS = v / np.linalg.norm(v, axis=1)[:, None]
    return _ICOSA_VERTS.copy(), [tuple(f) for f in _ICOSA_FACES]


def _subdivide(verts: np.ndarray, faces: list[tuple[int, int, int]]):
    verts = list(verts)
    midpoint: dict[tuple[int, int], int] = {}

    def mid(i, j):
        key = (min(i, j), max(i, j))
        if key not in midpoint:
            m = verts[i] + verts[j]
            verts.append(m / np.linalg.norm(m))
            midpoint[key] = len(verts) - 1
        return midpoint[key]

    out = []
    for (i, j, k) in faces:
        a, b, c = mid(i, j), mid(j, k), mid(k, i)
        out.extend([(i, a, c), (j, b, a), (k, c, b), (a, b, c)])
    return np.array(verts), out


def _orient_outward(verts: np.ndarray, faces: list[tuple[int, int, int]]):
    """Flip faces so every spherical triangle has positive signed area."""
    f = np.array(faces)
    area = signed_spherical_area(verts[f[:, 0]], verts[f[:, 1]], verts[f[:, 2]])
    flip = area < 0
    f[flip] = f[flip][:, [0, 2, 1]]
    return f


def _s3_lattice(n: int) -> np.ndarray:
    """Quasi-uniform point set on S^3 from a rank-1 Kronecker lattice.

    The unit cube sequence is pushed through the torus coordinates of S^3
    (two phase angles plus the squared latitude), an area-preserving chart,
    so equal weights give consistent quadrature.
    """
    # plastic-constant alphas: standard low-discrepancy rank-1 rule in 3d
    g = 1.2207440846057595
    alpha = np.array([1.0 / g, 1.0 / g ** 2, 1.0 / g ** 3])
    u = (0.5 + np.outer(np.arange(n), alpha)) % 1.0
    eta = np.arcsin(np.sqrt(u[:, 0]))
    a = 2.0 * math.pi * u[:, 1]
    b = 2.0 * math.pi * u[:, 2]
    return np.stack([
        np.cos(eta) * np.cos(a), np.cos(eta) * np.sin(a),
        np.sin(eta) * np.cos(b), np.sin(eta) * np.sin(b),
    ], axis=1)


def make_sphere_mesh(m: int, resolution: int) -> SphereMesh:
    """Build the standard mesh family on S^m.

    m = 1: uniform cyclic polygon with `resolution` vertices (>= 3).
    m = 2: icosphere at subdivision level `resolution`; weights are one
           third of the incident spherical triangle areas.
    m = 3: quasi-uniform `resolution`-point set, equal weights (>= 8).
    """
    if m == 1:
        n = resolution
        if n < 3:
            raise ValueError("m=1 mesh requires at least 3 vertices")
        theta = 2.0 * math.pi * np.arange(n) / n
        verts = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        simplices = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
        weights = np.full(n, 2.0 * math.pi / n)
        return SphereMesh(1, verts, simplices, weights)
    if m == 2:
        if resolution < 0:
            raise ValueError("icosphere subdivision level must be >= 0")
        verts, faces = _icosahedron()
        for _ in range(resolution):
            verts, faces = _subdivide(verts, faces)
        f = _orient_outward(verts, faces)
        areas = signed_spherical_area(verts[f[:, 0]], verts[f[:, 1]], verts[f[:, 2]])
        weights = np.zeros(len(verts))
        for col in range(3):
            np.add.at(weights, f[:, col], areas / 3.0)
        return SphereMesh(2, verts, f, weights)
    if m == 3:
        n = resolution
        if n < 8:
            raise ValueError("m=3 mesh requires at least 8 points")
        verts = _s3_lattice(n)
        weights = np.full(n, SPHERE_MEASURE[3] / n)
        return SphereMesh(3, verts, np.zeros((0, 4), dtype=int), weights)
    raise ValueError(f"unsupported sphere dimension m={m}")


# ---------------------------------------------------------------------------
# Mercator projection of S^m over the cylinder S^{m-1} x R
# ---------------------------------------------------------------------------

def mercator(z: np.ndarray, s) -> np.ndarray:
    """Conformal cylinder chart of S^m: (z, s) -> (z sech s, tanh s).

    z is a unit vector in R^m (a point of S^{m-1}); s may be an array.
    """
    z = as_unit(z, tol=1e-9)
    s = np.asarray(s, dtype=float)
    sech = 1.0 / np.cosh(np.clip(s, -700, 700))
    return np.concatenate([np.multiply.outer(sech, z),
                           np.tanh(s)[..., None]], axis=-1)


def mercator_coordinates(point: np.ndarray) -> tuple[np.ndarray, float]:
    """Invert the cylinder chart: sphere point -> (z, s); poles map to s=+-inf."""
    point = np.asarray(point, dtype=float)
    t = float(np.clip(point[-1], -1.0, 1.0))
    body = point[:-1]
    nb = np.linalg.norm(body)
    if nb < 1e-300:
        return np.zeros_like(body), math.copysign(math.inf, t)
    return body / nb, math.atanh(t) if abs(t) < 1.0 else math.copysign(math.inf, t)


def mercator_chord_identity(w: np.ndarray, t: float, z: np.ndarray, s: float) -> float:
    """Residual of the exact chord identity of the cylinder chart.

    |Y(w,t) - Y(z,s)|^2 - sech t sech s ((2 sinh((t-s)/2))^2 + |w-z|^2),
    identically zero; evaluated as a numerical self-test.
    """
    w = as_unit(w)
    z = as_unit(z)
    lhs = float(np.sum((mercator(w, t) - mercator(z, s)) ** 2))
    rhs = (1.0 / (math.cosh(t) * math.cosh(s))) * (
        (2.0 * math.sinh((t - s) / 2.0)) ** 2 + float(np.sum((w - z) ** 2))
    )
    return lhs - rhs


def cylinder_kernel_sq(t: np.ndarray, s: np.ndarray, wz_sq: np.ndarray) -> np.ndarray:
    """(2 sinh((t-s)/2))^2 + |w-z|^2, the cylinder kernel denominator base."""
    return (2.0 * np.sinh((t - s) / 2.0)) ** 2 + wz_sq


# ---------------------------------------------------------------------------
# Poincare ball model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoincarePoint:
    """A point of the ball model, |z| < 1 strictly."""

    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        object.__setattr__(self, "z", z)
        if np.linalg.norm(z) >= 1.0:
            raise ValueError("Poincare point must satisfy |z| < 1")


def poincare_distance(a, b) -> float:
    """Hyperbolic distance in the ball model (curvature -1)."""
    az = a.z if isinstance(a, PoincarePoint) else np.asarray(a, dtype=float)
    bz = b.z if isinstance(b, PoincarePoint) else np.asarray(b, dtype=float)
    diff = az - bz
    denom = (1.0 - np.dot(az, az)) * (1.0 - np.dot(bz, bz))
    arg = 1.0 + 2.0 * np.dot(diff, diff) / denom
    return float(np.arccosh(max(arg, 1.0)))


def poincare_distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise ball-model distances between two point arrays."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    diff = a[:, None, :] - b[None, :, :]
    dd = np.einsum("ijk,ijk->ij", diff, diff)
    fa = 1.0 - np.einsum("ij,ij->i", a, a)
    fb = 1.0 - np.einsum("ij,ij->i", b, b)
    arg = 1.0 + 2.0 * dd / (fa[:, None] * fb[None, :])
    return np.arccosh(np.maximum(arg, 1.0))


def mobius_translate(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Ball-model isometry sending the origin to a (applied to x).

    Standard Moebius gyro-translation; vectorized over rows of x.
    """
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    ax = x @ a
    xx = np.einsum("ij,ij->i", x, x)
    aa = float(a @ a)
    num = (1.0 + 2.0 * ax + xx)[:, None] * a[None, :] + (1.0 - aa) * x
    den = 1.0 + 2.0 * ax + aa * xx
    out = num / den[:, None]
    return out[0] if single else out


def poincare_geodesic_point(a: np.ndarray, b: np.ndarray, dist_from_a: float) -> np.ndarray:
    """Point on the geodesic from a to b at hyperbolic distance dist_from_a.

    Computed by translating a to the origin, where geodesics are diameters,
    walking radially and translating back: exact in the model.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    b0 = mobius_translate(-a, b)
    nb0 = np.linalg.norm(b0)
    if nb0 < 1e-300:
        return a.copy()
    direction = b0 / nb0
    return mobius_translate(a, math.tanh(dist_from_a / 2.0) * direction)


def hyperbolic_sphere(center, rho: float):
    """Euclidean description of the hyperbolic sphere of radius rho.

    Returns (euclidean center, euclidean radius, intrinsic radius): the
    boundary of a hyperbolic ball is a round Euclidean sphere, isometric to
    the Euclidean sphere of radius sinh(rho).
    """
    if rho <= 0:
        raise ValueError("hyperbolic sphere radius must be positive")
    c = center.z if isinstance(center, PoincarePoint) else np.asarray(center, dtype=float)
    r0 = math.tanh(rho / 2.0)
    nc = np.linalg.norm(c)
    if nc < 1e-15:
        return np.zeros_like(c), r0, math.sinh(rho)
    axis = c / nc
    p_far = mobius_translate(c, r0 * axis)
    p_near = mobius_translate(c, -r0 * axis)
    euclid_center = (p_far + p_near) / 2.0
    euclid_radius = float(np.linalg.norm(p_far - p_near) / 2.0)
    return euclid_center, euclid_radius, math.sinh(rho)


def sample_hyperbolic_sphere(center: np.ndarray, rho: float, directions: np.ndarray) -> np.ndarray:
    """Points of the hyperbolic sphere along given unit directions at center.

    Uses the translated radial parametrization, so every returned point is
    at hyperbolic distance rho from the center (exact in the model).
    """
    return mobius_translate(np.asarray(center, dtype=float),
                            math.tanh(rho / 2.0) * np.asarray(directions, dtype=float))


def hyperbolic_ball_volume(rho: float, m: int) -> float:
    """Volume of a hyperbolic ball of radius rho in H^{m+1}."""
    from scipy.integrate import quad

    val, _ = quad(lambda r: SPHERE_MEASURE[m] * math.sinh(r) ** m, 0.0, rho)
    return val


# ---------------------------------------------------------------------------
# warped half-cylinder over a compact base
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MStarPoint:
    """Point of the warped product: base point plus height t > 0."""

    base: np.ndarray
    t: float

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float))
        if not self.t > 0:
            raise ValueError("height must be positive")


def mstar_distance(a: MStarPoint, b: MStarPoint, domain_distance=torus_distance) -> float:
    """Exact distance on the warped product over a geodesic base.

    d = 2 asinh( sqrt(d_M(x,y)^2 + (t-s)^2) / (2 sqrt(t s)) ); reduces to
    |ln(t/s)| over a common base point.
    """
    if not (a.t > 0 and b.t > 0):
        raise ValueError("heights must be positive")
    dm = domain_distance(a.base, b.base)
    return 2.0 * math.asinh(math.sqrt(dm * dm + (a.t - b.t) ** 2)
                            / (2.0 * math.sqrt(a.t * b.t)))


def mstar_geodesic_point(a: MStarPoint, b: MStarPoint, dist_from_a: float) -> MStarPoint:
    """Point at distance dist_from_a from a on the geodesic to b (torus base).

    The geodesic projects to the wrapped straight segment on the base and is
    a half-plane geodesic in the vertical plane over it.
    """
    disp = torus_displacement(a.base, b.base)
    dm = float(np.linalg.norm(disp))
    if dm < 1e-15:
        # vertical geodesic: pure height scaling
        sign = 1.0 if b.t >= a.t else -1.0
        return MStarPoint(a.base.copy(), a.t * math.exp(sign * dist_from_a))
    # half-plane over the segment: P = (0, a.t), Q = (dm, b.t)
    cx = (dm * dm + b.t ** 2 - a.t ** 2) / (2.0 * dm)
    radius = math.hypot(cx, a.t)
    phi_a = math.atan2(a.t, -cx)
    phi_b = math.atan2(b.t, dm - cx)
    # arclength parameter ln tan(phi/2) decreases as phi increases
    ua, ub = math.log(math.tan(phi_a / 2.0)), math.log(math.tan(phi_b / 2.0))
    sign = 1.0 if ub >= ua else -1.0
    u = ua + sign * dist_from_a
    phi = 2.0 * math.atan(math.exp(u))
    xi = cx + radius * math.cos(phi)
    height = radius * math.sin(phi)
    base = (a.base + (xi / dm) * disp) % 1.0
    return MStarPoint(base, height)


# ---------------------------------------------------------------------------
# metric balls
# ---------------------------------------------------------------------------

EUCLIDEAN, POINCARE, MSTAR = "euclidean", "poincare", "mstar"


@dataclass(frozen=True)
class Ball:
    """Metric ball in one of the tagged spaces."""

    space: str
    center: object
    radius: float

    def __post_init__(self):
        if self.space not in (EUCLIDEAN, POINCARE, MSTAR):
            raise ValueError(f"unknown space tag {self.space!r}")
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        if self.space == EUCLIDEAN:
            object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        elif self.space == POINCARE:
            c = self.center.z if isinstance(self.center, PoincarePoint) \
                else np.asarray(self.center, dtype=float)
            if np.linalg.norm(c) >= 1.0:
                raise ValueError("Poincare ball center must satisfy |z| < 1")
            object.__setattr__(self, "center", c)
        else:
            if not isinstance(self.center, MStarPoint):
                raise ValueError("mstar ball center must be an MStarPoint")


def ball_distance(space: str, a, b) -> float:
    if space == EUCLIDEAN:
        return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    if space == POINCARE:
        return poincare_distance(a, b)
    return mstar_distance(a, b)


def geodesic_point(space: str, a, b, dist_from_a: float):
    if space == EUCLIDEAN:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        d = np.linalg.norm(b - a)
        if d < 1e-15:
            return a.copy()
        return a + (dist_from_a / d) * (b - a)
    if space == POINCARE:
        return poincare_geodesic_point(a, b, dist_from_a)
    return mstar_geodesic_point(a, b, dist_from_a)


# ---------------------------------------------------------------------------
# simplex cap covering of pairs on the sphere
# ---------------------------------------------------------------------------

def simplex_caps(m: int):
    """Regular-simplex cap system covering all point pairs of S^m.

    Returns (centers, threshold): m+2 unit vectors with pairwise inner
    product -1/(m+1); for every pair (x, y) on S^m some center a_i has
    a_i . x >= threshold and a_i . y >= threshold, threshold = -1/sqrt(m+1).
    """
    if m < 1:
        raise ValueError("simplex caps require m >= 1")
    k = m + 2
    e = np.eye(k)
    centered = e - np.full((k, k), 1.0 / k)
    # orthonormal basis of the hyperplane sum(x) = 0 in R^{m+2}
    ones = np.ones((k, 1)) / math.sqrt(k)
    q, _ = np.linalg.qr(np.concatenate([ones, np.eye(k)[:, : k - 1]], axis=1))
    basis = q[:, 1:k]
    centers = centered @ basis
    centers /= np.linalg.norm(centers, axis=1)[:, None]
    return centers, -1.0 / math.sqrt(m + 1)


# ---------------------------------------------------------------------------
# serialization (self-describing JSON shape)
# ---------------------------------------------------------------------------

def mesh_to_dict(mesh) -> dict:
    if isinstance(mesh, SphereMesh):
        return {
            "dim": mesh.dim,
            "vertices": mesh.vertices.tolist(),
            "simplices": mesh.simplices.tolist(),
            "weights": mesh.weights.tolist(),
        }
    if isinstance(mesh, (TorusGrid, PatchGrid)):
        return {"domain": mesh.kind, "dim": mesh.dim, "n": mesh.n}
    raise BubblescopeError(f"cannot serialize domain {type(mesh).__name__}")


def mesh_from_dict(spec: dict):
    if spec.get("domain") == "torus":
        return TorusGrid(spec["dim"], spec["n"])
    if spec.get("domain") == "patch":
        return PatchGrid(spec["dim"], spec["n"])
    return SphereMesh(
        spec["dim"],
        np.asarray(spec["vertices"], dtype=float),
        np.asarray(spec["simplices"], dtype=int).reshape(-1, spec["dim"] + 1)
        if spec["simplices"] else np.zeros((0, spec["dim"] + 1), dtype=int),
        np.asarray(spec["weights"], dtype=float),
    )


def save_mesh(mesh, path: str):
    with open(path, "w") as fh:
        json.dump(mesh_to_dict(mesh), fh)


def load_mesh(path: str):
    with open(path) as fh:
        return mesh_from_dict(json.load(fh))
