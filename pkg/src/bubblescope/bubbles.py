"""Constructive covering machinery and the bubble decomposition pipeline.

A map's singular set inside the ball is covered by a separated net of
small balls, merged into disjoint ones without increasing the radius sum;
restricting the retracted extension to each merged-ball boundary produces
the bubble maps, whose degrees add up to the degree of the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DecompositionError, TubeViolationError
from .geom import (Ball, EUCLIDEAN, MSTAR, POINCARE, SphereMesh,
                   ball_distance, geodesic_point, make_sphere_mesh,
                   poincare_distance_matrix, sample_hyperbolic_sphere)
from .maps import DiscreteMap, TargetManifold
from .extension import ExtensionField, LatticeSpec, default_lattice_spec, detect_singular
from . import topo


# ---------------------------------------------------------------------------
# nets and merging
# ---------------------------------------------------------------------------

def separated_net(points, separation: float, space: str):
    """Greedy maximal separation-net of the points, in input order.

    Selected points are pairwise >= separation apart and every input point
    lies within separation of a selected one.
    """
    if separation <= 0:
        raise ValueError("separation must be positive")
    points = list(points)
    if space in (EUCLIDEAN, POINCARE) and points:
        arr = np.asarray(points, dtype=float)
        selected_idx: list[int] = []
        for i in range(len(arr)):
            if not selected_idx:
                selected_idx.append(i)
                continue
            if space == POINCARE:
                d = poincare_distance_matrix(arr[i], arr[selected_idx])[0]
            else:
                d = np.linalg.norm(arr[selected_idx] - arr[i][None, :], axis=1)
            if float(d.min()) >= separation:
                selected_idx.append(i)
        return [points[i] for i in selected_idx]
    selected = []
    for p in points:
        if all(ball_distance(space, p, q) >= separation for q in selected):
            selected.append(p)
    return selected


def _merge_pair(space: str, a: Ball, b: Ball) -> Ball:
    """Single merged ball covering two intersecting closed balls.

    The center sits on the geodesic between the centers so that the new
    radius never exceeds the radius sum; the swallowing case clamps the
    walk to the far center.
    """
    d = ball_distance(space, a.center, b.center)
    walk = min(max((d + b.radius - a.radius) / 2.0, 0.0), d)
    center = geodesic_point(space, a.center, b.center, walk)
    da = ball_distance(space, center, a.center)
    db = ball_distance(space, center, b.center)
    radius = max(da + a.radius, db + b.radius)
    return Ball(space, center, radius)


def _distance_rows(space: str, centers: np.ndarray, block: np.ndarray) -> np.ndarray:
    if space == POINCARE:
        return poincare_distance_matrix(block, centers)
    diff = block[:, None, :] - centers[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def merge_balls(balls, space: str):
    """Merge overlapping balls into pairwise disjoint closed balls.

    The union grows, the radius sum never does, and at most len - 1 merge
    steps run.  The first intersecting pair in index order is merged and
    the scan restarts, which makes the procedure deterministic; the pair
    distance matrix is updated incrementally.
    """
    if space not in (EUCLIDEAN, POINCARE):
        raise ValueError("merge_balls operates in euclidean or poincare space")
    out = list(balls)
    if len(out) < 2:
        return out
    centers = np.asarray([b.center for b in out], dtype=float)
    radii = np.asarray([b.radius for b in out])
    dist = _distance_rows(space, centers, centers)
    while True:
        overlap = dist <= radii[:, None] + radii[None, :]
        np.fill_diagonal(overlap, False)
        overlap[np.tril_indices(len(out))] = False
        hits = np.argwhere(overlap)
        if len(hits) == 0:
            return out
        i, j = hits[np.lexsort((hits[:, 1], hits[:, 0]))][0]
        out[i] = _merge_pair(space, out[i], out[j])
        del out[j]
        centers = np.delete(centers, j, axis=0)
        radii = np.delete(radii, j)
        dist = np.delete(np.delete(dist, j, axis=0), j, axis=1)
        centers[i] = out[i].center
        radii[i] = out[i].radius
        row = _distance_rows(space, centers, centers[i][None, :])[0]
        dist[i, :] = row
        dist[:, i] = row


def merge_with_horoball(balls, T: float):
    """Merge warped-product balls, absorbing any that touch the horoball.

    The horoball is the set above height T; a ball touching it (top height
    t e^r >= T) is absorbed by lowering the level to T e^{-2r}, which keeps
    (1/2) ln(1/T) + sum of radii conserved.  Returns (balls', T').
    """
    if T <= 0:
        raise ValueError("horoball level must be positive")
    out = list(balls)
    for b in out:
        if b.space != MSTAR:
            raise ValueError("horoball merging needs mstar balls")
    log_t = math.log(T)
    changed = True
    while changed:
        changed = False
        for i in range(len(out)):
            if math.log(out[i].center.t) + out[i].radius >= log_t:
                log_t -= 2.0 * out[i].radius
                del out[i]
                changed = True
                break
        if changed:
            continue
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                d = ball_distance(MSTAR, out[i].center, out[j].center)
                if d <= out[i].radius + out[j].radius:
                    out[i] = _merge_pair(MSTAR, out[i], out[j])
                    del out[j]
                    changed = True
                    break
            if changed:
                break
    return out, math.exp(log_t)


# ---------------------------------------------------------------------------
# bubble boundary maps
# ---------------------------------------------------------------------------

def bubble_boundary_map(field: ExtensionField, ball: Ball, target: TargetManifold,
                        resolution: int) -> DiscreteMap:
    """Retracted extension restricted to a merged-ball boundary sphere.

    The hyperbolic sphere is sampled through the translated radial chart
    (outward orientation), so for sphere targets the degree of the result
    is the bubble's contribution to the total degree.
    """
    if ball.space != POINCARE:
        raise ValueError("bubble boundaries live on Poincare balls")
    m = field.map.domain.dim
    bmesh = make_sphere_mesh(m, resolution)
    pts = sample_hyperbolic_sphere(ball.center, ball.radius, bmesh.vertices)
    vals = field(pts)
    try:
        on_target = target.retract(vals)
    except TubeViolationError as exc:
        raise DecompositionError(
            f"boundary sample left the retraction tube (distance {exc.distance:.4g}); "
            "the merged balls do not contain the singular set", point=exc.point)
    return DiscreteMap(bmesh, target, on_target)


# ---------------------------------------------------------------------------
# decomposition pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecomposeParams:
    delta: float | None = None          # detection threshold, default delta*
    lattice: LatticeSpec | None = None
    resolution: int | None = None       # bubble boundary mesh resolution
    net_separation: float | None = None  # default 2 rho (m=1); floored at 0.35 for m=2


@dataclass(frozen=True)
class DecompositionReport:
    balls: list
    boundary_maps: list
    degrees: list
    bubble_count: int
    gap_lambda: float
    rho: float
    net_count: int
    total_degree: object
    residual: object = None
    count_constant: float = field(default=math.nan)

    def __post_init__(self):
        for i in range(len(self.balls)):
            for j in range(i + 1, len(self.balls)):
                gap = ball_distance(POINCARE, self.balls[i].center, self.balls[j].center) \
                    - self.balls[i].radius - self.balls[j].radius
                if gap <= 0:
                    raise DecompositionError("merged balls are not pairwise disjoint")


def _extract_degree(f: DiscreteMap):
    """Degree of a sphere-target map, or the winding pair for the torus."""
    if f.target.kind == "torus":
        return topo.hurewicz_pair(f)
    if f.domain.dim == 1:
        return topo.degree_s1(f)
    raw, rounded = topo.degree_kronecker_s2(f)
    if abs(raw - rounded) > 0.2:
        raise DecompositionError(
            f"degree quantization failed: raw value {raw:.4f} is not near an integer")
    return rounded


def decompose(f: DiscreteMap, params: DecomposeParams | None = None) -> DecompositionReport:
    """Full free-homotopy bubble decomposition of a sphere-domain map.

    Singular detection, separated net, inflation, merging, boundary maps and
    degree extraction; for sphere targets the per-bubble degrees add up to
    the degree of the input map.
    """
    params = params or DecomposeParams()
    target = f.target
    if target.kind not in ("sphere", "torus"):
        raise ValueError("decompose supports sphere and Clifford-torus targets")
    m = f.domain.dim
    delta = params.delta if params.delta is not None else target.delta_star
    if delta > target.delta_star:
        raise ValueError("detection threshold must not exceed delta*")
    resolution = params.resolution if params.resolution is not None else (512 if m == 1 else 3)
    rho = target.delta_star / (2.0 * m * target.diameter)
    spacing, _ = default_lattice_spec(f, params.lattice)
    # the covering stays valid for any separation >= 2 rho; the floor at
    # m = 2 keeps the merge tractable where rho is very small
    separation = params.net_separation if params.net_separation is not None else (
        2.0 * rho if m == 1 else max(2.0 * rho, 0.35))
    if separation < 2.0 * rho:
        raise ValueError("net separation below the covering radius 2 rho")

    samples = detect_singular(f, delta, params.lattice)
    # worst violations first, lexicographic tiebreak, for a deterministic net
    samples.sort(key=lambda s: (-s.distance, tuple(s.point)))
    net = separated_net([s.point for s in samples], separation, POINCARE)
    balls = [Ball(POINCARE, p, separation + spacing) for p in net]
    merged = merge_balls(balls, POINCARE)

    field = ExtensionField(f)
    boundary_maps = [bubble_boundary_map(field, b, target, resolution) for b in merged]
    degrees = [_extract_degree(g) for g in boundary_maps]
    total = _extract_degree(f)

    from .energy import GapParams, gap_potential
    lam = gap_potential(f, GapParams(eps=delta / 2.0, p=1.0)).value

    return DecompositionReport(
        balls=merged, boundary_maps=boundary_maps, degrees=degrees,
        bubble_count=len(merged), gap_lambda=lam, rho=rho, net_count=len(net),
        total_degree=total,
        count_constant=(len(merged) / lam if lam > 0 else math.nan))


@dataclass(frozen=True)
class CountVsGap:
    bubble_count: int
    gap: float
    ratio: float
    vacuous: bool


def count_vs_gap(f: DiscreteMap, eps: float, report: DecompositionReport,
                 threads: int = 1) -> CountVsGap:
    """Bubble count against the indicator gap potential at level eps."""
    from .energy import GapParams, gap_potential

    lam = gap_potential(f, GapParams(eps=eps, p=0.0), threads=threads).value
    k = report.bubble_count
    if lam == 0.0:
        if k > 0:
            raise DecompositionError("bubbles present with vanishing gap potential")
        return CountVsGap(0, 0.0, math.nan, True)
    return CountVsGap(k, lam, k / lam, False)
