"""Integral functionals: fractional energies, gap potentials, scaling checks.

Every double integral is a weighted sum over distinct ordered vertex pairs,
evaluated in fixed row blocks so that results are deterministic for any
thread count; the quadrature error estimate is an honest half-resolution
recomputation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import quad

from .errors import ResolutionError
from .geom import SPHERE_MEASURE, PatchGrid, SphereMesh, TorusGrid, mercator
from .maps import DiscreteMap, MapEvaluator
from .util import deterministic_chunk_sum, deterministic_chunk_vecsum

_BLOCK_TARGET = 3_000_000  # entries per row block in pair sweeps


@dataclass(frozen=True)
class GapParams:
    """Truncation level, power and target-distance flavour of a gap potential.

    p = 0 is the indicator potential 1{d > eps}; mode picks geodesic target
    distance or the ambient chord |f(y) - f(x)|.
    """

    eps: float
    p: float
    mode: str = "geodesic"

    def __post_init__(self):
        if self.eps < 0 or self.p < 0:
            raise ValueError("eps and p must be nonnegative")
        if self.mode not in ("geodesic", "ambient"):
            raise ValueError("mode must be 'geodesic' or 'ambient'")
        if self.p == 0 and self.eps <= 0:
            raise ValueError("indicator potential needs eps > 0")


@dataclass(frozen=True)
class EnergyReport:
    value: float
    pair_count: int
    exclusion_radius: float
    quad_error: float
    tail_bound: float = 0.0

    def __post_init__(self):
        if self.value < -1e-12:
            raise ValueError("energies are nonnegative")


# ---------------------------------------------------------------------------
# pair sweep driver
# ---------------------------------------------------------------------------

def _domain_sq_dist(domain, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a[:, None, :] - b[None, :, :]
    if domain.kind == "torus":
        d -= np.round(d)
    return np.einsum("ijk,ijk->ij", d, d)


class _BlockCache:
    """Per-block shared quantities: domain kernel powers and target distances."""

    def __init__(self, target, dd_sq, block_vals, all_vals):
        self.target = target
        self.dd_sq = dd_sq
        self._bv = block_vals
        self._av = all_vals
        self._powers: dict[float, np.ndarray] = {}
        self._td: dict[str, np.ndarray] = {}

    def domain_power(self, expo: float) -> np.ndarray:
        """dd_sq ** (-expo) with the diagonal/zero entries suppressed."""
        if expo not in self._powers:
            with np.errstate(divide="ignore"):
                ker = self.dd_sq ** (-expo)
            self._powers[expo] = np.nan_to_num(ker, nan=0.0, posinf=0.0)
        return self._powers[expo]

    def target_distance(self, mode: str) -> np.ndarray:
        if mode not in self._td:
            if mode == "ambient":
                self._td[mode] = np.sqrt(_ambient_sq(self._bv, self._av))
            else:
                self._td[mode] = self.target.distance(
                    self._bv[:, None, :], self._av[None, :, :])
        return self._td[mode]


def _pair_sweep(domain, points, weights, values, target, kernels, threads=1):
    """Accumulate weighted double sums for several pair functionals at once.

    kernels: callables (cache: _BlockCache) -> block array; the cache shares
    pair distances across kernels.  Self-pairs are excluded.  Returns one
    float per kernel.
    """
    n = len(points)
    rows = max(32, min(2048, _BLOCK_TARGET // max(n, 1)))

    def chunk(i0, i1):
        cache = _BlockCache(target, _domain_sq_dist(domain, points[i0:i1], points),
                            values[i0:i1], values)
        idx = np.arange(i0, i1)
        rows_idx = np.arange(i1 - i0)
        out = np.empty(len(kernels))
        for k, kern in enumerate(kernels):
            contrib = kern(cache)
            contrib[rows_idx, idx] = 0.0
            out[k] = np.einsum("i,ij,j->", weights[i0:i1], contrib, weights)
        return out

    return deterministic_chunk_vecsum(n, chunk, len(kernels), threads=threads, rows=rows)


def _subsampled(domain, f):
    pts = domain.vertices[::2]
    w = domain.weights[::2] * (domain.weights.sum() / domain.weights[::2].sum())
    return pts, w, f.values[::2]


def _min_pair_gap(domain) -> float:
    """Distinct-pair gap of the quadrature; one block suffices on the
    (quasi-)uniform meshes used here."""
    pts = domain.vertices
    n = min(len(pts), 512)
    dd = _domain_sq_dist(domain, pts[:n], pts)
    dd[np.arange(n), np.arange(n)] = np.inf
    return math.sqrt(float(dd.min()))


def _ambient_sq(block_vals, all_vals):
    d = block_vals[:, None, :] - all_vals[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


# ---------------------------------------------------------------------------
# fractional and Dirichlet energies
# ---------------------------------------------------------------------------

def sobolev_energy(f: DiscreteMap, s: float, p: float, threads: int = 1) -> EnergyReport:
    """Fractional energy with kernel |f(y)-f(x)|^p / |y-x|^{m+sp}.

    Ambient chords on both sides, exactly as the functional is written;
    requires 0 < s < 1, p >= 1 and sp <= m + 1.
    """
    m = f.domain.dim
    if not (0.0 < s < 1.0 and p >= 1.0):
        raise ValueError("need s in (0,1) and p >= 1")
    if s * p > m + 1:
        raise ValueError("sp beyond m + 1: quadrature diverges meaninglessly")
    expo = (m + s * p) / 2.0

    def kern(cache: _BlockCache):
        return cache.target_distance("ambient") ** p * cache.domain_power(expo)

    dom = f.domain
    (full,) = _pair_sweep(dom, dom.vertices, dom.weights, f.values, f.target,
                          [kern], threads)
    spts, sw, svals = _subsampled(dom, f)
    (half,) = _pair_sweep(dom, spts, sw, svals, f.target, [kern], threads)
    n = dom.n_vertices
    return EnergyReport(full, n * (n - 1), _min_pair_gap(dom), abs(full - half))


def _lifted_increments(values: np.ndarray) -> np.ndarray:
    ang = np.arctan2(values[:, 1], values[:, 0])
    d = np.diff(np.concatenate([ang, ang[:1]]))
    return (d + math.pi) % (2 * math.pi) - math.pi


def dirichlet_energy(f: DiscreteMap, threads: int = 1) -> EnergyReport:
    """First-order energy at the conformal exponent p = m.

    m = 1: total variation of the lifted value; m = 2: summed squared
    affine gradients over triangles.
    """
    dom = f.domain
    m = dom.dim
    if m == 1:
        if f.target.kind == "sphere" and f.target.nu == 2:
            val = float(np.abs(_lifted_increments(f.values)).sum())
        else:
            rolled = np.roll(f.values, -1, axis=0)
            val = float(np.linalg.norm(rolled - f.values, axis=1).sum())
        return EnergyReport(val, dom.n_vertices, _min_pair_gap(dom), 0.0)
    if m == 2 and isinstance(dom, SphereMesh) and dom.simplices.size:
        tri = dom.simplices
        a, b, c = (dom.vertices[tri[:, i]] for i in range(3))
        va, vb, vc = (f.values[tri[:, i]] for i in range(3))
        e1 = b - a
        e2 = c - a
        g11 = np.einsum("ij,ij->i", e1, e1)
        g12 = np.einsum("ij,ij->i", e1, e2)
        g22 = np.einsum("ij,ij->i", e2, e2)
        det = g11 * g22 - g12 ** 2
        area = 0.5 * np.sqrt(np.maximum(det, 0.0))
        d1 = vb - va
        d2 = vc - va
        # |grad|_F^2 of the affine map from the first fundamental form
        s11 = np.einsum("ij,ij->i", d1, d1)
        s12 = np.einsum("ij,ij->i", d1, d2)
        s22 = np.einsum("ij,ij->i", d2, d2)
        grad_sq = (g22 * s11 - 2 * g12 * s12 + g11 * s22) / np.maximum(det, 1e-300)
        val = float(np.sum(grad_sq * area))
        return EnergyReport(val, len(tri), _min_pair_gap(dom), 0.0)
    raise ValueError("dirichlet_energy supports m = 1 and simplicial m = 2 only")


# ---------------------------------------------------------------------------
# gap potentials
# ---------------------------------------------------------------------------

def _gap_kernel(gp: GapParams, m: int):
    def kern(cache: _BlockCache):
        td = cache.target_distance(gp.mode)
        base = cache.domain_power(float(m))
        if gp.p == 0:
            return (td > gp.eps) * base
        return np.maximum(td - gp.eps, 0.0) ** gp.p * base
    return kern


def gap_potential_multi(f: DiscreteMap, gp_list, threads: int = 1):
    """Evaluate several gap potentials of one map in a single pair sweep."""
    dom = f.domain
    kernels = [_gap_kernel(gp, dom.dim) for gp in gp_list]
    full = _pair_sweep(dom, dom.vertices, dom.weights, f.values, f.target,
                       kernels, threads)
    spts, sw, svals = _subsampled(dom, f)
    half = _pair_sweep(dom, spts, sw, svals, f.target, kernels, threads)
    n = dom.n_vertices
    gap = _min_pair_gap(dom)
    return [EnergyReport(v, n * (n - 1), gap, abs(v - h))
            for v, h in zip(full, half)]


def gap_potential(f: DiscreteMap, gp: GapParams, threads: int = 1) -> EnergyReport:
    """Gap potential with kernel 1/|y-x|^{2m} over pairs with d > eps.

    p > 0 uses the truncated-power numerator (d - eps)_+^p; the domain
    kernel is chordal on spheres and geodesic on the flat torus.
    """
    return gap_potential_multi(f, [gp], threads)[0]


# ---------------------------------------------------------------------------
# cylinder form of the conformal fractional integral
# ---------------------------------------------------------------------------

def _chordal_lipschitz(f: DiscreteMap) -> float:
    dom = f.domain
    if isinstance(dom, SphereMesh) and dom.simplices.size:
        i, j = dom.simplices[:, 0], dom.simplices[:, 1]
    else:
        i = np.arange(dom.n_vertices)
        j = (i + 1) % dom.n_vertices
    dv = np.linalg.norm(f.values[i] - f.values[j], axis=1)
    dx = np.linalg.norm(np.asarray(dom.vertices)[i] - np.asarray(dom.vertices)[j], axis=1)
    ratio = dv[dx > 0] / dx[dx > 0]
    return float(ratio.max(initial=0.0)) * 1.2


def cylinder_energy(f: DiscreteMap, s: float, p: float, band: float,
                    n_axis: int = 256, n_circle: int = 64,
                    threads: int = 1) -> EnergyReport:
    """Fractional energy computed on the Mercator cylinder.

    Quadrature of d^p / ((2 sinh((t-s)/2))^2 + |w-z|^2)^m over the truncated
    cylinder |s| <= band; equals sobolev_energy(f, s, p) with sp = m up to
    quadrature error plus the reported tail bound.  The closed-form tail
    estimate requires s = 1/2 (so p = 2m).
    """
    dom = f.domain
    m = dom.dim
    if band <= 0:
        raise ValueError("band must be positive")
    if abs(s * p - m) > 1e-12:
        raise ValueError("cylinder form needs the conformal exponent sp = m")
    if abs(p - 2 * m) > 1e-12:
        raise ValueError("tail estimate implemented for s = 1/2 (p = 2m)")
    ev = MapEvaluator(f)

    if m == 1:
        circle_pts = np.array([[1.0], [-1.0]])
        circle_w = np.array([1.0, 1.0])
    else:
        ang = 2 * math.pi * (np.arange(n_circle) + 0.5) / n_circle
        circle_pts = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        circle_w = np.full(n_circle, 2 * math.pi / n_circle)

    ds = 2.0 * band / n_axis
    s_grid = -band + (np.arange(n_axis) + 0.5) * ds

    nodes_z = np.repeat(circle_pts, n_axis, axis=0)
    nodes_s = np.tile(s_grid, len(circle_pts))
    weights = np.repeat(circle_w, n_axis) * ds
    sphere_pts = np.concatenate([nodes_z / np.cosh(nodes_s)[:, None],
                                 np.tanh(nodes_s)[:, None]], axis=1)
    sphere_pts /= np.linalg.norm(sphere_pts, axis=1, keepdims=True)
    vals = ev(sphere_pts)

    n = len(nodes_z)

    def chunk(i0, i1):
        dz = nodes_z[i0:i1, None, :] - nodes_z[None, :, :]
        wz_sq = np.einsum("ijk,ijk->ij", dz, dz)
        sh = 2.0 * np.sinh((nodes_s[i0:i1, None] - nodes_s[None, :]) / 2.0)
        denom = (sh * sh + wz_sq) ** m
        dv = vals[i0:i1, None, :] - vals[None, :, :]
        num = np.einsum("ijk,ijk->ij", dv, dv) ** (p / 2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = num / denom
        out = np.nan_to_num(out, nan=0.0, posinf=0.0)
        idx = np.arange(i0, i1)
        out[np.arange(i1 - i0), idx] = 0.0
        return float(np.einsum("i,ij,j->", weights[i0:i1], out, weights))

    rows = max(32, min(2048, _BLOCK_TARGET // n))
    value = deterministic_chunk_sum(n, chunk, threads=threads, rows=rows)

    lip = _chordal_lipschitz(f)
    circle_measure = 2.0 if m == 1 else 2 * math.pi
    sech_m = lambda t: (1.0 / np.cosh(t)) ** m
    i_all, _ = quad(sech_m, -60, 60)
    i_band, _ = quad(sech_m, -band, band)
    tail = lip ** p * ((circle_measure * i_all) ** 2 - (circle_measure * i_band) ** 2)
    if value > 0 and tail > 0.1 * value:
        raise ResolutionError(
            f"band {band} too small: tail bound {tail:.3g} exceeds 10% of {value:.3g}")
    return EnergyReport(value, n * (n - 1), ds, 0.0, tail_bound=tail)


# ---------------------------------------------------------------------------
# scaling and comparison experiments
# ---------------------------------------------------------------------------

class HalvingResult(NamedTuple):
    j_eps: float
    j_half: float
    ratio: float
    bound: float
    passed: bool
    vacuous: bool


def halving_ratio(f: DiscreteMap, eps: float, p: float,
                  slack: float = 0.05, threads: int = 1) -> HalvingResult:
    """Compare the truncated potential at eps against the one at eps/2.

    On a convex flat domain the ratio is bounded by 2^{(p-1)_+ - (m-1)};
    pass/fail is reported against that bound with the given slack.  The
    sphere-domain variant carries an uncontrolled constant, so its ratio is
    informative rather than certified.
    """
    dom = f.domain
    if not isinstance(dom, (PatchGrid, SphereMesh)):
        raise ValueError("halving needs a convex flat patch or a sphere domain")
    m = dom.dim
    gps = [GapParams(eps=eps, p=p), GapParams(eps=eps / 2.0, p=p)]
    rep = gap_potential_multi(f, gps, threads)
    j_eps, j_half = rep[0].value, rep[1].value
    bound = 2.0 ** (max(p - 1.0, 0.0) - (m - 1.0))
    if j_half == 0.0:
        return HalvingResult(j_eps, j_half, math.nan, bound, True, True)
    ratio = j_eps / j_half
    return HalvingResult(j_eps, j_half, ratio, bound,
                         ratio <= bound * (1.0 + slack), False)


def resolvable_gap(f: DiscreteMap) -> float:
    """Smallest target-distance step the discretization resolves."""
    dom = f.domain
    if isinstance(dom, SphereMesh) and dom.simplices.size:
        i, j = dom.simplices[:, 0], dom.simplices[:, 1]
    else:
        i = np.arange(dom.n_vertices - 1)
        j = i + 1
    d = f.target.distance(f.values[i], f.values[j])
    pos = d[d > 1e-15]
    return float(np.median(pos)) if pos.size else 0.0


def scaling_curve(f: DiscreteMap, p: float, eps_list, threads: int = 1):
    """Table of (eps, J_p(eps)) suitable for log-log slope fitting."""
    eps_list = list(eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    res = resolvable_gap(f)
    if min(eps_list) <= 3.0 * res:
        raise ResolutionError(
            f"eps {min(eps_list):g} below 3x the resolvable gap {res:g}")
    gps = [GapParams(eps=e, p=p) for e in eps_list]
    reps = gap_potential_multi(f, gps, threads)
    return [(e, r.value) for e, r in zip(eps_list, reps)]


def fit_loglog_slope(table) -> float:
    x = np.log([row[0] for row in table])
    y = np.log([row[1] for row in table])
    return float(np.polyfit(x, y, 1)[0])


class CompareResult(NamedTuple):
    lhs: float
    rhs: float
    ratio: float
    vacuous: bool


def compare_pq(f: DiscreteMap, p: float, q: float, eps: float, eta: float,
               threads: int = 1) -> CompareResult:
    """J_p(eps) against eps^{p-q} J_q(eta eps).

    The comparison scales correctly only for p < m (and m >= 2); p >= m is
    rejected since the underlying estimate fails there.
    """
    m = f.domain.dim
    if m < 2:
        raise ValueError("comparison requires domain dimension m >= 2")
    if p >= m:
        raise ValueError("comparison fails for p >= m")
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1)")
    gps = [GapParams(eps=eps, p=p), GapParams(eps=eta * eps, p=q)]
    rep = gap_potential_multi(f, gps, threads)
    lhs = rep[0].value
    rhs = eps ** (p - q) * rep[1].value
    if rhs == 0.0:
        return CompareResult(lhs, rhs, math.nan, lhs == 0.0)
    return CompareResult(lhs, rhs, lhs / rhs, False)


def compare_pq_sweep(f: DiscreteMap, p: float, q: float, eps_list, eta: float,
                     threads: int = 1) -> list[tuple[float, CompareResult]]:
    """compare_pq over an eps sweep, all levels in one pair sweep."""
    m = f.domain.dim
    if m < 2:
        raise ValueError("comparison requires domain dimension m >= 2")
    if p >= m:
        raise ValueError("comparison fails for p >= m")
    gps = [GapParams(eps=e, p=p) for e in eps_list] + \
          [GapParams(eps=eta * e, p=q) for e in eps_list]
    rep = gap_potential_multi(f, gps, threads)
    out = []
    for i, e in enumerate(eps_list):
        lhs = rep[i].value
        rhs = e ** (p - q) * rep[len(eps_list) + i].value
        if rhs == 0.0:
            out.append((e, CompareResult(lhs, rhs, math.nan, lhs == 0.0)))
        else:
            out.append((e, CompareResult(lhs, rhs, lhs / rhs, False)))
    return out


def truncated_power_bound_check(p: float, q: float, eta: float, grid):
    """Sup over a grid of (s, t), s <= t, of (t-s)^p over its integral bound.

    The bound is the eta-truncated integral of (t-r)^q r^{p-q-1}; grid
    points with s = 0 and q >= p hit a nonintegrable singularity and are
    excluded (reported).
    """
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1)")
    sup = 0.0
    excluded = []
    for (s_val, t_val) in grid:
        if not 0.0 <= s_val <= t_val:
            raise ValueError("grid must satisfy 0 <= s <= t")
        if s_val == 0.0 and q >= p:
            excluded.append((s_val, t_val))
            continue
        if t_val == s_val:
            continue  # lhs = 0, ratio 0
        lhs = (t_val - s_val) ** p
        lo = eta * s_val
        integrand = lambda r: (t_val - r) ** q * r ** (p - q - 1.0)
        val, _ = quad(integrand, lo, t_val, limit=200)
        if val > 0:
            sup = max(sup, lhs / val)
    return sup, excluded
