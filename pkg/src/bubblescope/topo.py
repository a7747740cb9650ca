"""Topological invariants: Brouwer degree, Hurewicz pairing, Hopf family."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import quad

from .errors import ResolutionError
from .geom import SPHERE_MEASURE, SphereMesh, signed_spherical_area
from .maps import DiscreteMap, sphere_target
from .util import rng_stream

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# degree
# ---------------------------------------------------------------------------

def _angle_increments(values: np.ndarray) -> np.ndarray:
    """Principal-branch angle increments along a cyclically ordered S^1 map."""
    ang = np.arctan2(values[:, 1], values[:, 0])
    diff = np.diff(np.concatenate([ang, ang[:1]]))
    return (diff + math.pi) % TWO_PI - math.pi


def winding_real(values: np.ndarray) -> float:
    """Total lifted angle variation / 2 pi of a cyclically ordered S^1 map."""
    inc = _angle_increments(values)
    if np.max(np.abs(inc)) >= math.pi - 1e-12:
        raise ResolutionError("adjacent angular gap reached pi; mesh too coarse")
    return float(inc.sum() / TWO_PI)


def degree_s1(f: DiscreteMap, with_residual: bool = False):
    """Winding number of a circle map; exact integer with residual < 1e-9.

    Vertices are traversed in the stored cyclic order of the mesh.
    """
    raw = winding_real(f.values)
    k = int(round(raw))
    residual = abs(raw - k)
    if residual > 1e-9:
        raise ResolutionError(f"winding residual {residual:.3g} exceeds 1e-9")
    return (k, residual) if with_residual else k


def degree_kronecker_s2(f: DiscreteMap) -> tuple[float, int]:
    """Degree of an S^2 map by summing signed spherical areas of image triangles.

    The solid-angle sum telescopes over the closed image surface, so the raw
    value quantizes to an integer; (raw, rounded) is returned.
    """
    tri = f.domain.simplices
    if f.domain.dim != 2 or not tri.size:
        raise ValueError("degree_kronecker_s2 needs a simplicial S^2 mesh")
    a = f.values[tri[:, 0]]
    b = f.values[tri[:, 1]]
    c = f.values[tri[:, 2]]
    det = np.einsum("ij,ij->i", a, np.cross(b, c))
    denom = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) \
        + np.einsum("ij,ij->i", c, a)
    bad = (np.abs(det) < 1e-14) & (denom < 1e-9)
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise ValueError(f"degenerate image triangle at simplex {idx} "
                         "(antipodal vertex pair)")
    raw = float(np.sum(2.0 * np.arctan2(det, denom)) / (4.0 * math.pi))
    return raw, int(round(raw))


# ---------------------------------------------------------------------------
# Hurewicz pairing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FormSpec:
    """Closed test form: normalized sphere volume form or a torus angle form.

    tag "sphere_volume": degree = index = the sphere dimension, integral 1.
    tag "torus_angle": index in {1, 2} picks the circle factor; periods are
    reduced to winding integers.
    """

    tag: str
    index: int

    def __post_init__(self):
        if self.tag not in ("sphere_volume", "torus_angle"):
            raise ValueError(f"unknown form tag {self.tag!r}")
        if self.tag == "torus_angle" and self.index not in (1, 2):
            raise ValueError("torus angle form index must be 1 or 2")


def sphere_volume_form(n: int) -> FormSpec:
    return FormSpec("sphere_volume", n)


def torus_angle_form(index: int) -> FormSpec:
    return FormSpec("torus_angle", index)


def hurewicz_pairing(f: DiscreteMap, form: FormSpec):
    """Pairing of the pushed-forward fundamental class with a closed form.

    Volume forms reproduce the degree (raw real value); torus angle forms on
    circle maps give the winding integer of the chosen factor.
    """
    m = f.domain.dim
    if form.tag == "sphere_volume":
        if f.target.kind != "sphere" or form.index != m or f.target.n != m:
            raise ValueError("volume form degree must match domain and target dimension")
        if m == 1:
            return winding_real(f.values)
        if m == 2:
            return degree_kronecker_s2(f)[0]
        raise ValueError("volume-form pairing supported for m in {1, 2}")
    if f.target.kind != "torus":
        raise ValueError("angle forms pair with Clifford-torus maps")
    if m != 1:
        raise ValueError("angle forms have degree 1: domain must be S^1")
    pair = f.values[:, :2] if form.index == 1 else f.values[:, 2:]
    raw = winding_real(pair / np.linalg.norm(pair, axis=1, keepdims=True))
    k = int(round(raw))
    if abs(raw - k) > 1e-9:
        raise ResolutionError(f"angle-form period residual {abs(raw - k):.3g}")
    return k


def hurewicz_pair(f: DiscreteMap) -> tuple[int, int]:
    """Both factor windings of a circle map into the Clifford torus."""
    return (hurewicz_pairing(f, torus_angle_form(1)),
            hurewicz_pairing(f, torus_angle_form(2)))


def hurewicz_norm(f: DiscreteMap) -> float:
    """|Hur(f)|: |degree| for sphere targets, pair norm for the torus."""
    if f.target.kind == "sphere":
        return abs(hurewicz_pairing(f, sphere_volume_form(f.domain.dim)))
    k1, k2 = hurewicz_pair(f)
    return math.hypot(k1, k2)


def hurewicz_gap_check(family, eps: float, scaled: bool = False, threads: int = 1):
    """Rows (|Hur|, gap potential, ratio) across a family of maps.

    Unscaled: the truncated-power potential (p = 1) at level eps; scaled:
    eps^m times the indicator potential, the optimal-scaling variant
    (meaningful for m >= 2).
    """
    from .energy import GapParams, gap_potential

    rows = []
    for f in family:
        hur = hurewicz_norm(f)
        m = f.domain.dim
        if scaled:
            gap = eps ** m * gap_potential(
                f, GapParams(eps=eps, p=0.0), threads=threads).value
        else:
            gap = gap_potential(f, GapParams(eps=eps, p=1.0), threads=threads).value
        ratio = hur / gap if gap > 0 else math.nan
        rows.append((hur, gap, ratio))
    return rows


# ---------------------------------------------------------------------------
# Hopf family
# ---------------------------------------------------------------------------

def hopf_value(points: np.ndarray, k: int = 1) -> np.ndarray:
    """Evaluate the longitude-multiplied Hopf map at unit points of S^3.

    The fibration sends (z1, z2) to (2 Re(z1 conj(z2)), 2 Im(z1 conj(z2)),
    |z1|^2 - |z2|^2); the longitude of the image is then multiplied by k.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    x1, y1, x2, y2 = p.T
    re = x1 * x2 + y1 * y2
    im = y1 * x2 - x1 * y2
    base = np.stack([2 * re, 2 * im, x1 ** 2 + y1 ** 2 - x2 ** 2 - y2 ** 2], axis=1)
    if k == 1:
        return base
    rho = np.hypot(base[:, 0], base[:, 1])
    phi = np.arctan2(base[:, 1], base[:, 0])
    return np.stack([rho * np.cos(k * phi), rho * np.sin(k * phi), base[:, 2]], axis=1)


class HopfMap(NamedTuple):
    map: DiscreteMap
    nominal_hopf: int  # carried by construction, never computed from samples


def hopf_family(k: int, mesh: SphereMesh) -> HopfMap:
    """Composition of the Hopf fibration with the degree-k longitude map.

    The nominal Hopf invariant k^2 is construction metadata.
    """
    if mesh.dim != 3:
        raise ValueError("hopf_family needs an S^3 mesh")
    vals = hopf_value(mesh.vertices, k)
    return HopfMap(DiscreteMap(mesh, sphere_target(2), vals), k * k)


def _mc_gap_potential_s3(k: int, eps: float, samples: int, seed: int, stream: int):
    """Monte Carlo indicator gap potential of the Hopf-family map f_k on S^3.

    Pairs are stratified by the distance kernel: the angular separation is
    drawn from the exact kernel density above the Lipschitz cutoff, so the
    singular kernel never enters the variance.
    """
    rng = rng_stream(seed, stream)
    # empirical chordal Lipschitz bound of f_k, with safety margin
    probe = rng.normal(size=(4000, 4))
    probe /= np.linalg.norm(probe, axis=1, keepdims=True)
    step = rng.normal(size=probe.shape)
    step -= np.einsum("ij,ij->i", step, probe)[:, None] * probe
    step /= np.linalg.norm(step, axis=1, keepdims=True)
    near = probe * math.cos(1e-4) + step * math.sin(1e-4)
    lip = float(np.max(np.linalg.norm(hopf_value(near, k) - hopf_value(probe, k), axis=1))
                / (2 * math.sin(5e-5)))
    lip *= 1.3
    alpha_min = 2.0 * math.asin(min(1.0, eps / (2.0 * lip)))

    def kernel(alpha):
        return np.sin(alpha) ** 2 / (2.0 * np.sin(alpha / 2.0)) ** 6

    mass, _ = quad(kernel, alpha_min, math.pi)
    z_total = SPHERE_MEASURE[3] * SPHERE_MEASURE[2] * mass

    grid = np.linspace(alpha_min, math.pi, 4097)
    dens = kernel(grid)
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(grid))])
    cdf /= cdf[-1]

    batch = 100_000
    hits = []
    done = 0
    while done < samples:
        nb = min(batch, samples - done)
        x = rng.normal(size=(nb, 4))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        u = rng.normal(size=(nb, 4))
        u -= np.einsum("ij,ij->i", u, x)[:, None] * x
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        alpha = np.interp(rng.random(nb), cdf, grid)
        y = x * np.cos(alpha)[:, None] + u * np.sin(alpha)[:, None]
        gap = np.linalg.norm(hopf_value(y, k) - hopf_value(x, k), axis=1) > eps
        hits.append(gap.mean())
        done += nb
    hits = np.array(hits)
    return z_total * float(hits.mean()), z_total * hits


def hopf_growth_check(k_list, eps: float, samples: int, seed: int = 0):
    """Fit the growth exponent of the gap potential across the Hopf family.

    Returns (exponent, bootstrap CI width, table of (k, J, nominal deg_H)).
    The fit is log J against log k; the nominal invariants grow as k^2, so
    the theoretical ceiling for the exponent is 2 - 1/n = 1.5 here.
    """
    if len(k_list) < 2:
        raise ValueError("insufficient points: need at least two k values to fit")
    if samples < 10 ** 6:
        raise ValueError("sample count too low: need >= 1e6 pairs")
    table = []
    batch_tables = []
    for i, k in enumerate(k_list):
        val, batches = _mc_gap_potential_s3(k, eps, samples, seed, stream=i)
        table.append((k, val, k * k))
        batch_tables.append(batches)
    logk = np.log([row[0] for row in table])
    exponent = float(np.polyfit(logk, np.log([row[1] for row in table]), 1)[0])

    rng = rng_stream(seed, 10_000)
    boots = []
    nb = len(batch_tables[0])
    for _ in range(200):
        idx = rng.integers(0, nb, size=nb)
        vals = [max(bt[idx].mean(), 1e-300) for bt in batch_tables]
        boots.append(np.polyfit(logk, np.log(vals), 1)[0])
    lo, hi = np.percentile(boots, [2.5, 97.5])
    ci_width = float(hi - lo)
    if ci_width > 0.3:
        raise ValueError(f"sample count too low: bootstrap CI width {ci_width:.3f} > 0.3")
    return exponent, ci_width, table
