"""Sphere and ball quadrature rules used by all radial functionals.

2D spheres use the angular trapezoid rule (node count grows with the physical
radius over the grid spacing); 3D uses a fixed-order Gauss-Legendre (polar)
x trapezoid (azimuthal) product rule; 1D spheres are point pairs with
counting measure. Ball rules stack sphere rules on radial Gauss-Legendre
nodes, except the identity checker which wants a composite trapezoid so its
error is honestly O(h^2) for any integrand.
"""

from __future__ import annotations

import numpy as np

ANGULAR_MIN = 64
POLAR_MIN = 16
ANGULAR_REF = 1024  # analytic fields: no grid floor, fixed reference order


def unit_ball_volume(dim: int) -> float:
    return {1: 2.0, 2: np.pi, 3: 4.0 * np.pi / 3.0}[dim]


def angular_count(radius: float, h: float) -> int:
    """Spec rule: max(64, ceil(2 pi r / h)) nodes on a 2D circle."""
    if h <= 0:
        return ANGULAR_REF
    return int(max(ANGULAR_MIN, np.ceil(2.0 * np.pi * radius / h)))


def sphere_rule(dim: int, radius: float, h: float = 0.0, n_angular: int | None = None):
    """Quadrature (points, weights) for the sphere of given radius at 0.

    Weights sum to the surface measure: 2 (dim 1), 2 pi r (dim 2),
    4 pi r^2 (dim 3).
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if dim == 1:
        pts = np.array([[-radius], [radius]])
        return pts, np.ones(2)
    if dim == 2:
        na = n_angular or angular_count(radius, h)
        theta = 2.0 * np.pi * np.arange(na) / na
        pts = radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return pts, np.full(na, 2.0 * np.pi * radius / na)
    # dim == 3: product rule, exact for high-degree spherical polynomials
    if n_angular is not None:
        nc = max(POLAR_MIN, n_angular // 2)
    elif h > 0:
        nc = int(max(POLAR_MIN, np.ceil(np.pi * radius / h)))
    else:
        nc = 48
    nphi = 2 * nc
    c, wc = np.polynomial.legendre.leggauss(nc)
    phi = 2.0 * np.pi * np.arange(nphi) / nphi
    s = np.sqrt(1.0 - c**2)
    cg, pg = np.meshgrid(np.arange(nc), np.arange(nphi), indexing="ij")
    x = s[cg] * np.cos(phi[pg])
    y = s[cg] * np.sin(phi[pg])
    z = c[cg] * np.ones_like(x)
    pts = radius * np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    w = (radius**2 * (2.0 * np.pi / nphi)) * np.repeat(wc, nphi)
    return pts, w


def gauss_radial(r_lo: float, r_hi: float, n: int):
    t, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (r_hi + r_lo), 0.5 * (r_hi - r_lo)
    return mid + half * t, half * w


def ball_rule(dim: int, radius: float, h: float = 0.0, n_angular: int | None = None,
              n_radial: int | None = None):
    """(points, weights) for the ball of given radius at 0.

    Radial direction: Gauss-Legendre with enough nodes to resolve grid-scale
    features (about 2.5 per cell width); angular: the sphere rule per shell.
    """
    if n_radial is None:
        if h > 0:
            n_radial = int(min(400, max(16, np.ceil(2.5 * radius / h))))
        else:
            n_radial = 48
    tau, w_tau = gauss_radial(0.0, radius, n_radial)
    all_pts, all_w = [], []
    for t, wt in zip(tau, w_tau):
        pts, w = sphere_rule(dim, t, h=h, n_angular=n_angular)
        all_pts.append(pts)
        all_w.append(w * wt)
    return np.concatenate(all_pts), np.concatenate(all_w)


def ball_rule_trapezoid(dim: int, radius: float, n_radial: int, n_angular: int):
    """Composite-trapezoid radial x fixed angular rule; error O(n_radial^-2)."""
    tau = np.linspace(0.0, radius, n_radial + 1)
    w_tau = np.full(n_radial + 1, radius / n_radial)
    w_tau[0] *= 0.5
    w_tau[-1] *= 0.5
    all_pts, all_w = [], []
    for t, wt in zip(tau[1:], w_tau[1:]):  # the t=0 sphere has zero measure
        pts, w = sphere_rule(dim, t, n_angular=n_angular)
        all_pts.append(pts)
        all_w.append(w * wt)
    return np.concatenate(all_pts), np.concatenate(all_w)


def radius_ladder(r_max: float, r_min: float, ratio: float = 2.0 ** (-0.25)) -> np.ndarray:
    """Geometric ladder r_max * ratio^k, stopping at r_min; ascending order."""
    if not 0 < r_min <= r_max:
        raise ValueError(f"need 0 < r_min <= r_max, got ({r_min}, {r_max})")
    radii = []
    r = r_max
    while r >= r_min * (1.0 - 1e-12):
        radii.append(r)
        r *= ratio
    return np.array(radii[::-1])
