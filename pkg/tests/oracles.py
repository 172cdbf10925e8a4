"""Independent reference computations used to freeze expected values.

Nothing here imports the package: polygon clipping, closed-form densities and brute-force
lattice enumeration are written from scratch so they can disagree with it.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate


def shoelace(poly) -> float:
    P = np.asarray(poly, dtype=float)
    if len(P) < 3:
        return 0.0
    x, y = P[:, 0], P[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def _ccw(poly):
    P = [tuple(map(float, p)) for p in poly]
    s = sum(P[i][0] * P[(i + 1) % len(P)][1] - P[(i + 1) % len(P)][0] * P[i][1]
            for i in range(len(P)))
    return P if s > 0 else P[::-1]


def clip_polygon(subject, clipper):
    """Sutherland-Hodgman clip of ``subject`` by the convex ``clipper`` (both vertex lists)."""
    out = _ccw(subject)
    C = _ccw(clipper)
    for i in range(len(C)):
        a, b = C[i], C[(i + 1) % len(C)]

        def side(p):
            return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])

        inp, out = out, []
        if not inp:
            break
        for j in range(len(inp)):
            p, q = inp[j - 1], inp[j]
            sp, sq = side(p), side(q)
            if sq >= 0:
                if sp < 0:
                    t = sp / (sp - sq)
                    out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
                out.append(q)
            elif sp >= 0:
                t = sp / (sp - sq)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def reflect_overlap_area(poly, x) -> float:
    """``|K ∩ (x - K)|`` for a convex polygon given by vertices."""
    P = np.asarray(poly, dtype=float)
    mirror = np.asarray(x, dtype=float) - P
    return shoelace(clip_polygon(P, mirror))


def dense_grid_delta(poly, coarse: int = 50, refine: int = 3):
    """Max of the overlap ratio over a coarse grid of x, then ``refine`` zooms by 10."""
    P = np.asarray(poly, dtype=float)
    area = shoelace(P)
    lo, hi = 2 * P.min(axis=0), 2 * P.max(axis=0)
    step = float(np.max(hi - lo)) / coarse
    xs, ys = np.arange(lo[0], hi[0] + step, step), np.arange(lo[1], hi[1] + step, step)
    best = (-1.0, None)
    for level in range(refine + 1):
        for x in xs:
            for y in ys:
                v = reflect_overlap_area(P, (x, y)) / area
                if v > best[0]:
                    best = (v, (float(x), float(y)))
        step /= 10
        xs = best[1][0] + step * np.arange(-10, 11)
        ys = best[1][1] + step * np.arange(-10, 11)
    return best


def irwin_hall_mean_density(n: int, z: np.ndarray) -> np.ndarray:
    """Density of the mean of ``n`` iid U[0,1] variables."""
    z = np.asarray(z, dtype=float)
    x = n * z
    out = np.zeros_like(x)
    for j in range(n + 1):
        out += (-1) ** j * math.comb(n, j) * np.where(x - j > 0, (x - j), 0.0) ** (n - 1)
    dens = out / math.factorial(n - 1) * n
    return np.where((z >= 0) & (z <= 1), dens, 0.0)


def ball_thin_shell(d: int) -> float:
    """``E(|X| - sqrt d)^2`` for X uniform in the identity-covariance ball, by radial quadrature."""
    rho = math.sqrt(d + 2)

    def integrand(r):
        return (r - math.sqrt(d)) ** 2 * d * r ** (d - 1) / rho**d

    val, _ = integrate.quad(integrand, 0.0, rho, epsabs=1e-13)
    return val


def brute_lattice_points(A, b, radius: int, tol: float = 1e-9):
    """Integer points of ``{Ay <= b}`` inside ``[-radius, radius]^d`` (interior, boundary)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    d = A.shape[1]
    inner, bdry = set(), set()
    for z in itertools.product(range(-radius, radius + 1), repeat=d):
        s = max(float(np.dot(A[i], z) - b[i]) / float(np.linalg.norm(A[i])) for i in range(len(b)))
        if s < -tol:
            inner.add(z)
        elif s <= tol:
            bdry.add(z)
    return inner, bdry


def triangle_covariance(V) -> np.ndarray:
    """Covariance of the uniform law on a triangle: ``(1/36) sum_{i<j} (v_i - v_j)(v_i - v_j)^T``."""
    V = np.asarray(V, dtype=float)
    C = np.zeros((2, 2))
    for i, j in itertools.combinations(range(3), 2):
        e = V[i] - V[j]
        C += np.outer(e, e)
    return C / 36.0


def brute_ball_lattice_points(d: int, radius: float):
    """Integer points of the origin ball by exact squared norms (interior, boundary)."""
    r2 = radius * radius
    R = int(math.ceil(radius))
    inner, bdry = set(), set()
    for z in itertools.product(range(-R, R + 1), repeat=d):
        n2 = sum(c * c for c in z)
        if n2 < r2:
            inner.add(z)
        elif n2 == r2:
            bdry.add(z)
    return inner, bdry
