"""Convex body representations, membership/gauge predicates and exact volumes.

Every body is immutable after construction.  Point arguments may be a single
``(d,)`` vector or an ``(n, d)`` stack; batch methods always return arrays.
"""

from __future__ import annotations

import enum
import itertools
import math
from functools import cached_property

import numpy as np
from scipy import optimize, spatial, special

# Rows whose normals agree to this many decimals are merged (smallest offset wins).
ROW_DECIMALS = 10
VERTEX_MERGE_TOL = 1e-9
FACET_TOL = 1e-9
MAX_EXACT_DIM = 4


class GeometryError(ValueError):
    """Invalid geometric input (dimension mismatch, singular map, ...)."""


class DegenerateBodyError(GeometryError):
    """The body is empty or has no interior."""


class UnsupportedVolumeError(GeometryError):
    """No exact volume path for this body; use Monte Carlo volume instead."""


class Location(enum.Enum):
    INSIDE = "inside"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise GeometryError("non-finite coordinates")
    a.setflags(write=False)
    return a


def _as_points(points, d: int) -> tuple[np.ndarray, bool]:
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] != d:
        raise GeometryError(f"dimension mismatch: expected {d}, got {p.shape[1]}")
    return p, single


class AABB:
    """Axis-aligned box ``[lower, upper]``."""

    def __init__(self, lower, upper):
        self.lower = _frozen(lower)
        self.upper = _frozen(upper)
        if np.any(self.lower > self.upper):
            raise DegenerateBodyError("empty bounding box")

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def intersect(self, other: "AABB") -> "AABB":
        return AABB(np.maximum(self.lower, other.lower), np.minimum(self.upper, other.upper))

    def __repr__(self):
        return f"AABB({self.lower.tolist()}, {self.upper.tolist()})"


class ConvexBody:
    """Base class.  Subclasses provide ``slack`` (negative inside, positive outside)."""

    dim: int

    # -- membership ----------------------------------------------------------------
    def slack(self, points) -> np.ndarray:
        raise NotImplementedError

    def inside(self, points, tol: float = 0.0) -> np.ndarray:
        p, _ = _as_points(points, self.dim)
        return self.slack(p) <= tol

    def contains(self, p, tol: float = 0.0) -> Location:
        p, _ = _as_points(p, self.dim)
        if p.shape[0] != 1:
            raise GeometryError("contains() takes a single point; use inside() for batches")
        s = float(self.slack(p)[0])
        if s < -tol:
            return Location.INSIDE
        if s <= tol:
            return Location.BOUNDARY
        return Location.OUTSIDE

    # -- support / chords ------------------------------------------------------------
    def support(self, u) -> float:
        raise NotImplementedError

    def chord(self, p: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Parameter interval ``[lo, hi]`` of ``{s : p + s*u in body}`` per row."""
        return _bisect_chord(self, p, u)

    def bounding_box(self) -> AABB:
        eye = np.eye(self.dim)
        hi = [self.support(e) for e in eye]
        lo = [-self.support(-e) for e in eye]
        return AABB(lo, hi)

    def interior_point(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def degenerate(self) -> bool:
        try:
            x = self.interior_point()
        except DegenerateBodyError:
            return True
        return not bool(self.slack(x[None, :])[0] < 0)

    def as_hpolytope(self) -> "HPolytope | None":
        return None

    # -- gauge ----------------------------------------------------------------------
    def gauge(self, points) -> np.ndarray | float:
        p, single = _as_points(points, self.dim)
        _require_origin_interior(self)
        g = _bisect_gauge(self, p)
        return float(g[0]) if single else g


def _require_origin_interior(body: ConvexBody) -> None:
    if not body.slack(np.zeros((1, body.dim)))[0] < -1e-12:
        raise GeometryError("gauge requires the origin in the interior of the body")


def _bisect_gauge(body: ConvexBody, p: np.ndarray, iters: int = 80) -> np.ndarray:
    n = p.shape[0]
    hi = np.ones(n)
    for _ in range(200):
        out = ~body.inside(p / hi[:, None])
        if not out.any():
            break
        hi[out] *= 2.0
    lo = np.zeros(n)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        safe = np.where(mid > 0, mid, 1.0)
        ok = body.inside(p / safe[:, None]) & (mid > 0)
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    g = hi
    g[np.all(p == 0, axis=1)] = 0.0
    return g


def _bisect_chord(body: ConvexBody, p: np.ndarray, u: np.ndarray, iters: int = 60):
    # p is assumed inside; bracket each end by doubling then bisect.
    def one_side(sign):
        lo = np.zeros(p.shape[0])
        hi = np.ones(p.shape[0])
        for _ in range(200):
            ok = body.inside(p + sign * hi[:, None] * u)
            if not ok.any():
                break
            lo = np.where(ok, hi, lo)
            hi = np.where(ok, 2 * hi, hi)
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            ok = body.inside(p + sign * mid[:, None] * u)
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        return lo

    return -one_side(-1.0), one_side(1.0)


# ---------------------------------------------------------------------------------
# Polytopes
# ---------------------------------------------------------------------------------


class HPolytope(ConvexBody):
    """``{y : A y <= b}`` with unit-norm rows, duplicate rows merged, rows sorted."""

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise GeometryError("A and b have different row counts")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise GeometryError("non-finite coordinates")
        self.dim = A.shape[1]
        norms = np.linalg.norm(A, axis=1)
        null = norms < 1e-12
        # 0 <= b_i is vacuous, 0 <= negative b_i is infeasible
        self._infeasible = bool(np.any(b[null] < -1e-12))
        A, b, norms = A[~null], b[~null], norms[~null]
        A = A / norms[:, None]
        b = b / norms
        key = np.round(A, ROW_DECIMALS) + 0.0
        uniq, inverse = np.unique(key, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        rows, offs = [], []
        for g in range(uniq.shape[0]):
            members = np.flatnonzero(inverse == g)
            best = members[np.argmin(b[members])]
            rows.append(A[best])
            offs.append(b[best])
        self.A = _frozen(np.array(rows).reshape(-1, self.dim))
        self.b = _frozen(np.array(offs))

    def __repr__(self):
        return f"HPolytope(d={self.dim}, m={self.A.shape[0]})"

    def slack(self, points) -> np.ndarray:
        p, _ = _as_points(points, self.dim)
        if self._infeasible:
            return np.full(p.shape[0], np.inf)
        if self.A.shape[0] == 0:
            return np.full(p.shape[0], -np.inf)
        return np.max(p @ self.A.T - self.b, axis=1)

    def as_hpolytope(self) -> "HPolytope":
        return self

    @cached_property
    def chebyshev(self) -> tuple[np.ndarray, float]:
        if self._infeasible:
            return np.zeros(self.dim), -np.inf
        d = self.dim
        c = np.zeros(d + 1)
        c[-1] = -1.0
        A_ub = np.hstack([self.A, np.ones((self.A.shape[0], 1))])
        res = optimize.linprog(c, A_ub=A_ub, b_ub=self.b,
                               bounds=[(None, None)] * d + [(0, None)], method="highs")
        if res.status == 3:
            raise GeometryError("unbounded polyhedron")
        if res.status != 0:
            return np.zeros(d), -np.inf
        return np.asarray(res.x[:d]), float(res.x[-1])

    def interior_point(self) -> np.ndarray:
        x, r = self.chebyshev
        if not r > 1e-12:
            raise DegenerateBodyError("polytope has empty interior")
        return x

    def support(self, u) -> float:
        u = np.asarray(u, dtype=float)
        res = optimize.linprog(-u, A_ub=self.A, b_ub=self.b,
                               bounds=[(None, None)] * self.dim, method="highs")
        if res.status == 3:
            raise GeometryError("unbounded polyhedron")
        if res.status != 0:
            raise DegenerateBodyError("empty polytope")
        return float(-res.fun)

    def chord(self, p, u):
        Au = u @ self.A.T
        gap = self.b - p @ self.A.T
        with np.errstate(divide="ignore", invalid="ignore"):
            r = gap / Au
        hi = np.where(Au > 1e-15, r, np.inf).min(axis=1)
        lo = np.where(Au < -1e-15, r, -np.inf).max(axis=1)
        return lo, hi

    def gauge(self, points):
        p, single = _as_points(points, self.dim)
        _require_origin_interior(self)
        g = np.maximum(0.0, np.max((p @ self.A.T) / self.b, axis=1))
        return float(g[0]) if single else g

    def translate(self, v) -> "HPolytope":
        v = np.asarray(v, dtype=float)
        return HPolytope(self.A, self.b + self.A @ v)

    @cached_property
    def vertices(self) -> np.ndarray:
        return enumerate_vertices(self.A, self.b)


class VPolytope(ConvexBody):
    """Convex hull of a finite point set."""

    def __init__(self, vertices):
        self.points = _frozen(np.atleast_2d(vertices))
        self.dim = self.points.shape[1]

    def __repr__(self):
        return f"VPolytope(d={self.dim}, n={self.points.shape[0]})"

    @cached_property
    def _hrep(self) -> HPolytope:
        P = self.points
        if self.dim == 1:
            return HPolytope([[1.0], [-1.0]], [P.max(), -P.min()])
        try:
            hull = spatial.ConvexHull(P)
        except spatial.QhullError as exc:
            raise DegenerateBodyError(f"V-polytope has empty interior: {exc}") from None
        eq = hull.equations
        return HPolytope(eq[:, :-1], -eq[:, -1])

    def as_hpolytope(self) -> HPolytope:
        return self._hrep

    def slack(self, points):
        return self._hrep.slack(points)

    def contains(self, p, tol: float = 0.0) -> Location:
        """Convex-combination LP decides in/out; the facet form separates interior from boundary."""
        p, _ = _as_points(p, self.dim)
        p = p[0]
        V = self.points
        n = V.shape[0]
        A_eq = np.vstack([V.T, np.ones((1, n))])
        b_eq = np.append(p, 1.0)
        # minimise total residual |A_eq w - b_eq| with w >= 0
        k = A_eq.shape[0]
        c = np.concatenate([np.zeros(n), np.ones(2 * k)])
        A = np.hstack([A_eq, np.eye(k), -np.eye(k)])
        res = optimize.linprog(c, A_eq=A, b_eq=b_eq, bounds=[(0, None)] * (n + 2 * k),
                               method="highs")
        if res.status != 0 or res.fun > max(1e-9, tol):
            return Location.OUTSIDE
        s = float(self._hrep.slack(p[None, :])[0])
        return Location.INSIDE if s < -tol else Location.BOUNDARY

    def support(self, u) -> float:
        return float(np.max(self.points @ np.asarray(u, dtype=float)))

    def bounding_box(self) -> AABB:
        return AABB(self.points.min(axis=0), self.points.max(axis=0))

    def chord(self, p, u):
        return self._hrep.chord(p, u)

    def interior_point(self) -> np.ndarray:
        self._hrep.interior_point()
        return self.points.mean(axis=0)

    def gauge(self, points):
        return self._hrep.gauge(points)

    @property
    def vertices(self) -> np.ndarray:
        return self._hrep.vertices


def enumerate_vertices(A: np.ndarray, b: np.ndarray, tol: float = VERTEX_MERGE_TOL) -> np.ndarray:
    """All vertices of ``{A y <= b}`` by intersecting every d-subset of facets."""
    m, d = A.shape
    if d > MAX_EXACT_DIM:
        raise UnsupportedVolumeError(f"vertex enumeration limited to d <= {MAX_EXACT_DIM}; "
                                     "use Monte Carlo volume")
    if m < d + 1:
        return np.zeros((0, d))
    combos = np.array(list(itertools.combinations(range(m), d)), dtype=int)
    found = []
    for chunk in np.array_split(combos, max(1, len(combos) // 50000 + 1)):
        As = A[chunk]
        bs = b[chunk]
        det = np.linalg.det(As)
        ok = np.abs(det) > 1e-12
        if not ok.any():
            continue
        X = np.linalg.solve(As[ok], bs[ok][..., None])[..., 0]
        feas = np.all(X @ A.T <= b + FACET_TOL * (1.0 + np.abs(b)), axis=1)
        found.append(X[feas])
    if not found:
        return np.zeros((0, d))
    X = np.vstack(found)
    return _merge_points(X, tol)


def _merge_points(X: np.ndarray, tol: float) -> np.ndarray:
    if X.shape[0] == 0:
        return X
    order = np.lexsort(X.T[::-1])
    X = X[order]
    keep: list[np.ndarray] = []
    for x in X:
        if not any(np.max(np.abs(x - y)) <= tol for y in keep):
            keep.append(x)
    return np.array(keep)


def _affine_rank(V: np.ndarray) -> int:
    if V.shape[0] < 2:
        return 0
    s = np.linalg.svd(V[1:] - V[0], compute_uv=False)
    return int(np.sum(s > 1e-10 * max(1.0, s[0])))


def _hyperplane_basis(a: np.ndarray) -> np.ndarray:
    """Orthonormal basis (d x d-1) of the hyperplane orthogonal to unit vector a."""
    _, _, vt = np.linalg.svd(a[None, :])
    return vt[1:].T


def _fan_simplices(A: np.ndarray, b: np.ndarray, V: np.ndarray) -> list[np.ndarray]:
    """Triangulate a full-dimensional polytope by coning from its vertex centroid.

    Facets are triangulated recursively in their own affine hulls.  Each simplex is a
    ``(dim+1, dim)`` array of vertices.
    """
    dim = V.shape[1]
    if dim == 1:
        return [np.array([[V[:, 0].min()], [V[:, 0].max()]])]
    c = V.mean(axis=0)
    if dim == 2:
        # polygon: vertices in angular order around the centroid
        order = np.argsort(np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0]), kind="stable")
        W = V[order]
        return [np.vstack([c, W[i], W[(i + 1) % len(W)]]) for i in range(len(W))]
    out = []
    for i in range(A.shape[0]):
        on = np.abs(V @ A[i] - b[i]) <= FACET_TOL * (1.0 + abs(b[i]))
        Vf = V[on]
        if Vf.shape[0] < dim or _affine_rank(Vf) < dim - 1:
            continue
        U = _hyperplane_basis(A[i])
        p0 = b[i] * A[i]
        Y = (Vf - p0) @ U
        others = np.arange(A.shape[0]) != i
        A2 = A[others] @ U
        b2 = b[others] - A[others] @ p0
        keep = np.linalg.norm(A2, axis=1) > 1e-12
        n2 = np.linalg.norm(A2[keep], axis=1)
        A2 = A2[keep] / n2[:, None]
        b2 = b2[keep] / n2
        for s in _fan_simplices(A2, b2, Y):
            out.append(np.vstack([c, p0 + s @ U.T]))
    return out


def _simplex_stats(simplices: list[np.ndarray]) -> tuple[float, np.ndarray, np.ndarray]:
    """Total volume, centroid and raw second moment matrix of a union of simplices."""
    d = simplices[0].shape[1]
    S = np.array(simplices)
    vols = np.abs(np.linalg.det(S[:, 1:] - S[:, :1])) / math.factorial(d)
    total = float(vols.sum())
    if total <= 0:
        return 0.0, np.zeros(d), np.zeros((d, d))
    sums = S.sum(axis=1)
    means = sums / (d + 1)
    outer = np.einsum("kvi,kvj->kij", S, S) + np.einsum("ki,kj->kij", sums, sums)
    second = outer / ((d + 1) * (d + 2))
    mean = (vols[:, None] * means).sum(axis=0) / total
    raw = (vols[:, None, None] * second).sum(axis=0) / total
    return total, mean, raw


def polytope_simplices(P: HPolytope) -> list[np.ndarray]:
    V = P.vertices
    if V.shape[0] <= P.dim or _affine_rank(V) < P.dim:
        return []
    return _fan_simplices(np.asarray(P.A), np.asarray(P.b), V)


# ---------------------------------------------------------------------------------
# Smooth bodies
# ---------------------------------------------------------------------------------


def ball_volume(d: int, radius: float = 1.0) -> float:
    return math.pi ** (d / 2) * radius**d / math.gamma(d / 2 + 1)


class Ball(ConvexBody):
    def __init__(self, center, radius: float):
        self.center = _frozen(np.atleast_1d(center))
        self.radius = float(radius)
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise GeometryError("radius must be positive and finite")
        self.dim = self.center.shape[0]

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"

    def slack(self, points):
        p, _ = _as_points(points, self.dim)
        return np.linalg.norm(p - self.center, axis=1) - self.radius

    def support(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(u @ self.center + self.radius * np.linalg.norm(u))

    def bounding_box(self) -> AABB:
        return AABB(self.center - self.radius, self.center + self.radius)

    def interior_point(self):
        return np.array(self.center)

    def chord(self, p, u):
        return self.as_ellipsoid().chord(p, u)

    def as_ellipsoid(self) -> "Ellipsoid":
        return Ellipsoid(self.center, self.radius**2 * np.eye(self.dim))

    def gauge(self, points):
        p, single = _as_points(points, self.dim)
        _require_origin_interior(self)
        g = _ball_gauge(p, self.center, self.radius)
        return float(g[0]) if single else g


def _ball_gauge(p: np.ndarray, c: np.ndarray, r: float) -> np.ndarray:
    # smallest t > 0 with |p - t c| = t r
    a = float(c @ c) - r * r
    pc = p @ c
    pp = np.einsum("ij,ij->i", p, p)
    return (pc - np.sqrt(np.maximum(pc * pc - a * pp, 0.0))) / a


class Ellipsoid(ConvexBody):
    """``{y : (y - c)^T shape^{-1} (y - c) <= 1}``; semi-axes are sqrt(eig(shape))."""

    def __init__(self, center, shape):
        self.center = _frozen(np.atleast_1d(center))
        S = np.atleast_2d(np.asarray(shape, dtype=float))
        if S.shape != (self.center.shape[0],) * 2:
            raise GeometryError("shape must be d x d")
        if not np.allclose(S, S.T, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise GeometryError("shape must be symmetric")
        S = 0.5 * (S + S.T)
        w, Q = np.linalg.eigh(S)
        if not np.all(np.isfinite(w)) or w.min() <= 0:
            raise GeometryError("shape must be positive definite")
        self.shape = _frozen(S)
        self.dim = S.shape[0]
        self._w = w
        self._Q = Q
        self._sqrt = (Q * np.sqrt(w)) @ Q.T
        self._isqrt = (Q / np.sqrt(w)) @ Q.T

    def __repr__(self):
        return f"Ellipsoid(d={self.dim})"

    def _unit(self, p):
        return (p - self.center) @ self._isqrt

    def slack(self, points):
        p, _ = _as_points(points, self.dim)
        q = np.linalg.norm(self._unit(p), axis=1)
        return (q - 1.0) * math.sqrt(self._w.min())

    def support(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(u @ self.center + math.sqrt(u @ self.shape @ u))

    def bounding_box(self) -> AABB:
        r = np.sqrt(np.diag(self.shape))
        return AABB(self.center - r, self.center + r)

    def interior_point(self):
        return np.array(self.center)

    def chord(self, p, u):
        w = self._unit(p)
        v = u @ self._isqrt
        a = np.einsum("ij,ij->i", v, v)
        bh = np.einsum("ij,ij->i", v, w)
        c = np.einsum("ij,ij->i", w, w) - 1.0
        disc = np.sqrt(np.maximum(bh * bh - a * c, 0.0))
        return (-bh - disc) / a, (-bh + disc) / a

    def gauge(self, points):
        p, single = _as_points(points, self.dim)
        _require_origin_interior(self)
        g = _ball_gauge(p @ self._isqrt, self.center @ self._isqrt, 1.0)
        return float(g[0]) if single else g


# ---------------------------------------------------------------------------------
# Derived bodies
# ---------------------------------------------------------------------------------


class AffineImage(ConvexBody):
    """``{M y + t : y in inner}``, evaluated lazily through ``M^{-1}``."""

    def __init__(self, inner: ConvexBody, M, t):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        t = np.asarray(t, dtype=float).reshape(-1)
        d = inner.dim
        if M.shape != (d, d) or t.shape != (d,):
            raise GeometryError("affine map has wrong dimensions")
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(t))):
            raise GeometryError("non-finite coordinates")
        det = float(np.linalg.det(M))
        if abs(det) < 1e-14 or np.linalg.cond(M) > 1e14:
            raise GeometryError("singular affine map")
        self.inner = inner
        self.M = _frozen(M)
        self.t = _frozen(t)
        self.Minv = _frozen(np.linalg.inv(M))
        self.det = det
        self.dim = d

    def __repr__(self):
        return f"AffineImage({self.inner!r})"

    def pullback(self, p: np.ndarray) -> np.ndarray:
        return (p - self.t) @ self.Minv.T

    def slack(self, points):
        p, _ = _as_points(points, self.dim)
        return self.inner.slack(self.pullback(p))

    def support(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(u @ self.t + self.inner.support(self.M.T @ u))

    def bounding_box(self) -> AABB:
        try:
            return super().bounding_box()
        except NotImplementedError:
            box = self.inner.bounding_box()
            corners = np.array(list(itertools.product(*zip(box.lower, box.upper))))
            img = corners @ self.M.T + self.t
            return AABB(img.min(axis=0), img.max(axis=0))

    def chord(self, p, u):
        return self.inner.chord(self.pullback(p), u @ self.Minv.T)

    def interior_point(self):
        return self.M @ self.inner.interior_point() + self.t

    @cached_property
    def _hrep(self):
        H = self.inner.as_hpolytope()
        if H is None:
            return None
        A = H.A @ self.Minv
        return HPolytope(A, H.b + A @ self.t)

    def as_hpolytope(self):
        return self._hrep

    def as_ellipsoid(self) -> "Ellipsoid | None":
        inner = self.inner
        if isinstance(inner, Ball):
            inner = inner.as_ellipsoid()
        if isinstance(inner, Ellipsoid):
            return Ellipsoid(self.M @ inner.center + self.t, self.M @ inner.shape @ self.M.T)
        return None

    def gauge(self, points):
        if self._hrep is not None:
            return self._hrep.gauge(points)
        E = self.as_ellipsoid()
        if E is not None:
            return E.gauge(points)
        return super().gauge(points)


class ReflectIntersect(ConvexBody):
    """Lazy ``inner ∩ (x - inner)``; empty unless x/2 is interior to ``inner``."""

    def __init__(self, inner: ConvexBody, x):
        self.inner = inner
        self.x = _frozen(np.atleast_1d(x))
        if self.x.shape != (inner.dim,):
            raise GeometryError("dimension mismatch")
        self.dim = inner.dim

    def __repr__(self):
        return f"ReflectIntersect({self.inner!r}, x={self.x.tolist()})"

    def slack(self, points):
        p, _ = _as_points(points, self.dim)
        return np.maximum(self.inner.slack(p), self.inner.slack(self.x - p))

    def support(self, u) -> float:
        raise NotImplementedError("support of a lazy reflect-intersection")

    def bounding_box(self) -> AABB:
        box = self.inner.bounding_box()
        return box.intersect(AABB(self.x - box.upper, self.x - box.lower))

    def chord(self, p, u):
        lo1, hi1 = self.inner.chord(p, u)
        lo2, hi2 = self.inner.chord(self.x - p, -u)
        return np.maximum(lo1, lo2), np.minimum(hi1, hi2)

    def interior_point(self):
        mid = 0.5 * np.asarray(self.x)
        if not self.inner.slack(mid[None, :])[0] < 0:
            raise DegenerateBodyError("reflect-intersection has empty interior")
        return mid

    def gauge(self, points):
        p, single = _as_points(points, self.dim)
        _require_origin_interior(self)
        mirror = AffineImage(self.inner, -np.eye(self.dim), self.x)
        g = np.maximum(np.atleast_1d(self.inner.gauge(p)), np.atleast_1d(mirror.gauge(p)))
        return float(g[0]) if single else g


# ---------------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------------


def contains(body: ConvexBody, p, tol: float = 0.0) -> Location:
    return body.contains(p, tol)


def gauge(body: ConvexBody, p):
    """Minkowski functional ``inf{t > 0 : p in t*body}``; origin must be interior."""
    return body.gauge(p)


def affine_image(body: ConvexBody, M, t) -> AffineImage:
    return AffineImage(body, M, t)


def translate(body: ConvexBody, v) -> ConvexBody:
    """Exact translate, kept in the most concrete representation available."""
    v = np.asarray(v, dtype=float)
    if isinstance(body, HPolytope):
        return body.translate(v)
    if isinstance(body, VPolytope):
        return VPolytope(body.points + v)
    if isinstance(body, Ball):
        return Ball(body.center + v, body.radius)
    if isinstance(body, Ellipsoid):
        return Ellipsoid(body.center + v, body.shape)
    if isinstance(body, AffineImage):
        return AffineImage(body.inner, body.M, body.t + v)
    if isinstance(body, ReflectIntersect):
        return ReflectIntersect(translate(body.inner, v), body.x + 2 * v)
    return AffineImage(body, np.eye(body.dim), v)


MIRROR_TOL = 1e-12


def _mirror_matches(A: np.ndarray, b: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Per row of ``xs``: does ``x - K`` coincide with ``K = {Ay <= b}``?"""
    keys = {tuple(r): i for i, r in enumerate(np.round(A, ROW_DECIMALS) + 0.0)}
    perm = [keys.get(tuple(r)) for r in np.round(-A, ROW_DECIMALS) + 0.0]
    if any(p is None for p in perm):
        return np.zeros(xs.shape[0], dtype=bool)
    perm = np.array(perm)
    gap = b[perm][None, :] + xs @ A.T - b[None, :]
    return np.all(np.abs(gap) <= MIRROR_TOL * (1 + np.abs(b))[None, :], axis=1)


def reflect_intersect(body: ConvexBody, x) -> ConvexBody:
    """``K ∩ (x - K)``.

    H-representable bodies are materialised as the stacked system ``[A; -A] y <= [b; b - A x]``;
    affine images push the reflection through to their inner body; other bodies stay lazy.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (body.dim,):
        raise GeometryError("dimension mismatch")
    if isinstance(body, Ball) and np.array_equal(x, 2 * body.center):
        return body
    if isinstance(body, AffineImage) and body.as_hpolytope() is None:
        inner_x = body.Minv @ (x - 2 * body.t)
        return AffineImage(reflect_intersect(body.inner, inner_x), body.M, body.t)
    H = body.as_hpolytope()
    if H is not None:
        A, b = np.asarray(H.A), np.asarray(H.b)
        if _mirror_matches(A, b, x[None, :])[0]:
            return H
        return HPolytope(np.vstack([A, -A]), np.concatenate([b, b - A @ x]))
    return ReflectIntersect(body, x)


def reflect_intersect_volumes(body: ConvexBody, xs) -> np.ndarray:
    """``|K ∩ (x - K)|`` for every row of ``xs`` (vectorised for planar polytopes and balls)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    d = body.dim
    if xs.shape[1] != d:
        raise GeometryError("dimension mismatch")
    E = None
    if isinstance(body, Ball):
        E = body.as_ellipsoid()
    elif isinstance(body, Ellipsoid):
        E = body
    elif isinstance(body, AffineImage) and body.as_hpolytope() is None:
        E = body.as_ellipsoid()
    if E is not None:
        dist = np.linalg.norm((xs - 2 * E.center) @ E._isqrt, axis=1)
        scale = exact_volume(E) / ball_volume(d)
        return np.array([scale * _lens_volume(d, 1.0, float(r)) for r in dist])
    H = body.as_hpolytope()
    if H is not None and 2 <= d <= MAX_EXACT_DIM:
        A, b = np.asarray(H.A), np.asarray(H.b)
        out = _planar_reflect_areas(A, b, xs) if d == 2 else _hull_reflect_volumes(A, b, xs)
        same = _mirror_matches(A, b, xs)
        if same.any():
            out[same] = exact_volume(body)
        return out
    return np.array([exact_volume(reflect_intersect(body, x)) for x in xs])


def _stacked_vertices(A: np.ndarray, b: np.ndarray, xs: np.ndarray):
    """Candidate vertices of ``[A; -A] y <= [b; b - A x]`` for a batch of x."""
    m, d = A.shape
    A2 = np.vstack([A, -A])
    combos = np.array([c for c in itertools.combinations(range(2 * m), d)
                       if abs(np.linalg.det(A2[list(c)])) > 1e-12])
    inv = np.linalg.inv(A2[combos])                                 # (P, d, d)
    b2 = np.concatenate([np.broadcast_to(b, (xs.shape[0], m)), b - xs @ A.T], axis=1)
    rhs = b2[:, combos]                                             # (n, P, d)
    V = np.einsum("pij,npj->npi", inv, rhs)                         # (n, P, d)
    lhs = np.einsum("npi,ki->npk", V, A2)
    feas = np.all(lhs <= b2[:, None, :] + FACET_TOL * (1 + np.abs(b2[:, None, :])), axis=2)
    return V, feas


def _hull_reflect_volumes(A: np.ndarray, b: np.ndarray, xs: np.ndarray) -> np.ndarray:
    V, feas = _stacked_vertices(A, b, xs)
    out = np.zeros(xs.shape[0])
    for i in range(xs.shape[0]):
        P = V[i][feas[i]]
        if P.shape[0] <= A.shape[1] or _affine_rank(P) < A.shape[1]:
            continue
        try:
            out[i] = spatial.ConvexHull(P).volume
        except spatial.QhullError:
            out[i] = 0.0
    return out


def _planar_reflect_areas(A: np.ndarray, b: np.ndarray, xs: np.ndarray) -> np.ndarray:
    V, feas = _stacked_vertices(A, b, xs)
    cnt = feas.sum(axis=1)
    safe = np.maximum(cnt, 1)[:, None]
    c = (V * feas[..., None]).sum(axis=1) / safe
    ang = np.arctan2(V[..., 1] - c[:, None, 1], V[..., 0] - c[:, None, 0])
    ang = np.where(feas, ang, np.inf)
    order = np.argsort(ang, axis=1, kind="stable")
    Vs = np.take_along_axis(V, order[..., None], axis=1)
    fs = np.take_along_axis(feas, order, axis=1)
    # pad invalid slots with the last valid vertex so they add zero-length edges
    last = np.take_along_axis(Vs, np.maximum(cnt - 1, 0)[:, None, None].repeat(2, axis=2), axis=1)
    Vs = np.where(fs[..., None], Vs, last)
    x, y = Vs[..., 0], Vs[..., 1]
    area = 0.5 * np.abs(np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1))
    return np.where(cnt >= 3, area, 0.0)


def bounding_box(body: ConvexBody) -> AABB:
    return body.bounding_box()


def _lens_volume(d: int, r: float, dist: float) -> float:
    if dist >= 2 * r:
        return 0.0
    if dist == 0:
        return ball_volume(d, r)
    h = r - dist / 2
    z = (2 * r * h - h * h) / (r * r)
    cap = 0.5 * ball_volume(d, r) * special.betainc((d + 1) / 2, 0.5, z)
    return 2.0 * cap


def exact_volume(body: ConvexBody) -> float:
    """Exact volume; polytopes need d <= 4.  Degenerate bodies have volume 0."""
    if isinstance(body, Ball):
        return ball_volume(body.dim, body.radius)
    if isinstance(body, Ellipsoid):
        return ball_volume(body.dim) * math.sqrt(float(np.prod(body._w)))
    if isinstance(body, AffineImage):
        return abs(body.det) * exact_volume(body.inner)
    if isinstance(body, ReflectIntersect):
        inner = body.inner
        if isinstance(inner, Ellipsoid):
            # map the ellipsoid to the unit ball centred at the origin
            xb = inner._isqrt @ (body.x - 2 * inner.center)
            return exact_volume(inner) / ball_volume(inner.dim) * _lens_volume(
                inner.dim, 1.0, float(np.linalg.norm(xb)))
        if isinstance(inner, Ball):
            dist = float(np.linalg.norm(body.x - 2 * inner.center))
            return _lens_volume(inner.dim, inner.radius, dist)
        H = inner.as_hpolytope()
        if H is not None:
            return exact_volume(reflect_intersect(H, body.x))
        raise UnsupportedVolumeError("no exact volume for this body; use Monte Carlo volume")
    H = body.as_hpolytope()
    if H is None:
        raise UnsupportedVolumeError("no exact volume for this body; use Monte Carlo volume")
    if H.dim > MAX_EXACT_DIM:
        raise UnsupportedVolumeError(f"exact polytope volume limited to d <= {MAX_EXACT_DIM}; "
                                     "use Monte Carlo volume")
    simplices = polytope_simplices(H)
    if not simplices:
        return 0.0
    return _simplex_stats(simplices)[0]


def exact_moments(body: ConvexBody) -> tuple[float, np.ndarray, np.ndarray]:
    """(volume, mean, central covariance) where a closed form or triangulation exists."""
    d = body.dim
    if isinstance(body, Ball):
        return exact_volume(body), np.array(body.center), body.radius**2 / (d + 2) * np.eye(d)
    if isinstance(body, Ellipsoid):
        return exact_volume(body), np.array(body.center), np.array(body.shape) / (d + 2)
    if isinstance(body, AffineImage):
        vol, mean, cov = exact_moments(body.inner)
        M = np.asarray(body.M)
        return abs(body.det) * vol, M @ mean + body.t, M @ cov @ M.T
    H = body.as_hpolytope()
    if H is None or d > MAX_EXACT_DIM:
        raise UnsupportedVolumeError("no exact moments for this body; use Monte Carlo moments")
    simplices = polytope_simplices(H)
    if not simplices:
        raise DegenerateBodyError("degenerate body has no moments")
    vol, mean, raw = _simplex_stats(simplices)
    cov = raw - np.outer(mean, mean)
    return vol, mean, 0.5 * (cov + cov.T)


def has_exact_volume(body: ConvexBody) -> bool:
    try:
        exact_volume(body)
    except UnsupportedVolumeError:
        return False
    return True


def centroid(body: ConvexBody) -> np.ndarray:
    return exact_moments(body)[1]


def inradius_about_origin(body: ConvexBody, n_dirs: int = 4096) -> float:
    """Radius of the largest origin-centred ball inside ``body``.

    Exact for polytopes, balls and ellipsoids; otherwise a direction-sampled
    estimate shrunk by 1e-3 for safety.
    """
    _require_origin_interior(body)
    H = body.as_hpolytope()
    if H is not None:
        return float(np.min(H.b))
    E = body.as_ellipsoid() if isinstance(body, (Ball, AffineImage)) else body
    if isinstance(E, Ellipsoid):
        if np.allclose(E.center, 0.0):
            return float(math.sqrt(E._w.min()))
        # distance from the origin to the boundary, minimised over boundary points
        dirs = unit_directions(E.dim, n_dirs)
        return float(1.0 / np.max(E.gauge(dirs))) * (1 - 1e-3)
    dirs = unit_directions(body.dim, n_dirs)
    return float(1.0 / np.max(body.gauge(dirs))) * (1 - 1e-3)


def unit_directions(d: int, n: int) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        th = 2 * np.pi * np.arange(n) / n
        return np.column_stack([np.cos(th), np.sin(th)])
    rng = np.random.default_rng(12345)
    u = rng.standard_normal((n, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)
