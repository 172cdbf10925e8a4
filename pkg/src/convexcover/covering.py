"""Certified covers by homothets, the symmetric-core covering pipeline, and lattice checks.

A cover of A by translates ``x_i + lam*B`` (B centred at its centroid, lam < 1) is
certified on a mesh of A: every mesh point p needs
``min_i gauge_B(p - x_i) / lam <= 1 - c*delta/(lam*r)`` with r the inradius of B.
Since gauge_B is (1/r)-Lipschitz and every point of A lies within ``c*delta`` of the
mesh (c = 2 >= sqrt(d) for d <= 3), this covers A by the interiors of the homothets,
and ``lam*B ⊂ int B`` turns them into translates of ``int B``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, spatial

from .geometry import (Ball, ConvexBody, Ellipsoid, GeometryError, UnsupportedVolumeError,
                       exact_moments, exact_volume, inradius_about_origin, reflect_intersect,
                       translate)
from .sampler import sample_uniform
from .symmetry import body_centroid, bound_centred, delta_kb

MARGIN_C = 2.0
# default mesh pitch is share * lam * inradius(B), so the certified margin costs 2*share
_MARGIN_SHARE = {1: 0.01, 2: 0.01, 3: 0.075}
MAX_TARGETS = 200_000
_RESTARTS = {1: 4, 2: 12, 3: 3}


class CoverError(GeometryError):
    pass


@dataclass(frozen=True, eq=False)
class VerifyReport:
    covered: bool
    max_gauge: float
    threshold: float
    n_mesh: int
    uncovered: np.ndarray


@dataclass(frozen=True, eq=False)
class CoverCertificate:
    name: str
    dim: int
    centers: np.ndarray
    lam: float
    delta: float
    covered: bool
    max_gauge: float
    threshold: float
    greedy_count: int
    uncovered: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    cover_body: str = "self"
    x_star: np.ndarray | None = None
    shift: np.ndarray | None = None

    @property
    def count(self) -> int:
        return int(self.centers.shape[0])

    @property
    def slack(self) -> float:
        return self.threshold - self.max_gauge


def default_mesh_delta(A: ConvexBody, B: ConvexBody, lam: float) -> float:
    """Pitch tied to the inradius of B, coarsened if the mesh would exceed MAX_TARGETS."""
    d = A.dim
    delta = _MARGIN_SHARE.get(d, 0.1) * lam * inradius_about_origin(B)
    try:
        vol = exact_volume(A)
    except UnsupportedVolumeError:
        vol = A.bounding_box().volume
    return max(delta, (vol / MAX_TARGETS) ** (1.0 / d))


def default_center_h(B: ConvexBody, lam: float, delta: float) -> float:
    """Candidate pitch no larger than the certified radius of ``lam*B``."""
    r = inradius_about_origin(B)
    thr = 1.0 - MARGIN_C * delta / (lam * r)
    return max(lam * thr * r, delta)


def _box_grid(lower, upper, pitch) -> np.ndarray:
    axes = [lo + pitch * np.arange(int(math.floor((hi - lo) / pitch + 1e-9)) + 1)
            for lo, hi in zip(lower, upper)]
    axes = [np.append(a, hi) if hi - a[-1] > 1e-12 else a for a, hi in zip(axes, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def cover_mesh(A: ConvexBody, delta: float) -> np.ndarray:
    """Grid of pitch delta clipped to A, radial boundary projections of nearby outside
    nodes, and the vertices of A when it is a polytope."""
    box = A.bounding_box()
    G = _box_grid(np.asarray(box.lower), np.asarray(box.upper), delta)
    inside = A.inside(G)
    pts = [G[inside]]
    c = A.interior_point()
    Ac = translate(A, -c)
    out = G[~inside] - c
    if out.shape[0]:
        g = np.atleast_1d(Ac.gauge(out))
        near = (g > 0) & (g < 1 + 2 * delta * math.sqrt(A.dim) / max(inradius_about_origin(Ac), 1e-300))
        pts.append(c + out[near] / g[near][:, None])
    H = A.as_hpolytope()
    if H is not None:
        pts.append(H.vertices)
    return np.vstack(pts)


class GaugeField:
    """``gauge_B(T - x)`` over a fixed point set T for many centres x.

    For polytopes ``T W^T`` (W = rows scaled by 1/b) is formed once, so each centre
    costs one shift and a column-wise maximum.
    """

    def __init__(self, B: ConvexBody, T: np.ndarray):
        self.B = B
        self.T = np.asarray(T, dtype=float)
        H = B.as_hpolytope()
        self._Y = None
        if H is not None and np.all(H.b > 0):
            self._W = np.asarray(H.A) / np.asarray(H.b)[:, None]
            self._Y = np.ascontiguousarray((self.T @ self._W.T).T)

    def __len__(self) -> int:
        return self.T.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self._Y is None:
            return np.atleast_1d(self.B.gauge(self.T - x))
        shift = self._W @ x
        out = self._Y[0] - shift[0]
        for row, sh in zip(self._Y[1:], shift[1:]):
            np.maximum(out, row - sh, out=out)
        return np.maximum(out, 0.0, out=out)

    def table(self, X: np.ndarray) -> np.ndarray:
        return np.stack([self(x) for x in X], axis=1)

    def nearest(self, X: np.ndarray) -> np.ndarray:
        best = np.full(len(self), np.inf)
        for x in X:
            np.minimum(best, self(x), out=best)
        return best


def _threshold(B: ConvexBody, lam: float, delta: float) -> float:
    r = inradius_about_origin(B)
    if r <= delta:
        raise CoverError("inradius of B not above the mesh pitch; mesh too coarse to certify")
    return 1.0 - MARGIN_C * delta / (lam * r)


def verify_cover(A: ConvexBody, centers, B: ConvexBody, lam: float, delta: float) -> VerifyReport:
    """Check ``A ⊂ ⋃ (x_i + int(B))`` via homothets ``x_i + lam*B`` on a delta-mesh of A."""
    if not 0 < lam < 1:
        raise CoverError("lambda must lie in (0, 1)")
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    thr = _threshold(B, lam, delta)
    P = cover_mesh(A, delta)
    if centers.size == 0:
        return VerifyReport(False, math.inf, thr, P.shape[0], P)
    g = GaugeField(B, P).nearest(centers) / lam
    bad = g > thr
    return VerifyReport(not bad.any(), float(g.max()), thr, P.shape[0], P[bad])


# ---------------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------------


def _coverage_matrix(field: GaugeField, C: np.ndarray, lam: float,
                     thr: float) -> tuple[np.ndarray, np.ndarray]:
    """Rows of candidates that cover at least one target, and those candidates."""
    rows, keep = [], []
    for i, x in enumerate(C):
        hit = field(x) / lam <= thr
        if hit.any():
            rows.append(hit)
            keep.append(i)
    M = np.array(rows, dtype=bool).reshape(len(rows), len(field))
    return M, C[keep]


def _greedy(M: np.ndarray) -> tuple[list[int], np.ndarray]:
    uncovered = np.ones(M.shape[1], dtype=bool)
    chosen: list[int] = []
    while uncovered.any():
        gains = M[:, uncovered].sum(axis=1)
        j = int(np.argmax(gains))  # first maximum = lexicographically smallest centre
        if gains[j] == 0:
            break
        chosen.append(j)
        uncovered &= ~M[j]
    return chosen, uncovered


def _hull_points(P: np.ndarray) -> np.ndarray:
    if P.shape[0] <= P.shape[1] + 1:
        return P
    if P.shape[1] == 1:
        return np.array([P.min(axis=0), P.max(axis=0)])
    try:
        return P[spatial.ConvexHull(P).vertices]
    except spatial.QhullError:
        return P


def _minimax_center(B: ConvexBody, P: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """Centre x minimising ``max_p gauge_B(p - x)``; max of a convex gauge sits on hull vertices."""
    P = _hull_points(P)
    d = P.shape[1]
    H = B.as_hpolytope()
    if H is not None:
        W = np.asarray(H.A) / np.asarray(H.b)[:, None]          # gauge(v) = max_i W_i v
        m = W.shape[0]
        # minimise t  s.t.  W_i (p - x) <= t
        A_ub = np.hstack([np.tile(-W, (P.shape[0], 1)), -np.ones((P.shape[0] * m, 1))])
        b_ub = -(P @ W.T).reshape(-1)
        c = np.zeros(d + 1)
        c[-1] = 1.0
        res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * (d + 1),
                               method="highs")
        return res.x[:d] if res.status == 0 else x0

    def gmax(x):
        return float(np.max(np.atleast_1d(B.gauge(P - x))))

    res = optimize.minimize(gmax, x0, method="Nelder-Mead",
                            options={"xatol": 1e-7, "fatol": 1e-9, "maxiter": 400 * d})
    return res.x if res.fun <= gmax(x0) else x0


def _farthest_init(field: GaugeField, m: int, first: int) -> np.ndarray:
    T = field.T
    X = [T[first]]
    dist = field(X[0])
    for _ in range(1, m):
        j = int(np.argmax(dist))
        X.append(T[j])
        dist = np.minimum(dist, field(T[j]))
    return np.array(X)


def _drop_one(field: GaugeField, X: np.ndarray) -> np.ndarray:
    """Remove the centre whose absence raises the worst gauge the least."""
    D = field.table(X)
    worst = [np.delete(D, j, axis=1).min(axis=1).max() for j in range(X.shape[0])]
    return np.delete(X, int(np.argmin(worst)), axis=0)


def _kcenter(B: ConvexBody, full: GaugeField, work: GaugeField, m: int, lam: float, thr: float,
             rng, restarts: int, warm: np.ndarray | None = None, iters: int = 60,
             patience: int = 5) -> np.ndarray | None:
    """Lloyd-style minimax search for ``m`` centres covering the full targets; None if not found.

    Iterates on the coarse ``work`` set; when that is covered the full target set is
    checked and its violators join the working set.
    """
    for r in range(restarts):
        if r == 0 and warm is not None:
            X = warm.copy()
        else:
            X = _farthest_init(work, m, 0 if r == 0 else int(rng.integers(len(work))))
        W = work
        best, stall, prev = np.inf, 0, None
        for _ in range(iters):
            D = W.table(X)
            assign = np.argmin(D, axis=1)
            worst = D[np.arange(len(W)), assign].max() / lam
            if worst <= thr:
                bad = full.nearest(X) / lam > thr
                if not bad.any():
                    return X
                W = GaugeField(B, np.vstack([W.T, full.T[bad]]))
                best, stall, prev = np.inf, 0, None
                continue
            if worst < best - 1e-12:
                best, stall = worst, 0
            else:
                stall += 1
                if stall >= patience:
                    break
            if prev is not None and np.array_equal(assign, prev):
                break
            prev = assign
            for j in range(m):
                P = W.T[assign == j]
                if P.shape[0]:
                    X[j] = _minimax_center(B, P, X[j])
    return None


def greedy_cover(A: ConvexBody, B: ConvexBody, lam: float, center_grid_h: float | None = None,
                 mesh_delta: float | None = None, *, name: str = "", refine: bool = True,
                 seed: int = 0) -> CoverCertificate:
    """Cover A by translates of ``lam*B``.

    Greedy maximum coverage over a centre grid of pitch ``center_grid_h`` on a
    ``mesh_delta`` target mesh of A, then (``refine``) repeated attempts to drop one
    centre by minimax k-centre relocation.  The result is re-checked by ``verify_cover``.
    """
    if A.dim > 3:
        raise CoverError("covers limited to d <= 3")
    if not 0 < lam < 1:
        raise CoverError("lambda must lie in (0, 1)")
    if not B.slack(np.zeros((1, B.dim)))[0] < 0:
        raise CoverError("B must contain the origin in its interior (centre it first)")
    delta = mesh_delta or default_mesh_delta(A, B, lam)
    thr = _threshold(B, lam, delta)
    hc = center_grid_h or default_center_h(B, lam, delta)
    full = GaugeField(B, cover_mesh(A, delta))
    box = A.bounding_box()
    C = _box_grid(np.asarray(box.lower), np.asarray(box.upper), hc)
    C = C[np.lexsort(C.T[::-1])]
    M, C = _coverage_matrix(full, C, lam, thr)
    chosen, left = _greedy(M)
    centers = C[chosen]
    greedy_count = len(chosen)
    if refine and len(centers):
        rng = np.random.default_rng(seed)
        work = GaugeField(B, cover_mesh(A, 2 * delta))
        restarts = _RESTARTS.get(A.dim, 3)
        X = None if left.any() else centers
        m = len(centers) - 1 if X is not None else len(centers)
        while m >= 1:
            warm = _drop_one(work, X) if X is not None else None
            X = _kcenter(B, full, work, m, lam, thr, rng, restarts, warm)
            if X is None:
                break
            centers = X
            m -= 1
    rep = verify_cover(A, centers, B, lam, delta)
    return CoverCertificate(name, A.dim, np.array(centers), float(lam), float(delta), rep.covered,
                            rep.max_gauge, rep.threshold, greedy_count, rep.uncovered)


@dataclass(frozen=True, eq=False)
class PipelineResult:
    x_star: np.ndarray
    delta: float
    S: ConvexBody
    shift: np.ndarray
    certificate: CoverCertificate
    classical_count: float
    difference_body_bound: float


def hadwiger_pipeline(K: ConvexBody, budget: int = 8000, seed: int = 0, *, lam: float = 0.95,
                      center_grid_h: float | None = None, mesh_delta: float | None = None,
                      name: str = "") -> PipelineResult:
    """Cover K by translates of ``lam*S`` where ``S = K ∩ (x* - K)`` at the best symmetry point.

    Every translate of int S sits inside a translate of int K, so the certificate's
    count bounds the covering number of K.
    """
    if K.dim > 3:
        raise CoverError("pipeline limited to d <= 3")
    sym = delta_kb(K, budget, seed)
    S = reflect_intersect(K, sym.x_star)
    s0 = body_centroid(S, seed=seed)
    B = translate(S, -s0)
    cert = greedy_cover(K, B, lam, center_grid_h, mesh_delta, name=name, seed=seed)
    cert = CoverCertificate(cert.name, cert.dim, cert.centers, cert.lam, cert.delta, cert.covered,
                            cert.max_gauge, cert.threshold, cert.greedy_count, cert.uncovered,
                            "reflect", np.array(sym.x_star), np.array(s0))
    d = K.dim
    try:
        volK = exact_volume(K)
    except UnsupportedVolumeError:
        volK = math.nan
    return PipelineResult(np.array(sym.x_star), sym.delta, S, np.array(s0), cert,
                          classical_bound(d) if d >= 2 else math.nan, 2**d * volK)


def cover_body_for(K: ConvexBody, cert: CoverCertificate) -> ConvexBody:
    """Rebuild the centred body B a certificate refers to."""
    if cert.cover_body == "self":
        base = K
    elif cert.cover_body == "reflect":
        base = reflect_intersect(K, cert.x_star)
    else:
        raise CoverError(f"unknown cover body {cert.cover_body!r}")
    shift = cert.shift if cert.shift is not None else np.zeros(K.dim)
    return translate(base, -np.asarray(shift))


def self_cover(K: ConvexBody, lam: float, center_grid_h=None, mesh_delta=None, *, name: str = "",
               seed: int = 0) -> CoverCertificate:
    """Cover K by translates of ``lam*K_c``, K_c the centroid-centred copy."""
    c = body_centroid(K, seed=seed)
    B = translate(K, -c)
    cert = greedy_cover(K, B, lam, center_grid_h, mesh_delta, name=name, seed=seed)
    return CoverCertificate(cert.name, cert.dim, cert.centers, cert.lam, cert.delta, cert.covered,
                            cert.max_gauge, cert.threshold, cert.greedy_count, cert.uncovered,
                            "self", None, np.array(c))


# ---------------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------------


def classical_bound(d: int) -> float:
    """``(d ln d + d ln ln d + 5d) * C(2d, d)``."""
    if d < 2:
        raise ValueError("classical bound needs d >= 2")
    return (d * math.log(d) + d * math.log(math.log(d)) + 5 * d) * math.comb(2 * d, d)


def bound_hadwiger(d: int, L: float, c: float = 1.0, const: float = 2.0**15) -> float:
    """``c * d ln d * exp(-d / (const L^2)) * 4^d``; c stands in for the unspecified constant."""
    if not c > 0:
        raise ValueError("c must be positive")
    return c * d * math.log(d) * math.exp(-d / (const * L * L)) * 4.0**d


def rogers_count_bound(d: int, volume_ratio: float, c: float = 1.0) -> float:
    """``c * d ln d * |A - B| / |B|`` with the ratio supplied by the caller."""
    return c * d * math.log(d) * volume_ratio


# ---------------------------------------------------------------------------------
# lattice points
# ---------------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LatticeReport:
    interior_points: np.ndarray
    boundary_points: np.ndarray
    lattice_free: bool
    interior_lattice_free: bool
    volume: float
    symmetric: bool
    minkowski_ok: bool
    ehrhart_bound: float
    lattice_free_volume_bound: float
    isotropic_constant: float


def lattice_points(body: ConvexBody, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Integer points of the body split into (interior, boundary)."""
    if body.dim > 4:
        raise GeometryError("lattice enumeration limited to d <= 4")
    box = body.bounding_box()
    lo = np.floor(np.asarray(box.lower) - tol).astype(int)
    hi = np.ceil(np.asarray(box.upper) + tol).astype(int)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    Z = np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, body.dim)
    s = body.slack(Z)
    return Z[s < -tol], Z[np.abs(s) <= tol]


def is_centrally_symmetric(body: ConvexBody, tol: float = 1e-9) -> bool:
    """Symmetry about the origin."""
    if isinstance(body, (Ball, Ellipsoid)):
        return bool(np.allclose(body.center, 0.0, atol=tol))
    H = body.as_hpolytope()
    if H is not None:
        V = H.vertices
        return bool(np.all(H.slack(-V) <= tol))
    E = getattr(body, "as_ellipsoid", lambda: None)()
    if E is not None:
        return bool(np.allclose(E.center, 0.0, atol=tol))
    X = np.asarray(sample_uniform(body, 4000, 0).points)
    return bool(np.all(body.slack(-X) <= tol))


def ehrhart_check(K: ConvexBody, tol: float = 1e-9) -> LatticeReport:
    """Lattice points of a centred body, Minkowski's volume bound and reference bounds.

    ``lattice_free`` uses the closed body (K ∩ Z^d = {0}); ``interior_lattice_free`` uses
    its interior, which is the hypothesis of the Ehrhart volume bound.
    """
    d = K.dim
    try:
        vol, mean, cov = exact_moments(K)
    except UnsupportedVolumeError:
        raise GeometryError("ehrhart_check needs exact moments") from None
    scale = float(np.linalg.norm(K.bounding_box().widths))
    if np.linalg.norm(mean) > 1e-9 * max(scale, 1.0):
        raise GeometryError("body is not centred at the origin")
    inner, bdry = lattice_points(K, tol)
    nz_in = inner[np.any(inner != 0, axis=1)]
    nz_bd = bdry[np.any(bdry != 0, axis=1)]
    interior_free = nz_in.shape[0] == 0
    closed_free = interior_free and nz_bd.shape[0] == 0
    sym = is_centrally_symmetric(K)
    minkowski_ok = not (sym and interior_free) or vol <= 2.0**d * (1 + 1e-12)
    L = (math.sqrt(max(np.linalg.det(cov), 0.0)) / vol) ** (1.0 / d)
    return LatticeReport(inner, bdry, closed_free, interior_free, vol, sym, minkowski_ok,
                         (d + 1) ** d / math.factorial(d), 2.0**d / bound_centred(d, L), L)


# ---------------------------------------------------------------------------------
# certificate files
# ---------------------------------------------------------------------------------


def _fmt(v) -> str:
    return " ".join(f"{float(x):.17g}" for x in np.atleast_1d(v))


def write_certificate(cert: CoverCertificate, path) -> None:
    lines = [
        "# cover certificate v1",
        f"name {cert.name}",
        f"d {cert.dim}",
        f"lambda {cert.lam:.17g}",
        f"delta {cert.delta:.17g}",
        f"count {cert.count}",
        f"covered {'true' if cert.covered else 'false'}",
        f"cover_body {cert.cover_body}",
    ]
    if cert.x_star is not None:
        lines.append(f"x_star {_fmt(cert.x_star)}")
    if cert.shift is not None:
        lines.append(f"shift {_fmt(cert.shift)}")
    lines += [f"greedy_count {cert.greedy_count}",
              f"max_gauge {cert.max_gauge:.17g}",
              f"threshold {cert.threshold:.17g}",
              "centers"]
    lines += [_fmt(c) for c in cert.centers]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_certificate(path) -> CoverCertificate:
    header: dict[str, str] = {}
    centers = []
    with open(path, encoding="utf-8") as fh:
        in_centers = False
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if in_centers:
                centers.append([float(x) for x in line.split()])
                continue
            if line == "centers":
                in_centers = True
                continue
            key, _, val = line.partition(" ")
            header[key] = val.strip()
    try:
        d = int(header["d"])
        C = np.array(centers, dtype=float).reshape(-1, d)
        if not np.all(np.isfinite(C)):
            raise ValueError("non-finite centre")
        vec = lambda k: np.array([float(x) for x in header[k].split()]) if k in header else None
        cert = CoverCertificate(
            header.get("name", ""), d, C, float(header["lambda"]), float(header["delta"]),
            header["covered"] == "true", float(header.get("max_gauge", "nan")),
            float(header.get("threshold", "nan")), int(header.get("greedy_count", len(C))),
            np.zeros((0, d)), header.get("cover_body", "self"), vec("x_star"), vec("shift"))
    except (KeyError, ValueError) as exc:
        raise CoverError(f"malformed certificate: {exc}") from None
    if int(header.get("count", C.shape[0])) != C.shape[0]:
        raise CoverError("certificate count disagrees with its centre list")
    return cert
